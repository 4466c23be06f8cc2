use hsu_core::features::{build_mm_tensor, build_patch_tensor, matricize, SliceKind};
use hsu_core::metrics::{match_endmembers, rmse, sad};
use hsu_core::solver::{multi_start, project_to_simplex, solve_cpd};
use hsu_core::tensor::{khatri_rao, reconstruct};
use hsu_core::{AscMode, Dims, HsiCube, Matrix, MorphSpec, PatchSpec, SolverConfig, Tensor3};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
}

fn random_cube(rows: usize, cols: usize, bands: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HsiCube::new(rows, cols, bands, (0..rows * cols * bands).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Simplex projection by bisection on the threshold.
fn simplex_by_bisection(v: &[f64]) -> Vec<f64> {
    let total = |theta: f64| v.iter().map(|x| (x - theta).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0, v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v.iter().map(|x| (x - 0.5 * (lo + hi)).max(0.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn simplex_projection_matches_bisection(v in prop::collection::vec(-3.0f64..3.0, 1..9)) {
        let mut fast = v.clone();
        project_to_simplex(&mut fast);
        let slow = simplex_by_bisection(&v);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9, "{fast:?} vs {slow:?}");
        }
        prop_assert!((fast.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(fast.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn khatri_rao_columns_are_kronecker_products(p in 1usize..5, q in 1usize..5, r in 1usize..4, seed in any::<u64>()) {
        let (x, y) = (random(p, r, seed), random(q, r, seed ^ 1));
        let kr = khatri_rao(&x, &y).unwrap();
        for c in 0..r {
            for a in 0..p {
                for b in 0..q {
                    prop_assert_eq!(kr[[a * q + b, c]], x[[a, c]] * y[[b, c]]);
                }
            }
        }
    }

    #[test]
    fn sad_is_symmetric_scale_free_and_bounded(n in 2usize..30, s in 0.01f64..100.0, seed in any::<u64>()) {
        let m = random(n, 2, seed);
        let (x, y) = (m.column(0), m.column(1));
        let ab = sad(x, y).unwrap();
        prop_assert!((ab - sad(y, x).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=180.0).contains(&ab));
        let scaled = x.mapv(|v| v * s);
        prop_assert!((sad(scaled.view(), y).unwrap() - ab).abs() < 1e-9);
    }

    #[test]
    fn matching_recovers_column_permutations(seed in any::<u64>(), rank in 1usize..6) {
        let reference = random(12, rank, seed);
        let mut perm: Vec<usize> = (0..rank).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..rank).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let est = reference.select(ndarray::Axis(1), &perm).mapv(|v| 3.0 * v);
        let m = match_endmembers(&est, &reference).unwrap();
        prop_assert_eq!(m.one_to_one.unwrap(), perm);
    }

    #[test]
    fn patch_center_slice_is_the_cube(rows in 3usize..8, cols in 3usize..8, half in 0usize..2, seed in any::<u64>()) {
        let cube = random_cube(rows, cols, 2, seed);
        let (t, legend) = build_patch_tensor(&cube, &PatchSpec::new(2 * half + 1)).unwrap();
        prop_assert_eq!(t.dims().slices, (2 * half + 1).pow(2));
        prop_assert_eq!(t.frontal_slice(0).unwrap(), matricize(&cube));
        prop_assert_eq!(legend.entries[0].kind, SliceKind::Original);
        prop_assert!(legend.entries[1..].iter().all(|e| e.kind == SliceKind::Shift));
    }

    #[test]
    fn mm_profile_is_ordered_around_the_original(seed in any::<u64>(), s in 1usize..4) {
        let cube = random_cube(12, 10, 2, seed);
        let radii: Vec<usize> = (1..=s).collect();
        let (t, legend) = build_mm_tensor(&cube, &MorphSpec::new(radii)).unwrap();
        prop_assert_eq!(t.dims().slices, 2 * s + 1);
        prop_assert_eq!(legend.entries[s].kind, SliceKind::Original);
        prop_assert_eq!(t.frontal_slice(s).unwrap(), matricize(&cube));
        // closings above, openings below, monotone in the radius
        for k in 0..2 * s {
            let (hi, lo) = (t.frontal_slice(k).unwrap(), t.frontal_slice(k + 1).unwrap());
            prop_assert!(hi.iter().zip(lo.iter()).all(|(h, l)| h >= l), "slice {} not above {}", k + 1, k + 2);
        }
    }

    #[test]
    fn solver_outputs_are_nonnegative_and_reported_error_is_exact(
        i in 3usize..10, j in 3usize..8, k in 1usize..4, rank in 1usize..4, seed in any::<u64>(), mode in 0usize..3,
    ) {
        let t = reconstruct(&random(i, rank, seed), &random(j, rank, seed ^ 2), &random(k, rank, seed ^ 3)).unwrap();
        let cfg = SolverConfig {
            rank,
            asc_mode: [AscMode::Embedded, AscMode::Naive, AscMode::None][mode],
            outer_iters: 15,
            seed,
            force_single_thread: true,
            ..SolverConfig::default()
        };
        let res = solve_cpd(&t, &cfg).unwrap();
        let m = &res.model;
        prop_assert!(m.a.iter().chain(m.b.iter()).chain(m.psi.iter()).all(|&v| v >= 0.0));
        prop_assert_eq!(m.b.nrows(), j);
        let direct = rmse(&t, &m.reconstruct().unwrap()).unwrap();
        prop_assert!((direct - res.trace.final_rmse()).abs() <= 1e-12);
        // B columns carry unit norm after absorption
        for col in m.b.columns() {
            let n = col.dot(&col).sqrt();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn single_thread_runs_are_bitwise_repeatable() {
    let t = reconstruct(&random(300, 3, 1), &random(8, 3, 2), &random(4, 3, 3)).unwrap();
    let cfg = SolverConfig { outer_iters: 20, force_single_thread: true, ..SolverConfig::default() };
    let (x, y) = (solve_cpd(&t, &cfg).unwrap(), solve_cpd(&t, &cfg).unwrap());
    assert_eq!(x.model, y.model);
    // parallel kernels reduce in fixed chunks, so they agree too
    let par = solve_cpd(&t, &SolverConfig { force_single_thread: false, ..cfg.clone() }).unwrap();
    assert_eq!(par.model, x.model);
}

#[test]
fn multi_start_keeps_the_lowest_error() {
    let t = Tensor3::new(Dims::new(20, 6, 3), random(20, 18, 9).iter().copied().collect()).unwrap();
    let cfg = SolverConfig { rank: 2, outer_iters: 10, seed: 40, force_single_thread: true, ..SolverConfig::default() };
    let ms = multi_start(&t, &cfg, 4).unwrap();
    assert_eq!(ms.runs.iter().map(|r| r.0).collect::<Vec<_>>(), vec![40, 41, 42, 43]);
    let best = ms.rmses().into_iter().fold(f64::INFINITY, f64::min);
    assert_eq!(ms.best.trace.final_rmse(), best);
    for &(seed, value) in &ms.runs {
        let single = solve_cpd(&t, &SolverConfig { seed, ..cfg.clone() }).unwrap();
        assert_eq!(single.trace.final_rmse(), value);
    }
}
