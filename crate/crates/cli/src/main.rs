use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match hsu_cli::run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = hsu_cli::exit_code(&err);
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code as u8)
        }
    }
}
