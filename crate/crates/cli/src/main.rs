use std::process::ExitCode;

fn main() -> ExitCode {
    match anyplay_cli::app::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(anyplay_cli::experiment::ExperimentError::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
