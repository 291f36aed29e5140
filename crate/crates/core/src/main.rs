use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(casim::cli::run(std::env::args_os()))
}
