use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(critpoint_harness::cli::run(std::env::args_os()) as u8)
}
