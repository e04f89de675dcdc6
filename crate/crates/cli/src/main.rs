use std::process::ExitCode;

fn main() -> ExitCode {
    mobility_cli::run(std::env::args_os())
}
