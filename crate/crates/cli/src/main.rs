use std::process::ExitCode;

fn main() -> ExitCode {
    sovgate_cli::main_with(std::env::args_os())
}
