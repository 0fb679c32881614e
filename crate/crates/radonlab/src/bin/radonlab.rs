use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(radonlab::cli::main_with_env() as u8)
}
