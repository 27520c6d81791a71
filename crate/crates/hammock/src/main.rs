use std::process::ExitCode;

fn main() -> ExitCode {
    hammock::cli::run()
}
