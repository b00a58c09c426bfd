use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args = uvctl::Args::parse();
    match uvctl::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uvctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
