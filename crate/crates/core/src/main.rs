use clap::Parser;
use std::process::ExitCode;

use randmap::cli::{exit_code_for, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if outcome.pass {
                ExitCode::from(0)
            } else {
                eprintln!("verification found violations");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
