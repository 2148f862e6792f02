use std::process::ExitCode;

use clap::Parser;
use riskstop::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("riskstop: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
