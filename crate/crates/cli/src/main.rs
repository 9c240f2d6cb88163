use std::process::ExitCode;

use clap::Parser;
use hmfg_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hmfg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
