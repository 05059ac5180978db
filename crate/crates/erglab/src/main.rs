use clap::Parser;
use erglab::cli::{execute, Cli, CliError};

fn main() {
    // clap already exits with status 2 on malformed flags
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => std::process::exit(0),
        Ok(false) => std::process::exit(1),
        Err(e @ (CliError::Usage(_) | CliError::Config(_))) => {
            eprintln!("erglab: {e}");
            std::process::exit(2);
        }
        Err(e) => {
            eprintln!("erglab: {e}");
            std::process::exit(2);
        }
    }
}
