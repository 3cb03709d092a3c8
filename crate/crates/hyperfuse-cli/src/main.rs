//! `hyperfuse` binary: exit 0 on success, 1 on a domain error
//! (message on stderr), 2 on a usage error.

mod args;
mod commands;
mod nodes;
mod provenance;

use clap::Parser;

use crate::commands::CliError;

fn main() {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 on bad flags and 0 for --help/--version.
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
