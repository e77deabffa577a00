use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = sirv_cli::cli::Cli::parse();
    match sirv_cli::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
