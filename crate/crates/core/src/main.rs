use std::process::ExitCode;

use clap::Parser;
use hmiway::cli::{run, Cli};
use hmiway::run::mark_failed;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let out = &cli.command.common().out;
    let fresh = !out.exists() || out.read_dir().is_ok_and(|mut d| d.next().is_none());
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if fresh {
                mark_failed(out, &e.to_string());
            }
            ExitCode::FAILURE
        }
    }
}
