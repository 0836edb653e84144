use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use mandel_cli::{execute, exit_for, Cli};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("MANDEL_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let code = match execute(&cli, &mut out) {
        Ok(exit) => exit,
        Err(err) => {
            let _ = out.flush();
            eprintln!("error: {err:#}");
            exit_for(&err)
        }
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
