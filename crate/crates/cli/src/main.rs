use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use modalsurv_cli::{run, Command, RunConfig};

/// Multimodal survival experiments driven by one config file.
#[derive(Parser)]
#[command(name = "modalsurv", version)]
struct Args {
    command: Command,
    #[arg(short, long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match RunConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    env_logger::Builder::new()
        .filter_level(cfg.log_level)
        .format_target(false)
        .init();
    match run(args.command, &cfg) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
