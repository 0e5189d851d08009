use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::LevelFilter;

/// Level-set shape optimization runs driven by a configuration file.
#[derive(Parser, Debug)]
#[command(name = "perishape", version)]
struct Args {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Size of the worker pool; fix it for bitwise reproducible runs.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Output directory, overriding `[run] out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Continue an optimization from a checkpoint file.
    #[arg(long, value_name = "CHECKPOINT")]
    resume: Option<PathBuf>,
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("perishape: error: {message}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match std::env::var("PERISHAPE_LOG").as_deref() {
        Err(_) | Ok("info") => LevelFilter::Info,
        Ok("quiet") => LevelFilter::Error,
        Ok("debug") => LevelFilter::Debug,
        Ok(other) => return fail(format!("PERISHAPE_LOG must be quiet, info or debug, got `{other}`")),
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Some(n) = args.threads {
        if n == 0 {
            return fail("--threads must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(e);
        }
    }
    let mut cfg = match perishape::parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(format!("{}: {e}", args.config.display())),
    };
    if let Some(out) = args.out {
        cfg.out = out;
    }
    match perishape::run(&cfg, args.resume.as_deref()) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(e),
    }
}
