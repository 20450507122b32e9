use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use tentacle_cli::{run, RunConfig};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TENTACLE_LOG", "warn")).init();
    let cfg = RunConfig::parse();
    let outcome = run(&cfg);
    if let Some(msg) = &outcome.message {
        eprintln!("tentacle: {msg}");
    }
    if cfg.output.is_none() && !outcome.body.is_empty() {
        let mut out = std::io::stdout().lock();
        if out.write_all(outcome.body.as_bytes()).and_then(|_| out.flush()).is_err() {
            return ExitCode::from(2);
        }
    }
    ExitCode::from(outcome.code as u8)
}
