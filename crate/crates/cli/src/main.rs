//! `gspace`: train, verify, compare and inspect path-space models.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
//! error, 3 a verification check failed.

mod config;
mod run;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use toml::Value;

#[derive(Parser)]
#[command(
    name = "gspace",
    version,
    about = "Train ReLU MLPs in the space of basis-path values"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set data.blobs.spread=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Layer widths, e.g. `49,8,8,10`.
    #[arg(long)]
    arch: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write metrics, a summary and a checkpoint.
    Train(Common),
    /// Check the rank theorem, the skeleton basis and the G-SGD identities.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Skip the full rank check above this many paths.
        #[arg(long)]
        max_paths: Option<usize>,
        /// Random draws per sampled check.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train SGD and G-SGD from balanced and rescaled starts.
    Compare(Common),
    /// Dump the path enumeration and structure-matrix triplets.
    Paths {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_paths: Option<usize>,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
    Verification,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
            Self::Verification => 3,
        }
    }
}

fn runtime(e: gspace_core::Error) -> Failure {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(&e);
    while let Some(s) = source {
        msg.push_str(&format!(": {s}"));
        source = s.source();
    }
    Failure::Runtime(msg)
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut extra: Vec<(&str, Value)> = Vec::new();
    if let Some(a) = &common.arch {
        extra.push(("arch", Value::String(a.clone())));
    }
    if let Some(o) = &common.out {
        extra.push((
            "output.dir",
            Value::String(o.to_string_lossy().into_owned()),
        ));
    }
    if let Some(s) = common.seed {
        let s =
            i64::try_from(s).map_err(|_| Failure::Validation(format!("seed {s} is too large")))?;
        extra.push(("seed", Value::Integer(s)));
    }
    RunConfig::load(common.config.as_deref(), &common.set, &extra)
        .map_err(|e| Failure::Validation(e.to_string()))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train(common) => run::cmd_train(&load(&common)?).map_err(runtime),
        Command::Compare(common) => run::cmd_compare(&load(&common)?).map_err(runtime),
        Command::Verify {
            common,
            max_paths,
            samples,
        } => {
            let cfg = load(&common)?;
            let passed = verify::cmd_verify(
                &cfg.arch,
                max_paths.unwrap_or(cfg.verify.max_paths),
                samples.unwrap_or(cfg.verify.samples),
                cfg.train.seed,
            )
            .map_err(runtime)?;
            if passed {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
        Command::Paths { common, max_paths } => {
            let cfg = load(&common)?;
            verify::cmd_paths(
                &cfg.arch,
                max_paths.unwrap_or(cfg.verify.max_paths),
                common.out.as_deref(),
            )
            .map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprint!("error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::Verification => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
