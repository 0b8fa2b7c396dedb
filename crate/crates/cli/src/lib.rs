//! Experiment runner for low-rank Parareal.
//!
//! `lorapar <run|validate> <experiment> [flags]` resolves an
//! [`spec::ExperimentSpec`], runs it and writes `convergence.csv`,
//! `spectra.csv`, `bounds.csv` and `manifest.json` into the output
//! directory.

pub mod output;
pub mod run;
pub mod spec;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use spec::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {field}: {msg}")]
    Config { field: String, msg: String },
    #[error(transparent)]
    Runtime(#[from] lorapar::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            // parameter errors raised by the library are configuration errors
            Self::Runtime(lorapar::Error::Parameter { .. }) => 2,
            Self::Runtime(_) | Self::Io(_) => 3,
        }
    }
}

/// Parses `args` (including the program name), executes the command and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (args, dry_run) = match cli.command {
        Command::Run(a) => (a, false),
        Command::Validate(a) => (a, true),
    };
    let result = args.resolve().and_then(|spec| {
        if dry_run {
            let manifest = run::dry_manifest(&spec);
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
            Ok(())
        } else {
            run::execute(&spec, args.threads)
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lorapar: {e}");
            e.exit_code()
        }
    }
}
