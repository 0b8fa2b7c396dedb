//! Experiment configuration: command-line flags, defaults per experiment and
//! the resolved, serializable form echoed into `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Lyapunov,
    Cookie,
    Riccati,
    BoundsFigure,
    Adaptive,
}

impl Experiment {
    pub fn id(self) -> &'static str {
        match self {
            Self::Lyapunov => "lyapunov",
            Self::Cookie => "cookie",
            Self::Riccati => "riccati",
            Self::BoundsFigure => "bounds-figure",
            Self::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Q,
    R,
    N,
    H,
    Tau,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Q => "q",
            Self::R => "r",
            Self::N => "n",
            Self::H => "h",
            Self::Tau => "tau",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Constants of the bounds figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// Slice index at which the curves are evaluated; `k` runs over `0..=n`.
    pub n: usize,
}

/// Fully resolved experiment. Re-running from this value reproduces the
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// Problem dimension (`n` for Lyapunov, `m` otherwise).
    pub m: usize,
    /// Number of parameters of the cookie problem.
    pub p: usize,
    /// Source rank: columns of `C` (Lyapunov) or rows of `C` (Riccati).
    pub k: usize,
    pub t_final: f64,
    pub slices: usize,
    pub q: usize,
    pub r: usize,
    pub tau: Option<f64>,
    pub seed: u64,
    pub max_iter: usize,
    /// Splitting substeps per slice; calibrated when absent (cookie uses a
    /// fixed default).
    pub substeps: Option<usize>,
    pub sweep: Option<Sweep>,
    pub bounds: Option<BoundsSpec>,
    pub output: PathBuf,
}

#[derive(Debug, Parser)]
#[command(name = "lorapar", version, about = "Low-rank Parareal experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its CSV and JSON outputs.
    Run(Args),
    /// Resolve and check the configuration, print the manifest.
    Validate(Args),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    pub experiment: Experiment,
    /// Problem dimension.
    #[arg(long, alias = "m")]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Final time.
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_q: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_r: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_n: Vec<f64>,
    /// Step sizes; without values the sweep is `T/10, T/20, T/40`.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub sweep_h: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_tau: Vec<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Worker threads of the fine sweep.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = ".")]
    pub output: PathBuf,
    /// Take the configuration from an earlier manifest.json; `--output` and
    /// `--threads` still apply.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
}

fn config(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

struct Defaults {
    m: usize,
    p: usize,
    k: usize,
    t_final: f64,
    slices: usize,
    q: usize,
    r: usize,
    tau: Option<f64>,
}

fn defaults(e: Experiment) -> Defaults {
    match e {
        Experiment::Lyapunov | Experiment::BoundsFigure => Defaults {
            m: 100,
            p: 1,
            k: 100,
            t_final: 2.0,
            slices: 20,
            q: 4,
            r: 16,
            tau: None,
        },
        Experiment::Adaptive => Defaults {
            tau: Some(1e-9),
            ..defaults(Experiment::Lyapunov)
        },
        Experiment::Cookie => Defaults {
            m: 24,
            p: 101,
            k: 1,
            t_final: 0.1,
            slices: 20,
            q: 2,
            r: 8,
            tau: None,
        },
        Experiment::Riccati => Defaults {
            m: 40,
            p: 1,
            k: 9,
            t_final: 0.1,
            slices: 20,
            q: 6,
            r: 18,
            tau: None,
        },
    }
}

/// Default step-size sweep `{T/10, T/20, T/40}`.
pub fn default_h_sweep(t_final: f64) -> Vec<f64> {
    vec![t_final / 10.0, t_final / 20.0, t_final / 40.0]
}

pub fn load_manifest_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config("from_manifest", format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| config("from_manifest", format!("{}: {e}", path.display())))?;
    let spec = value
        .get("spec")
        .ok_or_else(|| config("from_manifest", "manifest has no 'spec' entry"))?;
    serde_json::from_value(spec.clone()).map_err(|e| config("from_manifest", e.to_string()))
}

impl Args {
    fn sweep(&self, t_final: f64) -> Result<Option<Sweep>, CliError> {
        let sweep_h = match &self.sweep_h {
            Some(v) if v.is_empty() => default_h_sweep(t_final),
            Some(v) => v.clone(),
            None => Vec::new(),
        };
        let given: Vec<(SweepParam, &Vec<f64>)> = [
            (SweepParam::Q, &self.sweep_q),
            (SweepParam::R, &self.sweep_r),
            (SweepParam::N, &self.sweep_n),
            (SweepParam::H, &sweep_h),
            (SweepParam::Tau, &self.sweep_tau),
        ]
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .collect();
        match given.as_slice() {
            [] => Ok(None),
            [(param, values)] => Ok(Some(Sweep {
                param: *param,
                values: values.to_vec(),
            })),
            _ => Err(config("sweep", "at most one sweep per run")),
        }
    }

    /// Applies defaults and checks the result.
    pub fn resolve(&self) -> Result<ExperimentSpec, CliError> {
        let spec = match &self.from_manifest {
            Some(path) => {
                let mut s = load_manifest_spec(path)?;
                if s.experiment != self.experiment {
                    return Err(config(
                        "experiment",
                        format!("manifest is for '{}'", s.experiment.id()),
                    ));
                }
                s.output = self.output.clone();
                s
            }
            None => self.resolve_flags()?,
        };
        validate(&spec)?;
        Ok(spec)
    }

    fn resolve_flags(&self) -> Result<ExperimentSpec, CliError> {
        let d = defaults(self.experiment);
        let slices = self.slices.unwrap_or(d.slices);
        let t_final = self.t_final.unwrap_or(d.t_final);
        let bounds = match self.experiment {
            Experiment::BoundsFigure => Some(BoundsSpec {
                alpha: self.alpha.unwrap_or(0.2),
                beta: self.beta.unwrap_or(0.7),
                gamma: self.gamma.unwrap_or(1.0),
                kappa: self.kappa.unwrap_or(1e-15),
                n: self.n.unwrap_or(30),
            }),
            _ => {
                for (name, v) in [
                    ("alpha", self.alpha),
                    ("beta", self.beta),
                    ("gamma", self.gamma),
                    ("kappa", self.kappa),
                ] {
                    if v.is_some() {
                        return Err(config(name, "only used by bounds-figure"));
                    }
                }
                None
            }
        };
        Ok(ExperimentSpec {
            experiment: self.experiment,
            m: self.n.unwrap_or(d.m),
            p: self.p.unwrap_or(d.p),
            k: self.k.unwrap_or(d.k),
            t_final,
            slices,
            q: self.q.unwrap_or(d.q),
            r: self.r.unwrap_or(d.r),
            tau: self.tau.or(d.tau),
            seed: self.seed.unwrap_or(7),
            max_iter: self.max_iter.unwrap_or(slices),
            substeps: self.substeps,
            sweep: self.sweep(t_final)?,
            bounds,
            output: self.output.clone(),
        })
    }
}

fn check_rank(name: &str, q: usize, r: usize, m: usize) -> Result<(), CliError> {
    if q >= r {
        return Err(config(name, format!("q < r required (q = {q}, r = {r})")));
    }
    if r + 2 * q > m {
        return Err(config(name, format!("r + 2q = {} exceeds dimension {m}", r + 2 * q)));
    }
    Ok(())
}

fn whole(name: &str, v: f64) -> Result<usize, CliError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(config(name, format!("expected a positive integer, got {v}")))
    }
}

/// Consistency checks. Error messages name the offending field.
pub fn validate(spec: &ExperimentSpec) -> Result<(), CliError> {
    if !spec.output.is_dir() {
        return Err(config(
            "output",
            format!("directory '{}' does not exist", spec.output.display()),
        ));
    }
    if let Some(b) = &spec.bounds {
        if !(b.alpha >= 0.0 && b.beta >= 0.0 && b.alpha + b.beta < 1.0) {
            return Err(config("alpha/beta", "need alpha, beta >= 0 and alpha + beta < 1"));
        }
        if !(b.gamma >= 0.0 && b.kappa >= 0.0) {
            return Err(config("gamma/kappa", "must be non-negative"));
        }
        if b.n < 1 {
            return Err(config("n", "must be at least 1"));
        }
        return Ok(());
    }
    if spec.m < 4 {
        return Err(config("n", "dimension must be at least 4"));
    }
    if spec.k < 1 {
        return Err(config("k", "must be at least 1"));
    }
    if spec.experiment == Experiment::Cookie && spec.p < 1 {
        return Err(config("p", "must be at least 1"));
    }
    if !(spec.t_final > 0.0 && spec.t_final.is_finite()) {
        return Err(config("T", "must be positive"));
    }
    if spec.slices < 1 {
        return Err(config("slices", "must be at least 1"));
    }
    if spec.q < 1 {
        return Err(config("q", "must be at least 1"));
    }
    if spec.substeps == Some(0) {
        return Err(config("substeps", "must be at least 1"));
    }
    let ncols = if spec.experiment == Experiment::Cookie { spec.p } else { spec.m };
    let dim = spec.m.min(ncols);
    let adaptive = spec.experiment == Experiment::Adaptive;
    if adaptive {
        match spec.tau {
            Some(t) if t > 0.0 => {}
            _ => return Err(config("tau", "adaptive mode needs tau > 0")),
        }
        if spec.q > dim {
            return Err(config("q", "exceeds dimension"));
        }
    } else {
        if spec.tau.is_some() {
            return Err(config("tau", "only used by the adaptive experiment"));
        }
        check_rank("q", spec.q, spec.r, dim)?;
    }
    if let Some(sw) = &spec.sweep {
        if sw.values.is_empty() {
            return Err(config("sweep", "sweep list must be non-empty"));
        }
        for &v in &sw.values {
            match sw.param {
                SweepParam::Q => check_rank("sweep_q", whole("sweep_q", v)?, spec.r, dim)?,
                SweepParam::R => check_rank("sweep_r", spec.q, whole("sweep_r", v)?, dim)?,
                SweepParam::N => {
                    let n = whole("sweep_n", v)?;
                    let d = if spec.experiment == Experiment::Cookie { n.min(spec.p) } else { n };
                    if !adaptive {
                        check_rank("sweep_n", spec.q, spec.r, d)?;
                    }
                }
                SweepParam::H => {
                    if !(v > 0.0 && v <= spec.t_final) {
                        return Err(config("sweep_h", format!("step {v} outside (0, T]")));
                    }
                    let n = spec.t_final / v;
                    if (n - n.round()).abs() > 1e-9 * n {
                        return Err(config("sweep_h", format!("T / {v} is not an integer")));
                    }
                }
                SweepParam::Tau => {
                    if !adaptive {
                        return Err(config("sweep_tau", "only used by the adaptive experiment"));
                    }
                    if !(v > 0.0) {
                        return Err(config("sweep_tau", "must be positive"));
                    }
                }
            }
        }
        if adaptive && matches!(sw.param, SweepParam::R) {
            return Err(config("sweep_r", "adaptive runs choose the fine rank from tau"));
        }
    }
    Ok(())
}
