//! Experiment execution.

use std::fs;
use std::time::Instant;

use serde::Serialize;

use lorapar::bounds::{self, BoundKind, BoundParams};
use lorapar::integrators::{self, FlowOptions};
use lorapar::parareal::{self, IterationTiming, PararealConfig};
use lorapar::problems::{self, SpectrumSpec, VectorField};
use lorapar::{Error, LowRankMatrix, Mat};

use crate::output::{self, BoundRow, ConvergenceRow};
use crate::spec::{Experiment, ExperimentSpec, SweepParam};
use crate::CliError;

/// Time at which the initial value is taken from the exact flow.
pub const WARM_START_TIME: f64 = 0.01;
/// Relative change below which the substep count counts as converged.
pub const CALIBRATION_TOL: f64 = 1e-10;
/// The calibration target is relaxed to this fraction of the relative
/// truncation error of `X0` at the fine rank, when that is larger.
pub const CALIBRATION_RANK_FRACTION: f64 = 1e-2;
/// Cookie substeps per slice. Self-convergence of the splitting stalls
/// near 1e-8 on this stiff field, so calibration would only hit the cap.
pub const COOKIE_SUBSTEPS: usize = 256;
pub const MAX_SUBSTEPS: usize = 1024;
/// Decay exponents of the Lyapunov source and initial-value spectra,
/// `sigma_i = 10^{-c (i-1)}`.
pub const SOURCE_DECAY: f64 = 5.0;
pub const INITIAL_DECAY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Seeds {
    pub source: u64,
    pub initial: u64,
    pub perturbation: u64,
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Self {
            source: seed,
            initial: seed.wrapping_add(1),
            perturbation: seed.wrapping_add(2),
        }
    }
}

/// Parameters of one point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunPoint {
    pub sweep_value: Option<f64>,
    pub m: usize,
    pub slices: usize,
    pub h: f64,
    pub q: usize,
    pub r: Option<usize>,
    pub tau: Option<f64>,
}

pub fn run_points(spec: &ExperimentSpec) -> Vec<RunPoint> {
    let base = RunPoint {
        sweep_value: None,
        m: spec.m,
        slices: spec.slices,
        h: spec.t_final / spec.slices as f64,
        q: spec.q,
        r: (spec.experiment != Experiment::Adaptive).then_some(spec.r),
        tau: spec.tau,
    };
    let Some(sweep) = &spec.sweep else {
        return vec![base];
    };
    sweep
        .values
        .iter()
        .map(|&v| {
            let mut p = RunPoint {
                sweep_value: Some(v),
                ..base
            };
            match sweep.param {
                SweepParam::Q => p.q = v as usize,
                SweepParam::R => p.r = Some(v as usize),
                SweepParam::N => p.m = v as usize,
                SweepParam::H => {
                    p.slices = (spec.t_final / v).round() as usize;
                    p.h = spec.t_final / p.slices as f64;
                }
                SweepParam::Tau => p.tau = Some(v),
            }
            p
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub ell: f64,
    pub eps_q: f64,
    pub eps_r: f64,
    pub c_q: f64,
    pub c_rq: f64,
    pub h: f64,
}

impl From<BoundParams> for BoundsReport {
    fn from(p: BoundParams) -> Self {
        Self {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            kappa: p.kappa,
            ell: p.ell,
            eps_q: p.eps_q,
            eps_r: p.eps_r,
            c_q: p.c_q,
            c_rq: p.c_rq,
            h: p.h,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub point: RunPoint,
    pub substeps: usize,
    /// `flag`, `calibrated` or `calibration-cap`.
    pub substeps_source: &'static str,
    pub calibration_tol: f64,
    pub reference: bool,
    pub timings: Vec<Timing>,
    pub total_secs: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Timing {
    pub coarse_secs: f64,
    pub fine_secs: f64,
}

impl From<IterationTiming> for Timing {
    fn from(t: IterationTiming) -> Self {
        Self {
            coarse_secs: t.coarse_secs,
            fine_secs: t.fine_secs,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub seeds: Seeds,
    pub threads: Option<usize>,
    pub warm_start_time: f64,
    pub runs: Vec<RunReport>,
    pub bounds: Option<BoundsReport>,
    pub bounds_note: Option<String>,
    pub files: Vec<&'static str>,
}

pub fn dry_manifest(spec: &ExperimentSpec) -> Manifest {
    Manifest {
        spec: spec.clone(),
        seeds: Seeds::from_base(spec.seed),
        threads: None,
        warm_start_time: WARM_START_TIME,
        runs: Vec::new(),
        bounds: None,
        bounds_note: None,
        files: Vec::new(),
    }
}

/// Vector field and exact initial value `X0` of an experiment.
pub fn build_problem(spec: &ExperimentSpec, m: usize) -> lorapar::Result<(VectorField, Mat)> {
    let seeds = Seeds::from_base(spec.seed);
    let opts = FlowOptions::default();
    match spec.experiment {
        Experiment::Lyapunov | Experiment::Adaptive | Experiment::BoundsFigure => {
            let f = problems::build_lyapunov_heat(
                m,
                &SpectrumSpec::geometric(SOURCE_DECAY, spec.k.min(m), seeds.source),
            )?;
            let x_init = problems::random_with_spectrum(
                &SpectrumSpec::geometric(INITIAL_DECAY, m, seeds.initial),
                m,
            );
            let x0 = problems::warm_start(&f, &x_init, WARM_START_TIME, &opts)?;
            Ok((f, x0))
        }
        Experiment::Cookie => {
            let f = problems::build_cookie_synthetic(m, spec.p)?;
            let x0 = problems::warm_start(&f, &Mat::zeros(m, spec.p), WARM_START_TIME, &opts)?;
            Ok((f, x0))
        }
        Experiment::Riccati => {
            let f = problems::build_riccati_problem(m, spec.k)?;
            let x0 = problems::warm_start(&f, &Mat::zeros(m, m), WARM_START_TIME, &opts)?;
            Ok((f, x0))
        }
    }
}

/// Output of one sweep point.
pub struct PointResult {
    pub report: RunReport,
    pub rows: Vec<ConvergenceRow>,
    pub reference: Option<Vec<Mat>>,
    pub output: parareal::PararealOutput,
}

pub fn run_point(
    spec: &ExperimentSpec,
    point: &RunPoint,
    field: &VectorField,
    x0: &Mat,
) -> Result<PointResult, CliError> {
    let start = Instant::now();
    let full = LowRankMatrix::from_dense(x0)?;
    let (y0, fine_start) = match (point.r, point.tau) {
        (Some(r), _) => (full.truncate(r + 2 * point.q)?, full.truncate(r)?),
        (None, Some(tau)) => {
            let y0 = full.truncate_tol(tau)?;
            if y0.rank() < point.q {
                return Err(CliError::Config {
                    field: "tau".into(),
                    msg: format!("rank of T_tau(X0) is {} < q = {}", y0.rank(), point.q),
                });
            }
            (y0.clone(), y0)
        }
        (None, None) => unreachable!("validated"),
    };
    let base = FlowOptions::default();
    let rank_error = full.singular_values().tail_norm(fine_start.rank()) / full.norm();
    let calibration_tol = CALIBRATION_TOL.max(CALIBRATION_RANK_FRACTION * rank_error);
    let (substeps, substeps_source) = match spec.substeps {
        Some(s) => (s, "flag"),
        None if spec.experiment == Experiment::Cookie => (COOKIE_SUBSTEPS, "default"),
        None => match integrators::calibrate_substeps(
            field,
            &fine_start,
            point.h,
            fine_start.rank(),
            &base,
            calibration_tol,
            MAX_SUBSTEPS,
        ) {
            Ok(s) => (s, "calibrated"),
            Err(Error::Accuracy { .. }) => (MAX_SUBSTEPS, "calibration-cap"),
            Err(e) => return Err(e.into()),
        },
    };
    let opts = base.with_substeps(substeps);
    let mut cfg = match (point.r, point.tau) {
        (Some(r), _) => PararealConfig::fixed(point.slices, point.h, point.q, r),
        (None, Some(tau)) => PararealConfig::adaptive(point.slices, point.h, point.q, tau),
        (None, None) => unreachable!("validated"),
    };
    cfg.max_iter = spec.max_iter;
    cfg.seed = Seeds::from_base(spec.seed).perturbation;
    cfg.fine_opts = opts;
    cfg.coarse_opts = opts;

    let (rows, cols) = field.state_shape();
    let reference = if rows.max(cols) <= cfg.reference_ceiling {
        Some(integrators::reference_trajectory(
            field,
            x0,
            point.h,
            point.slices,
            &FlowOptions::default(),
        )?)
    } else {
        None
    };
    let out = parareal::run_lowrank_parareal(field, &y0, &cfg, reference.as_deref())?;

    let mut table = Vec::new();
    for (k, ranks) in out.record.ranks.iter().enumerate() {
        for (n, &rank) in ranks.iter().enumerate() {
            table.push(ConvergenceRow {
                experiment_id: spec.experiment.id().to_string(),
                sweep_value: point.sweep_value,
                k,
                n,
                error: out.record.errors.as_ref().map(|e| e[k][n]),
                rank,
            });
        }
    }
    let report = RunReport {
        point: *point,
        substeps,
        substeps_source,
        calibration_tol,
        reference: reference.is_some(),
        timings: out.record.timings.iter().copied().map(Timing::from).collect(),
        total_secs: start.elapsed().as_secs_f64(),
    };
    Ok(PointResult {
        report,
        rows: table,
        reference,
        output: out,
    })
}

fn bound_rows(p: &BoundParams, n: usize, k_max: usize) -> lorapar::Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for kind in BoundKind::ALL {
        for k in 0..=k_max {
            rows.push(BoundRow {
                kind: kind.name(),
                n,
                k,
                value: bounds::bound(kind, p, n, k)?,
            });
        }
    }
    Ok(rows)
}

fn bounds_figure(spec: &ExperimentSpec, threads: Option<usize>) -> Result<(), CliError> {
    let b = spec.bounds.expect("validated");
    let p = BoundParams::from_constants(b.alpha, b.beta, b.gamma, b.kappa);
    let rows = bound_rows(&p, b.n, b.n)?;
    fs::write(spec.output.join("bounds.csv"), output::bounds_csv(&rows))?;
    let mut manifest = dry_manifest(spec);
    manifest.threads = threads;
    manifest.bounds = Some(p.into());
    manifest.files = vec!["bounds.csv", "manifest.json"];
    write_manifest(spec, &manifest)
}

fn write_manifest(spec: &ExperimentSpec, manifest: &Manifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(spec.output.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn singular_values(x: &Mat) -> lorapar::Result<Vec<f64>> {
    lorapar::dense::singular_values(x)
}

fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<(), CliError> {
    if spec.experiment == Experiment::BoundsFigure {
        return bounds_figure(spec, threads);
    }
    let points = run_points(spec);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut spectra = Vec::new();
    let mut bound_table = Vec::new();
    let mut bounds_report = None;
    let mut bounds_note = None;
    let mut problem: Option<(usize, VectorField, Mat)> = None;

    for (i, point) in points.iter().enumerate() {
        if problem.as_ref().map(|p| p.0) != Some(point.m) {
            let (f, x0) = build_problem(spec, point.m)?;
            problem = Some((point.m, f, x0));
        }
        let (_, field, x0) = problem.as_ref().expect("built above");
        let res = run_point(spec, point, field, x0)?;
        if i == 0 {
            // snapshots at t = 0, T/2, T
            let t_final = point.h * point.slices as f64;
            let mid = match &res.reference {
                Some(traj) if point.slices % 2 == 0 => traj[point.slices / 2].clone(),
                _ => integrators::reference_flow(field, x0, t_final / 2.0, &FlowOptions::default())?,
            };
            let end = match &res.reference {
                Some(traj) => traj[point.slices].clone(),
                None => res.output.final_iterates()[point.slices].to_dense(),
            };
            spectra.push((0.0, singular_values(x0)?));
            spectra.push((t_final / 2.0, singular_values(&mid)?));
            spectra.push((t_final, singular_values(&end)?));

            match (&res.reference, point.r) {
                (Some(traj), Some(r)) if field.is_affine() => {
                    let gamma = res
                        .output
                        .record
                        .max_error_per_iter()
                        .map(|e| e[0])
                        .unwrap_or(0.0);
                    match bounds::estimate_params(field, traj, point.q, r, point.h, gamma) {
                        Ok(p) if p.is_convergent() => {
                            bound_table = bound_rows(&p, point.slices, spec.max_iter)?;
                            bounds_report = Some(p.into());
                        }
                        Ok(p) => {
                            bounds_note = Some(format!(
                                "alpha + beta = {} >= 1, bounds do not apply",
                                p.alpha + p.beta
                            ));
                            bounds_report = Some(p.into());
                        }
                        Err(e) => bounds_note = Some(format!("parameters not estimable: {e}")),
                    }
                }
                (None, _) => bounds_note = Some("no reference solution".into()),
                (_, None) => bounds_note = Some("adaptive run has no fixed fine rank".into()),
                _ => bounds_note = Some("vector field is not affine".into()),
            }
        }
        rows.extend(res.rows);
        reports.push(res.report);
    }

    fs::write(spec.output.join("convergence.csv"), output::convergence_csv(&rows))?;
    fs::write(spec.output.join("spectra.csv"), output::spectra_csv(&spectra))?;
    let mut files = vec!["convergence.csv", "spectra.csv"];
    if !bound_table.is_empty() {
        fs::write(spec.output.join("bounds.csv"), output::bounds_csv(&bound_table))?;
        files.push("bounds.csv");
    }
    files.push("manifest.json");
    let manifest = Manifest {
        spec: spec.clone(),
        seeds: Seeds::from_base(spec.seed),
        threads,
        warm_start_time: WARM_START_TIME,
        runs: reports,
        bounds: bounds_report,
        bounds_note,
        files,
    };
    write_manifest(spec, &manifest)
}

/// Runs `spec`, on a dedicated pool of `threads` workers when given.
pub fn execute(spec: &ExperimentSpec, threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        Some(0) => Err(CliError::Config {
            field: "threads".into(),
            msg: "must be at least 1".into(),
        }),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config {
                    field: "threads".into(),
                    msg: e.to_string(),
                })?;
            pool.install(|| run_experiment(spec, threads))
        }
        None => run_experiment(spec, None),
    }
}
