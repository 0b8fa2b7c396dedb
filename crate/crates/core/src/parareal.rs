//! Low-rank Parareal with DLRA propagators.
//!
//! With coarse rank `q` and fine rank `r`, the iteration is
//!
//! ```text
//! Y_0^k       = Y_0
//! Y_{n+1}^0   = psi_q(T_q(Y_n^0)) + E_n
//! Y_{n+1}^k+1 = psi_r(T_r(Y_n^k)) + psi_q(T_q(Y_n^k+1)) - psi_q(T_q(Y_n^k))
//! ```
//!
//! where `psi` is the DLRA flow over one slice and `T` the truncated SVD.
//! The perturbations `E_n` lift the initial sweep to rank `r + 2q`, so every
//! iterate lives on a manifold of rank at most `r + 2q`. In the adaptive
//! variant `T_r` is replaced by a tolerance truncation and the fine flow
//! runs at the rank that truncation selects.

use std::time::Instant;

use rayon::prelude::*;

use crate::dense::Mat;
use crate::error::{dims, param, Result};
use crate::integrators::{self, FlowOptions};
use crate::lowrank::LowRankMatrix;
use crate::problems::VectorField;
use crate::rng;

/// Fine propagator rank policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FineRank {
    Fixed(usize),
    /// Rank chosen per slice by truncation at this tolerance.
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PararealConfig {
    pub slices: usize,
    /// Slice length; the horizon is `slices * h`.
    pub h: f64,
    pub coarse_rank: usize,
    pub fine: FineRank,
    pub max_iter: usize,
    /// Relative size of the initial-sweep perturbations.
    pub perturbation_scale: f64,
    pub seed: u64,
    pub coarse_opts: FlowOptions,
    pub fine_opts: FlowOptions,
    /// Largest dimension for which a missing reference trajectory is
    /// computed on demand.
    pub reference_ceiling: usize,
}

pub const DEFAULT_PERTURBATION_SCALE: f64 = 1e-10;
pub const DEFAULT_REFERENCE_CEILING: usize = 256;

impl PararealConfig {
    /// Fixed-rank configuration with `max_iter = slices`.
    pub fn fixed(slices: usize, h: f64, q: usize, r: usize) -> Self {
        Self {
            slices,
            h,
            coarse_rank: q,
            fine: FineRank::Fixed(r),
            max_iter: slices,
            perturbation_scale: DEFAULT_PERTURBATION_SCALE,
            seed: 0,
            coarse_opts: FlowOptions::default(),
            fine_opts: FlowOptions::default(),
            reference_ceiling: DEFAULT_REFERENCE_CEILING,
        }
    }

    pub fn adaptive(slices: usize, h: f64, q: usize, tau: f64) -> Self {
        Self {
            fine: FineRank::Tolerance(tau),
            ..Self::fixed(slices, h, q, q + 1)
        }
    }

    pub fn horizon(&self) -> f64 {
        self.slices as f64 * self.h
    }

    /// Checks the configuration against a state of shape `rows x cols`.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let m = rows.min(cols);
        if self.slices < 1 {
            return Err(param("slices", "N must be at least 1"));
        }
        if !(self.h > 0.0) {
            return Err(param("h", "slice length must be positive"));
        }
        if self.coarse_rank < 1 {
            return Err(param("q", "coarse rank must be at least 1"));
        }
        match self.fine {
            FineRank::Fixed(r) => {
                if self.coarse_rank >= r {
                    return Err(param("q", "q < r required"));
                }
                if r + 2 * self.coarse_rank > m {
                    return Err(param(
                        "r",
                        format!("r + 2q = {} exceeds dimension {m}", r + 2 * self.coarse_rank),
                    ));
                }
            }
            FineRank::Tolerance(tau) => {
                if !(tau > 0.0) {
                    return Err(param("tau", "tolerance must be positive"));
                }
                if self.coarse_rank > m {
                    return Err(param("q", "coarse rank exceeds dimension"));
                }
            }
        }
        if !(self.perturbation_scale >= 0.0) {
            return Err(param("perturbation_scale", "must be non-negative"));
        }
        self.coarse_opts.validate()?;
        self.fine_opts.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationTiming {
    pub coarse_secs: f64,
    pub fine_secs: f64,
}

/// Telemetry of one run, indexed `[k][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    /// `e_n^k = ||X_n - Y_n^k||_F`; `None` in telemetry-only mode.
    pub errors: Option<Vec<Vec<f64>>>,
    /// Realized rank per iterate: the rank bound of `Y_n^k` in fixed-rank
    /// mode, the rank selected by the tolerance truncation of `Y_n^k` in
    /// adaptive mode.
    pub ranks: Vec<Vec<usize>>,
    /// Iteration 0 holds the initial sweep.
    pub timings: Vec<IterationTiming>,
}

impl ConvergenceRecord {
    /// `max_n e_n^k` for every `k`.
    pub fn max_error_per_iter(&self) -> Option<Vec<f64>> {
        self.errors
            .as_ref()
            .map(|e| e.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct PararealOutput {
    pub record: ConvergenceRecord,
    /// All iterates `Y_n^k`, indexed `[k][n]`.
    pub iterates: Vec<Vec<LowRankMatrix>>,
}

impl PararealOutput {
    pub fn final_iterates(&self) -> &[LowRankMatrix] {
        self.iterates.last().expect("at least the initial sweep")
    }
}

fn perturbation_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Random perturbation `E` of rank `target_rank - rank(Y)` whose column and
/// row spaces are orthogonal to those of `Y`, with equal singular values
/// and `||E||_F = scale * max(||Y||_F, 1)`. `Y + E` has rank exactly
/// `target_rank` whenever `Y` has full rank bound.
pub fn make_perturbation(
    y_next: &LowRankMatrix,
    target_rank: usize,
    scale: f64,
    seed: u64,
) -> Result<LowRankMatrix> {
    let (rows, cols) = (y_next.rows(), y_next.cols());
    if target_rank > rows.min(cols) {
        return Err(param(
            "target_rank",
            format!("{target_rank} exceeds dimension {}", rows.min(cols)),
        ));
    }
    if target_rank < y_next.rank() {
        return Err(param("target_rank", "smaller than the current rank"));
    }
    let p = target_rank - y_next.rank();
    if p == 0 {
        return Ok(LowRankMatrix::zeros(rows, cols));
    }
    let mut g = rng::seeded(seed);
    let complement = |basis: &Mat, raw: Mat| -> Mat {
        let mut x = raw;
        // two passes of classical Gram-Schmidt against the basis
        for _ in 0..2 {
            if basis.ncols() > 0 {
                x -= basis * (basis.transpose() * &x);
            }
        }
        crate::dense::thin_qr(&x).0
    };
    let u = complement(y_next.u(), rng::gaussian(&mut g, rows, p));
    let v = complement(y_next.v(), rng::gaussian(&mut g, cols, p));
    let sigma = scale * y_next.norm().max(1.0) / (p as f64).sqrt();
    let s = Mat::identity(p, p) * sigma;
    Ok(LowRankMatrix::from_factors_unchecked(u, s, v))
}

/// `||X - Y||_F` through the trace expansion
/// `||X||^2 - 2 tr(U^T X V S^T) + ||S||^2`, without densifying `Y`.
/// Loses relative accuracy when the error is far below `||X||`.
pub fn factored_error(x: &Mat, y: &LowRankMatrix) -> f64 {
    if y.rank() == 0 {
        return x.norm();
    }
    let cross = (y.u().transpose() * x * y.v()).dot(y.s());
    let sq = x.norm_squared() - 2.0 * cross + y.s().norm_squared();
    sq.max(0.0).sqrt()
}

pub fn dense_error(x: &Mat, y: &LowRankMatrix) -> f64 {
    (x - y.to_dense()).norm()
}

/// Error table `e_n^k` of the iterates against a reference trajectory.
/// Matrices with more than `dense_limit^2` entries use the factored form.
pub fn errors_vs_reference(
    iterates: &[Vec<LowRankMatrix>],
    reference: &[Mat],
    dense_limit: usize,
) -> Result<Vec<Vec<f64>>> {
    iterates
        .iter()
        .map(|row| {
            if row.len() != reference.len() {
                return Err(dims("errors_vs_reference", reference.len(), row.len()));
            }
            Ok(row
                .iter()
                .zip(reference)
                .map(|(y, x)| {
                    if x.nrows() * x.ncols() <= dense_limit * dense_limit {
                        dense_error(x, y)
                    } else {
                        factored_error(x, y)
                    }
                })
                .collect())
        })
        .collect()
}

struct Propagators<'a> {
    field: &'a VectorField,
    cfg: &'a PararealConfig,
}

impl Propagators<'_> {
    fn coarse(&self, y: &LowRankMatrix) -> Result<LowRankMatrix> {
        let q = self.cfg.coarse_rank;
        let start = y.truncate(q)?;
        integrators::dlra_flow(self.field, &start, self.cfg.h, q, &self.cfg.coarse_opts)
    }

    /// Fine step and the rank it ran at.
    fn fine(&self, y: &LowRankMatrix) -> Result<(LowRankMatrix, usize)> {
        let start = match self.cfg.fine {
            FineRank::Fixed(r) => y.truncate(r)?,
            FineRank::Tolerance(tau) => y.truncate_tol(tau)?,
        };
        let r = start.rank();
        let out = integrators::dlra_flow(self.field, &start, self.cfg.h, r, &self.cfg.fine_opts)?;
        Ok((out, r))
    }

    fn realized_rank(&self, y: &LowRankMatrix) -> Result<usize> {
        Ok(match self.cfg.fine {
            FineRank::Fixed(_) => y.rank(),
            FineRank::Tolerance(tau) => y.tolerance_rank(tau)?,
        })
    }
}

/// Runs low-rank Parareal (fixed-rank or adaptive, per `cfg.fine`) from
/// `y0` for `cfg.max_iter` iterations.
///
/// Errors are recorded against `reference` (the exact solution at the slice
/// times). Without one, a reference is computed from `dense(y0)` when the
/// state dimension is at most `cfg.reference_ceiling`; above it the run is
/// telemetry-only.
///
/// The fine solves of one iteration run on the current rayon pool; results
/// do not depend on the number of threads.
pub fn run_lowrank_parareal(
    field: &VectorField,
    y0: &LowRankMatrix,
    cfg: &PararealConfig,
    reference: Option<&[Mat]>,
) -> Result<PararealOutput> {
    let (rows, cols) = field.state_shape();
    if (y0.rows(), y0.cols()) != (rows, cols) {
        return Err(dims(
            "run_lowrank_parareal",
            format!("{rows}x{cols}"),
            format!("{}x{}", y0.rows(), y0.cols()),
        ));
    }
    cfg.validate(rows, cols)?;
    let q = cfg.coarse_rank;
    let (target_rank, rank_cap) = match cfg.fine {
        FineRank::Fixed(r) => {
            if y0.rank() > r + 2 * q {
                return Err(param("y0", format!("rank {} exceeds r + 2q = {}", y0.rank(), r + 2 * q)));
            }
            (r + 2 * q, Some(r + 2 * q))
        }
        FineRank::Tolerance(_) => {
            if y0.rank() < q {
                return Err(param("y0", "adaptive mode needs rank(Y0) >= q"));
            }
            (y0.rank(), None)
        }
    };
    let n_slices = cfg.slices;
    let props = Propagators { field, cfg };

    let computed_reference;
    let reference = match reference {
        Some(r) => {
            if r.len() != n_slices + 1 {
                return Err(dims("reference trajectory", n_slices + 1, r.len()));
            }
            Some(r)
        }
        None if rows.max(cols) <= cfg.reference_ceiling => {
            computed_reference = integrators::reference_trajectory(
                field,
                &y0.to_dense(),
                cfg.h,
                n_slices,
                &cfg.fine_opts,
            )?;
            Some(computed_reference.as_slice())
        }
        None => None,
    };

    let mut timings = Vec::with_capacity(cfg.max_iter + 1);
    let mut iterates: Vec<Vec<LowRankMatrix>> = Vec::with_capacity(cfg.max_iter + 1);

    // Initial sweep. `coarse_prev[n]` holds psi_q(T_q(Y_n^k)) of the
    // current iteration k.
    let start = Instant::now();
    let mut sweep = Vec::with_capacity(n_slices + 1);
    let mut coarse_prev = Vec::with_capacity(n_slices);
    sweep.push(y0.clone());
    for n in 0..n_slices {
        let g = props.coarse(&sweep[n])?;
        let scale = match cfg.fine {
            FineRank::Fixed(_) => cfg.perturbation_scale,
            FineRank::Tolerance(tau) => {
                // added singular values must stay above the fine tolerance
                let p = target_rank.saturating_sub(g.rank()).max(1) as f64;
                cfg.perturbation_scale.max(2.0 * tau * p.sqrt() / g.norm().max(1.0))
            }
        };
        let e = make_perturbation(&g, target_rank, scale, perturbation_seed(cfg.seed, n))?;
        let next = g.add(&e, 1.0, 1.0)?;
        coarse_prev.push(g);
        sweep.push(next);
    }
    timings.push(IterationTiming {
        coarse_secs: start.elapsed().as_secs_f64(),
        fine_secs: 0.0,
    });
    iterates.push(sweep);

    for k in 0..cfg.max_iter {
        let current = &iterates[k];
        let t_fine = Instant::now();
        let fine: Vec<LowRankMatrix> = (0..n_slices)
            .into_par_iter()
            .map(|n| props.fine(&current[n]).map(|(y, _)| y))
            .collect::<Result<_>>()?;
        let fine_secs = t_fine.elapsed().as_secs_f64();

        let t_coarse = Instant::now();
        let mut next = Vec::with_capacity(n_slices + 1);
        let mut coarse_new = Vec::with_capacity(n_slices);
        next.push(y0.clone());
        for n in 0..n_slices {
            let g = props.coarse(&next[n])?;
            let y = LowRankMatrix::linear_combination(&[
                (1.0, &fine[n]),
                (1.0, &g),
                (-1.0, &coarse_prev[n]),
            ])?;
            if let Some(cap) = rank_cap {
                assert!(
                    y.rank() <= cap,
                    "rank {} of Y_{}^{} exceeds r + 2q = {cap}",
                    y.rank(),
                    n + 1,
                    k + 1
                );
            }
            coarse_new.push(g);
            next.push(y);
        }
        timings.push(IterationTiming {
            coarse_secs: t_coarse.elapsed().as_secs_f64(),
            fine_secs,
        });
        coarse_prev = coarse_new;
        iterates.push(next);
    }

    let ranks = iterates
        .iter()
        .map(|row| row.iter().map(|y| props.realized_rank(y)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let errors = match reference {
        Some(r) => Some(errors_vs_reference(&iterates, r, cfg.reference_ceiling)?),
        None => None,
    };
    Ok(PararealOutput {
        record: ConvergenceRecord {
            errors,
            ranks,
            timings,
        },
        iterates,
    })
}

/// Adaptive low-rank Parareal; `cfg.fine` must be a tolerance.
pub fn run_adaptive_parareal(
    field: &VectorField,
    y0: &LowRankMatrix,
    cfg: &PararealConfig,
    reference: Option<&[Mat]>,
) -> Result<PararealOutput> {
    if !matches!(cfg.fine, FineRank::Tolerance(_)) {
        return Err(param("fine", "adaptive mode needs a fine tolerance"));
    }
    run_lowrank_parareal(field, y0, cfg, reference)
}

/// Sequential fine solution `(psi_r o T_r)^n (Y0)` for `n = 0..=slices`.
pub fn sequential_fine(
    field: &VectorField,
    y0: &LowRankMatrix,
    h: f64,
    slices: usize,
    r: usize,
    opts: &FlowOptions,
) -> Result<Vec<LowRankMatrix>> {
    let mut out = Vec::with_capacity(slices + 1);
    out.push(y0.clone());
    for n in 0..slices {
        let start = out[n].truncate(r)?;
        let rank = start.rank();
        out.push(integrators::dlra_flow(field, &start, h, rank, opts)?);
    }
    Ok(out)
}
