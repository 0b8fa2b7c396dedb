//! Convergence theory of low-rank Parareal in computable form.
//!
//! The error `e_n^k = ||X_n - Y_n^k||_F` obeys the recursion
//! `e_{n+1}^{k+1} <= alpha e_n^k + beta e_n^{k+1} + kappa` with
//! `e_n^0 <= gamma`. This module evaluates the exact solution of that
//! recursion, the three closed-form upper bounds derived from it, and the
//! low-rank approximability bounds of the differential Lyapunov equation.

use crate::dense::{self, Mat};
use crate::error::{param, Error, Result};
use crate::integrators;
use crate::lowrank::{LowRankMatrix, SingularSpectrum};
use crate::problems::{Lyapunov, VectorField};

/// Constants of the error recursion together with the quantities they are
/// built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// One-sided Lipschitz constant.
    pub ell: f64,
    pub eps_q: f64,
    pub eps_r: f64,
    /// Lipschitz constant of `T_q`.
    pub c_q: f64,
    /// Lipschitz constant of `T_r - T_q`.
    pub c_rq: f64,
    pub h: f64,
}

impl BoundParams {
    /// Parameters given directly by `(alpha, beta, gamma, kappa)`.
    pub fn from_constants(alpha: f64, beta: f64, gamma: f64, kappa: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            kappa,
            ell: 0.0,
            eps_q: 0.0,
            eps_r: 0.0,
            c_q: beta,
            c_rq: alpha,
            h: 0.0,
        }
    }

    /// Assembles `alpha = e^{l h} C_rq`, `beta = e^{l h} C_q` and
    /// `kappa = e^{l h} tail_r + (2 eps_q + eps_r) (e^{l h} - 1) / l`.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        ell: f64,
        h: f64,
        c_q: f64,
        c_rq: f64,
        eps_q: f64,
        eps_r: f64,
        max_tail_r: f64,
        gamma: f64,
    ) -> Self {
        let growth = (ell * h).exp();
        Self {
            alpha: growth * c_rq,
            beta: growth * c_q,
            gamma,
            kappa: growth * max_tail_r + (2.0 * eps_q + eps_r) * dense::phi1(ell, h),
            ell,
            eps_q,
            eps_r,
            c_q,
            c_rq,
            h,
        }
    }

    /// `alpha + beta < 1`, the regime where the bounds apply.
    pub fn is_convergent(&self) -> bool {
        self.alpha + self.beta < 1.0
    }

    /// Stagnation level `kappa / (1 - alpha - beta)`.
    pub fn floor(&self) -> f64 {
        self.kappa / (1.0 - self.alpha - self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// `B = (alpha / (1 - beta))^k`.
    Linear,
    /// `B = alpha^k (1 + beta)^{n-1}`.
    SecondLinear,
    /// `B = alpha^k / (k-1)! * prod_{j=2}^k (n - j) / (1 - beta)`.
    Superlinear,
    /// Exact solution of the recursion.
    ExactRecursion,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] = [
        BoundKind::Linear,
        BoundKind::SecondLinear,
        BoundKind::Superlinear,
        BoundKind::ExactRecursion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Linear => "linear",
            BoundKind::SecondLinear => "second_linear",
            BoundKind::Superlinear => "superlinear",
            BoundKind::ExactRecursion => "exact",
        }
    }
}

fn ln_pow(x: f64, e: usize) -> f64 {
    if e == 0 {
        0.0
    } else {
        e as f64 * x.ln()
    }
}

/// `sum_{i=0}^{count-1} binom(i + shift, i) alpha^{a_exp} beta^i`, with the
/// binomial accumulated in log form by ratio updates
/// `binom(i+1+shift, i+1) = binom(i+shift, i) (i+1+shift) / (i+1)`.
fn binomial_series(alpha: f64, a_exp: usize, beta: f64, shift: i64, count: usize) -> f64 {
    let base = ln_pow(alpha, a_exp);
    if base == f64::NEG_INFINITY {
        return 0.0;
    }
    let ln_beta = beta.ln();
    let mut ln_binom = 0.0f64;
    let mut sum = 0.0;
    for i in 0..count {
        if i > 0 {
            let num = i as i64 + shift;
            if num <= 0 {
                // binom(i-1, i) = 0 for i >= 1
                break;
            }
            ln_binom += (num as f64).ln() - (i as f64).ln();
            if beta == 0.0 {
                break;
            }
        }
        let ln_term = base + ln_binom + if i == 0 { 0.0 } else { i as f64 * ln_beta };
        sum += ln_term.exp();
    }
    sum
}

/// Exact solution `e_n^k` of the equality recursion
/// `e_{n+1}^{k+1} = alpha e_n^k + beta e_n^{k+1} + kappa`, `e_{n+1}^0 = gamma`,
/// `e_0^k = 0`.
pub fn exact_recursion(p: &BoundParams, n: usize, k: usize) -> f64 {
    let mut kappa_part = 0.0;
    if p.kappa != 0.0 {
        for j in 0..k.min(n) {
            kappa_part += binomial_series(p.alpha, j, p.beta, j as i64, n - j);
        }
        kappa_part *= p.kappa;
    }
    let gamma_part = if n <= k || p.gamma == 0.0 {
        0.0
    } else {
        p.gamma * binomial_series(p.alpha, k, p.beta, k as i64 - 1, n - k)
    };
    kappa_part + gamma_part
}

/// Bound `B_{n,k} gamma + kappa / (1 - alpha - beta)` of the requested kind
/// (for [`BoundKind::ExactRecursion`] the exact recursion value).
pub fn bound(kind: BoundKind, p: &BoundParams, n: usize, k: usize) -> Result<f64> {
    if kind == BoundKind::ExactRecursion {
        if !(p.alpha < 1.0 && p.beta < 1.0) {
            return Err(Error::Divergent(p.alpha + p.beta));
        }
        return Ok(exact_recursion(p, n, k));
    }
    if !p.is_convergent() {
        return Err(Error::Divergent(p.alpha + p.beta));
    }
    let floor = p.floor();
    if k == 0 {
        return Ok(p.gamma + floor);
    }
    let ln_b = match kind {
        BoundKind::Linear => k as f64 * (p.alpha.ln() - (1.0 - p.beta).ln()),
        BoundKind::SecondLinear => {
            k as f64 * p.alpha.ln() + (n as f64 - 1.0) * (1.0 + p.beta).ln()
        }
        BoundKind::Superlinear => {
            // the gamma term of the recursion vanishes for n <= k
            if n <= k {
                f64::NEG_INFINITY
            } else {
                let ln_prod: f64 = (2..=k).map(|j| ((n - j) as f64).ln()).sum();
                let ln_fact: f64 = (1..k).map(|j| (j as f64).ln()).sum();
                k as f64 * p.alpha.ln() + ln_prod - ln_fact - (1.0 - p.beta).ln()
            }
        }
        BoundKind::ExactRecursion => unreachable!(),
    };
    Ok(ln_b.exp() * p.gamma + floor)
}

/// DLRA error bound `e^{l t} gap0 + eps_r (e^{l t} - 1) / l`.
pub fn dlra_error_bound(ell: f64, eps_r: f64, initial_gap: f64, t: f64) -> f64 {
    (ell * t).exp() * initial_gap + eps_r * dense::phi1(ell, t)
}

/// Relative singular value decay factor `4 exp(-pi^2 rho / log(4 kappa_A))`
/// of solutions of algebraic Lyapunov equations.
pub fn singular_decay_factor(kappa_a: f64, rho: f64) -> f64 {
    4.0 * (-std::f64::consts::PI.powi(2) * rho / (4.0 * kappa_a).ln()).exp()
}

/// Approximation rank `r0 + 2 r rho` of `X(t)` and the 2-norm error
/// guaranteed at that rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankBound {
    pub rank: usize,
    pub error: f64,
}

/// Low-rank approximability of the differential Lyapunov equation.
/// `x0_spectrum` holds the singular values of `X0` and `source_spectrum`
/// those of `C C^T`.
pub fn lyapunov_rank_bound(
    a: &Mat,
    x0_spectrum: &SingularSpectrum,
    source_spectrum: &SingularSpectrum,
    t: f64,
    r0: usize,
    r: usize,
    rho: usize,
) -> Result<RankBound> {
    let m = a.nrows();
    if r0 > m || r > m || rho > m {
        return Err(param("r0/r/rho", format!("must not exceed m = {m}")));
    }
    if !(t >= 0.0) {
        return Err(param("t", "must be non-negative"));
    }
    let lam = dense::sym_eigen(a).lambda;
    let lmax = *lam.last().ok_or_else(|| param("A", "empty"))?;
    if lmax >= 0.0 {
        return Err(Error::SingularOperator(format!(
            "A must be negative definite (lambda_max = {lmax:e})"
        )));
    }
    let lo = lam[0].abs().min(lmax.abs());
    let hi = lam[0].abs().max(lmax.abs());
    let kappa_a = hi / lo;
    let ell = 2.0 * lmax;
    let source_norm = source_spectrum.sigma(1);
    let decay = singular_decay_factor(kappa_a, rho as f64);
    let error = (ell * t).exp() * x0_spectrum.sigma(r0 + 1)
        + dense::phi1(ell, t) * (decay * source_norm + source_spectrum.sigma(r + 1));
    Ok(RankBound {
        rank: r0 + 2 * r * rho,
        error,
    })
}

/// Same bound for a Lyapunov field with exact low-rank data, computing the
/// spectra from `X0` and the field's `C C^T`.
pub fn lyapunov_rank_bound_for(
    f: &Lyapunov,
    x0: &Mat,
    t: f64,
    r0: usize,
    r: usize,
    rho: usize,
) -> Result<RankBound> {
    let xs = SingularSpectrum::new(dense::singular_values(x0)?);
    let cs = SingularSpectrum::new(dense::singular_values(f.source())?);
    lyapunov_rank_bound(f.a(), &xs, &cs, t, r0, r, rho)
}

/// Estimates the recursion constants for an affine field from a reference
/// trajectory sampled at the slice times.
///
/// `C_q` and `C_rq` are the first-order truncation Lipschitz factors
/// `sigma_q / (sigma_q - sigma_{q+1})` maximized over the trajectory;
/// `gamma` is the measured initial-sweep error.
pub fn estimate_params(
    f: &VectorField,
    trajectory: &[Mat],
    q: usize,
    r: usize,
    h: f64,
    gamma: f64,
) -> Result<BoundParams> {
    if !f.is_affine() {
        return Err(Error::NotAffine("bound estimation needs an affine field"));
    }
    if trajectory.is_empty() {
        return Err(param("trajectory", "must be non-empty"));
    }
    let ell = f.one_sided_lipschitz()?;
    let eps_q = integrators::measure_epsilon(f, trajectory, q)?;
    let eps_r = integrators::measure_epsilon(f, trajectory, r)?;
    let mut c_q = 0.0f64;
    let mut g_r = 0.0f64;
    let mut tail_r = 0.0f64;
    for (n, x) in trajectory.iter().enumerate() {
        let sigma = LowRankMatrix::from_dense(x)?.singular_values();
        let gq = sigma.gap_factor(q).ok_or(Error::GapDegenerate { slice: n, index: q })?;
        let gr = sigma.gap_factor(r).ok_or(Error::GapDegenerate { slice: n, index: r })?;
        c_q = c_q.max(gq);
        g_r = g_r.max(gr);
        tail_r = tail_r.max(sigma.tail_norm(r));
    }
    Ok(BoundParams::assemble(
        ell,
        h,
        c_q,
        c_q + g_r,
        eps_q,
        eps_r,
        tail_r,
        gamma,
    ))
}
