//! Time propagators: closed-form affine flows, a self-converging dense
//! reference solver and the rank-`r` DLRA flow computed with the symmetric
//! (Strang) projector-splitting integrator.

use crate::dense::{self, Mat};
use crate::error::{dims, param, Error, Result};
use crate::lowrank::LowRankMatrix;
use crate::problems::{GeneralizedSylvester, Lyapunov, VectorField};

/// How a flow is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMethod {
    /// Use closed-form solutions wherever the field admits one (full flow
    /// and projector-splitting substeps), explicit Runge-Kutta otherwise.
    ClosedForm,
    /// Projector splitting with every substep ODE solved by Runge-Kutta.
    ProjectorSplitting2,
    /// Force the Runge-Kutta path for the full-space reference flow.
    DenseReference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Splitting substeps per macro step of [`dlra_flow`].
    pub substeps: usize,
    pub rtol: f64,
    pub atol: f64,
    pub method: FlowMethod,
    /// Ceiling for the Runge-Kutta step count.
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            substeps: 1,
            rtol: 1e-10,
            atol: 1e-14,
            method: FlowMethod::ClosedForm,
            max_steps: 1 << 22,
        }
    }
}

impl FlowOptions {
    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_method(mut self, method: FlowMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps < 1 {
            return Err(param("substeps", "must be at least 1"));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(param("rtol/atol", "tolerances must be positive"));
        }
        if self.max_steps < 1 {
            return Err(param("max_steps", "must be at least 1"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Runge-Kutta

fn rk4_fixed<F>(f: &F, y0: &Mat, t: f64, steps: usize) -> Result<Mat>
where
    F: Fn(&Mat) -> Result<Mat>,
{
    let dt = t / steps as f64;
    let mut y = y0.clone();
    for _ in 0..steps {
        let k1 = f(&y)?;
        let k2 = f(&(&y + &k1 * (0.5 * dt)))?;
        let k3 = f(&(&y + &k2 * (0.5 * dt)))?;
        let k4 = f(&(&y + &k3 * dt))?;
        y += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    }
    Ok(y)
}

/// Classical RK4 with step doubling: starting from `start_steps`, the step
/// count is doubled until two successive solutions agree to
/// `10 (rtol ||y|| + atol)` in the Frobenius norm. Gives up early once
/// `STALL_DOUBLINGS` doublings in a row fail to halve the best difference,
/// which happens when the solution itself blows up.
pub(crate) fn rk4_converged<F>(
    f: &F,
    y0: &Mat,
    t: f64,
    start_steps: usize,
    opts: &FlowOptions,
) -> Result<Mat>
where
    F: Fn(&Mat) -> Result<Mat>,
{
    if t == 0.0 {
        return Ok(y0.clone());
    }
    let mut n = start_steps.clamp(1, opts.max_steps);
    let mut prev = rk4_fixed(f, y0, t, n)?;
    let mut achieved = f64::INFINITY;
    let mut stalled = 0;
    while n * 2 <= opts.max_steps && stalled < STALL_DOUBLINGS {
        n *= 2;
        let next = rk4_fixed(f, y0, t, n)?;
        let diff = (&next - &prev).norm();
        let scale = next.norm();
        stalled += 1;
        if diff.is_finite() && scale.is_finite() {
            let rel = diff / scale.max(f64::MIN_POSITIVE);
            if diff <= 10.0 * (opts.rtol * scale + opts.atol) {
                return Ok(next);
            }
            if rel <= 0.5 * achieved {
                stalled = 0;
            }
            achieved = achieved.min(rel);
        }
        prev = next;
    }
    Err(Error::Accuracy {
        target: opts.rtol,
        achieved,
        steps: n,
    })
}

const STALL_DOUBLINGS: usize = 6;

/// Step count keeping `dt * rho` inside the RK4 stability interval.
fn stable_steps(t: f64, rho: f64) -> usize {
    ((t.abs() * rho / 2.5).ceil() as usize).max(1)
}

// ---------------------------------------------------------------------------
// Full-space flows

/// Closed-form solution of the differential Lyapunov equation,
/// `X(t) = e^{tL}(X0) + L^{-1}(e^{tL}(C C^T) - C C^T)` with
/// `L(X) = A X + X A`, evaluated entrywise in the eigenbasis of `A`.
pub fn exact_flow_lyapunov(f: &Lyapunov, x0: &Mat, t: f64) -> Result<Mat> {
    let m = f.dim();
    if x0.shape() != (m, m) {
        return Err(dims("exact_flow_lyapunov", format!("{m}x{m}"), format!("{:?}", x0.shape())));
    }
    if !(t >= 0.0) {
        return Err(param("t", "must be non-negative"));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let eig = f.eigen();
    let lam = &eig.lambda;
    let x0t = eig.q.transpose() * x0 * &eig.q;
    let w = f.source_eig();
    let mut xt = Mat::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            let s = lam[i] + lam[j];
            if s == 0.0 {
                return Err(Error::SingularOperator(format!(
                    "lambda_{i} + lambda_{j} = 0"
                )));
            }
            let e = (s * t).exp();
            xt[(i, j)] = e * x0t[(i, j)] + (s * t).exp_m1() / s * w[(i, j)];
        }
    }
    Ok(&eig.q * xt * eig.q.transpose())
}

/// Column-decoupled exact flow of `dY/dt = -A0 Y - A1 Y C1 + b 1^T` for
/// symmetric `A0`, `A1`.
fn exact_flow_generalized_sylvester(f: &GeneralizedSylvester, y0: &Mat, t: f64) -> Result<Mat> {
    let mut out = y0.clone();
    for (j, &c) in f.c1().iter().enumerate() {
        let eig = dense::sym_eigen(&f.column_operator(c));
        let yt = eig.q.transpose() * y0.column(j);
        let bt = eig.q.transpose() * f.b();
        let mut z = yt.clone();
        for i in 0..z.len() {
            let s = -eig.lambda[i];
            z[i] = (s * t).exp() * yt[i] + dense::phi1(s, t) * bt[i];
        }
        out.set_column(j, &(&eig.q * z));
    }
    Ok(out)
}

/// Exact flow of `dX/dt = L X + X R + B` for symmetric `L`, `R`.
fn exact_flow_sylvester(left: &Mat, right: &Mat, source: &Mat, x0: &Mat, t: f64) -> Mat {
    let el = dense::sym_eigen(left);
    let er = dense::sym_eigen(right);
    let x0t = el.q.transpose() * x0 * &er.q;
    let bt = el.q.transpose() * source * &er.q;
    let xt = Mat::from_fn(x0.nrows(), x0.ncols(), |i, j| {
        let s = el.lambda[i] + er.lambda[j];
        (s * t).exp() * x0t[(i, j)] + dense::phi1(s, t) * bt[(i, j)]
    });
    &el.q * xt * er.q.transpose()
}

fn is_symmetric(a: &Mat) -> bool {
    (a - a.transpose()).norm() <= 1e-12 * a.norm().max(1.0)
}

/// High-accuracy solution `phi^t(X0)` of the full problem.
///
/// Exact formulas are used for the Lyapunov field and for symmetric
/// Sylvester-type fields unless `opts.method` is
/// [`FlowMethod::DenseReference`]; everything else goes through
/// self-converging RK4.
pub fn reference_flow(f: &VectorField, x0: &Mat, t: f64, opts: &FlowOptions) -> Result<Mat> {
    opts.validate()?;
    let shape = f.state_shape();
    if x0.shape() != shape {
        return Err(dims("reference_flow", format!("{shape:?}"), format!("{:?}", x0.shape())));
    }
    if !(t >= 0.0) {
        return Err(param("t", "must be non-negative"));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    if opts.method != FlowMethod::DenseReference {
        match f {
            VectorField::Lyapunov(l) => return exact_flow_lyapunov(l, x0, t),
            VectorField::GeneralizedSylvester(g) if g.is_symmetric() => {
                return exact_flow_generalized_sylvester(g, x0, t)
            }
            VectorField::AffineSylvester(s) if is_symmetric(s.left()) && is_symmetric(s.right()) => {
                return Ok(exact_flow_sylvester(s.left(), s.right(), s.source(), x0, t))
            }
            _ => {}
        }
    }
    let rho = f.stiffness_bound(x0);
    rk4_converged(&|x: &Mat| f.eval(x), x0, t, stable_steps(t, rho), opts)
}

/// `X_n = phi^{n h}(X0)` for `n = 0..=slices`, stepping slice by slice.
pub fn reference_trajectory(
    f: &VectorField,
    x0: &Mat,
    h: f64,
    slices: usize,
    opts: &FlowOptions,
) -> Result<Vec<Mat>> {
    let mut out = Vec::with_capacity(slices + 1);
    out.push(x0.clone());
    for n in 0..slices {
        let next = reference_flow(f, &out[n], h, opts)?;
        out.push(next);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Projector splitting

/// Solvers for the three substep ODEs of the projector-splitting scheme:
///
/// * K-step `dK/dt = F(K V^T) V`
/// * S-step `dS/dt = -U^T F(U S V^T) V`
/// * L-step `dL/dt = F(U L^T)^T U`
trait SubstepSolver {
    fn k_step(&self, k: &Mat, v: &Mat, dt: f64) -> Result<Mat>;
    fn s_step(&self, s: &Mat, u: &Mat, v: &Mat, dt: f64) -> Result<Mat>;
    fn l_step(&self, l: &Mat, u: &Mat, dt: f64) -> Result<Mat>;
}

/// Lyapunov substeps in the eigenbasis of `A`, where each substep is a
/// small Sylvester ODE with diagonal left operator.
struct LyapunovEigenSubsteps<'a> {
    lam: &'a [f64],
    w: &'a Mat,
}

impl LyapunovEigenSubsteps<'_> {
    /// `B = X^T diag(lam) X`, symmetric `r x r`.
    fn projected(&self, x: &Mat) -> Mat {
        let mut lx = x.clone();
        for (i, mut row) in lx.row_iter_mut().enumerate() {
            row *= self.lam[i];
        }
        let b = x.transpose() * lx;
        (&b + b.transpose()) * 0.5
    }

    /// Solves `dK/dt = diag(lam) K + K B + G` exactly.
    fn sylvester_diag(&self, k: &Mat, b: &Mat, g: &Mat, dt: f64) -> Mat {
        let eb = dense::sym_eigen(b);
        let kh = k * &eb.q;
        let gh = g * &eb.q;
        let out = Mat::from_fn(k.nrows(), k.ncols(), |i, j| {
            let z = self.lam[i] + eb.lambda[j];
            (z * dt).exp() * kh[(i, j)] + dense::phi1(z, dt) * gh[(i, j)]
        });
        out * eb.q.transpose()
    }
}

impl SubstepSolver for LyapunovEigenSubsteps<'_> {
    fn k_step(&self, k: &Mat, v: &Mat, dt: f64) -> Result<Mat> {
        let b = self.projected(v);
        let g = self.w * v;
        Ok(self.sylvester_diag(k, &b, &g, dt))
    }

    fn s_step(&self, s: &Mat, u: &Mat, v: &Mat, dt: f64) -> Result<Mat> {
        let eu = dense::sym_eigen(&self.projected(u));
        let ev = dense::sym_eigen(&self.projected(v));
        let g = u.transpose() * self.w * v;
        let sh = eu.q.transpose() * s * &ev.q;
        let gh = eu.q.transpose() * g * &ev.q;
        let out = Mat::from_fn(s.nrows(), s.ncols(), |i, j| {
            let z = -(eu.lambda[i] + ev.lambda[j]);
            (z * dt).exp() * sh[(i, j)] - dense::phi1(z, dt) * gh[(i, j)]
        });
        Ok(eu.q * out * ev.q.transpose())
    }

    fn l_step(&self, l: &Mat, u: &Mat, dt: f64) -> Result<Mat> {
        let b = self.projected(u);
        let g = self.w.transpose() * u;
        Ok(self.sylvester_diag(l, &b, &g, dt))
    }
}

/// Substeps integrated with self-converging RK4 on dense evaluations of `F`.
struct RungeKuttaSubsteps<'a> {
    field: &'a VectorField,
    opts: &'a FlowOptions,
}

impl RungeKuttaSubsteps<'_> {
    fn start_steps(&self, x: &Mat, dt: f64) -> usize {
        stable_steps(dt, self.field.stiffness_bound(x))
    }
}

impl SubstepSolver for RungeKuttaSubsteps<'_> {
    fn k_step(&self, k: &Mat, v: &Mat, dt: f64) -> Result<Mat> {
        let vt = v.transpose();
        let rhs = |k: &Mat| Ok(self.field.eval(&(k * &vt))? * v);
        let n0 = self.start_steps(&(k * &vt), dt);
        rk4_converged(&rhs, k, dt, n0, self.opts)
    }

    fn s_step(&self, s: &Mat, u: &Mat, v: &Mat, dt: f64) -> Result<Mat> {
        let ut = u.transpose();
        let vt = v.transpose();
        let rhs = |s: &Mat| Ok(-(&ut * self.field.eval(&(u * s * &vt))? * v));
        let n0 = self.start_steps(&(u * s * &vt), dt);
        rk4_converged(&rhs, s, dt, n0, self.opts)
    }

    fn l_step(&self, l: &Mat, u: &Mat, dt: f64) -> Result<Mat> {
        let rhs = |l: &Mat| Ok(self.field.eval(&(u * l.transpose()))?.transpose() * u);
        let n0 = self.start_steps(&(u * l.transpose()), dt);
        rk4_converged(&rhs, l, dt, n0, self.opts)
    }
}

fn checked(x: Mat, substep: &'static str) -> Result<Mat> {
    if dense::all_finite(&x) {
        Ok(x)
    } else {
        Err(Error::DegenerateRank {
            substep,
            detail: "non-finite factor before re-orthonormalization".into(),
        })
    }
}

/// One symmetric splitting step `K(dt/2) S(dt/2) L(dt) S(dt/2) K(dt/2)`.
fn strang_step(
    solver: &dyn SubstepSolver,
    u: Mat,
    s: Mat,
    v: Mat,
    dt: f64,
) -> Result<(Mat, Mat, Mat)> {
    let half = 0.5 * dt;
    let k = checked(solver.k_step(&(&u * &s), &v, half)?, "K")?;
    let (u, s) = dense::thin_qr(&k);
    let s = checked(solver.s_step(&s, &u, &v, half)?, "S")?;
    let l = checked(solver.l_step(&(&v * s.transpose()), &u, dt)?, "L")?;
    let (v, st) = dense::thin_qr(&l);
    let s = checked(solver.s_step(&st.transpose(), &u, &v, half)?, "S")?;
    let k = checked(solver.k_step(&(&u * &s), &v, half)?, "K")?;
    let (u, s) = dense::thin_qr(&k);
    Ok((u, s, v))
}

/// DLRA flow `psi_r^h(Y0)`: integrates `dY/dt = P_Y F(Y)` on the rank-`r`
/// manifold with `opts.substeps` second-order projector-splitting steps.
/// `Y0` must already have rank `r`.
pub fn dlra_flow(
    f: &VectorField,
    y0: &LowRankMatrix,
    h: f64,
    r: usize,
    opts: &FlowOptions,
) -> Result<LowRankMatrix> {
    opts.validate()?;
    if !(h > 0.0) {
        return Err(param("h", "step must be positive"));
    }
    if y0.rank() != r || r == 0 {
        return Err(param(
            "r",
            format!("initial value has rank {} but the flow rank is {r}", y0.rank()),
        ));
    }
    let shape = f.state_shape();
    if (y0.rows(), y0.cols()) != shape {
        return Err(dims(
            "dlra_flow",
            format!("{shape:?}"),
            format!("({}, {})", y0.rows(), y0.cols()),
        ));
    }
    let dt = h / opts.substeps as f64;
    match (f, opts.method) {
        (VectorField::Lyapunov(l), FlowMethod::ClosedForm) => {
            let q = &l.eigen().q;
            let solver = LyapunovEigenSubsteps {
                lam: &l.eigen().lambda,
                w: l.source_eig(),
            };
            let mut u = q.transpose() * y0.u();
            let mut s = y0.s().clone();
            let mut v = q.transpose() * y0.v();
            for _ in 0..opts.substeps {
                (u, s, v) = strang_step(&solver, u, s, v, dt)?;
            }
            Ok(LowRankMatrix::from_factors_unchecked(q * u, s, q * v))
        }
        _ => {
            let solver = RungeKuttaSubsteps { field: f, opts };
            let (mut u, mut s, mut v) = y0.clone().into_factors();
            for _ in 0..opts.substeps {
                (u, s, v) = strang_step(&solver, u, s, v, dt)?;
            }
            Ok(LowRankMatrix::from_factors_unchecked(u, s, v))
        }
    }
}

/// Doubles the substep count, starting from `opts.substeps`, until doubling
/// once more changes `psi_r^h(Y0)` by less than `rel_tol` (relative
/// Frobenius norm). Returns the first count that passes.
pub fn calibrate_substeps(
    f: &VectorField,
    y0: &LowRankMatrix,
    h: f64,
    r: usize,
    opts: &FlowOptions,
    rel_tol: f64,
    max_substeps: usize,
) -> Result<usize> {
    // Large substeps can overflow the backward S-step of a stiff field or
    // drive a nonlinear one to blow-up; those counts are skipped.
    let attempt = |n: usize| match dlra_flow(f, y0, h, r, &opts.with_substeps(n)) {
        Ok(y) => Ok(Some(y.to_dense())),
        Err(Error::DegenerateRank { .. } | Error::Accuracy { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let mut n = opts.substeps.max(1);
    let mut cur = attempt(n)?;
    let mut achieved = f64::INFINITY;
    while 2 * n <= max_substeps {
        let next = attempt(2 * n)?;
        if let (Some(a), Some(b)) = (&cur, &next) {
            achieved = (b - a).norm() / b.norm().max(f64::MIN_POSITIVE);
            if achieved < rel_tol {
                return Ok(n);
            }
        }
        n *= 2;
        cur = next;
    }
    Err(Error::Accuracy {
        target: rel_tol,
        achieved,
        steps: n,
    })
}

/// Modeling error `max_n ||F(Y_n) - P_{Y_n} F(Y_n)||_F` with
/// `Y_n = T_r(X_n)`.
pub fn measure_epsilon(f: &VectorField, trajectory: &[Mat], r: usize) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(param("trajectory", "must be non-empty"));
    }
    let mut eps = 0.0f64;
    for x in trajectory {
        let y = LowRankMatrix::from_dense(x)?.truncate(r)?;
        let fy = f.eval_lowrank(&y)?;
        let p = y.tangent_project(&fy)?;
        eps = eps.max((fy - p).norm());
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{self, AffineSylvester, SpectrumSpec};
    use crate::rng;

    fn small_lyapunov(m: usize) -> (VectorField, Mat) {
        let f = problems::build_lyapunov_heat(m, &SpectrumSpec::geometric(5.0, m, 1)).unwrap();
        let x0 = problems::random_with_spectrum(&SpectrumSpec::geometric(1.0, m, 2), m);
        (f, x0)
    }

    #[test]
    fn lyapunov_flow_at_zero() {
        let (f, x0) = small_lyapunov(8);
        let VectorField::Lyapunov(l) = &f else { unreachable!() };
        assert_eq!(exact_flow_lyapunov(l, &x0, 0.0).unwrap(), x0);
        assert!(exact_flow_lyapunov(l, &x0, -1.0).is_err());
    }

    #[test]
    fn lyapunov_stationary_point() {
        let (f, _) = small_lyapunov(10);
        let VectorField::Lyapunov(l) = &f else { unreachable!() };
        let xs = l.stationary().unwrap();
        for t in [0.1, 1.0, 10.0] {
            let xt = exact_flow_lyapunov(l, &xs, t).unwrap();
            assert!((&xt - &xs).norm() < 1e-12 * xs.norm());
        }
        assert!(f.eval(&xs).unwrap().norm() < 1e-10 * l.source().norm());
    }

    #[test]
    fn scalar_lyapunov_closed_form() {
        let l = Lyapunov::new(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 1.0)).unwrap();
        let x0 = 0.3;
        for t in [0.0, 0.5, 2.0] {
            let x = exact_flow_lyapunov(&l, &Mat::from_element(1, 1, x0), t).unwrap()[(0, 0)];
            let expect = (-2.0 * t).exp() * x0 + (1.0 - (-2.0 * t).exp()) / 2.0;
            assert!((x - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn semigroup_property() {
        let (f, x0) = small_lyapunov(12);
        let VectorField::Lyapunov(l) = &f else { unreachable!() };
        let (s, t) = (0.03, 0.11);
        let direct = exact_flow_lyapunov(l, &x0, s + t).unwrap();
        let composed = exact_flow_lyapunov(l, &exact_flow_lyapunov(l, &x0, s).unwrap(), t).unwrap();
        assert!((direct - &composed).norm() <= 1e-10 * composed.norm());
    }

    #[test]
    fn reference_dispatches_to_closed_form() {
        let (f, x0) = small_lyapunov(6);
        let VectorField::Lyapunov(l) = &f else { unreachable!() };
        let a = reference_flow(&f, &x0, 0.2, &FlowOptions::default()).unwrap();
        let b = exact_flow_lyapunov(l, &x0, 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rk4_reference_matches_closed_form() {
        let (f, x0) = small_lyapunov(6);
        let a = reference_flow(&f, &x0, 0.2, &FlowOptions::default()).unwrap();
        let opts = FlowOptions::default().with_method(FlowMethod::DenseReference);
        let b = reference_flow(&f, &x0, 0.2, &opts).unwrap();
        assert!((a - &b).norm() < 1e-8 * b.norm());
    }

    #[test]
    fn generalized_sylvester_matches_kronecker_exponential() {
        let (m, p) = (10, 4);
        let mut g = rng::seeded(31);
        let sym = |a: Mat| (&a + a.transpose()) * 0.5;
        let a0 = sym(rng::gaussian(&mut g, m, m)) + Mat::identity(m, m) * 4.0;
        let a1 = sym(rng::gaussian(&mut g, m, m));
        let c1 = vec![0.0, 0.3, 0.6, 1.0];
        let b = nalgebra::DVector::from_iterator(m, rng::gaussian(&mut g, m, 1).iter().copied());
        let gs = GeneralizedSylvester::new(a0.clone(), a1.clone(), c1.clone(), b.clone()).unwrap();
        let f = VectorField::GeneralizedSylvester(gs);
        let y0 = rng::gaussian(&mut g, m, p);
        let t = 0.3;

        // vec(Y)' = M vec(Y) + vec(b 1^T), M = -(I (x) A0) - (C1 (x) A1);
        // augmented system exponential via a Taylor series with scaling
        let big = -Mat::identity(p, p).kronecker(&a0) - dense::diag(&c1).kronecker(&a1);
        let mp = m * p;
        let mut aug = Mat::zeros(mp + 1, mp + 1);
        aug.view_mut((0, 0), (mp, mp)).copy_from(&big);
        for j in 0..p {
            for i in 0..m {
                aug[(j * m + i, mp)] = b[i];
            }
        }
        let expm = taylor_expm(&(aug * t));
        let mut z0 = nalgebra::DVector::zeros(mp + 1);
        for j in 0..p {
            for i in 0..m {
                z0[j * m + i] = y0[(i, j)];
            }
        }
        z0[mp] = 1.0;
        let z = expm * z0;
        let oracle = Mat::from_fn(m, p, |i, j| z[j * m + i]);

        let exact = reference_flow(&f, &y0, t, &FlowOptions::default()).unwrap();
        assert!((&exact - &oracle).norm() < 1e-8 * oracle.norm());
        let rk = reference_flow(&f, &y0, t, &FlowOptions::default().with_method(FlowMethod::DenseReference))
            .unwrap();
        assert!((&rk - &oracle).norm() < 1e-8 * oracle.norm());
    }

    fn taylor_expm(a: &Mat) -> Mat {
        let norm = a.norm();
        let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
        let scaled = a / 2f64.powi(squarings as i32);
        let n = a.nrows();
        let mut term = Mat::identity(n, n);
        let mut sum = Mat::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn riccati_self_convergence() {
        let f = problems::build_riccati_problem(20, 3).unwrap();
        let x0 = Mat::zeros(20, 20);
        let opts = FlowOptions::default().with_rtol(1e-9);
        let t = 0.05;
        let rho = f.stiffness_bound(&x0);
        let n = stable_steps(t, rho) * 4;
        let a = rk4_fixed(&|x: &Mat| f.eval(x), &x0, t, n).unwrap();
        let b = rk4_fixed(&|x: &Mat| f.eval(x), &x0, t, 2 * n).unwrap();
        assert!((&a - &b).norm() < 10.0 * opts.rtol * b.norm());
        let r = reference_flow(&f, &x0, t, &opts).unwrap();
        assert!((&r - &b).norm() < 10.0 * opts.rtol * b.norm());
        // symmetric data stays symmetric
        assert!((&r - r.transpose()).norm() < 1e-10 * r.norm());
    }

    #[test]
    fn dlra_exact_for_scalar_field() {
        let m = 12;
        let a = -0.7;
        let f = VectorField::AffineSylvester(AffineSylvester::scalar(a, m, m));
        let mut g = rng::seeded(3);
        let y0 = LowRankMatrix::from_dense(&rng::gaussian(&mut g, m, m)).unwrap().truncate(4).unwrap();
        let h = 0.4;
        let y = dlra_flow(&f, &y0, h, 4, &FlowOptions::default().with_substeps(3)).unwrap();
        let expect = y0.to_dense() * (a * h).exp();
        assert!((y.to_dense() - &expect).norm() < 1e-10 * expect.norm());
        assert_eq!(y.rank(), 4);
        assert!(y.orthonormality_defect() < 1e-10);
        let traj = vec![y0.to_dense(), y.to_dense()];
        assert!(measure_epsilon(&f, &traj, 4).unwrap() < 1e-12);
    }

    #[test]
    fn dlra_full_rank_is_the_ode() {
        let m = 6;
        let (f, x0) = small_lyapunov(m);
        let y0 = LowRankMatrix::from_dense(&x0).unwrap();
        let h = 0.05;
        let opts = FlowOptions::default().with_substeps(64);
        let y = dlra_flow(&f, &y0, h, m, &opts).unwrap();
        let x = reference_flow(&f, &x0, h, &opts).unwrap();
        assert!((y.to_dense() - &x).norm() < 1e-8 * x.norm(), "{}", (y.to_dense() - &x).norm());
        assert!(measure_epsilon(&f, &[x0, x], m).unwrap() < 1e-10);
    }

    #[test]
    fn closed_form_and_rk_substeps_agree() {
        let m = 10;
        let (f, x0) = small_lyapunov(m);
        let y0 = LowRankMatrix::from_dense(&x0).unwrap().truncate(4).unwrap();
        let base = FlowOptions::default().with_substeps(4).with_rtol(1e-12);
        let a = dlra_flow(&f, &y0, 0.05, 4, &base).unwrap().to_dense();
        let b = dlra_flow(&f, &y0, 0.05, 4, &base.with_method(FlowMethod::ProjectorSplitting2))
            .unwrap()
            .to_dense();
        assert!((&a - &b).norm() < 1e-9 * a.norm(), "{}", (&a - &b).norm() / a.norm());
    }

    #[test]
    fn rk4_gives_up_on_blow_up() {
        // y' = y^2, y(0) = 1 blows up at t = 1
        let f = |y: &Mat| Ok(y.component_mul(y));
        let y0 = Mat::from_element(1, 1, 1.0);
        let err = rk4_converged(&f, &y0, 2.0, 4, &FlowOptions::default()).unwrap_err();
        let Error::Accuracy { steps, .. } = err else { panic!("{err:?}") };
        assert!(steps <= 4 << (STALL_DOUBLINGS + 1), "{steps}");
        let ok = rk4_converged(&f, &y0, 0.5, 4, &FlowOptions::default()).unwrap();
        assert!((ok[(0, 0)] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn dlra_rejects_rank_mismatch() {
        let (f, x0) = small_lyapunov(6);
        let y0 = LowRankMatrix::from_dense(&x0).unwrap().truncate(3).unwrap();
        assert!(dlra_flow(&f, &y0, 0.1, 4, &FlowOptions::default()).is_err());
        assert!(dlra_flow(&f, &y0, 0.0, 3, &FlowOptions::default()).is_err());
    }

    #[test]
    fn epsilon_vanishes_at_full_rank() {
        let (f, x0) = small_lyapunov(6);
        assert!(measure_epsilon(&f, &[x0], 6).unwrap() < 1e-10);
        assert!(measure_epsilon(&f, &[], 6).is_err());
    }
}
