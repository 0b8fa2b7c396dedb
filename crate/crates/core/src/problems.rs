//! Vector fields `F(X)` of the matrix ODEs, their spatial discretizations and
//! seeded initial data.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::dense::{self, Mat, SymEigen};
use crate::error::{dims, param, Error, Result};
use crate::integrators::{self, FlowOptions};
use crate::lowrank::LowRankMatrix;
use crate::rng;

/// Differential Lyapunov field `F(X) = A X + X A + C C^T` with `A` symmetric
/// negative definite.
#[derive(Debug, Clone)]
pub struct Lyapunov {
    a: Mat,
    c: Mat,
    source: Mat,
    eig: SymEigen,
    // C C^T expressed in the eigenbasis of A
    source_eig: Mat,
}

impl Lyapunov {
    pub fn new(a: Mat, c: Mat) -> Result<Self> {
        let m = a.nrows();
        if a.ncols() != m || c.nrows() != m {
            return Err(dims(
                "lyapunov",
                format!("A {m}x{m}, C {m}xk"),
                format!("A {:?}, C {:?}", a.shape(), c.shape()),
            ));
        }
        if !(dense::all_finite(&a) && dense::all_finite(&c)) {
            return Err(Error::NonFinite("lyapunov operands"));
        }
        let asym = (&a - a.transpose()).norm();
        if asym > 1e-12 * a.norm() {
            return Err(param("A", format!("must be symmetric (||A - A^T|| = {asym:e})")));
        }
        let eig = dense::sym_eigen(&a);
        let lmax = *eig.lambda.last().expect("non-empty");
        if !(lmax < 0.0) {
            return Err(param("A", format!("must be negative definite (lambda_max = {lmax:e})")));
        }
        let source = &c * c.transpose();
        let c_eig = eig.q.transpose() * &c;
        let source_eig = &c_eig * c_eig.transpose();
        Ok(Self {
            a,
            c,
            source,
            eig,
            source_eig,
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    /// `C C^T`.
    pub fn source(&self) -> &Mat {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Eigenvectors (columns) and ascending eigenvalues of `A`.
    pub fn eigen(&self) -> &SymEigen {
        &self.eig
    }

    pub(crate) fn source_eig(&self) -> &Mat {
        &self.source_eig
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eig.lambda.last().expect("non-empty")
    }

    /// Spectral condition number `||A||_2 ||A^{-1}||_2`.
    pub fn condition_number(&self) -> f64 {
        let lo = self.eig.lambda[0].abs();
        let hi = self.lambda_max().abs();
        lo.max(hi) / lo.min(hi)
    }

    /// The stationary point `-L^{-1}(C C^T)` where `L(X) = A X + X A`.
    pub fn stationary(&self) -> Result<Mat> {
        let m = self.dim();
        let lam = &self.eig.lambda;
        let mut xt = Mat::zeros(m, m);
        for j in 0..m {
            for i in 0..m {
                let s = lam[i] + lam[j];
                if s == 0.0 {
                    return Err(Error::SingularOperator(format!(
                        "lambda_{i} + lambda_{j} = 0"
                    )));
                }
                xt[(i, j)] = -self.source_eig[(i, j)] / s;
            }
        }
        Ok(&self.eig.q * xt * self.eig.q.transpose())
    }
}

/// `F(Y) = -A0 Y - A1 Y C1 + b 1^T` with diagonal `C1 = diag(c)`. The state
/// is `m x p`, one column per parameter value.
#[derive(Debug, Clone)]
pub struct GeneralizedSylvester {
    a0: Mat,
    a1: Mat,
    c1: Vec<f64>,
    b: DVector<f64>,
}

impl GeneralizedSylvester {
    pub fn new(a0: Mat, a1: Mat, c1: Vec<f64>, b: DVector<f64>) -> Result<Self> {
        let m = a0.nrows();
        if a0.shape() != (m, m) || a1.shape() != (m, m) || b.len() != m || c1.is_empty() {
            return Err(dims(
                "generalized_sylvester",
                format!("A0, A1 {m}x{m}, b {m}, p >= 1"),
                format!("A0 {:?}, A1 {:?}, b {}, p {}", a0.shape(), a1.shape(), b.len(), c1.len()),
            ));
        }
        Ok(Self { a0, a1, c1, b })
    }

    pub fn a0(&self) -> &Mat {
        &self.a0
    }

    pub fn a1(&self) -> &Mat {
        &self.a1
    }

    pub fn c1(&self) -> &[f64] {
        &self.c1
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn is_symmetric(&self) -> bool {
        let tol = 1e-12;
        (&self.a0 - self.a0.transpose()).norm() <= tol * self.a0.norm().max(1.0)
            && (&self.a1 - self.a1.transpose()).norm() <= tol * self.a1.norm().max(1.0)
    }

    /// `A0 + c A1`, the operator acting on the column with parameter `c`.
    pub fn column_operator(&self, c: f64) -> Mat {
        &self.a0 + &self.a1 * c
    }
}

/// General affine Sylvester field `F(X) = L X + X R + B`.
#[derive(Debug, Clone)]
pub struct AffineSylvester {
    left: Mat,
    right: Mat,
    source: Mat,
}

impl AffineSylvester {
    pub fn new(left: Mat, right: Mat, source: Mat) -> Result<Self> {
        let (m, n) = source.shape();
        if left.shape() != (m, m) || right.shape() != (n, n) {
            return Err(dims(
                "affine_sylvester",
                format!("L {m}x{m}, R {n}x{n}"),
                format!("L {:?}, R {:?}", left.shape(), right.shape()),
            ));
        }
        Ok(Self {
            left,
            right,
            source,
        })
    }

    /// `F(X) = a X` on `m x n` matrices.
    pub fn scalar(a: f64, m: usize, n: usize) -> Self {
        Self {
            left: Mat::identity(m, m) * a,
            right: Mat::zeros(n, n),
            source: Mat::zeros(m, n),
        }
    }

    pub fn left(&self) -> &Mat {
        &self.left
    }

    pub fn right(&self) -> &Mat {
        &self.right
    }

    pub fn source(&self) -> &Mat {
        &self.source
    }
}

/// Riccati field `F(X) = A^T X + X A + C^T C - X X` (`S = I`).
#[derive(Debug, Clone)]
pub struct Riccati {
    a: Mat,
    c: Mat,
    ctc: Mat,
}

impl Riccati {
    pub fn new(a: Mat, c: Mat) -> Result<Self> {
        let m = a.nrows();
        if a.ncols() != m || c.ncols() != m {
            return Err(dims(
                "riccati",
                format!("A {m}x{m}, C kx{m}"),
                format!("A {:?}, C {:?}", a.shape(), c.shape()),
            ));
        }
        let ctc = c.transpose() * &c;
        Ok(Self { a, c, ctc })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn ctc(&self) -> &Mat {
        &self.ctc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Lyapunov,
    GeneralizedSylvester,
    AffineSylvester,
    Riccati,
}

/// Autonomous vector field `F` of `dX/dt = F(X)`.
#[derive(Debug, Clone)]
pub enum VectorField {
    Lyapunov(Lyapunov),
    GeneralizedSylvester(GeneralizedSylvester),
    AffineSylvester(AffineSylvester),
    Riccati(Riccati),
}

impl VectorField {
    pub fn kind(&self) -> FieldKind {
        match self {
            VectorField::Lyapunov(_) => FieldKind::Lyapunov,
            VectorField::GeneralizedSylvester(_) => FieldKind::GeneralizedSylvester,
            VectorField::AffineSylvester(_) => FieldKind::AffineSylvester,
            VectorField::Riccati(_) => FieldKind::Riccati,
        }
    }

    pub fn is_affine(&self) -> bool {
        !matches!(self, VectorField::Riccati(_))
    }

    /// Shape `(rows, cols)` of the state matrix.
    pub fn state_shape(&self) -> (usize, usize) {
        match self {
            VectorField::Lyapunov(f) => (f.dim(), f.dim()),
            VectorField::GeneralizedSylvester(f) => (f.a0.nrows(), f.c1.len()),
            VectorField::AffineSylvester(f) => f.source.shape(),
            VectorField::Riccati(f) => (f.a.nrows(), f.a.nrows()),
        }
    }

    pub fn eval(&self, x: &Mat) -> Result<Mat> {
        let shape = self.state_shape();
        if x.shape() != shape {
            return Err(dims(
                "eval_field",
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
        Ok(match self {
            VectorField::Lyapunov(f) => {
                let mut out = &f.a * x;
                out += x * &f.a;
                out += &f.source;
                out
            }
            VectorField::GeneralizedSylvester(f) => {
                let mut out = -(&f.a0 * x);
                let mut xc = x.clone();
                for (j, c) in f.c1.iter().enumerate() {
                    xc.column_mut(j).scale_mut(*c);
                }
                out -= &f.a1 * xc;
                for mut col in out.column_iter_mut() {
                    col += &f.b;
                }
                out
            }
            VectorField::AffineSylvester(f) => {
                let mut out = &f.left * x;
                out += x * &f.right;
                out += &f.source;
                out
            }
            VectorField::Riccati(f) => {
                let mut out = f.a.transpose() * x;
                out += x * &f.a;
                out += &f.ctc;
                out -= x * x;
                out
            }
        })
    }

    pub fn eval_lowrank(&self, y: &LowRankMatrix) -> Result<Mat> {
        self.eval(&y.to_dense())
    }

    /// One-sided Lipschitz constant `l` with
    /// `<X - Y, F(X) - F(Y)> <= l ||X - Y||^2`, available for affine fields.
    /// It equals `lambda_max` of the symmetric part of the vectorized
    /// linear operator.
    pub fn one_sided_lipschitz(&self) -> Result<f64> {
        match self {
            VectorField::Lyapunov(f) => Ok(2.0 * f.lambda_max()),
            VectorField::GeneralizedSylvester(f) => {
                // vec form is block diagonal with blocks -(A0 + c_j A1)
                let mut best = f64::NEG_INFINITY;
                for &c in &f.c1 {
                    let block = -f.column_operator(c);
                    let lam = dense::sym_eigen(&block).lambda;
                    best = best.max(*lam.last().expect("non-empty"));
                }
                Ok(best)
            }
            VectorField::AffineSylvester(f) => {
                // sym(I (x) L + R^T (x) I) = I (x) sym(L) + sym(R) (x) I
                let l = dense::sym_eigen(&f.left).lambda;
                let r = dense::sym_eigen(&f.right).lambda;
                Ok(l.last().expect("non-empty") + r.last().expect("non-empty"))
            }
            VectorField::Riccati(_) => Err(Error::NotAffine("riccati")),
        }
    }

    /// Upper bound on the spectral radius of the Jacobian of `F` at `x`,
    /// used to pick stable explicit step sizes.
    pub fn stiffness_bound(&self, x: &Mat) -> f64 {
        let inf = |a: &Mat| {
            a.row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        match self {
            VectorField::Lyapunov(f) => 2.0 * inf(&f.a),
            VectorField::GeneralizedSylvester(f) => {
                let cmax = f.c1.iter().fold(0.0f64, |a, c| a.max(c.abs()));
                inf(&f.a0) + cmax * inf(&f.a1)
            }
            VectorField::AffineSylvester(f) => inf(&f.left) + inf(&f.right.transpose()),
            VectorField::Riccati(f) => 2.0 * inf(&f.a) + 2.0 * x.norm(),
        }
    }
}

/// Standard centered-difference Laplacian with zero Dirichlet boundary
/// conditions on `n` interior points of `[a, b]`.
pub fn build_laplacian_1d(n: usize, domain: (f64, f64)) -> Result<Mat> {
    if n < 2 {
        return Err(param("n", "laplacian needs at least 2 grid points"));
    }
    let dx = (domain.1 - domain.0) / (n as f64 + 1.0);
    let w = 1.0 / (dx * dx);
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            -2.0 * w
        } else if i.abs_diff(j) == 1 {
            w
        } else {
            0.0
        }
    }))
}

/// Finite-volume discretization of `d/dx (alpha(x) d/dx) - lambda I` on
/// `[0, 1]` with grid `x_j = j / (m + 1)` and zero Dirichlet ghost values.
/// Face coefficients use the midpoint values `alpha(x_{j +- 1/2})`.
pub fn build_diffusion_fv(m: usize, alpha: impl Fn(f64) -> f64, lambda: f64) -> Result<Mat> {
    if m < 2 {
        return Err(param("m", "diffusion operator needs at least 2 grid points"));
    }
    let dx = 1.0 / (m as f64 + 1.0);
    let w = 1.0 / (dx * dx);
    // face i sits between nodes i and i+1, i = 0..=m
    let faces: Vec<f64> = (0..=m).map(|i| alpha((i as f64 + 0.5) * dx) * w).collect();
    let mut d = Mat::zeros(m, m);
    for j in 0..m {
        // node j (0-based) is x_{j+1}; left face index j, right face j+1
        let (left, right) = (faces[j], faces[j + 1]);
        d[(j, j)] = -(left + right) - lambda;
        if j > 0 {
            d[(j, j - 1)] = left;
        }
        if j + 1 < m {
            d[(j, j + 1)] = right;
        }
    }
    Ok(d)
}

/// Conductivity `alpha(x) = 2 + 2 cos(2 pi x)` of the Riccati diffusion.
pub fn riccati_conductivity(x: f64) -> f64 {
    2.0 + 2.0 * (2.0 * PI * x).cos()
}

pub fn build_riccati_diffusion(m: usize, lambda: f64) -> Result<Mat> {
    build_diffusion_fv(m, riccati_conductivity, lambda)
}

/// Output matrix `C` (`k x m`): a constant row, then `(k-1)/2` rows
/// `sqrt(2) cos(2 pi i x)` and `(k-1)/2` rows `sqrt(2) sin(2 pi i x)`,
/// `i = 1..(k-1)/2`, sampled at `x_j = j / (m + 1)`.
pub fn build_riccati_c(m: usize, k: usize) -> Result<Mat> {
    if k % 2 == 0 {
        return Err(param("k", "row count must be odd"));
    }
    if k > m {
        return Err(param("k", format!("row count {k} exceeds grid size {m}")));
    }
    let half = (k - 1) / 2;
    let s2 = 2f64.sqrt();
    let x = |j: usize| (j as f64 + 1.0) / (m as f64 + 1.0);
    Ok(Mat::from_fn(k, m, |row, j| {
        if row == 0 {
            1.0
        } else if row <= half {
            s2 * (2.0 * PI * row as f64 * x(j)).cos()
        } else {
            s2 * (2.0 * PI * (row - half) as f64 * x(j)).sin()
        }
    }))
}

/// Singular value law of a seeded random matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Decay {
    /// Explicit singular values.
    Explicit(Vec<f64>),
    /// `sigma_i = 10^{-c (i-1)}`, `i = 1..=rank`.
    Geometric { c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub decay: Decay,
    /// Number of singular values; ignored for explicit lists.
    pub rank: usize,
    pub seed: u64,
}

impl SpectrumSpec {
    pub fn geometric(c: f64, rank: usize, seed: u64) -> Self {
        Self {
            decay: Decay::Geometric { c },
            rank,
            seed,
        }
    }

    pub fn sigma(&self) -> Vec<f64> {
        match &self.decay {
            Decay::Explicit(v) => v.clone(),
            Decay::Geometric { c } => (0..self.rank).map(|i| 10f64.powf(-c * i as f64)).collect(),
        }
    }
}

/// `Q1 diag(sigma) Q2^T` with seeded Haar-distributed orthonormal factors.
/// Spectra longer than `m` are cut at `m`.
pub fn random_with_spectrum(spec: &SpectrumSpec, m: usize) -> Mat {
    let mut sigma = spec.sigma();
    sigma.truncate(m);
    let k = sigma.len();
    let mut g = rng::seeded(spec.seed);
    let q1 = rng::haar_orthonormal(&mut g, m, k);
    let q2 = rng::haar_orthonormal(&mut g, m, k);
    q1 * dense::diag(&sigma) * q2.transpose()
}

/// Solution at time `t_warm` of `dX/dt = F(X)` started from `x_init`.
pub fn warm_start(f: &VectorField, x_init: &Mat, t_warm: f64, opts: &FlowOptions) -> Result<Mat> {
    if !(t_warm >= 0.0) {
        return Err(param("t_warm", "must be non-negative"));
    }
    if t_warm == 0.0 {
        return Ok(x_init.clone());
    }
    integrators::reference_flow(f, x_init, t_warm, opts)
}

/// Desk-scale analog of the parametric cookie heat problem: `A0` is the
/// positive definite Dirichlet Laplacian on `[0, 1]`, `A1` the diffusion
/// operator whose conductivity is the indicator of the middle third of the
/// domain, `C1 = diag(0, 1, ..., p-1)` and `b = 1`.
pub fn build_cookie_synthetic(m: usize, p: usize) -> Result<VectorField> {
    if m < 4 {
        return Err(param("m", "cookie problem needs m >= 4"));
    }
    if p < 1 {
        return Err(param("p", "at least one parameter"));
    }
    let a0 = -build_laplacian_1d(m, (0.0, 1.0))?;
    let indicator = |x: f64| if (1.0 / 3.0..=2.0 / 3.0).contains(&x) { 1.0 } else { 0.0 };
    let a1 = -build_diffusion_fv(m, indicator, 0.0)?;
    let c1 = (0..p).map(|j| j as f64).collect();
    let b = DVector::from_element(m, 1.0);
    Ok(VectorField::GeneralizedSylvester(GeneralizedSylvester::new(
        a0, a1, c1, b,
    )?))
}

/// The cookie field assembled from external matrices (for example loaded
/// with [`crate::mmio::load_matrix_market`]).
pub fn build_cookie_from(a0: Mat, a1: Mat, c1: Vec<f64>) -> Result<VectorField> {
    let m = a0.nrows();
    Ok(VectorField::GeneralizedSylvester(GeneralizedSylvester::new(
        a0,
        a1,
        c1,
        DVector::from_element(m, 1.0),
    )?))
}

/// Lyapunov problem on the `n`-point Laplacian of `[-1, 1]` with a source
/// `C` of prescribed spectrum.
pub fn build_lyapunov_heat(n: usize, c_spectrum: &SpectrumSpec) -> Result<VectorField> {
    let a = build_laplacian_1d(n, (-1.0, 1.0))?;
    let c = random_with_spectrum(c_spectrum, n);
    Ok(VectorField::Lyapunov(Lyapunov::new(a, c)?))
}

/// Riccati problem with diffusion `A` (`lambda = 1`) and `k` output rows.
pub fn build_riccati_problem(m: usize, k: usize) -> Result<VectorField> {
    let a = build_riccati_diffusion(m, 1.0)?;
    let c = build_riccati_c(m, k)?;
    Ok(VectorField::Riccati(Riccati::new(a, c)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lyap_1d() -> VectorField {
        VectorField::Lyapunov(
            Lyapunov::new(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 1.0)).unwrap(),
        )
    }

    #[test]
    fn riccati_at_zero_is_ctc() {
        let f = build_riccati_problem(8, 3).unwrap();
        let VectorField::Riccati(r) = &f else { unreachable!() };
        let out = f.eval(&Mat::zeros(8, 8)).unwrap();
        assert_eq!(out, r.c().transpose() * r.c());
        assert!(!f.is_affine());
    }

    #[test]
    fn scalar_lyapunov() {
        let f = lyap_1d();
        for x in [-1.5, 0.0, 0.25, 3.0] {
            let out = f.eval(&Mat::from_element(1, 1, x)).unwrap();
            assert_eq!(out[(0, 0)], -2.0 * x + 1.0);
        }
        assert!(f.eval(&Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn lyapunov_rejects_bad_a() {
        let mut a = build_laplacian_1d(4, (-1.0, 1.0)).unwrap();
        assert!(Lyapunov::new(-a.clone(), Mat::zeros(4, 1)).is_err());
        a[(0, 1)] += 1.0;
        assert!(Lyapunov::new(a, Mat::zeros(4, 1)).is_err());
    }

    #[test]
    fn generalized_sylvester_columnwise() {
        let (m, p) = (12, 5);
        let mut g = rng::seeded(4);
        let a0 = rng::gaussian(&mut g, m, m);
        let a1 = rng::gaussian(&mut g, m, m);
        let c1: Vec<f64> = (0..p).map(|j| 0.5 * j as f64 - 1.0).collect();
        let b = DVector::from_iterator(m, rng::gaussian(&mut g, m, 1).iter().copied());
        let f = VectorField::GeneralizedSylvester(
            GeneralizedSylvester::new(a0.clone(), a1.clone(), c1.clone(), b.clone()).unwrap(),
        );
        let y = rng::gaussian(&mut g, m, p);
        let out = f.eval(&y).unwrap();
        for j in 0..p {
            let yj = y.column(j);
            let expect = -(&a0 * yj) - (&a1 * yj) * c1[j] + &b;
            assert!((out.column(j) - expect).norm() < 1e-12 * out.norm());
        }
    }

    #[test]
    fn laplacian_small() {
        let a = build_laplacian_1d(2, (-1.0, 1.0)).unwrap();
        let expect = Mat::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]) * (9.0 / 4.0);
        assert!((a - expect).norm() < 1e-14);
        assert!(build_laplacian_1d(1, (0.0, 1.0)).is_err());
    }

    #[test]
    fn laplacian_eigenvalues() {
        let n = 10;
        let a = build_laplacian_1d(n, (-1.0, 1.0)).unwrap();
        let dx = 2.0 / (n as f64 + 1.0);
        let mut analytic: Vec<f64> = (1..=n)
            .map(|j| {
                let s = (j as f64 * PI / (2.0 * (n as f64 + 1.0))).sin();
                -(4.0 / (dx * dx)) * s * s
            })
            .collect();
        analytic.sort_by(f64::total_cmp);
        let numeric = dense::sym_eigen(&a).lambda;
        for (x, y) in analytic.iter().zip(&numeric) {
            assert!((x - y).abs() < 1e-12 * x.abs());
        }
    }

    #[test]
    fn laplacian_100_negative_definite() {
        let a = build_laplacian_1d(100, (-1.0, 1.0)).unwrap();
        let f = Lyapunov::new(a, Mat::zeros(100, 1)).unwrap();
        let ell = 2.0 * f.lambda_max();
        assert!(ell < 0.0);
    }

    #[test]
    fn diffusion_constant_coefficient_is_laplacian() {
        let m = 9;
        let d = build_diffusion_fv(m, |_| 3.0, 0.0).unwrap();
        let lap = build_laplacian_1d(m, (0.0, 1.0)).unwrap() * 3.0;
        assert!((d - lap).norm() < 1e-10);
    }

    #[test]
    fn riccati_diffusion_symmetric_and_conservative() {
        let d = build_riccati_diffusion(50, 1.0).unwrap();
        assert_eq!(d, d.transpose());
        let d0 = build_riccati_diffusion(50, 0.0).unwrap();
        for j in 1..49 {
            let s: f64 = d0.row(j).iter().sum();
            assert!(s.abs() < 1e-9 * d0.row(j).norm(), "row {j}: {s}");
        }
        assert!(build_riccati_diffusion(1, 1.0).is_err());
    }

    #[test]
    fn riccati_c_rows() {
        let c1 = build_riccati_c(7, 1).unwrap();
        assert_eq!(c1, Mat::from_element(1, 7, 1.0));
        let c = build_riccati_c(4, 3).unwrap();
        let s2 = 2f64.sqrt();
        for j in 0..4 {
            let x = (j as f64 + 1.0) / 5.0;
            assert_eq!(c[(0, j)], 1.0);
            assert!((c[(1, j)] - s2 * (2.0 * PI * x).cos()).abs() < 1e-15);
            assert!((c[(2, j)] - s2 * (2.0 * PI * x).sin()).abs() < 1e-15);
        }
        assert!(build_riccati_c(10, 4).is_err());
        let c9 = build_riccati_c(100, 9).unwrap();
        let sv = dense::singular_values(&c9).unwrap();
        assert!(sv[8] > 1e-8 * sv[0]);
    }

    #[test]
    fn spectrum_generator() {
        let spec = SpectrumSpec {
            decay: Decay::Explicit(vec![1.0]),
            rank: 1,
            seed: 3,
        };
        let x = random_with_spectrum(&spec, 6);
        assert!((x.norm() - 1.0).abs() < 1e-14);
        assert_eq!(random_with_spectrum(&spec, 6), x);

        let spec = SpectrumSpec::geometric(1.0, 100, 9);
        let x = random_with_spectrum(&spec, 100);
        let sv = dense::singular_values(&x).unwrap();
        for (i, s) in sv.iter().enumerate() {
            assert!((s - 10f64.powi(-(i as i32))).abs() <= 1e-12, "sigma_{i}");
        }
    }

    #[test]
    fn cookie_structure() {
        let f = build_cookie_synthetic(12, 4).unwrap();
        assert!(f.is_affine());
        assert_eq!(f.state_shape(), (12, 4));
        let VectorField::GeneralizedSylvester(g) = &f else { unreachable!() };
        assert_eq!(g.c1(), &[0.0, 1.0, 2.0, 3.0]);
        assert!(g.is_symmetric());
        // A1 is supported on the middle third only
        assert_eq!(g.a1().row(0).norm(), 0.0);
        assert!(g.a1().row(6).norm() > 0.0);
        assert!(build_cookie_synthetic(3, 4).is_err());
        assert!(build_cookie_synthetic(8, 0).is_err());
    }

    #[test]
    fn cookie_single_parameter_is_heat() {
        let f = build_cookie_synthetic(10, 1).unwrap();
        let VectorField::GeneralizedSylvester(g) = &f else { unreachable!() };
        let mut gen = rng::seeded(2);
        let y = rng::gaussian(&mut gen, 10, 1);
        let expect = -(g.a0() * &y) + Mat::from_element(10, 1, 1.0);
        assert!((f.eval(&y).unwrap() - expect).norm() < 1e-10);
    }

    #[test]
    fn one_sided_lipschitz_matches_kronecker() {
        let (m, p) = (5, 3);
        let mut g = rng::seeded(8);
        let a0 = rng::gaussian(&mut g, m, m);
        let a1 = rng::gaussian(&mut g, m, m);
        let c1 = vec![0.0, 0.5, 2.0];
        let f = VectorField::GeneralizedSylvester(
            GeneralizedSylvester::new(a0.clone(), a1.clone(), c1.clone(), DVector::zeros(m))
                .unwrap(),
        );
        // M = -(I (x) A0) - (C1 (x) A1)
        let ip = Mat::identity(p, p);
        let big = -ip.kronecker(&a0) - dense::diag(&c1).kronecker(&a1);
        let sym = (&big + big.transpose()) * 0.5;
        let oracle = *dense::sym_eigen(&sym).lambda.last().unwrap();
        assert!((f.one_sided_lipschitz().unwrap() - oracle).abs() < 1e-10 * oracle.abs().max(1.0));
    }
}
