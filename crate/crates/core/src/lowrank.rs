//! Factored low-rank matrices `U * S * V^T`.
//!
//! `U` and `V` always have orthonormal columns. After truncation the core `S`
//! is diagonal with non-increasing entries; after [`LowRankMatrix::add`] it
//! is re-compressed to that form as well, so every operation costs
//! `O(m r^2 + r^3)`.

use crate::dense::{self, Mat};
use crate::error::{dims, param, Error, Result};

/// Tolerances checked by the low-rank arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Bound on `||U^T U - I||_F` and `||V^T V - I||_F`.
    pub orthonormality: f64,
    /// Relative dense round-trip accuracy.
    pub round_trip: f64,
}

pub const ORTHONORMALITY_TOL: f64 = 1e-10;
pub const ROUND_TRIP_TOL: f64 = 1e-12;

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orthonormality: ORTHONORMALITY_TOL,
            round_trip: ROUND_TRIP_TOL,
        }
    }
}

/// Non-increasing list of singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum(Vec<f64>);

impl SingularSpectrum {
    /// Sorts the input into non-increasing order and clamps negatives to 0.
    pub fn new(mut sigma: Vec<f64>) -> Self {
        for s in sigma.iter_mut() {
            *s = s.max(0.0);
        }
        sigma.sort_by(|a, b| b.total_cmp(a));
        Self(sigma)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sigma_i` with 1-based index; 0 beyond the stored length.
    pub fn sigma(&self, i: usize) -> f64 {
        assert!(i >= 1, "singular values are 1-indexed");
        self.0.get(i - 1).copied().unwrap_or(0.0)
    }

    /// `sqrt(sum_{i > r} sigma_i^2)`, the best rank-`r` approximation error.
    pub fn tail_norm(&self, r: usize) -> f64 {
        self.0.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Number of singular values strictly above `tau`.
    pub fn numerical_rank(&self, tau: f64) -> usize {
        self.0.iter().take_while(|&&s| s > tau).count()
    }

    /// First-order Lipschitz factor `sigma_q / (sigma_q - sigma_{q+1})` of
    /// the rank-`q` truncation. `None` when the gap closes.
    pub fn gap_factor(&self, q: usize) -> Option<f64> {
        let sq = self.sigma(q);
        let sq1 = self.sigma(q + 1);
        if sq - sq1 <= 0.0 {
            None
        } else {
            Some(sq / (sq - sq1))
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A matrix stored as `U * S * V^T` with orthonormal `U` (`rows x r`) and
/// `V` (`cols x r`). Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankMatrix {
    u: Mat,
    s: Mat,
    v: Mat,
}

impl LowRankMatrix {
    /// Assembles a matrix from factors. `u` and `v` must already be
    /// column-orthonormal.
    pub fn from_factors(u: Mat, s: Mat, v: Mat) -> Result<Self> {
        let r = u.ncols();
        if v.ncols() != r || s.shape() != (r, r) {
            return Err(dims(
                "from_factors",
                format!("S {r}x{r}, V with {r} columns"),
                format!("S {:?}, V with {} columns", s.shape(), v.ncols()),
            ));
        }
        if r > u.nrows() || r > v.nrows() {
            return Err(param("rank", format!("rank {r} exceeds dimensions")));
        }
        if !(dense::all_finite(&u) && dense::all_finite(&s) && dense::all_finite(&v)) {
            return Err(Error::NonFinite("low-rank factors"));
        }
        let tol = ORTHONORMALITY_TOL;
        if r > 0 && (dense::orthonormality_defect(&u) > tol || dense::orthonormality_defect(&v) > tol)
        {
            return Err(param("factors", "U and V must have orthonormal columns"));
        }
        Ok(Self { u, s, v })
    }

    /// Builds from factors whose orthonormality the caller guarantees.
    pub(crate) fn from_factors_unchecked(u: Mat, s: Mat, v: Mat) -> Self {
        debug_assert_eq!(u.ncols(), v.ncols());
        debug_assert_eq!(s.shape(), (u.ncols(), u.ncols()));
        Self { u, s, v }
    }

    /// The rank-0 zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            u: Mat::zeros(rows, 0),
            s: Mat::zeros(0, 0),
            v: Mat::zeros(cols, 0),
        }
    }

    /// Full SVD factorization of a dense matrix. No truncation is applied.
    pub fn from_dense(x: &Mat) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(dims("from_dense", "non-empty matrix", format!("{:?}", x.shape())));
        }
        if !dense::all_finite(x) {
            return Err(Error::NonFinite("from_dense input"));
        }
        let svd = dense::svd(x)?;
        Ok(Self {
            u: svd.u,
            s: dense::diag(&svd.sigma),
            v: svd.v,
        })
    }

    /// Like [`from_dense`](Self::from_dense) but insists on a square input.
    pub fn from_dense_square(x: &Mat) -> Result<Self> {
        if x.nrows() != x.ncols() {
            return Err(dims("from_dense", "square matrix", format!("{:?}", x.shape())));
        }
        Self::from_dense(x)
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// Current rank bound (number of factor columns).
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn s(&self) -> &Mat {
        &self.s
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    pub fn into_factors(self) -> (Mat, Mat, Mat) {
        (self.u, self.s, self.v)
    }

    pub fn to_dense(&self) -> Mat {
        if self.rank() == 0 {
            return Mat::zeros(self.rows(), self.cols());
        }
        &self.u * &self.s * self.v.transpose()
    }

    /// Frobenius norm, exact for orthonormal factors.
    pub fn norm(&self) -> f64 {
        self.s.norm()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            u: self.u.clone(),
            s: &self.s * c,
            v: self.v.clone(),
        }
    }

    /// Largest orthonormality defect of the two factors.
    pub fn orthonormality_defect(&self) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        dense::orthonormality_defect(&self.u).max(dense::orthonormality_defect(&self.v))
    }

    pub fn check_invariants(&self, tol: &Tolerances) -> bool {
        self.orthonormality_defect() <= tol.orthonormality && self.rank() <= self.rows().min(self.cols())
    }

    pub fn singular_values(&self) -> SingularSpectrum {
        if self.rank() == 0 {
            return SingularSpectrum(Vec::new());
        }
        if let Some(d) = self.sorted_diagonal() {
            return SingularSpectrum(d);
        }
        SingularSpectrum::new(dense::singular_values(&self.s).unwrap_or_default())
    }

    /// Diagonal of `S` when `S` is already diagonal, non-negative and sorted.
    fn sorted_diagonal(&self) -> Option<Vec<f64>> {
        let r = self.rank();
        for j in 0..r {
            for i in 0..r {
                if i != j && self.s[(i, j)] != 0.0 {
                    return None;
                }
            }
        }
        let d: Vec<f64> = (0..r).map(|i| self.s[(i, i)]).collect();
        let ok = d.iter().all(|&x| x >= 0.0) && d.windows(2).all(|w| w[0] >= w[1]);
        ok.then_some(d)
    }

    /// Rotates the factors so that `S` is diagonal and sorted.
    pub fn compress(&self) -> Self {
        if self.rank() == 0 || self.sorted_diagonal().is_some() {
            return self.clone();
        }
        let svd = dense::svd(&self.s).expect("finite core");
        Self {
            u: &self.u * svd.u,
            s: dense::diag(&svd.sigma),
            v: &self.v * svd.v,
        }
    }

    /// Best rank-`r` approximation in the Frobenius norm (truncated SVD).
    /// The result has rank bound `min(r, self.rank())`.
    pub fn truncate(&self, r: usize) -> Result<Self> {
        if r < 1 {
            return Err(param("r", "truncation rank must be at least 1"));
        }
        let c = self.compress();
        if r >= c.rank() {
            return Ok(c);
        }
        Ok(Self {
            u: c.u.columns(0, r).into_owned(),
            s: c.s.view((0, 0), (r, r)).into_owned(),
            v: c.v.columns(0, r).into_owned(),
        })
    }

    /// Rank chosen by threshold: the smallest `q` with `sigma_{q+1} <= tau`,
    /// never below 1.
    pub fn tolerance_rank(&self, tau: f64) -> Result<usize> {
        if !(tau > 0.0) {
            return Err(param("tau", "tolerance must be positive"));
        }
        let sigma = self.singular_values();
        Ok(sigma.numerical_rank(tau).clamp(1, self.rank().max(1)))
    }

    /// Rank-adaptive truncation at tolerance `tau`; see
    /// [`tolerance_rank`](Self::tolerance_rank).
    pub fn truncate_tol(&self, tau: f64) -> Result<Self> {
        let q = self.tolerance_rank(tau)?;
        if self.rank() == 0 {
            return Ok(self.clone());
        }
        self.truncate(q)
    }

    /// `c1 * self + c2 * other` without truncation. The rank bound of the
    /// result is `min(r1 + r2, rows, cols)`.
    pub fn add(&self, other: &Self, c1: f64, c2: f64) -> Result<Self> {
        Self::linear_combination(&[(c1, self), (c2, other)])
    }

    /// Exact linear combination `sum_i c_i * Y_i`. Factors are concatenated,
    /// re-orthonormalized by compact QR and the stacked core is diagonalized
    /// with a small SVD.
    pub fn linear_combination(terms: &[(f64, &Self)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| param("terms", "empty linear combination"))?
            .1;
        let (rows, cols) = (first.rows(), first.cols());
        for (_, y) in terms {
            if y.rows() != rows || y.cols() != cols {
                return Err(dims(
                    "add",
                    format!("{rows}x{cols}"),
                    format!("{}x{}", y.rows(), y.cols()),
                ));
            }
        }
        let active: Vec<(f64, &Self)> = terms.iter().copied().filter(|(_, y)| y.rank() > 0).collect();
        let total: usize = active.iter().map(|(_, y)| y.rank()).sum();
        if total == 0 {
            return Ok(Self::zeros(rows, cols));
        }
        let mut uc = Mat::zeros(rows, total);
        let mut vc = Mat::zeros(cols, total);
        let mut core = Mat::zeros(total, total);
        let mut off = 0;
        for (c, y) in &active {
            let r = y.rank();
            uc.columns_mut(off, r).copy_from(&y.u);
            vc.columns_mut(off, r).copy_from(&y.v);
            core.view_mut((off, off), (r, r)).copy_from(&(&y.s * *c));
            off += r;
        }
        let (qu, ru) = dense::thin_qr(&uc);
        let (qv, rv) = dense::thin_qr(&vc);
        let small = &ru * core * rv.transpose();
        let svd = dense::svd(&small)?;
        let k = svd.sigma.len();
        let u = qu * svd.u;
        let v = qv * svd.v;
        debug_assert_eq!(u.ncols(), k);
        Ok(Self {
            u,
            s: dense::diag(&svd.sigma),
            v,
        })
    }

    /// Orthogonal projection of `z` onto the tangent space of the
    /// fixed-rank manifold at `self`:
    /// `U U^T Z + Z V V^T - U U^T Z V V^T`.
    pub fn tangent_project(&self, z: &Mat) -> Result<Mat> {
        if z.shape() != (self.rows(), self.cols()) {
            return Err(dims(
                "tangent_project",
                format!("{}x{}", self.rows(), self.cols()),
                format!("{:?}", z.shape()),
            ));
        }
        let ut_z = self.u.transpose() * z;
        let zv = z * &self.v;
        let ut_z_v = &ut_z * &self.v;
        let mut p = &self.u * &ut_z;
        p += &zv * self.v.transpose();
        p -= &self.u * ut_z_v * self.v.transpose();
        Ok(p)
    }
}
