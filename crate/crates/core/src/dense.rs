//! Small dense helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Thin SVD `a = u * diag(sigma) * v^T` with singular values sorted in
/// non-increasing order.
pub struct SortedSvd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

pub fn svd(a: &Mat) -> Result<SortedSvd> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(SortedSvd {
            u: Mat::zeros(m, 0),
            sigma: Vec::new(),
            v: Mat::zeros(n, 0),
        });
    }
    let dec = nalgebra::linalg::SVD::new(a.clone(), true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let sv = dec.singular_values;
    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps the factorization's order among ties.
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let mut uo = Mat::zeros(m, k);
    let mut vo = Mat::zeros(n, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        uo.set_column(dst, &u.column(src));
        vo.set_column(dst, &vt.row(src).transpose());
        sigma.push(sv[src].max(0.0));
    }
    Ok(SortedSvd {
        u: uo,
        sigma,
        v: vo,
    })
}

pub fn singular_values(a: &Mat) -> Result<Vec<f64>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("singular value input"));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = a
        .clone()
        .singular_values()
        .iter()
        .map(|x| x.max(0.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Symmetric eigendecomposition `a = q * diag(lambda) * q^T`, eigenvalues
/// ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub q: Mat,
    pub lambda: Vec<f64>,
}

pub fn sym_eigen(a: &Mat) -> SymEigen {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let dec = nalgebra::linalg::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[i].total_cmp(&dec.eigenvalues[j]));
    let mut q = Mat::zeros(n, n);
    let mut lambda = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        q.set_column(dst, &dec.eigenvectors.column(src));
        lambda.push(dec.eigenvalues[src]);
    }
    SymEigen { q, lambda }
}

/// Thin QR with sign-normalized R diagonal (non-negative), so the factor is
/// a deterministic function of the input.
pub fn thin_qr(a: &Mat) -> (Mat, Mat) {
    let k = a.nrows().min(a.ncols());
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Frobenius inner product `<a, b> = tr(a^T b)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// `||q^T q - I||_F`.
pub fn orthonormality_defect(q: &Mat) -> f64 {
    let k = q.ncols();
    let g = q.transpose() * q;
    (g - Mat::identity(k, k)).norm()
}

pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&DVector::from_column_slice(values))
}

pub fn all_finite(a: &Mat) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `(e^{z t} - 1) / z`, with the `z -> 0` limit `t` handled by a series.
pub fn phi1(z: f64, t: f64) -> f64 {
    let x = z * t;
    if x.abs() < 1e-8 {
        t * (1.0 + x / 2.0 + x * x / 6.0)
    } else {
        x.exp_m1() / z
    }
}

/// `||a||_2` via the largest singular value.
pub fn spectral_norm(a: &Mat) -> f64 {
    singular_values(a)
        .ok()
        .and_then(|s| s.first().copied())
        .unwrap_or(0.0)
}
