//! Seeded random matrices.
//!
//! All generators use ChaCha8 so a fixed seed gives the same stream on every
//! platform.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard normal entries, filled column by column.
pub fn gaussian(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Column-orthonormal `rows x cols` factor distributed according to the Haar
/// measure: QR of a Gaussian matrix with the signs of `diag(R)` folded into Q.
pub fn haar_orthonormal(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(cols <= rows, "orthonormal factor needs cols <= rows");
    let g = gaussian(rng, rows, cols);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
