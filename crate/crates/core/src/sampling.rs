//! Seeded random matrices used by the experiments, examples and tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{thin_svd, SymMatrix};

pub fn gaussian_matrix<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng))
}

/// Gaussian matrix rescaled to unit Frobenius norm.
pub fn unit_direction<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let g = gaussian_matrix(n, m, rng);
        let nrm = g.norm();
        if nrm > 0.0 {
            return g / nrm;
        }
    }
}

/// An `r x r` orthogonal matrix from the left singular vectors of a Gaussian
/// matrix, with a random reflection so both determinants occur.
pub fn random_orthogonal<R: Rng + ?Sized>(r: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(r, r, rng);
    let mut q = thin_svd(&g).expect("square gaussian matrix").u;
    if rng.random_bool(0.5) {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Symmetric positive definite `n x n` matrix `Q diag(lam) Q^T` with
/// eigenvalues drawn from `[0.5, 5]` and separated by at least `0.05`.
pub fn random_pd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SymMatrix {
    let q = random_orthogonal(n, rng);
    let lam = distinct_eigenvalues(n, 0.5, 5.0, 0.05, rng);
    with_spectrum(&q, &lam)
}

/// `n` values in `[lo, hi]`, sorted descending, pairwise at least `gap` apart.
pub fn distinct_eigenvalues<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, gap: f64, rng: &mut R) -> Vec<f64> {
    assert!(gap * (n as f64) < hi - lo, "interval too short for the requested gap");
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.windows(2).all(|w| w[0] - w[1] >= gap) {
            return v;
        }
    }
}

/// `Q diag(lam) Q^T`.
pub fn with_spectrum(q: &DMatrix<f64>, lam: &[f64]) -> SymMatrix {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(lam));
    SymMatrix::new(q * d * q.transpose()).expect("finite spectrum")
}
