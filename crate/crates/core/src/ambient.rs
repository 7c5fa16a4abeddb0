//! The spectral contrastive objective on the ambient factor space.
//!
//! `loss(Y) = ||Y Y^T - A||_F^2` is what experiments report; `H([Y]) = loss / 2`
//! is the quotient objective, and the gradient and Hessian here are those of
//! `H`:
//!
//! ```text
//! grad H(Y)         = 2 (Y Y^T - A) Y
//! Hess H(Y)[t, t]   = ||Y t^T + t Y^T||_F^2 + 2 <Y Y^T - A, t t^T>
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{procrustes_align, sym_eig, thin_svd, EigDecomp, Procrustes, SymMatrix};

/// Relative threshold below which `sigma_r / sigma_1` counts as rank loss.
pub const RANK_TOL: f64 = 1e-12;

/// An `n x r` factor `Y`, standing for the class `[Y] = {Y O : O orthogonal}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor(DMatrix<f64>);

impl Factor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::input("factor must be at least 1x1"));
        }
        if m.ncols() > m.nrows() {
            return Err(Error::dims(format!("factor needs r <= n, got {}x{}", m.nrows(), m.ncols())));
        }
        crate::linalg::check_finite(&m)?;
        Ok(Factor(m))
    }

    pub fn zeros(n: usize, r: usize) -> Self {
        Factor(DMatrix::zeros(n, r))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn r(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `Y O`; stays in the same class when `O` is orthogonal.
    pub fn rotated(&self, o: &DMatrix<f64>) -> Factor {
        Factor(&self.0 * o)
    }

    pub fn singular_values(&self) -> Result<DVector<f64>> {
        Ok(thin_svd(&self.0)?.s)
    }

    /// Spectral norm `||Y||`.
    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(self.singular_values()?[0])
    }

    pub fn is_full_rank(&self) -> Result<bool> {
        let s = self.singular_values()?;
        Ok(s[0] > 0.0 && s[s.len() - 1] > RANK_TOL * s[0])
    }

    pub(crate) fn require_full_rank(&self, which: &str) -> Result<()> {
        let s = self.singular_values()?;
        let (s1, sr) = (s[0], s[s.len() - 1]);
        if s1 > 0.0 && sr > RANK_TOL * s1 {
            Ok(())
        } else {
            Err(Error::RankDeficient { which: which.to_string(), sigma_r: sr, sigma_1: s1 })
        }
    }

    /// `Y Y^T`.
    pub fn outer(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }
}

/// A tangent vector at a factor. `horizontal` is set when `Y^T theta` is
/// known to be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentDirection {
    pub entries: DMatrix<f64>,
    pub horizontal: bool,
}

impl TangentDirection {
    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }
}

fn check_dims(y: &Factor, a: &SymMatrix) -> Result<()> {
    if y.n() != a.dim() {
        return Err(Error::dims(format!(
            "factor has {} rows but operator is {}x{}",
            y.n(),
            a.dim(),
            a.dim()
        )));
    }
    Ok(())
}

/// `||Y Y^T - A||_F^2`.
pub fn loss(y: &Factor, a: &SymMatrix) -> Result<f64> {
    check_dims(y, a)?;
    Ok((y.outer() - a.matrix()).norm_squared())
}

/// `H([Y]) = loss(Y) / 2`.
pub fn half_loss(y: &Factor, a: &SymMatrix) -> Result<f64> {
    Ok(0.5 * loss(y, a)?)
}

/// `2 (Y Y^T - A) Y`, the Euclidean gradient of `H`, horizontal at full-rank
/// `Y`.
pub fn riem_grad(y: &Factor, a: &SymMatrix) -> Result<TangentDirection> {
    check_dims(y, a)?;
    let y = y.matrix();
    // (Y Y^T - A) Y = Y (Y^T Y) - A Y avoids the n x n product
    let g = (y * (y.transpose() * y) - a.matrix() * y) * 2.0;
    Ok(TangentDirection { entries: g, horizontal: true })
}

/// `||Y t^T + t Y^T||_F^2 + 2 <Y Y^T - A, t t^T>`.
pub fn hess_form(y: &Factor, a: &SymMatrix, theta: &DMatrix<f64>) -> Result<f64> {
    check_dims(y, a)?;
    if theta.shape() != y.matrix().shape() {
        return Err(Error::dims(format!(
            "direction is {:?} but factor is {:?}",
            theta.shape(),
            y.matrix().shape()
        )));
    }
    let ym = y.matrix();
    let sym = ym * theta.transpose() + theta * ym.transpose();
    let resid = y.outer() - a.matrix();
    let curv = (theta.transpose() * &resid * theta).trace();
    Ok(sym.norm_squared() + 2.0 * curv)
}

/// `min_Q ||Y2 Q - Y1||_F` over orthogonal `Q`.
pub fn geodesic_distance(y1: &Factor, y2: &Factor) -> Result<f64> {
    Ok(align(y1, y2)?.dist)
}

/// Procrustes alignment of `y2` onto `y1` for full-rank factors.
pub fn align(y1: &Factor, y2: &Factor) -> Result<Procrustes> {
    if y1.matrix().shape() != y2.matrix().shape() {
        return Err(Error::dims("factors have different shapes"));
    }
    y1.require_full_rank("first factor")?;
    y2.require_full_rank("second factor")?;
    procrustes_align(y1.matrix(), y2.matrix())
}

/// The global minimizer `Y*` of the loss and the spectral data around it.
#[derive(Debug, Clone)]
pub struct SpectralTarget {
    /// Column `i` is `sqrt(sigma_i) v_i`.
    pub factor: Factor,
    /// Top-r eigenvalues `sigma_1 >= ... >= sigma_r`.
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
    /// All eigenvalues of the operator, non-increasing.
    pub spectrum: DVector<f64>,
    /// `sum_{i > r} sigma_i^2`, the optimal loss.
    pub residual: f64,
    /// `sigma_1(Y*) / sigma_r(Y*)`.
    pub kappa_star: f64,
    /// Set when two of `sigma_1..sigma_{r+1}` coincide (to `1e-10` relative);
    /// eigenvector comparisons must then be made up to subspace.
    pub degenerate: bool,
}

impl SpectralTarget {
    pub fn r(&self) -> usize {
        self.eigvals.len()
    }

    /// `sigma_i(A)` with a 1-based index, zero past the end.
    pub fn sigma(&self, i: usize) -> f64 {
        if i >= 1 && i <= self.spectrum.len() {
            self.spectrum[i - 1]
        } else {
            0.0
        }
    }

    /// `sigma_{r+1}(A)`.
    pub fn sigma_next(&self) -> f64 {
        self.sigma(self.r() + 1)
    }

    /// `sigma_r(Y*) = sqrt(sigma_r(A))`.
    pub fn factor_sigma_r(&self) -> f64 {
        self.eigvals[self.r() - 1].sqrt()
    }

    /// `||Y*|| = sqrt(sigma_1(A))`.
    pub fn factor_norm(&self) -> f64 {
        self.eigvals[0].sqrt()
    }

    /// `||Y* Y*^T||_F`.
    pub fn outer_frobenius(&self) -> f64 {
        self.eigvals.norm()
    }

    /// Distance from `y` to the class of `Y*`.
    pub fn distance(&self, y: &Factor) -> Result<f64> {
        geodesic_distance(y, &self.factor)
    }
}

/// `Y*` for an operator with `sigma_r > 0`.
pub fn optimal_factor(a: &SymMatrix, r: usize) -> Result<SpectralTarget> {
    let eig = sym_eig(a)?;
    optimal_factor_from_eig(&eig, r)
}

/// [`optimal_factor`] from an existing eigendecomposition.
pub fn optimal_factor_from_eig(eig: &EigDecomp, r: usize) -> Result<SpectralTarget> {
    let n = eig.values.len();
    if r == 0 || r > n {
        return Err(Error::input(format!("rank r must be in 1..={n}, got {r}")));
    }
    let (vals, vecs) = eig.top(r);
    if !(vals[r - 1] > 0.0) {
        return Err(Error::input(format!("sigma_r(A) = {} must be positive to form Y*", vals[r - 1])));
    }
    let mut factor = vecs.clone();
    for (j, &s) in vals.iter().enumerate() {
        factor.column_mut(j).scale_mut(s.sqrt());
    }
    let residual = eig.values.iter().skip(r).map(|s| s * s).sum();
    let kappa_star = (vals[0] / vals[r - 1]).sqrt();
    let upto = (r + 1).min(n);
    let scale = eig.values[0].abs().max(f64::MIN_POSITIVE);
    let degenerate = (1..upto).any(|i| (eig.values[i - 1] - eig.values[i]).abs() <= 1e-10 * scale);
    Ok(SpectralTarget {
        factor: Factor(factor),
        eigvals: vals,
        eigvecs: vecs,
        spectrum: eig.values.clone(),
        residual,
        kappa_star,
        degenerate,
    })
}

/// Projection onto the horizontal space at `y`: `theta - Y Omega` with `Omega`
/// skew-symmetric, chosen so that `Y^T (theta - Y Omega)` is symmetric.
///
/// `Omega` solves `(Y^T Y) Omega + Omega (Y^T Y) = Y^T theta - theta^T Y`, which
/// diagonalizes in the eigenbasis of `Y^T Y`.
pub fn horizontal_project(y: &Factor, theta: &DMatrix<f64>) -> Result<TangentDirection> {
    if theta.shape() != y.matrix().shape() {
        return Err(Error::dims("direction and factor shapes differ"));
    }
    y.require_full_rank("factor")?;
    let ym = y.matrix();
    let gram = SymMatrix::new(ym.transpose() * ym)?;
    let eig = sym_eig(&gram)?;
    let b = ym.transpose() * theta;
    let rhs = &b - b.transpose();
    let p = &eig.vectors;
    let rhs_rot = p.transpose() * rhs * p;
    let r = y.r();
    let omega_rot = DMatrix::from_fn(r, r, |i, j| rhs_rot[(i, j)] / (eig.values[i] + eig.values[j]));
    let omega = p * omega_rot * p.transpose();
    let omega = (&omega - omega.transpose()) * 0.5;
    Ok(TangentDirection { entries: theta - ym * omega, horizontal: true })
}

/// `||Y^T theta - theta^T Y||_max`, zero exactly on the horizontal space.
pub fn horizontal_defect(y: &Factor, theta: &DMatrix<f64>) -> f64 {
    let b = y.matrix().transpose() * theta;
    (&b - b.transpose()).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{gaussian_matrix, random_orthogonal, random_pd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag321() -> SymMatrix {
        SymMatrix::from_diagonal(&[3.0, 2.0, 1.0])
    }

    fn col(v: &[f64]) -> Factor {
        Factor::new(DMatrix::from_column_slice(v.len(), 1, v)).unwrap()
    }

    #[test]
    fn loss_examples() {
        let a = diag321();
        // Eckart-Young residual 2^2 + 1^2
        let y = col(&[3f64.sqrt(), 0.0, 0.0]);
        assert!((loss(&y, &a).unwrap() - 5.0).abs() < 1e-12);
        assert!((half_loss(&y, &a).unwrap() - 2.5).abs() < 1e-12);
        let root = Factor::new(DMatrix::from_diagonal(&DVector::from_column_slice(&[
            3f64.sqrt(),
            2f64.sqrt(),
            1.0,
        ])))
        .unwrap();
        assert!(loss(&root, &a).unwrap() < 1e-24);
        assert_eq!(loss(&Factor::zeros(3, 2), &a).unwrap(), a.frobenius_norm().powi(2));
    }

    #[test]
    fn loss_dimension_mismatch() {
        assert!(matches!(loss(&Factor::zeros(4, 1), &diag321()), Err(Error::Dimension(_))));
        assert!(riem_grad(&Factor::zeros(2, 1), &diag321()).is_err());
        assert!(hess_form(&col(&[1.0, 0.0, 0.0]), &diag321(), &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn gradient_vanishes_at_optimum_and_saddle() {
        let a = diag321();
        let t = optimal_factor(&a, 2).unwrap();
        assert!(riem_grad(&t.factor, &a).unwrap().norm() < 1e-10);
        let saddle = col(&[0.0, 2f64.sqrt(), 0.0]);
        assert!(riem_grad(&saddle, &a).unwrap().norm() < 1e-12);
    }

    #[test]
    fn hessian_worked_saddle() {
        let a = diag321();
        let y = col(&[0.0, 2f64.sqrt(), 0.0]);
        let theta = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let h = hess_form(&y, &a, &theta).unwrap();
        assert!((h + 2.0).abs() <= 1e-12);
    }

    #[test]
    fn hessian_lower_bound_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_pd(6, &mut rng);
        let t = optimal_factor(&a, 2).unwrap();
        let sr2 = t.factor_sigma_r().powi(2);
        let resid = t.factor.outer() - a.matrix();
        for _ in 0..50 {
            let raw = gaussian_matrix(6, 2, &mut rng);
            let th = horizontal_project(&t.factor, &raw).unwrap().entries;
            let h = hess_form(&t.factor, &a, &th).unwrap();
            let bound = 2.0 * sr2 * th.norm_squared() + 2.0 * (th.transpose() * &resid * &th).trace();
            assert!(h >= bound - 1e-10 * h.abs().max(1.0));
        }
    }

    #[test]
    fn optimal_factor_examples() {
        let a = diag321();
        let t = optimal_factor(&a, 2).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[3f64.sqrt(), 0.0, 0.0, 2f64.sqrt(), 0.0, 0.0]);
        assert!((t.factor.matrix() - expected).amax() < 1e-14);
        assert!((t.residual - 1.0).abs() < 1e-14);
        assert!((t.kappa_star - 1.5f64.sqrt()).abs() < 1e-14);
        assert!((loss(&t.factor, &a).unwrap() - t.residual).abs() < 1e-8);
        assert!(!t.degenerate);

        let full = optimal_factor(&a, 3).unwrap();
        assert_eq!(full.residual, 0.0);
        assert!(optimal_factor(&a, 4).is_err());
        let singular = SymMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(optimal_factor(&singular, 2).is_err());
    }

    #[test]
    fn degenerate_flag() {
        let t = optimal_factor(&SymMatrix::from_diagonal(&[2.0, 2.0, 1.0]), 1).unwrap();
        assert!(t.degenerate);
    }

    #[test]
    fn geodesic_distance_rank_errors_name_factor() {
        let good = col(&[1.0, 0.0]);
        let bad = Factor::zeros(2, 1);
        let e = geodesic_distance(&good, &bad).unwrap_err();
        assert!(e.to_string().contains("second factor"));
        let e = geodesic_distance(&bad, &good).unwrap_err();
        assert!(e.to_string().contains("first factor"));
    }

    #[test]
    fn geodesic_distance_class_invariance_and_sign_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = Factor::new(gaussian_matrix(7, 3, &mut rng)).unwrap();
        let o = random_orthogonal(3, &mut rng);
        assert!(geodesic_distance(&y, &y.rotated(&o)).unwrap() < 1e-10);
        let z = Factor::new(gaussian_matrix(7, 3, &mut rng)).unwrap();
        let d1 = geodesic_distance(&y, &z).unwrap();
        let d2 = geodesic_distance(&z, &y).unwrap();
        assert!((d1 - d2).abs() < 1e-10);

        let a = col(&[1.0, 2.0]);
        let b = col(&[-0.5, -1.0]);
        let brute =
            [1.0, -1.0].iter().map(|s| (b.matrix() * *s - a.matrix()).norm()).fold(f64::INFINITY, f64::min);
        assert!((geodesic_distance(&a, &b).unwrap() - brute).abs() < 1e-14);
    }

    #[test]
    fn horizontal_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = Factor::new(gaussian_matrix(8, 3, &mut rng)).unwrap();
        let theta = gaussian_matrix(8, 3, &mut rng);
        let h = horizontal_project(&y, &theta).unwrap();
        assert!(h.horizontal);
        assert!(horizontal_defect(&y, &h.entries) <= 1e-10);
        // idempotent
        let hh = horizontal_project(&y, &h.entries).unwrap();
        assert!((&hh.entries - &h.entries).amax() <= 1e-12);
        // vertical directions vanish
        let s = gaussian_matrix(3, 3, &mut rng);
        let skew = &s - s.transpose();
        let vert = y.matrix() * skew;
        assert!(horizontal_project(&y, &vert).unwrap().entries.amax() < 1e-10 * vert.amax());
        assert!(horizontal_project(&Factor::zeros(8, 3), &theta).is_err());
    }

    #[test]
    fn gradient_is_horizontal() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_pd(6, &mut rng);
        let y = Factor::new(gaussian_matrix(6, 2, &mut rng)).unwrap();
        let g = riem_grad(&y, &a).unwrap();
        assert!(horizontal_defect(&y, &g.entries) < 1e-10 * (1.0 + g.norm()));
    }
}
