//! Dense symmetric eigendecomposition, thin SVD and orthogonal Procrustes
//! alignment.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. The eigensolver is a
//! cyclic Jacobi method with a fixed sweep order, so results are bit-for-bit
//! reproducible for a given input.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A dense symmetric matrix. Symmetry is enforced at construction by
/// replacing `M` with `(M + M^T) / 2`, so `m[(i, j)] == m[(j, i)]` holds
/// exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixEnvelope", into = "MatrixEnvelope")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::input("symmetric matrix must have dim >= 1"));
        }
        check_finite(&m)?;
        let n = m.nrows();
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(SymMatrix(s))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `P^T M P` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        if perm.len() != n {
            return Err(Error::dims("permutation length differs from dim"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| self.0[(perm[i], perm[j])]);
        SymMatrix::new(m)
    }
}

impl AsRef<SymMatrix> for SymMatrix {
    fn as_ref(&self) -> &SymMatrix {
        self
    }
}

/// JSON envelope `{"dim": n, "data": [[...], ...]}` for square matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixEnvelope {
    pub dim: usize,
    pub data: Vec<Vec<f64>>,
}

impl TryFrom<MatrixEnvelope> for SymMatrix {
    type Error = Error;

    fn try_from(env: MatrixEnvelope) -> Result<Self> {
        if env.data.len() != env.dim || env.data.iter().any(|row| row.len() != env.dim) {
            return Err(Error::dims(format!("envelope declares dim {} but data is not {0}x{0}", env.dim)));
        }
        SymMatrix::new(rows_to_matrix(&env.data)?)
    }
}

impl From<SymMatrix> for MatrixEnvelope {
    fn from(m: SymMatrix) -> Self {
        MatrixEnvelope { dim: m.dim(), data: matrix_to_rows(&m.0) }
    }
}

/// Eigenpairs of a symmetric matrix, values sorted in non-increasing order.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub values: DVector<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl EigDecomp {
    pub fn top(&self, r: usize) -> (DVector<f64>, DMatrix<f64>) {
        (self.values.rows(0, r).into_owned(), self.vectors.columns(0, r).into_owned())
    }

    /// Eigenpairs in non-decreasing order of eigenvalue (the "bottom" of the
    /// spectrum first).
    pub fn bottom(&self, r: usize) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.values.len();
        let idx: Vec<usize> = (0..r).map(|k| n - 1 - k).collect();
        let vals = DVector::from_iterator(r, idx.iter().map(|&i| self.values[i]));
        let vecs = DMatrix::from_fn(self.vectors.nrows(), r, |i, k| self.vectors[(i, idx[k])]);
        (vals, vecs)
    }
}

/// Thin SVD `M = U diag(s) V^T` of an `n x r` matrix with `n >= r`.
#[derive(Debug, Clone)]
pub struct SvdDecomp {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub vt: DMatrix<f64>,
}

impl SvdDecomp {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * &self.vt
    }
}

/// Result of aligning `y2` onto `y1` by an orthogonal matrix.
#[derive(Debug, Clone)]
pub struct Procrustes {
    /// Minimizer of `||y2 q - y1||_F` over orthogonal `q`.
    pub q: DMatrix<f64>,
    pub dist: f64,
    /// False when `y1^T y2` is singular and the minimizer is not unique.
    pub unique: bool,
}

pub fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps run over `(p, q)` pairs in row-major order until the off-diagonal
/// Frobenius norm drops below `1e-12 * ||M||_F`. Each eigenvector is signed so
/// its entry of largest magnitude is positive (lowest index wins ties).
/// Repeated eigenvalues get an arbitrary orthonormal basis of their
/// eigenspace.
pub fn sym_eig(m: &SymMatrix) -> Result<EigDecomp> {
    let n = m.dim();
    // row-major working copy
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = m.0[(i, j)];
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale = m.frobenius_norm();
    let threshold = if scale > 0.0 { JACOBI_TOL * scale } else { 0.0 };
    let mut sweeps = 0;
    let mut off = off_diagonal_norm(&a, n);
    while off > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, off });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A <- A J
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                // A <- J^T A
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                // V <- V J
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&a, n);
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the original index order among equal eigenvalues
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| a[i * n + i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut best = 0;
        for k in 1..n {
            if v[k * n + src].abs() > v[best * n + src].abs() {
                best = k;
            }
        }
        let sign = if v[best * n + src] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[(k, col)] = sign * v[k * n + src];
        }
    }
    Ok(EigDecomp { values, vectors })
}

/// Thin SVD of an `n x r` matrix (`n >= r`) via the eigendecomposition of the
/// `r x r` Gram matrix `M^T M`.
///
/// Singular values that are numerically zero are reported as exactly `0`, and
/// the matching left singular vectors are completed to an orthonormal set.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<SvdDecomp> {
    let (n, r) = m.shape();
    if r == 0 || n < r {
        return Err(Error::dims(format!("thin_svd needs n >= r >= 1, got {n}x{r}")));
    }
    check_finite(m)?;
    let gram = SymMatrix::new(m.transpose() * m)?;
    let eig = sym_eig(&gram)?;
    let lam_max = eig.values[0].max(0.0);
    let cutoff = lam_max * f64::EPSILON * (n.max(r) as f64) * 4.0;

    let mut s = DVector::zeros(r);
    let mut u = DMatrix::zeros(n, r);
    let mut filled = vec![false; r];
    for i in 0..r {
        let lam = eig.values[i];
        if lam > cutoff && lam > 0.0 {
            s[i] = lam.sqrt();
            let col = m * eig.vectors.column(i) / s[i];
            u.set_column(i, &col);
            filled[i] = true;
        }
    }
    orthonormalize_columns(&mut u, &filled);
    Ok(SvdDecomp { u, s, vt: eig.vectors.transpose() })
}

/// Modified Gram-Schmidt over the columns of `u` in order. Columns flagged
/// `false` in `filled` (and any column that collapses) are replaced by the
/// standard basis vector with the largest residual.
fn orthonormalize_columns(u: &mut DMatrix<f64>, filled: &[bool]) {
    let (n, r) = u.shape();
    for j in 0..r {
        let mut col = u.column(j).into_owned();
        let mut ok = filled[j];
        if ok {
            for _ in 0..2 {
                for k in 0..j {
                    let proj = u.column(k).dot(&col);
                    col.axpy(-proj, &u.column(k), 1.0);
                }
            }
            let nrm = col.norm();
            if nrm > 1e-8 {
                col /= nrm;
            } else {
                ok = false;
            }
        }
        if !ok {
            let mut best: Option<(f64, DVector<f64>)> = None;
            for e in 0..n {
                let mut cand = DVector::zeros(n);
                cand[e] = 1.0;
                for _ in 0..2 {
                    for k in 0..j {
                        let proj = u.column(k).dot(&cand);
                        cand.axpy(-proj, &u.column(k), 1.0);
                    }
                }
                let nrm = cand.norm();
                if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                    best = Some((nrm, cand));
                }
            }
            let (nrm, cand) = best.expect("n >= 1");
            col = cand / nrm;
        }
        u.set_column(j, &col);
    }
}

/// Orthogonal Procrustes: the `q` minimizing `||y2 q - y1||_F`, computed as
/// `Q_V Q_U^T` from the SVD `Q_U S Q_V^T` of `y1^T y2`.
pub fn procrustes_align(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<Procrustes> {
    if y1.shape() != y2.shape() {
        return Err(Error::dims(format!("procrustes operands differ: {:?} vs {:?}", y1.shape(), y2.shape())));
    }
    check_finite(y1)?;
    check_finite(y2)?;
    let cross = y1.transpose() * y2;
    let svd = thin_svd(&cross)?;
    let q = svd.vt.transpose() * svd.u.transpose();
    let r = cross.ncols();
    let smax = svd.s[0];
    let unique = smax > 0.0 && svd.s[r - 1] > 1e-12 * smax;
    let dist = (y2 * &q - y1).norm();
    Ok(Procrustes { q, dist, unique })
}

/// Frobenius inner product `<a, b> = tr(a^T b)`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() >= m.ncols() {
        Ok(thin_svd(m)?.s[0])
    } else {
        Ok(thin_svd(&m.transpose())?.s[0])
    }
}

/// Singular values in non-increasing order, for any shape.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.nrows() >= m.ncols() {
        Ok(thin_svd(m)?.s)
    } else {
        Ok(thin_svd(&m.transpose())?.s)
    }
}

/// Cosines of the principal angles between the column spans of two matrices
/// with orthonormal columns, in non-increasing order.
pub fn principal_angle_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DVector<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::dims("principal angles need equal shapes"));
    }
    singular_values(&(a.transpose() * b))
}

/// Largest principal angle (radians) between two orthonormal column bases.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let cos = principal_angle_cosines(a, b)?;
    // ||(I - A A^T) B||_2 is the sine of the largest angle; better
    // conditioned than acos near 1
    let resid = b - a * (a.transpose() * b);
    let sin = spectral_norm(&resid)?.min(1.0);
    let c = cos[cos.len() - 1].clamp(-1.0, 1.0);
    Ok(sin.atan2(c))
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::input("matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::input("matrix has no columns"));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::dims(format!("row {i} has {} entries, expected {ncols}", row.len())));
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    check_finite(&m)?;
    Ok(m)
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_eig(m: &SymMatrix, e: &EigDecomp) {
        let n = m.dim();
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - DMatrix::identity(n, n)).amax() <= 1e-10);
        for i in 0..n {
            let v = e.vectors.column(i);
            let res = (m.matrix() * v - v * e.values[i]).norm();
            assert!(res <= 1e-8 * (1.0 + e.values[i].abs()), "residual {res}");
            if i > 0 {
                assert!(e.values[i] <= e.values[i - 1]);
            }
        }
    }

    #[test]
    fn symmetrizes_on_construction() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.matrix()[(0, 1)], 1.0);
        assert_eq!(m.matrix()[(1, 0)], 1.0);
    }

    #[test]
    fn rejects_non_finite_and_non_square() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(SymMatrix::new(bad), Err(Error::NonFinite { .. })));
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(thin_svd(&DMatrix::from_row_slice(2, 1, &[f64::INFINITY, 0.0])).is_err());
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        check_eig(&SymMatrix::identity(3), &e);
    }

    #[test]
    fn diagonal_gives_signed_basis() {
        let m = SymMatrix::from_diagonal(&[1.0, 3.0, 2.0]);
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(e.vectors, expected);
    }

    #[test]
    fn two_by_two_characteristic_roots() {
        // lambda^2 - 4 lambda + 3 = 0
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)].abs() - h).abs() < 1e-14);
        assert!((e.vectors[(0, 0)] - e.vectors[(1, 0)]).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] + e.vectors[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_invariants_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 17, 40] {
            let m = SymMatrix::new(random(n, n, &mut rng)).unwrap();
            let e = sym_eig(&m).unwrap();
            check_eig(&m, &e);
            let e2 = sym_eig(&m).unwrap();
            assert_eq!(e.values, e2.values);
            assert_eq!(e.vectors, e2.vectors);
        }
    }

    #[test]
    fn svd_column_vector() {
        let m = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let s = thin_svd(&m).unwrap();
        assert!((s.s[0] - 5.0).abs() < 1e-14);
        assert!((s.u[(0, 0)].abs() - 0.6).abs() < 1e-14);
        assert!((s.u[(1, 0)].abs() - 0.8).abs() < 1e-14);
        assert!((s.vt[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((s.reconstruct() - m).norm() < 1e-14);
    }

    #[test]
    fn svd_stacked_identity() {
        let mut m = DMatrix::zeros(5, 3);
        for i in 0..3 {
            m[(i, i)] = 1.0;
        }
        let s = thin_svd(&m).unwrap();
        assert!(s.s.iter().all(|&x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn svd_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random(5, 2, &mut rng);
            let s = thin_svd(&m).unwrap();
            assert!((s.reconstruct() - &m).norm() <= 1e-10);
            let utu = s.u.transpose() * &s.u;
            assert!((utu - DMatrix::identity(2, 2)).amax() < 1e-10);
            assert!(s.s[0] >= s.s[1] && s.s[1] >= 0.0);
        }
    }

    #[test]
    fn svd_rank_deficient_reports_zero() {
        let col = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        let m = DMatrix::from_columns(&[col.clone(), col * 2.0]);
        let s = thin_svd(&m).unwrap();
        assert_eq!(s.s[1], 0.0);
        let utu = s.u.transpose() * &s.u;
        assert!((utu - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((s.reconstruct() - &m).norm() < 1e-8 * (1.0 + m.norm()));
    }

    #[test]
    fn procrustes_identical_and_rotated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random(6, 3, &mut rng);
        let p = procrustes_align(&y, &y).unwrap();
        assert!((p.q.clone() - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!(p.dist < 1e-10);
        let o = thin_svd(&random(3, 3, &mut rng)).unwrap().u;
        let p = procrustes_align(&y, &(&y * &o)).unwrap();
        assert!(p.dist <= 1e-10);
        assert!(p.unique);
    }

    #[test]
    fn procrustes_sign_search_r1() {
        let y1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let y2 = DMatrix::from_column_slice(2, 1, &[-1.0, 0.0]);
        let p = procrustes_align(&y1, &y2).unwrap();
        let brute = [1.0, -1.0].iter().map(|s| (&y2 * *s - &y1).norm()).fold(f64::INFINITY, f64::min);
        assert!((p.q[(0, 0)] + 1.0).abs() < 1e-14);
        assert!(p.dist.abs() < 1e-14);
        assert_eq!(brute, 0.0);
    }

    #[test]
    fn procrustes_degenerate_flags_non_unique() {
        let y1 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let y2 = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let p = procrustes_align(&y1, &y2).unwrap();
        assert!(!p.unique);
        let qtq = p.q.transpose() * &p.q;
        assert!((qtq - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn procrustes_dimension_mismatch() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(3, 1);
        assert!(matches!(procrustes_align(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn eig_matches_svd_on_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = random(6, 6, &mut rng);
        let m = SymMatrix::new(&b * b.transpose()).unwrap();
        let e = sym_eig(&m).unwrap();
        let s = thin_svd(m.matrix()).unwrap();
        for i in 0..6 {
            assert!((e.values[i] - s.s[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn envelope_round_trip() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, -0.25, -0.25, 3.0])).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"dim":2,"data":[[1.5,-0.25],[-0.25,3.0]]}"#);
        let back: SymMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<SymMatrix>(r#"{"dim":3,"data":[[1.0]]}"#).is_err());
    }
}
