//! Region decomposition of the factor space, first-order stationary points,
//! escape directions at saddles, and numeric checks of the curvature and
//! gradient bounds that hold in each region.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ambient::{align, hess_form, riem_grad, Factor, SpectralTarget};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, thin_svd, EigDecomp, SymMatrix};

/// Thresholds `mu, alpha, beta, gamma` of the region definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RegionParams {
    pub fn new(mu: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        Ok(RegionParams { mu, alpha, beta, gamma })
    }

    /// Whether the large-gradient guarantees of the outer regions apply.
    pub fn outer_regions_informative(&self) -> bool {
        self.beta > 1.0 && self.gamma > 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    /// Near `[Y*]`.
    R1,
    /// Small gradient away from `[Y*]`: near a saddle.
    R2,
    /// Large gradient, bounded factor.
    R3a,
    /// `||Y||` large.
    R3b,
    /// `||Y Y^T||_F` large.
    R3c,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::R1 => "R1",
            RegionLabel::R2 => "R2",
            RegionLabel::R3a => "R3a",
            RegionLabel::R3b => "R3b",
            RegionLabel::R3c => "R3c",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Region membership together with the quantities it was decided from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub labels: BTreeSet<RegionLabel>,
    pub distance_to_opt: f64,
    pub grad_norm: f64,
    pub spectral_norm: f64,
    pub outer_frobenius: f64,
}

impl Classification {
    pub fn contains(&self, l: RegionLabel) -> bool {
        self.labels.contains(&l)
    }

    pub fn joined(&self) -> String {
        self.labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(";")
    }
}

/// Thresholds the region predicates compare against.
#[derive(Debug, Clone, Copy)]
struct Thresholds {
    dist: f64,
    grad: f64,
    norm: f64,
    outer: f64,
}

fn thresholds(target: &SpectralTarget, p: &RegionParams) -> Thresholds {
    let sr = target.factor_sigma_r();
    let kappa = target.kappa_star;
    Thresholds {
        dist: p.mu * sr / kappa,
        grad: p.alpha * p.mu * sr.powi(3) / (4.0 * kappa),
        norm: p.beta * target.factor_norm(),
        outer: p.gamma * target.outer_frobenius(),
    }
}

/// Evaluates every region predicate and returns all labels that hold; regions
/// may overlap.
pub fn classify(
    y: &Factor,
    a: &SymMatrix,
    target: &SpectralTarget,
    p: &RegionParams,
) -> Result<Classification> {
    y.require_full_rank("factor")?;
    let dist = align(y, &target.factor)?.dist;
    let grad_norm = riem_grad(y, a)?.norm();
    let spectral_norm = y.spectral_norm()?;
    let outer_frobenius = y.outer().norm();
    let t = thresholds(target, p);

    let small_norm = spectral_norm <= t.norm;
    let small_outer = outer_frobenius <= t.outer;
    let mut labels = BTreeSet::new();
    if dist <= t.dist {
        labels.insert(RegionLabel::R1);
    }
    if dist > t.dist && grad_norm <= t.grad && small_norm && small_outer {
        labels.insert(RegionLabel::R2);
    }
    if grad_norm > t.grad && small_norm && small_outer {
        labels.insert(RegionLabel::R3a);
    }
    if !small_norm && small_outer {
        labels.insert(RegionLabel::R3b);
    }
    if !small_outer {
        labels.insert(RegionLabel::R3c);
    }
    Ok(Classification { labels, distance_to_opt: dist, grad_norm, spectral_norm, outer_frobenius })
}

/// Stationary point `U_S Lambda_S` built from the eigenpairs with (0-based,
/// descending-order) indices in `subset`.
pub fn enumerate_fosp(a: &SymMatrix, r: usize, subset: &[usize]) -> Result<Factor> {
    let eig = sym_eig(a)?;
    fosp_from_eig(&eig, r, subset)
}

pub fn fosp_from_eig(eig: &EigDecomp, r: usize, subset: &[usize]) -> Result<Factor> {
    if subset.len() != r {
        return Err(Error::input(format!("subset has {} indices, expected r = {r}", subset.len())));
    }
    let n = eig.values.len();
    let mut seen = BTreeSet::new();
    for &i in subset {
        if i >= n {
            return Err(Error::input(format!("eigen index {i} out of range for n = {n}")));
        }
        if !seen.insert(i) {
            return Err(Error::input(format!("eigen index {i} repeated in subset")));
        }
        if !(eig.values[i] > 0.0) {
            return Err(Error::input(format!("eigenvalue {i} is {} and must be positive", eig.values[i])));
        }
    }
    let mut y = DMatrix::zeros(n, r);
    for (col, &i) in subset.iter().enumerate() {
        y.set_column(col, &(eig.vectors.column(i) * eig.values[i].sqrt()));
    }
    Factor::new(y)
}

/// All `C(n, r)` stationary points over subsets of the positive eigenpairs,
/// subsets in lexicographic order.
pub fn all_fosps(a: &SymMatrix, r: usize) -> Result<Vec<(Vec<usize>, Factor)>> {
    let eig = sym_eig(a)?;
    let n = eig.values.len();
    if r == 0 || r > n {
        return Err(Error::input(format!("rank r must be in 1..={n}, got {r}")));
    }
    let positive = (0..n).filter(|&i| eig.values[i] > 0.0).count();
    let mut out = Vec::new();
    for subset in combinations(positive, r) {
        let y = fosp_from_eig(&eig, r, &subset)?;
        out.push((subset, y));
    }
    Ok(out)
}

/// Lexicographic `k`-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Gradient norm below which a factor counts as stationary.
pub fn fosp_tolerance(a: &SymMatrix) -> f64 {
    1e-8 * (1.0 + a.frobenius_norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EscapeCandidate {
    /// Constrained Rayleigh maximizer placed in the weakest singular column.
    Theta1,
    /// `Y - Y* Q`, the direction back toward the optimum.
    Theta2,
}

/// Which regime of the smallest singular value `D_min^2` applies, relative to
/// `sigma_{r+1}(A)` and the error term `e1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeBranch {
    /// `D_min^2 < sigma_{r+1} / 2`
    SmallSingular,
    /// `sigma_{r+1} / 2 <= D_min^2 <= e1 + sigma_{r+1}`
    Intermediate,
    /// `D_min^2 > e1 + sigma_{r+1}`
    NearTop,
}

/// The quantities entering the first candidate direction.
#[derive(Debug, Clone, Serialize)]
pub struct EscapeCertificate {
    /// Norm of the Rayleigh maximizer before normalization (zero when the
    /// orthogonal complement of `Y` is trivial).
    pub a_norm: f64,
    /// `a^T A a` for the normalized maximizer.
    pub rayleigh: f64,
    /// 0-based column of the smallest singular value.
    pub tilde_i: usize,
    pub d_min: f64,
    /// `sigma_{r+1}(A)`.
    pub sigma_next: f64,
    pub hess_theta1: Option<f64>,
    pub hess_theta2: Option<f64>,
    pub branch: EscapeBranch,
}

impl EscapeCertificate {
    pub fn branch_with(&self, e1: f64) -> EscapeBranch {
        branch_for(self.d_min * self.d_min, self.sigma_next, e1)
    }
}

fn branch_for(d2: f64, sigma_next: f64, e1: f64) -> EscapeBranch {
    if d2 < sigma_next / 2.0 {
        EscapeBranch::SmallSingular
    } else if d2 <= e1 + sigma_next {
        EscapeBranch::Intermediate
    } else {
        EscapeBranch::NearTop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeVerdict {
    /// `hess_value < 0`: a direction of negative curvature was found.
    Escape,
    /// Both candidates have nonnegative curvature.
    NoEscape,
    /// The input is stationary and at `[Y*]`; no escape is expected.
    NearOptimum,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeReport {
    /// Unit-norm direction (`||direction||_F = 1`).
    #[serde(skip)]
    pub direction: DMatrix<f64>,
    pub hess_value: f64,
    pub which: EscapeCandidate,
    pub verdict: EscapeVerdict,
    pub certificate: EscapeCertificate,
}

impl EscapeReport {
    pub fn found(&self) -> bool {
        self.verdict == EscapeVerdict::Escape
    }
}

/// Builds both candidate escape directions at `y`, each normalized to unit
/// Frobenius norm, and returns the one with the smaller Hessian value.
///
/// The first candidate puts the maximizer of `a^T A a / ||a||^2` over
/// `Y^T a = 0` into column `argmin_j D_jj` of `U`-space and rotates by `V^T`
/// (with `Y = U D V^T`). The second is `Y - Y* Q` with `Q` the Procrustes
/// alignment of `Y*` onto `Y`.
pub fn escape_direction(y: &Factor, a: &SymMatrix, target: &SpectralTarget) -> Result<EscapeReport> {
    y.require_full_rank("factor")?;
    let (n, r) = (y.n(), y.r());
    if target.factor.n() != n || target.r() != r {
        return Err(Error::dims("factor and target shapes differ"));
    }
    let svd = thin_svd(y.matrix())?;

    // argmin over singular values, lowest index on ties
    let mut tilde_i = 0;
    for j in 1..r {
        if svd.s[j] < svd.s[tilde_i] {
            tilde_i = j;
        }
    }
    let d_min = svd.s[tilde_i];

    let proj = DMatrix::identity(n, n) - &svd.u * svd.u.transpose();
    let projected = SymMatrix::new(&proj * a.matrix() * &proj)?;
    let peig = sym_eig(&projected)?;
    // pick the top eigenvector that survives re-projection onto null(Y^T)
    let mut theta1 = None;
    let mut a_norm = 0.0;
    let mut rayleigh = f64::NAN;
    if n > r {
        for k in 0..n {
            let v = &proj * peig.vectors.column(k);
            let nrm = v.norm();
            if nrm > 0.5 {
                let v = v / nrm;
                rayleigh = (v.transpose() * a.matrix() * &v)[(0, 0)];
                a_norm = nrm;
                let mut block = DMatrix::zeros(n, r);
                block.set_column(tilde_i, &v);
                theta1 = Some(block * &svd.vt);
                break;
            }
        }
    }

    let q = align(y, &target.factor)?.q;
    let raw2 = y.matrix() - target.factor.matrix() * q;
    let theta2 = (raw2.norm() > 0.0).then(|| &raw2 / raw2.norm());

    let h1 = theta1.as_ref().map(|t| hess_form(y, a, t)).transpose()?;
    let h2 = theta2.as_ref().map(|t| hess_form(y, a, t)).transpose()?;

    let (which, hess_value, direction) = match (h1, h2) {
        (Some(v1), Some(v2)) if v2 < v1 => (EscapeCandidate::Theta2, v2, theta2.clone().unwrap()),
        (Some(v1), _) => (EscapeCandidate::Theta1, v1, theta1.clone().unwrap()),
        (None, Some(v2)) => (EscapeCandidate::Theta2, v2, theta2.clone().unwrap()),
        (None, None) => (EscapeCandidate::Theta2, 0.0, DMatrix::zeros(n, r)),
    };

    let grad_norm = riem_grad(y, a)?.norm();
    let near_opt = grad_norm <= fosp_tolerance(a) && raw2.norm() <= 1e-6 * (1.0 + target.factor_norm());
    let verdict = if near_opt {
        EscapeVerdict::NearOptimum
    } else if hess_value < 0.0 {
        EscapeVerdict::Escape
    } else {
        EscapeVerdict::NoEscape
    };
    let sigma_next = target.sigma_next();
    Ok(EscapeReport {
        direction,
        hess_value,
        which,
        verdict,
        certificate: EscapeCertificate {
            a_norm,
            rayleigh,
            tilde_i,
            d_min,
            sigma_next,
            hess_theta1: h1,
            hess_theta2: h2,
            branch: branch_for(d_min * d_min, sigma_next, 0.0),
        },
    })
}

/// Curvature bounds on the horizontal space inside the region near `[Y*]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct R1Bounds {
    pub lower: f64,
    pub upper: f64,
    /// `lower > 0`: strongly geodesically convex there.
    pub convex: bool,
}

/// `lower = (2 (1 - mu/k)^2 - 14 mu / 3) sigma_r(A) - 2 sigma_{r+1}(A)` and
/// `upper = 4 (sigma_1(Y*) + mu sigma_r(Y*) / k)^2 + 14 mu sigma_r(Y*)^2 / 3`,
/// with `k = kappa*`, valid for `0 <= mu <= k / 3`.
pub fn r1_bounds(target: &SpectralTarget, mu: f64) -> Result<R1Bounds> {
    let kappa = target.kappa_star;
    if !(mu >= 0.0) || mu > kappa / 3.0 {
        return Err(Error::input(format!("mu must lie in [0, kappa*/3] = [0, {}], got {mu}", kappa / 3.0)));
    }
    let sr_a = target.sigma(target.r());
    let lower = (2.0 * (1.0 - mu / kappa).powi(2) - 14.0 / 3.0 * mu) * sr_a - 2.0 * target.sigma_next();
    let s1 = target.factor_norm();
    let sr = target.factor_sigma_r();
    let upper = 4.0 * (s1 + mu * sr / kappa).powi(2) + 14.0 * mu * sr * sr / 3.0;
    Ok(R1Bounds { lower, upper, convex: lower > 0.0 })
}

/// Largest `mu` in `[0, kappa*/3]` with a positive curvature lower bound, by
/// bisection; `None` without an eigengap.
pub fn convexity_mu_limit(target: &SpectralTarget) -> Option<f64> {
    if !r1_bounds(target, 0.0).ok()?.convex {
        return None;
    }
    let cap = target.kappa_star / 3.0;
    if r1_bounds(target, cap).ok()?.convex {
        return Some(cap);
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r1_bounds(target, mid).ok()?.convex {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Outcome of the large-gradient checks. Each entry is `None` when the factor
/// is outside the region the check applies to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct R3Checks {
    /// `||grad|| > alpha mu sigma_r(Y*)^3 / (4 kappa*)` on R3a.
    pub grad_floor: Option<bool>,
    /// `||grad|| >= 2 (||Y||^3 - ||Y|| ||Y*||^2) > 2 (beta^3 - beta) ||Y*||^3` on R3b.
    pub norm_growth: Option<bool>,
    /// `<grad, Y> > 2 (1 - 1/gamma) ||Y Y^T||_F^2` on R3c.
    pub radial: Option<bool>,
}

impl R3Checks {
    pub fn violations(&self) -> usize {
        [self.grad_floor, self.norm_growth, self.radial].iter().filter(|c| **c == Some(false)).count()
    }
}

pub fn r3_checks(y: &Factor, a: &SymMatrix, target: &SpectralTarget, p: &RegionParams) -> Result<R3Checks> {
    let cls = classify(y, a, target, p)?;
    let grad = riem_grad(y, a)?.entries;
    let gn = grad.norm();
    let t = thresholds(target, p);
    let ynorm = cls.spectral_norm;
    let snorm = target.factor_norm();

    let grad_floor = cls.contains(RegionLabel::R3a).then_some(gn > t.grad);
    let norm_growth = cls.contains(RegionLabel::R3b).then(|| {
        let mid = 2.0 * (ynorm.powi(3) - ynorm * snorm * snorm);
        let floor = 2.0 * (p.beta.powi(3) - p.beta) * snorm.powi(3);
        // rounding slack on the first (non-strict) inequality only
        gn >= mid - 1e-10 * mid.abs() && mid > floor
    });
    let radial = cls.contains(RegionLabel::R3c).then(|| {
        let inner = grad.dot(y.matrix());
        inner > 2.0 * (1.0 - 1.0 / p.gamma) * cls.outer_frobenius.powi(2)
    });
    Ok(R3Checks { grad_floor, norm_growth, radial })
}

/// Error terms and the three conditions on `alpha` (at fixed `mu`) under which
/// escape directions are guaranteed, written with `Lambda = Sigma^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionParams {
    pub alpha: f64,
    pub mu: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    /// Left-hand sides; conditions 1 and 2 require `> 0`, condition 3 `< 0`.
    pub values: [f64; 3],
    pub checks: [bool; 3],
}

impl AssumptionParams {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|&c| c)
    }

    pub fn failing(&self) -> Vec<usize> {
        (0..3).filter(|&i| !self.checks[i]).map(|i| i + 1).collect()
    }
}

pub fn assumption_alpha_check(target: &SpectralTarget, alpha: f64, mu: f64) -> Result<AssumptionParams> {
    if !(alpha >= 0.0) || !(mu >= 0.0) {
        return Err(Error::input("alpha and mu must be nonnegative"));
    }
    let r = target.r();
    let sr_a = target.sigma(r);
    let sn_a = target.sigma_next();
    if !(sr_a > sn_a) {
        return Err(Error::NoEigengap { sigma_r: sr_a, sigma_next: sn_a });
    }
    if !(sn_a > 0.0) {
        return Err(Error::input("error terms need sigma_{r+1}(A) > 0"));
    }
    // sigma_i(Lambda)^2 = sigma_i(A) = sigma_i(Y*)^2
    let lam_r2 = sr_a;
    let lam_n = sn_a.sqrt();
    let lam_n2 = sn_a;
    let ys_r = target.factor_sigma_r();
    let kappa = target.kappa_star;

    let e1 = alpha * mu * ys_r.powi(3) / (2.0 * 2f64.sqrt() * kappa * lam_n);
    let e2 = e1 / 2f64.sqrt();
    let e3 = e2 * lam_n;

    let c1 = lam_r2 - 2.0 * e1 - lam_n2;
    let c2 = lam_r2 * (1.0 - e1 * e1 / (lam_r2 - e1 - lam_n2).powi(2)) - e1 - lam_n2;
    let c3 = (alpha - 2.0 * (2f64.sqrt() - 1.0)) * ys_r.powi(2)
        + 6.0 * (alpha * alpha * ys_r.powi(4) * lam_n2 / 16.0) / (lam_r2 - e2 - lam_n2).powi(2);
    let values = [c1, c2, c3];
    let checks = [c1 > 0.0, c2 > 0.0, c3 < 0.0];
    Ok(AssumptionParams { alpha, mu, e1, e2, e3, values, checks })
}

/// Largest `alpha` (to within `1e-6`, relative above 1) for which all three
/// conditions hold at the given `mu`.
pub fn largest_alpha(target: &SpectralTarget, mu: f64) -> Result<f64> {
    if !assumption_alpha_check(target, 0.0, mu)?.all_hold() {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while assumption_alpha_check(target, hi, mu)?.all_hold() {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(lo);
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-6 * hi.min(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if assumption_alpha_check(target, mid, mu)?.all_hold() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{loss, optimal_factor};
    use crate::sampling::{gaussian_matrix, random_pd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag321() -> SymMatrix {
        SymMatrix::from_diagonal(&[3.0, 2.0, 1.0])
    }

    fn col(v: &[f64]) -> Factor {
        Factor::new(DMatrix::from_column_slice(v.len(), 1, v)).unwrap()
    }

    #[test]
    fn combinations_enumerates_lexicographically() {
        let c = combinations(4, 2);
        assert_eq!(c, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(5, 5).len(), 1);
        assert_eq!(combinations(5, 1).len(), 5);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn classify_optimum_and_scaled() {
        let a = diag321();
        let t = optimal_factor(&a, 1).unwrap();
        let p = RegionParams::new(0.1, 0.1, 1.1, 1.1).unwrap();
        assert!(classify(&t.factor, &a, &t, &p).unwrap().contains(RegionLabel::R1));
        let big = Factor::new(t.factor.matrix() * 3.0).unwrap();
        assert!(classify(&big, &a, &t, &p).unwrap().contains(RegionLabel::R3c));
    }

    #[test]
    fn classify_saddle_is_r2() {
        let a = diag321();
        let t = optimal_factor(&a, 1).unwrap();
        let p = RegionParams::new(0.01, 0.01, 1.1, 1.1).unwrap();
        let c = classify(&col(&[0.0, 2f64.sqrt(), 0.0]), &a, &t, &p).unwrap();
        assert!(c.contains(RegionLabel::R2));
        assert!(!c.contains(RegionLabel::R1));
        assert!(c.grad_norm < 1e-12);
    }

    #[test]
    fn classify_rejects_rank_deficient() {
        let a = diag321();
        let t = optimal_factor(&a, 1).unwrap();
        let p = RegionParams::new(0.1, 0.1, 1.1, 1.1).unwrap();
        assert!(classify(&Factor::zeros(3, 1), &a, &t, &p).is_err());
        assert!(RegionParams::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn fosp_examples() {
        let a = diag321();
        let y = enumerate_fosp(&a, 1, &[1]).unwrap();
        assert!((y.matrix() - col(&[0.0, 2f64.sqrt(), 0.0]).matrix()).amax() < 1e-14);
        assert!(crate::ambient::riem_grad(&y, &a).unwrap().norm() < 1e-12);
        assert!(enumerate_fosp(&a, 2, &[0]).is_err());
        assert!(enumerate_fosp(&a, 2, &[0, 0]).is_err());
        assert!(enumerate_fosp(&a, 1, &[3]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_pd(5, &mut rng);
        let t = optimal_factor(&a, 2).unwrap();
        let top = enumerate_fosp(&a, 2, &[0, 1]).unwrap();
        assert!((top.matrix() - t.factor.matrix()).amax() < 1e-12);
    }

    #[test]
    fn saddle_energy_gap_by_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_pd(5, &mut rng);
        let r = 2;
        let t = optimal_factor(&a, r).unwrap();
        let base = loss(&t.factor, &a).unwrap();
        for (s, y) in all_fosps(&a, r).unwrap() {
            let gap = loss(&y, &a).unwrap() - base;
            let missing: f64 = (0..r).filter(|i| !s.contains(i)).map(|i| t.spectrum[i].powi(2)).sum();
            let extra: f64 = s.iter().filter(|&&i| i >= r).map(|&i| t.spectrum[i].powi(2)).sum();
            assert!((gap - (missing - extra)).abs() < 1e-10);
            if s == vec![0, 1] {
                assert!(gap.abs() < 1e-10);
            } else {
                assert!(gap > 1e-6);
            }
        }
    }

    #[test]
    fn escape_worked_example() {
        let a = diag321();
        let t = optimal_factor(&a, 1).unwrap();
        let rep = escape_direction(&col(&[0.0, 2f64.sqrt(), 0.0]), &a, &t).unwrap();
        assert_eq!(rep.which, EscapeCandidate::Theta1);
        assert!((rep.hess_value + 2.0).abs() < 1e-12);
        assert!((rep.direction[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(rep.found());
        assert_eq!(rep.certificate.tilde_i, 0);
        // 2 D^2 - 2 a^T A a
        let c = &rep.certificate;
        assert!((2.0 * c.d_min.powi(2) - 2.0 * c.rayleigh - rep.hess_value).abs() < 1e-12);
    }

    #[test]
    fn escape_perturbed_saddle() {
        let a = diag321();
        let t = optimal_factor(&a, 1).unwrap();
        let rep = escape_direction(&col(&[0.0, 2f64.sqrt(), 0.01]), &a, &t).unwrap();
        assert!(rep.hess_value < 0.0);
    }

    #[test]
    fn escape_near_optimum_and_inside_r1() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_pd(5, &mut rng);
        let t = optimal_factor(&a, 2).unwrap();
        let rep = escape_direction(&t.factor, &a, &t).unwrap();
        assert_eq!(rep.verdict, EscapeVerdict::NearOptimum);

        let mu = convexity_mu_limit(&t).unwrap() * 0.5;
        let radius = mu * t.factor_sigma_r() / t.kappa_star;
        let y =
            Factor::new(t.factor.matrix() + crate::sampling::unit_direction(5, 2, &mut rng) * (0.5 * radius))
                .unwrap();
        let rep = escape_direction(&y, &a, &t).unwrap();
        assert_eq!(rep.verdict, EscapeVerdict::NoEscape);
        assert!(rep.certificate.hess_theta1.unwrap() >= 0.0);
        assert!(rep.certificate.hess_theta2.unwrap() >= 0.0);
    }

    #[test]
    fn r1_bounds_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_pd(5, &mut rng);
        let t = optimal_factor(&a, 2).unwrap();
        let b = r1_bounds(&t, 0.0).unwrap();
        assert!((b.lower - 2.0 * (t.spectrum[1] - t.spectrum[2])).abs() < 1e-12);
        assert!(b.convex);
        assert!(r1_bounds(&t, -0.1).is_err());
        assert!(r1_bounds(&t, t.kappa_star).is_err());
        let limit = convexity_mu_limit(&t).unwrap();
        if limit < t.kappa_star / 3.0 {
            assert!(r1_bounds(&t, limit * (1.0 - 1e-9)).unwrap().convex);
            assert!(!r1_bounds(&t, (limit * (1.0 + 1e-9)).min(t.kappa_star / 3.0)).unwrap().convex);
        }
    }

    #[test]
    fn r3_norm_growth_on_scaled_optimum() {
        let a = diag321();
        let t = optimal_factor(&a, 2).unwrap();
        let beta = 1.5;
        let p = RegionParams::new(0.1, 0.1, beta, 100.0).unwrap();
        let y = Factor::new(t.factor.matrix() * (2.0 * beta)).unwrap();
        let c = r3_checks(&y, &a, &t, &p).unwrap();
        assert_eq!(c.norm_growth, Some(true));
        assert_eq!(c.violations(), 0);
    }

    #[test]
    fn r3_random_no_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_pd(6, &mut rng);
        let t = optimal_factor(&a, 2).unwrap();
        let p = RegionParams::new(0.1, 0.5, 1.2, 1.2).unwrap();
        for k in 0..500 {
            let scale = 0.2 + (k % 10) as f64 * 0.3;
            let y = Factor::new(gaussian_matrix(6, 2, &mut rng) * scale).unwrap();
            assert_eq!(r3_checks(&y, &a, &t, &p).unwrap().violations(), 0);
        }
    }

    #[test]
    fn assumption_limits() {
        let a = diag321();
        let t = optimal_factor(&a, 1).unwrap();
        let zero = assumption_alpha_check(&t, 0.0, 0.1).unwrap();
        assert!(zero.all_hold());
        assert!((zero.values[0] - (3.0 - 2.0)).abs() < 1e-12);
        assert!((zero.values[2] + 2.0 * (2f64.sqrt() - 1.0) * 3.0).abs() < 1e-12);
        let best = largest_alpha(&t, 0.1).unwrap();
        assert!(best > 0.0);
        assert!(assumption_alpha_check(&t, best, 0.1).unwrap().all_hold());
        assert!(!assumption_alpha_check(&t, best * 1.01 + 1e-6, 0.1).unwrap().all_hold());
        let p = assumption_alpha_check(&t, 0.3, 0.1).unwrap();
        assert!((p.e2 * 2f64.sqrt() - p.e1).abs() < 1e-15);
        assert!((p.e3 - p.e2 * 2f64.sqrt()).abs() < 1e-15);

        let flat = optimal_factor(&SymMatrix::from_diagonal(&[2.0, 2.0, 1.0]), 1).unwrap();
        assert!(matches!(assumption_alpha_check(&flat, 0.1, 0.1), Err(Error::NoEigengap { .. })));
    }
}
