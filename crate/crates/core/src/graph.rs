//! Point clouds, similarity graphs and the operators built from them.
//!
//! The adjacency operator is `A = D^{-1/2} G D^{-1/2} + a I` with `a > 1`, and
//! the normalized Laplacian is `L = I - D^{-1/2} G D^{-1/2}`, so
//! `A + L = (a + 1) I` and the top eigenvectors of `A` are the bottom
//! eigenvectors of `L`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, sym_eig, EigDecomp, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudSource {
    Sphere,
    File,
    Synthetic,
}

/// `n` points in `R^d`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    pub source: CloudSource,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>, source: CloudSource) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::input(format!(
                "a point cloud needs at least 2 points, got {}",
                points.nrows()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::input("points must have ambient dimension >= 1"));
        }
        check_finite(&points)?;
        Ok(PointCloud { points, source })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::dims("permutation length differs from n"));
        }
        let pts = DMatrix::from_fn(self.n(), self.d(), |i, j| self.points[(perm[i], j)]);
        PointCloud::new(pts, self.source)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        PointCloud::new(&self.points * c, self.source)
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d() {
            let t = self.points[(i, k)] - self.points[(j, k)];
            s += t * t;
        }
        s
    }

    /// Exact pairwise Euclidean distances, evaluated once per unordered pair.
    pub fn pairwise_distances(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.sq_dist(i, j).sqrt();
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        d
    }
}

/// `n` i.i.d. uniform points on the unit sphere `S^2` in `R^3`, obtained by
/// normalizing standard Gaussian vectors.
pub fn sample_sphere(n: usize, seed: u64) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::input(format!("sample_sphere needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = DMatrix::zeros(n, 3);
    for i in 0..n {
        loop {
            let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if norm > 1e-12 {
                for k in 0..3 {
                    pts[(i, k)] = g[k] / norm;
                }
                break;
            }
        }
    }
    PointCloud::new(pts, CloudSource::Sphere)
}

/// Similarity profile `eta` applied to `||x_i - x_j|| / epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `1{t <= 1}`
    Indicator,
    /// `exp(-t^2)`
    #[default]
    Gaussian,
    /// `exp(-t)`
    Exponential,
}

impl Kernel {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Kernel::Indicator => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-t * t).exp(),
            Kernel::Exponential => (-t).exp(),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indicator" => Ok(Kernel::Indicator),
            "gaussian" => Ok(Kernel::Gaussian),
            "exponential" => Ok(Kernel::Exponential),
            other => Err(Error::input(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum GraphRule {
    Kernel { kernel: Kernel, epsilon: f64 },
    Knn { k: usize },
}

#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub cloud: PointCloud,
    pub weights: SymMatrix,
    pub rule: GraphRule,
}

impl SimilarityGraph {
    pub fn n(&self) -> usize {
        self.weights.dim()
    }

    pub fn degrees(&self) -> DVector<f64> {
        let g = self.weights.matrix();
        DVector::from_iterator(self.n(), (0..self.n()).map(|i| g.row(i).sum()))
    }

    /// `D_G - G`, the unnormalized Laplacian.
    pub fn unnormalized_laplacian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees()) - self.weights.matrix()
    }

    fn checked_inv_sqrt_degrees(&self) -> Result<DVector<f64>> {
        let deg = self.degrees();
        let mut out = DVector::zeros(deg.len());
        for (i, &d) in deg.iter().enumerate() {
            if d <= 0.0 {
                return Err(Error::ZeroDegree { vertex: i });
            }
            out[i] = 1.0 / d.sqrt();
        }
        Ok(out)
    }

    /// `D^{-1/2} G D^{-1/2}`.
    fn normalized_weights(&self) -> Result<DMatrix<f64>> {
        let s = self.checked_inv_sqrt_degrees()?;
        let g = self.weights.matrix();
        Ok(DMatrix::from_fn(self.n(), self.n(), |i, j| s[i] * g[(i, j)] * s[j]))
    }
}

fn ensure_positive_degrees(weights: &SymMatrix) -> Result<()> {
    let g = weights.matrix();
    for i in 0..weights.dim() {
        if g.row(i).sum() <= 0.0 {
            return Err(Error::ZeroDegree { vertex: i });
        }
    }
    Ok(())
}

/// `G_ij = eta(||x_i - x_j|| / epsilon)`, diagonal included (`G_ii = eta(0)`).
pub fn build_kernel_graph(cloud: &PointCloud, epsilon: f64, kernel: Kernel) -> Result<SimilarityGraph> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = cloud.n();
    let dist = cloud.pairwise_distances();
    let g = DMatrix::from_fn(n, n, |i, j| kernel.eval(dist[(i, j)] / epsilon));
    let weights = SymMatrix::new(g)?;
    ensure_positive_degrees(&weights)?;
    Ok(SimilarityGraph { cloud: cloud.clone(), weights, rule: GraphRule::Kernel { kernel, epsilon } })
}

/// Binary k-nearest-neighbour graph, symmetrized by OR, without self-loops.
/// Equal distances are resolved in favour of the lower index.
pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<SimilarityGraph> {
    let n = cloud.n();
    if k == 0 || k >= n {
        return Err(Error::input(format!("knn needs 1 <= k < n, got k={k}, n={n}")));
    }
    let dist = cloud.pairwise_distances();
    let mut g = DMatrix::zeros(n, n);
    let mut others: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&j| j != i));
        others.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
        for &j in &others[..k] {
            g[(i, j)] = 1.0;
            g[(j, i)] = 1.0;
        }
    }
    let weights = SymMatrix::new(g)?;
    ensure_positive_degrees(&weights)?;
    Ok(SimilarityGraph { cloud: cloud.clone(), weights, rule: GraphRule::Knn { k } })
}

/// `I - D^{-1/2} G D^{-1/2}`.
pub fn normalized_laplacian(g: &SimilarityGraph) -> Result<SymMatrix> {
    let w = g.normalized_weights()?;
    SymMatrix::new(DMatrix::identity(g.n(), g.n()) - w)
}

/// How an operator was produced; serialized into operator files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum OperatorRule {
    Kernel {
        kernel: Kernel,
        epsilon: f64,
    },
    Knn {
        k: usize,
    },
    /// Gram matrix of row-normalized points, no shift.
    Gram,
    /// Loaded from a matrix file without provenance.
    Custom,
}

impl From<GraphRule> for OperatorRule {
    fn from(r: GraphRule) -> Self {
        match r {
            GraphRule::Kernel { kernel, epsilon } => OperatorRule::Kernel { kernel, epsilon },
            GraphRule::Knn { k } => OperatorRule::Knn { k },
        }
    }
}

/// A symmetric operator together with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct AdjacencyOperator {
    pub matrix: SymMatrix,
    /// The shift `a`; zero for Gram and custom operators.
    pub shift: f64,
    /// The normalized Laplacian, present for graph-derived operators.
    pub laplacian: Option<SymMatrix>,
    pub eig: EigDecomp,
    pub rule: OperatorRule,
}

impl AsRef<SymMatrix> for AdjacencyOperator {
    fn as_ref(&self) -> &SymMatrix {
        &self.matrix
    }
}

/// `D^{-1/2} G D^{-1/2} + a I` for `a > 1`.
pub fn adjacency_operator(g: &SimilarityGraph, a: f64) -> Result<AdjacencyOperator> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(Error::input(format!("shift a must satisfy a > 1, got {a}")));
    }
    let n = g.n();
    let w = g.normalized_weights()?;
    let matrix = SymMatrix::new(&w + DMatrix::identity(n, n) * a)?;
    let laplacian = SymMatrix::new(DMatrix::identity(n, n) - w)?;
    let eig = sym_eig(&matrix)?;
    Ok(AdjacencyOperator { matrix, shift: a, laplacian: Some(laplacian), eig, rule: g.rule.into() })
}

impl AdjacencyOperator {
    /// Gram matrix `X X^T` of the row-normalized points. Positive
    /// semidefinite by construction; definiteness must be checked with
    /// [`AdjacencyOperator::is_positive_definite`], not assumed.
    pub fn gram(cloud: &PointCloud) -> Result<Self> {
        let x = cloud.points();
        let mut xn = x.clone();
        for i in 0..x.nrows() {
            let nrm = x.row(i).norm();
            if nrm == 0.0 {
                return Err(Error::input(format!("point {i} is zero and cannot be normalized")));
            }
            for j in 0..x.ncols() {
                xn[(i, j)] /= nrm;
            }
        }
        let matrix = SymMatrix::new(&xn * xn.transpose())?;
        let eig = sym_eig(&matrix)?;
        Ok(AdjacencyOperator { matrix, shift: 0.0, laplacian: None, eig, rule: OperatorRule::Gram })
    }

    pub fn from_matrix(matrix: SymMatrix, shift: f64, rule: OperatorRule) -> Result<Self> {
        let eig = sym_eig(&matrix)?;
        let laplacian =
            if shift > 0.0 && matches!(rule, OperatorRule::Kernel { .. } | OperatorRule::Knn { .. }) {
                let n = matrix.dim();
                Some(SymMatrix::new(DMatrix::identity(n, n) * (shift + 1.0) - matrix.matrix())?)
            } else {
                None
            };
        Ok(AdjacencyOperator { matrix, shift, laplacian, eig, rule })
    }

    pub fn n(&self) -> usize {
        self.matrix.dim()
    }

    /// Eigenvalues in non-increasing order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eig.values
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eig.values[self.n() - 1] > 0.0
    }

    /// `sigma_r - sigma_{r+1}` (1-based), with `sigma_{n+1} = 0`.
    pub fn spectral_gap(&self, r: usize) -> Result<f64> {
        let n = self.n();
        if r == 0 || r > n {
            return Err(Error::input(format!("rank r must be in 1..={n}, got {r}")));
        }
        let next = if r < n { self.eig.values[r] } else { 0.0 };
        Ok(self.eig.values[r - 1] - next)
    }

    /// Whether `sigma_{r+1} < sigma_r` strictly.
    pub fn has_eigengap(&self, r: usize) -> Result<bool> {
        Ok(self.spectral_gap(r)? > 0.0)
    }
}
