//! Fully connected ReLU networks `f(x) = W_L relu(... relu(W_1 x + b_1) ...) + b_L`
//! trained on the spectral contrastive loss, hand-written backpropagation and
//! Adam included.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{loss, Factor, SpectralTarget};
use crate::error::{Error, Result};
use crate::graph::{PointCloud, SimilarityGraph};
use crate::linalg::{spectral_norm, SymMatrix};
use crate::optimizer::Schedule;
use crate::trajectory::{TrajRecord, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Checkpoint", try_from = "Checkpoint")]
pub struct ReluNet {
    /// `W_l` is `widths[l+1] x widths[l]`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub kappa: Option<f64>,
    /// Clamp every parameter to `[-kappa, kappa]` after each update.
    pub clip: bool,
    /// Nonzero-parameter budget; reported against, never enforced.
    pub sparsity_budget: Option<usize>,
}

/// On-disk form; weights are lists of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    depth: usize,
    widths: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    clip: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sparsity_budget: Option<usize>,
}

impl From<ReluNet> for Checkpoint {
    fn from(net: ReluNet) -> Self {
        Checkpoint {
            depth: net.depth(),
            widths: net.widths(),
            weights: net.weights.iter().map(crate::linalg::matrix_to_rows).collect(),
            biases: net.biases.iter().map(|b| b.as_slice().to_vec()).collect(),
            kappa: net.kappa,
            clip: net.clip,
            sparsity_budget: net.sparsity_budget,
        }
    }
}

impl TryFrom<Checkpoint> for ReluNet {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        if c.weights.len() != c.depth || c.biases.len() != c.depth || c.widths.len() != c.depth + 1 {
            return Err(Error::Parse("checkpoint depth does not match its layers".into()));
        }
        let weights =
            c.weights.iter().map(|rows| crate::linalg::rows_to_matrix(rows)).collect::<Result<Vec<_>>>()?;
        let biases = c.biases.into_iter().map(DVector::from_vec).collect();
        let mut net = ReluNet::from_parts(weights, biases)?;
        if net.widths() != c.widths {
            return Err(Error::Parse("checkpoint widths do not match its layers".into()));
        }
        net.kappa = c.kappa;
        net.clip = c.clip;
        net.sparsity_budget = c.sparsity_budget;
        Ok(net)
    }
}

/// Gradients (or any parameter-shaped quantity) of a [`ReluNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrad {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl NetGrad {
    pub fn norm(&self) -> f64 {
        let w: f64 = self.weights.iter().map(|m| m.norm_squared()).sum();
        let b: f64 = self.biases.iter().map(|v| v.norm_squared()).sum();
        (w + b).sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.weights.iter_mut().for_each(|m| *m *= c);
        self.biases.iter_mut().for_each(|v| *v *= c);
    }

    pub fn add(&mut self, other: &NetGrad) {
        for (m, o) in self.weights.iter_mut().zip(&other.weights) {
            *m += o;
        }
        for (v, o) in self.biases.iter_mut().zip(&other.biases) {
            *v += o;
        }
    }

    /// All entries, layer by layer, weights (column-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}

impl ReluNet {
    /// Network with the given widths `(d, p, ..., p, r)`, parameters drawn
    /// uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        check_widths(widths)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            weights.push(DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..=bound)));
            biases.push(DVector::from_fn(w[1], |_, _| rng.random_range(-bound..=bound)));
        }
        ReluNet::from_parts(weights, biases)
    }

    pub fn seeded(widths: &[usize], seed: u64) -> Result<Self> {
        ReluNet::new(widths, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let weights = widths.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect();
        let biases = widths[1..].iter().map(|&p| DVector::zeros(p)).collect();
        ReluNet::from_parts(weights, biases)
    }

    /// `(d, width, ..., width, r)` with `depth` affine layers.
    pub fn uniform_widths(d: usize, width: usize, depth: usize, r: usize) -> Vec<usize> {
        let mut w = vec![d];
        w.extend(std::iter::repeat_n(width, depth.saturating_sub(1)));
        w.push(r);
        w
    }

    pub fn from_parts(weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::input("a network needs one bias per weight matrix and at least one layer"));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != b.len() || w.nrows() == 0 || w.ncols() == 0 {
                return Err(Error::dims(format!(
                    "layer {l}: weight {}x{} with bias {}",
                    w.nrows(),
                    w.ncols(),
                    b.len()
                )));
            }
            if l > 0 && weights[l - 1].nrows() != w.ncols() {
                return Err(Error::dims(format!(
                    "layer {l} input width {} != previous output {}",
                    w.ncols(),
                    weights[l - 1].nrows()
                )));
            }
            crate::linalg::check_finite(w)?;
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("layer {l} bias is not finite")));
            }
        }
        Ok(ReluNet { weights, biases, kappa: None, clip: false, sparsity_budget: None })
    }

    pub fn with_kappa(mut self, kappa: f64, clip: bool) -> Self {
        self.kappa = Some(kappa);
        self.clip = clip;
        if clip {
            self.clamp();
        }
        self
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.weights[0].ncols()];
        w.extend(self.weights.iter().map(|m| m.nrows()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.depth() - 1].nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn zero_grad(&self) -> NetGrad {
        NetGrad {
            weights: self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: self.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        NetGrad { weights: self.weights.clone(), biases: self.biases.clone() }.flatten()
    }

    fn apply_flat(&mut self, delta: &[f64]) {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.as_mut_slice().iter_mut().chain(b.as_mut_slice().iter_mut()) {
                *v += delta[k];
                k += 1;
            }
        }
    }

    /// `theta <- theta - lr * g`.
    pub fn sgd_step(&mut self, g: &NetGrad, lr: f64) {
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            *w -= gw * lr;
        }
        for (b, gb) in self.biases.iter_mut().zip(&g.biases) {
            *b -= gb * lr;
        }
        if self.clip {
            self.clamp();
        }
    }

    fn clamp(&mut self) {
        if let Some(k) = self.kappa {
            self.weights.iter_mut().for_each(|w| w.apply(|v| *v = v.clamp(-k, k)));
            self.biases.iter_mut().for_each(|b| b.apply(|v| *v = v.clamp(-k, k)));
        }
    }

    /// Largest absolute parameter.
    pub fn max_abs_param(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h = DVector::from_column_slice(x);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = w * h + b;
            if l + 1 < self.depth() {
                h.apply(|v| *v = relu(*v));
            }
        }
        Ok(h)
    }

    /// Rows are `f(x_i)` for the rows `x_i` of `x`.
    pub fn eval_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    /// `Y_theta`, one row per point.
    pub fn batch_output(&self, cloud: &PointCloud) -> Result<Factor> {
        Factor::new(self.eval_rows(cloud.points())?)
    }

    fn forward_cached(&self, x: &DMatrix<f64>) -> Result<Forward> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims(format!(
                "points have dimension {}, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        // pre[l] is the pre-activation of hidden layer l; acts[0] is the input
        let mut acts = vec![x.clone()];
        let mut pre = Vec::new();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].clone() * w.transpose();
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            if l + 1 < self.depth() {
                let h = z.map(relu);
                pre.push(z);
                acts.push(h);
            } else {
                return Ok(Forward { acts, pre, output: z });
            }
        }
        unreachable!("network has at least one layer")
    }

    /// Reverse pass for an upstream gradient `dL/dY` (n x r).
    fn backward(&self, fw: &Forward, upstream: DMatrix<f64>) -> NetGrad {
        let depth = self.depth();
        let mut g = self.zero_grad();
        let mut dz = upstream;
        for l in (0..depth).rev() {
            g.weights[l] = dz.transpose() * &fw.acts[l];
            g.biases[l] = dz.row_sum().transpose();
            if l > 0 {
                let mut dh = &dz * &self.weights[l];
                dh.zip_apply(&fw.pre[l - 1], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = dh;
            }
        }
        g
    }

    /// Gradient of `sum_i <upstream_i, f(x_i)>` with respect to the parameters.
    pub fn vjp(&self, x: &DMatrix<f64>, upstream: &DMatrix<f64>) -> Result<NetGrad> {
        let fw = self.forward_cached(x)?;
        if upstream.shape() != fw.output.shape() {
            return Err(Error::dims("upstream gradient shape differs from the output"));
        }
        Ok(self.backward(&fw, upstream.clone()))
    }

    /// Product of layer spectral norms, a Lipschitz constant of `f`.
    pub fn lipschitz_bound(&self) -> Result<f64> {
        self.weights.iter().try_fold(1.0, |acc, w| Ok(acc * spectral_norm(w)?))
    }

    /// Nonzero count after zeroing parameters with `|v| <= threshold`, checked
    /// against the budget, `kappa` and equal hidden widths.
    pub fn sparsity_report(&self, threshold: f64) -> SparsityReport {
        let flat = self.flatten();
        let nonzeros = flat.iter().filter(|v| v.abs() > threshold).count();
        let widths = self.widths();
        let hidden = &widths[1..widths.len() - 1];
        SparsityReport {
            nonzeros,
            total: flat.len(),
            budget: self.sparsity_budget,
            within_budget: self.sparsity_budget.is_none_or(|n| nonzeros <= n),
            kappa_violations: self.kappa.map_or(0, |k| flat.iter().filter(|v| v.abs() > k).count()),
            equal_hidden_widths: hidden.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub nonzeros: usize,
    pub total: usize,
    pub budget: Option<usize>,
    pub within_budget: bool,
    pub kappa_violations: usize,
    pub equal_hidden_widths: bool,
}

struct Forward {
    acts: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::input(format!("widths must have at least two positive entries, got {widths:?}")));
    }
    Ok(())
}

fn check_operator(cloud: &PointCloud, a: &SymMatrix) -> Result<()> {
    if cloud.n() != a.dim() {
        return Err(Error::dims(format!(
            "cloud has {} points but operator is {}x{}",
            cloud.n(),
            a.dim(),
            a.dim()
        )));
    }
    Ok(())
}

/// `||Y_theta Y_theta^T - A||_F^2`, the same function as the ambient loss.
pub fn snn_loss(net: &ReluNet, cloud: &PointCloud, a: &SymMatrix) -> Result<f64> {
    check_operator(cloud, a)?;
    loss(&Factor::new(net.eval_rows(cloud.points())?)?, a)
}

/// `sum_ij (A_ij - <f(x_i), f(x_j)>)^2` evaluated term by term.
pub fn snn_loss_pairwise(net: &ReluNet, cloud: &PointCloud, a: &SymMatrix) -> Result<f64> {
    check_operator(cloud, a)?;
    let y = net.eval_rows(cloud.points())?;
    let n = y.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = a.matrix()[(i, j)] - y.row(i).dot(&y.row(j));
            total += d * d;
        }
    }
    Ok(total)
}

/// Loss and its exact parameter gradient; `dL/dY = 4 (Y Y^T - A) Y`.
pub fn backprop_grad(net: &ReluNet, cloud: &PointCloud, a: &SymMatrix) -> Result<(f64, NetGrad)> {
    check_operator(cloud, a)?;
    let fw = net.forward_cached(cloud.points())?;
    let y = &fw.output;
    let resid = y * y.transpose() - a.matrix();
    let value = resid.norm_squared();
    let upstream = (&resid * y) * 4.0;
    Ok((value, net.backward(&fw, upstream)))
}

/// Gradient of `sum_{(i,j) in pairs} (A_ij - <f(x_i), f(x_j)>)^2`.
pub fn pair_grad(
    net: &ReluNet,
    cloud: &PointCloud,
    a: &SymMatrix,
    pairs: &[(usize, usize)],
) -> Result<NetGrad> {
    check_operator(cloud, a)?;
    let n = cloud.n();
    if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
        return Err(Error::input("pair index out of range"));
    }
    // only rows that appear in some pair enter the forward pass
    let mut slot = vec![usize::MAX; n];
    let mut rows = Vec::new();
    for &(i, j) in pairs {
        for k in [i, j] {
            if slot[k] == usize::MAX {
                slot[k] = rows.len();
                rows.push(k);
            }
        }
    }
    let x = cloud.points().select_rows(&rows);
    let fw = net.forward_cached(&x)?;
    let y = &fw.output;
    let mut upstream = DMatrix::zeros(y.nrows(), y.ncols());
    for &(i, j) in pairs {
        let (si, sj) = (slot[i], slot[j]);
        let c = -2.0 * (a.matrix()[(i, j)] - y.row(si).dot(&y.row(sj)));
        let (yi, yj) = (y.row(si).into_owned(), y.row(sj).into_owned());
        let mut ri = upstream.row_mut(si);
        ri += yj * c;
        let mut rj = upstream.row_mut(sj);
        rj += yi * c;
    }
    Ok(net.backward(&fw, upstream))
}

/// `batch` pairs drawn uniformly with replacement from `[n] x [n]`.
pub fn sample_pairs<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<(usize, usize)> {
    (0..batch).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect()
}

/// Pair-sampled gradient; with `scaled` it is multiplied by `n^2 / batch`,
/// making it an unbiased estimate of the full gradient.
pub fn minibatch_grad<R: Rng + ?Sized>(
    net: &ReluNet,
    cloud: &PointCloud,
    a: &SymMatrix,
    batch: usize,
    scaled: bool,
    rng: &mut R,
) -> Result<NetGrad> {
    if batch == 0 {
        return Err(Error::input("batch_pairs must be at least 1"));
    }
    let pairs = sample_pairs(cloud.n(), batch, rng);
    let mut g = pair_grad(net, cloud, a, &pairs)?;
    if scaled {
        let n = cloud.n() as f64;
        g.scale(n * n / batch as f64);
    }
    Ok(g)
}

/// One SGD step on a freshly sampled batch of pairs.
pub fn minibatch_step<R: Rng + ?Sized>(
    net: &ReluNet,
    cloud: &PointCloud,
    a: &SymMatrix,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ReluNet> {
    let g = minibatch_grad(net, cloud, a, cfg.batch_pairs, cfg.scale_minibatch, rng)?;
    let mut out = net.clone();
    out.sgd_step(&g, cfg.lr);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FullGd,
    MinibatchPairs,
    Adam,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_gd" | "gd" => Ok(Method::FullGd),
            "minibatch_pairs" | "minibatch" => Ok(Method::MinibatchPairs),
            "adam" => Ok(Method::Adam),
            other => Err(Error::input(format!("unknown training method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    /// Zero is allowed and leaves the network unchanged.
    pub lr: f64,
    pub iters: usize,
    pub batch_pairs: usize,
    pub schedule: Schedule,
    pub seed: u64,
    /// Multiply minibatch gradients by `n^2 / batch_pairs`.
    pub scale_minibatch: bool,
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Adam,
            lr: 1e-3,
            iters: 1000,
            batch_pairs: 1,
            schedule: Schedule::Constant,
            seed: 0,
            scale_minibatch: false,
            record_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::input(format!("lr must be finite and nonnegative, got {}", self.lr)));
        }
        if self.batch_pairs == 0 {
            return Err(Error::input("batch_pairs must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::input("record_every must be at least 1"));
        }
        Ok(())
    }
}

/// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Adam { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, net: &mut ReluNet, g: &NetGrad, lr: f64) {
        self.t += 1;
        let flat = g.flatten();
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut delta = vec![0.0; flat.len()];
        for (k, gk) in flat.iter().enumerate() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gk;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gk * gk;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            delta[k] = -lr * mh / (vh.sqrt() + self.eps);
        }
        net.apply_flat(&delta);
        if net.clip {
            net.clamp();
        }
    }
}

/// Outcome of fitting the network output to a fixed factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PretrainReport {
    pub iters_run: usize,
    pub initial_residual: f64,
    /// `||Y_theta - target||_F^2` at the end.
    pub residual: f64,
}

/// Minimizes `||Y_theta - target||_F^2`, stopping early once the residual is
/// at most `tol`.
pub fn pretrain_to_target(
    net: &ReluNet,
    cloud: &PointCloud,
    target: &DMatrix<f64>,
    cfg: &TrainConfig,
    tol: f64,
) -> Result<(ReluNet, PretrainReport)> {
    cfg.validate()?;
    if target.nrows() != cloud.n() || target.ncols() != net.output_dim() {
        return Err(Error::dims("pretraining target shape differs from the network output"));
    }
    let mut net = net.clone();
    let mut adam = Adam::new(net.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = cloud.points();
    let mut initial = None;
    let mut residual = f64::NAN;
    let mut iters_run = 0;
    for k in 0..=cfg.iters {
        let fw = net.forward_cached(x)?;
        let diff = &fw.output - target;
        residual = diff.norm_squared();
        if !residual.is_finite() {
            return Err(Error::TrainingDiverged { iter: k, last: Box::new(net) });
        }
        initial.get_or_insert(residual);
        if residual <= tol || k == cfg.iters {
            break;
        }
        let lr = cfg.schedule.step(cfg.lr, k, cfg.iters);
        let g = match cfg.method {
            Method::MinibatchPairs => {
                // rows sampled with replacement, unscaled
                let rows: Vec<usize> = (0..cfg.batch_pairs).map(|_| rng.random_range(0..cloud.n())).collect();
                let mut up = DMatrix::zeros(diff.nrows(), diff.ncols());
                for &i in &rows {
                    let d = diff.row(i).into_owned();
                    let mut row = up.row_mut(i);
                    row += d * 2.0;
                }
                net.backward(&fw, up)
            }
            _ => net.backward(&fw, diff * 2.0),
        };
        match cfg.method {
            Method::Adam => adam.step(&mut net, &g, lr),
            _ => net.sgd_step(&g, lr),
        }
        iters_run = k + 1;
    }
    Ok((net, PretrainReport { iters_run, initial_residual: initial.unwrap_or(residual), residual }))
}

/// Trains on the spectral contrastive loss, recording the loss, the parameter
/// gradient norm and the distance of `Y_theta` to the class of `Y*`.
pub fn train(
    net: &ReluNet,
    cloud: &PointCloud,
    a: &SymMatrix,
    target: &SpectralTarget,
    cfg: &TrainConfig,
) -> Result<(ReluNet, Trajectory)> {
    cfg.validate()?;
    check_operator(cloud, a)?;
    if target.r() != net.output_dim() {
        return Err(Error::dims("target rank differs from network output width"));
    }
    let mut net = net.clone();
    let mut adam = Adam::new(net.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut traj = Trajectory::default();
    for k in 0..=cfg.iters {
        let (value, g) = backprop_grad(&net, cloud, a)?;
        if !value.is_finite() {
            return Err(Error::TrainingDiverged { iter: k, last: Box::new(net) });
        }
        let lr = cfg.schedule.step(cfg.lr, k.min(cfg.iters), cfg.iters.max(1));
        if k % cfg.record_every == 0 || k == cfg.iters {
            let y = Factor::new(net.eval_rows(cloud.points())?)?;
            let dist = target.distance(&y).unwrap_or(f64::NAN);
            traj.push(TrajRecord {
                iter: k,
                loss: value,
                grad_norm: g.norm(),
                dist,
                labels: String::new(),
                step: lr,
                escape_event: false,
            });
        }
        if k == cfg.iters {
            break;
        }
        let before = net.clone();
        match cfg.method {
            Method::FullGd => net.sgd_step(&g, lr),
            Method::Adam => adam.step(&mut net, &g, lr),
            Method::MinibatchPairs => {
                let gm = minibatch_grad(&net, cloud, a, cfg.batch_pairs, cfg.scale_minibatch, &mut rng)?;
                net.sgd_step(&gm, lr);
            }
        }
        if net.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { iter: k + 1, last: Box::new(before) });
        }
    }
    Ok((net, traj))
}

/// Largest-magnitude Hessian eigenvalue of the loss in parameter space, by
/// power iteration on central-difference Hessian-vector products.
pub fn sharpness(net: &ReluNet, cloud: &PointCloud, a: &SymMatrix, iters: usize, seed: u64) -> Result<f64> {
    let p = net.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scale = 1e-4 * (1.0 + net.flatten().iter().map(|x| x * x).sum::<f64>().sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
        let shifted = |s: f64| -> Result<Vec<f64>> {
            let mut m = net.clone();
            m.clip = false;
            let delta: Vec<f64> = v.iter().map(|x| x * s).collect();
            m.apply_flat(&delta);
            Ok(backprop_grad(&m, cloud, a)?.1.flatten())
        };
        let (gp, gm) = (shifted(scale)?, shifted(-scale)?);
        let hv: Vec<f64> = gp.iter().zip(&gm).map(|(x, y)| (x - y) / (2.0 * scale)).collect();
        lambda = hv.iter().zip(&v).map(|(h, x)| h * x).sum();
        v = hv;
    }
    Ok(lambda.abs())
}

/// The trained map evaluated at new points; one row per point.
pub fn out_of_sample(net: &ReluNet, points: &PointCloud) -> Result<DMatrix<f64>> {
    net.eval_rows(points.points())
}

/// `(1/n^2) sum_ij G_ij ||f(x_i) - f(x_j)||^2` and `||Y^T Y - n I||_F`.
pub fn spectralnet_loss(net: &ReluNet, graph: &SimilarityGraph) -> Result<(f64, f64)> {
    let y = net.eval_rows(graph.cloud.points())?;
    let n = y.nrows();
    let g = graph.weights.matrix();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if g[(i, j)] != 0.0 {
                total += g[(i, j)] * (y.row(i) - y.row(j)).norm_squared();
            }
        }
    }
    let nf = n as f64;
    let constraint = (y.transpose() * &y - DMatrix::identity(y.ncols(), y.ncols()) * nf).norm();
    Ok((total / (nf * nf), constraint))
}
