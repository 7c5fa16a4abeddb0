//! End-to-end runs producing the data behind the sphere-eigenvector figure and
//! the ambient-versus-network trajectory figures.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{optimal_factor_from_eig, Factor, SpectralTarget};
use crate::error::{Error, Result};
use crate::graph::{
    adjacency_operator, build_knn_graph, sample_sphere, AdjacencyOperator, CloudSource, PointCloud,
};
use crate::io::{open_output, write_csv_matrix, write_json, RunMeta};
use crate::landscape::fosp_from_eig;
use crate::optimizer::{gradient_descent, DescentConfig, Schedule};
use crate::sampling::{gaussian_matrix, unit_direction};
use crate::snn::{pretrain_to_target, train, Method, ReluNet, TrainConfig};
use crate::trajectory::{detect_dist_plateau, detect_grad_plateau, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Config {
    pub n: usize,
    pub k: usize,
    pub shift: f64,
    pub width: usize,
    pub depth: usize,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Fig1Config { n: 200, k: 10, shift: 1.5, width: 256, depth: 2, lr: 1e-3, iters: 4000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Summary {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Eigenvalue of the normalized Laplacian for the reported eigenvector.
    pub laplacian_eigenvalue: f64,
    /// `max_i |v_i|` of the eigenvector scaled to norm `sqrt(n)`.
    pub eigvec_sup: f64,
    pub sup_discrepancy: f64,
    pub relative_sup_discrepancy: f64,
    pub l2_discrepancy: f64,
    pub relative_l2_discrepancy: f64,
    /// Sign used to align the network with the eigenvector (`+1` or `-1`).
    pub sign: f64,
    /// Whether the bottom Laplacian eigenvector has constant sign.
    pub trivial_constant_sign: bool,
    pub fit_residual: f64,
    pub meta: RunMeta,
}

pub struct Fig1Output {
    pub cloud: PointCloud,
    pub eigvec: DVector<f64>,
    pub snn_values: DVector<f64>,
    pub summary: Fig1Summary,
}

/// Sphere cloud, kNN graph, the first nontrivial Laplacian eigenvector, and a
/// network fitted to it.
pub fn fig1(cfg: &Fig1Config) -> Result<Fig1Output> {
    let meta = RunMeta::new(Some(cfg.seed), cfg)?;
    let cloud = sample_sphere(cfg.n, cfg.seed)?;
    let graph = build_knn_graph(&cloud, cfg.k)?;
    let op = adjacency_operator(&graph, cfg.shift)?;
    let n = cfg.n as f64;

    let trivial = op.eig.vectors.column(0);
    let trivial_constant_sign = trivial.iter().all(|v| *v > 0.0) || trivial.iter().all(|v| *v < 0.0);
    let eigvec: DVector<f64> = op.eig.vectors.column(1) * n.sqrt();
    let laplacian_eigenvalue = cfg.shift + 1.0 - op.eig.values[1];

    let net = ReluNet::seeded(&ReluNet::uniform_widths(3, cfg.width, cfg.depth, 1), cfg.seed)?;
    let tcfg = TrainConfig {
        method: Method::Adam,
        lr: cfg.lr,
        iters: cfg.iters,
        seed: cfg.seed,
        ..Default::default()
    };
    let target = DMatrix::from_column_slice(cfg.n, 1, eigvec.as_slice());
    let (net, rep) = pretrain_to_target(&net, &cloud, &target, &tcfg, 0.0)?;
    let snn_values: DVector<f64> = net.eval_rows(cloud.points())?.column(0).into_owned();

    let sup = |v: &DVector<f64>| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let eigvec_sup = sup(&eigvec);
    let (plus, minus) = (&snn_values - &eigvec, &snn_values + &eigvec);
    let (sign, diff) = if sup(&plus) <= sup(&minus) { (1.0, plus) } else { (-1.0, minus) };
    let sup_discrepancy = sup(&diff);
    let l2_discrepancy = (&snn_values - &eigvec).norm().min((&snn_values + &eigvec).norm());
    let summary = Fig1Summary {
        n: cfg.n,
        k: cfg.k,
        seed: cfg.seed,
        laplacian_eigenvalue,
        eigvec_sup,
        sup_discrepancy,
        relative_sup_discrepancy: sup_discrepancy / eigvec_sup,
        l2_discrepancy,
        relative_l2_discrepancy: l2_discrepancy / eigvec.norm(),
        sign,
        trivial_constant_sign,
        fit_residual: rep.residual,
        meta,
    };
    Ok(Fig1Output { cloud, eigvec, snn_values, summary })
}

fn per_point_csv(path: &Path, cloud: &PointCloud, values: &DVector<f64>, meta: &RunMeta) -> Result<()> {
    let mut m = DMatrix::zeros(cloud.n(), cloud.d() + 1);
    m.columns_mut(0, cloud.d()).copy_from(cloud.points());
    m.set_column(cloud.d(), values);
    let mut w = open_output(path)?;
    for l in meta.header_lines() {
        writeln!(w, "# {l}")?;
    }
    writeln!(w, "# x,y,z,value")?;
    write_csv_matrix(&mut w, &m, None)?;
    w.flush()?;
    Ok(())
}

/// Runs [`fig1`] and writes `fig1_eigensolver.csv`, `fig1_snn.csv` and
/// `fig1_summary.json` into `out`.
pub fn run_fig1(cfg: &Fig1Config, out: &Path) -> Result<(Fig1Summary, Vec<PathBuf>)> {
    let res = fig1(cfg)?;
    std::fs::create_dir_all(out)?;
    let files =
        vec![out.join("fig1_eigensolver.csv"), out.join("fig1_snn.csv"), out.join("fig1_summary.json")];
    per_point_csv(&files[0], &res.cloud, &res.eigvec, &res.summary.meta)?;
    let aligned = &res.snn_values * res.summary.sign;
    per_point_csv(&files[1], &res.cloud, &aligned, &res.summary.meta)?;
    write_json(&files[2], &res.summary)?;
    Ok((res.summary, files))
}

/// Points whose row-normalized Gram matrix has a clear gap after the tenth
/// eigenvalue: Gaussian rows with per-coordinate scales.
pub fn synthetic_gram_points(n: usize, seed: u64) -> Result<PointCloud> {
    const SCALES: [f64; 14] = [3.0, 2.8, 2.6, 2.4, 2.2, 2.0, 1.9, 1.8, 1.7, 1.6, 1.2, 1.1, 1.0, 0.9];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = gaussian_matrix(n, SCALES.len(), &mut rng);
    for (j, s) in SCALES.iter().enumerate() {
        x.column_mut(j).scale_mut(*s);
    }
    for mut row in x.row_iter_mut() {
        let nrm = row.norm();
        row /= nrm;
    }
    PointCloud::new(x, CloudSource::Synthetic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig23Config {
    pub r: usize,
    /// 0-based eigenpair indices of the saddle; defaults to the top `r` with
    /// the `r`-th swapped for the `(r+1)`-th.
    pub saddle: Option<Vec<usize>>,
    /// Frobenius norm of the random perturbation added to the starting factors.
    pub perturb: f64,
    /// Ambient step size as a multiple of `1 / sigma_1(A)`.
    pub ambient_lr: f64,
    pub ambient_iters: usize,
    pub width: usize,
    pub pretrain_lr: f64,
    pub pretrain_optimal_iters: usize,
    pub pretrain_saddle_iters: usize,
    pub nn_method: Method,
    pub nn_lr: f64,
    pub nn_iters: usize,
    pub schedule: Schedule,
    pub record_every: usize,
    pub seed: u64,
}

impl Default for Fig23Config {
    fn default() -> Self {
        Fig23Config {
            r: 10,
            saddle: None,
            perturb: 1e-3,
            ambient_lr: 0.1,
            ambient_iters: 5000,
            width: 256,
            pretrain_lr: 1e-3,
            pretrain_optimal_iters: 1250,
            pretrain_saddle_iters: 10000,
            nn_method: Method::Adam,
            nn_lr: 3e-5,
            nn_iters: 5000,
            schedule: Schedule::Cosine,
            record_every: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    NnNearOptimal,
    NnNearSaddle,
    AmbientNearOptimal,
    AmbientNearSaddle,
}

impl Arm {
    pub const ALL: [Arm; 4] =
        [Arm::NnNearOptimal, Arm::NnNearSaddle, Arm::AmbientNearOptimal, Arm::AmbientNearSaddle];

    pub fn file_name(self) -> &'static str {
        match self {
            Arm::NnNearOptimal => "fig2_nn_near_optimal.csv",
            Arm::NnNearSaddle => "fig2_nn_near_saddle.csv",
            Arm::AmbientNearOptimal => "fig3_ambient_near_optimal.csv",
            Arm::AmbientNearSaddle => "fig3_ambient_near_saddle.csv",
        }
    }

    pub fn near_saddle(self) -> bool {
        matches!(self, Arm::NnNearSaddle | Arm::AmbientNearSaddle)
    }
}

/// Qualitative shape of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    /// Final over initial gradient norm.
    pub grad_reduction: f64,
    /// Iterations spent on the gradient-norm plateau, when one is detected.
    pub grad_plateau_iters: Option<usize>,
    /// Iterations before the distance leaves its initial level.
    pub dist_plateau_iters: Option<usize>,
    /// Initial level over final distance.
    pub dist_drop: Option<f64>,
    /// Near-optimal arms: gradient norm fell below `1e-3` of its start.
    /// Near-saddle arms: plateau detected and distance dropped at least 10x.
    pub holds: bool,
}

pub const PLATEAU_FACTOR: f64 = 10.0;
pub const DIST_BAND: f64 = 0.05;

pub fn signature(arm: Arm, traj: &Trajectory) -> Signature {
    let g = traj.grad_norms();
    let d = traj.dists();
    let iters = traj.iters();
    let grad_reduction = g[g.len() - 1] / g[0];
    let grad_plateau = detect_grad_plateau(&g, PLATEAU_FACTOR);
    let dist_plateau = detect_dist_plateau(&d, DIST_BAND, 3);
    let grad_plateau_iters = grad_plateau.map(|p| p.iterations(&iters));
    let dist_plateau_iters = dist_plateau.map(|p| p.iterations(&iters));
    let dist_drop = dist_plateau.map(|p| p.drop_ratio);
    let holds = if arm.near_saddle() {
        grad_plateau.is_some_and(|p| p.decays_after(PLATEAU_FACTOR))
            && dist_plateau.is_some_and(|p| p.samples > 3 && p.drop_ratio >= 10.0)
    } else {
        grad_reduction < 1e-3
    };
    Signature { grad_reduction, grad_plateau_iters, dist_plateau_iters, dist_drop, holds }
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: Arm,
    pub trajectory: Trajectory,
    pub signature: Signature,
    /// Pretraining residual `||Y_theta - target||_F^2` for network arms.
    pub pretrain_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub file: String,
    pub signature: Signature,
    pub pretrain_residual: Option<f64>,
    pub records: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig23Summary {
    pub n: usize,
    pub r: usize,
    pub saddle: Vec<usize>,
    pub sigma_r: f64,
    pub sigma_next: f64,
    pub sigma_1: f64,
    pub arms: Vec<ArmSummary>,
    pub meta: RunMeta,
}

pub struct Fig23Output {
    pub operator: AdjacencyOperator,
    pub target: SpectralTarget,
    pub saddle: Factor,
    pub arms: Vec<ArmResult>,
    pub summary: Fig23Summary,
}

fn default_saddle(r: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..r - 1).collect();
    s.push(r);
    s
}

/// Runs the four arms concurrently on the Gram operator of `cloud`.
pub fn fig2_fig3(cloud: &PointCloud, cfg: &Fig23Config) -> Result<Fig23Output> {
    let meta = RunMeta::new(
        Some(cfg.seed),
        &(cfg, crate::io::config_hash(&format!("{:?}", cloud.points().as_slice()))),
    )?;
    let op = AdjacencyOperator::gram(cloud)?;
    let r = cfg.r;
    if r == 0 || r >= op.n() {
        return Err(Error::input(format!("rank r must be in 1..{}, got {r}", op.n())));
    }
    let target = optimal_factor_from_eig(&op.eig, r)?;
    if !op.has_eigengap(r)? {
        return Err(Error::NoEigengap { sigma_r: target.sigma(r), sigma_next: target.sigma_next() });
    }
    let subset = cfg.saddle.clone().unwrap_or_else(|| default_saddle(r));
    let saddle = fosp_from_eig(&op.eig, r, &subset)?;
    saddle.require_full_rank("saddle")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise_opt = unit_direction(op.n(), r, &mut rng) * cfg.perturb;
    let noise_saddle = unit_direction(op.n(), r, &mut rng) * cfg.perturb;
    let a = &op.matrix;

    let ambient_cfg = DescentConfig {
        lr: cfg.ambient_lr / target.sigma(1),
        iters: cfg.ambient_iters,
        schedule: cfg.schedule,
        seed: cfg.seed,
        record_every: cfg.record_every,
        ..Default::default()
    };
    let pre = |iters: usize| TrainConfig {
        method: Method::Adam,
        lr: cfg.pretrain_lr,
        iters,
        schedule: Schedule::Cosine,
        seed: cfg.seed,
        record_every: cfg.record_every,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        method: cfg.nn_method,
        lr: cfg.nn_lr,
        iters: cfg.nn_iters,
        schedule: cfg.schedule,
        seed: cfg.seed,
        record_every: cfg.record_every,
        ..Default::default()
    };
    let widths = ReluNet::uniform_widths(cloud.d(), cfg.width, 2, r);

    let run_arm = |arm: Arm| -> Result<ArmResult> {
        let (trajectory, pretrain_residual) = match arm {
            Arm::AmbientNearOptimal | Arm::AmbientNearSaddle => {
                let (base, noise) = if arm == Arm::AmbientNearOptimal {
                    (&target.factor, &noise_opt)
                } else {
                    (&saddle, &noise_saddle)
                };
                let y0 = Factor::new(base.matrix() + noise)?;
                (gradient_descent(&y0, a, &target, &ambient_cfg)?.1, None)
            }
            Arm::NnNearOptimal | Arm::NnNearSaddle => {
                let (base, noise, iters) = if arm == Arm::NnNearOptimal {
                    (&target.factor, &noise_opt, cfg.pretrain_optimal_iters)
                } else {
                    (&saddle, &noise_saddle, cfg.pretrain_saddle_iters)
                };
                let goal = base.matrix() + noise;
                let net = ReluNet::seeded(&widths, cfg.seed)?;
                let (net, rep) = pretrain_to_target(&net, cloud, &goal, &pre(iters), 0.0)?;
                (train(&net, cloud, a, &target, &train_cfg)?.1, Some(rep.residual))
            }
        };
        let signature = signature(arm, &trajectory);
        Ok(ArmResult { arm, trajectory, signature, pretrain_residual })
    };

    let results: Vec<Result<ArmResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = Arm::ALL.iter().map(|&arm| s.spawn(move || run_arm(arm))).collect();
        handles.into_iter().map(|h| h.join().expect("experiment arm panicked")).collect()
    });
    let arms = results.into_iter().collect::<Result<Vec<_>>>()?;

    let summary = Fig23Summary {
        n: op.n(),
        r,
        saddle: subset.clone(),
        sigma_r: target.sigma(r),
        sigma_next: target.sigma_next(),
        sigma_1: target.sigma(1),
        arms: arms
            .iter()
            .map(|a| ArmSummary {
                arm: a.arm,
                file: a.arm.file_name().to_string(),
                signature: a.signature.clone(),
                pretrain_residual: a.pretrain_residual,
                records: a.trajectory.len(),
            })
            .collect(),
        meta,
    };
    Ok(Fig23Output { operator: op, target, saddle, arms, summary })
}

/// Runs [`fig2_fig3`] and writes one trajectory CSV per arm plus
/// `fig23_summary.json` into `out`.
pub fn run_fig2_fig3(
    cloud: &PointCloud,
    cfg: &Fig23Config,
    out: &Path,
) -> Result<(Fig23Summary, Vec<PathBuf>)> {
    let res = fig2_fig3(cloud, cfg)?;
    std::fs::create_dir_all(out)?;
    let header = res.summary.meta.header_lines();
    let mut files = Vec::new();
    for arm in &res.arms {
        let path = out.join(arm.arm.file_name());
        let mut w = open_output(&path)?;
        arm.trajectory.write_csv(&mut w, &header)?;
        w.flush()?;
        files.push(path);
    }
    let path = out.join("fig23_summary.json");
    write_json(&path, &res.summary)?;
    files.push(path);
    Ok((res.summary, files))
}
