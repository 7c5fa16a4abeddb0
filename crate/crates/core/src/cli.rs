//! Command-line front end. [`run`] parses arguments, dispatches to the library
//! and maps errors to exit codes: 0 on success, 1 for bad input, 2 for
//! numerical failures. Errors are reported as one JSON line on stderr.
//!
//! Any subcommand accepts `--config FILE`, a flat `key = value` file whose
//! keys are flag names; flags given on the command line take precedence.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::ambient::{optimal_factor_from_eig, Factor, SpectralTarget};
use crate::error::{Error, ErrorKind, Result};
use crate::experiment::{run_fig1, run_fig2_fig3, synthetic_gram_points, Fig1Config, Fig23Config};
use crate::graph::{
    adjacency_operator, build_kernel_graph, build_knn_graph, sample_sphere, AdjacencyOperator, Kernel,
    PointCloud,
};
use crate::io::{
    open_output, read_factor, read_operator, read_points, write_factor, write_json, write_operator,
    write_points, RunMeta,
};
use crate::landscape::{classify, combinations, escape_direction, fosp_from_eig, RegionParams};
use crate::optimizer::{escape_enabled_descent, gradient_descent, DescentConfig, Schedule};
use crate::sampling::{gaussian_matrix, unit_direction};
use crate::snn::{pretrain_to_target, train, Method, ReluNet, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "snn", version, about = "Spectral contrastive landscape and network training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample point clouds and build operators.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Print the top eigenvalues of an operator, largest first.
    Spectrum(SpectrumArgs),
    /// Gradient descent on the factor problem.
    AmbientTrain(AmbientArgs),
    /// Train a ReLU network on the spectral contrastive loss.
    SnnTrain(SnnArgs),
    /// Region classification and stationary points.
    #[command(subcommand)]
    Landscape(LandscapeCommand),
    /// Desk-scale experiment pipelines.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
enum GraphCommand {
    /// Build an operator file from a point CSV.
    Build(BuildArgs),
    /// Sample points uniformly from the unit sphere in R^3.
    SampleSphere(SphereArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RuleArg {
    Kernel,
    Knn,
    Gram,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum KernelArg {
    Indicator,
    Gaussian,
    Exponential,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Indicator => Kernel::Indicator,
            KernelArg::Gaussian => Kernel::Gaussian,
            KernelArg::Exponential => Kernel::Exponential,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct OperatorFlags {
    #[arg(long, value_enum, default_value = "knn")]
    rule: RuleArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelArg,
    /// Kernel bandwidth.
    #[arg(long)]
    eps: Option<f64>,
    /// Neighbours per point.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Shift `a` added to the normalized adjacency; must be unset for `gram`.
    #[arg(long)]
    shift: Option<f64>,
}

const DEFAULT_SHIFT: f64 = 1.5;

impl OperatorFlags {
    fn build(&self, cloud: &PointCloud) -> Result<AdjacencyOperator> {
        match self.rule {
            RuleArg::Gram => {
                if self.shift.is_some_and(|a| a != 0.0) {
                    return Err(Error::input("the gram rule takes no shift"));
                }
                AdjacencyOperator::gram(cloud)
            }
            RuleArg::Knn => {
                adjacency_operator(&build_knn_graph(cloud, self.k)?, self.shift.unwrap_or(DEFAULT_SHIFT))
            }
            RuleArg::Kernel => {
                let eps = self.eps.ok_or_else(|| Error::input("--eps is required for the kernel rule"))?;
                let g = build_kernel_graph(cloud, eps, self.kernel.into())?;
                adjacency_operator(&g, self.shift.unwrap_or(DEFAULT_SHIFT))
            }
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct BuildArgs {
    /// Point CSV, one point per row (`-` for stdin).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    op: OperatorFlags,
    #[serde(skip)]
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SphereArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[serde(skip)]
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SpectrumArgs {
    /// Operator file (`-` for stdin).
    #[arg(long, conflicts_with = "input")]
    operator: Option<PathBuf>,
    /// Point CSV; the operator is built with the graph flags.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    op: OperatorFlags,
    #[arg(long)]
    top: Option<usize>,
}

/// Where a descent or pretraining run starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
enum Init {
    Optimal,
    /// 0-based eigenpair indices.
    Saddle(Vec<usize>),
    Random,
    None,
}

/// Parses `optimal`, `random`, `none` or `saddle:S` with `S` a comma list of
/// 1-based eigenpair indices.
fn parse_init(s: &str) -> std::result::Result<Init, String> {
    match s {
        "optimal" => Ok(Init::Optimal),
        "random" => Ok(Init::Random),
        "none" => Ok(Init::None),
        _ => {
            let list = s.strip_prefix("saddle:").ok_or_else(|| format!("unknown init '{s}'"))?;
            list.split(',')
                .map(|t| match t.trim().parse::<usize>() {
                    Ok(i) if i >= 1 => Ok(i - 1),
                    _ => Err(format!("bad eigen index '{t}' (indices are 1-based)")),
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Init::Saddle)
        }
    }
}

fn parse_schedule(s: &str) -> std::result::Result<Schedule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
struct RegionFlags {
    #[arg(long, default_value_t = 0.05)]
    mu: f64,
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    #[arg(long, default_value_t = 1.2)]
    beta: f64,
    #[arg(long, default_value_t = 1.2)]
    gamma: f64,
}

impl RegionFlags {
    fn params(&self) -> Result<RegionParams> {
        RegionParams::new(self.mu, self.alpha, self.beta, self.gamma)
    }
}

#[derive(Debug, Args, Serialize)]
struct AmbientArgs {
    #[arg(long)]
    operator: PathBuf,
    #[arg(long)]
    r: usize,
    /// optimal | random | saddle:S (S = comma list of 1-based eigen indices)
    #[arg(long, value_parser = parse_init, default_value = "random")]
    init: Init,
    /// Frobenius norm of the random perturbation added to the start.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, value_parser = parse_schedule, default_value = "constant")]
    schedule: Schedule,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    record_every: usize,
    /// Step length along negative curvature when the iterate is in R2; 0
    /// disables escaping.
    #[arg(long, default_value_t = 0.0)]
    escape_step: f64,
    /// Record region labels in the trajectory.
    #[arg(long)]
    labels: bool,
    #[command(flatten)]
    regions: RegionFlags,
    /// Trajectory CSV.
    #[serde(skip)]
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Optional CSV for the final factor.
    #[serde(skip)]
    #[arg(long)]
    factor_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SnnArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    operator: PathBuf,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, value_parser = parse_method, default_value = "adam")]
    method: Method,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, value_parser = parse_schedule, default_value = "constant")]
    schedule: Schedule,
    #[arg(long, default_value_t = 1)]
    batch_pairs: usize,
    /// Scale minibatch gradients by n^2 / batch_pairs.
    #[arg(long)]
    scale_minibatch: bool,
    /// none | optimal | saddle:S, fitted with Adam before training.
    #[arg(long, value_parser = parse_init, default_value = "none")]
    pretrain: Init,
    #[arg(long, default_value_t = 1250)]
    pretrain_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pretrain_lr: f64,
    /// Frobenius norm of the perturbation added to the pretraining target.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    record_every: usize,
    /// Network checkpoint JSON.
    #[serde(skip)]
    #[arg(long)]
    out: PathBuf,
    /// Trajectory CSV.
    #[serde(skip)]
    #[arg(long)]
    traj: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum LandscapeCommand {
    /// Report region labels and the escape direction at a factor.
    Classify(ClassifyArgs),
    /// Write the stationary points built from eigenpair subsets.
    Saddles(SaddlesArgs),
}

#[derive(Debug, Args, Serialize)]
struct ClassifyArgs {
    #[arg(long)]
    factor: PathBuf,
    #[arg(long)]
    operator: PathBuf,
    #[command(flatten)]
    regions: RegionFlags,
    /// Print a JSON report instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args, Serialize)]
struct SaddlesArgs {
    #[arg(long)]
    operator: PathBuf,
    #[arg(long)]
    r: usize,
    /// Every r-subset of the positive eigenpairs.
    #[arg(long, conflicts_with = "subset")]
    all_subsets: bool,
    /// A single subset: comma list of 1-based eigen indices.
    #[arg(long)]
    subset: Option<String>,
    #[serde(skip)]
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Sphere eigenvector against a trained network.
    Fig1(Fig1Args),
    /// Four-arm ambient/network comparison near the optimum and a saddle.
    #[command(name = "fig2-fig3")]
    Fig2Fig3(Fig23Args),
}

#[derive(Debug, Args, Serialize)]
struct Fig1Args {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.5)]
    shift: f64,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 4000)]
    iters: usize,
}

#[derive(Debug, Args, Serialize)]
struct Fig23Args {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Point CSV for the Gram operator; a synthetic 100-point set otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    r: usize,
    /// Saddle subset, comma list of 1-based eigen indices.
    #[arg(long)]
    saddle: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    perturb: f64,
    /// Ambient step as a multiple of 1 / sigma_1.
    #[arg(long, default_value_t = 0.1)]
    ambient_lr: f64,
    #[arg(long, default_value_t = 5000)]
    ambient_iters: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, value_parser = parse_method, default_value = "adam")]
    nn_method: Method,
    #[arg(long, default_value_t = 3e-5)]
    nn_lr: f64,
    #[arg(long, default_value_t = 5000)]
    nn_iters: usize,
    #[arg(long, default_value_t = 1250)]
    pretrain_optimal_iters: usize,
    #[arg(long, default_value_t = 10000)]
    pretrain_saddle_iters: usize,
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(
                e.kind(),
                K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                print!("{e}");
                return 0;
            }
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            eprintln!("{}", json!({"error": "input", "message": first}));
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    let (kind, code) = match e.kind() {
        ErrorKind::Input => ("input", 1),
        ErrorKind::Numerical => ("numerical", 2),
    };
    eprintln!("{}", json!({"error": kind, "message": e.to_string()}));
    code
}

/// Splices `--config FILE` entries into the argument list as flags, skipping
/// keys already given on the command line.
fn merge_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => {
            let p = p.to_string();
            args.remove(pos);
            p
        }
        None => {
            if pos + 1 >= args.len() {
                return Err(Error::input("--config needs a file"));
            }
            let p = args.remove(pos + 1);
            args.remove(pos);
            p
        }
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::input(format!("{path}: {e}")))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("{path}:{}: expected key = value", lineno + 1)))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        let value = value.trim().trim_matches('"');
        let given = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        match value {
            "true" => args.push(flag),
            "false" => {}
            v => {
                args.push(flag);
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Graph(GraphCommand::Build(a)) => graph_build(&a),
        Command::Graph(GraphCommand::SampleSphere(a)) => {
            let meta = RunMeta::new(Some(a.seed), &a)?;
            write_points(&a.out, &sample_sphere(a.n, a.seed)?, Some(&meta))
        }
        Command::Spectrum(a) => spectrum(&a),
        Command::AmbientTrain(a) => ambient_train(&a),
        Command::SnnTrain(a) => snn_train(&a),
        Command::Landscape(LandscapeCommand::Classify(a)) => landscape_classify(&a),
        Command::Landscape(LandscapeCommand::Saddles(a)) => landscape_saddles(&a),
        Command::Experiment(ExperimentCommand::Fig1(a)) => experiment_fig1(&a),
        Command::Experiment(ExperimentCommand::Fig2Fig3(a)) => experiment_fig23(&a),
    }
}

fn graph_build(a: &BuildArgs) -> Result<()> {
    let op = a.op.build(&read_points(&a.input)?)?;
    write_operator(&a.out, &op, Some(RunMeta::new(None, a)?))
}

fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let op = match (&a.operator, &a.input) {
        (Some(p), _) => read_operator(p)?,
        (None, Some(p)) => a.op.build(&read_points(p)?)?,
        (None, None) => return Err(Error::input("spectrum needs --operator or --input")),
    };
    let ev = op.eigenvalues();
    let top = a.top.unwrap_or(ev.len()).min(ev.len());
    let mut out = std::io::stdout().lock();
    for v in ev.iter().take(top) {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

fn index_list(s: &str) -> Result<Vec<usize>> {
    match parse_init(&format!("saddle:{s}")).map_err(Error::Input)? {
        Init::Saddle(v) => Ok(v),
        _ => unreachable!(),
    }
}

/// The starting factor for `init`, plus a perturbation of Frobenius norm
/// `perturb`.
fn start_factor(
    op: &AdjacencyOperator,
    target: &SpectralTarget,
    init: &Init,
    perturb: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Factor> {
    let (n, r) = (op.n(), target.r());
    let base = match init {
        Init::Optimal => target.factor.matrix().clone(),
        Init::Saddle(s) => fosp_from_eig(&op.eig, r, s)?.into_inner(),
        Init::Random => {
            let g = gaussian_matrix(n, r, rng);
            let scale = target.factor.matrix().norm() / g.norm();
            g * scale
        }
        Init::None => return Err(Error::input("no starting point given")),
    };
    if !(perturb >= 0.0) || !perturb.is_finite() {
        return Err(Error::input(format!("perturb must be >= 0, got {perturb}")));
    }
    let noise =
        if perturb > 0.0 { unit_direction(n, r, rng) * perturb } else { nalgebra::DMatrix::zeros(n, r) };
    Factor::new(base + noise)
}

fn ambient_train(a: &AmbientArgs) -> Result<()> {
    let meta = RunMeta::new(Some(a.seed), a)?;
    let op = read_operator(&a.operator)?;
    let target = optimal_factor_from_eig(&op.eig, a.r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let y0 = start_factor(&op, &target, &a.init, a.perturb, &mut rng)?;
    let p = a.regions.params()?;
    let cfg = DescentConfig {
        lr: a.lr,
        iters: a.iters,
        schedule: a.schedule,
        escape_enabled: a.escape_step > 0.0,
        escape_step: a.escape_step,
        seed: a.seed,
        record_every: a.record_every,
        regions: a.labels.then_some(p),
    };
    let (y, traj) = if cfg.escape_enabled {
        escape_enabled_descent(&y0, &op.matrix, &target, &cfg, &p)?
    } else {
        gradient_descent(&y0, &op.matrix, &target, &cfg)?
    };
    let mut w = open_output(&a.out)?;
    traj.write_csv(&mut w, &meta.header_lines())?;
    w.flush()?;
    if let Some(path) = &a.factor_out {
        write_factor(path, &y, Some(&meta))?;
    }
    Ok(())
}

fn snn_train(a: &SnnArgs) -> Result<()> {
    let meta = RunMeta::new(Some(a.seed), a)?;
    let cloud = read_points(&a.cloud)?;
    let op = read_operator(&a.operator)?;
    if op.n() != cloud.n() {
        return Err(Error::dims(format!(
            "operator is {0}x{0} but the cloud has {1} points",
            op.n(),
            cloud.n()
        )));
    }
    let target = optimal_factor_from_eig(&op.eig, a.r)?;
    let widths = ReluNet::uniform_widths(cloud.d(), a.width, a.depth, a.r);
    let mut net = ReluNet::seeded(&widths, a.seed)?;
    if a.pretrain != Init::None {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let start = start_factor(&op, &target, &a.pretrain, a.perturb, &mut rng)?;
        let pcfg = TrainConfig {
            method: Method::Adam,
            lr: a.pretrain_lr,
            iters: a.pretrain_iters,
            schedule: Schedule::Cosine,
            seed: a.seed,
            ..Default::default()
        };
        net = pretrain_to_target(&net, &cloud, start.matrix(), &pcfg, 0.0)?.0;
    }
    let cfg = TrainConfig {
        method: a.method,
        lr: a.lr,
        iters: a.iters,
        batch_pairs: a.batch_pairs,
        schedule: a.schedule,
        seed: a.seed,
        scale_minibatch: a.scale_minibatch,
        record_every: a.record_every,
    };
    let (net, traj) = train(&net, &cloud, &op.matrix, &target, &cfg)?;
    let mut ck = serde_json::to_value(&net)?;
    if let Some(obj) = ck.as_object_mut() {
        obj.insert("meta".into(), serde_json::to_value(&meta)?);
    }
    write_json(&a.out, &ck)?;
    if let Some(path) = &a.traj {
        let mut w = open_output(path)?;
        traj.write_csv(&mut w, &meta.header_lines())?;
        w.flush()?;
    }
    Ok(())
}

fn landscape_classify(a: &ClassifyArgs) -> Result<()> {
    let y = read_factor(&a.factor)?;
    let op = read_operator(&a.operator)?;
    if y.n() != op.n() {
        return Err(Error::dims(format!("factor has {} rows, operator is {}x{}", y.n(), op.n(), op.n())));
    }
    let target = optimal_factor_from_eig(&op.eig, y.r())?;
    let c = classify(&y, &op.matrix, &target, &a.regions.params()?)?;
    let esc = escape_direction(&y, &op.matrix, &target)?;
    let labels: Vec<&str> = c.labels.iter().map(|l| l.as_str()).collect();
    let mut out = std::io::stdout().lock();
    if a.json {
        let rep = json!({
            "labels": labels,
            "grad_norm": c.grad_norm,
            "distance_to_opt": c.distance_to_opt,
            "escape": {"which": esc.which, "hess_value": esc.hess_value},
        });
        writeln!(out, "{rep}")?;
    } else {
        writeln!(out, "labels: {}", labels.join(" "))?;
        writeln!(out, "grad_norm: {:e}", c.grad_norm)?;
        writeln!(out, "distance_to_opt: {:e}", c.distance_to_opt)?;
        writeln!(out, "escape: {:?} hess_value {:e}", esc.which, esc.hess_value)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SaddleEntry {
    /// 1-based eigen indices.
    subset: Vec<usize>,
    file: String,
    loss: f64,
    grad_norm: f64,
    distance_to_opt: f64,
    optimal: bool,
    escape_hess_value: f64,
}

fn landscape_saddles(a: &SaddlesArgs) -> Result<()> {
    let meta = RunMeta::new(None, a)?;
    let op = read_operator(&a.operator)?;
    let target = optimal_factor_from_eig(&op.eig, a.r)?;
    let subsets = match (&a.subset, a.all_subsets) {
        (Some(s), _) => vec![index_list(s)?],
        (None, true) => {
            let positive = op.eig.values.iter().filter(|v| **v > 0.0).count();
            combinations(positive, a.r)
        }
        (None, false) => return Err(Error::input("give --all-subsets or --subset")),
    };
    fs::create_dir_all(&a.out)?;
    let mut index = Vec::with_capacity(subsets.len());
    for s in subsets {
        let y = fosp_from_eig(&op.eig, a.r, &s)?;
        let one_based: Vec<usize> = s.iter().map(|i| i + 1).collect();
        let name =
            format!("saddle_{}.csv", one_based.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-"));
        write_factor(&a.out.join(&name), &y, Some(&meta))?;
        let esc = escape_direction(&y, &op.matrix, &target)?;
        index.push(SaddleEntry {
            optimal: s.iter().copied().eq(0..a.r),
            subset: one_based,
            file: name,
            loss: crate::ambient::loss(&y, &op.matrix)?,
            grad_norm: crate::ambient::riem_grad(&y, &op.matrix)?.norm(),
            distance_to_opt: target.distance(&y)?,
            escape_hess_value: esc.hess_value,
        });
    }
    write_json(&a.out.join("index.json"), &json!({"meta": meta, "saddles": index}))
}

fn print_files(files: &[PathBuf]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    for f in files {
        writeln!(out, "{}", f.display())?;
    }
    Ok(())
}

fn experiment_fig1(a: &Fig1Args) -> Result<()> {
    let cfg = Fig1Config {
        n: a.n,
        k: a.k,
        shift: a.shift,
        width: a.width,
        depth: a.depth,
        lr: a.lr,
        iters: a.iters,
        seed: a.seed,
    };
    let (_, files) = run_fig1(&cfg, &a.out)?;
    print_files(&files)
}

fn experiment_fig23(a: &Fig23Args) -> Result<()> {
    let cloud = match &a.input {
        Some(p) => read_points(p)?,
        None => synthetic_gram_points(100, a.seed)?,
    };
    let cfg = Fig23Config {
        r: a.r,
        saddle: a.saddle.as_deref().map(index_list).transpose()?,
        perturb: a.perturb,
        ambient_lr: a.ambient_lr,
        ambient_iters: a.ambient_iters,
        width: a.width,
        pretrain_optimal_iters: a.pretrain_optimal_iters,
        pretrain_saddle_iters: a.pretrain_saddle_iters,
        nn_method: a.nn_method,
        nn_lr: a.nn_lr,
        nn_iters: a.nn_iters,
        seed: a.seed,
        ..Default::default()
    };
    let (_, files) = run_fig2_fig3(&cloud, &cfg, &a.out)?;
    print_files(&files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_parsing() {
        assert_eq!(parse_init("optimal").unwrap(), Init::Optimal);
        assert_eq!(parse_init("saddle:1,3").unwrap(), Init::Saddle(vec![0, 2]));
        assert!(parse_init("saddle:0").is_err());
        assert!(parse_init("middle").is_err());
    }

    #[test]
    fn config_file_fills_missing_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        fs::write(&p, "# comment\nn = 5\nseed=3\nlabels = true\nquiet = false\n").unwrap();
        let args: Vec<String> =
            ["snn", "graph", "sample-sphere", "--config", p.to_str().unwrap(), "--seed", "9"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        let merged = merge_config(args).unwrap();
        assert_eq!(merged, ["snn", "graph", "sample-sphere", "--seed", "9", "--n", "5", "--labels"]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_input_error() {
        assert_eq!(run(["snn", "spectrum", "--bogus"]), 1);
        assert_eq!(run(["snn", "--help"]), 0);
    }
}
