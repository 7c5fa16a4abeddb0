//! Plain gradient descent on the ambient factor problem, with an optional
//! negative-curvature step whenever an iterate sits in the saddle region.

use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ambient::{half_loss, loss, riem_grad, Factor, SpectralTarget, RANK_TOL};
use crate::error::{Error, Result};
use crate::landscape::{classify, escape_direction, RegionLabel, RegionParams};
use crate::linalg::{sym_eig, SymMatrix};
use crate::trajectory::{TrajRecord, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Constant,
    Cosine,
}

impl Schedule {
    /// Step size at iteration `k` of `iters`.
    pub fn step(self, lr: f64, k: usize, iters: usize) -> f64 {
        match self {
            Schedule::Constant => lr,
            Schedule::Cosine => lr * (1.0 + (std::f64::consts::PI * k as f64 / iters as f64).cos()) / 2.0,
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "cosine" => Ok(Schedule::Cosine),
            other => Err(Error::input(format!("unknown schedule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub lr: f64,
    pub iters: usize,
    pub schedule: Schedule,
    pub escape_enabled: bool,
    pub escape_step: f64,
    pub seed: u64,
    pub record_every: usize,
    /// Region parameters used to label recorded iterates; labels are left
    /// empty when unset.
    pub regions: Option<RegionParams>,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            lr: 1e-3,
            iters: 1000,
            schedule: Schedule::Constant,
            escape_enabled: false,
            escape_step: 0.0,
            seed: 0,
            record_every: 10,
            regions: None,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::input(format!("lr must be positive, got {}", self.lr)));
        }
        if self.iters == 0 {
            return Err(Error::input("iters must be at least 1"));
        }
        if !(self.escape_step >= 0.0) || !self.escape_step.is_finite() {
            return Err(Error::input(format!("escape_step must be >= 0, got {}", self.escape_step)));
        }
        if self.record_every == 0 {
            return Err(Error::input("record_every must be at least 1"));
        }
        Ok(())
    }
}

/// `sigma_r(Y) / sigma_1(Y)` from the eigenvalues of `Y^T Y`.
fn rank_ratio(y: &DMatrix<f64>) -> Result<f64> {
    let g = SymMatrix::new(y.transpose() * y)?;
    let ev = sym_eig(&g)?.values;
    let (top, bottom) = (ev[0], ev[ev.len() - 1]);
    if top <= 0.0 {
        return Ok(0.0);
    }
    Ok((bottom.max(0.0) / top).sqrt())
}

fn record(
    y: &Factor,
    a: &SymMatrix,
    target: &SpectralTarget,
    regions: Option<&RegionParams>,
    iter: usize,
    step: f64,
    escape_event: bool,
) -> Result<TrajRecord> {
    let labels = match regions {
        Some(p) => classify(y, a, target, p)?.joined(),
        None => String::new(),
    };
    Ok(TrajRecord {
        iter,
        loss: loss(y, a)?,
        grad_norm: riem_grad(y, a)?.norm(),
        dist: target.distance(y)?,
        labels,
        step,
        escape_event,
    })
}

/// Full-batch descent `Y <- Y - eta_k grad H(Y)`.
pub fn gradient_descent(
    y0: &Factor,
    a: &SymMatrix,
    target: &SpectralTarget,
    cfg: &DescentConfig,
) -> Result<(Factor, Trajectory)> {
    run(y0, a, target, cfg, None)
}

/// Gradient descent that, whenever the iterate is labeled R2 and a direction
/// of negative curvature exists, first moves along that direction by
/// `escape_step` (sign and length settled by direct evaluation of `H`).
pub fn escape_enabled_descent(
    y0: &Factor,
    a: &SymMatrix,
    target: &SpectralTarget,
    cfg: &DescentConfig,
    p: &RegionParams,
) -> Result<(Factor, Trajectory)> {
    run(y0, a, target, cfg, Some(p))
}

/// Tries `y +- s theta` with `s` halved up to 40 times; returns the first
/// point with `H` strictly below `H(y)`.
pub fn escape_step(
    y: &Factor,
    a: &SymMatrix,
    theta: &DMatrix<f64>,
    step: f64,
) -> Result<Option<(Factor, f64)>> {
    let h0 = half_loss(y, a)?;
    let mut s = step;
    for _ in 0..=40 {
        let plus = Factor::new(y.matrix() + theta * s)?;
        let minus = Factor::new(y.matrix() - theta * s)?;
        let (hp, hm) = (half_loss(&plus, a)?, half_loss(&minus, a)?);
        let (best, h, signed) = if hm < hp { (minus, hm, -s) } else { (plus, hp, s) };
        if h < h0 {
            return Ok(Some((best, signed)));
        }
        s /= 2.0;
    }
    Ok(None)
}

fn run(
    y0: &Factor,
    a: &SymMatrix,
    target: &SpectralTarget,
    cfg: &DescentConfig,
    escape: Option<&RegionParams>,
) -> Result<(Factor, Trajectory)> {
    cfg.validate()?;
    y0.require_full_rank("initial factor")?;
    if y0.n() != a.dim() || y0.r() != target.r() {
        return Err(Error::dims("initial factor, operator and target shapes differ"));
    }
    let escaping = escape.filter(|_| cfg.escape_step > 0.0);
    let regions = cfg.regions.as_ref();

    let mut traj = Trajectory::default();
    let mut y = y0.matrix().clone();
    for k in 0..cfg.iters {
        let mut fired = false;
        if let Some(p) = escaping {
            let cur = Factor::new(y.clone())?;
            if classify(&cur, a, target, p)?.contains(RegionLabel::R2) {
                let rep = escape_direction(&cur, a, target)?;
                if rep.found() {
                    if let Some((next, _)) = escape_step(&cur, a, &rep.direction, cfg.escape_step)? {
                        y = next.into_inner();
                        fired = true;
                    }
                }
            }
        }

        let eta = cfg.schedule.step(cfg.lr, k, cfg.iters);
        let cur =
            Factor::new(y.clone()).map_err(|_| Error::Diverged { iter: k, last: Box::new(y.clone()) })?;
        if k % cfg.record_every == 0 || fired {
            traj.push(record(&cur, a, target, regions, k, eta, fired)?);
        }
        let g = riem_grad(&cur, a)?.entries;
        let next = &y - g * eta;
        let next_loss = (&next * next.transpose() - a.matrix()).norm_squared();
        if !next_loss.is_finite() {
            return Err(Error::Diverged { iter: k + 1, last: Box::new(y) });
        }
        let ratio = rank_ratio(&next)?;
        if !(ratio > RANK_TOL) {
            return Err(Error::RankCollapse { iter: k + 1, ratio, last: Box::new(next) });
        }
        y = next;
    }
    let last = Factor::new(y)?;
    let eta = cfg.schedule.step(cfg.lr, cfg.iters, cfg.iters);
    traj.push(record(&last, a, target, regions, cfg.iters, eta, false)?);
    Ok((last, traj))
}
