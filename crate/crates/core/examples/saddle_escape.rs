// Gradient descent started next to a saddle: a long plateau, then escape.
// Started exactly at the saddle, plain descent never moves while the
// escape-enabled variant leaves at once.

use nalgebra::DMatrix;
use snn_landscape::ambient::{optimal_factor, Factor};
use snn_landscape::landscape::RegionParams;
use snn_landscape::linalg::SymMatrix;
use snn_landscape::optimizer::{escape_enabled_descent, gradient_descent, DescentConfig};
use snn_landscape::trajectory::detect_grad_plateau;

pub fn run_example() -> snn_landscape::Result<()> {
    let a = SymMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
    let target = optimal_factor(&a, 1)?;
    let y0 = Factor::new(DMatrix::from_column_slice(3, 1, &[1e-4, 2f64.sqrt(), 0.0]))?;

    let cfg = DescentConfig { lr: 0.01, iters: 3000, record_every: 1, ..Default::default() };
    let (_, traj) = gradient_descent(&y0, &a, &target, &cfg)?;
    let iters = traj.iters();
    if let Some(p) = detect_grad_plateau(&traj.grad_norms(), 10.0) {
        println!(
            "plain descent: plateau of {} iterations at |grad| ~ {:.1e}, escape at iteration {}",
            p.iterations(&iters),
            p.min_value,
            iters[p.escape_index]
        );
    }
    println!("plain descent: final distance to [Y*] = {:.2e}", traj.last().map_or(f64::NAN, |r| r.dist));

    let saddle = Factor::new(DMatrix::from_column_slice(3, 1, &[0.0, 2f64.sqrt(), 0.0]))?;
    let (stuck, _) = gradient_descent(&saddle, &a, &target, &cfg)?;
    println!("plain descent from the saddle moved by {:.1e}", (stuck.matrix() - saddle.matrix()).norm());

    let p = RegionParams::new(0.1, 1e-3, 1.2, 1.2)?;
    let cfg = DescentConfig { escape_enabled: true, escape_step: 0.5, regions: Some(p), ..cfg };
    let (_, traj) = escape_enabled_descent(&saddle, &a, &target, &cfg, &p)?;
    let first_close = traj.records.iter().find(|r| r.dist < 1e-3).map(|r| r.iter);
    println!(
        "with escape steps: {} escape events, within 1e-3 of [Y*] at iteration {:?}",
        traj.escape_events(),
        first_close
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
