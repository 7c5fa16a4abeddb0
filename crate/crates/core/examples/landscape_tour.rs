// Enumerate stationary points, label them by region and look for negative
// curvature at each.

use nalgebra::DMatrix;
use snn_landscape::ambient::{hess_form, optimal_factor, riem_grad, Factor};
use snn_landscape::landscape::{all_fosps, classify, escape_direction, r1_bounds, RegionParams};
use snn_landscape::linalg::SymMatrix;

pub fn run_example() -> snn_landscape::Result<()> {
    let a = SymMatrix::from_diagonal(&[5.0, 4.0, 2.0, 1.0, 0.5]);
    let r = 2;
    let target = optimal_factor(&a, r)?;
    let p = RegionParams::new(0.05, 1e-3, 1.2, 1.2)?;

    for (subset, y) in all_fosps(&a, r)? {
        let c = classify(&y, &a, &target, &p)?;
        let esc = escape_direction(&y, &a, &target)?;
        println!(
            "S = {:?}: |grad| = {:.1e}, labels = {:<8} hess along {:?} = {:+.4}",
            subset.iter().map(|i| i + 1).collect::<Vec<_>>(),
            riem_grad(&y, &a)?.norm(),
            c.joined(),
            esc.which,
            esc.hess_value
        );
    }

    let b = r1_bounds(&target, 0.05)?;
    println!("curvature bounds near the optimum: [{:.4}, {:.4}]", b.lower, b.upper);

    // the classic one-dimensional saddle
    let a3 = SymMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
    let y = Factor::new(DMatrix::from_column_slice(3, 1, &[0.0, 2f64.sqrt(), 0.0]))?;
    let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
    println!("hess_form at sqrt(2) e2 along e1: {}", hess_form(&y, &a3, &e1)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
