// Symmetric eigendecomposition, thin SVD and Procrustes alignment.

use nalgebra::DMatrix;
use snn_landscape::linalg::{procrustes_align, sym_eig, thin_svd, SymMatrix};

pub fn run_example() -> snn_landscape::Result<()> {
    let a = SymMatrix::new(DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]))?;
    let eig = sym_eig(&a)?;
    println!("eigenvalues: {:.6?}", eig.values.as_slice());

    let v = &eig.vectors;
    let rebuilt = v * DMatrix::from_diagonal(&eig.values) * v.transpose();
    println!("reconstruction error: {:.2e}", (rebuilt - a.matrix()).norm());

    let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
    let svd = thin_svd(&y)?;
    println!("singular values: {:.6?}", svd.s.as_slice());

    // rotate y and recover the rotation
    let (c, s) = (0.6_f64, 0.8_f64);
    let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let p = procrustes_align(&y, &(&y * &q))?;
    println!("procrustes distance after rotation: {:.2e} (unique: {})", p.dist, p.unique);
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
