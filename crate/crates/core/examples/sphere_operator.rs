// Sample the sphere, build a kNN graph and compare the top eigenvectors of
// the adjacency operator with the bottom eigenvectors of the Laplacian.

use nalgebra::DMatrix;
use snn_landscape::graph::{adjacency_operator, build_knn_graph, sample_sphere};
use snn_landscape::linalg::{max_principal_angle, sym_eig};

pub fn run_example() -> snn_landscape::Result<()> {
    let cloud = sample_sphere(300, 7)?;
    let graph = build_knn_graph(&cloud, 10)?;
    let op = adjacency_operator(&graph, 1.5)?;
    let n = op.n();

    let top: Vec<String> = op.eigenvalues().iter().take(5).map(|v| format!("{v:.4}")).collect();
    println!("top eigenvalues of A_n: {}", top.join(" "));
    println!("positive definite: {}", op.is_positive_definite());

    let lap = op.laplacian.as_ref().expect("graph operators keep their Laplacian");
    let sum = op.matrix.matrix() + lap.matrix();
    let identity_gap = (sum - DMatrix::identity(n, n) * (op.shift + 1.0)).amax();
    println!("max |A_n + L - (a+1) I| = {identity_gap:.2e}");

    let r = 4;
    let (_, top_vecs) = op.eig.top(r);
    let (lap_vals, lap_vecs) = sym_eig(lap)?.bottom(r);
    println!("bottom Laplacian eigenvalues: {:.4?}", lap_vals.as_slice());
    println!("largest principal angle: {:.2e}", max_principal_angle(&top_vecs, &lap_vecs)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
