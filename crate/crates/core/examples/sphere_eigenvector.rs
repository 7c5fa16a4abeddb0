// Fit a network to the first nontrivial Laplacian eigenvector on a sphere
// and write the per-point values and a summary.

use snn_landscape::experiment::{run_fig1, Fig1Config};

pub fn run_example() -> snn_landscape::Result<()> {
    let out = std::env::temp_dir().join("snn_landscape_sphere_eigenvector");
    let cfg = Fig1Config { n: 120, width: 128, iters: 1500, seed: 5, ..Default::default() };
    let (summary, files) = run_fig1(&cfg, &out)?;
    println!("Laplacian eigenvalue: {:.5}", summary.laplacian_eigenvalue);
    println!(
        "sup discrepancy {:.4} ({:.1}% of the eigenvector's sup norm)",
        summary.sup_discrepancy,
        100.0 * summary.relative_sup_discrepancy
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
