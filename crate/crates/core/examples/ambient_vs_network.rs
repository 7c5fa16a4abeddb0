// The four-arm comparison between ambient descent and network training,
// started near the optimum and near a saddle of a Gram operator.

use snn_landscape::experiment::{run_fig2_fig3, synthetic_gram_points, Fig23Config};

pub fn run_example() -> snn_landscape::Result<()> {
    let cloud = synthetic_gram_points(100, 0)?;
    let cfg = Fig23Config::default();
    let out = std::env::temp_dir().join("snn_landscape_ambient_vs_network");
    let (summary, _) = run_fig2_fig3(&cloud, &cfg, &out)?;
    println!("r = {}, sigma_r = {:.4}, sigma_r+1 = {:.4}", summary.r, summary.sigma_r, summary.sigma_next);
    for arm in &summary.arms {
        let s = &arm.signature;
        println!(
            "{:<20} grad reduction {:.1e}, plateau {:?} iters, distance drop {:.1e}, signature holds: {}",
            format!("{:?}", arm.arm),
            s.grad_reduction,
            s.grad_plateau_iters,
            s.dist_drop.unwrap_or(f64::NAN),
            s.holds
        );
    }
    println!("trajectories in {}", out.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
