// Train a small ReLU network so that its outputs on a sphere cloud
// approximate the top eigenvectors of the adjacency operator, then evaluate
// it on new points.

use snn_landscape::ambient::optimal_factor_from_eig;
use snn_landscape::graph::{adjacency_operator, build_knn_graph, sample_sphere};
use snn_landscape::snn::{out_of_sample, snn_loss, train, Method, ReluNet, TrainConfig};

pub fn run_example() -> snn_landscape::Result<()> {
    let cloud = sample_sphere(60, 1)?;
    let op = adjacency_operator(&build_knn_graph(&cloud, 8)?, 1.5)?;
    let r = 3;
    let target = optimal_factor_from_eig(&op.eig, r)?;

    let net = ReluNet::seeded(&ReluNet::uniform_widths(3, 64, 2, r), 0)?;
    println!("parameters: {}", net.num_params());
    let cfg = TrainConfig { method: Method::Adam, lr: 1e-3, iters: 1500, ..Default::default() };
    let (net, traj) = train(&net, &cloud, &op.matrix, &target, &cfg)?;
    let (first, last) = (traj.first().unwrap(), traj.last().unwrap());
    println!("loss {:.4} -> {:.4} (optimum {:.4})", first.loss, last.loss, target.residual);
    println!("distance to [Y*] {:.4} -> {:.4}", first.dist, last.dist);
    println!("loss recomputed from the network: {:.4}", snn_loss(&net, &cloud, &op.matrix)?);

    let fresh = sample_sphere(5, 99)?;
    let emb = out_of_sample(&net, &fresh)?;
    for (i, row) in emb.row_iter().enumerate() {
        println!("unseen point {i}: {:.4?}", row.iter().collect::<Vec<_>>());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
