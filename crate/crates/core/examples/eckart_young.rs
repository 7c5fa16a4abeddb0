// The best rank-r factor of a PD matrix and its loss against random factors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snn_landscape::ambient::{loss, optimal_factor, Factor};
use snn_landscape::sampling::{gaussian_matrix, random_orthogonal, with_spectrum};

pub fn run_example() -> snn_landscape::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = random_orthogonal(6, &mut rng);
    let a = with_spectrum(&q, &[6.0, 4.0, 3.0, 1.5, 1.0, 0.5]);
    let r = 2;

    let target = optimal_factor(&a, r)?;
    let best = loss(&target.factor, &a)?;
    println!("loss(Y*) = {best:.12}, tail sum of squares = {:.12}", target.residual);

    let mut beaten = 0;
    for _ in 0..1000 {
        let y = Factor::new(gaussian_matrix(6, r, &mut rng) * 1.5)?;
        if loss(&y, &a)? < best {
            beaten += 1;
        }
    }
    println!("random factors beating Y*: {beaten} of 1000");

    let rotated = target.factor.rotated(&random_orthogonal(r, &mut rng));
    println!("distance from a rotated copy to [Y*]: {:.2e}", target.distance(&rotated)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> snn_landscape::Result<()> {
    run_example()
}
