//! Finite-difference gradient checks for every layer kind and both model
//! families.
//!
//! cargo run --release --example gradcheck -- [seed]

use maskcons::nn::{finite_diff_check, gradcheck_suite, Network, ScalarLoss};
use maskcons::rng::SeedStream;
use maskcons::tensor::Tensor;
use rand::Rng;

fn main() -> maskcons::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(0, |s| s.parse().expect("integer seed"));
    for r in gradcheck_suite(seed)? {
        println!("{:<16} max rel err {:.3e}", r.name, r.max_rel_err);
    }

    // the same check on a hand-built net and loss
    let net = Network::mlp(&[3, 16, 4], true, seed)?;
    let mut rng = SeedStream::new(seed).fork("inputs");
    let x = Tensor::from_fn(&[5, 3], |_| rng.random_range(-1.0..1.0));
    let loss = ScalarLoss::CrossEntropy(vec![0, 1, 2, 3, 0]);
    let worst = finite_diff_check(&net, &x, &loss, 1e-5, 64, &mut rng)?;
    println!("{:<16} max rel err {worst:.3e}", "custom mlp");
    Ok(())
}
