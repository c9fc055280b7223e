//! Exhaustive restricted isometry constants of a small measurement matrix and
//! the recovery guarantee they imply.

use nalgebra::{DMatrix, DVector};
use qnc::decoder::{error_bound, l1_decode, DecoderOptions};
use qnc::rip::{exhaustive_rip_constant, gram_eigen_range, rip_success_lower_bound};
use qnc::source::generate_messages;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (m, n, k) = (400, 12, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let psi = DMatrix::from_fn(m, n, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v / (m as f64).sqrt()
    });
    for order in 1..=3 {
        println!("delta_{order} = {:.4}", exhaustive_rip_constant(&psi, order)?);
    }

    // the decoder is invariant to a common rescaling, so use the best one
    let (lo, hi) = gram_eigen_range(&psi, 2 * k)?;
    let scale = (2.0 / (lo + hi)).sqrt();
    let delta = (hi - lo) / (hi + lo);
    let msg = generate_messages(n, k, 0.02, 10.0, 6)?;
    let radius = 0.05 * (&psi * &msg.x).norm();
    let z = &psi * &msg.x + DVector::from_element(m, radius / (m as f64).sqrt());
    let r = l1_decode(&psi, &msg.phi, &z, radius, &DecoderOptions::default())?;
    println!(
        "delta_2k of the rescaled matrix {delta:.3}: error {:.4} <= bound {:.4}",
        (&r.x_hat - &msg.x).norm(),
        error_bound(scale * radius, msg.eps_k, delta)?
    );
    println!(
        "P(delta_2 < 0.5) >= {:.6} when the tail probability is 1e-9",
        rip_success_lower_bound(n as u64, 2, 0.5, 1e-9)?
    );
    Ok(())
}
