//! Recovers near-sparse messages from QNC measurements with the l1 decoder
//! and prints the error as more packets reach the gateway.
//!
//! cargo run --release --example l1_decode -- [eps_k_ratio]

use qnc::coding::{design_coefficients, run_qnc, MeasurementSystem};
use qnc::decoder::{l1_decode, DecoderOptions};
use qnc::network::generate_deployment;
use qnc::quantizer::QuantizerSpec;
use qnc::source::{error_db, generate_messages};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let eps: f64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(0.0);
    let d = generate_deployment(100, 1400, 3)?;
    let c = design_coefficients(&d, 4, 1.0)?;
    let q = QuantizerSpec::new(&d, 20, 10.0)?;
    let msg = generate_messages(100, 5, eps, 10.0, 5)?;
    let x = msg.x.as_slice();
    let run = run_qnc(&d, &c, &q, x, 12, false)?;
    println!("||x|| = {:.1} dB, eps_k ratio {eps}", 20.0 * msg.x.norm().log10());
    for t in 2..=12 {
        let sys = MeasurementSystem::assemble(&d, &c, &q, &run, t);
        let r = l1_decode(&sys.psi_tot, &msg.phi, &sys.z_tot, sys.eps_rec, &DecoderOptions::default())?;
        println!(
            "t={t:>2} m={:>3} error {:>7.2} dB  ({:?}, {} Newton steps)",
            sys.m,
            error_db(x, r.x_hat.as_slice()),
            r.status,
            r.iterations
        );
    }
    Ok(())
}
