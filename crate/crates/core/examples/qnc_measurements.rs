//! Runs quantized network coding on one deployment and compares the realized
//! effective noise with its analytic radius at every time step.
//!
//! cargo run --release --example qnc_measurements -- [block_length]

use qnc::coding::{design_coefficients, run_qnc, MeasurementSystem};
use qnc::network::generate_deployment;
use qnc::quantizer::QuantizerSpec;
use qnc::source::generate_messages;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let l: u32 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(12);
    let d = generate_deployment(60, 600, 7)?;
    let c = design_coefficients(&d, 8, 1.0)?;
    let q = QuantizerSpec::new(&d, l, 10.0)?;
    let msg = generate_messages(60, 3, 0.02, 10.0, 9)?;
    let t_max = 10;

    let exact = run_qnc(&d, &c, &q, msg.x.as_slice(), t_max, true)?;
    let quantized = run_qnc(&d, &c, &q, msg.x.as_slice(), t_max, false)?;
    println!("L={l}, step {:.3e}, |In(v0)|={}", q.step(0), d.measurements_per_step());
    println!("{:>3} {:>5} {:>12} {:>12} {:>12}", "t", "m", "noiseless", "||N_eff||", "eps_rec");
    for t in 2..=t_max {
        let ideal = MeasurementSystem::assemble(&d, &c, &q, &exact, t);
        let sys = MeasurementSystem::assemble(&d, &c, &q, &quantized, t);
        println!(
            "{t:>3} {:>5} {:>12.2e} {:>12.4e} {:>12.4e}",
            sys.m,
            ideal.noise_norm(msg.x.as_slice()),
            sys.noise_norm(msg.x.as_slice()),
            sys.eps_rec
        );
    }
    Ok(())
}
