//! Shortest-path packet forwarding: deliveries and error per time slot.
//!
//! cargo run --example packet_forwarding -- [block_length]

use qnc::forwarding::{completion_time, run_pf};
use qnc::network::generate_deployment;
use qnc::quantizer::QuantizerSpec;
use qnc::source::{error_db, generate_messages};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let l: u32 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(20);
    let d = generate_deployment(100, 1100, 11)?;
    let msg = generate_messages(100, 5, 0.0, 10.0, 12)?;
    let q = QuantizerSpec::new(&d, l, 10.0)?;
    let t_end = completion_time(&d)?;
    let run = run_pf(&d, msg.x.as_slice(), &q, t_end)?;
    for t in 1..=t_end {
        println!(
            "t={t:>2} delay={:>4} delivered={:>3} error {:>8.2} dB",
            (t - 1) as u32 * l,
            run.delivered[t - 1],
            error_db(msg.x.as_slice(), &run.estimates[t - 1])
        );
    }
    Ok(())
}
