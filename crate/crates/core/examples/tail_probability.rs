//! Monte-Carlo tail probabilities of QNC measurement matrices next to the
//! Gaussian closed form, and the measurement ratio at matched levels.
//!
//! cargo run --release --example tail_probability -- [edges] [matrix_draws]

use qnc::network::generate_deployment;
use qnc::rip::{estimate_tail_profile, gaussian_tail_probability, measurement_ratios, ColumnScaling, QncSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let edges = *args.first().unwrap_or(&1400);
    let draws = *args.get(1).unwrap_or(&100);
    let eps = 0.2;

    let d = generate_deployment(100, edges, 21)?;
    let src = QncSource::new(d, 8, 1.0)?;
    let prefixes: Vec<usize> = (2..=8).map(|t| src.rows_at(t)).collect();
    let profile = estimate_tail_profile(&src, &prefixes, &[eps], draws, 50, ColumnScaling::Empirical, 22)?;
    println!("{:>5} {:>10} {:>10} {:>10}", "m", "qnc max", "qnc pooled", "gaussian");
    for e in &profile {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4}",
            e.m,
            e.prob,
            e.pooled_prob,
            gaussian_tail_probability(e.m, eps)?
        );
    }
    for r in measurement_ratios(&profile, 10_000)? {
        println!("p={:.3}: m_qnc={} m_gauss={} ratio {:.1}", r.tail_prob, r.m_source, r.m_gaussian, r.ratio);
    }
    Ok(())
}
