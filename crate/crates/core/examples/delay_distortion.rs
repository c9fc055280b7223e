//! A reduced sweep of QNC against packet forwarding, averaged over trials and
//! turned into block-length optimized delay envelopes. Prints CSV.
//!
//! cargo run --release --example delay_distortion > envelope.csv

use qnc::harness::{aggregate, delay_envelope, run_sweep, write_csv, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig {
        n: 50,
        edge_counts: vec![500],
        l_values: vec![4, 8, 16],
        sparsity_factors: vec![0.05],
        eps_k_ratios: vec![0.0, 0.2],
        trials: 2,
        ..ExperimentConfig::default()
    };
    let records = run_sweep(&cfg)?;
    eprintln!("{} records", records.len());
    let envelope = delay_envelope(&aggregate(&records))?;
    write_csv(&envelope, std::io::stdout().lock())?;
    Ok(())
}
