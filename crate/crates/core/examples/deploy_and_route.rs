//! Samples a deployment, reports its gateway fan-in and shortest-path routes,
//! and writes it as JSON.
//!
//! cargo run --example deploy_and_route -- [n] [edges] [seed]

use qnc::forwarding::{completion_time, compute_routes};
use qnc::network::generate_deployment;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n = *args.first().unwrap_or(&100) as usize;
    let edges = *args.get(1).unwrap_or(&1400) as usize;
    let seed = *args.get(2).unwrap_or(&1);

    let d = generate_deployment(n, edges, seed)?;
    let routes = compute_routes(&d)?;
    let depth = routes.hops.iter().copied().max().unwrap_or(0);
    let mut per_hop = vec![0usize; depth + 1];
    for &h in &routes.hops {
        per_hop[h] += 1;
    }
    println!("n={n} |E|={edges} gateway={} |In(v0)|={}", d.gateway(), d.measurements_per_step());
    println!("nodes per hop count: {per_hop:?}");
    println!("forwarding drains after t={}", completion_time(&d)?);

    let path = std::env::temp_dir().join(format!("deployment_{n}_{edges}_{seed}.json"));
    d.save_json(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
