//! Transmission versus size: disordered CROW chains localize while the edge
//! channel of the 2D lattice keeps its throughput.

use crowlattice::experiment::{run_size_sweep, ExperimentConfig, SweepConfig};

fn main() -> crowlattice::Result<()> {
    let cfg = ExperimentConfig::transport_default(11);
    let sweep = SweepConfig {
        crow_sizes: vec![10, 20, 40],
        hall_sizes: vec![10, 12, 14],
        crow_omega: 0.0,
        hall_omega: 1.5,
    };
    println!("{:<6} {:>5} {:>7} {:>8} {:>8}", "family", "size", "proxy", "mean", "std");
    for r in run_size_sweep(&cfg, &sweep)? {
        println!(
            "{:<6} {:>5} {:>7} {:>8.3} {:>8.3}",
            r.family, r.size, r.bandwidth_delay_proxy, r.mean_t, r.std_t
        );
    }
    Ok(())
}
