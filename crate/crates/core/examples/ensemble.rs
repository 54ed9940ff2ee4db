//! Disorder ensemble of the 10x10 lattice next to a 40-site CROW chain.
//! Compares the spread of `R'` in the edge-state gap with the spread inside
//! the neighbouring magnetic band.

use crowlattice::experiment::{band_windows, run_transport_ensemble, ExperimentConfig};

fn main() -> crowlattice::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = ExperimentConfig::transport_default(seed);
    let report = run_transport_ensemble(&cfg)?;
    let w = band_windows(cfg.lattice.alpha, cfg.lattice.kappa, 1.5, cfg.disorder_width)?;

    let lat = &report.lattice;
    println!("{} realizations, width {}", cfg.n_realizations, cfg.disorder_width);
    println!("edge window {:.3?}: mean R' {:.3}, std {:.4}", w.edge, lat.band_averaged_mean(w.edge), lat.band_averaged_std(w.edge));
    println!(
        "magnetic window {:.3?}: mean R' {:.3}, std {:.4}",
        w.magnetic,
        lat.band_averaged_mean(w.magnetic),
        lat.band_averaged_std(w.magnetic)
    );
    if let Some(crow) = &report.crow {
        println!("CROW chain over the edge window: mean T {:.3}", crow.band_averaged_mean(w.edge));
        crow.write_csv(std::fs::File::create("ensemble_crow.csv")?)?;
    }
    lat.write_csv(std::fs::File::create("ensemble.csv")?)?;
    Ok(())
}
