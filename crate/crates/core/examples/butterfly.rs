//! Hofstadter butterfly on a 10x10 torus from the drop-port reflectivity.
//!
//! Prints, for each flux value, the frequency windows where `R' > 0.005`,
//! and writes `butterfly.csv` to the current directory.

use crowlattice::lattice::LatticeSpec;
use crowlattice::probe::ProbeSpec;
use crowlattice::spectral::{butterfly_scan, eigenvalue_scan, BUTTERFLY_THRESHOLD};

fn main() -> crowlattice::Result<()> {
    let template = LatticeSpec::torus(10, 10, 0.0);
    let alphas: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
    let grid: Vec<f64> = (0..201).map(|i| -4.5 + 0.045 * i as f64).collect();
    let probe = ProbeSpec::new((0, 0), (1, 0), 0.02);

    let map = butterfly_scan(&template, &alphas, &grid, &probe, BUTTERFLY_THRESHOLD)?;
    let spectra = eigenvalue_scan(&template, &alphas)?;
    for (k, (alpha, eig)) in spectra.iter().enumerate() {
        let support: Vec<String> = map.support(k).iter().map(|&i| format!("{:.2}", grid[i])).collect();
        println!(
            "alpha = {alpha:.1}: spectrum [{:.3}, {:.3}], {} bright frequencies: {}",
            eig[0],
            eig[eig.len() - 1],
            support.len(),
            support.join(" ")
        );
    }
    map.write_csv(std::fs::File::create("butterfly.csv")?)?;
    Ok(())
}
