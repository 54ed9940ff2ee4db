//! Drop-port spectrum and group delay of a clean 10x10 lattice at a quarter
//! flux quantum, with the probes on the bottom edge.

use crowlattice::lattice::{build_h0, LatticeSpec};
use crowlattice::probe::{group_delay, ProbeSpec, TransportSolver};

fn main() -> crowlattice::Result<()> {
    let spec = LatticeSpec::open(10, 10, 0.25);
    let h = build_h0(&spec)?;
    let probe = ProbeSpec::new((1, 0), (8, 0), 6.0);
    let grid: Vec<f64> = (0..161).map(|i| -4.0 + 0.05 * i as f64).collect();

    let spectrum = TransportSolver::new(&h, &probe)?.spectrum(&grid)?;
    let delay = group_delay(&spectrum)?;
    println!("{:>7} {:>9} {:>9} {:>10}", "omega", "R'", "|t|^2+..", "delay");
    for (p, d) in spectrum.points.iter().zip(&delay).step_by(8) {
        println!(
            "{:>7.2} {:>9.4} {:>9.6} {:>10.3}",
            p.omega,
            p.reflectivity(),
            p.total_power(),
            d
        );
    }
    spectrum.write_csv(std::fs::File::create("transport.csv")?)?;
    Ok(())
}
