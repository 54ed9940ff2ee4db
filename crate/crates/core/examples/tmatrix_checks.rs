//! Transfer-matrix cross-validation of the effective lattice Hamiltonians,
//! plus one backscattering solve shown in detail.

use std::f64::consts::PI;

use crowlattice::tmatrix::{backscatter, cross_validation, model_scattering_solution, ChainParams, TmChecks};

fn main() -> crowlattice::Result<()> {
    for row in cross_validation(&TmChecks::default())? {
        println!(
            "{} {:<52} {:.3e} (tol {:.3e})",
            if row.passed { "PASS" } else { "FAIL" },
            row.name,
            row.value,
            row.tolerance
        );
    }

    let (f, eps, k) = (300.0, 0.01, PI / 2.0);
    let bs = backscatter(ChainParams::r_for_finesse(f), k, eps)?;
    println!("\nscatterer eps = {eps} in a chain of finesse {f}, K Lambda = pi/2:");
    println!("  |t_down| = {:.4}, |r_down| = {:.4}", bs.t_down.norm(), bs.r_down.norm());
    for factor in [2.0, 4.0] {
        let m = model_scattering_solution(k, -factor * eps * f / PI)?.exact;
        println!(
            "  model with eps' = -{factor} eps F / pi: |t_down| = {:.4}, |r_down| = {:.4}",
            m.t_down.norm(),
            m.r_down.norm()
        );
    }
    Ok(())
}
