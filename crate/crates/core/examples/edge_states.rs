//! Edge states of a 10x10 open lattice at a quarter flux quantum: chiral
//! perimeter currents, the detour around an on-site defect and the edge
//! dispersion. Output files land in `edge-states/`.

use std::path::Path;

use crowlattice::experiment::{run_edge_state_report, EdgeConfig, ExperimentConfig};

fn main() -> crowlattice::Result<()> {
    let mut cfg = ExperimentConfig::transport_default(1);
    cfg.edge = Some(EdgeConfig::default());
    let out = Path::new("edge-states");
    let report = run_edge_state_report(&cfg, out)?;

    println!("magnetic gaps: {:?}", report.gaps);
    println!("edge states inside gaps: {}", report.edge_states_in_gaps);
    if let Some(s) = &report.clean {
        println!("clean mid-gap state at E = {:.4}, single-signed circulation: {}", s.energy, s.single_signed);
    }
    if let (Some(s), Some(r)) = (&report.defect, report.defect_ratio) {
        println!("with the defect: E = {:.4}, defect throughput / mean perimeter current = {r:.3}", s.energy);
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
