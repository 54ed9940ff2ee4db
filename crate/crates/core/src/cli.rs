//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{CrowError, Result};
use crate::experiment::{
    band_windows, realization_disorder, run_edge_state_report, run_size_sweep,
    run_transport_ensemble, worker_pool, ButterflyConfig, ExperimentConfig, RunManifest,
    SweepConfig,
};
use crate::lattice::{apply_disorder, build_h0};
use crate::probe::{fmt, transport_spectrum};
use crate::spectral::{butterfly_scan, eigensolve};
use crate::tmatrix::{cross_validation, write_checks_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "crowlattice", version, about = "Coupled-resonator lattice simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reflectivity map over flux and frequency.
    Butterfly(Common),
    /// Eigenvalues of one (optionally disordered) lattice.
    Spectrum(Common),
    /// Edge-state currents, dispersion and classification.
    Eigenstate(Common),
    /// Transport spectrum of one realization.
    Transport(Common),
    /// Disorder ensemble statistics.
    Ensemble(Common),
    /// Transmission versus system size.
    Sweep(Common),
    /// Transfer-matrix cross-validation table.
    Tmatrix(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    /// Sets both lattice dimensions.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| CrowError::Config(vec![format!("{}: {e}", self.config.display())]))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CrowError::Config(vec![e.to_string()]))?;
        if let Some(a) = self.alpha {
            cfg.lattice.alpha = a;
        }
        if let Some(n) = self.size {
            cfg.lattice.nx = n;
            cfg.lattice.ny = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    Ok(fs::File::create(dir.join(name))?)
}

fn run(cmd: Command) -> Result<()> {
    let (name, common) = match &cmd {
        Command::Butterfly(c) => ("butterfly", c),
        Command::Spectrum(c) => ("spectrum", c),
        Command::Eigenstate(c) => ("eigenstate", c),
        Command::Transport(c) => ("transport", c),
        Command::Ensemble(c) => ("ensemble", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Tmatrix(c) => ("tmatrix", c),
    };
    let cfg = common.resolve()?;
    let out = &common.out;
    fs::create_dir_all(out)?;
    let pool = worker_pool()?;
    pool.install(|| execute(name, &cfg, out))?;
    RunManifest::new(name, &cfg).write(out)?;
    Ok(())
}

fn execute(name: &str, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let grid = cfg.omega_grid.points();
    match name {
        "butterfly" => {
            let b = cfg.butterfly.unwrap_or_else(ButterflyConfig::default);
            let alphas: Vec<f64> = (0..b.alpha_count)
                .map(|k| k as f64 / b.alpha_count as f64)
                .collect();
            let map = butterfly_scan(&cfg.lattice, &alphas, &grid, &cfg.probe.to_probe(), b.threshold)?;
            map.write_csv(create(out, "butterfly.csv")?)?;
        }
        "spectrum" => {
            let h0 = build_h0(&cfg.lattice)?;
            let dis = realization_disorder(
                &cfg.lattice,
                cfg.disorder_width,
                cfg.magnetic_width,
                cfg.loss_rate,
                cfg.seed,
            )?;
            let h = apply_disorder(&h0, &cfg.lattice, &dis)?;
            let eig = eigensolve(&h)?;
            let mut f = create(out, "spectrum.csv")?;
            writeln!(f, "index,re,im")?;
            for (k, z) in eig.complex_values().iter().enumerate() {
                writeln!(f, "{k},{},{}", fmt(z.re), fmt(z.im))?;
            }
        }
        "eigenstate" => {
            let rep = run_edge_state_report(cfg, out)?;
            fs::write(out.join("edge-report.json"), serde_json::to_string_pretty(&rep)?)?;
            println!(
                "edge states in gaps: {}, defect throughput ratio: {}",
                rep.edge_states_in_gaps,
                rep.defect_ratio.map_or("n/a".into(), |r| format!("{r:.3}"))
            );
        }
        "transport" => {
            let h0 = build_h0(&cfg.lattice)?;
            let dis = realization_disorder(
                &cfg.lattice,
                cfg.disorder_width,
                cfg.magnetic_width,
                cfg.loss_rate,
                cfg.seed,
            )?;
            let h = apply_disorder(&h0, &cfg.lattice, &dis)?;
            transport_spectrum(&h, &cfg.probe.to_probe(), &grid)?.write_csv(create(out, "transport.csv")?)?;
        }
        "ensemble" => {
            let rep = run_transport_ensemble(cfg)?;
            rep.lattice.write_csv(create(out, "ensemble.csv")?)?;
            let mut f = create(out, "seeds.csv")?;
            writeln!(f, "realization,seed")?;
            for (k, s) in rep.lattice.per_realization_seeds.iter().enumerate() {
                writeln!(f, "{k},{s}")?;
            }
            if let Some(c) = &rep.crow {
                c.write_csv(create(out, "ensemble_crow.csv")?)?;
            }
            if let Ok(w) = band_windows(cfg.lattice.alpha, cfg.lattice.kappa, 1.5, cfg.disorder_width) {
                println!(
                    "band-averaged std R': edge {:.4}, magnetic {:.4}",
                    rep.lattice.band_averaged_std(w.edge),
                    rep.lattice.band_averaged_std(w.magnetic)
                );
            }
        }
        "sweep" => {
            let sweep = cfg.sweep.clone().unwrap_or(SweepConfig {
                crow_sizes: vec![10, 20, 40],
                hall_sizes: vec![10, 12, 14],
                crow_omega: 0.0,
                hall_omega: 1.5,
            });
            let rows = run_size_sweep(cfg, &sweep)?;
            crate::experiment::write_sweep_csv(&rows, create(out, "sweep.csv")?)?;
        }
        "tmatrix" => {
            let rows = cross_validation(&cfg.tmatrix.unwrap_or_default())?;
            write_checks_csv(&rows, create(out, "tmatrix_checks.csv")?)?;
            for r in &rows {
                println!(
                    "{} {:<52} value {:.3e} tol {:.3e}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.value,
                    r.tolerance
                );
            }
        }
        _ => unreachable!("subcommand names are fixed"),
    }
    Ok(())
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}
