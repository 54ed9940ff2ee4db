//! Disorder ensembles, size sweeps and edge-state reports driven by a JSON
//! configuration.
//!
//! Realizations are independent work units. Realization `k` of a run with
//! master seed `s` uses child seed [`rng::child_seed`]`(s, k)` for its on-site
//! disorder and `child_seed(child_seed(s, k), 0)` for its magnetic disorder.
//! Results are reduced in realization order, so outputs do not depend on the
//! number of worker threads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CrowError, Result};
use crate::lattice::{
    apply_disorder, build_h0, sample_magnetic_disorder, sample_onsite_disorder,
    DisorderSpec, HamiltonianMatrix, LatticeSpec, OnsiteShift, Spin,
};
use crate::probe::{fmt, group_delay, ProbeSpec, TransportSolver};
use crate::rng;
use crate::spectral::{
    band_gaps, bands_for_alpha, bond_current, classify_state, edge_dispersion, eigensolve, in_gap,
    merged_bands, mid_gap_edge_state, perimeter_currents, perimeter_sites, require_open,
    single_signed, write_dispersion_csv, Edge, StateClass, DEGENERACY_WINDOW, EDGE_THRESHOLD,
};
use crate::tmatrix::TmChecks;

/// Schema version accepted by [`ExperimentConfig`].
pub const CONFIG_VERSION: u32 = 1;

/// Environment variable overriding the worker-thread count.
pub const WORKERS_ENV: &str = "CROW_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    Butterfly,
    EdgeStates,
    TransportEnsemble,
    SizeSweep,
    TMatrixChecks,
}

/// Probe as written in configs: 1-based `[x, y]` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProbeConfig {
    pub in_site: [usize; 2],
    pub out_site: [usize; 2],
    pub nu: f64,
}

impl ProbeConfig {
    /// 0-based probe.
    pub fn to_probe(&self) -> ProbeSpec {
        ProbeSpec::new(
            (self.in_site[0].saturating_sub(1), self.in_site[1].saturating_sub(1)),
            (self.out_site[0].saturating_sub(1), self.out_site[1].saturating_sub(1)),
            self.nu,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl OmegaGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = self.count;
        (0..n)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// 1D chain baseline run next to the 2D lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CrowConfig {
    pub sites: usize,
    #[serde(default = "default_crow_nu")]
    pub nu: f64,
}

fn default_crow_nu() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepConfig {
    pub crow_sizes: Vec<usize>,
    pub hall_sizes: Vec<usize>,
    #[serde(default)]
    pub crow_omega: f64,
    #[serde(default = "default_hall_omega")]
    pub hall_omega: f64,
}

fn default_hall_omega() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ButterflyConfig {
    #[serde(default = "default_alpha_count")]
    pub alpha_count: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_alpha_count() -> usize {
    10
}

fn default_threshold() -> f64 {
    crate::spectral::BUTTERFLY_THRESHOLD
}

impl Default for ButterflyConfig {
    fn default() -> Self {
        Self {
            alpha_count: default_alpha_count(),
            threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EdgeConfig {
    #[serde(default = "default_edge_threshold")]
    pub threshold: f64,
    /// 1-based defect site.
    #[serde(default = "default_defect_site")]
    pub defect_site: [usize; 2],
    #[serde(default = "default_defect_u")]
    pub defect_u: f64,
    /// Energy inside the gap whose mid-gap state is reported.
    #[serde(default = "default_hall_omega")]
    pub gap_hint: f64,
}

fn default_edge_threshold() -> f64 {
    EDGE_THRESHOLD
}

fn default_defect_site() -> [usize; 2] {
    [6, 1]
}

fn default_defect_u() -> f64 {
    5.0
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            threshold: default_edge_threshold(),
            defect_site: default_defect_site(),
            defect_u: default_defect_u(),
            gap_hint: default_hall_omega(),
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_realizations() -> usize {
    50
}

fn default_window() -> f64 {
    DEGENERACY_WINDOW
}

/// Versioned experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub experiment: ExperimentKind,
    pub lattice: LatticeSpec,
    pub probe: ProbeConfig,
    #[serde(default)]
    pub disorder_width: f64,
    #[serde(default)]
    pub magnetic_width: f64,
    #[serde(default)]
    pub loss_rate: f64,
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    pub seed: u64,
    pub omega_grid: OmegaGrid,
    #[serde(default = "default_window")]
    pub degeneracy_window: f64,
    #[serde(default)]
    pub crow: Option<CrowConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub butterfly: Option<ButterflyConfig>,
    #[serde(default)]
    pub edge: Option<EdgeConfig>,
    #[serde(default)]
    pub tmatrix: Option<TmChecks>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CrowError::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CrowError::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    /// Lists every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!(
                "version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if let Err(e) = self.lattice.validate() {
            errs.push(format!("lattice: {e}"));
        }
        for (name, s) in [("probe.inSite", self.probe.in_site), ("probe.outSite", self.probe.out_site)] {
            if s[0] == 0 || s[1] == 0 {
                errs.push(format!("{name}: coordinates are 1-based"));
            } else if s[0] > self.lattice.nx || s[1] > self.lattice.ny {
                errs.push(format!(
                    "{name}: ({}, {}) outside the {}x{} lattice",
                    s[0], s[1], self.lattice.nx, self.lattice.ny
                ));
            }
        }
        if self.probe.in_site == self.probe.out_site {
            errs.push("probe: inSite and outSite coincide".into());
        }
        if !(self.probe.nu > 0.0 && self.probe.nu.is_finite()) {
            errs.push(format!("probe.nu must be positive, got {}", self.probe.nu));
        }
        for (name, v) in [
            ("disorderWidth", self.disorder_width),
            ("magneticWidth", self.magnetic_width),
            ("lossRate", self.loss_rate),
            ("degeneracyWindow", self.degeneracy_window),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be a nonnegative number, got {v}"));
            }
        }
        if self.n_realizations < 1 {
            errs.push("nRealizations must be at least 1".into());
        }
        if self.omega_grid.count < 2 {
            errs.push(format!("omegaGrid.count must be at least 2, got {}", self.omega_grid.count));
        }
        if !(self.omega_grid.min < self.omega_grid.max) {
            errs.push("omegaGrid.min must be below omegaGrid.max".into());
        }
        if let Some(c) = &self.crow {
            if c.sites < 2 {
                errs.push("crow.sites must be at least 2".into());
            }
            if !(c.nu > 0.0) {
                errs.push("crow.nu must be positive".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.crow_sizes.iter().any(|&n| n < 2) {
                errs.push("sweep.crowSizes entries must be at least 2".into());
            }
            if s.hall_sizes.iter().any(|&n| n < 4) {
                errs.push("sweep.hallSizes entries must be at least 4".into());
            }
        }
        if let Some(b) = &self.butterfly {
            if b.alpha_count == 0 {
                errs.push("butterfly.alphaCount must be positive".into());
            }
        }
        if let Some(e) = &self.edge {
            let [x, y] = e.defect_site;
            if x == 0 || y == 0 || x > self.lattice.nx || y > self.lattice.ny {
                errs.push(format!("edge.defectSite ({x}, {y}) outside the lattice (1-based)"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CrowError::Config(errs))
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Transport-ensemble default: 10x10 lattice at a quarter flux quantum.
    pub fn transport_default(seed: u64) -> Self {
        Self {
            version: CONFIG_VERSION,
            experiment: ExperimentKind::TransportEnsemble,
            lattice: LatticeSpec::open(10, 10, 0.25),
            probe: ProbeConfig {
                in_site: [2, 1],
                out_site: [9, 1],
                nu: 6.0,
            },
            disorder_width: 0.4,
            magnetic_width: 0.0,
            loss_rate: 0.0,
            n_realizations: default_realizations(),
            seed,
            omega_grid: OmegaGrid {
                min: -4.0,
                max: 4.0,
                count: 161,
            },
            degeneracy_window: DEGENERACY_WINDOW,
            crow: Some(CrowConfig { sites: 40, nu: 2.0 }),
            sweep: None,
            butterfly: None,
            edge: None,
            tmatrix: None,
        }
    }
}

/// Pointwise ensemble statistics over the frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EnsembleStats {
    pub omega_grid: Vec<f64>,
    pub mean_r_prime: Vec<f64>,
    pub std_r_prime: Vec<f64>,
    pub mean_delay: Vec<f64>,
    pub std_delay: Vec<f64>,
    pub per_realization_seeds: Vec<u64>,
}

impl EnsembleStats {
    /// CSV `omega, meanRPrime, stdRPrime, meanDelay, stdDelay`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "omega,meanRPrime,stdRPrime,meanDelay,stdDelay")?;
        for i in 0..self.omega_grid.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt(self.omega_grid[i]),
                fmt(self.mean_r_prime[i]),
                fmt(self.std_r_prime[i]),
                fmt(self.mean_delay[i]),
                fmt(self.std_delay[i])
            )?;
        }
        Ok(())
    }

    /// Average of `std R'` over grid points inside `window`.
    pub fn band_averaged_std(&self, window: (f64, f64)) -> f64 {
        band_average(&self.omega_grid, &self.std_r_prime, window)
    }

    /// Average of `mean R'` over grid points inside `window`.
    pub fn band_averaged_mean(&self, window: (f64, f64)) -> f64 {
        band_average(&self.omega_grid, &self.mean_r_prime, window)
    }
}

fn band_average(grid: &[f64], values: &[f64], window: (f64, f64)) -> f64 {
    let sel: Vec<f64> = grid
        .iter()
        .zip(values)
        .filter(|(w, v)| **w >= window.0 && **w <= window.1 && v.is_finite())
        .map(|(_, v)| *v)
        .collect();
    sel.iter().sum::<f64>() / sel.len() as f64
}

/// Mean and sample standard deviation of the finite entries.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(grid: &[f64], seeds: Vec<u64>, runs: &[(Vec<f64>, Vec<f64>)]) -> EnsembleStats {
    let n = grid.len();
    let mut stats = EnsembleStats {
        omega_grid: grid.to_vec(),
        mean_r_prime: Vec::with_capacity(n),
        std_r_prime: Vec::with_capacity(n),
        mean_delay: Vec::with_capacity(n),
        std_delay: Vec::with_capacity(n),
        per_realization_seeds: seeds,
    };
    for i in 0..n {
        let r: Vec<f64> = runs.iter().map(|(r, _)| r[i]).collect();
        let d: Vec<f64> = runs.iter().map(|(_, d)| d[i]).collect();
        let (mr, sr) = mean_std(&r);
        let (md, sd) = mean_std(&d);
        stats.mean_r_prime.push(mr);
        stats.std_r_prime.push(sr);
        stats.mean_delay.push(md);
        stats.std_delay.push(sd);
    }
    stats
}

/// Disorder of one realization.
pub fn realization_disorder(
    spec: &LatticeSpec,
    width: f64,
    magnetic_width: f64,
    loss_rate: f64,
    seed: u64,
) -> Result<DisorderSpec> {
    let mut dis = DisorderSpec::default();
    if width > 0.0 {
        dis = dis.merged(sample_onsite_disorder(spec, width, seed)?);
    }
    if magnetic_width > 0.0 {
        dis = dis.merged(sample_magnetic_disorder(spec, magnetic_width, rng::child_seed(seed, 0))?);
    }
    Ok(dis.with_loss(loss_rate))
}

fn realization(
    h0: &HamiltonianMatrix,
    spec: &LatticeSpec,
    probe: &ProbeSpec,
    grid: &[f64],
    width: f64,
    magnetic_width: f64,
    loss_rate: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dis = realization_disorder(spec, width, magnetic_width, loss_rate, seed)?;
    let h = apply_disorder(h0, spec, &dis)?;
    let s = TransportSolver::new(&h, probe)?.spectrum(grid)?;
    let delay = group_delay(&s)?;
    Ok((s.reflectivity(), delay))
}

/// Ensemble of one lattice family with a shared probe.
#[allow(clippy::too_many_arguments)]
pub fn run_family(
    spec: &LatticeSpec,
    probe: &ProbeSpec,
    grid: &[f64],
    width: f64,
    magnetic_width: f64,
    loss_rate: f64,
    n_realizations: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    let h0 = build_h0(spec)?;
    let seeds: Vec<u64> = (0..n_realizations as u64).map(|k| rng::child_seed(seed, k)).collect();
    let runs = seeds
        .par_iter()
        .map(|&s| {
            realization(&h0, spec, probe, grid, width, magnetic_width, loss_rate, s).map_err(|e| {
                CrowError::Realization {
                    seed: s,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(grid, seeds, &runs))
}

/// 2D lattice ensemble plus the optional chain baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EnsembleReport {
    pub lattice: EnsembleStats,
    pub crow: Option<EnsembleStats>,
}

/// Chain spec and end-to-end probe of the baseline.
pub fn crow_setup(sites: usize, nu: f64, kappa: f64) -> (LatticeSpec, ProbeSpec) {
    (
        LatticeSpec::open(sites, 1, 0.0).with_kappa(kappa),
        ProbeSpec::new((0, 0), (sites - 1, 0), nu),
    )
}

pub fn run_transport_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    cfg.validate()?;
    let grid = cfg.omega_grid.points();
    let lattice = run_family(
        &cfg.lattice,
        &cfg.probe.to_probe(),
        &grid,
        cfg.disorder_width,
        cfg.magnetic_width,
        cfg.loss_rate,
        cfg.n_realizations,
        cfg.seed,
    )?;
    let crow = match &cfg.crow {
        None => None,
        Some(c) => {
            let (spec, probe) = crow_setup(c.sites, c.nu, cfg.lattice.kappa);
            Some(run_family(
                &spec,
                &probe,
                &grid,
                cfg.disorder_width,
                cfg.magnetic_width,
                cfg.loss_rate,
                cfg.n_realizations,
                cfg.seed,
            )?)
        }
    };
    Ok(EnsembleReport { lattice, crow })
}

/// Frequency windows for band-averaged statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BandWindows {
    /// Gap around `near`, shrunk by `margin` on both sides.
    pub edge: (f64, f64),
    /// Magnetic band just below that gap, shrunk by `margin`.
    pub magnetic: (f64, f64),
}

/// Windows from the infinite-lattice magnetic bands at flux `alpha`.
pub fn band_windows(alpha: f64, kappa: f64, near: f64, margin: f64) -> Result<BandWindows> {
    let bands = merged_bands(&bands_for_alpha(alpha, kappa, 64)?);
    let gaps = band_gaps(&bands);
    let gap = gaps
        .iter()
        .copied()
        .find(|g| near > g.0 && near < g.1)
        .ok_or_else(|| CrowError::InvalidArgument(format!("omega = {near} is not inside a magnetic gap")))?;
    let below = bands
        .iter()
        .copied()
        .find(|b| (b.1 - gap.0).abs() < 1e-9)
        .expect("a gap is bounded by a band");
    let edge = (gap.0 + margin, gap.1 - margin);
    let magnetic = (below.0 + margin, below.1 - margin);
    if edge.0 >= edge.1 || magnetic.0 >= magnetic.1 {
        return Err(CrowError::InvalidArgument(format!(
            "margin {margin} leaves an empty window"
        )));
    }
    Ok(BandWindows { edge, magnetic })
}

/// One point of the size sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub family: String,
    pub size: usize,
    pub bandwidth_delay_proxy: usize,
    pub mean_t: f64,
    pub std_t: f64,
}

/// Number of perimeter resonators visited walking clockwise from `from` to
/// `to`, both included.
pub fn perimeter_path(nx: usize, ny: usize, from: (usize, usize), to: (usize, usize)) -> usize {
    let per = perimeter_sites(nx, ny);
    let n = per.len();
    let a = per.iter().position(|&s| s == from).unwrap_or(0);
    let b = per.iter().position(|&s| s == to).unwrap_or(0);
    (a + n - b) % n + 1
}

/// Probe placement of the 2D lattice: second and second-to-last sites of the
/// bottom row.
pub fn hall_probe(n: usize, nu: f64) -> ProbeSpec {
    ProbeSpec::new((1, 0), (n - 2, 0), nu)
}

fn point_stats(
    spec: &LatticeSpec,
    probe: &ProbeSpec,
    omega: f64,
    width: f64,
    n_realizations: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let h0 = build_h0(spec)?;
    let values = (0..n_realizations as u64)
        .into_par_iter()
        .map(|k| {
            let s = rng::child_seed(seed, k);
            let dis = realization_disorder(spec, width, 0.0, 0.0, s)?;
            let h = apply_disorder(&h0, spec, &dis)?;
            Ok(crate::probe::transport(&h, probe, omega)?.reflectivity())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_std(&values))
}

/// Drop-channel transmission versus size: chains at `crowOmega`, square
/// lattices at `hallOmega`.
pub fn run_size_sweep(cfg: &ExperimentConfig, sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let kappa = cfg.lattice.kappa;
    let crow_nu = cfg.crow.map_or(default_crow_nu(), |c| c.nu);
    let mut rows = Vec::new();
    for &n in &sweep.crow_sizes {
        let (spec, probe) = crow_setup(n, crow_nu, kappa);
        let (m, s) = point_stats(&spec, &probe, sweep.crow_omega, cfg.disorder_width, cfg.n_realizations, cfg.seed)?;
        rows.push(SweepRow {
            family: "crow".into(),
            size: n,
            bandwidth_delay_proxy: n,
            mean_t: m,
            std_t: s,
        });
    }
    for &n in &sweep.hall_sizes {
        let spec = LatticeSpec::open(n, n, cfg.lattice.alpha).with_kappa(kappa);
        let probe = hall_probe(n, cfg.probe.nu);
        let (m, s) = point_stats(&spec, &probe, sweep.hall_omega, cfg.disorder_width, cfg.n_realizations, cfg.seed)?;
        rows.push(SweepRow {
            family: "hall".into(),
            size: n,
            bandwidth_delay_proxy: perimeter_path(n, n, probe.in_site, probe.out_site),
            mean_t: m,
            std_t: s,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "family,size,bandwidthDelayProxy,meanT,stdT")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.family,
            r.size,
            r.bandwidth_delay_proxy,
            fmt(r.mean_t),
            fmt(r.std_t)
        )?;
    }
    Ok(())
}

/// Currents of one selected edge state.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectedState {
    pub energy: f64,
    pub perimeter_currents: Vec<f64>,
    pub single_signed: bool,
}

/// Summary of an edge-state report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeReport {
    pub gaps: Vec<(f64, f64)>,
    pub edge_states_in_gaps: usize,
    pub clean: Option<SelectedState>,
    pub defect: Option<SelectedState>,
    /// Throughput of the defect site over the mean perimeter current.
    pub defect_ratio: Option<f64>,
    pub files: Vec<PathBuf>,
}

fn select_state(
    h: &HamiltonianMatrix,
    spec: &LatticeSpec,
    gap: (f64, f64),
    threshold: f64,
) -> Result<Option<(SelectedState, crate::spectral::CurrentField)>> {
    let eig = eigensolve(h)?;
    let Some(k) = mid_gap_edge_state(&eig, spec, gap, threshold) else {
        return Ok(None);
    };
    let field = bond_current(h, &eig.vector(k));
    let currents = perimeter_currents(&field, spec.nx, spec.ny, Spin::Up);
    Ok(Some((
        SelectedState {
            energy: eig.real_values().expect("hermitian")[k],
            single_signed: single_signed(&currents),
            perimeter_currents: currents,
        },
        field,
    )))
}

/// Currents, dispersion and classification of the Up block of a clean open
/// lattice, plus the currents with an on-site defect.
///
/// Writes `currents.csv`, `currents_defect.csv`, `dispersion.csv` and
/// `classification.csv` into `out_dir`. A lattice without magnetic gaps yields
/// an empty edge table and a warning.
pub fn run_edge_state_report(cfg: &ExperimentConfig, out_dir: &Path) -> Result<EdgeReport> {
    cfg.validate()?;
    let spec = cfg.lattice;
    require_open(&spec)?;
    let ec = cfg.edge.unwrap_or_default();
    fs::create_dir_all(out_dir)?;
    let h = build_h0(&spec)?.spin_block(Spin::Up)?;
    let gaps = band_gaps(&bands_for_alpha(spec.alpha, spec.kappa, 64)?);
    let mut files = Vec::new();

    let eig = eigensolve(&h)?;
    let values = eig.real_values().expect("hermitian").to_vec();
    let path = out_dir.join("classification.csv");
    let mut out = fs::File::create(&path)?;
    writeln!(out, "energy,perimeterWeight,class,inGap")?;
    let mut edge_in_gaps = 0;
    for (k, &e) in values.iter().enumerate() {
        let psi = eig.vector(k);
        let w = crate::spectral::perimeter_weight(&psi, spec.nx, spec.ny);
        let class = classify_state(&psi, &spec, ec.threshold);
        let gap = in_gap(e, &gaps);
        if class == StateClass::Edge && gap {
            edge_in_gaps += 1;
        }
        writeln!(out, "{},{},{:?},{}", fmt(e), fmt(w), class, gap)?;
    }
    files.push(path);

    let path = out_dir.join("dispersion.csv");
    let mut pts = Vec::new();
    for edge in [Edge::Lower, Edge::Upper] {
        pts.extend(
            edge_dispersion(&h, edge, ec.threshold)?
                .into_iter()
                .filter(|p| p.class == StateClass::Edge && in_gap(p.energy, &gaps)),
        );
    }
    write_dispersion_csv(&pts, fs::File::create(&path)?)?;
    files.push(path);

    let mut report = EdgeReport {
        gaps: gaps.clone(),
        edge_states_in_gaps: edge_in_gaps,
        clean: None,
        defect: None,
        defect_ratio: None,
        files: Vec::new(),
    };
    let chosen_gap = gaps.iter().copied().find(|g| ec.gap_hint > g.0 && ec.gap_hint < g.1);
    match chosen_gap {
        None => {
            log::warn!("no magnetic gap contains omega = {}: no edge states to report", ec.gap_hint);
        }
        Some(gap) => {
            if let Some((state, field)) = select_state(&h, &spec, gap, ec.threshold)? {
                let path = out_dir.join("currents.csv");
                field.write_csv(fs::File::create(&path)?)?;
                files.push(path);
                report.clean = Some(state);
            }
            let (dx, dy) = (ec.defect_site[0] - 1, ec.defect_site[1] - 1);
            let dis = DisorderSpec {
                onsite: vec![OnsiteShift { x: dx, y: dy, u: ec.defect_u }],
                ..Default::default()
            };
            let hd = apply_disorder(&h, &spec, &dis)?;
            if let Some((state, field)) = select_state(&hd, &spec, gap, ec.threshold)? {
                let path = out_dir.join("currents_defect.csv");
                field.write_csv(fs::File::create(&path)?)?;
                files.push(path);
                let mean = state.perimeter_currents.iter().map(|c| c.abs()).sum::<f64>()
                    / state.perimeter_currents.len() as f64;
                let site = crate::lattice::SiteIndex::new(dx, dy, Spin::Up);
                report.defect_ratio = Some(field.throughput(site) / mean);
                report.defect = Some(state);
            }
        }
    }
    if report.edge_states_in_gaps == 0 {
        log::warn!("no edge states found inside magnetic gaps");
    }
    report.files = files;
    Ok(report)
}

/// Wall-clock and provenance record written next to every CLI output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub timestamp: String,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            version: version_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config: cfg.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("run-manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// `v<crate version>` plus the commit in `CROW_GIT_REV` when set at build time.
pub fn version_string() -> String {
    match option_env!("CROW_GIT_REV") {
        Some(rev) => format!("v{}-g{rev}", env!("CARGO_PKG_VERSION")),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// Worker pool sized by `CROW_WORKERS`, or rayon's default when unset.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| CrowError::Config(vec![format!("{WORKERS_ENV}={v} is not a count")]))?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| CrowError::Config(vec![format!("worker pool: {e}")]))
}
