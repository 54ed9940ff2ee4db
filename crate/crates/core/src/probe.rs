//! Waveguide probes and Green's-function transport.
//!
//! An input and an output waveguide are side-coupled to one resonator each.
//! Their leakage enters as the self-energy `-i nu / 2` on both circulations of
//! the coupled resonators, and the drive always enters the Up mode of the
//! input resonator. With `G = (omega - H - Sigma)^{-1}`:
//!
//! ```text
//! t  = 1 - i nu G[in Up,  in Up]      forward transmission, input waveguide
//! r' =   - i nu G[out Up, in Up]      drop channel
//! r  =   - i nu G[in Down, in Up]     back-reflection, input waveguide
//! t' =   - i nu G[out Down, in Up]    output waveguide, backward leakage
//! ```

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrowError, Result};
use crate::lattice::{HamiltonianMatrix, LatticeSpec, Sector, SiteIndex, Spin};
use crate::linalg::HessenbergResolvent;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Residual bound enforced on every Green's-function solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Amplitude below which the drop-channel phase is treated as undefined.
pub const DELAY_FLOOR: f64 = 1e-8;

/// Input and output coupling sites (0-based) and the waveguide decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProbeSpec {
    pub in_site: (usize, usize),
    pub out_site: (usize, usize),
    pub nu: f64,
    /// Allows `in_site == out_site` (single-resonator mode).
    #[serde(default)]
    pub single_site: bool,
}

impl ProbeSpec {
    pub fn new(in_site: (usize, usize), out_site: (usize, usize), nu: f64) -> Self {
        Self {
            in_site,
            out_site,
            nu,
            single_site: false,
        }
    }

    /// Both waveguides on the same resonator.
    pub fn single(site: (usize, usize), nu: f64) -> Self {
        Self {
            in_site: site,
            out_site: site,
            nu,
            single_site: true,
        }
    }

    /// Input and output exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            in_site: self.out_site,
            out_site: self.in_site,
            ..*self
        }
    }

    pub fn validate(&self, nx: usize, ny: usize) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(CrowError::InvalidArgument(format!(
                "probe rate nu must be positive, got {}",
                self.nu
            )));
        }
        for &(x, y) in &[self.in_site, self.out_site] {
            if x >= nx || y >= ny {
                return Err(CrowError::SiteOutOfRange { x, y, nx, ny });
            }
        }
        if self.in_site == self.out_site && !self.single_site {
            return Err(CrowError::InvalidArgument(
                "input and output sites coincide; set singleSite for the single-resonator mode"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Transport coefficients at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransportCoefficients {
    pub omega: f64,
    pub t: Complex64,
    pub r: Complex64,
    pub r_prime: Complex64,
    pub t_prime: Complex64,
}

impl TransportCoefficients {
    /// Drop-channel reflectivity `|r'|^2`.
    pub fn reflectivity(&self) -> f64 {
        self.r_prime.norm_sqr()
    }

    /// `|t|^2 + |r|^2 + |r'|^2 + |t'|^2`.
    pub fn total_power(&self) -> f64 {
        self.t.norm_sqr() + self.r.norm_sqr() + self.r_prime.norm_sqr() + self.t_prime.norm_sqr()
    }
}

/// Diagonal self-energy in the basis of `h`.
pub fn self_energy_for(h: &HamiltonianMatrix, probe: &ProbeSpec) -> Result<DMatrix<Complex64>> {
    probe.validate(h.nx(), h.ny())?;
    let mut s = DMatrix::zeros(h.dim(), h.dim());
    let half = Complex64::new(0.0, -probe.nu / 2.0);
    for &(x, y) in &[probe.in_site, probe.out_site] {
        for &spin in h.spins() {
            let i = h.index(x, y, spin).expect("spin present");
            s[(i, i)] += half;
        }
    }
    Ok(s)
}

/// Self-energy `-i nu/2` on both spins of the input and output sites.
pub fn self_energy(probe: &ProbeSpec, spec: &LatticeSpec) -> Result<HamiltonianMatrix> {
    spec.validate()?;
    let zero = DMatrix::zeros(spec.dim(), spec.dim());
    let h = HamiltonianMatrix::from_dense(spec.nx, spec.ny, spec.kappa, Sector::Both, zero)?;
    let s = self_energy_for(&h, probe)?;
    HamiltonianMatrix::from_dense(spec.nx, spec.ny, spec.kappa, Sector::Both, s)
}

fn shifted(h: &HamiltonianMatrix, sigma: &DMatrix<Complex64>, omega: f64) -> DMatrix<Complex64> {
    let mut a = -(h.entries() + sigma);
    for i in 0..a.nrows() {
        a[(i, i)] += omega;
    }
    a
}

/// Solves `(omega - H - Sigma) g = e_source`.
pub fn greens_column(
    h: &HamiltonianMatrix,
    sigma: &HamiltonianMatrix,
    omega: f64,
    source: SiteIndex,
) -> Result<DVector<Complex64>> {
    if sigma.dim() != h.dim() {
        return Err(CrowError::InvalidArgument("self-energy shape mismatch".into()));
    }
    let src = h
        .index(source.x, source.y, source.spin)
        .filter(|_| source.x < h.nx() && source.y < h.ny())
        .ok_or(CrowError::SiteOutOfRange {
            x: source.x,
            y: source.y,
            nx: h.nx(),
            ny: h.ny(),
        })?;
    solve_column(h, sigma.entries(), omega, src)
}

fn solve_column(
    h: &HamiltonianMatrix,
    sigma: &DMatrix<Complex64>,
    omega: f64,
    src: usize,
) -> Result<DVector<Complex64>> {
    let a = shifted(h, sigma, omega);
    let mut e = DVector::zeros(h.dim());
    e[src] = Complex64::new(1.0, 0.0);
    let g = a
        .clone()
        .lu()
        .solve(&e)
        .ok_or(CrowError::Singular {
            omega,
            residual: f64::INFINITY,
        })?;
    let residual = (&a * &g - &e).norm();
    if !(residual <= RESIDUAL_TOL) {
        return Err(CrowError::Singular { omega, residual });
    }
    Ok(g)
}

struct Channels {
    src: usize,
    rows: [Option<usize>; 4],
}

fn channels(h: &HamiltonianMatrix, probe: &ProbeSpec) -> Result<Channels> {
    probe.validate(h.nx(), h.ny())?;
    let (ix, iy) = probe.in_site;
    let (ox, oy) = probe.out_site;
    let src = h.index(ix, iy, Spin::Up).ok_or_else(|| {
        CrowError::InvalidArgument("transport drives the Up block, which is absent".into())
    })?;
    Ok(Channels {
        src,
        rows: [
            Some(src),
            h.index(ox, oy, Spin::Up),
            h.index(ix, iy, Spin::Down),
            h.index(ox, oy, Spin::Down),
        ],
    })
}

fn coefficients(omega: f64, nu: f64, g: [Complex64; 4]) -> TransportCoefficients {
    let f = -I * nu;
    TransportCoefficients {
        omega,
        t: Complex64::new(1.0, 0.0) + f * g[0],
        r_prime: f * g[1],
        r: f * g[2],
        t_prime: f * g[3],
    }
}

/// Transport coefficients at a single frequency from a dense LU solve.
pub fn transport(h: &HamiltonianMatrix, probe: &ProbeSpec, omega: f64) -> Result<TransportCoefficients> {
    let ch = channels(h, probe)?;
    let sigma = self_energy_for(h, probe)?;
    let g = solve_column(h, &sigma, omega, ch.src)?;
    let pick = |r: Option<usize>| r.map_or(ZERO, |i| g[i]);
    Ok(coefficients(
        omega,
        probe.nu,
        [pick(ch.rows[0]), pick(ch.rows[1]), pick(ch.rows[2]), pick(ch.rows[3])],
    ))
}

/// Transport coefficients over a frequency grid, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSpectrum {
    pub points: Vec<TransportCoefficients>,
}

impl TransportSpectrum {
    pub fn omegas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.omega).collect()
    }

    pub fn reflectivity(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.reflectivity()).collect()
    }

    /// CSV with columns `omega, t, r, rPrime, tPrime` (re/im pairs),
    /// `RPrime = |rPrime|^2` and the group delay.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let delay = if self.points.len() >= 3 {
            group_delay(self)?
        } else {
            vec![f64::NAN; self.points.len()]
        };
        writeln!(
            out,
            "omega,t_re,t_im,r_re,r_im,rPrime_re,rPrime_im,tPrime_re,tPrime_im,RPrime,delay"
        )?;
        for (p, d) in self.points.iter().zip(delay) {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt(p.omega),
                fmt(p.t.re),
                fmt(p.t.im),
                fmt(p.r.re),
                fmt(p.r.im),
                fmt(p.r_prime.re),
                fmt(p.r_prime.im),
                fmt(p.t_prime.re),
                fmt(p.t_prime.im),
                fmt(p.reflectivity()),
                fmt(d)
            )?;
        }
        Ok(())
    }
}

/// Seventeen significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(CrowError::InvalidArgument("empty frequency grid".into()));
    }
    if grid.iter().any(|w| !w.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CrowError::InvalidArgument(
            "frequency grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Reusable solver for one Hamiltonian and probe: a single Hessenberg
/// reduction of `H + Sigma`, then `O(n^2)` work per frequency.
pub struct TransportSolver {
    resolvent: HessenbergResolvent,
    src: usize,
    rows: Vec<usize>,
    present: [bool; 4],
    nu: f64,
}

impl TransportSolver {
    pub fn new(h: &HamiltonianMatrix, probe: &ProbeSpec) -> Result<Self> {
        let ch = channels(h, probe)?;
        let sigma = self_energy_for(h, probe)?;
        let a = h.entries() + sigma;
        let present = ch.rows.map(|r| r.is_some());
        let rows = ch.rows.iter().map(|r| r.unwrap_or(0)).collect();
        Ok(Self {
            resolvent: HessenbergResolvent::new(&a),
            src: ch.src,
            rows,
            present,
            nu: probe.nu,
        })
    }

    pub fn at(&self, omega: f64) -> Result<TransportCoefficients> {
        let e = self.resolvent.entries(omega, self.src, &self.rows)?;
        let mut g = [ZERO; 4];
        for k in 0..4 {
            if self.present[k] {
                g[k] = e[k];
            }
        }
        Ok(coefficients(omega, self.nu, g))
    }

    /// Frequencies evaluated in parallel; output order follows the grid.
    pub fn spectrum(&self, grid: &[f64]) -> Result<TransportSpectrum> {
        check_grid(grid)?;
        let points = grid
            .par_iter()
            .map(|&w| self.at(w))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransportSpectrum { points })
    }
}

/// Transport over a strictly increasing frequency grid.
pub fn transport_spectrum(
    h: &HamiltonianMatrix,
    probe: &ProbeSpec,
    omega_grid: &[f64],
) -> Result<TransportSpectrum> {
    TransportSolver::new(h, probe)?.spectrum(omega_grid)
}

/// Group delay `d arg r' / d omega` with phase unwrapping.
///
/// Interior points use central differences and the endpoints one-sided
/// differences. Points where `|r'| < 1e-8`, or whose stencil touches such a
/// point, are NaN.
pub fn group_delay(spectrum: &TransportSpectrum) -> Result<Vec<f64>> {
    let n = spectrum.points.len();
    if n < 3 {
        return Err(CrowError::InvalidArgument(
            "group delay needs at least 3 grid points".into(),
        ));
    }
    let w = spectrum.omegas();
    let valid: Vec<bool> = spectrum
        .points
        .iter()
        .map(|p| p.r_prime.norm() >= DELAY_FLOOR)
        .collect();
    let mut phase = vec![f64::NAN; n];
    let mut last: Option<f64> = None;
    for i in 0..n {
        if !valid[i] {
            continue;
        }
        let raw = spectrum.points[i].r_prime.arg();
        let unwrapped = match last {
            None => raw,
            Some(prev) => prev + (raw - prev + PI).rem_euclid(2.0 * PI) - PI,
        };
        phase[i] = unwrapped;
        last = Some(unwrapped);
    }
    let diff = |a: usize, b: usize| {
        if valid[a] && valid[b] {
            (phase[b] - phase[a]) / (w[b] - w[a])
        } else {
            f64::NAN
        }
    };
    Ok((0..n)
        .map(|i| {
            if !valid[i] {
                f64::NAN
            } else if i == 0 {
                diff(0, 1)
            } else if i == n - 1 {
                diff(n - 2, n - 1)
            } else {
                diff(i - 1, i + 1)
            }
        })
        .collect())
}
