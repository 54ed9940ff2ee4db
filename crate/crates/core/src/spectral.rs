//! Spectra, Hofstadter butterfly scans, probability currents and edge states.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrowError, Result};
use crate::lattice::{build_h0, Boundary, HamiltonianMatrix, LatticeSpec, SiteIndex, Spin};
use crate::linalg::{general_eigen, hermitian_eigen, hermitian_eigenvalues};
use crate::probe::{fmt, ProbeSpec};

/// Default perimeter-weight threshold of the edge classifier.
pub const EDGE_THRESHOLD: f64 = 0.5;

/// Default window used when counting magnetic-band degeneracy.
pub const DEGENERACY_WINDOW: f64 = 0.05;

/// Default reflectivity threshold of a butterfly scan.
pub const BUTTERFLY_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub enum EigenValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Eigenvalues with matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenSet {
    pub values: EigenValues,
    pub vectors: DMatrix<Complex64>,
}

impl EigenSet {
    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn real_values(&self) -> Option<&[f64]> {
        match &self.values {
            EigenValues::Real(v) => Some(v),
            EigenValues::Complex(_) => None,
        }
    }

    pub fn complex_values(&self) -> Vec<Complex64> {
        match &self.values {
            EigenValues::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            EigenValues::Complex(v) => v.clone(),
        }
    }

    pub fn vector(&self, k: usize) -> DVector<Complex64> {
        self.vectors.column(k).into_owned()
    }
}

/// Dense eigen-decomposition; Hermitian input yields ascending real values.
pub fn eigensolve(h: &HamiltonianMatrix) -> Result<EigenSet> {
    if h.is_hermitian() {
        let (values, vectors) = hermitian_eigen(h.entries())?;
        Ok(EigenSet {
            values: EigenValues::Real(values),
            vectors,
        })
    } else {
        let (values, vectors) = general_eigen(h.entries())?;
        Ok(EigenSet {
            values: EigenValues::Complex(values),
            vectors,
        })
    }
}

/// Best rational approximation `p/q` of `alpha` modulo 1 with `q <= max_q`.
pub fn rational_approx(alpha: f64, max_q: u64) -> (u64, u64) {
    let a = alpha.rem_euclid(1.0);
    let mut best = (0, 1, a.min(1.0 - a));
    for q in 1..=max_q {
        let p = (a * q as f64).round();
        let err = (a - p / q as f64).abs();
        if err < best.2 - 1e-15 {
            best = ((p as u64) % q, q, err);
        }
    }
    let g = gcd(best.0, best.1);
    (best.0 / g, best.1 / g)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Bloch Hamiltonian of the infinite lattice at flux `p/q` (magnetic unit
/// cell of `q` rows).
pub fn harper_bloch(p: u64, q: u64, kx: f64, ky: f64, kappa: f64) -> DMatrix<Complex64> {
    let q = q as usize;
    let alpha = p as f64 / q as f64;
    let mut h = DMatrix::<Complex64>::zeros(q, q);
    for m in 0..q {
        h[(m, m)] += Complex64::new(-2.0 * kappa * (kx - 2.0 * PI * alpha * m as f64).cos(), 0.0);
        let to = (m + 1) % q;
        let amp = if m == q - 1 {
            Complex64::from_polar(-kappa, q as f64 * ky)
        } else {
            Complex64::new(-kappa, 0.0)
        };
        h[(to, m)] += amp;
        h[(m, to)] += amp.conj();
    }
    h
}

/// Magnetic bands `[lo, hi]` of the infinite lattice at flux `p/q`,
/// scanned over a `16q x 16q` Brillouin-zone grid.
pub fn harper_bands(p: u64, q: u64, kappa: f64) -> Result<Vec<(f64, f64)>> {
    let qs = q as usize;
    let steps = 16 * qs;
    let mut lo = vec![f64::INFINITY; qs];
    let mut hi = vec![f64::NEG_INFINITY; qs];
    for i in 0..steps {
        for j in 0..steps {
            let kx = 2.0 * PI * i as f64 / steps as f64;
            let ky = 2.0 * PI * j as f64 / steps as f64;
            let e = hermitian_eigenvalues(&harper_bloch(p, q, kx, ky, kappa))?;
            for b in 0..qs {
                lo[b] = lo[b].min(e[b]);
                hi[b] = hi[b].max(e[b]);
            }
        }
    }
    Ok(lo.into_iter().zip(hi).collect())
}

/// Magnetic bands for a real flux value, via its rational approximation.
pub fn bands_for_alpha(alpha: f64, kappa: f64, max_q: u64) -> Result<Vec<(f64, f64)>> {
    let (p, q) = rational_approx(alpha, max_q);
    harper_bands(p, q, kappa)
}

/// Open intervals between bands, after merging bands that touch or overlap.
pub fn band_gaps(bands: &[(f64, f64)]) -> Vec<(f64, f64)> {
    merged_bands(bands).windows(2).map(|w| (w[0].1, w[1].0)).collect()
}

/// Bands merged where they touch or overlap.
pub fn merged_bands(bands: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in sorted {
        match merged.last_mut() {
            Some(last) if lo <= last.1 + 1e-6 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// Single-linkage clusters of sorted eigenvalues: consecutive values closer
/// than `window` share a cluster.
pub fn cluster_eigenvalues(values: &[f64], window: f64) -> Vec<Vec<f64>> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some(c) if v - c.last().copied().unwrap_or(v) <= window => c.push(v),
            _ => out.push(vec![v]),
        }
    }
    out
}

/// Outcome of the magnetic-band degeneracy check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagneticBandReport {
    pub p: u64,
    pub q: u64,
    pub states_per_band: usize,
    /// `(min, max, count)` of each consecutive group of the sorted spectrum.
    pub groups: Vec<(f64, f64, usize)>,
    /// Infinite-lattice magnetic bands.
    pub bands: Vec<(f64, f64)>,
    /// Every group lies inside its band widened by the window.
    pub contained: bool,
}

/// Splits a single-spin torus spectrum into `q` consecutive groups of
/// `N/q` states and checks each group against the matching infinite-lattice
/// magnetic band widened by `window`.
pub fn magnetic_band_check(values: &[f64], alpha: f64, kappa: f64, window: f64) -> Result<MagneticBandReport> {
    let (p, q) = rational_approx(alpha, 64);
    let n = values.len();
    if n % q as usize != 0 {
        return Err(CrowError::InvalidArgument(format!(
            "{n} states do not split into {q} magnetic bands"
        )));
    }
    let per = n / q as usize;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let bands = harper_bands(p, q, kappa)?;
    let groups: Vec<(f64, f64, usize)> = sorted
        .chunks(per)
        .map(|c| (c[0], c[c.len() - 1], c.len()))
        .collect();
    let contained = groups
        .iter()
        .zip(&bands)
        .all(|(g, b)| g.0 >= b.0 - window && g.1 <= b.1 + window);
    Ok(MagneticBandReport {
        p,
        q,
        states_per_band: per,
        groups,
        bands,
        contained,
    })
}

/// Drop-channel reflectivity `R'(alpha, omega)` of the Up block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ButterflyMap {
    pub alpha_grid: Vec<f64>,
    pub omega_grid: Vec<f64>,
    /// One row per alpha.
    pub reflectivity: Vec<Vec<f64>>,
    pub threshold: f64,
}

impl ButterflyMap {
    /// Frequency indices where `R'` exceeds the threshold.
    pub fn support(&self, alpha_index: usize) -> Vec<usize> {
        self.reflectivity[alpha_index]
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > self.threshold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Long-format CSV `alpha, omega, RPrime, threshold`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "alpha,omega,RPrime,threshold")?;
        for (a, row) in self.alpha_grid.iter().zip(&self.reflectivity) {
            for (w, r) in self.omega_grid.iter().zip(row) {
                writeln!(out, "{},{},{},{}", fmt(*a), fmt(*w), fmt(*r), fmt(self.threshold))?;
            }
        }
        Ok(())
    }
}

/// True when every index of `a` lies within `tol` steps of an index of `b`
/// and vice versa.
pub fn supports_match(a: &[usize], b: &[usize], tol: usize) -> bool {
    let near = |x: usize, set: &[usize]| set.iter().any(|&y| x.abs_diff(y) <= tol);
    a.iter().all(|&x| near(x, b)) && b.iter().all(|&y| near(y, a))
}

/// Support reflected through the grid centre, `i -> n - 1 - i`.
pub fn mirrored(support: &[usize], n: usize) -> Vec<usize> {
    let mut m: Vec<usize> = support.iter().map(|&i| n - 1 - i).collect();
    m.sort_unstable();
    m
}

fn up_block_h0(spec: &LatticeSpec) -> Result<HamiltonianMatrix> {
    build_h0(spec)?.spin_block(Spin::Up)
}

/// Reflectivity map over flux and frequency for a clean lattice.
///
/// Each alpha column is independent and computed in parallel. On a torus,
/// flux values that violate commensurability are skipped with a warning.
pub fn butterfly_scan(
    template: &LatticeSpec,
    alpha_grid: &[f64],
    omega_grid: &[f64],
    probe: &ProbeSpec,
    threshold: f64,
) -> Result<ButterflyMap> {
    let mut alphas = Vec::new();
    for &a in alpha_grid {
        let spec = LatticeSpec { alpha: a, ..*template };
        match spec.validate() {
            Err(CrowError::IncommensurateFlux { .. }) => {
                log::warn!("skipping alpha = {a}: incommensurate with the torus");
            }
            Err(e) => return Err(e),
            Ok(()) => alphas.push(a),
        }
    }
    let rows = alphas
        .par_iter()
        .map(|&a| {
            let spec = LatticeSpec { alpha: a, ..*template };
            let h = up_block_h0(&spec)?;
            crate::probe::transport_spectrum(&h, probe, omega_grid).map(|s| s.reflectivity())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ButterflyMap {
        alpha_grid: alphas,
        omega_grid: omega_grid.to_vec(),
        reflectivity: rows,
        threshold,
    })
}

/// Raw single-spin eigenvalues for each flux value, as an oracle for
/// [`butterfly_scan`].
pub fn eigenvalue_scan(template: &LatticeSpec, alpha_grid: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
    alpha_grid
        .par_iter()
        .filter(|&&a| LatticeSpec { alpha: a, ..*template }.validate().is_ok())
        .map(|&a| {
            let h = up_block_h0(&LatticeSpec { alpha: a, ..*template })?;
            Ok((a, hermitian_eigenvalues(h.entries())?))
        })
        .collect()
}

/// Probability current on one bond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondCurrent {
    pub from: SiteIndex,
    pub to: SiteIndex,
    pub current: f64,
}

/// Currents on every bond of a Hamiltonian, stored once per bond with the
/// reverse direction implied by antisymmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentField {
    pub bonds: Vec<BondCurrent>,
}

impl CurrentField {
    /// Current from `a` to `b`; zero when the sites are not bonded.
    pub fn current(&self, a: SiteIndex, b: SiteIndex) -> f64 {
        for bond in &self.bonds {
            if bond.from == a && bond.to == b {
                return bond.current;
            }
            if bond.from == b && bond.to == a {
                return -bond.current;
            }
        }
        0.0
    }

    /// Signed sum of currents leaving `site`.
    pub fn outflow(&self, site: SiteIndex) -> f64 {
        self.bonds
            .iter()
            .map(|b| {
                if b.from == site {
                    b.current
                } else if b.to == site {
                    -b.current
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Half the summed magnitude of the currents on bonds touching `site`.
    pub fn throughput(&self, site: SiteIndex) -> f64 {
        0.5 * self
            .bonds
            .iter()
            .filter(|b| b.from == site || b.to == site)
            .map(|b| b.current.abs())
            .sum::<f64>()
    }

    /// CSV `x1, y1, x2, y2, current`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x1,y1,x2,y2,current")?;
        for b in &self.bonds {
            writeln!(
                out,
                "{},{},{},{},{}",
                b.from.x,
                b.from.y,
                b.to.x,
                b.to.y,
                fmt(b.current)
            )?;
        }
        Ok(())
    }
}

/// `current(i -> j) = 2 Im(conj(psi_i) H_ij psi_j)` for every nonzero
/// off-diagonal `H_ij` with `i < j`.
pub fn bond_current(h: &HamiltonianMatrix, psi: &DVector<Complex64>) -> CurrentField {
    let m = h.entries();
    let n = h.dim();
    let mut bonds = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let hij = m[(i, j)];
            if hij.norm() == 0.0 && m[(j, i)].norm() == 0.0 {
                continue;
            }
            bonds.push(BondCurrent {
                from: h.site_of(i),
                to: h.site_of(j),
                current: 2.0 * (psi[i].conj() * hij * psi[j]).im,
            });
        }
    }
    CurrentField { bonds }
}

/// Perimeter sites in counter-clockwise order starting at the origin.
pub fn perimeter_sites(nx: usize, ny: usize) -> Vec<(usize, usize)> {
    if nx == 1 || ny == 1 {
        return (0..ny).flat_map(|y| (0..nx).map(move |x| (x, y))).collect();
    }
    let mut out = Vec::with_capacity(2 * (nx + ny) - 4);
    out.extend((0..nx).map(|x| (x, 0)));
    out.extend((1..ny).map(|y| (nx - 1, y)));
    out.extend((0..nx - 1).rev().map(|x| (x, ny - 1)));
    out.extend((1..ny - 1).rev().map(|y| (0, y)));
    out
}

/// Counter-clockwise currents on consecutive perimeter bonds of one spin.
pub fn perimeter_currents(field: &CurrentField, nx: usize, ny: usize, spin: Spin) -> Vec<f64> {
    let per = perimeter_sites(nx, ny);
    let n = per.len();
    (0..n)
        .map(|k| {
            let (a, b) = (per[k], per[(k + 1) % n]);
            field.current(SiteIndex::new(a.0, a.1, spin), SiteIndex::new(b.0, b.1, spin))
        })
        .collect()
}

/// True when all perimeter currents share one strict sign.
pub fn single_signed(currents: &[f64]) -> bool {
    currents.iter().all(|&c| c > 0.0) || currents.iter().all(|&c| c < 0.0)
}

/// Probability on perimeter sites. `psi` spans one spin block
/// (`nx * ny` entries) or both.
pub fn perimeter_weight(psi: &DVector<Complex64>, nx: usize, ny: usize) -> f64 {
    let n = nx * ny;
    let blocks = psi.len() / n;
    perimeter_sites(nx, ny)
        .iter()
        .flat_map(|&(x, y)| (0..blocks).map(move |b| b * n + y * nx + x))
        .map(|i| psi[i].norm_sqr())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    Edge,
    Bulk,
}

/// `Edge` iff the perimeter carries at least `threshold` of the probability.
pub fn classify_state(psi: &DVector<Complex64>, spec: &LatticeSpec, threshold: f64) -> StateClass {
    if perimeter_weight(psi, spec.nx, spec.ny) >= threshold {
        StateClass::Edge
    } else {
        StateClass::Bulk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edge {
    Lower,
    Upper,
}

/// One eigenstate on the edge-dispersion plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DispersionPoint {
    pub energy: f64,
    pub perimeter_weight: f64,
    pub class: StateClass,
    /// Phase advance per resonator along the edge row; `None` for bulk
    /// states and edge states without enough edge amplitude.
    pub k_lambda: Option<f64>,
    pub edge: Edge,
}

/// Circular mean of `arg(psi[x+1] conj(psi[x]))` along one row.
pub fn row_phase_advance(psi: &DVector<Complex64>, nx: usize, row: usize) -> Option<f64> {
    let amp: Vec<Complex64> = (0..nx).map(|x| psi[row * nx + x]).collect();
    let peak = amp.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut = 1e-4 * peak;
    if amp.iter().filter(|z| z.norm() > cut).count() < 2 {
        return None;
    }
    let mut s = Complex64::new(0.0, 0.0);
    for w in amp.windows(2) {
        if w[0].norm() > cut && w[1].norm() > cut {
            let z = w[1] * w[0].conj();
            s += z / z.norm();
        }
    }
    (s.norm() > 0.0).then(|| s.arg())
}

/// Edge-state dispersion `K Lambda(E)` along the lower or upper row of an
/// open lattice, from the Up block of `h`.
pub fn edge_dispersion(h: &HamiltonianMatrix, edge: Edge, threshold: f64) -> Result<Vec<DispersionPoint>> {
    let block = match h.sector() {
        crate::lattice::Sector::Both => h.spin_block(Spin::Up)?,
        _ => h.clone(),
    };
    let eig = eigensolve(&block)?;
    let values = eig.real_values().ok_or_else(|| {
        CrowError::InvalidArgument("edge dispersion needs a Hermitian Hamiltonian".into())
    })?;
    let (nx, ny) = (block.nx(), block.ny());
    let row = match edge {
        Edge::Lower => 0,
        Edge::Upper => ny - 1,
    };
    let mut out = Vec::with_capacity(values.len());
    for (k, &energy) in values.iter().enumerate() {
        let psi = eig.vector(k);
        let w = perimeter_weight(&psi, nx, ny);
        let class = if w >= threshold { StateClass::Edge } else { StateClass::Bulk };
        let k_lambda = match class {
            StateClass::Edge => {
                let kl = row_phase_advance(&psi, nx, row);
                if kl.is_none() {
                    log::debug!("state at E = {energy}: fewer than 2 significant edge amplitudes");
                }
                kl
            }
            StateClass::Bulk => None,
        };
        out.push(DispersionPoint {
            energy,
            perimeter_weight: w,
            class,
            k_lambda,
            edge,
        });
    }
    Ok(out)
}

/// CSV `energy, KLambda, edge`; bulk states carry an empty `KLambda`.
pub fn write_dispersion_csv<W: Write>(points: &[DispersionPoint], mut out: W) -> Result<()> {
    writeln!(out, "energy,KLambda,edge")?;
    for p in points {
        let kl = p.k_lambda.map(fmt).unwrap_or_default();
        let e = match p.edge {
            Edge::Lower => "lower",
            Edge::Upper => "upper",
        };
        writeln!(out, "{},{},{}", fmt(p.energy), kl, e)?;
    }
    Ok(())
}

/// True when `energy` lies strictly inside one of `gaps`.
pub fn in_gap(energy: f64, gaps: &[(f64, f64)]) -> bool {
    gaps.iter().any(|&(lo, hi)| energy > lo && energy < hi)
}

/// Index of the edge state in the central third of `gap` closest to the gap
/// centre.
pub fn mid_gap_edge_state(
    eig: &EigenSet,
    spec: &LatticeSpec,
    gap: (f64, f64),
    threshold: f64,
) -> Option<usize> {
    let values = eig.real_values()?;
    let centre = 0.5 * (gap.0 + gap.1);
    let half = (gap.1 - gap.0) / 6.0;
    values
        .iter()
        .enumerate()
        .filter(|(_, e)| (*e - centre).abs() < half)
        .filter(|(k, _)| classify_state(&eig.vector(*k), spec, threshold) == StateClass::Edge)
        .min_by(|a, b| (a.1 - centre).abs().total_cmp(&(b.1 - centre).abs()))
        .map(|(k, _)| k)
}

/// Whether a lattice has an open boundary, as edge analysis requires.
pub fn require_open(spec: &LatticeSpec) -> Result<()> {
    if spec.boundary != Boundary::Open {
        return Err(CrowError::InvalidArgument(
            "edge-state analysis needs an open boundary".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_h0;

    #[test]
    fn two_site_eigensolve() {
        let h = build_h0(&LatticeSpec::open(2, 1, 0.0)).unwrap().spin_block(Spin::Up).unwrap();
        let e = eigensolve(&h).unwrap();
        let v = e.real_values().unwrap();
        assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenpairs_residual_and_orthonormality() {
        let h = build_h0(&LatticeSpec::open(5, 4, 0.3)).unwrap();
        let e = eigensolve(&h).unwrap();
        let v = e.real_values().unwrap();
        for k in 0..e.len() {
            let x = e.vector(k);
            let r = h.entries() * &x - &x * Complex64::new(v[k], 0.0);
            assert!(r.norm() <= 1e-9);
        }
        let g = e.vectors.adjoint() * &e.vectors;
        assert!((g - DMatrix::<Complex64>::identity(40, 40)).norm() < 1e-9);
    }

    #[test]
    fn rational_approximations() {
        assert_eq!(rational_approx(0.25, 64), (1, 4));
        assert_eq!(rational_approx(1.4, 64), (2, 5));
        assert_eq!(rational_approx(0.0, 64), (0, 1));
        assert_eq!(rational_approx(0.999_999_999_9, 64), (0, 1));
    }

    #[test]
    fn harper_band_edges() {
        let b = harper_bands(0, 1, 1.0).unwrap();
        assert!((b[0].0 + 4.0).abs() < 1e-12 && (b[0].1 - 4.0).abs() < 1e-12);
        let b = harper_bands(1, 2, 1.0).unwrap();
        assert!((b[0].0 + 8f64.sqrt()).abs() < 1e-9);
        assert!((b[1].1 - 8f64.sqrt()).abs() < 1e-9);
        let b = harper_bands(1, 4, 1.0).unwrap();
        let gaps = band_gaps(&b);
        assert_eq!(gaps.len(), 2);
        assert!(gaps[1].0 > 1.0 && gaps[1].1 < 2.7);
    }

    #[test]
    fn clusters_split_on_gaps() {
        let c = cluster_eigenvalues(&[0.0, 0.01, 0.02, 1.0, 1.04], 0.05);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].len(), 3);
    }

    #[test]
    fn currents_vanish_for_real_states() {
        let h = build_h0(&LatticeSpec::open(4, 3, 0.0)).unwrap().spin_block(Spin::Up).unwrap();
        let e = eigensolve(&h).unwrap();
        for k in 0..e.len() {
            let f = bond_current(&h, &e.vector(k));
            assert!(f.bonds.iter().all(|b| b.current.abs() < 1e-12));
        }
    }

    #[test]
    fn continuity_on_small_lattice() {
        let h = build_h0(&LatticeSpec::open(3, 3, 0.17)).unwrap();
        let e = eigensolve(&h).unwrap();
        for k in 0..e.len() {
            let f = bond_current(&h, &e.vector(k));
            for i in 0..h.dim() {
                assert!(f.outflow(h.site_of(i)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn perimeter_order_and_classification() {
        let p = perimeter_sites(10, 10);
        assert_eq!(p.len(), 36);
        assert_eq!(p[9], (9, 0));
        assert_eq!(p[18], (9, 9));
        assert_eq!(p[35], (0, 1));
        let spec = LatticeSpec::open(10, 10, 0.25);
        let uniform = DVector::from_element(100, Complex64::new(0.1, 0.0));
        assert!((perimeter_weight(&uniform, 10, 10) - 0.36).abs() < 1e-12);
        assert_eq!(classify_state(&uniform, &spec, EDGE_THRESHOLD), StateClass::Bulk);
        let mut corner = DVector::zeros(100);
        corner[0] = Complex64::new(1.0, 0.0);
        assert_eq!(classify_state(&corner, &spec, EDGE_THRESHOLD), StateClass::Edge);
    }

    #[test]
    fn supports_and_mirrors() {
        assert!(supports_match(&[3, 7], &[4, 7], 1));
        assert!(!supports_match(&[3, 7], &[7], 1));
        assert_eq!(mirrored(&[0, 3], 10), vec![6, 9]);
    }
}
