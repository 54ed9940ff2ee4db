//! Magnetic tight-binding Hamiltonians of resonator lattices.
//!
//! Sites are labelled by `(x, y, spin)`. The dense basis places the whole Up
//! block first and the Down block second, each block row-major with `y` as the
//! outer index: `index = spin_offset * nx * ny + y * nx + x`.
//!
//! All frequencies are detunings from the bare resonance, so the on-site energy
//! of a clean resonator is zero.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{CrowError, Result};
use crate::rng;

/// Largest dense dimension any builder will allocate.
pub const MAX_DIM: usize = 4096;

const FLUX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Open,
    Torus,
}

/// Pseudo-spin: counter-clockwise (`Up`) or clockwise (`Down`) circulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn sign(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SiteIndex {
    pub x: usize,
    pub y: usize,
    pub spin: Spin,
}

impl SiteIndex {
    pub fn new(x: usize, y: usize, spin: Spin) -> Self {
        Self { x, y, spin }
    }
}

/// Geometry, flux and coupling of one lattice instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    /// Flux quanta per plaquette.
    pub alpha: f64,
    pub boundary: Boundary,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    1.0
}

impl LatticeSpec {
    pub fn new(nx: usize, ny: usize, alpha: f64, boundary: Boundary) -> Self {
        Self {
            nx,
            ny,
            alpha,
            boundary,
            kappa: 1.0,
        }
    }

    pub fn open(nx: usize, ny: usize, alpha: f64) -> Self {
        Self::new(nx, ny, alpha, Boundary::Open)
    }

    pub fn torus(nx: usize, ny: usize, alpha: f64) -> Self {
        Self::new(nx, ny, alpha, Boundary::Torus)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn sites(&self) -> usize {
        self.nx * self.ny
    }

    /// Dimension of the two-spin Hilbert space.
    pub fn dim(&self) -> usize {
        2 * self.sites()
    }

    /// Checks sizes, coupling and, on a torus, flux commensurability.
    ///
    /// A torus carries a uniform flux only when the total flux
    /// `alpha * nx * ny` is an integer.
    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(CrowError::InvalidSpec(format!(
                "lattice must be at least 1x1, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(CrowError::InvalidSpec(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !self.alpha.is_finite() {
            return Err(CrowError::InvalidSpec("alpha must be finite".into()));
        }
        if self.dim() > MAX_DIM {
            return Err(CrowError::DimensionTooLarge {
                dim: self.dim(),
                cap: MAX_DIM,
            });
        }
        if self.boundary == Boundary::Torus && self.ny > 1 {
            let total = self.alpha * (self.nx * self.ny) as f64;
            if (total - total.round()).abs() > FLUX_TOL {
                return Err(CrowError::IncommensurateFlux {
                    alpha: self.alpha,
                    nx: self.nx,
                    ny: self.ny,
                });
            }
        }
        Ok(())
    }

    pub fn check_site(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.nx || y >= self.ny {
            return Err(CrowError::SiteOutOfRange {
                x,
                y,
                nx: self.nx,
                ny: self.ny,
            });
        }
        Ok(())
    }

    /// Flat index in the full two-spin basis.
    pub fn index(&self, site: SiteIndex) -> usize {
        let offset = match site.spin {
            Spin::Up => 0,
            Spin::Down => self.sites(),
        };
        offset + site.y * self.nx + site.x
    }

    /// Inverse of [`LatticeSpec::index`].
    pub fn site(&self, index: usize) -> SiteIndex {
        let n = self.sites();
        let (spin, rest) = if index < n {
            (Spin::Up, index)
        } else {
            (Spin::Down, index - n)
        };
        SiteIndex::new(rest % self.nx, rest / self.nx, spin)
    }
}

/// Which spin blocks a [`HamiltonianMatrix`] spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    Both,
    Up,
    Down,
}

/// Dense Hamiltonian over the site and spin basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    nx: usize,
    ny: usize,
    kappa: f64,
    sector: Sector,
    entries: DMatrix<Complex64>,
    hermitian: bool,
}

impl HamiltonianMatrix {
    /// Wraps a dense matrix. The Hermitian flag is computed from the entries.
    pub fn from_dense(
        nx: usize,
        ny: usize,
        kappa: f64,
        sector: Sector,
        entries: DMatrix<Complex64>,
    ) -> Result<Self> {
        let per_spin = nx * ny;
        let expected = match sector {
            Sector::Both => 2 * per_spin,
            Sector::Up | Sector::Down => per_spin,
        };
        if entries.nrows() != expected || entries.ncols() != expected {
            return Err(CrowError::InvalidArgument(format!(
                "matrix is {}x{}, expected {expected}x{expected}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if expected > MAX_DIM {
            return Err(CrowError::DimensionTooLarge {
                dim: expected,
                cap: MAX_DIM,
            });
        }
        let mut h = Self {
            nx,
            ny,
            kappa,
            sector,
            entries,
            hermitian: false,
        };
        h.hermitian = h.hermiticity_error() <= 1e-12 * kappa;
        Ok(h)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Largest entrywise deviation `max |H - H^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.entries[(i, j)] - self.entries[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Flat index of `(x, y, spin)` in this matrix, if the spin is present.
    pub fn index(&self, x: usize, y: usize, spin: Spin) -> Option<usize> {
        let site = y * self.nx + x;
        match (self.sector, spin) {
            (Sector::Both, Spin::Up) => Some(site),
            (Sector::Both, Spin::Down) => Some(self.nx * self.ny + site),
            (Sector::Up, Spin::Up) | (Sector::Down, Spin::Down) => Some(site),
            _ => None,
        }
    }

    /// Site label of a flat index.
    pub fn site_of(&self, index: usize) -> SiteIndex {
        let n = self.nx * self.ny;
        let (spin, rest) = match self.sector {
            Sector::Both if index >= n => (Spin::Down, index - n),
            Sector::Both | Sector::Up => (Spin::Up, index),
            Sector::Down => (Spin::Down, index),
        };
        SiteIndex::new(rest % self.nx, rest / self.nx, spin)
    }

    /// Spins present in this matrix, in basis order.
    pub fn spins(&self) -> &'static [Spin] {
        match self.sector {
            Sector::Both => &[Spin::Up, Spin::Down],
            Sector::Up => &[Spin::Up],
            Sector::Down => &[Spin::Down],
        }
    }

    /// Restriction to one spin block.
    pub fn spin_block(&self, spin: Spin) -> Result<HamiltonianMatrix> {
        let n = self.nx * self.ny;
        let start = self
            .index(0, 0, spin)
            .ok_or_else(|| CrowError::InvalidArgument(format!("{spin:?} block not present")))?;
        let block = self.entries.view((start, start), (n, n)).into_owned();
        let sector = match spin {
            Spin::Up => Sector::Up,
            Spin::Down => Sector::Down,
        };
        HamiltonianMatrix::from_dense(self.nx, self.ny, self.kappa, sector, block)
    }

    /// Plain transpose `H^T`.
    pub fn transpose(&self) -> HamiltonianMatrix {
        Self {
            entries: self.entries.transpose(),
            ..self.clone()
        }
    }

    /// `H + other`, keeping this matrix's geometry.
    pub fn plus(&self, other: &DMatrix<Complex64>) -> Result<HamiltonianMatrix> {
        if other.shape() != self.entries.shape() {
            return Err(CrowError::InvalidArgument("shape mismatch in sum".into()));
        }
        HamiltonianMatrix::from_dense(
            self.nx,
            self.ny,
            self.kappa,
            self.sector,
            &self.entries + other,
        )
    }

    /// Writes the nonzero entries in matrix-market coordinate format
    /// (1-based `row col re im`).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.dim();
        let nonzeros: Vec<(usize, usize, Complex64)> = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| (i, j, self.entries[(i, j)]))
            .filter(|(_, _, v)| *v != Complex64::new(0.0, 0.0))
            .collect();
        writeln!(out, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(out, "{n} {n} {}", nonzeros.len())?;
        for (i, j, v) in nonzeros {
            writeln!(out, "{} {} {:.16e} {:.16e}", i + 1, j + 1, v.re, v.im)?;
        }
        Ok(())
    }
}

/// `exp(i * 2 pi * turns)` with the integer part of `turns` removed first.
pub(crate) fn phase(turns: f64) -> Complex64 {
    let frac = turns - turns.round();
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

fn add_hop(m: &mut DMatrix<Complex64>, to: usize, from: usize, amp: Complex64) {
    m[(to, from)] += amp;
    m[(from, to)] += amp.conj();
}

/// Hopping part of the lattice Hamiltonian. Vertical bonds carry the spin
/// matrix `-kappa [[1, flip], [flip, 1]]`.
fn hopping(spec: &LatticeSpec, flip: f64) -> DMatrix<Complex64> {
    let (nx, ny) = (spec.nx, spec.ny);
    let k = spec.kappa;
    let torus = spec.boundary == Boundary::Torus;
    let mut m = DMatrix::zeros(spec.dim(), spec.dim());
    for spin in [Spin::Up, Spin::Down] {
        let s = spin.sign();
        for y in 0..ny {
            for x in 0..nx {
                let here = spec.index(SiteIndex::new(x, y, spin));
                let right = if x + 1 < nx {
                    Some(x + 1)
                } else if torus && nx > 1 {
                    Some(0)
                } else {
                    None
                };
                if let Some(xr) = right {
                    let to = spec.index(SiteIndex::new(xr, y, spin));
                    add_hop(&mut m, to, here, -k * phase(-spec.alpha * y as f64 * s));
                }
                let (up, wrap) = if y + 1 < ny {
                    (Some(y + 1), false)
                } else if torus && ny > 1 {
                    (Some(0), true)
                } else {
                    (None, false)
                };
                if let Some(yu) = up {
                    let ph = if wrap {
                        phase(spec.alpha * (ny * x) as f64 * s)
                    } else {
                        Complex64::new(1.0, 0.0)
                    };
                    let to = spec.index(SiteIndex::new(x, yu, spin));
                    add_hop(&mut m, to, here, -k * ph);
                    if flip != 0.0 && spin == Spin::Up {
                        let to_flip = spec.index(SiteIndex::new(x, yu, Spin::Down));
                        let from_flip = spec.index(SiteIndex::new(x, y, Spin::Down));
                        add_hop(&mut m, to_flip, here, Complex64::new(-k * flip, 0.0) * ph);
                        add_hop(&mut m, to, from_flip, Complex64::new(-k * flip, 0.0) * ph);
                    }
                }
            }
        }
    }
    m
}

fn wrap(spec: &LatticeSpec, m: DMatrix<Complex64>) -> Result<HamiltonianMatrix> {
    HamiltonianMatrix::from_dense(spec.nx, spec.ny, spec.kappa, Sector::Both, m)
}

/// Magnetic hopping Hamiltonian in the Landau gauge.
///
/// The hop `(x, y) -> (x + 1, y)` of spin `sigma` carries
/// `-kappa * exp(-i 2 pi alpha y sigma)`; vertical hops carry `-kappa`. On a
/// torus the vertical wrap bond at column `x` carries
/// `exp(i 2 pi alpha ny x sigma)` so that every plaquette, wrap plaquettes
/// included, encloses flux `2 pi alpha`.
pub fn build_h0(spec: &LatticeSpec) -> Result<HamiltonianMatrix> {
    spec.validate()?;
    wrap(spec, hopping(spec, 0.0))
}

/// Lattice whose vertical bonds also flip the pseudo-spin with relative
/// amplitude `epsilon`.
pub fn build_spin_flip(spec: &LatticeSpec, epsilon: f64) -> Result<HamiltonianMatrix> {
    spec.validate()?;
    if epsilon.abs() > 0.3 {
        log::warn!("spin-flip amplitude {epsilon} is outside the first-order regime");
    }
    if spec.boundary == Boundary::Torus && spec.ny > 1 && epsilon != 0.0 {
        let t = spec.alpha * spec.ny as f64;
        if (t - t.round()).abs() > FLUX_TOL {
            return Err(CrowError::IncommensurateFlux {
                alpha: spec.alpha,
                nx: spec.nx,
                ny: spec.ny,
            });
        }
    }
    wrap(spec, hopping(spec, epsilon))
}

/// Zeeman coupling strength `4 epsilon kappa F / pi`.
pub fn zeeman_strength(epsilon: f64, finesse: f64, kappa: f64) -> f64 {
    4.0 * epsilon * kappa * finesse / PI
}

/// Spin-diagonal hopping plus the on-site in-plane field
/// `-(4 epsilon kappa F / pi) sigma_x`.
pub fn build_zeeman(spec: &LatticeSpec, epsilon: f64, finesse: f64) -> Result<HamiltonianMatrix> {
    spec.validate()?;
    if finesse < 1.0 || !(epsilon * finesse).is_finite() {
        return Err(CrowError::InvalidArgument(format!(
            "finesse must be >= 1 and epsilon*finesse finite (epsilon={epsilon}, F={finesse})"
        )));
    }
    let mut m = hopping(spec, 0.0);
    let b = Complex64::new(-zeeman_strength(epsilon, finesse, spec.kappa), 0.0);
    for y in 0..spec.ny {
        for x in 0..spec.nx {
            let u = spec.index(SiteIndex::new(x, y, Spin::Up));
            let d = spec.index(SiteIndex::new(x, y, Spin::Down));
            add_hop(&mut m, d, u, b);
        }
    }
    wrap(spec, m)
}

/// Open 1D chain of `n` resonators with both spin blocks.
pub fn build_crow_chain(n: usize, kappa: f64) -> Result<HamiltonianMatrix> {
    if n < 2 {
        return Err(CrowError::InvalidSpec(format!(
            "a chain needs at least 2 sites, got {n}"
        )));
    }
    build_h0(&LatticeSpec::open(n, 1, 0.0).with_kappa(kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnsiteShift {
    pub x: usize,
    pub y: usize,
    /// Frequency mismatch in units of kappa.
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MagneticScatterer {
    pub x: usize,
    pub y: usize,
    /// Product of scatterer amplitude and finesse.
    pub strength_eps_f: f64,
    /// Phase in `[0, 2 pi)`.
    pub phase: f64,
}

impl MagneticScatterer {
    pub fn new(x: usize, y: usize, strength_eps_f: f64, phase: f64) -> Self {
        Self {
            x,
            y,
            strength_eps_f,
            phase: phase.rem_euclid(2.0 * PI),
        }
    }
}

/// Static disorder and loss added on top of a clean lattice.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DisorderSpec {
    #[serde(default)]
    pub onsite: Vec<OnsiteShift>,
    #[serde(default)]
    pub magnetic_scatterers: Vec<MagneticScatterer>,
    /// Uniform loss rate in units of kappa.
    #[serde(default)]
    pub loss_rate: f64,
}

impl DisorderSpec {
    pub fn is_empty(&self) -> bool {
        self.onsite.is_empty() && self.magnetic_scatterers.is_empty() && self.loss_rate == 0.0
    }

    /// Concatenates two specs; loss rates add.
    pub fn merged(mut self, other: DisorderSpec) -> DisorderSpec {
        self.onsite.extend(other.onsite);
        self.magnetic_scatterers.extend(other.magnetic_scatterers);
        self.loss_rate += other.loss_rate;
        self
    }

    pub fn with_loss(mut self, loss_rate: f64) -> DisorderSpec {
        self.loss_rate = loss_rate;
        self
    }
}

/// Adds on-site shifts, magnetic scatterers and uniform loss to `h`.
pub fn apply_disorder(
    h: &HamiltonianMatrix,
    spec: &LatticeSpec,
    dis: &DisorderSpec,
) -> Result<HamiltonianMatrix> {
    if h.nx() != spec.nx || h.ny() != spec.ny {
        return Err(CrowError::InvalidArgument(
            "Hamiltonian and lattice spec disagree on size".into(),
        ));
    }
    if dis.loss_rate < 0.0 {
        return Err(CrowError::InvalidArgument(format!(
            "loss rate must be nonnegative, got {}",
            dis.loss_rate
        )));
    }
    let k = spec.kappa;
    let mut m = h.entries().clone();
    for s in &dis.onsite {
        spec.check_site(s.x, s.y)?;
        for &spin in h.spins() {
            let i = h.index(s.x, s.y, spin).expect("spin present");
            m[(i, i)] += Complex64::new(s.u * k, 0.0);
        }
    }
    for sc in &dis.magnetic_scatterers {
        spec.check_site(sc.x, sc.y)?;
        let (Some(u), Some(d)) = (h.index(sc.x, sc.y, Spin::Up), h.index(sc.x, sc.y, Spin::Down))
        else {
            return Err(CrowError::InvalidArgument(
                "magnetic scatterers need both spin blocks".into(),
            ));
        };
        let c = 2.0 * sc.strength_eps_f * k / PI;
        let ph = Complex64::from_polar(1.0, sc.phase.rem_euclid(2.0 * PI));
        m[(u, d)] += c * ph.conj();
        m[(d, u)] += c * ph;
    }
    if dis.loss_rate > 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] -= Complex64::new(0.0, dis.loss_rate * k);
        }
    }
    HamiltonianMatrix::from_dense(h.nx(), h.ny(), h.kappa(), h.sector(), m)
}

/// Independent Gaussian on-site shifts of standard deviation `width` at every
/// site, drawn row-major (`y` outer, `x` inner) from the ChaCha20 stream of
/// `seed`.
pub fn sample_onsite_disorder(spec: &LatticeSpec, width: f64, seed: u64) -> Result<DisorderSpec> {
    let normal = Normal::new(0.0, width)
        .map_err(|e| CrowError::InvalidArgument(format!("disorder width {width}: {e}")))?;
    let mut rng = rng::stream(seed);
    let mut onsite = Vec::with_capacity(spec.sites());
    for y in 0..spec.ny {
        for x in 0..spec.nx {
            onsite.push(OnsiteShift {
                x,
                y,
                u: normal.sample(&mut rng),
            });
        }
    }
    Ok(DisorderSpec {
        onsite,
        ..Default::default()
    })
}

/// A magnetic scatterer at every site with Gaussian strength of standard
/// deviation `strength_width` and uniform phase. Each site draws its strength
/// and then its phase, row-major.
pub fn sample_magnetic_disorder(
    spec: &LatticeSpec,
    strength_width: f64,
    seed: u64,
) -> Result<DisorderSpec> {
    let normal = Normal::new(0.0, strength_width).map_err(|e| {
        CrowError::InvalidArgument(format!("magnetic width {strength_width}: {e}"))
    })?;
    let uniform = Uniform::new(0.0, 2.0 * PI).expect("valid phase range");
    let mut rng = rng::stream(seed);
    let mut scatterers = Vec::with_capacity(spec.sites());
    for y in 0..spec.ny {
        for x in 0..spec.nx {
            let s = normal.sample(&mut rng);
            let p = uniform.sample(&mut rng);
            scatterers.push(MagneticScatterer::new(x, y, s, p));
        }
    }
    Ok(DisorderSpec {
        magnetic_scatterers: scatterers,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, sorted_complex_eigenvalues};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn up_eigs(h: &HamiltonianMatrix) -> Vec<f64> {
        hermitian_eigenvalues(h.spin_block(Spin::Up).unwrap().entries()).unwrap()
    }

    #[test]
    fn two_site_open_chain() {
        let h = build_h0(&LatticeSpec::open(2, 1, 0.37)).unwrap();
        let up = h.spin_block(Spin::Up).unwrap();
        assert_eq!(up.entries()[(0, 1)], c(-1.0));
        assert_eq!(up.entries()[(1, 0)], c(-1.0));
        let e = up_eigs(&h);
        assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_by_two_grid_is_minus_adjacency() {
        let h = build_h0(&LatticeSpec::open(2, 2, 0.0)).unwrap();
        let e = up_eigs(&h);
        for (a, b) in e.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn plaquettes_enclose_alpha() {
        for spec in [LatticeSpec::open(4, 3, 0.23), LatticeSpec::torus(4, 5, 0.35)] {
            let h = build_h0(&spec).unwrap();
            let m = h.entries();
            let id = |x: usize, y: usize| spec.index(SiteIndex::new(x, y, Spin::Up));
            let (xs, ys) = match spec.boundary {
                Boundary::Open => (spec.nx - 1, spec.ny - 1),
                Boundary::Torus => (spec.nx, spec.ny),
            };
            for y in 0..ys {
                for x in 0..xs {
                    let (x1, y1) = ((x + 1) % spec.nx, (y + 1) % spec.ny);
                    let p = m[(id(x1, y), id(x, y))]
                        * m[(id(x1, y1), id(x1, y))]
                        * m[(id(x, y1), id(x1, y1))]
                        * m[(id(x, y), id(x, y1))];
                    let expected = phase(spec.alpha);
                    assert!((p / p.norm() - expected).norm() < 1e-12, "plaquette ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn torus_rejects_incommensurate_flux() {
        let err = build_h0(&LatticeSpec::torus(10, 10, 0.123)).unwrap_err();
        assert!(err.to_string().contains("incommensurate torus flux"));
        assert!(build_h0(&LatticeSpec::torus(10, 10, 0.25)).is_ok());
    }

    #[test]
    fn spin_blocks_are_decoupled_and_conjugate() {
        let h = build_h0(&LatticeSpec::open(4, 4, 0.2)).unwrap();
        let n = 16;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(h.entries()[(i, n + j)], c(0.0));
                assert_eq!(h.entries()[(n + i, j)], c(0.0));
                assert_eq!(h.entries()[(n + i, n + j)], h.entries()[(i, j)].conj());
            }
        }
    }

    #[test]
    fn spin_flip_single_bond() {
        let eps = 0.1;
        let h = build_spin_flip(&LatticeSpec::open(1, 2, 0.0), eps).unwrap();
        let e = hermitian_eigenvalues(h.entries()).unwrap();
        let expected = [-(1.0 + eps), -(1.0 - eps), 1.0 - eps, 1.0 + eps];
        for (a, b) in e.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(build_spin_flip(&LatticeSpec::open(3, 3, 0.2), 0.0).unwrap(),
                   build_h0(&LatticeSpec::open(3, 3, 0.2)).unwrap());
    }

    #[test]
    fn spin_flip_hadamard_block_diagonalizes() {
        let eps = 0.1;
        let h = build_spin_flip(&LatticeSpec::open(1, 2, 0.0), eps).unwrap();
        let s = 1.0 / 2f64.sqrt();
        // Basis order (0,Up), (1,Up), (0,Down), (1,Down); new order (0,+), (1,+), (0,-), (1,-).
        let mut u = DMatrix::<Complex64>::zeros(4, 4);
        for site in 0..2 {
            u[(site, site)] = c(s);
            u[(site + 2, site)] = c(s);
            u[(site, site + 2)] = c(s);
            u[(site + 2, site + 2)] = c(-s);
        }
        let r = u.adjoint() * h.entries() * &u;
        for i in 0..2 {
            for j in 2..4 {
                assert!(r[(i, j)].norm() < 1e-12 && r[(j, i)].norm() < 1e-12);
            }
        }
        assert_abs_diff_eq!(r[(1, 0)].re, -(1.0 + eps), epsilon = 1e-12);
        assert_abs_diff_eq!(r[(3, 2)].re, -(1.0 - eps), epsilon = 1e-12);
    }

    #[test]
    fn zeeman_single_site_and_grid() {
        let (eps, f) = (0.05, 10.0);
        let b = zeeman_strength(eps, f, 1.0);
        let h = build_zeeman(&LatticeSpec::open(1, 1, 0.0), eps, f).unwrap();
        let e = hermitian_eigenvalues(h.entries()).unwrap();
        assert_abs_diff_eq!(e[0], -b, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], b, epsilon = 1e-12);

        let h = build_zeeman(&LatticeSpec::open(2, 2, 0.0), eps, f).unwrap();
        let e = hermitian_eigenvalues(h.entries()).unwrap();
        let mut expected: Vec<f64> = [-2.0, 0.0, 0.0, 2.0]
            .iter()
            .flat_map(|g| [g - b, g + b])
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(build_zeeman(&LatticeSpec::open(3, 2, 0.1), 0.0, 10.0).unwrap(),
                   build_h0(&LatticeSpec::open(3, 2, 0.1)).unwrap());
    }

    #[test]
    fn disorder_terms() {
        let spec = LatticeSpec::open(3, 3, 0.25);
        let h = build_h0(&spec).unwrap();
        assert_eq!(apply_disorder(&h, &spec, &DisorderSpec::default()).unwrap(), h);

        let dis = DisorderSpec {
            onsite: vec![OnsiteShift { x: 1, y: 2, u: 5.0 }],
            ..Default::default()
        };
        let hd = apply_disorder(&h, &spec, &dis).unwrap();
        let iu = spec.index(SiteIndex::new(1, 2, Spin::Up));
        let id = spec.index(SiteIndex::new(1, 2, Spin::Down));
        assert_eq!(hd.entries()[(iu, iu)], c(5.0));
        assert_eq!(hd.entries()[(id, id)], c(5.0));
        assert!(hd.is_hermitian());

        let bad = DisorderSpec {
            onsite: vec![OnsiteShift { x: 3, y: 0, u: 1.0 }],
            ..Default::default()
        };
        assert!(matches!(apply_disorder(&h, &spec, &bad), Err(CrowError::SiteOutOfRange { .. })));
    }

    #[test]
    fn loss_shifts_eigenvalues() {
        let spec = LatticeSpec::open(2, 1, 0.0);
        let h = build_h0(&spec).unwrap();
        let hl = apply_disorder(&h, &spec, &DisorderSpec::default().with_loss(0.02)).unwrap();
        assert!(!hl.is_hermitian());
        for z in sorted_complex_eigenvalues(hl.entries()).unwrap() {
            assert_abs_diff_eq!(z.im, -0.02, epsilon = 1e-12);
        }
    }

    #[test]
    fn magnetic_scatterer_entries() {
        let spec = LatticeSpec::open(2, 2, 0.0);
        let h = build_h0(&spec).unwrap();
        let dis = DisorderSpec {
            magnetic_scatterers: vec![MagneticScatterer::new(1, 1, 0.3, 7.0)],
            ..Default::default()
        };
        let hd = apply_disorder(&h, &spec, &dis).unwrap();
        let u = spec.index(SiteIndex::new(1, 1, Spin::Up));
        let d = spec.index(SiteIndex::new(1, 1, Spin::Down));
        let expected = Complex64::from_polar(0.6 / PI, -(7.0 - 2.0 * PI));
        assert!((hd.entries()[(u, d)] - expected).norm() < 1e-14);
        assert!((hd.entries()[(d, u)] - expected.conj()).norm() < 1e-14);
        assert!(hd.is_hermitian());
    }

    #[test]
    fn onsite_sampling_statistics() {
        let spec = LatticeSpec::open(64, 64, 0.0);
        let d = sample_onsite_disorder(&spec, 0.4, 11).unwrap();
        let n = d.onsite.len() as f64;
        let mean = d.onsite.iter().map(|s| s.u).sum::<f64>() / n;
        let var = d.onsite.iter().map(|s| (s.u - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02);
        assert!((var.sqrt() - 0.4).abs() < 0.02);
        assert_eq!(d, sample_onsite_disorder(&spec, 0.4, 11).unwrap());
        assert_eq!((d.onsite[1].x, d.onsite[1].y), (1, 0));
        let z = sample_onsite_disorder(&spec, 0.0, 11).unwrap();
        assert!(z.onsite.iter().all(|s| s.u == 0.0));
    }

    #[test]
    fn magnetic_sampling() {
        let spec = LatticeSpec::open(5, 4, 0.0);
        let d = sample_magnetic_disorder(&spec, 0.1, 3).unwrap();
        assert_eq!(d.magnetic_scatterers.len(), 20);
        assert!(d.magnetic_scatterers.iter().all(|s| (0.0..2.0 * PI).contains(&s.phase)));
        assert_eq!(d, sample_magnetic_disorder(&spec, 0.1, 3).unwrap());
        let z = sample_magnetic_disorder(&spec, 0.0, 3).unwrap();
        assert!(z.magnetic_scatterers.iter().all(|s| s.strength_eps_f == 0.0));
    }

    #[test]
    fn crow_chain_spectrum() {
        let h = build_crow_chain(40, 1.0).unwrap();
        let e = up_eigs(&h);
        let mut expected: Vec<f64> = (1..=40).map(|m| -2.0 * (m as f64 * PI / 41.0).cos()).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
        assert!(build_crow_chain(1, 1.0).is_err());
    }

    #[test]
    fn disorder_json_field_names() {
        let d = DisorderSpec {
            onsite: vec![OnsiteShift { x: 0, y: 1, u: 0.5 }],
            magnetic_scatterers: vec![MagneticScatterer::new(2, 3, 0.1, 1.0)],
            loss_rate: 0.02,
        };
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"magneticScatterers\"") && s.contains("\"strengthEpsF\""));
        assert!(s.contains("\"lossRate\""));
        let back: DisorderSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn matrix_market_export() {
        let h = build_h0(&LatticeSpec::open(2, 1, 0.0)).unwrap();
        let mut buf = Vec::new();
        h.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "4 4 4");
        assert!(lines[2].starts_with("2 1 -1.0"));
    }
}
