//! 4x4 transfer matrices of a 1D chain of ring resonators joined by
//! waveguide arms.
//!
//! Field amplitudes are ordered `(a, b, c, d)`: `(a, b)` are the forward and
//! backward partial waves of one circulation and `(c, d)` those of the other.
//! Every lossless constituent preserves the form `J = diag(1, -1, 1, -1)`,
//! i.e. `M* J M = J`, so `|v* J v|` measures the power flux of a mode.
//!
//! Frequencies enter as `d = Delta / 2 kappa`. The resonator carries the
//! round-trip phase `betaR = 2 pi n + d (1 - r^2) / 2`, the arm
//! `betaL = (2p + 1) pi / 2 + (2p + 1) / (4n) * d (1 - r^2) / 2`, which puts the
//! band centre on resonance and gives the tight-binding sign `-kappa` for odd
//! `p`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CrowError, Result};
use crate::lattice::{build_h0, build_spin_flip, build_zeeman, LatticeSpec};
use crate::linalg::{general_eigen, hermitian_eigenvalues};
use crate::probe::fmt;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// 4x4 transfer matrix over `(a, b, c, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix(pub Matrix4<Complex64>);

impl TransferMatrix {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn det(&self) -> Complex64 {
        self.0.determinant()
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }
}

impl std::ops::Mul for TransferMatrix {
    type Output = TransferMatrix;
    fn mul(self, rhs: TransferMatrix) -> TransferMatrix {
        TransferMatrix(self.0 * rhs.0)
    }
}

/// Free propagation through a resonator half with phase `beta_r`.
pub fn m_res(beta_r: f64) -> TransferMatrix {
    let p = Complex64::from_polar(1.0, beta_r);
    TransferMatrix(Matrix4::from_diagonal(&nalgebra::Vector4::new(p, p.conj(), p, p.conj())))
}

/// Waveguide arm with phase `beta_l` and arm imbalance `phi` of opposite
/// sign for the two circulations.
pub fn m_wg(beta_l: f64, phi: f64) -> TransferMatrix {
    let e = |x: f64| Complex64::from_polar(1.0, x);
    TransferMatrix(Matrix4::from_diagonal(&nalgebra::Vector4::new(
        e(beta_l + phi),
        e(-beta_l + phi),
        e(beta_l - phi),
        e(-beta_l - phi),
    )))
}

/// Directional coupler with reflection `r` and transmission `t`.
pub fn m_cpl(r: f64, t: Complex64) -> TransferMatrix {
    let rc = c(r);
    let b = Matrix2::new((t * t - rc * rc) / t, rc / t, -rc / t, c(1.0) / t);
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&b);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
    TransferMatrix(m)
}

/// Point scatterer with `t_s = 1 - eps^2 / 2` and `r_s = i sqrt(1 - t_s^2)`,
/// coupling `a` with `d` and `b` with `c`.
pub fn m_scatt(epsilon: f64) -> TransferMatrix {
    let ts = c(1.0 - epsilon * epsilon / 2.0);
    let rs = I * (1.0 - ts.re * ts.re).max(0.0).sqrt();
    let z = c(0.0);
    let diag = (ts * ts - rs * rs) / ts;
    let inv = c(1.0) / ts;
    let q = rs / ts;
    TransferMatrix(Matrix4::new(
        diag, z, z, q, //
        z, inv, -q, z, //
        z, q, diag, z, //
        -q, z, z, inv,
    ))
}

/// Coupler and propagation phases of one unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainParams {
    pub r: f64,
    pub beta_r: f64,
    pub beta_l: f64,
    pub alpha_phase: f64,
}

impl ChainParams {
    /// Phases at detuning `d = Delta / 2 kappa` for resonator order `n` and
    /// odd arm order `p`.
    pub fn at_detuning(r: f64, d: f64, n: u32, p: u32, alpha_phase: f64) -> Self {
        let shift = d * (1.0 - r * r) / 2.0;
        let (nf, pf) = (n as f64, p as f64);
        Self {
            r,
            beta_r: 2.0 * PI * nf + shift,
            beta_l: (2.0 * pf + 1.0) * PI / 2.0 + shift * (2.0 * pf + 1.0) / (4.0 * nf),
            alpha_phase,
        }
    }

    /// Coupler reflection giving finesse `f`.
    pub fn r_for_finesse(f: f64) -> f64 {
        (1.0 - PI / f).sqrt()
    }

    /// Lossless coupler transmission, `i sqrt(1 - r^2)`.
    pub fn t(&self) -> Complex64 {
        I * (1.0 - self.r * self.r).sqrt()
    }

    pub fn finesse(&self) -> f64 {
        PI / (1.0 - self.r * self.r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(CrowError::InvalidArgument(format!(
                "coupler reflection must lie in (0, 1), got {}",
                self.r
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellVariant {
    Plain,
    WaveguideScatterer,
    ResonatorScatterer,
}

/// Ordered product for one unit cell.
///
/// * `Plain`: `C W(L, phi) C R(R)`
/// * `WaveguideScatterer`: `C W(L/2, phi/2) S W(L/2, phi/2) C R(R)`
/// * `ResonatorScatterer`: `C W(L, phi) C R(R/2) S R(R/2)`
pub fn unit_cell(params: &ChainParams, variant: CellVariant, epsilon: f64) -> TransferMatrix {
    let cpl = m_cpl(params.r, params.t());
    let (bl, br, ph) = (params.beta_l, params.beta_r, params.alpha_phase);
    match variant {
        CellVariant::Plain => cpl * m_wg(bl, ph) * cpl * m_res(br),
        CellVariant::WaveguideScatterer => {
            cpl * m_wg(bl / 2.0, ph / 2.0) * m_scatt(epsilon) * m_wg(bl / 2.0, ph / 2.0) * cpl * m_res(br)
        }
        CellVariant::ResonatorScatterer => {
            cpl * m_wg(bl, ph) * cpl * m_res(br / 2.0) * m_scatt(epsilon) * m_res(br / 2.0)
        }
    }
}

/// One Bloch solution `lambda = exp(i K Lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BlochMode {
    pub lambda: Complex64,
    /// `-i ln lambda`, complex for evanescent modes.
    pub k_lambda: Complex64,
    pub propagating: bool,
}

impl BlochMode {
    /// `cos(K Lambda) = (lambda + 1/lambda) / 2`.
    pub fn cosine(&self) -> Complex64 {
        (self.lambda + c(1.0) / self.lambda) / 2.0
    }
}

fn eigen4(m: &Matrix4<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    general_eigen(&DMatrix::from_fn(4, 4, |i, j| m[(i, j)]))
}

/// Eigenvalues of `M`; modes with `|lambda| = 1` within `1e-8` propagate.
pub fn bloch_dispersion(m: &TransferMatrix) -> Result<Vec<BlochMode>> {
    let (vals, _) = eigen4(&m.0)?;
    Ok(vals
        .into_iter()
        .map(|lambda| BlochMode {
            lambda,
            k_lambda: -I * lambda.ln(),
            propagating: (lambda.norm() - 1.0).abs() <= 1e-8,
        })
        .collect())
}

/// Distinct real parts of the Bloch cosines, ascending. Paired solutions
/// `lambda, 1/lambda` share a cosine, so a cell yields two branches.
pub fn branch_cosines(m: &TransferMatrix) -> Result<Vec<f64>> {
    let mut cs: Vec<f64> = bloch_dispersion(m)?.iter().map(|b| b.cosine().re).collect();
    cs.sort_by(f64::total_cmp);
    Ok(vec![0.5 * (cs[0] + cs[1]), 0.5 * (cs[2] + cs[3])])
}

/// Closed-form Bloch eigenvalues of the waveguide-scatterer chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpinFlipEigen {
    /// `lambda+->`, `lambda-->`.
    pub forward: [Complex64; 2],
    /// `lambda+<-`, `lambda-<-`.
    pub backward: [Complex64; 2],
    /// First-order cosines `-d / (1 + eps)` and `-d / (1 - eps)`.
    pub first_order_cos: [f64; 2],
}

/// Evaluates the closed-form eigenvalues at `d = Delta / 2 kappa`.
pub fn spin_flip_eigenvalues(d: f64, epsilon: f64) -> Result<SpinFlipEigen> {
    if d.abs() > 1.0 / (1.0 + epsilon.abs()) + 1e-12 {
        return Err(CrowError::InvalidArgument(format!(
            "|d| = {} outside the shared band 1/(1+|eps|)",
            d.abs()
        )));
    }
    let e = epsilon;
    let s = e * (4.0 - e * e).sqrt();
    let den = 2.0 - e * e;
    let pair = |s: f64| {
        let root = ((den * den) + (4.0 * s - 4.0 - 4.0 * e * e + e.powi(4)) * d * d).max(0.0).sqrt();
        let re = c((2.0 - s) * d);
        [-(re + I * root) / den, -(re - I * root) / den]
    };
    Ok(SpinFlipEigen {
        forward: pair(s),
        backward: pair(-s),
        first_order_cos: [-d / (1.0 + e), -d / (1.0 - e)],
    })
}

/// `S = [[A - B D^-1 C, B D^-1], [-D^-1 C, D^-1]]` from the 2x2 blocks of a
/// matrix already expressed in a forward/backward mode basis.
pub fn s_matrix(m: &Matrix4<Complex64>) -> Result<Matrix4<Complex64>> {
    let a = m.fixed_view::<2, 2>(0, 0).into_owned();
    let b = m.fixed_view::<2, 2>(0, 2).into_owned();
    let cc = m.fixed_view::<2, 2>(2, 0).into_owned();
    let d = m.fixed_view::<2, 2>(2, 2).into_owned();
    if d.determinant().norm() < 1e-14 {
        return Err(CrowError::EvanescentRegime);
    }
    let di = d.try_inverse().ok_or(CrowError::EvanescentRegime)?;
    let mut s = Matrix4::zeros();
    s.fixed_view_mut::<2, 2>(0, 0).copy_from(&(a - b * di * cc));
    s.fixed_view_mut::<2, 2>(0, 2).copy_from(&(b * di));
    s.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-di * cc));
    s.fixed_view_mut::<2, 2>(2, 2).copy_from(&di);
    Ok(s)
}

/// Bloch modes of a spin-diagonal cell, normalized to unit flux
/// `|v* J v| = 1` and ordered (forward A, forward B, backward A, backward B).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    pub vectors: Matrix4<Complex64>,
    pub eigenvalues: [Complex64; 4],
}

/// Mode basis of a cell with no coupling between the two circulations.
pub fn mode_basis(cell: &TransferMatrix) -> Result<ModeBasis> {
    let j = [1.0, -1.0, 1.0, -1.0];
    let mut modes: Vec<(bool, usize, Complex64, [Complex64; 4])> = Vec::new();
    for blk in [0usize, 2] {
        let sub = DMatrix::from_fn(2, 2, |i, k| cell.0[(blk + i, blk + k)]);
        let (vals, vecs) = general_eigen(&sub)?;
        for k in 0..2 {
            let mut v = [c(0.0); 4];
            v[blk] = vecs[(0, k)];
            v[blk + 1] = vecs[(1, k)];
            let flux: f64 = (0..4).map(|i| j[i] * v[i].norm_sqr()).sum();
            if flux.abs() < 1e-12 {
                return Err(CrowError::EvanescentRegime);
            }
            let scale = c(1.0 / flux.abs().sqrt());
            for z in v.iter_mut() {
                *z *= scale;
            }
            modes.push((flux > 0.0, blk, vals[k], v));
        }
    }
    let (mut fw, mut bw): (Vec<_>, Vec<_>) = modes.into_iter().partition(|m| m.0);
    if fw.len() != 2 {
        return Err(CrowError::EvanescentRegime);
    }
    fw.sort_by_key(|m| m.1);
    bw.sort_by_key(|m| m.1);
    let all: Vec<_> = fw.into_iter().chain(bw).collect();
    let vectors = Matrix4::from_fn(|i, k| all[k].3[i]);
    Ok(ModeBasis {
        vectors,
        eigenvalues: [all[0].2, all[1].2, all[2].2, all[3].2],
    })
}

/// Scattering matrix of a disorder cell in the mode basis of the clean chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Backscatter {
    pub s: Matrix4<Complex64>,
    pub t_up: Complex64,
    pub t_down: Complex64,
    pub r_up: Complex64,
    pub r_down: Complex64,
}

/// Two cells, the second with a scatterer of amplitude `epsilon` inside its
/// resonator, at the detuning where the clean chain has Bloch phase
/// `k_lambda`. The drive is a forward wave of circulation A.
pub fn backscatter(r: f64, k_lambda: f64, epsilon: f64) -> Result<Backscatter> {
    let d = -k_lambda.cos();
    let params = ChainParams::at_detuning(r, d, 1, 1, 0.0);
    params.validate()?;
    let plain = unit_cell(&params, CellVariant::Plain, 0.0);
    let dirty = unit_cell(&params, CellVariant::ResonatorScatterer, epsilon);
    let basis = mode_basis(&plain)?;
    let vi = basis
        .vectors
        .try_inverse()
        .ok_or(CrowError::EvanescentRegime)?;
    let s = s_matrix(&(vi * (plain * dirty).0 * basis.vectors))?;
    Ok(Backscatter {
        s,
        t_up: s[(0, 0)],
        t_down: s[(1, 0)],
        r_up: s[(2, 0)],
        r_down: s[(3, 0)],
    })
}

/// Forward and backward amplitudes of both spins in the tight-binding
/// magnetic-scatterer model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelAmplitudes {
    pub t_up: Complex64,
    pub r_up: Complex64,
    pub t_down: Complex64,
    pub r_down: Complex64,
}

/// First-order and all-order solutions of the magnetic-scatterer model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelSolution {
    pub first_order: ModelAmplitudes,
    pub exact: ModelAmplitudes,
}

/// Scattering of an incoming Up wave `exp(i K x)` (hopping `J = 1`,
/// `E = -2 cos K`) off a site that mixes the spins with strength
/// `epsilon_prime`.
pub fn model_scattering_solution(k_lambda: f64, epsilon_prime: f64) -> Result<ModelSolution> {
    let sk = k_lambda.sin();
    if sk.abs() < 1e-9 {
        return Err(CrowError::BandEdge(sk));
    }
    let amp = I * (epsilon_prime / (2.0 * sk));
    let first_order = ModelAmplitudes {
        t_up: c(1.0),
        r_up: c(0.0),
        t_down: amp,
        r_down: amp,
    };
    let z = Complex64::from_polar(1.0, k_lambda);
    let e = c(-2.0 * k_lambda.cos());
    let ep = c(epsilon_prime);
    let w = e * z + z * z;
    // Unknowns (t_up, r_up, t_down, r_down, psi_up, psi_down) with psi the
    // scatterer-site amplitudes.
    let mut a = DMatrix::<Complex64>::zeros(6, 6);
    let mut b = nalgebra::DVector::<Complex64>::zeros(6);
    a[(0, 4)] = e;
    a[(0, 1)] = z;
    a[(0, 0)] = z;
    a[(0, 5)] = ep;
    b[0] = -c(1.0) / z;
    a[(1, 5)] = e;
    a[(1, 3)] = z;
    a[(1, 2)] = z;
    a[(1, 4)] = ep;
    a[(2, 0)] = w;
    a[(2, 4)] = c(1.0);
    a[(3, 2)] = w;
    a[(3, 5)] = c(1.0);
    a[(4, 1)] = w;
    a[(4, 4)] = c(1.0);
    b[4] = -e / z - c(1.0) / (z * z);
    a[(5, 3)] = w;
    a[(5, 5)] = c(1.0);
    let x = a.lu().solve(&b).ok_or(CrowError::BandEdge(sk))?;
    Ok(ModelSolution {
        first_order,
        exact: ModelAmplitudes {
            t_up: x[0],
            r_up: x[1],
            t_down: x[2],
            r_down: x[3],
        },
    })
}

/// Internal loss rate `kappa_in = mu (F / 2 pi) (4 kappa)` for a round-trip
/// loss fraction `mu`.
pub fn kappa_in(mu: f64, finesse: f64, kappa: f64) -> f64 {
    mu * (finesse / (2.0 * PI)) * (4.0 * kappa)
}

/// `omega(K) = -2 kappa cos(K Lambda + phi) - i kappa_in`.
pub fn lossy_dispersion(k_lambda: f64, mu: f64, finesse: f64, kappa: f64, alpha_phase: f64) -> Complex64 {
    Complex64::new(
        -2.0 * kappa * (k_lambda + alpha_phase).cos(),
        -2.0 / PI * mu * kappa * finesse,
    )
}

/// One row of the cross-validation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        }
    }
}

/// Settings of the transfer-matrix cross-validation suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TmChecks {
    pub finesse: f64,
    pub spin_flip_epsilon: f64,
    pub zeeman_epsilon: f64,
    pub zeeman_r: f64,
    pub backscatter_epsilon: f64,
    pub ring_sites: usize,
    pub max_detuning: f64,
}

impl Default for TmChecks {
    fn default() -> Self {
        Self {
            finesse: 300.0,
            spin_flip_epsilon: 0.05,
            zeeman_epsilon: 0.01,
            zeeman_r: 0.99,
            backscatter_epsilon: 0.01,
            ring_sites: 12,
            max_detuning: 0.9,
        }
    }
}

fn detuning_grid(max: f64) -> Vec<f64> {
    let n = 37;
    (0..n).map(|i| -max + 2.0 * max * i as f64 / (n - 1) as f64).collect()
}

fn cell_at(r: f64, d: f64, variant: CellVariant, eps: f64, phi: f64) -> TransferMatrix {
    unit_cell(&ChainParams::at_detuning(r, d, 1, 1, phi), variant, eps)
}

/// Largest deviation of the plain cell's Bloch cosine from `-d`.
pub fn plain_dispersion_error(finesse: f64, max_d: f64) -> Result<f64> {
    let r = ChainParams::r_for_finesse(finesse);
    let mut worst = 0.0_f64;
    for d in detuning_grid(max_d) {
        let cs = branch_cosines(&cell_at(r, d, CellVariant::Plain, 0.0, 0.0))?;
        for cv in cs {
            worst = worst.max((cv + d).abs());
        }
    }
    Ok(worst)
}

/// Largest deviation of the waveguide-scatterer cosines from
/// `-d / (1 +- eps)`.
pub fn spin_flip_dispersion_error(finesse: f64, eps: f64, max_d: f64) -> Result<f64> {
    let r = ChainParams::r_for_finesse(finesse);
    let mut worst = 0.0_f64;
    for d in detuning_grid(max_d) {
        let cs = branch_cosines(&cell_at(r, d, CellVariant::WaveguideScatterer, eps, 0.0))?;
        let mut pred = [-d / (1.0 + eps), -d / (1.0 - eps)];
        pred.sort_by(f64::total_cmp);
        for (a, b) in cs.iter().zip(pred) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Relative deviation of the resonator-scatterer branch splitting at
/// `d = 0` from the Zeeman prediction `4 eps F / pi` (in units of `2 kappa`).
pub fn zeeman_split_error(r: f64, eps: f64) -> Result<(f64, f64)> {
    let cs = branch_cosines(&cell_at(r, 0.0, CellVariant::ResonatorScatterer, eps, 0.0))?;
    let split = (cs[1] - cs[0]).abs();
    let f = PI / (1.0 - r * r);
    let pred = 4.0 * eps * f / PI;
    Ok((split, (split - pred).abs() / pred))
}

/// Largest deviation between the closed-form and the numeric
/// waveguide-scatterer cosines.
pub fn closed_form_error(finesse: f64, eps: f64, max_d: f64) -> Result<(f64, f64)> {
    let r = ChainParams::r_for_finesse(finesse);
    let mut worst = 0.0_f64;
    let mut worst_modulus = 0.0_f64;
    for d in detuning_grid(max_d.min(1.0 / (1.0 + eps.abs()))) {
        let cf = spin_flip_eigenvalues(d, eps)?;
        let mut pred: Vec<f64> = [cf.forward[0], cf.backward[0]]
            .iter()
            .map(|l| ((l + c(1.0) / l) / 2.0).re)
            .collect();
        pred.sort_by(f64::total_cmp);
        for l in cf.forward.iter().chain(&cf.backward) {
            worst_modulus = worst_modulus.max((l.norm() - 1.0).abs());
        }
        let cs = branch_cosines(&cell_at(r, d, CellVariant::WaveguideScatterer, eps, 0.0))?;
        for (a, b) in cs.iter().zip(pred) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst, worst_modulus))
}

/// Deviation of the plain-cell Bloch phases with arm imbalance `phi` from
/// `cos(K +- phi) = -d`.
pub fn arm_imbalance_error(finesse: f64, phi: f64, max_d: f64) -> Result<f64> {
    let r = ChainParams::r_for_finesse(finesse);
    let mut worst = 0.0_f64;
    for d in detuning_grid(max_d) {
        for mode in bloch_dispersion(&cell_at(r, d, CellVariant::Plain, 0.0, phi))? {
            let k = mode.k_lambda.re;
            let err = ((k + phi).cos() + d).abs().min(((k - phi).cos() + d).abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Largest deviation between the Bloch cosines of a cell at the detunings of
/// a lattice-model ring spectrum and the ring momenta `2 pi m / n`.
pub fn ring_error(
    variant: CellVariant,
    finesse: f64,
    eps: f64,
    sites: usize,
    max_d: f64,
) -> Result<f64> {
    let spec = LatticeSpec::torus(1, sites, 0.0);
    let h = match variant {
        CellVariant::Plain => build_h0(&spec)?,
        CellVariant::WaveguideScatterer => build_spin_flip(&spec, eps)?,
        CellVariant::ResonatorScatterer => build_zeeman(&spec, eps, finesse)?,
    };
    let r = ChainParams::r_for_finesse(finesse);
    let momenta: Vec<f64> = (0..sites).map(|m| (2.0 * PI * m as f64 / sites as f64).cos()).collect();
    let mut worst = 0.0_f64;
    for e in hermitian_eigenvalues(h.entries())? {
        let d = e / 2.0;
        if d.abs() > max_d {
            continue;
        }
        let cs = branch_cosines(&cell_at(r, d, variant, eps, 0.0))?;
        let err = cs
            .iter()
            .flat_map(|cv| momenta.iter().map(move |m| (cv - m).abs()))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Relative modulus deviation of the two-cell S-matrix spin-flip amplitudes
/// from the exact model solution with `eps' = -factor * eps F / pi`.
pub fn backscatter_error(finesse: f64, eps: f64, k_lambda: f64, factor: f64) -> Result<f64> {
    let r = ChainParams::r_for_finesse(finesse);
    let bs = backscatter(r, k_lambda, eps)?;
    let model = model_scattering_solution(k_lambda, -factor * eps * finesse / PI)?.exact;
    let rel = |a: Complex64, b: Complex64| (a.norm() - b.norm()).abs() / b.norm();
    Ok(rel(bs.t_down, model.t_down).max(rel(bs.r_down, model.r_down)))
}

/// `|exact - first order|` of the spin-flip amplitudes, divided by `eps'^2`.
pub fn first_order_defect(k_lambda: f64, epsilon_prime: f64) -> Result<f64> {
    let s = model_scattering_solution(k_lambda, epsilon_prime)?;
    let e = (s.exact.t_down - s.first_order.t_down)
        .norm()
        .max((s.exact.r_down - s.first_order.r_down).norm());
    Ok(e / (epsilon_prime * epsilon_prime))
}

/// Full cross-validation table.
pub fn cross_validation(cfg: &TmChecks) -> Result<Vec<CheckResult>> {
    let f = cfg.finesse;
    let tol = 5.0 / f;
    let r = ChainParams::r_for_finesse(f);
    let mut out = Vec::new();

    let mut det_err = 0.0_f64;
    for m in [
        m_res(0.7),
        m_wg(1.3, 0.4),
        m_cpl(r, ChainParams::at_detuning(r, 0.0, 1, 1, 0.0).t()),
        m_scatt(0.1),
        cell_at(r, 0.3, CellVariant::ResonatorScatterer, 0.05, 0.2),
    ] {
        det_err = det_err.max((m.det().norm() - 1.0).abs());
    }
    out.push(CheckResult::new("lossless |det| = 1", det_err, 1e-8));

    out.push(CheckResult::new(
        "plain cell cos(K) = -d",
        plain_dispersion_error(f, cfg.max_detuning)?,
        tol,
    ));

    let count = |d: f64| -> Result<usize> {
        Ok(bloch_dispersion(&cell_at(r, d, CellVariant::Plain, 0.0, 0.0))?
            .iter()
            .filter(|m| m.propagating)
            .count())
    };
    let inside = count(1.0 - 2.0 * tol)?;
    let outside = count(1.0 + 2.0 * tol)?;
    out.push(CheckResult::new(
        "plain cell band/gap dichotomy",
        if inside == 4 && outside == 0 { 0.0 } else { 1.0 },
        0.0,
    ));

    out.push(CheckResult::new(
        "arm imbalance cos(K +- phi) = -d",
        arm_imbalance_error(f, 0.3, cfg.max_detuning)?,
        tol,
    ));

    out.push(CheckResult::new(
        "waveguide scatterer -2k(1+-eps)cos(K)",
        spin_flip_dispersion_error(f, cfg.spin_flip_epsilon, cfg.max_detuning)?,
        tol,
    ));

    let (cf_err, cf_mod) = closed_form_error(f, cfg.spin_flip_epsilon, cfg.max_detuning)?;
    out.push(CheckResult::new("spin-flip closed form vs numeric", cf_err, tol));
    out.push(CheckResult::new("spin-flip closed form |lambda| = 1", cf_mod, 1e-10));

    let (_, z_err) = zeeman_split_error(cfg.zeeman_r, cfg.zeeman_epsilon)?;
    out.push(CheckResult::new("resonator scatterer Zeeman split", z_err, 0.1));

    for (name, variant, eps) in [
        ("ring: plain vs lattice model", CellVariant::Plain, 0.0),
        (
            "ring: waveguide scatterer vs spin-flip model",
            CellVariant::WaveguideScatterer,
            cfg.spin_flip_epsilon,
        ),
        (
            "ring: resonator scatterer vs Zeeman model",
            CellVariant::ResonatorScatterer,
            cfg.zeeman_epsilon / 10.0,
        ),
    ] {
        out.push(CheckResult::new(
            name,
            ring_error(variant, f, eps, cfg.ring_sites, cfg.max_detuning)?,
            tol,
        ));
    }

    let bs_tol = 0.1_f64.max(5.0 * cfg.backscatter_epsilon);
    for (label, factor) in [("2", 2.0), ("4", 4.0)] {
        let mut worst = 0.0_f64;
        for k in [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0] {
            worst = worst.max(backscatter_error(f, cfg.backscatter_epsilon, k, factor)?);
        }
        out.push(CheckResult::new(
            &format!("backscatter S vs model, eps' = -{label} eps F / pi"),
            worst,
            bs_tol,
        ));
    }

    let mut defect = 0.0_f64;
    for k in [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0] {
        for ep in [1e-3, 1e-2] {
            defect = defect.max(first_order_defect(k, ep)? * (k.sin() * k.sin()));
        }
    }
    out.push(CheckResult::new(
        "model first order vs exact, |error| sin^2 K / eps'^2",
        defect,
        1.0,
    ));

    let (mu, fin) = (1e-4, 157.0);
    let w = lossy_dispersion(0.4, mu, fin, 1.0, 0.1);
    out.push(CheckResult::new(
        "lossy dispersion Im omega = -kappa_in",
        (w.im + kappa_in(mu, fin, 1.0)).abs(),
        1e-14,
    ));
    Ok(out)
}

/// Pass/fail table as CSV `check, value, tolerance, passed`.
pub fn write_checks_csv<W: Write>(rows: &[CheckResult], mut out: W) -> Result<()> {
    writeln!(out, "check,value,tolerance,passed")?;
    for r in rows {
        writeln!(out, "\"{}\",{},{},{}", r.name, fmt(r.value), fmt(r.tolerance), r.passed)?;
    }
    Ok(())
}

/// Bloch cosines of a cell variant across detunings, as CSV
/// `d, cos1_re, cos1_im, ..., cos4_re, cos4_im`.
pub fn write_dispersion_sweep<W: Write>(
    variant: CellVariant,
    r: f64,
    epsilon: f64,
    alpha_phase: f64,
    detunings: &[f64],
    mut out: W,
) -> Result<()> {
    writeln!(out, "d,cos1_re,cos1_im,cos2_re,cos2_im,cos3_re,cos3_im,cos4_re,cos4_im")?;
    for &d in detunings {
        let modes = bloch_dispersion(&cell_at(r, d, variant, epsilon, alpha_phase))?;
        let mut row = fmt(d);
        for m in modes {
            let cs = m.cosine();
            row.push_str(&format!(",{},{}", fmt(cs.re), fmt(cs.im)));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transparent_elements() {
        assert_eq!(m_cpl(0.0, c(1.0)), TransferMatrix::identity());
        assert_eq!(m_scatt(0.0), TransferMatrix::identity());
    }

    #[test]
    fn coupler_determinant() {
        let t = I * (1.0 - 0.99f64 * 0.99).sqrt();
        assert!((m_cpl(0.99, t).det().norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn plain_cell_on_resonance() {
        let r = ChainParams::r_for_finesse(300.0);
        let modes = bloch_dispersion(&cell_at(r, 0.0, CellVariant::Plain, 0.0, 0.0)).unwrap();
        assert!(modes.iter().all(|m| m.propagating));
        for m in modes {
            assert!((m.k_lambda.re.abs() - PI / 2.0).abs() < 5.0 / 300.0);
        }
    }

    #[test]
    fn waveguide_scatterer_at_zero_matches_plain() {
        let p = ChainParams::at_detuning(0.9, 0.3, 1, 1, 0.2);
        let a = unit_cell(&p, CellVariant::WaveguideScatterer, 0.0);
        let b = unit_cell(&p, CellVariant::Plain, 0.0);
        assert!((a.0 - b.0).norm() < 1e-12);
    }

    #[test]
    fn gap_has_no_propagating_modes() {
        let r = ChainParams::r_for_finesse(300.0);
        let modes = bloch_dispersion(&cell_at(r, 1.2, CellVariant::Plain, 0.0, 0.0)).unwrap();
        assert!(modes.iter().all(|m| !m.propagating));
    }

    #[test]
    fn closed_form_reduces_and_is_unimodular() {
        let z = spin_flip_eigenvalues(0.3, 0.0).unwrap();
        let expected = Complex64::new(-0.3, -(1.0f64 - 0.09).sqrt());
        assert!((z.forward[0] - expected).norm() < 1e-12);
        for d in [-0.5, 0.0, 0.5] {
            let s = spin_flip_eigenvalues(d, 0.1).unwrap();
            for l in s.forward.iter().chain(&s.backward) {
                assert!((l.norm() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_s_matrix() {
        let s = s_matrix(&Matrix4::identity()).unwrap();
        assert_eq!(s, Matrix4::identity());
    }

    #[test]
    fn clean_disorder_cell_propagates_two_cells() {
        let r = ChainParams::r_for_finesse(300.0);
        for k in [PI / 3.0, PI / 2.0] {
            let bs = backscatter(r, k, 0.0).unwrap();
            let kk = mode_basis(&cell_at(r, -k.cos(), CellVariant::Plain, 0.0, 0.0))
                .unwrap()
                .eigenvalues[0];
            let expected = kk * kk;
            assert!((bs.s - Matrix4::identity() * expected).norm() < 1e-9);
            assert!((expected.arg() - 2.0 * k).abs() < 5.0 / 150.0);
        }
    }

    #[test]
    fn backscatter_s_is_unitary() {
        let r = ChainParams::r_for_finesse(300.0);
        let s = backscatter(r, PI / 3.0, 0.01).unwrap().s;
        assert!((s.adjoint() * s - Matrix4::identity()).norm() < 1e-9);
    }

    #[test]
    fn model_solution_trivial_and_first_order() {
        let s = model_scattering_solution(PI / 2.0, 0.0).unwrap();
        assert!((s.exact.t_up - 1.0).norm() < 1e-12);
        assert!(s.exact.r_up.norm() < 1e-12 && s.exact.t_down.norm() < 1e-12);
        let s = model_scattering_solution(PI / 2.0, 0.1).unwrap();
        assert!((s.first_order.t_down - Complex64::new(0.0, 0.05)).norm() < 1e-15);
        assert!((s.exact.t_down - s.first_order.t_down).norm() < 0.1 * 0.1);
        assert!(matches!(model_scattering_solution(0.0, 0.1), Err(CrowError::BandEdge(_))));
    }

    #[test]
    fn model_conserves_flux() {
        for k in [0.4, PI / 2.0, 2.5] {
            let x = model_scattering_solution(k, 0.7).unwrap().exact;
            let p = x.t_up.norm_sqr() + x.r_up.norm_sqr() + x.t_down.norm_sqr() + x.r_down.norm_sqr();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_identity() {
        for (mu, f) in [(1e-3, 100.0), (2e-4, 700.0)] {
            let w = lossy_dispersion(0.3, mu, f, 1.0, 0.0);
            assert!((w.im + kappa_in(mu, f, 1.0)).abs() < 1e-15);
            assert!((kappa_in(mu, f, 1.0) - 2.0 / PI * mu * f).abs() < 1e-15);
        }
        assert_eq!(lossy_dispersion(0.3, 0.0, 300.0, 1.0, 0.0).im, 0.0);
    }
}
