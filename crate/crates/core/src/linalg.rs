//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Hessenberg, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{CrowError, Result};

const EIG_EPS: f64 = 1e-14;
const MAX_ITER: usize = 0;

fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as matching columns.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), EIG_EPS, MAX_ITER).ok_or(
        CrowError::NoConvergence {
            dim: n,
            norm: frobenius(m),
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut v: Vec<f64> = m
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CrowError::NoConvergence {
            dim: n,
            norm: frobenius(m),
        });
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Eigenvalues and unit eigenvectors of a general complex matrix via the
/// Schur form `A = Q T Q*`. Pairs are sorted by real part, then imaginary.
pub fn general_eigen(m: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    let norm = frobenius(m);
    let schur = Schur::try_new(m.clone(), EIG_EPS, MAX_ITER)
        .ok_or(CrowError::NoConvergence { dim: n, norm })?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let tiny = f64::EPSILON * norm.max(1.0);
    let mut vecs = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut v = DVector::<Complex64>::zeros(n);
        v[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * v[j];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < tiny {
                d = Complex64::new(tiny, 0.0);
            }
            v[i] = -s / d;
        }
        let x = &q * v;
        let nrm = x.norm();
        vecs.set_column(k, &(x / Complex64::new(nrm, 0.0)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .re
            .total_cmp(&values[b].re)
            .then(values[a].im.total_cmp(&values[b].im))
    });
    let sorted = order.iter().map(|&i| values[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    Ok((sorted, vectors))
}

pub fn sorted_complex_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let norm = frobenius(m);
    let schur = Schur::try_new(m.clone(), EIG_EPS, MAX_ITER)
        .ok_or(CrowError::NoConvergence { dim: n, norm })?;
    let (_, t) = schur.unpack();
    let mut v: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(v)
}

/// Resolvent `(omega - A)^{-1}` for many real `omega` after a single
/// Hessenberg reduction `A = Q Hs Q*`. Each shifted solve costs `O(n^2)`.
#[derive(Debug, Clone)]
pub struct HessenbergResolvent {
    q: DMatrix<Complex64>,
    hs: DMatrix<Complex64>,
}

impl HessenbergResolvent {
    pub fn new(a: &DMatrix<Complex64>) -> Self {
        let (q, hs) = Hessenberg::new(a.clone()).unpack();
        Self { q, hs }
    }

    pub fn dim(&self) -> usize {
        self.hs.nrows()
    }

    /// Solves `(omega - Hs) y = b` by Gaussian elimination with pivoting
    /// between adjacent rows.
    fn solve_hessenberg(&self, omega: f64, mut b: DVector<Complex64>) -> Result<DVector<Complex64>> {
        let n = self.dim();
        let mut w = -self.hs.clone();
        for i in 0..n {
            w[(i, i)] += omega;
        }
        let scale = w.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())).max(1.0);
        let singular = |residual: f64| CrowError::Singular { omega, residual };
        for k in 0..n.saturating_sub(1) {
            if w[(k + 1, k)].norm() > w[(k, k)].norm() {
                for j in k..n {
                    w.swap((k, j), (k + 1, j));
                }
                b.swap_rows(k, k + 1);
            }
            let p = w[(k, k)];
            if p.norm() <= f64::EPSILON * 1e-3 * scale {
                return Err(singular(f64::INFINITY));
            }
            let l = w[(k + 1, k)] / p;
            if l != Complex64::new(0.0, 0.0) {
                for j in k + 1..n {
                    let u = w[(k, j)];
                    w[(k + 1, j)] -= l * u;
                }
                let bk = b[k];
                b[k + 1] -= l * bk;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= w[(i, j)] * b[j];
            }
            let p = w[(i, i)];
            if p.norm() <= f64::EPSILON * 1e-3 * scale {
                return Err(singular(f64::INFINITY));
            }
            b[i] = s / p;
        }
        if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(singular(f64::NAN));
        }
        Ok(b)
    }

    /// Full solution of `(omega - A) x = e_source`.
    pub fn column(&self, omega: f64, source: usize) -> Result<DVector<Complex64>> {
        let rhs = self.q.row(source).adjoint();
        let y = self.solve_hessenberg(omega, rhs)?;
        Ok(&self.q * y)
    }

    /// Selected entries `x[rows]` of the solution of `(omega - A) x = e_source`.
    pub fn entries(&self, omega: f64, source: usize, rows: &[usize]) -> Result<Vec<Complex64>> {
        let rhs = self.q.row(source).adjoint();
        let y = self.solve_hessenberg(omega, rhs)?;
        Ok(rows.iter().map(|&r| (self.q.row(r) * &y)[(0, 0)]).collect())
    }
}
