//! Dense complex linear algebra for the small matrices this crate works with
//! (dimension at most 2^5 for states and at most a few hundred for Fisher
//! matrices).
//!
//! Every exponential taken here is of the form `exp(iA)` with `A` Hermitian,
//! so all of it runs through a single Hermitian eigendecomposition (cyclic
//! complex Jacobi).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
// Float math for no_std builds; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default relative threshold for [`psd_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Relative Hermiticity tolerance accepted by the eigensolver.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalue pairs closer than this use the degenerate divided difference.
const DEGENERATE_GAP: f64 = 1e-9;

const MAX_SWEEPS: usize = 100;

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for k in 0..dim {
            m[(k, k)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (k, &v) in diag.iter().enumerate() {
            m[(k, k)] = C64::new(v, 0.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Matrix product; panics on inner-dimension mismatch.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let orow = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · rhs · self†`.
    pub fn conjugate(&self, rhs: &Self) -> Self {
        self.matmul(rhs).matmul(&self.adjoint())
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self += s · rhs`.
    pub fn axpy(&mut self, s: C64, rhs: &Self) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        let rows = self.rows * rhs.rows;
        let cols = self.cols * rhs.cols;
        Self::from_fn(rows, cols, |r, c| {
            self[(r / rhs.rows, c / rhs.cols)] * rhs[(r % rhs.rows, c % rhs.cols)]
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|k| self[(k, k)]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|k| self[(k, k)]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |A - A†|`, or `None` for non-square input.
    pub fn hermitian_deviation(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut dev = 0.0f64;
        for r in 0..n {
            for c in r..n {
                dev = dev.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        Some(dev)
    }

    /// Checks squareness and Hermiticity within `HERMITIAN_TOL · max|A|`.
    pub fn check_hermitian(&self) -> Result<()> {
        let dev = self.hermitian_deviation().ok_or(Error::NotSquare {
            rows: self.rows,
            cols: self.cols,
        })?;
        if dev > HERMITIAN_TOL * self.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(())
    }

    /// Replaces the matrix by `(A + A†)/2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for r in 0..n {
            for c in r..n {
                let v = (self[(r, c)] + self[(c, r)].conj()) * 0.5;
                self[(r, c)] = v;
                self[(c, r)] = v.conj();
            }
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Spectral decomposition `A = V · diag(λ) · V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct EigDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl EigDecomposition {
    /// `V · diag(f(λ)) · V†`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = v.rows();
        let fl: Vec<C64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, n, |r, c| {
            (0..n).map(|k| v[(r, k)] * fl[k] * v[(c, k)].conj()).sum()
        })
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_fn(|l| C64::new(l, 0.0))
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<EigDecomposition> {
    a.check_hermitian()?;
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = ComplexMatrix::identity(n);
    let scale = m.max_abs();
    if n <= 1 || scale == 0.0 {
        let eigenvalues = (0..n).map(|k| m[(k, k)].re).collect();
        return Ok(EigDecomposition {
            eigenvalues,
            eigenvectors: v,
        });
    }

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|r| (r + 1..n).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)].norm_sqr())
            .sum();
        if off.sqrt() <= f64::EPSILON * 1e-2 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(x, x)].re.total_cmp(&m[(y, y)].re));
    let eigenvalues = order.iter().map(|&k| m[(k, k)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// One Jacobi rotation annihilating `m[(p, q)]`; accumulates into `v`.
fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let b = m[(p, q)];
    let babs = b.norm();
    if babs == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // Skip rotations that would be lost in rounding.
    if babs < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[(p, q)] = ZERO;
        m[(q, p)] = ZERO;
        return;
    }
    let phase = b / babs;
    let theta = (aqq - app) / (2.0 * babs);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // W = diag(1, e^{-iφ}) · [[c, s], [-s, c]] acting on columns (p, q).
    let pc = phase.conj();
    let w00 = C64::new(c, 0.0);
    let w01 = C64::new(s, 0.0);
    let w10 = -pc * s;
    let w11 = pc * c;
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = mkp * w00 + mkq * w10;
        m[(k, q)] = mkp * w01 + mkq * w11;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = w00.conj() * mpk + w10.conj() * mqk;
        m[(q, k)] = w01.conj() * mpk + w11.conj() * mqk;
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * w00 + vkq * w10;
        v[(k, q)] = vkp * w01 + vkq * w11;
    }
}

/// `exp(iA)` for Hermitian `A`.
pub fn unitary_exp(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(a)?;
    Ok(eig.apply_fn(|l| C64::new(0.0, l).exp()))
}

/// Divided difference of `x ↦ e^{ix}` scaled by `1/i`:
/// `(e^{ia} - e^{ib}) / (i(a - b))`, written as `e^{i(a+b)/2} · sinc((a-b)/2)`.
fn exp_divided_difference(a: f64, b: f64) -> C64 {
    let mid = C64::new(0.0, 0.5 * (a + b)).exp();
    let half = 0.5 * (a - b);
    if half.abs() < 0.5 * DEGENERATE_GAP {
        mid
    } else {
        mid * (half.sin() / half)
    }
}

/// `d/dt exp(i(A + tE))` at `t = 0`, via divided differences in the
/// eigenbasis of `A` (Daleckii–Krein).
pub fn unitary_exp_directional(a: &ComplexMatrix, e: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(a)?;
    unitary_exp_directional_with(&eig, e)
}

/// As [`unitary_exp_directional`], reusing a decomposition of `A`.
pub fn unitary_exp_directional_with(
    eig: &EigDecomposition,
    e: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let v = &eig.eigenvectors;
    let n = v.rows();
    if e.rows() != n || e.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: e.rows().max(e.cols()),
        });
    }
    let vh = v.adjoint();
    let mut et = vh.matmul(e).matmul(v);
    let lam = &eig.eigenvalues;
    for k in 0..n {
        for l in 0..n {
            et[(k, l)] *= I * exp_divided_difference(lam[k], lam[l]);
        }
    }
    Ok(v.matmul(&et).matmul(&vh))
}

/// A spectrum whose largest eigenvalue is at or below this is round-off and
/// has rank 0; a purely relative cut would count the noise.
pub const ZERO_SPECTRUM: f64 = 1e-12;

/// Number of eigenvalues above `rel_tol · λ_max` of a Hermitian PSD matrix.
pub fn psd_rank(m: &ComplexMatrix, rel_tol: f64) -> Result<usize> {
    let eig = hermitian_eig(m)?;
    rank_from_eigenvalues(&eig.eigenvalues, rel_tol)
}

/// Thresholded rank from a precomputed spectrum.
pub fn rank_from_eigenvalues(eigenvalues: &[f64], rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "rank tolerance must be positive, got {rel_tol}"
        )));
    }
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > ZERO_SPECTRUM) {
        return Ok(0);
    }
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * max {
        return Err(Error::NotPsd { eigenvalue: min, max });
    }
    Ok(eigenvalues.iter().filter(|&&l| l > rel_tol * max).count())
}
