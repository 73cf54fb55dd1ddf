//! Small dense complex matrices for two-qubit work.
//!
//! Hermitian eigenproblems are solved with cyclic Jacobi rotations on the real
//! symmetric embedding `[[A, -B], [B, A]]` of `H = A + iB`. Every eigenvalue of
//! `H` appears twice in the embedding, and any matrix function `f(H)` is the
//! top-left/bottom-left block pair of `f` applied to the embedding, so no
//! complex eigenvector bookkeeping is needed even for degenerate spectra.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use thiserror::Error;

use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("Jacobi eigen-solve did not converge after {0} sweeps")]
    NoConvergence(usize),
}

/// Complex 4×4 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat4<T: Scalar>(pub [[Complex<T>; 4]; 4]);

impl<T: Scalar> CMat4<T> {
    pub fn zeros() -> Self {
        Self([[Complex::new(T::zero(), T::zero()); 4]; 4])
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { Complex::new(T::one(), T::zero()) } else { Complex::new(T::zero(), T::zero()) })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = f(i, j);
            }
        }
        m
    }

    /// `|v⟩⟨v|`
    pub fn outer(v: &[Complex<T>; 4]) -> Self {
        Self::from_fn(|i, j| v[i] * v[j].conj())
    }

    pub fn diagonal(d: [T; 4]) -> Self {
        Self::from_fn(|i, j| if i == j { Complex::new(d[i], T::zero()) } else { Complex::new(T::zero(), T::zero()) })
    }

    /// Kronecker product of two 2×2 matrices; the first factor is the most significant index.
    pub fn kron(a: &[[Complex<T>; 2]; 2], b: &[[Complex<T>; 2]; 2]) -> Self {
        Self::from_fn(|i, j| a[i / 2][j / 2] * b[i % 2][j % 2])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i].conj())
    }

    /// Elementwise complex conjugate (not the adjoint).
    pub fn conj(&self) -> Self {
        Self::from_fn(|i, j| self.0[i][j].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * s)
    }

    pub fn trace(&self) -> Complex<T> {
        (0..4).fold(Complex::new(T::zero(), T::zero()), |acc, i| acc + self.0[i][i])
    }

    /// `⟨v|M|v⟩`
    pub fn expectation(&self, v: &[Complex<T>; 4]) -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..4 {
            for j in 0..4 {
                acc = acc + v[i].conj() * self.0[i][j] * v[j];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut m = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                m = m.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        m
    }

    pub fn hermiticity_defect(&self) -> T {
        self.max_abs_diff(&self.adjoint())
    }

    /// Symmetrize to `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::of(0.5);
        Self::from_fn(|i, j| (self.0[i][j] + self.0[j][i].conj()) * half)
    }

    fn embedding(&self) -> [[T; 8]; 8] {
        let mut e = [[T::zero(); 8]; 8];
        for i in 0..4 {
            for j in 0..4 {
                let z = self.0[i][j];
                e[i][j] = z.re;
                e[i + 4][j + 4] = z.re;
                e[i][j + 4] = -z.im;
                e[i + 4][j] = z.im;
            }
        }
        e
    }

    /// Ascending eigenvalues of the Hermitian part of `self`.
    pub fn hermitian_eigenvalues(&self) -> Result<[T; 4], LinalgError> {
        let (vals, _) = jacobi_eigen(self.hermitian_part().embedding())?;
        let mut sorted = vals;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        Ok([sorted[0], sorted[2], sorted[4], sorted[6]])
    }

    /// `f(H)` for the Hermitian part `H` of `self`, via spectral decomposition.
    ///
    /// Jacobi does not keep the two copies of an eigenvalue in the embedding
    /// exactly paired, which matters for non-Lipschitz `f` (square roots) near
    /// zero; averaging the blocks projects `f(E)` back onto complex-linear form.
    pub fn hermitian_map(&self, f: impl Fn(T) -> T) -> Result<Self, LinalgError> {
        let (vals, vecs) = jacobi_eigen(self.hermitian_part().embedding())?;
        let fv: Vec<T> = vals.iter().map(|&v| f(v)).collect();
        let block = |r: usize, c: usize| {
            (0..8).fold(T::zero(), |acc, k| acc + vecs[r][k] * fv[k] * vecs[c][k])
        };
        let half = T::of(0.5);
        Ok(Self::from_fn(|i, j| {
            let re = (block(i, j) + block(i + 4, j + 4)) * half;
            let im = (block(i + 4, j) - block(i, j + 4)) * half;
            Complex::new(re, im)
        }))
    }
}

impl<T: Scalar> Index<(usize, usize)> for CMat4<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.0[i][j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for CMat4<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.0[i][j]
    }
}

impl<T: Scalar> Mul for CMat4<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| {
            (0..4).fold(Complex::new(T::zero(), T::zero()), |acc, k| acc + self.0[i][k] * rhs.0[k][j])
        })
    }
}

impl<T: Scalar> Add for CMat4<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + rhs.0[i][j])
    }
}

impl<T: Scalar> Sub for CMat4<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] - rhs.0[i][j])
    }
}

/// Cyclic Jacobi for a real symmetric matrix. Returns eigenvalues (unsorted)
/// and the matrix whose columns are the matching eigenvectors.
pub fn jacobi_eigen<T: Scalar, const N: usize>(
    mut a: [[T; N]; N],
) -> Result<([T; N], [[T; N]; N]), LinalgError> {
    let mut v = [[T::zero(); N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let scale = a.iter().flatten().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return Ok(([T::zero(); N], v));
    }
    let tol = T::epsilon() * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..N {
            for q in (p + 1)..N {
                off = off.max(a[p][q].abs());
            }
        }
        if off <= tol {
            let mut vals = [T::zero(); N];
            for i in 0..N {
                vals[i] = a[i][i];
            }
            return Ok((vals, v));
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq.abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(LinalgError::NoConvergence(MAX_SWEEPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = CMat4::<f64>::diagonal([0.4, -1.0, 2.5, 0.0]);
        let ev = m.hermitian_eigenvalues().unwrap();
        assert_eq!(ev, [-1.0, 0.0, 0.4, 2.5]);
    }

    #[test]
    fn complex_hermitian_spectrum() {
        // σ_y ⊗ I has eigenvalues ±1, each twice.
        let z = c(0.0, 0.0);
        let sy = [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]];
        let id = [[c(1.0, 0.0), z], [z, c(1.0, 0.0)]];
        let ev = CMat4::kron(&sy, &id).hermitian_eigenvalues().unwrap();
        for (got, want) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn square_root_squares_back() {
        let v = [c(0.5, 0.1), c(0.2, -0.3), c(0.0, 0.4), c(0.6, 0.0)];
        let w = [c(0.1, 0.0), c(0.7, 0.2), c(-0.3, 0.1), c(0.2, 0.2)];
        let m = CMat4::outer(&v) + CMat4::outer(&w).scale(0.5);
        let root = m.hermitian_map(|x| x.max(0.0).sqrt()).unwrap();
        assert!((root * root).max_abs_diff(&m) < 1e-13);
        assert!(root.hermiticity_defect() < 1e-14);
    }
}
