//! Dense reference for a single pair source: the full matrix exponential
//! `exp(ε â†_s â†_i − ε* â_s â_i)` on the two source modes, truncated at a
//! per-mode photon cutoff and summed as a Taylor series. Used to check the
//! linearized squeezer; it is independent of [`super::apply_squeezer`].

use std::collections::BTreeMap;

use num_complex::Complex;
use thiserror::Error;

use super::SourceSpec;
use crate::fock::{FockBasisState, KetExpansion, ModeLabel, MAX_PHOTONS_PER_MODE};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("cutoff {0} exceeds the per-mode photon cap")]
    CutoffTooLarge(u32),
    #[error("input term has {photons} photons in mode {mode}, above the oracle cutoff")]
    OutsideCutoff { mode: ModeLabel, photons: u32 },
}

#[derive(Debug, Clone)]
pub struct DenseSqueezer<T: Scalar> {
    signal: ModeLabel,
    idler: ModeLabel,
    cutoff: u32,
    matrix: Vec<Vec<Complex<T>>>,
}

impl<T: Scalar> DenseSqueezer<T> {
    pub fn new(src: &SourceSpec<T>, cutoff: u32) -> Result<Self, OracleError> {
        if cutoff > MAX_PHOTONS_PER_MODE {
            return Err(OracleError::CutoffTooLarge(cutoff));
        }
        let side = cutoff as usize + 1;
        let dim = side * side;
        let eps = src.epsilon();
        let zero = Complex::new(T::zero(), T::zero());
        let idx = |ns: usize, ni: usize| ns * side + ni;

        let mut gen = vec![vec![zero; dim]; dim];
        for ns in 0..cutoff as usize {
            for ni in 0..cutoff as usize {
                let w = T::of(((ns + 1) as f64 * (ni + 1) as f64).sqrt());
                gen[idx(ns + 1, ni + 1)][idx(ns, ni)] = eps * w;
                gen[idx(ns, ni)][idx(ns + 1, ni + 1)] = -(eps.conj() * w);
            }
        }

        let mut sum = vec![vec![zero; dim]; dim];
        let mut term = vec![vec![zero; dim]; dim];
        for k in 0..dim {
            sum[k][k] = Complex::new(T::one(), T::zero());
            term[k][k] = Complex::new(T::one(), T::zero());
        }
        for k in 1..200 {
            let mut next = vec![vec![zero; dim]; dim];
            for r in 0..dim {
                for m in 0..dim {
                    let g = gen[r][m];
                    if g == zero {
                        continue;
                    }
                    for c in 0..dim {
                        next[r][c] = next[r][c] + g * term[m][c];
                    }
                }
            }
            let inv_k = T::one() / T::of(k as f64);
            let mut biggest = T::zero();
            for r in 0..dim {
                for c in 0..dim {
                    next[r][c] = next[r][c] * inv_k;
                    sum[r][c] = sum[r][c] + next[r][c];
                    biggest = biggest.max(next[r][c].norm());
                }
            }
            term = next;
            if biggest < T::epsilon() * T::of(1e-3) {
                break;
            }
        }

        Ok(Self { signal: src.signal, idler: src.idler, cutoff, matrix: sum })
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    /// `⟨out_s, out_i| S |in_s, in_i⟩`
    pub fn element(&self, out: (u32, u32), inp: (u32, u32)) -> Complex<T> {
        let side = self.cutoff as usize + 1;
        self.matrix[out.0 as usize * side + out.1 as usize][inp.0 as usize * side + inp.1 as usize]
    }

    /// Applies the dense operator to an arbitrary multi-mode expansion.
    ///
    /// Orders are summed on input; every output term is tagged order 0.
    pub fn apply(&self, state: &KetExpansion<T>) -> Result<KetExpansion<T>, OracleError> {
        let side = self.cutoff as usize + 1;
        let zero = Complex::new(T::zero(), T::zero());
        let mut groups: BTreeMap<FockBasisState, Vec<Complex<T>>> = BTreeMap::new();
        for (basis, amp) in state.collapsed() {
            let ns = basis.occupation(self.signal);
            let ni = basis.occupation(self.idler);
            for (mode, n) in [(self.signal, ns), (self.idler, ni)] {
                if n > self.cutoff {
                    return Err(OracleError::OutsideCutoff { mode, photons: n });
                }
            }
            let rest = basis.restricted(|m| m != self.signal && m != self.idler);
            let v = groups.entry(rest).or_insert_with(|| vec![zero; side * side]);
            v[ns as usize * side + ni as usize] = v[ns as usize * side + ni as usize] + amp;
        }

        let mut out = state.empty_like();
        for (rest, v) in groups {
            for (r, row) in self.matrix.iter().enumerate() {
                let y = row.iter().zip(&v).fold(zero, |acc, (m, x)| acc + *m * *x);
                if y == zero {
                    continue;
                }
                let basis = rest
                    .with_occupation(self.signal, (r / side) as u32)
                    .with_occupation(self.idler, (r % side) as u32);
                out.accumulate(basis, 0, y);
            }
        }
        Ok(out.pruned())
    }
}
