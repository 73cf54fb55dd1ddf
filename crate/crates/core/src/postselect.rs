//! Detection patterns and the conditional two-qubit state of the retained paths.
//!
//! Post-selection keeps the basis states compatible with every detector
//! constraint. Kept terms that agree on everything outside the two retained
//! paths add coherently; distinct configurations elsewhere (an undetected path,
//! or different photon numbers behind a bucket detector) are orthogonal and
//! therefore add incoherently. This is the partial trace over every
//! non-retained mode.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{FockBasisState, KetExpansion, Polarization};
use crate::linalg::{CMat4, LinalgError};
use crate::scalar::Scalar;

pub const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PostSelectError {
    #[error("no term of the state survives the detection pattern")]
    EmptyPostSelection,
    #[error("detection pattern must mark exactly two paths as `one` (the retained qubits), found {0}")]
    RetainedPaths(usize),
}

/// What a detector on one path requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorConstraint {
    /// Exactly one photon of either polarization. Marks a retained qubit path.
    ExactlyOneAny,
    /// Exactly one photon, and it has this polarization.
    ExactlyOne(Polarization),
    /// Polarizer plus a non-number-resolving detector: at least one photon of this polarization.
    BucketAtLeastOne(Polarization),
    Unconstrained,
}

impl DetectorConstraint {
    /// Minimum number of photons a passing configuration has on the path.
    pub fn photons_required(self) -> u32 {
        match self {
            DetectorConstraint::Unconstrained => 0,
            _ => 1,
        }
    }

    fn violation(self, path: u32, basis: &FockBasisState) -> Option<String> {
        let (nh, nv) = basis.path_photons(path);
        let total = nh + nv;
        match self {
            DetectorConstraint::Unconstrained => None,
            DetectorConstraint::ExactlyOneAny | DetectorConstraint::ExactlyOne(_) if total == 0 => {
                Some(format!("path {path} empty"))
            }
            DetectorConstraint::ExactlyOneAny | DetectorConstraint::ExactlyOne(_) if total > 1 => {
                Some(format!("path {path} has {total} photons"))
            }
            DetectorConstraint::ExactlyOneAny => None,
            DetectorConstraint::ExactlyOne(pol) => {
                let have = if nh == 1 { Polarization::H } else { Polarization::V };
                (have != pol).then(|| format!("path {path} photon is {have}, expected {pol}"))
            }
            DetectorConstraint::BucketAtLeastOne(_) if total == 0 => Some(format!("path {path} empty")),
            DetectorConstraint::BucketAtLeastOne(pol) => {
                let n = if pol == Polarization::H { nh } else { nv };
                (n == 0).then(|| format!("path {path} has no {pol} photon"))
            }
        }
    }
}

impl fmt::Display for DetectorConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorConstraint::ExactlyOneAny => f.write_str("one"),
            DetectorConstraint::ExactlyOne(p) => write!(f, "one:{p}"),
            DetectorConstraint::BucketAtLeastOne(p) => write!(f, "bucket:{p}"),
            DetectorConstraint::Unconstrained => f.write_str("any"),
        }
    }
}

/// Per-path detector constraints. Paths not listed are unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectionPattern {
    constraints: BTreeMap<u32, DetectorConstraint>,
}

impl DetectionPattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, path: u32, c: DetectorConstraint) -> Self {
        self.set(path, c);
        self
    }

    pub fn set(&mut self, path: u32, c: DetectorConstraint) {
        if c == DetectorConstraint::Unconstrained {
            self.constraints.remove(&path);
        } else {
            self.constraints.insert(path, c);
        }
    }

    pub fn get(&self, path: u32) -> DetectorConstraint {
        self.constraints.get(&path).copied().unwrap_or(DetectorConstraint::Unconstrained)
    }

    /// Constrained paths in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, DetectorConstraint)> + '_ {
        self.constraints.iter().map(|(&p, &c)| (p, c))
    }

    pub fn photons_required(&self) -> u32 {
        self.constraints.values().map(|c| c.photons_required()).sum()
    }

    /// `(alice, bob)`: the two `one` paths, lower index first.
    pub fn retained_paths(&self) -> Result<(u32, u32), PostSelectError> {
        let kept: Vec<u32> = self
            .constraints
            .iter()
            .filter(|(_, c)| **c == DetectorConstraint::ExactlyOneAny)
            .map(|(&p, _)| p)
            .collect();
        match kept.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(PostSelectError::RetainedPaths(kept.len())),
        }
    }

    /// All violated constraints for `basis`; empty when it is kept.
    pub fn violations(&self, basis: &FockBasisState) -> Vec<String> {
        self.constraints.iter().filter_map(|(&p, c)| c.violation(p, basis)).collect()
    }

    pub fn accepts(&self, basis: &FockBasisState) -> bool {
        self.constraints.iter().all(|(&p, c)| c.violation(p, basis).is_none())
    }
}

/// Post-selected polarization state of (Alice, Bob) in the basis `HH, HV, VH, VV`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitDensityMatrix<T: Scalar> {
    pub entries: CMat4<T>,
    /// Unnormalized post-selection probability in raw ε-power units.
    pub success_weight: T,
}

impl<T: Scalar> TwoQubitDensityMatrix<T> {
    /// Normalizes `m` to unit trace; `success_weight` records the original trace.
    pub fn from_unnormalized(m: CMat4<T>) -> Self {
        let tr = m.trace().re;
        Self { entries: m.scale(T::one() / tr), success_weight: tr }
    }

    pub fn from_pure(v: [Complex<T>; 4]) -> Self {
        Self::from_unnormalized(CMat4::outer(&v))
    }

    pub fn phi_plus() -> Self {
        let a = Complex::new(T::FRAC_1_SQRT_2(), T::zero());
        let z = Complex::new(T::zero(), T::zero());
        Self::from_pure([a, z, z, a])
    }

    pub fn maximally_mixed() -> Self {
        Self::from_unnormalized(CMat4::identity())
    }

    /// `|a b⟩`
    pub fn product(a: Polarization, b: Polarization) -> Self {
        let mut v = [Complex::new(T::zero(), T::zero()); 4];
        v[2 * a.index() + b.index()] = Complex::new(T::one(), T::zero());
        Self::from_pure(v)
    }

    /// Convex mixture `Σ wᵢ ρᵢ` (weights need not be normalized).
    pub fn mixture(parts: &[(T, &Self)]) -> Self {
        let m = parts.iter().fold(CMat4::zeros(), |acc, (w, r)| acc + r.entries.scale(*w));
        Self::from_unnormalized(m)
    }

    /// Scales the `HH`–`VV` coherence by `gamma`.
    pub fn dephased(&self, gamma: T) -> Self {
        let mut out = self.clone();
        out.entries[(0, 3)] = self.entries[(0, 3)] * gamma;
        out.entries[(3, 0)] = self.entries[(3, 0)] * gamma;
        out
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> T {
        self.entries.trace().re
    }

    pub fn eigenvalues(&self) -> Result<[T; 4], LinalgError> {
        self.entries.hermitian_eigenvalues()
    }

    /// Checks Hermiticity, positivity and unit trace at the given tolerances.
    pub fn check(&self, herm_tol: T, psd_tol: T, trace_tol: T) -> Result<(), String> {
        let h = self.entries.hermiticity_defect();
        if h > herm_tol {
            return Err(format!("not Hermitian: defect {h}"));
        }
        let min = self.eigenvalues().map_err(|e| e.to_string())?[0];
        if min < -psd_tol {
            return Err(format!("not PSD: min eigenvalue {min}"));
        }
        let t = (self.trace() - T::one()).abs();
        if t > trace_tol {
            return Err(format!("trace off by {t}"));
        }
        Ok(())
    }

    pub fn to_record(&self) -> DensityRecord {
        let part = |f: fn(Complex<T>) -> T| {
            (0..4).map(|i| (0..4).map(|j| f(self.entries[(i, j)]).to_f64_lossless()).collect()).collect()
        };
        DensityRecord {
            basis: BASIS_LABELS.iter().map(|s| s.to_string()).collect(),
            re: part(|z| z.re),
            im: part(|z| z.im),
            weight: self.success_weight.to_f64_lossless(),
        }
    }

    pub fn from_record(r: &DensityRecord) -> Self {
        let entries = CMat4::from_fn(|i, j| Complex::new(T::of(r.re[i][j]), T::of(r.im[i][j])));
        Self { entries, success_weight: T::of(r.weight) }
    }
}

/// JSON shape of a [`TwoQubitDensityMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub basis: Vec<String>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    pub weight: f64,
}

impl<T: Scalar> Serialize for TwoQubitDensityMatrix<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for TwoQubitDensityMatrix<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Self::from_record(&DensityRecord::deserialize(d)?))
    }
}

/// Projects `state` onto `pattern` and returns the normalized state of the retained paths.
pub fn postselect_state<T: Scalar>(
    state: &KetExpansion<T>,
    pattern: &DetectionPattern,
) -> Result<TwoQubitDensityMatrix<T>, PostSelectError> {
    let (alice, bob) = pattern.retained_paths()?;
    let zero = Complex::new(T::zero(), T::zero());
    let mut branches: BTreeMap<FockBasisState, [Complex<T>; 4]> = BTreeMap::new();
    for (basis, amp) in state.collapsed() {
        if !pattern.accepts(&basis) {
            continue;
        }
        // ExactlyOneAny guarantees one photon on each retained path.
        let a = usize::from(basis.path_photons(alice).1 == 1);
        let b = usize::from(basis.path_photons(bob).1 == 1);
        let env = basis.restricted(|m| m.path != alice && m.path != bob);
        let v = branches.entry(env).or_insert([zero; 4]);
        v[2 * a + b] = v[2 * a + b] + amp;
    }
    let rho = branches.values().fold(CMat4::zeros(), |acc, v| acc + CMat4::outer(v));
    if !(rho.trace().re > T::zero()) {
        return Err(PostSelectError::EmptyPostSelection);
    }
    Ok(TwoQubitDensityMatrix::from_unnormalized(rho))
}

/// Classification of one term for audit output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermVerdict {
    pub basis: String,
    pub order: u32,
    pub re: f64,
    pub im: f64,
    pub kept: bool,
    pub reason: String,
}

/// Kept/discarded verdict for every `(basis, order)` entry of `state`.
pub fn term_report<T: Scalar>(state: &KetExpansion<T>, pattern: &DetectionPattern) -> Vec<TermVerdict> {
    state
        .terms()
        .map(|t| {
            let v = pattern.violations(&t.basis);
            TermVerdict {
                basis: t.basis.to_string(),
                order: t.order,
                re: t.amplitude.re.to_f64_lossless(),
                im: t.amplitude.im.to_f64_lossless(),
                kept: v.is_empty(),
                reason: if v.is_empty() { "all constraints satisfied".to_string() } else { v.join("; ") },
            }
        })
        .collect()
}
