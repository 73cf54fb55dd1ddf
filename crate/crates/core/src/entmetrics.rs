//! Entanglement verification on a post-selected two-qubit state: analyzer
//! correlations, CHSH, fidelity to `φ⁺`, Wootters concurrence, the `φ⁺`
//! witness and joint outcome tables in the H/V, D/A and R/L bases.
//!
//! Analyzer convention: 0° is H, 90° is V, and the `+` outcome at angle θ
//! projects onto `cos θ |H⟩ + sin θ |V⟩` (`−` onto θ + 90°).

use std::fmt::Write as _;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::csv_float;
use crate::linalg::{CMat4, LinalgError};
use crate::postselect::TwoQubitDensityMatrix;
use crate::scalar::Scalar;

/// Single-qubit polarization state `[⟨H|ψ⟩, ⟨V|ψ⟩]`.
pub type Qubit<T> = [Complex<T>; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting<T: Scalar> {
    pub theta_a: T,
    pub theta_b: T,
}

impl<T: Scalar> AnalyzerSetting<T> {
    pub fn new(theta_a: T, theta_b: T) -> Self {
        Self { theta_a, theta_b }
    }
}

/// The four settings `(0°,22.5°), (0°,67.5°), (45°,22.5°), (45°,67.5°)`.
pub fn default_chsh_settings<T: Scalar>() -> [AnalyzerSetting<T>; 4] {
    let s = |a: f64, b: f64| AnalyzerSetting::new(T::of(a), T::of(b));
    [s(0.0, 22.5), s(0.0, 67.5), s(45.0, 22.5), s(45.0, 67.5)]
}

/// Linear polarizer state at `theta_deg`.
pub fn linear_state<T: Scalar>(theta_deg: T) -> Qubit<T> {
    let t = theta_deg.to_radians();
    [Complex::new(t.cos(), T::zero()), Complex::new(t.sin(), T::zero())]
}

/// Measurement basis for one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    HV,
    DA,
    RL,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::HV, Basis::DA, Basis::RL];

    /// The `+` and `−` states: H/V, D = (H+V)/√2 / A = (H−V)/√2, R = (H+iV)/√2 / L = (H−iV)/√2.
    pub fn states<T: Scalar>(self) -> [Qubit<T>; 2] {
        let o = Complex::new(T::one(), T::zero());
        let z = Complex::new(T::zero(), T::zero());
        let h = T::FRAC_1_SQRT_2();
        match self {
            Basis::HV => [[o, z], [z, o]],
            Basis::DA => [[o * h, o * h], [o * h, -o * h]],
            Basis::RL => [[o * h, Complex::new(T::zero(), h)], [o * h, Complex::new(T::zero(), -h)]],
        }
    }

    pub fn labels(self) -> [char; 2] {
        match self {
            Basis::HV => ['H', 'V'],
            Basis::DA => ['D', 'A'],
            Basis::RL => ['R', 'L'],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Basis::HV => "HV",
            Basis::DA => "DA",
            Basis::RL => "RL",
        }
    }
}

/// `|a⟩ ⊗ |b⟩` in the `HH, HV, VH, VV` ordering.
pub fn product_vector<T: Scalar>(a: &Qubit<T>, b: &Qubit<T>) -> [Complex<T>; 4] {
    [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
}

/// Outcome probabilities `(++, +−, −+, −−)` for two single-qubit projective measurements.
pub fn outcome_probabilities<T: Scalar>(rho: &TwoQubitDensityMatrix<T>, a: [Qubit<T>; 2], b: [Qubit<T>; 2]) -> [T; 4] {
    let mut p = [T::zero(); 4];
    for i in 0..2 {
        for j in 0..2 {
            let v = product_vector(&a[i], &b[j]);
            p[2 * i + j] = rho.entries.expectation(&v).re.max(T::zero());
        }
    }
    p
}

pub fn analyzer_probabilities<T: Scalar>(rho: &TwoQubitDensityMatrix<T>, s: AnalyzerSetting<T>) -> [T; 4] {
    let quarter = T::of(90.0);
    outcome_probabilities(
        rho,
        [linear_state(s.theta_a), linear_state(s.theta_a + quarter)],
        [linear_state(s.theta_b), linear_state(s.theta_b + quarter)],
    )
}

/// `E = (N₊₊ − N₊₋ − N₋₊ + N₋₋) / (N₊₊ + N₊₋ + N₋₊ + N₋₋)` with exact probabilities in place of counts.
pub fn correlation<T: Scalar>(rho: &TwoQubitDensityMatrix<T>, s: AnalyzerSetting<T>) -> T {
    let p = analyzer_probabilities(rho, s);
    let total = p[0] + p[1] + p[2] + p[3];
    if total == T::zero() {
        return T::zero();
    }
    (p[0] - p[1] - p[2] + p[3]) / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshReport<T: Scalar> {
    pub settings: [AnalyzerSetting<T>; 4],
    pub e_values: [T; 4],
    pub s_value: T,
}

/// `S = |E₁ − E₂ + E₃ + E₄|` over the four given settings.
pub fn chsh_with<T: Scalar>(rho: &TwoQubitDensityMatrix<T>, settings: [AnalyzerSetting<T>; 4]) -> ChshReport<T> {
    let e = settings.map(|s| correlation(rho, s));
    ChshReport { settings, e_values: e, s_value: (e[0] - e[1] + e[2] + e[3]).abs() }
}

pub fn chsh<T: Scalar>(rho: &TwoQubitDensityMatrix<T>) -> ChshReport<T> {
    chsh_with(rho, default_chsh_settings())
}

/// `⟨φ⁺|ρ|φ⁺⟩`
pub fn fidelity_phi_plus<T: Scalar>(rho: &TwoQubitDensityMatrix<T>) -> T {
    let half = T::of(0.5);
    (rho.get(0, 0).re + rho.get(3, 3).re + rho.get(0, 3).re + rho.get(3, 0).re) * half
}

/// `Tr[(½I − |φ⁺⟩⟨φ⁺|) ρ]`; negative values certify entanglement.
pub fn witness_value<T: Scalar>(rho: &TwoQubitDensityMatrix<T>) -> T {
    T::of(0.5) * rho.trace() - fidelity_phi_plus(rho)
}

/// Eigenvalues below this are treated as zero before square roots.
const EIGEN_CLAMP: f64 = 1e-10;

/// Wootters concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)`.
///
/// The λᵢ are the square roots of the eigenvalues of the Hermitian matrix
/// `√ρ ρ̃ √ρ` with `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`, which share their spectrum with
/// `ρ ρ̃`.
pub fn concurrence<T: Scalar>(rho: &TwoQubitDensityMatrix<T>) -> Result<T, LinalgError> {
    let clamp = T::of(EIGEN_CLAMP);
    let root = rho.entries.hermitian_map(|x| if x < clamp { T::zero() } else { x.sqrt() })?;
    let m = root * spin_flip(&rho.entries) * root;
    let ev = m.hermitian_eigenvalues()?;
    let l = ev.map(|x| if x < clamp { T::zero() } else { x.sqrt() });
    // ascending order: l[3] is the largest
    Ok((l[3] - l[2] - l[1] - l[0]).max(T::zero()).min(T::one()))
}

/// `(σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`
pub fn spin_flip<T: Scalar>(m: &CMat4<T>) -> CMat4<T> {
    let z = Complex::new(T::zero(), T::zero());
    let i = Complex::new(T::zero(), T::one());
    let sy = [[z, -i], [i, z]];
    let yy = CMat4::kron(&sy, &sy);
    yy * m.conj() * yy
}

/// Reduced single-qubit state: `which = 0` keeps Alice, `1` keeps Bob.
pub fn partial_trace<T: Scalar>(rho: &TwoQubitDensityMatrix<T>, which: usize) -> [[Complex<T>; 2]; 2] {
    let mut r = [[Complex::new(T::zero(), T::zero()); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                r[i][j] = r[i][j]
                    + if which == 0 { rho.get(2 * i + k, 2 * j + k) } else { rho.get(2 * k + i, 2 * k + j) };
            }
        }
    }
    r
}

/// Relative phase δ of `|HH⟩ + e^{iδ}|VV⟩`, read off the `VV,HH` coherence.
pub fn relative_phase<T: Scalar>(rho: &TwoQubitDensityMatrix<T>) -> T {
    rho.get(3, 0).arg()
}

/// `½ Σ|eigenvalues(ρ − σ)|`
pub fn trace_distance<T: Scalar>(a: &TwoQubitDensityMatrix<T>, b: &TwoQubitDensityMatrix<T>) -> Result<T, LinalgError> {
    let ev = (a.entries - b.entries).hermitian_eigenvalues()?;
    Ok(ev.iter().fold(T::zero(), |s, x| s + x.abs()) * T::of(0.5))
}

/// Joint outcome table; `probs[i][j]` is Alice outcome `i`, Bob outcome `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable<T: Scalar> {
    pub bases: (Basis, Basis),
    pub probs: [[T; 2]; 2],
}

impl<T: Scalar> JointTable<T> {
    pub fn label(&self, i: usize, j: usize) -> String {
        format!("{}{}", self.bases.0.labels()[i], self.bases.1.labels()[j])
    }

    pub fn flat(&self) -> [T; 4] {
        [self.probs[0][0], self.probs[0][1], self.probs[1][0], self.probs[1][1]]
    }
}

pub fn joint_probabilities<T: Scalar>(rho: &TwoQubitDensityMatrix<T>, alice: Basis, bob: Basis) -> JointTable<T> {
    let p = outcome_probabilities(rho, alice.states(), bob.states());
    JointTable { bases: (alice, bob), probs: [[p[0], p[1]], [p[2], p[3]]] }
}

/// CSV of `E(0°, θ_B)` and `E(45°, θ_B)` over `theta_b_deg`.
pub fn correlation_sweep_csv<T: Scalar>(rho: &TwoQubitDensityMatrix<T>, theta_b_deg: &[T]) -> String {
    let mut out = String::from("theta_b_deg,E_thetaA0,E_thetaA45\n");
    for &tb in theta_b_deg {
        let e0 = correlation(rho, AnalyzerSetting::new(T::zero(), tb));
        let e45 = correlation(rho, AnalyzerSetting::new(T::of(45.0), tb));
        let _ = writeln!(
            out,
            "{},{},{}",
            csv_float(tb.to_f64_lossless()),
            csv_float(e0.to_f64_lossless()),
            csv_float(e45.to_f64_lossless())
        );
    }
    out
}
