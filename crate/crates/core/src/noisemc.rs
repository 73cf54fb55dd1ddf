//! Stochastic layer: Poisson coincidence counts, the correlation estimator and
//! its error bar, phase scans with visibility fits, and the pump-ratio
//! calibration from pair rates.
//!
//! Everything here is `f64`. Per-trial seeds are `base ^ i`; within one trial
//! each setting draws from its own ChaCha stream, so results do not depend on
//! thread scheduling.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csv_float;
use crate::elements::{run_pipeline, Element, ElementError};
use crate::entmetrics::{analyzer_probabilities, joint_probabilities, AnalyzerSetting, Basis};
use crate::expdsl::ExperimentSpec;
use crate::postselect::{postselect_state, PostSelectError, TwoQubitDensityMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("record has no counts")]
    EmptyRecord,
    #[error("experiment has no phase element to scan")]
    NoPhaseElement,
    #[error("fit failed: {0}")]
    FitError(String),
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("mean_total must be finite and non-negative, got {0}")]
    MeanTotal(f64),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    PostSelect(#[from] PostSelectError),
}

/// `base ^ i`
pub fn derive_seed(base: u64, i: u64) -> u64 {
    base ^ i
}

/// What was measured for one count record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSetting {
    /// Linear analyzers at `theta_a`, `theta_b` degrees.
    Analyzers(AnalyzerSetting<f64>),
    /// Projective bases for Alice and Bob.
    Bases(Basis, Basis),
}

impl MeasurementSetting {
    pub fn label(&self) -> String {
        match self {
            MeasurementSetting::Analyzers(s) => format!("A{}B{}", s.theta_a, s.theta_b),
            MeasurementSetting::Bases(a, b) => format!("{}x{}", a.name(), b.name()),
        }
    }

    /// Outcome labels in `(++, +−, −+, −−)` order.
    pub fn outcome_labels(&self) -> [String; 4] {
        match self {
            MeasurementSetting::Analyzers(_) => ["++", "+-", "-+", "--"].map(String::from),
            MeasurementSetting::Bases(a, b) => {
                let (a, b) = (a.labels(), b.labels());
                [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(i, j)| format!("{}{}", a[i], b[j]))
            }
        }
    }

    pub fn probabilities(&self, rho: &TwoQubitDensityMatrix<f64>) -> [f64; 4] {
        match self {
            MeasurementSetting::Analyzers(s) => analyzer_probabilities(rho, *s),
            MeasurementSetting::Bases(a, b) => joint_probabilities(rho, *a, *b).flat(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: MeasurementSetting,
    /// `N₊₊, N₊₋, N₋₊, N₋₋`
    pub counts: [u64; 4],
    pub duration_s: f64,
    pub seed: u64,
    pub stream: u64,
}

impl CountRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn draw(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only rejects non-positive or non-finite means, both excluded above.
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Poisson counts with means `probs[k] * mean_total` on stream `stream` of `seed`.
pub fn simulate_counts_stream(
    probs: [f64; 4],
    setting: MeasurementSetting,
    mean_total: f64,
    seed: u64,
    stream: u64,
) -> Result<CountRecord, NoiseError> {
    if !(mean_total.is_finite() && mean_total >= 0.0) {
        return Err(NoiseError::MeanTotal(mean_total));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let counts = probs.map(|p| draw(&mut rng, p.max(0.0) * mean_total));
    Ok(CountRecord { setting, counts, duration_s: 1.0, seed, stream })
}

pub fn simulate_counts(
    probs: [f64; 4],
    setting: MeasurementSetting,
    mean_total: f64,
    seed: u64,
) -> Result<CountRecord, NoiseError> {
    simulate_counts_stream(probs, setting, mean_total, seed, 0)
}

/// Counts for `setting` measured on `rho`.
pub fn simulate_setting(
    rho: &TwoQubitDensityMatrix<f64>,
    setting: MeasurementSetting,
    mean_total: f64,
    seed: u64,
    stream: u64,
) -> Result<CountRecord, NoiseError> {
    simulate_counts_stream(setting.probabilities(rho), setting, mean_total, seed, stream)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub e: f64,
    pub sigma: f64,
    /// Some outcome had zero counts, so the propagated variance is incomplete.
    pub degenerate: bool,
}

/// `E = (N₊₊ − N₊₋ − N₋₊ + N₋₋)/T` with first-order Poisson error propagation.
///
/// `Var E = Σ Nᵢⱼ (sᵢⱼ − E)² / T²`, `sᵢⱼ = ±1`.
pub fn estimate_correlation(record: &CountRecord) -> Result<CorrelationEstimate, NoiseError> {
    let n = record.counts.map(|c| c as f64);
    let total: f64 = n.iter().sum();
    if total == 0.0 {
        return Err(NoiseError::EmptyRecord);
    }
    let sign = [1.0, -1.0, -1.0, 1.0];
    let e = (n[0] - n[1] - n[2] + n[3]) / total;
    let var: f64 = n.iter().zip(sign).map(|(&c, s)| c * (s - e) * (s - e)).sum::<f64>() / (total * total);
    Ok(CorrelationEstimate { e, sigma: var.max(0.0).sqrt(), degenerate: record.counts.contains(&0) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledChsh {
    pub records: Vec<CountRecord>,
    pub estimates: Vec<CorrelationEstimate>,
    pub s_value: f64,
    pub sigma: f64,
}

/// `S` from simulated counts; setting `i` uses seed `seed ^ i`.
pub fn sampled_chsh(
    rho: &TwoQubitDensityMatrix<f64>,
    settings: [AnalyzerSetting<f64>; 4],
    shots_per_setting: f64,
    seed: u64,
) -> Result<SampledChsh, NoiseError> {
    let records = settings
        .iter()
        .enumerate()
        .map(|(i, s)| simulate_setting(rho, MeasurementSetting::Analyzers(*s), shots_per_setting, derive_seed(seed, i as u64), 0))
        .collect::<Result<Vec<_>, _>>()?;
    let estimates = records.iter().map(estimate_correlation).collect::<Result<Vec<_>, _>>()?;
    let e: Vec<f64> = estimates.iter().map(|x| x.e).collect();
    let s_value = (e[0] - e[1] + e[2] + e[3]).abs();
    let sigma = estimates.iter().map(|x| x.sigma * x.sigma).sum::<f64>().sqrt();
    Ok(SampledChsh { records, estimates, s_value, sigma })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub phi: f64,
    /// Joint probabilities in `(++, +−, −+, −−)` order of the scan bases.
    pub probs: [f64; 4],
    pub counts: Option<[u64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScan {
    pub bases: (Basis, Basis),
    pub rows: Vec<ScanRow>,
}

impl PhaseScan {
    fn column_suffixes(&self) -> [String; 4] {
        MeasurementSetting::Bases(self.bases.0, self.bases.1).outcome_labels().map(|s| s.to_lowercase())
    }

    /// `phi_rad,p_dd,p_da,p_ad,p_aa[,n_dd,n_da,n_ad,n_aa]`
    pub fn to_csv(&self) -> String {
        let sfx = self.column_suffixes();
        let with_counts = self.rows.iter().any(|r| r.counts.is_some());
        let mut out = String::from("phi_rad");
        for s in &sfx {
            let _ = write!(out, ",p_{s}");
        }
        if with_counts {
            for s in &sfx {
                let _ = write!(out, ",n_{s}");
            }
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_float(r.phi));
            for p in r.probs {
                out.push(',');
                out.push_str(&csv_float(p));
            }
            if with_counts {
                for c in r.counts.unwrap_or([0; 4]) {
                    let _ = write!(out, ",{c}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn phis(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.phi).collect()
    }

    /// Probability column `k` (0 = `++`).
    pub fn prob_column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.probs[k]).collect()
    }

    /// Count column `k`, if counts were simulated.
    pub fn count_column(&self, k: usize) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.counts.map(|c| c[k] as f64)).collect()
    }
}

/// Sweeps the first phase element of `spec` over `phi_grid`.
///
/// Each point is post-selected, dephased by `spec.gamma` and measured in
/// `bases`. With `mean_total`, point `i` also gets Poisson counts from seed `seed ^ i`.
pub fn phase_scan(
    spec: &ExperimentSpec<f64>,
    phi_grid: &[f64],
    bases: (Basis, Basis),
    mean_total: Option<f64>,
    seed: u64,
) -> Result<PhaseScan, NoiseError> {
    let idx = spec.first_phase_index().ok_or(NoiseError::NoPhaseElement)?;
    let rows = phi_grid
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| {
            let mut elements = spec.elements.clone();
            if let Element::Phase(p) = &mut elements[idx] {
                p.phi = phi;
            }
            let state = run_pipeline(&elements, spec.max_order)?;
            let rho = postselect_state(&state, &spec.detection)?.dephased(spec.gamma);
            let probs = joint_probabilities(&rho, bases.0, bases.1).flat();
            let counts = match mean_total {
                Some(m) => Some(
                    simulate_counts(probs, MeasurementSetting::Bases(bases.0, bases.1), m, derive_seed(seed, i as u64))?
                        .counts,
                ),
                None => None,
            };
            Ok(ScanRow { phi, probs, counts })
        })
        .collect::<Result<Vec<_>, NoiseError>>()?;
    Ok(PhaseScan { bases, rows })
}

/// `n` equally spaced points on `[from, to]`.
pub fn phase_grid(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub visibility: f64,
    /// Phase of the fringe maximum, in `(−π, π]`.
    pub delta0: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub rms_residual: f64,
}

/// Least-squares fit of `a + b cos(φ − φ₀)` via the linear model `a + c cos φ + s sin φ`.
pub fn fit_visibility(phis: &[f64], values: &[f64]) -> Result<VisibilityFit, NoiseError> {
    if phis.len() != values.len() {
        return Err(NoiseError::FitError(format!("{} phases but {} values", phis.len(), values.len())));
    }
    if phis.len() < 5 {
        return Err(NoiseError::FitError(format!("need at least 5 points, got {}", phis.len())));
    }
    let (lo, hi) = phis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &p| (l.min(p), h.max(p)));
    if hi - lo < std::f64::consts::PI {
        return Err(NoiseError::FitError(format!("phases span {:.4} rad, need at least π", hi - lo)));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.iter().all(|&v| v == mean) {
        return Err(NoiseError::FitError("constant data".into()));
    }

    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&p, &y) in phis.iter().zip(values) {
        let row = [1.0, p.cos(), p.sin()];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [a, c, s] = solve3(ata, aty).ok_or_else(|| NoiseError::FitError("singular normal equations".into()))?;
    let amplitude = c.hypot(s);
    if a <= 0.0 {
        return Err(NoiseError::FitError(format!("non-positive offset {a}")));
    }
    let rss: f64 = phis.iter().zip(values).map(|(&p, &y)| (y - a - c * p.cos() - s * p.sin()).powi(2)).sum();
    Ok(VisibilityFit {
        visibility: amplitude / a,
        delta0: s.atan2(c),
        offset: a,
        amplitude,
        rms_residual: (rss / phis.len() as f64).sqrt(),
    })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for k in col..3 {
                m[r][k] -= f * m[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let tail: f64 = (r + 1..3).map(|k| m[r][k] * x[k]).sum();
        x[r] = (b[r] - tail) / m[r][r];
    }
    Some(x)
}

/// Two-photon coincidence rates of sources I–IV, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCalibration {
    pub pair_rates_hz: [f64; 4],
}

impl RateCalibration {
    pub fn new(pair_rates_hz: [f64; 4]) -> Result<Self, NoiseError> {
        if let Some(r) = pair_rates_hz.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(NoiseError::Calibration(format!("rate {r} is not positive")));
        }
        Ok(Self { pair_rates_hz })
    }

    /// `(CC₂·CC₃ / (CC₁·CC₄))^{1/4}`
    pub fn efficiency_ratio(&self) -> f64 {
        let [c1, c2, c3, c4] = self.pair_rates_hz;
        ((c2 * c3) / (c1 * c4)).powf(0.25)
    }
}
