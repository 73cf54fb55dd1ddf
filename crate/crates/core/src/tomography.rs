//! Two-qubit state tomography over the nine basis pairs `{HV, DA, RL}²`:
//! simulated counts, maximum-likelihood reconstruction and Monte Carlo error
//! bars. Linear inversion is kept only as a diagnostic.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entmetrics::{concurrence, fidelity_phi_plus, product_vector, witness_value, Basis};
use crate::linalg::{CMat4, LinalgError};
use crate::noisemc::{derive_seed, simulate_setting, CountRecord, MeasurementSetting, NoiseError};
use crate::postselect::TwoQubitDensityMatrix;

type Rho = TwoQubitDensityMatrix<f64>;
type C = Complex<f64>;

pub const MAX_ITERATIONS: usize = 10_000;
/// Stop once no state can improve the log-likelihood per count by more than this.
pub const GAIN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TomoError {
    #[error("no counts recorded")]
    EmptyData,
    #[error("basis pair {0} has no data")]
    MissingBasis(String),
    #[error("record with setting {0} is not a basis measurement")]
    NotBasisSetting(String),
    #[error("at least 2 Monte Carlo trials are needed for error bars, got {0}")]
    TooFewTrials(usize),
    #[error("shots_per_setting must be positive")]
    NoShots,
    #[error("no iterate met the tolerance within {} iterations", .0.iterations)]
    ConvergenceError(Box<MleOutcome>),
    #[error("all {0} Monte Carlo trials failed")]
    AllTrialsFailed(usize),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// All nine `(Alice, Bob)` basis pairs.
pub fn all_basis_pairs() -> Vec<(Basis, Basis)> {
    Basis::ALL.iter().flat_map(|&a| Basis::ALL.iter().map(move |&b| (a, b))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoSettings {
    pub bases: Vec<(Basis, Basis)>,
    /// Mean coincidences per basis pair.
    pub shots_per_setting: u64,
    pub mc_trials: usize,
    pub seed: u64,
}

impl TomoSettings {
    pub fn new(shots_per_setting: u64, mc_trials: usize, seed: u64) -> Self {
        Self { bases: all_basis_pairs(), shots_per_setting, mc_trials, seed }
    }
}

/// Counts for every basis pair; pair `k` draws from stream `k` of `seed`.
pub fn tomo_measure_seeded(rho: &Rho, settings: &TomoSettings, seed: u64) -> Result<Vec<CountRecord>, TomoError> {
    if settings.shots_per_setting == 0 {
        return Err(TomoError::NoShots);
    }
    settings
        .bases
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            Ok(simulate_setting(rho, MeasurementSetting::Bases(a, b), settings.shots_per_setting as f64, seed, k as u64)?)
        })
        .collect()
}

pub fn tomo_measure(rho: &Rho, settings: &TomoSettings) -> Result<Vec<CountRecord>, TomoError> {
    tomo_measure_seeded(rho, settings, settings.seed)
}

/// Outcome weights per basis pair, in `(++, +−, −+, −−)` order.
pub type BasisData = ((Basis, Basis), [f64; 4]);

fn records_to_data(records: &[CountRecord]) -> Result<Vec<BasisData>, TomoError> {
    records
        .iter()
        .map(|r| match r.setting {
            MeasurementSetting::Bases(a, b) => Ok(((a, b), r.counts.map(|c| c as f64))),
            s => Err(TomoError::NotBasisSetting(s.label())),
        })
        .collect()
}

/// Exact outcome probabilities of `rho` for every basis pair.
pub fn exact_data(rho: &Rho) -> Vec<BasisData> {
    all_basis_pairs().into_iter().map(|(a, b)| ((a, b), MeasurementSetting::Bases(a, b).probabilities(rho))).collect()
}

struct Projector {
    vec: [C; 4],
    weight: f64,
}

fn projectors(data: &[BasisData]) -> Result<(Vec<Projector>, f64), TomoError> {
    for (a, b) in all_basis_pairs() {
        if !data.iter().any(|((x, y), w)| (*x, *y) == (a, b) && w.iter().sum::<f64>() > 0.0) {
            return Err(TomoError::MissingBasis(format!("{}x{}", a.name(), b.name())));
        }
    }
    let mut out = Vec::new();
    let mut total = 0.0;
    for &((a, b), w) in data {
        let (sa, sb) = (a.states::<f64>(), b.states::<f64>());
        for i in 0..2 {
            for j in 0..2 {
                let weight = w[2 * i + j];
                total += weight;
                if weight > 0.0 {
                    out.push(Projector { vec: product_vector(&sa[i], &sb[j]), weight });
                }
            }
        }
    }
    if !(total > 0.0) {
        return Err(TomoError::EmptyData);
    }
    Ok((out, total))
}

fn log_likelihood(rho: &CMat4<f64>, proj: &[Projector]) -> f64 {
    proj.iter().map(|p| p.weight * rho.expectation(&p.vec).re.ln()).sum()
}

/// `Σ (nₖ/pₖ) Πₖ / N`
fn r_operator(rho: &CMat4<f64>, proj: &[Projector], total: f64) -> CMat4<f64> {
    proj.iter().fold(CMat4::zeros(), |acc, p| {
        let prob = rho.expectation(&p.vec).re;
        acc + CMat4::outer(&p.vec).scale(p.weight / (prob * total))
    })
}

fn normalized(m: CMat4<f64>) -> CMat4<f64> {
    let h = m.hermitian_part();
    let tr = h.trace().re;
    h.scale(1.0 / tr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleOutcome {
    pub rho: Rho,
    /// `Σ nₖ ln pₖ` at `rho`.
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after each accepted iterate, starting from `I/4`.
    pub trace: Vec<f64>,
}

/// Largest step tried in the direction `R − I`.
const MAX_STEP: f64 = 1024.0;
/// Below this the step search gives up: no ascent at floating-point resolution.
const MIN_STEP: f64 = 1e-12;
/// Gains below this many ulps of the likelihood count as numerical stagnation.
const STALL_ULPS: f64 = 4.0;

/// Real parametrisation `ρ = T T† / Tr(T T†)` with `T` stored as 32 reals,
/// in which every probability is a quadratic form `xᵀ Mₖ x / xᵀx`.
const NP: usize = 32;
const MAX_DAMPING_TRIES: usize = 30;

struct Factored {
    forms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    total: f64,
}

impl Factored {
    fn new(proj: &[Projector], total: f64) -> Self {
        let forms = proj
            .iter()
            .map(|p| {
                // rows of B with (T† v) = B x split into real and imaginary parts
                let mut b = vec![0.0; 8 * NP];
                for j in 0..4 {
                    for i in 0..4 {
                        let (vr, vi) = (p.vec[i].re, p.vec[i].im);
                        let k = 2 * (4 * i + j);
                        b[(2 * j) * NP + k] = vr;
                        b[(2 * j) * NP + k + 1] = vi;
                        b[(2 * j + 1) * NP + k] = vi;
                        b[(2 * j + 1) * NP + k + 1] = -vr;
                    }
                }
                let mut m = vec![0.0; NP * NP];
                for r in 0..8 {
                    for u in 0..NP {
                        let bu = b[r * NP + u];
                        if bu != 0.0 {
                            for w in 0..NP {
                                m[u * NP + w] += bu * b[r * NP + w];
                            }
                        }
                    }
                }
                m
            })
            .collect();
        Self { forms, weights: proj.iter().map(|p| p.weight).collect(), total }
    }

    fn to_params(rho: &CMat4<f64>) -> Result<Vec<f64>, LinalgError> {
        let t = rho.hermitian_map(|l| l.max(0.0).sqrt())?;
        let mut x = vec![0.0; NP];
        for i in 0..4 {
            for j in 0..4 {
                x[2 * (4 * i + j)] = t.0[i][j].re;
                x[2 * (4 * i + j) + 1] = t.0[i][j].im;
            }
        }
        Ok(x)
    }

    fn to_state(x: &[f64]) -> CMat4<f64> {
        let t = CMat4::from_fn(|i, j| C::new(x[2 * (4 * i + j)], x[2 * (4 * i + j) + 1]));
        normalized(t * t.adjoint())
    }

    fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
        (0..NP).map(|u| (0..NP).map(|w| m[u * NP + w] * x[w]).sum()).collect()
    }

    /// Gradient and negated Hessian of `L(x)`.
    fn derivatives(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = vec![0.0; NP];
        let mut h = vec![0.0; NP * NP];
        for (m, &n) in self.forms.iter().zip(&self.weights) {
            let mx = Self::mat_vec(m, x);
            let p: f64 = mx.iter().zip(x).map(|(a, b)| a * b).sum();
            for u in 0..NP {
                g[u] += 2.0 * n * mx[u] / p;
                for w in 0..NP {
                    h[u * NP + w] += 4.0 * n * mx[u] * mx[w] / (p * p) - 2.0 * n * m[u * NP + w] / p;
                }
            }
        }
        let s: f64 = x.iter().map(|v| v * v).sum();
        for u in 0..NP {
            g[u] -= 2.0 * self.total * x[u] / s;
            h[u * NP + u] += 2.0 * self.total / s;
            for w in 0..NP {
                h[u * NP + w] -= 4.0 * self.total * x[u] * x[w] / (s * s);
            }
        }
        (g, h)
    }

    /// Damped Newton ascent from `rho`; returns the best candidate that does
    /// not lower the likelihood, adjusting `damping` for the next call.
    fn newton_step(&self, rho: &CMat4<f64>, ll: f64, proj: &[Projector], damping: &mut f64) -> Option<(CMat4<f64>, f64)> {
        let x = Self::to_params(rho).ok()?;
        let (g, h) = self.derivatives(&x);
        let scale = (0..NP).map(|u| h[u * NP + u].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for _ in 0..MAX_DAMPING_TRIES {
            let mut a = h.clone();
            for u in 0..NP {
                a[u * NP + u] += *damping * scale;
            }
            if let Some(dx) = cholesky_solve(&mut a, &g) {
                let y: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
                let cand = Self::to_state(&y);
                let l = log_likelihood(&cand, proj);
                if l.is_finite() && l >= ll {
                    *damping = (*damping * 0.1).max(1e-14);
                    return Some((cand, l));
                }
            }
            *damping *= 10.0;
        }
        *damping = 1e-6;
        None
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`, overwriting `A`.
fn cholesky_solve(a: &mut [f64], b: &[f64]) -> Option<Vec<f64>> {
    for j in 0..NP {
        let d = a[j * NP + j] - (0..j).map(|k| a[j * NP + k] * a[j * NP + k]).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * NP + j] = d;
        for i in j + 1..NP {
            let v = a[i * NP + j] - (0..j).map(|k| a[i * NP + k] * a[j * NP + k]).sum::<f64>();
            a[i * NP + j] = v / d;
        }
    }
    let mut y = vec![0.0; NP];
    for i in 0..NP {
        y[i] = (b[i] - (0..i).map(|k| a[i * NP + k] * y[k]).sum::<f64>()) / a[i * NP + i];
    }
    for i in (0..NP).rev() {
        y[i] = (y[i] - (i + 1..NP).map(|k| a[k * NP + i] * y[k]).sum::<f64>()) / a[i * NP + i];
    }
    Some(y)
}

/// Maximum-likelihood state for the given outcome weights.
///
/// Starts from `I/4`. Each iteration tries two ascent steps and keeps the more
/// likely one:
///
/// - `ρ ← G ρ G / Tr` with `G = I + t(R − I)`, where `t = 1` is the plain
///   `RρR` step. `t` halves until the likelihood does not drop, then keeps
///   doubling while it still rises.
/// - a damped Newton step on `T` in `ρ = T T† / Tr`, which converges quickly
///   where the first step crawls near the boundary of the state space.
///
/// Neither step is accepted if it lowers the likelihood. By concavity
/// `L(σ) − L(ρ) ≤ N (λ_max(R) − 1)` for every state `σ`, so the iteration stops
/// once that bound on the remaining gain per count is below
/// [`GAIN_TOLERANCE`], or when a step gains only a few ulps of `L` and the
/// bound is no longer resolvable.
pub fn reconstruct_mle_weights(data: &[BasisData]) -> Result<MleOutcome, TomoError> {
    let (proj, total) = projectors(data)?;
    let factored = Factored::new(&proj, total);
    let id = CMat4::<f64>::identity();
    let mut rho = id.scale(0.25);
    let mut ll = log_likelihood(&rho, &proj);
    let mut trace = vec![ll];
    let mut t = 1.0;
    let mut damping = 1e-6;

    let finish = |rho: CMat4<f64>, ll: f64, iterations: usize, trace: Vec<f64>| MleOutcome {
        rho: Rho::from_unnormalized(rho),
        log_likelihood: ll,
        iterations,
        trace,
    };
    for it in 1..=MAX_ITERATIONS {
        let r = r_operator(&rho, &proj, total);
        if r.hermitian_eigenvalues()?[3] - 1.0 < GAIN_TOLERANCE {
            return Ok(finish(rho, ll, it - 1, trace));
        }
        let d = r - id;
        let eval = |t: f64| {
            let g = id + d.scale(t);
            let cand = normalized(g * rho * g);
            let l = log_likelihood(&cand, &proj);
            (cand, l)
        };
        let mut step = None;
        let mut s = t;
        while s >= MIN_STEP {
            let (cand, l) = eval(s);
            if l >= ll {
                step = Some((cand, l));
                break;
            }
            s *= 0.5;
        }
        if let Some((next, l)) = step.as_mut() {
            t = s;
            while 2.0 * t <= MAX_STEP {
                let (cand, lc) = eval(2.0 * t);
                if lc <= *l {
                    break;
                }
                t *= 2.0;
                *next = cand;
                *l = lc;
            }
        } else {
            t = 1.0;
        }
        if let Some(newton) = factored.newton_step(&rho, ll, &proj, &mut damping) {
            if step.as_ref().is_none_or(|s| newton.1 > s.1) {
                step = Some(newton);
            }
        }
        let Some((next, l)) = step else {
            return Ok(finish(rho, ll, it - 1, trace));
        };
        let gain = l - ll;
        rho = next;
        ll = l;
        trace.push(ll);
        if gain <= STALL_ULPS * f64::EPSILON * ll.abs().max(1.0) {
            return Ok(finish(rho, ll, it, trace));
        }
    }
    Err(TomoError::ConvergenceError(Box::new(finish(rho, ll, MAX_ITERATIONS, trace))))
}

pub fn reconstruct_mle(records: &[CountRecord]) -> Result<MleOutcome, TomoError> {
    reconstruct_mle_weights(&records_to_data(records)?)
}

fn pauli(i: usize) -> [[C; 2]; 2] {
    let z = C::new(0.0, 0.0);
    let o = C::new(1.0, 0.0);
    let im = C::new(0.0, 1.0);
    match i {
        0 => [[o, z], [z, o]],
        1 => [[z, o], [o, z]],
        2 => [[z, -im], [im, z]],
        _ => [[o, z], [z, -o]],
    }
}

fn pauli_index(b: Basis) -> usize {
    match b {
        Basis::DA => 1,
        Basis::RL => 2,
        Basis::HV => 3,
    }
}

/// Stokes-parameter inversion `ρ = ¼ Σ Sᵢⱼ σᵢ⊗σⱼ`. The result can be non-PSD.
pub fn linear_inversion(records: &[CountRecord]) -> Result<Rho, TomoError> {
    let data = records_to_data(records)?;
    let mut s = [[0.0; 4]; 4];
    let mut n = [[0.0; 4]; 4];
    s[0][0] = 1.0;
    for ((a, b), w) in data {
        let t: f64 = w.iter().sum();
        if t <= 0.0 {
            continue;
        }
        let (i, j) = (pauli_index(a), pauli_index(b));
        let f = w.map(|x| x / t);
        let parts = [(i, j, f[0] - f[1] - f[2] + f[3]), (i, 0, f[0] + f[1] - f[2] - f[3]), (0, j, f[0] - f[1] + f[2] - f[3])];
        for (p, q, v) in parts {
            s[p][q] += v;
            n[p][q] += 1.0;
        }
    }
    let mut m = CMat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            if (i, j) == (0, 0) {
                m = m + CMat4::kron(&pauli(0), &pauli(0));
                continue;
            }
            if n[i][j] == 0.0 {
                return Err(TomoError::MissingBasis(format!("Stokes parameter ({i},{j})")));
            }
            m = m + CMat4::kron(&pauli(i), &pauli(j)).scale(s[i][j] / n[i][j]);
        }
    }
    Ok(Rho::from_unnormalized(m.scale(0.25)))
}

/// Zeroes negative eigenvalues and renormalizes.
pub fn clamp_psd(rho: &Rho) -> Result<Rho, TomoError> {
    Ok(Rho::from_unnormalized(rho.entries.hermitian_map(|x| x.max(0.0))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Metric on the point-estimate reconstruction.
    pub value: f64,
    pub mc_mean: Option<f64>,
    /// Sample standard deviation over successful trials.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub fidelity: f64,
    pub concurrence: f64,
    pub witness: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomoResult {
    pub rho_hat: Rho,
    pub fidelity: Estimate,
    pub concurrence: Estimate,
    pub witness: Estimate,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mc_trials: usize,
    pub failed_trials: usize,
    pub trials: Vec<TrialMetrics>,
    /// Diagnostic linear-inversion estimate of the point data (may be non-PSD).
    pub linear_inversion: Rho,
    pub settings: TomoSettings,
}

fn run_trial(rho_true: &Rho, settings: &TomoSettings, seed: u64) -> Result<(TrialMetrics, MleOutcome, Vec<CountRecord>), TomoError> {
    let records = tomo_measure_seeded(rho_true, settings, seed)?;
    let (out, converged) = match reconstruct_mle(&records) {
        Ok(o) => (o, true),
        Err(TomoError::ConvergenceError(best)) => (*best, false),
        Err(e) => return Err(e),
    };
    let m = TrialMetrics {
        seed,
        fidelity: fidelity_phi_plus(&out.rho),
        concurrence: concurrence(&out.rho)?,
        witness: witness_value(&out.rho),
        log_likelihood: out.log_likelihood,
        iterations: out.iterations,
        converged,
    };
    Ok((m, out, records))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Point estimate from `settings.seed`, error bars from trials seeded `seed ^ i`, `i = 1..=mc_trials`.
pub fn mc_errorbars(rho_true: &Rho, settings: &TomoSettings) -> Result<TomoResult, TomoError> {
    let seeds: Vec<u64> = (1..=settings.mc_trials as u64).map(|i| derive_seed(settings.seed, i)).collect();
    mc_errorbars_with_seeds(rho_true, settings, &seeds)
}

/// As [`mc_errorbars`] with explicit trial seeds; an empty list gives a point estimate only.
pub fn mc_errorbars_with_seeds(rho_true: &Rho, settings: &TomoSettings, seeds: &[u64]) -> Result<TomoResult, TomoError> {
    if seeds.len() == 1 {
        return Err(TomoError::TooFewTrials(1));
    }
    let (point, out, records) = run_trial(rho_true, settings, settings.seed)?;
    let trials: Vec<TrialMetrics> = seeds
        .par_iter()
        .map(|&s| run_trial(rho_true, settings, s).map(|t| t.0))
        .collect::<Result<Vec<_>, _>>()?;
    let ok: Vec<&TrialMetrics> = trials.iter().filter(|t| t.converged).collect();
    let failed_trials = trials.len() - ok.len();
    if !trials.is_empty() && ok.len() < 2 {
        return Err(TomoError::AllTrialsFailed(trials.len()));
    }
    let est = |value: f64, f: fn(&TrialMetrics) -> f64| {
        if ok.is_empty() {
            return Estimate { value, mc_mean: None, sigma: None };
        }
        let (m, s) = mean_sd(&ok.iter().map(|t| f(t)).collect::<Vec<_>>());
        Estimate { value, mc_mean: Some(m), sigma: Some(s) }
    };
    Ok(TomoResult {
        rho_hat: out.rho.clone(),
        fidelity: est(point.fidelity, |t| t.fidelity),
        concurrence: est(point.concurrence, |t| t.concurrence),
        witness: est(point.witness, |t| t.witness),
        log_likelihood: out.log_likelihood,
        iterations: out.iterations,
        converged: point.converged,
        mc_trials: seeds.len(),
        failed_trials,
        linear_inversion: linear_inversion(&records)?,
        trials,
        settings: settings.clone(),
    })
}
