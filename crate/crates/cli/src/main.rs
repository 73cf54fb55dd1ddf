//! `pathid-sim`: builds, post-selects and analyzes path-identity experiments
//! described in `.exp` files.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 input error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use pathid_core::entmetrics::{self, Basis, ChshReport};
use pathid_core::expdsl::{self, DslError};
use pathid_core::noisemc::{self, RateCalibration, SampledChsh};
use pathid_core::postselect::{self, DensityRecord, TermVerdict};
use pathid_core::tomography::{self, TomoError, TomoSettings};
use pathid_core::{Experiment, Ket, Rho};

#[derive(Parser)]
#[command(name = "pathid-sim", version, about = "Path-identity entanglement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Final perturbative state and a per-term post-selection audit.
    State {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Post-selected density matrix with fidelity, concurrence, witness and CHSH.
    Entangle {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// CHSH S-value, exact and optionally from simulated counts.
    Chsh {
        #[command(flatten)]
        spec: SpecArgs,
        /// Mean coincidences per analyzer setting; omit for exact values only.
        #[arg(long, value_parser = parse_count)]
        shots: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// D/A coincidence probabilities (and counts) over a sweep of the first phase element, as CSV.
    Scan {
        #[command(flatten)]
        spec: SpecArgs,
        /// Start of the sweep in radians.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        phase_from: f64,
        /// End of the sweep in radians [default: 2π].
        #[arg(long, allow_negative_numbers = true)]
        phase_to: Option<f64>,
        #[arg(long, default_value_t = 25)]
        steps: usize,
        /// Mean coincidences per phase point; omit for probabilities only.
        #[arg(long, value_parser = parse_count)]
        shots: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulated nine-basis tomography with maximum-likelihood reconstruction and Monte Carlo error bars.
    Tomo {
        #[command(flatten)]
        spec: SpecArgs,
        /// Mean coincidences per basis pair.
        #[arg(long, default_value = "1e5", value_parser = parse_count)]
        shots: f64,
        /// Monte Carlo trials for error bars; 0 gives a point estimate only.
        #[arg(long, default_value_t = 100)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Pump-amplitude ratio from the pair rates of the four sources.
    Ratio {
        /// Pair coincidence rates of sources I-IV in Hz, comma separated.
        #[arg(long, value_parser = parse_rates)]
        cc: [f64; 4],
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment description (.exp).
    spec_path: PathBuf,
    /// Override the perturbative order.
    #[arg(long)]
    order: Option<u32>,
    /// Override the HH-VV coherence factor.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct OutArgs {
    /// Output file, or `-` for stdout. The run manifest goes to `<out>.manifest.json` (stderr for stdout).
    #[arg(long, default_value = "-")]
    out: String,
}

fn parse_count(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be finite and non-negative"))
    }
}

fn parse_rates(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 4 rates, got {}", v.len()))
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn input(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, err: err.into() }
}

fn numeric(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, err: err.into() }
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    argv: Vec<String>,
    spec_path: Option<String>,
    seed: Option<u64>,
    tool_version: &'static str,
    outputs: Vec<String>,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<Value>,
}

struct Output {
    body: String,
    seed: Option<u64>,
    spec_path: Option<String>,
    summary: Option<Value>,
}

/// `any_order` skips the check that `--order` can reach the detection pattern,
/// so `state` can show low-order expansions.
fn load(args: &SpecArgs, any_order: bool) -> Result<Experiment, Failure> {
    let path = &args.spec_path;
    if !path.exists() {
        return Err(input(anyhow!("file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(input)?;
    let mut spec: Experiment = expdsl::parse(&text).map_err(|e| input(anyhow!("{}: {e}", path.display())))?;
    if let Some(g) = args.gamma {
        spec.gamma = g;
    }
    if !any_order {
        if let Some(o) = args.order {
            spec.max_order = o;
        }
    }
    spec.check().map_err(|e: DslError| input(anyhow!("{}: {e}", path.display())))?;
    if let Some(o) = args.order {
        spec.max_order = o;
    }
    for w in expdsl::validate(&spec) {
        eprintln!("warning: {w}");
    }
    Ok(spec)
}

fn final_state(spec: &Experiment) -> Result<Ket, Failure> {
    spec.final_state().map_err(numeric)
}

fn conditional_state(spec: &Experiment) -> Result<Rho, Failure> {
    let state = final_state(spec)?;
    Ok(postselect::postselect_state(&state, &spec.detection).map_err(numeric)?.dephased(spec.gamma))
}

fn to_json(v: &impl Serialize) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(numeric)?;
    s.push('\n');
    Ok(s)
}

fn spec_path(args: &SpecArgs) -> Option<String> {
    Some(args.spec_path.display().to_string())
}

#[derive(Serialize)]
struct StateOutput<'a> {
    max_order: u32,
    term_count: usize,
    state: &'a Ket,
    term_report: Vec<TermVerdict>,
}

#[derive(Serialize)]
struct EntangleOutput {
    gamma: f64,
    rho: DensityRecord,
    success_weight: f64,
    fidelity: f64,
    concurrence: f64,
    witness: f64,
    relative_phase: f64,
    chsh: ChshReport<f64>,
}

#[derive(Serialize)]
struct ChshOutput {
    gamma: f64,
    exact: ChshReport<f64>,
    sampled: Option<SampledChsh>,
}

#[derive(Serialize)]
struct RatioOutput {
    pair_rates_hz: [f64; 4],
    efficiency_ratio: f64,
}

fn execute(cmd: &Command) -> Result<Output, Failure> {
    Ok(match cmd {
        Command::State { spec: a, .. } => {
            let spec = load(a, true)?;
            let state = final_state(&spec)?;
            let out = StateOutput {
                max_order: spec.max_order,
                term_count: state.len(),
                state: &state,
                term_report: postselect::term_report(&state, &spec.detection),
            };
            Output {
                body: to_json(&out)?,
                seed: None,
                spec_path: spec_path(a),
                summary: Some(json!({ "term_count": state.len() })),
            }
        }
        Command::Entangle { spec: a, .. } => {
            let spec = load(a, false)?;
            let rho = conditional_state(&spec)?;
            let out = EntangleOutput {
                gamma: spec.gamma,
                rho: rho.to_record(),
                success_weight: rho.success_weight,
                fidelity: entmetrics::fidelity_phi_plus(&rho),
                concurrence: entmetrics::concurrence(&rho).map_err(numeric)?,
                witness: entmetrics::witness_value(&rho),
                relative_phase: entmetrics::relative_phase(&rho),
                chsh: entmetrics::chsh(&rho),
            };
            let summary = json!({ "fidelity": out.fidelity, "concurrence": out.concurrence, "s_value": out.chsh.s_value });
            Output { body: to_json(&out)?, seed: None, spec_path: spec_path(a), summary: Some(summary) }
        }
        Command::Chsh { spec: a, shots, seed, .. } => {
            let spec = load(a, false)?;
            let rho = conditional_state(&spec)?;
            let exact = entmetrics::chsh(&rho);
            let sampled = match shots {
                Some(n) => Some(
                    noisemc::sampled_chsh(&rho, entmetrics::default_chsh_settings(), *n, *seed).map_err(numeric)?,
                ),
                None => None,
            };
            let summary = json!({
                "s_exact": exact.s_value,
                "s_sampled": sampled.as_ref().map(|s| s.s_value),
                "sigma": sampled.as_ref().map(|s| s.sigma),
            });
            let out = ChshOutput { gamma: spec.gamma, exact, sampled };
            Output { body: to_json(&out)?, seed: Some(*seed), spec_path: spec_path(a), summary: Some(summary) }
        }
        Command::Scan { spec: a, phase_from, phase_to, steps, shots, seed, .. } => {
            let spec = load(a, false)?;
            let to = phase_to.unwrap_or(std::f64::consts::TAU);
            let grid = noisemc::phase_grid(*phase_from, to, *steps);
            let scan = noisemc::phase_scan(&spec, &grid, (Basis::DA, Basis::DA), *shots, *seed).map_err(|e| match e {
                noisemc::NoiseError::NoPhaseElement => input(e),
                e => numeric(e),
            })?;
            let mut fits = serde_json::Map::new();
            let names = ["dd", "da", "ad", "aa"];
            for (k, name) in names.iter().enumerate() {
                let values = match scan.count_column(k) {
                    Some(c) => c,
                    None => scan.prob_column(k),
                };
                if let Ok(f) = noisemc::fit_visibility(&scan.phis(), &values) {
                    fits.insert(name.to_string(), serde_json::to_value(f).map_err(numeric)?);
                }
            }
            Output { body: scan.to_csv(), seed: Some(*seed), spec_path: spec_path(a), summary: Some(json!({ "fits": fits })) }
        }
        Command::Tomo { spec: a, shots, mc, seed, .. } => {
            let spec = load(a, false)?;
            let rho = conditional_state(&spec)?;
            let settings = TomoSettings::new(shots.round() as u64, *mc, *seed);
            let result = tomography::mc_errorbars(&rho, &settings).map_err(|e| match e {
                TomoError::TooFewTrials(_) | TomoError::NoShots => input(e),
                e => numeric(e),
            })?;
            let summary = json!({
                "fidelity": result.fidelity,
                "concurrence": result.concurrence,
                "witness": result.witness,
                "failed_trials": result.failed_trials,
            });
            Output { body: to_json(&result)?, seed: Some(*seed), spec_path: spec_path(a), summary: Some(summary) }
        }
        Command::Ratio { cc, .. } => {
            let cal = RateCalibration::new(*cc).map_err(input)?;
            let out = RatioOutput { pair_rates_hz: cal.pair_rates_hz, efficiency_ratio: cal.efficiency_ratio() };
            Output { body: to_json(&out)?, seed: None, spec_path: None, summary: None }
        }
    })
}

fn command_name(cmd: &Command) -> (&'static str, &OutArgs) {
    match cmd {
        Command::State { out, .. } => ("state", out),
        Command::Entangle { out, .. } => ("entangle", out),
        Command::Chsh { out, .. } => ("chsh", out),
        Command::Scan { out, .. } => ("scan", out),
        Command::Tomo { out, .. } => ("tomo", out),
        Command::Ratio { out, .. } => ("ratio", out),
    }
}

fn manifest_path(out: &str) -> PathBuf {
    PathBuf::from(format!("{out}.manifest.json"))
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display())).map_err(input)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let (name, out) = command_name(&cli.command);
    let result = execute(&cli.command)?;
    let to_stdout = out.out == "-";
    if to_stdout {
        std::io::stdout().write_all(result.body.as_bytes()).map_err(input)?;
    } else {
        write_file(Path::new(&out.out), &result.body)?;
    }
    let manifest = RunManifest {
        command: name,
        argv: std::env::args().skip(1).collect(),
        spec_path: result.spec_path,
        seed: result.seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        outputs: vec![if to_stdout { "-".to_string() } else { out.out.clone() }],
        wall_time_s: start.elapsed().as_secs_f64(),
        summary: result.summary,
    };
    let text = to_json(&manifest)?;
    if to_stdout {
        eprint!("{text}");
    } else {
        write_file(&manifest_path(&out.out), &text)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
