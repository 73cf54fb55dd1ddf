//! Line-oriented experiment description language (`.exp` files).
//!
//! ```text
//! # comment
//! source <name> signal=<path>:<H|V> idler=<path>:<H|V> eps=<float> [phase=<rad>]
//! rotator path=<int>
//! phase mode=<path>:<H|V> value=<rad>
//! order <int>
//! gamma <float>
//! detect <path>=<one|one:H|one:V|bucket:H|bucket:V|any> ...
//! ```
//!
//! Statement order is pipeline order. Defaults: `order 2`, `gamma 1`.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::elements::{run_pipeline, Element, ElementError, PhaseSpec, RotatorSpec, SourceSpec};
use crate::fock::{KetExpansion, ModeLabel, Polarization};
use crate::postselect::{DetectionPattern, DetectorConstraint};
use crate::scalar::Scalar;

pub const DEFAULT_ORDER: u32 = 2;

/// `|ε|` above which [`validate`] warns about perturbative accuracy.
pub const ACCURACY_WARN_EPS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid experiment: {0}")]
    Validation(String),
}

impl DslError {
    fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        DslError::Parse { line, column, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec<T: Scalar> {
    pub elements: Vec<Element<T>>,
    pub max_order: u32,
    pub detection: DetectionPattern,
    /// Residual `HH`–`VV` coherence after post-selection; 1 is ideal.
    pub gamma: T,
}

impl<T: Scalar> ExperimentSpec<T> {
    pub fn sources(&self) -> impl Iterator<Item = &SourceSpec<T>> {
        self.elements.iter().filter_map(|e| match e {
            Element::Source(s) => Some(s),
            _ => None,
        })
    }

    /// Every path mentioned by an element.
    pub fn element_paths(&self) -> BTreeSet<u32> {
        self.elements.iter().flat_map(|e| e.paths()).collect()
    }

    /// Final ket, built on the vacuum at `max_order`.
    pub fn final_state(&self) -> Result<KetExpansion<T>, ElementError> {
        run_pipeline(&self.elements, self.max_order)
    }

    /// Index into `elements` of the first phase shifter.
    pub fn first_phase_index(&self) -> Option<usize> {
        self.elements.iter().position(|e| matches!(e, Element::Phase(_)))
    }

    /// Semantic checks shared by the parser and programmatic construction.
    pub fn check(&self) -> Result<(), DslError> {
        if self.sources().next().is_none() {
            return Err(DslError::Validation("no sources".into()));
        }
        let mut names = HashSet::new();
        for s in self.sources() {
            if !names.insert(s.name.as_str()) {
                return Err(DslError::Validation(format!("duplicate source name `{}`", s.name)));
            }
        }
        if !(self.gamma >= T::zero() && self.gamma <= T::one()) {
            return Err(DslError::Validation(format!("gamma {} is outside [0, 1]", self.gamma)));
        }
        self.detection.retained_paths().map_err(|e| DslError::Validation(e.to_string()))?;
        let used = self.element_paths();
        for (path, _) in self.detection.iter() {
            if !used.contains(&path) {
                return Err(DslError::Validation(format!("detection references unused path {path}")));
            }
        }
        let pairs = self.detection.photons_required().div_ceil(2);
        if self.max_order < pairs {
            return Err(DslError::Validation(format!(
                "order {} is too low: the detection pattern needs {} photons ({} pairs)",
                self.max_order,
                self.detection.photons_required(),
                pairs
            )));
        }
        Ok(())
    }
}

fn parse_mode(tok: &str) -> Option<ModeLabel> {
    let (p, pol) = tok.split_once(':')?;
    let path: u32 = p.parse().ok().filter(|&p| p >= 1)?;
    Some(ModeLabel::new(path, parse_pol(pol)?))
}

fn parse_pol(s: &str) -> Option<Polarization> {
    match s {
        "H" => Some(Polarization::H),
        "V" => Some(Polarization::V),
        _ => None,
    }
}

fn parse_constraint(s: &str) -> Option<DetectorConstraint> {
    Some(match s {
        "one" => DetectorConstraint::ExactlyOneAny,
        "any" => DetectorConstraint::Unconstrained,
        _ => {
            let (kind, pol) = s.split_once(':')?;
            let pol = parse_pol(pol)?;
            match kind {
                "one" => DetectorConstraint::ExactlyOne(pol),
                "bucket" => DetectorConstraint::BucketAtLeastOne(pol),
                _ => return None,
            }
        }
    })
}

/// Whitespace-separated token with its 1-based column.
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &line[s..i], col: line[..s].chars().count() + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: line[..s].chars().count() + 1 });
    }
    out
}

/// `key=value` arguments of one statement, each consumed at most once.
struct Args<'a> {
    line: usize,
    items: Vec<(&'a str, &'a str, usize, bool)>,
}

impl<'a> Args<'a> {
    fn new(line: usize, toks: &[Tok<'a>]) -> Result<Self, DslError> {
        let mut items: Vec<(&'a str, &'a str, usize, bool)> = Vec::new();
        for t in toks {
            let (k, v) = t
                .text
                .split_once('=')
                .ok_or_else(|| DslError::at(line, t.col, format!("expected key=value, found `{}`", t.text)))?;
            if items.iter().any(|(key, ..)| *key == k) {
                return Err(DslError::at(line, t.col, format!("duplicate argument `{k}`")));
            }
            items.push((k, v, t.col, false));
        }
        Ok(Self { line, items })
    }

    fn take(&mut self, key: &str) -> Option<(&'a str, usize)> {
        self.items.iter_mut().find(|(k, ..)| *k == key).map(|item| {
            item.3 = true;
            (item.1, item.2)
        })
    }

    fn require(&mut self, key: &str, stmt_col: usize) -> Result<(&'a str, usize), DslError> {
        self.take(key).ok_or_else(|| DslError::at(self.line, stmt_col, format!("missing argument `{key}`")))
    }

    fn finish(self) -> Result<(), DslError> {
        match self.items.iter().find(|(.., used)| !used) {
            Some((k, _, col, _)) => Err(DslError::at(self.line, *col, format!("unknown argument `{k}`"))),
            None => Ok(()),
        }
    }
}

fn float<T: Scalar>(v: &str, line: usize, col: usize) -> Result<T, DslError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .map(T::of)
        .ok_or_else(|| DslError::at(line, col, format!("invalid number `{v}`")))
}

/// Parses and checks an experiment description.
pub fn parse<T: Scalar>(text: &str) -> Result<ExperimentSpec<T>, DslError> {
    let mut elements = Vec::new();
    let mut order: Option<u32> = None;
    let mut gamma: Option<T> = None;
    let mut detection: Option<DetectionPattern> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokenize(content);
        let Some((head, rest)) = toks.split_first() else { continue };
        let kw_col = head.col;
        match head.text {
            "source" => {
                let (name, rest) = rest
                    .split_first()
                    .ok_or_else(|| DslError::at(line_no, kw_col, "source needs a name"))?;
                if name.text.contains('=') {
                    return Err(DslError::at(line_no, name.col, "source needs a name before its arguments"));
                }
                let mut args = Args::new(line_no, rest)?;
                let (sig, sc) = args.require("signal", kw_col)?;
                let signal = parse_mode(sig).ok_or_else(|| DslError::at(line_no, sc, format!("invalid mode `{sig}`")))?;
                let (idl, ic) = args.require("idler", kw_col)?;
                let idler = parse_mode(idl).ok_or_else(|| DslError::at(line_no, ic, format!("invalid mode `{idl}`")))?;
                let (eps, ec) = args.require("eps", kw_col)?;
                let amplitude = float::<T>(eps, line_no, ec)?;
                let pump_phase = match args.take("phase") {
                    Some((v, c)) => float::<T>(v, line_no, c)?,
                    None => T::zero(),
                };
                args.finish()?;
                let src = SourceSpec::new(name.text, signal, idler, amplitude, pump_phase)
                    .map_err(|e| DslError::Validation(format!("line {line_no}: {e}")))?;
                elements.push(Element::Source(src));
            }
            "rotator" => {
                let mut args = Args::new(line_no, rest)?;
                let (p, pc) = args.require("path", kw_col)?;
                let path = p
                    .parse::<u32>()
                    .ok()
                    .filter(|&p| p >= 1)
                    .ok_or_else(|| DslError::at(line_no, pc, format!("invalid path `{p}`")))?;
                args.finish()?;
                elements.push(Element::Rotator(RotatorSpec { path }));
            }
            "phase" => {
                let mut args = Args::new(line_no, rest)?;
                let (m, mc) = args.require("mode", kw_col)?;
                let mode = parse_mode(m).ok_or_else(|| DslError::at(line_no, mc, format!("invalid mode `{m}`")))?;
                let (v, vc) = args.require("value", kw_col)?;
                let phi = float::<T>(v, line_no, vc)?;
                args.finish()?;
                elements.push(Element::Phase(PhaseSpec { mode, phi }));
            }
            "order" => {
                if order.is_some() {
                    return Err(DslError::at(line_no, kw_col, "duplicate `order` statement"));
                }
                let [v] = rest else {
                    return Err(DslError::at(line_no, kw_col, "`order` takes exactly one integer"));
                };
                order = Some(
                    v.text.parse().map_err(|_| DslError::at(line_no, v.col, format!("invalid order `{}`", v.text)))?,
                );
            }
            "gamma" => {
                if gamma.is_some() {
                    return Err(DslError::at(line_no, kw_col, "duplicate `gamma` statement"));
                }
                let [v] = rest else {
                    return Err(DslError::at(line_no, kw_col, "`gamma` takes exactly one number"));
                };
                gamma = Some(float(v.text, line_no, v.col)?);
            }
            "detect" => {
                if detection.is_some() {
                    return Err(DslError::at(line_no, kw_col, "duplicate `detect` statement"));
                }
                let mut pattern = DetectionPattern::new();
                let mut seen = HashSet::new();
                for t in rest {
                    let (p, c) = t
                        .text
                        .split_once('=')
                        .ok_or_else(|| DslError::at(line_no, t.col, format!("expected <path>=<detector>, found `{}`", t.text)))?;
                    let path = p
                        .parse::<u32>()
                        .ok()
                        .filter(|&p| p >= 1)
                        .ok_or_else(|| DslError::at(line_no, t.col, format!("invalid path `{p}`")))?;
                    if !seen.insert(path) {
                        return Err(DslError::at(line_no, t.col, format!("path {path} listed twice")));
                    }
                    let c = parse_constraint(c)
                        .ok_or_else(|| DslError::at(line_no, t.col, format!("unknown detector `{c}`")))?;
                    pattern.set(path, c);
                }
                detection = Some(pattern);
            }
            other => return Err(DslError::at(line_no, kw_col, format!("unknown keyword `{other}`"))),
        }
    }

    if !elements.iter().any(|e| matches!(e, Element::Source(_))) {
        return Err(DslError::at(1, 1, "no sources"));
    }
    let spec = ExperimentSpec {
        elements,
        max_order: order.unwrap_or(DEFAULT_ORDER),
        detection: detection.unwrap_or_default(),
        gamma: gamma.unwrap_or_else(T::one),
    };
    spec.check()?;
    Ok(spec)
}

/// Canonical text form; `parse(&unparse(s))` reproduces `s` exactly.
pub fn unparse<T: Scalar>(spec: &ExperimentSpec<T>) -> String {
    let mut out = String::new();
    for el in &spec.elements {
        let _ = match el {
            Element::Source(s) => writeln!(
                out,
                "source {} signal={} idler={} eps={:?} phase={:?}",
                s.name,
                s.signal,
                s.idler,
                s.amplitude.to_f64_lossless(),
                s.pump_phase.to_f64_lossless()
            ),
            Element::Rotator(r) => writeln!(out, "rotator path={}", r.path),
            Element::Phase(p) => writeln!(out, "phase mode={} value={:?}", p.mode, p.phi.to_f64_lossless()),
        };
    }
    let _ = writeln!(out, "order {}", spec.max_order);
    let _ = writeln!(out, "gamma {:?}", spec.gamma.to_f64_lossless());
    out.push_str("detect");
    for (p, c) in spec.detection.iter() {
        let _ = write!(out, " {p}={c}");
    }
    out.push('\n');
    out
}

/// Non-fatal issues; an empty list means the spec is clean.
pub fn validate<T: Scalar>(spec: &ExperimentSpec<T>) -> Vec<String> {
    let mut warnings = Vec::new();
    for s in spec.sources() {
        if s.amplitude.abs().to_f64_lossless() > ACCURACY_WARN_EPS {
            warnings.push(format!(
                "source {}: |eps| = {} > {ACCURACY_WARN_EPS}, perturbative accuracy degraded",
                s.name, s.amplitude
            ));
        }
    }

    // Modes that can hold a photon at the end of the pipeline.
    let mut reachable: BTreeSet<ModeLabel> = BTreeSet::new();
    for el in &spec.elements {
        match el {
            Element::Source(s) => {
                reachable.insert(s.signal);
                reachable.insert(s.idler);
            }
            Element::Rotator(r) => {
                reachable = reachable
                    .into_iter()
                    .map(|m| if m.path == r.path { ModeLabel::new(m.path, m.pol.flipped()) } else { m })
                    .collect();
            }
            Element::Phase(_) => {}
        }
    }
    let fed = |m: ModeLabel| reachable.contains(&m);
    for (path, c) in spec.detection.iter() {
        let ok = match c {
            DetectorConstraint::Unconstrained => true,
            DetectorConstraint::ExactlyOneAny => fed(ModeLabel::h(path)) || fed(ModeLabel::v(path)),
            DetectorConstraint::ExactlyOne(p) | DetectorConstraint::BucketAtLeastOne(p) => fed(ModeLabel::new(path, p)),
        };
        if !ok {
            warnings.push(format!("detector on path {path} ({c}) is never fed by a source"));
        }
    }
    if let Ok((a, b)) = spec.detection.retained_paths() {
        for p in [a, b] {
            if fed(ModeLabel::h(p)) != fed(ModeLabel::v(p)) {
                warnings.push(format!(
                    "retained path {p} only ever carries one polarization, so no entanglement can form"
                ));
            }
        }
    }
    warnings
}
