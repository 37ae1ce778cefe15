//! Command dispatch over a scenario and report emission.
//!
//! Exit codes: 0 when every verdict is positive, 2 when some verdict is a
//! negative mathematical outcome, 1 on an operational error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{
    check_symmetry, verify_diffeo_invariance, Anchored, ContactConfig, GraphCurve, SymmetryReport,
};
use crate::horseshoe::{
    build_global_test_map, build_horseshoe_witness, prefix_closed, verify_itineraries,
    GlobalMapSummary, HorseshoeError, ShiftWitness,
};
use crate::lambda::{
    iterate_graph_portion, verify_singular_lambda_lemma, IterationMode, LambdaConfig, LambdaError,
    LambdaVerdict,
};
use crate::resonance::{find_resonances, ResonanceReport};
use crate::scenario::{Scenario, ScenarioFile};
use crate::transversality::{scan_k, CrossingSetup, TransversalityError, TransversalityReport};

pub const TOOL: &str = "homoclinic";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Samples per parameter axis in the `iterate` section.
const ITERATE_SAMPLES: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ContactOrder,
    Resonance,
    Iterate,
    LambdaVerify,
    TransversalityScan,
    Horseshoe,
    All,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::ContactOrder,
        Command::Resonance,
        Command::Iterate,
        Command::LambdaVerify,
        Command::TransversalityScan,
        Command::Horseshoe,
        Command::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::ContactOrder => "contact-order",
            Command::Resonance => "resonance",
            Command::Iterate => "iterate",
            Command::LambdaVerify => "lambda-verify",
            Command::TransversalityScan => "transversality-scan",
            Command::Horseshoe => "horseshoe",
            Command::All => "all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Plot,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "plot" => Ok(Format::Plot),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// Command-line overrides of scenario settings.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub k_max: Option<u32>,
    pub epsilon: Option<f64>,
    pub depth: Option<u32>,
    pub seed: Option<u64>,
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Positive,
    Negative,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub module: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub positive: usize,
    pub negative: usize,
    pub errors: usize,
    pub exit_code: i32,
}

impl Summary {
    pub fn of(verdicts: &[Verdict]) -> Self {
        let count = |s: Status| verdicts.iter().filter(|v| v.status == s).count();
        let (positive, negative, errors) =
            (count(Status::Positive), count(Status::Negative), count(Status::Error));
        let exit_code = if errors > 0 {
            1
        } else if negative > 0 {
            2
        } else {
            0
        };
        Self {
            positive,
            negative,
            errors,
            exit_code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoOutcome {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det_at_anchor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactResult {
    pub name: String,
    pub anchor: Vec<f64>,
    /// Curve against target, then target against curve.
    pub symmetry: SymmetryReport,
    pub diffeos: Vec<DiffeoOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSample {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: f64,
    /// `dv/du` along the iterated graph.
    pub slope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSection {
    pub k: u32,
    pub mode: IterationMode,
    pub samples: Vec<IterateSample>,
    /// Parameters whose orbit left the working box.
    pub escaped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeSection {
    pub global_map: GlobalMapSummary,
    pub witness: ShiftWitness,
    /// Realized fraction of itineraries, per depth.
    pub fractions: Vec<f64>,
    pub prefix_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub module: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub scenario: ScenarioFile,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<Vec<ContactResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance: Option<ResonanceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate: Option<IterateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transversality: Option<TransversalityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horseshoe: Option<HorseshoeSection>,
    pub verdicts: Vec<Verdict>,
    pub summary: Summary,
    /// Wall-clock timings; only present on request since they break
    /// byte-identical output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<Timing>>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write CSV {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

struct Runner<'a> {
    scenario: &'a Scenario,
    opts: RunOptions,
    report: Report,
    timings: Vec<Timing>,
}

impl Runner<'_> {
    fn verdict(&mut self, module: &str, status: Status, detail: impl Into<String>) {
        let detail = detail.into();
        let detail = if status == Status::Error {
            format!("{}: {detail}", self.scenario.name())
        } else {
            detail
        };
        self.report.verdicts.push(Verdict {
            module: module.into(),
            status,
            detail,
        });
    }

    fn timed<T>(&mut self, module: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timings.push(Timing {
            module: module.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn missing(&mut self, module: &str, what: &str) {
        self.verdict(module, Status::Error, format!("scenario has no {what}"));
    }

    fn epsilon(&self) -> f64 {
        self.opts.epsilon.unwrap_or(self.scenario.settings().epsilon)
    }

    fn k_max(&self) -> u32 {
        self.opts.k_max.unwrap_or(self.scenario.settings().k_max)
    }

    fn depth(&self) -> u32 {
        self.opts.depth.unwrap_or(self.scenario.settings().depth)
    }

    fn crossing_setup(&mut self, module: &str) -> Option<CrossingSetup> {
        let sc = self.scenario;
        match (&sc.map, &sc.lambda, &sc.gamma) {
            (Some(m), Some(l), Some(g)) => match CrossingSetup::new(m.clone(), l.clone(), g.clone()) {
                Ok(s) => Some(s),
                Err(e) => {
                    self.verdict(module, Status::Error, e.to_string());
                    None
                }
            },
            _ => {
                self.missing(module, "map, lambda and gamma sections");
                None
            }
        }
    }

    fn contact(&mut self) {
        const M: &str = "contact-order";
        let sc = self.scenario;
        if sc.contact.is_empty() {
            return self.missing(M, "contact fixtures");
        }
        let window = sc.window();
        let mut results = Vec::new();
        let mut failures = Vec::new();
        for fx in &sc.contact {
            let cfg = ContactConfig {
                side: fx.side,
                ..ContactConfig::default()
            };
            let curve = GraphCurve::planar(fx.curve.clone(), fx.domain);
            let target = GraphCurve::planar(fx.target.clone(), fx.domain);
            let anchor = vec![fx.anchor, fx.curve.at(fx.anchor)];
            let a = Anchored {
                curve: &curve,
                s0: fx.anchor,
            };
            let b = Anchored {
                curve: &target,
                s0: fx.anchor,
            };
            let symmetry = check_symmetry(a, b, &anchor, window, &cfg);
            for (dir, out) in [("forward", &symmetry.l_12), ("reverse", &symmetry.l_21)] {
                if out.l_hat().is_none() {
                    failures.push(format!("{} {dir}", fx.name));
                }
            }
            let diffeos = fx
                .diffeos
                .iter()
                .enumerate()
                .map(|(index, d)| match verify_diffeo_invariance(a, b, &anchor, d, window, &cfg) {
                    Ok(r) => DiffeoOutcome {
                        index,
                        l_before: Some(r.l_before),
                        l_after: Some(r.l_after),
                        det_at_anchor: Some(r.det_at_anchor),
                        error: None,
                    },
                    Err(e) => DiffeoOutcome {
                        index,
                        l_before: None,
                        l_after: None,
                        det_at_anchor: None,
                        error: Some(e.to_string()),
                    },
                })
                .collect::<Vec<_>>();
            for d in &diffeos {
                match (d.l_before, d.l_after) {
                    (Some(b), Some(a)) if (a - b).abs() < 0.1 => {}
                    _ => failures.push(format!("{} diffeo {}", fx.name, d.index)),
                }
            }
            results.push(ContactResult {
                name: fx.name.clone(),
                anchor,
                symmetry,
                diffeos,
            });
        }
        let detail = if failures.is_empty() {
            format!("{} fixture(s) with a bounded order of contact", results.len())
        } else {
            format!("no order of contact for {}", failures.join(", "))
        };
        let status = if failures.is_empty() {
            Status::Positive
        } else {
            Status::Negative
        };
        self.report.contact = Some(results);
        self.verdict(M, status, detail);
    }

    fn resonance(&mut self) {
        const M: &str = "resonance";
        let sc = self.scenario;
        let spectra = match (&sc.spectra, &sc.map) {
            (Some(s), _) => s.clone(),
            (None, Some(m)) => match m.spectrum_pair(sc.settings().resonance_tol) {
                Ok(s) => s,
                Err(e) => return self.verdict(M, Status::Error, e.to_string()),
            },
            (None, None) => return self.missing(M, "spectra or map"),
        };
        let r = find_resonances(&spectra);
        let (status, detail) = if r.eligible {
            (
                Status::Positive,
                format!(
                    "eligible; {} mixed resonance(s) in the expanding spectrum, {} near miss(es)",
                    r.mixed.len(),
                    r.warnings.len()
                ),
            )
        } else {
            (
                Status::Negative,
                format!(
                    "{} resonance(s) in the contracting spectrum",
                    r.contracting.len()
                ),
            )
        };
        self.report.resonance = Some(r);
        self.verdict(M, status, detail);
    }

    fn iterate(&mut self) {
        const M: &str = "iterate";
        let sc = self.scenario;
        let (Some(map), Some(lam)) = (&sc.map, &sc.lambda) else {
            return self.missing(M, "map and lambda sections");
        };
        let k = sc.settings().iterate_k;
        let mode = if map.is_perturbed() {
            IterationMode::Perturbed
        } else {
            IterationMode::Linear
        };
        let g = match iterate_graph_portion(map, lam, k, mode) {
            Ok(g) => g,
            Err(e) => return self.verdict(M, Status::Error, e.to_string()),
        };
        let per_axis = ITERATE_SAMPLES;
        let mut samples = Vec::new();
        let mut escaped = 0;
        for (t, res) in parameter_grid(lam.t_box(), per_axis).zip(g.sample(per_axis)) {
            match res {
                Ok(ip) => {
                    let dv = DVector::from_vec(ip.dv_dt.clone());
                    let slope = ip
                        .du_dt
                        .transpose()
                        .lu()
                        .solve(&dv)
                        .map(|s| s.iter().copied().collect())
                        .unwrap_or_default();
                    samples.push(IterateSample {
                        t,
                        u: ip.u,
                        v: ip.v,
                        slope,
                    });
                }
                Err(LambdaError::LeftDomain { .. }) => escaped += 1,
                Err(e) => return self.verdict(M, Status::Error, e.to_string()),
            }
        }
        let detail = format!(
            "{} point(s) after {k} step(s), {escaped} outside the working box",
            samples.len()
        );
        self.report.iterate = Some(IterateSection {
            k,
            mode,
            samples,
            escaped,
        });
        self.verdict(M, Status::Positive, detail);
    }

    fn lambda(&mut self) {
        const M: &str = "lambda-verify";
        let sc = self.scenario;
        let (Some(map), Some(lam)) = (&sc.map, &sc.lambda) else {
            return self.missing(M, "map and lambda sections");
        };
        let s = sc.settings();
        let cfg = LambdaConfig {
            sigma: s.region,
            ..LambdaConfig::new(s.exclusion, s.rho, s.n_max)
        };
        match verify_singular_lambda_lemma(map, lam, &cfg) {
            Ok(v) => {
                let ok = v.within_rate_bound && v.monotone_tail;
                let detail = format!(
                    "n_min = {}, fitted rate {:.6}, bound {:.6}, monotone tail {}",
                    v.n_min, v.fitted_rate, v.rate_bound, v.monotone_tail
                );
                self.report.lambda = Some(v);
                self.verdict(M, if ok { Status::Positive } else { Status::Negative }, detail);
            }
            Err(e @ LambdaError::NoConvergence { .. }) => {
                self.verdict(M, Status::Negative, e.to_string())
            }
            Err(e) => self.verdict(M, Status::Error, e.to_string()),
        }
    }

    fn transversality(&mut self) {
        const M: &str = "transversality-scan";
        let Some(setup) = self.crossing_setup(M) else {
            return;
        };
        let s = self.scenario.settings();
        match scan_k(&setup, s.k_min, self.k_max(), self.epsilon()) {
            Ok(r) => {
                let ok = r.all_transverse && r.k_star.is_some() && r.lower_bound_sound;
                let detail = format!(
                    "{} crossing(s), {} k without a root, k* = {}, all transverse {}, bound sound {}",
                    r.rows.len(),
                    r.failures.len(),
                    r.k_star.map_or("none".into(), |k| k.to_string()),
                    r.all_transverse,
                    r.lower_bound_sound
                );
                self.report.transversality = Some(r);
                self.verdict(M, if ok { Status::Positive } else { Status::Negative }, detail);
            }
            Err(e) => {
                let status = transversality_status(&e);
                self.verdict(M, status, e.to_string())
            }
        }
    }

    fn horseshoe(&mut self) {
        const M: &str = "horseshoe";
        let Some(setup) = self.crossing_setup(M) else {
            return;
        };
        let depth = self.depth();
        let built = build_global_test_map(&setup, self.k_max()).and_then(|g| {
            let w = build_horseshoe_witness(&g, g.crossing(), depth)?;
            let fractions = (0..=depth)
                .map(|d| verify_itineraries(&w, d))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(HorseshoeSection {
                global_map: g.summary(),
                prefix_closed: prefix_closed(&w),
                witness: w,
                fractions,
            })
        });
        match built {
            Ok(sec) => {
                let full = sec.fractions.last().copied().unwrap_or(0.0);
                let ok = full == 1.0 && sec.prefix_closed;
                let detail = format!(
                    "{} of {} itineraries realized at depth {depth}, prefix closed {}",
                    sec.witness.realized_count(depth),
                    1u64 << depth,
                    sec.prefix_closed
                );
                self.report.horseshoe = Some(sec);
                self.verdict(M, if ok { Status::Positive } else { Status::Negative }, detail);
            }
            Err(e) => {
                let status = match &e {
                    HorseshoeError::Transversality(t) => transversality_status(t),
                    HorseshoeError::NoTransverseCrossing(_)
                    | HorseshoeError::NoMarkovStructure(_)
                    | HorseshoeError::InvariantViolation(_) => Status::Negative,
                    HorseshoeError::DepthTooLarge { .. } | HorseshoeError::OutsideChart { .. } => {
                        Status::Error
                    }
                };
                self.verdict(M, status, e.to_string())
            }
        }
    }
}

fn transversality_status(e: &TransversalityError) -> Status {
    match e {
        TransversalityError::Sidedness { .. } | TransversalityError::NoGuarantee { .. } => {
            Status::Negative
        }
        _ => Status::Error,
    }
}

fn parameter_grid(bounds: &[(f64, f64)], per_axis: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    let total = per_axis.pow(bounds.len() as u32);
    (0..total).map(move |idx| {
        let mut rem = idx;
        bounds
            .iter()
            .map(|(lo, hi)| {
                let i = rem % per_axis;
                rem /= per_axis;
                lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
            })
            .collect()
    })
}

/// Runs `cmd` on `scenario`. Module failures are recorded as verdicts, so
/// this never fails; the exit code lives in `report.summary`.
pub fn run_command(cmd: Command, scenario: &Scenario, opts: RunOptions) -> Report {
    let mut r = Runner {
        scenario,
        opts,
        report: Report {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: cmd,
            scenario: scenario.file.clone(),
            seed: opts.seed.or(scenario.file.seed).unwrap_or(0),
            contact: None,
            resonance: None,
            iterate: None,
            lambda: None,
            transversality: None,
            horseshoe: None,
            verdicts: Vec::new(),
            summary: Summary::of(&[]),
            timings: None,
        },
        timings: Vec::new(),
    };
    let sc = scenario;
    let has_map_lambda = sc.map.is_some() && sc.lambda.is_some();
    let has_crossing = has_map_lambda && sc.gamma.is_some();
    let run = |c: Command| match cmd {
        Command::All => match c {
            Command::ContactOrder => !sc.contact.is_empty(),
            Command::Resonance => sc.spectra.is_some() || sc.map.is_some(),
            Command::Iterate | Command::LambdaVerify => has_map_lambda,
            Command::TransversalityScan | Command::Horseshoe => has_crossing,
            Command::All => false,
        },
        other => other == c,
    };
    if run(Command::ContactOrder) {
        r.timed("contact-order", Runner::contact);
    }
    if run(Command::Resonance) {
        r.timed("resonance", Runner::resonance);
    }
    if run(Command::Iterate) {
        r.timed("iterate", Runner::iterate);
    }
    if run(Command::LambdaVerify) {
        r.timed("lambda-verify", Runner::lambda);
    }
    if run(Command::TransversalityScan) {
        r.timed("transversality-scan", Runner::transversality);
    }
    if run(Command::Horseshoe) {
        r.timed("horseshoe", Runner::horseshoe);
    }
    if r.report.verdicts.is_empty() {
        r.verdict(cmd.as_str(), Status::Error, "nothing to run");
    }
    let mut report = r.report;
    report.summary = Summary::of(&report.verdicts);
    if opts.timings {
        report.timings = Some(r.timings);
    }
    report
}

/// C `%.12e` formatting, e.g. `6.000000000000e+00`.
pub fn sci12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

pub fn to_json(report: &Report) -> Result<String, serde_json::Error> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// CSV tables keyed by file stem.
pub fn csv_tables(report: &Report) -> Vec<(&'static str, Vec<String>, Vec<Vec<String>>)> {
    let mut out = Vec::new();
    if let Some(t) = &report.transversality {
        let p = t.rows.first().map_or(0, |r| r.t.len());
        let mut header = cols(&["k", "branch"]);
        header.extend((0..p).map(|i| format!("t{i}")));
        header.push("tau".into());
        header.extend((0..p).map(|i| format!("u{i}")));
        header.extend(cols(&["v", "D", "lower_bound", "gradient_sup", "transverse"]));
        let rows = t
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.k.to_string(), r.branch.to_string()];
                row.extend(r.t.iter().map(|x| sci12(*x)));
                row.push(sci12(r.tau));
                row.extend(r.point.iter().map(|x| sci12(*x)));
                row.extend([
                    sci12(r.d),
                    sci12(r.lower_bound),
                    sci12(r.gradient_sup),
                    r.transverse.to_string(),
                ]);
                row
            })
            .collect();
        out.push(("transversality", header, rows));
    }
    if let Some(v) = &report.lambda {
        let rows = v
            .decay_samples
            .iter()
            .map(|s| vec![s.n.to_string(), sci12(s.d_c0), sci12(s.d_c1)])
            .collect();
        out.push(("lambda_decay", cols(&["n", "d_c0", "d_c1"]), rows));
    }
    if let Some(cs) = &report.contact {
        let mut rows = Vec::new();
        for c in cs {
            for (dir, o) in [("forward", &c.symmetry.l_12), ("reverse", &c.symmetry.l_21)] {
                let est = match o {
                    crate::contact::DirectionOutcome::Converged { estimate } => Some(estimate),
                    crate::contact::DirectionOutcome::Failed { estimate, .. } => estimate.as_ref(),
                };
                let converged = o.l_hat().is_some().to_string();
                if let Some(e) = est {
                    for (h, d) in &e.samples {
                        rows.push(vec![
                            c.name.clone(),
                            dir.into(),
                            sci12(*h),
                            sci12(*d),
                            sci12(e.l_raw),
                            converged.clone(),
                        ]);
                    }
                }
            }
        }
        out.push((
            "contact",
            cols(&["fixture", "direction", "h", "distance", "l_raw", "converged"]),
            rows,
        ));
    }
    if let Some(r) = &report.resonance {
        let mut rows = Vec::new();
        for (kind, ws) in [
            ("mixed", &r.mixed),
            ("contracting", &r.contracting),
            ("warning", &r.warnings),
        ] {
            for w in ws {
                rows.push(vec![
                    kind.into(),
                    sci12(w.a),
                    sci12(w.b),
                    sci12(w.target),
                    sci12(w.relative_gap),
                ]);
            }
        }
        out.push((
            "resonance",
            cols(&["kind", "a", "b", "target", "relative_gap"]),
            rows,
        ));
    }
    if let Some(h) = &report.horseshoe {
        let rows = h
            .witness
            .realized
            .iter()
            .enumerate()
            .skip(1)
            .flat_map(|(d, bits)| {
                bits.chars().enumerate().map(move |(i, b)| {
                    let word: String = crate::horseshoe::itinerary(i, d as u32)
                        .iter()
                        .map(|s| char::from(b'0' + s))
                        .collect();
                    vec![d.to_string(), word, (b == '1').to_string()]
                })
            })
            .collect();
        out.push(("horseshoe", cols(&["depth", "itinerary", "realized"]), rows));
    }
    out
}

/// Whitespace-separated columns with a `#` header line.
pub fn plot_tables(report: &Report) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if let Some(v) = &report.lambda {
        let mut s = String::from("# n d_c0 d_c1\n");
        for d in &v.decay_samples {
            s.push_str(&format!("{} {} {}\n", d.n, sci12(d.d_c0), sci12(d.d_c1)));
        }
        out.push(("lambda_decay", s));
    }
    if let Some(t) = &report.transversality {
        let mut s = String::from("# k branch D abs_D lower_bound\n");
        for r in &t.rows {
            s.push_str(&format!(
                "{} {} {} {} {}\n",
                r.k,
                r.branch,
                sci12(r.d),
                sci12(r.d.abs()),
                sci12(r.lower_bound)
            ));
        }
        out.push(("transversality_dk", s));
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the report into `dir` in each requested format and returns the
/// paths written.
pub fn emit_report(
    report: &Report,
    formats: &[Format],
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = format!("{}_{}", report.scenario.name, report.command);
    let mut written = Vec::new();
    for f in formats {
        match f {
            Format::Json => {
                let path = dir.join(format!("{stem}.json"));
                std::fs::write(&path, to_json(report)?).map_err(io_err(&path))?;
                written.push(path);
            }
            Format::Csv => {
                for (name, header, rows) in csv_tables(report) {
                    let path = dir.join(format!("{stem}_{name}.csv"));
                    let csv_err = |source| ReportError::Csv {
                        path: path.display().to_string(),
                        source,
                    };
                    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
                    w.write_record(&header).map_err(csv_err)?;
                    for r in rows {
                        w.write_record(&r).map_err(csv_err)?;
                    }
                    w.flush().map_err(io_err(&path))?;
                    written.push(path);
                }
            }
            Format::Plot => {
                for (name, body) in plot_tables(report) {
                    let path = dir.join(format!("{stem}_{name}.dat"));
                    std::fs::write(&path, body).map_err(io_err(&path))?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn sci12_matches_c_format() {
        assert_eq!(sci12(6.0), "6.000000000000e+00");
        assert_eq!(sci12(-0.000123), "-1.230000000000e-04");
        assert_eq!(sci12(1e300), "1.000000000000e+300");
        assert_eq!(sci12(0.0), "0.000000000000e+00");
    }

    #[test]
    fn summary_codes() {
        let v = |status| Verdict {
            module: "m".into(),
            status,
            detail: String::new(),
        };
        assert_eq!(Summary::of(&[v(Status::Positive)]).exit_code, 0);
        assert_eq!(Summary::of(&[v(Status::Positive), v(Status::Negative)]).exit_code, 2);
        assert_eq!(Summary::of(&[v(Status::Negative), v(Status::Error)]).exit_code, 1);
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.as_str().parse::<Command>().unwrap(), c);
        }
    }

    #[test]
    fn spectra_only_resonance() {
        let sc = gallery::load("g7_resonance_spectra").unwrap().unwrap();
        let r = run_command(Command::Resonance, &sc, RunOptions::default());
        assert!(!r.resonance.as_ref().unwrap().eligible);
        assert_eq!(r.exit_code(), 2);
    }

    #[test]
    fn missing_section_is_operational_error() {
        let sc = gallery::load("g7_resonance_spectra").unwrap().unwrap();
        let r = run_command(Command::LambdaVerify, &sc, RunOptions::default());
        assert_eq!(r.exit_code(), 1);
        assert!(r.verdicts[0].detail.contains("g7_resonance_spectra"));
    }
}
