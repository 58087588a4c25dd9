//! Experiment runner: configuration, per-cell solver runs, rate fits and
//! CSV/JSON output.
//!
//! A configuration is a flat text file of `key = value` lines with dotted
//! keys. Blank lines and lines starting with `#` are ignored. Every key can
//! be overridden with `key=value` strings, which is how the CLI's
//! `--override` flags are applied.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linops::{DenseMatrix, RealVector};
use crate::problems::{add_noise, make_problem, smooth_variant, LinearProblem, ProblemError, ProblemName};
use crate::solvers::{
    aggregate, cgne, drive, lanczos_kr, rational_cg, tikhonov, AlphaSchedule, IterationState, KrylovIteration, SolverError,
    SolverTrace, StepError, StopReason,
};
use crate::stopping::{oracle_index, StoppingError, StoppingRule, DEFAULT_MAX_ITER, DEFAULT_TAU};

/// Fixed column order of emitted records.
pub const CSV_HEADER: [&str; 11] = [
    "problem",
    "size",
    "method",
    "delta",
    "seed",
    "stop_reason",
    "n_stop",
    "error",
    "residual",
    "time_s",
    "alpha_spec",
];

const KEYS: [&str; 18] = [
    "problem.name",
    "problem.size",
    "methods",
    "alpha.schedule",
    "alpha.a",
    "alpha.q",
    "alpha.s",
    "alpha.values",
    "noise.delta",
    "noise.seeds",
    "stopping.tau",
    "stopping.n_max",
    "stopping.oracle",
    "smooth_solution",
    "output.path",
    "output.format",
    "output.slopes",
    "strict",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// The dotted key the error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::UnknownKey(k) => Some(k),
            Self::Missing(k) => Some(k),
            Self::Invalid { key, .. } => Some(key),
            Self::Syntax { .. } => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("nothing to emit")]
    NoRecords,
    #[error("record {index} has a non-finite `{field}`")]
    NonFinite { index: usize, field: &'static str },
    #[error("rate sweep: {0}")]
    RateSweep(String),
}

impl HarnessError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Tikhonov,
    Cgne,
    Aggregate,
    LanczosKr,
    RationalCg,
}

impl Method {
    pub const ALL: [Method; 5] = [Self::Tikhonov, Self::Cgne, Self::Aggregate, Self::LanczosKr, Self::RationalCg];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tikhonov => "tikhonov",
            Self::Cgne => "cgne",
            Self::Aggregate => "aggregate",
            Self::LanczosKr => "lanczos_kr",
            Self::RationalCg => "rational_cg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemName,
    pub size: usize,
    pub methods: Vec<Method>,
    pub alphas: AlphaSchedule,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub tau: f64,
    pub n_max: usize,
    /// Select the error-minimizing iterate on noise-free cells.
    pub oracle: bool,
    pub smooth_solution: bool,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
    /// Where `rates` writes the slope table.
    pub slopes_path: Option<PathBuf>,
    /// Treat a breakdown stop as a failure.
    pub strict: bool,
}

impl ExperimentConfig {
    /// Defaults for everything but the problem name and method list.
    pub fn new(problem: ProblemName, size: usize, methods: Vec<Method>) -> Self {
        Self {
            problem,
            size,
            methods,
            alphas: AlphaSchedule::PaperDefault,
            deltas: vec![0.0],
            seeds: Vec::new(),
            tau: DEFAULT_TAU,
            n_max: DEFAULT_MAX_ITER,
            oracle: true,
            smooth_solution: false,
            output_path: None,
            format: OutputFormat::Csv,
            slopes_path: None,
            strict: false,
        }
    }

    /// Parses config text, then applies `overrides` (`key=value`) in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut pairs = parse_pairs(text)?;
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                message: format!("override `{o}` is not key=value"),
            })?;
            pairs.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_pairs(&pairs)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self::parse(&text, overrides)?)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);

        let problem = parse_value::<ProblemName>("problem.name", get("problem.name").ok_or(ConfigError::Missing("problem.name"))?)?;
        let size = match get("problem.size") {
            Some(v) => parse_value("problem.size", v)?,
            None => 64,
        };
        let methods = parse_list::<Method>("methods", get("methods").ok_or(ConfigError::Missing("methods"))?)?;
        let mut cfg = Self::new(problem, size, methods);

        cfg.alphas = parse_schedule(&get)?;
        if let Some(v) = get("noise.delta") {
            cfg.deltas = parse_list("noise.delta", v)?;
        }
        if let Some(v) = get("noise.seeds") {
            cfg.seeds = parse_list("noise.seeds", v)?;
        }
        if let Some(v) = get("stopping.tau") {
            cfg.tau = parse_value("stopping.tau", v)?;
        }
        if let Some(v) = get("stopping.n_max") {
            cfg.n_max = parse_value("stopping.n_max", v)?;
        }
        if let Some(v) = get("stopping.oracle") {
            cfg.oracle = parse_value("stopping.oracle", v)?;
        }
        if let Some(v) = get("smooth_solution") {
            cfg.smooth_solution = parse_value("smooth_solution", v)?;
        }
        if let Some(v) = get("strict") {
            cfg.strict = parse_value("strict", v)?;
        }
        cfg.output_path = get("output.path").filter(|v| !v.is_empty()).map(PathBuf::from);
        cfg.slopes_path = get("output.slopes").filter(|v| !v.is_empty()).map(PathBuf::from);
        cfg.format = match get("output.format") {
            Some(v) => parse_value("output.format", v)?,
            None => match cfg.output_path.as_ref().and_then(|p| p.extension()) {
                Some(ext) if ext == "json" => OutputFormat::Json,
                _ => OutputFormat::Csv,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(ConfigError::invalid("methods", "at least one method is required"));
        }
        if self.size < 4 {
            return Err(ConfigError::invalid("problem.size", format!("{} is below the minimum of 4", self.size)));
        }
        if matches!(self.problem, ProblemName::Shaw | ProblemName::Phillips) && !self.size.is_multiple_of(2) {
            return Err(ConfigError::invalid("problem.size", format!("{} must be even for {}", self.size, self.problem)));
        }
        if self.deltas.is_empty() {
            return Err(ConfigError::invalid("noise.delta", "at least one noise level is required"));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(ConfigError::invalid("noise.delta", format!("{d} is negative or not finite")));
        }
        if self.deltas.iter().any(|&d| d > 0.0) && self.seeds.is_empty() {
            return Err(ConfigError::invalid("noise.seeds", "required when a noise level is positive"));
        }
        if !(self.tau > 1.0 && self.tau.is_finite()) {
            return Err(ConfigError::invalid("stopping.tau", format!("{} must exceed 1", self.tau)));
        }
        if self.n_max == 0 {
            return Err(ConfigError::invalid("stopping.n_max", "must be at least 1"));
        }
        self.alphas
            .validate()
            .map_err(|e| ConfigError::invalid("alpha.schedule", e.to_string()))
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: "empty key".to_string(),
            });
        }
        if pairs.insert(key.to_string(), v.trim().to_string()).is_some() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(pairs)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e: T::Err| ConfigError::invalid(key, format!("cannot parse `{v}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_schedule<'a>(get: &impl Fn(&str) -> Option<&'a str>) -> Result<AlphaSchedule, ConfigError> {
    let key = "alpha.schedule";
    match get(key).unwrap_or("paper_default") {
        "paper_default" => Ok(AlphaSchedule::PaperDefault),
        "geometric" => {
            let a = get("alpha.a").map(|v| parse_value("alpha.a", v)).transpose()?.unwrap_or(0.1);
            let q = get("alpha.q").map(|v| parse_value("alpha.q", v)).transpose()?.unwrap_or(10.0);
            let s = get("alpha.s").map(|v| parse_value("alpha.s", v)).transpose()?.unwrap_or(0);
            AlphaSchedule::geometric(a, q, s).map_err(|e| ConfigError::invalid(key, e.to_string()))
        }
        "explicit" => {
            let values = parse_list("alpha.values", get("alpha.values").ok_or(ConfigError::Missing("alpha.values"))?)?;
            if values.is_empty() {
                return Err(ConfigError::invalid("alpha.values", "empty list"));
            }
            AlphaSchedule::explicit(values).map_err(|e| ConfigError::invalid("alpha.values", e.to_string()))
        }
        other => Err(ConfigError::invalid(
            key,
            format!("unknown schedule `{other}` (expected paper_default, geometric or explicit)"),
        )),
    }
}

/// One row of output: a single (problem, method, noise level, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub size: usize,
    pub method: String,
    pub delta: f64,
    pub seed: u64,
    pub stop_reason: String,
    pub n_stop: usize,
    /// `‖x_n − x_exact‖`
    pub error: f64,
    /// `‖Ax_n − y_δ‖`
    pub residual: f64,
    pub time_s: f64,
    pub alpha_spec: String,
}

impl RunRecord {
    /// Sort key of the cell, wall time excluded.
    fn cell_key(&self) -> (&str, &str, u64, u64) {
        (&self.problem, &self.method, self.delta.to_bits(), self.seed)
    }

    /// Equality ignoring `time_s`.
    pub fn same_result(&self, other: &Self) -> bool {
        Self {
            time_s: 0.0,
            ..self.clone()
        } == Self {
            time_s: 0.0,
            ..other.clone()
        }
    }
}

/// Tikhonov regularization along the schedule: step `k` is `x_{α_k}`.
struct TikhonovPath<'a> {
    a: &'a DenseMatrix,
    y: &'a RealVector,
    alphas: &'a AlphaSchedule,
    state: IterationState,
}

impl<'a> TikhonovPath<'a> {
    fn new(a: &'a DenseMatrix, y: &'a RealVector, alphas: &'a AlphaSchedule) -> Result<Self, SolverError> {
        let alpha = alphas.alpha(1).ok_or(SolverError::NoAlphas)?;
        let x = tikhonov(a, y, alpha)?;
        Ok(Self {
            a,
            y,
            alphas,
            state: path_state(a, y, 1, x),
        })
    }
}

impl KrylovIteration for TikhonovPath<'_> {
    fn state(&self) -> &IterationState {
        &self.state
    }

    fn advance(&mut self) -> Result<(), StepError> {
        let k = self.state.n + 1;
        let alpha = self.alphas.alpha(k).ok_or(StepError::ScheduleExhausted)?;
        let x = tikhonov(self.a, self.y, alpha).map_err(|e| StepError::Breakdown(e.to_string()))?;
        self.state = path_state(self.a, self.y, k, x);
        Ok(())
    }
}

/// Aggregation over a growing prefix of the schedule: step `k` combines
/// `x_{α_1}, …, x_{α_k}`.
struct AggregatePath<'a> {
    a: &'a DenseMatrix,
    y: &'a RealVector,
    alphas: &'a AlphaSchedule,
    state: IterationState,
}

impl<'a> AggregatePath<'a> {
    fn new(a: &'a DenseMatrix, y: &'a RealVector, alphas: &'a AlphaSchedule) -> Result<Self, SolverError> {
        let agg = aggregate(a, y, &alphas.take(1))?;
        Ok(Self {
            a,
            y,
            alphas,
            state: path_state(a, y, 1, agg.x),
        })
    }
}

impl KrylovIteration for AggregatePath<'_> {
    fn state(&self) -> &IterationState {
        &self.state
    }

    fn advance(&mut self) -> Result<(), StepError> {
        let k = self.state.n + 1;
        let used = self.alphas.take(k);
        if used.len() < k {
            return Err(StepError::ScheduleExhausted);
        }
        let agg = aggregate(self.a, self.y, &used).map_err(|e| StepError::Breakdown(e.to_string()))?;
        self.state = path_state(self.a, self.y, k, agg.x);
        Ok(())
    }
}

fn path_state(a: &DenseMatrix, y: &RealVector, n: usize, x: RealVector) -> IterationState {
    let ax = a.apply(&x);
    let r = a.apply_t(&ax) - a.apply_t(y);
    let zero = RealVector::zeros(x.len());
    IterationState {
        n,
        ls_residual_norm: (ax - y).norm(),
        p: zero.clone(),
        p_old: zero,
        r,
        x,
    }
}

fn run_method(method: Method, a: &DenseMatrix, y: &RealVector, alphas: &AlphaSchedule, rule: &StoppingRule) -> Result<SolverTrace, SolverError> {
    let started = Instant::now();
    match method {
        Method::Cgne => cgne(a, y, rule),
        Method::LanczosKr => lanczos_kr(a, y, alphas, rule),
        Method::RationalCg => rational_cg(a, y, alphas, rule),
        Method::Tikhonov => Ok(drive(&mut TikhonovPath::new(a, y, alphas)?, rule, None, started)),
        Method::Aggregate => Ok(drive(&mut AggregatePath::new(a, y, alphas)?, rule, None, started)),
    }
}

fn stopping_rule(cfg: &ExperimentConfig, delta_abs: f64, x_exact: &RealVector) -> Result<StoppingRule, StoppingError> {
    let budget = StoppingRule::budget(cfg.n_max)?;
    if delta_abs > 0.0 {
        Ok(StoppingRule::Composite(vec![StoppingRule::discrepancy(cfg.tau, delta_abs)?, budget]))
    } else if cfg.oracle {
        StoppingRule::oracle_best(x_exact.clone(), cfg.n_max)
    } else {
        Ok(budget)
    }
}

/// Identifies one (method, noise level, seed) cell of an experiment.
struct Cell<'a> {
    problem: &'a LinearProblem,
    size: usize,
    method: Method,
    delta: f64,
    seed: u64,
    alphas: &'a AlphaSchedule,
}

impl Cell<'_> {
    fn record(&self, stop_reason: StopReason, n_sel: usize, x_error: f64, residual: f64, time_s: f64) -> RunRecord {
        let (n_stop, alpha_spec) = match self.method {
            Method::Aggregate => (1, format!("{};solves={n_sel}", self.alphas.descriptor())),
            Method::Cgne => (n_sel, "none".to_string()),
            _ => (n_sel, self.alphas.descriptor()),
        };
        RunRecord {
            problem: self.problem.name.clone(),
            size: self.size,
            method: self.method.to_string(),
            delta: self.delta,
            seed: self.seed,
            stop_reason: stop_reason.to_string(),
            n_stop,
            error: x_error,
            residual,
            time_s,
            alpha_spec,
        }
    }

    fn traced(&self, oracle: bool, trace: &SolverTrace) -> RunRecord {
        let n_sel = if oracle {
            oracle_index(&trace.entries).unwrap_or(trace.last().n)
        } else {
            trace.last().n
        };
        let x = trace.iterate(n_sel).expect("selected iterate is recorded");
        let entry = trace.entry(n_sel).expect("selected entry is recorded");
        let error = (x - &self.problem.x_exact).norm();
        self.record(trace.stop_reason, n_sel, error, entry.residual, trace.last().elapsed)
    }

    /// Record for a solver that could not start; reports `x = 0`.
    fn failed(&self, y: &RealVector) -> RunRecord {
        let n_sel = if self.method == Method::Aggregate { 0 } else { 1 };
        self.record(StopReason::Breakdown, n_sel, self.problem.x_exact.norm(), y.norm(), 0.0)
    }
}

/// Runs every (method, noise level, seed) cell of `config`.
///
/// Noise-free cells are run once with seed 0. A solver that cannot start
/// yields a breakdown record with `x = 0`. Records are sorted by cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    config.validate()?;
    let base = make_problem(config.problem, config.size)?;
    let problem = if config.smooth_solution { smooth_variant(&base) } else { base };
    let mut records = Vec::new();
    for &delta in &config.deltas {
        let seeds: &[u64] = if delta > 0.0 { &config.seeds } else { &[0] };
        for &seed in seeds {
            let sample = add_noise(&problem, delta, seed)?;
            let rule = stopping_rule(config, sample.delta_abs, &problem.x_exact)?;
            let oracle = rule.oracle_solution().is_some();
            for &method in &config.methods {
                let cell = Cell {
                    problem: &problem,
                    size: config.size,
                    method,
                    delta,
                    seed,
                    alphas: &config.alphas,
                };
                let record = match run_method(method, &problem.a, &sample.y_delta, &config.alphas, &rule) {
                    Ok(trace) => cell.traced(oracle, &trace),
                    Err(_) => cell.failed(&sample.y_delta),
                };
                records.push(record);
            }
        }
    }
    sort_records(&mut records);
    Ok(records)
}

/// Deterministic cell order: problem, method, noise level, seed.
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        let (ka, kb) = (a.cell_key(), b.cell_key());
        ka.0.cmp(kb.0)
            .then(ka.1.cmp(kb.1))
            .then(a.delta.total_cmp(&b.delta))
            .then(ka.3.cmp(&kb.3))
    });
}

/// `true` when any record stopped on a breakdown.
pub fn any_breakdown(records: &[RunRecord]) -> bool {
    records.iter().any(|r| r.stop_reason == StopReason::Breakdown.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub problem: String,
    pub method: String,
    pub smooth: bool,
    pub slope: f64,
    pub intercept: f64,
    /// Set when the errors carry no slope information (all equal).
    pub degenerate: bool,
}

/// Geometric-mean error of one method at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub problem: String,
    pub method: String,
    pub smooth: bool,
    pub delta: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub records: Vec<RunRecord>,
    pub points: Vec<RatePoint>,
    pub fits: Vec<SlopeFit>,
}

impl RateReport {
    pub fn fit(&self, method: Method, smooth: bool) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.method == method.as_str() && f.smooth == smooth)
    }
}

/// Least-squares line through `(log δ, log e)`; returns `(slope, intercept, degenerate)`.
pub fn fit_log_slope(deltas: &[f64], errors: &[f64]) -> (f64, f64, bool) {
    assert_eq!(deltas.len(), errors.len());
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let flat = ys.iter().all(|&y| y == ys[0]);
    if flat || !(sxx > 0.0) || !sxy.is_finite() {
        return (0.0, my, true);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx, false)
}

/// Error-versus-noise sweep for the default and the smooth exact solution.
///
/// Needs at least four positive noise levels spanning two decades and at
/// least three seeds; errors are averaged geometrically over seeds.
pub fn rate_sweep(config: &ExperimentConfig) -> Result<RateReport, HarnessError> {
    let mut deltas = config.deltas.clone();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    if deltas.len() < 4 || deltas[0] <= 0.0 {
        return Err(HarnessError::RateSweep("need at least 4 distinct positive noise levels".to_string()));
    }
    if deltas[deltas.len() - 1] / deltas[0] < 100.0 {
        return Err(HarnessError::RateSweep("noise levels must span at least 2 decades".to_string()));
    }
    if config.seeds.len() < 3 {
        return Err(HarnessError::RateSweep("need at least 3 seeds".to_string()));
    }
    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut fits = Vec::new();
    for smooth in [false, true] {
        let cfg = ExperimentConfig {
            smooth_solution: smooth,
            deltas: deltas.clone(),
            ..config.clone()
        };
        let recs = run_experiment(&cfg)?;
        for &method in &config.methods {
            let mut errs = Vec::new();
            for &d in &deltas {
                let logs: Vec<f64> = recs
                    .iter()
                    .filter(|r| r.method == method.as_str() && r.delta == d)
                    .map(|r| r.error.ln())
                    .collect();
                let gm = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
                points.push(RatePoint {
                    problem: recs[0].problem.clone(),
                    method: method.to_string(),
                    smooth,
                    delta: d,
                    error: gm,
                });
                errs.push(gm);
            }
            let (slope, intercept, degenerate) = fit_log_slope(&deltas, &errs);
            fits.push(SlopeFit {
                problem: config.problem.to_string(),
                method: method.to_string(),
                smooth,
                slope,
                intercept,
                degenerate,
            });
        }
        records.extend(recs);
    }
    Ok(RateReport { records, points, fits })
}

/// Formats `v` with 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_finite(records: &[RunRecord]) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    for (index, r) in records.iter().enumerate() {
        for (field, v) in [("delta", r.delta), ("error", r.error), ("residual", r.residual), ("time_s", r.time_s)] {
            if !v.is_finite() {
                return Err(HarnessError::NonFinite { index, field });
            }
        }
    }
    Ok(())
}

fn record_fields(r: &RunRecord) -> [String; 11] {
    [
        r.problem.clone(),
        r.size.to_string(),
        r.method.clone(),
        num(r.delta),
        r.seed.to_string(),
        r.stop_reason.clone(),
        r.n_stop.to_string(),
        num(r.error),
        num(r.residual),
        num(r.time_s),
        r.alpha_spec.clone(),
    ]
}

/// Writes `records` to `w` in `format`.
pub fn write_records<W: Write>(records: &[RunRecord], format: OutputFormat, mut w: W) -> Result<(), HarnessError> {
    check_finite(records)?;
    match format {
        OutputFormat::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(CSV_HEADER)?;
            for r in records {
                out.write_record(record_fields(r))?;
            }
            out.flush().map_err(|e| HarnessError::io(Path::new("<csv>"), e))?;
        }
        OutputFormat::Json => {
            let mut text = String::from("[\n");
            for (i, r) in records.iter().enumerate() {
                let fields: Vec<String> = CSV_HEADER
                    .iter()
                    .zip(record_fields(r))
                    .map(|(k, v)| {
                        let value = match *k {
                            "problem" | "method" | "stop_reason" | "alpha_spec" => serde_json::to_string(&v).expect("string"),
                            _ => v,
                        };
                        format!("\"{k}\": {value}")
                    })
                    .collect();
                text.push_str("  {");
                text.push_str(&fields.join(", "));
                text.push('}');
                text.push_str(if i + 1 < records.len() { ",\n" } else { "\n" });
            }
            text.push_str("]\n");
            w.write_all(text.as_bytes()).map_err(|e| HarnessError::io(Path::new("<json>"), e))?;
        }
    }
    Ok(())
}

/// Writes `records` to `path`.
pub fn emit(records: &[RunRecord], format: OutputFormat, path: &Path) -> Result<(), HarnessError> {
    check_finite(records)?;
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut buf = io::BufWriter::new(file);
    write_records(records, format, &mut buf)?;
    buf.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads records written by [`write_records`].
pub fn read_records<R: Read>(format: OutputFormat, r: R) -> Result<Vec<RunRecord>, HarnessError> {
    match format {
        OutputFormat::Csv => csv::Reader::from_reader(r)
            .deserialize()
            .collect::<Result<Vec<RunRecord>, _>>()
            .map_err(Into::into),
        OutputFormat::Json => Ok(serde_json::from_reader(r)?),
    }
}

pub fn load_records(path: &Path, format: OutputFormat) -> Result<Vec<RunRecord>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_records(format, io::BufReader::new(file))
}

/// Writes the slope table as CSV.
pub fn write_slopes<W: Write>(fits: &[SlopeFit], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["problem", "method", "smooth", "slope", "intercept", "degenerate"])?;
    for f in fits {
        out.write_record([
            f.problem.clone(),
            f.method.clone(),
            f.smooth.to_string(),
            num(f.slope),
            num(f.intercept),
            f.degenerate.to_string(),
        ])?;
    }
    out.flush().map_err(|e| HarnessError::io(Path::new("<csv>"), e))
}

/// Default slope-table location next to the records file.
pub fn default_slopes_path(records_path: &Path) -> PathBuf {
    let stem = records_path.file_stem().and_then(|s| s.to_str()).unwrap_or("rates");
    records_path.with_file_name(format!("{stem}_slopes.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# comment
problem.name = phillips
problem.size = 32
methods = cgne, rational_cg
";

    #[test]
    fn parses_defaults() {
        let cfg = ExperimentConfig::parse(BASIC, &[]).unwrap();
        assert_eq!(cfg.problem, ProblemName::Phillips);
        assert_eq!(cfg.size, 32);
        assert_eq!(cfg.methods, vec![Method::Cgne, Method::RationalCg]);
        assert_eq!(cfg.alphas, AlphaSchedule::PaperDefault);
        assert_eq!(cfg.deltas, vec![0.0]);
        assert_eq!(cfg.tau, 1.01);
        assert_eq!(cfg.format, OutputFormat::Csv);
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = ExperimentConfig::parse(
            BASIC,
            &[
                "stopping.tau=1.5".to_string(),
                "noise.delta = 0.01,0.001".to_string(),
                "noise.seeds=1,2".to_string(),
                "alpha.schedule=geometric".to_string(),
                "alpha.q=2".to_string(),
                "alpha.s=-4".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.tau, 1.5);
        assert_eq!(cfg.deltas, vec![0.01, 0.001]);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.alphas, AlphaSchedule::Geometric { a: 0.1, q: 2.0, s: -4 });
    }

    #[test]
    fn errors_name_the_key() {
        let err = ExperimentConfig::parse(BASIC, &["stopping.tau=abc".to_string()]).unwrap_err();
        assert_eq!(err.key(), Some("stopping.tau"));
        let err = ExperimentConfig::parse(BASIC, &["noise.delta=0.01".to_string()]).unwrap_err();
        assert_eq!(err.key(), Some("noise.seeds"));
        let err = ExperimentConfig::parse(BASIC, &["nosie.delta=0.01".to_string()]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("nosie.delta".to_string()));
        let err = ExperimentConfig::parse("problem.name = phillips\n", &[]).unwrap_err();
        assert_eq!(err, ConfigError::Missing("methods"));
        let err = ExperimentConfig::parse(BASIC, &["methods=".to_string()]).unwrap_err();
        assert_eq!(err.key(), Some("methods"));
        let err = ExperimentConfig::parse(BASIC, &["methods=cgne,lsqr".to_string()]).unwrap_err();
        assert_eq!(err.key(), Some("methods"));
        assert!(matches!(ExperimentConfig::parse("just text", &[]), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn noise_free_cell_shape() {
        let cfg = ExperimentConfig::new(ProblemName::Phillips, 64, vec![Method::Cgne]);
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(["oracle_best", "budget"].contains(&recs[0].stop_reason.as_str()));
        assert!(recs[0].n_stop >= 1);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = ExperimentConfig::new(ProblemName::Shaw, 32, Method::ALL.to_vec());
        cfg.deltas = vec![0.0, 0.01];
        cfg.seeds = vec![3, 4];
        cfg.n_max = 20;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), 5 * 3);
        assert!(a.iter().zip(&b).all(|(x, y)| x.same_result(y)));
    }

    #[test]
    fn aggregate_reports_one_iteration() {
        let mut cfg = ExperimentConfig::new(ProblemName::Phillips, 32, vec![Method::Aggregate]);
        cfg.deltas = vec![0.01];
        cfg.seeds = vec![1];
        let r = &run_experiment(&cfg).unwrap()[0];
        assert_eq!(r.n_stop, 1);
        assert!(r.alpha_spec.starts_with("paper_default;solves="), "{}", r.alpha_spec);
    }

    #[test]
    fn slope_fit_examples() {
        let d = [1e-1, 1e-2, 1e-3, 1e-4];
        let (s, _, deg) = fit_log_slope(&d, &d);
        assert!((s - 1.0).abs() < 1e-6 && !deg);
        let e: Vec<f64> = d.iter().map(|x| x.powf(2.0 / 3.0)).collect();
        let (s, _, _) = fit_log_slope(&d, &e);
        assert!((s - 2.0 / 3.0).abs() < 1e-6);
        let (s, _, deg) = fit_log_slope(&d, &[0.5; 4]);
        assert_eq!(s, 0.0);
        assert!(deg);
    }

    fn sample_record() -> RunRecord {
        RunRecord {
            problem: "phillips".to_string(),
            size: 64,
            method: "rational_cg".to_string(),
            delta: 0.01,
            seed: 7,
            stop_reason: "discrepancy".to_string(),
            n_stop: 2,
            error: 0.1 + 0.2,
            residual: 1.0 / 3.0,
            time_s: 1.25e-4,
            alpha_spec: "geometric(a=0.1;q=2;s=-4)".to_string(),
        }
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let recs = vec![sample_record()];
        let mut buf = Vec::new();
        write_records(&recs, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].contains("3.0000000000000004e-1"));
        assert_eq!(read_records(OutputFormat::Csv, buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn json_round_trip() {
        let recs = vec![sample_record(), RunRecord { seed: 8, ..sample_record() }];
        let mut buf = Vec::new();
        write_records(&recs, OutputFormat::Json, &mut buf).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let obj = parsed[0].as_object().unwrap();
        assert_eq!(obj.len(), 11);
        assert_eq!(read_records(OutputFormat::Json, buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn emit_rejects_empty_and_non_finite() {
        assert!(matches!(write_records(&[], OutputFormat::Csv, Vec::new()), Err(HarnessError::NoRecords)));
        let bad = RunRecord {
            error: f64::NAN,
            ..sample_record()
        };
        assert!(matches!(
            write_records(&[bad], OutputFormat::Json, Vec::new()),
            Err(HarnessError::NonFinite { field: "error", .. })
        ));
    }
}
