//! Regularized least-squares solvers over Krylov, rational and mixed
//! rational Krylov spaces.
//!
//! Iteration counting is 1-based throughout. Step `n = 1` is the
//! initialization, even steps `n = 2k` are rational steps using `α_k`, and
//! odd steps `n ≥ 3` are polynomial Krylov steps.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::linops::{DenseMatrix, LinopsError, RealVector};
use crate::stopping::{oracle_index, should_stop, Decision, StoppingRule};

mod arnoldi;
mod cgne;
mod lanczos;
mod rational_cg;
mod tikhonov;

pub use arnoldi::{arnoldi_kr, pentadiagonal_zero, KrylovBasis};
pub use cgne::{cgne, Cgne};
pub use lanczos::{lanczos_kr, LanczosKr};
pub use rational_cg::{rational_cg, rational_cg_complex_step, RationalCg, RationalCgComplex};
pub use tikhonov::{aggregate, tikhonov, Aggregation};

/// Relative scale below which a denominator is treated as zero.
pub const DENOM_TOL: f64 = 1e-14;

/// A residual this many times above its running minimum stops the run.
pub const STAGNATION_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Linops(#[from] LinopsError),
    #[error("normal-equation data Aᵀy is zero")]
    ZeroNormalData,
    #[error("invalid alpha schedule: {0}")]
    InvalidSchedule(String),
    #[error("alpha list is empty")]
    NoAlphas,
    #[error(
        "near-singular Gramian (pivot ratio {ratio:e}); most collinear Tikhonov columns {first} and {second} (|cos| = {cosine})"
    )]
    NearSingularGramian {
        ratio: f64,
        first: usize,
        second: usize,
        cosine: f64,
    },
}

/// Regularization parameters `α_1, α_2, …`: strictly positive, pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSchedule {
    /// `α_i = 10^(−i−1)`.
    PaperDefault,
    /// `α_i = a·q^(s−i)`.
    Geometric { a: f64, q: f64, s: i32 },
    Explicit(Vec<f64>),
}

impl AlphaSchedule {
    pub fn geometric(a: f64, q: f64, s: i32) -> Result<Self, SolverError> {
        let sched = Self::Geometric { a, q, s };
        sched.validate()?;
        Ok(sched)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self, SolverError> {
        let sched = Self::Explicit(values);
        sched.validate()?;
        Ok(sched)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        match self {
            Self::PaperDefault => Ok(()),
            Self::Geometric { a, q, .. } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(SolverError::InvalidSchedule(format!("a = {a} must be positive")));
                }
                if !(*q > 1.0 && q.is_finite()) {
                    return Err(SolverError::InvalidSchedule(format!("q = {q} must exceed 1")));
                }
                Ok(())
            }
            Self::Explicit(values) => {
                if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(SolverError::InvalidSchedule(format!("alpha {v} is not positive")));
                }
                for (i, a) in values.iter().enumerate() {
                    if values[..i].contains(a) {
                        return Err(SolverError::InvalidSchedule(format!("alpha {a} repeated")));
                    }
                }
                Ok(())
            }
        }
    }

    /// `α_k` for `k ≥ 1`; `None` once an explicit list is exhausted.
    pub fn alpha(&self, k: usize) -> Option<f64> {
        assert!(k >= 1, "alpha indices are 1-based");
        match self {
            Self::PaperDefault => Some(10f64.powi(-(k as i32) - 1)),
            Self::Geometric { a, q, s } => Some(a * q.powi(s - k as i32)),
            Self::Explicit(values) => values.get(k - 1).copied(),
        }
    }

    /// First `count` values, or fewer if the schedule runs out.
    pub fn take(&self, count: usize) -> Vec<f64> {
        (1..=count).map_while(|k| self.alpha(k)).collect()
    }

    pub fn descriptor(&self) -> String {
        match self {
            Self::PaperDefault => "paper_default".to_string(),
            Self::Geometric { a, q, s } => format!("geometric(a={a};q={q};s={s})"),
            Self::Explicit(values) => format!("explicit(n={})", values.len()),
        }
    }
}

impl fmt::Display for AlphaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

/// Per-step solver state. `r` is the normal-equation residual `𝒜x − ȳ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub n: usize,
    pub x: RealVector,
    pub r: RealVector,
    pub p: RealVector,
    pub p_old: RealVector,
    pub ls_residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Discrepancy,
    Budget,
    Breakdown,
    Stagnation,
    OracleBest,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Discrepancy => "discrepancy",
            Self::Budget => "budget",
            Self::Breakdown => "breakdown",
            Self::Stagnation => "stagnation",
            Self::OracleBest => "oracle_best",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StopReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Self::Discrepancy,
            Self::Budget,
            Self::Breakdown,
            Self::Stagnation,
            Self::OracleBest,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| format!("unknown stop reason `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub n: usize,
    /// `‖Ax_n − y‖`
    pub residual: f64,
    /// `‖x_n − x_exact‖` when the exact solution is known.
    pub error: Option<f64>,
    /// Seconds since the solver started.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub entries: Vec<TraceEntry>,
    /// `x_n` for every recorded entry, same order.
    pub iterates: Vec<RealVector>,
    pub stop_reason: StopReason,
    /// Human-readable detail for breakdown stops.
    pub note: Option<String>,
}

impl SolverTrace {
    pub fn last(&self) -> &TraceEntry {
        self.entries.last().expect("traces are never empty")
    }

    pub fn final_x(&self) -> &RealVector {
        self.iterates.last().expect("traces are never empty")
    }

    /// The reported stopping index: the error minimizer for oracle runs,
    /// otherwise the last recorded step.
    pub fn selected_index(&self) -> usize {
        match self.stop_reason {
            StopReason::OracleBest => oracle_index(&self.entries).unwrap_or(self.last().n),
            _ => self.last().n,
        }
    }

    pub fn entry(&self, n: usize) -> Option<&TraceEntry> {
        self.entries.get(n.checked_sub(1)?)
    }

    pub fn iterate(&self, n: usize) -> Option<&RealVector> {
        self.iterates.get(n.checked_sub(1)?)
    }

    pub fn selected_x(&self) -> &RealVector {
        self.iterate(self.selected_index()).expect("selected index is recorded")
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.residual).collect()
    }
}

/// Why a single step could not be carried out.
#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    Breakdown(String),
    ScheduleExhausted,
}

/// A Krylov-type iteration that can be advanced one step at a time.
pub trait KrylovIteration {
    fn state(&self) -> &IterationState;

    /// Performs step `state().n + 1`. On error the state is left at the last
    /// valid iterate.
    fn advance(&mut self) -> Result<(), StepError>;
}

/// Runs `iter` until `rule`, a breakdown or stagnation stops it.
///
/// A stagnating step (non-finite residual, or one above
/// [`STAGNATION_FACTOR`] times the best so far) is dropped from the trace.
///
/// Errors are recorded against `x_exact`, which defaults to the oracle
/// solution carried by the rule.
pub fn drive<I: KrylovIteration>(
    iter: &mut I,
    rule: &StoppingRule,
    x_exact: Option<&RealVector>,
    started: Instant,
) -> SolverTrace {
    let x_exact = x_exact.or(rule.oracle_solution());
    let mut entries = Vec::new();
    let mut iterates = Vec::new();
    let mut best = f64::INFINITY;
    let record = |st: &IterationState, entries: &mut Vec<TraceEntry>, iterates: &mut Vec<RealVector>| {
        entries.push(TraceEntry {
            n: st.n,
            residual: st.ls_residual_norm,
            error: x_exact.map(|xe| (&st.x - xe).norm()),
            elapsed: started.elapsed().as_secs_f64(),
        });
        iterates.push(st.x.clone());
    };
    record(iter.state(), &mut entries, &mut iterates);
    let mut note = None;
    let stop_reason = loop {
        if let Decision::Stop(reason) = should_stop(rule, &entries) {
            break reason;
        }
        let res = entries.last().expect("recorded").residual;
        if !res.is_finite() || res > STAGNATION_FACTOR * best {
            // the offending iterate is not kept
            if entries.len() > 1 {
                entries.pop();
                iterates.pop();
            }
            break StopReason::Stagnation;
        }
        best = best.min(res);
        match iter.advance() {
            Ok(()) => record(iter.state(), &mut entries, &mut iterates),
            Err(StepError::Breakdown(msg)) => {
                note = Some(msg);
                break StopReason::Breakdown;
            }
            Err(StepError::ScheduleExhausted) => {
                note = Some("alpha schedule exhausted".to_string());
                break StopReason::Budget;
            }
        }
    };
    SolverTrace {
        entries,
        iterates,
        stop_reason,
        note,
    }
}

/// Shared setup: `ȳ = Aᵀy`, checked nonzero.
pub(crate) fn normal_data(a: &DenseMatrix, y: &RealVector) -> Result<RealVector, SolverError> {
    let ybar = a.matvec_transpose(y)?;
    if ybar.iter().all(|&v| v == 0.0) {
        return Err(SolverError::ZeroNormalData);
    }
    Ok(ybar)
}

/// `true` when the denominator `d` is negligible against `scale` or not finite.
pub(crate) fn negligible(d: f64, scale: f64) -> bool {
    !(d.abs() > DENOM_TOL * scale) || !d.is_finite()
}
