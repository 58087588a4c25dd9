//! Stopping rules shared by all iterative solvers.

use thiserror::Error;

use crate::linops::RealVector;
use crate::solvers::{StopReason, TraceEntry};

/// Iteration budget implied by every discrepancy rule.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Discrepancy safety factor used for the experiment tables.
pub const DEFAULT_TAU: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoppingError {
    #[error("discrepancy factor tau must exceed 1, got {0}")]
    TauTooSmall(f64),
    #[error("noise level must be nonnegative and finite, got {0}")]
    InvalidDelta(f64),
    #[error("iteration budget must be at least 1")]
    ZeroBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    /// First `n` with `‖Ax_n − y‖ ≤ τ·δ`, capped at [`DEFAULT_MAX_ITER`].
    Discrepancy { tau: f64, delta_abs: f64 },
    Budget { n_max: usize },
    /// Runs to `n_max`; the iterate with the smallest error against
    /// `x_exact` is selected afterwards.
    OracleBest { x_exact: RealVector, n_max: usize },
    Composite(Vec<StoppingRule>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop(StopReason),
}

impl StoppingRule {
    pub fn discrepancy(tau: f64, delta_abs: f64) -> Result<Self, StoppingError> {
        if !(tau > 1.0) || !tau.is_finite() {
            return Err(StoppingError::TauTooSmall(tau));
        }
        if !(delta_abs >= 0.0) || !delta_abs.is_finite() {
            return Err(StoppingError::InvalidDelta(delta_abs));
        }
        Ok(Self::Discrepancy { tau, delta_abs })
    }

    pub fn budget(n_max: usize) -> Result<Self, StoppingError> {
        if n_max == 0 {
            return Err(StoppingError::ZeroBudget);
        }
        Ok(Self::Budget { n_max })
    }

    pub fn oracle_best(x_exact: RealVector, n_max: usize) -> Result<Self, StoppingError> {
        if n_max == 0 {
            return Err(StoppingError::ZeroBudget);
        }
        Ok(Self::OracleBest { x_exact, n_max })
    }

    /// The exact solution carried by an oracle rule, if any member has one.
    pub fn oracle_solution(&self) -> Option<&RealVector> {
        match self {
            Self::OracleBest { x_exact, .. } => Some(x_exact),
            Self::Composite(rules) => rules.iter().find_map(Self::oracle_solution),
            _ => None,
        }
    }

    /// Largest iteration count this rule can reach.
    pub fn max_iterations(&self) -> usize {
        match self {
            Self::Discrepancy { .. } => DEFAULT_MAX_ITER,
            Self::Budget { n_max } | Self::OracleBest { n_max, .. } => *n_max,
            Self::Composite(rules) => rules.iter().map(Self::max_iterations).min().unwrap_or(DEFAULT_MAX_ITER),
        }
    }
}

/// Decides whether to stop after the last entry of `trace`.
pub fn should_stop(rule: &StoppingRule, trace: &[TraceEntry]) -> Decision {
    let Some(last) = trace.last() else {
        return Decision::Continue;
    };
    match rule {
        StoppingRule::Discrepancy { tau, delta_abs } => {
            if last.residual <= tau * delta_abs {
                Decision::Stop(StopReason::Discrepancy)
            } else if last.n >= DEFAULT_MAX_ITER {
                Decision::Stop(StopReason::Budget)
            } else {
                Decision::Continue
            }
        }
        StoppingRule::Budget { n_max } => {
            if last.n >= *n_max {
                Decision::Stop(StopReason::Budget)
            } else {
                Decision::Continue
            }
        }
        StoppingRule::OracleBest { n_max, .. } => {
            if last.n >= *n_max {
                Decision::Stop(StopReason::OracleBest)
            } else {
                Decision::Continue
            }
        }
        StoppingRule::Composite(rules) => rules
            .iter()
            .map(|r| should_stop(r, trace))
            .find(|d| matches!(d, Decision::Stop(_)))
            .unwrap_or(Decision::Continue),
    }
}

/// Index (1-based `n`) of the entry with the smallest recorded error.
pub fn oracle_index(trace: &[TraceEntry]) -> Option<usize> {
    trace
        .iter()
        .filter_map(|e| e.error.map(|err| (e.n, err)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, _)| n)
}
