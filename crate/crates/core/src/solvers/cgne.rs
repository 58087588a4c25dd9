use std::time::Instant;

use super::{drive, IterationState, KrylovIteration, SolverError, SolverTrace, StepError, StopReason, TraceEntry};
use crate::linops::{DenseMatrix, RealVector};
use crate::stopping::StoppingRule;

/// Conjugate gradients on `AᵀA x = Aᵀy` from `x₀ = 0`.
///
/// Step `n` minimizes `‖Ax − y‖` over `span{ȳ, 𝒜ȳ, …, 𝒜^(n−1)ȳ}`.
pub struct Cgne<'a> {
    a: &'a DenseMatrix,
    y: &'a RealVector,
    state: IterationState,
    // ȳ − 𝒜x, the negated normal residual
    g: RealVector,
    g_norm_sq: f64,
}

impl<'a> Cgne<'a> {
    pub fn new(a: &'a DenseMatrix, y: &'a RealVector) -> Result<Self, SolverError> {
        let ybar = a.matvec_transpose(y)?;
        let zero = RealVector::zeros(a.cols());
        let g_norm_sq = ybar.norm_squared();
        if g_norm_sq == 0.0 {
            return Err(SolverError::ZeroNormalData);
        }
        let mut it = Self {
            a,
            y,
            state: IterationState {
                n: 0,
                x: zero.clone(),
                r: -&ybar,
                p: ybar.clone(),
                p_old: zero,
                ls_residual_norm: y.norm(),
            },
            g: ybar,
            g_norm_sq,
        };
        it.advance().map_err(|_| SolverError::ZeroNormalData)?;
        Ok(it)
    }
}

impl KrylovIteration for Cgne<'_> {
    fn state(&self) -> &IterationState {
        &self.state
    }

    fn advance(&mut self) -> Result<(), StepError> {
        let st = &mut self.state;
        let ap = self.a.apply(&st.p);
        let curv = ap.norm_squared();
        if !(curv > 0.0) {
            return Err(StepError::Breakdown(format!("<Ap, Ap> = {curv:e} at step {}", st.n + 1)));
        }
        let step = self.g_norm_sq / curv;
        st.x.axpy(step, &st.p, 1.0);
        self.g.axpy(-step, &self.a.apply_t(&ap), 1.0);
        let g_new = self.g.norm_squared();
        let beta = g_new / self.g_norm_sq;
        self.g_norm_sq = g_new;
        st.p_old = st.p.clone();
        st.p = &self.g + &st.p * beta;
        st.r = -&self.g;
        st.ls_residual_norm = (self.a.apply(&st.x) - self.y).norm();
        st.n += 1;
        if g_new == 0.0 {
            // exact solve; further steps would divide by zero
            st.p.fill(0.0);
        }
        Ok(())
    }
}

/// Runs CGNE under `stop`. `ȳ = 0` yields `x = 0` with a stagnation stop.
pub fn cgne(a: &DenseMatrix, y: &RealVector, stop: &StoppingRule) -> Result<SolverTrace, SolverError> {
    let started = Instant::now();
    let mut it = match Cgne::new(a, y) {
        Ok(it) => it,
        Err(SolverError::ZeroNormalData) => return Ok(SolverTrace {
            entries: vec![TraceEntry {
                n: 1,
                residual: y.norm(),
                error: stop.oracle_solution().map(|xe| xe.norm()),
                elapsed: started.elapsed().as_secs_f64(),
            }],
            iterates: vec![RealVector::zeros(a.cols())],
            stop_reason: StopReason::Stagnation,
            note: Some("Aᵀy = 0".to_string()),
        }),
        Err(e) => return Err(e),
    };
    Ok(drive(&mut it, stop, None, started))
}
