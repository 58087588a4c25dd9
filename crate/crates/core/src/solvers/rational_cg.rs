use std::time::Instant;

use nalgebra::{Complex, DVector};

use super::{drive, negligible, normal_data, AlphaSchedule, IterationState, KrylovIteration, SolverError, SolverTrace, StepError};
use crate::linops::{tikhonov_factorize, DenseMatrix, RealVector, TikhonovFactorization};
use crate::stopping::StoppingRule;

/// How the rational step builds its new direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RationalUpdate {
    /// `(s, t) = (𝒜+αI)⁻¹(p, r)`, two real right-hand sides.
    TwoSolves,
    /// `u = (𝒜+αI)⁻¹(p + i·r)`, one complex right-hand side.
    ComplexSolve,
}

/// Rational CG: short-recurrence iteration whose `n`-th iterate minimizes
/// `‖Ax − y‖` over the mixed rational Krylov space of dimension `n`.
///
/// No basis is stored. Inner products `⟨𝒜u, v⟩` are always formed as
/// `⟨Au, Av⟩`.
pub struct RationalCg<'a> {
    a: &'a DenseMatrix,
    y: &'a RealVector,
    alphas: &'a AlphaSchedule,
    update: RationalUpdate,
    // ‖A‖_F², bounds ‖𝒜‖ for the breakdown guard
    op_scale: f64,
    ap: RealVector,
    ap_old: RealVector,
    state: IterationState,
}

/// Rational CG with the single complex solve per rational step.
pub struct RationalCgComplex<'a>(RationalCg<'a>);

impl<'a> RationalCg<'a> {
    pub fn new(a: &'a DenseMatrix, y: &'a RealVector, alphas: &'a AlphaSchedule) -> Result<Self, SolverError> {
        Self::with_update(a, y, alphas, RationalUpdate::TwoSolves)
    }

    fn with_update(a: &'a DenseMatrix, y: &'a RealVector, alphas: &'a AlphaSchedule, update: RationalUpdate) -> Result<Self, SolverError> {
        alphas.validate()?;
        let ybar = normal_data(a, y)?;
        let a_ybar = a.apply(&ybar);
        let curv = a_ybar.norm_squared();
        if !(curv > 0.0) {
            return Err(SolverError::ZeroNormalData);
        }
        let x = &ybar * (ybar.norm_squared() / curv);
        let ax = a.apply(&x);
        let r = a.apply_t(&ax) - &ybar;
        let ls = (&ax - y).norm();
        Ok(Self {
            a,
            y,
            alphas,
            update,
            op_scale: a.frobenius_norm().powi(2),
            ap: ax,
            ap_old: RealVector::zeros(y.len()),
            state: IterationState {
                n: 1,
                p: x.clone(),
                p_old: RealVector::zeros(x.len()),
                x,
                r,
                ls_residual_norm: ls,
            },
        })
    }

    fn factorize(&self, n: usize) -> Result<TikhonovFactorization, StepError> {
        let alpha = self.alphas.alpha(n / 2).ok_or(StepError::ScheduleExhausted)?;
        tikhonov_factorize(self.a, alpha).map_err(|e| StepError::Breakdown(e.to_string()))
    }

    /// New direction for a rational step `n = 2k`.
    fn rational_direction(&self, n: usize) -> Result<RealVector, StepError> {
        let f = self.factorize(n)?;
        let st = &self.state;
        let breakdown = |e: crate::linops::LinopsError| StepError::Breakdown(e.to_string());
        match self.update {
            RationalUpdate::TwoSolves => {
                let mut sols = f.solve_multi(&[st.p.clone(), st.r.clone()]).map_err(breakdown)?;
                let t = sols.pop().expect("two solutions");
                let s = sols.pop().expect("two solutions");
                let a_s = self.a.apply(&s);
                let denom = self.ap.dot(&a_s);
                if negligible(denom, self.ap.norm() * a_s.norm()) {
                    return Err(StepError::Breakdown(format!("<𝒜p, s> = {denom:e} at step {n}")));
                }
                let zeta = -self.a.apply(&st.r).dot(&a_s) / denom;
                Ok(s * zeta + t)
            }
            RationalUpdate::ComplexSolve => {
                let rhs = DVector::from_fn(st.p.len(), |i, _| Complex::new(st.p[i], st.r[i]));
                let u = f.solve_complex(&rhs).map_err(breakdown)?;
                let (s, t) = (u.map(|z| z.re), u.map(|z| z.im));
                let (a_s, a_t) = (self.a.apply(&s), self.a.apply(&t));
                // Im[⟨𝒜p, ū⟩·u] = ⟨𝒜p, s⟩ t − ⟨𝒜p, t⟩ s
                let c = Complex::new(self.ap.dot(&a_s), -self.ap.dot(&a_t));
                if negligible(c.re, self.ap.norm() * a_s.norm()) {
                    return Err(StepError::Breakdown(format!("<𝒜p, s> = {:e} at step {n}", c.re)));
                }
                Ok(u.map(|z| (c * z).im))
            }
        }
    }

    /// New direction for a Krylov step `n = 2k + 1`.
    fn krylov_direction(&self, n: usize) -> Result<RealVector, StepError> {
        let st = &self.state;
        let ar = self.a.apply(&st.r);
        let c1 = self.ap.norm_squared();
        let c2 = self.ap_old.norm_squared();
        if !(c1 > 0.0) || !(c2 > 0.0) {
            return Err(StepError::Breakdown(format!("vanishing curvature at step {n}")));
        }
        let b1 = ar.dot(&self.ap) / c1;
        let b2 = ar.dot(&self.ap_old) / c2;
        Ok(&st.r - &st.p * b1 - &st.p_old * b2)
    }
}

impl KrylovIteration for RationalCg<'_> {
    fn state(&self) -> &IterationState {
        &self.state
    }

    fn advance(&mut self) -> Result<(), StepError> {
        let n = self.state.n + 1;
        let p_new = if n.is_multiple_of(2) {
            self.rational_direction(n)?
        } else {
            self.krylov_direction(n)?
        };
        let ap_new = self.a.apply(&p_new);
        let curv = ap_new.norm_squared();
        let gp = self.a.apply_t(&ap_new);
        if negligible(gp.norm(), self.op_scale * p_new.norm()) || !(curv > 0.0) {
            return Err(StepError::Breakdown(format!("𝒜p = 0 at step {n}")));
        }
        let st = &mut self.state;
        let eta = st.r.dot(&p_new) / curv;
        st.x.axpy(-eta, &p_new, 1.0);
        st.r.axpy(-eta, &gp, 1.0);
        st.p_old = std::mem::replace(&mut st.p, p_new);
        self.ap_old = std::mem::replace(&mut self.ap, ap_new);
        st.ls_residual_norm = (self.a.apply(&st.x) - self.y).norm();
        st.n = n;
        Ok(())
    }
}

impl<'a> RationalCgComplex<'a> {
    pub fn new(a: &'a DenseMatrix, y: &'a RealVector, alphas: &'a AlphaSchedule) -> Result<Self, SolverError> {
        RationalCg::with_update(a, y, alphas, RationalUpdate::ComplexSolve).map(Self)
    }
}

impl KrylovIteration for RationalCgComplex<'_> {
    fn state(&self) -> &IterationState {
        self.0.state()
    }

    fn advance(&mut self) -> Result<(), StepError> {
        self.0.advance()
    }
}

/// Runs rational CG under `stop`.
pub fn rational_cg(a: &DenseMatrix, y: &RealVector, alphas: &AlphaSchedule, stop: &StoppingRule) -> Result<SolverTrace, SolverError> {
    let started = Instant::now();
    let mut it = RationalCg::new(a, y, alphas)?;
    Ok(drive(&mut it, stop, None, started))
}

/// Rational CG variant solving one complex system per rational step.
pub fn rational_cg_complex_step(
    a: &DenseMatrix,
    y: &RealVector,
    alphas: &AlphaSchedule,
    stop: &StoppingRule,
) -> Result<SolverTrace, SolverError> {
    let started = Instant::now();
    let mut it = RationalCgComplex::new(a, y, alphas)?;
    Ok(drive(&mut it, stop, None, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::StopReason;

    #[test]
    fn identity_is_solved_at_initialization() {
        let y = RealVector::from_column_slice(&[1.5, -2.0, 0.25, 4.0]);
        let rule = StoppingRule::discrepancy(1.01, 0.0).unwrap();
        let t = rational_cg(&DenseMatrix::identity(4), &y, &AlphaSchedule::PaperDefault, &rule).unwrap();
        assert_eq!(t.stop_reason, StopReason::Discrepancy);
        assert_eq!(t.last().n, 1);
        assert_eq!(t.final_x(), &y);
    }

    #[test]
    fn identity_breaks_down_without_discrepancy() {
        let y = RealVector::from_column_slice(&[1.0, 2.0]);
        let t = rational_cg(&DenseMatrix::identity(2), &y, &AlphaSchedule::PaperDefault, &StoppingRule::budget(5).unwrap()).unwrap();
        assert_eq!(t.stop_reason, StopReason::Breakdown);
        assert!((t.final_x() - &y).amax() <= 1e-12);
    }

    #[test]
    fn complex_variant_scalar_case_is_parallel() {
        // A = I, α = 1: u = (p + i r)/2, so the direction is a multiple of the real one
        let a = DenseMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let y = RealVector::from_column_slice(&[1.0, 1.0]);
        let sched = AlphaSchedule::explicit(vec![1.0, 0.5]).unwrap();
        let mut real = RationalCg::new(&a, &y, &sched).unwrap();
        let mut cplx = RationalCgComplex::new(&a, &y, &sched).unwrap();
        let pr = real.rational_direction(2).unwrap();
        let pc = cplx.0.rational_direction(2).unwrap();
        let cos = pr.dot(&pc) / (pr.norm() * pc.norm());
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        real.advance().unwrap();
        cplx.advance().unwrap();
        assert!((&real.state().x - &cplx.state().x).amax() < 1e-12);
    }

    #[test]
    fn exhausted_schedule_stops_with_budget() {
        let a = DenseMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = RealVector::from_column_slice(&[1.0, 1.0, 1.0, 1.0]);
        let sched = AlphaSchedule::explicit(vec![0.3]).unwrap();
        let t = rational_cg(&a, &y, &sched, &StoppingRule::budget(10).unwrap()).unwrap();
        assert_eq!(t.stop_reason, StopReason::Budget);
        assert_eq!(t.last().n, 3);
    }
}
