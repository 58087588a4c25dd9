use std::time::Instant;

use nalgebra::{Matrix3, Vector3};

use super::{drive, negligible, normal_data, AlphaSchedule, IterationState, KrylovIteration, SolverError, SolverTrace, StepError};
use crate::linops::{orthonormalize_against, tikhonov_factorize, DenseMatrix, RealVector};
use crate::stopping::StoppingRule;

/// Lanczos method for the mixed rational Krylov space.
///
/// Keeps the full orthonormal basis and solves the pentadiagonal projected
/// system `T_n c_n = ‖ȳ‖e₁` by short recursions for the search directions
/// `p_n = Q_n T_n⁻¹ e_n`.
pub struct LanczosKr<'a> {
    a: &'a DenseMatrix,
    y: &'a RealVector,
    ybar: RealVector,
    alphas: &'a AlphaSchedule,
    q: Vec<RealVector>,
    // A·q_j for the last two basis vectors
    aq_prev: RealVector,
    aq_prev2: Option<RealVector>,
    tau: f64,
    tau_old: f64,
    sigma: f64,
    beta: f64,
    state: IterationState,
}

impl<'a> LanczosKr<'a> {
    pub fn new(a: &'a DenseMatrix, y: &'a RealVector, alphas: &'a AlphaSchedule) -> Result<Self, SolverError> {
        alphas.validate()?;
        let ybar = normal_data(a, y)?;
        let a_ybar = a.apply(&ybar);
        let curv = a_ybar.norm_squared();
        if !(curv > 0.0) {
            return Err(SolverError::ZeroNormalData);
        }
        let tau = ybar.norm_squared() / curv;
        let q1 = &ybar / ybar.norm();
        let aq1 = a.apply(&q1);
        let x = &ybar * tau;
        let p = &q1 * tau;
        let r = a.apply_t(&a.apply(&x)) - &ybar;
        let ls = (a.apply(&x) - y).norm();
        Ok(Self {
            a,
            y,
            alphas,
            q: vec![q1],
            aq_prev: aq1,
            aq_prev2: None,
            tau,
            tau_old: tau,
            sigma: 0.0,
            beta: 0.0,
            state: IterationState {
                n: 1,
                x,
                r,
                p_old: RealVector::zeros(p.len()),
                p,
                ls_residual_norm: ls,
            },
            ybar,
        })
    }

    /// The orthonormal basis built so far.
    pub fn basis(&self) -> &[RealVector] {
        &self.q
    }

    fn next_basis_vector(&self, v: RealVector, n: usize) -> Result<(RealVector, RealVector), StepError> {
        let (q, _) = orthonormalize_against(&v, &self.q).map_err(|e| StepError::Breakdown(format!("basis breakdown at step {n}: {e}")))?;
        let aq = self.a.apply(&q);
        Ok((q, aq))
    }

    fn finish_step(&mut self, q: RealVector, aq: RealVector) {
        let st = &mut self.state;
        self.q.push(q);
        self.aq_prev2 = Some(std::mem::replace(&mut self.aq_prev, aq));
        let ax = self.a.apply(&st.x);
        st.r = self.a.apply_t(&ax) - &self.ybar;
        st.ls_residual_norm = (ax - self.y).norm();
        st.n += 1;
    }

    fn rational_step(&mut self, n: usize) -> Result<(), StepError> {
        let alpha = self.alphas.alpha(n / 2).ok_or(StepError::ScheduleExhausted)?;
        let f = tikhonov_factorize(self.a, alpha).map_err(|e| StepError::Breakdown(e.to_string()))?;
        let q_prev = &self.q[n - 2];
        let v = f.solve(q_prev).map_err(|e| StepError::Breakdown(e.to_string()))?;
        let (q, aq) = self.next_basis_vector(v, n)?;
        let kappa = aq.norm_squared();
        let beta = self.aq_prev.dot(&aq);
        let denom = kappa - self.tau * beta * beta;
        if negligible(denom, kappa.max(self.tau.abs() * beta * beta)) {
            return Err(StepError::Breakdown(format!("κ − τβ² = {denom:e} at step {n}")));
        }
        self.tau_old = self.tau;
        self.tau = 1.0 / denom;
        self.sigma = -self.tau * beta;
        self.beta = beta;
        let xi = -beta * self.state.x.dot(q_prev);
        let st = &mut self.state;
        st.p_old = st.p.clone();
        st.p = &st.p * self.sigma + &q * self.tau;
        st.x.axpy(xi, &st.p, 1.0);
        self.finish_step(q, aq);
        Ok(())
    }

    fn krylov_step(&mut self, n: usize) -> Result<(), StepError> {
        let v = self.a.apply_t(&self.aq_prev);
        let (q, aq) = self.next_basis_vector(v, n)?;
        let aq_prev2 = self.aq_prev2.as_ref().expect("Krylov steps start at n = 3");
        let beta_old = self.beta;
        let kappa = aq.norm_squared();
        let beta = self.aq_prev.dot(&aq);
        let gamma = aq_prev2.dot(&aq);
        #[rustfmt::skip]
        let m = Matrix3::new(
            0.0, gamma, 1.0,
            1.0, beta, self.tau_old * beta_old,
            beta * self.tau + gamma * self.sigma * self.tau_old, kappa, self.tau_old * gamma,
        );
        let det = m.determinant();
        if negligible(det, m.norm().powi(3)) {
            return Err(StepError::Breakdown(format!("singular 3x3 system (det {det:e}) at step {n}")));
        }
        let coeffs = m
            .lu()
            .solve(&Vector3::new(0.0, 0.0, 1.0))
            .ok_or_else(|| StepError::Breakdown(format!("singular 3x3 system at step {n}")))?;
        let (sigma, tau, eta) = (coeffs[0], coeffs[1], coeffs[2]);
        self.tau_old = self.tau;
        self.tau = tau;
        self.sigma = sigma;
        self.beta = beta;
        let xi = -gamma * self.state.x.dot(&self.q[n - 3]) - beta * self.state.x.dot(&self.q[n - 2]);
        let st = &mut self.state;
        let p_new = &st.p * sigma + &st.p_old * eta + &q * tau;
        st.p_old = std::mem::replace(&mut st.p, p_new);
        st.x.axpy(xi, &st.p, 1.0);
        self.finish_step(q, aq);
        Ok(())
    }
}

impl KrylovIteration for LanczosKr<'_> {
    fn state(&self) -> &IterationState {
        &self.state
    }

    fn advance(&mut self) -> Result<(), StepError> {
        let n = self.state.n + 1;
        if n.is_multiple_of(2) {
            self.rational_step(n)
        } else {
            self.krylov_step(n)
        }
    }
}

/// Runs the mixed rational Lanczos method under `stop`.
pub fn lanczos_kr(a: &DenseMatrix, y: &RealVector, alphas: &AlphaSchedule, stop: &StoppingRule) -> Result<SolverTrace, SolverError> {
    let started = Instant::now();
    let mut it = LanczosKr::new(a, y, alphas)?;
    Ok(drive(&mut it, stop, None, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::StopReason;

    #[test]
    fn first_iterate_is_scaled_normal_data() {
        // ȳ = (1, 2), 𝒜ȳ = (1, 8), ⟨ȳ,ȳ⟩ = 5, ⟨𝒜ȳ,ȳ⟩ = 17
        let a = DenseMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let y = RealVector::from_column_slice(&[1.0, 1.0]);
        let sched = AlphaSchedule::PaperDefault;
        let it = LanczosKr::new(&a, &y, &sched).unwrap();
        let x = &it.state().x;
        assert!((x[0] - 5.0 / 17.0).abs() < 1e-15);
        assert!((x[1] - 10.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn identity_stops_at_first_step() {
        let y = RealVector::from_column_slice(&[2.0, -1.0, 0.5]);
        let rule = StoppingRule::discrepancy(1.01, 0.0).unwrap();
        let t = lanczos_kr(&DenseMatrix::identity(3), &y, &AlphaSchedule::PaperDefault, &rule).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.stop_reason, StopReason::Discrepancy);
        assert_eq!(t.final_x(), &y);
    }

    #[test]
    fn breakdown_keeps_last_iterate() {
        let a = DenseMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let y = RealVector::from_column_slice(&[1.0, 1.0, 1.0]);
        let t = lanczos_kr(&a, &y, &AlphaSchedule::PaperDefault, &StoppingRule::budget(10).unwrap()).unwrap();
        assert_eq!(t.stop_reason, StopReason::Breakdown);
        assert_eq!(t.last().n, 3);
        assert!(t.last().residual < 1e-12);
    }
}
