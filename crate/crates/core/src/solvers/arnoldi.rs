use nalgebra::DMatrix;

use super::{normal_data, AlphaSchedule, SolverError};
use crate::linops::{orthonormalize_against, tikhonov_factorize, DenseMatrix, LinopsError, RealVector};

/// Orthonormal basis of the mixed rational Krylov space together with the
/// projected operator `T_ij = ⟨q_i, AᵀA q_j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovBasis {
    pub q: Vec<RealVector>,
    pub t: DMatrix<f64>,
    pub alphas_used: Vec<f64>,
    /// Step at which the basis stopped growing, if it did.
    pub breakdown_at: Option<usize>,
}

impl KrylovBasis {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Largest entry of `|QᵀQ − I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, qi) in self.q.iter().enumerate() {
            for (j, qj) in self.q.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((qi.dot(qj) - target).abs());
            }
        }
        worst
    }

    /// Largest `|T_mj|` over 1-based positions where `is_zero(m, j)` holds,
    /// relative to `max |T|`.
    pub fn relative_violation(&self, is_zero: impl Fn(usize, usize) -> bool) -> f64 {
        let tmax = self.t.amax();
        if tmax == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for j in 0..self.dim() {
            for m in 0..self.dim() {
                if is_zero(m + 1, j + 1) {
                    worst = worst.max(self.t[(m, j)].abs());
                }
            }
        }
        worst / tmax
    }

    /// Violation of the pentadiagonal pattern: below the diagonal, an even
    /// column `j` is zero from row `j + 2` on and an odd column from row
    /// `j + 3` on (rows and columns 1-based).
    pub fn pentadiagonal_violation(&self) -> f64 {
        self.relative_violation(pentadiagonal_zero)
    }

    /// Asymmetry of `T` relative to `max |T|`.
    pub fn symmetry_defect(&self) -> f64 {
        let tmax = self.t.amax();
        if tmax == 0.0 {
            0.0
        } else {
            (&self.t - self.t.transpose()).amax() / tmax
        }
    }
}

/// Structural zeros of `T` (1-based row `m`, column `j`, lower triangle).
pub fn pentadiagonal_zero(m: usize, j: usize) -> bool {
    if j.is_multiple_of(2) {
        m >= j + 2
    } else {
        m >= j + 3
    }
}

/// Arnoldi process for the mixed rational Krylov space.
///
/// `q₁ = ȳ/‖ȳ‖`; step `i = 2k` orthonormalizes `(AᵀA + α_k I)⁻¹ q_{i−1}`,
/// odd steps orthonormalize `AᵀA q_{i−1}`. A breakdown truncates the basis.
pub fn arnoldi_kr(a: &DenseMatrix, y: &RealVector, alphas: &AlphaSchedule, n_max: usize) -> Result<KrylovBasis, SolverError> {
    alphas.validate()?;
    let ybar = normal_data(a, y)?;
    let mut q = vec![&ybar / ybar.norm()];
    let mut images = vec![a.apply(&q[0])];
    let mut alphas_used = Vec::new();
    let mut breakdown_at = None;

    for i in 2..=n_max.max(1) {
        let prev = &q[i - 2];
        let v = if i % 2 == 0 {
            let Some(alpha) = alphas.alpha(i / 2) else {
                break;
            };
            alphas_used.push(alpha);
            match tikhonov_factorize(a, alpha) {
                Ok(f) => f.solve(prev)?,
                Err(LinopsError::Factorization { .. }) => {
                    breakdown_at = Some(i);
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            a.apply_t(&images[i - 2])
        };
        match orthonormalize_against(&v, &q) {
            Ok((qi, _)) => {
                images.push(a.apply(&qi));
                q.push(qi);
            }
            Err(LinopsError::Breakdown { .. }) => {
                breakdown_at = Some(i);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }

    let n = q.len();
    let t = DMatrix::from_fn(n, n, |i, j| images[i].dot(&images[j]));
    Ok(KrylovBasis {
        q,
        t,
        alphas_used,
        breakdown_at,
    })
}
