use nalgebra::DMatrix;

use super::SolverError;
use crate::linops::{dense_least_squares, tikhonov_factorize, DenseMatrix, LinopsError, RealVector};

/// `x_α = (AᵀA + αI)⁻¹Aᵀy`.
pub fn tikhonov(a: &DenseMatrix, y: &RealVector, alpha: f64) -> Result<RealVector, SolverError> {
    let ybar = a.matvec_transpose(y)?;
    Ok(tikhonov_factorize(a, alpha)?.solve(&ybar)?)
}

/// Result of the aggregation method.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub x: RealVector,
    pub coefficients: RealVector,
    /// The individual Tikhonov solutions `x_{α_i}`.
    pub tikhonov_solutions: Vec<RealVector>,
    pub residual: f64,
}

/// Least-squares optimal linear combination of the Tikhonov solutions for
/// `alphas`.
///
/// The Gramian system `G c = g` with `G_ij = ⟨Ax_i, Ax_j⟩`, `g_i = ⟨y, Ax_i⟩`
/// is solved as the equivalent least-squares problem over the stacked
/// columns `Ax_i`, which avoids squaring their condition number.
pub fn aggregate(a: &DenseMatrix, y: &RealVector, alphas: &[f64]) -> Result<Aggregation, SolverError> {
    if alphas.is_empty() {
        return Err(SolverError::NoAlphas);
    }
    let ybar = a.matvec_transpose(y)?;
    let xs = alphas
        .iter()
        .map(|&alpha| tikhonov_factorize(a, alpha)?.solve(&ybar))
        .collect::<Result<Vec<_>, _>>()?;
    let images: Vec<RealVector> = xs.iter().map(|x| a.apply(x)).collect();
    let stacked = DenseMatrix::new(DMatrix::from_columns(&images))?;
    let coefficients = match dense_least_squares(&stacked, y) {
        Ok(c) => c,
        Err(LinopsError::NearSingular { ratio, .. }) => {
            let (first, second, cosine) = most_collinear(&images);
            return Err(SolverError::NearSingularGramian {
                ratio,
                first,
                second,
                cosine,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let mut x = RealVector::zeros(a.cols());
    for (c, xi) in coefficients.iter().zip(&xs) {
        x.axpy(*c, xi, 1.0);
    }
    let residual = (a.apply(&x) - y).norm();
    Ok(Aggregation {
        x,
        coefficients,
        tikhonov_solutions: xs,
        residual,
    })
}

/// 1-based indices of the pair of columns with the largest `|cos|`.
fn most_collinear(cols: &[RealVector]) -> (usize, usize, f64) {
    let mut best = (1, 1, 0.0);
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            let denom = cols[i].norm() * cols[j].norm();
            let c = if denom > 0.0 { (cols[i].dot(&cols[j]) / denom).abs() } else { 1.0 };
            if c >= best.2 {
                best = (i + 1, j + 1, c);
            }
        }
    }
    best
}
