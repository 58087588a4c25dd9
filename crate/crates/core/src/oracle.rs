//! Brute-force reference computations used to certify the solvers.
//!
//! The mixed rational Krylov space is built here from its definition,
//! `span{ȳ, (𝒜+α₁I)⁻¹ȳ, 𝒜ȳ, (𝒜+α₂I)⁻¹ȳ, 𝒜²ȳ, …}`, without any
//! orthogonalization, and shifted systems are solved by QR of the stacked
//! matrix `[A; √α I]`. Nothing here shares code with the iterative solvers
//! beyond matrix-vector products.

use nalgebra::{DMatrix, DVector};

use crate::linops::{dense_least_squares, DenseMatrix, RealVector};
use crate::solvers::AlphaSchedule;

/// Relative singular-value threshold for the effective rank of a basis.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Definition-order spanning set of the mixed rational Krylov space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitBasis {
    pub columns: Vec<RealVector>,
    pub n: usize,
    pub effective_rank: usize,
}

impl ExplicitBasis {
    /// Singular values of the column-normalized basis matrix, descending.
    pub fn normalized_singular_values(&self) -> Vec<f64> {
        normalized_singular_values(&self.columns)
    }

    /// `σ_min / σ_max` of the column-normalized basis.
    pub fn condition_ratio(&self) -> f64 {
        let s = self.normalized_singular_values();
        match (s.first(), s.last()) {
            (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
            _ => 0.0,
        }
    }

    /// Orthonormal basis of the numerically retained span.
    pub fn orthonormal_span(&self) -> Vec<RealVector> {
        orthonormal_span(&self.columns)
    }
}

fn normalized_matrix(columns: &[RealVector]) -> DMatrix<f64> {
    let cols: Vec<RealVector> = columns
        .iter()
        .map(|c| {
            let nrm = c.norm();
            if nrm > 0.0 {
                c / nrm
            } else {
                c.clone()
            }
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn normalized_singular_values(columns: &[RealVector]) -> Vec<f64> {
    if columns.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = normalized_matrix(columns).svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn orthonormal_span(columns: &[RealVector]) -> Vec<RealVector> {
    if columns.is_empty() {
        return Vec::new();
    }
    let svd = normalized_matrix(columns).svd(true, false);
    let smax = svd.singular_values.max();
    let u = svd.u.expect("requested U");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax > 0.0 && s > RANK_THRESHOLD * smax)
        .map(|(i, _)| u.column(i).into_owned())
        .collect()
}

fn rank_of(columns: &[RealVector]) -> usize {
    let s = normalized_singular_values(columns);
    match s.first() {
        Some(&hi) if hi > 0.0 => s.iter().filter(|&&v| v > RANK_THRESHOLD * hi).count(),
        _ => 0,
    }
}

/// `(𝒜 + αI)⁻¹ȳ` as the minimizer of `‖[A; √α I]x − [y; 0]‖`, by Householder
/// QR of the stacked matrix. This never forms `𝒜` and so avoids squaring the
/// condition number.
pub fn shifted_solve(a: &DenseMatrix, y: &RealVector, alpha: f64) -> Option<RealVector> {
    let (m, n) = (a.rows(), a.cols());
    let mut stacked = DMatrix::zeros(m + n, n);
    stacked.rows_mut(0, m).copy_from(a.as_dmatrix());
    stacked.rows_mut(m, n).fill_diagonal(alpha.sqrt());
    let mut rhs = RealVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(y);
    let qr = stacked.qr();
    let qty = qr.q().tr_mul(&rhs);
    qr.r().solve_upper_triangular(&qty)
}

/// The first `n` spanning vectors of the mixed rational Krylov space in
/// definition order.
pub fn explicit_basis(a: &DenseMatrix, y: &RealVector, alphas: &AlphaSchedule, n: usize) -> ExplicitBasis {
    let ybar = a.matvec_transpose(y).expect("consistent dimensions");
    let mut columns = Vec::with_capacity(n);
    let mut power = ybar.clone();
    for i in 1..=n {
        let col = if i == 1 {
            ybar.clone()
        } else if i % 2 == 0 {
            let Some(alpha) = alphas.alpha(i / 2) else { break };
            match shifted_solve(a, y, alpha) {
                Some(v) => v,
                None => break,
            }
        } else {
            power = a.gram_apply(&power).expect("consistent dimensions");
            power.clone()
        };
        columns.push(col);
    }
    let effective_rank = rank_of(&columns);
    ExplicitBasis { columns, n, effective_rank }
}

/// Least-squares minimizer of `‖Ax − y‖` over the span of `basis`.
///
/// Directions whose singular value falls below [`RANK_THRESHOLD`] of the
/// largest are dropped before solving.
pub fn lsq_over_subspace(a: &DenseMatrix, y: &RealVector, basis: &ExplicitBasis) -> (RealVector, f64) {
    lsq_over_columns(a, y, &basis.columns)
}

pub fn lsq_over_columns(a: &DenseMatrix, y: &RealVector, columns: &[RealVector]) -> (RealVector, f64) {
    let mut span = orthonormal_span(columns);
    // Directions annihilated by A cannot be resolved either.
    loop {
        if span.is_empty() {
            return (RealVector::zeros(a.cols()), y.norm());
        }
        let images: Vec<RealVector> = span.iter().map(|q| a.apply(q)).collect();
        let b = DenseMatrix::new(DMatrix::from_columns(&images)).expect("finite images");
        match dense_least_squares(&b, y) {
            Ok(c) => {
                let mut x = RealVector::zeros(a.cols());
                for (ci, qi) in c.iter().zip(&span) {
                    x.axpy(*ci, qi, 1.0);
                }
                let res = (a.apply(&x) - y).norm();
                return (x, res);
            }
            Err(_) => {
                // drop the direction with the weakest image and retry
                let (weakest, _) = images
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                    .expect("nonempty");
                span.remove(weakest);
            }
        }
    }
}

/// Smallest `n ≤ n_max` at which the explicit basis loses rank.
pub fn detect_breakdown(a: &DenseMatrix, y: &RealVector, alphas: &AlphaSchedule, n_max: usize) -> Option<usize> {
    let full = explicit_basis(a, y, alphas, n_max);
    (1..=full.columns.len()).find(|&n| rank_of(&full.columns[..n]) < n)
}

/// Dense SVD singular values of `a`, descending.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.as_dmatrix().clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Rank of the concatenation of two column sets, at [`RANK_THRESHOLD`].
pub fn joint_rank(first: &[RealVector], second: &[RealVector]) -> usize {
    let all: Vec<RealVector> = first.iter().chain(second).cloned().collect();
    rank_of(&all)
}

/// `(A·B)` where `B` stacks `columns`; exposed for diagnostics.
pub fn basis_images(a: &DenseMatrix, columns: &[RealVector]) -> DMatrix<f64> {
    let images: Vec<DVector<f64>> = columns.iter().map(|c| a.apply(c)).collect();
    DMatrix::from_columns(&images)
}
