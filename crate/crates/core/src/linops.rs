//! Dense vector/matrix primitives and the regularized normal-equation solves.
//!
//! The normal matrix `AᵀA` is only ever formed inside [`tikhonov_factorize`];
//! every other operation applies `A` and `Aᵀ` as two matrix-vector products.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// Real column vector. All solver quantities (`x`, `r`, `p`, `ȳ`, ...) use this.
pub type RealVector = DVector<f64>;

/// Relative breakdown threshold for [`orthonormalize_against`].
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Pivot-ratio threshold below which [`dense_least_squares`] refuses to solve.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinopsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("regularization parameter must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("Cholesky breakdown for alpha = {alpha:e} at pivot {pivot} (value {value:e})")]
    Factorization { alpha: f64, pivot: usize, value: f64 },
    #[error("near-singular least-squares system: pivot ratio {ratio:e} at column {column}")]
    NearSingular { ratio: f64, column: usize },
    #[error("breakdown: orthogonalized norm ratio {ratio:e} below tolerance")]
    Breakdown { ratio: f64 },
}

/// Dense real matrix with `(i, j)` indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    /// Wraps an nalgebra matrix, rejecting empty shapes and non-finite entries.
    pub fn new(inner: DMatrix<f64>) -> Result<Self, LinopsError> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(LinopsError::Empty);
        }
        for j in 0..inner.ncols() {
            for i in 0..inner.nrows() {
                if !inner[(i, j)].is_finite() {
                    return Err(LinopsError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { inner })
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self, LinopsError> {
        if data.len() != rows * cols {
            return Err(LinopsError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self, LinopsError> {
        Self::new(DMatrix::from_fn(rows, cols, f))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is finite")
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self, LinopsError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// `A·x`.
    pub fn matvec(&self, x: &RealVector) -> Result<RealVector, LinopsError> {
        check_len(self.cols(), x.len())?;
        Ok(&self.inner * x)
    }

    /// `Aᵀ·y`.
    pub fn matvec_transpose(&self, y: &RealVector) -> Result<RealVector, LinopsError> {
        check_len(self.rows(), y.len())?;
        Ok(self.inner.tr_mul(y))
    }

    /// `Aᵀ(A·x)`, the normal operator applied without forming `AᵀA`.
    pub fn gram_apply(&self, x: &RealVector) -> Result<RealVector, LinopsError> {
        let ax = self.matvec(x)?;
        Ok(self.inner.tr_mul(&ax))
    }

    pub(crate) fn apply(&self, x: &RealVector) -> RealVector {
        &self.inner * x
    }

    pub(crate) fn apply_t(&self, y: &RealVector) -> RealVector {
        self.inner.tr_mul(y)
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), LinopsError> {
    if expected == got {
        Ok(())
    } else {
        Err(LinopsError::DimensionMismatch { expected, got })
    }
}

/// Free-function form of [`DenseMatrix::matvec`].
pub fn matvec(a: &DenseMatrix, x: &RealVector) -> Result<RealVector, LinopsError> {
    a.matvec(x)
}

/// Free-function form of [`DenseMatrix::gram_apply`].
pub fn gram_apply(a: &DenseMatrix, x: &RealVector) -> Result<RealVector, LinopsError> {
    a.gram_apply(x)
}

/// Cholesky factor `L` of `AᵀA + αI`, reusable for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct TikhonovFactorization {
    alpha: f64,
    // lower triangle, column-major
    factor: DMatrix<f64>,
}

/// Factorizes `AᵀA + αI` by a dense Cholesky decomposition.
pub fn tikhonov_factorize(a: &DenseMatrix, alpha: f64) -> Result<TikhonovFactorization, LinopsError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(LinopsError::InvalidAlpha(alpha));
    }
    let n = a.cols();
    let mut m = a.inner.tr_mul(&a.inner);
    for i in 0..n {
        m[(i, i)] += alpha;
    }
    // Left-looking Cholesky on the lower triangle.
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= m[(j, k)] * m[(j, k)];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(LinopsError::Factorization { alpha, pivot: j, value: d });
        }
        let d = d.sqrt();
        m[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= m[(i, k)] * m[(j, k)];
            }
            m[(i, j)] = s / d;
        }
    }
    for j in 1..n {
        for i in 0..j {
            m[(i, j)] = 0.0;
        }
    }
    Ok(TikhonovFactorization { alpha, factor: m })
}

impl TikhonovFactorization {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Solves `(AᵀA + αI)·x = rhs`.
    pub fn solve(&self, rhs: &RealVector) -> Result<RealVector, LinopsError> {
        check_len(self.dim(), rhs.len())?;
        let mut x = rhs.clone();
        self.substitute(x.as_mut_slice());
        Ok(x)
    }

    /// One factorization, many back-substitutions.
    pub fn solve_multi(&self, rhs_list: &[RealVector]) -> Result<Vec<RealVector>, LinopsError> {
        rhs_list.iter().map(|b| self.solve(b)).collect()
    }

    /// Solves with a complex right-hand side using the same real factor.
    pub fn solve_complex(&self, rhs: &DVector<Complex<f64>>) -> Result<DVector<Complex<f64>>, LinopsError> {
        check_len(self.dim(), rhs.len())?;
        let mut x = rhs.clone();
        self.substitute(x.as_mut_slice());
        Ok(x)
    }

    fn substitute<T>(&self, x: &mut [T])
    where
        T: Copy + std::ops::SubAssign + std::ops::Mul<f64, Output = T> + std::ops::Div<f64, Output = T>,
    {
        let n = self.dim();
        let l = &self.factor;
        // L z = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= x[k] * l[(i, k)];
            }
            x[i] = s / l[(i, i)];
        }
        // Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= x[k] * l[(k, i)];
            }
            x[i] = s / l[(i, i)];
        }
    }
}

/// Free-function form of [`TikhonovFactorization::solve_multi`].
pub fn tikhonov_solve_multi(f: &TikhonovFactorization, rhs_list: &[RealVector]) -> Result<Vec<RealVector>, LinopsError> {
    f.solve_multi(rhs_list)
}

/// Minimizes `‖B·c − y‖` by Householder QR.
///
/// Fails with [`LinopsError::NearSingular`] when some `|R_jj|` falls below
/// [`RANK_TOL`] times the largest diagonal entry of `R`.
pub fn dense_least_squares(b: &DenseMatrix, y: &RealVector) -> Result<RealVector, LinopsError> {
    check_len(b.rows(), y.len())?;
    if b.cols() > b.rows() {
        return Err(LinopsError::NearSingular { ratio: 0.0, column: b.rows() });
    }
    let qr = b.inner.clone().qr();
    let r = qr.r();
    let k = b.cols();
    let rmax = (0..k).map(|j| r[(j, j)].abs()).fold(0.0_f64, f64::max);
    for j in 0..k {
        let ratio = if rmax > 0.0 { r[(j, j)].abs() / rmax } else { 0.0 };
        if ratio <= RANK_TOL {
            return Err(LinopsError::NearSingular { ratio, column: j });
        }
    }
    let qty = qr.q().tr_mul(y);
    let mut c = qty;
    for i in (0..k).rev() {
        let mut s = c[i];
        for j in (i + 1)..k {
            s -= r[(i, j)] * c[j];
        }
        c[i] = s / r[(i, i)];
    }
    Ok(c)
}

/// Modified Gram-Schmidt of `v` against the orthonormal columns `q`, followed
/// by one full reorthogonalization pass and normalization.
///
/// Returns the unit vector and the norm it had before normalization.
pub fn orthonormalize_against(v: &RealVector, q: &[RealVector]) -> Result<(RealVector, f64), LinopsError> {
    for col in q {
        check_len(v.len(), col.len())?;
    }
    let vnorm = v.norm();
    let mut w = v.clone();
    for _pass in 0..2 {
        for col in q {
            let h = col.dot(&w);
            w.axpy(-h, col, 1.0);
        }
    }
    let norm = w.norm();
    if !(norm > BREAKDOWN_TOL * vnorm) {
        return Err(LinopsError::Breakdown {
            ratio: if vnorm > 0.0 { norm / vnorm } else { 0.0 },
        });
    }
    w /= norm;
    Ok((w, norm))
}
