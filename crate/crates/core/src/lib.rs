//! Iterative regularization of ill-posed least-squares problems with
//! mixed rational Krylov spaces.

// `!(x > 0.0)` deliberately rejects NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod linops;
pub mod oracle;
pub mod problems;
pub mod solvers;
pub mod stopping;

pub use linops::{DenseMatrix, RealVector};
pub use problems::{make_problem, LinearProblem, ProblemName};
pub use solvers::{AlphaSchedule, SolverTrace, StopReason};
pub use stopping::StoppingRule;
