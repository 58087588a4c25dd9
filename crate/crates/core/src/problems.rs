//! Discretized first-kind Fredholm test problems and seeded data noise.
//!
//! All kernels are collocated at cell midpoints with a uniform quadrature
//! weight, giving square `n × n` matrices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linops::{DenseMatrix, RealVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (expected one of deriv2, shaw, phillips, gravity)")]
    UnknownName(String),
    #[error("{name}: size {n} too small (need n >= 4)")]
    TooSmall { name: ProblemName, n: usize },
    #[error("{name}: size {n} must be even")]
    OddSize { name: ProblemName, n: usize },
    #[error("negative noise level {0}")]
    NegativeNoise(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemName {
    Deriv2,
    Shaw,
    Phillips,
    Gravity,
}

impl ProblemName {
    pub const ALL: [ProblemName; 4] = [Self::Deriv2, Self::Shaw, Self::Phillips, Self::Gravity];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Deriv2 => "deriv2",
            Self::Shaw => "shaw",
            Self::Phillips => "phillips",
            Self::Gravity => "gravity",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::Deriv2 => "second-derivative Green's function on [0,1], x(t) = t",
            Self::Shaw => "one-dimensional image restoration on [-pi/2, pi/2], two-Gaussian solution",
            Self::Phillips => "Phillips' cosine kernel on [-6,6], hat-cosine solution",
            Self::Gravity => "gravity surveying, depth 0.25, x(t) = sin(pi t) + 0.5 sin(2 pi t)",
        }
    }

    fn needs_even(self) -> bool {
        matches!(self, Self::Shaw | Self::Phillips)
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemName {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ProblemError::UnknownName(s.to_string()))
    }
}

/// A forward operator with its exact solution and exact data.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    pub name: String,
    pub a: DenseMatrix,
    pub x_exact: RealVector,
    pub y_exact: RealVector,
}

impl LinearProblem {
    /// Builds a problem from an operator and exact solution; `y_exact = A·x_exact`.
    pub fn from_parts(name: impl Into<String>, a: DenseMatrix, x_exact: RealVector) -> Result<Self, crate::linops::LinopsError> {
        let y_exact = a.matvec(&x_exact)?;
        Ok(Self {
            name: name.into(),
            a,
            x_exact,
            y_exact,
        })
    }
}

/// Noisy data together with the noise level it was generated at.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySample {
    pub y_delta: RealVector,
    pub delta_abs: f64,
    pub delta_rel: f64,
    pub seed: u64,
}

/// Generates the named test problem at size `n`.
pub fn make_problem(name: ProblemName, n: usize) -> Result<LinearProblem, ProblemError> {
    if n < 4 {
        return Err(ProblemError::TooSmall { name, n });
    }
    if name.needs_even() && !n.is_multiple_of(2) {
        return Err(ProblemError::OddSize { name, n });
    }
    let (a, x) = match name {
        ProblemName::Deriv2 => deriv2(n),
        ProblemName::Shaw => shaw(n),
        ProblemName::Phillips => phillips(n),
        ProblemName::Gravity => gravity(n),
    };
    let a = DenseMatrix::from_fn(n, n, a).expect("kernels are finite");
    let x_exact = RealVector::from_vec(x);
    Ok(LinearProblem::from_parts(name.as_str(), a, x_exact).expect("square problem"))
}

fn midpoints(lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    let h = (hi - lo) / n as f64;
    ((0..n).map(|i| lo + (i as f64 + 0.5) * h).collect(), h)
}

type Kernel = Box<dyn Fn(usize, usize) -> f64>;

fn deriv2(n: usize) -> (Kernel, Vec<f64>) {
    let (t, h) = midpoints(0.0, 1.0, n);
    let x = t.clone();
    let k = move |i: usize, j: usize| {
        let (s, t) = (t[i], t[j]);
        h * if s <= t { s * (t - 1.0) } else { t * (s - 1.0) }
    };
    (Box::new(k), x)
}

fn shaw(n: usize) -> (Kernel, Vec<f64>) {
    let (t, h) = midpoints(-PI / 2.0, PI / 2.0, n);
    let gauss = |t: f64, amp: f64, c: f64, t0: f64| amp * (-c * (t - t0).powi(2)).exp();
    let x = t.iter().map(|&s| gauss(s, 2.0, 6.0, 0.8) + gauss(s, 1.0, 2.0, -0.5)).collect();
    let k = move |i: usize, j: usize| {
        let (s, t) = (t[i], t[j]);
        let c = s.cos() + t.cos();
        let u = PI * (s.sin() + t.sin());
        let sinc = if u == 0.0 { 1.0 } else { u.sin() / u };
        h * c * c * sinc * sinc
    };
    (Box::new(k), x)
}

fn phillips_bump(z: f64) -> f64 {
    if z.abs() < 3.0 {
        1.0 + (PI * z / 3.0).cos()
    } else {
        0.0
    }
}

fn phillips(n: usize) -> (Kernel, Vec<f64>) {
    let (t, h) = midpoints(-6.0, 6.0, n);
    let x = t.iter().map(|&s| phillips_bump(s)).collect();
    let k = move |i: usize, j: usize| h * phillips_bump(t[i] - t[j]);
    (Box::new(k), x)
}

fn gravity(n: usize) -> (Kernel, Vec<f64>) {
    const DEPTH: f64 = 0.25;
    let (t, h) = midpoints(0.0, 1.0, n);
    let x = t.iter().map(|&s| (PI * s).sin() + 0.5 * (2.0 * PI * s).sin()).collect();
    let k = move |i: usize, j: usize| {
        let d = t[i] - t[j];
        h * DEPTH * (DEPTH * DEPTH + d * d).powf(-1.5)
    };
    (Box::new(k), x)
}

/// Replaces `x_exact` by `AᵀA·x_exact` and recomputes the data.
pub fn smooth_variant(p: &LinearProblem) -> LinearProblem {
    let x = p.a.gram_apply(&p.x_exact).expect("consistent problem");
    let y = p.a.matvec(&x).expect("consistent problem");
    LinearProblem {
        name: format!("{}+smooth", p.name),
        a: p.a.clone(),
        x_exact: x,
        y_exact: y,
    }
}

/// Adds iid standard normal noise rescaled to `‖y_delta − y_exact‖ = delta_rel·‖y_exact‖`.
pub fn add_noise(p: &LinearProblem, delta_rel: f64, seed: u64) -> Result<NoisySample, ProblemError> {
    if !(delta_rel >= 0.0) || !delta_rel.is_finite() {
        return Err(ProblemError::NegativeNoise(delta_rel.to_string()));
    }
    let delta_abs = delta_rel * p.y_exact.norm();
    if delta_rel == 0.0 {
        return Ok(NoisySample {
            y_delta: p.y_exact.clone(),
            delta_abs: 0.0,
            delta_rel,
            seed,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = RealVector::from_fn(p.y_exact.len(), |_, _| StandardNormal.sample(&mut rng));
    let scale = delta_abs / w.norm();
    Ok(NoisySample {
        y_delta: &p.y_exact + w * scale,
        delta_abs,
        delta_rel,
        seed,
    })
}
