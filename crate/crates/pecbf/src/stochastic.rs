//! Gaussian uncertainty model and deterministic tightening of chance
//! constraints.
//!
//! Adding a Gaussian disturbance to the velocity channel turns each safety
//! condition into a chance constraint in the scalar noise variable z. Two
//! shapes cover everything in this crate:
//!
//! - affine: a z + c >= 0, which holds with probability at least eta iff
//!   c + a mean - |a| sd inv_norm_cdf(eta) >= 0;
//! - quadratic with positive leading coefficient: q2 z^2 + q1 z + q0 >= 0,
//!   which holds everywhere when the discriminant is negative and otherwise
//!   is implied by keeping z below the lower root or above the upper root
//!   with probability eta (a union of two tightened tail conditions).
//!
//! Tail conditions are sufficient, never necessary: a satisfied branch
//! guarantees the chance constraint, while an unsatisfied set merely fails
//! to certify it. The Monte Carlo estimator here is the calibration oracle
//! for that direction.

use crate::norm::inv_norm_cdf;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Additive Gaussian noise on the position-rate channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNoise {
    /// Per-axis mean (m/s).
    pub mean: Vec<f64>,
    /// Per-axis standard deviation (m/s). Zero is allowed so that
    /// deterministic studies can share the code path.
    pub sigma: Vec<f64>,
}

impl GaussianNoise {
    pub fn new(mean: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let dims = mean.len();
        if dims == 0 || dims > 2 || sigma.len() != dims {
            return Err(Error::Config(format!(
                "noise must have 1 or 2 axes, got mean len {} sigma len {}",
                mean.len(),
                sigma.len()
            )));
        }
        for v in mean.iter().chain(sigma.iter()) {
            if !v.is_finite() {
                return Err(Error::Config("non-finite noise parameter".into()));
            }
        }
        if sigma.iter().any(|s| *s < 0.0) {
            return Err(Error::Config("noise standard deviation must be >= 0".into()));
        }
        Ok(GaussianNoise { mean, sigma })
    }

    pub fn scalar(mean: f64, sd: f64) -> Self {
        GaussianNoise {
            mean: vec![mean],
            sigma: vec![sd],
        }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Distribution of the difference between two independent noises
    /// (ego minus other), axis-wise.
    pub fn relative(ego: &GaussianNoise, other: &GaussianNoise) -> Result<Self> {
        if ego.dims() != other.dims() {
            return Err(Error::Config("noise dimension mismatch".into()));
        }
        let mean = ego
            .mean
            .iter()
            .zip(&other.mean)
            .map(|(e, o)| e - o)
            .collect();
        let sigma = ego
            .sigma
            .iter()
            .zip(&other.sigma)
            .map(|(e, o)| (e * e + o * o).sqrt())
            .collect();
        Ok(GaussianNoise { mean, sigma })
    }
}

/// Direction of a tightened scalar condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    GeqZero,
    LeqZero,
}

/// Which tail or sign case produced a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchLabel {
    /// Single affine-in-noise condition.
    Affine,
    /// Noise held below the lower root of the quadratic.
    QuadLower,
    /// Noise held above the upper root of the quadratic.
    QuadUpper,
    /// Quadratic nonnegative for every noise value (discriminant <= 0).
    QuadAlways,
}

/// One deterministic branch of a tightened chance constraint. The left-hand
/// side is affine in the decision variables; with no decision variables the
/// branch is a fully evaluated verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedBranch {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub sense: Sense,
    pub label: BranchLabel,
}

impl TightenedBranch {
    pub fn lhs(&self, vars: &[f64]) -> f64 {
        debug_assert_eq!(vars.len(), self.coeffs.len());
        self.constant
            + self
                .coeffs
                .iter()
                .zip(vars)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Sense-normalized residual: nonnegative iff the branch is satisfied.
    pub fn residual(&self, vars: &[f64]) -> f64 {
        match self.sense {
            Sense::GeqZero => self.lhs(vars),
            Sense::LeqZero => -self.lhs(vars),
        }
    }

    pub fn satisfied(&self, vars: &[f64]) -> bool {
        self.residual(vars) >= 0.0
    }
}

/// Union of tightened branches: the chance constraint is certified if any
/// branch holds (or the vacuous flag is set).
#[derive(Debug, Clone, PartialEq)]
pub struct ChanceConstraintSet {
    pub branches: Vec<TightenedBranch>,
    pub always_feasible: bool,
}

impl ChanceConstraintSet {
    pub fn satisfied(&self, vars: &[f64]) -> bool {
        self.always_feasible || self.branches.iter().any(|b| b.satisfied(vars))
    }

    /// Largest branch residual, or +inf when vacuously feasible.
    pub fn best_residual(&self, vars: &[f64]) -> f64 {
        if self.always_feasible {
            return f64::INFINITY;
        }
        self.branches
            .iter()
            .map(|b| b.residual(vars))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tightens P(a z + c >= 0) >= eta for z ~ N(mean, sd^2) into the
/// deterministic condition c + a mean - |a| sd inv_norm_cdf(eta) >= 0.
/// With a = 0 (or sd = 0) this is the deterministic constraint itself.
pub fn tighten_affine(a: f64, c: f64, noise_mean: f64, noise_sd: f64, eta: f64) -> TightenedBranch {
    let quantile = if noise_sd == 0.0 || a == 0.0 {
        0.0
    } else {
        inv_norm_cdf(eta)
    };
    TightenedBranch {
        coeffs: Vec::new(),
        constant: c + a * noise_mean - a.abs() * noise_sd * quantile,
        sense: Sense::GeqZero,
        label: BranchLabel::Affine,
    }
}

/// Tightens P(q2 z^2 + q1 z + q0 >= 0) >= eta for z ~ N(mean, sd^2), q2 > 0.
///
/// Negative discriminant means the constraint holds for every z. Otherwise
/// the two roots b_lo <= b_hi carve the real line into tails where the
/// quadratic is nonnegative, and each tail yields one sufficient branch:
/// b_lo - mean >= sd inv_norm_cdf(eta) (noise stays below the lower root),
/// or mean - b_hi >= sd inv_norm_cdf(eta) (noise stays above the upper one).
pub fn tighten_quadratic_1d(
    q2: f64,
    q1: f64,
    q0: f64,
    noise_mean: f64,
    noise_sd: f64,
    eta: f64,
) -> Result<ChanceConstraintSet> {
    if !(q2 > 0.0) {
        return Err(Error::Config(format!(
            "quadratic tightening requires positive leading coefficient, got {q2}"
        )));
    }
    let disc = q1 * q1 - 4.0 * q2 * q0;
    if disc < 0.0 {
        return Ok(ChanceConstraintSet {
            branches: Vec::new(),
            always_feasible: true,
        });
    }
    let root = disc.sqrt();
    let b_lo = (-q1 - root) / (2.0 * q2);
    let b_hi = (-q1 + root) / (2.0 * q2);
    let margin = noise_sd * inv_norm_cdf(eta);
    Ok(ChanceConstraintSet {
        branches: vec![
            TightenedBranch {
                coeffs: Vec::new(),
                constant: b_lo - noise_mean - margin,
                sense: Sense::GeqZero,
                label: BranchLabel::QuadLower,
            },
            TightenedBranch {
                coeffs: Vec::new(),
                constant: noise_mean - b_hi - margin,
                sense: Sense::GeqZero,
                label: BranchLabel::QuadUpper,
            },
        ],
        always_feasible: false,
    })
}

/// Monte Carlo estimate of P(constraint(z)) for scalar z drawn from the
/// first axis of `noise`. Deterministic for a given seed.
pub fn mc_satisfaction<F: Fn(f64) -> bool>(
    constraint: F,
    noise: &GaussianNoise,
    n: usize,
    seed: u64,
) -> f64 {
    assert!(n >= 1, "mc_satisfaction needs at least one sample");
    let mean = noise.mean[0];
    let sd = noise.sigma[0];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        let g: f64 = StandardNormal.sample(&mut rng);
        if constraint(mean + sd * g) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}
