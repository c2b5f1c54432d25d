//! Exponential control barrier function (eCBF) machinery for relative
//! degree two.
//!
//! A barrier h with relative degree 2 is kept nonnegative by enforcing
//!
//! ```text
//!     h'' + k2 h' + k1 h >= 0
//! ```
//!
//! where the gain row [k1, k2] is parameterized by two poles p1, p2 > 0:
//! k1 = p1 p2, k2 = p1 + p2. The closed-loop transverse dynamics then have
//! eigenvalues -p1, -p2. Validity of a gain choice at the current state is
//! captured by the auxiliary functions v0 = h, v1 = h' + p1 h,
//! v2 = v1' + p2 v1; the pole conditions require v1 >= 0 and v2 >= 0, and
//! v2 expands to exactly the eCBF residual above.

use crate::stochastic::{ChanceConstraintSet, TightenedBranch};
use crate::{Error, Result};

/// Barrier gains parameterized by their (negated) closed-loop poles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcbfGains {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Second barrier derivative as an affine function of the input u = (a, beta).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineInput {
    pub c0: f64,
    pub c_a: f64,
    pub c_beta: f64,
}

impl AffineInput {
    pub const fn constant(c0: f64) -> Self {
        AffineInput {
            c0,
            c_a: 0.0,
            c_beta: 0.0,
        }
    }

    pub fn eval(&self, u: [f64; 2]) -> f64 {
        self.c0 + self.c_a * u[0] + self.c_beta * u[1]
    }
}

/// A barrier together with its first derivative and input-affine second
/// derivative, evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    pub h_dot: f64,
    pub h_ddot: AffineInput,
}

/// Residuals of the three pointwise safety conditions at a given input.
/// `pole1` is v1 = h' + p1 h, `pole2` is v2 = v1' + p2 v1, and `ecbf` is the
/// main constraint h'' + k2 h' + k1 h; `pole2` and `ecbf` coincide
/// algebraically at relative degree two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyResiduals {
    pub ecbf: f64,
    pub pole1: f64,
    pub pole2: f64,
}

impl SafetyResiduals {
    pub fn all_nonnegative(&self) -> bool {
        self.ecbf >= 0.0 && self.pole1 >= 0.0 && self.pole2 >= 0.0
    }
}

/// Verdict on one pole choice (p1, p2) at a fixed state and input: the
/// chance-tightened analogues of the three pointwise conditions. `pole1`
/// tightens v1 >= 0, `ecbf` tightens v2 >= 0 (equivalently the main eCBF
/// condition). `hard_infeasible` marks geometries where no positive poles
/// can help, e.g. a lane-change pair at zero longitudinal gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GainFeasibility {
    pub poles_positive: bool,
    pub hard_infeasible: bool,
    pub pole1: TightenedBranch,
    pub ecbf: ChanceConstraintSet,
    pub feasible: bool,
}

/// Builds gains from poles. Both poles must be strictly positive for the
/// closed loop to contract toward the safe set.
pub fn gains_from_poles(p1: f64, p2: f64) -> Result<EcbfGains> {
    if !(p1 > 0.0 && p2 > 0.0) || !p1.is_finite() || !p2.is_finite() {
        return Err(Error::Config(format!(
            "barrier poles must be finite and positive, got ({p1}, {p2})"
        )));
    }
    Ok(EcbfGains {
        k1: p1 * p2,
        k2: p1 + p2,
        p1,
        p2,
    })
}

/// The eCBF constraint residual h'' + k2 h' + k1 h at input u.
pub fn ecbf_residual(be: &BarrierEval, gains: &EcbfGains, u: [f64; 2]) -> f64 {
    be.h_ddot.eval(u) + gains.k2 * be.h_dot + gains.k1 * be.h
}

/// All three safety residuals at input u.
pub fn safety_residuals(be: &BarrierEval, gains: &EcbfGains, u: [f64; 2]) -> SafetyResiduals {
    let h_ddot = be.h_ddot.eval(u);
    let v1 = be.h_dot + gains.p1 * be.h;
    let v1_dot = h_ddot + gains.p1 * be.h_dot;
    SafetyResiduals {
        ecbf: ecbf_residual(be, gains, u),
        pole1: v1,
        pole2: v1_dot + gains.p2 * v1,
    }
}

/// Stack matrices for a barrier of arbitrary relative degree r: the
/// integrator chain F (r x r, superdiagonal of ones) and input vector
/// G = e_r, so that eta' = F eta + G h^(r). Only r = 2 is exercised by the
/// vehicle barriers; the general constructor exists for testing the
/// closed-loop pole algebra.
pub fn stack_matrices(r: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    assert!(r >= 1, "relative degree must be at least 1");
    let mut f = vec![vec![0.0; r]; r];
    for i in 0..r - 1 {
        f[i][i + 1] = 1.0;
    }
    let mut g = vec![0.0; r];
    g[r - 1] = 1.0;
    (f, g)
}

/// The barrier derivative stack eta_b = [h, h', ..., h^(r-1)].
pub fn eta_stack(derivs: &[f64]) -> Vec<f64> {
    derivs.to_vec()
}
