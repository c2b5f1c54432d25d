//! Longitudinal pairwise barrier for lane changes and its chance
//! constraints.
//!
//! The barrier for ego against a surrounding vehicle m is
//! h = (x_e - x_m)^2 - r^2, which is relative degree two under the bicycle
//! model: the input reaches h only through the second derivative. With the
//! relative velocity-channel noise z entering dx/dt, the eCBF condition
//! becomes a quadratic in z with leading coefficient exactly 2,
//!
//! ```text
//!     q(z) = 2 z^2 + q1 z + q0(u),      q1 = 4 dxdot + 2 k2 dx,
//!     q0(u) = 2 dxdot^2 + 2 dx ddx(u) + 2 k2 dx dxdot + k1 h,
//! ```
//!
//! where only q0 depends on the input. Requiring q(z) >= 0 with probability
//! eta is certified by a union of closed-form conditions: either the
//! discriminant is nonpositive (q nonnegative everywhere), or the noise
//! stays below the lower root / above the upper root with probability eta.
//! Since q1 is input-free, each condition is affine in u, and whether a tail
//! branch can apply at all (its quantile on the correct side of the vertex)
//! is decided once per state, not per input. The gated union is exactly
//! equivalent to tightening the quadratic pointwise in u.

use crate::ecbf::{AffineInput, BarrierEval, EcbfGains, GainFeasibility};
use crate::norm::inv_norm_cdf;
use crate::stochastic::{
    tighten_affine, tighten_quadratic_1d, BranchLabel, ChanceConstraintSet, GaussianNoise, Sense,
    TightenedBranch,
};
use crate::vehicle::{VehicleInput, VehicleParams, VehicleState};

/// Leading coefficient of the noise quadratic; state- and input-independent.
pub const NOISE_Q2: f64 = 2.0;

/// Relative longitudinal geometry of one ego/other pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    /// dx = x_e - x_m (m).
    pub dx: f64,
    /// Deterministic part of d(dx)/dt (m/s).
    pub dxdot: f64,
    /// d^2(dx)/dt^2 as an affine function of the ego input; the other
    /// vehicle's acceleration is folded into the constant term.
    pub ddx_affine: AffineInput,
    /// Safety margin r (m).
    pub r_margin: f64,
}

impl PairGeometry {
    /// Barrier value h = dx^2 - r^2.
    pub fn h(&self) -> f64 {
        self.dx * self.dx - self.r_margin * self.r_margin
    }
}

/// Longitudinal gap barrier: (xe - xm)^2 - r^2, nonnegative iff the gap is
/// at least r.
pub fn h_m(xe: f64, xm: f64, r: f64) -> f64 {
    debug_assert!(r > 0.0);
    let dx = xe - xm;
    dx * dx - r * r
}

/// Assembles the pair geometry from vehicle states. Surrounding vehicles are
/// assumed to share the ego parameter set; they usually coast (zero input),
/// in which case their acceleration contributes nothing to the constant
/// term. Position rates follow the drift kinematics, so the first derivative
/// is input-free and the barrier keeps relative degree two.
pub fn pair_geometry(
    ego: &VehicleState,
    ego_params: &VehicleParams,
    other: &VehicleState,
    other_u: VehicleInput,
    r: f64,
) -> PairGeometry {
    let xddot = |s: &VehicleState, a: f64, beta: f64| {
        a * s.psi.cos() - s.v * s.v / ego_params.l_r * s.psi.sin() * beta
    };
    let c0 = -xddot(other, other_u.a, other_u.beta);
    PairGeometry {
        dx: ego.x - other.x,
        dxdot: ego.v * ego.psi.cos() - other.v * other.psi.cos(),
        ddx_affine: AffineInput {
            c0,
            c_a: ego.psi.cos(),
            c_beta: -ego.v * ego.v / ego_params.l_r * ego.psi.sin(),
        },
        r_margin: r,
    }
}

/// Barrier, first derivative and input-affine second derivative at zero
/// noise, for residual logging and deterministic comparisons.
pub fn barrier_eval(pg: &PairGeometry) -> BarrierEval {
    BarrierEval {
        h: pg.h(),
        h_dot: 2.0 * pg.dx * pg.dxdot,
        h_ddot: AffineInput {
            c0: 2.0 * pg.dxdot * pg.dxdot + 2.0 * pg.dx * pg.ddx_affine.c0,
            c_a: 2.0 * pg.dx * pg.ddx_affine.c_a,
            c_beta: 2.0 * pg.dx * pg.ddx_affine.c_beta,
        },
    }
}

/// Coefficients of the eCBF residual as a quadratic in the noise z:
/// residual = 2 z^2 + q1 z + q0(u).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualQuadratic {
    pub q1: f64,
    pub q0: AffineInput,
}

impl ResidualQuadratic {
    /// Fully evaluated residual at input u and noise value z.
    pub fn at(&self, u: [f64; 2], z: f64) -> f64 {
        NOISE_Q2 * z * z + self.q1 * z + self.q0.eval(u)
    }
}

pub fn residual_quadratic(pg: &PairGeometry, gains: &EcbfGains) -> ResidualQuadratic {
    let h = pg.h();
    ResidualQuadratic {
        q1: 4.0 * pg.dxdot + 2.0 * gains.k2 * pg.dx,
        q0: AffineInput {
            c0: 2.0 * pg.dxdot * pg.dxdot
                + 2.0 * pg.dx * pg.ddx_affine.c0
                + 2.0 * gains.k2 * pg.dx * pg.dxdot
                + gains.k1 * h,
            c_a: 2.0 * pg.dx * pg.ddx_affine.c_a,
            c_beta: 2.0 * pg.dx * pg.ddx_affine.c_beta,
        },
    }
}

/// Chance constraint on the residual quadratic for one fixed input: the
/// plain pointwise tightening.
pub fn chance_set_at(
    pg: &PairGeometry,
    gains: &EcbfGains,
    noise: &GaussianNoise,
    eta: f64,
    u: [f64; 2],
) -> ChanceConstraintSet {
    let rq = residual_quadratic(pg, gains);
    tighten_quadratic_1d(
        NOISE_Q2,
        rq.q1,
        rq.q0.eval(u),
        noise.mean[0],
        noise.sigma[0],
        eta,
    )
    .expect("leading coefficient is the positive constant 2")
}

/// Admissible-input set for the probabilistic eCBF condition, as explicit
/// branches affine in u = (a, beta).
///
/// Let m = mean + sd inv_norm_cdf(eta) and n = mean - sd inv_norm_cdf(eta)
/// be the eta-quantiles of the noise, and vertex = -q1/4 the minimizer of
/// q. The lower-tail certificate P(z <= b_lo) >= eta is equivalent to
/// q(m) >= 0 *when* m <= vertex (otherwise the quantile sits right of the
/// lower root for every u and the tail can never reach eta); symmetrically
/// for the upper tail with n >= vertex. The discriminant certificate
/// q0(u) >= q1^2/8 needs no gate. Each certificate is one affine branch;
/// their union equals pointwise membership exactly.
pub fn admissible_control_set(
    pg: &PairGeometry,
    gains: &EcbfGains,
    noise: &GaussianNoise,
    eta: f64,
) -> ChanceConstraintSet {
    let rq = residual_quadratic(pg, gains);
    let quantile = noise.sigma[0] * inv_norm_cdf(eta);
    let lo = noise.mean[0] + quantile;
    let hi = noise.mean[0] - quantile;
    let vertex = -rq.q1 / (2.0 * NOISE_Q2);
    let coeffs = vec![rq.q0.c_a, rq.q0.c_beta];
    let mut branches = Vec::with_capacity(3);
    if lo <= vertex {
        branches.push(TightenedBranch {
            coeffs: coeffs.clone(),
            constant: NOISE_Q2 * lo * lo + rq.q1 * lo + rq.q0.c0,
            sense: Sense::GeqZero,
            label: BranchLabel::QuadLower,
        });
    }
    if hi >= vertex {
        branches.push(TightenedBranch {
            coeffs: coeffs.clone(),
            constant: NOISE_Q2 * hi * hi + rq.q1 * hi + rq.q0.c0,
            sense: Sense::GeqZero,
            label: BranchLabel::QuadUpper,
        });
    }
    branches.push(TightenedBranch {
        coeffs,
        constant: rq.q0.c0 - rq.q1 * rq.q1 / (4.0 * NOISE_Q2),
        sense: Sense::GeqZero,
        label: BranchLabel::QuadAlways,
    });
    ChanceConstraintSet {
        branches,
        always_feasible: false,
    }
}

/// Feasibility report for one pole choice (p1, p2) at a fixed state and
/// input. Three groups: positive poles; the first pole condition
/// v1 = h' + p1 h >= 0, affine in the noise with coefficient 2 dx (at
/// dx = 0 the barrier is already -r^2 < 0 and no pole can help, reported
/// hard-infeasible); and the main eCBF condition, the residual-quadratic
/// union at the given input.
pub fn kalpha_admissible_set(
    pg: &PairGeometry,
    u: VehicleInput,
    p1: f64,
    p2: f64,
    noise: &GaussianNoise,
    eta: f64,
) -> GainFeasibility {
    let poles_positive = p1 > 0.0 && p2 > 0.0;
    let hard_infeasible = pg.dx == 0.0;
    let pole1 = tighten_affine(
        2.0 * pg.dx,
        p1 * pg.h() + 2.0 * pg.dx * pg.dxdot,
        noise.mean[0],
        noise.sigma[0],
        eta,
    );
    let gains = EcbfGains {
        k1: p1 * p2,
        k2: p1 + p2,
        p1,
        p2,
    };
    let ecbf = chance_set_at(pg, &gains, noise, eta, u.as_array());
    let feasible =
        poles_positive && !hard_infeasible && pole1.satisfied(&[]) && ecbf.satisfied(&[]);
    GainFeasibility {
        poles_positive,
        hard_infeasible,
        pole1,
        ecbf,
        feasible,
    }
}

/// The p1 value at which the tightened first pole condition sits exactly on
/// its boundary, if it is positive: a natural extra candidate for the pole
/// grid. For h > 0 it is a lower bound on feasible p1, for h < 0 an upper
/// bound; the caller re-checks feasibility per candidate either way.
pub fn pole1_boundary(pg: &PairGeometry, noise: &GaussianNoise, eta: f64) -> Option<f64> {
    let h = pg.h();
    if h == 0.0 {
        return None;
    }
    let a = 2.0 * pg.dx;
    let p = (a.abs() * noise.sigma[0] * inv_norm_cdf(eta) - a * noise.mean[0] - a * pg.dxdot) / h;
    (p.is_finite() && p > 0.0).then_some(p)
}
