//! Planar 1-norm barrier for intersection conflicts and its chance
//! constraints.
//!
//! The barrier between ego and another vehicle is
//!
//! ```text
//!     h = |dx| - b_xe - b_xo + |dy| - b_ye - b_yo - r
//! ```
//!
//! with axis-aligned bounding-box half-extents b and an extra margin r.
//! Nonnegative h implies the boxes are disjoint. Writing sx = sign(dx),
//! sy = sign(dy), the derivatives are h' = sx (dxdot + z1) + sy (dydot + z2)
//! and h'' = sx ddx(u) + sy ddy(u): the noise never reaches the second
//! derivative, so the eCBF condition is *affine* in the combined Gaussian
//! z = sx z1 + sy z2 and tightens to a single closed-form branch. That is
//! the reason this barrier uses the 1-norm: a squared-distance barrier
//! would make the condition quadratic in two correlated noise axes, with no
//! quadratic-formula treatment.

use crate::ecbf::{AffineInput, BarrierEval, EcbfGains, GainFeasibility};
use crate::stochastic::{tighten_affine, ChanceConstraintSet, GaussianNoise, TightenedBranch};
use crate::vehicle::{VehicleInput, VehicleParams, VehicleState};
use serde::{Deserialize, Serialize};

/// How bounding-box half-extents follow vehicle heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxMode {
    /// Axis-aligned box enclosing the heading-rotated rectangle:
    /// half-extent |b_x cos psi| + |b_y sin psi| along x and the mirror
    /// along y. Conservative for any heading.
    HeadingInflated,
    /// Raw half-extents regardless of heading.
    AxisAligned,
}

/// Relative planar geometry of one ego/other pair with resolved axis signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPair {
    pub dx: f64,
    pub dy: f64,
    /// Deterministic parts of the relative position rates (m/s).
    pub dxdot: f64,
    pub dydot: f64,
    /// Relative accelerations affine in the ego input; the other vehicle's
    /// contribution is folded into the constants.
    pub ddx_affine: AffineInput,
    pub ddy_affine: AffineInput,
    /// Resolved signs of dx, dy; always +-1 (see `planar_pair` for the
    /// degenerate-axis resolution).
    pub sx: f64,
    pub sy: f64,
    /// Box half-extents: ego and other along x, then along y (m).
    pub bxe: f64,
    pub bxo: f64,
    pub bye: f64,
    pub byo: f64,
    /// Extra margin r (m).
    pub r_extra: f64,
    /// True when a zero dx or dy forced a sign fallback.
    pub sign_degenerate: bool,
}

/// 1-norm separation barrier; >= 0 implies the boxes are disjoint.
pub fn h_o(pp: &PlanarPair) -> f64 {
    pp.dx.abs() - pp.bxe - pp.bxo + pp.dy.abs() - pp.bye - pp.byo - pp.r_extra
}

fn axis_half_extents(p: &VehicleParams, psi: f64, mode: BoxMode) -> (f64, f64) {
    match mode {
        BoxMode::HeadingInflated => (
            (p.b_x * psi.cos()).abs() + (p.b_y * psi.sin()).abs(),
            (p.b_x * psi.sin()).abs() + (p.b_y * psi.cos()).abs(),
        ),
        BoxMode::AxisAligned => (p.b_x, p.b_y),
    }
}

/// Sign of one relative axis. A zero position difference has no usable
/// sign, so fall back to the direction the gap is about to open (the
/// relative rate); if that is zero too, pick the sign that treats the axis
/// as closing (its acceleration term enters the barrier negatively).
fn resolve_sign(d: f64, rate: f64, accel: f64, degenerate: &mut bool) -> f64 {
    if d != 0.0 {
        return d.signum();
    }
    *degenerate = true;
    if rate != 0.0 {
        rate.signum()
    } else if accel != 0.0 {
        -accel.signum()
    } else {
        1.0
    }
}

/// Assembles the planar pair geometry from vehicle states. Position rates
/// follow the drift kinematics (first derivative input-free, relative
/// degree two); box half-extents are fixed at the current headings and not
/// differentiated.
pub fn planar_pair(
    ego: &VehicleState,
    ego_params: &VehicleParams,
    other: &VehicleState,
    other_params: &VehicleParams,
    other_u: VehicleInput,
    r_extra: f64,
    mode: BoxMode,
) -> PlanarPair {
    let xddot = |s: &VehicleState, l_r: f64, u: VehicleInput| {
        u.a * s.psi.cos() - s.v * s.v / l_r * s.psi.sin() * u.beta
    };
    let yddot = |s: &VehicleState, l_r: f64, u: VehicleInput| {
        u.a * s.psi.sin() + s.v * s.v / l_r * s.psi.cos() * u.beta
    };
    let ddx_affine = AffineInput {
        c0: -xddot(other, other_params.l_r, other_u),
        c_a: ego.psi.cos(),
        c_beta: -ego.v * ego.v / ego_params.l_r * ego.psi.sin(),
    };
    let ddy_affine = AffineInput {
        c0: -yddot(other, other_params.l_r, other_u),
        c_a: ego.psi.sin(),
        c_beta: ego.v * ego.v / ego_params.l_r * ego.psi.cos(),
    };
    let dx = ego.x - other.x;
    let dy = ego.y - other.y;
    let dxdot = ego.v * ego.psi.cos() - other.v * other.psi.cos();
    let dydot = ego.v * ego.psi.sin() - other.v * other.psi.sin();
    let mut sign_degenerate = false;
    let sx = resolve_sign(dx, dxdot, ddx_affine.c0, &mut sign_degenerate);
    let sy = resolve_sign(dy, dydot, ddy_affine.c0, &mut sign_degenerate);
    let (bxe, bye) = axis_half_extents(ego_params, ego.psi, mode);
    let (bxo, byo) = axis_half_extents(other_params, other.psi, mode);
    PlanarPair {
        dx,
        dy,
        dxdot,
        dydot,
        ddx_affine,
        ddy_affine,
        sx,
        sy,
        bxe,
        bxo,
        bye,
        byo,
        r_extra,
        sign_degenerate,
    }
}

/// Barrier value and derivatives at zero noise, input-affine in the second
/// derivative.
pub fn barrier_derivatives(pp: &PlanarPair) -> BarrierEval {
    BarrierEval {
        h: h_o(pp),
        h_dot: pp.sx * pp.dxdot + pp.sy * pp.dydot,
        h_ddot: AffineInput {
            c0: pp.sx * pp.ddx_affine.c0 + pp.sy * pp.ddy_affine.c0,
            c_a: pp.sx * pp.ddx_affine.c_a + pp.sy * pp.ddy_affine.c_a,
            c_beta: pp.sx * pp.ddx_affine.c_beta + pp.sy * pp.ddy_affine.c_beta,
        },
    }
}

/// Distribution of the combined scalar noise z = sx z1 + sy z2 for
/// per-axis relative noise (z1, z2). The signs flip the mean but not the
/// standard deviation.
pub fn combined_noise(pp: &PlanarPair, noise: &GaussianNoise) -> GaussianNoise {
    assert_eq!(noise.dims(), 2, "planar barrier needs two noise axes");
    GaussianNoise::scalar(
        pp.sx * noise.mean[0] + pp.sy * noise.mean[1],
        (noise.sigma[0] * noise.sigma[0] + noise.sigma[1] * noise.sigma[1]).sqrt(),
    )
}

/// True when the two bounding rectangles overlap: overlap needs the center
/// gap on both axes to be smaller than the summed half-extents.
pub fn rectangles_overlap(
    a: &VehicleState,
    pa: &VehicleParams,
    b: &VehicleState,
    pb: &VehicleParams,
    mode: BoxMode,
) -> bool {
    let (axa, aya) = axis_half_extents(pa, a.psi, mode);
    let (axb, ayb) = axis_half_extents(pb, b.psi, mode);
    (a.x - b.x).abs() < axa + axb && (a.y - b.y).abs() < aya + ayb
}

/// Admissible-input set for the probabilistic eCBF condition: a single
/// branch affine in u, since the condition is affine in the combined noise.
pub fn admissible_control_set_2d(
    pp: &PlanarPair,
    gains: &EcbfGains,
    noise: &GaussianNoise,
    eta: f64,
) -> ChanceConstraintSet {
    let be = barrier_derivatives(pp);
    let z = combined_noise(pp, noise);
    let base = tighten_affine(
        gains.k2,
        be.h_ddot.c0 + gains.k2 * be.h_dot + gains.k1 * be.h,
        z.mean[0],
        z.sigma[0],
        eta,
    );
    ChanceConstraintSet {
        branches: vec![TightenedBranch {
            coeffs: vec![be.h_ddot.c_a, be.h_ddot.c_beta],
            ..base
        }],
        always_feasible: false,
    }
}

/// Feasibility report for one pole choice at a fixed state and input. Both
/// pole conditions are affine in the combined noise, so each tightens to a
/// single exact branch; there is no hard-infeasible geometry class here.
pub fn kalpha_admissible_set_2d(
    pp: &PlanarPair,
    u: VehicleInput,
    p1: f64,
    p2: f64,
    noise: &GaussianNoise,
    eta: f64,
) -> GainFeasibility {
    let poles_positive = p1 > 0.0 && p2 > 0.0;
    let be = barrier_derivatives(pp);
    let z = combined_noise(pp, noise);
    let pole1 = tighten_affine(1.0, be.h_dot + p1 * be.h, z.mean[0], z.sigma[0], eta);
    let k1 = p1 * p2;
    let k2 = p1 + p2;
    let ecbf_branch = tighten_affine(
        k2,
        be.h_ddot.eval(u.as_array()) + k2 * be.h_dot + k1 * be.h,
        z.mean[0],
        z.sigma[0],
        eta,
    );
    let feasible = poles_positive && pole1.satisfied(&[]) && ecbf_branch.satisfied(&[]);
    GainFeasibility {
        poles_positive,
        hard_infeasible: false,
        pole1,
        ecbf: ChanceConstraintSet {
            branches: vec![ecbf_branch],
            always_feasible: false,
        },
        feasible,
    }
}

/// Boundary p1 of the tightened first pole condition, as an extra pole-grid
/// candidate when positive.
pub fn pole1_boundary_2d(pp: &PlanarPair, noise: &GaussianNoise, eta: f64) -> Option<f64> {
    let be = barrier_derivatives(pp);
    if be.h == 0.0 {
        return None;
    }
    let z = combined_noise(pp, noise);
    let b = tighten_affine(1.0, be.h_dot, z.mean[0], z.sigma[0], eta);
    let p = -b.constant / be.h;
    (p.is_finite() && p > 0.0).then_some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecbf::gains_from_poles;
    use crate::testutil::{integrate_barrier_model, rng_f64};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn stdn(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn boxed_pair(dx: f64, dy: f64) -> PlanarPair {
        PlanarPair {
            dx,
            dy,
            dxdot: 0.0,
            dydot: 0.0,
            ddx_affine: AffineInput::constant(0.0),
            ddy_affine: AffineInput::constant(0.0),
            sx: if dx < 0.0 { -1.0 } else { 1.0 },
            sy: if dy < 0.0 { -1.0 } else { 1.0 },
            bxe: 2.0,
            bxo: 2.0,
            bye: 1.0,
            byo: 1.0,
            r_extra: 1.0,
            sign_degenerate: false,
        }
    }

    fn random_states(
        s: &mut u64,
    ) -> (VehicleState, VehicleParams, VehicleState, VehicleInput) {
        let params = VehicleParams::default();
        let ego = VehicleState {
            x: rng_f64(s, -25.0, 25.0),
            y: rng_f64(s, -25.0, 25.0),
            psi: rng_f64(s, -3.0, 3.0),
            v: rng_f64(s, 0.0, 12.0),
        };
        let other = VehicleState {
            x: rng_f64(s, -25.0, 25.0),
            y: rng_f64(s, -25.0, 25.0),
            psi: rng_f64(s, -3.0, 3.0),
            v: rng_f64(s, 0.0, 12.0),
        };
        let other_u = VehicleInput {
            a: rng_f64(s, -2.0, 2.0),
            beta: rng_f64(s, -0.1, 0.1),
        };
        (ego, params, other, other_u)
    }

    #[test]
    fn barrier_examples() {
        assert_eq!(h_o(&boxed_pair(6.0, 0.0)), -1.0);
        assert_eq!(h_o(&boxed_pair(10.0, 10.0)), 13.0);
    }

    #[test]
    fn nonnegative_barrier_separates_boxes() {
        let mut s = 0xb0b0u64;
        for _ in 0..10_000 {
            let mut pp = boxed_pair(rng_f64(&mut s, -12.0, 12.0), rng_f64(&mut s, -12.0, 12.0));
            pp.bxe = rng_f64(&mut s, 0.1, 3.0);
            pp.bxo = rng_f64(&mut s, 0.1, 3.0);
            pp.bye = rng_f64(&mut s, 0.1, 3.0);
            pp.byo = rng_f64(&mut s, 0.1, 3.0);
            pp.r_extra = rng_f64(&mut s, 0.0, 2.0);
            if h_o(&pp) >= 0.0 {
                let overlap = pp.dx.abs() < pp.bxe + pp.bxo && pp.dy.abs() < pp.bye + pp.byo;
                assert!(!overlap, "boxes overlap with h = {}", h_o(&pp));
            }
        }
    }

    #[test]
    fn one_norm_bounds_euclidean_barrier() {
        // The 1-norm form is what runs online; a squared-distance barrier
        // over the same clearance, shrunk by sqrt(2), is implied by it.
        let mut s = 0xc0c0u64;
        for _ in 0..5_000 {
            let pp = boxed_pair(rng_f64(&mut s, -15.0, 15.0), rng_f64(&mut s, -15.0, 15.0));
            let clearance = pp.bxe + pp.bxo + pp.bye + pp.byo + pp.r_extra;
            let norm1 = pp.dx.abs() + pp.dy.abs();
            let norm2 = (pp.dx * pp.dx + pp.dy * pp.dy).sqrt();
            assert!(norm1 >= norm2 - 1e-12);
            if h_o(&pp) >= 0.0 {
                let h2 = pp.dx * pp.dx + pp.dy * pp.dy
                    - clearance * clearance / 2.0;
                assert!(h2 >= -1e-9, "euclidean comparison barrier {h2}");
            }
        }
    }

    #[test]
    fn sign_resolution_falls_back_in_order() {
        let mut deg = false;
        assert_eq!(resolve_sign(3.0, -9.0, -9.0, &mut deg), 1.0);
        assert!(!deg);
        assert_eq!(resolve_sign(0.0, 2.0, 5.0, &mut deg), 1.0);
        assert!(deg);
        assert_eq!(resolve_sign(0.0, 0.0, 5.0, &mut deg), -1.0);
        assert_eq!(resolve_sign(0.0, 0.0, 0.0, &mut deg), 1.0);
    }

    #[test]
    fn heading_rotates_inflated_boxes() {
        let p = VehicleParams::default();
        let (bx, by) = axis_half_extents(&p, 0.0, BoxMode::HeadingInflated);
        assert!((bx - p.b_x).abs() < 1e-12 && (by - p.b_y).abs() < 1e-12);
        let (bx, by) = axis_half_extents(&p, std::f64::consts::FRAC_PI_2, BoxMode::HeadingInflated);
        assert!((bx - p.b_y).abs() < 1e-12 && (by - p.b_x).abs() < 1e-12);
        let (bx, by) = axis_half_extents(&p, 1.1, BoxMode::AxisAligned);
        assert_eq!((bx, by), (p.b_x, p.b_y));
        // Inflated extents always cover the rotated rectangle's corners.
        let psi = 0.7f64;
        let (bx, by) = axis_half_extents(&p, psi, BoxMode::HeadingInflated);
        for (cx, cy) in [(p.b_x, p.b_y), (p.b_x, -p.b_y)] {
            let rx = cx * psi.cos() - cy * psi.sin();
            let ry = cx * psi.sin() + cy * psi.cos();
            assert!(rx.abs() <= bx + 1e-12 && ry.abs() <= by + 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut s = 0xd1d1u64;
        let dt = 1e-5;
        let mut checked = 0;
        for _ in 0..300 {
            let (ego, params, other, other_u) = random_states(&mut s);
            if (ego.x - other.x).abs() < 0.5 || (ego.y - other.y).abs() < 0.5 {
                continue; // stay away from sign flips
            }
            let u = VehicleInput {
                a: rng_f64(&mut s, -5.0, 3.0),
                beta: rng_f64(&mut s, -0.2, 0.2),
            };
            let pp = planar_pair(
                &ego,
                &params,
                &other,
                &params,
                other_u,
                0.5,
                BoxMode::HeadingInflated,
            );
            let be = barrier_derivatives(&pp);

            // Boxes are frozen at the t = 0 headings, exactly as the
            // barrier differentiates them.
            let at = |t: f64| {
                let e = integrate_barrier_model(&ego, &u, params.l_r, t, 4);
                let o = integrate_barrier_model(&other, &other_u, params.l_r, t, 4);
                let h = (e.x - o.x).abs() - pp.bxe - pp.bxo + (e.y - o.y).abs()
                    - pp.bye
                    - pp.byo
                    - pp.r_extra;
                let h_dot = pp.sx * (e.v * e.psi.cos() - o.v * o.psi.cos())
                    + pp.sy * (e.v * e.psi.sin() - o.v * o.psi.sin());
                (h, h_dot)
            };
            let (hm, hdm) = at(-dt);
            let (hp, hdp) = at(dt);

            let fd_hdot = (hp - hm) / (2.0 * dt);
            assert!(
                (fd_hdot - be.h_dot).abs() < 1e-6 + 1e-6 * be.h_dot.abs(),
                "h_dot {} vs fd {}",
                be.h_dot,
                fd_hdot
            );
            let fd_hddot = (hdp - hdm) / (2.0 * dt);
            let hddot = be.h_ddot.eval(u.as_array());
            assert!(
                (fd_hddot - hddot).abs() < 1e-5 + 1e-5 * hddot.abs(),
                "h_ddot {hddot} vs fd {fd_hddot}"
            );
            checked += 1;
        }
        assert!(checked > 200);
    }

    #[test]
    fn residual_is_affine_in_noise() {
        // Second difference in z vanishes exactly: the noise never reaches
        // the second derivative.
        let mut s = 0xe2e2u64;
        for _ in 0..200 {
            let (ego, params, other, other_u) = random_states(&mut s);
            let pp = planar_pair(
                &ego,
                &params,
                &other,
                &params,
                other_u,
                0.5,
                BoxMode::HeadingInflated,
            );
            let be = barrier_derivatives(&pp);
            let g = gains_from_poles(rng_f64(&mut s, 0.1, 6.0), rng_f64(&mut s, 0.1, 6.0)).unwrap();
            let u = [rng_f64(&mut s, -5.0, 3.0), rng_f64(&mut s, -0.2, 0.2)];
            let res = |z: f64| be.h_ddot.eval(u) + g.k2 * (be.h_dot + z) + g.k1 * be.h;
            let second = res(1.0) + res(-1.0) - 2.0 * res(0.0);
            assert!(
                second.abs() <= 1e-10 * res(0.0).abs().max(1.0),
                "curvature in z: {second}"
            );
        }
    }

    #[test]
    fn far_apart_stationary_admits_zero_input() {
        let params = VehicleParams::default();
        let ego = VehicleState {
            x: 0.0,
            y: 0.0,
            psi: 0.0,
            v: 0.0,
        };
        let other = VehicleState {
            x: 30.0,
            y: 30.0,
            psi: 0.0,
            v: 0.0,
        };
        let pp = planar_pair(
            &ego,
            &params,
            &other,
            &params,
            VehicleInput::ZERO,
            0.5,
            BoxMode::HeadingInflated,
        );
        let g = gains_from_poles(1.0, 2.0).unwrap();
        let noise = GaussianNoise::new(vec![0.0, 0.0], vec![0.15, 0.15]).unwrap();
        let rel = GaussianNoise::relative(&noise, &noise).unwrap();
        let set = admissible_control_set_2d(&pp, &g, &rel, 0.9999);
        assert!(set.satisfied(&[0.0, 0.0]));
    }

    #[test]
    fn zero_noise_median_reduces_to_deterministic_condition() {
        let mut s = 0xf3f3u64;
        for _ in 0..300 {
            let (ego, params, other, other_u) = random_states(&mut s);
            let pp = planar_pair(
                &ego,
                &params,
                &other,
                &params,
                other_u,
                0.5,
                BoxMode::HeadingInflated,
            );
            let be = barrier_derivatives(&pp);
            let g = gains_from_poles(rng_f64(&mut s, 0.1, 6.0), rng_f64(&mut s, 0.1, 6.0)).unwrap();
            let u = [rng_f64(&mut s, -5.0, 3.0), rng_f64(&mut s, -0.2, 0.2)];
            let deterministic = be.h_ddot.eval(u) + g.k2 * be.h_dot + g.k1 * be.h;
            if deterministic.abs() < 1e-9 {
                continue;
            }
            let zero = GaussianNoise::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
            let set = admissible_control_set_2d(&pp, &g, &zero, 0.5);
            assert_eq!(set.satisfied(&u), deterministic >= 0.0);
        }
    }

    #[test]
    fn boundary_instances_hit_eta_under_two_axis_sampling() {
        // Place the single branch exactly on its boundary by solving for
        // the acceleration, then Monte Carlo the raw condition with the two
        // noise axes sampled independently. This validates both the
        // tightening and the scalar collapse of (z1, z2).
        let mut s = 0xa5a5u64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31337);
        let mut checked = 0;
        for _ in 0..60 {
            let (ego, params, other, other_u) = random_states(&mut s);
            let pp = planar_pair(
                &ego,
                &params,
                &other,
                &params,
                other_u,
                0.5,
                BoxMode::HeadingInflated,
            );
            let g = gains_from_poles(rng_f64(&mut s, 0.3, 4.0), rng_f64(&mut s, 0.3, 4.0)).unwrap();
            let eta = rng_f64(&mut s, 0.9, 0.9999);
            let rel = GaussianNoise::new(
                vec![rng_f64(&mut s, -0.2, 0.2), rng_f64(&mut s, -0.2, 0.2)],
                vec![rng_f64(&mut s, 0.05, 0.4), rng_f64(&mut s, 0.05, 0.4)],
            )
            .unwrap();
            let set = admissible_control_set_2d(&pp, &g, &rel, eta);
            let b = &set.branches[0];
            if b.coeffs[0].abs() < 0.5 {
                continue; // acceleration has too little authority to place the boundary
            }
            let a_boundary = -b.constant / b.coeffs[0];
            let u = [a_boundary, 0.0];
            debug_assert!(b.lhs(&u).abs() < 1e-9);

            let be = barrier_derivatives(&pp);
            let n = 100_000;
            let mut hits = 0;
            for _ in 0..n {
                let z1 = rel.mean[0] + rel.sigma[0] * stdn(&mut rng);
                let z2 = rel.mean[1] + rel.sigma[1] * stdn(&mut rng);
                let h_dot = pp.sx * (pp.dxdot + z1) + pp.sy * (pp.dydot + z2);
                if be.h_ddot.eval(u) + g.k2 * h_dot + g.k1 * be.h >= 0.0 {
                    hits += 1;
                }
            }
            let p = hits as f64 / n as f64;
            assert!((p - eta).abs() < 0.01, "boundary probability {p} vs {eta}");
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn nonpositive_poles_are_infeasible() {
        let pp = boxed_pair(20.0, 20.0);
        let rel = GaussianNoise::new(vec![0.0, 0.0], vec![0.2, 0.2]).unwrap();
        for (p1, p2) in [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.5)] {
            let report = kalpha_admissible_set_2d(&pp, VehicleInput::ZERO, p1, p2, &rel, 0.9999);
            assert!(!report.feasible, "poles ({p1}, {p2}) accepted");
        }
    }

    #[test]
    fn benign_geometry_accepts_moderate_poles() {
        let pp = boxed_pair(20.0, 20.0);
        let rel = GaussianNoise::new(vec![0.0, 0.0], vec![0.1, 0.1]).unwrap();
        for (p1, p2) in [(0.5, 0.5), (1.0, 2.0), (2.0, 4.0)] {
            let report = kalpha_admissible_set_2d(&pp, VehicleInput::ZERO, p1, p2, &rel, 0.9999);
            assert!(report.feasible, "poles ({p1}, {p2}) rejected");
        }
    }

    #[test]
    fn gain_verdicts_match_monte_carlo() {
        // Both tightened pole conditions are affine in the combined noise,
        // hence exact: verdicts agree with Monte Carlo in both directions
        // away from the level.
        let mut s = 0x1b1bu64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(90210);
        for _ in 0..500 {
            let (ego, params, other, other_u) = random_states(&mut s);
            let pp = planar_pair(
                &ego,
                &params,
                &other,
                &params,
                other_u,
                0.5,
                BoxMode::HeadingInflated,
            );
            let p1 = rng_f64(&mut s, 0.1, 4.0);
            let p2 = rng_f64(&mut s, 0.1, 4.0);
            let eta = rng_f64(&mut s, 0.6, 0.999);
            let u = VehicleInput {
                a: rng_f64(&mut s, -5.0, 3.0),
                beta: rng_f64(&mut s, -0.2, 0.2),
            };
            let rel = GaussianNoise::new(
                vec![rng_f64(&mut s, -0.2, 0.2), rng_f64(&mut s, -0.2, 0.2)],
                vec![rng_f64(&mut s, 0.05, 0.4), rng_f64(&mut s, 0.05, 0.4)],
            )
            .unwrap();
            let report = kalpha_admissible_set_2d(&pp, u, p1, p2, &rel, eta);

            let be = barrier_derivatives(&pp);
            let n = 20_000;
            let (mut hit1, mut hit2) = (0, 0);
            for _ in 0..n {
                let z1 = rel.mean[0] + rel.sigma[0] * stdn(&mut rng);
                let z2 = rel.mean[1] + rel.sigma[1] * stdn(&mut rng);
                let h_dot = pp.sx * (pp.dxdot + z1) + pp.sy * (pp.dydot + z2);
                if h_dot + p1 * be.h >= 0.0 {
                    hit1 += 1;
                }
                let k1 = p1 * p2;
                let k2 = p1 + p2;
                if be.h_ddot.eval(u.as_array()) + k2 * h_dot + k1 * be.h >= 0.0 {
                    hit2 += 1;
                }
            }
            let q1 = hit1 as f64 / n as f64;
            let q2 = hit2 as f64 / n as f64;
            if (q1 - eta).abs() > 0.02 {
                assert_eq!(report.pole1.satisfied(&[]), q1 >= eta, "pole1 at {q1} vs {eta}");
            }
            if (q2 - eta).abs() > 0.02 {
                assert_eq!(
                    report.ecbf.satisfied(&[]),
                    q2 >= eta,
                    "ecbf at {q2} vs {eta}"
                );
            }
        }
    }

    #[test]
    fn pole1_boundary_sits_on_the_boundary() {
        let mut s = 0x2c2cu64;
        let mut found = 0;
        for _ in 0..300 {
            let (ego, params, other, other_u) = random_states(&mut s);
            let pp = planar_pair(
                &ego,
                &params,
                &other,
                &params,
                other_u,
                0.5,
                BoxMode::HeadingInflated,
            );
            let rel = GaussianNoise::new(vec![0.05, -0.05], vec![0.2, 0.2]).unwrap();
            let eta = rng_f64(&mut s, 0.6, 0.999);
            let Some(p1) = pole1_boundary_2d(&pp, &rel, eta) else {
                continue;
            };
            found += 1;
            let report = kalpha_admissible_set_2d(&pp, VehicleInput::ZERO, p1, 1.0, &rel, eta);
            let scale = (p1 * h_o(&pp)).abs().max(1.0);
            assert!(report.pole1.residual(&[]).abs() < 1e-9 * scale);
        }
        assert!(found > 30);
    }
}
