//! C ABI over the safety-filter core: an opaque filter handle configured
//! through setters, plain structs for states and barriers, and a solve
//! entry point that reports infeasibility in the result rather than as an
//! error. All functions are panic-safe; pointers may be null only where
//! documented.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use pecbf::controller::{solve_safe_control, Barrier, BarrierInstance, ControllerConfig};
use pecbf::intersection::{planar_pair, BoxMode};
use pecbf::lane_change::pair_geometry;
use pecbf::norm::inv_norm_cdf;
use pecbf::stochastic::GaussianNoise;
use pecbf::vehicle::{VehicleInput, VehicleParams, VehicleState};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PecbfStatus {
    PecbfOk = 0,
    /// A required pointer was null.
    PecbfNullArgument = 1,
    /// A parameter failed validation; the handle is unchanged.
    PecbfInvalidArgument = 2,
    /// Internal failure while solving.
    PecbfSolverFailure = 3,
}

use PecbfStatus::*;

/// Planar vehicle state.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PecbfState {
    pub x: f64,
    pub y: f64,
    /// Heading (rad).
    pub psi: f64,
    /// Speed (m/s).
    pub v: f64,
}

impl PecbfState {
    fn to_state(self) -> VehicleState {
        VehicleState {
            x: self.x,
            y: self.y,
            psi: self.psi,
            v: self.v,
        }
    }
}

/// Longitudinal gap constraint against one surrounding vehicle, with the
/// ego-relative velocity noise acting on it.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PecbfGapBarrier {
    pub other: PecbfState,
    /// Other vehicle's current acceleration input.
    pub other_a: f64,
    /// Other vehicle's current steering input.
    pub other_beta: f64,
    /// Required longitudinal clearance (m), > 0.
    pub r_margin: f64,
    /// Mean of the relative velocity noise (m/s).
    pub noise_mean: f64,
    /// Standard deviation of the relative velocity noise (m/s), >= 0.
    pub noise_sd: f64,
}

/// Planar box-separation constraint against one crossing vehicle, with
/// per-axis ego-relative velocity noise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PecbfBoxBarrier {
    pub other: PecbfState,
    pub other_a: f64,
    pub other_beta: f64,
    /// Extra separation margin (m), >= 0.
    pub r_extra: f64,
    /// Nonzero inflates the boxes for the current headings; zero keeps the
    /// raw axis-aligned half-extents.
    pub heading_inflated: u8,
    pub noise_mean_x: f64,
    pub noise_mean_y: f64,
    pub noise_sd_x: f64,
    pub noise_sd_y: f64,
}

/// Filtered control and solve diagnostics.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PecbfDecision {
    /// Acceleration command (m/s^2).
    pub a: f64,
    /// Steering command (rad).
    pub beta: f64,
    /// Zero when no constraint set was satisfiable and the decision is the
    /// full-braking fallback.
    pub feasible: u8,
    /// Attained objective; infinity when infeasible.
    pub objective: f64,
    /// Index of the winning constraint-branch combination.
    pub branch_id: u64,
}

/// Opaque safety filter: controller settings plus the ego vehicle model.
pub struct PecbfFilter {
    cfg: ControllerConfig,
    params: VehicleParams,
}

/// Version of the underlying library as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pecbf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Inverse standard normal CDF. `p` must lie strictly inside (0, 1).
#[no_mangle]
pub extern "C" fn pecbf_inv_norm_cdf(p: f64, out: *mut f64) -> PecbfStatus {
    if out.is_null() {
        return PecbfNullArgument;
    }
    if !(p > 0.0 && p < 1.0) {
        return PecbfInvalidArgument;
    }
    unsafe { *out = inv_norm_cdf(p) };
    PecbfOk
}

/// Creates a filter with the given desired poles and confidence level.
/// `probabilistic` selects chance-constraint tightening, `gain_search`
/// the per-step pole optimization; zero/zero reproduces the classical
/// deterministic filter. Returns null if the settings are invalid.
#[no_mangle]
pub extern "C" fn pecbf_filter_new(
    desired_p1: f64,
    desired_p2: f64,
    eta: f64,
    probabilistic: u8,
    gain_search: u8,
) -> *mut PecbfFilter {
    let cfg = ControllerConfig::new((desired_p1, desired_p2), eta)
        .variant(probabilistic != 0, gain_search != 0);
    let filter = PecbfFilter {
        cfg,
        params: VehicleParams::default(),
    };
    if filter.cfg.validate().is_err() {
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(filter))
}

/// Frees a filter created by `pecbf_filter_new`. Null is a no-op.
#[no_mangle]
pub extern "C" fn pecbf_filter_free(filter: *mut PecbfFilter) {
    if !filter.is_null() {
        drop(unsafe { Box::from_raw(filter) });
    }
}

fn with_filter<R>(
    filter: *mut PecbfFilter,
    f: impl FnOnce(&mut PecbfFilter) -> R,
) -> Option<R> {
    if filter.is_null() {
        None
    } else {
        Some(f(unsafe { &mut *filter }))
    }
}

/// Applies a config edit, keeping the previous settings when the edited
/// config fails validation.
fn edit_config(
    filter: *mut PecbfFilter,
    edit: impl FnOnce(&mut ControllerConfig),
) -> PecbfStatus {
    match with_filter(filter, |flt| {
        let mut cfg = flt.cfg.clone();
        edit(&mut cfg);
        if cfg.validate().is_err() {
            return PecbfInvalidArgument;
        }
        flt.cfg = cfg;
        PecbfOk
    }) {
        Some(status) => status,
        None => PecbfNullArgument,
    }
}

/// Sets the objective weights: `c1` prices input deviation, `c2` pole
/// deviation.
#[no_mangle]
pub extern "C" fn pecbf_filter_set_weights(
    filter: *mut PecbfFilter,
    c1: f64,
    c2: f64,
) -> PecbfStatus {
    edit_config(filter, |cfg| {
        cfg.c1 = c1;
        cfg.c2 = c2;
    })
}

/// Replaces the pole candidate grid. Values must be positive, at most the
/// pole cap, and include both desired poles.
#[no_mangle]
pub extern "C" fn pecbf_filter_set_pole_grid(
    filter: *mut PecbfFilter,
    values: *const f64,
    len: usize,
) -> PecbfStatus {
    if values.is_null() && len > 0 {
        return PecbfNullArgument;
    }
    let grid = unsafe { std::slice::from_raw_parts(values, len) }.to_vec();
    edit_config(filter, |cfg| cfg.pole_grid = grid)
}

/// Sets the stability cap on pole candidates, typically just below the
/// reciprocal of the integration step.
#[no_mangle]
pub extern "C" fn pecbf_filter_set_pole_cap(
    filter: *mut PecbfFilter,
    cap: f64,
) -> PecbfStatus {
    edit_config(filter, |cfg| cfg.pole_cap = cap)
}

/// Sets the ego vehicle model: rear-axle distance, box half-extents, and
/// input bounds.
#[no_mangle]
pub extern "C" fn pecbf_filter_set_vehicle(
    filter: *mut PecbfFilter,
    l_r: f64,
    b_x: f64,
    b_y: f64,
    a_min: f64,
    a_max: f64,
    beta_min: f64,
    beta_max: f64,
) -> PecbfStatus {
    let finite = [l_r, b_x, b_y, a_min, a_max, beta_min, beta_max]
        .iter()
        .all(|v| v.is_finite());
    if !finite || l_r <= 0.0 || b_x <= 0.0 || b_y <= 0.0 || a_min >= a_max || beta_min >= beta_max
    {
        return PecbfInvalidArgument;
    }
    let params = VehicleParams {
        l_r,
        b_x,
        b_y,
        a_min,
        a_max,
        beta_min,
        beta_max,
    };
    match with_filter(filter, |flt| flt.params = params) {
        Some(()) => PecbfOk,
        None => PecbfNullArgument,
    }
}

/// Filters one desired control against the supplied constraints. Either
/// barrier array may be null when its count is zero. Infeasibility is not
/// an error: the decision then carries the full-braking fallback with
/// `feasible` zero.
#[no_mangle]
pub extern "C" fn pecbf_filter_solve(
    filter: *mut PecbfFilter,
    ego: *const PecbfState,
    desired_a: f64,
    desired_beta: f64,
    gap_barriers: *const PecbfGapBarrier,
    n_gap: usize,
    box_barriers: *const PecbfBoxBarrier,
    n_box: usize,
    out: *mut PecbfDecision,
) -> PecbfStatus {
    if filter.is_null() || ego.is_null() || out.is_null() {
        return PecbfNullArgument;
    }
    if (gap_barriers.is_null() && n_gap > 0) || (box_barriers.is_null() && n_box > 0) {
        return PecbfNullArgument;
    }
    let flt = unsafe { &*filter };
    let ego = unsafe { *ego }.to_state();
    let gaps = if n_gap == 0 {
        &[]
    } else {
        unsafe { std::slice::from_raw_parts(gap_barriers, n_gap) }
    };
    let boxes = if n_box == 0 {
        &[]
    } else {
        unsafe { std::slice::from_raw_parts(box_barriers, n_box) }
    };

    let mut instances = Vec::with_capacity(n_gap + n_box);
    for g in gaps {
        if !(g.r_margin > 0.0) || !(g.noise_sd >= 0.0) {
            return PecbfInvalidArgument;
        }
        instances.push(BarrierInstance {
            barrier: Barrier::Longitudinal(pair_geometry(
                &ego,
                &flt.params,
                &g.other.to_state(),
                VehicleInput {
                    a: g.other_a,
                    beta: g.other_beta,
                },
                g.r_margin,
            )),
            noise: GaussianNoise::scalar(g.noise_mean, g.noise_sd),
        });
    }
    for b in boxes {
        if !(b.r_extra >= 0.0) || !(b.noise_sd_x >= 0.0) || !(b.noise_sd_y >= 0.0) {
            return PecbfInvalidArgument;
        }
        let mode = if b.heading_inflated != 0 {
            BoxMode::HeadingInflated
        } else {
            BoxMode::AxisAligned
        };
        let Ok(noise) = GaussianNoise::new(
            vec![b.noise_mean_x, b.noise_mean_y],
            vec![b.noise_sd_x, b.noise_sd_y],
        ) else {
            return PecbfInvalidArgument;
        };
        instances.push(BarrierInstance {
            barrier: Barrier::Planar(planar_pair(
                &ego,
                &flt.params,
                &b.other.to_state(),
                &flt.params,
                VehicleInput {
                    a: b.other_a,
                    beta: b.other_beta,
                },
                b.r_extra,
                mode,
            )),
            noise,
        });
    }

    let solved = catch_unwind(AssertUnwindSafe(|| {
        solve_safe_control(
            VehicleInput {
                a: desired_a,
                beta: desired_beta,
            },
            &flt.params,
            &instances,
            &flt.cfg,
        )
    }));
    match solved {
        Ok(d) => {
            unsafe {
                *out = PecbfDecision {
                    a: d.u.a,
                    beta: d.u.beta,
                    feasible: d.feasible as u8,
                    objective: d.objective,
                    branch_id: d.branch_id,
                };
            }
            PecbfOk
        }
        Err(_) => PecbfSolverFailure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: f64, v: f64) -> PecbfState {
        PecbfState {
            x,
            y: 0.0,
            psi: 0.0,
            v,
        }
    }

    fn gap(other_x: f64, other_v: f64, sd: f64) -> PecbfGapBarrier {
        PecbfGapBarrier {
            other: state(other_x, other_v),
            other_a: 0.0,
            other_beta: 0.0,
            r_margin: 4.82,
            noise_mean: 0.0,
            noise_sd: sd,
        }
    }

    #[test]
    fn version_is_nul_terminated_semver() {
        let p = pecbf_version();
        assert!(!p.is_null());
        let s = unsafe { std::ffi::CStr::from_ptr(p) }.to_str().unwrap();
        assert_eq!(s, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn inverse_cdf_checks_arguments() {
        let mut out = f64::NAN;
        assert_eq!(pecbf_inv_norm_cdf(0.5, &mut out), PecbfOk);
        assert_eq!(out, 0.0);
        assert_eq!(pecbf_inv_norm_cdf(0.0, &mut out), PecbfInvalidArgument);
        assert_eq!(pecbf_inv_norm_cdf(1.0, &mut out), PecbfInvalidArgument);
        assert_eq!(
            pecbf_inv_norm_cdf(0.5, std::ptr::null_mut()),
            PecbfNullArgument
        );
    }

    #[test]
    fn lifecycle_and_null_handling() {
        assert!(pecbf_filter_new(1.0, 2.0, 1.5, 1, 1).is_null());
        assert!(pecbf_filter_new(-1.0, 2.0, 0.99, 1, 1).is_null());

        let f = pecbf_filter_new(1.0, 2.0, 0.99, 1, 1);
        assert!(!f.is_null());
        assert_eq!(pecbf_filter_set_weights(f, 1.0, 20.0), PecbfOk);
        assert_eq!(
            pecbf_filter_set_weights(std::ptr::null_mut(), 1.0, 1.0),
            PecbfNullArgument
        );
        // A grid missing the desired poles must be rejected and leave the
        // previous grid in place.
        let bad = [0.5_f64, 3.0];
        assert_eq!(
            pecbf_filter_set_pole_grid(f, bad.as_ptr(), bad.len()),
            PecbfInvalidArgument
        );
        let good = [0.5_f64, 1.0, 2.0, 4.0];
        assert_eq!(
            pecbf_filter_set_pole_grid(f, good.as_ptr(), good.len()),
            PecbfOk
        );
        assert_eq!(pecbf_filter_set_pole_cap(f, 9.9), PecbfOk);
        assert_eq!(
            pecbf_filter_set_vehicle(f, 1.5, 2.4, 1.0, -5.0, 3.0, -0.2, 0.2),
            PecbfOk
        );
        assert_eq!(
            pecbf_filter_set_vehicle(f, -1.0, 2.4, 1.0, -5.0, 3.0, -0.2, 0.2),
            PecbfInvalidArgument
        );
        pecbf_filter_free(f);
        pecbf_filter_free(std::ptr::null_mut());
    }

    #[test]
    fn solve_matches_direct_library_call() {
        let f = pecbf_filter_new(1.0, 2.0, 0.99, 1, 1);
        let ego = state(0.0, 10.0);
        let barrier = gap(18.0, 6.0, 0.2);
        let mut out = PecbfDecision {
            a: f64::NAN,
            beta: f64::NAN,
            feasible: 9,
            objective: f64::NAN,
            branch_id: 0,
        };
        let status = pecbf_filter_solve(
            f,
            &ego,
            1.0,
            0.0,
            &barrier,
            1,
            std::ptr::null(),
            0,
            &mut out,
        );
        assert_eq!(status, PecbfOk);
        assert_eq!(out.feasible, 1);

        let params = VehicleParams::default();
        let inst = BarrierInstance {
            barrier: Barrier::Longitudinal(pair_geometry(
                &ego.to_state(),
                &params,
                &barrier.other.to_state(),
                VehicleInput { a: 0.0, beta: 0.0 },
                barrier.r_margin,
            )),
            noise: GaussianNoise::scalar(0.0, 0.2),
        };
        let cfg = ControllerConfig::new((1.0, 2.0), 0.99).variant(true, true);
        let direct = solve_safe_control(
            VehicleInput { a: 1.0, beta: 0.0 },
            &params,
            &[inst],
            &cfg,
        );
        assert_eq!(out.a, direct.u.a);
        assert_eq!(out.beta, direct.u.beta);
        assert_eq!(out.objective, direct.objective);
        assert_eq!(out.branch_id, direct.branch_id);
        pecbf_filter_free(f);
    }

    #[test]
    fn solve_reports_fallback_when_boxed_in() {
        let f = pecbf_filter_new(1.0, 2.0, 0.9999, 1, 1);
        let ego = state(0.0, 12.0);
        // A slow lead vehicle well inside the margin cannot be honored.
        let barrier = gap(4.0, 0.0, 0.3);
        let mut out = PecbfDecision {
            a: 0.0,
            beta: 0.0,
            feasible: 9,
            objective: 0.0,
            branch_id: 0,
        };
        let status = pecbf_filter_solve(
            f,
            &ego,
            2.0,
            0.0,
            &barrier,
            1,
            std::ptr::null(),
            0,
            &mut out,
        );
        assert_eq!(status, PecbfOk);
        assert_eq!(out.feasible, 0);
        assert_eq!(out.a, -5.0);
        assert_eq!(out.beta, 0.0);
        assert!(out.objective.is_infinite());
        pecbf_filter_free(f);
    }

    #[test]
    fn solve_accepts_planar_barriers() {
        let f = pecbf_filter_new(1.0, 2.0, 0.9999, 1, 1);
        let ego = PecbfState {
            x: 0.0,
            y: -12.0,
            psi: std::f64::consts::FRAC_PI_2,
            v: 8.0,
        };
        let crossing = PecbfBoxBarrier {
            other: PecbfState {
                x: -15.0,
                y: 0.0,
                psi: 0.0,
                v: 10.0,
            },
            other_a: 0.0,
            other_beta: 0.0,
            r_extra: 0.5,
            heading_inflated: 1,
            noise_mean_x: 0.0,
            noise_mean_y: 0.0,
            noise_sd_x: 0.21,
            noise_sd_y: 0.21,
        };
        let mut out = PecbfDecision {
            a: 0.0,
            beta: 0.0,
            feasible: 9,
            objective: 0.0,
            branch_id: 0,
        };
        let status = pecbf_filter_solve(
            f,
            &ego,
            0.5,
            0.0,
            std::ptr::null(),
            0,
            &crossing,
            1,
            &mut out,
        );
        assert_eq!(status, PecbfOk);
        assert_eq!(out.feasible, 1);
        assert!(out.a <= 0.5 + 1e-12, "filter should not exceed demand");
        pecbf_filter_free(f);
    }

    #[test]
    fn solve_validates_pointers_and_values() {
        let f = pecbf_filter_new(1.0, 2.0, 0.99, 1, 1);
        let ego = state(0.0, 10.0);
        let mut out = PecbfDecision {
            a: 0.0,
            beta: 0.0,
            feasible: 0,
            objective: 0.0,
            branch_id: 0,
        };
        assert_eq!(
            pecbf_filter_solve(
                f,
                std::ptr::null(),
                0.0,
                0.0,
                std::ptr::null(),
                0,
                std::ptr::null(),
                0,
                &mut out
            ),
            PecbfNullArgument
        );
        assert_eq!(
            pecbf_filter_solve(
                f,
                &ego,
                0.0,
                0.0,
                std::ptr::null(),
                3,
                std::ptr::null(),
                0,
                &mut out
            ),
            PecbfNullArgument
        );
        let bad = gap(18.0, 6.0, -0.5);
        assert_eq!(
            pecbf_filter_solve(
                f,
                &ego,
                0.0,
                0.0,
                &bad,
                1,
                std::ptr::null(),
                0,
                &mut out
            ),
            PecbfInvalidArgument
        );
        // No barriers at all: the desired input passes through.
        assert_eq!(
            pecbf_filter_solve(
                f,
                &ego,
                1.25,
                0.01,
                std::ptr::null(),
                0,
                std::ptr::null(),
                0,
                &mut out
            ),
            PecbfOk
        );
        assert_eq!(out.a, 1.25);
        assert_eq!(out.beta, 0.01);
        pecbf_filter_free(f);
    }
}
