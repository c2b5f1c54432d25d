//! Shared helpers for unit tests: a tiny deterministic RNG and a
//! high-accuracy reference integrator for the barrier-side kinematics.

use crate::vehicle::{VehicleInput, VehicleState};

/// splitmix64 step; deterministic and platform-independent.
pub(crate) fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform f64 in [lo, hi) from a splitmix state.
pub(crate) fn rng_f64(state: &mut u64, lo: f64, hi: f64) -> f64 {
    let u = (splitmix(state) >> 11) as f64 / (1u64 << 53) as f64;
    lo + u * (hi - lo)
}

/// Rates of the barrier-side kinematic model: positions driven by the drift,
/// heading and speed by the inputs. This is the model the barrier modules
/// differentiate, so finite differences of its trajectories are the oracle
/// for their symbolic derivatives.
fn barrier_model_rate(s: &VehicleState, u: &VehicleInput, l_r: f64) -> [f64; 4] {
    [
        s.v * s.psi.cos(),
        s.v * s.psi.sin(),
        s.v / l_r * u.beta,
        u.a,
    ]
}

/// RK4 integration of the barrier-side model over time t (possibly negative)
/// with constant input. Step counts are tiny because t is a finite-difference
/// offset, so truncation error is far below roundoff.
pub(crate) fn integrate_barrier_model(
    s0: &VehicleState,
    u: &VehicleInput,
    l_r: f64,
    t: f64,
    substeps: usize,
) -> VehicleState {
    let mut s = *s0;
    let dt = t / substeps as f64;
    for _ in 0..substeps {
        let k1 = barrier_model_rate(&s, u, l_r);
        let s2 = advance(&s, &k1, dt / 2.0);
        let k2 = barrier_model_rate(&s2, u, l_r);
        let s3 = advance(&s, &k2, dt / 2.0);
        let k3 = barrier_model_rate(&s3, u, l_r);
        let s4 = advance(&s, &k3, dt);
        let k4 = barrier_model_rate(&s4, u, l_r);
        s = VehicleState {
            x: s.x + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y: s.y + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            psi: s.psi + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            v: s.v + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        };
    }
    s
}

fn advance(s: &VehicleState, k: &[f64; 4], dt: f64) -> VehicleState {
    VehicleState {
        x: s.x + k[0] * dt,
        y: s.y + k[1] * dt,
        psi: s.psi + k[2] * dt,
        v: s.v + k[3] * dt,
    }
}
