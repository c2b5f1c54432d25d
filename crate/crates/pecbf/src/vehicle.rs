//! Small-angle kinematic bicycle model.
//!
//! State is (x, y, psi, v); inputs are acceleration a and steering angle
//! beta. Under the small-angle approximation the model is control-affine:
//!
//! ```text
//!     d/dt [x, y, psi, v] = [v cos psi, v sin psi, 0, 0]
//!                         + [[0, -v sin psi],
//!                            [0,  v cos psi],
//!                            [0,  v / l_r  ],
//!                            [1,  0        ]] [a, beta]
//!                         + [eps1, eps2, 0, 0]
//! ```
//!
//! The Gaussian disturbance enters the position rates only; heading and
//! speed stay noise-free. Integration is explicit Euler with a zero-order
//! hold on inputs and noise.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Planar vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

/// Control input: longitudinal acceleration and steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleInput {
    pub a: f64,
    pub beta: f64,
}

impl VehicleInput {
    pub const ZERO: VehicleInput = VehicleInput { a: 0.0, beta: 0.0 };

    pub fn as_array(&self) -> [f64; 2] {
        [self.a, self.beta]
    }
}

/// Geometry and input bounds of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Distance from the center of gravity to the rear axle (m).
    pub l_r: f64,
    /// Bounding-box half length (m).
    pub b_x: f64,
    /// Bounding-box half width (m).
    pub b_y: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            l_r: 1.5,
            b_x: 2.4,
            b_y: 1.0,
            a_min: -5.0,
            a_max: 3.0,
            beta_min: -0.2,
            beta_max: 0.2,
        }
    }
}

impl VehicleParams {
    pub fn clamp_input(&self, u: VehicleInput) -> VehicleInput {
        VehicleInput {
            a: u.a.clamp(self.a_min, self.a_max),
            beta: u.beta.clamp(self.beta_min, self.beta_max),
        }
    }
}

/// Drift term f(x) of the control-affine model.
pub fn drift(s: &VehicleState) -> [f64; 4] {
    [s.v * s.psi.cos(), s.v * s.psi.sin(), 0.0, 0.0]
}

/// Input matrix g(x); column 0 multiplies a, column 1 multiplies beta.
pub fn input_matrix(s: &VehicleState, p: &VehicleParams) -> [[f64; 2]; 4] {
    [
        [0.0, -s.v * s.psi.sin()],
        [0.0, s.v * s.psi.cos()],
        [0.0, s.v / p.l_r],
        [1.0, 0.0],
    ]
}

/// Result of one Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub state: VehicleState,
    /// True when the speed update was clamped at zero.
    pub speed_clamped: bool,
}

/// One explicit Euler step with additive position-rate noise (eps1 on x,
/// eps2 on y). Speed is clamped at zero; the clamp is reported so the
/// harness can log it. Non-finite inputs are rejected.
pub fn step(
    s: &VehicleState,
    u: &VehicleInput,
    eps: [f64; 2],
    dt: f64,
    p: &VehicleParams,
) -> Result<StepResult> {
    let finite = s.x.is_finite()
        && s.y.is_finite()
        && s.psi.is_finite()
        && s.v.is_finite()
        && u.a.is_finite()
        && u.beta.is_finite()
        && eps[0].is_finite()
        && eps[1].is_finite()
        && dt.is_finite()
        && dt > 0.0;
    if !finite {
        return Err(Error::Solver(format!(
            "non-finite step: state {s:?}, input {u:?}, eps {eps:?}, dt {dt}"
        )));
    }
    let f = drift(s);
    let g = input_matrix(s, p);
    let ua = u.as_array();
    let mut rate = [0.0; 4];
    for i in 0..4 {
        rate[i] = f[i] + g[i][0] * ua[0] + g[i][1] * ua[1];
    }
    rate[0] += eps[0];
    rate[1] += eps[1];

    let v_raw = s.v + dt * rate[3];
    let speed_clamped = v_raw < 0.0;
    Ok(StepResult {
        state: VehicleState {
            x: s.x + dt * rate[0],
            y: s.y + dt * rate[1],
            psi: s.psi + dt * rate[2],
            v: if speed_clamped { 0.0 } else { v_raw },
        },
        speed_clamped,
    })
}
