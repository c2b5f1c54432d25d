//! Nominal (safety-unaware) driving commands the filter projects onto the
//! admissible set: a smoothstep lateral profile for lane changes and a
//! fixed-path tracker for intersection maneuvers.

use crate::vehicle::{VehicleInput, VehicleParams, VehicleState};
use std::f64::consts::{FRAC_PI_2, PI};

/// Lateral-position loop gain (1/s).
const K_LAT: f64 = 0.8;
/// Heading loop gain mapping heading error to slip angle.
const K_HEADING: f64 = 1.2;
/// Speed loop gain (1/s).
const K_SPEED: f64 = 1.0;
/// Cross-track loop gain for path following (rad per m at unit speed).
/// Sized so the coarse-step outward drift on the turn arc settles well
/// inside half a lane while staying slower than the heading loop.
const K_CROSS: f64 = 2.5;
/// Largest commanded heading offset (rad); keeps the small-angle model honest.
const MAX_HEADING_CMD: f64 = 0.35;

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Smoothstep lane-change reference: reach `y_target` over `duration`
/// seconds with zero lateral rate at both ends, holding `v_set` throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeNominal {
    pub y_target: f64,
    pub duration: f64,
    pub v_set: f64,
}

impl LaneChangeNominal {
    pub fn control(&self, t: f64, s: &VehicleState, p: &VehicleParams) -> VehicleInput {
        let tau = (t / self.duration).clamp(0.0, 1.0);
        let y_ref = self.y_target * tau * tau * (3.0 - 2.0 * tau);
        let ydot_ref = self.y_target * 6.0 * tau * (1.0 - tau) / self.duration;
        let v_floor = s.v.max(1.0);
        let psi_cmd =
            (ydot_ref / v_floor + K_LAT * (y_ref - s.y) / v_floor).clamp(-MAX_HEADING_CMD, MAX_HEADING_CMD);
        p.clamp_input(VehicleInput {
            a: K_SPEED * (self.v_set - s.v),
            beta: K_HEADING * (psi_cmd - s.psi),
        })
    }
}

/// Reference geometry the intersection tracker follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlannedPath {
    /// Drive north along the vertical line x = `x`.
    StraightNorth { x: f64 },
    /// Approach north on x = center.x + radius, sweep a quarter circle
    /// counterclockwise, exit west along y = center.y + radius.
    LeftTurnWest { center: [f64; 2], radius: f64 },
}

/// Local path frame at the point nearest the vehicle: signed left-of-path
/// offset, reference heading, and path curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFrame {
    pub e_left: f64,
    pub psi_ref: f64,
    pub curvature: f64,
}

impl PlannedPath {
    pub fn frame(&self, x: f64, y: f64) -> PathFrame {
        match *self {
            PlannedPath::StraightNorth { x: x0 } => PathFrame {
                e_left: -(x - x0),
                psi_ref: FRAC_PI_2,
                curvature: 0.0,
            },
            PlannedPath::LeftTurnWest { center, radius } => {
                let rx = x - center[0];
                let ry = y - center[1];
                let phi = ry.atan2(rx);
                if phi <= 0.0 {
                    // Approach leg, heading north on the entry tangent.
                    PathFrame {
                        e_left: -(x - (center[0] + radius)),
                        psi_ref: FRAC_PI_2,
                        curvature: 0.0,
                    }
                } else if phi < FRAC_PI_2 {
                    // Quarter arc, counterclockwise: the center is to the
                    // left, so left-of-path offset grows toward it.
                    PathFrame {
                        e_left: radius - rx.hypot(ry),
                        psi_ref: phi + FRAC_PI_2,
                        curvature: 1.0 / radius,
                    }
                } else {
                    // Exit leg, heading west: left of path points toward -y.
                    PathFrame {
                        e_left: (center[1] + radius) - y,
                        psi_ref: PI,
                        curvature: 0.0,
                    }
                }
            }
        }
    }
}

/// Path tracker holding a set speed: feedforward slip for the path
/// curvature plus heading feedback toward a cross-track-corrected course.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNominal {
    pub path: PlannedPath,
    pub v_set: f64,
}

impl PathNominal {
    pub fn control(&self, s: &VehicleState, p: &VehicleParams) -> VehicleInput {
        let f = self.path.frame(s.x, s.y);
        let course_corr = (-K_CROSS * f.e_left / s.v.max(2.0)).clamp(-0.4, 0.4);
        let psi_err = wrap_angle(f.psi_ref + course_corr - s.psi);
        p.clamp_input(VehicleInput {
            a: K_SPEED * (self.v_set - s.v),
            beta: p.l_r * f.curvature + K_HEADING * psi_err,
        })
    }
}

/// The nominal law a scenario equips its ego vehicle with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NominalLaw {
    Lane(LaneChangeNominal),
    Path(PathNominal),
}

impl NominalLaw {
    pub fn control(&self, t: f64, s: &VehicleState, p: &VehicleParams) -> VehicleInput {
        match self {
            NominalLaw::Lane(n) => n.control(t, s, p),
            NominalLaw::Path(n) => n.control(s, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::step;

    fn simulate<F: FnMut(f64, &VehicleState) -> VehicleInput>(
        mut s: VehicleState,
        p: &VehicleParams,
        dt: f64,
        t_end: f64,
        mut law: F,
    ) -> Vec<(f64, VehicleState)> {
        let mut out = vec![(0.0, s)];
        let mut t = 0.0;
        while t < t_end - 1e-9 {
            let u = law(t, &s);
            s = step(&s, &u, [0.0, 0.0], dt, p).unwrap().state;
            t += dt;
            out.push((t, s));
        }
        out
    }

    #[test]
    fn wrap_angle_examples() {
        assert!((wrap_angle(0.0)).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-9 || (wrap_angle(3.0 * PI) + PI).abs() < 1e-9);
        assert!((wrap_angle(PI + 0.1) - (-PI + 0.1)).abs() < 1e-9);
        assert!((wrap_angle(-PI - 0.1) - (PI - 0.1)).abs() < 1e-9);
    }

    #[test]
    fn lane_change_completes_and_settles() {
        let p = VehicleParams::default();
        for v0 in [8.0, 10.0, 12.0] {
            let n = LaneChangeNominal {
                y_target: 3.5,
                duration: 6.0,
                v_set: v0,
            };
            let s0 = VehicleState {
                x: 0.0,
                y: 0.0,
                psi: 0.0,
                v: v0,
            };
            let traj = simulate(s0, &p, 0.1, 10.0, |t, s| n.control(t, s, &p));
            for (_, s) in &traj {
                assert!(s.psi.abs() < 0.45, "heading excursion {}", s.psi);
                assert!((s.v - v0).abs() < 0.5);
            }
            let reached = traj
                .iter()
                .find(|(_, s)| (s.y - 3.5).abs() < 0.2)
                .map(|(t, _)| *t);
            assert!(
                reached.is_some_and(|t| t < 8.0),
                "lane change too slow at v0 {v0}: {reached:?}"
            );
            let (_, last) = traj.last().unwrap();
            assert!((last.y - 3.5).abs() < 0.1, "did not settle: y {}", last.y);
        }
    }

    #[test]
    fn straight_path_holds_the_lane() {
        let p = VehicleParams::default();
        let n = PathNominal {
            path: PlannedPath::StraightNorth { x: 1.75 },
            v_set: 9.0,
        };
        let s0 = VehicleState {
            x: 2.4, // start offset to exercise the correction
            y: -20.0,
            psi: FRAC_PI_2,
            v: 9.0,
        };
        let traj = simulate(s0, &p, 0.1, 6.0, |_, s| n.control(s, &p));
        let (_, last) = traj.last().unwrap();
        assert!((last.x - 1.75).abs() < 0.05, "offset remains {}", last.x - 1.75);
        assert!(last.y > 20.0);
    }

    #[test]
    fn left_turn_tracks_the_arc_and_exits_west() {
        let p = VehicleParams::default();
        let radius = 10.0;
        let center = [1.75 - radius, 1.75 - radius];
        let n = PathNominal {
            path: PlannedPath::LeftTurnWest { center, radius },
            v_set: 9.0,
        };
        let s0 = VehicleState {
            x: 1.75,
            y: -25.0,
            psi: FRAC_PI_2,
            v: 9.0,
        };
        let traj = simulate(s0, &p, 0.1, 12.0, |_, s| n.control(s, &p));
        let mut worst = 0.0f64;
        for (_, s) in &traj {
            let f = n.path.frame(s.x, s.y);
            if f.curvature > 0.0 {
                worst = worst.max(f.e_left.abs());
            }
        }
        assert!(worst < 0.5, "arc cross-track error {worst}");
        let (_, last) = traj.last().unwrap();
        assert!(last.x < -15.5, "did not exit west: x {}", last.x);
        assert!((last.y - 1.75).abs() < 0.5, "exit lane offset: y {}", last.y);
    }
}
