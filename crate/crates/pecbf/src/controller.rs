//! Per-step safety filter: choose the input and, optionally, each barrier's
//! gains.
//!
//! The step problem is
//!
//! ```text
//!     min  c1 ||u - u_des||^2 + c2 sum_b ||(p1, p2)_b - (p1*, p2*)||^2
//!     s.t. every barrier's tightened constraints hold
//! ```
//!
//! which couples u and the gains bilinearly (k1 = p1 p2 multiplies the
//! barrier value). The search is made exact and finite in three moves:
//! poles range over a configured candidate grid; the first pole condition
//! is input-free, so it prunes p1 candidates before any input work; and for
//! fixed gains the chance constraint is a union of input-affine branches,
//! so fixing one branch per barrier leaves a two-variable projection onto a
//! polygon. Combinations are enumerated in increasing pole penalty with an
//! incumbent bound, which prunes almost everything whenever the desired
//! poles are feasible while remaining exhaustive when they are not.

use crate::ecbf::{gains_from_poles, EcbfGains};
use crate::intersection::{
    admissible_control_set_2d, combined_noise, pole1_boundary_2d, PlanarPair,
};
use crate::lane_change::{admissible_control_set, pole1_boundary, PairGeometry};
use crate::qp::{solve_convex_subproblem, AffineConstraint, FEAS_TOL};
use crate::stochastic::{tighten_affine, BranchLabel, ChanceConstraintSet, GaussianNoise, TightenedBranch};
use crate::vehicle::{VehicleInput, VehicleParams};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One safety constraint the controller must respect this step.
#[derive(Debug, Clone)]
pub enum Barrier {
    /// Longitudinal gap barrier (lane change).
    Longitudinal(PairGeometry),
    /// Planar 1-norm box barrier (intersection).
    Planar(PlanarPair),
}

/// A barrier plus the relative noise acting on it: one axis for
/// longitudinal barriers, two for planar ones.
#[derive(Debug, Clone)]
pub struct BarrierInstance {
    pub barrier: Barrier,
    pub noise: GaussianNoise,
}

impl Barrier {
    pub fn h(&self) -> f64 {
        match self {
            Barrier::Longitudinal(pg) => pg.h(),
            Barrier::Planar(pp) => crate::intersection::h_o(pp),
        }
    }

    fn hard_infeasible(&self) -> bool {
        match self {
            Barrier::Longitudinal(pg) => pg.dx == 0.0,
            Barrier::Planar(_) => false,
        }
    }

    fn pole1_branch(&self, p1: f64, noise: &GaussianNoise, eta: f64) -> TightenedBranch {
        match self {
            Barrier::Longitudinal(pg) => tighten_affine(
                2.0 * pg.dx,
                p1 * pg.h() + 2.0 * pg.dx * pg.dxdot,
                noise.mean[0],
                noise.sigma[0],
                eta,
            ),
            Barrier::Planar(pp) => {
                let be = crate::intersection::barrier_derivatives(pp);
                let z = combined_noise(pp, noise);
                tighten_affine(1.0, be.h_dot + p1 * be.h, z.mean[0], z.sigma[0], eta)
            }
        }
    }

    fn admissible_set(
        &self,
        gains: &EcbfGains,
        noise: &GaussianNoise,
        eta: f64,
    ) -> ChanceConstraintSet {
        match self {
            Barrier::Longitudinal(pg) => admissible_control_set(pg, gains, noise, eta),
            Barrier::Planar(pp) => admissible_control_set_2d(pp, gains, noise, eta),
        }
    }

    fn pole1_boundary(&self, noise: &GaussianNoise, eta: f64) -> Option<f64> {
        match self {
            Barrier::Longitudinal(pg) => pole1_boundary(pg, noise, eta),
            Barrier::Planar(pp) => pole1_boundary_2d(pp, noise, eta),
        }
    }
}

/// Safety-filter settings shared by all controller variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Weight on the input deviation term.
    pub c1: f64,
    /// Weight on the pole deviation term.
    pub c2: f64,
    /// Confidence level of the chance constraints.
    pub eta: f64,
    /// Gain poles the objective pulls toward.
    pub desired_poles: (f64, f64),
    /// False evaluates every tightening at eta = 0.5 with zero noise (a
    /// deterministic filter that ignores the disturbance).
    pub probabilistic: bool,
    /// False pins the poles at `desired_poles` instead of searching.
    pub kalpha_opt: bool,
    /// Pole candidates for the search; shared by p1 and p2 and required to
    /// contain both desired poles.
    pub pole_grid: Vec<f64>,
    /// Upper bound on any pole candidate, including the data-dependent
    /// first-pole boundary value. Under Euler stepping a pole p decays the
    /// barrier residuals by the factor 1 - p dt per step, so candidates must
    /// stay below 1/dt or a feasible step can drive the barrier negative.
    pub pole_cap: f64,
}

/// Grid multipliers applied to each desired pole for the default candidate
/// set.
pub const DEFAULT_POLE_SCALES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Scale applied to the steering deviation inside the input norm, chosen so
/// each input is measured in units of its actuation range. Acceleration
/// spans a_max - a_min while the slip angle spans beta_max - beta_min; with
/// a raw Euclidean norm a full-lock steering change would cost as little as
/// a fraction of a m/s^2 change and the filter would steer around every
/// longitudinal conflict instead of braking.
pub fn input_weight(params: &VehicleParams) -> f64 {
    (params.a_max - params.a_min) / (params.beta_max - params.beta_min)
}

/// Builds the default pole grid: every scale times every desired pole,
/// deduplicated and sorted.
pub fn default_pole_grid(desired: (f64, f64)) -> Vec<f64> {
    let mut grid: Vec<f64> = DEFAULT_POLE_SCALES
        .iter()
        .flat_map(|m| [m * desired.0, m * desired.1])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

impl ControllerConfig {
    pub fn new(desired_poles: (f64, f64), eta: f64) -> Self {
        ControllerConfig {
            c1: 1.0,
            c2: 0.1,
            eta,
            desired_poles,
            probabilistic: true,
            kalpha_opt: true,
            pole_grid: default_pole_grid(desired_poles),
            pole_cap: f64::INFINITY,
        }
    }

    /// The four ablation variants studied by the harness.
    pub fn variant(mut self, probabilistic: bool, kalpha_opt: bool) -> Self {
        self.probabilistic = probabilistic;
        self.kalpha_opt = kalpha_opt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) || (self.c1 == 0.0 && self.c2 == 0.0) {
            return Err(Error::Config(
                "objective weights must be nonnegative and not both zero".into(),
            ));
        }
        if self.probabilistic && !(self.eta > 0.5 && self.eta < 1.0) {
            return Err(Error::Config(format!(
                "confidence eta must lie in (0.5, 1), got {}",
                self.eta
            )));
        }
        if !(self.desired_poles.0 > 0.0 && self.desired_poles.1 > 0.0) {
            return Err(Error::Config("desired poles must be positive".into()));
        }
        if self.pole_grid.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::Config("pole grid values must be positive".into()));
        }
        if !(self.pole_cap > 0.0) {
            return Err(Error::Config("pole cap must be positive".into()));
        }
        if self.pole_grid.iter().any(|p| *p > self.pole_cap) {
            return Err(Error::Config(format!(
                "pole grid exceeds the stability cap {}",
                self.pole_cap
            )));
        }
        if !self.pole_grid.contains(&self.desired_poles.0)
            || !self.pole_grid.contains(&self.desired_poles.1)
        {
            return Err(Error::Config(
                "pole grid must contain the desired poles".into(),
            ));
        }
        Ok(())
    }
}

/// Per-barrier outcome of a solved step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierDiagnostics {
    pub gains: EcbfGains,
    pub branch: BranchLabel,
    /// Residual of the selected constraint branch at the returned input.
    pub residual: f64,
    /// Residual of the tightened first pole condition.
    pub pole1_residual: f64,
    pub hard_infeasible: bool,
}

/// Result of one safety-filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDecision {
    pub u: VehicleInput,
    pub gains: Vec<EcbfGains>,
    /// Index of the winning (pole, branch) combination in the deterministic
    /// enumeration order; ties go to the lowest index.
    pub branch_id: u64,
    pub feasible: bool,
    pub objective: f64,
    pub diagnostics: Vec<BarrierDiagnostics>,
}

#[derive(Debug, Clone)]
struct BranchOption {
    pen: f64,
    gains: EcbfGains,
    row: TightenedBranch,
    label: BranchLabel,
    pole1_residual: f64,
}

/// Largest value an affine row attains over the input box; a negative
/// maximum means the branch can never be satisfied this step.
fn row_max_over_box(row: &TightenedBranch, p: &VehicleParams) -> f64 {
    let span = |c: f64, lo: f64, hi: f64| if c >= 0.0 { c * hi } else { c * lo };
    row.constant
        + span(row.coeffs[0], p.a_min, p.a_max)
        + span(row.coeffs[1], p.beta_min, p.beta_max)
}

fn barrier_options(
    inst: &BarrierInstance,
    params: &VehicleParams,
    cfg: &ControllerConfig,
    noise: &GaussianNoise,
    eta: f64,
) -> Vec<BranchOption> {
    let mut p1_candidates: Vec<f64>;
    let p2_candidates: Vec<f64>;
    if cfg.kalpha_opt {
        p1_candidates = cfg.pole_grid.clone();
        if let Some(b) = inst.barrier.pole1_boundary(noise, eta) {
            if b <= cfg.pole_cap {
                p1_candidates.push(b);
            }
        }
        p1_candidates.sort_by(f64::total_cmp);
        p1_candidates.dedup();
        p2_candidates = cfg.pole_grid.clone();
    } else {
        p1_candidates = vec![cfg.desired_poles.0];
        p2_candidates = vec![cfg.desired_poles.1];
    }

    let mut options = Vec::new();
    for &p1 in &p1_candidates {
        let pole1 = inst.barrier.pole1_branch(p1, noise, eta);
        if !pole1.satisfied(&[]) {
            continue;
        }
        let d1 = p1 - cfg.desired_poles.0;
        for &p2 in &p2_candidates {
            let Ok(gains) = gains_from_poles(p1, p2) else {
                continue;
            };
            let d2 = p2 - cfg.desired_poles.1;
            let pen = cfg.c2 * (d1 * d1 + d2 * d2);
            let set = inst.barrier.admissible_set(&gains, noise, eta);
            for row in set.branches {
                if row_max_over_box(&row, params) < -FEAS_TOL {
                    continue;
                }
                options.push(BranchOption {
                    pen,
                    gains,
                    pole1_residual: pole1.residual(&[]),
                    label: row.label,
                    row,
                });
            }
        }
    }
    options.sort_by(|a, b| {
        a.pen
            .total_cmp(&b.pen)
            .then(a.gains.p1.total_cmp(&b.gains.p1))
            .then(a.gains.p2.total_cmp(&b.gains.p2))
            .then((a.label as u8).cmp(&(b.label as u8)))
    });
    options
}

fn zero_noise_like(noise: &GaussianNoise) -> GaussianNoise {
    GaussianNoise {
        mean: vec![0.0; noise.dims()],
        sigma: vec![0.0; noise.dims()],
    }
}

fn infeasible_fallback(
    params: &VehicleParams,
    cfg: &ControllerConfig,
    diagnostics: Vec<BarrierDiagnostics>,
) -> ControllerDecision {
    let gains = gains_from_poles(cfg.desired_poles.0, cfg.desired_poles.1)
        .expect("validated desired poles");
    ControllerDecision {
        u: VehicleInput {
            a: params.a_min,
            beta: 0.0,
        },
        gains: vec![gains; diagnostics.len().max(1)],
        branch_id: 0,
        feasible: false,
        objective: f64::INFINITY,
        diagnostics,
    }
}

/// Solves one safety-filter step. Infeasibility is a structured outcome
/// carrying the full-braking fallback input, never an error.
pub fn solve_safe_control(
    u_desired: VehicleInput,
    params: &VehicleParams,
    barriers: &[BarrierInstance],
    cfg: &ControllerConfig,
) -> ControllerDecision {
    debug_assert!(cfg.validate().is_ok());
    let u_des = [
        u_desired.a.clamp(params.a_min, params.a_max),
        u_desired.beta.clamp(params.beta_min, params.beta_max),
    ];
    let desired_gains =
        gains_from_poles(cfg.desired_poles.0, cfg.desired_poles.1).expect("validated poles");

    if barriers.is_empty() {
        return ControllerDecision {
            u: VehicleInput {
                a: u_des[0],
                beta: u_des[1],
            },
            gains: Vec::new(),
            branch_id: 0,
            feasible: true,
            objective: 0.0,
            diagnostics: Vec::new(),
        };
    }

    let eta = if cfg.probabilistic { cfg.eta } else { 0.5 };
    let mut per_barrier: Vec<Vec<BranchOption>> = Vec::with_capacity(barriers.len());
    for inst in barriers {
        if inst.barrier.hard_infeasible() {
            let diag = vec![BarrierDiagnostics {
                gains: desired_gains,
                branch: BranchLabel::Affine,
                residual: f64::NEG_INFINITY,
                pole1_residual: f64::NEG_INFINITY,
                hard_infeasible: true,
            }];
            return infeasible_fallback(params, cfg, diag);
        }
        let noise = if cfg.probabilistic {
            inst.noise.clone()
        } else {
            zero_noise_like(&inst.noise)
        };
        let options = barrier_options(inst, params, cfg, &noise, eta);
        if options.is_empty() {
            return infeasible_fallback(params, cfg, Vec::new());
        }
        per_barrier.push(options);
    }

    // Exhaustive search over one option per barrier, in deterministic
    // enumeration order, pruned by the running pole-penalty sum: options are
    // penalty-sorted, so once a partial sum reaches the incumbent total no
    // deeper combination can win.
    let n = per_barrier.len();
    let mut strides = vec![1u64; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * per_barrier[i + 1].len() as u64;
    }
    // The projection runs in weighted coordinates (a, w * beta) so the
    // deviation norm prices both inputs by actuation range; constraint rows
    // and bounds are mapped into the same coordinates.
    let w = input_weight(params);
    let u_des = [u_des[0], w * u_des[1]];
    let lo = [params.a_min, w * params.beta_min];
    let hi = [params.a_max, w * params.beta_max];

    struct Best {
        total: f64,
        id: u64,
        u: [f64; 2],
        picks: Vec<usize>,
    }
    let mut best: Option<Best> = None;
    let mut picks = vec![0usize; n];
    let mut rows: Vec<AffineConstraint> = Vec::with_capacity(n);

    fn descend(
        level: usize,
        pen_sum: f64,
        id: u64,
        per_barrier: &[Vec<BranchOption>],
        strides: &[u64],
        picks: &mut Vec<usize>,
        rows: &mut Vec<AffineConstraint>,
        u_des: [f64; 2],
        lo: [f64; 2],
        hi: [f64; 2],
        c1: f64,
        w: f64,
        best: &mut Option<Best>,
    ) {
        if let Some(b) = best.as_ref() {
            if pen_sum > b.total {
                return;
            }
        }
        if level == per_barrier.len() {
            let Some(u) = solve_convex_subproblem(u_des, rows, lo, hi) else {
                return;
            };
            let d0 = u[0] - u_des[0];
            let d1 = u[1] - u_des[1];
            let total = pen_sum + c1 * (d0 * d0 + d1 * d1);
            let wins = match best.as_ref() {
                None => true,
                Some(b) => total < b.total || (total == b.total && id < b.id),
            };
            if wins {
                *best = Some(Best {
                    total,
                    id,
                    u,
                    picks: picks.clone(),
                });
            }
            return;
        }
        for (k, opt) in per_barrier[level].iter().enumerate() {
            let pen = pen_sum + opt.pen;
            if let Some(b) = best.as_ref() {
                if pen > b.total {
                    break; // options are penalty-sorted
                }
            }
            picks[level] = k;
            rows.push(AffineConstraint {
                coeffs: [opt.row.coeffs[0], opt.row.coeffs[1] / w],
                constant: opt.row.constant,
            });
            descend(
                level + 1,
                pen,
                id + k as u64 * strides[level],
                per_barrier,
                strides,
                picks,
                rows,
                u_des,
                lo,
                hi,
                c1,
                w,
                best,
            );
            rows.pop();
        }
    }

    descend(
        0,
        0.0,
        0,
        &per_barrier,
        &strides,
        &mut picks,
        &mut rows,
        u_des,
        lo,
        hi,
        cfg.c1,
        w,
        &mut best,
    );

    let Some(b) = best else {
        return infeasible_fallback(params, cfg, Vec::new());
    };
    let u_phys = [b.u[0], b.u[1] / w];
    let u = VehicleInput {
        a: u_phys[0],
        beta: u_phys[1],
    };
    let mut gains = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    for (level, &k) in b.picks.iter().enumerate() {
        let opt = &per_barrier[level][k];
        gains.push(opt.gains);
        diagnostics.push(BarrierDiagnostics {
            gains: opt.gains,
            branch: opt.label,
            residual: opt.row.residual(&u_phys),
            pole1_residual: opt.pole1_residual,
            hard_infeasible: false,
        });
    }
    ControllerDecision {
        u,
        gains,
        branch_id: b.id,
        feasible: true,
        objective: b.total,
        diagnostics,
    }
}
