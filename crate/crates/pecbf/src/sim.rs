//! Closed-loop trial execution, outcome classification, and the replayable
//! trial record format.

use crate::controller::solve_safe_control;
use crate::rng::{noise_rng, sample_eps};
use crate::scenario::{
    build_barriers, check_collision, check_success, generate_scenario, ScenarioSpec,
};
use crate::vehicle::{step, VehicleState};
use crate::{Error, Result};
use std::fmt::Write as _;

/// Trial classification. A trial gets exactly one outcome: contact
/// dominates, then a failed solve, then completion; a full horizon with
/// none of those is unfinished. Collision and infeasibility are stamped
/// with their first occurrence; after a failed solve the trajectory
/// continues under the full-braking fallback, so a later crash caused by
/// that braking upgrades the trial to a collision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    Collision,
    Infeasible,
    Unfinished,
    Success,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 4] = [
        OutcomeKind::Collision,
        OutcomeKind::Infeasible,
        OutcomeKind::Unfinished,
        OutcomeKind::Success,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OutcomeKind::Collision => "collision",
            OutcomeKind::Infeasible => "infeasible",
            OutcomeKind::Unfinished => "unfinished",
            OutcomeKind::Success => "success",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub t: f64,
}

/// Per-barrier log columns for one step.
#[derive(Debug, Clone, Copy)]
pub struct BarrierLog {
    pub h: f64,
    pub p1: f64,
    pub p2: f64,
    /// Residual of the constraint branch the solver selected; NaN when the
    /// step had no solution.
    pub residual: f64,
}

/// Bitwise comparison: infeasible steps log NaN columns, and two identical
/// runs must still compare equal there.
impl PartialEq for BarrierLog {
    fn eq(&self, other: &Self) -> bool {
        self.h.to_bits() == other.h.to_bits()
            && self.p1.to_bits() == other.p1.to_bits()
            && self.p2.to_bits() == other.p2.to_bits()
            && self.residual.to_bits() == other.residual.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub t: f64,
    pub states: Vec<VehicleState>,
    pub a: f64,
    pub beta: f64,
    pub feasible: bool,
    pub branch_id: u64,
    pub barriers: Vec<BarrierLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub spec: ScenarioSpec,
    pub trial: u64,
    pub steps: Vec<StepRow>,
    pub outcome: Outcome,
}

/// Runs one closed-loop trial: sample the world, then loop
/// nominal -> safety filter -> noisy Euler step until classification.
pub fn run_trial(spec: &ScenarioSpec, trial: u64) -> Result<TrialRecord> {
    spec.validate()?;
    let world = generate_scenario(spec, trial)?;
    let ctrl = spec.controller_config();
    let params = &spec.vehicle;
    let noise_model = spec.vehicle_noise();
    let n_vehicles = world.vehicles.len();
    let n_barriers = spec.kind.n_barriers();
    let mut rngs: Vec<_> = (0..n_vehicles)
        .map(|v| noise_rng(spec.seed, trial, v as u64))
        .collect();

    let mut vehicles = world.vehicles;
    let mut steps = Vec::new();
    let mut first_collision: Option<f64> = None;
    let mut first_infeasible: Option<f64> = None;
    let mut success_at: Option<f64> = None;
    let n_steps = (spec.t_max / spec.dt).round() as usize;

    for k in 0..n_steps {
        let t = k as f64 * spec.dt;
        if check_collision(spec, &vehicles) {
            first_collision = Some(t);
            break;
        }
        if check_success(spec, &vehicles) {
            success_at = Some(t);
            break;
        }

        let u_des = world.nominal.control(t, &vehicles[0], params);
        let barriers = build_barriers(spec, &vehicles);
        let decision = solve_safe_control(u_des, params, &barriers, &ctrl);
        if !decision.feasible && first_infeasible.is_none() {
            first_infeasible = Some(t);
        }

        let logs: Vec<BarrierLog> = (0..n_barriers)
            .map(|j| BarrierLog {
                h: barriers[j].barrier.h(),
                p1: decision.diagnostics.get(j).map_or(f64::NAN, |d| d.gains.p1),
                p2: decision.diagnostics.get(j).map_or(f64::NAN, |d| d.gains.p2),
                residual: decision
                    .diagnostics
                    .get(j)
                    .map_or(f64::NAN, |d| d.residual),
            })
            .collect();
        steps.push(StepRow {
            t,
            states: vehicles.clone(),
            a: decision.u.a,
            beta: decision.u.beta,
            feasible: decision.feasible,
            branch_id: decision.branch_id,
            barriers: logs,
        });

        for (i, v) in vehicles.iter_mut().enumerate() {
            let eps = sample_eps(&noise_model, &mut rngs[i]);
            let u = if i == 0 {
                decision.u
            } else {
                crate::vehicle::VehicleInput::ZERO
            };
            *v = step(v, &u, eps, spec.dt, params)
                .map_err(|e| Error::Solver(format!("integration failed: {e}")))?
                .state;
        }
    }

    let outcome = if let Some(t) = first_collision {
        Outcome { kind: OutcomeKind::Collision, t }
    } else if let Some(t) = first_infeasible {
        Outcome { kind: OutcomeKind::Infeasible, t }
    } else if let Some(t) = success_at {
        Outcome { kind: OutcomeKind::Success, t }
    } else {
        Outcome { kind: OutcomeKind::Unfinished, t: spec.t_max }
    };
    Ok(TrialRecord { spec: spec.clone(), trial, steps, outcome })
}

/// FNV-1a 64-bit hash; identifies the resolved spec in record headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn fmt_f(x: f64) -> String {
    format!("{x:.8e}")
}

impl TrialRecord {
    fn columns(&self) -> String {
        let mut cols = String::from("t,a,beta,feasible,branch_id");
        for i in 0..self.spec.kind.n_vehicles() {
            write!(cols, ",x{i},y{i},psi{i},v{i}").unwrap();
        }
        for j in 0..self.spec.kind.n_barriers() {
            write!(cols, ",h{j},p1_{j},p2_{j},res{j}").unwrap();
        }
        cols
    }

    /// Line-delimited text form: a commented header carrying the full
    /// resolved spec (so the record is self-replaying), then one CSV row
    /// per step, then the outcome trailer.
    pub fn serialize(&self) -> String {
        let spec_toml =
            toml::to_string(&self.spec).expect("scenario spec serializes");
        let mut out = String::new();
        out.push_str("# format: pecbf-trial-v1\n");
        writeln!(out, "# trial: {}", self.trial).unwrap();
        writeln!(out, "# spec_hash: {:016x}", fnv1a64(spec_toml.as_bytes())).unwrap();
        for line in spec_toml.lines() {
            writeln!(out, "# spec: {line}").unwrap();
        }
        writeln!(out, "# columns: {}", self.columns()).unwrap();
        for row in &self.steps {
            let mut line = format!(
                "{},{},{},{},{}",
                fmt_f(row.t),
                fmt_f(row.a),
                fmt_f(row.beta),
                row.feasible as u8,
                row.branch_id
            );
            for s in &row.states {
                write!(
                    line,
                    ",{},{},{},{}",
                    fmt_f(s.x),
                    fmt_f(s.y),
                    fmt_f(s.psi),
                    fmt_f(s.v)
                )
                .unwrap();
            }
            for b in &row.barriers {
                write!(
                    line,
                    ",{},{},{},{}",
                    fmt_f(b.h),
                    fmt_f(b.p1),
                    fmt_f(b.p2),
                    fmt_f(b.residual)
                )
                .unwrap();
            }
            out.push_str(&line);
            out.push('\n');
        }
        writeln!(
            out,
            "# outcome: {},{}",
            self.outcome.kind.label(),
            fmt_f(self.outcome.t)
        )
        .unwrap();
        out
    }

    /// Recovers (spec, trial index) from a serialized record header.
    pub fn parse_header(text: &str) -> Result<(ScenarioSpec, u64)> {
        let mut trial: Option<u64> = None;
        let mut spec_lines = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# trial: ") {
                trial = Some(rest.trim().parse().map_err(|e| {
                    Error::Config(format!("bad trial index in record: {e}"))
                })?);
            } else if let Some(rest) = line.strip_prefix("# spec: ") {
                spec_lines.push(rest);
            } else if !line.starts_with('#') {
                break;
            }
        }
        let trial =
            trial.ok_or_else(|| Error::Config("record has no trial line".into()))?;
        let spec: ScenarioSpec = toml::from_str(&spec_lines.join("\n"))
            .map_err(|e| Error::Config(format!("bad spec in record: {e}")))?;
        Ok((spec, trial))
    }
}

/// Re-simulates a serialized record and byte-compares the result.
/// Returns Ok(true) when the replay reproduces the record exactly.
pub fn replay_matches(text: &str) -> Result<bool> {
    let (spec, trial) = TrialRecord::parse_header(text)?;
    let rerun = run_trial(&spec, trial)?;
    Ok(rerun.serialize() == text)
}
