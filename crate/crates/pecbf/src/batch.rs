//! Monte Carlo batches: many seeded trials per controller variant under
//! common random numbers, outcome aggregation with Wilson intervals, and
//! the chance-constraint calibration suite.

use crate::norm::inv_norm_cdf;
use crate::rng::{derive_seed, mix_bool, mix_f64};
use crate::scenario::{ScenarioSpec, Variant};
use crate::sim::{run_trial, OutcomeKind, TrialRecord};
use crate::stochastic::{mc_satisfaction, GaussianNoise};
use crate::Result;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Outcome tallies for one variant over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantStats {
    pub variant: Variant,
    pub n: u64,
    /// Counts indexed like [`OutcomeKind::ALL`].
    pub counts: [u64; 4],
}

impl VariantStats {
    pub fn count(&self, kind: OutcomeKind) -> u64 {
        self.counts[OutcomeKind::ALL.iter().position(|k| *k == kind).unwrap()]
    }

    pub fn rate(&self, kind: OutcomeKind) -> f64 {
        self.count(kind) as f64 / self.n as f64
    }

    pub fn wilson(&self, kind: OutcomeKind) -> (f64, f64) {
        wilson_interval(self.count(kind), self.n, 1.96)
    }
}

/// Wilson score interval for a binomial proportion at normal quantile z.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Runs `trials` seeded trials for each variant. Every variant sees the
/// same initial worlds and the same per-step noise streams, which are
/// derived from (seed, trial, vehicle) only.
pub fn run_batch(
    base: &ScenarioSpec,
    trials: u64,
    variants: &[Variant],
) -> Result<Vec<(VariantStats, Vec<TrialRecord>)>> {
    base.validate()?;
    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut spec = base.clone();
        spec.variant = variant;
        let records: Vec<TrialRecord> = (0..trials)
            .into_par_iter()
            .map(|trial| run_trial(&spec, trial))
            .collect::<Result<_>>()?;
        let mut counts = [0u64; 4];
        for rec in &records {
            let idx = OutcomeKind::ALL
                .iter()
                .position(|k| *k == rec.outcome.kind)
                .unwrap();
            counts[idx] += 1;
        }
        out.push((
            VariantStats {
                variant,
                n: trials,
                counts,
            },
            records,
        ));
    }
    Ok(out)
}

/// Comma-separated batch summary: one line per variant with counts, rates,
/// and 95% Wilson intervals per outcome class.
pub fn summary_csv(stats: &[VariantStats]) -> String {
    let mut out = String::from("variant,n");
    for k in OutcomeKind::ALL {
        let l = k.label();
        write!(out, ",{l},{l}_rate,{l}_lo,{l}_hi").unwrap();
    }
    out.push('\n');
    for s in stats {
        write!(out, "{},{}", s.variant.label(), s.n).unwrap();
        for k in OutcomeKind::ALL {
            let (lo, hi) = s.wilson(k);
            write!(
                out,
                ",{},{:.8e},{:.8e},{:.8e}",
                s.count(k),
                s.rate(k),
                lo,
                hi
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

/// One calibration family at one confidence level: constraint instances
/// constructed exactly on the tightened boundary, each checked against a
/// Monte Carlo estimate of the raw (untightened) satisfaction probability.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport {
    pub name: &'static str,
    pub eta: f64,
    pub instances: usize,
    pub min_prob: f64,
    pub mean_prob: f64,
}

impl FamilyReport {
    /// Boundary instances must keep the raw probability within Monte Carlo
    /// error of the target level.
    pub fn passed(&self) -> bool {
        self.min_prob >= self.eta - 0.01
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub samples: usize,
    pub families: Vec<FamilyReport>,
}

impl CalibrationReport {
    pub fn passed(&self) -> bool {
        self.families.iter().all(FamilyReport::passed)
    }
}

/// A raw scalar chance-constraint instance plus the noise it faces.
struct RawInstance {
    predicate: Box<dyn Fn(f64) -> bool + Send + Sync>,
    noise: GaussianNoise,
}

/// Quadratic instance whose gated tail branch holds with equality: the
/// boundary root coincides with the tightened quantile.
fn quadratic_boundary(s: &mut u64, eta: f64, upper: bool) -> RawInstance {
    let mean = mix_f64(s, -1.0, 1.0);
    let sd = mix_f64(s, 0.05, 1.0);
    let q = inv_norm_cdf(eta);
    let (root, q1) = if upper {
        let b = mean - sd * q;
        (b, -4.0 * b + mix_f64(s, 0.1, 8.0))
    } else {
        let a = mean + sd * q;
        (a, -4.0 * a - mix_f64(s, 0.1, 8.0))
    };
    let q0 = -(2.0 * root * root + q1 * root);
    RawInstance {
        predicate: Box::new(move |z| 2.0 * z * z + q1 * z + q0 >= 0.0),
        noise: GaussianNoise::scalar(mean, sd),
    }
}

/// Affine instance c + a z >= 0 sitting exactly on its tightened boundary.
fn affine_boundary(s: &mut u64, eta: f64) -> RawInstance {
    let a = mix_f64(s, 0.3, 6.0) * if mix_bool(s) { 1.0 } else { -1.0 };
    let mean = mix_f64(s, -1.0, 1.0);
    let sd = mix_f64(s, 0.05, 1.0);
    let c = a.abs() * sd * inv_norm_cdf(eta) - a * mean;
    RawInstance {
        predicate: Box::new(move |z| c + a * z >= 0.0),
        noise: GaussianNoise::scalar(mean, sd),
    }
}

/// Runs the calibration suite: for each family and each experiment
/// confidence level, `instances` boundary instances are validated with
/// `samples` Monte Carlo draws apiece.
pub fn run_calibration(instances: usize, samples: usize, seed: u64) -> CalibrationReport {
    let mut families = Vec::new();
    for (fi, eta) in [(0u64, 0.99), (1u64, 0.9999)] {
        for (name, kind) in [
            ("lane_change_quadratic", 0u64),
            ("intersection_affine", 1u64),
            ("gain_conditions", 2u64),
        ] {
            let probs: Vec<f64> = (0..instances)
                .into_par_iter()
                .map(|i| {
                    let key = derive_seed(seed, &[fi, kind, i as u64]);
                    let mut s = key;
                    let inst = match kind {
                        0 => quadratic_boundary(&mut s, eta, i % 2 == 0),
                        1 => affine_boundary(&mut s, eta),
                        // The gain conditions mix the first-pole affine
                        // form and the second-pole quadratic form.
                        _ => {
                            if i % 2 == 0 {
                                affine_boundary(&mut s, eta)
                            } else {
                                quadratic_boundary(&mut s, eta, i % 4 == 1)
                            }
                        }
                    };
                    mc_satisfaction(
                        |z| (inst.predicate)(z),
                        &inst.noise,
                        samples,
                        derive_seed(key, &[0x9c]),
                    )
                })
                .collect();
            let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = probs.iter().sum::<f64>() / probs.len() as f64;
            families.push(FamilyReport {
                name,
                eta,
                instances,
                min_prob: min,
                mean_prob: mean,
            });
        }
    }
    CalibrationReport { samples, families }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioKind;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(0, 10, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775402).abs() < 2e-6, "hi {hi}");
        let (lo10, hi10) = wilson_interval(10, 10, 1.96);
        assert_eq!(hi10, 1.0);
        assert!((lo10 - (1.0 - hi)).abs() < 1e-12);
        // The interval always contains the point estimate.
        for (x, n) in [(1u64, 7u64), (3, 9), (120, 250), (249, 250)] {
            let (lo, hi) = wilson_interval(x, n, 1.96);
            let p = x as f64 / n as f64;
            assert!(lo < p && p < hi);
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }

    #[test]
    fn single_trial_batch_matches_that_trial() {
        let mut spec = ScenarioSpec::default_for(ScenarioKind::LaneChange);
        spec.sigma = 0.0;
        let batch = run_batch(&spec, 1, &[Variant::Proposed]).unwrap();
        let (stats, records) = &batch[0];
        assert_eq!(stats.n, 1);
        assert_eq!(stats.counts.iter().sum::<u64>(), 1);
        let direct = run_trial(&spec, 0).unwrap();
        assert_eq!(records[0], direct);
        assert_eq!(stats.count(direct.outcome.kind), 1);
    }

    #[test]
    fn batches_are_deterministic_and_share_worlds() {
        let mut spec = ScenarioSpec::default_for(ScenarioKind::LaneChange);
        spec.t_max = 6.0;
        let variants = [Variant::Proposed, Variant::DetNokopt];
        let a = run_batch(&spec, 8, &variants).unwrap();
        let b = run_batch(&spec, 8, &variants).unwrap();
        for ((sa, ra), (sb, rb)) in a.iter().zip(&b) {
            assert_eq!(sa, sb);
            assert_eq!(ra, rb);
            assert_eq!(sa.counts.iter().sum::<u64>(), 8);
        }
        // Common random numbers: both variants started from identical worlds.
        for trial in 0..8 {
            assert_eq!(
                a[0].1[trial].steps[0].states,
                a[1].1[trial].steps[0].states
            );
        }
    }

    #[test]
    fn summary_csv_shape() {
        let stats = [VariantStats {
            variant: Variant::Proposed,
            n: 10,
            counts: [1, 2, 3, 4],
        }];
        let csv = summary_csv(&stats);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("variant,n,collision,"));
        assert_eq!(header.split(',').count(), 2 + 4 * 4);
        let row = lines.next().unwrap();
        assert!(row.starts_with("proposed,10,1,1.00000000e-1,"));
        assert_eq!(row.split(',').count(), 2 + 4 * 4);
    }

    #[test]
    fn calibration_families_sit_on_the_boundary() {
        // Small version of the full suite: boundary instances must keep the
        // raw satisfaction probability at or above eta (within MC noise),
        // and not conservatively above it by more than the two-tail slack.
        let report = run_calibration(40, 20_000, 0xcaf0);
        assert_eq!(report.families.len(), 6);
        for fam in &report.families {
            assert!(
                fam.passed(),
                "{} at eta {}: min {}",
                fam.name,
                fam.eta,
                fam.min_prob
            );
            assert!(
                fam.mean_prob <= 1.0,
                "probabilities must be well-formed"
            );
            // Affine boundaries are exact; quadratic ones add only the
            // opposite-tail mass. Means should hug eta from above.
            assert!(
                fam.mean_prob >= fam.eta - 0.005 && fam.mean_prob <= fam.eta + 0.05,
                "{} at eta {}: mean {} strayed from the boundary",
                fam.name,
                fam.eta,
                fam.mean_prob
            );
        }
    }
}
