//! Layered configuration: family defaults, then an optional config file,
//! then command-line overrides, resolved into one validated scenario spec.

use crate::intersection::BoxMode;
use crate::scenario::{CrossRanges, LaneRanges, ScenarioKind, ScenarioSpec, Variant};
use crate::vehicle::VehicleParams;
use crate::{Error, Result};
use serde::Deserialize;
use std::path::Path;

/// Partial scenario specification. Unset fields fall through to the layer
/// below; unknown keys are rejected so typos fail loudly. The nested
/// `vehicle`, `lane`, and `cross` tables replace the default table whole,
/// so a table that is present must be complete.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecOverrides {
    pub kind: Option<ScenarioKind>,
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub sigma: Option<f64>,
    pub eta: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub desired_poles: Option<[f64; 2]>,
    pub pole_grid: Option<Vec<f64>>,
    pub r_margin: Option<f64>,
    pub r_extra: Option<f64>,
    pub box_mode: Option<BoxMode>,
    pub vehicle: Option<VehicleParams>,
    pub lane: Option<LaneRanges>,
    pub cross: Option<CrossRanges>,
}

impl SpecOverrides {
    /// Copies every set field onto `spec`.
    pub fn apply(&self, spec: &mut ScenarioSpec) {
        if let Some(v) = self.kind {
            spec.kind = v;
        }
        if let Some(v) = self.variant {
            spec.variant = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.dt {
            spec.dt = v;
        }
        if let Some(v) = self.t_max {
            spec.t_max = v;
        }
        if let Some(v) = self.sigma {
            spec.sigma = v;
        }
        if let Some(v) = self.eta {
            spec.eta = v;
        }
        if let Some(v) = self.c1 {
            spec.c1 = v;
        }
        if let Some(v) = self.c2 {
            spec.c2 = v;
        }
        if let Some(v) = self.desired_poles {
            spec.desired_poles = v;
        }
        if let Some(v) = &self.pole_grid {
            spec.pole_grid = Some(v.clone());
        }
        if let Some(v) = self.r_margin {
            spec.r_margin = v;
        }
        if let Some(v) = self.r_extra {
            spec.r_extra = v;
        }
        if let Some(v) = self.box_mode {
            spec.box_mode = v;
        }
        if let Some(v) = self.vehicle {
            spec.vehicle = v;
        }
        if let Some(v) = self.lane {
            spec.lane = v;
        }
        if let Some(v) = self.cross {
            spec.cross = v;
        }
    }
}

/// Parses override text (TOML key/value with nested sections).
pub fn parse_overrides(text: &str) -> Result<SpecOverrides> {
    toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
}

/// Loads an override file.
pub fn load_overrides(path: &Path) -> Result<SpecOverrides> {
    let text = std::fs::read_to_string(path)?;
    parse_overrides(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Resolves the effective spec. The scenario kind is taken from the
/// command line if given, else from the file; that kind picks the family
/// defaults, onto which the file and then the command line are applied.
pub fn resolve_spec(file: Option<&SpecOverrides>, cli: &SpecOverrides) -> Result<ScenarioSpec> {
    let kind = cli
        .kind
        .or(file.and_then(|f| f.kind))
        .ok_or_else(|| {
            Error::Config(
                "no scenario selected: pass --scenario or set kind in the config file".into(),
            )
        })?;
    let mut spec = ScenarioSpec::default_for(kind);
    if let Some(f) = file {
        f.apply(&mut spec);
    }
    cli.apply(&mut spec);
    spec.validate()?;
    Ok(spec)
}
