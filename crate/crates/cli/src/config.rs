//! Run configuration: one optional section per subcommand, unknown keys rejected.

use std::path::{Path, PathBuf};

use nlirf::irf::RelaxationFn;
use nlirf::study::Variant;
use nlirf::{builtin_dgp, scalar_ar, ModelSpec, SievePlan, StudyConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irf: Option<IrfConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax_check: Option<RelaxCheckConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Model chosen by built-in design number, inline specification or scalar AR coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar: Option<Vec<f64>>,
    /// Innovation bound for `ar` models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl ModelSource {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn is_set(&self) -> bool {
        self.dgp.is_some() || self.spec.is_some() || self.ar.is_some()
    }

    pub fn resolve(&self) -> Result<ModelSpec, CliError> {
        let given = [self.dgp.is_some(), self.spec.is_some(), self.ar.is_some()].iter().filter(|b| **b).count();
        if given != 1 {
            return Err(CliError::Config("exactly one of `dgp`, `spec` or `ar` must be given".into()));
        }
        let spec = if let Some(id) = self.dgp {
            match self.variant.unwrap_or_default() {
                Variant::Standard => builtin_dgp(id)?,
                Variant::PhiShift if id == 7 => nlirf::model::dgp7_phi_shift(),
                Variant::PhiShift => return Err(CliError::Config("variant phi_shift requires dgp = 7".into())),
            }
        } else if let Some(spec) = &self.spec {
            spec.clone()
        } else {
            let coeffs = self.ar.as_deref().unwrap_or_default();
            if coeffs.is_empty() {
                return Err(CliError::Config("`ar` needs at least one coefficient".into()));
            }
            scalar_ar(coeffs, self.bound.unwrap_or(3.0))
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default, skip_serializing_if = "ModelSource::is_empty")]
    pub model: ModelSource,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

/// Data from a CSV file or simulated from a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default = "default_x_column")]
    pub x_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "ModelSource::is_empty")]
    pub model: ModelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p: usize,
    pub plan: SievePlan,
    #[serde(default)]
    pub infeasible: bool,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrfConfig {
    pub deltas: Vec<f64>,
    pub relaxation: RelaxationFn,
    pub horizon: usize,
    /// Output directory of an `estimate` run; its bundle and data are loaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<PathBuf>,
    /// Parametric transforms fitted to the same data, e.g. `["max0"]`.
    #[serde(default)]
    pub parametric: Vec<String>,
    /// Linear VAR benchmark on the same data.
    #[serde(default)]
    pub linear: bool,
    /// Population target from a known model.
    #[serde(default, skip_serializing_if = "ModelSource::is_empty")]
    pub model: ModelSource,
    #[serde(default = "default_pop")]
    pub pop_replications: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default, skip_serializing_if = "ModelSource::is_empty")]
    pub model: ModelSource,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_h_max")]
    pub h_max: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_h_max")]
    pub h_cap: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxCheckConfig {
    pub relaxation: RelaxationFn,
    pub deltas: Vec<f64>,
    /// Explicit support `[a, b]`; otherwise taken from the model's structural innovation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "ModelSource::is_empty")]
    pub model: ModelSource,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_burn_in() -> usize {
    nlirf::model::DEFAULT_BURN_IN
}
fn default_x_column() -> String {
    "X".into()
}
fn default_p() -> usize {
    1
}
fn default_grid() -> usize {
    201
}
fn default_pop() -> usize {
    nlirf::study::DESK_POP
}
fn default_r() -> f64 {
    2.0
}
fn default_tau() -> f64 {
    1.0
}
fn default_h_max() -> usize {
    20
}
fn default_reps() -> usize {
    1000
}
fn default_samples() -> usize {
    200
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[simulate]\nmodel = { dgp = 2 }\nn = 10\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("[nothing]\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            r#"
[simulate]
model = { dgp = 2 }
n = 240
seed = 1

[estimate]
model = { dgp = 2 }
n = 500
plan = { degree = 3, knots = "quantile:1", domain = "data" }

[relax_check]
relaxation = { kind = "symmetric_bump", c = 3.0, alpha = 4.0 }
deltas = [1.0, -1.0]
model = { dgp = 1 }
"#,
        )
        .unwrap();
        assert_eq!(cfg.simulate.unwrap().burn_in, 500);
        assert_eq!(cfg.estimate.unwrap().p, 1);
        let rc = cfg.relax_check.unwrap();
        assert_eq!(rc.model.resolve().unwrap().innovation.bound, 3.0);
    }

    #[test]
    fn echo_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.mc = Some(StudyConfig::desk(2).unwrap());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn model_source_requires_one() {
        assert!(ModelSource::default().resolve().is_err());
        let both = ModelSource { dgp: Some(1), ar: Some(vec![0.5]), ..Default::default() };
        assert!(both.resolve().is_err());
        let ar = ModelSource { ar: Some(vec![0.5]), ..Default::default() };
        assert_eq!(ar.resolve().unwrap().d_y, 0);
    }
}
