//! Monte Carlo harness: population IRF once per shock size, then per
//! replication simulate, fit each estimator and accumulate IRF errors.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SievePlan;
use crate::error::{Error, Result};
use crate::estimator::fit_two_step;
use crate::irf::{check_compatibility, estimated_irf, population_irf_with_burn_in, IrfResult, RelaxationFn, ShockSpec};
use crate::model::{builtin_dgp, dgp7_phi_shift, simulate, ModelSpec, NonlinKind, DEFAULT_BURN_IN};
use crate::rng::{ordered_sum, replication_seed, splitmix64};

/// Stream tag separating population-IRF seeds from replication seeds.
const POPULATION_TAG: u64 = 0x706f_7075_6c61_7469;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Least squares on the data-generating functional form.
    ParametricTrue,
    /// Least squares on `max(0, x)` transforms.
    ParametricMax0,
    Sieve,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::ParametricTrue => "parametric_true",
            EstimatorKind::ParametricMax0 => "parametric_max0",
            EstimatorKind::Sieve => "sieve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    /// Design 7 with `phi(x + 1)` in place of `phi(x)`.
    PhiShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Population IRF uses the same relaxation as the study.
    #[default]
    RelaxedTarget,
    /// Population IRF uses the unrelaxed shock (`rho = 1`).
    NonrelaxedTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub dgp: u8,
    #[serde(default)]
    pub variant: Variant,
    pub n: usize,
    pub mc_replications: usize,
    pub pop_replications: usize,
    pub deltas: Vec<f64>,
    pub relaxation: RelaxationFn,
    pub horizon: usize,
    pub estimators: Vec<EstimatorKind>,
    pub sieve: SievePlan,
    pub master_seed: u64,
    #[serde(default)]
    pub target: TargetMode,
    /// Relaxation used by the estimators when it differs from `relaxation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator_relaxation: Option<RelaxationFn>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Replaces the built-in design `dgp` (and `variant`) when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

/// Desk-scale Monte Carlo replications.
pub const DESK_MC: usize = 200;
/// Desk-scale population replications.
pub const DESK_POP: usize = 20_000;
pub const PAPER_MC: usize = 10_000;
pub const PAPER_POP: usize = 100_000;

impl StudyConfig {
    /// Published design for `dgp` at desk scale.
    pub fn desk(dgp: u8) -> Result<Self> {
        builtin_dgp(dgp)?;
        let seven = dgp == 7;
        Ok(Self {
            dgp,
            variant: Variant::Standard,
            n: if seven { 2400 } else { 240 },
            mc_replications: DESK_MC,
            pop_replications: DESK_POP,
            deltas: vec![if seven { 2.0 } else { 1.0 }],
            relaxation: if seven { RelaxationFn::bump(5.0, 3.9) } else { RelaxationFn::bump(3.0, 4.0) },
            horizon: 12,
            estimators: if seven {
                vec![EstimatorKind::ParametricMax0, EstimatorKind::Sieve]
            } else {
                vec![EstimatorKind::ParametricTrue, EstimatorKind::Sieve]
            },
            sieve: SievePlan::cubic(if seven { vec![-3.0, -1.0, 1.0, 3.0] } else { vec![0.0] }),
            master_seed: 1,
            target: TargetMode::RelaxedTarget,
            estimator_relaxation: None,
            burn_in: DEFAULT_BURN_IN,
            model: None,
        })
    }

    pub fn paper_scale(mut self) -> Self {
        self.mc_replications = PAPER_MC;
        self.pop_replications = PAPER_POP;
        self
    }

    pub fn model(&self) -> Result<ModelSpec> {
        if let Some(spec) = &self.model {
            spec.validate()?;
            return Ok(spec.clone());
        }
        match self.variant {
            Variant::Standard => builtin_dgp(self.dgp),
            Variant::PhiShift if self.dgp == 7 => Ok(dgp7_phi_shift()),
            Variant::PhiShift => Err(Error::InvalidConfig("the phi_shift variant applies to DGP 7 only".into())),
        }
    }

    pub fn estimator_rho(&self) -> RelaxationFn {
        self.estimator_relaxation.unwrap_or(self.relaxation)
    }

    pub fn target_rho(&self) -> RelaxationFn {
        match self.target {
            TargetMode::RelaxedTarget => self.relaxation,
            TargetMode::NonrelaxedTarget => RelaxationFn::ConstantOne,
        }
    }

    /// Regression plan of an estimator. The true parametric form uses the
    /// nonlinear kinds of the model's impacts; linear impacts are already spanned.
    pub fn plan(&self, est: EstimatorKind, spec: &ModelSpec) -> SievePlan {
        match est {
            EstimatorKind::Sieve => self.sieve.clone(),
            EstimatorKind::ParametricMax0 => SievePlan::parametric(vec![NonlinKind::Max0]),
            EstimatorKind::ParametricTrue => {
                let mut kinds: Vec<NonlinKind> = Vec::new();
                for imp in &spec.impacts {
                    let k = &imp.func.kind;
                    if !matches!(k, NonlinKind::Zero | NonlinKind::Linear) && !kinds.contains(k) {
                        kinds.push(k.clone());
                    }
                }
                if kinds.is_empty() {
                    SievePlan::linear()
                } else {
                    SievePlan::parametric(kinds)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.model()?;
        if self.mc_replications == 0 {
            return Err(Error::InvalidConfig("mc_replications must be positive".into()));
        }
        if self.pop_replications == 0 {
            return Err(Error::InvalidConfig("pop_replications must be positive".into()));
        }
        if self.estimators.is_empty() || self.deltas.is_empty() {
            return Err(Error::InvalidConfig("need at least one estimator and one delta".into()));
        }
        let support = spec.innovation.structural_support();
        for rho in [self.relaxation, self.estimator_rho()] {
            if rho == RelaxationFn::ConstantOne {
                continue;
            }
            for &delta in &self.deltas {
                let c = check_compatibility(&rho, delta, support);
                if !c.compatible {
                    return Err(Error::IncompatibleShock { delta, margin: c.worst_margin });
                }
            }
        }
        Ok(())
    }
}

/// One output cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub estimator: EstimatorKind,
    pub delta: f64,
    pub var: String,
    pub h: usize,
    pub mse: f64,
    pub bias: f64,
    /// Monte Carlo standard error of `bias`.
    pub se: f64,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub population: Vec<IrfResult>,
    pub rows: Vec<StudyRow>,
    pub failures: usize,
}

impl StudyResult {
    pub fn get(&self, est: EstimatorKind, delta: f64, var: &str, h: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.estimator == est && r.delta == delta && r.var == var && r.h == h)
    }

    /// Header `estimator,delta,var,h,mse,bias,se,n_ok`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["estimator", "delta", "var", "h", "mse", "bias", "se", "n_ok"])?;
        for r in &self.rows {
            wr.write_record([
                r.estimator.name().to_string(),
                r.delta.to_string(),
                r.var.clone(),
                r.h.to_string(),
                r.mse.to_string(),
                r.bias.to_string(),
                r.se.to_string(),
                r.n_ok.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn population_seed(master: u64, k: usize) -> u64 {
    replication_seed(splitmix64(master ^ POPULATION_TAG), k as u64)
}

/// Errors `estimate - population` of one replication, flattened per (estimator, delta).
fn replication(cfg: &StudyConfig, spec: &ModelSpec, pop: &[IrfResult], r: usize) -> Result<Vec<f64>> {
    let path = simulate(spec, cfg.n, replication_seed(cfg.master_seed, r as u64), cfg.burn_in)?;
    let rho = cfg.estimator_rho();
    let mut out = Vec::new();
    for &est in &cfg.estimators {
        let fit = fit_two_step(&path, &cfg.plan(est, spec), spec.p)?;
        for (k, &delta) in cfg.deltas.iter().enumerate() {
            let irf = estimated_irf(&fit, &path, &ShockSpec::new(delta, rho, cfg.horizon))?;
            let err = &irf.values - &pop[k].values;
            if err.iter().any(|v| !v.is_finite()) {
                return Err(Error::PathDiverged { step: 0 });
            }
            out.extend(row_major(&err));
        }
    }
    Ok(out)
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |h| (0..m.ncols()).map(move |k| m[(h, k)]))
}

/// Run the study; replication `r` is seeded by `hash(master_seed, r)`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let spec = cfg.model()?;
    let target = cfg.target_rho();
    let population = cfg
        .deltas
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            population_irf_with_burn_in(
                &spec,
                &ShockSpec::new(delta, target, cfg.horizon),
                cfg.pop_replications,
                population_seed(cfg.master_seed, k),
                cfg.burn_in,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let outcomes: Vec<Result<Vec<f64>>> =
        (0..cfg.mc_replications).into_par_iter().map(|r| replication(cfg, &spec, &population, r)).collect();
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    if failures * 100 > cfg.mc_replications {
        return Err(Error::TooManyFailures { failed: failures, total: cfg.mc_replications });
    }
    let ok: Vec<Vec<f64>> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    if ok.is_empty() {
        return Err(Error::TooManyFailures { failed: failures, total: cfg.mc_replications });
    }
    let width = ok[0].len();
    let squares: Vec<Vec<f64>> = ok.iter().map(|v| v.iter().map(|e| e * e).collect()).collect();
    let sum = ordered_sum(&ok, width);
    let sum_sq = ordered_sum(&squares, width);
    let n_ok = ok.len();
    let n = n_ok as f64;

    let d = spec.d();
    let rows_h = cfg.horizon + 1;
    let names = population[0].var_names();
    let mut rows = Vec::with_capacity(width);
    let mut offset = 0;
    for &est in &cfg.estimators {
        for &delta in &cfg.deltas {
            for (k, var) in names.iter().enumerate() {
                for h in 0..rows_h {
                    let idx = offset + h * d + k;
                    let bias = sum[idx] / n;
                    let mse = sum_sq[idx] / n;
                    let var_hat = (mse - bias * bias).max(0.0) * n / (n - 1.0).max(1.0);
                    rows.push(StudyRow {
                        estimator: est,
                        delta,
                        var: var.clone(),
                        h,
                        mse,
                        bias,
                        se: (var_hat / n).sqrt(),
                        n_ok,
                    });
                }
            }
            offset += rows_h * d;
        }
    }
    Ok(StudyResult { config: cfg.clone(), population, rows, failures })
}

/// Design 7 with `phi(x + 1)`; the correct parametric form follows the variant.
pub fn run_study_variant_phi_shift(cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.dgp != 7 {
        return Err(Error::InvalidConfig("the phi_shift variant applies to DGP 7 only".into()));
    }
    let mut c = cfg.clone();
    c.variant = Variant::PhiShift;
    run_study(&c)
}

/// Run with the population target relaxed or not; estimators keep their own relaxation.
pub fn target_mode(cfg: &StudyConfig, mode: TargetMode) -> Result<StudyResult> {
    let mut c = cfg.clone();
    c.target = mode;
    run_study(&c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dgp: u8) -> StudyConfig {
        let mut c = StudyConfig::desk(dgp).unwrap();
        c.mc_replications = 12;
        c.pop_replications = 400;
        c.horizon = 4;
        c
    }

    #[test]
    fn zero_replications_rejected() {
        let mut c = small(2);
        c.mc_replications = 0;
        assert!(matches!(run_study(&c), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn incompatible_delta_rejected() {
        let mut c = small(2);
        c.deltas = vec![5.0];
        assert!(matches!(run_study(&c), Err(Error::IncompatibleShock { .. })));
    }

    #[test]
    fn counts_and_variance_identity() {
        let c = small(2);
        let res = run_study(&c).unwrap();
        assert_eq!(res.rows.len(), 2 * 1 * 2 * 5);
        for r in &res.rows {
            assert_eq!(r.n_ok + res.failures, c.mc_replications);
            assert!(r.mse >= r.bias * r.bias - 3.0 * r.se);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = small(4);
        let run = |t| {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| run_study(&c).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn matched_target_reduces_to_run_study() {
        let c = small(1);
        assert_eq!(target_mode(&c, TargetMode::RelaxedTarget).unwrap(), run_study(&c).unwrap());
    }

    #[test]
    fn variant_tag_echoed() {
        let mut c = small(7);
        c.n = 600;
        let res = run_study_variant_phi_shift(&c).unwrap();
        assert_eq!(res.config.variant, Variant::PhiShift);
        assert!(run_study_variant_phi_shift(&small(2)).is_err());
    }

    #[test]
    fn true_plans_follow_model() {
        let c = small(7);
        let kinds = |spec: &ModelSpec| c.plan(EstimatorKind::ParametricTrue, spec).transforms.unwrap();
        assert_eq!(kinds(&builtin_dgp(7).unwrap()), vec![NonlinKind::SmoothPhi]);
        assert_eq!(kinds(&dgp7_phi_shift()), vec![NonlinKind::SmoothPhiShift]);
        for id in 1..=6 {
            assert_eq!(kinds(&builtin_dgp(id).unwrap()), vec![NonlinKind::Max0]);
        }
        let linear = builtin_dgp(2).unwrap().linear_part();
        assert_eq!(c.plan(EstimatorKind::ParametricTrue, &linear), SievePlan::linear());
    }

    #[test]
    fn csv_header() {
        let res = run_study(&small(1)).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("estimator,delta,var,h,mse,bias,se,n_ok\nparametric_true,1,X,0,"));
    }

    #[test]
    fn config_toml_round_trip() {
        let c = StudyConfig::desk(7).unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<StudyConfig>(&text).unwrap(), c);
    }
}
