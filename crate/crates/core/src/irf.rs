//! Relaxed mean-shift shocks and nonlinear impulse responses by forward iteration.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::linalg::spectral_radius;
use crate::model::{draw_innovations, History, LagPolynomial, ModelSpec, SimPath, DEFAULT_BURN_IN};
use crate::rng::{ordered_sum, replication_seed};

const SINGULARITY_GUARD: f64 = 1e-12;
const COMPAT_GRID: usize = 10_000;
const COMPAT_TOL: f64 = 1e-12;

/// Shock relaxation function `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RelaxationFn {
    ConstantOne,
    /// `1{|x| <= c} exp(1 + (|x/c|^alpha - 1)^{-1})`
    SymmetricBump { c: f64, alpha: f64 },
    /// The symmetric bump rescaled from `[-1, 1]` onto `[a, b]`.
    IntervalBump { a: f64, b: f64, alpha: f64 },
}

impl RelaxationFn {
    pub fn bump(c: f64, alpha: f64) -> Self {
        RelaxationFn::SymmetricBump { c, alpha }
    }
}

fn bump(u: f64) -> f64 {
    if u >= 1.0 - SINGULARITY_GUARD {
        0.0
    } else {
        (1.0 + 1.0 / (u - 1.0)).exp()
    }
}

/// `rho(e)`, in `[0, 1]`.
pub fn relax_eval(rho: &RelaxationFn, e: f64) -> f64 {
    match *rho {
        RelaxationFn::ConstantOne => 1.0,
        RelaxationFn::SymmetricBump { c, alpha } => bump((e / c).abs().powf(alpha)),
        RelaxationFn::IntervalBump { a, b, alpha } => {
            let s = 2.0 * (e - b) / (b - a) + 1.0;
            bump(s.abs().powf(alpha))
        }
    }
}

/// Verdict of [`check_compatibility`]. `worst_margin` is the distance of the extreme
/// shocked innovation from the violated endpoint; negative means incompatible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compatibility {
    pub compatible: bool,
    pub worst_margin: f64,
    /// Innovation value attaining the worst margin.
    pub argmax: f64,
}

/// Does `e + rho(e) delta` stay inside `[a, b]` for every `e` in `[a, b]`?
///
/// Grid search over 10^4 points, then golden-section refinement around the best grid point.
pub fn check_compatibility(rho: &RelaxationFn, delta: f64, support: (f64, f64)) -> Compatibility {
    let (a, b) = support;
    // Maximize the signed overshoot g(e); positive values violate the support.
    let g = |e: f64| {
        let v = e + relax_eval(rho, e) * delta;
        if delta >= 0.0 {
            v - b
        } else {
            a - v
        }
    };
    let step = (b - a) / (COMPAT_GRID - 1) as f64;
    let point = |i: usize| if i == COMPAT_GRID - 1 { b } else { a + step * i as f64 };
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..COMPAT_GRID {
        let v = g(point(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut arg = point(best_i);
    let (mut lo, mut hi) = (point(best_i.saturating_sub(1)), point((best_i + 1).min(COMPAT_GRID - 1)));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let m1 = hi - ratio * (hi - lo);
        let m2 = lo + ratio * (hi - lo);
        if g(m1) > g(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    if g(mid) > best {
        best = g(mid);
        arg = mid;
    }
    Compatibility { compatible: best <= COMPAT_TOL, worst_margin: -best, argmax: arg }
}

/// Shock of size `delta` relaxed by `relaxation`, traced over horizons `0..=horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSpec {
    pub delta: f64,
    pub relaxation: RelaxationFn,
    pub horizon: usize,
}

impl ShockSpec {
    pub fn new(delta: f64, relaxation: RelaxationFn, horizon: usize) -> Self {
        Self { delta, relaxation, horizon }
    }

    /// Verify compatibility on `support`. `ConstantOne` passes with a warning string.
    pub fn verify(&self, support: (f64, f64)) -> Result<Option<String>> {
        if self.relaxation == RelaxationFn::ConstantOne {
            return Ok((self.delta != 0.0).then(|| {
                format!(
                    "non-relaxed shock {} on bounded support [{}, {}]: support violation possible",
                    self.delta, support.0, support.1
                )
            }));
        }
        let c = check_compatibility(&self.relaxation, self.delta, support);
        if c.compatible {
            Ok(None)
        } else {
            Err(Error::IncompatibleShock { delta: self.delta, margin: c.worst_margin })
        }
    }
}

/// Baseline and shocked forward paths, `(H+1) x d` each.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockedPaths {
    pub baseline: DMatrix<f64>,
    pub shocked: DMatrix<f64>,
    /// Clamped spline evaluations on the shocked path after impact.
    pub clamped: usize,
    /// The shocked impact innovation `eps_1 + delta rho(eps_1)`.
    pub impact_innovation: f64,
}

impl ShockedPaths {
    pub fn difference(&self) -> DMatrix<f64> {
        &self.shocked - &self.baseline
    }
}

fn run(spec: &ModelSpec, mut hist: History, eps: &DMatrix<f64>, impact: f64, out: &mut DMatrix<f64>) -> Result<usize> {
    let d = spec.d();
    let mut cur = vec![0.0; d];
    let mut xi = vec![0.0; spec.d_y];
    let mut clamped = 0;
    for h in 0..eps.nrows() {
        for k in 0..spec.d_y {
            xi[k] = eps[(h, k + 1)];
        }
        let e1 = if h == 0 { impact } else { eps[(h, 0)] };
        let c = spec.step(&hist, e1, &xi, &mut cur);
        if h > 0 {
            clamped += c;
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::PathDiverged { step: h });
        }
        for k in 0..d {
            out[(h, k)] = cur[k];
        }
        hist.push(&cur);
    }
    Ok(clamped)
}

/// Forward-iterate from `history` with innovations `eps_future` (row `h` is used at horizon `h`),
/// once as given and once with `eps_1` at impact replaced by `eps_1 + delta rho(eps_1)`.
pub fn shocked_path(spec: &ModelSpec, history: &History, eps_future: &DMatrix<f64>, shock: &ShockSpec) -> Result<ShockedPaths> {
    let rows = shock.horizon + 1;
    if eps_future.nrows() < rows || eps_future.ncols() != spec.d() {
        return Err(Error::DimensionMismatch(format!(
            "need {rows}x{} future innovations, got {}x{}",
            spec.d(),
            eps_future.nrows(),
            eps_future.ncols()
        )));
    }
    let eps = eps_future.rows(0, rows).clone_owned();
    let e1 = eps[(0, 0)];
    let impact_innovation = e1 + shock.delta * relax_eval(&shock.relaxation, e1);
    let mut baseline = DMatrix::zeros(rows, spec.d());
    let mut shocked = DMatrix::zeros(rows, spec.d());
    run(spec, history.clone(), &eps, e1, &mut baseline)?;
    let clamped = run(spec, history.clone(), &eps, impact_innovation, &mut shocked)?;
    Ok(ShockedPaths { baseline, shocked, clamped, impact_innovation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrfMethod {
    Population,
    Estimated,
    LinearClosedForm,
}

impl fmt::Display for IrfMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IrfMethod::Population => "population",
            IrfMethod::Estimated => "estimated",
            IrfMethod::LinearClosedForm => "linear_closed_form",
        })
    }
}

/// Impulse responses, row `h` and column `var` (`X`, `Y1`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct IrfResult {
    pub values: DMatrix<f64>,
    /// Monte Carlo standard errors of the population average.
    pub se: Option<DMatrix<f64>>,
    pub method: IrfMethod,
    pub shock: ShockSpec,
    /// Replications (population) or number of averaged origins (estimated).
    pub count: usize,
    pub seed: u64,
    pub clamped: usize,
    /// Paths whose shocked impact innovation left the innovation support.
    pub support_violations: usize,
}

impl IrfResult {
    pub fn horizon(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn var_names(&self) -> Vec<String> {
        let mut v = vec!["X".to_string()];
        v.extend((1..self.values.ncols()).map(|i| format!("Y{i}")));
        v
    }

    /// Rows `h,var,value,method,delta`; `label` overrides the method column.
    pub fn write_csv_rows<W: Write>(&self, wr: &mut csv::Writer<W>, label: Option<&str>) -> Result<()> {
        let method = label.map_or_else(|| self.method.to_string(), str::to_string);
        let names = self.var_names();
        for h in 0..self.values.nrows() {
            for (k, name) in names.iter().enumerate() {
                wr.write_record([
                    h.to_string(),
                    name.clone(),
                    self.values[(h, k)].to_string(),
                    method.clone(),
                    self.shock.delta.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_irf_csv(w, &[(None, self)])
    }
}

/// Several IRFs in one CSV with header `h,var,value,method,delta`.
pub fn write_irf_csv<W: Write>(w: W, results: &[(Option<&str>, &IrfResult)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["h", "var", "value", "method", "delta"])?;
    for (label, r) in results {
        r.write_csv_rows(&mut wr, *label)?;
    }
    wr.flush()?;
    Ok(())
}

fn finish(items: &[Vec<f64>], rows: usize, d: usize, with_se: bool) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let w = rows * d;
    let width = if with_se { 2 * w } else { w };
    let sums = ordered_sum(items, width);
    let n = items.len() as f64;
    let mean = DMatrix::from_fn(rows, d, |h, k| sums[h * d + k] / n);
    let se = with_se.then(|| {
        DMatrix::from_fn(rows, d, |h, k| {
            let m = mean[(h, k)];
            let var = (sums[w + h * d + k] / n - m * m).max(0.0) * n / (n - 1.0).max(1.0);
            (var / n).sqrt()
        })
    });
    (mean, se)
}

/// Unconditional IRF: average over `replications` fresh stationary histories
/// (burn-in of 500 steps from zero) and innovation futures.
pub fn population_irf(spec: &ModelSpec, shock: &ShockSpec, replications: usize, seed: u64) -> Result<IrfResult> {
    population_irf_with_burn_in(spec, shock, replications, seed, DEFAULT_BURN_IN)
}

pub fn population_irf_with_burn_in(
    spec: &ModelSpec,
    shock: &ShockSpec,
    replications: usize,
    seed: u64,
    burn_in: usize,
) -> Result<IrfResult> {
    spec.validate()?;
    if replications == 0 {
        return Err(Error::InvalidConfig("population IRF needs at least one replication".into()));
    }
    let rows = shock.horizon + 1;
    let d = spec.d();
    let (lo, hi) = spec.innovation.structural_support();
    let outcomes: Vec<(Vec<f64>, usize, bool)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let eps = draw_innovations(spec, burn_in + rows, replication_seed(seed, r as u64));
            let (hist, _) = crate::model::iterate_history(spec, &eps.rows(0, burn_in).clone_owned())?;
            let future = eps.rows(burn_in, rows).clone_owned();
            let paths = shocked_path(spec, &hist, &future, shock)?;
            let diff = paths.difference();
            let mut item = Vec::with_capacity(2 * rows * d);
            item.extend((0..rows).flat_map(|h| (0..d).map(move |k| (h, k))).map(|(h, k)| diff[(h, k)]));
            let sq: Vec<f64> = item.iter().map(|v| v * v).collect();
            item.extend(sq);
            let violation = paths.impact_innovation < lo - COMPAT_TOL || paths.impact_innovation > hi + COMPAT_TOL;
            Ok((item, paths.clamped, violation))
        })
        .collect::<Result<_>>()?;
    let clamped = outcomes.iter().map(|o| o.1).sum();
    let support_violations = outcomes.iter().filter(|o| o.2).count();
    let items: Vec<Vec<f64>> = outcomes.into_iter().map(|o| o.0).collect();
    let (values, se) = finish(&items, rows, d, true);
    Ok(IrfResult {
        values,
        se,
        method: IrfMethod::Population,
        shock: *shock,
        count: replications,
        seed,
        clamped,
        support_violations,
    })
}

/// Plug-in IRF: average over origins `t` (with a full `H`-step future inside the sample)
/// of forward-iterated differences driven by the fitted residuals.
pub fn estimated_irf(fit: &FittedModel, data: &SimPath, shock: &ShockSpec) -> Result<IrfResult> {
    let resid = fit.innovation_residuals();
    estimated_irf_from_residuals(&fit.spec, data, &resid, shock)
}

/// As [`estimated_irf`] for any model; `residuals` row `r` holds `(eps_1, xi_2)` at time `p + r`.
pub fn estimated_irf_from_residuals(
    spec: &ModelSpec,
    data: &SimPath,
    residuals: &DMatrix<f64>,
    shock: &ShockSpec,
) -> Result<IrfResult> {
    let p = spec.p;
    let n = data.len();
    let h = shock.horizon;
    if residuals.nrows() + p != n || residuals.ncols() != spec.d() || data.d_y() != spec.d_y {
        return Err(Error::DimensionMismatch("residuals do not align with the data".into()));
    }
    if n <= p || h >= n - p {
        return Err(Error::HorizonExceedsSample { horizon: h, usable: n.saturating_sub(p) });
    }
    let rows = h + 1;
    let d = spec.d();
    let (lo, hi) = (
        residuals.column(0).iter().cloned().fold(f64::INFINITY, f64::min),
        residuals.column(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let origins: Vec<usize> = (p..n - h).collect();
    let outcomes: Vec<(Vec<f64>, usize, bool)> = origins
        .par_iter()
        .map(|&t| {
            let hist = History::from_path(&data.x, &data.y, t, p);
            let future = residuals.rows(t - p, rows).clone_owned();
            let paths = shocked_path(spec, &hist, &future, shock)?;
            let diff = paths.difference();
            let item: Vec<f64> = (0..rows).flat_map(|hh| (0..d).map(move |k| (hh, k))).map(|(hh, k)| diff[(hh, k)]).collect();
            let violation = paths.impact_innovation < lo - COMPAT_TOL || paths.impact_innovation > hi + COMPAT_TOL;
            Ok((item, paths.clamped, violation))
        })
        .collect::<Result<_>>()?;
    let clamped = outcomes.iter().map(|o| o.1).sum();
    let support_violations = outcomes.iter().filter(|o| o.2).count();
    let items: Vec<Vec<f64>> = outcomes.into_iter().map(|o| o.0).collect();
    let (values, _) = finish(&items, rows, d, false);
    Ok(IrfResult {
        values,
        se: None,
        method: IrfMethod::Estimated,
        shock: *shock,
        count: items.len(),
        seed: data.seed,
        clamped,
        support_violations,
    })
}

/// Closed-form linear responses to a unit `eps_1` impulse scaled by `delta`:
/// `Theta_h = J C^h J' (1, b0_21')'` with `C` the companion matrix of `a`.
pub fn linear_irf(a: &LagPolynomial, b0_21: &DVector<f64>, delta: f64, horizon: usize) -> Result<IrfResult> {
    let d = b0_21.len() + 1;
    let p = a.order();
    let mut impact = DVector::zeros(d);
    impact[0] = delta;
    for i in 0..d - 1 {
        impact[i + 1] = delta * b0_21[i];
    }
    let mut values = DMatrix::zeros(horizon + 1, d);
    values.row_mut(0).copy_from(&impact.transpose());
    if p > 0 {
        let c = a.companion(d);
        let r = spectral_radius(&c);
        if r >= 1.0 {
            return Err(Error::Explosive(r));
        }
        let mut state = DVector::zeros(d * p);
        state.rows_mut(0, d).copy_from(&impact);
        for h in 1..=horizon {
            state = &c * state;
            values.row_mut(h).copy_from(&state.rows(0, d).transpose());
        }
    }
    Ok(IrfResult {
        values,
        se: None,
        method: IrfMethod::LinearClosedForm,
        shock: ShockSpec::new(delta, RelaxationFn::ConstantOne, horizon),
        count: 0,
        seed: 0,
        clamped: 0,
        support_violations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_dgp, Impact, NonlinKind};
    use approx::assert_abs_diff_eq;

    fn bump34() -> RelaxationFn {
        RelaxationFn::bump(3.0, 4.0)
    }

    #[test]
    fn bump_values() {
        assert_eq!(relax_eval(&bump34(), 0.0), 1.0);
        assert_eq!(relax_eval(&bump34(), 3.0), 0.0);
        assert_eq!(relax_eval(&bump34(), -3.0), 0.0);
        assert_eq!(relax_eval(&bump34(), 7.0), 0.0);
        let expected = (1.0f64 + 1.0 / (1.0 / 16.0 - 1.0)).exp();
        assert_abs_diff_eq!(relax_eval(&bump34(), 1.5), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(relax_eval(&bump34(), 1.5), 0.9356, epsilon = 1e-4);
    }

    #[test]
    fn interval_bump_centre_and_edges() {
        let rho = RelaxationFn::IntervalBump { a: -1.0, b: 3.0, alpha: 2.0 };
        assert_eq!(relax_eval(&rho, 1.0), 1.0);
        assert_eq!(relax_eval(&rho, -1.0), 0.0);
        assert_eq!(relax_eval(&rho, 3.0), 0.0);
        assert_abs_diff_eq!(relax_eval(&rho, 2.0), relax_eval(&RelaxationFn::bump(2.0, 2.0), 1.0), epsilon = 1e-15);
    }

    #[test]
    fn bump_range() {
        for i in 0..=2000 {
            let e = -4.0 + 8.0 * i as f64 / 2000.0;
            let v = relax_eval(&bump34(), e);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn compatibility_verdicts() {
        for delta in [1.0, -1.0, 0.5, -0.5] {
            assert!(check_compatibility(&bump34(), delta, (-3.0, 3.0)).compatible, "delta {delta}");
        }
        for delta in [5.0, -5.0] {
            let c = check_compatibility(&bump34(), delta, (-3.0, 3.0));
            assert!(!c.compatible && c.worst_margin < 0.0);
        }
        let c = check_compatibility(&RelaxationFn::ConstantOne, 1.0, (-3.0, 3.0));
        assert!(!c.compatible);
        assert_abs_diff_eq!(c.worst_margin, -1.0, epsilon = 1e-12);
        assert_eq!(c.argmax, 3.0);
        let seven = RelaxationFn::bump(5.0, 3.9);
        for delta in [2.0, -2.0] {
            assert!(check_compatibility(&seven, delta, (-5.0, 5.0)).compatible);
        }
    }

    #[test]
    fn verify_paths() {
        let s = ShockSpec::new(5.0, bump34(), 3);
        assert!(matches!(s.verify((-3.0, 3.0)), Err(Error::IncompatibleShock { .. })));
        let s = ShockSpec::new(1.0, RelaxationFn::ConstantOne, 3);
        assert!(s.verify((-3.0, 3.0)).unwrap().is_some());
    }

    fn future(spec: &ModelSpec, h: usize, seed: u64) -> DMatrix<f64> {
        draw_innovations(spec, h + 1, seed)
    }

    #[test]
    fn zero_delta_is_bit_exact() {
        let spec = builtin_dgp(4).unwrap();
        let hist = crate::model::stationary_history(&spec, 5, 200).unwrap();
        let p = shocked_path(&spec, &hist, &future(&spec, 10, 6), &ShockSpec::new(0.0, bump34(), 10)).unwrap();
        assert_eq!(p.baseline, p.shocked);
    }

    #[test]
    fn baseline_independent_of_delta() {
        let spec = builtin_dgp(2).unwrap();
        let hist = crate::model::stationary_history(&spec, 1, 200).unwrap();
        let eps = future(&spec, 8, 2);
        let a = shocked_path(&spec, &hist, &eps, &ShockSpec::new(0.3, bump34(), 8)).unwrap();
        let b = shocked_path(&spec, &hist, &eps, &ShockSpec::new(-1.0, bump34(), 8)).unwrap();
        assert_eq!(a.baseline, b.baseline);
    }

    #[test]
    fn dgp2_linearized_unit_impact() {
        let spec = builtin_dgp(2).unwrap().without_nonlinear();
        let hist = crate::model::stationary_history(&spec, 3, 100).unwrap();
        let mut eps = future(&spec, 1, 4);
        eps[(0, 0)] = 0.0;
        let p = shocked_path(&spec, &hist, &eps, &ShockSpec::new(1.0, RelaxationFn::ConstantOne, 1)).unwrap();
        let diff = p.difference();
        assert_abs_diff_eq!(diff[(0, 1)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(diff[(1, 1)], 0.80, epsilon = 1e-12);
    }

    #[test]
    fn linear_model_response_is_history_free() {
        let spec = builtin_dgp(5).unwrap().without_nonlinear();
        let lin = spec.linear_part();
        let shock = ShockSpec::new(0.7, bump34(), 6);
        let eps = future(&spec, 6, 9);
        let scale = 0.7 * relax_eval(&bump34(), eps[(0, 0)]);
        let oracle = linear_irf(&lin.a, &lin.b0_21, scale, 6).unwrap();
        for seed in 0..3 {
            let hist = crate::model::stationary_history(&spec, seed, 100).unwrap();
            let diff = shocked_path(&spec, &hist, &eps, &shock).unwrap().difference();
            assert!((&diff - &oracle.values).amax() < 1e-12);
        }
    }

    #[test]
    fn linear_irf_geometric() {
        let a = LagPolynomial::new(vec![DMatrix::from_row_slice(1, 1, &[0.5])]).unwrap();
        let r = linear_irf(&a, &DVector::zeros(0), 2.0, 4).unwrap();
        assert_eq!(r.values.column(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 0.5, 0.25, 0.125]);
        let r0 = linear_irf(&a, &DVector::zeros(0), 2.0, 0).unwrap();
        assert_eq!(r0.values.nrows(), 1);
        let boom = LagPolynomial::new(vec![DMatrix::from_row_slice(1, 1, &[1.1])]).unwrap();
        assert!(matches!(linear_irf(&boom, &DVector::zeros(0), 1.0, 3), Err(Error::Explosive(_))));
    }

    #[test]
    fn dgp2_linear_part_checkpoints() {
        let lin = builtin_dgp(2).unwrap().linear_part();
        let r = linear_irf(&lin.a, &lin.b0_21, 1.0, 1).unwrap();
        assert!((r.values[(0, 1)] - 0.5).abs() < 1e-10);
        assert!((r.values[(1, 1)] - 0.80).abs() < 1e-10);
    }

    #[test]
    fn zero_spec_population_irf_is_zero() {
        let mut spec = ModelSpec::zeros(1, 1, 3.0);
        spec.impacts.push(Impact::new(0, 0, NonlinKind::Zero, 1.0));
        let shock = ShockSpec::new(1.0, bump34(), 4);
        let r = population_irf(&spec, &shock, 50, 1).unwrap();
        // X responds only at impact; nothing propagates.
        assert!(r.values.rows(1, 4).iter().all(|&v| v == 0.0));
        assert!(r.values.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn population_irf_thread_independent() {
        let spec = builtin_dgp(2).unwrap();
        let shock = ShockSpec::new(1.0, bump34(), 5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| population_irf(&spec, &shock, 700, 3).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn irf_csv_header() {
        let a = LagPolynomial::new(vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.1, 0.2])]).unwrap();
        let r = linear_irf(&a, &DVector::from_vec(vec![0.3]), 1.0, 2).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("h,var,value,method,delta"));
        assert_eq!(lines.next(), Some("0,X,1,linear_closed_form,1"));
        assert_eq!(text.lines().count(), 1 + 3 * 2);
    }
}
