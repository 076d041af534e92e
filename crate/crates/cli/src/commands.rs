//! Subcommand implementations. Each writes into a content-addressed directory
//! under the output root and returns it together with any warnings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nlirf::irf::write_irf_csv;
use nlirf::plot::{irf_overlay, profile_panels, study_panels, two_panel_svg, Panel, Series};
use nlirf::{
    check_compatibility, estimate_delta_r_tau, estimated_irf, find_h_star, fit_infeasible, fit_two_step, linear_irf,
    population_irf, relax_eval, run_study, simulate, DataSet, FittedModel, IrfResult, NonlinKind, ShockSpec, SimPath,
    SievePlan, StudyConfig,
};

use crate::config::{DiagnoseConfig, EstimateConfig, IrfConfig, RelaxCheckConfig, SimulateConfig};
use crate::{create_file, echo, io_err, prepare_dir, write_file, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub dir: PathBuf,
    pub echoed: String,
    pub warnings: Vec<String>,
    /// Human-readable summary printed after the config echo.
    pub summary: String,
}

fn outcome(dir: PathBuf, echoed: String) -> Outcome {
    Outcome { dir, echoed, warnings: Vec::new(), summary: String::new() }
}

pub fn cmd_simulate(cfg: &SimulateConfig, root: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.model.resolve()?;
    let echoed = echo("simulate", cfg)?;
    let path = simulate(&spec, cfg.n, cfg.seed, cfg.burn_in)?;
    let dir = prepare_dir(root, "simulate", &echoed)?;
    path.write_csv(create_file(&dir.join("path.csv"))?)?;
    let mut out = outcome(dir, echoed);
    out.warnings = spec.warnings();
    out.summary = format!("simulated {} observations of {} variables", path.len(), path.d_y() + 1);
    Ok(out)
}

fn estimation_data(cfg: &EstimateConfig) -> Result<(SimPath, usize), CliError> {
    match (&cfg.data, cfg.model.is_set()) {
        (Some(file), false) => {
            let ds = DataSet::read_path(file, &cfg.x_column, cfg.y_columns.as_deref(), cfg.p)?;
            Ok((ds.to_path()?, ds.dropped))
        }
        (None, true) => {
            let n = cfg.n.ok_or_else(|| CliError::Config("`n` is required when simulating data".into()))?;
            let spec = cfg.model.resolve()?;
            Ok((simulate(&spec, n, cfg.seed, nlirf::model::DEFAULT_BURN_IN)?, 0))
        }
        _ => Err(CliError::Config("give exactly one of `data` or `model`".into())),
    }
}

pub fn cmd_estimate(cfg: &EstimateConfig, root: &Path) -> Result<Outcome, CliError> {
    let echoed = echo("estimate", cfg)?;
    let (data, dropped) = estimation_data(cfg)?;
    let fit = if cfg.infeasible { fit_infeasible(&data, &cfg.plan, cfg.p)? } else { fit_two_step(&data, &cfg.plan, cfg.p)? };
    let dir = prepare_dir(root, "estimate", &echoed)?;
    fit.write_bundle(&dir.join("bundle"))?;
    data.write_csv(create_file(&dir.join("data.csv"))?)?;

    let (lo, hi) = data.x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let m = cfg.grid_points.max(2);
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let mut wr = csv::Writer::from_writer(create_file(&dir.join("fitted_functions.csv"))?);
    wr.write_record(["equation", "lag", "x", "value"]).map_err(nlirf::Error::from)?;
    let mut panels: Vec<Vec<Series>> = vec![Vec::new(), Vec::new()];
    for eq in 0..fit.d_y() {
        for lag in 0..=cfg.p {
            let pts: Vec<(f64, f64)> = grid.iter().map(|&x| (x, fit.g_hat(eq, lag, x))).collect();
            for &(x, v) in &pts {
                wr.write_record([format!("Y{}", eq + 1), lag.to_string(), x.to_string(), v.to_string()])
                    .map_err(nlirf::Error::from)?;
            }
            if lag < 2 {
                panels[lag].push(Series { label: format!("Y{}", eq + 1), points: pts });
            }
        }
    }
    wr.flush().map_err(io_err(&dir))?;
    let top = Panel { title: "fitted impact of X_t".into(), x_label: "x".into(), series: panels.remove(0) };
    let bottom = Panel { title: "fitted impact of X_{t-1}".into(), x_label: "x".into(), series: panels.remove(0) };
    write_file(&dir.join("fitted_functions.svg"), two_panel_svg(&top, &bottom))?;

    let mut out = outcome(dir, echoed);
    if dropped > 0 {
        out.warnings.push(format!("dropped {dropped} rows with missing values"));
    }
    if fit.regularized {
        out.warnings.push("rank-deficient design: ridge-regularized solve used".into());
    }
    let mut s = String::new();
    let _ = writeln!(s, "fitted {} columns on {} observations", fit.labels.len(), data.len());
    let _ = writeln!(s, "B0_21 hat = {:?}", fit.b0_21_hat());
    let _ = write!(s, "sigma_1 hat = {:.6}", fit.first_stage.sigma1_hat);
    out.summary = s;
    Ok(out)
}

fn load_fit(dir: &Path) -> Result<(FittedModel, SimPath), CliError> {
    let fit = FittedModel::read_bundle(&dir.join("bundle"))?;
    let data_path = dir.join("data.csv");
    let data = SimPath::read_csv(std::fs::File::open(&data_path).map_err(io_err(&data_path))?)?;
    Ok((fit, data))
}

pub fn cmd_irf(cfg: &IrfConfig, root: &Path) -> Result<Outcome, CliError> {
    let echoed = echo("irf", cfg)?;
    if cfg.deltas.is_empty() {
        return Err(CliError::Config("`deltas` is empty".into()));
    }
    let population = if cfg.model.is_set() { Some(cfg.model.resolve()?) } else { None };
    let fitted = cfg.fit.as_deref().map(load_fit).transpose()?;
    if population.is_none() && fitted.is_none() {
        return Err(CliError::Config("give a `fit` directory, a population `model`, or both".into()));
    }
    let parametric: Vec<(String, NonlinKind)> = cfg
        .parametric
        .iter()
        .map(|name| {
            NonlinKind::from_name(name)
                .map(|k| (name.clone(), k))
                .ok_or_else(|| CliError::Config(format!("unknown parametric transform `{name}`")))
        })
        .collect::<Result<_, _>>()?;
    if fitted.is_none() && (cfg.linear || !parametric.is_empty()) {
        return Err(CliError::Config("`linear` and `parametric` need a `fit` directory".into()));
    }

    let mut warnings = Vec::new();
    for &delta in &cfg.deltas {
        let shock = ShockSpec::new(delta, cfg.relaxation, cfg.horizon);
        let supports = population.iter().chain(fitted.iter().map(|(f, _)| &f.spec));
        for spec in supports {
            if let Some(w) = shock.verify(spec.innovation.structural_support())? {
                warnings.push(w);
            }
        }
    }

    let mut results: Vec<(String, IrfResult)> = Vec::new();
    for &delta in &cfg.deltas {
        let shock = ShockSpec::new(delta, cfg.relaxation, cfg.horizon);
        if let Some(spec) = &population {
            results.push(("population".into(), population_irf(spec, &shock, cfg.pop_replications, cfg.seed)?));
        }
        if let Some((fit, data)) = &fitted {
            results.push(("sieve".into(), estimated_irf(fit, data, &shock)?));
            for (name, kind) in &parametric {
                let pfit = fit_two_step(data, &SievePlan::parametric(vec![kind.clone()]), fit.p)?;
                results.push((format!("parametric_{name}"), estimated_irf(&pfit, data, &shock)?));
            }
            if cfg.linear {
                let lfit = fit_two_step(data, &SievePlan::linear(), fit.p)?;
                results.push(("linear".into(), linear_irf(&lfit.spec.a, &lfit.spec.b0_21, delta, cfg.horizon)?));
            }
        }
    }

    let dir = prepare_dir(root, "irf", &echoed)?;
    let rows: Vec<(Option<&str>, &IrfResult)> = results.iter().map(|(l, r)| (Some(l.as_str()), r)).collect();
    write_irf_csv(create_file(&dir.join("irf.csv"))?, &rows)?;
    for (k, &delta) in cfg.deltas.iter().enumerate() {
        let group: Vec<(String, &IrfResult)> =
            results.iter().filter(|(_, r)| r.shock.delta == delta).map(|(l, r)| (l.clone(), r)).collect();
        let vars = group[0].1.var_names();
        let top = vars.get(1).map_or("X", String::as_str);
        write_file(&dir.join(format!("irf_{k}.svg")), irf_overlay(&group, top, "X"))?;
    }
    let mut out = outcome(dir, echoed);
    warnings.sort();
    warnings.dedup();
    out.warnings = warnings;
    let violations: usize = results.iter().map(|(_, r)| r.support_violations).sum();
    out.summary = format!("{} impulse responses over horizons 0..={}", results.len(), cfg.horizon);
    if violations > 0 {
        out.warnings.push(format!("{violations} shocked impact innovations left the innovation support"));
    }
    Ok(out)
}

pub fn cmd_mc(cfg: &StudyConfig, root: &Path) -> Result<Outcome, CliError> {
    let echoed = echo("mc", cfg)?;
    let res = run_study(cfg)?;
    let dir = prepare_dir(root, "mc", &echoed)?;
    res.write_csv(create_file(&dir.join("study.csv"))?)?;
    let pop: Vec<(Option<&str>, &IrfResult)> = res.population.iter().map(|r| (None, r)).collect();
    write_irf_csv(create_file(&dir.join("population.csv"))?, &pop)?;
    for var in res.population[0].var_names() {
        write_file(&dir.join(format!("mse_bias_{var}.svg")), study_panels(&res, &var))?;
    }
    let mut out = outcome(dir, echoed);
    if res.failures > 0 {
        out.warnings.push(format!("{} of {} replications failed and were excluded", res.failures, cfg.mc_replications));
    }
    out.summary = format!("{} replications, {} result rows", cfg.mc_replications - res.failures, res.rows.len());
    Ok(out)
}

pub fn cmd_diagnose(cfg: &DiagnoseConfig, root: &Path) -> Result<Outcome, CliError> {
    let echoed = echo("diagnose", cfg)?;
    let spec = cfg.model.resolve()?;
    let profile = estimate_delta_r_tau(&spec, cfg.r, cfg.h_max, cfg.replications, cfg.seed, cfg.tau)?;
    let stability = find_h_star(&spec, cfg.h_cap, cfg.samples, cfg.seed)?;
    let dir = prepare_dir(root, "diagnose", &echoed)?;
    profile.write_csv(create_file(&dir.join("profile.csv"))?)?;
    let report = format!("{}{}", profile.report(), stability.report());
    write_file(&dir.join("report.txt"), &report)?;
    let fitted: Option<Vec<f64>> = profile.fit.as_ref().map(|f| {
        (0..=profile.h_max).map(|h| f.a1 * (-f.a2 * (h as f64).powf(f.tau)).exp()).collect()
    });
    let mut shown = vec![f64::NAN];
    shown.extend(&profile.delta_hat);
    write_file(&dir.join("profile.svg"), profile_panels(&shown, fitted.as_deref()))?;
    let mut out = outcome(dir, echoed);
    out.warnings = spec.warnings();
    out.summary = report.trim_end().to_string();
    Ok(out)
}

/// Writes the verdicts; an incompatible shock is reported after the files exist.
pub fn cmd_relax_check(cfg: &RelaxCheckConfig, root: &Path) -> Result<Outcome, CliError> {
    let echoed = echo("relax-check", cfg)?;
    let (a, b) = match (cfg.support, cfg.model.is_set()) {
        (Some([a, b]), false) if a < b => (a, b),
        (None, true) => cfg.model.resolve()?.innovation.structural_support(),
        _ => return Err(CliError::Config("give either `support = [a, b]` with a < b or a `model`".into())),
    };
    let checks: Vec<_> = cfg.deltas.iter().map(|&d| (d, check_compatibility(&cfg.relaxation, d, (a, b)))).collect();
    let dir = prepare_dir(root, "relax-check", &echoed)?;

    let mut wr = csv::Writer::from_writer(create_file(&dir.join("relax_check.csv"))?);
    wr.write_record(["delta", "compatible", "worst_margin", "argmax"]).map_err(nlirf::Error::from)?;
    for (d, c) in &checks {
        wr.write_record([d.to_string(), c.compatible.to_string(), c.worst_margin.to_string(), c.argmax.to_string()])
            .map_err(nlirf::Error::from)?;
    }
    wr.flush().map_err(io_err(&dir))?;

    let m = cfg.grid_points.max(2);
    let grid: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
    let mut wr = csv::Writer::from_writer(create_file(&dir.join("relaxation.csv"))?);
    wr.write_record(["delta", "e", "rho", "shocked"]).map_err(nlirf::Error::from)?;
    let mut shocked = Vec::new();
    for &d in &cfg.deltas {
        let pts: Vec<(f64, f64)> = grid.iter().map(|&e| (e, e + d * relax_eval(&cfg.relaxation, e))).collect();
        for &(e, s) in &pts {
            wr.write_record([d.to_string(), e.to_string(), relax_eval(&cfg.relaxation, e).to_string(), s.to_string()])
                .map_err(nlirf::Error::from)?;
        }
        shocked.push(Series { label: format!("delta = {d}"), points: pts });
    }
    wr.flush().map_err(io_err(&dir))?;
    shocked.push(Series { label: "lower bound".into(), points: vec![(a, a), (b, a)] });
    shocked.push(Series { label: "upper bound".into(), points: vec![(a, b), (b, b)] });
    let top = Panel {
        title: "relaxation".into(),
        x_label: "e".into(),
        series: vec![Series { label: "rho(e)".into(), points: grid.iter().map(|&e| (e, relax_eval(&cfg.relaxation, e))).collect() }],
    };
    let bottom = Panel { title: "shocked innovation".into(), x_label: "e".into(), series: shocked };
    write_file(&dir.join("relaxation.svg"), two_panel_svg(&top, &bottom))?;

    let mut s = String::new();
    for (d, c) in &checks {
        let _ = writeln!(
            s,
            "delta = {d}: {} (worst margin {:.6} at e = {:.6})",
            if c.compatible { "compatible" } else { "INCOMPATIBLE" },
            c.worst_margin,
            c.argmax
        );
    }
    let mut out = outcome(dir, echoed);
    out.summary = s.trim_end().to_string();
    if let Some((d, c)) = checks.iter().find(|(_, c)| !c.compatible) {
        return Err(nlirf::Error::IncompatibleShock { delta: *d, margin: c.worst_margin }.into())
            .inspect_err(|_| print_outcome(&out));
    }
    Ok(out)
}

/// Prints the echoed configuration, output directory, warnings and summary.
pub fn print_outcome(out: &Outcome) {
    println!("# resolved configuration\n{}", out.echoed.trim_end());
    println!("# output: {}", out.dir.display());
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if !out.summary.is_empty() {
        println!("{}", out.summary);
    }
}
