//! Two-step estimation: least squares for the structural equation, then sieve
//! least squares for each non-structural equation with the first-stage
//! residual as a generated regressor.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BlockBasis, ColumnLabel, KnotVector, SieveBasis, SievePlan};
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::model::{Impact, Innovation, LagPolynomial, ModelSpec, NonlinKind, SimPath};

/// Least-squares coefficients and residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub regularized: bool,
}

/// Least squares by pivoted QR, with a ridge fallback on numerical rank deficiency.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rows vs {} responses", x.nrows(), y.len())));
    }
    let ls = LeastSquares::new(x)?;
    let (coefficients, residuals) = ls.solve(y);
    Ok(OlsFit { coefficients, residuals, regularized: ls.is_regularized() })
}

/// Stage I: `X_t` on `W_1t = (1, X_{t-1..t-p}, Y_{t-1}', ..., Y_{t-p}')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageFit {
    pub pi1_hat: Vec<f64>,
    pub labels: Vec<ColumnLabel>,
    /// Residual at time `p + r` in row `r`.
    pub residuals: Vec<f64>,
    pub sigma1_hat: f64,
    pub regularized: bool,
}

fn first_stage_labels(p: usize, d_y: usize, intercept: bool) -> Vec<ColumnLabel> {
    let mut l = Vec::new();
    if intercept {
        l.push(ColumnLabel::Intercept);
    }
    l.extend((1..=p).map(|lag| ColumnLabel::LinearX { lag }));
    for lag in 1..=p {
        l.extend((0..d_y).map(|component| ColumnLabel::LinearY { lag, component }));
    }
    l
}

fn label_value(label: ColumnLabel, x: &[f64], y: &DMatrix<f64>, t: usize) -> f64 {
    match label {
        ColumnLabel::Intercept => 1.0,
        ColumnLabel::LinearX { lag } => x[t - lag],
        ColumnLabel::LinearY { lag, component } => y[(t - lag, component)],
        _ => unreachable!("not a first-stage regressor"),
    }
}

fn sd(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn first_stage(path: &SimPath, p: usize, intercept: bool) -> Result<FirstStageFit> {
    let n = path.len();
    let labels = first_stage_labels(p, path.d_y(), intercept);
    if n <= p {
        return Err(Error::Underdetermined { rows: n.saturating_sub(p), cols: labels.len() });
    }
    let rows = n - p;
    let w = DMatrix::from_fn(rows, labels.len(), |r, c| label_value(labels[c], &path.x, &path.y, r + p));
    let fit = ols(&w, &path.x[p..])?;
    let sigma1_hat = sd(fit.residuals.iter().copied());
    Ok(FirstStageFit {
        pi1_hat: fit.coefficients,
        labels,
        residuals: fit.residuals,
        sigma1_hat,
        regularized: fit.regularized,
    })
}

/// Two-step fit. `spec` is the fitted model as a simulable [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub p: usize,
    pub plan: SievePlan,
    pub basis: SieveBasis,
    pub first_stage: FirstStageFit,
    pub labels: Vec<ColumnLabel>,
    /// Per `Y` equation, aligned with `labels`.
    pub coefficients: Vec<Vec<f64>>,
    /// Stage-II residuals, `(n - p) x d_y`.
    pub residuals: DMatrix<f64>,
    pub regularized: bool,
    /// Stage II used the true structural innovations.
    pub infeasible: bool,
    pub spec: ModelSpec,
}

impl FittedModel {
    pub fn d_y(&self) -> usize {
        self.coefficients.len()
    }

    /// Coefficient of the generated regressor per `Y` equation.
    pub fn b0_21_hat(&self) -> Vec<f64> {
        self.column_coefficients(ColumnLabel::Generated)
    }

    pub fn column_coefficients(&self, label: ColumnLabel) -> Vec<f64> {
        match self.labels.iter().position(|&l| l == label) {
            Some(c) => self.coefficients.iter().map(|b| b[c]).collect(),
            None => vec![0.0; self.d_y()],
        }
    }

    /// `(eps_1 hat, xi_2 hat)` per usable time, `(n - p) x d`.
    pub fn innovation_residuals(&self) -> DMatrix<f64> {
        let rows = self.residuals.nrows();
        let mut m = DMatrix::zeros(rows, self.d_y() + 1);
        m.set_column(0, &DVector::from_column_slice(&self.first_stage.residuals));
        m.columns_mut(1, self.d_y()).copy_from(&self.residuals);
        m
    }

    /// Fitted nonlinear function of block `block` in equation `equation`, recentred at 0.
    pub fn fitted_function(&self, equation: usize, block: usize) -> Option<Impact> {
        self.spec.impacts.iter().filter(|i| i.equation == equation).nth(self.impact_index(block)?).cloned()
    }

    fn impact_index(&self, block: usize) -> Option<usize> {
        let mut idx = 0;
        for (b, blk) in self.basis.blocks.iter().enumerate() {
            let count = match blk {
                BlockBasis::Spline { transform, .. } => usize::from(transform.ncols() > 0),
                BlockBasis::Transform { kinds, .. } => kinds.len(),
            };
            if b == block {
                return (count == 1).then_some(idx);
            }
            idx += count;
        }
        None
    }

    /// Sum of all fitted impacts of `X_{t-lag}` on `Y` component `equation`.
    pub fn g_hat(&self, equation: usize, lag: usize, x: f64) -> f64 {
        self.spec
            .impacts
            .iter()
            .filter(|i| i.equation == equation && i.lag == lag)
            .map(|i| i.func.eval(x))
            .sum()
    }
}

/// Translate coefficients into a pseudo-reduced-form model.
fn build_spec(
    p: usize,
    basis: &SieveBasis,
    first: &FirstStageFit,
    labels: &[ColumnLabel],
    coefficients: &[Vec<f64>],
    residuals: &DMatrix<f64>,
) -> Result<ModelSpec> {
    let d_y = coefficients.len();
    let d = d_y + 1;
    let mut mu = DVector::zeros(d);
    let mut a = LagPolynomial::zeros(d, p);
    let mut b0_21 = DVector::zeros(d_y);
    let mut impacts = Vec::new();

    let mut place = |row: usize, label: ColumnLabel, v: f64, mu: &mut DVector<f64>, b0: &mut DVector<f64>| match label {
        ColumnLabel::Intercept => mu[row] += v,
        ColumnLabel::LinearX { lag } => a.coeffs[lag - 1][(row, 0)] += v,
        ColumnLabel::LinearY { lag, component } => a.coeffs[lag - 1][(row, 1 + component)] += v,
        ColumnLabel::Generated => b0[row - 1] += v,
        ColumnLabel::Block { .. } => {}
    };
    for (&l, &v) in first.labels.iter().zip(&first.pi1_hat) {
        place(0, l, v, &mut mu, &mut b0_21);
    }
    for (i, beta) in coefficients.iter().enumerate() {
        for (&l, &v) in labels.iter().zip(beta) {
            place(1 + i, l, v, &mut mu, &mut b0_21);
        }
        for (b, block) in basis.blocks.iter().enumerate() {
            let coef: Vec<f64> = labels
                .iter()
                .zip(beta)
                .filter(|(l, _)| matches!(l, ColumnLabel::Block { block, .. } if *block == b))
                .map(|(_, &v)| v)
                .collect();
            match block {
                BlockBasis::Spline { lag, knots, transform } => {
                    if transform.ncols() == 0 {
                        continue;
                    }
                    let raw = transform * DVector::from_vec(coef);
                    let mut raw: Vec<f64> = raw.iter().copied().collect();
                    let (g0, _) = knots.combine(&raw, 0.0);
                    raw.iter_mut().for_each(|c| *c -= g0);
                    mu[1 + i] += g0;
                    impacts.push(Impact::new(i, *lag, NonlinKind::Spline { knots: knots.clone(), coeffs: raw }, 1.0));
                }
                BlockBasis::Transform { lag, kinds } => {
                    for (k, v) in kinds.iter().zip(coef) {
                        impacts.push(Impact::new(i, *lag, k.clone(), v));
                    }
                }
            }
        }
    }

    let mut scale = vec![first.sigma1_hat];
    let mut bound: f64 = 0.0;
    let mut track = |s: f64, max: f64| {
        if s > 0.0 {
            bound = bound.max(max / s);
        }
    };
    track(first.sigma1_hat, first.residuals.iter().fold(0.0, |m, v| m.max(v.abs())));
    for i in 0..d_y {
        let col = residuals.column(i);
        let s = sd(col.iter().copied());
        track(s, col.amax());
        scale.push(s);
    }
    let spec = ModelSpec {
        d_y,
        p,
        mu,
        a,
        impacts,
        b0_21,
        xi_loading: DMatrix::identity(d_y, d_y),
        innovation: Innovation { bound: if bound > 0.0 { bound } else { 1.0 }, scale },
    };
    spec.validate()?;
    Ok(spec)
}

fn fit_with(path: &SimPath, plan: &SievePlan, p: usize, true_eps: Option<&[f64]>) -> Result<FittedModel> {
    let n = path.len();
    let first = first_stage(path, p, plan.include_intercept)?;
    let generated: Vec<f64> = match true_eps {
        Some(e) => e.to_vec(),
        None => {
            let mut g = vec![0.0; p];
            g.extend_from_slice(&first.residuals);
            g
        }
    };
    let basis = SieveBasis::fit(plan, &path.x, p)?;
    let design = basis.design(&path.x, &path.y, &generated)?;
    let ls = LeastSquares::new(&design.values)?;
    let d_y = path.d_y();
    let mut coefficients = Vec::with_capacity(d_y);
    let mut residuals = DMatrix::zeros(n - p, d_y);
    for i in 0..d_y {
        let y: Vec<f64> = path.y.column(i).iter().skip(p).copied().collect();
        let (beta, resid) = ls.solve(&y);
        residuals.set_column(i, &DVector::from_vec(resid));
        coefficients.push(beta);
    }
    let spec = build_spec(p, &basis, &first, &design.labels, &coefficients, &residuals)?;
    Ok(FittedModel {
        p,
        plan: plan.clone(),
        basis,
        regularized: first.regularized || ls.is_regularized(),
        first_stage: first,
        labels: design.labels,
        coefficients,
        residuals,
        infeasible: true_eps.is_some(),
        spec,
    })
}

/// Feasible two-step estimator.
pub fn fit_two_step(path: &SimPath, plan: &SievePlan, p: usize) -> Result<FittedModel> {
    fit_with(path, plan, p, None)
}

/// Stage II with the true structural innovations in the generated-regressor slot.
pub fn fit_infeasible(path: &SimPath, plan: &SievePlan, p: usize) -> Result<FittedModel> {
    let eps = path.eps.as_ref().ok_or(Error::MissingInnovations)?;
    let e: Vec<f64> = eps.column(0).iter().copied().collect();
    fit_with(path, plan, p, Some(&e))
}

/// Advisory sieve size from the rate `(n / ln n)^{d / (2s + d)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KSelection {
    /// Rounded basis-dimension target.
    pub basis_target: usize,
    /// Interior knots for a degree-`degree` spline: `basis_target - (degree + 1)`, floored at 0.
    pub interior_knots: usize,
}

pub fn select_k(n: usize, s: f64, d: usize, degree: usize) -> KSelection {
    let n = n.max(2) as f64;
    let d = d.max(1) as f64;
    let target = (n / n.ln()).powf(d / (2.0 * s.max(1.0) + d)).round() as usize;
    KSelection { basis_target: target, interior_knots: target.saturating_sub(degree + 1) }
}

const BUNDLE_FILES: [&str; 7] = [
    "meta.csv",
    "plan.toml",
    "first_stage.csv",
    "coefficients.csv",
    "blocks.csv",
    "block_transforms.csv",
    "residuals.csv",
];

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| parse_err(path, format!("bad number {s:?}")))
}

fn parse_usize(path: &Path, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| parse_err(path, format!("bad integer {s:?}")))
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.records().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    plan: SievePlan,
}

impl FittedModel {
    /// Write the CSV bundle into `dir` (created if missing).
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("meta.csv"))?;
        w.write_record(["key", "value"])?;
        for (k, v) in [
            ("p", self.p.to_string()),
            ("d_y", self.d_y().to_string()),
            ("rows", self.residuals.nrows().to_string()),
            ("include_intercept", self.basis.include_intercept.to_string()),
            ("regularized", self.regularized.to_string()),
            ("first_stage_regularized", self.first_stage.regularized.to_string()),
            ("infeasible", self.infeasible.to_string()),
            ("sigma1_hat", self.first_stage.sigma1_hat.to_string()),
        ] {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;

        let plan = toml::to_string(&PlanFile { plan: self.plan.clone() })
            .map_err(|e| Error::InvalidConfig(format!("cannot serialize plan: {e}")))?;
        fs::write(dir.join("plan.toml"), plan)?;

        let mut w = csv::Writer::from_path(dir.join("first_stage.csv"))?;
        w.write_record(["term", "coefficient"])?;
        for (l, v) in self.first_stage.labels.iter().zip(&self.first_stage.pi1_hat) {
            w.write_record([l.to_string(), v.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("coefficients.csv"))?;
        w.write_record(["equation", "term", "coefficient"])?;
        for (i, beta) in self.coefficients.iter().enumerate() {
            for (l, v) in self.labels.iter().zip(beta) {
                w.write_record([(i + 1).to_string(), l.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("blocks.csv"))?;
        w.write_record(["block", "lag", "type", "degree", "domain_a", "domain_b", "interior", "kinds"])?;
        let mut t = csv::Writer::from_path(dir.join("block_transforms.csv"))?;
        t.write_record(["block", "row", "col", "value"])?;
        for (b, block) in self.basis.blocks.iter().enumerate() {
            match block {
                BlockBasis::Spline { lag, knots, transform } => {
                    let (a, bb) = knots.domain();
                    w.write_record([
                        b.to_string(),
                        lag.to_string(),
                        "spline".into(),
                        knots.degree().to_string(),
                        a.to_string(),
                        bb.to_string(),
                        join(knots.interior()),
                        String::new(),
                    ])?;
                    for r in 0..transform.nrows() {
                        for c in 0..transform.ncols() {
                            t.write_record([b.to_string(), r.to_string(), c.to_string(), transform[(r, c)].to_string()])?;
                        }
                    }
                }
                BlockBasis::Transform { lag, kinds } => {
                    let names = kinds
                        .iter()
                        .map(|k| k.name().ok_or_else(|| Error::InvalidConfig("spline transforms cannot be bundled".into())))
                        .collect::<Result<Vec<_>>>()?;
                    w.write_record([
                        b.to_string(),
                        lag.to_string(),
                        "transform".into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        names.join(";"),
                    ])?;
                }
            }
        }
        w.flush()?;
        t.flush()?;

        let mut w = csv::Writer::from_path(dir.join("residuals.csv"))?;
        let mut header = vec!["t".to_string(), "eps1_hat".to_string()];
        header.extend((1..=self.d_y()).map(|i| format!("xi{i}_hat")));
        w.write_record(&header)?;
        for r in 0..self.residuals.nrows() {
            let mut rec = vec![(r + self.p).to_string(), self.first_stage.residuals[r].to_string()];
            rec.extend(self.residuals.row(r).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`FittedModel::write_bundle`].
    pub fn read_bundle(dir: &Path) -> Result<Self> {
        for f in BUNDLE_FILES {
            if !dir.join(f).exists() {
                return Err(parse_err(&dir.join(f), "missing bundle file"));
            }
        }
        let meta_path = dir.join("meta.csv");
        let meta: std::collections::HashMap<String, String> =
            records(&meta_path)?.iter().map(|r| (r[0].to_string(), r[1].to_string())).collect();
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| parse_err(&meta_path, format!("missing key {k}")));
        let flag = |k: &str| -> Result<bool> { get(k)?.parse().map_err(|_| parse_err(&meta_path, format!("bad flag {k}"))) };
        let p = parse_usize(&meta_path, &get("p")?)?;
        let d_y = parse_usize(&meta_path, &get("d_y")?)?;
        let rows = parse_usize(&meta_path, &get("rows")?)?;
        let include_intercept = flag("include_intercept")?;

        let plan_path = dir.join("plan.toml");
        let plan: PlanFile = toml::from_str(&fs::read_to_string(&plan_path)?).map_err(|e| parse_err(&plan_path, e.to_string()))?;

        let fs_path = dir.join("first_stage.csv");
        let mut fs_labels = Vec::new();
        let mut pi1_hat = Vec::new();
        for r in records(&fs_path)? {
            fs_labels.push(r[0].parse::<ColumnLabel>()?);
            pi1_hat.push(parse_f64(&fs_path, &r[1])?);
        }

        let blocks_path = dir.join("blocks.csv");
        let tr_path = dir.join("block_transforms.csv");
        let tr = records(&tr_path)?;
        let mut blocks = Vec::new();
        for r in records(&blocks_path)? {
            let b = parse_usize(&blocks_path, &r[0])?;
            let lag = parse_usize(&blocks_path, &r[1])?;
            match &r[2] {
                "spline" => {
                    let interior = if r[6].is_empty() {
                        vec![]
                    } else {
                        r[6].split(';').map(|s| parse_f64(&blocks_path, s)).collect::<Result<_>>()?
                    };
                    let knots = KnotVector::new(
                        parse_usize(&blocks_path, &r[3])?,
                        interior,
                        (parse_f64(&blocks_path, &r[4])?, parse_f64(&blocks_path, &r[5])?),
                    )?;
                    let entries: Vec<(usize, usize, f64)> = tr
                        .iter()
                        .filter(|t| t[0].parse::<usize>().ok() == Some(b))
                        .map(|t| Ok((parse_usize(&tr_path, &t[1])?, parse_usize(&tr_path, &t[2])?, parse_f64(&tr_path, &t[3])?)))
                        .collect::<Result<_>>()?;
                    let q = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
                    let mut transform = DMatrix::zeros(knots.dim(), q);
                    for (i, j, v) in entries {
                        if i >= knots.dim() {
                            return Err(parse_err(&tr_path, "transform row out of range"));
                        }
                        transform[(i, j)] = v;
                    }
                    blocks.push(BlockBasis::Spline { lag, knots, transform });
                }
                "transform" => {
                    let kinds = r[7]
                        .split(';')
                        .map(|s| NonlinKind::from_name(s).ok_or_else(|| parse_err(&blocks_path, format!("unknown kind {s:?}"))))
                        .collect::<Result<_>>()?;
                    blocks.push(BlockBasis::Transform { lag, kinds });
                }
                other => return Err(parse_err(&blocks_path, format!("unknown block type {other:?}"))),
            }
        }
        let basis = SieveBasis { blocks, include_intercept, p };
        let labels = basis.labels(d_y);

        let co_path = dir.join("coefficients.csv");
        let mut coefficients = vec![vec![f64::NAN; labels.len()]; d_y];
        for r in records(&co_path)? {
            let eq = parse_usize(&co_path, &r[0])?;
            let label = r[1].parse::<ColumnLabel>()?;
            let c = labels.iter().position(|&l| l == label).ok_or_else(|| parse_err(&co_path, format!("unexpected term {label}")))?;
            if eq == 0 || eq > d_y {
                return Err(parse_err(&co_path, format!("equation {eq} out of range")));
            }
            coefficients[eq - 1][c] = parse_f64(&co_path, &r[2])?;
        }
        if coefficients.iter().flatten().any(|v| v.is_nan()) {
            return Err(parse_err(&co_path, "missing coefficients"));
        }

        let res_path = dir.join("residuals.csv");
        let res = records(&res_path)?;
        if res.len() != rows {
            return Err(parse_err(&res_path, format!("expected {rows} rows, found {}", res.len())));
        }
        let mut eps1 = Vec::with_capacity(rows);
        let mut residuals = DMatrix::zeros(rows, d_y);
        for (i, r) in res.iter().enumerate() {
            eps1.push(parse_f64(&res_path, &r[1])?);
            for k in 0..d_y {
                residuals[(i, k)] = parse_f64(&res_path, &r[2 + k])?;
            }
        }
        let first = FirstStageFit {
            pi1_hat,
            labels: fs_labels,
            residuals: eps1,
            sigma1_hat: parse_f64(&meta_path, &get("sigma1_hat")?)?,
            regularized: flag("first_stage_regularized")?,
        };
        let spec = build_spec(p, &basis, &first, &labels, &coefficients, &residuals)?;
        Ok(FittedModel {
            p,
            plan: plan.plan,
            basis,
            first_stage: first,
            labels,
            coefficients,
            residuals,
            regularized: flag("regularized")?,
            infeasible: flag("infeasible")?,
            spec,
        })
    }
}
