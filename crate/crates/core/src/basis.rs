//! Univariate clamped B-spline sieves and the stage-II regression design.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::model::NonlinKind;

/// Clamped knot vector of a degree-`degree` B-spline basis on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnots", into = "RawKnots")]
pub struct KnotVector {
    degree: usize,
    interior: Vec<f64>,
    domain: (f64, f64),
    full: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKnots {
    degree: usize,
    interior: Vec<f64>,
    domain: [f64; 2],
}

impl TryFrom<RawKnots> for KnotVector {
    type Error = Error;
    fn try_from(r: RawKnots) -> Result<Self> {
        KnotVector::new(r.degree, r.interior, (r.domain[0], r.domain[1]))
    }
}

impl From<KnotVector> for RawKnots {
    fn from(k: KnotVector) -> Self {
        RawKnots { degree: k.degree, interior: k.interior, domain: [k.domain.0, k.domain.1] }
    }
}

impl KnotVector {
    pub fn new(degree: usize, interior: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidKnots(format!("domain [{a}, {b}] must satisfy a < b")));
        }
        if interior.iter().any(|&k| !(k > a && k < b)) {
            return Err(Error::InvalidKnots("interior knots must lie strictly inside the domain".into()));
        }
        if interior.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidKnots("interior knots must be strictly increasing".into()));
        }
        let mut full = vec![a; degree + 1];
        full.extend_from_slice(&interior);
        full.extend(std::iter::repeat_n(b, degree + 1));
        Ok(Self { degree, interior, domain, full })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Full knot sequence with boundary knots repeated `degree + 1` times.
    pub fn full_knots(&self) -> &[f64] {
        &self.full
    }

    pub fn dim(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    /// Clamp `x` into the domain; the flag reports whether clamping happened.
    pub fn clamp(&self, x: f64) -> (f64, bool) {
        let (a, b) = self.domain;
        if x < a {
            (a, true)
        } else if x > b {
            (b, true)
        } else {
            (x, false)
        }
    }

    fn span(&self, x: f64) -> usize {
        let n = self.dim();
        let u = &self.full;
        if x >= self.domain.1 {
            return n - 1;
        }
        // largest k in [degree, n-1] with u[k] <= x
        let (mut lo, mut hi) = (self.degree, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if u[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Nonzero basis values at `x` (already inside the domain) and the index of the first one.
    pub fn eval_local(&self, x: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let u = &self.full;
        let span = self.span(x);
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (span - p, n)
    }

    /// All `dim()` basis values at `x`, clamping out-of-domain arguments.
    pub fn eval_counted(&self, x: f64) -> (Vec<f64>, bool) {
        let (xc, clamped) = self.clamp(x);
        let (first, local) = self.eval_local(xc);
        let mut out = vec![0.0; self.dim()];
        out[first..first + local.len()].copy_from_slice(&local);
        (out, clamped)
    }

    /// `sum_i coeffs[i] B_i(x)`, with the clamping flag.
    pub fn combine(&self, coeffs: &[f64], x: f64) -> (f64, bool) {
        let (xc, clamped) = self.clamp(x);
        let (first, local) = self.eval_local(xc);
        let v = local.iter().zip(&coeffs[first..]).map(|(b, c)| b * c).sum();
        (v, clamped)
    }
}

/// Basis values at `x`; out-of-domain arguments are clamped to the nearest endpoint.
pub fn bspline_eval(kv: &KnotVector, x: f64) -> Vec<f64> {
    kv.eval_counted(x).0
}

/// Knots at the `count` interior empirical quantiles `i / (count + 1)` of `sample`.
///
/// Quantiles interpolate linearly between order statistics.
pub fn knots_from_quantiles(sample: &[f64], count: usize, degree: usize) -> Result<KnotVector> {
    let mut s: Vec<f64> = sample.iter().copied().filter(|v| v.is_finite()).collect();
    s.sort_by(|a, b| a.total_cmp(b));
    let mut distinct = s.clone();
    distinct.dedup();
    if distinct.len() < count + 2 {
        return Err(Error::DegenerateSample(format!(
            "{} distinct values, need at least {}",
            distinct.len(),
            count + 2
        )));
    }
    let n = s.len();
    let quantile = |p: f64| {
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    let interior: Vec<f64> = (1..=count).map(|i| quantile(i as f64 / (count + 1) as f64)).collect();
    let domain = (s[0], s[n - 1]);
    KnotVector::new(degree, interior, domain).map_err(|e| Error::DegenerateSample(e.to_string()))
}

/// Knot placement rule: explicit interior knots or `quantile:<count>`.
#[derive(Debug, Clone, PartialEq)]
pub enum KnotChoice {
    Explicit(Vec<f64>),
    Quantile(usize),
}

impl Serialize for KnotChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KnotChoice::Explicit(v) => v.serialize(s),
            KnotChoice::Quantile(c) => s.serialize_str(&format!("quantile:{c}")),
        }
    }
}

impl<'de> Deserialize<'de> for KnotChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => Ok(KnotChoice::Explicit(v)),
            Raw::Text(t) => t
                .strip_prefix("quantile:")
                .and_then(|c| c.trim().parse().ok())
                .map(KnotChoice::Quantile)
                .ok_or_else(|| serde::de::Error::custom(format!("expected \"quantile:<count>\", got {t:?}"))),
        }
    }
}

/// Spline domain: the sample range of `X` or a fixed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainChoice {
    Data,
    Fixed(f64, f64),
}

impl Serialize for DomainChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DomainChoice::Data => s.serialize_str("data"),
            DomainChoice::Fixed(a, b) => [*a, *b].serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for DomainChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Pair([f64; 2]),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Pair([a, b]) => Ok(DomainChoice::Fixed(a, b)),
            Raw::Text(t) if t == "data" => Ok(DomainChoice::Data),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected \"data\" or [a, b], got {t:?}"))),
        }
    }
}

fn default_true() -> bool {
    true
}

/// Stage-II regression plan.
///
/// Every lag of `X` listed in `lags` (default `0..=p`) receives one block:
/// a B-spline block when `transforms` is unset, otherwise one column per
/// named parametric transform. Linear lags `X_{t-1..t-p}`, `Y_{t-1..t-p}` and
/// the generated regressor are always present; `X_t` enters linearly only
/// through the generated regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SievePlan {
    pub degree: usize,
    pub knots: KnotChoice,
    pub domain: DomainChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lags: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transforms: Option<Vec<NonlinKind>>,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
}

impl SievePlan {
    /// Cubic spline with explicit interior knots on the data range.
    pub fn cubic(knots: Vec<f64>) -> Self {
        Self {
            degree: 3,
            knots: KnotChoice::Explicit(knots),
            domain: DomainChoice::Data,
            lags: None,
            transforms: None,
            include_intercept: true,
        }
    }

    /// Parametric design with fixed transforms of each `X` lag.
    pub fn parametric(transforms: Vec<NonlinKind>) -> Self {
        Self { transforms: Some(transforms), ..Self::cubic(vec![]) }
    }

    /// No nonlinear blocks: the linear VAR regressors plus the generated regressor.
    pub fn linear() -> Self {
        Self { lags: Some(vec![]), ..Self::cubic(vec![]) }
    }

    pub fn block_lags(&self, p: usize) -> Vec<usize> {
        self.lags.clone().unwrap_or_else(|| (0..=p).collect())
    }
}

/// One fitted regressor block for lag `lag` of `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockBasis {
    /// Raw clamped B-spline basis times `transform` (`dim x q`), whose columns
    /// span the part of the spline space orthogonal (in the sample) to 1 and `x`.
    Spline { lag: usize, knots: KnotVector, transform: DMatrix<f64> },
    Transform { lag: usize, kinds: Vec<NonlinKind> },
}

impl BlockBasis {
    pub fn lag(&self) -> usize {
        match self {
            BlockBasis::Spline { lag, .. } | BlockBasis::Transform { lag, .. } => *lag,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            BlockBasis::Spline { transform, .. } => transform.ncols(),
            BlockBasis::Transform { kinds, .. } => kinds.len(),
        }
    }

    /// Block columns at `x`, writing into `out`; returns whether `x` was clamped.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> bool {
        match self {
            BlockBasis::Spline { knots, transform, .. } => {
                let (xc, clamped) = knots.clamp(x);
                let (first, local) = knots.eval_local(xc);
                for (q, o) in out.iter_mut().enumerate() {
                    *o = local.iter().enumerate().map(|(i, b)| b * transform[(first + i, q)]).sum();
                }
                clamped
            }
            BlockBasis::Transform { kinds, .. } => {
                let mut clamped = false;
                for (o, k) in out.iter_mut().zip(kinds) {
                    let (v, c) = k.eval_counted(x);
                    *o = v;
                    clamped |= c;
                }
                clamped
            }
        }
    }
}

/// Provenance of a design column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnLabel {
    Intercept,
    Block { block: usize, index: usize },
    LinearX { lag: usize },
    LinearY { lag: usize, component: usize },
    Generated,
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnLabel::Intercept => write!(f, "intercept"),
            ColumnLabel::Block { block, index } => write!(f, "block{block}_{index}"),
            ColumnLabel::LinearX { lag } => write!(f, "x_lag{lag}"),
            ColumnLabel::LinearY { lag, component } => write!(f, "y{}_lag{lag}", component + 1),
            ColumnLabel::Generated => write!(f, "generated"),
        }
    }
}

impl std::str::FromStr for ColumnLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { path: "<label>".into(), msg: format!("unknown column label {s:?}") };
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        match s {
            "intercept" => return Ok(ColumnLabel::Intercept),
            "generated" => return Ok(ColumnLabel::Generated),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("block") {
            let (b, i) = rest.split_once('_').ok_or_else(bad)?;
            return Ok(ColumnLabel::Block { block: num(b)?, index: num(i)? });
        }
        if let Some(rest) = s.strip_prefix("x_lag") {
            return Ok(ColumnLabel::LinearX { lag: num(rest)? });
        }
        if let Some(rest) = s.strip_prefix('y') {
            let (c, l) = rest.split_once("_lag").ok_or_else(bad)?;
            let c = num(c)?;
            if c == 0 {
                return Err(bad());
            }
            return Ok(ColumnLabel::LinearY { lag: num(l)?, component: c - 1 });
        }
        Err(bad())
    }
}

/// Regression matrix with column provenance. Row `r` corresponds to time `first_row + r`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub labels: Vec<ColumnLabel>,
    pub first_row: usize,
    /// Number of block evaluations whose argument fell outside the spline domain.
    pub clamped: usize,
}

/// Fitted block structure: knots and sample-orthogonalized transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveBasis {
    pub blocks: Vec<BlockBasis>,
    pub include_intercept: bool,
    pub p: usize,
}

impl SieveBasis {
    /// Resolve knots and domains from the `X` path and orthogonalize spline blocks.
    pub fn fit(plan: &SievePlan, x: &[f64], p: usize) -> Result<Self> {
        let n = x.len();
        if n <= p {
            return Err(Error::DimensionMismatch(format!("path length {n} must exceed lag order {p}")));
        }
        let lags = plan.block_lags(p);
        if let Some(&bad) = lags.iter().find(|&&l| l > p) {
            return Err(Error::InvalidConfig(format!("block lag {bad} exceeds lag order {p}")));
        }
        let mut blocks = Vec::with_capacity(lags.len());
        if let Some(kinds) = &plan.transforms {
            for lag in lags {
                blocks.push(BlockBasis::Transform { lag, kinds: kinds.clone() });
            }
            return Ok(Self { blocks, include_intercept: plan.include_intercept, p });
        }

        let knots = match (&plan.knots, plan.domain) {
            (KnotChoice::Quantile(c), DomainChoice::Data) => knots_from_quantiles(x, *c, plan.degree)?,
            (KnotChoice::Quantile(c), DomainChoice::Fixed(a, b)) => {
                let q = knots_from_quantiles(x, *c, plan.degree)?;
                KnotVector::new(plan.degree, q.interior().to_vec(), (a, b))?
            }
            (KnotChoice::Explicit(k), dom) => {
                let (a, b) = match dom {
                    DomainChoice::Fixed(a, b) => (a, b),
                    DomainChoice::Data => x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    }),
                };
                KnotVector::new(plan.degree, k.clone(), (a, b))?
            }
        };

        for lag in lags {
            let sample: Vec<f64> = (p..n).map(|t| x[t - lag]).collect();
            let transform = orthogonal_complement_transform(&knots, &sample);
            blocks.push(BlockBasis::Spline { lag, knots: knots.clone(), transform });
        }
        Ok(Self { blocks, include_intercept: plan.include_intercept, p })
    }

    pub fn labels(&self, d_y: usize) -> Vec<ColumnLabel> {
        let mut labels = Vec::new();
        if self.include_intercept {
            labels.push(ColumnLabel::Intercept);
        }
        for (b, block) in self.blocks.iter().enumerate() {
            labels.extend((0..block.width()).map(|index| ColumnLabel::Block { block: b, index }));
        }
        labels.extend((1..=self.p).map(|lag| ColumnLabel::LinearX { lag }));
        for lag in 1..=self.p {
            labels.extend((0..d_y).map(|component| ColumnLabel::LinearY { lag, component }));
        }
        labels.push(ColumnLabel::Generated);
        labels
    }

    pub fn n_columns(&self, d_y: usize) -> usize {
        self.labels(d_y).len()
    }

    /// Assemble rows `t = p .. n-1` of the design.
    pub fn design(&self, x: &[f64], y: &DMatrix<f64>, eps_hat: &[f64]) -> Result<DesignMatrix> {
        let n = x.len();
        let p = self.p;
        if y.nrows() != n || eps_hat.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "X has {n} rows, Y has {}, eps_hat has {}",
                y.nrows(),
                eps_hat.len()
            )));
        }
        let labels = self.labels(y.ncols());
        let rows = n - p;
        if labels.len() >= rows {
            return Err(Error::OverparameterizedSieve { columns: labels.len(), rows });
        }
        let mut values = DMatrix::zeros(rows, labels.len());
        let mut clamped = 0;
        let widths: Vec<usize> = self.blocks.iter().map(BlockBasis::width).collect();
        let mut scratch = vec![0.0; widths.iter().copied().max().unwrap_or(0)];
        for r in 0..rows {
            let t = r + p;
            let mut c = 0;
            if self.include_intercept {
                values[(r, c)] = 1.0;
                c += 1;
            }
            for (block, &w) in self.blocks.iter().zip(&widths) {
                if block.eval_into(x[t - block.lag()], &mut scratch[..w]) {
                    clamped += 1;
                }
                for &v in &scratch[..w] {
                    values[(r, c)] = v;
                    c += 1;
                }
            }
            for lag in 1..=p {
                values[(r, c)] = x[t - lag];
                c += 1;
            }
            for lag in 1..=p {
                for i in 0..y.ncols() {
                    values[(r, c)] = y[(t - lag, i)];
                    c += 1;
                }
            }
            values[(r, c)] = eps_hat[t];
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("design contains non-finite entries".into()));
        }
        Ok(DesignMatrix { values, labels, first_row: p, clamped })
    }
}

/// `dim x q` coefficient transform whose columns span `{c : sum_t [1, x_t]' B(x_t) c = 0}`.
fn orthogonal_complement_transform(knots: &KnotVector, sample: &[f64]) -> DMatrix<f64> {
    let m = knots.dim();
    let nobs = sample.len() as f64;
    let mut moments = DMatrix::<f64>::zeros(2, m);
    for &xv in sample {
        let (first, local) = knots.eval_local(knots.clamp(xv).0);
        for (i, b) in local.iter().enumerate() {
            moments[(0, first + i)] += b / nobs;
            moments[(1, first + i)] += xv * b / nobs;
        }
    }
    let gram = moments.transpose() * &moments;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let rank = eig.eigenvalues.iter().filter(|&&v| v > 1e-12 * top.max(f64::MIN_POSITIVE)).count();
    let q = m - rank.min(m);
    let mut t = DMatrix::zeros(m, q);
    for (col, &idx) in order.iter().take(q).enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        let lead = v.iter().cloned().fold(0.0, |acc: f64, e| if e.abs() > acc.abs() { e } else { acc });
        if lead < 0.0 {
            v.neg_mut();
        }
        t.set_column(col, &v);
    }
    t
}

/// Build the feasible (or, with true innovations, infeasible) stage-II design.
pub fn build_design(plan: &SievePlan, x: &[f64], y: &DMatrix<f64>, eps_hat: &[f64], p: usize) -> Result<DesignMatrix> {
    SieveBasis::fit(plan, x, p)?.design(x, y, eps_hat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramDiagnostics {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `|| R^{-1/2} (B'B/n) R^{-1/2} - I ||_2`, infinite when the whitening matrix is singular.
    pub orthonormalized_deviation: f64,
    pub singular: bool,
}

/// Conditioning of `B'B/n`, and its deviation from the identity after whitening
/// by `reference` (a population second-moment matrix) or by itself when `None`.
pub fn gram_diagnostics(d: &DesignMatrix, reference: Option<&DMatrix<f64>>) -> GramDiagnostics {
    let n = d.values.nrows() as f64;
    let gram = d.values.transpose() * &d.values / n;
    let ev = sym_eigenvalues(&gram);
    let max_eigenvalue = ev.last().copied().unwrap_or(0.0);
    let mut min_eigenvalue = ev.first().copied().unwrap_or(0.0);
    let tiny = 1e-14 * max_eigenvalue.abs().max(f64::MIN_POSITIVE);
    let own_singular = min_eigenvalue <= tiny;
    if own_singular {
        min_eigenvalue = 0.0;
    }

    let whitening = reference.unwrap_or(&gram);
    let eig = SymmetricEigen::new(whitening.clone());
    let wmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let singular = own_singular || eig.eigenvalues.iter().any(|&v| v <= 1e-14 * wmax.max(f64::MIN_POSITIVE));
    let orthonormalized_deviation = if singular {
        f64::INFINITY
    } else {
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let w = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let k = gram.nrows();
        let dev = &w * &gram * &w - DMatrix::<f64>::identity(k, k);
        let dev = (&dev + dev.transpose()) * 0.5;
        sym_eigenvalues(&dev).iter().map(|v| v.abs()).fold(0.0, f64::max)
    };
    GramDiagnostics { min_eigenvalue, max_eigenvalue, orthonormalized_deviation, singular }
}
