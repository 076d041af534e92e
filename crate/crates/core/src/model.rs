//! Block-recursive nonlinear autoregressions in pseudo-reduced form and their simulation.
//!
//! With `Z_t = (X_t, Y_t')'` of dimension `d = 1 + d_y` the recursion is
//!
//! ```text
//! X_t = mu_1 + A_1(L) Z_{t-1} + eps_1t
//! Y_t = mu_2 + A_2(L) Z_{t-1} + sum_j G_j(X_{t-j}) + b0_21 eps_1t + S xi_2t
//! ```
//!
//! where `A_1`/`A_2` are the first and remaining rows of the lag polynomial,
//! the `G_j` are additively separable nonlinear impacts of lags `j = 0..p` of
//! `X`, and `S` (`xi_loading`, identity unless the model came from a
//! structural form) loads the non-structural innovations.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::basis::KnotVector;
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::rng::stream_rng;

/// Default number of discarded initial steps.
pub const DEFAULT_BURN_IN: usize = 500;

const DIVERGENCE_BOUND: f64 = 1e100;

/// Shape of a nonlinear impact function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinKind {
    Zero,
    Linear,
    Max0,
    Cube,
    /// `(x - 1)(0.5 + tanh(x - 1) / 2)`
    SmoothPhi,
    /// `SmoothPhi` evaluated at `x + 1`.
    SmoothPhiShift,
    Spline { knots: KnotVector, coeffs: Vec<f64> },
}

fn smooth_phi(x: f64) -> f64 {
    (x - 1.0) * (0.5 + (x - 1.0).tanh() / 2.0)
}

impl NonlinKind {
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_counted(x).0
    }

    /// Value at `x` and whether a spline argument had to be clamped into its domain.
    pub fn eval_counted(&self, x: f64) -> (f64, bool) {
        match self {
            NonlinKind::Zero => (0.0, false),
            NonlinKind::Linear => (x, false),
            NonlinKind::Max0 => (x.max(0.0), false),
            NonlinKind::Cube => (x * x * x, false),
            NonlinKind::SmoothPhi => (smooth_phi(x), false),
            NonlinKind::SmoothPhiShift => (smooth_phi(x + 1.0), false),
            NonlinKind::Spline { knots, coeffs } => knots.combine(coeffs, x),
        }
    }

    /// Config name of a parameter-free kind.
    pub fn name(&self) -> Option<&'static str> {
        Some(match self {
            NonlinKind::Zero => "zero",
            NonlinKind::Linear => "linear",
            NonlinKind::Max0 => "max0",
            NonlinKind::Cube => "cube",
            NonlinKind::SmoothPhi => "smooth_phi",
            NonlinKind::SmoothPhiShift => "smooth_phi_shift",
            NonlinKind::Spline { .. } => return None,
        })
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            NonlinKind::Zero,
            NonlinKind::Linear,
            NonlinKind::Max0,
            NonlinKind::Cube,
            NonlinKind::SmoothPhi,
            NonlinKind::SmoothPhiShift,
        ]
        .into_iter()
        .find(|k| k.name() == Some(name))
    }

    /// Points where the function is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            NonlinKind::Max0 => vec![0.0],
            NonlinKind::Spline { knots, .. } if knots.degree() <= 1 => knots.interior().to_vec(),
            _ => vec![],
        }
    }
}

/// `scale * kind(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinFn {
    pub kind: NonlinKind,
    pub scale: f64,
}

impl NonlinFn {
    pub fn new(kind: NonlinKind, scale: f64) -> Self {
        Self { kind, scale }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.scale * self.kind.eval(x)
    }
}

/// Nonlinear impact of `X_{t-lag}` on `Y` component `equation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impact {
    pub equation: usize,
    pub lag: usize,
    #[serde(rename = "fn")]
    pub func: NonlinFn,
}

impl Impact {
    pub fn new(equation: usize, lag: usize, kind: NonlinKind, scale: f64) -> Self {
        Self { equation, lag, func: NonlinFn::new(kind, scale) }
    }
}

/// `A_1, ..., A_p`, each `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagPolynomial {
    pub coeffs: Vec<DMatrix<f64>>,
}

impl LagPolynomial {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if let Some(first) = coeffs.first() {
            let d = first.nrows();
            if coeffs.iter().any(|m| m.nrows() != d || m.ncols() != d) {
                return Err(Error::DimensionMismatch("lag matrices must all be square of equal size".into()));
            }
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(d: usize, p: usize) -> Self {
        Self { coeffs: vec![DMatrix::zeros(d, d); p] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Companion matrix of the VAR(p) `Z_t = sum_j A_j Z_{t-j}`.
    pub fn companion(&self, d: usize) -> DMatrix<f64> {
        let p = self.order();
        let mut c = DMatrix::zeros(d * p, d * p);
        for (j, a) in self.coeffs.iter().enumerate() {
            c.view_mut((0, j * d), (d, d)).copy_from(a);
        }
        for j in 1..p {
            c.view_mut((j * d, (j - 1) * d), (d, d)).fill_with_identity();
        }
        c
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err("matrix rows must have equal length".into());
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl Serialize for LagPolynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coeffs.iter().map(rows_of).collect::<Vec<_>>().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LagPolynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<Vec<Vec<f64>>> = Vec::deserialize(d)?;
        let coeffs = raw
            .iter()
            .map(|m| matrix_from_rows(m))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        LagPolynomial::new(coeffs).map_err(serde::de::Error::custom)
    }
}

mod matrix_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        rows_of(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let raw: Vec<Vec<f64>> = Vec::deserialize(d)?;
        matrix_from_rows(&raw).map_err(serde::de::Error::custom)
    }
}

mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::deserialize(d)?))
    }
}

/// Clipped Gaussian innovations: `scale_i * clamp(N(0,1), -bound, bound)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Innovation {
    pub bound: f64,
    pub scale: Vec<f64>,
}

impl Innovation {
    pub fn standard(bound: f64, d: usize) -> Self {
        Self { bound, scale: vec![1.0; d] }
    }

    /// Support `[-bound * scale_1, bound * scale_1]` of the structural innovation.
    pub fn structural_support(&self) -> (f64, f64) {
        let s = self.bound * self.scale[0];
        (-s, s)
    }
}

/// Complete generative description of a pseudo-reduced-form model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d_y: usize,
    pub p: usize,
    #[serde(with = "vector")]
    pub mu: DVector<f64>,
    pub a: LagPolynomial,
    #[serde(default)]
    pub impacts: Vec<Impact>,
    #[serde(with = "vector")]
    pub b0_21: DVector<f64>,
    #[serde(with = "matrix_rows")]
    pub xi_loading: DMatrix<f64>,
    pub innovation: Innovation,
}

impl ModelSpec {
    /// Linear model with zero coefficients, identity loading and unit innovations.
    pub fn zeros(d_y: usize, p: usize, bound: f64) -> Self {
        let d = d_y + 1;
        Self {
            d_y,
            p,
            mu: DVector::zeros(d),
            a: LagPolynomial::zeros(d, p),
            impacts: vec![],
            b0_21: DVector::zeros(d_y),
            xi_loading: DMatrix::identity(d_y, d_y),
            innovation: Innovation::standard(bound, d),
        }
    }

    pub fn d(&self) -> usize {
        self.d_y + 1
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.mu.len() != d {
            return bad(format!("mu has length {}, expected {d}", self.mu.len()));
        }
        if self.a.order() != self.p {
            return bad(format!("lag polynomial has {} matrices, expected p = {}", self.a.order(), self.p));
        }
        if self.a.coeffs.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return bad(format!("lag matrices must be {d}x{d}"));
        }
        if self.b0_21.len() != self.d_y {
            return bad(format!("b0_21 has length {}, expected {}", self.b0_21.len(), self.d_y));
        }
        if self.xi_loading.nrows() != self.d_y || self.xi_loading.ncols() != self.d_y {
            return bad(format!("xi_loading must be {0}x{0}", self.d_y));
        }
        if self.innovation.scale.len() != d {
            return bad(format!("innovation scale has length {}, expected {d}", self.innovation.scale.len()));
        }
        if !(self.innovation.bound > 0.0) || self.innovation.scale.iter().any(|s| !(*s >= 0.0)) {
            return bad("innovation bound must be positive and scales non-negative".into());
        }
        for imp in &self.impacts {
            if imp.equation >= self.d_y || imp.lag > self.p {
                return bad(format!("impact (equation {}, lag {}) out of range", imp.equation, imp.lag));
            }
        }
        Ok(())
    }

    /// Non-fatal issues: a linear companion matrix with spectral radius >= 1.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let lin = self.linear_part();
        if lin.p > 0 {
            let r = spectral_radius(&lin.a.companion(lin.d()));
            if r >= 1.0 {
                w.push(format!("companion spectral radius {r:.4} >= 1; the linear part is not stable"));
            }
        }
        w
    }

    /// Linear model obtained by dropping every nonlinear impact except `Linear`
    /// ones, which are folded into `A`, `mu` and `b0_21`.
    pub fn linear_part(&self) -> ModelSpec {
        let mut out = self.clone();
        out.impacts.clear();
        let d = self.d();
        for imp in &self.impacts {
            if imp.func.kind != NonlinKind::Linear {
                continue;
            }
            let (i, s) = (1 + imp.equation, imp.func.scale);
            if imp.lag == 0 {
                // s X_t = s (mu_1 + A_1(L) Z_{t-1} + eps_1t)
                out.mu[i] += s * self.mu[0];
                for (j, a) in self.a.coeffs.iter().enumerate() {
                    for k in 0..d {
                        out.a.coeffs[j][(i, k)] += s * a[(0, k)];
                    }
                }
                out.b0_21[imp.equation] += s;
            } else {
                out.a.coeffs[imp.lag - 1][(i, 0)] += s;
            }
        }
        out
    }

    /// The same model with every nonlinear scale set to zero.
    pub fn without_nonlinear(&self) -> ModelSpec {
        let mut out = self.clone();
        out.impacts.retain(|imp| imp.func.kind == NonlinKind::Linear);
        out
    }

    /// One step of the recursion. `hist` holds `Z_{t-1}, ..., Z_{t-p}` (most recent first),
    /// `xi` the `d_y` non-structural innovations. Writes `Z_t` into `out` and
    /// returns the number of clamped spline evaluations.
    pub fn step(&self, hist: &History, e1: f64, xi: &[f64], out: &mut [f64]) -> usize {
        let d = self.d();
        let mut x = self.mu[0] + e1;
        for (j, a) in self.a.coeffs.iter().enumerate() {
            let z = hist.lag(j + 1);
            for k in 0..d {
                x += a[(0, k)] * z[k];
            }
        }
        out[0] = x;
        for i in 0..self.d_y {
            let r = i + 1;
            let mut y = self.mu[r] + self.b0_21[i] * e1;
            for (j, a) in self.a.coeffs.iter().enumerate() {
                let z = hist.lag(j + 1);
                for k in 0..d {
                    y += a[(r, k)] * z[k];
                }
            }
            for k in 0..self.d_y {
                y += self.xi_loading[(i, k)] * xi[k];
            }
            out[r] = y;
        }
        let mut clamped = 0;
        for imp in &self.impacts {
            let xl = if imp.lag == 0 { x } else { hist.lag(imp.lag)[0] };
            let (v, c) = imp.func.kind.eval_counted(xl);
            out[1 + imp.equation] += imp.func.scale * v;
            clamped += c as usize;
        }
        clamped
    }
}

/// The last `p` states, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    d: usize,
    p: usize,
    buf: Vec<f64>,
}

impl History {
    pub fn zeros(d: usize, p: usize) -> Self {
        Self { d, p, buf: vec![0.0; d * p] }
    }

    /// From rows `t-1, ..., t-p` of a path.
    pub fn from_path(x: &[f64], y: &DMatrix<f64>, t: usize, p: usize) -> Self {
        let d = y.ncols() + 1;
        let mut buf = Vec::with_capacity(d * p);
        for j in 1..=p {
            buf.push(x[t - j]);
            buf.extend(y.row(t - j).iter());
        }
        Self { d, p, buf }
    }

    pub fn lag(&self, j: usize) -> &[f64] {
        &self.buf[(j - 1) * self.d..j * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.buf
    }

    pub fn from_slice(d: usize, p: usize, s: &[f64]) -> Self {
        Self { d, p, buf: s.to_vec() }
    }

    pub fn push(&mut self, z: &[f64]) {
        if self.p == 0 {
            return;
        }
        self.buf.copy_within(0..self.d * (self.p - 1), self.d);
        self.buf[..self.d].copy_from_slice(z);
    }
}

/// Simulated (or ingested) sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub x: Vec<f64>,
    pub y: DMatrix<f64>,
    /// True innovations `(eps_1, xi_2)`; absent for observed data.
    pub eps: Option<DMatrix<f64>>,
    pub seed: u64,
    pub burn_in: usize,
}

impl SimPath {
    pub fn from_data(x: Vec<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.len() != y.nrows() {
            return Err(Error::DimensionMismatch(format!("X has {} rows, Y has {}", x.len(), y.nrows())));
        }
        Ok(Self { x, y, eps: None, seed: 0, burn_in: 0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn d_y(&self) -> usize {
        self.y.ncols()
    }

    /// Columns `t,X,Y1..YdY,eps1..epsd` (innovation columns only when known).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "X".to_string()];
        header.extend((1..=self.d_y()).map(|i| format!("Y{i}")));
        if let Some(e) = &self.eps {
            header.extend((1..=e.ncols()).map(|i| format!("eps{i}")));
        }
        wr.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![t.to_string(), self.x[t].to_string()];
            rec.extend(self.y.row(t).iter().map(f64::to_string));
            if let Some(e) = &self.eps {
                rec.extend(e.row(t).iter().map(f64::to_string));
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Inverse of [`SimPath::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let parse_err = |msg: String| Error::Parse { path: "<simpath>".into(), msg };
        if header.len() < 2 || header[0] != "t" || header[1] != "X" {
            return Err(parse_err("header must start with t,X".into()));
        }
        let d_y = header.iter().filter(|h| h.starts_with('Y')).count();
        let n_eps = header.iter().filter(|h| h.starts_with("eps")).count();
        if 2 + d_y + n_eps != header.len() || (n_eps != 0 && n_eps != d_y + 1) {
            return Err(parse_err(format!("unexpected columns {header:?}")));
        }
        let mut x = Vec::new();
        let mut ys = Vec::new();
        let mut es = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            x.push(vals[0]);
            ys.extend_from_slice(&vals[1..1 + d_y]);
            es.extend_from_slice(&vals[1 + d_y..]);
        }
        let n = x.len();
        let y = DMatrix::from_row_slice(n, d_y, &ys);
        let eps = (n_eps > 0).then(|| DMatrix::from_row_slice(n, n_eps, &es));
        Ok(Self { x, y, eps, seed: 0, burn_in: 0 })
    }
}

/// `n x d` clipped-Gaussian innovations; column `i` comes from stream `i` of `seed`.
pub fn draw_innovations(spec: &ModelSpec, n: usize, seed: u64) -> DMatrix<f64> {
    let c = spec.innovation.bound;
    let mut m = DMatrix::zeros(n, spec.d());
    for (i, &sigma) in spec.innovation.scale.iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        for t in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            m[(t, i)] = sigma * e.clamp(-c, c);
        }
    }
    m
}

/// Iterate the model over given innovations, starting from `hist`.
/// Returns the states and the clamped-evaluation count.
pub fn iterate(spec: &ModelSpec, mut hist: History, eps: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let n = eps.nrows();
    let d = spec.d();
    let mut z = DMatrix::zeros(n, d);
    let mut cur = vec![0.0; d];
    let mut xi = vec![0.0; spec.d_y];
    let mut clamped = 0;
    for t in 0..n {
        for k in 0..spec.d_y {
            xi[k] = eps[(t, k + 1)];
        }
        clamped += spec.step(&hist, eps[(t, 0)], &xi, &mut cur);
        if cur.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(Error::PathDiverged { step: t });
        }
        for k in 0..d {
            z[(t, k)] = cur[k];
        }
        hist.push(&cur);
    }
    Ok((z, clamped))
}

/// Simulate `n` observations after `burn_in` discarded steps from a zero initial state.
pub fn simulate(spec: &ModelSpec, n: usize, seed: u64, burn_in: usize) -> Result<SimPath> {
    spec.validate()?;
    if n < spec.p + 1 {
        return Err(Error::InvalidConfig(format!("n = {n} must be at least p + 1 = {}", spec.p + 1)));
    }
    let eps = draw_innovations(spec, n + burn_in, seed);
    let (z, _) = iterate(spec, History::zeros(spec.d(), spec.p), &eps)?;
    let kept = z.rows(burn_in, n);
    Ok(SimPath {
        x: kept.column(0).iter().copied().collect(),
        y: kept.columns(1, spec.d_y).clone_owned(),
        eps: Some(eps.rows(burn_in, n).clone_owned()),
        seed,
        burn_in,
    })
}

/// A state drawn from (approximately) the stationary law: the last `p` states after `burn_in` steps.
pub fn stationary_history(spec: &ModelSpec, seed: u64, burn_in: usize) -> Result<History> {
    let eps = draw_innovations(spec, burn_in.max(spec.p), seed);
    Ok(iterate_history(spec, &eps)?.0)
}

/// Run the recursion from a zero state over `eps`, keeping only the final history.
pub fn iterate_history(spec: &ModelSpec, eps: &DMatrix<f64>) -> Result<(History, usize)> {
    let d = spec.d();
    let mut hist = History::zeros(d, spec.p);
    let mut cur = vec![0.0; d];
    let mut xi = vec![0.0; spec.d_y];
    let mut clamped = 0;
    for t in 0..eps.nrows() {
        for k in 0..spec.d_y {
            xi[k] = eps[(t, k + 1)];
        }
        clamped += spec.step(&hist, eps[(t, 0)], &xi, &mut cur);
        if cur.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(Error::PathDiverged { step: t });
        }
        hist.push(&cur);
    }
    Ok((hist, clamped))
}

/// Structural form `B0 Z_t = B1 Z_{t-1} + C0 f(X_t) + C1 f(X_{t-1}) + eps_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralSpec {
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub c0: DVector<f64>,
    pub c1: DVector<f64>,
    pub f: NonlinKind,
    pub innovation: Innovation,
}

impl StructuralSpec {
    fn check(&self) -> Result<()> {
        let d = self.b0.nrows();
        if (0..d).any(|k| self.b0[(0, k)] != if k == 0 { 1.0 } else { 0.0 }) || self.c0[0] != 0.0 {
            return Err(Error::InvalidConfig(
                "structural form must be block recursive: first row of B0 = e1', C0[0] = 0".into(),
            ));
        }
        Ok(())
    }

    /// Left-multiply by `B0^{-1}`.
    pub fn to_pseudo_reduced(&self) -> Result<ModelSpec> {
        self.check()?;
        let d = self.b0.nrows();
        let d_y = d - 1;
        let inv = self
            .b0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("B0 is singular".into()))?;
        let a1 = &inv * &self.b1;
        let g0 = &inv * &self.c0;
        let g1 = &inv * &self.c1;
        let mut impacts = Vec::new();
        for i in 0..d_y {
            impacts.push(Impact::new(i, 0, self.f.clone(), g0[i + 1]));
            impacts.push(Impact::new(i, 1, self.f.clone(), g1[i + 1]));
        }
        Ok(ModelSpec {
            d_y,
            p: 1,
            mu: DVector::zeros(d),
            a: LagPolynomial::new(vec![a1])?,
            impacts,
            b0_21: inv.view((1, 0), (d_y, 1)).column(0).clone_owned(),
            xi_loading: inv.view((1, 1), (d_y, d_y)).clone_owned(),
            innovation: self.innovation.clone(),
        })
    }

    /// Direct simulation solving the structural system each step.
    pub fn iterate(&self, eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check()?;
        let d = self.b0.nrows();
        let lower = self.b0.view((1, 1), (d - 1, d - 1)).clone_owned().lu();
        let mut prev = DVector::<f64>::zeros(d);
        let mut z = DMatrix::zeros(eps.nrows(), d);
        for t in 0..eps.nrows() {
            let lagged = &self.b1 * &prev;
            let x = lagged[0] + eps[(t, 0)];
            let fx = self.f.eval(x);
            let fx1 = self.f.eval(prev[0]);
            let rhs = DVector::from_fn(d - 1, |i, _| {
                let r = i + 1;
                lagged[r] - self.b0[(r, 0)] * x + self.c0[r] * fx + self.c1[r] * fx1 + eps[(t, r)]
            });
            let y = lower.solve(&rhs).ok_or_else(|| Error::InvalidConfig("B0 is singular".into()))?;
            z[(t, 0)] = x;
            z.view_mut((t, 1), (1, d - 1)).copy_from(&y.transpose());
            if z.row(t).iter().any(|v| !v.is_finite()) {
                return Err(Error::PathDiverged { step: t });
            }
            prev = z.row(t).transpose();
        }
        Ok(z)
    }
}

fn structural_b0() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, -0.45, 1.0, -0.3, -0.05, 0.1, 1.0])
}

/// Structural form of DGPs 4 to 6.
pub fn structural_dgp(id: u8) -> Result<StructuralSpec> {
    let x_row: [f64; 3] = match id {
        4 => [0.0, 0.0, 0.0],
        5 => [-0.13, 0.0, 0.0],
        6 => [-0.13, 0.05, -0.01],
        _ => return Err(Error::UnknownDgp(id)),
    };
    let mut b1 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.15, 0.17, -0.18, -0.08, 0.03, 0.6]);
    b1.row_mut(0).copy_from_slice(&x_row);
    Ok(StructuralSpec {
        b0: structural_b0(),
        b1,
        c0: DVector::from_vec(vec![0.0, -0.2, 0.08]),
        c1: DVector::from_vec(vec![0.0, -0.1, 0.2]),
        f: NonlinKind::Max0,
        innovation: Innovation::standard(3.0, 3),
    })
}

fn bivariate(x_coef: f64, x_on_y: f64) -> ModelSpec {
    let mut s = ModelSpec::zeros(1, 1, 3.0);
    s.a.coeffs[0] = DMatrix::from_row_slice(2, 2, &[x_coef, x_on_y, 0.3, 0.5]);
    s.impacts = vec![
        Impact::new(0, 0, NonlinKind::Linear, 0.5),
        Impact::new(0, 0, NonlinKind::Max0, -0.4),
        Impact::new(0, 1, NonlinKind::Max0, 0.3),
    ];
    s
}

fn smooth_dgp(kind: NonlinKind) -> ModelSpec {
    let mut s = ModelSpec::zeros(1, 1, 5.0);
    s.a.coeffs[0] = DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.5]);
    s.impacts = vec![Impact::new(0, 0, kind.clone(), 0.9), Impact::new(0, 1, kind, 0.5)];
    s
}

/// Built-in benchmark designs 1 to 7.
pub fn builtin_dgp(id: u8) -> Result<ModelSpec> {
    match id {
        1 => Ok(bivariate(0.0, 0.0)),
        2 => Ok(bivariate(0.5, 0.0)),
        3 => Ok(bivariate(0.5, 0.2)),
        4..=6 => structural_dgp(id)?.to_pseudo_reduced(),
        7 => Ok(smooth_dgp(NonlinKind::SmoothPhi)),
        _ => Err(Error::UnknownDgp(id)),
    }
}

/// Design 7 with `phi(x)` replaced by `phi(x + 1)`.
pub fn dgp7_phi_shift() -> ModelSpec {
    smooth_dgp(NonlinKind::SmoothPhiShift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn innovations_clipped_and_centered() {
        let spec = ModelSpec::zeros(1, 1, 3.0);
        let e = draw_innovations(&spec, 100_000, 11);
        let col = e.column(0);
        let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(max, 3.0);
        assert!(col.iter().filter(|v| v.abs() == 3.0).count() > 0);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 0.02);
    }

    #[test]
    fn zero_scale_innovations() {
        let mut spec = ModelSpec::zeros(1, 1, 3.0);
        spec.innovation.scale = vec![0.0, 0.0];
        assert!(draw_innovations(&spec, 50, 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn innovations_deterministic() {
        let spec = builtin_dgp(4).unwrap();
        assert_eq!(draw_innovations(&spec, 300, 9), draw_innovations(&spec, 300, 9));
        assert_ne!(draw_innovations(&spec, 300, 9), draw_innovations(&spec, 300, 10));
    }

    #[test]
    fn zero_model_reproduces_innovations() {
        let spec = ModelSpec::zeros(2, 2, 3.0);
        let path = simulate(&spec, 100, 3, 20).unwrap();
        let eps = path.eps.as_ref().unwrap();
        for t in 0..100 {
            assert_eq!(path.x[t], eps[(t, 0)]);
            assert_eq!(path.y[(t, 0)], eps[(t, 1)]);
            assert_eq!(path.y[(t, 1)], eps[(t, 2)]);
        }
    }

    #[test]
    fn dgp1_x_is_innovation() {
        let path = simulate(&builtin_dgp(1).unwrap(), 500, 5, DEFAULT_BURN_IN).unwrap();
        let eps = path.eps.unwrap();
        assert!(path.x.iter().enumerate().all(|(t, &x)| x == eps[(t, 0)]));
    }

    #[test]
    fn dgp2_ar1_moments() {
        let path = simulate(&builtin_dgp(2).unwrap(), 100_000, 21, DEFAULT_BURN_IN).unwrap();
        let n = path.x.len() as f64;
        let mean = path.x.iter().sum::<f64>() / n;
        let var = path.x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let cov = path.x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!((cov / var - 0.5).abs() < 0.02);
    }

    #[test]
    fn builtin_coefficients() {
        let s2 = builtin_dgp(2).unwrap();
        assert_eq!(s2.a.coeffs[0][(0, 0)], 0.5);
        assert_eq!(s2.a.coeffs[0][(1, 1)], 0.5);
        assert_eq!(s2.a.coeffs[0][(1, 0)], 0.3);
        let scales: Vec<(usize, f64)> = s2.impacts.iter().map(|i| (i.lag, i.func.scale)).collect();
        assert_eq!(scales, vec![(0, 0.5), (0, -0.4), (1, 0.3)]);
        let s7 = builtin_dgp(7).unwrap();
        assert_eq!(s7.a.coeffs[0][(0, 0)], 0.8);
        assert!(s7.impacts.iter().all(|i| i.func.kind == NonlinKind::SmoothPhi));
        assert_eq!(s7.impacts.iter().map(|i| i.func.scale).collect::<Vec<_>>(), vec![0.9, 0.5]);
        assert_eq!(s7.innovation.bound, 5.0);
        assert!(matches!(builtin_dgp(8), Err(Error::UnknownDgp(8))));
        assert!(matches!(builtin_dgp(0), Err(Error::UnknownDgp(0))));
    }

    #[test]
    fn dgp4_b0_21_matches_inverse() {
        // Oracle: Gauss-Jordan inversion of B0, independent of the nalgebra path.
        let b0 = [[1.0, 0.0, 0.0], [-0.45, 1.0, -0.3], [-0.05, 0.1, 1.0]];
        let mut aug = [[0.0f64; 6]; 3];
        for i in 0..3 {
            aug[i][..3].copy_from_slice(&b0[i]);
            aug[i][3 + i] = 1.0;
        }
        for c in 0..3 {
            let piv = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..3 {
                if r != c {
                    let f = aug[r][c];
                    for k in 0..6 {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        let s = builtin_dgp(4).unwrap();
        assert_abs_diff_eq!(s.b0_21[0], aug[1][3], epsilon = 1e-14);
        assert_abs_diff_eq!(s.b0_21[1], aug[2][3], epsilon = 1e-14);
    }

    #[test]
    fn structural_equivalence() {
        for id in 4..=6 {
            let st = structural_dgp(id).unwrap();
            let pr = st.to_pseudo_reduced().unwrap();
            let eps = draw_innovations(&pr, 5000, 40 + id as u64);
            let direct = st.iterate(&eps).unwrap();
            let (reduced, _) = iterate(&pr, History::zeros(3, 1), &eps).unwrap();
            let diff = (&direct - &reduced).abs().max();
            assert!(diff < 1e-10, "dgp {id}: {diff}");
        }
    }

    #[test]
    fn builtins_bounded_long_run() {
        for id in 1..=7 {
            let spec = builtin_dgp(id).unwrap();
            let path = simulate(&spec, 1_000_000, 77, DEFAULT_BURN_IN).unwrap();
            let max = path.x.iter().chain(path.y.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max.is_finite() && max < 1e3, "dgp {id}: {max}");
        }
    }

    #[test]
    fn simulate_deterministic() {
        let spec = builtin_dgp(3).unwrap();
        assert_eq!(simulate(&spec, 240, 8, 500).unwrap(), simulate(&spec, 240, 8, 500).unwrap());
    }

    #[test]
    fn divergence_reports_step() {
        let mut spec = ModelSpec::zeros(1, 1, 3.0);
        spec.a.coeffs[0][(0, 0)] = 50.0;
        assert!(matches!(simulate(&spec, 400, 1, 0), Err(Error::PathDiverged { .. })));
        assert!(!spec.warnings().is_empty());
    }

    #[test]
    fn linear_part_of_dgp2() {
        let lin = builtin_dgp(2).unwrap().linear_part();
        assert!(lin.impacts.is_empty());
        assert_eq!(lin.b0_21[0], 0.5);
        assert_abs_diff_eq!(lin.a.coeffs[0][(1, 0)], 0.55, epsilon = 1e-15);
    }

    #[test]
    fn history_shift() {
        let mut h = History::zeros(2, 3);
        h.push(&[1.0, 2.0]);
        h.push(&[3.0, 4.0]);
        assert_eq!(h.lag(1), &[3.0, 4.0]);
        assert_eq!(h.lag(2), &[1.0, 2.0]);
        assert_eq!(h.lag(3), &[0.0, 0.0]);
    }

    #[test]
    fn simpath_csv_round_trip() {
        let path = simulate(&builtin_dgp(5).unwrap(), 50, 2, 10).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,X,Y1,Y2,eps1,eps2,eps3\n"));
        let back = SimPath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.x, path.x);
        assert_eq!(back.y, path.y);
        assert_eq!(back.eps, path.eps);
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = builtin_dgp(6).unwrap();
        let text = toml::to_string(&spec).unwrap();
        let back: ModelSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert!(toml::from_str::<ModelSpec>(&format!("{text}\nbogus = 1\n")).is_err());
    }
}
