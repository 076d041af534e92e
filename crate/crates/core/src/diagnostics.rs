//! Numeric dependence and stability diagnostics: coupled-simulation physical
//! dependence, geometric-decay fits and finite-difference Lipschitz estimates
//! of the state map. Every supremum is replaced by a maximum over samples, so
//! reported constants are lower bounds.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::model::{draw_innovations, iterate_history, History, ModelSpec};
use crate::rng::{ordered_sum, replication_seed};

const DIAG_BURN_IN: usize = 500;
const FD_STEP: f64 = 1e-5;
const KINK_BAND: f64 = 1e-4;
/// A map counts as contractive when its sampled Lipschitz constant is below `1 - CONTRACTION_MARGIN`.
pub const CONTRACTION_MARGIN: f64 = 1e-3;

/// `a1 exp(-a2 h^tau)` fitted to `log delta_hat` by least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmcFit {
    pub a1: f64,
    pub a2: f64,
    pub tau: f64,
    /// Root mean squared residual on the log scale.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceProfile {
    pub r: f64,
    pub h_max: usize,
    /// `delta_hat[h - 1]` for `h = 1..=h_max`, Euclidean norm over all variables.
    pub delta_hat: Vec<f64>,
    /// Per-variable profiles, `component[k][h - 1]`.
    pub component: Vec<Vec<f64>>,
    pub fit: Option<GmcFit>,
    pub replications: usize,
}

impl DependenceProfile {
    /// Rows `h,delta_r`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["h", "delta_r"])?;
        for (i, v) in self.delta_hat.iter().enumerate() {
            wr.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "physical dependence (r = {}, {} coupled replications)", self.r, self.replications);
        match &self.fit {
            Some(f) => {
                let _ = writeln!(s, "  fit delta_r(h) ~ a1 exp(-a2 h^tau): a1 = {:.6}, a2 = {:.6}, tau = {}", f.a1, f.a2, f.tau);
                let _ = writeln!(s, "  log-scale rms residual = {:.3e} over {} horizons", f.residual, f.points);
            }
            None => {
                let _ = writeln!(s, "  fit unavailable: fewer than two positive horizons");
            }
        }
        s
    }
}

/// Least-squares fit of `log v_h = log a1 - a2 h^tau` over the positive entries.
pub fn fit_gmc(delta_hat: &[f64], tau: f64) -> Option<GmcFit> {
    let pts: Vec<(f64, f64)> = delta_hat
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > f64::MIN_POSITIVE && v.is_finite())
        .map(|(i, &v)| (((i + 1) as f64).powf(tau), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Some(GmcFit { a1: intercept.exp(), a2: -slope, tau, residual, points: pts.len() })
}

/// Coupled-simulation estimate of `Delta_r(h)`: a stationary state and an
/// independent copy are iterated forward with shared innovations.
pub fn estimate_delta_r(spec: &ModelSpec, r: f64, h_max: usize, replications: usize, seed: u64) -> Result<DependenceProfile> {
    estimate_delta_r_tau(spec, r, h_max, replications, seed, 1.0)
}

pub fn estimate_delta_r_tau(
    spec: &ModelSpec,
    r: f64,
    h_max: usize,
    replications: usize,
    seed: u64,
    tau: f64,
) -> Result<DependenceProfile> {
    spec.validate()?;
    if replications < 100 {
        return Err(Error::InvalidConfig(format!("need at least 100 coupling replications, got {replications}")));
    }
    if !(r >= 1.0) || h_max == 0 {
        return Err(Error::InvalidConfig("moment order must be >= 1 and h_max >= 1".into()));
    }
    let d = spec.d();
    let width = h_max * (d + 1);
    let items: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|k| {
            let s = replication_seed(seed, k as u64);
            let (z, _) = iterate_history(spec, &draw_innovations(spec, DIAG_BURN_IN, replication_seed(s, 0)))?;
            let (zc, _) = iterate_history(spec, &draw_innovations(spec, DIAG_BURN_IN, replication_seed(s, 1)))?;
            let future = draw_innovations(spec, h_max, replication_seed(s, 2));
            let a = forward(spec, z, &future)?;
            let b = forward(spec, zc, &future)?;
            let mut item = vec![0.0; width];
            for h in 0..h_max {
                let mut sq = 0.0;
                for c in 0..d {
                    let diff = (a[(h, c)] - b[(h, c)]).abs();
                    sq += diff * diff;
                    item[h * (d + 1) + 1 + c] = diff.powf(r);
                }
                item[h * (d + 1)] = sq.sqrt().powf(r);
            }
            Ok(item)
        })
        .collect::<Result<_>>()?;
    let sums = ordered_sum(&items, width);
    let n = replications as f64;
    let root = |v: f64| (v / n).powf(1.0 / r);
    let delta_hat: Vec<f64> = (0..h_max).map(|h| root(sums[h * (d + 1)])).collect();
    let component = (0..d).map(|c| (0..h_max).map(|h| root(sums[h * (d + 1) + 1 + c])).collect()).collect();
    Ok(DependenceProfile { r, h_max, fit: fit_gmc(&delta_hat, tau), delta_hat, component, replications })
}

fn forward(spec: &ModelSpec, mut hist: History, eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = spec.d();
    let mut out = DMatrix::zeros(eps.nrows(), d);
    let mut cur = vec![0.0; d];
    let mut xi = vec![0.0; spec.d_y];
    for t in 0..eps.nrows() {
        for k in 0..spec.d_y {
            xi[k] = eps[(t, k + 1)];
        }
        spec.step(&hist, eps[(t, 0)], &xi, &mut cur);
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::PathDiverged { step: t });
        }
        for k in 0..d {
            out[(t, k)] = cur[k];
        }
        hist.push(&cur);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub contractive: bool,
    /// Sampled one-step Lipschitz constant in the state.
    pub c_z: f64,
    /// Sampled one-step Lipschitz constant in the innovations.
    pub c_eps: f64,
    /// Smallest `h` whose sampled `h`-step constant is below `1 - CONTRACTION_MARGIN`.
    pub h_star: Option<usize>,
    /// Sampled `h`-step constants for `h = 1..=h_cap` (just `c_z` for the one-step check).
    pub lipschitz: Vec<f64>,
    pub samples: usize,
}

impl StabilityReport {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "stability (max over {} sampled states, lower bounds)", self.samples);
        let _ = writeln!(s, "  C_Z = {:.6} ({}contractive)", self.c_z, if self.contractive { "" } else { "not " });
        let _ = writeln!(s, "  C_eps = {:.6}", self.c_eps);
        match self.h_star {
            Some(h) => {
                let _ = writeln!(s, "  h_star = {h}");
            }
            None => {
                let _ = writeln!(s, "  h_star not found up to {}", self.lipschitz.len());
            }
        }
        let seq: Vec<String> = self.lipschitz.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "  h-step constants: {}", seq.join(", "));
        s
    }
}

/// Flattened state: `p` lags of `Z`, most recent first.
fn advance(spec: &ModelSpec, state: &[f64], e: &[f64]) -> Vec<f64> {
    let d = spec.d();
    let mut hist = History::from_slice(d, spec.p, state);
    let mut cur = vec![0.0; d];
    spec.step(&hist, e[0], &e[1..], &mut cur);
    if spec.p == 0 {
        return cur;
    }
    hist.push(&cur);
    hist.as_slice().to_vec()
}

fn state_dim(spec: &ModelSpec) -> usize {
    spec.d() * spec.p.max(1)
}

fn advance_n(spec: &ModelSpec, state: &[f64], eps: &DMatrix<f64>, out: &mut Vec<Vec<f64>>) {
    out.clear();
    let mut s = state.to_vec();
    for t in 0..eps.nrows() {
        let e: Vec<f64> = eps.row(t).iter().copied().collect();
        s = advance(spec, &s, &e);
        out.push(s.clone());
    }
}

/// Is any kinked argument of the map within `KINK_BAND` of its kink along this trajectory?
fn near_kink(spec: &ModelSpec, state: &[f64], eps: &DMatrix<f64>) -> bool {
    let kinks: Vec<f64> = spec.impacts.iter().flat_map(|i| i.func.kind.kinks()).collect();
    if kinks.is_empty() {
        return false;
    }
    let d = spec.d();
    let mut xs: Vec<f64> = (0..spec.p).map(|j| state[j * d]).collect();
    let mut traj = Vec::new();
    advance_n(spec, state, eps, &mut traj);
    xs.extend(traj.iter().map(|s| s[0]));
    xs.iter().any(|x| kinks.iter().any(|k| (x - k).abs() < KINK_BAND))
}

/// `h`-step Jacobians `d F^h / d z` for `h = 1..=eps.nrows()`, finite differences with
/// `mode` -1 (backward), 0 (central) or +1 (forward).
fn state_jacobians(spec: &ModelSpec, state: &[f64], eps: &DMatrix<f64>, mode: i8) -> Vec<DMatrix<f64>> {
    let m = state_dim(spec);
    let hs = eps.nrows();
    let mut jac = vec![DMatrix::zeros(m, m); hs];
    let (mut up, mut down) = (Vec::new(), Vec::new());
    for j in 0..m {
        let step = FD_STEP * state[j].abs().max(1.0);
        let mut plus = state.to_vec();
        let mut minus = state.to_vec();
        let (hp, hm) = match mode {
            1 => (step, 0.0),
            -1 => (0.0, step),
            _ => (step, step),
        };
        plus[j] += hp;
        minus[j] -= hm;
        advance_n(spec, &plus, eps, &mut up);
        advance_n(spec, &minus, eps, &mut down);
        for h in 0..hs {
            for i in 0..m {
                jac[h][(i, j)] = (up[h][i] - down[h][i]) / (hp + hm);
            }
        }
    }
    jac
}

fn innovation_jacobian(spec: &ModelSpec, state: &[f64], e: &[f64]) -> DMatrix<f64> {
    let m = state_dim(spec);
    let d = e.len();
    let mut jac = DMatrix::zeros(m, d);
    for j in 0..d {
        let step = FD_STEP * e[j].abs().max(1.0);
        let mut plus = e.to_vec();
        let mut minus = e.to_vec();
        plus[j] += step;
        minus[j] -= step;
        let a = advance(spec, state, &plus);
        let b = advance(spec, state, &minus);
        for i in 0..m {
            jac[(i, j)] = (a[i] - b[i]) / (2.0 * step);
        }
    }
    jac
}

/// Sample `k` of the diagnostic design: stationary draws for `k < samples`
/// plus a fixed grid along each state axis. Seeds depend only on `k`, so a
/// larger `samples` extends the earlier sample set.
fn sample_state(spec: &ModelSpec, seed: u64, k: usize, horizon: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let s = replication_seed(seed, k as u64);
    let (hist, _) = iterate_history(spec, &draw_innovations(spec, DIAG_BURN_IN, replication_seed(s, 0)))?;
    let mut state = hist.as_slice().to_vec();
    state.resize(state_dim(spec), 0.0);
    Ok((state, draw_innovations(spec, horizon, replication_seed(s, 1))))
}

fn grid_states(spec: &ModelSpec, horizon: usize) -> Vec<(Vec<f64>, DMatrix<f64>)> {
    let m = state_dim(spec);
    let bound = spec.innovation.bound * spec.innovation.scale.iter().cloned().fold(0.0, f64::max).max(1.0);
    let zero_eps = DMatrix::zeros(horizon, spec.d());
    let mut out = vec![(vec![0.0; m], zero_eps.clone())];
    for axis in 0..m {
        for level in [-1.0, -0.5, 0.5, 1.0] {
            let mut s = vec![0.0; m];
            s[axis] = level * bound;
            out.push((s, zero_eps.clone()));
        }
    }
    out
}

fn max_norms(spec: &ModelSpec, state: &[f64], eps: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let mut norms: Vec<f64> = state_jacobians(spec, state, eps, 0).iter().map(spectral_norm).collect();
    if near_kink(spec, state, eps) {
        for mode in [-1i8, 1] {
            for (n, j) in norms.iter_mut().zip(state_jacobians(spec, state, eps, mode)) {
                *n = n.max(spectral_norm(&j));
            }
        }
    }
    let e: Vec<f64> = eps.row(0).iter().copied().collect();
    let c_eps = spectral_norm(&innovation_jacobian(spec, state, &e));
    (norms, c_eps)
}

fn stability(spec: &ModelSpec, h_cap: usize, samples: usize, seed: u64) -> Result<StabilityReport> {
    spec.validate()?;
    if h_cap == 0 {
        return Err(Error::InvalidConfig("h_cap must be at least 1".into()));
    }
    let mut points = grid_states(spec, h_cap);
    let drawn: Vec<(Vec<f64>, DMatrix<f64>)> = (0..samples)
        .into_par_iter()
        .map(|k| sample_state(spec, seed, k, h_cap))
        .collect::<Result<_>>()?;
    points.extend(drawn);
    let results: Vec<(Vec<f64>, f64)> = points.par_iter().map(|(s, e)| max_norms(spec, s, e)).collect();
    let mut lipschitz = vec![0.0f64; h_cap];
    let mut c_eps = 0.0f64;
    for (norms, ce) in &results {
        for (l, n) in lipschitz.iter_mut().zip(norms) {
            *l = l.max(*n);
        }
        c_eps = c_eps.max(*ce);
    }
    let threshold = 1.0 - CONTRACTION_MARGIN;
    let c_z = lipschitz[0];
    Ok(StabilityReport {
        contractive: c_z < threshold,
        c_z,
        c_eps,
        h_star: lipschitz.iter().position(|&l| l < threshold).map(|i| i + 1),
        lipschitz,
        samples: points.len(),
    })
}

/// One-step contractivity of the state map.
pub fn check_contractivity(spec: &ModelSpec, samples: usize, seed: u64) -> Result<StabilityReport> {
    stability(spec, 1, samples, seed)
}

/// Smallest `h <= h_cap` whose sampled `h`-step Lipschitz constant is below one.
pub fn find_h_star(spec: &ModelSpec, h_cap: usize, samples: usize, seed: u64) -> Result<StabilityReport> {
    stability(spec, h_cap, samples, seed)
}

/// Scalar autoregression `X_t = sum_j b_j X_{t-j} + eps_t` with standard clipped innovations.
pub fn scalar_ar(coeffs: &[f64], bound: f64) -> ModelSpec {
    let mut spec = ModelSpec::zeros(0, coeffs.len(), bound);
    for (j, &b) in coeffs.iter().enumerate() {
        spec.a.coeffs[j][(0, 0)] = b;
    }
    spec
}
