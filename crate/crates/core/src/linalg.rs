//! Least squares through a column-pivoted Householder QR.
//!
//! Pivots are chosen from freshly computed trailing column norms at every
//! step, so the factorization only depends on the *set* of columns: permuting
//! the input columns permutes the solution and leaves residuals bit-identical.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold on `lambda_min / lambda_max` of the Gram matrix below
/// which the ridge fallback kicks in.
pub const RIDGE_TRIGGER: f64 = 1e-10;
/// Ridge weight as a fraction of `trace(X'X) / k`.
pub const RIDGE_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Householder vectors below the diagonal (unit leading entry implied), R on and above.
    packed: DMatrix<f64>,
    tau: Vec<f64>,
    /// `perm[k]` is the original index of the k-th pivoted column.
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut packed = a.clone();
        let steps = m.min(n);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..steps {
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let s: f64 = packed.view((k, j), (m - k, 1)).iter().map(|v| v * v).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                packed.swap_columns(k, best);
                perm.swap(k, best);
            }

            let norm = best_norm.sqrt();
            if norm == 0.0 {
                tau[k] = 0.0;
                continue;
            }
            let x0 = packed[(k, k)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let v0 = x0 - alpha;
            // v = x - alpha e1, rescaled so that v[0] = 1
            for i in k + 1..m {
                packed[(i, k)] /= v0;
            }
            let vtv: f64 = 1.0 + (k + 1..m).map(|i| packed[(i, k)] * packed[(i, k)]).sum::<f64>();
            let t = 2.0 / vtv;
            tau[k] = t;
            packed[(k, k)] = alpha;

            for j in k + 1..n {
                let mut dot = packed[(k, j)];
                for i in k + 1..m {
                    dot += packed[(i, k)] * packed[(i, j)];
                }
                let s = t * dot;
                packed[(k, j)] -= s;
                for i in k + 1..m {
                    let vi = packed[(i, k)];
                    packed[(i, j)] -= s * vi;
                }
            }
        }
        Self { packed, tau, perm }
    }

    pub fn ncols(&self) -> usize {
        self.packed.ncols()
    }

    /// Absolute diagonal of R in pivot order.
    pub fn r_diag(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|k| self.packed[(k, k)].abs()).collect()
    }

    /// Numerical rank under `(r_kk / r_00)^2 >= tol`.
    pub fn rank(&self, tol: f64) -> usize {
        let d = self.r_diag();
        if d.is_empty() || d[0] == 0.0 {
            return 0;
        }
        d.iter().take_while(|&&r| (r / d[0]).powi(2) >= tol).count()
    }

    fn apply_qt(&self, y: &mut [f64]) {
        let m = y.len();
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let mut dot = y[k];
            for i in k + 1..m {
                dot += self.packed[(i, k)] * y[i];
            }
            let s = t * dot;
            y[k] -= s;
            for i in k + 1..m {
                y[i] -= s * self.packed[(i, k)];
            }
        }
    }

    fn apply_q(&self, y: &mut [f64]) {
        let m = y.len();
        for (k, &t) in self.tau.iter().enumerate().rev() {
            if t == 0.0 {
                continue;
            }
            let mut dot = y[k];
            for i in k + 1..m {
                dot += self.packed[(i, k)] * y[i];
            }
            let s = t * dot;
            y[k] -= s;
            for i in k + 1..m {
                y[i] -= s * self.packed[(i, k)];
            }
        }
    }

    /// Full-rank least-squares solve; returns (coefficients, residuals).
    pub fn solve(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.ncols();
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut z = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = qty[k];
            for j in k + 1..n {
                s -= self.packed[(k, j)] * z[j];
            }
            z[k] = s / self.packed[(k, k)];
        }
        let mut beta = vec![0.0; n];
        for (k, &orig) in self.perm.iter().enumerate() {
            beta[orig] = z[k];
        }
        let mut resid = qty;
        resid[..n].iter_mut().for_each(|v| *v = 0.0);
        self.apply_q(&mut resid);
        (beta, resid)
    }
}

/// Least-squares fit shared by both estimation stages.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    qr: PivotedQr,
    regularized: Option<(DMatrix<f64>, PivotedQr)>,
    pub rank: usize,
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if n <= k {
            return Err(Error::Underdetermined { rows: n, cols: k });
        }
        let qr = PivotedQr::new(x);
        let rank = qr.rank(RIDGE_TRIGGER);
        let regularized = if rank < k {
            let trace: f64 = x.iter().map(|v| v * v).sum();
            let lambda = RIDGE_WEIGHT * trace / k as f64;
            let mut aug = DMatrix::zeros(n + k, k);
            aug.view_mut((0, 0), (n, k)).copy_from(x);
            for j in 0..k {
                aug[(n + j, j)] = lambda.sqrt();
            }
            let aqr = PivotedQr::new(&aug);
            Some((x.clone(), aqr))
        } else {
            None
        };
        Ok(Self { qr, regularized, rank })
    }

    pub fn is_regularized(&self) -> bool {
        self.regularized.is_some()
    }

    pub fn solve(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match &self.regularized {
            None => self.qr.solve(y),
            Some((x, aqr)) => {
                let k = x.ncols();
                let mut yaug = y.to_vec();
                yaug.extend(std::iter::repeat_n(0.0, k));
                let (beta, _) = aqr.solve(&yaug);
                let fitted = x * DVector::from_column_slice(&beta);
                let resid = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
                (beta, resid)
            }
        }
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}
