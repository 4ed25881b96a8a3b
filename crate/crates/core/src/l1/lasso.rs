use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Result, TedError};

const MAX_SWEEPS: usize = 100_000;
const UPDATE_TOL: f64 = 1e-10;
const KKT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: Array1<f64>,
    pub rss: f64,
    pub sweeps: usize,
    pub kkt_violation: f64,
}

impl LassoFit {
    pub fn df(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

/// Cyclic coordinate descent for `Σ (y_i − x_iᵀβ)² + λ‖β‖₁` (plain residual
/// sum of squares, no ½ or 1/m factor).
#[derive(Debug, Clone)]
pub struct LassoSolver {
    cols: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
    y: Vec<f64>,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl LassoSolver {
    pub fn new(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(TedError::Argument(format!(
                "design has {} rows but response has length {}",
                x.nrows(),
                y.len()
            )));
        }
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let sq_norms = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        Ok(LassoSolver { cols, sq_norms, y: y.to_vec() })
    }

    pub fn p(&self) -> usize {
        self.cols.len()
    }

    fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for (c, &b) in self.cols.iter().zip(beta) {
            if b != 0.0 {
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= ci * b;
                }
            }
        }
        r
    }

    /// Fit at `lambda`, optionally starting from `init` (pathwise warm start).
    pub fn fit(&self, lambda: f64, init: Option<&Array1<f64>>) -> Result<LassoFit> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(TedError::Argument(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let p = self.p();
        let mut beta: Vec<f64> = match init {
            Some(b) if b.len() == p => b.to_vec(),
            _ => vec![0.0; p],
        };
        let mut r = self.residual(&beta);
        let half = 0.5 * lambda;
        for sweep in 1..=MAX_SWEEPS {
            let mut max_step = 0.0_f64;
            for j in 0..p {
                let nj = self.sq_norms[j];
                if nj == 0.0 {
                    beta[j] = 0.0;
                    continue;
                }
                let c = &self.cols[j];
                let old = beta[j];
                let rho: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + nj * old;
                let new = soft_threshold(rho, half) / nj;
                let step = new - old;
                if step != 0.0 {
                    for (ri, ci) in r.iter_mut().zip(c) {
                        *ri -= ci * step;
                    }
                    beta[j] = new;
                    max_step = max_step.max(step.abs());
                }
            }
            if max_step < UPDATE_TOL {
                // Certify on a freshly computed residual.
                r = self.residual(&beta);
                let kkt = self.kkt(&beta, &r, lambda);
                if kkt < KKT_TOL.max(1e-10 * lambda) || max_step == 0.0 {
                    let rss = r.iter().map(|v| v * v).sum();
                    return Ok(LassoFit { beta: Array1::from(beta), rss, sweeps: sweep, kkt_violation: kkt });
                }
            }
        }
        Err(TedError::Numerical(format!("lasso coordinate descent did not converge in {MAX_SWEEPS} sweeps")))
    }

    fn kkt(&self, beta: &[f64], r: &[f64], lambda: f64) -> f64 {
        let mut worst = 0.0_f64;
        for (j, c) in self.cols.iter().enumerate() {
            let g = 2.0 * c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
            let v = if beta[j] == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * beta[j].signum()).abs() };
            worst = worst.max(v);
        }
        worst
    }
}

/// One-shot LASSO fit.
pub fn lasso_cd(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<Array1<f64>> {
    LassoSolver::new(x, y)?.fit(lambda, None).map(|f| f.beta)
}

/// Largest violation of the optimality conditions of the RSS + λ‖β‖₁
/// objective, recomputed from scratch.
pub fn lasso_kkt_violation(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &y - &x.dot(&beta);
    let g = x.t().dot(&r) * 2.0;
    g.iter()
        .zip(beta.iter())
        .map(|(&gj, &bj)| if bj == 0.0 { (gj.abs() - lambda).max(0.0) } else { (gj - lambda * bj.signum()).abs() })
        .fold(0.0, f64::max)
}
