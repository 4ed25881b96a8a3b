//! Comparison estimators: block-wise OLS (AKX, optionally on a covariate
//! subset) and a single constant-beta LASSO over the whole period.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Result, TedError};
use crate::l1::LassoSolver;
use crate::linalg::cholesky_solve;
use crate::model::{window_blocks, IncrementMatrix, LogPricePanel};
use crate::ted::{integrate, prepared_increments, IntegratedBetaEstimate, Method, ThresholdRule};
use crate::tuning::{default_constant_grid, SelectionTable};

pub const AKX_BLOCK_EXPONENT: f64 = 0.47;
pub const AKX_RIDGE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// Block length; `None` means `⌊n^{0.47}⌋`.
    pub block_len: Option<usize>,
    pub ridge: f64,
    /// Covariate columns used by AKX-SIX.
    pub factor_subset: Option<Vec<usize>>,
    pub lasso_grid: Vec<f64>,
    pub truncation: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            block_len: None,
            ridge: AKX_RIDGE,
            factor_subset: None,
            lasso_grid: default_constant_grid(),
            truncation: true,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge > 0.0) || !self.ridge.is_finite() {
            return Err(TedError::Config(format!("ridge must be > 0, got {}", self.ridge)));
        }
        if self.block_len == Some(0) {
            return Err(TedError::Config("AKX block length must be >= 1".into()));
        }
        if self.lasso_grid.is_empty() || self.lasso_grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(TedError::Config("lasso grid must be nonempty, finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn akx_block_len(&self, n: usize) -> usize {
        self.block_len.unwrap_or_else(|| ((n as f64).powf(AKX_BLOCK_EXPONENT).floor() as usize).max(1))
    }
}

/// Per-block results of AKX.
#[derive(Debug, Clone)]
pub struct AkxDetail {
    pub block_len: usize,
    pub block_betas: Vec<Array1<f64>>,
    /// Blocks whose ridge system could not be factorized; they contribute 0.
    pub singular_blocks: Vec<usize>,
}

fn unthresholded(raw: Array1<f64>, method: Method) -> IntegratedBetaEstimate {
    IntegratedBetaEstimate { thresholded: raw.clone(), raw, h_n: 0.0, threshold_rule: ThresholdRule::Hard, method }
}

/// AKX on prepared (truncated) increments.
pub fn akx_on_increments(incr: &IncrementMatrix, cfg: &BaselineConfig) -> Result<(Array1<f64>, AkxDetail)> {
    cfg.validate()?;
    let block_len = cfg.akx_block_len(incr.n());
    let blocks = window_blocks(incr, block_len)?;
    let p = incr.p();
    let solved: Vec<Option<Array1<f64>>> = blocks
        .par_iter()
        .map(|w| {
            let mut g: Array2<f64> = w.xv.t().dot(&w.xv);
            for j in 0..p {
                g[[j, j]] += cfg.ridge;
            }
            cholesky_solve(g.view(), w.xv.t().dot(&w.yv).view()).filter(|b| b.iter().all(|v| v.is_finite()))
        })
        .collect();
    let mut singular_blocks = Vec::new();
    let block_betas: Vec<Array1<f64>> = solved
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            b.unwrap_or_else(|| {
                singular_blocks.push(i);
                Array1::zeros(p)
            })
        })
        .collect();
    let raw = integrate(&block_betas, block_len, incr.delta())?;
    Ok((raw, AkxDetail { block_len, block_betas, singular_blocks }))
}

/// `Σ_blocks (XᵀX + ridge I)^{-1} Xᵀy · K_n Δ_n` on unstandardized
/// truncated increments. With `factor_subset` set, only those columns are
/// used and the estimate is reported for them alone.
pub fn akx_integrated_beta(panel: &LogPricePanel, cfg: &BaselineConfig) -> Result<IntegratedBetaEstimate> {
    let incr = prepared_increments(panel, cfg.truncation)?;
    let (incr, method) = match &cfg.factor_subset {
        Some(cols) => {
            if cols.is_empty() || cols.iter().any(|&j| j >= incr.p()) {
                return Err(TedError::Config(format!("factor subset {cols:?} is empty or out of range for p = {}", incr.p())));
            }
            (incr.select_columns(cols), Method::AkxSix)
        }
        None => (incr, Method::Akx),
    };
    let (raw, _) = akx_on_increments(&incr, cfg)?;
    Ok(unthresholded(raw, method))
}

/// Result of the LASSO baseline with its λ selection.
#[derive(Debug, Clone)]
pub struct LassoDetail {
    pub table: SelectionTable,
    pub lambda: f64,
}

/// LASSO on all increments, λ by BIC `n ln(RSS/n) + ln(n) df` over the
/// grid; ties go to the smaller λ.
pub fn lasso_on_increments(incr: &IncrementMatrix, grid: &[f64]) -> Result<(Array1<f64>, LassoDetail)> {
    if grid.is_empty() {
        return Err(TedError::Config("lasso grid is empty".into()));
    }
    let solver = LassoSolver::new(incr.dx.view(), incr.dy.view())?;
    let mut candidates = grid.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let n = incr.n() as f64;
    // Pathwise from the largest λ down; the convex objective has a unique
    // minimum value, and the certificate bounds the optimality gap.
    let mut fits = vec![None; candidates.len()];
    let mut init: Option<Array1<f64>> = None;
    for i in (0..candidates.len()).rev() {
        let fit = solver.fit(candidates[i], init.as_ref())?;
        init = Some(fit.beta.clone());
        fits[i] = Some(fit);
    }
    let fits: Vec<_> = fits.into_iter().map(|f| f.expect("every candidate fitted")).collect();
    let losses: Vec<Option<f64>> =
        fits.iter().map(|f| Some(n * (f.rss / n).max(f64::MIN_POSITIVE).ln() + n.ln() * f.df() as f64)).collect();
    let mut best = 0;
    for i in 1..losses.len() {
        if losses[i].unwrap() < losses[best].unwrap() {
            best = i;
        }
    }
    let lambda = candidates[best];
    let beta = fits[best].beta.clone();
    let table = SelectionTable { parameter: "lambda_lasso", candidates, losses, selected: lambda };
    Ok((beta, LassoDetail { table, lambda }))
}

pub fn lasso_integrated_beta(panel: &LogPricePanel, cfg: &BaselineConfig) -> Result<IntegratedBetaEstimate> {
    cfg.validate()?;
    let incr = prepared_increments(panel, cfg.truncation)?;
    let (raw, _) = lasso_on_increments(&incr, &cfg.lasso_grid)?;
    Ok(unthresholded(raw, Method::Lasso))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LogPricePanel;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Panel with `dY = dXᵀβ` exactly and Gaussian covariate increments.
    fn linear_panel(n: usize, beta: &[f64], seed: u64) -> LogPricePanel {
        linear_panel_with_var(n, beta, seed, 0.3)
    }

    fn linear_panel_with_var(n: usize, beta: &[f64], seed: u64, var: f64) -> LogPricePanel {
        let p = beta.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = (var / n as f64).sqrt();
        let dx = Array2::from_shape_fn((n, p), |_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z });
        let dy = dx.dot(&Array1::from(beta.to_vec()));
        let mut x = Array2::zeros((n + 1, p));
        let mut y = Array1::zeros(n + 1);
        for i in 0..n {
            for j in 0..p {
                x[[i + 1, j]] = x[[i, j]] + dx[[i, j]];
            }
            y[i + 1] = y[i] + dy[i];
        }
        LogPricePanel::from_levels(y, x).unwrap()
    }

    #[test]
    fn akx_scalar_matches_ridge_oracle() {
        let panel = linear_panel(2000, &[0.7], 1);
        let cfg = BaselineConfig { truncation: false, ..Default::default() };
        let est = akx_integrated_beta(&panel, &cfg).unwrap();
        let dx = crate::model::increments(&panel).dx.column(0).to_owned();
        let k = 35;
        let mut oracle = 0.0;
        for b in 0..2000 / k {
            let s: f64 = dx.slice(ndarray::s![b * k..(b + 1) * k]).iter().map(|v| v * v).sum();
            oracle += 0.7 * s / (s + AKX_RIDGE) * k as f64 / 2000.0;
        }
        assert!((est.raw[0] - oracle).abs() < 1e-12, "{} vs {oracle}", est.raw[0]);
    }

    #[test]
    fn akx_scalar_noise_free_recovery() {
        // Covariate variance large enough that the ridge is negligible.
        let panel = linear_panel_with_var(2000, &[0.7], 1, 100.0);
        let cfg = BaselineConfig { truncation: false, ..Default::default() };
        let incr = crate::model::increments(&panel);
        let (raw, detail) = akx_on_increments(&incr, &cfg).unwrap();
        for b in &detail.block_betas {
            assert!((b[0] - 0.7).abs() < 1e-3);
        }
        // Dropped remainder: 2000 = 35·57 + 5.
        let covered = (2000 / 35 * 35) as f64 / 2000.0;
        assert!((raw[0] - 0.7 * covered).abs() < 1e-3);
    }

    #[test]
    fn akx_ridge_keeps_high_dimension_finite() {
        let beta: Vec<f64> = (0..40).map(|j| if j < 3 { 1.0 } else { 0.0 }).collect();
        let panel = linear_panel(400, &beta, 2);
        let est = akx_integrated_beta(&panel, &BaselineConfig::default()).unwrap();
        assert_eq!(est.raw.len(), 40);
        assert!(est.raw.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn akx_subset_matches_subset_panel() {
        let beta = [0.5, -0.2, 0.0, 0.3];
        let panel = linear_panel(500, &beta, 3);
        let cols = vec![0, 3];
        let sub = BaselineConfig { factor_subset: Some(cols.clone()), ..Default::default() };
        let a = akx_integrated_beta(&panel, &sub).unwrap();
        assert_eq!(a.method, Method::AkxSix);
        let b = akx_integrated_beta(&panel.select_columns(&cols).unwrap(), &BaselineConfig::default()).unwrap();
        assert_eq!(a.raw, b.raw);
    }

    #[test]
    fn akx_small_ridge_is_block_ols() {
        let panel = linear_panel(1000, &[0.5, 0.2], 4);
        let cfg = BaselineConfig { ridge: 1e-14, truncation: false, ..Default::default() };
        let incr = crate::model::increments(&panel);
        let (_, detail) = akx_on_increments(&incr, &cfg).unwrap();
        let blocks = window_blocks(&incr, detail.block_len).unwrap();
        for (w, b) in blocks.iter().zip(&detail.block_betas) {
            let ols = cholesky_solve(w.xv.t().dot(&w.xv).view(), w.xv.t().dot(&w.yv).view()).unwrap();
            for (u, v) in b.iter().zip(ols.iter()) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lasso_recovers_exact_system_at_small_lambda() {
        let panel = linear_panel(2000, &[0.7, 0.0, -0.4], 5);
        let incr = crate::model::increments(&panel);
        let (beta, detail) = lasso_on_increments(&incr, &[1e-8]).unwrap();
        assert_eq!(detail.lambda, 1e-8);
        for (b, t) in beta.iter().zip([0.7, 0.0, -0.4]) {
            assert!((b - t).abs() < 1e-4);
        }
    }

    #[test]
    fn lasso_full_shrinkage_on_weak_signal() {
        let panel = linear_panel(500, &[0.01, 0.0], 6);
        let cfg = BaselineConfig { lasso_grid: vec![10.0], truncation: false, ..Default::default() };
        let est = lasso_integrated_beta(&panel, &cfg).unwrap();
        assert!(est.raw.iter().all(|v| *v == 0.0));
    }
}
