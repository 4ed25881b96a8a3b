//! The thresholded debiased Dantzig (TED) integrated beta estimator.
//!
//! Per window of `k_n` increments: standardize, solve the Dantzig selector,
//! estimate the precision matrix column-wise by CLIME, apply the one-step
//! debiasing correction, and map back to original units. The debiased
//! window betas are summed with weight `k_n Δ_n` and the sum is thresholded.
//!
//! Standardized windows are put on a unit clock (`span = k_n`), so their
//! normalized Gram matrix is the window's sample correlation matrix and the
//! tuning levels `λ_n`, `τ_n` act on correlation units.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Result, TedError};
use crate::l1::{constraint_residual, solve_clime_with, L1LinfSolver, SolveStatus, DEFAULT_TOL};
use crate::model::{increments, window_blocks, IncrementMatrix, LogPricePanel, WindowView};
use crate::truncation::{truncate, truncation_levels};
use crate::tuning::{
    rate_scalings, resolve_single, select_c_lambda_bic, select_c_tau_path, Constant, SelectionTable, TuningConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ted,
    Akx,
    AkxSix,
    Lasso,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ted => "ted",
            Method::Akx => "akx",
            Method::AkxSix => "akx-six",
            Method::Lasso => "lasso",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = TedError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ted" => Ok(Method::Ted),
            "akx" => Ok(Method::Akx),
            "akx-six" | "akx_six" => Ok(Method::AkxSix),
            "lasso" => Ok(Method::Lasso),
            other => Err(TedError::Argument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    #[default]
    Hard,
    Soft,
}

impl std::str::FromStr for ThresholdRule {
    type Err = TedError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ThresholdRule::Hard),
            "soft" => Ok(ThresholdRule::Soft),
            other => Err(TedError::Argument(format!("unknown threshold rule {other:?}"))),
        }
    }
}

/// Location and scale removed from one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    /// Zero-variance covariates, excluded from the window's solves.
    pub flagged: Vec<bool>,
}

impl ScaleRecord {
    pub fn active(&self) -> Vec<usize> {
        self.flagged.iter().enumerate().filter(|(_, f)| !**f).map(|(j, _)| j).collect()
    }

    /// Map a standardized coefficient vector back to original units:
    /// `β_j ← β_j sd_y / sd_j`, zero for flagged coordinates.
    pub fn unstandardize(&self, beta_std: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(beta_std.len(), |j| {
            if self.flagged[j] || self.y_sd == 0.0 {
                0.0
            } else {
                beta_std[j] * self.y_sd / self.x_sd[j]
            }
        })
    }
}

fn mean_sd(v: ArrayView1<f64>) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.sum() / k;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k;
    (mean, var.max(0.0).sqrt())
}

/// Center and scale every column to mean 0 and variance 1 (divisor `k_n`).
///
/// Zero-variance covariate columns are flagged and left at zero. A
/// zero-variance response is left at zero with `y_sd = 0`, which forces
/// every beta of the window to 0. The returned window has `span = k_n`.
pub fn standardize_window(w: &WindowView) -> (WindowView, ScaleRecord) {
    let k = w.len();
    let p = w.p();
    let mut xv = Array2::zeros((k, p));
    let mut x_mean = vec![0.0; p];
    let mut x_sd = vec![0.0; p];
    let mut flagged = vec![false; p];
    for j in 0..p {
        let col = w.xv.column(j);
        let (m, sd) = mean_sd(col);
        x_mean[j] = m;
        x_sd[j] = sd;
        if sd <= 1e-300 || !sd.is_finite() {
            flagged[j] = true;
            continue;
        }
        for i in 0..k {
            xv[[i, j]] = (col[i] - m) / sd;
        }
    }
    let (y_mean, mut y_sd) = mean_sd(w.yv.view());
    let yv = if y_sd > 1e-300 {
        w.yv.mapv(|v| (v - y_mean) / y_sd)
    } else {
        y_sd = 0.0;
        Array1::zeros(k)
    };
    (
        WindowView { start: w.start, yv, xv, span: k as f64 },
        ScaleRecord { x_mean, x_sd, y_mean, y_sd, flagged },
    )
}

/// Dantzig selector on a window: `A = xvᵀxv / span`, `b = xvᵀyv / span`.
pub fn instant_beta(w: &WindowView, lambda_n: f64) -> Result<Array1<f64>> {
    let a = w.gram();
    let solver = L1LinfSolver::new(a.view());
    dantzig_with(&solver, w.cross().view(), lambda_n)
}

fn dantzig_with(solver: &L1LinfSolver, b: ArrayView1<f64>, lambda_n: f64) -> Result<Array1<f64>> {
    if !(lambda_n >= 0.0) {
        return Err(TedError::Argument(format!("lambda_n must be >= 0, got {lambda_n}")));
    }
    let sol = solver.solve(b, lambda_n, DEFAULT_TOL);
    match sol.status {
        SolveStatus::Optimal => Ok(sol.beta),
        SolveStatus::Infeasible => Err(TedError::Numerical("Dantzig problem reported infeasible".into())),
        SolveStatus::NumericalFailure => Err(TedError::Numerical(format!(
            "Dantzig solve failed (gap {:.3e} after {} pivots)",
            sol.feasibility_gap, sol.iterations
        ))),
    }
}

/// CLIME precision estimate on a window.
pub fn instant_precision(w: &WindowView, tau_n: f64) -> Result<Array2<f64>> {
    let a = w.gram();
    crate::l1::solve_clime(a.view(), tau_n)
}

/// `β̃ = β̂ + Ω̂ᵀ xvᵀ (yv − xv β̂) / span`.
pub fn debias(beta_hat: ArrayView1<f64>, omega_hat: ArrayView2<f64>, w: &WindowView) -> Result<Array1<f64>> {
    let p = w.p();
    if beta_hat.len() != p || omega_hat.dim() != (p, p) {
        return Err(TedError::Argument(format!(
            "shape mismatch: beta {}, omega {:?}, window p = {p}",
            beta_hat.len(),
            omega_hat.dim()
        )));
    }
    let resid = &w.yv - &w.xv.dot(&beta_hat);
    let score = w.xv.t().dot(&resid) / w.span;
    Ok(&beta_hat + &omega_hat.t().dot(&score))
}

/// `Σ_blocks β̃_block · k_n Δ_n`, summed in block order.
pub fn integrate(blocks: &[Array1<f64>], k_n: usize, delta_n: f64) -> Result<Array1<f64>> {
    let first = blocks.first().ok_or_else(|| TedError::Argument("no blocks to integrate".into()))?;
    let w = k_n as f64 * delta_n;
    let mut acc = Array1::zeros(first.len());
    for b in blocks {
        if b.len() != first.len() {
            return Err(TedError::Argument("blocks have different lengths".into()));
        }
        acc.scaled_add(w, b);
    }
    Ok(acc)
}

/// `s(x) 1{|x| ≥ h}` coordinatewise, with `s(x) = x` (hard) or
/// `x − sign(x) h` (soft).
pub fn threshold(raw: ArrayView1<f64>, h_n: f64, rule: ThresholdRule) -> Array1<f64> {
    raw.mapv(|x| {
        if x.abs() >= h_n {
            match rule {
                ThresholdRule::Hard => x,
                ThresholdRule::Soft => x - x.signum() * h_n,
            }
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone)]
pub struct IntegratedBetaEstimate {
    pub raw: Array1<f64>,
    pub thresholded: Array1<f64>,
    pub h_n: f64,
    pub threshold_rule: ThresholdRule,
    pub method: Method,
}

/// Per-window results in standardized units, with the records needed to map
/// them back.
#[derive(Debug, Clone)]
pub struct BlockEstimate {
    pub start: usize,
    pub dantzig_beta: Array1<f64>,
    pub precision: Array2<f64>,
    pub debiased_beta: Array1<f64>,
    pub scale: ScaleRecord,
    /// `‖Aβ̂ − b‖_max − λ_n`, recomputed independently.
    pub dantzig_gap: f64,
    /// `‖AΩ̂ − I‖_max − τ_n` over active coordinates, recomputed independently.
    pub clime_gap: f64,
}

#[derive(Debug, Clone)]
pub struct InstantEstimates {
    pub blocks: Vec<BlockEstimate>,
    pub k_n: usize,
    pub delta_n: f64,
    pub lambda_n: f64,
    pub tau_n: f64,
    pub c_lambda: f64,
    pub c_tau: f64,
}

impl InstantEstimates {
    pub fn debiased_original(&self) -> Vec<Array1<f64>> {
        self.blocks.iter().map(|b| b.scale.unstandardize(b.debiased_beta.view())).collect()
    }

    pub fn dantzig_original(&self) -> Vec<Array1<f64>> {
        self.blocks.iter().map(|b| b.scale.unstandardize(b.dantzig_beta.view())).collect()
    }

    /// Integrated estimate from the un-debiased Dantzig window betas.
    pub fn dantzig_integrated(&self) -> Array1<f64> {
        integrate(&self.dantzig_original(), self.k_n, self.delta_n).expect("at least one block")
    }
}

/// One standardized window with its solvers prepared.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub view: WindowView,
    pub scale: ScaleRecord,
    pub active: Vec<usize>,
    /// Gram and cross moments over the active columns.
    pub gram: Array2<f64>,
    pub cross: Array1<f64>,
    solver: L1LinfSolver,
}

impl PreparedWindow {
    pub fn new(w: &WindowView) -> Self {
        let (view, scale) = standardize_window(w);
        let active = scale.active();
        let xa = view.xv.select(ndarray::Axis(1), &active);
        let gram = xa.t().dot(&xa) / view.span;
        let cross = xa.t().dot(&view.yv) / view.span;
        let solver = L1LinfSolver::new(gram.view());
        PreparedWindow { view, scale, active, gram, cross, solver }
    }

    pub fn p(&self) -> usize {
        self.scale.flagged.len()
    }

    pub fn solver(&self) -> &L1LinfSolver {
        &self.solver
    }

    fn scatter(&self, reduced: &Array1<f64>) -> Array1<f64> {
        let mut full = Array1::zeros(self.p());
        for (k, &j) in self.active.iter().enumerate() {
            full[j] = reduced[k];
        }
        full
    }

    /// Dantzig estimate on the active columns (reduced coordinates).
    pub fn dantzig_reduced(&self, lambda_n: f64) -> Result<Array1<f64>> {
        if self.active.is_empty() {
            return Ok(Array1::zeros(0));
        }
        dantzig_with(&self.solver, self.cross.view(), lambda_n)
    }

    pub fn clime_reduced(&self, tau_n: f64) -> Result<Array2<f64>> {
        if self.active.is_empty() {
            return Ok(Array2::zeros((0, 0)));
        }
        solve_clime_with(&self.solver, tau_n, DEFAULT_TOL)
    }

    /// Residual sum of squares of the standardized window at reduced `β`.
    pub fn rss_reduced(&self, beta: &Array1<f64>) -> f64 {
        let mut fitted = Array1::zeros(self.view.len());
        for (k, &j) in self.active.iter().enumerate() {
            if beta[k] != 0.0 {
                fitted.scaled_add(beta[k], &self.view.xv.column(j));
            }
        }
        (&self.view.yv - &fitted).mapv(|v| v * v).sum()
    }

    /// Full window estimate at fixed levels.
    pub fn estimate(&self, lambda_n: f64, tau_n: f64) -> Result<BlockEstimate> {
        self.estimate_with(lambda_n, tau_n, None)
    }

    /// As [`estimate`](Self::estimate), reusing a precision estimate on the
    /// active coordinates already computed at `tau_n`.
    pub fn estimate_with(&self, lambda_n: f64, tau_n: f64, precision: Option<&Array2<f64>>) -> Result<BlockEstimate> {
        let p = self.p();
        let beta_r = self.dantzig_reduced(lambda_n)?;
        let omega_r = match precision {
            Some(o) if o.dim() == (self.active.len(), self.active.len()) => o.clone(),
            Some(o) => {
                return Err(TedError::Argument(format!(
                    "precision has shape {:?}, window has {} active columns",
                    o.dim(),
                    self.active.len()
                )))
            }
            None => self.clime_reduced(tau_n)?,
        };
        let dantzig_gap = if self.active.is_empty() {
            -lambda_n
        } else {
            constraint_residual(self.gram.view(), beta_r.view(), self.cross.view()) - lambda_n
        };
        let clime_gap = if self.active.is_empty() {
            -tau_n
        } else {
            let m = self.gram.dot(&omega_r);
            let mut worst = 0.0_f64;
            for ((i, j), v) in m.indexed_iter() {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - e).abs());
            }
            worst - tau_n
        };
        let mut omega = Array2::zeros((p, p));
        for (a, &i) in self.active.iter().enumerate() {
            for (b, &j) in self.active.iter().enumerate() {
                omega[[i, j]] = omega_r[[a, b]];
            }
        }
        let beta_hat = self.scatter(&beta_r);
        let debiased = debias(beta_hat.view(), omega.view(), &self.view)?;
        Ok(BlockEstimate {
            start: self.view.start,
            dantzig_beta: beta_hat,
            precision: omega,
            debiased_beta: debiased,
            scale: self.scale.clone(),
            dantzig_gap,
            clime_gap,
        })
    }
}

/// Increments, truncation and standardized windows of a panel, shared by all
/// tuning candidates.
#[derive(Debug, Clone)]
pub struct PreparedPanel {
    pub n: usize,
    pub p: usize,
    pub k_n: usize,
    pub increments: IncrementMatrix,
    pub windows: Vec<PreparedWindow>,
}

/// `⌊√n⌋`.
pub fn default_window_length(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(2)
}

/// Raw increments, truncated with bipower levels computed on the full
/// panel when `truncation` is set.
pub fn prepared_increments(panel: &LogPricePanel, truncation: bool) -> Result<IncrementMatrix> {
    let raw = increments(panel);
    if truncation {
        let levels = truncation_levels(&raw)?;
        truncate(&raw, &levels)
    } else {
        Ok(raw)
    }
}

impl PreparedPanel {
    pub fn new(panel: &LogPricePanel, k_n: usize, truncation: bool) -> Result<Self> {
        let incr = prepared_increments(panel, truncation)?;
        Self::from_increments(incr, k_n)
    }

    pub fn from_increments(incr: IncrementMatrix, k_n: usize) -> Result<Self> {
        if k_n < 2 {
            return Err(TedError::Config(format!("k_n must be >= 2, got {k_n}")));
        }
        let views = window_blocks(&incr, k_n)?;
        let windows = views.par_iter().map(PreparedWindow::new).collect();
        Ok(PreparedPanel { n: incr.n(), p: incr.p(), k_n, increments: incr, windows })
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Window estimates at fixed levels, in block order.
    pub fn instant_estimates(&self, lambda_n: f64, tau_n: f64) -> Result<Vec<BlockEstimate>> {
        self.instant_estimates_with(lambda_n, tau_n, None)
    }

    pub fn instant_estimates_with(
        &self,
        lambda_n: f64,
        tau_n: f64,
        precisions: Option<&[Array2<f64>]>,
    ) -> Result<Vec<BlockEstimate>> {
        if let Some(ps) = precisions {
            if ps.len() != self.windows.len() {
                return Err(TedError::Argument(format!(
                    "{} precision estimates for {} windows",
                    ps.len(),
                    self.windows.len()
                )));
            }
        }
        self.windows
            .par_iter()
            .enumerate()
            .map(|(i, w)| {
                w.estimate_with(lambda_n, tau_n, precisions.map(|ps| &ps[i]))
                    .map_err(|e| e.context(format!("block {i}")))
            })
            .collect()
    }
}

/// Run the full estimator at resolved constants on a prepared panel.
pub fn ted_on_prepared(
    prep: &PreparedPanel,
    c_lambda: f64,
    c_tau: f64,
    c_h: f64,
    rule: ThresholdRule,
) -> Result<(IntegratedBetaEstimate, InstantEstimates)> {
    ted_on_prepared_with(prep, c_lambda, c_tau, c_h, rule, None)
}

/// [`ted_on_prepared`] with window precision estimates already computed at
/// `c_τ` (as returned by the trace-loss selector).
pub fn ted_on_prepared_with(
    prep: &PreparedPanel,
    c_lambda: f64,
    c_tau: f64,
    c_h: f64,
    rule: ThresholdRule,
    precisions: Option<&[Array2<f64>]>,
) -> Result<(IntegratedBetaEstimate, InstantEstimates)> {
    let rates = rate_scalings(prep.n, prep.p, c_lambda, c_tau, c_h);
    let blocks = prep.instant_estimates_with(rates.lambda_n, rates.tau_n, precisions)?;
    let inst = InstantEstimates {
        blocks,
        k_n: prep.k_n,
        delta_n: prep.delta(),
        lambda_n: rates.lambda_n,
        tau_n: rates.tau_n,
        c_lambda,
        c_tau,
    };
    let raw = integrate(&inst.debiased_original(), prep.k_n, prep.delta())?;
    let thresholded = threshold(raw.view(), rates.h_n, rule);
    Ok((
        IntegratedBetaEstimate { raw, thresholded, h_n: rates.h_n, threshold_rule: rule, method: Method::Ted },
        inst,
    ))
}

/// A full estimator run with the selection tables of any grid-selected
/// constants.
#[derive(Debug, Clone)]
pub struct TedFit {
    pub estimate: IntegratedBetaEstimate,
    pub instant: InstantEstimates,
    pub c_lambda_table: Option<SelectionTable>,
    pub c_tau_table: Option<SelectionTable>,
}

/// Select grid-valued `c_λ` (BIC) and `c_τ` (trace loss) on a prepared
/// panel, then estimate with threshold constant `c_h`.
pub fn ted_fit_prepared(prep: &PreparedPanel, cfg: &TuningConfig, c_h: f64) -> Result<TedFit> {
    let (c_lambda, c_lambda_table) = match &cfg.c_lambda {
        Constant::Fixed(c) => (*c, None),
        Constant::Grid(g) => {
            let t = select_c_lambda_bic(prep, g)?;
            (t.selected, Some(t))
        }
    };
    let (estimate, instant, c_tau_table) = match &cfg.c_tau {
        Constant::Fixed(c) => {
            let (e, i) = ted_on_prepared(prep, c_lambda, *c, c_h, cfg.threshold_rule)?;
            (e, i, None)
        }
        Constant::Grid(g) => {
            let sel = select_c_tau_path(prep, g)?;
            let (e, i) =
                ted_on_prepared_with(prep, c_lambda, sel.table.selected, c_h, cfg.threshold_rule, Some(&sel.precisions))?;
            (e, i, Some(sel.table))
        }
    };
    Ok(TedFit { estimate, instant, c_lambda_table, c_tau_table })
}

pub fn ted_fit(panel: &LogPricePanel, cfg: &TuningConfig, c_h: f64) -> Result<TedFit> {
    cfg.validate()?;
    let k_n = cfg.window_length(panel.n());
    let prep = PreparedPanel::new(panel, k_n, cfg.truncation)?;
    ted_fit_prepared(&prep, cfg, c_h)
}

/// Increments → truncation → windows → per-window TED → integrate →
/// threshold. Grid-valued `c_λ` and `c_τ` are selected on the panel (BIC
/// and trace loss); `c_h` must be fixed, since its selector needs several
/// periods.
pub fn ted_pipeline(panel: &LogPricePanel, cfg: &TuningConfig) -> Result<(IntegratedBetaEstimate, InstantEstimates)> {
    let c_h = resolve_single(&cfg.c_h, "c_h")?;
    let fit = ted_fit(panel, cfg, c_h)?;
    Ok((fit.estimate, fit.instant))
}
