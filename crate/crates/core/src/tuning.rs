//! Rate-scaled tuning levels and the data-driven selectors for their
//! constants: BIC for `c_λ`, trace loss for `c_τ`, prediction error across
//! periods for `c_h`.

use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::Array1;
use rayon::prelude::*;

use crate::error::{Result, TedError};
use crate::l1::{try_clime, try_clime_warm, Basis, SolveStatus, DEFAULT_TOL};
use crate::model::LogPricePanel;
use crate::ted::{default_window_length, ted_fit, threshold, PreparedPanel, ThresholdRule};

/// A tuning constant, fixed or to be selected from a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Fixed(f64),
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowLength {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    pub k_n: WindowLength,
    pub c_lambda: Constant,
    pub c_tau: Constant,
    pub c_h: Constant,
    pub threshold_rule: ThresholdRule,
    pub truncation: bool,
}

/// `k` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k)
        .map(|i| {
            if i == k - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (k - 1) as f64).exp()
            }
        })
        .collect()
}

/// 25 log-spaced points on `[0.1, 10]`.
pub fn default_constant_grid() -> Vec<f64> {
    log_grid(0.1, 10.0, 25)
}

/// `{0, 0.1, …, 0.5}`.
pub fn c_h_grid() -> Vec<f64> {
    (0..=5).map(|l| l as f64 / 10.0).collect()
}

/// Value used for `c_h` when a single panel is estimated and no period
/// sequence is available to select it.
pub const DEFAULT_C_H: f64 = 0.5;

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            k_n: WindowLength::Auto,
            c_lambda: Constant::Grid(default_constant_grid()),
            c_tau: Constant::Grid(default_constant_grid()),
            c_h: Constant::Fixed(DEFAULT_C_H),
            threshold_rule: ThresholdRule::Hard,
            truncation: true,
        }
    }
}

impl TuningConfig {
    pub fn window_length(&self, n: usize) -> usize {
        match self.k_n {
            WindowLength::Auto => default_window_length(n),
            WindowLength::Fixed(k) => k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let WindowLength::Fixed(k) = self.k_n {
            if k < 2 {
                return Err(TedError::Config(format!("k_n must be >= 2, got {k}")));
            }
        }
        check_constant(&self.c_lambda, "c_lambda", false)?;
        check_constant(&self.c_tau, "c_tau", false)?;
        check_constant(&self.c_h, "c_h", true)
    }
}

fn check_constant(c: &Constant, name: &str, allow_zero: bool) -> Result<()> {
    let vals: &[f64] = match c {
        Constant::Fixed(v) => std::slice::from_ref(v),
        Constant::Grid(g) => g,
    };
    if vals.is_empty() {
        return Err(TedError::Config(format!("{name} grid is empty")));
    }
    for &v in vals {
        let ok = v.is_finite() && if allow_zero { v >= 0.0 } else { v > 0.0 };
        if !ok {
            let bound = if allow_zero { ">= 0" } else { "> 0" };
            return Err(TedError::Config(format!("{name} values must be finite and {bound}, got {v}")));
        }
    }
    Ok(())
}

/// The value of a constant that must not be grid-selected here: fixed, or a
/// one-point grid.
pub fn resolve_single(c: &Constant, name: &str) -> Result<f64> {
    match c {
        Constant::Fixed(v) => Ok(*v),
        Constant::Grid(g) if g.len() == 1 => Ok(g[0]),
        Constant::Grid(_) => Err(TedError::Config(format!(
            "{name} needs a fixed value here; grid selection requires several periods"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateScalings {
    pub lambda_n: f64,
    pub tau_n: f64,
    pub h_n: f64,
}

/// `λ_n = c_λ n^{-1/4} (ln p)^{3/2}`, `τ_n = c_τ n^{-1/4} (ln p)^{1/2}`,
/// `h_n = c_h n^{-1/2} (ln p)^{3/2}`.
pub fn rate_scalings(n: usize, p: usize, c_lambda: f64, c_tau: f64, c_h: f64) -> RateScalings {
    let n = n as f64;
    let lp = (p as f64).ln().max(0.0);
    let q = n.powf(-0.25);
    RateScalings { lambda_n: c_lambda * q * lp.powf(1.5), tau_n: c_tau * q * lp.sqrt(), h_n: c_h * n.powf(-0.5) * lp.powf(1.5) }
}

/// Loss per candidate; `None` marks a degenerate candidate. Candidates
/// are sorted ascending and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTable {
    pub parameter: &'static str,
    pub candidates: Vec<f64>,
    pub losses: Vec<Option<f64>>,
    pub selected: f64,
}

fn sorted_grid(grid: &[f64], name: &str) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(TedError::Config(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(TedError::Config(format!("{name} grid has non-finite values")));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Smallest candidate attaining the minimum loss.
fn argmin(parameter: &'static str, candidates: Vec<f64>, losses: Vec<Option<f64>>) -> Result<SelectionTable> {
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in losses.iter().enumerate() {
        if let Some(l) = *l {
            if best.map_or(true, |(_, b)| l < b) {
                best = Some((i, l));
            }
        }
    }
    let (i, _) = best.ok_or_else(|| TedError::Config(format!("every {parameter} candidate is degenerate")))?;
    let selected = candidates[i];
    Ok(SelectionTable { parameter, candidates, losses, selected })
}

/// BIC of the window Dantzig fits at one `c_λ`:
/// `Σ_windows [k_n ln(RSS/k_n) + ln(k_n) df]`.
pub fn bic_loss(prep: &PreparedPanel, c_lambda: f64) -> Option<f64> {
    let lambda_n = rate_scalings(prep.n, prep.p, c_lambda, 1.0, 0.0).lambda_n;
    let k = prep.k_n as f64;
    let terms: Option<Vec<f64>> = prep
        .windows
        .par_iter()
        .map(|w| {
            let beta = w.dantzig_reduced(lambda_n).ok()?;
            let rss = w.rss_reduced(&beta);
            let df = beta.iter().filter(|b| **b != 0.0).count() as f64;
            Some(k * (rss / k).max(f64::MIN_POSITIVE).ln() + k.ln() * df)
        })
        .collect();
    terms.map(|t| t.iter().sum())
}

pub fn select_c_lambda_bic(prep: &PreparedPanel, grid: &[f64]) -> Result<SelectionTable> {
    let candidates = sorted_grid(grid, "c_lambda")?;
    let losses = candidates.par_iter().map(|&c| bic_loss(prep, c)).collect();
    argmin("c_lambda", candidates, losses)
}

/// `tr(M M)` with `M = Â Ω̂ − I`, i.e. `Σ_ij M_ij M_ji`.
fn trace_term(gram: &ndarray::Array2<f64>, omega: &ndarray::Array2<f64>) -> f64 {
    let mut m = gram.dot(omega);
    for i in 0..m.nrows() {
        m[[i, i]] -= 1.0;
    }
    let mut t = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t += m[[i, j]] * m[[j, i]];
        }
    }
    t
}

enum WindowTrace {
    Loss(f64, ndarray::Array2<f64>),
    Infeasible,
    Failed,
}

/// Trace loss `Σ_windows tr[(Â Ω̂ − I)²]` at one `c_τ`, over each window's
/// active coordinates.
pub fn trace_loss(prep: &PreparedPanel, c_tau: f64) -> Option<f64> {
    let tau_n = rate_scalings(prep.n, prep.p, 1.0, c_tau, 0.0).tau_n;
    let parts: Option<Vec<f64>> = prep
        .windows
        .par_iter()
        .map(|w| {
            if w.active.is_empty() {
                return Some(0.0);
            }
            try_clime(w.solver(), tau_n, DEFAULT_TOL).ok().map(|o| trace_term(&w.gram, &o))
        })
        .collect();
    parts.map(|v| v.iter().sum())
}

/// Trace-loss selection together with the window precision estimates
/// (active coordinates) at the selected constant.
#[derive(Debug, Clone)]
pub struct TauSelection {
    pub table: SelectionTable,
    pub precisions: Vec<ndarray::Array2<f64>>,
}

/// Candidates are evaluated from the largest down, each window's CLIME
/// columns warm-started from the previous candidate. Feasible sets are
/// nested in `τ`, so once a candidate is infeasible on some window every
/// smaller one is too and is marked degenerate without solving.
pub fn select_c_tau_path(prep: &PreparedPanel, grid: &[f64]) -> Result<TauSelection> {
    let candidates = sorted_grid(grid, "c_tau")?;
    let mut losses = vec![None; candidates.len()];
    let mut bases: Vec<Vec<Option<Basis>>> = vec![Vec::new(); prep.windows.len()];
    let mut best: Option<(f64, Vec<ndarray::Array2<f64>>)> = None;
    for i in (0..candidates.len()).rev() {
        let tau_n = rate_scalings(prep.n, prep.p, 1.0, candidates[i], 0.0).tau_n;
        // One infeasible window settles the candidate; the rest are skipped.
        let abort = AtomicBool::new(false);
        let parts: Vec<WindowTrace> = prep
            .windows
            .par_iter()
            .zip(bases.par_iter_mut())
            .map(|(w, b)| {
                if abort.load(Ordering::Relaxed) {
                    return WindowTrace::Infeasible;
                }
                if w.active.is_empty() {
                    return WindowTrace::Loss(0.0, ndarray::Array2::zeros((0, 0)));
                }
                match try_clime_warm(w.solver(), tau_n, DEFAULT_TOL, b) {
                    Ok(omega) => WindowTrace::Loss(trace_term(&w.gram, &omega), omega),
                    Err(f) if f.status == SolveStatus::Infeasible => {
                        abort.store(true, Ordering::Relaxed);
                        WindowTrace::Infeasible
                    }
                    Err(_) => WindowTrace::Failed,
                }
            })
            .collect();
        let mut total = 0.0;
        let mut omegas = Vec::with_capacity(parts.len());
        let mut infeasible = false;
        let mut failed = false;
        for part in parts {
            match part {
                WindowTrace::Loss(t, o) => {
                    total += t;
                    omegas.push(o);
                }
                WindowTrace::Infeasible => infeasible = true,
                WindowTrace::Failed => failed = true,
            }
        }
        if infeasible {
            break;
        }
        if failed {
            continue;
        }
        losses[i] = Some(total);
        // Descending order: `<=` keeps the smaller candidate on ties.
        if best.as_ref().map_or(true, |(b, _)| total <= *b) {
            best = Some((total, omegas));
        }
    }
    let table = argmin("c_tau", candidates, losses)?;
    let precisions = best.map(|(_, o)| o).expect("argmin succeeded, so some candidate was feasible");
    Ok(TauSelection { table, precisions })
}

pub fn select_c_tau_trace(prep: &PreparedPanel, grid: &[f64]) -> Result<SelectionTable> {
    select_c_tau_path(prep, grid).map(|s| s.table)
}

/// Raw (debiased, unthresholded) integrated estimate of one period, with
/// the dimensions that set its threshold level.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    pub raw: Array1<f64>,
    pub n: usize,
    pub p: usize,
}

/// Mean over adjacent periods of `‖thr(raw_m; h_n(c_h)) − raw_{m+1}‖²`.
pub fn mspe_loss(periods: &[PeriodEstimate], c_h: f64, rule: ThresholdRule) -> f64 {
    let pairs = periods.len() - 1;
    let mut total = 0.0;
    for w in periods.windows(2) {
        let h = rate_scalings(w[0].n, w[0].p, 1.0, 1.0, c_h).h_n;
        let thr = threshold(w[0].raw.view(), h, rule);
        total += (&thr - &w[1].raw).mapv(|v| v * v).sum();
    }
    total / pairs as f64
}

pub fn select_c_h_mspe(periods: &[PeriodEstimate], grid: &[f64], rule: ThresholdRule) -> Result<SelectionTable> {
    if periods.len() < 2 {
        return Err(TedError::Argument(format!("c_h selection needs at least 2 periods, got {}", periods.len())));
    }
    let p = periods[0].raw.len();
    if periods.iter().any(|e| e.raw.len() != p) {
        return Err(TedError::Argument("periods have different numbers of covariates".into()));
    }
    let candidates = sorted_grid(grid, "c_h")?;
    let losses = candidates.iter().map(|&c| Some(mspe_loss(periods, c, rule))).collect();
    argmin("c_h", candidates, losses)
}

/// Estimate each period with `cfg` (selecting `c_λ`, `c_τ` per period when
/// they are grids) and keep the raw integrated estimates.
pub fn period_estimates(panels: &[LogPricePanel], cfg: &TuningConfig) -> Result<Vec<PeriodEstimate>> {
    panels
        .iter()
        .enumerate()
        .map(|(m, panel)| {
            let fit = ted_fit(panel, cfg, 0.0).map_err(|e| e.context(format!("period {m}")))?;
            Ok(PeriodEstimate { raw: fit.estimate.raw, n: panel.n(), p: panel.p() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rate_arithmetic() {
        let r = rate_scalings(10_000, 8, 1.0, 1.0, 1.0);
        let lp = 8f64.ln();
        assert!((r.lambda_n - 0.1 * lp.powf(1.5)).abs() < 1e-14);
        assert!((r.tau_n - 0.1 * lp.sqrt()).abs() < 1e-14);
        assert!((r.h_n - 0.01 * lp.powf(1.5)).abs() < 1e-14);

        // p = e² gives (ln p)^{3/2} = 2^{3/2}.
        let n = 10_000f64;
        let lambda = 1.0 * n.powf(-0.25) * 2f64.powf(1.5);
        assert!((lambda - 0.2828427).abs() < 1e-6);

        assert_eq!(rate_scalings(500, 50, 1.0, 1.0, 0.0).h_n, 0.0);
        let a = rate_scalings(500, 50, 1.0, 1.0, 1.0);
        let b = rate_scalings(500, 50, 2.0, 1.0, 1.0);
        assert!((b.lambda_n - 2.0 * a.lambda_n).abs() < 1e-15);
    }

    #[test]
    fn grids() {
        let g = default_constant_grid();
        assert_eq!(g.len(), 25);
        assert!((g[0] - 0.1).abs() < 1e-15 && g[24] == 10.0);
        assert!((g[12] - 1.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c_h_grid(), vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
    }

    #[test]
    fn ties_go_to_smaller_candidate() {
        let t = argmin("x", vec![1.0, 2.0, 3.0], vec![Some(2.0), Some(1.0), Some(1.0)]).unwrap();
        assert_eq!(t.selected, 2.0);
        let t = argmin("x", vec![1.0, 2.0], vec![None, Some(5.0)]).unwrap();
        assert_eq!(t.selected, 2.0);
        assert!(matches!(argmin("x", vec![1.0], vec![None]), Err(TedError::Config(_))));
    }

    #[test]
    fn mspe_prefers_no_threshold_on_stable_periods() {
        let raw = array![0.8, 0.04, -0.02, 0.0];
        let periods: Vec<_> = (0..3).map(|_| PeriodEstimate { raw: raw.clone(), n: 400, p: 4 }).collect();
        let t = select_c_h_mspe(&periods, &c_h_grid(), ThresholdRule::Hard).unwrap();
        assert_eq!(t.selected, 0.0);
        assert_eq!(t.losses[0], Some(0.0));
        let t = select_c_h_mspe(&periods, &[0.3], ThresholdRule::Hard).unwrap();
        assert_eq!(t.selected, 0.3);
        assert!(select_c_h_mspe(&periods[..1], &[0.3], ThresholdRule::Hard).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TuningConfig::default().validate().is_ok());
        let bad = TuningConfig { c_lambda: Constant::Fixed(0.0), ..Default::default() };
        assert!(bad.validate().is_err());
        let ok = TuningConfig { c_h: Constant::Fixed(0.0), ..Default::default() };
        assert!(ok.validate().is_ok());
        let bad = TuningConfig { k_n: WindowLength::Fixed(1), ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(resolve_single(&Constant::Grid(vec![0.1, 0.2]), "c_h").is_err());
    }

    proptest::proptest! {
        #[test]
        fn rates_monotone(n in 2usize..100_000, p in 2usize..500, c in 0.01f64..10.0) {
            let a = rate_scalings(n, p, c, c, c);
            let b = rate_scalings(n, p, 1.5 * c, 1.5 * c, 1.5 * c);
            proptest::prop_assert!(b.lambda_n > a.lambda_n && b.tau_n > a.tau_n && b.h_n > a.h_n);
            let m = rate_scalings(n + 1, p, c, c, c);
            proptest::prop_assert!(m.lambda_n < a.lambda_n && m.tau_n < a.tau_n && m.h_n < a.h_n);
        }
    }
}
