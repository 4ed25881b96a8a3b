//! Error metrics, R², and the Monte Carlo benchmark comparing the
//! estimators on paired simulated panels.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::baselines::{akx_on_increments, lasso_on_increments, BaselineConfig};
use crate::error::{Result, TedError};
use crate::model::LogPricePanel;
use crate::sim::{derive_seed, simulate_paths, BetaRegime, DgpSpec};
use crate::ted::{prepared_increments, ted_fit_prepared, Method, PreparedPanel};
use crate::tuning::{c_h_grid, select_c_h_mspe, Constant, PeriodEstimate, SelectionTable, TuningConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub max: f64,
    pub l1: f64,
    pub l2: f64,
}

impl ErrorNorms {
    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::Max => self.max,
            Norm::L1 => self.l1,
            Norm::L2 => self.l2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Max,
    L1,
    L2,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::Max, Norm::L1, Norm::L2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Norm::Max => "max",
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        }
    }
}

pub fn error_norms(est: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<ErrorNorms> {
    if est.len() != truth.len() {
        return Err(TedError::Argument(format!("estimate has length {} but truth has {}", est.len(), truth.len())));
    }
    let mut e = ErrorNorms { max: 0.0, l1: 0.0, l2: 0.0 };
    for (a, b) in est.iter().zip(truth.iter()) {
        let d = (a - b).abs();
        e.max = e.max.max(d);
        e.l1 += d;
        e.l2 += d * d;
    }
    e.l2 = e.l2.sqrt();
    Ok(e)
}

/// `1 − Σ(dy − dxᵀβ)² / Σ(dy − mean dy)²` over the panel's (truncated, if
/// `truncation`) increments. `None` when the total sum of squares is 0.
///
/// For an out-of-sample value pass an integrated beta estimated on an
/// earlier panel.
pub fn r_squared(panel: &LogPricePanel, ibeta: ArrayView1<f64>, truncation: bool) -> Result<Option<f64>> {
    if ibeta.len() != panel.p() {
        return Err(TedError::Argument(format!("beta has length {} but panel has p = {}", ibeta.len(), panel.p())));
    }
    let incr = prepared_increments(panel, truncation)?;
    let mean = incr.dy.mean().unwrap_or(0.0);
    let fitted = incr.dx.dot(&ibeta);
    let rss: f64 = incr.dy.iter().zip(fitted.iter()).map(|(y, f)| (y - f) * (y - f)).sum();
    let tss: f64 = incr.dy.iter().map(|y| (y - mean) * (y - mean)).sum();
    Ok(if tss > 0.0 { Some(1.0 - rss / tss) } else { None })
}

/// Benchmark grid and estimator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    /// Simulation design; `seed` and `beta_regime` are overwritten per rep,
    /// and jump intensities are zeroed unless `jumps`.
    pub dgp: DgpSpec,
    pub n_values: Vec<usize>,
    pub regimes: Vec<BetaRegime>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub base_seed: u64,
    pub jumps: bool,
    /// Applies to every method, overriding the flags in `tuning` and
    /// `baseline`.
    pub truncation: bool,
    /// `c_λ`, `c_τ` are selected per rep when grids. A `c_h` grid is
    /// resolved once per cell by MSPE over `mspe_periods` extra simulated
    /// periods.
    pub tuning: TuningConfig,
    pub baseline: BaselineConfig,
    pub mspe_periods: usize,
}

impl BenchmarkSpec {
    /// p = 50, n ∈ {500, 1000, 2000} from n_all = 4000, both regimes, TED,
    /// AKX and LASSO, 100 reps.
    pub fn paper_desk(base_seed: u64) -> Self {
        BenchmarkSpec {
            dgp: DgpSpec::new(50, 4000, base_seed),
            n_values: vec![500, 1000, 2000],
            regimes: vec![BetaRegime::TimeVarying, BetaRegime::Constant],
            methods: vec![Method::Ted, Method::Akx, Method::Lasso],
            reps: 100,
            base_seed,
            jumps: true,
            truncation: true,
            tuning: TuningConfig { c_h: Constant::Grid(c_h_grid()), ..TuningConfig::default() },
            baseline: BaselineConfig::default(),
            mspe_periods: 8,
        }
    }

    /// p = 100, n ∈ {1000, 2000, 4000}, 1000 reps.
    pub fn paper_scale(base_seed: u64) -> Self {
        BenchmarkSpec {
            dgp: DgpSpec::new(100, 4000, base_seed),
            n_values: vec![1000, 2000, 4000],
            reps: 1000,
            ..Self::paper_desk(base_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(TedError::Config("reps must be >= 1".into()));
        }
        if self.n_values.is_empty() || self.regimes.is_empty() || self.methods.is_empty() {
            return Err(TedError::Config("n values, regimes and methods must be nonempty".into()));
        }
        for &n in &self.n_values {
            if n < 4 || n > self.n_all() || self.n_all() % n != 0 {
                return Err(TedError::Config(format!("n = {n} must be >= 4 and divide n_all = {}", self.n_all())));
            }
        }
        if self.methods.contains(&Method::AkxSix) && self.baseline.factor_subset.is_none() {
            return Err(TedError::Config("akx-six needs a factor subset".into()));
        }
        if matches!(&self.tuning.c_h, Constant::Grid(g) if g.len() > 1) && self.mspe_periods < 2 {
            return Err(TedError::Config("a c_h grid needs mspe_periods >= 2".into()));
        }
        self.tuning.validate()?;
        self.baseline.validate()?;
        self.rep_dgp(BetaRegime::TimeVarying, 0).validate()
    }

    pub fn p(&self) -> usize {
        self.dgp.p
    }

    pub fn n_all(&self) -> usize {
        self.dgp.n_all
    }

    pub fn rep_dgp(&self, regime: BetaRegime, seed: u64) -> DgpSpec {
        let d = DgpSpec { seed, ..self.dgp.clone() }.with_regime(regime);
        if self.jumps {
            d
        } else {
            d.without_jumps()
        }
    }
}

fn regime_tag(r: BetaRegime) -> u64 {
    match r {
        BetaRegime::TimeVarying => 1,
        BetaRegime::Constant => 2,
    }
}

const REP_TAG: u64 = 0x5245_5053;
const MSPE_TAG: u64 = 0x4d53_5045;

/// Seed of replication `rep` in `regime`. Jump settings do not enter, so
/// runs with and without jumps share diffusion paths.
pub fn rep_seed(base_seed: u64, regime: BetaRegime, rep: usize) -> u64 {
    derive_seed(base_seed, &[REP_TAG, regime_tag(regime), rep as u64])
}

fn mspe_seed(base_seed: u64, regime: BetaRegime, period: usize) -> u64 {
    derive_seed(base_seed, &[MSPE_TAG, regime_tag(regime), period as u64])
}

/// Extra TED quantities kept per replication.
#[derive(Debug, Clone, PartialEq)]
pub struct TedDiagnostics {
    pub c_lambda: f64,
    pub c_tau: f64,
    pub c_h: f64,
    /// Errors of the unthresholded debiased integral.
    pub raw_errors: ErrorNorms,
    /// Errors of the integral of the un-debiased Dantzig window betas.
    pub dantzig_errors: ErrorNorms,
    /// Largest `‖Aβ̂ − b‖_max − λ_n` over windows.
    pub max_dantzig_gap: f64,
    /// Largest `‖ÂΩ̂ − I‖_max − τ_n` over windows.
    pub max_clime_gap: f64,
    /// Thresholded estimate has exactly the true support.
    pub support_exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub regime: BetaRegime,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub method: Method,
    /// `Err` holds the failure message; such reps are excluded from means.
    pub errors: std::result::Result<ErrorNorms, String>,
    /// Final estimate (thresholded for TED) on the method's coordinates.
    pub estimate: Option<Array1<f64>>,
    pub ted: Option<TedDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: Method,
    pub regime: BetaRegime,
    pub n: usize,
    pub norm: Norm,
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    pub failures: usize,
}

const REPORT_HEADER: [&str; 11] = [
    "method", "regime", "n", "reps", "failures", "max_mean", "max_stderr", "l1_mean", "l1_stderr", "l2_mean", "l2_stderr",
];

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub spec: BenchmarkSpec,
    pub cells: Vec<CellSummary>,
    pub records: Vec<RepRecord>,
    /// `c_h` selection per (regime, n) when grid-selected.
    pub c_h_tables: Vec<(BetaRegime, usize, SelectionTable)>,
    pub wall_clock_secs: f64,
}

impl BenchmarkReport {
    pub fn cell(&self, method: Method, regime: BetaRegime, n: usize, norm: Norm) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.regime == regime && c.n == n && c.norm == norm)
    }

    pub fn records_for(&self, method: Method, regime: BetaRegime, n: usize) -> impl Iterator<Item = &RepRecord> {
        self.records.iter().filter(move |r| r.method == method && r.regime == regime && r.n == n)
    }

    /// One row per (method, regime, n) with mean and standard error of each
    /// norm: `method,regime,n,reps,failures,max_mean,max_stderr,l1_mean,...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_HEADER)?;
        for c in self.cells.iter().filter(|c| c.norm == Norm::ALL[0]) {
            let mut row = vec![
                c.method.as_str().to_string(),
                c.regime.as_str().to_string(),
                c.n.to_string(),
                c.reps.to_string(),
                c.failures.to_string(),
            ];
            for norm in Norm::ALL {
                let cell = self.cell(c.method, c.regime, c.n, norm).expect("every norm summarized");
                row.push(cell.mean.to_string());
                row.push(cell.stderr.to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per replication, method and n.
    pub fn write_records_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "method", "regime", "n", "rep", "seed", "max", "l1", "l2", "c_lambda", "c_tau", "c_h", "error",
        ])?;
        for r in &self.records {
            let (e, msg) = match &r.errors {
                Ok(e) => ([e.max.to_string(), e.l1.to_string(), e.l2.to_string()], String::new()),
                Err(m) => ([String::new(), String::new(), String::new()], m.clone()),
            };
            let t = |f: fn(&TedDiagnostics) -> f64| r.ted.as_ref().map(|d| f(d).to_string()).unwrap_or_default();
            out.write_record([
                r.method.as_str().to_string(),
                r.regime.as_str().to_string(),
                r.n.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                e[0].clone(),
                e[1].clone(),
                e[2].clone(),
                t(|d| d.c_lambda),
                t(|d| d.c_tau),
                t(|d| d.c_h),
                msg,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn support_exact(est: &Array1<f64>, truth: &Array1<f64>) -> bool {
    est.iter().zip(truth.iter()).all(|(e, t)| (*e != 0.0) == (*t != 0.0))
}

fn run_method(
    spec: &BenchmarkSpec,
    method: Method,
    panel: &LogPricePanel,
    truth: &Array1<f64>,
    c_h: f64,
) -> (std::result::Result<ErrorNorms, String>, Option<Array1<f64>>, Option<TedDiagnostics>) {
    let res: Result<(ErrorNorms, Array1<f64>, Option<TedDiagnostics>)> = (|| match method {
        Method::Ted => {
            let k_n = spec.tuning.window_length(panel.n());
            let prep = PreparedPanel::new(panel, k_n, spec.truncation)?;
            let fit = ted_fit_prepared(&prep, &spec.tuning, c_h)?;
            let errors = error_norms(fit.estimate.thresholded.view(), truth.view())?;
            let dz = fit.instant.dantzig_integrated();
            let diag = TedDiagnostics {
                c_lambda: fit.instant.c_lambda,
                c_tau: fit.instant.c_tau,
                c_h,
                raw_errors: error_norms(fit.estimate.raw.view(), truth.view())?,
                dantzig_errors: error_norms(dz.view(), truth.view())?,
                max_dantzig_gap: fit.instant.blocks.iter().map(|b| b.dantzig_gap).fold(f64::NEG_INFINITY, f64::max),
                max_clime_gap: fit.instant.blocks.iter().map(|b| b.clime_gap).fold(f64::NEG_INFINITY, f64::max),
                support_exact: support_exact(&fit.estimate.thresholded, truth),
            };
            Ok((errors, fit.estimate.thresholded, Some(diag)))
        }
        Method::Akx | Method::AkxSix => {
            let incr = prepared_increments(panel, spec.truncation)?;
            if method == Method::AkxSix {
                let cols = spec.baseline.factor_subset.clone().unwrap_or_default();
                let sub = incr.select_columns(&cols);
                let (raw, _) = akx_on_increments(&sub, &spec.baseline)?;
                let t = truth.select(ndarray::Axis(0), &cols);
                return Ok((error_norms(raw.view(), t.view())?, raw, None));
            }
            let (raw, _) = akx_on_increments(&incr, &spec.baseline)?;
            Ok((error_norms(raw.view(), truth.view())?, raw, None))
        }
        Method::Lasso => {
            let incr = prepared_increments(panel, spec.truncation)?;
            let (raw, _) = lasso_on_increments(&incr, &spec.baseline.lasso_grid)?;
            Ok((error_norms(raw.view(), truth.view())?, raw, None))
        }
    })();
    match res {
        Ok((e, est, d)) => (Ok(e), Some(est), d),
        Err(e) => (Err(e.to_string()), None, None),
    }
}

/// Resolve `c_h` for each (regime, n): fixed, or selected by MSPE over a
/// sequence of independently seeded pilot periods.
fn resolve_c_h(spec: &BenchmarkSpec) -> Result<(Vec<(BetaRegime, usize, f64)>, Vec<(BetaRegime, usize, SelectionTable)>)> {
    let mut values = Vec::new();
    let mut tables = Vec::new();
    let grid = match &spec.tuning.c_h {
        Constant::Fixed(c) => {
            for &r in &spec.regimes {
                for &n in &spec.n_values {
                    values.push((r, n, *c));
                }
            }
            return Ok((values, tables));
        }
        Constant::Grid(g) if g.len() == 1 => vec![g[0]],
        Constant::Grid(g) => g.clone(),
    };
    if grid.len() == 1 {
        for &r in &spec.regimes {
            for &n in &spec.n_values {
                values.push((r, n, grid[0]));
            }
        }
        return Ok((values, tables));
    }
    for &r in &spec.regimes {
        let periods: Vec<Result<Vec<PeriodEstimate>>> = (0..spec.mspe_periods)
            .into_par_iter()
            .map(|m| {
                let sim = simulate_paths(&spec.rep_dgp(r, mspe_seed(spec.base_seed, r, m)))?;
                spec.n_values
                    .iter()
                    .map(|&n| {
                        let panel = sim.panel.subsample(spec.n_all() / n)?;
                        let prep = PreparedPanel::new(&panel, spec.tuning.window_length(n), spec.truncation)?;
                        let fit = ted_fit_prepared(&prep, &spec.tuning, 0.0)?;
                        Ok(PeriodEstimate { raw: fit.estimate.raw, n, p: spec.p() })
                    })
                    .collect()
            })
            .collect();
        let periods: Vec<Vec<PeriodEstimate>> =
            periods.into_iter().collect::<Result<_>>().map_err(|e| e.context("c_h pilot periods"))?;
        for (k, &n) in spec.n_values.iter().enumerate() {
            let seq: Vec<PeriodEstimate> = periods.iter().map(|v| v[k].clone()).collect();
            let table = select_c_h_mspe(&seq, &grid, spec.tuning.threshold_rule)?;
            values.push((r, n, table.selected));
            tables.push((r, n, table));
        }
    }
    Ok((values, tables))
}

/// Simulate each (regime, rep) once at `n_all`, subsample to every `n`,
/// run every method on the identical panels and aggregate the errors.
/// Reps run in parallel on the current rayon pool; results do not depend
/// on its size.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkReport> {
    spec.validate()?;
    let start = Instant::now();
    let (c_h_values, c_h_tables) = resolve_c_h(spec)?;
    let c_h_for = |r: BetaRegime, n: usize| {
        c_h_values.iter().find(|(rr, nn, _)| *rr == r && *nn == n).map(|v| v.2).expect("c_h resolved for every cell")
    };
    for (r, n, c) in &c_h_values {
        log::info!("regime {} n {n}: c_h = {c}", r.as_str());
    }

    let jobs: Vec<(BetaRegime, usize)> =
        spec.regimes.iter().flat_map(|&r| (0..spec.reps).map(move |rep| (r, rep))).collect();
    let per_job: Vec<Result<Vec<RepRecord>>> = jobs
        .par_iter()
        .map(|&(regime, rep)| {
            let seed = rep_seed(spec.base_seed, regime, rep);
            let sim = simulate_paths(&spec.rep_dgp(regime, seed))?;
            let truth = &sim.true_integrated_beta;
            let mut out = Vec::new();
            for &n in &spec.n_values {
                let panel = sim.panel.subsample(spec.n_all() / n)?;
                for &method in &spec.methods {
                    let (errors, estimate, ted) = run_method(spec, method, &panel, truth, c_h_for(regime, n));
                    if let Err(m) = &errors {
                        log::warn!("{} {} n {n} rep {rep}: {m}", method.as_str(), regime.as_str());
                    }
                    out.push(RepRecord { regime, n, rep, seed, method, errors, estimate, ted });
                }
            }
            log::debug!("{} rep {rep} done", regime.as_str());
            Ok(out)
        })
        .collect();
    let records: Vec<RepRecord> = per_job.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();

    let mut cells = Vec::new();
    for &method in &spec.methods {
        for &regime in &spec.regimes {
            for &n in &spec.n_values {
                let rs: Vec<&RepRecord> =
                    records.iter().filter(|r| r.method == method && r.regime == regime && r.n == n).collect();
                let ok: Vec<ErrorNorms> = rs.iter().filter_map(|r| r.errors.as_ref().ok().copied()).collect();
                for norm in Norm::ALL {
                    let v: Vec<f64> = ok.iter().map(|e| e.get(norm)).collect();
                    let (mean, stderr) = mean_stderr(&v);
                    cells.push(CellSummary {
                        method,
                        regime,
                        n,
                        norm,
                        mean,
                        stderr,
                        reps: ok.len(),
                        failures: rs.len() - ok.len(),
                    });
                }
            }
        }
    }
    Ok(BenchmarkReport {
        spec: spec.clone(),
        cells,
        records,
        c_h_tables,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// One row of the plot table: `x = n`, `y = ln(mean error)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub series: String,
    pub regime: String,
    pub norm: String,
    pub x: usize,
    pub y: f64,
}

/// Read a report CSV into long-format plot points, one per norm and row.
pub fn plot_points<R: std::io::Read>(r: R) -> Result<Vec<PlotPoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(TedError::Data(format!("report header must be {}", REPORT_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let x: usize = row[2].parse().map_err(|_| TedError::Data(format!("line {line}: bad n {:?}", &row[2])))?;
        for (k, norm) in Norm::ALL.iter().enumerate() {
            let field = &row[5 + 2 * k];
            let mean: f64 =
                field.parse().map_err(|_| TedError::Data(format!("line {line}: bad {} mean {field:?}", norm.as_str())))?;
            out.push(PlotPoint {
                series: row[0].to_string(),
                regime: row[1].to_string(),
                norm: norm.as_str().to_string(),
                x,
                y: mean.ln(),
            });
        }
    }
    Ok(out)
}

pub fn write_plot_points<W: Write>(points: &[PlotPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["series", "regime", "norm", "x", "y"])?;
    for p in points {
        out.write_record([p.series.clone(), p.regime.clone(), p.norm.clone(), p.x.to_string(), p.y.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
