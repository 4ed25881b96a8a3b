//! Synchronized log-price panels, increments, and non-overlapping windows.
//!
//! All indices are 0-based: increment `i` is `A[i + 1] - A[i]`, and window
//! `b` covers increments `b * k_n .. (b + 1) * k_n`.

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Result, TedError};
use crate::truncation::TruncationLevels;

const GRID_TOL: f64 = 1e-12;

/// Log prices of one dependent series `Y` and `p` covariates `X` on the
/// regular grid `0, 1/n, ..., 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPricePanel {
    times: Vec<f64>,
    y: Array1<f64>,
    x: Array2<f64>,
}

impl LogPricePanel {
    /// Build a panel from explicit grid times. The grid must be the regular
    /// grid on `[0, 1]`; irregular timestamps are rejected, not resampled.
    pub fn new(times: Vec<f64>, y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        let len = times.len();
        if len < 2 {
            return Err(TedError::Data("panel needs at least two grid points".into()));
        }
        if y.len() != len || x.nrows() != len {
            return Err(TedError::Data(format!(
                "length mismatch: {} times, {} Y values, {} X rows",
                len,
                y.len(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(TedError::Data("panel has no covariates".into()));
        }
        let n = len - 1;
        let dt = 1.0 / n as f64;
        if times[0].abs() > GRID_TOL || (times[n] - 1.0).abs() > GRID_TOL {
            return Err(TedError::Data("grid must start at 0 and end at 1".into()));
        }
        for (i, w) in times.windows(2).enumerate() {
            if (w[1] - w[0] - dt).abs() >= GRID_TOL {
                return Err(TedError::Data(format!(
                    "irregular grid spacing at row {}: expected {dt}, got {}",
                    i + 1,
                    w[1] - w[0]
                )));
            }
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(TedError::Data(format!("non-finite time at row {i}")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(TedError::Data(format!("non-finite Y at row {i}")));
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(TedError::Data(format!("non-finite X{} at row {i}", j + 1)));
        }
        Ok(Self { times, y, x })
    }

    /// Build a panel on the canonical regular grid `i / n`.
    pub fn from_levels(y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        let n = y.len().saturating_sub(1);
        if n == 0 {
            return Err(TedError::Data("panel needs at least two grid points".into()));
        }
        let times = regular_grid(n);
        Self::new(times, y, x)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    /// Number of increments.
    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Grid spacing `1 / n`.
    pub fn delta(&self) -> f64 {
        1.0 / self.n() as f64
    }

    /// Keep every `step`-th grid point. `step` must divide `n`.
    pub fn subsample(&self, step: usize) -> Result<Self> {
        if step == 0 || self.n() % step != 0 {
            return Err(TedError::Argument(format!(
                "subsampling step {step} does not divide n = {}",
                self.n()
            )));
        }
        let y = self.y.slice(s![..;step]).to_owned();
        let x = self.x.slice(s![..;step, ..]).to_owned();
        Self::from_levels(y, x)
    }

    /// Subsample to exactly `n` increments.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        if n == 0 || self.n() % n != 0 {
            return Err(TedError::Argument(format!(
                "cannot subsample n = {} to {n} increments",
                self.n()
            )));
        }
        self.subsample(self.n() / n)
    }

    /// Panel restricted to a subset of covariate columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(TedError::Argument("empty covariate subset".into()));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= self.p()) {
            return Err(TedError::Argument(format!(
                "covariate index {c} out of range (p = {})",
                self.p()
            )));
        }
        let x = self.x.select(Axis(1), cols);
        Ok(Self { times: self.times.clone(), y: self.y.clone(), x })
    }

    /// Parse the `time,Y,X1,...,Xp` CSV layout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 {
            return Err(TedError::Data("header must be time,Y,X1,...,Xp with p >= 1".into()));
        }
        if &headers[0] != "time" || &headers[1] != "Y" {
            return Err(TedError::Data(format!(
                "header must start with time,Y; found {},{}",
                &headers[0], &headers[1]
            )));
        }
        let p = headers.len() - 2;
        for j in 0..p {
            let expected = format!("X{}", j + 1);
            if headers[j + 2] != *expected {
                return Err(TedError::Data(format!(
                    "column {} must be named {expected}, found {}",
                    j + 3,
                    &headers[j + 2]
                )));
            }
        }
        let mut times = Vec::new();
        let mut y = Vec::new();
        let mut x = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != p + 2 {
                return Err(TedError::Data(format!(
                    "row {} has {} fields, expected {}",
                    row + 1,
                    rec.len(),
                    p + 2
                )));
            }
            let parse = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|_| {
                    TedError::Data(format!("row {}: cannot parse {:?} in column {}", row + 1, &rec[k], &headers[k]))
                })
            };
            times.push(parse(0)?);
            y.push(parse(1)?);
            for k in 2..(p + 2) {
                x.push(parse(k)?);
            }
        }
        let rows = times.len();
        let x = Array2::from_shape_vec((rows, p), x).map_err(|e| TedError::Data(e.to_string()))?;
        Self::new(times, Array1::from(y), x)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string(), "Y".to_string()];
        header.extend((1..=self.p()).map(|j| format!("X{j}")));
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut rec = Vec::with_capacity(self.p() + 2);
            rec.push(self.times[i].to_string());
            rec.push(self.y[i].to_string());
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn regular_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// First differences of a panel, optionally with jump-truncated entries
/// zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementMatrix {
    pub dy: Array1<f64>,
    pub dx: Array2<f64>,
    pub truncated: bool,
    pub levels: Option<TruncationLevels>,
}

impl IncrementMatrix {
    pub fn n(&self) -> usize {
        self.dy.len()
    }

    pub fn p(&self) -> usize {
        self.dx.ncols()
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n() as f64
    }

    /// Restrict to a covariate subset, keeping truncation state.
    pub fn select_columns(&self, cols: &[usize]) -> IncrementMatrix {
        IncrementMatrix {
            dy: self.dy.clone(),
            dx: self.dx.select(Axis(1), cols),
            truncated: self.truncated,
            levels: self.levels.as_ref().map(|l| l.select_columns(cols)),
        }
    }
}

/// Exact first differences `A[i + 1] - A[i]` of every series.
pub fn increments(panel: &LogPricePanel) -> IncrementMatrix {
    let y = panel.y();
    let x = panel.x();
    let dy = &y.slice(s![1..]) - &y.slice(s![..-1]);
    let dx = &x.slice(s![1.., ..]) - &x.slice(s![..-1, ..]);
    IncrementMatrix { dy, dx, truncated: false, levels: None }
}

/// One local regression window: `k_n` consecutive increments.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowView {
    /// Index of the first increment in the source matrix.
    pub start: usize,
    pub yv: Array1<f64>,
    pub xv: Array2<f64>,
    /// Time span the window's second moments are normalized by. For raw
    /// windows this is `k_n * Δ_n`.
    pub span: f64,
}

impl WindowView {
    pub fn len(&self) -> usize {
        self.yv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.yv.is_empty()
    }

    pub fn p(&self) -> usize {
        self.xv.ncols()
    }

    /// Normalized Gram matrix `xvᵀ xv / span`.
    pub fn gram(&self) -> Array2<f64> {
        self.xv.t().dot(&self.xv) / self.span
    }

    /// Normalized cross moment `xvᵀ yv / span`.
    pub fn cross(&self) -> Array1<f64> {
        self.xv.t().dot(&self.yv) / self.span
    }
}

/// Split increments into `⌊n / k_n⌋` non-overlapping windows starting at
/// `0, k_n, 2 k_n, ...`. A trailing remainder shorter than `k_n` is dropped.
pub fn window_blocks(incr: &IncrementMatrix, k_n: usize) -> Result<Vec<WindowView>> {
    if k_n == 0 {
        return Err(TedError::Argument("window length k_n must be positive".into()));
    }
    let n = incr.n();
    if k_n > n {
        return Err(TedError::Argument(format!("window length {k_n} exceeds n = {n}")));
    }
    let span = k_n as f64 * incr.delta();
    Ok((0..n / k_n)
        .map(|b| {
            let start = b * k_n;
            WindowView {
                start,
                yv: incr.dy.slice(s![start..start + k_n]).to_owned(),
                xv: incr.dx.slice(s![start..start + k_n, ..]).to_owned(),
                span,
            }
        })
        .collect())
}
