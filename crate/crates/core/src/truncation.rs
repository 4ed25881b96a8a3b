//! Jump truncation of increments using bipower-variation based levels.

use std::f64::consts::FRAC_PI_2;

use ndarray::Zip;

use crate::error::{Result, TedError};
use crate::model::IncrementMatrix;

/// Multiplier on `n^{-0.47} sqrt(BV)`.
pub const TRUNCATION_MULTIPLIER: f64 = 3.0;
/// Rate exponent in the truncation level.
pub const TRUNCATION_EXPONENT: f64 = 0.47;

/// Truncation levels for the dependent series and each covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationLevels {
    pub u_n: f64,
    pub v: Vec<f64>,
    pub bv_y: f64,
    pub bv_x: Vec<f64>,
}

impl TruncationLevels {
    pub fn from_bipower(n: usize, bv_y: f64, bv_x: Vec<f64>) -> Self {
        let rate = TRUNCATION_MULTIPLIER * (n as f64).powf(-TRUNCATION_EXPONENT);
        TruncationLevels {
            u_n: rate * bv_y.max(0.0).sqrt(),
            v: bv_x.iter().map(|b| rate * b.max(0.0).sqrt()).collect(),
            bv_y,
            bv_x,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        TruncationLevels {
            u_n: self.u_n,
            v: cols.iter().map(|&c| self.v[c]).collect(),
            bv_y: self.bv_y,
            bv_x: cols.iter().map(|&c| self.bv_x[c]).collect(),
        }
    }
}

/// `(π/2) Σ_{i≥1} |d[i-1]| |d[i]|`.
pub fn bipower_variation(d: &[f64]) -> Result<f64> {
    if d.len() < 2 {
        return Err(TedError::Argument(format!(
            "bipower variation needs at least 2 increments, got {}",
            d.len()
        )));
    }
    let s: f64 = d.windows(2).map(|w| w[0].abs() * w[1].abs()).sum();
    Ok(FRAC_PI_2 * s)
}

/// Levels `3 n^{-0.47} sqrt(BV)` from untruncated increments.
pub fn truncation_levels(incr: &IncrementMatrix) -> Result<TruncationLevels> {
    if incr.truncated {
        return Err(TedError::Argument("truncation levels need untruncated increments".into()));
    }
    let dy = incr.dy.to_vec();
    let bv_y = bipower_variation(&dy)?;
    let bv_x = incr
        .dx
        .columns()
        .into_iter()
        .map(|c| bipower_variation(&c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncationLevels::from_bipower(incr.n(), bv_y, bv_x))
}

/// Zero every increment whose magnitude exceeds its level.
pub fn truncate(incr: &IncrementMatrix, levels: &TruncationLevels) -> Result<IncrementMatrix> {
    if incr.truncated {
        return Err(TedError::Argument("increments are already truncated".into()));
    }
    if levels.v.len() != incr.p() {
        return Err(TedError::Argument(format!(
            "{} covariate levels for {} covariates",
            levels.v.len(),
            incr.p()
        )));
    }
    let u = levels.u_n;
    let dy = incr.dy.mapv(|d| if d.abs() <= u { d } else { 0.0 });
    let mut dx = incr.dx.clone();
    for (mut col, &v) in dx.columns_mut().into_iter().zip(&levels.v) {
        col.mapv_inplace(|d| if d.abs() <= v { d } else { 0.0 });
    }
    Ok(IncrementMatrix { dy, dx, truncated: true, levels: Some(levels.clone()) })
}

/// Fraction of entries (Y and all X) zeroed by truncation.
pub fn truncated_fraction(raw: &IncrementMatrix, trunc: &IncrementMatrix) -> f64 {
    let mut zeroed = raw.dy.iter().zip(&trunc.dy).filter(|(a, b)| **a != 0.0 && **b == 0.0).count();
    Zip::from(&raw.dx).and(&trunc.dx).for_each(|a, b| {
        if *a != 0.0 && *b == 0.0 {
            zeroed += 1;
        }
    });
    zeroed as f64 / (raw.n() * (raw.p() + 1)) as f64
}
