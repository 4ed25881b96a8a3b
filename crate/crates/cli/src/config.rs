//! Optional TOML config file. Values are read by dotted key, e.g.
//! `tuning.c_lambda`, and only fill in what the command line leaves unset.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ted_core::tuning::{Constant, WindowLength};

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    table: toml::Table,
}

const KNOWN: &[&str] = &[
    "seed",
    "jobs",
    "dgp.p",
    "dgp.n_all",
    "dgp.s_p",
    "dgp.regime",
    "dgp.jumps",
    "dgp.jump_sd",
    "dgp.jump_intensity_x",
    "dgp.jump_intensity_y",
    "tuning.k_n",
    "tuning.c_lambda",
    "tuning.c_tau",
    "tuning.c_h",
    "tuning.threshold",
    "tuning.truncation",
    "baseline.ridge",
    "baseline.block_len",
    "baseline.factor_subset",
    "baseline.lasso_grid",
    "benchmark.preset",
    "benchmark.reps",
    "benchmark.n_values",
    "benchmark.regimes",
    "benchmark.methods",
    "benchmark.mspe_periods",
];

fn flatten(prefix: &str, t: &toml::Table, out: &mut Vec<String>) {
    for (k, v) in t {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(inner) => flatten(&key, inner, out),
            _ => out.push(key),
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().context("malformed TOML")?;
        let mut keys = Vec::new();
        flatten("", &table, &mut keys);
        for k in &keys {
            if !KNOWN.contains(&k.as_str()) {
                bail!("unknown config key {k:?}");
            }
        }
        Ok(FileConfig { table })
    }

    fn get(&self, key: &str) -> Option<&toml::Value> {
        let mut parts = key.split('.');
        let mut cur = self.table.get(parts.next()?)?;
        for p in parts {
            cur = cur.as_table()?.get(p)?;
        }
        Some(cur)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(*v)),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(v) => bail!("config key {key} must be a number, got {v}"),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(v) => bail!("config key {key} must be a nonnegative integer, got {v}"),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        Ok(self.usize(key)?.map(|v| v as u64))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => bail!("config key {key} must be true or false, got {v}"),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => bail!("config key {key} must be a string, got {v}"),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    other => bail!("config key {key} must hold numbers, got {other}"),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => bail!("config key {key} must be an array, got {v}"),
        }
    }

    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => bail!("config key {key} must hold nonnegative integers, got {other}"),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => bail!("config key {key} must be an array, got {v}"),
        }
    }

    pub fn string_list(&self, key: &str) -> Result<Option<Vec<String>>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    other => bail!("config key {key} must hold strings, got {other}"),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => bail!("config key {key} must be an array, got {v}"),
        }
    }

    /// `"auto"`, a number, or an array grid.
    pub fn constant(&self, key: &str, auto_grid: fn() -> Vec<f64>) -> Result<Option<Constant>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => parse_constant(s, auto_grid).map(Some),
            Some(toml::Value::Array(_)) => Ok(self.f64_list(key)?.map(Constant::Grid)),
            Some(_) => Ok(self.f64(key)?.map(Constant::Fixed)),
        }
    }

    pub fn window_length(&self, key: &str) -> Result<Option<WindowLength>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => parse_window_length(s).map(Some),
            Some(_) => Ok(self.usize(key)?.map(WindowLength::Fixed)),
        }
    }
}

/// `auto` (the given grid), a single number, or a comma-separated grid.
pub fn parse_constant(s: &str, auto_grid: fn() -> Vec<f64>) -> Result<Constant> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Constant::Grid(auto_grid()));
    }
    let vals = parse_f64_list(s)?;
    Ok(if vals.len() == 1 { Constant::Fixed(vals[0]) } else { Constant::Grid(vals) })
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("cannot parse {t:?} as a number")))
        .collect()
}

pub fn parse_window_length(s: &str) -> Result<WindowLength> {
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(WindowLength::Auto);
    }
    let k = s.trim().parse::<usize>().with_context(|| format!("k_n must be auto or an integer, got {s:?}"))?;
    Ok(WindowLength::Fixed(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        vec![1.0, 2.0]
    }

    #[test]
    fn dotted_lookup_and_types() {
        let c = FileConfig::parse("seed = 3\n[tuning]\nc_lambda = 0.5\nc_tau = [1, 2.5]\nk_n = \"auto\"\n").unwrap();
        assert_eq!(c.u64("seed").unwrap(), Some(3));
        assert_eq!(c.constant("tuning.c_lambda", grid).unwrap(), Some(Constant::Fixed(0.5)));
        assert_eq!(c.constant("tuning.c_tau", grid).unwrap(), Some(Constant::Grid(vec![1.0, 2.5])));
        assert_eq!(c.window_length("tuning.k_n").unwrap(), Some(WindowLength::Auto));
        assert_eq!(c.f64("tuning.c_h").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_types() {
        assert!(FileConfig::parse("[tuning]\nc_lamda = 1\n").is_err());
        let c = FileConfig::parse("seed = \"x\"\n").unwrap();
        assert!(c.u64("seed").is_err());
        assert!(FileConfig::parse("seed = ").is_err());
    }

    #[test]
    fn constant_strings() {
        assert_eq!(parse_constant("auto", grid).unwrap(), Constant::Grid(grid()));
        assert_eq!(parse_constant("0.3", grid).unwrap(), Constant::Fixed(0.3));
        assert_eq!(parse_constant("0.1, 0.2", grid).unwrap(), Constant::Grid(vec![0.1, 0.2]));
        assert!(parse_constant("x", grid).is_err());
        assert_eq!(parse_window_length("12").unwrap(), WindowLength::Fixed(12));
    }
}
