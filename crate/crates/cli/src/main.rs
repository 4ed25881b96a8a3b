mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use config::{parse_constant, parse_window_length, FileConfig};
use ted_core::baselines::{akx_integrated_beta, lasso_integrated_beta, BaselineConfig};
use ted_core::eval::{plot_points, run_benchmark, write_plot_points, BenchmarkSpec};
use ted_core::model::LogPricePanel;
use ted_core::sim::{simulate_paths, BetaRegime, DgpSpec};
use ted_core::ted::{ted_fit, Method, ThresholdRule};
use ted_core::tuning::{
    c_h_grid, default_constant_grid, resolve_single, select_c_h_mspe, Constant, PeriodEstimate, SelectionTable,
    TuningConfig, DEFAULT_C_H,
};
use ted_core::TedError;

const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "ted", about = "Integrated beta estimation for high-dimensional diffusion regressions")]
struct Cli {
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base seed for all simulated randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a panel and its true integrated betas.
    Simulate(SimulateArgs),
    /// Estimate integrated betas from a panel CSV.
    Estimate(EstimateArgs),
    /// Selection tables for the tuning constants.
    Tune(TuneArgs),
    /// Monte Carlo comparison of the estimators.
    Benchmark(BenchmarkArgs),
    /// Turn a benchmark report into long-format plot data.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    p: Option<usize>,
    /// Fine grid increments.
    #[arg(long)]
    n_all: Option<usize>,
    /// Observed increments; must divide n_all (default n_all).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s_p: Option<usize>,
    /// time_varying or constant.
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    no_jumps: bool,
    #[arg(long)]
    out: PathBuf,
    /// Truth CSV (default: truth.csv next to the panel).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
struct TuningArgs {
    /// auto or an integer.
    #[arg(long)]
    k_n: Option<String>,
    /// auto (grid selection), a number, or a comma-separated grid.
    #[arg(long)]
    c_lambda: Option<String>,
    #[arg(long)]
    c_tau: Option<String>,
    #[arg(long)]
    c_h: Option<String>,
    /// hard or soft.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    no_truncation: bool,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// ted, akx, akx-six or lasso.
    #[arg(long, default_value = "ted")]
    method: String,
    #[command(flatten)]
    tuning: TuningArgs,
    /// 1-based covariate indices for akx-six (default 1..6).
    #[arg(long)]
    factors: Option<String>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TuneArgs {
    /// Panels of consecutive periods; c_h is selected only with two or more.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// paper-desk or paper-scale.
    #[arg(long, default_value = "paper-desk")]
    preset: String,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated n values.
    #[arg(long)]
    n_values: Option<String>,
    /// Comma-separated regimes.
    #[arg(long)]
    regimes: Option<String>,
    /// Comma-separated methods.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    mspe_periods: Option<usize>,
    #[arg(long)]
    no_jumps: bool,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long)]
    output: PathBuf,
    /// Per-replication CSV.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

/// Write through a temporary file in the target directory, then rename.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Fail before any compute when an output location cannot be written.
fn check_writable(path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    tempfile::NamedTempFile::new_in(dir).map(drop).with_context(|| format!("cannot write to {}", dir.display()))
}

fn read_panel(path: &Path) -> Result<LogPricePanel> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    LogPricePanel::read_csv(BufReader::new(f)).with_context(|| format!("reading panel {}", path.display()))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|t| t.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad {what} {t:?}: {e}"))).collect()
}

fn tuning_config(a: &TuningArgs, file: &FileConfig, c_h_default: Constant) -> Result<TuningConfig> {
    let d = TuningConfig::default();
    let k_n = match &a.k_n {
        Some(s) => parse_window_length(s)?,
        None => file.window_length("tuning.k_n")?.unwrap_or(d.k_n),
    };
    let constant = |cli: &Option<String>, key: &str, grid: fn() -> Vec<f64>, dflt: Constant| -> Result<Constant> {
        match cli {
            Some(s) => parse_constant(s, grid),
            None => Ok(file.constant(key, grid)?.unwrap_or(dflt)),
        }
    };
    let c_lambda = constant(&a.c_lambda, "tuning.c_lambda", default_constant_grid, d.c_lambda)?;
    let c_tau = constant(&a.c_tau, "tuning.c_tau", default_constant_grid, d.c_tau)?;
    let c_h = constant(&a.c_h, "tuning.c_h", c_h_grid, c_h_default)?;
    let threshold_rule = match a.threshold.clone().or(file.string("tuning.threshold")?) {
        Some(s) => s.parse::<ThresholdRule>()?,
        None => d.threshold_rule,
    };
    let truncation = !a.no_truncation && file.bool("tuning.truncation")?.unwrap_or(true);
    let cfg = TuningConfig { k_n, c_lambda, c_tau, c_h, threshold_rule, truncation };
    cfg.validate()?;
    Ok(cfg)
}

fn baseline_config(file: &FileConfig, truncation: bool) -> Result<BaselineConfig> {
    let d = BaselineConfig::default();
    let cfg = BaselineConfig {
        block_len: file.usize("baseline.block_len")?.or(d.block_len),
        ridge: file.f64("baseline.ridge")?.unwrap_or(d.ridge),
        factor_subset: file.usize_list("baseline.factor_subset")?.or(d.factor_subset),
        lasso_grid: file.f64_list("baseline.lasso_grid")?.unwrap_or(d.lasso_grid),
        truncation,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn seed(cli: &Cli, file: &FileConfig) -> Result<u64> {
    Ok(cli.seed.or(file.u64("seed")?).unwrap_or(DEFAULT_SEED))
}

fn regime(s: Option<String>, file: &FileConfig) -> Result<BetaRegime> {
    match s.or(file.string("dgp.regime")?) {
        Some(r) => Ok(r.parse()?),
        None => Ok(BetaRegime::TimeVarying),
    }
}

fn apply_dgp_file(d: &mut DgpSpec, file: &FileConfig) -> Result<()> {
    if let Some(v) = file.usize("dgp.s_p")? {
        d.s_p = v;
    }
    if let Some(v) = file.f64("dgp.jump_sd")? {
        d.jump_sd = v;
    }
    if let Some(v) = file.f64("dgp.jump_intensity_x")? {
        d.jump_intensity_x = v;
    }
    if let Some(v) = file.f64("dgp.jump_intensity_y")? {
        d.jump_intensity_y = v;
    }
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs, file: &FileConfig) -> Result<()> {
    let p = a.p.or(file.usize("dgp.p")?).unwrap_or(10);
    let n_all = a.n_all.or(file.usize("dgp.n_all")?).unwrap_or(4000);
    let mut spec = DgpSpec::new(p, n_all, seed(cli, file)?).with_regime(regime(a.regime.clone(), file)?);
    apply_dgp_file(&mut spec, file)?;
    if let Some(s) = a.s_p {
        spec.s_p = s;
    }
    if a.no_jumps || !file.bool("dgp.jumps")?.unwrap_or(true) {
        spec = spec.without_jumps();
    }
    let n = a.n.unwrap_or(n_all);
    if n == 0 || n_all % n != 0 {
        return Err(TedError::Argument(format!("n = {n} must divide n_all = {n_all}")).into());
    }
    check_writable(&a.out)?;
    let sim = simulate_paths(&spec)?;
    let panel = sim.panel.subsample(n_all / n)?;
    let truth_path = a.truth.clone().unwrap_or_else(|| match a.out.parent() {
        Some(d) => d.join("truth.csv"),
        None => PathBuf::from("truth.csv"),
    });
    write_atomic(&a.out, |w| Ok(panel.write_csv(w)?))?;
    write_atomic(&truth_path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["coordinate", "integrated_beta"])?;
        for (j, b) in sim.true_integrated_beta.iter().enumerate() {
            out.write_record([format!("X{}", j + 1), b.to_string()])?;
        }
        out.flush()?;
        Ok(())
    })?;
    log::info!("wrote {} and {}", a.out.display(), truth_path.display());
    Ok(())
}

fn estimate(a: &EstimateArgs, file: &FileConfig) -> Result<()> {
    let method: Method = a.method.parse()?;
    check_writable(&a.output)?;
    let panel = read_panel(&a.input)?;
    let cfg = tuning_config(&a.tuning, file, Constant::Fixed(DEFAULT_C_H))?;
    let mut coords: Vec<usize> = (0..panel.p()).collect();
    let est = match method {
        Method::Ted => {
            let c_h = resolve_single(&cfg.c_h, "c_h")?;
            let fit = ted_fit(&panel, &cfg, c_h)?;
            log::info!("c_lambda = {}, c_tau = {}, h_n = {}", fit.instant.c_lambda, fit.instant.c_tau, fit.estimate.h_n);
            fit.estimate
        }
        Method::Akx | Method::AkxSix => {
            let mut base = baseline_config(file, cfg.truncation)?;
            if method == Method::AkxSix {
                let subset = match &a.factors {
                    Some(s) => parse_list::<usize>(s, "factor index")?
                        .into_iter()
                        .map(|j| j.checked_sub(1).ok_or_else(|| anyhow::anyhow!("factor indices are 1-based")))
                        .collect::<Result<Vec<_>>>()?,
                    None => base.factor_subset.clone().unwrap_or_else(|| (0..panel.p().min(6)).collect()),
                };
                coords = subset.clone();
                base.factor_subset = Some(subset);
            } else {
                base.factor_subset = None;
            }
            akx_integrated_beta(&panel, &base)?
        }
        Method::Lasso => lasso_integrated_beta(&panel, &baseline_config(file, cfg.truncation)?)?,
    };
    write_atomic(&a.output, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["coordinate", "raw", "thresholded"])?;
        for (k, &j) in coords.iter().enumerate() {
            out.write_record([format!("X{}", j + 1), est.raw[k].to_string(), est.thresholded[k].to_string()])?;
        }
        out.flush()?;
        Ok(())
    })
}

fn write_table(out: &mut csv::Writer<&mut dyn Write>, period: &str, t: &SelectionTable) -> Result<()> {
    for (c, l) in t.candidates.iter().zip(t.losses.iter()) {
        out.write_record([
            period.to_string(),
            t.parameter.to_string(),
            c.to_string(),
            l.map(|v| v.to_string()).unwrap_or_default(),
            (*c == t.selected).to_string(),
        ])?;
    }
    Ok(())
}

fn tune(a: &TuneArgs, file: &FileConfig) -> Result<()> {
    let default_c_h = if a.input.len() >= 2 { Constant::Grid(c_h_grid()) } else { Constant::Fixed(DEFAULT_C_H) };
    let cfg = tuning_config(&a.tuning, file, default_c_h)?;
    check_writable(&a.output)?;
    let panels = a.input.iter().map(|p| read_panel(p)).collect::<Result<Vec<_>>>()?;
    if let Some(p) = panels.iter().find(|p| p.p() != panels[0].p()) {
        bail!(TedError::Data(format!("all periods need the same p; found {} and {}", panels[0].p(), p.p())));
    }
    let fits = panels.iter().map(|p| ted_fit(p, &cfg, 0.0)).collect::<ted_core::Result<Vec<_>>>()?;
    let c_h_table = match &cfg.c_h {
        Constant::Grid(g) if panels.len() >= 2 => {
            let periods: Vec<PeriodEstimate> = fits
                .iter()
                .zip(panels.iter())
                .map(|(f, p)| PeriodEstimate { raw: f.estimate.raw.clone(), n: p.n(), p: p.p() })
                .collect();
            Some(select_c_h_mspe(&periods, g, cfg.threshold_rule)?)
        }
        Constant::Grid(g) if g.len() > 1 => {
            bail!(TedError::Config("selecting c_h needs at least two periods".into()))
        }
        _ => None,
    };
    for (i, f) in fits.iter().enumerate() {
        log::info!("period {}: c_lambda = {}, c_tau = {}", i + 1, f.instant.c_lambda, f.instant.c_tau);
    }
    if let Some(t) = &c_h_table {
        log::info!("c_h = {}", t.selected);
    }
    write_atomic(&a.output, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["period", "parameter", "candidate", "loss", "selected"])?;
        for (i, f) in fits.iter().enumerate() {
            let period = (i + 1).to_string();
            for t in [&f.c_lambda_table, &f.c_tau_table].into_iter().flatten() {
                write_table(&mut out, &period, t)?;
            }
        }
        if let Some(t) = &c_h_table {
            write_table(&mut out, "all", t)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn benchmark(cli: &Cli, a: &BenchmarkArgs, file: &FileConfig) -> Result<()> {
    let preset = file.string("benchmark.preset")?.filter(|_| a.preset == "paper-desk").unwrap_or(a.preset.clone());
    let seed = seed(cli, file)?;
    let mut spec = match preset.as_str() {
        "paper-desk" => BenchmarkSpec::paper_desk(seed),
        "paper-scale" => BenchmarkSpec::paper_scale(seed),
        other => bail!("unknown preset {other:?} (expected paper-desk or paper-scale)"),
    };
    if let Some(p) = a.p.or(file.usize("dgp.p")?) {
        spec.dgp = DgpSpec::new(p, spec.n_all(), seed);
    }
    if let Some(n_all) = file.usize("dgp.n_all")? {
        spec.dgp.n_all = n_all;
    }
    apply_dgp_file(&mut spec.dgp, file)?;
    if let Some(r) = a.reps.or(file.usize("benchmark.reps")?) {
        spec.reps = r;
    }
    if let Some(v) = a.n_values.as_deref() {
        spec.n_values = parse_list(v, "n value")?;
    } else if let Some(v) = file.usize_list("benchmark.n_values")? {
        spec.n_values = v;
    }
    let regimes = a.regimes.clone().map(|s| parse_list::<BetaRegime>(&s, "regime")).transpose()?;
    if let Some(r) = regimes.or(file.string_list("benchmark.regimes")?.map(|v| v.iter().map(|s| s.parse()).collect::<ted_core::Result<Vec<BetaRegime>>>()).transpose()?) {
        spec.regimes = r;
    }
    let methods = a.methods.clone().map(|s| parse_list::<Method>(&s, "method")).transpose()?;
    if let Some(m) = methods.or(file.string_list("benchmark.methods")?.map(|v| v.iter().map(|s| s.parse()).collect::<ted_core::Result<Vec<Method>>>()).transpose()?) {
        spec.methods = m;
    }
    if let Some(m) = a.mspe_periods.or(file.usize("benchmark.mspe_periods")?) {
        spec.mspe_periods = m;
    }
    spec.jumps = !a.no_jumps && file.bool("dgp.jumps")?.unwrap_or(true);
    spec.tuning = tuning_config(&a.tuning, file, Constant::Grid(c_h_grid()))?;
    spec.truncation = spec.tuning.truncation;
    spec.baseline = baseline_config(file, spec.truncation)?;
    if spec.methods.contains(&Method::AkxSix) && spec.baseline.factor_subset.is_none() {
        spec.baseline.factor_subset = Some((0..spec.p().min(6)).collect());
    }
    spec.validate()?;
    check_writable(&a.output)?;
    if let Some(r) = &a.records {
        check_writable(r)?;
    }
    let report = run_benchmark(&spec)?;
    log::info!("benchmark finished in {:.1}s", report.wall_clock_secs);
    let failures: usize = report.cells.iter().filter(|c| c.norm == ted_core::eval::Norm::L2).map(|c| c.failures).sum();
    if failures > 0 {
        log::warn!("{failures} estimator runs failed and were excluded");
    }
    write_atomic(&a.output, |w| Ok(report.write_csv(w)?))?;
    if let Some(r) = &a.records {
        write_atomic(r, |w| Ok(report.write_records_csv(w)?))?;
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let f = File::open(&a.input).with_context(|| format!("cannot open {}", a.input.display()))?;
    let points = plot_points(BufReader::new(f)).with_context(|| format!("reading report {}", a.input.display()))?;
    write_atomic(&a.output, |w| Ok(write_plot_points(&points, w)?))
}

fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(j) = cli.jobs.or(file.usize("jobs")?) {
        if j == 0 {
            bail!("--jobs must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a, &file),
        Command::Estimate(a) => estimate(a, &file),
        Command::Tune(a) => tune(a, &file),
        Command::Benchmark(a) => benchmark(cli, a, &file),
        Command::Report(a) => report(a),
    }
}

/// 1 usage or configuration, 2 data or I/O, 3 numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<TedError>() {
            return match e {
                TedError::Argument(_) | TedError::Config(_) => 1,
                TedError::Data(_) | TedError::Io(_) | TedError::Csv(_) => 2,
                TedError::Numerical(_) => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn version() -> String {
    format!(
        "{} (ted-core {}, {}-{}, {} build)",
        env!("CARGO_PKG_VERSION"),
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS,
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

fn main() -> ExitCode {
    let matches = match Cli::command().version(&*Box::leak(version().into_boxed_str())).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
