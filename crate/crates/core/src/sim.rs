//! Synthetic jump-diffusion regression panels with known integrated betas.
//!
//! Paths are generated by Euler-Maruyama on the fine grid `i / n_all`. The
//! covariate volatility is `sqrt(ξ_t) L` with `L` the Cholesky factor of the
//! AR(1) correlation `ρ^{|i-j|}`; `ξ_t`, the residual volatility `ν_t` and the
//! beta volatility `ζ_t` are Ornstein-Uhlenbeck processes. Jumps are compound
//! Poisson, approximated by at most one arrival per fine step.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TedError};
use crate::model::LogPricePanel;

/// `dθ = rate (mean - θ) dt + vol dW`, started at `init`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub rate: f64,
    pub mean: f64,
    pub vol: f64,
    pub init: f64,
}

impl OuParams {
    pub const fn new(rate: f64, mean: f64, vol: f64, init: f64) -> Self {
        Self { rate, mean, vol, init }
    }

    fn step(&self, v: f64, dt: f64, dw: f64) -> f64 {
        v + self.rate * (self.mean - v) * dt + self.vol * dw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BetaRegime {
    TimeVarying,
    Constant,
}

impl BetaRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            BetaRegime::TimeVarying => "time_varying",
            BetaRegime::Constant => "constant",
        }
    }
}

impl std::str::FromStr for BetaRegime {
    type Err = TedError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_varying" | "time-varying" | "tv" => Ok(BetaRegime::TimeVarying),
            "constant" | "const" => Ok(BetaRegime::Constant),
            other => Err(TedError::Argument(format!("unknown beta regime {other:?}"))),
        }
    }
}

/// Full parameterization of the simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub p: usize,
    pub n_all: usize,
    /// Number of active (nonzero) coefficients; the first `s_p` covariates.
    pub s_p: usize,
    pub beta_regime: BetaRegime,
    pub ou_nu: OuParams,
    pub ou_xi: OuParams,
    pub ou_zeta: OuParams,
    pub corr_decay: f64,
    pub beta_drift: f64,
    pub beta_init: f64,
    pub jump_intensity_x: f64,
    pub jump_intensity_y: f64,
    pub jump_sd: f64,
    /// Keep the beta path and the raw fine-grid increments in the output.
    pub record_paths: bool,
    pub seed: u64,
}

/// `⌈ln p⌉` clamped to `[1, p]`.
pub fn default_sparsity(p: usize) -> usize {
    ((p as f64).ln().ceil() as usize).clamp(1, p.max(1))
}

impl DgpSpec {
    /// Simulation design defaults for `p` covariates on `n_all` fine steps.
    pub fn new(p: usize, n_all: usize, seed: u64) -> Self {
        DgpSpec {
            p,
            n_all,
            s_p: default_sparsity(p),
            beta_regime: BetaRegime::TimeVarying,
            ou_nu: OuParams::new(3.0, 0.12, 0.03, 0.15),
            ou_xi: OuParams::new(5.0, 0.3, 0.12, 0.5),
            ou_zeta: OuParams::new(3.0, 0.5, 0.2, 0.4),
            corr_decay: 0.8,
            beta_drift: 0.05,
            beta_init: 1.0,
            jump_intensity_x: 20.0,
            jump_intensity_y: 15.0,
            jump_sd: 0.05,
            record_paths: false,
            seed,
        }
    }

    pub fn with_regime(mut self, regime: BetaRegime) -> Self {
        self.beta_regime = regime;
        self
    }

    pub fn without_jumps(mut self) -> Self {
        self.jump_intensity_x = 0.0;
        self.jump_intensity_y = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TedError::Config(m));
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if self.n_all == 0 {
            return bad("n_all must be positive".into());
        }
        if self.s_p == 0 || self.s_p > self.p {
            return bad(format!("s_p = {} must lie in [1, p = {}]", self.s_p, self.p));
        }
        for (name, ou) in [("nu", &self.ou_nu), ("xi", &self.ou_xi), ("zeta", &self.ou_zeta)] {
            if !(ou.rate > 0.0) || !(ou.vol >= 0.0) || !ou.mean.is_finite() || !ou.init.is_finite() {
                return bad(format!("OU parameters for {name} need rate > 0 and vol >= 0"));
            }
        }
        if !(self.corr_decay > 0.0 && self.corr_decay < 1.0) {
            return bad(format!("corr_decay must lie in (0, 1), got {}", self.corr_decay));
        }
        let dt = 1.0 / self.n_all as f64;
        for (name, lam) in [("x", self.jump_intensity_x), ("y", self.jump_intensity_y)] {
            if !(lam >= 0.0) || lam * dt > 1.0 {
                return bad(format!("jump intensity for {name} must be >= 0 with intensity * dt <= 1"));
            }
        }
        if !(self.jump_sd >= 0.0) {
            return bad("jump_sd must be >= 0".into());
        }
        if !self.beta_drift.is_finite() || !self.beta_init.is_finite() {
            return bad("beta drift and initial value must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Fine-grid increment index the jump falls in.
    pub step: usize,
    /// Covariate index, or `None` for the dependent series.
    pub coord: Option<usize>,
    pub size: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Panel on the fine grid with `n_all` increments.
    pub panel: LogPricePanel,
    pub true_integrated_beta: Array1<f64>,
    /// `(n_all + 1) x p` beta path, when `record_paths` is set.
    pub true_beta_path: Option<Array2<f64>>,
    /// Raw simulated fine increments `(dy, dx)`, when `record_paths` is set.
    pub fine_increments: Option<(Array1<f64>, Array2<f64>)>,
    /// `ξ_t` on the fine grid.
    pub xi_path: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
}

impl SimOutput {
    pub fn y_jump_steps(&self) -> impl Iterator<Item = &JumpEvent> {
        self.jumps.iter().filter(|j| j.coord.is_none())
    }
}

/// Lower-triangular Cholesky factor of `Σ_ij = xi ρ^{|i-j|}` in closed form.
pub fn ar1_cholesky(xi: f64, rho: f64, p: usize) -> Result<Array2<f64>> {
    if !(xi > 0.0) {
        return Err(TedError::Argument(format!("xi must be positive, got {xi}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(TedError::Argument(format!("rho must lie in (0, 1), got {rho}")));
    }
    let s0 = xi.sqrt();
    let s1 = (xi * (1.0 - rho * rho)).sqrt();
    Ok(Array2::from_shape_fn((p, p), |(i, j)| {
        if j > i {
            0.0
        } else if j == 0 {
            s0 * rho.powi(i as i32)
        } else {
            s1 * rho.powi((i - j) as i32)
        }
    }))
}

/// Apply the unit-scale AR(1) Cholesky factor to `z` in O(p):
/// `(Lz)_0 = z_0`, `(Lz)_i = ρ (Lz)_{i-1} + sqrt(1-ρ²) z_i`.
fn ar1_factor_apply(rho: f64, z: &[f64], out: &mut [f64]) {
    let c = (1.0 - rho * rho).sqrt();
    let mut prev = 0.0;
    for (i, (&zi, o)) in z.iter().zip(out.iter_mut()).enumerate() {
        prev = if i == 0 { zi } else { rho * prev + c * zi };
        *o = prev;
    }
}

/// SplitMix64 finalizer, used to derive independent per-task seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for a tagged sub-task of a run.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix_seed(base), |acc, &t| mix_seed(acc ^ mix_seed(t)))
}

const DIFFUSION_STREAM: u64 = 0;
const JUMP_STREAM: u64 = 1;

/// Simulate one path of the design. Deterministic in `spec.seed`.
///
/// Diffusion shocks and jump draws come from separate streams of the same
/// seed, so switching jumps off (or setting `jump_sd = 0`) leaves the
/// continuous parts path-for-path identical.
pub fn simulate_paths(spec: &DgpSpec) -> Result<SimOutput> {
    spec.validate()?;
    let p = spec.p;
    let s_p = spec.s_p;
    let n = spec.n_all;
    let dt = 1.0 / n as f64;
    let sdt = dt.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(DIFFUSION_STREAM);
    let mut jrng = ChaCha8Rng::seed_from_u64(spec.seed);
    jrng.set_stream(JUMP_STREAM);

    let mut y = Array1::<f64>::zeros(n + 1);
    let mut x = Array2::<f64>::zeros((n + 1, p));
    let mut beta = vec![0.0; p];
    for b in beta.iter_mut().take(s_p) {
        *b = spec.beta_init;
    }
    let mut beta_sum = vec![0.0; p];
    let mut beta_path = spec.record_paths.then(|| Array2::<f64>::zeros((n + 1, p)));
    let mut fine = spec.record_paths.then(|| (Array1::<f64>::zeros(n), Array2::<f64>::zeros((n, p))));
    let mut xi_path = Vec::with_capacity(n + 1);
    let mut jumps = Vec::new();

    let (mut xi, mut nu, mut zeta) = (spec.ou_xi.init, spec.ou_nu.init, spec.ou_zeta.init);
    let mut z = vec![0.0; p];
    let mut dxc = vec![0.0; p];
    let px = spec.jump_intensity_x * dt;
    let py = spec.jump_intensity_y * dt;

    for i in 0..n {
        xi_path.push(xi);
        if let Some(bp) = beta_path.as_mut() {
            for j in 0..p {
                bp[[i, j]] = beta[j];
            }
        }
        for j in 0..s_p {
            beta_sum[j] += beta[j];
        }

        for zj in z.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *zj = e * sdt;
        }
        ar1_factor_apply(spec.corr_decay, &z, &mut dxc);
        let vol_x = xi.max(0.0).sqrt();
        for v in dxc.iter_mut() {
            *v *= vol_x;
        }
        let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sdt;
        let dw_xi: f64 = rng.sample::<f64, _>(StandardNormal) * sdt;
        let dw_nu: f64 = rng.sample::<f64, _>(StandardNormal) * sdt;
        let dw_zeta: f64 = rng.sample::<f64, _>(StandardNormal) * sdt;

        let mut dy = nu * dw;
        for j in 0..s_p {
            dy += beta[j] * dxc[j];
        }

        // Jump draws are always consumed so the stream layout is fixed.
        let mut row = x.row(i).to_owned();
        for (j, v) in dxc.iter().enumerate() {
            let u: f64 = jrng.gen();
            let size: f64 = jrng.sample::<f64, _>(StandardNormal) * spec.jump_sd;
            let mut d = *v;
            if u < px {
                d += size;
                jumps.push(JumpEvent { step: i, coord: Some(j), size });
            }
            if let Some((_, fdx)) = fine.as_mut() {
                fdx[[i, j]] = d;
            }
            row[j] += d;
        }
        let u: f64 = jrng.gen();
        let size: f64 = jrng.sample::<f64, _>(StandardNormal) * spec.jump_sd;
        if u < py {
            dy += size;
            jumps.push(JumpEvent { step: i, coord: None, size });
        }
        if let Some((fdy, _)) = fine.as_mut() {
            fdy[i] = dy;
        }
        y[i + 1] = y[i] + dy;
        x.row_mut(i + 1).assign(&row);

        // Beta shocks are drawn in both regimes to keep streams aligned.
        for b in beta.iter_mut().take(s_p) {
            let e: f64 = rng.sample(StandardNormal);
            if spec.beta_regime == BetaRegime::TimeVarying {
                *b += spec.beta_drift * dt + zeta * e * sdt;
            }
        }
        xi = spec.ou_xi.step(xi, dt, dw_xi);
        nu = spec.ou_nu.step(nu, dt, dw_nu);
        zeta = spec.ou_zeta.step(zeta, dt, dw_zeta);
    }
    xi_path.push(xi);
    if let Some(bp) = beta_path.as_mut() {
        for j in 0..p {
            bp[[n, j]] = beta[j];
        }
    }

    let true_integrated_beta = match spec.beta_regime {
        BetaRegime::Constant => {
            let mut t = Array1::zeros(p);
            for j in 0..s_p {
                t[j] = spec.beta_init;
            }
            t
        }
        BetaRegime::TimeVarying => Array1::from_iter(beta_sum.iter().map(|s| s * dt)),
    };

    Ok(SimOutput {
        panel: LogPricePanel::from_levels(y, x)?,
        true_integrated_beta,
        true_beta_path: beta_path,
        fine_increments: fine,
        xi_path,
        jumps,
    })
}
