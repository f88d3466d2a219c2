//! Hawkes-driven jump-diffusion model of a membrane potential,
//!
//! ```text
//! dX_t = b(X_t) dt + σ(X_t) dW_t + a(X_{t-}) Σ_j dN_j(t),
//! ```
//!
//! with its Euler-Maruyama simulator and histogram-based penalised estimators
//! of σ², g = σ² + a² f, f, a² and b from one sampled path. Every estimator
//! projects a per-step response on indicator functions of `D` equal bins of
//! the observed range and picks `D` by penalised least squares.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{SamplePath, SpikeTrain};
use crate::error::{Error, Result};
use crate::model::{merged_events, HawkesModel};
use crate::sim::{simulate_trial, DEFAULT_EVENT_CAP};

const BLOW_UP: f64 = 1e6;

/// Histogram function on `D` equal bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedFunction {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of path states falling in each bin.
    pub counts: Vec<usize>,
    /// `true` where the value is backed by data.
    pub mask: Vec<bool>,
}

impl BinnedFunction {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.dim()]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn bin(&self, x: f64) -> usize {
        bin_index(x, self.lo(), self.hi(), self.dim())
    }

    /// Value of the bin holding `x` (clamped to the domain); unbacked bins
    /// borrow the value of the nearest backed bin.
    pub fn eval(&self, x: f64) -> f64 {
        let b = self.bin(x);
        if self.mask[b] {
            return self.values[b];
        }
        (1..self.dim())
            .flat_map(|d| [b.checked_sub(d), Some(b + d)])
            .flatten()
            .find(|&i| i < self.dim() && self.mask[i])
            .map_or(0.0, |i| self.values[i])
    }
}

fn bin_index(x: f64, lo: f64, hi: f64, d: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((x - lo) / (hi - lo) * d as f64).floor();
    if b < 0.0 {
        0
    } else {
        (b as usize).min(d - 1)
    }
}

fn equal_edges(lo: f64, hi: f64, d: usize) -> Vec<f64> {
    (0..=d).map(|i| if i == d { hi } else { lo + (hi - lo) * i as f64 / d as f64 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalarFn {
    Constant { value: f64 },
    Linear { slope: f64, intercept: f64 },
    Binned(BinnedFunction),
}

impl ScalarFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Constant { value } => *value,
            ScalarFn::Linear { slope, intercept } => slope * x + intercept,
            ScalarFn::Binned(f) => f.eval(x),
        }
    }

    pub fn zero() -> Self {
        ScalarFn::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDiffusionModel {
    pub b: ScalarFn,
    pub sigma: ScalarFn,
    pub a: ScalarFn,
    pub driver: HawkesModel,
}

/// Where the jump times of a simulated path come from.
#[derive(Debug, Clone, Copy)]
pub enum SpikeSource<'a> {
    Given(&'a [SpikeTrain]),
    /// Simulate the driver on `[0, T]` from a seed drawn off the path RNG.
    Simulate,
}

/// Event counts of all trains in `(t0 + k dt, t0 + (k+1) dt]`, `k < n`.
pub fn jump_counts(trains: &[SpikeTrain], t0: f64, dt: f64, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for (t, _) in merged_events(trains) {
        let k = ((t - t0) / dt).ceil() - 1.0;
        if k >= 0.0 && (k as usize) < n {
            counts[k as usize] += 1;
        }
    }
    counts
}

/// Euler-Maruyama path on `[0, horizon]` started at `x0`, deterministic in `seed`.
pub fn simulate_path(
    model: &JumpDiffusionModel,
    x0: f64,
    dt: f64,
    horizon: f64,
    spikes: SpikeSource<'_>,
    seed: u64,
) -> Result<SamplePath> {
    simulate_path_with(model, x0, dt, horizon, spikes, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn simulate_path_with(
    model: &JumpDiffusionModel,
    x0: f64,
    dt: f64,
    horizon: f64,
    spikes: SpikeSource<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<SamplePath> {
    if !(dt > 0.0 && dt.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!("need dt > 0 and T > 0, got dt={dt}, T={horizon}")));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidConfig("initial state must be finite".into()));
    }
    let n = (horizon / dt).round() as usize;
    if n == 0 {
        return Err(Error::InvalidConfig("horizon shorter than one step".into()));
    }
    let counts = match spikes {
        SpikeSource::Given(trains) => jump_counts(trains, 0.0, dt, n),
        SpikeSource::Simulate => {
            let driver_seed = rng.next_u64();
            let mut driver_rng = ChaCha8Rng::seed_from_u64(driver_seed);
            let trains = simulate_trial(&model.driver, horizon, DEFAULT_EVENT_CAP, &mut driver_rng)?;
            jump_counts(&trains, 0.0, dt, n)
        }
    };
    let sq = dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut x = x0;
    values.push(x);
    for (k, &c) in counts.iter().enumerate() {
        let xi: f64 = rng.sample(StandardNormal);
        let sigma = model.sigma.eval(x);
        let mut next = x + model.b.eval(x) * dt + sigma * sq * xi;
        if c > 0 {
            next += model.a.eval(x) * c as f64;
        }
        if !next.is_finite() || next.abs() > BLOW_UP {
            return Err(Error::Numeric(format!(
                "path left [-1e6, 1e6] at step {} (t = {:.6}, x = {next})",
                k + 1,
                (k + 1) as f64 * dt
            )));
        }
        x = next;
        values.push(x);
    }
    SamplePath::new(0.0, dt, values)
}

/// `Y_k = ΔX_k / Δ` and `Z_k = ΔX_k² / Δ`.
pub fn increments(path: &SamplePath) -> (Vec<f64>, Vec<f64>) {
    let dt = path.dt;
    path.values
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            (d / dt, d * d / dt)
        })
        .unzip()
}

/// Smooth cut-off: 1 on `|x| < 1`, `e^{1/3 + 1/(x²-4)}` on `1 <= |x| < 2`, 0 beyond.
pub fn truncation_phi(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1.0 {
        1.0
    } else if ax < 2.0 {
        (1.0 / 3.0 + 1.0 / (ax * ax - 4.0)).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimConfig {
    pub beta_trunc: f64,
    pub kappa_sigma: f64,
    pub kappa_g: f64,
    pub kappa_b: f64,
    pub dims: Vec<usize>,
    /// Kernel bandwidth of f̂ in mV; `None` uses `1.06 sd(X) N^{-1/5}`.
    pub nw_bandwidth: Option<f64>,
    /// Project `Y` instead of `Z` when estimating g.
    pub g_uses_y: bool,
}

impl Default for EstimConfig {
    fn default() -> Self {
        Self {
            beta_trunc: 0.25,
            kappa_sigma: 2.0,
            kappa_g: 2.0,
            kappa_b: 2.0,
            dims: vec![4, 8, 16, 32],
            nw_bandwidth: None,
            g_uses_y: false,
        }
    }
}

impl EstimConfig {
    /// Reads the estimator settings from a TOML file.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_trunc > 0.0 && self.beta_trunc < 0.5) {
            return Err(Error::InvalidConfig(format!("beta_trunc must lie in (0, 1/2), got {}", self.beta_trunc)));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::InvalidConfig("dimension collection must be non-empty and positive".into()));
        }
        for k in [self.kappa_sigma, self.kappa_g, self.kappa_b] {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidConfig(format!("penalty constants must be non-negative, got {k}")));
            }
        }
        if let Some(h) = self.nw_bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Observed states `X_0 .. X_{n-1}` paired with the per-step responses.
fn states(path: &SamplePath) -> &[f64] {
    &path.values[..path.len() - 1]
}

fn domain(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Bin means of `target` over states `x`, dimension chosen by
/// `contrast + penalty(D)`.
pub fn penalized_projection(
    x: &[f64],
    target: &[f64],
    dims: &[usize],
    penalty: impl Fn(usize) -> f64,
) -> Result<BinnedFunction> {
    let n = x.len();
    let min_dim = dims.iter().copied().min().unwrap_or(1);
    if n < 2 * min_dim {
        return Err(Error::InvalidData(format!("{n} observations are too few for {min_dim} bins")));
    }
    let (lo, hi) = domain(x);
    let base = target.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut best: Option<(f64, BinnedFunction)> = None;
    for &d in dims {
        let mut sums = vec![0.0; d];
        let mut counts = vec![0usize; d];
        for (&xi, &ti) in x.iter().zip(target) {
            let b = bin_index(xi, lo, hi, d);
            sums[b] += ti;
            counts[b] += 1;
        }
        let values: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
        let explained: f64 = values.iter().zip(&counts).map(|(v, &c)| c as f64 * v * v).sum::<f64>() / n as f64;
        let crit = base - explained + penalty(d);
        if best.as_ref().is_none_or(|(c, _)| crit < *c) {
            let mask = counts.iter().map(|&c| c > 0).collect();
            best = Some((crit, BinnedFunction { edges: equal_edges(lo, hi, d), values, counts, mask }));
        }
    }
    Ok(best.expect("non-empty dims").1)
}

fn check_path(path: &SamplePath) -> Result<()> {
    let (lo, hi) = domain(states(path));
    if !(hi > lo) {
        return Err(Error::InvalidData("path has a degenerate state range".into()));
    }
    Ok(())
}

/// σ̂² from the truncated squared increments, or from the raw ones when
/// `truncate` is off.
fn sigma2_with(path: &SamplePath, cfg: &EstimConfig, truncate: bool) -> Result<BinnedFunction> {
    cfg.validate()?;
    check_path(path)?;
    let (_, z) = increments(path);
    let scale = path.dt.powf(cfg.beta_trunc);
    let target: Vec<f64> = if truncate {
        z.iter().zip(path.values.windows(2)).map(|(zk, w)| zk * truncation_phi((w[1] - w[0]) / scale)).collect()
    } else {
        z
    };
    let n = target.len() as f64;
    penalized_projection(states(path), &target, &cfg.dims, |d| cfg.kappa_sigma * d as f64 / n)
}

pub fn fit_sigma2(path: &SamplePath, cfg: &EstimConfig) -> Result<BinnedFunction> {
    sigma2_with(path, cfg, true)
}

pub fn fit_g(path: &SamplePath, cfg: &EstimConfig) -> Result<BinnedFunction> {
    cfg.validate()?;
    check_path(path)?;
    let (y, z) = increments(path);
    let target = if cfg.g_uses_y { y } else { z };
    let n = target.len() as f64;
    penalized_projection(states(path), &target, &cfg.dims, |d| cfg.kappa_g * d as f64 / (n * path.dt))
}

/// Silverman-type default bandwidth `1.06 sd(x) N^{-1/5}`.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    1.06 * sd * n.powf(-0.2)
}

/// Nadaraya-Watson regression with a Gaussian kernel evaluated at `at`;
/// `None` where the weights vanish.
pub fn nadaraya_watson(x: &[f64], y: &[f64], h: f64, at: &[f64]) -> Vec<Option<f64>> {
    at.iter()
        .map(|&c| {
            let (mut num, mut den) = (0.0, 0.0);
            for (&xi, &yi) in x.iter().zip(y) {
                let u = (xi - c) / h;
                let w = (-0.5 * u * u).exp();
                num += w * yi;
                den += w;
            }
            (den >= 1e-12).then(|| num / den)
        })
        .collect()
}

/// f̂ on the bins of `grid`: regression of the summed driver intensity on
/// the state, intensities evaluated on the observed spike history.
pub fn fit_f(
    path: &SamplePath,
    spikes: &[SpikeTrain],
    driver: &HawkesModel,
    grid: &BinnedFunction,
    cfg: &EstimConfig,
) -> Result<(BinnedFunction, f64)> {
    cfg.validate()?;
    let x = states(path);
    let lambda = driver.total_intensity_grid(spikes, path.t0, path.dt, x.len())?;
    let h = match cfg.nw_bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(x),
    };
    if !(h > 0.0) {
        return Err(Error::InvalidData("bandwidth is zero for a constant path".into()));
    }
    let fitted = nadaraya_watson(x, &lambda, h, &grid.centers());
    let f = BinnedFunction {
        edges: grid.edges.clone(),
        values: fitted.iter().map(|v| v.unwrap_or(0.0)).collect(),
        counts: grid.counts.clone(),
        mask: fitted.iter().zip(&grid.mask).map(|(v, &m)| m && v.is_some()).collect(),
    };
    Ok((f, h))
}

/// Histogram on the same bins as `grid` holding `f` evaluated at its centres.
fn resample(f: &BinnedFunction, grid: &BinnedFunction) -> BinnedFunction {
    let centers = grid.centers();
    BinnedFunction {
        edges: grid.edges.clone(),
        values: centers.iter().map(|&c| f.eval(c)).collect(),
        counts: grid.counts.clone(),
        mask: centers.iter().zip(&grid.mask).map(|(&c, &m)| m && f.mask[f.bin(c)]).collect(),
    }
}

/// `(â², floored bins)` with `â² = max((ĝ - σ̂²) / f̂, 0)`, on the bins of `f`.
pub fn derive_a2(sigma2: &BinnedFunction, g: &BinnedFunction, f: &BinnedFunction) -> (BinnedFunction, usize) {
    let s = resample(sigma2, f);
    let gg = resample(g, f);
    let mut floored = 0;
    let mut values = Vec::with_capacity(f.dim());
    let mut mask = Vec::with_capacity(f.dim());
    for i in 0..f.dim() {
        let ok = f.mask[i] && s.mask[i] && gg.mask[i] && f.values[i] > 0.0;
        mask.push(ok);
        if !ok {
            values.push(0.0);
            continue;
        }
        let r = (gg.values[i] - s.values[i]) / f.values[i];
        if r < 0.0 {
            floored += 1;
        }
        values.push(r.max(0.0));
    }
    (BinnedFunction { edges: f.edges.clone(), values, counts: f.counts.clone(), mask }, floored)
}

/// Drift from `U_k = Y_k - a(X_k) ΔN_k / Δ`.
pub fn fit_drift(path: &SamplePath, spikes: &[SpikeTrain], a: &ScalarFn, cfg: &EstimConfig) -> Result<BinnedFunction> {
    cfg.validate()?;
    check_path(path)?;
    let (y, _) = increments(path);
    let x = states(path);
    let counts = jump_counts(spikes, path.t0, path.dt, y.len());
    let u: Vec<f64> = y
        .iter()
        .zip(x)
        .zip(&counts)
        .map(|((yk, &xk), &c)| if c > 0 { yk - a.eval(xk) * c as f64 / path.dt } else { *yk })
        .collect();
    let n = u.len() as f64;
    penalized_projection(x, &u, &cfg.dims, |d| cfg.kappa_b * d as f64 / (n * path.dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Constant,
    Linear,
}

/// Occupancy-weighted least-squares fit over the backed bins.
pub fn approximate(f: &BinnedFunction, shape: Shape) -> Result<ScalarFn> {
    let pts: Vec<(f64, f64, f64)> = f
        .centers()
        .into_iter()
        .zip(&f.values)
        .zip(f.mask.iter().zip(&f.counts))
        .filter(|(_, (&m, &c))| m && c > 0)
        .map(|((x, &v), (_, &c))| (x, v, c as f64))
        .collect();
    let needed = if shape == Shape::Constant { 1 } else { 2 };
    if pts.len() < needed {
        return Err(Error::InvalidData(format!("{} populated bins, {needed} needed", pts.len())));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    Ok(match shape {
        Shape::Constant => ScalarFn::Constant { value: my },
        Shape::Linear => {
            let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
            let slope = sxy / sxx;
            ScalarFn::Linear { slope, intercept: my - slope * mx }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximations {
    pub sigma2: ScalarFn,
    pub a: ScalarFn,
    pub b: ScalarFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCoefficients {
    pub domain: (f64, f64),
    pub sigma2: BinnedFunction,
    pub b: BinnedFunction,
    pub g: Option<BinnedFunction>,
    pub f: Option<BinnedFunction>,
    pub a2: Option<BinnedFunction>,
    /// Signed jump size on the bins of `a2`.
    pub a: Option<BinnedFunction>,
    pub a_sign: f64,
    pub floored_bins: usize,
    pub bandwidth: Option<f64>,
    pub approximations: Approximations,
    /// Driving model used for regeneration, when the fit has jumps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<HawkesModel>,
}

impl FittedCoefficients {
    /// Model made of the constant/linear approximations.
    pub fn to_model(&self, driver: HawkesModel) -> JumpDiffusionModel {
        let s2 = match self.approximations.sigma2 {
            ScalarFn::Constant { value } => value,
            ref other => other.eval(0.5 * (self.domain.0 + self.domain.1)),
        };
        JumpDiffusionModel {
            b: self.approximations.b.clone(),
            sigma: ScalarFn::Constant { value: s2.max(0.0).sqrt() },
            a: self.approximations.a.clone(),
            driver,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Sign of the mean increment removed by the truncation on steps with events.
fn jump_sign(path: &SamplePath, spikes: &[SpikeTrain], cfg: &EstimConfig) -> f64 {
    let counts = jump_counts(spikes, path.t0, path.dt, path.len() - 1);
    let scale = path.dt.powf(cfg.beta_trunc);
    let s: f64 = path
        .values
        .windows(2)
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(w, _)| {
            let d = w[1] - w[0];
            d * (1.0 - truncation_phi(d / scale))
        })
        .sum();
    if s < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Full estimation chain σ̂², ĝ, f̂, â², b̂ with the approximations used for
/// regeneration.
pub fn fit_jumpdiff(
    path: &SamplePath,
    spikes: &[SpikeTrain],
    driver: &HawkesModel,
    cfg: &EstimConfig,
) -> Result<FittedCoefficients> {
    let sigma2 = fit_sigma2(path, cfg)?;
    let g = fit_g(path, cfg)?;
    let finer = if g.dim() >= sigma2.dim() { &g } else { &sigma2 };
    let (f, h) = fit_f(path, spikes, driver, finer, cfg)?;
    let (a2, floored) = derive_a2(&sigma2, &g, &f);
    let sign = jump_sign(path, spikes, cfg);
    let a = BinnedFunction { values: a2.values.iter().map(|v| sign * v.sqrt()).collect(), ..a2.clone() };
    let a_approx = approximate(&a, Shape::Linear)?;
    let b = fit_drift(path, spikes, &a_approx, cfg)?;
    Ok(FittedCoefficients {
        domain: domain(states(path)),
        approximations: Approximations {
            sigma2: approximate(&sigma2, Shape::Constant)?,
            a: a_approx,
            b: approximate(&b, Shape::Linear)?,
        },
        sigma2,
        b,
        g: Some(g),
        f: Some(f),
        a2: Some(a2),
        a: Some(a),
        a_sign: sign,
        floored_bins: floored,
        bandwidth: Some(h),
        driver: Some(driver.clone()),
    })
}

/// Diffusion-only fit that ignores jumps: no truncation and no jump
/// correction in the drift.
pub fn fit_diffusion_only(path: &SamplePath, cfg: &EstimConfig) -> Result<FittedCoefficients> {
    fit_diffusion(path, cfg, false)
}

/// Diffusion-only fit with `truncate` controlling whether jump-sized
/// increments are cut out of σ̂².
pub fn fit_diffusion(path: &SamplePath, cfg: &EstimConfig, truncate: bool) -> Result<FittedCoefficients> {
    let sigma2 = sigma2_with(path, cfg, truncate)?;
    let b = fit_drift(path, &[], &ScalarFn::zero(), cfg)?;
    Ok(FittedCoefficients {
        domain: domain(states(path)),
        approximations: Approximations {
            sigma2: approximate(&sigma2, Shape::Constant)?,
            a: ScalarFn::zero(),
            b: approximate(&b, Shape::Linear)?,
        },
        sigma2,
        b,
        g: None,
        f: None,
        a2: None,
        a: None,
        a_sign: 1.0,
        floored_bins: 0,
        bandwidth: None,
        driver: None,
    })
}

/// Initial-state law of regenerated paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialState {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Uniform { lo: -55.0, hi: -35.0 }
    }
}

/// Draws `x0`, simulates the driver on `[0, T]` and then the path of the
/// approximated model; one ChaCha8 stream seeded by `seed` feeds all three.
pub fn regenerate(
    fitted: &FittedCoefficients,
    driver: &HawkesModel,
    horizon: f64,
    dt: f64,
    x0: InitialState,
    seed: u64,
) -> Result<SamplePath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = match x0 {
        InitialState::Fixed { value } => value,
        InitialState::Uniform { lo, hi } => {
            if !(hi > lo) {
                return Err(Error::InvalidConfig(format!("empty initial-state interval [{lo}, {hi}]")));
            }
            rng.random_range(lo..hi)
        }
    };
    let model = fitted.to_model(driver.clone());
    simulate_path_with(&model, start, dt, horizon, SpikeSource::Simulate, &mut rng)
}
