//! Goodness-of-fit test of a fitted Hawkes model by time rescaling.
//!
//! For every neuron, `p_n = ⌊n^{2/3}⌋` trials are drawn at random; each trial's
//! events are mapped through the fitted compensator, the rescaled trials are
//! concatenated, and the points below a budget `p_n θ` are compared with the
//! uniform law by a Kolmogorov-Smirnov statistic. Repeating the draw gives an
//! acceptance rate per neuron.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SpikeDataset;
use crate::error::{Error, Result};
use crate::model::HawkesModel;
use crate::sim::trial_rng;

/// `⌊n^{2/3}⌋`, computed exactly as the largest `p` with `p³ <= n²`.
pub fn subsample_size(n: usize) -> usize {
    let n2 = (n as u128) * (n as u128);
    let mut p = (n2 as f64).cbrt().floor() as u128;
    while p * p * p > n2 {
        p -= 1;
    }
    while (p + 1) * (p + 1) * (p + 1) <= n2 {
        p += 1;
    }
    p as usize
}

/// Compensator of neuron `j` at each of its events in trial `i`.
pub fn rescale_trial(model: &HawkesModel, data: &SpikeDataset, i: usize, j: usize) -> Result<Vec<f64>> {
    if i >= data.n_trials() {
        return Err(Error::IndexOutOfRange { index: i, size: data.n_trials() });
    }
    let trial = data.trial(i);
    let out = model.compensator_at(trial, j, trial[j].times())?;
    if out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Numeric(format!("rescaled times of neuron {j} in trial {i} are not increasing")));
    }
    Ok(out)
}

/// Concatenates rescaled trials, shifting each by the budgets of the
/// trials before it.
pub fn cumulate(rescaled: &[Vec<f64>], budgets: &[f64]) -> Vec<f64> {
    let mut offset = 0.0;
    let mut out = Vec::with_capacity(rescaled.iter().map(Vec::len).sum());
    for (points, budget) in rescaled.iter().zip(budgets) {
        out.extend(points.iter().map(|x| x + offset));
        offset += budget;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsStatistic {
    pub z: f64,
    pub n: usize,
    /// No point fell below the budget.
    pub degenerate: bool,
}

/// `√N sup_u |F̂_N(u) - u|` for the sorted points in `[0, budget]` rescaled
/// to the unit interval.
pub fn ks_statistic(points: &[f64], budget: f64) -> KsStatistic {
    let kept: Vec<f64> = points.iter().copied().filter(|&x| x <= budget).map(|x| x / budget).collect();
    let n = kept.len();
    if n == 0 {
        return KsStatistic { z: 0.0, n, degenerate: true };
    }
    let z = sup_distance(&kept, |u| u);
    KsStatistic { z: (n as f64).sqrt() * z, n, degenerate: false }
}

/// `sup |F̂_N - F|` for sorted samples.
fn sup_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Kolmogorov distribution function `P(sup|B| <= x)`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        // theta-function form converges fast for small x
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-odd * odd * pi2 / (8.0 * x * x)).exp()
            })
            .sum();
        return (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * kf * kf * x * x).exp()
        })
        .sum();
    1.0 - 2.0 * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    /// Rejection threshold `q_{1-α}` of the asymptotic law.
    pub asymptotic: f64,
    /// Finite-sample quantile linked by Stephens' correction.
    pub finite_sample: f64,
}

/// Kolmogorov quantile of order `1 - alpha` by bisection.
pub fn quantile(alpha: f64, p_n: usize) -> Result<Quantile> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("test level must lie in (0, 1), got {alpha}")));
    }
    if p_n == 0 {
        return Err(Error::InvalidConfig("subsample size must be at least 1".into()));
    }
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (1e-3, 10.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    let s = (p_n as f64).sqrt();
    Ok(Quantile { asymptotic: q, finite_sample: q / (s + 0.12 + 0.11 / s) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `samples` against Exp(1), with the asymptotic
/// p-value under Stephens' correction.
pub fn ks_test_exp1(samples: &[f64]) -> KsTest {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return KsTest { statistic: 0.0, p_value: 1.0 };
    }
    let d = sup_distance(&s, |x| -(-x.max(0.0)).exp_m1());
    let sn = (s.len() as f64).sqrt();
    let p = 1.0 - kolmogorov_cdf((sn + 0.12 + 0.11 / sn) * d);
    KsTest { statistic: d, p_value: p.clamp(0.0, 1.0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GofConfig {
    pub alpha: f64,
    /// Rescaled-time budget per trial; `None` uses 0.9 of the feasibility bound.
    pub theta: Option<f64>,
    pub n_subsamples: usize,
    pub seed: u64,
}

impl Default for GofConfig {
    fn default() -> Self {
        Self { alpha: 0.05, theta: None, n_subsamples: 100, seed: 0 }
    }
}

impl GofConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("test level must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_subsamples == 0 {
            return Err(Error::InvalidConfig("at least one subsample is required".into()));
        }
        if let Some(t) = self.theta {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("theta must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronGof {
    pub acceptance_rate: f64,
    pub z: Vec<f64>,
    pub n_points: Vec<usize>,
    pub theta: Vec<f64>,
    /// Draws accepted only because no point was retained.
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub p_n: usize,
    pub quantile: Quantile,
    pub neurons: Vec<NeuronGof>,
}

impl GofReport {
    pub fn mean_acceptance(&self) -> f64 {
        self.neurons.iter().map(|n| n.acceptance_rate).sum::<f64>() / self.neurons.len().max(1) as f64
    }
}

/// Rescaled events and budget `Λ(T_max)` of every (trial, neuron).
type Rescaled = Vec<Vec<(Vec<f64>, f64)>>;

fn rescale_all(model: &HawkesModel, data: &SpikeDataset, trials: &[usize]) -> Result<Rescaled> {
    let m = data.n_neurons();
    if model.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, found: model.dim() });
    }
    trials
        .par_iter()
        .map(|&i| {
            (0..m)
                .map(|j| {
                    let pts = rescale_trial(model, data, i, j)?;
                    let budget = model.compensator(data.trial(i), j, data.t_max())?;
                    Ok((pts, budget))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

fn draw(cfg: &GofConfig, d: usize, n: usize, p_n: usize) -> Vec<usize> {
    let mut rng = trial_rng(cfg.seed, d);
    let mut s = sample(&mut rng, n, p_n).into_vec();
    s.sort_unstable();
    s
}

/// Statistic of one neuron on the trials of one draw, given per-trial
/// rescaled points and budgets in draw order.
fn test_draw(parts: &[&(Vec<f64>, f64)], p_n: usize, theta: Option<f64>) -> (KsStatistic, f64) {
    let points: Vec<Vec<f64>> = parts.iter().map(|p| p.0.clone()).collect();
    let budgets: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let total: f64 = budgets.iter().sum();
    let theta = theta.unwrap_or(0.9 * total / p_n as f64);
    let merged = cumulate(&points, &budgets);
    (ks_statistic(&merged, p_n as f64 * theta), theta)
}

fn assemble(per_draw: Vec<Vec<(KsStatistic, f64)>>, m: usize, q: Quantile, p_n: usize) -> GofReport {
    let draws = per_draw.len();
    let neurons = (0..m)
        .map(|j| {
            let stats: Vec<(KsStatistic, f64)> = per_draw.iter().map(|d| d[j]).collect();
            let accepted = stats.iter().filter(|(s, _)| s.z <= q.asymptotic).count();
            NeuronGof {
                acceptance_rate: accepted as f64 / draws as f64,
                z: stats.iter().map(|(s, _)| s.z).collect(),
                n_points: stats.iter().map(|(s, _)| s.n).collect(),
                theta: stats.iter().map(|&(_, t)| t).collect(),
                degenerate: stats.iter().filter(|(s, _)| s.degenerate).count(),
            }
        })
        .collect();
    GofReport { p_n, quantile: q, neurons }
}

/// Tests `model` on subsamples of the trials it was fitted on.
pub fn run_gof(model: &HawkesModel, data: &SpikeDataset, cfg: &GofConfig) -> Result<GofReport> {
    cfg.validate()?;
    let n = data.n_trials();
    let m = data.n_neurons();
    let p_n = subsample_size(n);
    let q = quantile(cfg.alpha, p_n)?;
    let all: Vec<usize> = (0..n).collect();
    let rescaled = rescale_all(model, data, &all)?;
    let per_draw: Vec<Vec<(KsStatistic, f64)>> = (0..cfg.n_subsamples)
        .into_par_iter()
        .map(|d| {
            let s = draw(cfg, d, n, p_n);
            (0..m)
                .map(|j| {
                    let parts: Vec<&(Vec<f64>, f64)> = s.iter().map(|&i| &rescaled[i][j]).collect();
                    test_draw(&parts, p_n, cfg.theta)
                })
                .collect()
        })
        .collect();
    Ok(assemble(per_draw, m, q, p_n))
}

/// Variant that refits the model on the complement of every subsample
/// before testing it on the subsample.
pub fn run_gof_holdout<F>(data: &SpikeDataset, cfg: &GofConfig, fit: F) -> Result<GofReport>
where
    F: Fn(&SpikeDataset) -> Result<HawkesModel> + Sync,
{
    cfg.validate()?;
    let n = data.n_trials();
    let m = data.n_neurons();
    let p_n = subsample_size(n);
    if p_n >= n {
        return Err(Error::InvalidConfig(format!("hold-out testing needs more than {p_n} trials")));
    }
    let q = quantile(cfg.alpha, p_n)?;
    let per_draw = (0..cfg.n_subsamples)
        .into_par_iter()
        .map(|d| {
            let s = draw(cfg, d, n, p_n);
            let rest: Vec<usize> = (0..n).filter(|i| !s.contains(i)).collect();
            let model = fit(&data.select_trials(&rest)?)?;
            let rescaled = rescale_all(&model, data, &s)?;
            Ok((0..m)
                .map(|j| {
                    let parts: Vec<&(Vec<f64>, f64)> = rescaled.iter().map(|r| &r[j]).collect();
                    test_draw(&parts, p_n, cfg.theta)
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(assemble(per_draw, m, q, p_n))
}
