//! Ogata thinning for exponential and signed piecewise-constant Hawkes models.
//!
//! Trial `i` draws from ChaCha8 seeded with `seed + i`, so results do not
//! depend on how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SpikeDataset, SpikeTrain, Window};
use crate::error::{Error, Result};
use crate::model::{bin_of, spectral_radius, ExpHawkesModel, HawkesModel, PiecewiseHawkesModel};

pub const DEFAULT_EVENT_CAP: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub n_trials: usize,
    pub seed: u64,
    /// Per-trial event budget; exceeding it aborts the run.
    #[serde(default = "default_cap")]
    pub event_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_EVENT_CAP
}

impl SimConfig {
    pub fn new(horizon: f64, n_trials: usize, seed: u64) -> Self {
        Self { horizon, n_trials, seed, event_cap: DEFAULT_EVENT_CAP }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("at least one trial is required".into()));
        }
        Ok(())
    }
}

pub(crate) fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

/// Simulates `cfg.n_trials` independent trials on `[0, horizon]`.
pub fn simulate(model: &HawkesModel, cfg: &SimConfig) -> Result<SpikeDataset> {
    cfg.validate()?;
    model.validate()?;
    let rho = spectral_radius(&model.adjacency())?;
    if rho >= 1.0 {
        log::warn!("spectral radius {rho:.4} >= 1: the process may explode");
    }
    let trains = (0..cfg.n_trials)
        .into_par_iter()
        .map(|i| simulate_trial(model, cfg.horizon, cfg.event_cap, &mut trial_rng(cfg.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    SpikeDataset::new(Window::new(0.0, cfg.horizon)?, trains)
}

/// One trial on `[0, horizon]` driven by `rng`.
pub fn simulate_trial<R: Rng>(model: &HawkesModel, horizon: f64, cap: usize, rng: &mut R) -> Result<Vec<SpikeTrain>> {
    let times = match model {
        HawkesModel::Exponential(m) => thin_exponential(m, horizon, cap, rng)?,
        HawkesModel::Piecewise(m) => thin_piecewise(m, horizon, cap, rng)?,
    };
    times.into_iter().map(SpikeTrain::new).collect()
}

fn overflow(cap: usize) -> Error {
    Error::Numeric(format!("simulation exceeded the event cap of {cap} events"))
}

fn pick(weights: impl Iterator<Item = f64>, target: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (j, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(j);
            if target < acc {
                return Some(j);
            }
        }
    }
    last
}

fn thin_exponential<R: Rng>(m: &ExpHawkesModel, horizon: f64, cap: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let dim = m.mu.len();
    let mut out = vec![Vec::new(); dim];
    let mut excite = vec![0.0; dim];
    let mut now = 0.0;
    let mut count = 0usize;
    let base: f64 = m.mu.iter().sum();
    // intensities only decay between events, so the current total dominates
    let mut bound = base;
    loop {
        if bound <= 0.0 {
            break;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / bound;
        let s = now + wait;
        if s > horizon {
            break;
        }
        let decay = (-m.beta * wait).exp();
        excite.iter_mut().for_each(|x| *x *= decay);
        now = s;
        let total = base + excite.iter().sum::<f64>();
        let u: f64 = rng.random::<f64>() * bound;
        if u < total {
            let j = pick((0..dim).map(|j| m.mu[j] + excite[j]), u).unwrap_or(dim - 1);
            out[j].push(s);
            count += 1;
            if count > cap {
                return Err(overflow(cap));
            }
            for (i, x) in excite.iter_mut().enumerate() {
                *x += m.a[i][j] * m.beta;
            }
            bound = base + excite.iter().sum::<f64>();
        } else {
            bound = total;
        }
    }
    Ok(out)
}

fn thin_piecewise<R: Rng>(m: &PiecewiseHawkesModel, horizon: f64, cap: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let dim = m.mu.len();
    let k = m.k;
    // tail[l][b] = Σ_j max_{b' >= b} (α_{j,l}^{b'})⁺
    let tail: Vec<Vec<f64>> = (0..dim)
        .map(|l| {
            let mut t = vec![0.0; k];
            for j in 0..dim {
                let mut run: f64 = 0.0;
                for b in (0..k).rev() {
                    run = run.max(m.alpha[j][l][b].max(0.0));
                    t[b] += run;
                }
            }
            t
        })
        .collect();
    let support = m.support();
    let base: f64 = m.mu.iter().sum();
    let mut out = vec![Vec::new(); dim];
    let mut recent: std::collections::VecDeque<(f64, usize)> = Default::default();
    let mut now = 0.0;
    let mut count = 0usize;
    let mut lambda = vec![0.0; dim];
    loop {
        while recent.front().is_some_and(|&(t, _)| now - t > support) {
            recent.pop_front();
        }
        let bound = base + recent.iter().map(|&(t, l)| tail[l][bin_of(now - t, m.delta, k).unwrap_or(0)]).sum::<f64>();
        if bound <= 0.0 {
            break;
        }
        let s = now + rng.sample::<f64, _>(Exp1) / bound;
        if s > horizon {
            break;
        }
        now = s;
        lambda.copy_from_slice(&m.mu);
        for &(t, l) in &recent {
            if let Some(b) = bin_of(s - t, m.delta, k) {
                for (j, v) in lambda.iter_mut().enumerate() {
                    *v += m.alpha[j][l][b];
                }
            }
        }
        lambda.iter_mut().for_each(|v| *v = v.max(0.0));
        let total: f64 = lambda.iter().sum();
        let u: f64 = rng.random::<f64>() * bound;
        if u < total {
            let j = pick(lambda.iter().copied(), u).unwrap_or(dim - 1);
            out[j].push(s);
            recent.push_back((s, j));
            count += 1;
            if count > cap {
                return Err(overflow(cap));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_model(mu: Vec<f64>, a: Vec<Vec<f64>>, beta: f64) -> HawkesModel {
        ExpHawkesModel::new(mu, a, beta).unwrap().into()
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        let m: HawkesModel = ExpHawkesModel::poisson(vec![0.7], 1.0).unwrap().into();
        let d = simulate(&m, &SimConfig::new(1000.0, 1, 11)).unwrap();
        let n = d.total_events() as f64;
        assert!((n - 700.0).abs() <= 3.0 * 700f64.sqrt(), "count {n}");
    }

    #[test]
    fn univariate_stationary_rate() {
        let m = exp_model(vec![0.5], vec![vec![0.5]], 4.0);
        let d = simulate(&m, &SimConfig::new(5000.0, 1, 3)).unwrap();
        let n = d.total_events() as f64;
        assert!((n - 5000.0).abs() <= 0.05 * 5000.0, "count {n}");
    }

    #[test]
    fn deterministic_given_seed() {
        let m = exp_model(vec![0.5, 0.2], vec![vec![0.2, 0.3], vec![0.1, 0.0]], 3.0);
        let cfg = SimConfig::new(100.0, 3, 99);
        let a = simulate(&m, &cfg).unwrap();
        let b = simulate(&m, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &SimConfig::new(100.0, 3, 100)).unwrap();
        assert_ne!(a, c);
        // trial i only depends on seed + i
        assert_eq!(a.trial(1), c.trial(0));
    }

    #[test]
    fn superposition_is_poisson() {
        let m: HawkesModel = ExpHawkesModel::poisson(vec![0.3, 0.5, 0.2], 1.0).unwrap().into();
        let d = simulate(&m, &SimConfig::new(1000.0, 1, 5)).unwrap();
        let n = d.total_events() as f64;
        assert!((n - 1000.0).abs() <= 3.0 * 1000f64.sqrt());
    }

    #[test]
    fn event_cap_reports_overflow() {
        let m = exp_model(vec![1.0], vec![vec![1.5]], 5.0);
        let mut cfg = SimConfig::new(1000.0, 1, 1);
        cfg.event_cap = 5000;
        assert!(matches!(simulate(&m, &cfg), Err(Error::Numeric(_))));
    }

    #[test]
    fn piecewise_rates_match_stationary_mean() {
        // ρ = 0.1·(2 + 1) = 0.3, stationary rate μ/(1-ρ)
        let m: HawkesModel = PiecewiseHawkesModel::new(vec![1.0], vec![vec![vec![2.0, 1.0]]], 0.1).unwrap().into();
        let d = simulate(&m, &SimConfig::new(4000.0, 1, 8)).unwrap();
        let rate = d.total_events() as f64 / 4000.0;
        assert!((rate - 1.0 / 0.7).abs() < 0.05 * (1.0 / 0.7), "rate {rate}");
    }

    #[test]
    fn inhibition_lowers_rate() {
        let m: HawkesModel = PiecewiseHawkesModel::new(vec![2.0], vec![vec![vec![-5.0]]], 0.2).unwrap().into();
        let d = simulate(&m, &SimConfig::new(2000.0, 1, 4)).unwrap();
        let rate = d.total_events() as f64 / 2000.0;
        // renewal with a 0.2 s dead time: 1/(0.2 + 1/2)
        assert!((rate - 1.0 / 0.7).abs() < 0.05 * (1.0 / 0.7), "rate {rate}");
        let t = d.train(0, 0).times();
        assert!(t.windows(2).all(|w| w[1] - w[0] > 0.2));
    }
}
