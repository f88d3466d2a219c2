//! Least-squares LASSO estimation of piecewise-constant Hawkes kernels.
//!
//! With covariates `c_0(t) = 1` and `c_{ℓ,k}(t) = #{T ∈ N_ℓ : t - T ∈ ((k-1)δ, kδ]}`
//! the intensity of neuron `j` is linear in `θ = (μ_j, α_{j,·,·})` and the
//! point-process least-squares contrast is `θᵀGθ - 2θᵀv` with
//! `G = Σ_trials ∫ c cᵀ dt` and `v = Σ_{T ∈ N_j} c(T⁻)`. `G` is shared by every
//! target neuron and integrated exactly between covariate breakpoints.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SpikeDataset;
use crate::error::{Error, Result};
use crate::model::{bin_of, merged_events, PiecewiseHawkesModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NplConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub delta: f64,
    /// `None` uses `2 sqrt(2 ln(p) V̄_j)` per target, where `V̄_j` is the mean
    /// over kernel coordinates of `Σ_{T ∈ N_j} c_i(T⁻)²`.
    pub lasso_weight: Option<f64>,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for NplConfig {
    fn default() -> Self {
        Self { k: 8, delta: 0.025, lasso_weight: None, tol: 1e-12, max_sweeps: 100_000 }
    }
}

impl NplConfig {
    pub fn new(k: usize, delta: f64, lasso_weight: Option<f64>) -> Self {
        Self { k, delta, lasso_weight, ..Default::default() }
    }

    fn validate(&self, t_max: f64) -> Result<()> {
        if self.k == 0 || !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig("need K >= 1 and delta > 0".into()));
        }
        if self.k as f64 * self.delta >= t_max {
            return Err(Error::InvalidConfig(format!(
                "kernel support {} does not fit in the window length {t_max}",
                self.k as f64 * self.delta
            )));
        }
        if let Some(w) = self.lasso_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("lasso weight must be non-negative, got {w}")));
            }
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("solver tolerance and sweep cap must be positive".into()));
        }
        Ok(())
    }
}

/// Normal equations of one target neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSystem {
    pub p: usize,
    /// Row-major `p × p` Gram matrix.
    pub gram: Arc<Vec<f64>>,
    pub v: Vec<f64>,
    /// Σ over events of the squared covariates, used by the automatic weight.
    pub v2: Vec<f64>,
}

impl LsSystem {
    pub fn g(&self, i: usize, k: usize) -> f64 {
        self.gram[i * self.p + k]
    }

    pub fn contrast(&self, theta: &[f64]) -> f64 {
        let gt = self.g_times(theta);
        theta.iter().zip(&gt).map(|(t, g)| t * g).sum::<f64>()
            - 2.0 * theta.iter().zip(&self.v).map(|(t, v)| t * v).sum::<f64>()
    }

    fn g_times(&self, theta: &[f64]) -> Vec<f64> {
        self.gram.chunks_exact(self.p).map(|row| row.iter().zip(theta).map(|(g, t)| g * t).sum()).collect()
    }

    /// Smallest eigenvalue of `G` relative to `max(1, λ_max)`.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        let g = DMatrix::from_row_slice(self.p, self.p, &self.gram);
        let eig = SymmetricEigen::new(g).eigenvalues;
        let max = eig.iter().cloned().fold(1.0, f64::max);
        eig.min() / max
    }

    fn auto_weight(&self) -> f64 {
        let vals: Vec<f64> = self.v2[1..].iter().copied().filter(|&x| x > 0.0).collect();
        if vals.is_empty() {
            return 0.0;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        2.0 * (2.0 * (self.p as f64).ln() * mean).sqrt()
    }
}

fn gram(data: &SpikeDataset, k: usize, delta: f64) -> Vec<f64> {
    let m = data.n_neurons();
    let p = 1 + m * k;
    let t_max = data.t_max();
    let mut g = vec![0.0; p * p];
    let mut count = vec![0i64; p];
    let mut active: Vec<usize> = Vec::new();
    let mut slot = vec![usize::MAX; p];
    for trial in data.trials() {
        // (time, source, step): after `time` the event moves into bin `step`
        let mut bps: Vec<(f64, usize, usize)> = Vec::new();
        for (l, train) in trial.iter().enumerate() {
            for &s in train.times() {
                for step in 0..=k {
                    bps.push((s + step as f64 * delta, l, step));
                }
            }
        }
        bps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut now = 0.0;
        let add_segment = |g: &mut [f64], active: &[usize], count: &[i64], len: f64| {
            if len <= 0.0 {
                return;
            }
            g[0] += len;
            for &a in active {
                let ca = count[a] as f64 * len;
                g[a] += ca;
                g[a * p] += ca;
                for &b in active {
                    g[a * p + b] += ca * count[b] as f64;
                }
            }
        };
        for &(t, l, step) in &bps {
            if t >= t_max {
                break;
            }
            add_segment(&mut g, &active, &count, t - now);
            now = t;
            let mut bump = |idx: usize, d: i64| {
                count[idx] += d;
                if count[idx] != 0 && slot[idx] == usize::MAX {
                    slot[idx] = active.len();
                    active.push(idx);
                } else if count[idx] == 0 {
                    let pos = slot[idx];
                    let last = *active.last().expect("active");
                    active.swap_remove(pos);
                    if last != idx {
                        slot[last] = pos;
                    }
                    slot[idx] = usize::MAX;
                }
            };
            if step > 0 {
                bump(1 + l * k + step - 1, -1);
            }
            if step < k {
                bump(1 + l * k + step, 1);
            }
        }
        add_segment(&mut g, &active, &count, t_max - now);
        for &a in &active {
            slot[a] = usize::MAX;
            count[a] = 0;
        }
        active.clear();
    }
    g
}

/// `(Σ c(T⁻), Σ c(T⁻)²)` over the events of `j`.
fn moments(data: &SpikeDataset, k: usize, delta: f64, j: usize) -> (Vec<f64>, Vec<f64>) {
    let m = data.n_neurons();
    let p = 1 + m * k;
    let mut v = vec![0.0; p];
    let mut v2 = vec![0.0; p];
    let support = k as f64 * delta;
    let mut c = vec![0.0; p];
    for trial in data.trials() {
        let events = merged_events(trial);
        let mut lo = 0;
        for (idx, &(t, src)) in events.iter().enumerate() {
            if src != j {
                continue;
            }
            while events[lo].0 < t - support {
                lo += 1;
            }
            c.iter_mut().for_each(|x| *x = 0.0);
            c[0] = 1.0;
            for &(s, l) in &events[lo..idx] {
                if let Some(b) = bin_of(t - s, delta, k) {
                    c[1 + l * k + b] += 1.0;
                }
            }
            for i in 0..p {
                v[i] += c[i];
                v2[i] += c[i] * c[i];
            }
        }
    }
    (v, v2)
}

pub fn build_ls_system(data: &SpikeDataset, cfg: &NplConfig, j: usize) -> Result<LsSystem> {
    cfg.validate(data.t_max())?;
    if j >= data.n_neurons() {
        return Err(Error::IndexOutOfRange { index: j, size: data.n_neurons() });
    }
    let gram = Arc::new(gram(data, cfg.k, cfg.delta));
    let (v, v2) = moments(data, cfg.k, cfg.delta, j);
    Ok(LsSystem { p: v.len(), gram, v, v2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub theta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn soft(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

/// Cyclic coordinate descent on `θᵀGθ - 2θᵀv + w Σ_{i>=1} |θ_i|` with
/// `θ_0 >= 0` unpenalised.
pub fn solve_lasso(sys: &LsSystem, weight: f64, tol: f64, max_sweeps: usize) -> LassoSolution {
    let p = sys.p;
    let mut theta = vec![0.0; p];
    let mut gt = vec![0.0; p];
    let update = |i: usize, theta: &mut [f64], gt: &mut [f64]| -> f64 {
        let gii = sys.g(i, i);
        let new = if gii <= 0.0 {
            0.0
        } else {
            let z = sys.v[i] - (gt[i] - gii * theta[i]);
            if i == 0 {
                (z / gii).max(0.0)
            } else {
                soft(z, weight / 2.0) / gii
            }
        };
        let d = new - theta[i];
        if d != 0.0 {
            theta[i] = new;
            for (r, g) in gt.iter_mut().zip(&sys.gram[i * p..(i + 1) * p]) {
                *r += g * d;
            }
        }
        d.abs()
    };
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let full = (0..p).map(|i| update(i, &mut theta, &mut gt)).fold(0.0, f64::max);
        if full < tol {
            converged = true;
            break;
        }
        // iterate on the current support until it settles
        let support: Vec<usize> = (0..p).filter(|&i| theta[i] != 0.0).collect();
        while sweeps < max_sweeps {
            sweeps += 1;
            let change = support.iter().map(|&i| update(i, &mut theta, &mut gt)).fold(0.0, f64::max);
            if change < tol {
                break;
            }
        }
    }
    LassoSolution { theta, sweeps, converged }
}

/// Largest violation of the optimality conditions of [`solve_lasso`].
pub fn kkt_residual(sys: &LsSystem, theta: &[f64], weight: f64) -> f64 {
    let gt = sys.g_times(theta);
    (0..sys.p)
        .filter(|&i| sys.g(i, i) > 0.0)
        .map(|i| {
            let grad = 2.0 * (gt[i] - sys.v[i]);
            if i == 0 {
                if theta[0] > 0.0 {
                    grad.abs()
                } else {
                    (-grad).max(0.0)
                }
            } else if theta[i] != 0.0 {
                (grad + weight * theta[i].signum()).abs()
            } else {
                (grad.abs() - weight).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NplNeuronDiagnostics {
    pub lasso_weight: f64,
    /// Percentage of non-zero kernel coefficients.
    pub sparsity: f64,
    pub contrast: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NplDiagnostics {
    pub neurons: Vec<NplNeuronDiagnostics>,
    pub converged: bool,
}

pub fn fit_npl(data: &SpikeDataset, cfg: &NplConfig) -> Result<(PiecewiseHawkesModel, NplDiagnostics)> {
    cfg.validate(data.t_max())?;
    let m = data.n_neurons();
    let k = cfg.k;
    let gram = Arc::new(gram(data, k, cfg.delta));
    let fits: Vec<(Vec<f64>, NplNeuronDiagnostics)> = (0..m)
        .into_par_iter()
        .map(|j| {
            let (v, v2) = moments(data, k, cfg.delta, j);
            let sys = LsSystem { p: v.len(), gram: Arc::clone(&gram), v, v2 };
            let w = cfg.lasso_weight.unwrap_or_else(|| sys.auto_weight());
            let sol = solve_lasso(&sys, w, cfg.tol, cfg.max_sweeps);
            let nz = sol.theta[1..].iter().filter(|&&x| x != 0.0).count();
            let diag = NplNeuronDiagnostics {
                lasso_weight: w,
                sparsity: 100.0 * nz as f64 / (sys.p - 1) as f64,
                contrast: sys.contrast(&sol.theta),
                sweeps: sol.sweeps,
                converged: sol.converged,
                kkt_residual: kkt_residual(&sys, &sol.theta, w),
            };
            (sol.theta, diag)
        })
        .collect();
    let mu = fits.iter().map(|(t, _)| t[0]).collect();
    let alpha = fits.iter().map(|(t, _)| (0..m).map(|l| t[1 + l * k..1 + (l + 1) * k].to_vec()).collect()).collect();
    let model = PiecewiseHawkesModel::new(mu, alpha, cfg.delta)?;
    let neurons: Vec<NplNeuronDiagnostics> = fits.into_iter().map(|(_, d)| d).collect();
    let converged = neurons.iter().all(|d| d.converged);
    Ok((model, NplDiagnostics { neurons, converged }))
}
