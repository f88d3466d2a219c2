//! L1-penalised maximum likelihood for exponential-kernel Hawkes models.
//!
//! For a fixed decay β the negative log-likelihood of target neuron `j` only
//! depends on its own row `(μ_j, a_{j,·})`:
//!
//! ```text
//! L_j = T_tot μ + a·C - Σ_k log(μ + a·S_k)
//! ```
//!
//! where `S_k[ℓ] = β Σ_{T ∈ N_ℓ, T < T_k} e^{-β(T_k - T)}` is the source state
//! at the `k`-th event of `j` and `C[ℓ] = Σ_T (1 - e^{-β(T_max - T)})`. Each row
//! is fitted separately by proximal gradient with Barzilai-Borwein steps and
//! backtracking. β is picked on a grid by the least-squares contrast
//! `Σ_j ∫λ_j² - 2 Σ_k λ_j(T_k⁻)`, which has a closed form for exponentials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SpikeDataset, SpikeTrain};
use crate::error::{Error, Result};
use crate::model::{merged_events, AdjacencyMatrix, ExpHawkesModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Adm4Config {
    /// `None` picks the weight by leave-one-trial-out cross-validation.
    pub lasso_weight: Option<f64>,
    pub beta_grid: Vec<f64>,
    pub max_iter: usize,
    /// Relative objective change at which iterations stop.
    pub tol: f64,
    /// Upper bound of the box constraint on kernel weights.
    pub a_max: f64,
    /// Number of candidate weights in the cross-validation path.
    pub n_weights: usize,
    pub record_trace: bool,
}

impl Default for Adm4Config {
    fn default() -> Self {
        Self {
            lasso_weight: None,
            beta_grid: log_grid(1.0, 200.0, 20),
            max_iter: 5000,
            tol: 1e-10,
            a_max: 1.0,
            n_weights: 10,
            record_trace: false,
        }
    }
}

impl Adm4Config {
    pub fn validate(&self) -> Result<()> {
        if self.beta_grid.is_empty() || self.beta_grid.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidConfig("beta grid must be non-empty and positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if let Some(w) = self.lasso_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("lasso weight must be non-negative, got {w}")));
            }
        }
        if !(self.a_max > 0.0) {
            return Err(Error::InvalidConfig("box bound must be positive".into()));
        }
        if self.max_iter == 0 || self.n_weights == 0 {
            return Err(Error::InvalidConfig("iteration and weight counts must be positive".into()));
        }
        Ok(())
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronDiagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub weights: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub std_error: Vec<f64>,
    pub best: f64,
    pub chosen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adm4Diagnostics {
    pub beta: f64,
    pub lasso_weight: f64,
    /// `(β, least-squares contrast)` for every grid value.
    pub beta_scores: Vec<(f64, f64)>,
    pub neurons: Vec<NeuronDiagnostics>,
    /// Percentage of entries of the fitted matrix that are non-zero.
    pub sparsity: f64,
    pub converged: bool,
    pub cross_validation: Option<CrossValidation>,
}

/// Sufficient statistics of one trial for one decay rate.
#[derive(Debug, Clone)]
struct TrialStats {
    t_max: f64,
    c: Vec<f64>,
    /// `rows[j]` holds the source states at the events of `j`, row-major.
    rows: Vec<Vec<f64>>,
    q: Vec<f64>,
}

fn trial_stats(trial: &[SpikeTrain], t_max: f64, beta: f64, with_q: bool) -> TrialStats {
    let m = trial.len();
    let events = merged_events(trial);
    let mut rows = vec![Vec::new(); m];
    let mut c = vec![0.0; m];
    let mut q = vec![0.0; if with_q { m * m } else { 0 }];
    let mut state = vec![0.0; m];
    let mut now = 0.0;
    let seg = |d: f64| -(-2.0 * beta * d).exp_m1() / (2.0 * beta);
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        let decay = (-beta * (t - now)).exp();
        if with_q && t > now {
            accumulate_q(&mut q, &state, seg(t - now));
        }
        state.iter_mut().for_each(|s| *s *= decay);
        now = t;
        let mut end = i;
        while end < events.len() && events[end].0 == t {
            rows[events[end].1].extend_from_slice(&state);
            end += 1;
        }
        for &(s, l) in &events[i..end] {
            state[l] += beta;
            c[l] += -(-beta * (t_max - s)).exp_m1();
        }
        i = end;
    }
    if with_q && t_max > now {
        accumulate_q(&mut q, &state, seg(t_max - now));
    }
    TrialStats { t_max, c, rows, q }
}

fn accumulate_q(q: &mut [f64], state: &[f64], w: f64) {
    let m = state.len();
    for (l, &x) in state.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (lp, &y) in state.iter().enumerate() {
            q[l * m + lp] += x * y * w;
        }
    }
}

fn dataset_stats(data: &SpikeDataset, beta: f64, with_q: bool) -> Vec<TrialStats> {
    data.trials().map(|t| trial_stats(t, data.t_max(), beta, with_q)).collect()
}

/// Smooth part of the per-neuron objective.
#[derive(Debug, Clone)]
pub struct NeuronProblem {
    m: usize,
    t_total: f64,
    c: Vec<f64>,
    s: Vec<f64>,
}

impl NeuronProblem {
    fn from_stats<'a>(stats: impl IntoIterator<Item = &'a TrialStats>, j: usize) -> Self {
        let mut it = stats.into_iter().peekable();
        let m = it.peek().map_or(0, |s| s.c.len());
        let mut p = NeuronProblem { m, t_total: 0.0, c: vec![0.0; m], s: Vec::new() };
        for st in it {
            p.t_total += st.t_max;
            p.c.iter_mut().zip(&st.c).for_each(|(a, b)| *a += b);
            p.s.extend_from_slice(&st.rows[j]);
        }
        p
    }

    /// Builds the problem of neuron `j` at decay `beta`.
    pub fn new(data: &SpikeDataset, j: usize, beta: f64) -> Result<Self> {
        if j >= data.n_neurons() {
            return Err(Error::IndexOutOfRange { index: j, size: data.n_neurons() });
        }
        Ok(Self::from_stats(&dataset_stats(data, beta, false), j))
    }

    pub fn dim(&self) -> usize {
        1 + self.m
    }

    pub fn n_events(&self) -> usize {
        self.s.len() / self.m.max(1)
    }

    fn lambdas(&self, x: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let (mu, a) = (x[0], x[1..].to_vec());
        self.s.chunks_exact(self.m).map(move |row| mu + row.iter().zip(&a).map(|(s, w)| s * w).sum::<f64>())
    }

    /// Negative log-likelihood at `x = (μ, a)`; `+∞` when some event has
    /// non-positive intensity.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.t_total * x[0] + self.c.iter().zip(&x[1..]).map(|(c, a)| c * a).sum::<f64>();
        for lambda in self.lambdas(x) {
            if lambda <= 0.0 {
                return f64::INFINITY;
            }
            v -= lambda.ln();
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.dim());
        g.push(self.t_total);
        g.extend_from_slice(&self.c);
        for (row, lambda) in self.s.chunks_exact(self.m).zip(self.lambdas(x)) {
            let inv = 1.0 / lambda;
            g[0] -= inv;
            for (gl, s) in g[1..].iter_mut().zip(row) {
                *gl -= s * inv;
            }
        }
        g
    }

    /// Smallest weight for which `a = 0` is optimal.
    fn weight_max(&self) -> f64 {
        let n = self.n_events();
        if n == 0 {
            return 0.0;
        }
        let mu0 = n as f64 / self.t_total;
        let mut sums = vec![0.0; self.m];
        for row in self.s.chunks_exact(self.m) {
            sums.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        sums.iter().zip(&self.c).map(|(s, c)| (s / mu0 - c).max(0.0)).fold(0.0, f64::max)
    }
}

/// Proximal map of `w Σ a + 1{a ∈ [0, a_max]} + 1{μ >= 0}` with step `t`.
pub fn prox(v: &[f64], t: f64, weight: f64, a_max: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(v.len());
    x.push(v[0].max(0.0));
    x.extend(v[1..].iter().map(|&a| (a - t * weight).clamp(0.0, a_max)));
    x
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `value(x) + weight Σ a` over the box.
pub fn solve(problem: &NeuronProblem, weight: f64, a_max: f64, max_iter: usize, tol: f64, trace: bool) -> Solution {
    let d = problem.dim();
    let n = problem.n_events();
    let mut x = vec![0.0; d];
    if n == 0 {
        return Solution { x, objective: 0.0, iterations: 0, converged: true, trace: trace.then(Vec::new) };
    }
    x[0] = n as f64 / problem.t_total;
    let penalty = |x: &[f64]| weight * x[1..].iter().sum::<f64>();
    let mut f = problem.value(&x);
    let mut obj = f + penalty(&x);
    let mut g = problem.gradient(&x);
    let mut step = x[0] * x[0] / n as f64;
    let mut history = trace.then(|| vec![obj]);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (x_new, f_new) = loop {
            let v: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let cand = prox(&v, step, weight, a_max);
            let diff: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
            let fc = problem.value(&cand);
            let bound = f + dot(&g, &diff) + dot(&diff, &diff) / (2.0 * step);
            if fc.is_finite() && fc <= bound + 4.0 * f64::EPSILON * f.abs().max(1.0) {
                break (cand, fc);
            }
            step *= 0.5;
            if step < 1e-300 {
                break (x.clone(), f);
            }
        };
        let obj_new = f_new + penalty(&x_new);
        if obj_new > obj {
            // rounding noise at the optimum
            converged = true;
            break;
        }
        let g_new = problem.gradient(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let (ss, sy) = (dot(&s, &s), dot(&s, &y));
        let change = obj - obj_new;
        x = x_new;
        f = f_new;
        g = g_new;
        obj = obj_new;
        if let Some(h) = history.as_mut() {
            h.push(obj);
        }
        if change <= tol * obj.abs().max(1.0) {
            converged = true;
            break;
        }
        if sy > 0.0 {
            step = (ss / sy).clamp(1e-16, 1e16);
        } else {
            step *= 2.0;
        }
    }
    Solution { x, objective: obj, iterations, converged, trace: history }
}

/// Negative log-likelihood of neuron `j` summed over trials, by exact
/// exponential recursions over the merged events.
pub fn neg_log_likelihood(model: &ExpHawkesModel, data: &SpikeDataset, j: usize) -> Result<f64> {
    let m = model.mu.len();
    if data.n_neurons() != m {
        return Err(Error::DimensionMismatch { expected: m, found: data.n_neurons() });
    }
    if j >= m {
        return Err(Error::IndexOutOfRange { index: j, size: m });
    }
    let beta = model.beta;
    let row = &model.a[j];
    let t_max = data.t_max();
    let mut total = 0.0;
    for trial in data.trials() {
        let events = merged_events(trial);
        // excitation of j carried by each source, decayed to `now`
        let mut state = vec![0.0; m];
        let mut now = 0.0;
        let mut i = 0;
        total += model.mu[j] * t_max;
        while i < events.len() {
            let t = events[i].0;
            let decay = (-beta * (t - now)).exp();
            state.iter_mut().for_each(|s| *s *= decay);
            now = t;
            let lambda = model.mu[j] + state.iter().sum::<f64>();
            let mut end = i;
            while end < events.len() && events[end].0 == t {
                if events[end].1 == j {
                    if lambda <= 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    total -= lambda.ln();
                }
                end += 1;
            }
            for &(s, l) in &events[i..end] {
                state[l] += row[l] * beta;
                total += row[l] * -(-beta * (t_max - s)).exp_m1();
            }
            i = end;
        }
    }
    Ok(total)
}

struct BetaFit {
    beta: f64,
    rows: Vec<Solution>,
    contrast: f64,
}

fn ls_contrast(stats: &[TrialStats], problems: &[NeuronProblem], rows: &[Solution]) -> f64 {
    let m = problems.len();
    let mut q = vec![0.0; m * m];
    for st in stats {
        q.iter_mut().zip(&st.q).for_each(|(a, b)| *a += b);
    }
    problems
        .iter()
        .zip(rows)
        .map(|(p, sol)| {
            let (mu, a) = (sol.x[0], &sol.x[1..]);
            let quad: f64 = (0..m).map(|l| a[l] * dot(&q[l * m..(l + 1) * m], a)).sum();
            let mut ssum = vec![0.0; m];
            for row in p.s.chunks_exact(m) {
                ssum.iter_mut().zip(row).for_each(|(x, y)| *x += y);
            }
            mu * mu * p.t_total + 2.0 * mu * dot(a, &p.c) + quad - 2.0 * (mu * p.n_events() as f64 + dot(a, &ssum))
        })
        .sum()
}

fn fit_rows(problems: &[NeuronProblem], weight: f64, cfg: &Adm4Config) -> Vec<Solution> {
    problems.par_iter().map(|p| solve(p, weight, cfg.a_max, cfg.max_iter, cfg.tol, cfg.record_trace)).collect()
}

fn fit_beta(data: &SpikeDataset, beta: f64, weight: f64, cfg: &Adm4Config) -> BetaFit {
    let stats = dataset_stats(data, beta, true);
    let problems: Vec<NeuronProblem> = (0..data.n_neurons()).map(|j| NeuronProblem::from_stats(&stats, j)).collect();
    let rows = fit_rows(&problems, weight, cfg);
    let contrast = ls_contrast(&stats, &problems, &rows);
    BetaFit { beta, rows, contrast }
}

fn cross_validate(data: &SpikeDataset, beta: f64, cfg: &Adm4Config) -> CrossValidation {
    let n = data.n_trials();
    let m = data.n_neurons();
    let stats = dataset_stats(data, beta, false);
    let full: Vec<NeuronProblem> = (0..m).map(|j| NeuronProblem::from_stats(&stats, j)).collect();
    let w_max = full.iter().map(NeuronProblem::weight_max).fold(0.0, f64::max);
    let mut weights = log_grid(w_max.max(1e-12), w_max.max(1e-12) * 1e-3, cfg.n_weights.saturating_sub(1).max(1));
    weights.push(0.0);
    let scale = (n - 1) as f64 / n as f64;
    // fold losses[w][fold]
    let losses: Vec<Vec<f64>> = weights
        .par_iter()
        .map(|&w| {
            (0..n)
                .map(|out| {
                    let train: Vec<&TrialStats> =
                        stats.iter().enumerate().filter(|(i, _)| *i != out).map(|(_, s)| s).collect();
                    (0..m)
                        .map(|j| {
                            let p = NeuronProblem::from_stats(train.iter().copied(), j);
                            let sol = solve(&p, w * scale, cfg.a_max, cfg.max_iter, cfg.tol, false);
                            NeuronProblem::from_stats([&stats[out]], j).value(&sol.x)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let mean: Vec<f64> = losses.iter().map(|l| l.iter().sum::<f64>() / n as f64).collect();
    let se: Vec<f64> = losses
        .iter()
        .zip(&mean)
        .map(|(l, &mu)| {
            let var = l.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        })
        .collect();
    let best_idx = (0..weights.len()).min_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap_or(weights.len() - 1);
    let limit = mean[best_idx] + se[best_idx];
    // weights run from large to small, so the first admissible one is the largest
    let chosen_idx = (0..weights.len()).find(|&i| mean[i] <= limit).unwrap_or(best_idx);
    CrossValidation { best: weights[best_idx], chosen: weights[chosen_idx], weights, mean_loss: mean, std_error: se }
}

/// Fits every row at every β of the grid and keeps the β with the smallest
/// least-squares contrast.
pub fn fit_adm4(data: &SpikeDataset, cfg: &Adm4Config) -> Result<(ExpHawkesModel, Adm4Diagnostics)> {
    cfg.validate()?;
    if data.total_events() == 0 {
        return Err(Error::EmptyDataset("no events to fit".into()));
    }
    let provisional = cfg.lasso_weight.unwrap_or(0.0);
    let fits: Vec<BetaFit> = cfg.beta_grid.iter().map(|&b| fit_beta(data, b, provisional, cfg)).collect();
    let beta_scores: Vec<(f64, f64)> = fits.iter().map(|f| (f.beta, f.contrast)).collect();
    let best = fits.into_iter().min_by(|a, b| a.contrast.total_cmp(&b.contrast)).expect("non-empty grid");
    let (rows, weight, cv) = match cfg.lasso_weight {
        Some(w) => (best.rows, w, None),
        None if data.n_trials() >= 3 => {
            let cv = cross_validate(data, best.beta, cfg);
            let refit = fit_beta(data, best.beta, cv.chosen, cfg);
            (refit.rows, cv.chosen, Some(cv))
        }
        None => (best.rows, 0.0, None),
    };
    let beta = best.beta;
    let mu = rows.iter().map(|s| s.x[0]).collect();
    let a: Vec<Vec<f64>> = rows.iter().map(|s| s.x[1..].to_vec()).collect();
    let model = ExpHawkesModel::new(mu, a, beta)?;
    let adj = AdjacencyMatrix::new(model.a.clone())?;
    let diagnostics = Adm4Diagnostics {
        beta,
        lasso_weight: weight,
        beta_scores,
        sparsity: crate::network::sparsity_fraction(&adj, 0.0),
        converged: rows.iter().all(|s| s.converged),
        neurons: rows
            .into_iter()
            .map(|s| NeuronDiagnostics {
                objective: s.objective,
                iterations: s.iterations,
                converged: s.converged,
                trace: s.trace,
            })
            .collect(),
        cross_validation: cv,
    };
    Ok((model, diagnostics))
}

/// Sources whose weight on `target` exceeds `threshold`, target excluded.
pub fn select_subnetwork(adj: &AdjacencyMatrix, target: usize, threshold: f64) -> Result<Vec<usize>> {
    if target >= adj.dim() {
        return Err(Error::IndexOutOfRange { index: target, size: adj.dim() });
    }
    Ok(adj.row(target).iter().enumerate().filter(|&(l, &v)| l != target && v > threshold).map(|(l, _)| l).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Window;
    use crate::model::HawkesModel;
    use crate::sim::{simulate, SimConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn one_trial(trains: Vec<Vec<f64>>, t_max: f64) -> SpikeDataset {
        let trains = trains.into_iter().map(|t| SpikeTrain::new(t).unwrap()).collect();
        SpikeDataset::new(Window::new(0.0, t_max).unwrap(), vec![trains]).unwrap()
    }

    #[test]
    fn poisson_likelihood_examples() {
        let d = one_trial(vec![vec![1.0, 2.0]], 3.0);
        let m = ExpHawkesModel::poisson(vec![1.0], 1.0).unwrap();
        assert_relative_eq!(neg_log_likelihood(&m, &d, 0).unwrap(), 3.0, epsilon = 1e-12);
        let d = one_trial(vec![vec![1.0]], 1.0);
        let m = ExpHawkesModel::poisson(vec![2.0], 1.0).unwrap();
        assert_relative_eq!(neg_log_likelihood(&m, &d, 0).unwrap(), 2.0 - 2f64.ln(), epsilon = 1e-12);
        let m = ExpHawkesModel::poisson(vec![0.0], 1.0).unwrap();
        assert_eq!(neg_log_likelihood(&m, &d, 0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn likelihood_matches_brute_force() {
        let model = ExpHawkesModel::new(vec![0.3, 0.6], vec![vec![0.2, 0.4], vec![0.1, 0.3]], 2.5).unwrap();
        let h: HawkesModel = model.clone().into();
        let data = simulate(&h, &SimConfig::new(30.0, 2, 7)).unwrap();
        for j in 0..2 {
            let mut brute = 0.0;
            for trial in data.trials() {
                brute += h.compensator(trial, j, data.t_max()).unwrap();
                for &t in trial[j].times() {
                    brute -= h.intensity_at(trial, t, j).unwrap().ln();
                }
            }
            assert_relative_eq!(neg_log_likelihood(&model, &data, j).unwrap(), brute, max_relative = 1e-10);
            let p = NeuronProblem::new(&data, j, 2.5).unwrap();
            let mut x = vec![model.mu[j]];
            x.extend_from_slice(&model.a[j]);
            assert_relative_eq!(p.value(&x), brute, max_relative = 1e-10);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h: HawkesModel =
            ExpHawkesModel::new(vec![0.5, 0.5], vec![vec![0.3, 0.0], vec![0.2, 0.2]], 3.0).unwrap().into();
        let data = simulate(&h, &SimConfig::new(50.0, 2, 1)).unwrap();
        let p = NeuronProblem::new(&data, 1, 3.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x: Vec<f64> = vec![rng.random_range(0.2..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let g = p.gradient(&x);
            for i in 0..3 {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1.0), "coord {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn prox_is_soft_threshold_on_box() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (t, w) = (rng.random_range(0.01..1.0), rng.random_range(0.0..2.0));
            let x = prox(&v, t, w, 1.0);
            assert_eq!(x[0], v[0].max(0.0));
            for i in 1..6 {
                let soft = v[i].signum() * (v[i].abs() - t * w).max(0.0);
                assert_eq!(x[i], soft.clamp(0.0, 1.0));
            }
        }
    }

    #[test]
    fn objective_is_monotone() {
        let h: HawkesModel =
            ExpHawkesModel::new(vec![0.5, 0.5], vec![vec![0.3, 0.0], vec![0.4, 0.2]], 3.0).unwrap().into();
        let data = simulate(&h, &SimConfig::new(100.0, 3, 2)).unwrap();
        for w in [0.0, 1.0, 10.0] {
            let p = NeuronProblem::new(&data, 1, 3.0).unwrap();
            let sol = solve(&p, w, 1.0, 5000, 1e-12, true);
            let trace = sol.trace.unwrap();
            assert!(trace.windows(2).all(|t| t[1] <= t[0]), "w={w}");
            assert!(sol.converged);
        }
    }

    #[test]
    fn large_weight_leaves_poisson_mle() {
        let h: HawkesModel =
            ExpHawkesModel::new(vec![0.5, 0.5], vec![vec![0.3, 0.0], vec![0.4, 0.2]], 3.0).unwrap().into();
        let data = simulate(&h, &SimConfig::new(100.0, 3, 2)).unwrap();
        let cfg = Adm4Config { lasso_weight: Some(1e9), beta_grid: vec![3.0], ..Default::default() };
        let (m, diag) = fit_adm4(&data, &cfg).unwrap();
        for j in 0..2 {
            assert!(m.a[j].iter().all(|&a| a == 0.0));
            let expect = data.neuron_count(j) as f64 / (3.0 * 100.0);
            assert_relative_eq!(m.mu[j], expect, max_relative = 1e-6);
        }
        assert_eq!(diag.sparsity, 0.0);
    }

    #[test]
    fn joint_fit_equals_separate_fits() {
        let h: HawkesModel =
            ExpHawkesModel::new(vec![0.5, 0.5], vec![vec![0.3, 0.0], vec![0.4, 0.2]], 3.0).unwrap().into();
        let data = simulate(&h, &SimConfig::new(100.0, 3, 4)).unwrap();
        let cfg = Adm4Config { lasso_weight: Some(2.0), beta_grid: vec![3.0], ..Default::default() };
        let (m, _) = fit_adm4(&data, &cfg).unwrap();
        for j in 0..2 {
            let p = NeuronProblem::new(&data, j, 3.0).unwrap();
            let sol = solve(&p, 2.0, 1.0, cfg.max_iter, cfg.tol, false);
            assert_eq!(sol.x[0], m.mu[j]);
            assert_eq!(&sol.x[1..], m.a[j].as_slice());
        }
    }

    #[test]
    fn contrast_matches_numeric_integral() {
        let model = ExpHawkesModel::new(vec![0.4, 0.2], vec![vec![0.3, 0.1], vec![0.2, 0.5]], 4.0).unwrap();
        let h: HawkesModel = model.clone().into();
        let data = simulate(&h, &SimConfig::new(20.0, 1, 3)).unwrap();
        let stats = dataset_stats(&data, 4.0, true);
        let problems: Vec<NeuronProblem> = (0..2).map(|j| NeuronProblem::from_stats(&stats, j)).collect();
        let rows: Vec<Solution> = (0..2)
            .map(|j| {
                let mut x = vec![model.mu[j]];
                x.extend_from_slice(&model.a[j]);
                Solution { x, objective: 0.0, iterations: 0, converged: true, trace: None }
            })
            .collect();
        let closed = ls_contrast(&stats, &problems, &rows);
        // midpoint rule on a fine grid plus exact event sums
        let trial = data.trial(0);
        let n = 400_000;
        let dt = 20.0 / n as f64;
        let mut numeric = 0.0;
        for j in 0..2 {
            let grid: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * dt).collect();
            let mut sq = 0.0;
            for &t in &grid {
                let l = h.intensity_at(trial, t, j).unwrap();
                sq += l * l * dt;
            }
            let ev: f64 = trial[j].times().iter().map(|&t| h.intensity_at(trial, t, j).unwrap()).sum();
            numeric += sq - 2.0 * ev;
        }
        assert_relative_eq!(closed, numeric, max_relative = 1e-4);
    }

    #[test]
    fn subnetwork_selection() {
        let adj =
            AdjacencyMatrix::new(vec![vec![0.0, 2e-5, 0.0, 5e-6], vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]]).unwrap();
        assert_eq!(select_subnetwork(&adj, 0, 1e-5).unwrap(), vec![1]);
        assert!(select_subnetwork(&adj, 1, 1e-5).unwrap().is_empty());
        assert!(select_subnetwork(&adj, 9, 1e-5).is_err());
    }
}
