//! Multivariate linear Hawkes models.
//!
//! The intensity of neuron `j` is
//!
//! ```text
//! λ_j(t) = μ_j + Σ_ℓ Σ_{T < t, T ∈ N_ℓ} h_{j,ℓ}(t - T)
//! ```
//!
//! with either exponential kernels sharing one decay rate,
//! `h_{j,ℓ}(t) = a_{j,ℓ} β e^{-βt}`, or piecewise-constant kernels
//! `g_{j,ℓ}(t) = Σ_k α_{j,ℓ}^k 1{(k-1)δ < t <= kδ}` whose coefficients may be
//! negative. Signed models are evaluated raw by [`HawkesModel::intensity_at`];
//! the compensator and the simulator use the positive part `max(λ, 0)`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::SpikeTrain;
use crate::error::{Error, Result};

/// Square matrix of kernel integrals; entry `(j, ℓ)` is the mean number of
/// extra events of `j` caused by one event of `ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdjacencyMatrix {
    entries: Vec<Vec<f64>>,
}

impl AdjacencyMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let m = entries.len();
        if let Some(row) = entries.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, found: row.len() });
        }
        if entries.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("adjacency entries must be finite".into()));
        }
        Ok(Self { entries })
    }

    pub fn zeros(m: usize) -> Self {
        Self { entries: vec![vec![0.0; m]; m] }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.entries[j][l]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.entries[j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| self.entries[i][j])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { entries: self.entries.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpHawkesModel {
    pub mu: Vec<f64>,
    pub beta: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
}

impl ExpHawkesModel {
    pub fn new(mu: Vec<f64>, a: Vec<Vec<f64>>, beta: f64) -> Result<Self> {
        let model = Self { mu, beta, a };
        model.validate()?;
        Ok(model)
    }

    pub fn poisson(mu: Vec<f64>, beta: f64) -> Result<Self> {
        let m = mu.len();
        Self::new(mu, vec![vec![0.0; m]; m], beta)
    }

    pub fn adjacency(&self) -> AdjacencyMatrix {
        AdjacencyMatrix { entries: self.a.clone() }
    }

    fn validate(&self) -> Result<()> {
        let m = self.mu.len();
        if m == 0 {
            return Err(Error::InvalidData("model has no neurons".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidData(format!("decay rate must be positive, got {}", self.beta)));
        }
        if self.mu.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidData("baselines must be finite and non-negative".into()));
        }
        if self.a.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: self.a.len() });
        }
        for row in &self.a {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: row.len() });
            }
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidData("exponential kernel weights must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHawkesModel {
    pub mu: Vec<f64>,
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    /// `alpha[j][l][k]` is the height of bin `k` of the kernel of `l` on `j`.
    pub alpha: Vec<Vec<Vec<f64>>>,
}

impl PiecewiseHawkesModel {
    pub fn new(mu: Vec<f64>, alpha: Vec<Vec<Vec<f64>>>, delta: f64) -> Result<Self> {
        let k = alpha.first().and_then(|r| r.first()).map_or(0, |c| c.len());
        let model = Self { mu, delta, k, alpha };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let m = self.mu.len();
        if m == 0 {
            return Err(Error::InvalidData("model has no neurons".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidData("piecewise kernels need at least one bin".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidData(format!("bin width must be positive, got {}", self.delta)));
        }
        if self.mu.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidData("baselines must be finite and non-negative".into()));
        }
        if self.alpha.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: self.alpha.len() });
        }
        for row in &self.alpha {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: row.len() });
            }
            for bins in row {
                if bins.len() != self.k {
                    return Err(Error::DimensionMismatch { expected: self.k, found: bins.len() });
                }
                if bins.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidData("kernel coefficients must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> f64 {
        self.k as f64 * self.delta
    }

    /// Zero-based bin of a positive lag, `None` outside `(0, Kδ]`.
    pub fn bin_of(&self, lag: f64) -> Option<usize> {
        bin_of(lag, self.delta, self.k)
    }
}

pub(crate) fn bin_of(lag: f64, delta: f64, k: usize) -> Option<usize> {
    if lag <= 0.0 {
        return None;
    }
    let b = (lag / delta).ceil() as usize;
    (1..=k).contains(&b).then(|| b - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HawkesModel {
    Exponential(ExpHawkesModel),
    Piecewise(PiecewiseHawkesModel),
}

impl From<ExpHawkesModel> for HawkesModel {
    fn from(m: ExpHawkesModel) -> Self {
        HawkesModel::Exponential(m)
    }
}

impl From<PiecewiseHawkesModel> for HawkesModel {
    fn from(m: PiecewiseHawkesModel) -> Self {
        HawkesModel::Piecewise(m)
    }
}

/// All events of one trial merged in time order, tagged with their source.
pub(crate) fn merged_events(history: &[SpikeTrain]) -> Vec<(f64, usize)> {
    let mut events: Vec<(f64, usize)> =
        history.iter().enumerate().flat_map(|(l, train)| train.times().iter().map(move |&t| (t, l))).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    events
}

impl HawkesModel {
    pub fn dim(&self) -> usize {
        self.mu().len()
    }

    pub fn mu(&self) -> &[f64] {
        match self {
            HawkesModel::Exponential(m) => &m.mu,
            HawkesModel::Piecewise(m) => &m.mu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HawkesModel::Exponential(m) => m.validate(),
            HawkesModel::Piecewise(m) => m.validate(),
        }
    }

    /// Largest lag at which a kernel is non-zero (`∞` for exponentials).
    pub fn kernel_support(&self) -> f64 {
        match self {
            HawkesModel::Exponential(_) => f64::INFINITY,
            HawkesModel::Piecewise(m) => m.support(),
        }
    }

    fn check(&self, history: &[SpikeTrain], j: usize) -> Result<()> {
        let m = self.dim();
        if j >= m {
            return Err(Error::IndexOutOfRange { index: j, size: m });
        }
        if history.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: history.len() });
        }
        Ok(())
    }

    /// Raw conditional intensity of neuron `j` at `t` given the events of
    /// `history` strictly before `t`. May be negative for signed kernels.
    pub fn intensity_at(&self, history: &[SpikeTrain], t: f64, j: usize) -> Result<f64> {
        self.check(history, j)?;
        let mut lambda = self.mu()[j];
        match self {
            HawkesModel::Exponential(m) => {
                for (l, train) in history.iter().enumerate() {
                    let w = m.a[j][l];
                    if w == 0.0 {
                        continue;
                    }
                    let s: f64 = train.before(t).iter().map(|&s| (-m.beta * (t - s)).exp()).sum();
                    lambda += w * m.beta * s;
                }
            }
            HawkesModel::Piecewise(m) => {
                let lo = t - m.support();
                for (l, train) in history.iter().enumerate() {
                    let past = train.before(t);
                    let first = past.partition_point(|&s| s < lo);
                    for &s in &past[first..] {
                        if let Some(b) = m.bin_of(t - s) {
                            lambda += m.alpha[j][l][b];
                        }
                    }
                }
            }
        }
        Ok(lambda)
    }

    /// `∫_0^t max(λ_j(s), 0) ds`.
    pub fn compensator(&self, history: &[SpikeTrain], j: usize, t: f64) -> Result<f64> {
        Ok(self.compensator_at(history, j, &[t])?[0])
    }

    /// Compensator of neuron `j` at each of the ascending `times`.
    pub fn compensator_at(&self, history: &[SpikeTrain], j: usize, times: &[f64]) -> Result<Vec<f64>> {
        self.check(history, j)?;
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidData("compensator query times must be sorted".into()));
        }
        let events = merged_events(history);
        Ok(match self {
            HawkesModel::Exponential(m) => exp_compensator(m, &events, j, times),
            HawkesModel::Piecewise(m) => piecewise_compensator(m, &events, j, times),
        })
    }

    /// `Σ_j max(λ_j(t0 + k dt), 0)` for `k = 0..n`.
    pub fn total_intensity_grid(&self, history: &[SpikeTrain], t0: f64, dt: f64, n: usize) -> Result<Vec<f64>> {
        let m = self.dim();
        if history.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: history.len() });
        }
        let events = merged_events(history);
        let grid = |k: usize| t0 + k as f64 * dt;
        let mut out = vec![0.0; n];
        match self {
            HawkesModel::Exponential(model) => {
                let col: Vec<f64> = (0..m).map(|l| (0..m).map(|j| model.a[j][l]).sum()).collect();
                let base: f64 = model.mu.iter().sum();
                let mut excite = 0.0;
                let mut now = f64::NEG_INFINITY;
                let mut next = 0;
                for (k, slot) in out.iter_mut().enumerate() {
                    let t = grid(k);
                    while next < events.len() && events[next].0 < t {
                        let (s, l) = events[next];
                        if now.is_finite() {
                            excite *= (-model.beta * (s - now)).exp();
                        }
                        now = s;
                        excite += col[l] * model.beta;
                        next += 1;
                    }
                    let current = if now.is_finite() { excite * (-model.beta * (t - now)).exp() } else { 0.0 };
                    *slot = base + current;
                }
            }
            HawkesModel::Piecewise(model) => {
                for j in 0..m {
                    let bps = breakpoints(model, &events, j);
                    let mut lambda = model.mu[j];
                    let mut next = 0;
                    for (k, slot) in out.iter_mut().enumerate() {
                        let t = grid(k);
                        while next < bps.len() && bps[next].0 < t {
                            lambda += bps[next].1;
                            next += 1;
                        }
                        *slot += lambda.max(0.0);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn adjacency(&self) -> AdjacencyMatrix {
        match self {
            HawkesModel::Exponential(m) => AdjacencyMatrix { entries: m.a.clone() },
            HawkesModel::Piecewise(m) => AdjacencyMatrix {
                entries: m
                    .alpha
                    .iter()
                    .map(|row| row.iter().map(|bins| m.delta * bins.iter().sum::<f64>()).collect())
                    .collect(),
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: HawkesModel = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn exp_compensator(m: &ExpHawkesModel, events: &[(f64, usize)], j: usize, times: &[f64]) -> Vec<f64> {
    // Λ(t) = μ t + Σ a (1 - e^{-β(t-T)}) = μ t + W(t) - D(t)
    let row = &m.a[j];
    let mut total = 0.0;
    let mut decayed = 0.0;
    let mut now = 0.0;
    let mut next = 0;
    times
        .iter()
        .map(|&t| {
            while next < events.len() && events[next].0 < t {
                let (s, l) = events[next];
                decayed *= (-m.beta * (s - now)).exp();
                now = s;
                total += row[l];
                decayed += row[l];
                next += 1;
            }
            m.mu[j] * t + total - decayed * (-m.beta * (t - now)).exp()
        })
        .collect()
}

/// Times at which the raw piecewise intensity of `j` changes, with the jump
/// applied just after that time.
fn breakpoints(m: &PiecewiseHawkesModel, events: &[(f64, usize)], j: usize) -> Vec<(f64, f64)> {
    let mut bps = Vec::with_capacity(events.len() * (m.k + 1));
    for &(s, l) in events {
        let bins = &m.alpha[j][l];
        if bins.iter().all(|&v| v == 0.0) {
            continue;
        }
        for step in 0..=m.k {
            let enter = if step < m.k { bins[step] } else { 0.0 };
            let leave = if step > 0 { bins[step - 1] } else { 0.0 };
            if enter != leave {
                bps.push((s + step as f64 * m.delta, enter - leave));
            }
        }
    }
    bps.sort_by(|a, b| a.0.total_cmp(&b.0));
    bps
}

fn piecewise_compensator(m: &PiecewiseHawkesModel, events: &[(f64, usize)], j: usize, times: &[f64]) -> Vec<f64> {
    let bps = breakpoints(m, events, j);
    let mut lambda = m.mu[j];
    let mut acc = 0.0;
    let mut now = 0.0;
    let mut next = 0;
    times
        .iter()
        .map(|&t| {
            while next < bps.len() && bps[next].0 < t {
                let (s, d) = bps[next];
                if s > now {
                    acc += lambda.max(0.0) * (s - now);
                    now = s;
                }
                lambda += d;
                next += 1;
            }
            acc += lambda.max(0.0) * (t - now).max(0.0);
            now = now.max(t);
            acc
        })
        .collect()
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// Largest eigenvalue modulus of `|A|`.
///
/// Power iteration runs on `I + |A|`, which has the same Perron vector and is
/// aperiodic; when it stalls (defective spectra converge only polynomially) a
/// Schur decomposition is used instead.
pub fn spectral_radius(adj: &AdjacencyMatrix) -> Result<f64> {
    let m = adj.dim();
    if m == 0 {
        return Ok(0.0);
    }
    let abs = adj.map(f64::abs);
    if let Some(r) = shifted_power_iteration(&abs) {
        return Ok(r);
    }
    let schur = abs
        .to_dmatrix()
        .try_schur(1e-14, 100_000)
        .ok_or_else(|| Error::Numeric("spectral radius did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

fn shifted_power_iteration(abs: &AdjacencyMatrix) -> Option<f64> {
    let m = abs.dim();
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut estimate = 0.0;
    for it in 0..POWER_MAX_ITER {
        let w: Vec<f64> = (0..m).map(|i| v[i] + abs.row(i).iter().zip(&v).map(|(a, x)| a * x).sum::<f64>()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Some(0.0);
        }
        let next = norm;
        v = w.into_iter().map(|x| x / norm).collect();
        if it > 0 && (next - estimate).abs() <= POWER_TOL * next {
            return Some((next - 1.0).max(0.0));
        }
        estimate = next;
    }
    None
}
