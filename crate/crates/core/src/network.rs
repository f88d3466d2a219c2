//! Comparisons of connectivity matrices, the spike-triggered coincidence
//! coefficient and the peri-stimulus time histogram.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::SpikeDataset;
use crate::error::{Error, Result};
use crate::model::AdjacencyMatrix;

/// Percentage of entries with `|a| > eps`.
pub fn sparsity_fraction(adj: &AdjacencyMatrix, eps: f64) -> f64 {
    let m = adj.dim();
    if m == 0 {
        return 0.0;
    }
    let nz = adj.rows().iter().flatten().filter(|v| v.abs() > eps).count();
    100.0 * nz as f64 / (m * m) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixDistance {
    pub frobenius: f64,
    pub spectral: f64,
}

/// Frobenius and spectral norms of `a1 - a2`.
pub fn matrix_distance(a1: &AdjacencyMatrix, a2: &AdjacencyMatrix) -> Result<MatrixDistance> {
    let d = a1.sub(a2)?;
    let frobenius = d.rows().iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    Ok(MatrixDistance { frobenius, spectral: spectral_norm(&d) })
}

/// Largest singular value by power iteration on `DᵀD`.
pub fn spectral_norm(d: &AdjacencyMatrix) -> f64 {
    let m = d.dim();
    // B = DᵀD
    let b: Vec<Vec<f64>> =
        (0..m).map(|i| (0..m).map(|k| (0..m).map(|r| d.get(r, i) * d.get(r, k)).sum()).collect()).collect();
    let Some(start) = (0..m).max_by(|&x, &y| b[x][x].total_cmp(&b[y][y])) else {
        return 0.0;
    };
    if b[start][start] == 0.0 {
        return 0.0;
    }
    let apply = |v: &[f64]| -> Vec<f64> { b.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect() };
    let mut v: Vec<f64> = b[start].clone();
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let w = apply(&v);
        let rayleigh: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let done = (rayleigh - estimate).abs() <= 1e-14 * rayleigh;
        estimate = rayleigh;
        v = w;
        if done {
            break;
        }
    }
    estimate.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggeredCoefficient {
    pub value: f64,
    pub source_spikes: usize,
    /// Set when the source never fires; `value` is then 0.
    pub silent_source: bool,
}

/// Mean number of `target` spikes in `[T - w, T + w]` per `source` spike `T`.
pub fn triggered_coefficient(
    data: &SpikeDataset,
    target: usize,
    source: usize,
    half_width: f64,
) -> Result<TriggeredCoefficient> {
    let m = data.n_neurons();
    for idx in [target, source] {
        if idx >= m {
            return Err(Error::IndexOutOfRange { index: idx, size: m });
        }
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidConfig(format!("half width must be positive, got {half_width}")));
    }
    let mut hits = 0usize;
    let mut spikes = 0usize;
    for trial in data.trials() {
        let tgt = trial[target].times();
        for &t in trial[source].times() {
            let lo = tgt.partition_point(|&s| s < t - half_width);
            let hi = tgt.partition_point(|&s| s <= t + half_width);
            hits += hi - lo;
            spikes += 1;
        }
    }
    Ok(TriggeredCoefficient {
        value: if spikes == 0 { 0.0 } else { hits as f64 / spikes as f64 },
        source_spikes: spikes,
        silent_source: spikes == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psth {
    /// Bin edges in window coordinates, one more than `counts`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Pooled spike counts of all neurons and trials per time bin.
pub fn psth(data: &SpikeDataset, bin_width: f64) -> Result<Psth> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!("bin width must be positive, got {bin_width}")));
    }
    let t_max = data.t_max();
    let n_bins = ((t_max / bin_width).ceil() as usize).max(1);
    let mut edges: Vec<f64> = (0..n_bins).map(|i| i as f64 * bin_width).collect();
    edges.push(t_max);
    let mut counts = vec![0usize; n_bins];
    for trial in data.trials() {
        for train in trial {
            for &t in train.times() {
                let b = ((t / bin_width).floor() as usize).min(n_bins - 1);
                counts[b] += 1;
            }
        }
    }
    Ok(Psth { edges, counts })
}

impl Psth {
    /// CSV with columns `bin_start,bin_end,count`; `offset` shifts the edges
    /// back to recording time.
    pub fn write_csv<W: Write>(&self, offset: f64, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_start", "bin_end", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                (offset + self.edges[i]).to_string(),
                (offset + self.edges[i + 1]).to_string(),
                c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
