//! Spike trains, multi-trial spike datasets and uniformly sampled potential
//! paths, together with their CSV formats.
//!
//! Spike files are UTF-8 CSV with header `trial,neuron,time` (seconds).
//! Potential files are CSV with header `time,potential_mv`; the sampling step
//! is inferred from the first two rows and checked across the whole file.
//!
//! A [`SpikeDataset`] always stores times relative to the start of its
//! observation window, so every train lives on `[0, t_max]`.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed observation interval `[t_begin, t_end]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_begin: f64,
    pub t_end: f64,
}

impl Window {
    pub fn new(t_begin: f64, t_end: f64) -> Result<Self> {
        if !(t_begin.is_finite() && t_end.is_finite()) || t_begin >= t_end {
            return Err(Error::InvalidConfig(format!(
                "window [{t_begin}, {t_end}] must be finite with t_begin < t_end"
            )));
        }
        Ok(Self { t_begin, t_end })
    }

    pub fn length(&self) -> f64 {
        self.t_end - self.t_begin
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_begin && t <= self.t_end
    }
}

impl FromStr for Window {
    type Err = Error;

    /// Parses `a:b`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) =
            s.split_once(':').ok_or_else(|| Error::InvalidConfig(format!("window '{s}' must look like a:b")))?;
        let parse = |v: &str| {
            v.trim().parse::<f64>().map_err(|_| Error::InvalidConfig(format!("window bound '{v}' is not a number")))
        };
        Window::new(parse(a)?, parse(b)?)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.t_begin, self.t_end)
    }
}

/// Strictly increasing sequence of finite event times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpikeTrain {
    times: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite event time {t}")));
        }
        if let Some(w) = times.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData(format!(
                "event times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { times })
    }

    pub fn empty() -> Self {
        Self { times: Vec::new() }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Events strictly before `t`.
    pub fn before(&self, t: f64) -> &[f64] {
        let n = self.times.partition_point(|&s| s < t);
        &self.times[..n]
    }

    /// Number of events in the half-open interval `(a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let lo = self.times.partition_point(|&s| s <= a);
        let hi = self.times.partition_point(|&s| s <= b);
        hi.saturating_sub(lo)
    }
}

/// Trial-major grid of spike trains observed on a common window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeDataset {
    /// Window in the original (file) time coordinates.
    pub window: Window,
    pub trial_ids: Vec<i64>,
    pub neuron_ids: Vec<i64>,
    trains: Vec<Vec<SpikeTrain>>,
}

impl SpikeDataset {
    /// Builds a dataset whose trains are already expressed relative to
    /// `window.t_begin`. Ids default to `1..=n`.
    pub fn new(window: Window, trains: Vec<Vec<SpikeTrain>>) -> Result<Self> {
        let n_trials = trains.len();
        let n_neurons = trains.first().map_or(0, |t| t.len());
        let trial_ids = (1..=n_trials as i64).collect();
        let neuron_ids = (1..=n_neurons as i64).collect();
        Self::with_ids(window, trial_ids, neuron_ids, trains)
    }

    pub fn with_ids(
        window: Window,
        trial_ids: Vec<i64>,
        neuron_ids: Vec<i64>,
        trains: Vec<Vec<SpikeTrain>>,
    ) -> Result<Self> {
        if trains.is_empty() || neuron_ids.is_empty() {
            return Err(Error::EmptyDataset("no trials or no neurons".into()));
        }
        if trains.len() != trial_ids.len() {
            return Err(Error::DimensionMismatch { expected: trial_ids.len(), found: trains.len() });
        }
        let t_max = window.length();
        for trial in &trains {
            if trial.len() != neuron_ids.len() {
                return Err(Error::DimensionMismatch { expected: neuron_ids.len(), found: trial.len() });
            }
            for train in trial {
                if let (Some(&a), Some(&b)) = (train.times.first(), train.times.last()) {
                    if a < 0.0 || b > t_max {
                        return Err(Error::InvalidData(format!("event outside the observation window [0, {t_max}]")));
                    }
                }
            }
        }
        Ok(Self { window, trial_ids, neuron_ids, trains })
    }

    pub fn n_trials(&self) -> usize {
        self.trains.len()
    }

    pub fn n_neurons(&self) -> usize {
        self.neuron_ids.len()
    }

    /// Length of the observation window; trains live on `[0, t_max]`.
    pub fn t_max(&self) -> f64 {
        self.window.length()
    }

    pub fn train(&self, trial: usize, neuron: usize) -> &SpikeTrain {
        &self.trains[trial][neuron]
    }

    /// All neuron trains of one trial.
    pub fn trial(&self, trial: usize) -> &[SpikeTrain] {
        &self.trains[trial]
    }

    pub fn trials(&self) -> impl Iterator<Item = &[SpikeTrain]> {
        self.trains.iter().map(|t| t.as_slice())
    }

    pub fn total_events(&self) -> usize {
        self.trains.iter().flatten().map(SpikeTrain::len).sum()
    }

    /// Events of `neuron` summed over trials.
    pub fn neuron_count(&self, neuron: usize) -> usize {
        self.trains.iter().map(|t| t[neuron].len()).sum()
    }

    /// Dense index of an external neuron id.
    pub fn neuron_index(&self, id: i64) -> Option<usize> {
        self.neuron_ids.iter().position(|&n| n == id)
    }

    /// Keeps the listed neurons, in the given order.
    pub fn select_neurons(&self, neurons: &[usize]) -> Result<Self> {
        let m = self.n_neurons();
        if let Some(&bad) = neurons.iter().find(|&&j| j >= m) {
            return Err(Error::IndexOutOfRange { index: bad, size: m });
        }
        let trains = self.trains.iter().map(|trial| neurons.iter().map(|&j| trial[j].clone()).collect()).collect();
        let ids = neurons.iter().map(|&j| self.neuron_ids[j]).collect();
        Self::with_ids(self.window, self.trial_ids.clone(), ids, trains)
    }

    /// Keeps the listed trials, in the given order.
    pub fn select_trials(&self, trials: &[usize]) -> Result<Self> {
        let n = self.n_trials();
        if let Some(&bad) = trials.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, size: n });
        }
        let trains = trials.iter().map(|&i| self.trains[i].clone()).collect();
        let ids = trials.iter().map(|&i| self.trial_ids[i]).collect();
        Self::with_ids(self.window, ids, self.neuron_ids.clone(), trains)
    }

    /// Restricts to `window` (original coordinates) and re-bases times so the
    /// new window starts at zero.
    pub fn restrict(&self, window: Window) -> Result<Self> {
        let shift = window.t_begin - self.window.t_begin;
        let (lo, hi) = (shift, window.t_end - self.window.t_begin);
        let trains = self
            .trains
            .iter()
            .map(|trial| {
                trial
                    .iter()
                    .map(|train| SpikeTrain {
                        times: train
                            .times
                            .iter()
                            .filter(|&&t| t >= lo && t <= hi)
                            .map(|&t| (t - shift).max(0.0).min(window.length()))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        Self::with_ids(window, self.trial_ids.clone(), self.neuron_ids.clone(), trains)
    }
}

/// Parses a spike CSV, keeping rows inside `window` and shifting them so the
/// window starts at zero. Neuron and trial ids are indexed densely in
/// ascending order over the whole file.
pub fn read_spike_dataset<R: Read>(reader: R, window: Window) -> Result<SpikeDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["trial", "neuron", "time"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header 'trial,neuron,time', found '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str, v: &str| Error::Parse { line, message: format!("invalid {what} '{v}'") };
        let trial: i64 = field(0).parse().map_err(|_| bad("trial id", field(0)))?;
        let neuron: i64 = field(1).parse().map_err(|_| bad("neuron id", field(1)))?;
        let time: f64 = field(2).parse().map_err(|_| bad("time", field(2)))?;
        if !time.is_finite() {
            return Err(Error::Parse { line, message: format!("non-finite time '{}'", field(2)) });
        }
        rows.push((trial, neuron, time, line));
    }

    let trial_ids: Vec<i64> = rows.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
    let neuron_ids: Vec<i64> = rows.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    if rows.is_empty() {
        return Err(Error::EmptyDataset("spike file has no rows".into()));
    }

    let mut raw: Vec<Vec<Vec<(f64, usize)>>> = vec![vec![Vec::new(); neuron_ids.len()]; trial_ids.len()];
    for &(trial, neuron, time, line) in &rows {
        let i = trial_ids.binary_search(&trial).expect("id collected above");
        let j = neuron_ids.binary_search(&neuron).expect("id collected above");
        raw[i][j].push((time, line));
    }

    let mut any = false;
    let mut trains = Vec::with_capacity(raw.len());
    for (i, trial) in raw.into_iter().enumerate() {
        let mut row = Vec::with_capacity(trial.len());
        for (j, mut events) in trial.into_iter().enumerate() {
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = events.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Parse {
                    line: w[1].1,
                    message: format!(
                        "duplicate event at time {} for trial {} neuron {}",
                        w[1].0, trial_ids[i], neuron_ids[j]
                    ),
                });
            }
            let times: Vec<f64> = events
                .into_iter()
                .map(|e| e.0)
                .filter(|&t| window.contains(t))
                .map(|t| (t - window.t_begin).min(window.length()))
                .collect();
            any |= !times.is_empty();
            row.push(SpikeTrain { times });
        }
        trains.push(row);
    }
    if !any {
        return Err(Error::EmptyDataset(format!("no events inside window [{window}]")));
    }
    SpikeDataset::with_ids(window, trial_ids, neuron_ids, trains)
}

pub fn load_spike_dataset(path: impl AsRef<Path>, window: Window) -> Result<SpikeDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_spike_dataset(std::io::BufReader::new(file), window)
}

/// Writes the dataset in original time coordinates so that loading the
/// output with `data.window` reproduces `data`.
pub fn write_spike_dataset<W: Write>(data: &SpikeDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trial", "neuron", "time"])?;
    for (i, trial) in data.trains.iter().enumerate() {
        for (j, train) in trial.iter().enumerate() {
            for &t in train.times() {
                w.write_record(&[
                    data.trial_ids[i].to_string(),
                    data.neuron_ids[j].to_string(),
                    (t + data.window.t_begin).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_spike_dataset(data: &SpikeDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_spike_dataset(data, std::io::BufWriter::new(file))
}

/// Uniformly sampled scalar path: `values[k]` is observed at `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(Error::InvalidData(format!("sampling step must be positive, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidData("a sample path needs at least two samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("sample path contains non-finite values".into()));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Samples inside `window`, re-based so the window starts at zero.
    pub fn restrict(&self, window: Window) -> Result<Self> {
        let first = ((window.t_begin - self.t0) / self.dt - 1e-9).ceil().max(0.0) as usize;
        let last = ((window.t_end - self.t0) / self.dt + 1e-9).floor();
        if last < 0.0 {
            return Err(Error::EmptyDataset(format!("potential path has no samples in [{window}]")));
        }
        let last = (last as usize).min(self.values.len() - 1);
        if first >= last {
            return Err(Error::EmptyDataset(format!("potential path has fewer than two samples in [{window}]")));
        }
        Self::new(self.time(first) - window.t_begin, self.dt, self.values[first..=last].to_vec())
    }

    /// Keeps one sample out of `factor`.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidConfig("downsampling factor must be >= 1".into()));
        }
        let values = self.values.iter().step_by(factor).copied().collect();
        Self::new(self.t0, self.dt * factor as f64, values)
    }
}

const STEP_REL_TOL: f64 = 1e-6;

pub fn read_potential<R: Read>(reader: R) -> Result<SamplePath> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "potential_mv" {
        return Err(Error::Parse { line: 1, message: "expected header 'time,potential_mv'".into() });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse = |i: usize, what: &str| -> Result<f64> {
            let s = record.get(i).unwrap_or("");
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse { line, message: format!("invalid {what} '{s}'") }),
            }
        };
        times.push((parse(0, "time")?, line));
        values.push(parse(1, "potential")?);
    }
    if times.len() < 2 {
        return Err(Error::EmptyDataset("potential file needs at least two rows".into()));
    }
    let t0 = times[0].0;
    let dt = times[1].0 - t0;
    if dt <= 0.0 {
        return Err(Error::Parse { line: times[1].1, message: "time must increase".into() });
    }
    for (k, &(t, line)) in times.iter().enumerate().skip(2) {
        let step = t - times[k - 1].0;
        if (step - dt).abs() > STEP_REL_TOL * dt {
            return Err(Error::Parse { line, message: format!("non-uniform sampling step {step} (expected {dt})") });
        }
    }
    SamplePath::new(t0, dt, values)
}

pub fn load_potential(path: impl AsRef<Path>) -> Result<SamplePath> {
    let file = std::fs::File::open(path.as_ref())?;
    read_potential(std::io::BufReader::new(file))
}

pub fn write_potential<W: Write>(path: &SamplePath, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "potential_mv"])?;
    for (k, v) in path.values.iter().enumerate() {
        w.write_record(&[path.time(k).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_potential(path: &SamplePath, file: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(file.as_ref())?;
    write_potential(path, std::io::BufWriter::new(f))
}

/// Upward threshold crossings: sample `k` is an event when
/// `values[k-1] <= threshold < values[k]`.
pub fn extract_spikes_from_potential(path: &SamplePath, threshold: f64) -> SpikeTrain {
    let times = path
        .values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] <= threshold && w[1] > threshold)
        .map(|(k, _)| path.time(k + 1))
        .collect();
    SpikeTrain { times }
}

/// What [`drop_empty`] removed, as dense indices of the input dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub neurons: Vec<usize>,
    pub trials: Vec<usize>,
    pub neuron_ids: Vec<i64>,
    pub trial_ids: Vec<i64>,
}

impl DropReport {
    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty() && self.trials.is_empty()
    }
}

/// Removes neurons silent in every trial and trials silent for every neuron.
pub fn drop_empty(data: &SpikeDataset) -> Result<(SpikeDataset, DropReport)> {
    let (keep_n, drop_n): (Vec<usize>, Vec<usize>) = (0..data.n_neurons()).partition(|&j| data.neuron_count(j) > 0);
    if keep_n.is_empty() {
        return Err(Error::EmptyDataset("every neuron is silent".into()));
    }
    let (keep_t, drop_t): (Vec<usize>, Vec<usize>) =
        (0..data.n_trials()).partition(|&i| data.trial(i).iter().any(|t| !t.is_empty()));
    let report = DropReport {
        neuron_ids: drop_n.iter().map(|&j| data.neuron_ids[j]).collect(),
        trial_ids: drop_t.iter().map(|&i| data.trial_ids[i]).collect(),
        neurons: drop_n,
        trials: drop_t,
    };
    let out = data.select_neurons(&keep_n)?.select_trials(&keep_t)?;
    Ok((out, report))
}
