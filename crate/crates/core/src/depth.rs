//! Random-projection halfspace depth for curves sampled on a common grid,
//! and the Monte-Carlo ranking procedure that compares a recorded path with
//! samples regenerated from a jump model and from a plain diffusion.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SamplePath;
use crate::error::{Error, Result};
use crate::jumpdiff::{regenerate, FittedCoefficients, InitialState};
use crate::model::HawkesModel;
use crate::sim::trial_rng;

/// How the per-direction depths are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Average over directions.
    #[default]
    Mean,
    /// Smallest over directions (plain halfspace depth).
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    /// Number of grid values each curve is reduced to.
    pub points: usize,
    pub n_directions: usize,
    pub aggregation: Aggregation,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self { points: 50, n_directions: 1000, aggregation: Aggregation::Mean }
    }
}

impl DepthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || self.n_directions == 0 {
            return Err(Error::InvalidConfig("depth needs at least one point and one direction".into()));
        }
        Ok(())
    }
}

/// Values at `d` equally spaced grid indices (all values when shorter).
pub fn discretize(path: &SamplePath, d: usize) -> Vec<f64> {
    let n = path.len();
    if n <= d {
        return path.values.clone();
    }
    (0..d).map(|i| path.values[if d == 1 { 0 } else { (i * (n - 1) + (d - 1) / 2) / (d - 1) }]).collect()
}

/// `n` unit directions in `R^dim`; the first `k` depend only on the seed,
/// so shorter sets are prefixes of longer ones.
pub fn directions(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = trial_rng(seed, 0);
    (0..n)
        .map(|_| loop {
            let u: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break u.into_iter().map(|v| v / norm).collect();
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_grid(curves: &[&SamplePath]) -> Result<()> {
    let first = curves[0];
    for c in curves {
        if c.len() != first.len() || (c.dt - first.dt).abs() > 1e-12 * first.dt.abs() {
            return Err(Error::InvalidData(format!(
                "curve grid mismatch: {} samples at dt={} vs {} at dt={}",
                c.len(),
                c.dt,
                first.len(),
                first.dt
            )));
        }
    }
    Ok(())
}

fn combine(acc: &mut [f64], values: impl Iterator<Item = f64>, agg: Aggregation) {
    for (a, v) in acc.iter_mut().zip(values) {
        match agg {
            Aggregation::Mean => *a += v,
            Aggregation::Min => *a = a.min(v),
        }
    }
}

/// Depth of each query point with respect to the point cloud `sample`.
pub fn depth_of_points(queries: &[Vec<f64>], sample: &[Vec<f64>], dirs: &[Vec<f64>], agg: Aggregation) -> Vec<f64> {
    let n = sample.len() as f64;
    let init = if agg == Aggregation::Mean { 0.0 } else { f64::INFINITY };
    let mut acc = vec![init; queries.len()];
    let mut proj = Vec::with_capacity(sample.len());
    for u in dirs {
        proj.clear();
        proj.extend(sample.iter().map(|p| dot(p, u)));
        proj.sort_by(f64::total_cmp);
        let per_query = queries.iter().map(|q| {
            let v = dot(q, u);
            let below = proj.partition_point(|&x| x < v);
            let at_most = proj.partition_point(|&x| x <= v);
            let ge = proj.len() - below;
            ge.min(at_most) as f64 / n
        });
        combine(&mut acc, per_query, agg);
    }
    if agg == Aggregation::Mean {
        acc.iter_mut().for_each(|a| *a /= dirs.len() as f64);
    }
    acc
}

/// Depth of `query` within `sample`.
pub fn curve_depth(query: &SamplePath, sample: &[SamplePath], cfg: &DepthConfig, seed: u64) -> Result<f64> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptyDataset("curve sample is empty".into()));
    }
    let mut all: Vec<&SamplePath> = sample.iter().collect();
    all.push(query);
    check_grid(&all)?;
    let pts: Vec<Vec<f64>> = sample.iter().map(|c| discretize(c, cfg.points)).collect();
    let q = discretize(query, cfg.points);
    let dirs = directions(q.len(), cfg.n_directions, seed);
    Ok(depth_of_points(&[q], &pts, &dirs, cfg.aggregation)[0])
}

/// `1 + #{members strictly shallower than the query}`; 1 is the most outlying.
pub fn rank_of(query_depth: f64, member_depths: &[f64]) -> usize {
    1 + member_depths.iter().filter(|&&d| d < query_depth).count()
}

/// A regeneration model: fitted coefficients plus their driver.
#[derive(Debug, Clone)]
pub struct Generator<'a> {
    pub coefficients: &'a FittedCoefficients,
    pub driver: &'a HawkesModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub n_rep: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub x0: InitialState,
    pub depth: DepthConfig,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { n_rep: 100, n_mc: 50, seed: 0, x0: InitialState::default(), depth: DepthConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub depth_jump: f64,
    pub rank_jump: usize,
    pub depth_nojump: f64,
    pub rank_nojump: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub n_rep: usize,
    pub repetitions: Vec<Repetition>,
    pub median_depth_jump: f64,
    pub median_rank_jump: f64,
    pub median_depth_nojump: f64,
    pub median_rank_nojump: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Depth and rank of `real` within `sample`, both computed against the
/// pooled set of sample members and the real path.
fn rank_in(real: &[f64], sample: Vec<Vec<f64>>, dirs: &[Vec<f64>], agg: Aggregation) -> (f64, usize) {
    let mut pooled = sample;
    pooled.push(real.to_vec());
    let depths = depth_of_points(&pooled, &pooled, dirs, agg);
    let (members, real_depth) = depths.split_at(depths.len() - 1);
    (real_depth[0], rank_of(real_depth[0], members))
}

fn regenerate_sample(
    g: &Generator<'_>,
    real: &SamplePath,
    seeds: &[u64],
    cfg: &ValidationConfig,
) -> Result<Vec<Vec<f64>>> {
    let horizon = (real.len() - 1) as f64 * real.dt;
    seeds
        .iter()
        .map(|&s| {
            let p = regenerate(g.coefficients, g.driver, horizon, real.dt, cfg.x0, s)?;
            Ok(discretize(&p, cfg.depth.points))
        })
        .collect()
}

/// Ranks `real` among `n_rep` paths from each generator, `n_mc` times.
/// Repetition `r` draws its path seeds and directions from `trial_rng(seed, r)`,
/// so results do not depend on the thread schedule.
pub fn depth_validation(
    real: &SamplePath,
    with_jumps: &Generator<'_>,
    without_jumps: &Generator<'_>,
    cfg: &ValidationConfig,
) -> Result<DepthReport> {
    cfg.depth.validate()?;
    if cfg.n_rep < 2 || cfg.n_mc == 0 {
        return Err(Error::InvalidConfig("need n_rep >= 2 and n_mc >= 1".into()));
    }
    if real.len() < 2 {
        return Err(Error::InvalidData("real path needs at least two samples".into()));
    }
    let q = discretize(real, cfg.depth.points);
    let repetitions = (0..cfg.n_mc)
        .into_par_iter()
        .map(|r| {
            let mut rng = trial_rng(cfg.seed, r);
            let dir_seed = rng.next_u64();
            let seeds: Vec<u64> = (0..2 * cfg.n_rep).map(|_| rng.next_u64()).collect();
            let dirs = directions(q.len(), cfg.depth.n_directions, dir_seed);
            let jump = regenerate_sample(with_jumps, real, &seeds[..cfg.n_rep], cfg)?;
            let plain = regenerate_sample(without_jumps, real, &seeds[cfg.n_rep..], cfg)?;
            let (depth_jump, rank_jump) = rank_in(&q, jump, &dirs, cfg.depth.aggregation);
            let (depth_nojump, rank_nojump) = rank_in(&q, plain, &dirs, cfg.depth.aggregation);
            Ok(Repetition { depth_jump, rank_jump, depth_nojump, rank_nojump })
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&Repetition) -> f64| median(&repetitions.iter().map(f).collect::<Vec<_>>());
    Ok(DepthReport {
        n_rep: cfg.n_rep,
        median_depth_jump: col(|r| r.depth_jump),
        median_rank_jump: col(|r| r.rank_jump as f64),
        median_depth_nojump: col(|r| r.depth_nojump),
        median_rank_nojump: col(|r| r.rank_nojump as f64),
        repetitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(v: f64, n: usize) -> SamplePath {
        SamplePath::new(0.0, 0.1, vec![v; n]).unwrap()
    }

    fn random_curves(n: usize, len: usize, seed: u64) -> Vec<SamplePath> {
        let mut rng = trial_rng(seed, 0);
        (0..n)
            .map(|_| {
                let mut x = 0.0;
                let v = (0..len)
                    .map(|_| {
                        x += rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect();
                SamplePath::new(0.0, 0.1, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_curves_have_full_depth() {
        let sample = vec![constant(2.0, 60); 7];
        for agg in [Aggregation::Mean, Aggregation::Min] {
            let cfg = DepthConfig { aggregation: agg, ..Default::default() };
            assert_eq!(curve_depth(&constant(2.0, 60), &sample, &cfg, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn far_outlier_has_no_depth() {
        let sample = random_curves(20, 100, 3);
        let q = SamplePath::new(0.0, 0.1, sample[0].values.iter().map(|v| v + 1e6).collect()).unwrap();
        let d = curve_depth(&q, &sample, &DepthConfig::default(), 2).unwrap();
        assert!(d <= 1.0 / 20.0);
    }

    #[test]
    fn median_of_constant_curves() {
        let sample: Vec<SamplePath> = (1..=9).map(|v| constant(v as f64, 80)).collect();
        for agg in [Aggregation::Mean, Aggregation::Min] {
            let cfg = DepthConfig { aggregation: agg, ..Default::default() };
            assert_relative_eq!(curve_depth(&constant(5.0, 80), &sample, &cfg, 4).unwrap(), 5.0 / 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let sample = vec![constant(1.0, 10), constant(2.0, 10)];
        assert!(curve_depth(&constant(1.0, 11), &sample, &DepthConfig::default(), 0).is_err());
    }

    #[test]
    fn two_dimensional_enumeration() {
        // exact halfspace depth of the centre of a square with four corners is 2/4
        let pts: Vec<Vec<f64>> = vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0]];
        let dirs = directions(2, 2000, 5);
        let d = depth_of_points(&[vec![0.0, 0.0]], &pts, &dirs, Aggregation::Min)[0];
        assert_relative_eq!(d, 0.5);
        let corner = depth_of_points(&[vec![1.0, 1.0]], &pts, &dirs, Aggregation::Min)[0];
        assert_relative_eq!(corner, 0.25);
    }

    #[test]
    fn members_have_positive_depth() {
        let sample = random_curves(30, 200, 8);
        let pts: Vec<Vec<f64>> = sample.iter().map(|c| discretize(c, 50)).collect();
        let dirs = directions(50, 300, 1);
        for agg in [Aggregation::Mean, Aggregation::Min] {
            for d in depth_of_points(&pts, &pts, &dirs, agg) {
                assert!((1.0 / 30.0..=1.0).contains(&d));
            }
        }
    }

    #[test]
    fn nested_directions_never_increase_min_depth() {
        let sample = random_curves(25, 120, 11);
        let pts: Vec<Vec<f64>> = sample.iter().map(|c| discretize(c, 50)).collect();
        let mut prev = vec![f64::INFINITY; pts.len()];
        for n in [10, 50, 200, 800] {
            let d = depth_of_points(&pts, &pts, &directions(50, n, 3), Aggregation::Min);
            assert!(d.iter().zip(&prev).all(|(a, b)| a <= b));
            prev = d;
        }
    }

    #[test]
    fn sign_flip_and_permutation_invariance() {
        let sample = random_curves(15, 50, 12);
        let pts: Vec<Vec<f64>> = sample.iter().map(|c| c.values.clone()).collect();
        let dirs = directions(50, 200, 9);
        let base = depth_of_points(&pts, &pts, &dirs, Aggregation::Mean);
        let flip = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<_>>();
        let flipped: Vec<Vec<f64>> = pts.iter().map(flip).collect();
        let fdirs: Vec<Vec<f64>> = dirs.iter().map(flip).collect();
        assert_eq!(base, depth_of_points(&flipped, &flipped, &fdirs, Aggregation::Mean));
        let perm = |v: &Vec<f64>| v.iter().rev().copied().collect::<Vec<_>>();
        let permuted: Vec<Vec<f64>> = pts.iter().map(perm).collect();
        let pdirs: Vec<Vec<f64>> = dirs.iter().map(perm).collect();
        assert_eq!(base, depth_of_points(&permuted, &permuted, &pdirs, Aggregation::Mean));
    }

    #[test]
    fn affine_invariance_within_tolerance() {
        let sample = random_curves(40, 50, 21);
        let pts: Vec<Vec<f64>> = sample.iter().map(|c| c.values.clone()).collect();
        let mapped: Vec<Vec<f64>> =
            pts.iter().map(|v| v.iter().enumerate().map(|(i, x)| 3.0 * x + i as f64).collect()).collect();
        let a = depth_of_points(&pts, &pts, &directions(50, 2000, 1), Aggregation::Mean);
        let b = depth_of_points(&mapped, &mapped, &directions(50, 2000, 2), Aggregation::Mean);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 0.05, "{x} vs {y}");
        }
    }

    #[test]
    fn rank_counts_strictly_shallower() {
        assert_eq!(rank_of(0.3, &[0.1, 0.3, 0.5]), 2);
        assert_eq!(rank_of(0.0, &[0.1, 0.3]), 1);
        assert_eq!(rank_of(0.9, &[0.1, 0.3]), 3);
    }

    #[test]
    fn discretize_picks_endpoints() {
        let p = SamplePath::new(0.0, 1.0, (0..101).map(f64::from).collect()).unwrap();
        let d = discretize(&p, 5);
        assert_eq!(d, vec![0.0, 25.0, 50.0, 75.0, 100.0]);
    }
}
