use neurohawkes::data::{SamplePath, SpikeTrain};
use neurohawkes::jumpdiff::{
    fit_drift, fit_g, fit_jumpdiff, regenerate, simulate_path, BinnedFunction, EstimConfig, InitialState,
    JumpDiffusionModel, ScalarFn, SpikeSource,
};
use neurohawkes::model::{ExpHawkesModel, HawkesModel};
use neurohawkes::sim::{simulate_trial, DEFAULT_EVENT_CAP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn driver() -> HawkesModel {
    ExpHawkesModel::poisson(vec![1.0; 3], 1.0).unwrap().into()
}

fn spikes(horizon: f64, seed: u64) -> Vec<SpikeTrain> {
    simulate_trial(&driver(), horizon, DEFAULT_EVENT_CAP, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn model(b: ScalarFn, sigma: f64, a: f64) -> JumpDiffusionModel {
    JumpDiffusionModel {
        b,
        sigma: ScalarFn::Constant { value: sigma },
        a: ScalarFn::Constant { value: a },
        driver: driver(),
    }
}

fn leak() -> ScalarFn {
    ScalarFn::Linear { slope: -2.0, intercept: -90.0 }
}

/// Bins holding at least `share` of the observations.
fn bulk(f: &BinnedFunction, share: f64) -> Vec<usize> {
    let total: usize = f.counts.iter().sum();
    (0..f.dim()).filter(|&i| f.counts[i] as f64 >= share * total as f64).collect()
}

fn occupancy_mean(f: &BinnedFunction) -> f64 {
    let total: usize = f.counts.iter().sum();
    (0..f.dim()).filter(|&i| f.mask[i]).map(|i| f.values[i] * f.counts[i] as f64).sum::<f64>() / total as f64
}

#[test]
fn g_matches_the_plug_in_identity() {
    let s = spikes(50.0, 21);
    let p = simulate_path(&model(leak(), 0.25, 2.0), -45.0, 1e-3, 50.0, SpikeSource::Given(&s), 21).unwrap();
    let g = fit_g(&p, &EstimConfig::default()).unwrap();
    let truth = 0.0625 + 4.0 * 3.0;
    let m = occupancy_mean(&g);
    assert!((m - truth).abs() <= 0.2 * truth, "g_hat {m}");
}

#[test]
fn drift_without_jumps_tracks_the_leak() {
    let sigma = 0.5;
    let dt = 1e-3;
    let p = simulate_path(&model(leak(), sigma, 0.0), -45.0, dt, 13.0, SpikeSource::Given(&[]), 5).unwrap();
    let b = fit_drift(&p, &[], &ScalarFn::zero(), &EstimConfig::default()).unwrap();
    let centers = b.centers();
    let bins = bulk(&b, 0.05);
    assert!(!bins.is_empty());
    for i in bins {
        let truth = leak().eval(centers[i]);
        let se = sigma / (dt * b.counts[i] as f64).sqrt();
        let tol = (0.25 * truth.abs()).max(3.0 * se);
        assert!((b.values[i] - truth).abs() <= tol, "bin {i}: {} vs {truth} (tol {tol})", b.values[i]);
    }
}

#[test]
fn drift_is_centred_when_jumps_are_removed_exactly() {
    let sigma = 0.5;
    let dt = 1e-3;
    let s = spikes(13.0, 8);
    let p = simulate_path(&model(ScalarFn::zero(), sigma, 2.0), 0.0, dt, 13.0, SpikeSource::Given(&s), 8).unwrap();
    let b = fit_drift(&p, &s, &ScalarFn::Constant { value: 2.0 }, &EstimConfig::default()).unwrap();
    for i in bulk(&b, 0.05) {
        let se = sigma / (dt * b.counts[i] as f64).sqrt();
        assert!(b.values[i].abs() <= 3.0 * se, "bin {i}: {} (se {se})", b.values[i]);
    }
}

#[test]
fn overestimated_jumps_pull_the_drift_down() {
    let s = spikes(13.0, 9);
    let p = simulate_path(&model(leak(), 0.5, 2.0), -45.0, 1e-3, 13.0, SpikeSource::Given(&s), 9).unwrap();
    let cfg = EstimConfig::default();
    let exact = fit_drift(&p, &s, &ScalarFn::Constant { value: 2.0 }, &cfg).unwrap();
    let doubled = fit_drift(&p, &s, &ScalarFn::Constant { value: 4.0 }, &cfg).unwrap();
    assert!(occupancy_mean(&doubled) < occupancy_mean(&exact));
}

#[test]
fn jump_size_estimate_scales_with_the_jumps() {
    let s = spikes(50.0, 31);
    let fit = |a: f64| {
        let p = simulate_path(&model(leak(), 0.5, a), -45.0, 1e-3, 50.0, SpikeSource::Given(&s), 31).unwrap();
        let f = fit_jumpdiff(&p, &s, &driver(), &EstimConfig::default()).unwrap();
        let x_bar = p.values[..p.len() - 1].iter().sum::<f64>() / (p.len() - 1) as f64;
        f.approximations.a.eval(x_bar)
    };
    let (a1, a2) = (fit(2.0), fit(4.0));
    let ratio = a2 / a1;
    assert!((ratio - 2.0).abs() <= 0.3, "a_hat {a1} -> {a2}");
}

/// Mean squared increment per unit time of the steps starting in each bin.
fn binned_qv(p: &SamplePath, edges: &[f64]) -> Vec<(f64, usize)> {
    let d = edges.len() - 1;
    let mut acc = vec![(0.0, 0usize); d];
    for w in p.values.windows(2) {
        if w[0] < edges[0] || w[0] > edges[d] {
            continue;
        }
        let i = edges[1..].partition_point(|&e| e < w[0]).min(d - 1);
        acc[i].0 += (w[1] - w[0]).powi(2) / p.dt;
        acc[i].1 += 1;
    }
    acc
}

#[test]
fn regenerated_paths_reproduce_the_quadratic_variation() {
    let horizon = 300.0;
    let s = spikes(horizon, 41);
    let p = simulate_path(&model(leak(), 0.5, 2.0), -45.0, 1e-3, horizon, SpikeSource::Given(&s), 41).unwrap();
    let fit = fit_jumpdiff(&p, &s, &driver(), &EstimConfig::default()).unwrap();
    let edges: Vec<f64> = (0..=8).map(|i| fit.domain.0 + i as f64 * (fit.domain.1 - fit.domain.0) / 8.0).collect();
    let original = binned_qv(&p, &edges);
    let mut regen = [(0.0, 0usize); 8];
    for seed in 0..10 {
        let r = regenerate(&fit, &driver(), horizon, 1e-3, InitialState::Fixed { value: -45.0 }, seed).unwrap();
        for (acc, (q, n)) in regen.iter_mut().zip(binned_qv(&r, &edges)) {
            acc.0 += q;
            acc.1 += n;
        }
    }
    let total = p.len() - 1;
    let mut checked = 0;
    for i in 0..8 {
        let (q0, n0) = original[i];
        let (q1, n1) = regen[i];
        if n0 * 20 < total || n1 == 0 {
            continue;
        }
        let (m0, m1) = (q0 / n0 as f64, q1 / n1 as f64);
        assert!((m1 - m0).abs() <= 0.25 * m0, "bin {i}: original {m0}, regenerated {m1}");
        checked += 1;
    }
    assert!(checked >= 2);
}
