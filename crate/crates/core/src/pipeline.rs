//! Batch analysis from spike trains and a membrane-potential recording to
//! the depth-based validation of the jump-diffusion model.
//!
//! Stages run in a fixed order and write every intermediate result below the
//! output directory. `manifest.json` lists each stage with the SHA-256 of its
//! outputs; it is written even when a stage fails.
//!
//! Seeds in the `[gof]` and `[depth]` tables are offsets added to the global
//! `seed`, so changing the latter reseeds every stochastic stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adm4::{fit_adm4, select_subnetwork, Adm4Config};
use crate::data::{
    drop_empty, load_potential, load_spike_dataset, write_potential, write_spike_dataset, SamplePath, SpikeDataset,
    Window,
};
use crate::depth::{depth_validation, Generator, ValidationConfig};
use crate::error::{Error, Result};
use crate::gof::{run_gof, GofConfig};
use crate::jumpdiff::{
    fit_diffusion_only, fit_jumpdiff, regenerate, simulate_path, EstimConfig, JumpDiffusionModel, ScalarFn, SpikeSource,
};
use crate::model::{ExpHawkesModel, HawkesModel};
use crate::network::{matrix_distance, psth, sparsity_fraction, triggered_coefficient};
use crate::npl::{fit_npl, NplConfig};
use crate::sim::{simulate, SimConfig};

pub const STAGES: [&str; 10] = [
    "ingest",
    "psth",
    "fit-adm4-full",
    "select-subnetwork",
    "fit-subnetwork",
    "compare-matrices",
    "gof",
    "fit-jumpdiff",
    "regenerate",
    "depth-validate",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub spikes: Option<PathBuf>,
    pub potential: Option<PathBuf>,
    /// `"t0:t1"` in file coordinates; defaults to the synthetic horizon.
    pub window: Option<String>,
    /// Id of the neuron whose potential is recorded.
    pub central_neuron: Option<i64>,
    /// Keep one potential sample out of this many after restriction.
    pub downsample: Option<usize>,
}

/// Generator used when no recording is supplied: an exponential Hawkes
/// network where neurons `2..=n_parents+1` drive neuron 1, plus a few
/// unrelated links, and a potential of neuron 1 jumping at its parents' spikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub neurons: usize,
    pub trials: usize,
    pub horizon: f64,
    pub mu: f64,
    pub beta: f64,
    pub n_parents: usize,
    pub parent_weight: f64,
    pub extra_links: usize,
    pub extra_weight: f64,
    pub dt: f64,
    pub sigma: f64,
    pub jump: f64,
    pub drift_slope: f64,
    pub rest_potential: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            neurons: 20,
            trials: 9,
            horizon: 13.0,
            mu: 1.0,
            beta: 20.0,
            n_parents: 3,
            parent_weight: 0.3,
            extra_links: 4,
            extra_weight: 0.3,
            dt: 1e-3,
            sigma: 0.5,
            jump: 2.0,
            drift_slope: -2.0,
            rest_potential: -45.0,
        }
    }
}

impl SyntheticConfig {
    pub fn network(&self) -> Result<ExpHawkesModel> {
        let m = self.neurons;
        if m < self.n_parents + 1 {
            return Err(Error::InvalidConfig(format!("{m} neurons cannot hold {} parents", self.n_parents)));
        }
        let mut a = vec![vec![0.0; m]; m];
        a[0][1..=self.n_parents].fill(self.parent_weight);
        for k in 0..self.extra_links {
            let target = self.n_parents + 1 + 2 * k;
            if target + 1 < m {
                a[target][target + 1] = self.extra_weight;
            }
        }
        ExpHawkesModel::new(vec![self.mu; m], a, self.beta)
    }

    pub fn potential_model(&self, driver: HawkesModel) -> JumpDiffusionModel {
        JumpDiffusionModel {
            b: ScalarFn::Linear { slope: self.drift_slope, intercept: -self.drift_slope * self.rest_potential },
            sigma: ScalarFn::Constant { value: self.sigma },
            a: ScalarFn::Constant { value: self.jump },
            driver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsthSection {
    pub enabled: bool,
    pub bin: f64,
}

impl Default for PsthSection {
    fn default() -> Self {
        Self { enabled: true, bin: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubnetworkSection {
    pub threshold: f64,
    /// Half width of the spike-triggered coincidence window (s).
    pub halfwidth: f64,
}

impl Default for SubnetworkSection {
    fn default() -> Self {
        Self { threshold: 1e-5, halfwidth: 0.002 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpdiffSection {
    pub enabled: bool,
    /// Trial id the potential was recorded in; defaults to the first trial.
    pub trial: Option<i64>,
}

impl Default for JumpdiffSection {
    fn default() -> Self {
        Self { enabled: true, trial: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synthetic: Option<SyntheticConfig>,
    pub psth: PsthSection,
    pub adm4: Adm4Config,
    pub subnetwork: SubnetworkSection,
    pub npl: NplConfig,
    pub gof: GofConfig,
    pub jumpdiff: JumpdiffSection,
    pub estimation: EstimConfig,
    pub depth: ValidationConfig,
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    /// Reads a config file; relative data paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.spikes, &mut cfg.data.potential].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub outputs: Vec<OutputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn spikes_csv(data: &SpikeDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_spike_dataset(data, &mut buf)?;
    Ok(buf)
}

fn potential_csv(path: &SamplePath) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_potential(path, &mut buf)?;
    Ok(buf)
}

struct Writer<'a> {
    root: &'a Path,
    outputs: Vec<OutputRecord>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, &bytes)?;
        self.outputs.push(OutputRecord { path: rel.to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }
}

/// Simulates the synthetic spike file and potential recording into `dir`.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let network: HawkesModel = cfg.network()?.into();
    let data = simulate(&network, &SimConfig::new(cfg.horizon, cfg.trials, seed))?;
    let parents: Vec<usize> = (1..=cfg.n_parents).collect();
    let driver_data = data.select_neurons(&parents)?;
    let driver: HawkesModel =
        ExpHawkesModel::new(vec![cfg.mu; parents.len()], vec![vec![0.0; parents.len()]; parents.len()], cfg.beta)?
            .into();
    let model = cfg.potential_model(driver);
    let path =
        simulate_path(&model, cfg.rest_potential, cfg.dt, cfg.horizon, SpikeSource::Given(driver_data.trial(0)), seed)?;
    fs::create_dir_all(dir)?;
    let spikes = dir.join("spikes.csv");
    let potential = dir.join("potential.csv");
    fs::write(&spikes, spikes_csv(&data)?)?;
    fs::write(&potential, potential_csv(&path)?)?;
    Ok((spikes, potential))
}

/// State carried between stages.
#[derive(Default)]
struct State {
    data: Option<SpikeDataset>,
    potential: Option<SamplePath>,
    central: usize,
    full: Option<ExpHawkesModel>,
    subnetwork: Vec<usize>,
    sub_data: Option<SpikeDataset>,
    adm4_sub: Option<ExpHawkesModel>,
    npl_sub: Option<HawkesModel>,
    coeffs: Option<crate::jumpdiff::FittedCoefficients>,
    coeffs_nojump: Option<crate::jumpdiff::FittedCoefficients>,
}

fn missing(what: &str) -> Error {
    Error::InvalidConfig(format!("{what} is not available"))
}

#[derive(Serialize)]
struct SubnetworkReport {
    central_neuron: i64,
    threshold: f64,
    neuron_ids: Vec<i64>,
    weights: Vec<f64>,
    triggered: Vec<crate::network::TriggeredCoefficient>,
}

#[derive(Serialize)]
struct CompareReport {
    frobenius: f64,
    spectral: f64,
    sparsity_adm4_full: f64,
    sparsity_adm4: f64,
    sparsity_npl: f64,
}

#[derive(Serialize)]
struct GofSummary {
    adm4: crate::gof::GofReport,
    npl: crate::gof::GofReport,
}

impl PipelineConfig {
    fn window(&self) -> Result<Window> {
        match (&self.data.window, &self.synthetic) {
            (Some(w), _) => w.parse(),
            (None, Some(s)) => Window::new(0.0, s.horizon),
            (None, None) => Err(Error::InvalidConfig("data.window is required".into())),
        }
    }

    fn run_stage(&self, name: &str, st: &mut State, out: &mut Writer<'_>) -> Result<bool> {
        match name {
            "ingest" => {
                let window = self.window()?;
                let (spikes, potential) = match &self.synthetic {
                    Some(s) => {
                        let (a, b) = generate_synthetic(s, self.seed, &out.root.join("synthetic"))?;
                        (a, Some(b))
                    }
                    None => (
                        self.data
                            .spikes
                            .clone()
                            .ok_or_else(|| Error::InvalidConfig("data.spikes is required".into()))?,
                        self.data.potential.clone(),
                    ),
                };
                let raw = load_spike_dataset(&spikes, window)?;
                let (data, report) = drop_empty(&raw)?;
                let central_id = match (self.data.central_neuron, &self.synthetic) {
                    (Some(id), _) => id,
                    (None, Some(_)) => 1,
                    (None, None) => return Err(Error::InvalidConfig("data.central_neuron is required".into())),
                };
                st.central = data.neuron_index(central_id).ok_or_else(|| {
                    Error::InvalidData(format!("central neuron {central_id} is absent or silent in the window"))
                })?;
                out.put("ingest/spikes.csv", spikes_csv(&data)?)?;
                out.put("ingest/dropped.json", json(&report)?)?;
                if let Some(p) = potential {
                    let mut path = load_potential(&p)?.restrict(window)?;
                    if let Some(f) = self.data.downsample {
                        path = path.downsample(f)?;
                    }
                    out.put("ingest/potential.csv", potential_csv(&path)?)?;
                    st.potential = Some(path);
                }
                st.data = Some(data);
                Ok(true)
            }
            "psth" => {
                if !self.psth.enabled {
                    return Ok(false);
                }
                let data = st.data.as_ref().ok_or_else(|| missing("spike data"))?;
                let h = psth(data, self.psth.bin)?;
                let mut buf = Vec::new();
                h.write_csv(data.window.t_begin, &mut buf)?;
                out.put("psth/psth.csv", buf)?;
                Ok(true)
            }
            "fit-adm4-full" => {
                let data = st.data.as_ref().ok_or_else(|| missing("spike data"))?;
                let (model, diag) = fit_adm4(data, &self.adm4)?;
                out.put("adm4_full/model.json", HawkesModel::from(model.clone()).to_json()?.into_bytes())?;
                out.put("adm4_full/diagnostics.json", json(&diag)?)?;
                st.full = Some(model);
                Ok(true)
            }
            "select-subnetwork" => {
                let data = st.data.as_ref().ok_or_else(|| missing("spike data"))?;
                let full = st.full.as_ref().ok_or_else(|| missing("full-network model"))?;
                let sub = select_subnetwork(&full.adjacency(), st.central, self.subnetwork.threshold)?;
                if sub.is_empty() {
                    return Err(Error::InvalidData("no neuron influences the central neuron".into()));
                }
                let triggered = sub
                    .iter()
                    .map(|&l| triggered_coefficient(data, st.central, l, self.subnetwork.halfwidth))
                    .collect::<Result<Vec<_>>>()?;
                let report = SubnetworkReport {
                    central_neuron: data.neuron_ids[st.central],
                    threshold: self.subnetwork.threshold,
                    neuron_ids: sub.iter().map(|&l| data.neuron_ids[l]).collect(),
                    weights: sub.iter().map(|&l| full.a[st.central][l]).collect(),
                    triggered,
                };
                out.put("subnetwork/subnetwork.json", json(&report)?)?;
                let sub_data = data.select_neurons(&sub)?;
                out.put("subnetwork/spikes.csv", spikes_csv(&sub_data)?)?;
                st.subnetwork = sub;
                st.sub_data = Some(sub_data);
                Ok(true)
            }
            "fit-subnetwork" => {
                let data = st.sub_data.as_ref().ok_or_else(|| missing("subnetwork data"))?;
                let (adm4, d1) = fit_adm4(data, &self.adm4)?;
                let (npl, d2) = fit_npl(data, &self.npl)?;
                let adm4: HawkesModel = adm4.into();
                let npl: HawkesModel = npl.into();
                out.put("subnetwork/adm4_model.json", adm4.to_json()?.into_bytes())?;
                out.put("subnetwork/adm4_diagnostics.json", json(&d1)?)?;
                out.put("subnetwork/npl_model.json", npl.to_json()?.into_bytes())?;
                out.put("subnetwork/npl_diagnostics.json", json(&d2)?)?;
                st.adm4_sub = match adm4 {
                    HawkesModel::Exponential(m) => Some(m),
                    _ => unreachable!("ADM4 fits exponential kernels"),
                };
                st.npl_sub = Some(npl);
                Ok(true)
            }
            "compare-matrices" => {
                let adm4 = st.adm4_sub.as_ref().ok_or_else(|| missing("ADM4 subnetwork model"))?;
                let npl = st.npl_sub.as_ref().ok_or_else(|| missing("NPL subnetwork model"))?;
                let full = st.full.as_ref().ok_or_else(|| missing("full-network model"))?;
                let d = matrix_distance(&adm4.adjacency(), &npl.adjacency())?;
                let report = CompareReport {
                    frobenius: d.frobenius,
                    spectral: d.spectral,
                    sparsity_adm4_full: sparsity_fraction(&full.adjacency(), 0.0),
                    sparsity_adm4: sparsity_fraction(&adm4.adjacency(), 0.0),
                    sparsity_npl: sparsity_fraction(&npl.adjacency(), 0.0),
                };
                out.put("compare/compare.json", json(&report)?)?;
                Ok(true)
            }
            "gof" => {
                let data = st.sub_data.as_ref().ok_or_else(|| missing("subnetwork data"))?;
                let adm4: HawkesModel = st.adm4_sub.clone().ok_or_else(|| missing("ADM4 subnetwork model"))?.into();
                let npl = st.npl_sub.as_ref().ok_or_else(|| missing("NPL subnetwork model"))?;
                let cfg = GofConfig { seed: self.gof.seed.wrapping_add(self.seed), ..self.gof.clone() };
                let report = GofSummary { adm4: run_gof(&adm4, data, &cfg)?, npl: run_gof(npl, data, &cfg)? };
                out.put("gof/gof.json", json(&report)?)?;
                Ok(true)
            }
            "fit-jumpdiff" => {
                if !self.jumpdiff.enabled {
                    return Ok(false);
                }
                let path = st.potential.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("jump-diffusion fitting needs a potential recording (data.potential)".into())
                })?;
                let data = st.sub_data.as_ref().ok_or_else(|| missing("subnetwork data"))?;
                let trial = match self.jumpdiff.trial {
                    Some(id) => data
                        .trial_ids
                        .iter()
                        .position(|&t| t == id)
                        .ok_or_else(|| Error::InvalidData(format!("trial {id} is not in the dataset")))?,
                    None => 0,
                };
                let driver: HawkesModel = st.adm4_sub.clone().ok_or_else(|| missing("ADM4 subnetwork model"))?.into();
                let coeffs = fit_jumpdiff(path, data.trial(trial), &driver, &self.estimation)?;
                let nojump = fit_diffusion_only(path, &self.estimation)?;
                out.put("jumpdiff/coeffs.json", coeffs.to_json()?.into_bytes())?;
                out.put("jumpdiff/coeffs_nojump.json", nojump.to_json()?.into_bytes())?;
                st.coeffs = Some(coeffs);
                st.coeffs_nojump = Some(nojump);
                Ok(true)
            }
            "regenerate" => {
                let (Some(c), Some(c0)) = (&st.coeffs, &st.coeffs_nojump) else { return Ok(false) };
                let real = st.potential.as_ref().ok_or_else(|| missing("potential"))?;
                let driver = c.driver.clone().ok_or_else(|| missing("driver model"))?;
                let horizon = (real.len() - 1) as f64 * real.dt;
                let seed = self.seed.wrapping_add(self.depth.seed);
                let with = regenerate(c, &driver, horizon, real.dt, self.depth.x0, seed)?;
                let without = regenerate(c0, &driver, horizon, real.dt, self.depth.x0, seed)?;
                out.put("regenerate/with_jumps.csv", potential_csv(&with)?)?;
                out.put("regenerate/without_jumps.csv", potential_csv(&without)?)?;
                Ok(true)
            }
            "depth-validate" => {
                let (Some(c), Some(c0)) = (&st.coeffs, &st.coeffs_nojump) else { return Ok(false) };
                let real = st.potential.as_ref().ok_or_else(|| missing("potential"))?;
                let driver = c.driver.clone().ok_or_else(|| missing("driver model"))?;
                let cfg = ValidationConfig { seed: self.depth.seed.wrapping_add(self.seed), ..self.depth.clone() };
                let report = depth_validation(
                    real,
                    &Generator { coefficients: c, driver: &driver },
                    &Generator { coefficients: c0, driver: &driver },
                    &cfg,
                )?;
                out.put("depth/depth.json", json(&report)?)?;
                Ok(true)
            }
            other => Err(Error::InvalidConfig(format!("unknown stage '{other}'"))),
        }
    }
}

/// Runs every stage into `out_dir`. On failure the manifest records the
/// failed stage and the error names it.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out_dir)?;
    let config_text = toml::to_string(cfg).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(out_dir.join("config.toml"), &config_text)?;
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        stages: Vec::with_capacity(STAGES.len()),
    };
    let mut state = State::default();
    let mut failure = None;
    for name in STAGES {
        if failure.is_some() {
            break;
        }
        let mut w = Writer { root: out_dir, outputs: Vec::new() };
        let result = cfg.run_stage(name, &mut state, &mut w);
        let (status, error) = match result {
            Ok(true) => (StageStatus::Ok, None),
            Ok(false) => (StageStatus::Skipped, None),
            Err(e) => {
                let msg = e.to_string();
                failure = Some(Error::Stage { stage: name.to_string(), source: Box::new(e) });
                (StageStatus::Failed, Some(msg))
            }
        };
        log::info!("stage {name}: {status:?}");
        manifest.stages.push(StageRecord { name: name.to_string(), status, outputs: w.outputs, error });
    }
    fs::write(out_dir.join("manifest.json"), json(&manifest)?)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Config of the bundled synthetic run.
pub const SYNTHETIC_CONFIG: &str = include_str!("../../../configs/synthetic.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_network_is_stable() {
        let m = SyntheticConfig::default().network().unwrap();
        let rho = crate::model::spectral_radius(&m.adjacency()).unwrap();
        assert!(rho < 1.0);
        assert_eq!(m.a[0][1], 0.3);
    }

    #[test]
    fn bundled_config_parses() {
        let cfg = PipelineConfig::from_toml(SYNTHETIC_CONFIG).unwrap();
        assert!(cfg.synthetic.is_some());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml("sed = 1"), Err(Error::InvalidConfig(_))));
        assert!(PipelineConfig::from_toml("[adm4]\nbeta = 1").is_err());
    }

    #[test]
    fn missing_potential_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let src = tempfile::tempdir().unwrap();
        let syn = SyntheticConfig { neurons: 5, trials: 4, horizon: 20.0, ..Default::default() };
        let (spikes, _) = generate_synthetic(&syn, 3, src.path()).unwrap();
        let cfg = PipelineConfig {
            data: DataSection {
                spikes: Some(spikes),
                window: Some("0:20".into()),
                central_neuron: Some(1),
                ..Default::default()
            },
            adm4: Adm4Config { lasso_weight: Some(1.0), beta_grid: vec![20.0], ..Default::default() },
            gof: GofConfig { n_subsamples: 5, ..Default::default() },
            ..Default::default()
        };
        let err = run_pipeline(&cfg, dir.path()).unwrap_err();
        assert!(err.to_string().contains("fit-jumpdiff"), "{err}");
        assert_eq!(err.kind(), crate::ErrorKind::Config);
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.stages.last().unwrap().status, StageStatus::Failed);
        assert_eq!(manifest.stages.len(), 8);
    }
}
