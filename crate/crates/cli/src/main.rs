//! `neurohawkes` command-line front-end.
//!
//! Every subcommand reads and writes plain files. Errors are reported as a
//! JSON object on stderr and mapped to exit codes: 2 for configuration
//! errors, 3 for data errors, 4 for numerical failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use neurohawkes::adm4::{fit_adm4, log_grid, select_subnetwork, Adm4Config};
use neurohawkes::data::{load_potential, load_spike_dataset, save_potential, save_spike_dataset, SpikeDataset, Window};
use neurohawkes::depth::{depth_validation, Aggregation, DepthConfig, Generator, ValidationConfig};
use neurohawkes::gof::{run_gof, GofConfig};
use neurohawkes::jumpdiff::{
    fit_diffusion_only, fit_jumpdiff, regenerate, EstimConfig, FittedCoefficients, InitialState,
};
use neurohawkes::model::HawkesModel;
use neurohawkes::network::{matrix_distance, psth, sparsity_fraction, triggered_coefficient};
use neurohawkes::npl::{fit_npl, NplConfig};
use neurohawkes::pipeline::{run_pipeline, PipelineConfig};
use neurohawkes::sim::{simulate, SimConfig};
use neurohawkes::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(
    name = "neurohawkes",
    version,
    about = "Hawkes connectivity, goodness-of-fit and jump-diffusion analysis of spike trains"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "NEUROHAWKES_THREADS")]
    threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    Min,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate spike trains from a model file.
    SimulateHawkes {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit exponential kernels by L1-penalised likelihood.
    FitAdm4 {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        window: Window,
        /// Penalty weight; cross-validated when omitted.
        #[arg(long)]
        lasso: Option<f64>,
        /// Comma-separated decay rates; defaults to 20 log-spaced values in [1, 200].
        #[arg(long, value_delimiter = ',')]
        beta_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Fit piecewise-constant kernels by least-squares LASSO.
    FitNpl {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        window: Window,
        #[arg(long = "K", default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.025)]
        delta: f64,
        /// Penalty weight; data-driven per neuron when omitted.
        #[arg(long)]
        lasso: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Distances and sparsity of two models' adjacency matrices.
    CompareMatrices {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// Neurons whose weight on the target exceeds the threshold (1-based positions).
    SelectSubnetwork {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: usize,
        #[arg(long, default_value_t = 1e-5)]
        threshold: f64,
        /// Also write the selected neurons' spikes.
        #[arg(long, requires_all = ["window", "spikes_out"])]
        spikes: Option<PathBuf>,
        #[arg(long)]
        window: Option<Window>,
        #[arg(long)]
        spikes_out: Option<PathBuf>,
    },
    /// Mean number of target spikes around each source spike.
    Triggered {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        window: Window,
        /// Neuron id.
        #[arg(long)]
        target: i64,
        /// Neuron id.
        #[arg(long)]
        source: i64,
        #[arg(long, default_value_t = 0.002)]
        halfwidth: f64,
    },
    /// Peri-stimulus time histogram over all neurons and trials.
    Psth {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        window: Window,
        #[arg(long, default_value_t = 0.25)]
        bin: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subsampled time-rescaling goodness-of-fit test.
    Gof {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        window: Window,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        subsamples: usize,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the jump-diffusion coefficients of a potential recording.
    FitJumpdiff {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        window: Window,
        /// Driving model fitted on the same neurons.
        #[arg(long)]
        hawkes: PathBuf,
        /// Estimator settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trial id the potential belongs to (default: first trial).
        #[arg(long)]
        trial: Option<i64>,
        #[arg(long)]
        downsample: Option<usize>,
        /// Estimate g from Y instead of Z.
        #[arg(long)]
        g_uses_y: bool,
        /// Fit a plain diffusion, ignoring jumps.
        #[arg(long)]
        without_jumps: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a potential path from fitted coefficients.
    SimulateJumpdiff {
        #[arg(long)]
        coeffs: PathBuf,
        /// Driving model; defaults to the one stored with the coefficients.
        #[arg(long)]
        hawkes: Option<PathBuf>,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Fixed initial state; uniform on [-55, -35] when omitted.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank a recorded path among paths regenerated with and without jumps.
    DepthValidate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        coeffs_nojump: PathBuf,
        #[arg(long, default_value_t = 100)]
        nrep: usize,
        #[arg(long, default_value_t = 50)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        directions: usize,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, value_enum, default_value = "mean")]
        aggregation: AggregationArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full analysis described by a TOML config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    match out {
        Some(p) => fs::write(p, s)?,
        None => std::io::stdout().write_all(s.as_bytes())?,
    }
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn neuron(data: &SpikeDataset, id: i64) -> Result<usize> {
    data.neuron_index(id).ok_or_else(|| Error::InvalidData(format!("neuron {id} is not in the dataset")))
}

fn load_coeffs(path: &Path) -> Result<FittedCoefficients> {
    FittedCoefficients::from_json(&fs::read_to_string(path)?)
}

fn driver_of(c: &FittedCoefficients, explicit: Option<&Path>) -> Result<HawkesModel> {
    match explicit {
        Some(p) => HawkesModel::load(p),
        None => c
            .driver
            .clone()
            .ok_or_else(|| Error::InvalidConfig("coefficients carry no driving model; pass --hawkes".into())),
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::SimulateHawkes { model, horizon, trials, seed, out } => {
            let model = HawkesModel::load(model)?;
            let data = simulate(&model, &SimConfig::new(horizon, trials, seed))?;
            save_spike_dataset(&data, out)
        }
        Command::FitAdm4 { spikes, window, lasso, beta_grid, out, diagnostics } => {
            let data = load_spike_dataset(spikes, window)?;
            let cfg = Adm4Config {
                lasso_weight: lasso,
                beta_grid: beta_grid.unwrap_or_else(|| log_grid(1.0, 200.0, 20)),
                ..Default::default()
            };
            let (model, diag) = fit_adm4(&data, &cfg)?;
            HawkesModel::from(model).save(out)?;
            if let Some(p) = diagnostics {
                write_json(&to_value(&diag)?, Some(&p))?;
            }
            Ok(())
        }
        Command::FitNpl { spikes, window, k, delta, lasso, out, diagnostics } => {
            let data = load_spike_dataset(spikes, window)?;
            let (model, diag) = fit_npl(&data, &NplConfig::new(k, delta, lasso))?;
            HawkesModel::from(model).save(out)?;
            if let Some(p) = diagnostics {
                write_json(&to_value(&diag)?, Some(&p))?;
            }
            Ok(())
        }
        Command::CompareMatrices { first, second, eps } => {
            let a = HawkesModel::load(first)?.adjacency();
            let b = HawkesModel::load(second)?.adjacency();
            let d = matrix_distance(&a, &b)?;
            write_json(
                &json!({
                    "frobenius": d.frobenius,
                    "spectral": d.spectral,
                    "sparsity_first": sparsity_fraction(&a, eps),
                    "sparsity_second": sparsity_fraction(&b, eps),
                }),
                None,
            )
        }
        Command::SelectSubnetwork { model, target, threshold, spikes, window, spikes_out } => {
            if target == 0 {
                return Err(Error::InvalidConfig("neuron positions are 1-based".into()));
            }
            let adj = HawkesModel::load(model)?.adjacency();
            let sub = select_subnetwork(&adj, target - 1, threshold)?;
            if let (Some(s), Some(w), Some(o)) = (spikes, window, spikes_out) {
                let data = load_spike_dataset(s, w)?;
                if data.n_neurons() != adj.dim() {
                    return Err(Error::DimensionMismatch { expected: adj.dim(), found: data.n_neurons() });
                }
                save_spike_dataset(&data.select_neurons(&sub)?, o)?;
            }
            let positions: Vec<usize> = sub.iter().map(|l| l + 1).collect();
            write_json(&json!({ "target": target, "threshold": threshold, "neurons": positions }), None)
        }
        Command::Triggered { spikes, window, target, source, halfwidth } => {
            let data = load_spike_dataset(spikes, window)?;
            let c = triggered_coefficient(&data, neuron(&data, target)?, neuron(&data, source)?, halfwidth)?;
            write_json(&to_value(&c)?, None)
        }
        Command::Psth { spikes, window, bin, out } => {
            let data = load_spike_dataset(spikes, window)?;
            let h = psth(&data, bin)?;
            h.write_csv(window.t_begin, std::io::BufWriter::new(fs::File::create(out)?))
        }
        Command::Gof { spikes, window, model, alpha, subsamples, theta, seed, out } => {
            let data = load_spike_dataset(spikes, window)?;
            let model = HawkesModel::load(model)?;
            let cfg = GofConfig { alpha, theta, n_subsamples: subsamples, seed };
            let report = run_gof(&model, &data, &cfg)?;
            write_json(&to_value(&report)?, out.as_deref())
        }
        Command::FitJumpdiff {
            potential,
            spikes,
            window,
            hawkes,
            config,
            trial,
            downsample,
            g_uses_y,
            without_jumps,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => EstimConfig::load(p)?,
                None => EstimConfig::default(),
            };
            cfg.g_uses_y |= g_uses_y;
            let mut path = load_potential(potential)?.restrict(window)?;
            if let Some(f) = downsample {
                path = path.downsample(f)?;
            }
            let coeffs = if without_jumps {
                fit_diffusion_only(&path, &cfg)?
            } else {
                let data = load_spike_dataset(spikes, window)?;
                let i = match trial {
                    Some(id) => data
                        .trial_ids
                        .iter()
                        .position(|&t| t == id)
                        .ok_or_else(|| Error::InvalidData(format!("trial {id} is not in the dataset")))?,
                    None => 0,
                };
                let driver = HawkesModel::load(hawkes)?;
                if driver.dim() != data.n_neurons() {
                    return Err(Error::DimensionMismatch { expected: driver.dim(), found: data.n_neurons() });
                }
                fit_jumpdiff(&path, data.trial(i), &driver, &cfg)?
            };
            fs::write(out, coeffs.to_json()?)?;
            Ok(())
        }
        Command::SimulateJumpdiff { coeffs, hawkes, horizon, dt, x0, seed, out } => {
            let c = load_coeffs(&coeffs)?;
            let driver = driver_of(&c, hawkes.as_deref())?;
            let x0 = x0.map_or(InitialState::default(), |value| InitialState::Fixed { value });
            let path = regenerate(&c, &driver, horizon, dt, x0, seed)?;
            save_potential(&path, out)
        }
        Command::DepthValidate {
            real,
            coeffs,
            coeffs_nojump,
            nrep,
            mc,
            seed,
            directions,
            points,
            aggregation,
            out,
        } => {
            let real = load_potential(real)?;
            let with = load_coeffs(&coeffs)?;
            let without = load_coeffs(&coeffs_nojump)?;
            let driver = driver_of(&with, None)?;
            let cfg = ValidationConfig {
                n_rep: nrep,
                n_mc: mc,
                seed,
                x0: InitialState::default(),
                depth: DepthConfig {
                    points,
                    n_directions: directions,
                    aggregation: match aggregation {
                        AggregationArg::Mean => Aggregation::Mean,
                        AggregationArg::Min => Aggregation::Min,
                    },
                },
            };
            let report = depth_validation(
                &real,
                &Generator { coefficients: &with, driver: &driver },
                &Generator { coefficients: &without, driver: &driver },
                &cfg,
            )?;
            write_json(&to_value(&report)?, out.as_deref())
        }
        Command::Pipeline { config, out } => {
            let cfg = PipelineConfig::load(config)?;
            run_pipeline(&cfg, &out).map(|_| ())
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn report(kind: &str, code: u8, message: String) -> ExitCode {
    let body = json!({ "error": { "kind": kind, "code": code, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return report("config", 2, e.to_string().trim().to_string()),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return report("config", 2, "--threads must be at least 1".into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report("config", 2, e.to_string());
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let name = match kind {
                ErrorKind::Config => "config",
                ErrorKind::Data => "data",
                ErrorKind::Numeric => "numeric",
            };
            report(name, exit_code(kind), e.to_string())
        }
    }
}
