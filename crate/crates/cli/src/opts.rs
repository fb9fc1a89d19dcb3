//! Command-line flags. Every subcommand's flags can also come from a JSON
//! object given with `--config`; keys are the flag names with `_` in place
//! of `-`, and flags given on the command line win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use dualgap::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "dualgap", version, about = "Duality-gap diagnostics for GAN training")]
pub struct Cli {
    /// JSON file with default values for the subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel suites (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic toy game.
    #[command(subcommand)]
    Toygame(ToyCommand),
    /// Train a GAN scenario with DG monitoring.
    Train(TrainArgs),
    /// Estimate the duality gap of saved networks.
    Dg(DgArgs),
    /// Learning-rate or capacity grid scored by terminal perturbed DG.
    GridSearch(GridArgs),
    /// Ablation studies.
    #[command(subcommand)]
    Ablate(AblateCommand),
    /// Learned update scheduling.
    #[command(subcommand)]
    Controller(ControllerCommand),
    /// Sample a 2D mixture.
    Datasets(DatasetArgs),
}

#[derive(Debug, Subcommand)]
pub enum ToyCommand {
    /// Gradient, Hessian, classification and DG statistics at a point.
    Analyze(ToyArgs),
    /// Auxiliary optimization paths (vanilla and perturbed) from a point.
    Sweep(ToyArgs),
}

#[derive(Debug, Subcommand)]
pub enum AblateCommand {
    /// DG versus perturbation radius on a trained run.
    Sigma(AblateSigmaArgs),
    /// DG versus auxiliary iterations on a trained run.
    Iters(AblateItersArgs),
    /// Training cost versus DG monitoring interval.
    Interval(AblateIntervalArgs),
}

#[derive(Debug, Subcommand)]
pub enum ControllerCommand {
    /// Train a scheduling policy with REINFORCE.
    Train(ControllerTrainArgs),
    /// Run a frozen policy (or a fixed ratio) on a task.
    Run(ControllerRunArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; falls back to DUALGAP_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ToyArgs {
    /// Point as `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Number of perturbed estimates.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ScenarioArgs {
    /// convergence, collapse or divergence.
    #[arg(long)]
    pub scenario: Option<String>,
    /// classic, ns or wasserstein.
    #[arg(long)]
    pub gan: Option<String>,
    /// ring, grid or spiral.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Alternating cycles.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub g_lr: Option<f64>,
    #[arg(long)]
    pub d_lr: Option<f64>,
    /// Update ratio as D:G.
    #[arg(long)]
    pub ratio: Option<String>,
    /// Monitor every this many cycles (0 = only at the end).
    #[arg(long)]
    pub dg_interval: Option<usize>,
    #[arg(long)]
    pub aux_iters: Option<usize>,
    #[arg(long)]
    pub aux_lr: Option<f64>,
    /// Global perturbation radius; omitted means twice each layer's weight std.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub eval_batches: Option<usize>,
    /// Train, validation and test sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub splits: Option<Vec<usize>>,
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long)]
    pub clip_c: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DgArgs {
    /// Generator snapshot (JSON).
    #[arg(long)]
    pub gen: Option<PathBuf>,
    /// Discriminator snapshot (JSON).
    #[arg(long)]
    pub disc: Option<PathBuf>,
    /// Seed that generated the run's data splits.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Axis as `name=v1,v2,...`; names: g_lr, d_lr, hidden.
    #[arg(long = "axis")]
    pub axes: Option<Vec<String>>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AblateSigmaArgs {
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AblateItersArgs {
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AblateIntervalArgs {
    /// Intervals, comma separated; `never` trains without DG.
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<String>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EpisodeArgs {
    /// Iterations per episode.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dg_every: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub collapse_window: Option<usize>,
    #[arg(long)]
    pub policy_lr: Option<f64>,
    /// Task learning rate for both agents.
    #[arg(long)]
    pub task_lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ControllerTrainArgs {
    /// Task dataset: ring, grid or spiral.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub episode: EpisodeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ControllerRunArgs {
    /// Policy network JSON written by `controller train`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Fixed D:G schedule instead of a policy.
    #[arg(long)]
    pub fixed: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// Block sizes for the action-frequency tables, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub resolution: Option<Vec<usize>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub episode: EpisodeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DatasetArgs {
    #[arg(long)]
    pub dataset: Option<String>,
    /// Number of samples.
    #[arg(short = 'n', long)]
    pub samples: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub io: OutArgs,
}

/// Overlays the non-null fields of `flags` on the JSON object `file` and
/// reads the result back. Keys in `file` that name no flag are an error.
pub fn merge<T: Serialize + DeserializeOwned + Default>(flags: &T, file: Option<&Value>) -> Result<T> {
    let Some(file) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let Value::Object(file) = file else {
        return Err(Error::Config("config file must hold a JSON object".into()));
    };
    let known = match serde_json::to_value(T::default())? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    let mut merged = Map::new();
    for (k, v) in file {
        if k == "threads" {
            continue;
        }
        if !known.contains_key(k) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        merged.insert(k.clone(), v.clone());
    }
    if let Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(format!("config: {e}")))
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let flags = TrainArgs {
            scenario: ScenarioArgs {
                iterations: Some(5),
                ..Default::default()
            },
            ..Default::default()
        };
        let file = serde_json::json!({"iterations": 100, "batch_size": 32, "seed": 4});
        let m = merge(&flags, Some(&file)).unwrap();
        assert_eq!(m.scenario.iterations, Some(5));
        assert_eq!(m.scenario.batch_size, Some(32));
        assert_eq!(m.io.seed, Some(4));
    }

    #[test]
    fn unknown_key_rejected() {
        let file = serde_json::json!({"iteratons": 100});
        assert!(merge(&TrainArgs::default(), Some(&file)).is_err());
        assert!(merge(&TrainArgs::default(), Some(&serde_json::json!([1]))).is_err());
    }
}
