//! GAN training on 2D mixtures with periodic duality-gap monitoring.

mod metrics;

pub use metrics::{kl_divergence_2d, mode_coverage, BBox};

use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datasets::{make_splits, minibatch, sample_latent, MixtureSpec, SplitData};
use crate::error::{Error, Result};
use crate::estimate::{estimate_dg, DgConfig, DgEstimate};
use crate::games::{clip_weights, disc_grads_on, gen_grads, GameVariant};
use crate::nn::{adam_step, init_network, Activation, AdamConfig, AdamState, Direction, Network, SeededRng};

const STREAM_DATA: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_MONITOR: u64 = 4;

/// Discriminator and generator steps per alternating cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRatio {
    pub d_steps: usize,
    pub g_steps: usize,
}

impl UpdateRatio {
    pub fn new(d_steps: usize, g_steps: usize) -> Self {
        Self { d_steps, g_steps }
    }
}

impl std::fmt::Display for UpdateRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.d_steps, self.g_steps)
    }
}

impl FromStr for UpdateRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("update ratio must look like D:G, got {s:?}"));
        let (d, g) = s.split_once(':').ok_or_else(bad)?;
        Ok(Self::new(
            d.trim().parse().map_err(|_| bad())?,
            g.trim().parse().map_err(|_| bad())?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Convergence,
    Collapse,
    Divergence,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Convergence, Scenario::Collapse, Scenario::Divergence];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Convergence => "convergence",
            Scenario::Collapse => "collapse",
            Scenario::Divergence => "divergence",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convergence" => Ok(Scenario::Convergence),
            "collapse" => Ok(Scenario::Collapse),
            "divergence" => Ok(Scenario::Divergence),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?}; valid scenarios: convergence, collapse, divergence"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub variant: GameVariant,
    pub dataset: MixtureSpec,
    pub g_lr: f64,
    pub d_lr: f64,
    pub update_ratio: UpdateRatio,
    /// Number of alternating cycles.
    pub total_iterations: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// Hidden widths shared by generator and discriminator.
    pub hidden: Vec<usize>,
    /// Monitor every this many cycles; 0 disables periodic monitoring.
    pub dg_interval: usize,
    /// Also monitor after the last cycle.
    pub dg_at_end: bool,
    /// Monitors compute the vanilla estimate alongside the perturbed one.
    #[serde(default = "default_true")]
    pub monitor_vanilla: bool,
    pub dg_cfg: DgConfig,
    /// Train, validation and test sizes.
    pub split_sizes: [usize; 3],
    /// Generated samples used for KL and mode coverage.
    pub eval_samples: usize,
    pub kl_bins: usize,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    /// Paper-scale presets for the classic and non-saturating games.
    pub fn preset(scenario: Scenario, variant: GameVariant, dataset: MixtureSpec) -> Result<Self> {
        let (lr, ratio) = match (variant, scenario) {
            (GameVariant::Classic, Scenario::Convergence) => (5e-4, UpdateRatio::new(1, 1)),
            (GameVariant::Classic, Scenario::Collapse) => (5e-4, UpdateRatio::new(15, 1)),
            (GameVariant::Classic, Scenario::Divergence) => (5e-4, UpdateRatio::new(1, 15)),
            (GameVariant::NonSaturating, Scenario::Convergence) => (1e-3, UpdateRatio::new(3, 2)),
            (GameVariant::NonSaturating, Scenario::Collapse) => (1e-4, UpdateRatio::new(5, 7)),
            (GameVariant::NonSaturating, Scenario::Divergence) => (1e-3, UpdateRatio::new(1, 10)),
            (GameVariant::WassersteinClipped { .. }, _) => {
                return Err(Error::Unsupported(
                    "scenario presets exist for the classic and ns games only".into(),
                ))
            }
        };
        Ok(Self {
            variant,
            dataset,
            g_lr: lr,
            d_lr: lr,
            update_ratio: ratio,
            dg_cfg: DgConfig {
                aux_lr: lr,
                ..DgConfig::default()
            },
            ..Self::base(variant, dataset)
        })
    }

    /// 1:1 schedule at 5e-4 with the default architecture and monitoring.
    pub fn base(variant: GameVariant, dataset: MixtureSpec) -> Self {
        Self {
            variant,
            dataset,
            g_lr: 5e-4,
            d_lr: 5e-4,
            update_ratio: UpdateRatio::new(1, 1),
            total_iterations: 20_000,
            batch_size: 256,
            latent_dim: 100,
            hidden: vec![128, 128],
            dg_interval: 500,
            dg_at_end: true,
            monitor_vanilla: true,
            dg_cfg: DgConfig::default(),
            split_sizes: [8192, 8192, 8192],
            eval_samples: 8192,
            kl_bins: 50,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        self.dataset.validate()?;
        self.dg_cfg.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.g_lr > 0.0 && self.d_lr > 0.0) {
            return bad(format!("learning rates must be positive, got {} / {}", self.g_lr, self.d_lr));
        }
        if self.update_ratio.d_steps == 0 && self.update_ratio.g_steps == 0 {
            return bad("update ratio 0:0 performs no updates".into());
        }
        if self.total_iterations == 0 {
            return bad("total_iterations must be >= 1".into());
        }
        if self.batch_size == 0 || self.latent_dim == 0 || self.eval_samples == 0 {
            return bad("batch_size, latent_dim and eval_samples must be >= 1".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be >= 1".into());
        }
        if self.split_sizes.iter().any(|&n| n == 0) {
            return bad("split sizes must be >= 1".into());
        }
        if self.kl_bins < 2 {
            return bad("kl_bins must be >= 2".into());
        }
        Ok(())
    }
}

/// Generator, discriminator, and their optimizer states.
#[derive(Debug, Clone)]
pub struct GameState {
    pub gen: Network,
    pub disc: Network,
    pub variant: GameVariant,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
}

impl GameState {
    pub fn init(cfg: &ScenarioConfig, rng: &mut SeededRng) -> Result<Self> {
        let gen = init_network(
            &Network::mlp_specs(cfg.latent_dim, &cfg.hidden, 2, Activation::Relu, Activation::Identity),
            rng,
        )?;
        let mut disc = init_network(
            &Network::mlp_specs(2, &cfg.hidden, 1, Activation::Relu, cfg.variant.disc_head()),
            rng,
        )?;
        if let GameVariant::WassersteinClipped { clip_c } = cfg.variant {
            clip_weights(&mut disc, clip_c);
        }
        Ok(Self {
            gen_opt: AdamState::for_network(&gen, AdamConfig::with_lr(cfg.g_lr)),
            disc_opt: AdamState::for_network(&disc, AdamConfig::with_lr(cfg.d_lr)),
            gen,
            disc,
            variant: cfg.variant,
        })
    }
}

/// One monitoring point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub iteration: usize,
    pub vanilla: Option<DgEstimate>,
    pub perturbed: Option<DgEstimate>,
    pub kl: Option<f64>,
    pub modes_covered: Option<usize>,
    pub modes_total: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub g_loss: Option<f64>,
    pub d_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: ScenarioConfig,
    pub iterations: Vec<IterationRecord>,
    pub monitors: Vec<MonitorRecord>,
    /// Wall-clock seconds for each block of 100 cycles, monitoring included.
    pub seconds_per_100: Vec<f64>,
    /// First cycle at which a step produced non-finite values.
    pub diverged_at: Option<usize>,
}

impl RunLog {
    pub fn terminal(&self) -> Option<&MonitorRecord> {
        self.monitors.last()
    }

    pub fn terminal_perturbed_dg(&self) -> Option<f64> {
        self.terminal()?.perturbed.map(|e| e.dg)
    }

    pub fn terminal_vanilla_dg(&self) -> Option<f64> {
        self.terminal()?.vanilla.map(|e| e.dg)
    }

    pub fn terminal_kl(&self) -> Option<f64> {
        self.terminal()?.kl
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// A GAN under training with its data and random streams. Drives both the
/// fixed-ratio loop and controller-scheduled training.
pub struct GanSession {
    pub cfg: ScenarioConfig,
    pub state: GameState,
    pub data: SplitData,
    bbox: BBox,
    train_rng: SeededRng,
    last_g_loss: Option<f64>,
    last_d_loss: Option<f64>,
    diverged_at: Option<usize>,
}

impl GanSession {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let [n_train, n_val, n_test] = cfg.split_sizes;
        let data = make_splits(
            &cfg.dataset,
            n_train,
            n_val,
            n_test,
            &mut SeededRng::derived(cfg.seed, &[STREAM_DATA]),
        )?;
        let state = GameState::init(&cfg, &mut SeededRng::derived(cfg.seed, &[STREAM_INIT]))?;
        let bbox = BBox::around(data.test.view(), 0.1)?;
        Ok(Self {
            train_rng: SeededRng::derived(cfg.seed, &[STREAM_TRAIN]),
            cfg,
            state,
            data,
            bbox,
            last_g_loss: None,
            last_d_loss: None,
            diverged_at: None,
        })
    }

    pub fn last_losses(&self) -> (Option<f64>, Option<f64>) {
        (self.last_g_loss, self.last_d_loss)
    }

    pub fn diverged_at(&self) -> Option<usize> {
        self.diverged_at
    }

    fn note_failure(&mut self, iteration: usize, err: Error) -> Result<()> {
        match err {
            Error::NonFinite(_) => {
                self.diverged_at.get_or_insert(iteration);
                Ok(())
            }
            other => Err(other),
        }
    }

    /// One discriminator ascent step. Non-finite values skip the step and
    /// mark the run diverged.
    pub fn disc_step(&mut self, iteration: usize) -> Result<()> {
        let b = self.cfg.batch_size;
        let real = minibatch(self.data.train.view(), b, &mut self.train_rng);
        let z = sample_latent(self.cfg.latent_dim, b, &mut self.train_rng);
        let st = &mut self.state;
        let res = st.gen.predict(z.view()).and_then(|fake| {
            let (g, obj) = disc_grads_on(st.variant, &st.disc, real.view(), fake.view())?;
            adam_step(&mut st.disc, &g, &mut st.disc_opt, Direction::Ascend)?;
            if let GameVariant::WassersteinClipped { clip_c } = st.variant {
                clip_weights(&mut st.disc, clip_c);
            }
            Ok(obj)
        });
        match res {
            Ok(obj) => {
                self.last_d_loss = Some(-obj);
                Ok(())
            }
            Err(e) => self.note_failure(iteration, e),
        }
    }

    /// One generator descent step.
    pub fn gen_step(&mut self, iteration: usize) -> Result<()> {
        let z = sample_latent(self.cfg.latent_dim, self.cfg.batch_size, &mut self.train_rng);
        let st = &mut self.state;
        let res = gen_grads(st.variant, &st.gen, &st.disc, z.view()).and_then(|(g, loss)| {
            adam_step(&mut st.gen, &g, &mut st.gen_opt, Direction::Descend)?;
            Ok(loss)
        });
        match res {
            Ok(loss) => {
                self.last_g_loss = Some(loss);
                Ok(())
            }
            Err(e) => self.note_failure(iteration, e),
        }
    }

    /// `n` generated samples from a dedicated stream.
    pub fn generate(&self, n: usize, rng: &mut SeededRng) -> Result<Array2<f64>> {
        let z = sample_latent(self.cfg.latent_dim, n, rng);
        self.state.gen.predict(z.view())
    }

    /// Histogram KL between the test split and fresh generated samples.
    pub fn kl(&self, rng: &mut SeededRng) -> Result<f64> {
        let fake = self.generate(self.cfg.eval_samples, rng)?;
        kl_divergence_2d(self.data.test.view(), fake.view(), self.cfg.kl_bins, &self.bbox)
    }

    /// Vanilla and perturbed DG on the current snapshot, plus KL and mode
    /// coverage. Uses a random stream keyed by `iteration` only, so
    /// monitoring never shifts the training trajectory.
    pub fn monitor(&self, iteration: usize) -> Result<MonitorRecord> {
        let mut rng = SeededRng::derived(self.cfg.seed, &[STREAM_MONITOR, iteration as u64]);
        let mut sample_rng = rng.fork();
        let mut dg_rng = rng.fork();
        let fake = self.generate(self.cfg.eval_samples, &mut sample_rng);
        let (kl, coverage) = match &fake {
            Ok(f) => (
                Some(kl_divergence_2d(self.data.test.view(), f.view(), self.cfg.kl_bins, &self.bbox)?),
                mode_coverage(&self.cfg.dataset, f.view()).ok(),
            ),
            Err(_) => (None, None),
        };
        let (vanilla, perturbed) = if self.state.disc.output_activation() == Activation::Sigmoid {
            let st = &self.state;
            let dg = |cfg: &DgConfig, rng: &mut SeededRng| {
                match estimate_dg(&st.gen, &st.disc, &self.data, self.cfg.latent_dim, cfg, rng) {
                    Ok(e) => Ok(Some(e)),
                    Err(Error::AuxDiverged { .. }) | Err(Error::NonFinite(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            };
            let mut v_rng = dg_rng.fork();
            let mut p_rng = dg_rng.fork();
            let vanilla = match self.cfg.monitor_vanilla {
                true => dg(&self.cfg.dg_cfg.vanilla(), &mut v_rng)?,
                false => None,
            };
            (vanilla, dg(&self.cfg.dg_cfg, &mut p_rng)?)
        } else {
            (None, None)
        };
        Ok(MonitorRecord {
            iteration,
            vanilla,
            perturbed,
            kl,
            modes_covered: coverage.map(|c| c.0),
            modes_total: coverage.map(|c| c.1),
        })
    }

    pub fn into_state(self) -> GameState {
        self.state
    }
}

/// Fixed-ratio training run.
pub struct TrainedRun {
    pub log: RunLog,
    pub state: GameState,
    pub data: SplitData,
}

pub fn train(cfg: &ScenarioConfig) -> Result<TrainedRun> {
    let mut session = GanSession::new(cfg.clone())?;
    let mut iterations = Vec::with_capacity(cfg.total_iterations);
    let mut monitors = Vec::new();
    let mut seconds_per_100 = Vec::new();
    let mut block = Instant::now();
    for it in 1..=cfg.total_iterations {
        for _ in 0..cfg.update_ratio.d_steps {
            session.disc_step(it)?;
        }
        for _ in 0..cfg.update_ratio.g_steps {
            session.gen_step(it)?;
        }
        let (g_loss, d_loss) = session.last_losses();
        iterations.push(IterationRecord {
            iteration: it,
            g_loss,
            d_loss,
        });
        let periodic = cfg.dg_interval > 0 && it % cfg.dg_interval == 0;
        if periodic || (cfg.dg_at_end && it == cfg.total_iterations) {
            monitors.push(session.monitor(it)?);
        }
        if it % 100 == 0 {
            seconds_per_100.push(block.elapsed().as_secs_f64());
            block = Instant::now();
        }
    }
    let diverged_at = session.diverged_at();
    let data = session.data.clone();
    Ok(TrainedRun {
        log: RunLog {
            config: cfg.clone(),
            iterations,
            monitors,
            seconds_per_100,
            diverged_at,
        },
        state: session.into_state(),
        data,
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog> {
    train(cfg).map(|r| r.log)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(variant: GameVariant) -> ScenarioConfig {
        ScenarioConfig {
            total_iterations: 20,
            batch_size: 16,
            latent_dim: 4,
            hidden: vec![8],
            dg_interval: 10,
            dg_cfg: DgConfig {
                aux_iterations: 5,
                batch_size: 16,
                eval_batches: 2,
                ..DgConfig::default()
            },
            split_sizes: [64, 64, 64],
            eval_samples: 64,
            kl_bins: 10,
            ..ScenarioConfig::base(variant, MixtureSpec::ring())
        }
    }

    #[test]
    fn presets_follow_published_ratios() {
        let ring = MixtureSpec::ring();
        let c = ScenarioConfig::preset(Scenario::Collapse, GameVariant::Classic, ring).unwrap();
        assert_eq!(c.update_ratio, UpdateRatio::new(15, 1));
        assert_eq!((c.g_lr, c.d_lr), (5e-4, 5e-4));
        let d = ScenarioConfig::preset(Scenario::Divergence, GameVariant::NonSaturating, ring).unwrap();
        assert_eq!(d.update_ratio, UpdateRatio::new(1, 10));
        assert_eq!(d.g_lr, 1e-3);
    }

    #[test]
    fn zero_iterations_rejected_one_is_one_cycle() {
        let mut cfg = tiny(GameVariant::Classic);
        cfg.total_iterations = 0;
        assert!(run_scenario(&cfg).is_err());
        cfg.total_iterations = 1;
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.iterations.len(), 1);
        assert_eq!(log.monitors.len(), 1);
    }

    #[test]
    fn monitors_at_interval_and_end() {
        let mut cfg = tiny(GameVariant::Classic);
        cfg.total_iterations = 25;
        let log = run_scenario(&cfg).unwrap();
        let its: Vec<usize> = log.monitors.iter().map(|m| m.iteration).collect();
        assert_eq!(its, vec![10, 20, 25]);
        assert!(log.monitors.iter().all(|m| m.vanilla.is_some() && m.perturbed.is_some()));
    }

    #[test]
    fn wasserstein_run_skips_classic_dg() {
        let log = run_scenario(&tiny(GameVariant::WassersteinClipped { clip_c: 0.01 })).unwrap();
        assert!(log.monitors.iter().all(|m| m.perturbed.is_none() && m.kl.is_some()));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("5:7".parse::<UpdateRatio>().unwrap(), UpdateRatio::new(5, 7));
        assert!("57".parse::<UpdateRatio>().is_err());
        assert!("bogus".parse::<Scenario>().unwrap_err().to_string().contains("convergence"));
    }
}
