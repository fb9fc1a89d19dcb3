//! Learned update scheduling.
//!
//! A small policy network looks at gradient and loss statistics of a GAN under
//! training and decides, every iteration, whether the generator or the
//! discriminator takes the next step. It is trained with plain REINFORCE on a
//! terminal reward `alpha / (signal + epsilon)`, where the signal is an
//! exponential moving average of the perturbed duality gap (classic and ns
//! tasks) or of the histogram KL (clipped-Wasserstein tasks, whose critic has
//! no sigmoid head for the classic objective).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datasets::{minibatch, sample_latent};
use crate::error::{Error, Result};
use crate::estimate::{estimate_dg, DgConfig};
use crate::games::{agent_grads, BatchPair, GameVariant};
use crate::nn::{
    adam_step, grad_l2_norm, init_network, Activation, AdamConfig, AdamState, Direction, Network, SeededRng,
    SigmaRule,
};
use crate::report::CsvTable;
use crate::trainer::{GanSession, IterationRecord, MonitorRecord, RunLog, ScenarioConfig, UpdateRatio};

/// Policy probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-7;
const RATIO_CLAMP: (f64, f64) = (1e-8, 1e8);
const LOSS_CLAMP: f64 = 1e6;
/// Signal recorded when the DG estimate itself fails on a diverged task.
const FAILED_SIGNAL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    UpdateG,
    UpdateD,
}

impl Action {
    fn index(self) -> usize {
        match self {
            Action::UpdateG => 0,
            Action::UpdateD => 1,
        }
    }
}

/// `[log grad-norm ratio G/D, EMA g_loss, EMA d_loss, EMA signal]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub values: [f64; 4],
    /// Set when a loss or norm had to be clamped to stay finite.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaStore {
    pub decay: f64,
    pub g_loss: Option<f64>,
    pub d_loss: Option<f64>,
    pub signal: Option<f64>,
}

impl EmaStore {
    pub fn new(decay: f64) -> Self {
        Self {
            decay,
            g_loss: None,
            d_loss: None,
            signal: None,
        }
    }

    /// The first observation initializes the average.
    pub fn fold(decay: f64, slot: &mut Option<f64>, x: f64) -> f64 {
        let v = match *slot {
            None => x,
            Some(prev) => decay * prev + (1.0 - decay) * x,
        };
        *slot = Some(v);
        v
    }

    pub fn observe_signal(&mut self, x: f64) -> f64 {
        Self::fold(self.decay, &mut self.signal, x)
    }
}

fn clamp_finite(v: f64, flag: &mut bool) -> f64 {
    if v.is_nan() {
        *flag = true;
        0.0
    } else if v.abs() > LOSS_CLAMP {
        *flag = true;
        v.clamp(-LOSS_CLAMP, LOSS_CLAMP)
    } else {
        v
    }
}

/// Fresh gradient norms and losses at `batch`; folds the losses into `ema`.
pub fn encode_state(
    gen: &Network,
    disc: &Network,
    variant: GameVariant,
    batch: &BatchPair,
    ema: &mut EmaStore,
) -> Result<ControllerState> {
    let mut clamped = false;
    let (ratio, g_loss, d_loss) = match agent_grads(variant, gen, disc, batch) {
        Ok(g) => {
            let (ng, nd) = (grad_l2_norm(&g.gen), grad_l2_norm(&g.disc));
            let raw = ng / nd;
            let ratio = if raw.is_finite() { raw } else { 1.0 };
            (ratio, g.gen_loss, g.disc_loss)
        }
        Err(Error::NonFinite(_)) => {
            clamped = true;
            (1.0, f64::NAN, f64::NAN)
        }
        Err(e) => return Err(e),
    };
    let r = ratio.clamp(RATIO_CLAMP.0, RATIO_CLAMP.1);
    clamped |= r != ratio;
    let g_loss = clamp_finite(g_loss, &mut clamped);
    let d_loss = clamp_finite(d_loss, &mut clamped);
    let s2 = EmaStore::fold(ema.decay, &mut ema.g_loss, g_loss);
    let s3 = EmaStore::fold(ema.decay, &mut ema.d_loss, d_loss);
    Ok(ControllerState {
        values: [r.ln(), s2, s3, ema.signal.unwrap_or(0.0)],
        clamped,
    })
}

/// `[4 → 128 tanh → 64 tanh → 2 softmax]` with its Adam state. Output 0 is
/// the probability of updating the generator.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub net: Network,
    pub opt: AdamState,
}

impl PolicyNet {
    pub fn new(lr: f64, rng: &mut SeededRng) -> Result<Self> {
        let specs = Network::mlp_specs(4, &[128, 64], 2, Activation::Tanh, Activation::Softmax);
        Self::from_network(init_network(&specs, rng)?, lr)
    }

    pub fn from_network(net: Network, lr: f64) -> Result<Self> {
        if net.input_dim() != 4 || net.output_dim() != 2 || net.output_activation() != Activation::Softmax {
            return Err(Error::Shape("policy must map 4 inputs to a 2-way softmax".into()));
        }
        Ok(Self {
            opt: AdamState::for_network(&net, AdamConfig::with_lr(lr)),
            net,
        })
    }

    /// Clipped `[p(UpdateG), p(UpdateD)]`.
    pub fn probs(&self, s: &ControllerState) -> Result<[f64; 2]> {
        let x = Array2::from_shape_vec((1, 4), s.values.to_vec()).expect("4 features");
        let y = self.net.predict(x.view())?;
        Ok([clip(y[[0, 0]]), clip(y[[0, 1]])])
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Categorical draw from the policy; returns the action and its log
/// probability.
pub fn sample_action(policy: &PolicyNet, s: &ControllerState, rng: &mut SeededRng) -> Result<(Action, f64)> {
    let p = policy.probs(s)?;
    Ok(pick(p, rng))
}

fn pick(p: [f64; 2], rng: &mut SeededRng) -> (Action, f64) {
    if rng.unit() < p[0] {
        (Action::UpdateG, p[0].ln())
    } else {
        (Action::UpdateD, p[1].ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: ControllerState,
    pub action: Action,
    pub log_prob: f64,
}

/// Gradient of `reward · Σ_t log π(a_t | s_t)` w.r.t. the policy parameters.
pub fn surrogate_grad(policy: &PolicyNet, trajectory: &[Step], reward: f64) -> Result<crate::nn::ParamGrads> {
    let flat: Vec<f64> = trajectory.iter().flat_map(|s| s.state.values).collect();
    let x = Array2::from_shape_vec((trajectory.len(), 4), flat).expect("4 features per step");
    let (y, cache) = policy.net.forward(x.view())?;
    // d log softmax_a / d logits = onehot(a) - y
    let mut g = -&y;
    for (t, s) in trajectory.iter().enumerate() {
        g[[t, s.action.index()]] += 1.0;
    }
    g *= reward;
    Ok(policy.net.backward_from_logits(&cache, &g)?.0)
}

/// One Adam ascent step on the REINFORCE surrogate. A zero reward leaves the
/// policy and optimizer untouched.
pub fn reinforce_update(policy: &mut PolicyNet, trajectory: &[Step], reward: f64) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::Config("trajectory must be nonempty".into()));
    }
    if !reward.is_finite() {
        return Err(Error::NonFinite(format!("reward {reward}")));
    }
    if reward == 0.0 {
        return Ok(());
    }
    let grads = surrogate_grad(policy, trajectory, reward)?;
    adam_step(&mut policy.net, &grads, &mut policy.opt, Direction::Ascend)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Iterations per episode; each iteration updates exactly one agent.
    pub k: usize,
    pub dg_every: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub collapse_window: usize,
    pub collapse_penalty: f64,
    pub ema_decay: f64,
    pub reward_cap: f64,
    pub dg_cfg: DgConfig,
    pub policy_lr: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            k: 6000,
            dg_every: 200,
            alpha: 5.0,
            epsilon: 1e-5,
            collapse_window: 500,
            collapse_penalty: -1.0,
            ema_decay: 0.9,
            reward_cap: 1e6,
            dg_cfg: DgConfig {
                aux_iterations: 200,
                sigma_rule: SigmaRule::global(0.25),
                ..DgConfig::default()
            },
            policy_lr: 1e-3,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dg_every >= 1 && self.k >= self.dg_every) {
            return Err(Error::Config(format!("need k >= dg_every >= 1, got {} / {}", self.k, self.dg_every)));
        }
        if !(self.alpha > 0.0 && self.epsilon > 0.0) {
            return Err(Error::Config("alpha and epsilon must be positive".into()));
        }
        if !(self.ema_decay >= 0.0 && self.ema_decay < 1.0) {
            return Err(Error::Config(format!("ema_decay must lie in [0,1), got {}", self.ema_decay)));
        }
        if self.collapse_window == 0 {
            return Err(Error::Config("collapse_window must be >= 1".into()));
        }
        self.dg_cfg.validate()
    }

    /// `alpha / (max(signal, 0) + epsilon)`, capped.
    pub fn reward(&self, ema_signal: f64) -> f64 {
        (self.alpha / (ema_signal.max(0.0) + self.epsilon)).min(self.reward_cap)
    }
}

/// Which quantity feeds the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    PerturbedDg,
    Kl,
}

impl Signal {
    pub fn for_variant(v: GameVariant) -> Self {
        match v {
            GameVariant::WassersteinClipped { .. } => Signal::Kl,
            _ => Signal::PerturbedDg,
        }
    }
}

/// Who picks the next update.
#[derive(Debug, Clone, Copy)]
pub enum Schedule<'a> {
    Policy(&'a PolicyNet),
    /// `d_steps` discriminator updates then `g_steps` generator updates, repeated.
    Fixed(UpdateRatio),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub trajectory: Vec<Step>,
    pub actions: Vec<Action>,
    pub reward: f64,
    pub signal: Signal,
    pub terminal_signal: Option<f64>,
    /// Iteration at which the collapse rule ended the episode.
    pub collapsed_at: Option<usize>,
    pub log: RunLog,
}

impl Episode {
    /// First monitored iteration with KL below `threshold`.
    pub fn first_kl_below(&self, threshold: f64) -> Option<usize> {
        self.log
            .monitors
            .iter()
            .find(|m| m.kl.is_some_and(|k| k < threshold))
            .map(|m| m.iteration)
    }

    pub fn final_kl(&self) -> Option<f64> {
        self.log.terminal_kl()
    }

    /// Per-block action frequencies: `interval,resolution,freq_G,freq_D`.
    pub fn action_frequencies(&self, resolution: usize) -> Result<CsvTable> {
        if resolution == 0 {
            return Err(Error::Config("resolution must be >= 1".into()));
        }
        let mut t = CsvTable::new(&["interval", "resolution", "freq_G", "freq_D"]);
        for (i, block) in self.actions.chunks(resolution).enumerate() {
            let g = block.iter().filter(|a| **a == Action::UpdateG).count() as f64 / block.len() as f64;
            t.rows.push(vec![i.into(), resolution.into(), g.into(), (1.0 - g).into()]);
        }
        Ok(t)
    }
}

const STREAM_STATE: u64 = 11;
const STREAM_ACTION: u64 = 12;
const STREAM_SIGNAL: u64 = 13;

/// One task-GAN training run of `ecfg.k` iterations under `schedule`.
/// The signal is measured every `dg_every` iterations and averaged; the
/// reward uses the average at termination. With a policy schedule, `k`
/// consecutive identical actions (`collapse_window`) end the episode with
/// the collapse penalty.
pub fn run_episode(schedule: Schedule<'_>, task: &ScenarioConfig, ecfg: &EpisodeConfig, seed: u64) -> Result<Episode> {
    ecfg.validate()?;
    let mut session = GanSession::new(task.clone())?;
    let signal = Signal::for_variant(task.variant);
    let mut state_rng = SeededRng::derived(seed, &[STREAM_STATE]);
    let mut action_rng = SeededRng::derived(seed, &[STREAM_ACTION]);
    let mut ema = EmaStore::new(ecfg.ema_decay);
    let mut trajectory = Vec::new();
    let mut actions: Vec<Action> = Vec::with_capacity(ecfg.k);
    let mut iterations = Vec::with_capacity(ecfg.k);
    let mut monitors = Vec::new();
    let mut collapsed_at = None;
    let mut run = 0usize;
    let started = std::time::Instant::now();

    for it in 1..=ecfg.k {
        let action = match schedule {
            Schedule::Policy(policy) => {
                let b = task.batch_size;
                let batch = BatchPair {
                    real: minibatch(session.data.train.view(), b, &mut state_rng),
                    latent: sample_latent(task.latent_dim, b, &mut state_rng),
                };
                let st = &session.state;
                let s = encode_state(&st.gen, &st.disc, st.variant, &batch, &mut ema)?;
                let (a, log_prob) = sample_action(policy, &s, &mut action_rng)?;
                trajectory.push(Step { state: s, action: a, log_prob });
                a
            }
            Schedule::Fixed(r) => {
                let period = r.d_steps + r.g_steps;
                if (it - 1) % period < r.d_steps {
                    Action::UpdateD
                } else {
                    Action::UpdateG
                }
            }
        };
        match action {
            Action::UpdateD => session.disc_step(it)?,
            Action::UpdateG => session.gen_step(it)?,
        }
        run = if actions.last() == Some(&action) { run + 1 } else { 1 };
        actions.push(action);
        let (g_loss, d_loss) = session.last_losses();
        iterations.push(IterationRecord {
            iteration: it,
            g_loss,
            d_loss,
        });
        if it % ecfg.dg_every == 0 {
            let (mon, value) = measure(&session, signal, ecfg, it, seed)?;
            ema.observe_signal(value);
            monitors.push(mon);
        }
        if matches!(schedule, Schedule::Policy(_)) && run >= ecfg.collapse_window {
            collapsed_at = Some(it);
            break;
        }
    }

    let terminal_signal = ema.signal;
    let reward = if collapsed_at.is_some() {
        ecfg.collapse_penalty
    } else {
        ecfg.reward(terminal_signal.unwrap_or(0.0))
    };
    let secs = started.elapsed().as_secs_f64();
    let mut cfg = task.clone();
    cfg.total_iterations = ecfg.k;
    cfg.update_ratio = match schedule {
        Schedule::Fixed(r) => r,
        Schedule::Policy(_) => UpdateRatio::new(0, 0),
    };
    cfg.dg_interval = ecfg.dg_every;
    cfg.dg_at_end = false;
    let n = iterations.len();
    Ok(Episode {
        trajectory,
        actions,
        reward,
        signal,
        terminal_signal,
        collapsed_at,
        log: RunLog {
            config: cfg,
            iterations,
            monitors,
            seconds_per_100: vec![secs * 100.0 / n as f64],
            diverged_at: session.diverged_at(),
        },
    })
}

fn measure(
    session: &GanSession,
    signal: Signal,
    ecfg: &EpisodeConfig,
    it: usize,
    seed: u64,
) -> Result<(MonitorRecord, f64)> {
    let mut rng = SeededRng::derived(seed, &[STREAM_SIGNAL, it as u64]);
    let mut kl_rng = rng.fork();
    let kl = session.kl(&mut kl_rng).ok();
    let mut mon = MonitorRecord {
        iteration: it,
        vanilla: None,
        perturbed: None,
        kl,
        modes_covered: None,
        modes_total: None,
    };
    let value = match signal {
        Signal::Kl => kl.unwrap_or(FAILED_SIGNAL),
        Signal::PerturbedDg => {
            let st = &session.state;
            match estimate_dg(&st.gen, &st.disc, &session.data, session.cfg.latent_dim, &ecfg.dg_cfg, &mut rng) {
                Ok(e) => {
                    mon.perturbed = Some(e);
                    e.dg
                }
                Err(Error::AuxDiverged { .. }) | Err(Error::NonFinite(_)) => FAILED_SIGNAL,
                Err(e) => return Err(e),
            }
        }
    };
    Ok((mon, value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub reward: f64,
    pub iterations: usize,
    pub final_kl: Option<f64>,
    pub collapsed: bool,
}

/// Seed of the task GAN used in `episode`.
pub fn episode_seed(base: u64, episode: usize) -> u64 {
    SeededRng::derive_seed(base, &[episode as u64])
}

/// Trains a fresh policy over `episodes` fresh task GANs built from `task`
/// (its seed is replaced per episode). One policy update per episode.
pub fn train_controller(
    task: &ScenarioConfig,
    episodes: usize,
    ecfg: &EpisodeConfig,
    seed: u64,
) -> Result<(PolicyNet, Vec<EpisodeSummary>)> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    let mut policy = PolicyNet::new(ecfg.policy_lr, &mut SeededRng::derived(seed, &[0]))?;
    let mut summaries = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let s = episode_seed(seed, e + 1);
        let mut cfg = task.clone();
        cfg.seed = s;
        let ep = run_episode(Schedule::Policy(&policy), &cfg, ecfg, s)?;
        reinforce_update(&mut policy, &ep.trajectory, ep.reward)?;
        summaries.push(EpisodeSummary {
            episode: e,
            seed: s,
            reward: ep.reward,
            iterations: ep.actions.len(),
            final_kl: ep.final_kl(),
            collapsed: ep.collapsed_at.is_some(),
        });
    }
    Ok((policy, summaries))
}

/// Learning rate for both players of the scheduling task.
pub const DEFAULT_TASK_LR: f64 = 1e-4;

/// Clipped-Wasserstein task GAN used for scheduling experiments.
pub fn wasserstein_task(dataset: crate::datasets::MixtureSpec, lr: f64, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::base(GameVariant::WassersteinClipped { clip_c: 0.01 }, dataset);
    cfg.g_lr = lr;
    cfg.d_lr = lr;
    cfg.seed = seed;
    cfg
}

/// Policy output for a batch of states, unclipped; used by tests.
pub fn raw_probs(policy: &PolicyNet, states: &[ControllerState]) -> Result<Array2<f64>> {
    let flat: Vec<f64> = states.iter().flat_map(|s| s.values).collect();
    let x = Array2::from_shape_vec((states.len(), 4), flat).map_err(|e| Error::Shape(e.to_string()))?;
    policy.net.predict(x.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::MixtureSpec;
    use crate::nn::{Dense, LayerSpec};
    use ndarray::array;

    fn state(v: [f64; 4]) -> ControllerState {
        ControllerState { values: v, clamped: false }
    }

    fn tiny_task(variant: GameVariant) -> ScenarioConfig {
        ScenarioConfig {
            batch_size: 8,
            latent_dim: 3,
            hidden: vec![6],
            split_sizes: [32, 32, 32],
            eval_samples: 64,
            kl_bins: 5,
            dg_cfg: DgConfig {
                aux_iterations: 3,
                batch_size: 8,
                eval_batches: 1,
                ..DgConfig::default()
            },
            ..ScenarioConfig::base(variant, MixtureSpec::ring())
        }
    }

    fn tiny_ecfg() -> EpisodeConfig {
        EpisodeConfig {
            k: 20,
            dg_every: 5,
            dg_cfg: DgConfig {
                aux_iterations: 3,
                batch_size: 8,
                eval_batches: 1,
                sigma_rule: SigmaRule::global(0.25),
                ..DgConfig::default()
            },
            ..EpisodeConfig::default()
        }
    }

    /// Policy whose softmax logits are fixed by the last-layer bias.
    fn fixed_policy(logits: [f64; 2]) -> PolicyNet {
        let mut p = PolicyNet::new(1e-3, &mut SeededRng::new(0)).unwrap();
        let last = p.net.layers_mut().last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias = array![logits[0], logits[1]];
        p
    }

    #[test]
    fn ema_rules() {
        let mut slot = None;
        assert_eq!(EmaStore::fold(0.9, &mut slot, 1.0), 1.0);
        assert!((EmaStore::fold(0.9, &mut slot, 2.0) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn equal_norms_give_zero_log_ratio() {
        // G(z) = z, D(x) = sigmoid(w·x); with z and x of the same scale the
        // two gradients share the same entries up to sign.
        let g = Network::from_layers(vec![Dense::new(
            LayerSpec::new(2, 2, Activation::Identity),
            array![[1.0, 0.0], [0.0, 1.0]],
            array![0.0, 0.0],
        )
        .unwrap()])
        .unwrap();
        let d = Network::from_layers(vec![Dense::new(
            LayerSpec::new(2, 1, Activation::Sigmoid),
            array![[0.0, 0.0]],
            array![0.0],
        )
        .unwrap()])
        .unwrap();
        let batch = BatchPair::new(array![[1.0, 1.0]], array![[1.0, 1.0]]).unwrap();
        let mut ema = EmaStore::new(0.9);
        let s = encode_state(&g, &d, GameVariant::Classic, &batch, &mut ema).unwrap();
        // dF/dw = 0.5 x - 0.5 G(z) = 0 when G(z) = x; generator gradient is
        // 0.5 * w = 0 too, so both norms vanish and the ratio is defined as 1.
        assert_eq!(s.values[0], 0.0);
        assert_eq!(ema.g_loss, Some(s.values[1]));
    }

    #[test]
    fn degenerate_policy_picks_g() {
        let p = fixed_policy([60.0, -60.0]);
        let pr = p.probs(&state([0.0; 4])).unwrap();
        assert_eq!(pr, [1.0 - PROB_CLIP, PROB_CLIP]);
        let mut rng = SeededRng::new(3);
        for _ in 0..1000 {
            assert_eq!(sample_action(&p, &state([0.0; 4]), &mut rng).unwrap().0, Action::UpdateG);
        }
    }

    #[test]
    fn uniform_policy_frequency_and_log_prob() {
        let p = fixed_policy([0.0, 0.0]);
        let mut rng = SeededRng::new(4);
        let mut g = 0;
        for _ in 0..10_000 {
            let (a, lp) = sample_action(&p, &state([0.3; 4]), &mut rng).unwrap();
            assert_eq!(lp, 0.5f64.ln());
            g += (a == Action::UpdateG) as usize;
        }
        assert!((g as f64 / 1e4 - 0.5).abs() <= 0.02);
    }

    #[test]
    fn zero_reward_leaves_policy() {
        let mut p = PolicyNet::new(1e-3, &mut SeededRng::new(1)).unwrap();
        let before = p.net.clone();
        let traj = [Step { state: state([0.1, 0.2, 0.3, 0.4]), action: Action::UpdateD, log_prob: -0.7 }];
        reinforce_update(&mut p, &traj, 0.0).unwrap();
        assert_eq!(p.net, before);
        assert!(reinforce_update(&mut p, &[], 1.0).is_err());
        assert!(reinforce_update(&mut p, &traj, f64::NAN).is_err());
    }

    #[test]
    fn positive_reward_raises_taken_action() {
        let mut p = PolicyNet::new(1e-3, &mut SeededRng::new(2)).unwrap();
        let s = state([0.5, -0.2, 1.0, 0.3]);
        let before = p.probs(&s).unwrap()[1];
        let traj = [Step { state: s, action: Action::UpdateD, log_prob: before.ln() }];
        reinforce_update(&mut p, &traj, 10.0).unwrap();
        assert!(p.probs(&s).unwrap()[1] > before);
    }

    #[test]
    fn reward_formula() {
        let e = EpisodeConfig::default();
        assert!((e.reward(0.5) - 10.0).abs() < 1e-3);
        assert!((e.reward(0.0) - 5e5).abs() < 1e-6);
        assert_eq!(e.reward(-3.0), e.reward(0.0));
        assert!(e.reward(0.1) > e.reward(0.2));
        let tiny_eps = EpisodeConfig { epsilon: 1e-9, ..e };
        assert_eq!(tiny_eps.reward(0.0), 1e6);
    }

    #[test]
    fn constant_policy_collapses_episode() {
        let p = fixed_policy([-60.0, 60.0]);
        let ecfg = EpisodeConfig { collapse_window: 7, ..tiny_ecfg() };
        let ep = run_episode(Schedule::Policy(&p), &tiny_task(GameVariant::Classic), &ecfg, 1).unwrap();
        assert_eq!(ep.collapsed_at, Some(7));
        assert_eq!(ep.reward, -1.0);
        assert!(ep.actions.iter().all(|a| *a == Action::UpdateD));
    }

    #[test]
    fn fixed_schedule_pattern_and_frequencies() {
        let task = tiny_task(GameVariant::WassersteinClipped { clip_c: 0.01 });
        let ep = run_episode(Schedule::Fixed(UpdateRatio::new(1, 4)), &task, &tiny_ecfg(), 1).unwrap();
        assert_eq!(ep.signal, Signal::Kl);
        assert_eq!(ep.actions.len(), 20);
        assert_eq!(ep.log.monitors.len(), 4);
        let t = ep.action_frequencies(5).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0][2], crate::report::Cell::Num(0.8));
    }

    #[test]
    fn one_episode_training_matches_manual_update() {
        let task = tiny_task(GameVariant::Classic);
        let ecfg = tiny_ecfg();
        let (trained, summary) = train_controller(&task, 1, &ecfg, 5).unwrap();
        let mut manual = PolicyNet::new(ecfg.policy_lr, &mut SeededRng::derived(5, &[0])).unwrap();
        let mut cfg = task.clone();
        cfg.seed = episode_seed(5, 1);
        let ep = run_episode(Schedule::Policy(&manual), &cfg, &ecfg, cfg.seed).unwrap();
        reinforce_update(&mut manual, &ep.trajectory, ep.reward).unwrap();
        assert_eq!(trained.net, manual.net);
        assert_eq!(summary[0].reward, ep.reward);
        assert!(ep.log.monitors.iter().all(|m| m.perturbed.is_some()));
    }

    #[test]
    fn policy_rows_sum_to_one() {
        let p = PolicyNet::new(1e-3, &mut SeededRng::new(8)).unwrap();
        let states: Vec<_> = (0..50).map(|i| state([i as f64 - 25.0, 1e3, -1e3, 0.1 * i as f64])).collect();
        let y = raw_probs(&p, &states).unwrap();
        for r in y.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-9);
        }
    }
}
