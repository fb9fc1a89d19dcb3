//! Vanilla and perturbed duality-gap estimation for a generator/discriminator pair.
//!
//! Starting from copies of the current agents, a worst-case discriminator is
//! found by gradient ascent on `F(G, D')` and a worst-case generator by
//! gradient descent on `F(G', D)`. Each auxiliary agent may first be displaced
//! by uniform noise in a box (the perturbed estimate); a zero radius gives the
//! vanilla estimate. The gap is `M1 - M2` with `M1 = F(G, D_w)` and
//! `M2 = F(G_w, D)`, always measured with the classic objective.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datasets::{minibatch, sample_latent, SplitData};
use crate::error::{AuxSide, Error, Result};
use crate::games::{disc_grads, gen_grads, value_classic, BatchPair, GameVariant};
use crate::nn::{adam_step, perturb, Activation, AdamConfig, AdamState, Direction, Network, SeededRng, SigmaRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgConfig {
    pub aux_iterations: usize,
    pub aux_lr: f64,
    pub sigma_rule: SigmaRule,
    pub batch_size: usize,
    pub eval_batches: usize,
}

impl Default for DgConfig {
    fn default() -> Self {
        Self {
            aux_iterations: 300,
            aux_lr: 5e-4,
            sigma_rule: SigmaRule::PerLayerTwiceStd,
            batch_size: 256,
            eval_batches: 8,
        }
    }
}

impl DgConfig {
    /// Same settings with a zero perturbation radius.
    pub fn vanilla(&self) -> Self {
        Self {
            sigma_rule: SigmaRule::vanilla(),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batches == 0 {
            return Err(Error::Config("batch_size and eval_batches must be >= 1".into()));
        }
        if !(self.aux_lr >= 0.0) {
            return Err(Error::Config(format!("aux_lr must be >= 0, got {}", self.aux_lr)));
        }
        if let SigmaRule::Global { sigma } = self.sigma_rule {
            if !(sigma >= 0.0) {
                return Err(Error::Config(format!("sigma must be >= 0, got {sigma}")));
            }
        }
        Ok(())
    }
}

/// One duality-gap measurement. `dg == m1 - m2` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgEstimate {
    pub m1: f64,
    pub m2: f64,
    pub dg: f64,
    pub aux_iterations_used: usize,
    pub sigma_rule: SigmaRule,
}

impl DgEstimate {
    pub fn new(m1: f64, m2: f64, aux_iterations_used: usize, sigma_rule: SigmaRule) -> Self {
        Self {
            m1,
            m2,
            dg: m1 - m2,
            aux_iterations_used,
            sigma_rule,
        }
    }
}

/// Duality-gap estimate after `cfg.aux_iterations` auxiliary steps.
/// `gen` and `disc` are never modified.
pub fn estimate_dg(
    gen: &Network,
    disc: &Network,
    data: &SplitData,
    latent_dim: usize,
    cfg: &DgConfig,
    rng: &mut SeededRng,
) -> Result<DgEstimate> {
    let mut curve = dg_early_stop_curve(gen, disc, data, latent_dim, cfg, &[cfg.aux_iterations], rng)?;
    Ok(curve.pop().expect("one checkpoint").1)
}

/// Estimates recorded along one auxiliary optimization at each checkpoint
/// (ascending step counts). `cfg.aux_iterations` is ignored.
pub fn dg_early_stop_curve(
    gen: &Network,
    disc: &Network,
    data: &SplitData,
    latent_dim: usize,
    cfg: &DgConfig,
    checkpoints: &[usize],
    rng: &mut SeededRng,
) -> Result<Vec<(usize, DgEstimate)>> {
    cfg.validate()?;
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("checkpoints must be ascending".into()));
    }
    if disc.output_activation() != Activation::Sigmoid {
        return Err(Error::Unsupported(
            "duality gap uses the classic objective and needs a sigmoid discriminator head".into(),
        ));
    }
    if gen.input_dim() != latent_dim {
        return Err(Error::Shape(format!(
            "generator reads {} latent dims, config says {latent_dim}",
            gen.input_dim()
        )));
    }
    let mut eval_rng = rng.fork();
    let mut d_rng = rng.fork();
    let mut g_rng = rng.fork();
    let eval: Vec<BatchPair> = (0..cfg.eval_batches)
        .map(|_| BatchPair {
            real: minibatch(data.test.view(), cfg.batch_size, &mut eval_rng),
            latent: sample_latent(latent_dim, cfg.batch_size, &mut eval_rng),
        })
        .collect();

    let (m1s, m2s) = rayon::join(
        || worst_disc_curve(gen, disc, data, &eval, cfg, checkpoints, &mut d_rng),
        || worst_gen_curve(gen, disc, &eval, latent_dim, cfg, checkpoints, &mut g_rng),
    );
    let (m1s, m2s) = (m1s?, m2s?);
    Ok(checkpoints
        .iter()
        .zip(m1s.into_iter().zip(m2s))
        .map(|(&k, (m1, m2))| (k, DgEstimate::new(m1, m2, k, cfg.sigma_rule)))
        .collect())
}

fn mean_value(gen: &Network, disc: &Network, eval: &[BatchPair]) -> Result<f64> {
    let mut total = 0.0;
    for b in eval {
        total += value_classic(gen, disc, b)?;
    }
    Ok(total / eval.len() as f64)
}

fn diverged(side: AuxSide, step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::AuxDiverged { side, step },
        other => other,
    }
}

fn worst_disc_curve(
    gen: &Network,
    disc: &Network,
    data: &SplitData,
    eval: &[BatchPair],
    cfg: &DgConfig,
    checkpoints: &[usize],
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let side = AuxSide::Discriminator;
    let mut aux = perturb(disc, &cfg.sigma_rule, rng)?;
    let mut opt = AdamState::for_network(&aux, AdamConfig::with_lr(cfg.aux_lr));
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut step = 0;
    for &target in checkpoints {
        while step < target {
            let batch = BatchPair {
                real: minibatch(data.val.view(), cfg.batch_size, rng),
                latent: sample_latent(gen.input_dim(), cfg.batch_size, rng),
            };
            let (g, _) = disc_grads(GameVariant::Classic, gen, &aux, &batch).map_err(diverged(side, step))?;
            adam_step(&mut aux, &g, &mut opt, Direction::Ascend).map_err(diverged(side, step))?;
            step += 1;
        }
        let v = mean_value(gen, &aux, eval).map_err(diverged(side, step))?;
        out.push(v);
    }
    Ok(out)
}

fn worst_gen_curve(
    gen: &Network,
    disc: &Network,
    eval: &[BatchPair],
    latent_dim: usize,
    cfg: &DgConfig,
    checkpoints: &[usize],
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let side = AuxSide::Generator;
    let mut aux = perturb(gen, &cfg.sigma_rule, rng)?;
    let mut opt = AdamState::for_network(&aux, AdamConfig::with_lr(cfg.aux_lr));
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut step = 0;
    for &target in checkpoints {
        while step < target {
            let z: Array2<f64> = sample_latent(latent_dim, cfg.batch_size, rng);
            let (g, _) =
                gen_grads(GameVariant::Classic, &aux, disc, z.view()).map_err(diverged(side, step))?;
            adam_step(&mut aux, &g, &mut opt, Direction::Descend).map_err(diverged(side, step))?;
            step += 1;
        }
        let v = mean_value(&aux, disc, eval).map_err(diverged(side, step))?;
        out.push(v);
    }
    Ok(out)
}
