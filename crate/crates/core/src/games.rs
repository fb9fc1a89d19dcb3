//! GAN game objectives and per-agent gradients.
//!
//! The discriminator always maximizes its objective and the generator always
//! minimizes its loss; gradients returned here are plain gradients of those
//! scalars, so callers pair them with [`Direction::Ascend`] and
//! [`Direction::Descend`] respectively.
//!
//! [`Direction::Ascend`]: crate::nn::Direction::Ascend
//! [`Direction::Descend`]: crate::nn::Direction::Descend

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Activation, Network, ParamGrads};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum GameVariant {
    Classic,
    NonSaturating,
    WassersteinClipped { clip_c: f64 },
}

impl GameVariant {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GameVariant::WassersteinClipped { clip_c } if !(clip_c > 0.0) => Err(Error::Config(
                format!("clip_c must be positive, got {clip_c}"),
            )),
            _ => Ok(()),
        }
    }

    /// Output activation the discriminator must end with.
    pub fn disc_head(&self) -> Activation {
        match self {
            GameVariant::WassersteinClipped { .. } => Activation::Identity,
            _ => Activation::Sigmoid,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GameVariant::Classic => "classic",
            GameVariant::NonSaturating => "ns",
            GameVariant::WassersteinClipped { .. } => "wasserstein",
        }
    }
}

/// Real samples and latent codes for one step; row counts match.
#[derive(Debug, Clone)]
pub struct BatchPair {
    pub real: Array2<f64>,
    pub latent: Array2<f64>,
}

impl BatchPair {
    pub fn new(real: Array2<f64>, latent: Array2<f64>) -> Result<Self> {
        if real.nrows() != latent.nrows() || real.nrows() == 0 {
            return Err(Error::Shape(format!(
                "real has {} rows, latent has {}",
                real.nrows(),
                latent.nrows()
            )));
        }
        Ok(Self { real, latent })
    }
}

fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

// Sigmoid-head gradients are taken w.r.t. the logit `a`, where
// d log σ(a) = σ(-a) and d log(1 - σ(a)) = -σ(a). They stay informative when
// the reported (clipped) value saturates.

fn check_pair(gen: &Network, disc: &Network, data_dim: usize) -> Result<()> {
    if gen.output_dim() != disc.input_dim() || disc.input_dim() != data_dim {
        return Err(Error::Shape(format!(
            "generator emits {} dims, discriminator reads {}, data has {}",
            gen.output_dim(),
            disc.input_dim(),
            data_dim
        )));
    }
    if disc.output_dim() != 1 {
        return Err(Error::Shape("discriminator must output a single score".into()));
    }
    Ok(())
}

fn check_head(variant: GameVariant, disc: &Network) -> Result<()> {
    variant.validate()?;
    let want = variant.disc_head();
    if disc.output_activation() != want {
        return Err(Error::Config(format!(
            "{} game needs a {:?} discriminator head, found {:?}",
            variant.name(),
            want,
            disc.output_activation()
        )));
    }
    Ok(())
}

fn mean_log(p: &Array2<f64>, complement: bool) -> f64 {
    let n = p.len() as f64;
    p.iter()
        .map(|&v| {
            let v = clip_prob(v);
            if complement {
                (1.0 - v).ln()
            } else {
                v.ln()
            }
        })
        .sum::<f64>()
        / n
}

/// Batch estimate of `E[log D(x)] + E[log(1 - D(G(z)))]`.
pub fn value_classic(gen: &Network, disc: &Network, batch: &BatchPair) -> Result<f64> {
    check_pair(gen, disc, batch.real.ncols())?;
    check_head(GameVariant::Classic, disc)?;
    let fake = gen.predict(batch.latent.view())?;
    let d_real = disc.predict(batch.real.view())?;
    let d_fake = disc.predict(fake.view())?;
    Ok(mean_log(&d_real, false) + mean_log(&d_fake, true))
}

/// Gradients and scalar objectives of both agents at one batch.
#[derive(Debug, Clone)]
pub struct AgentGrads {
    /// Gradient of the generator loss (descend on it).
    pub gen: ParamGrads,
    /// Gradient of the discriminator objective (ascend on it).
    pub disc: ParamGrads,
    pub gen_loss: f64,
    /// Negated discriminator objective, so lower is better for both losses.
    pub disc_loss: f64,
}

pub fn agent_grads(
    variant: GameVariant,
    gen: &Network,
    disc: &Network,
    batch: &BatchPair,
) -> Result<AgentGrads> {
    let (disc_g, objective) = disc_grads(variant, gen, disc, batch)?;
    let (gen_g, gen_loss) = gen_grads(variant, gen, disc, batch.latent.view())?;
    Ok(AgentGrads {
        gen: gen_g,
        disc: disc_g,
        gen_loss,
        disc_loss: -objective,
    })
}

/// Gradient of the discriminator objective w.r.t. the discriminator, and the
/// objective value.
pub fn disc_grads(
    variant: GameVariant,
    gen: &Network,
    disc: &Network,
    batch: &BatchPair,
) -> Result<(ParamGrads, f64)> {
    check_pair(gen, disc, batch.real.ncols())?;
    check_head(variant, disc)?;
    let fake = gen.predict(batch.latent.view())?;
    disc_grads_on(variant, disc, batch.real.view(), fake.view())
}

/// Discriminator gradient given already generated samples.
pub fn disc_grads_on(
    variant: GameVariant,
    disc: &Network,
    real: ArrayView2<'_, f64>,
    fake: ArrayView2<'_, f64>,
) -> Result<(ParamGrads, f64)> {
    check_head(variant, disc)?;
    let (d_real, c_real) = disc.forward(real)?;
    let (d_fake, c_fake) = disc.forward(fake)?;
    let n_r = d_real.len() as f64;
    let n_f = d_fake.len() as f64;
    match variant {
        GameVariant::Classic | GameVariant::NonSaturating => {
            let g_real = c_real.logits().mapv(|a| sigmoid(-a) / n_r);
            let g_fake = c_fake.logits().mapv(|a| -sigmoid(a) / n_f);
            let mut grads = disc.backward_from_logits(&c_real, &g_real)?.0;
            grads.add_assign(&disc.backward_from_logits(&c_fake, &g_fake)?.0);
            Ok((grads, mean_log(&d_real, false) + mean_log(&d_fake, true)))
        }
        GameVariant::WassersteinClipped { .. } => {
            let g_real = Array2::from_elem(d_real.dim(), 1.0 / n_r);
            let g_fake = Array2::from_elem(d_fake.dim(), -1.0 / n_f);
            let mut grads = disc.backward(&c_real, &g_real)?;
            grads.add_assign(&disc.backward(&c_fake, &g_fake)?);
            Ok((grads, d_real.mean().unwrap_or(0.0) - d_fake.mean().unwrap_or(0.0)))
        }
    }
}

/// Gradient of the generator loss of `variant` w.r.t. the generator, and the loss.
pub fn gen_grads(
    variant: GameVariant,
    gen: &Network,
    disc: &Network,
    latent: ArrayView2<'_, f64>,
) -> Result<(ParamGrads, f64)> {
    check_pair(gen, disc, disc.input_dim())?;
    check_head(variant, disc)?;
    let (fake, c_gen) = gen.forward(latent)?;
    let (d_fake, c_disc) = disc.forward(fake.view())?;
    let n = d_fake.len() as f64;
    let logits = c_disc.logits();
    let (_, grad_fake, loss) = match variant {
        GameVariant::Classic => {
            let seed = logits.mapv(|a| -sigmoid(a) / n);
            let (g, x) = disc.backward_from_logits(&c_disc, &seed)?;
            (g, x, mean_log(&d_fake, true))
        }
        GameVariant::NonSaturating => {
            let seed = logits.mapv(|a| -sigmoid(-a) / n);
            let (g, x) = disc.backward_from_logits(&c_disc, &seed)?;
            (g, x, -mean_log(&d_fake, false))
        }
        GameVariant::WassersteinClipped { .. } => {
            let seed = Array2::from_elem(d_fake.dim(), -1.0 / n);
            let (g, x) = disc.backward_with_input(&c_disc, &seed)?;
            (g, x, -d_fake.mean().unwrap_or(0.0))
        }
    };
    let grads = gen.backward(&c_gen, &grad_fake)?;
    Ok((grads, loss))
}

/// Clamps every discriminator parameter to `[-c, c]`.
pub fn clip_weights(disc: &mut Network, c: f64) {
    disc.params_mut().for_each(|p| *p = p.clamp(-c, c));
}
