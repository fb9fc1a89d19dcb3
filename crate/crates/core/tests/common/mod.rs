//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use dualgap::games::{disc_grads, gen_grads, BatchPair, GameVariant};
use dualgap::nn::{init_network, Activation, Network, ParamGrads, SeededRng};
use ndarray::Array2;

pub const VARIANTS: [GameVariant; 3] = [
    GameVariant::Classic,
    GameVariant::NonSaturating,
    GameVariant::WassersteinClipped { clip_c: 0.01 },
];

const FD_STEP: f64 = 1e-4;
/// Minimum |pre-activation| of piecewise-linear units in a checked batch.
const KINK_MARGIN: f64 = 2e-3;
/// Entries whose gradients are both below this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// A small generator/discriminator pair with random shapes and activations.
/// Draws repeat until no leaky unit sits within the stencil's reach of its kink.
pub fn random_game(variant: GameVariant, rng: &mut SeededRng) -> (Network, Network, BatchPair) {
    for _ in 0..1000 {
        let (gen, disc, batch) = draw_game(variant, rng);
        if kink_distance(&gen, &disc, &batch) >= KINK_MARGIN {
            return (gen, disc, batch);
        }
    }
    panic!("no kink-free game found");
}

fn draw_game(variant: GameVariant, rng: &mut SeededRng) -> (Network, Network, BatchPair) {
    let acts = [Activation::Tanh, Activation::Sigmoid, Activation::LeakyRelu { alpha: 0.2 }];
    let pick = |rng: &mut SeededRng, n: usize| (rng.unit() * n as f64) as usize;
    let latent = 1 + pick(rng, 3);
    let depth_g = 1 + pick(rng, 2);
    let hidden_g: Vec<usize> = (0..depth_g).map(|_| 2 + pick(rng, 4)).collect();
    let depth_d = 1 + pick(rng, 2);
    let hidden_d: Vec<usize> = (0..depth_d).map(|_| 2 + pick(rng, 4)).collect();
    let act_g = acts[pick(rng, 3)];
    let act_d = acts[pick(rng, 3)];
    let gen = init_network(&Network::mlp_specs(latent, &hidden_g, 2, act_g, Activation::Identity), rng).unwrap();
    let mut disc = init_network(&Network::mlp_specs(2, &hidden_d, 1, act_d, variant.disc_head()), rng).unwrap();
    // Nonzero biases so every bias gradient is exercised.
    for p in disc.params_mut() {
        *p += rng.symmetric(0.1);
    }
    let n = 3 + pick(rng, 5);
    let batch = BatchPair::new(gaussian_matrix(n, 2, rng), gaussian_matrix(n, latent, rng)).unwrap();
    (gen, disc, batch)
}

/// Smallest |pre-activation| over every piecewise-linear unit the batch
/// reaches, in either network. Finite differences are only meaningful when
/// this exceeds the stencil's reach.
pub fn kink_distance(gen: &Network, disc: &Network, b: &BatchPair) -> f64 {
    fn walk(net: &Network, x: &Array2<f64>, min: &mut f64) -> Array2<f64> {
        let mut h = x.clone();
        for l in net.layers() {
            let z = h.dot(&l.weight.t()) + &l.bias;
            h = match l.spec().activation {
                Activation::LeakyRelu { alpha } => {
                    *min = z.iter().fold(*min, |m, v| m.min(v.abs()));
                    z.mapv(|v| if v > 0.0 { v } else { alpha * v })
                }
                Activation::Relu => {
                    *min = z.iter().fold(*min, |m, v| m.min(v.abs()));
                    z.mapv(|v| v.max(0.0))
                }
                Activation::Tanh => z.mapv(f64::tanh),
                Activation::Sigmoid => z.mapv(dualgap::nn::sigmoid),
                _ => z,
            };
        }
        h
    }
    let mut min = f64::INFINITY;
    let fake = walk(gen, &b.latent, &mut min);
    walk(disc, &b.real, &mut min);
    walk(disc, &fake, &mut min);
    min
}

/// Discriminator objective without probability clipping.
pub fn disc_objective(variant: GameVariant, gen: &Network, disc: &Network, b: &BatchPair) -> f64 {
    let fake = gen.predict(b.latent.view()).unwrap();
    let dr = disc.predict(b.real.view()).unwrap();
    let df = disc.predict(fake.view()).unwrap();
    match variant {
        GameVariant::WassersteinClipped { .. } => dr.mean().unwrap() - df.mean().unwrap(),
        _ => dr.mapv(f64::ln).mean().unwrap() + df.mapv(|p| (1.0 - p).ln()).mean().unwrap(),
    }
}

/// Generator loss without probability clipping.
pub fn gen_loss(variant: GameVariant, gen: &Network, disc: &Network, b: &BatchPair) -> f64 {
    let fake = gen.predict(b.latent.view()).unwrap();
    let df = disc.predict(fake.view()).unwrap();
    match variant {
        GameVariant::Classic => df.mapv(|p| (1.0 - p).ln()).mean().unwrap(),
        GameVariant::NonSaturating => -df.mapv(f64::ln).mean().unwrap(),
        GameVariant::WassersteinClipped { .. } => -df.mean().unwrap(),
    }
}

fn fd_grad(net: &Network, f: impl Fn(&Network) -> f64) -> Vec<f64> {
    let n = net.param_count();
    (0..n)
        .map(|i| {
            let shifted = |d: f64| {
                let mut m = net.clone();
                *m.params_mut().nth(i).unwrap() += d;
                f(&m)
            };
            // Fourth-order central stencil: truncation ~h⁴ and roundoff ~eps/h
            // both stay far below the tolerance.
            let h = FD_STEP;
            (8.0 * (shifted(h) - shifted(-h)) - (shifted(2.0 * h) - shifted(-2.0 * h))) / (12.0 * h)
        })
        .collect()
}

fn max_rel_err(analytic: &ParamGrads, numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Largest relative error of both agents' backprop gradients against central differences.
pub fn gradient_check(variant: GameVariant, gen: &Network, disc: &Network, b: &BatchPair) -> f64 {
    let (dg, _) = disc_grads(variant, gen, disc, b).unwrap();
    let fd_d = fd_grad(disc, |d| disc_objective(variant, gen, d, b));
    let (gg, _) = gen_grads(variant, gen, disc, b.latent.view()).unwrap();
    let fd_g = fd_grad(gen, |g| gen_loss(variant, g, disc, b));
    max_rel_err(&dg, &fd_d).max(max_rel_err(&gg, &fd_g))
}
