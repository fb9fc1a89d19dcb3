//! Analytic two-player game on the plane.
//!
//! `x` maximizes and `y` minimizes
//! `f(x, y) = exp(-0.01 (x² + y²)) · ((0.3 x² + y)² + (x + 0.5 y²)²)`.
//! The origin is a critical point that is a local minimum in both
//! coordinates, so it is not a local Nash point: the max player can improve
//! by moving away, but plain gradient ascent started exactly there never does.

use serde::{Deserialize, Serialize};

use crate::error::{AuxSide, Error, Result};
use crate::estimate::DgEstimate;
use crate::nn::{AdamConfig, AdamState, Direction, SeededRng, SigmaRule};

/// Non-Nash critical point of [`ToyGame`].
pub const POINT_B: ToyPoint = ToyPoint { x: 0.0, y: 0.0 };
/// Reference Nash point of [`ToyGame`] as published (rounded coordinates).
pub const POINT_A: ToyPoint = ToyPoint {
    x: -12.43373,
    y: -8.78737,
};

pub const DEFAULT_GRAD_TOL: f64 = 0.1;
const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyPoint {
    pub x: f64,
    pub y: f64,
}

impl ToyPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A smooth zero-sum game over two scalars: `x` maximizes, `y` minimizes.
pub trait ScalarGame {
    fn value(&self, p: ToyPoint) -> f64;
    fn grad(&self, p: ToyPoint) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ToyGame;

impl ScalarGame for ToyGame {
    fn value(&self, p: ToyPoint) -> f64 {
        toy_value(p)
    }

    fn grad(&self, p: ToyPoint) -> (f64, f64) {
        toy_grad(p)
    }
}

/// `F(x, y) = -x² + y²`, whose duality gap is `x² + y²` in closed form.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticGame;

impl ScalarGame for QuadraticGame {
    fn value(&self, p: ToyPoint) -> f64 {
        -p.x * p.x + p.y * p.y
    }

    fn grad(&self, p: ToyPoint) -> (f64, f64) {
        (-2.0 * p.x, 2.0 * p.y)
    }
}

/// `max_x' F(x', y) - min_y' F(x, y') = y² - (-x²)`.
pub fn quadratic_game_dg_oracle(x: f64, y: f64) -> f64 {
    x * x + y * y
}

pub fn toy_value(p: ToyPoint) -> f64 {
    let ToyPoint { x, y } = p;
    let e = (-0.01 * (x * x + y * y)).exp();
    let u = 0.3 * x * x + y;
    let w = x + 0.5 * y * y;
    e * (u * u + w * w)
}

pub fn toy_grad(p: ToyPoint) -> (f64, f64) {
    let ToyPoint { x, y } = p;
    let e = (-0.01 * (x * x + y * y)).exp();
    let u = 0.3 * x * x + y;
    let w = x + 0.5 * y * y;
    let s = u * u + w * w;
    let ds_dx = 1.2 * x * u + 2.0 * w;
    let ds_dy = 2.0 * u + 2.0 * y * w;
    (e * (ds_dx - 0.02 * x * s), e * (ds_dy - 0.02 * y * s))
}

/// Diagonal Hessian entries by central differences of the analytic gradient.
pub fn hessian_diag<G: ScalarGame>(game: &G, p: ToyPoint, h: f64) -> (f64, f64) {
    let gx = |x: f64| game.grad(ToyPoint::new(x, p.y)).0;
    let gy = |y: f64| game.grad(ToyPoint::new(p.x, y)).1;
    (
        (gx(p.x + h) - gx(p.x - h)) / (2.0 * h),
        (gy(p.y + h) - gy(p.y - h)) / (2.0 * h),
    )
}

pub fn toy_hessian_diag(p: ToyPoint) -> (f64, f64) {
    hessian_diag(&ToyGame, p, HESSIAN_STEP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Nash,
    NonNash,
    NotCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub point: ToyPoint,
    pub grad: (f64, f64),
    pub hess_xx: f64,
    pub hess_yy: f64,
    pub classification: Classification,
}

/// Critical when `‖∇f‖∞ ≤ grad_tol`; Nash when additionally `f` is locally
/// concave in `x` and convex in `y`.
pub fn classify_critical(p: ToyPoint, grad_tol: f64) -> CriticalPointReport {
    let grad = toy_grad(p);
    let (hess_xx, hess_yy) = toy_hessian_diag(p);
    let classification = if grad.0.abs().max(grad.1.abs()) > grad_tol {
        Classification::NotCritical
    } else if hess_xx < 0.0 && hess_yy > 0.0 {
        Classification::Nash
    } else {
        Classification::NonNash
    };
    CriticalPointReport {
        point: p,
        grad,
        hess_xx,
        hess_yy,
        classification,
    }
}

/// Path of one auxiliary player: `(step, x, y, f)`, starting at step 0.
pub type Trajectory = Vec<(usize, f64, f64, f64)>;

/// Result of [`scalar_dg_traced`]: the estimate and both auxiliary paths.
#[derive(Debug, Clone)]
pub struct TracedDg {
    pub estimate: DgEstimate,
    pub max_path: Trajectory,
    pub min_path: Trajectory,
}

/// Perturbed duality gap at `p` for any scalar game. The max player ascends
/// from `x + δ` with `y` frozen, the min player descends from `y + δ'` with
/// `x` frozen, both with Adam; `sigma = 0` gives the vanilla estimate.
pub fn scalar_dg<G: ScalarGame>(
    game: &G,
    p: ToyPoint,
    sigma: f64,
    lr: f64,
    iterations: usize,
    rng: &mut SeededRng,
) -> Result<DgEstimate> {
    scalar_dg_inner(game, p, sigma, lr, iterations, rng, false).map(|t| t.estimate)
}

/// [`scalar_dg`] that also records both optimization paths.
pub fn scalar_dg_traced<G: ScalarGame>(
    game: &G,
    p: ToyPoint,
    sigma: f64,
    lr: f64,
    iterations: usize,
    rng: &mut SeededRng,
) -> Result<TracedDg> {
    scalar_dg_inner(game, p, sigma, lr, iterations, rng, true)
}

fn scalar_dg_inner<G: ScalarGame>(
    game: &G,
    p: ToyPoint,
    sigma: f64,
    lr: f64,
    iterations: usize,
    rng: &mut SeededRng,
    trace: bool,
) -> Result<TracedDg> {
    if iterations == 0 {
        return Err(Error::Config("iterations must be >= 1".into()));
    }
    if !(sigma >= 0.0) || !(lr > 0.0) {
        return Err(Error::Config(format!("need sigma >= 0 and lr > 0, got {sigma}, {lr}")));
    }
    let dx = rng.symmetric(sigma);
    let dy = rng.symmetric(sigma);
    let cfg = AdamConfig::with_lr(lr);

    let mut max_path = Vec::new();
    let mut x = p.x + dx;
    let mut opt = AdamState::new(1, cfg);
    for step in 0..iterations {
        if trace {
            let q = ToyPoint::new(x, p.y);
            max_path.push((step, x, p.y, game.value(q)));
        }
        let g = game.grad(ToyPoint::new(x, p.y)).0;
        opt.step(std::iter::once(&mut x), std::iter::once(g), Direction::Ascend)?;
        if !x.is_finite() {
            return Err(Error::AuxDiverged {
                side: AuxSide::Discriminator,
                step,
            });
        }
    }

    let mut min_path = Vec::new();
    let mut y = p.y + dy;
    let mut opt = AdamState::new(1, cfg);
    for step in 0..iterations {
        if trace {
            let q = ToyPoint::new(p.x, y);
            min_path.push((step, p.x, y, game.value(q)));
        }
        let g = game.grad(ToyPoint::new(p.x, y)).1;
        opt.step(std::iter::once(&mut y), std::iter::once(g), Direction::Descend)?;
        if !y.is_finite() {
            return Err(Error::AuxDiverged {
                side: AuxSide::Generator,
                step,
            });
        }
    }

    let m1 = game.value(ToyPoint::new(x, p.y));
    let m2 = game.value(ToyPoint::new(p.x, y));
    if trace {
        max_path.push((iterations, x, p.y, m1));
        min_path.push((iterations, p.x, y, m2));
    }
    if !(m1.is_finite() && m2.is_finite()) {
        return Err(Error::NonFinite("toy game value".into()));
    }
    Ok(TracedDg {
        estimate: DgEstimate::new(m1, m2, iterations, SigmaRule::global(sigma)),
        max_path,
        min_path,
    })
}

pub fn toy_dg(p: ToyPoint, sigma: f64, lr: f64, iterations: usize, rng: &mut SeededRng) -> Result<DgEstimate> {
    scalar_dg(&ToyGame, p, sigma, lr, iterations, rng)
}
