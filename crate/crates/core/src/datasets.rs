//! Synthetic 2D Gaussian-mixture targets and latent priors.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixtureSpec {
    Ring {
        k_modes: usize,
        radius: f64,
        mode_std: f64,
    },
    Grid {
        rows: usize,
        cols: usize,
        extent: f64,
        mode_std: f64,
    },
    Spiral {
        turns: f64,
        scale: f64,
        noise_std: f64,
    },
}

impl MixtureSpec {
    pub fn ring() -> Self {
        MixtureSpec::Ring {
            k_modes: 8,
            radius: 2.0,
            mode_std: 0.02,
        }
    }

    pub fn grid() -> Self {
        MixtureSpec::Grid {
            rows: 5,
            cols: 5,
            extent: 4.0,
            mode_std: 0.05,
        }
    }

    pub fn spiral() -> Self {
        MixtureSpec::Spiral {
            turns: 2.0,
            scale: 0.25,
            noise_std: 0.05,
        }
    }

    /// Default spec by name (`ring`, `grid`, `spiral`).
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "ring" => Some(Self::ring()),
            "grid" => Some(Self::grid()),
            "spiral" => Some(Self::spiral()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MixtureSpec::Ring { .. } => "ring",
            MixtureSpec::Grid { .. } => "grid",
            MixtureSpec::Spiral { .. } => "spiral",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MixtureSpec::Ring {
                k_modes,
                radius,
                mode_std,
            } => k_modes >= 2 && radius > 0.0 && mode_std > 0.0,
            MixtureSpec::Grid {
                rows,
                cols,
                extent,
                mode_std,
            } => rows >= 1 && cols >= 1 && extent > 0.0 && mode_std > 0.0,
            MixtureSpec::Spiral {
                turns,
                scale,
                noise_std,
            } => turns > 0.0 && scale > 0.0 && noise_std > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid mixture spec {self:?}")))
        }
    }

    /// Mode centers; `None` for the spiral, which has no discrete modes.
    pub fn centers(&self) -> Option<Vec<[f64; 2]>> {
        match *self {
            MixtureSpec::Ring { k_modes, radius, .. } => Some(
                (0..k_modes)
                    .map(|i| {
                        let a = 2.0 * PI * i as f64 / k_modes as f64;
                        [radius * a.cos(), radius * a.sin()]
                    })
                    .collect(),
            ),
            MixtureSpec::Grid {
                rows, cols, extent, ..
            } => {
                let coord = |i: usize, n: usize| {
                    if n == 1 {
                        0.0
                    } else {
                        -extent + 2.0 * extent * i as f64 / (n - 1) as f64
                    }
                };
                Some(
                    (0..rows)
                        .flat_map(|r| (0..cols).map(move |c| [coord(c, cols), coord(r, rows)]))
                        .collect(),
                )
            }
            MixtureSpec::Spiral { .. } => None,
        }
    }

    /// Per-mode noise std; `None` for the spiral.
    pub fn mode_std(&self) -> Option<f64> {
        match *self {
            MixtureSpec::Ring { mode_std, .. } | MixtureSpec::Grid { mode_std, .. } => Some(mode_std),
            MixtureSpec::Spiral { .. } => None,
        }
    }

    /// Exact mean of a ring or grid mixture; `None` for the spiral.
    pub fn mean(&self) -> Option<[f64; 2]> {
        let c = self.centers()?;
        let n = c.len() as f64;
        Some([
            c.iter().map(|p| p[0]).sum::<f64>() / n,
            c.iter().map(|p| p[1]).sum::<f64>() / n,
        ])
    }
}

/// `n` draws from the mixture, one sample per row.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, rng: &mut SeededRng) -> Array2<f64> {
    let mut out = Array2::zeros((n, 2));
    match *spec {
        MixtureSpec::Ring { mode_std, .. } | MixtureSpec::Grid { mode_std, .. } => {
            let centers = spec.centers().expect("discrete mixture");
            for mut row in out.rows_mut() {
                let c = centers[rng.random_range(0..centers.len())];
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                row[0] = c[0] + mode_std * nx;
                row[1] = c[1] + mode_std * ny;
            }
        }
        MixtureSpec::Spiral {
            turns,
            scale,
            noise_std,
        } => {
            for mut row in out.rows_mut() {
                let t = rng.unit() * turns * 2.0 * PI;
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                row[0] = scale * t * t.cos() + noise_std * nx;
                row[1] = scale * t * t.sin() + noise_std * ny;
            }
        }
    }
    out
}

/// Standard-normal latent codes, `n × dim`.
pub fn sample_latent(dim: usize, n: usize, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, dim), || rng.sample(StandardNormal))
}

/// Independent train / validation / test draws.
///
/// The GAN trains on `train`, auxiliary worst-case agents are fit on `val`,
/// and duality-gap terms are evaluated on `test`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: Array2<f64>,
    pub val: Array2<f64>,
    pub test: Array2<f64>,
}

pub fn make_splits(
    spec: &MixtureSpec,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    rng: &mut SeededRng,
) -> Result<SplitData> {
    spec.validate()?;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config("every split needs at least one sample".into()));
    }
    Ok(SplitData {
        train: sample_mixture(spec, n_train, rng),
        val: sample_mixture(spec, n_val, rng),
        test: sample_mixture(spec, n_test, rng),
    })
}

/// Rows of `data` picked uniformly with replacement.
pub fn minibatch(data: ArrayView2<'_, f64>, n: usize, rng: &mut SeededRng) -> Array2<f64> {
    let mut out = Array2::zeros((n, data.ncols()));
    for mut row in out.rows_mut() {
        row.assign(&data.row(rng.random_range(0..data.nrows())));
    }
    out
}

/// Index of the nearest center for every row.
pub fn nearest_center(centers: &[[f64; 2]], points: ArrayView2<'_, f64>) -> Vec<usize> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (i, c) in centers.iter().enumerate() {
                let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_is_centered() {
        let x = sample_mixture(&MixtureSpec::ring(), 10_000, &mut SeededRng::new(1));
        let m = x.mean_axis(ndarray::Axis(0)).unwrap();
        assert!(m[0].abs() < 0.1 && m[1].abs() < 0.1);
    }

    #[test]
    fn ring_points_stay_near_circle() {
        let x = sample_mixture(&MixtureSpec::ring(), 10_000, &mut SeededRng::new(2));
        let inside = x
            .rows()
            .into_iter()
            .filter(|r| (r[0] * r[0] + r[1] * r[1]).sqrt() <= 2.0 + 5.0 * 0.02)
            .count();
        assert!(inside as f64 >= 0.999 * 10_000.0);
    }

    #[test]
    fn grid_coverage() {
        let spec = MixtureSpec::grid();
        let x = sample_mixture(&spec, 10_000, &mut SeededRng::new(3));
        let idx = nearest_center(&spec.centers().unwrap(), x.view());
        let mut seen = [false; 25];
        idx.iter().for_each(|&i| seen[i] = true);
        assert!(seen.iter().filter(|&&s| s).count() >= 24);
    }

    #[test]
    fn grid_centers_span_extent() {
        let c = MixtureSpec::grid().centers().unwrap();
        assert_eq!(c.len(), 25);
        assert_eq!(c[0], [-4.0, -4.0]);
        assert_eq!(c[24], [4.0, 4.0]);
    }

    #[test]
    fn latent_moments() {
        let z = sample_latent(2, 100_000, &mut SeededRng::new(4));
        for col in z.columns() {
            let m = col.mean().unwrap();
            let v = col.mapv(|x| (x - m) * (x - m)).mean().unwrap();
            assert!(m.abs() < 0.02);
            assert!((v - 1.0).abs() < 0.05);
        }
        assert_eq!(sample_latent(100, 3, &mut SeededRng::new(5)).dim(), (3, 100));
    }

    #[test]
    fn splits_are_seeded_and_shaped() {
        let spec = MixtureSpec::ring();
        let a = make_splits(&spec, 1000, 1000, 1000, &mut SeededRng::new(6)).unwrap();
        let b = make_splits(&spec, 1000, 1000, 1000, &mut SeededRng::new(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.dim(), (1000, 2));
        assert_ne!(a.train, a.val);
        for split in [&a.train, &a.val] {
            let m = split.mean_axis(ndarray::Axis(0)).unwrap();
            assert!(m[0].abs() < 0.15 && m[1].abs() < 0.15);
        }
        assert!(make_splits(&spec, 0, 1, 1, &mut SeededRng::new(6)).is_err());
    }

    #[test]
    fn spiral_has_no_modes() {
        assert!(MixtureSpec::spiral().centers().is_none());
        let x = sample_mixture(&MixtureSpec::spiral(), 100, &mut SeededRng::new(1));
        assert!(x.iter().all(|v| v.abs() < 4.0));
    }
}
