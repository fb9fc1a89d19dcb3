use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::datasets::MixtureSpec;
use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BBox {
    /// Bounding box of `points`, widened by `frac` of its extent on every side.
    pub fn around(points: ArrayView2<'_, f64>, frac: f64) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() != 2 {
            return Err(Error::Shape("need a nonempty n×2 sample set".into()));
        }
        let mut b = BBox {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for r in points.rows() {
            b.x0 = b.x0.min(r[0]);
            b.x1 = b.x1.max(r[0]);
            b.y0 = b.y0.min(r[1]);
            b.y1 = b.y1.max(r[1]);
        }
        let (dx, dy) = ((b.x1 - b.x0) * frac, (b.y1 - b.y0) * frac);
        Ok(BBox {
            x0: b.x0 - dx,
            x1: b.x1 + dx,
            y0: b.y0 - dy,
            y1: b.y1 + dy,
        })
    }

    fn is_degenerate(&self) -> bool {
        !(self.x1 > self.x0 && self.y1 > self.y0) || ![self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite())
    }
}

/// Counts per cell of a `bins × bins` lattice; points outside the box (or
/// non-finite) are counted in `total` but in no cell.
fn histogram(points: ArrayView2<'_, f64>, bins: usize, bbox: &BBox) -> (Vec<f64>, f64) {
    let mut counts = vec![0.0; bins * bins];
    let wx = (bbox.x1 - bbox.x0) / bins as f64;
    let wy = (bbox.y1 - bbox.y0) / bins as f64;
    for r in points.rows() {
        let (x, y) = (r[0], r[1]);
        if !(x >= bbox.x0 && x <= bbox.x1 && y >= bbox.y0 && y <= bbox.y1) {
            continue;
        }
        let i = (((x - bbox.x0) / wx) as usize).min(bins - 1);
        let j = (((y - bbox.y0) / wy) as usize).min(bins - 1);
        counts[j * bins + i] += 1.0;
    }
    (counts, points.nrows() as f64)
}

/// Histogram estimate of `KL(real ‖ fake)` with add-one smoothing.
///
/// Fake samples that fall outside `bbox` still count toward the fake total,
/// so mass the generator places off the lattice raises the divergence.
pub fn kl_divergence_2d(
    real: ArrayView2<'_, f64>,
    fake: ArrayView2<'_, f64>,
    bins: usize,
    bbox: &BBox,
) -> Result<f64> {
    if real.nrows() == 0 || fake.nrows() == 0 {
        return Err(Error::Shape("both sample sets must be nonempty".into()));
    }
    if real.ncols() != 2 || fake.ncols() != 2 {
        return Err(Error::Shape("samples must be two-dimensional".into()));
    }
    if bins < 2 {
        return Err(Error::Config(format!("bins must be >= 2, got {bins}")));
    }
    if bbox.is_degenerate() {
        return Err(Error::Config(format!("degenerate bounding box {bbox:?}")));
    }
    let cells = (bins * bins) as f64;
    let (p, np) = histogram(real, bins, bbox);
    let (q, nq) = histogram(fake, bins, bbox);
    let (zp, zq) = (np + cells, nq + cells);
    let kl: f64 = p
        .iter()
        .zip(&q)
        .map(|(&cp, &cq)| {
            let pi = (cp + 1.0) / zp;
            let qi = (cq + 1.0) / zq;
            pi * (pi / qi).ln()
        })
        .sum();
    Ok(kl.max(0.0))
}

/// A mode counts as covered when at least 1% of `fake` lies within three
/// mode standard deviations of its center.
pub fn mode_coverage(spec: &MixtureSpec, fake: ArrayView2<'_, f64>) -> Result<(usize, usize)> {
    let (centers, std) = match (spec.centers(), spec.mode_std()) {
        (Some(c), Some(s)) => (c, s),
        _ => {
            return Err(Error::Unsupported(format!(
                "{} has no discrete modes",
                spec.name()
            )))
        }
    };
    let radius2 = (3.0 * std).powi(2);
    let mut hits = vec![0usize; centers.len()];
    for r in fake.rows() {
        for (h, c) in hits.iter_mut().zip(&centers) {
            if (r[0] - c[0]).powi(2) + (r[1] - c[1]).powi(2) <= radius2 {
                *h += 1;
            }
        }
    }
    let need = 0.01 * fake.nrows() as f64;
    let covered = hits.iter().filter(|&&h| h as f64 >= need && h > 0).count();
    Ok((covered, centers.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::sample_mixture;
    use crate::nn::SeededRng;
    use ndarray::Array2;

    #[test]
    fn identical_sets_have_zero_kl() {
        let x = sample_mixture(&MixtureSpec::ring(), 2000, &mut SeededRng::new(1));
        let b = BBox::around(x.view(), 0.1).unwrap();
        assert_eq!(kl_divergence_2d(x.view(), x.view(), 50, &b).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_box_rejected() {
        let x = Array2::from_elem((4, 2), 1.0);
        let b = BBox::around(x.view(), 0.1).unwrap();
        assert!(kl_divergence_2d(x.view(), x.view(), 10, &b).is_err());
    }

    #[test]
    fn offbox_mass_is_penalized() {
        let x = sample_mixture(&MixtureSpec::ring(), 2000, &mut SeededRng::new(1));
        let b = BBox::around(x.view(), 0.1).unwrap();
        let far = Array2::from_elem((2000, 2), 100.0);
        assert!(kl_divergence_2d(x.view(), far.view(), 50, &b).unwrap() > 1.0);
    }

    #[test]
    fn coverage_edge_cases() {
        let spec = MixtureSpec::ring();
        let one = Array2::from_shape_fn((100, 2), |(_, j)| if j == 0 { 2.0 } else { 0.0 });
        assert_eq!(mode_coverage(&spec, one.view()).unwrap(), (1, 8));
        let far = Array2::from_elem((100, 2), 50.0);
        assert_eq!(mode_coverage(&spec, far.view()).unwrap(), (0, 8));
        let full = sample_mixture(&spec, 4000, &mut SeededRng::new(2));
        assert_eq!(mode_coverage(&spec, full.view()).unwrap(), (8, 8));
        assert!(mode_coverage(&MixtureSpec::spiral(), one.view()).is_err());
    }
}
