//! Hyperparameter grids and ablations driven by the perturbed duality gap.
//!
//! Every run in a grid gets a seed derived from the base seed and the cell's
//! coordinates, so cell values do not depend on evaluation order or on how
//! many worker threads are used.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{dg_early_stop_curve, estimate_dg, DgConfig};
use crate::nn::{SeededRng, SigmaRule};
use crate::report::{Cell, CsvTable};
use crate::trainer::{run_scenario, train, RunLog, ScenarioConfig, TrainedRun};

/// Runs `f` on a pool with `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Spearman rank correlation; ties receive their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, sx) = mean_std(&rx);
    let (my, sy) = mean_std(&ry);
    let cov = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / rx.len() as f64;
    cov / (sx * sy)
}

/// Seed of the `rep`-th run of the cell at `coords`.
pub fn cell_seed(base: u64, coords: &[f64], rep: usize) -> u64 {
    let mut key: Vec<u64> = coords.iter().map(|c| c.to_bits()).collect();
    key.push(rep as u64);
    SeededRng::derive_seed(base, &key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub coords: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Terminal perturbed DG per seed; `None` when it could not be computed.
    pub dgs: Vec<Option<f64>>,
    pub median_dg: f64,
    pub diverged: Vec<bool>,
}

/// Cells in row-major order over `axes` (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub axes: Vec<(String, Vec<f64>)>,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.1.len()).collect()
    }

    /// Median DG matrix for a two-axis grid, `[i][j]` for axis values `(i, j)`.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let cols = self.axes.last().map_or(1, |a| a.1.len());
        self.cells.chunks(cols).map(|row| row.iter().map(|c| c.median_dg).collect()).collect()
    }

    /// Cell with the smallest median DG (NaN cells ignored).
    pub fn argmin(&self) -> Option<&GridCell> {
        self.cells
            .iter()
            .filter(|c| !c.median_dg.is_nan())
            .min_by(|a, b| a.median_dg.total_cmp(&b.median_dg))
    }

    /// One row per cell: axis values then the median DG.
    pub fn to_table(&self) -> CsvTable {
        let mut header: Vec<&str> = self.axes.iter().map(|a| a.0.as_str()).collect();
        header.push("median_dg");
        let mut t = CsvTable::new(&header);
        for c in &self.cells {
            let mut row: Vec<Cell> = c.coords.iter().map(|&v| v.into()).collect();
            row.push(c.median_dg.into());
            t.rows.push(row);
        }
        t
    }
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!("{name} must be a nonempty list of positive values")));
    }
    Ok(())
}

fn run_grid(
    base: &ScenarioConfig,
    axes: Vec<(String, Vec<f64>)>,
    seeds: usize,
    apply: impl Fn(&mut ScenarioConfig, &[f64]) + Sync,
) -> Result<(GridResult, Vec<RunLog>)> {
    if seeds == 0 {
        return Err(Error::Config("seeds must be >= 1".into()));
    }
    let mut coords: Vec<Vec<f64>> = vec![vec![]];
    for (_, values) in &axes {
        coords = coords
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |&v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    let jobs: Vec<(usize, usize)> = (0..coords.len()).flat_map(|c| (0..seeds).map(move |s| (c, s))).collect();
    let logs: Vec<RunLog> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let mut cfg = base.clone();
            apply(&mut cfg, &coords[c]);
            cfg.seed = cell_seed(base.seed, &coords[c], s);
            run_scenario(&cfg)
        })
        .collect::<Result<_>>()?;
    let cells = coords
        .iter()
        .enumerate()
        .map(|(c, xy)| {
            let runs = &logs[c * seeds..(c + 1) * seeds];
            let dgs: Vec<Option<f64>> = runs.iter().map(RunLog::terminal_perturbed_dg).collect();
            let finite: Vec<f64> = dgs.iter().flatten().copied().collect();
            GridCell {
                coords: xy.clone(),
                seeds: runs.iter().map(|r| r.config.seed).collect(),
                median_dg: median(&finite),
                dgs,
                diverged: runs.iter().map(|r| r.diverged_at.is_some()).collect(),
            }
        })
        .collect();
    Ok((GridResult { axes, cells }, logs))
}

/// Generator × discriminator learning-rate grid. Returns every run's log in
/// cell order alongside the summary.
pub fn lr_grid_search(
    base: &ScenarioConfig,
    g_lrs: &[f64],
    d_lrs: &[f64],
    seeds: usize,
) -> Result<(GridResult, Vec<RunLog>)> {
    check_axis("g_lrs", g_lrs)?;
    check_axis("d_lrs", d_lrs)?;
    let axes = vec![("g_lr".to_string(), g_lrs.to_vec()), ("d_lr".to_string(), d_lrs.to_vec())];
    run_grid(base, axes, seeds, |cfg, c| {
        cfg.g_lr = c[0];
        cfg.d_lr = c[1];
    })
}

/// Both networks rebuilt with two hidden layers of each width.
pub fn capacity_search(base: &ScenarioConfig, widths: &[usize], seeds: usize) -> Result<(GridResult, Vec<RunLog>)> {
    let values: Vec<f64> = widths.iter().map(|&w| w as f64).collect();
    check_axis("hidden widths", &values)?;
    run_grid(base, vec![("hidden".to_string(), values)], seeds, |cfg, c| {
        let w = c[0] as usize;
        cfg.hidden = vec![w, w];
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub sigma: f64,
    pub mean: f64,
    pub std: f64,
    pub dgs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSweep {
    pub points: Vec<SigmaPoint>,
    /// Per-layer radii of the twice-std rule for the generator and discriminator.
    pub gen_reference_radii: Vec<f64>,
    pub disc_reference_radii: Vec<f64>,
}

impl SigmaSweep {
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["sigma", "mean_dg", "std_dg", "trials"]);
        for p in &self.points {
            t.rows.push(vec![p.sigma.into(), p.mean.into(), p.std.into(), p.dgs.len().into()]);
        }
        t
    }
}

/// DG of a trained pair under global radii `sigmas`, `trials` times each.
/// Trial `k` uses the same seed at every σ, so σ = 0 entries coincide.
pub fn sigma_sweep(run: &TrainedRun, base: &DgConfig, sigmas: &[f64], trials: usize, seed: u64) -> Result<SigmaSweep> {
    if sigmas.iter().any(|s| !(*s >= 0.0)) || sigmas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("sigmas must be ascending and >= 0".into()));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let st = &run.state;
    let latent = run.log.config.latent_dim;
    let jobs: Vec<(usize, usize)> = (0..sigmas.len()).flat_map(|i| (0..trials).map(move |k| (i, k))).collect();
    let dgs: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let cfg = DgConfig {
                sigma_rule: SigmaRule::global(sigmas[i]),
                ..*base
            };
            let mut rng = SeededRng::derived(seed, &[k as u64]);
            estimate_dg(&st.gen, &st.disc, &run.data, latent, &cfg, &mut rng).map(|e| e.dg)
        })
        .collect::<Result<_>>()?;
    let points = sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let v = dgs[i * trials..(i + 1) * trials].to_vec();
            let (mean, std) = mean_std(&v);
            SigmaPoint { sigma, mean, std, dgs: v }
        })
        .collect();
    Ok(SigmaSweep {
        points,
        gen_reference_radii: SigmaRule::PerLayerTwiceStd.radii(&st.gen)?,
        disc_reference_radii: SigmaRule::PerLayerTwiceStd.radii(&st.disc)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItersPoint {
    pub aux_iterations: usize,
    pub mean_m1: f64,
    pub mean_m2: f64,
    pub mean_dg: f64,
    pub std_dg: f64,
}

/// Mean M1, M2 and DG at each auxiliary-iteration checkpoint, one
/// optimization per trial.
pub fn iteration_sweep(
    run: &TrainedRun,
    cfg: &DgConfig,
    checkpoints: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ItersPoint>> {
    if trials == 0 || checkpoints.is_empty() {
        return Err(Error::Config("need at least one trial and one checkpoint".into()));
    }
    let st = &run.state;
    let latent = run.log.config.latent_dim;
    let curves: Vec<Vec<(usize, crate::estimate::DgEstimate)>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = SeededRng::derived(seed, &[k as u64]);
            dg_early_stop_curve(&st.gen, &st.disc, &run.data, latent, cfg, checkpoints, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let pick = |f: fn(&crate::estimate::DgEstimate) -> f64| -> Vec<f64> {
                curves.iter().map(|c| f(&c[i].1)).collect()
            };
            let (mean_dg, std_dg) = mean_std(&pick(|e| e.dg));
            ItersPoint {
                aux_iterations: n,
                mean_m1: mean_std(&pick(|e| e.m1)).0,
                mean_m2: mean_std(&pick(|e| e.m2)).0,
                mean_dg,
                std_dg,
            }
        })
        .collect())
}

pub fn iters_table(points: &[ItersPoint]) -> CsvTable {
    let mut t = CsvTable::new(&["aux_iterations", "m1", "m2", "mean_dg", "std_dg"]);
    for p in points {
        t.rows.push(vec![
            p.aux_iterations.into(),
            p.mean_m1.into(),
            p.mean_m2.into(),
            p.mean_dg.into(),
            p.std_dg.into(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingPoint {
    /// Monitoring interval; `None` trains without any DG work.
    pub interval: Option<usize>,
    pub mean_seconds_per_100: f64,
    pub trials: usize,
    /// Loss trajectory of the first trial, for cross-interval comparison.
    pub losses: Vec<(Option<f64>, Option<f64>)>,
}

/// Wall-clock cost per 100 cycles for each monitoring interval. Runs are
/// sequential so timings are not contended. Monitors compute the perturbed
/// estimate and KL only, and no terminal monitor is added.
pub fn timing_overhead(base: &ScenarioConfig, intervals: &[Option<usize>], trials: usize) -> Result<Vec<TimingPoint>> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    if intervals.iter().any(|i| *i == Some(0)) {
        return Err(Error::Config("intervals must be >= 1".into()));
    }
    intervals
        .iter()
        .map(|&interval| {
            let mut cfg = base.clone();
            cfg.dg_interval = interval.unwrap_or(0);
            cfg.dg_at_end = false;
            cfg.monitor_vanilla = false;
            let mut secs = Vec::new();
            let mut losses = Vec::new();
            for k in 0..trials {
                let t0 = std::time::Instant::now();
                let run = train(&cfg)?;
                secs.push(t0.elapsed().as_secs_f64() * 100.0 / cfg.total_iterations as f64);
                if k == 0 {
                    losses = run.log.iterations.iter().map(|r| (r.g_loss, r.d_loss)).collect();
                }
            }
            Ok(TimingPoint {
                interval,
                mean_seconds_per_100: mean_std(&secs).0,
                trials,
                losses,
            })
        })
        .collect()
}

pub fn timing_table(points: &[TimingPoint]) -> CsvTable {
    let mut t = CsvTable::new(&["interval", "seconds_per_100", "trials"]);
    for p in points {
        t.rows.push(vec![p.interval.into(), p.mean_seconds_per_100.into(), p.trials.into()]);
    }
    t
}
