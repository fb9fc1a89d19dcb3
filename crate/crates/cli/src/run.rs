use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use dualgap::controller::{
    run_episode, train_controller, wasserstein_task, EpisodeConfig, PolicyNet, Schedule, DEFAULT_TASK_LR,
};
use dualgap::datasets::{sample_mixture, MixtureSpec};
use dualgap::estimate::estimate_dg;
use dualgap::games::GameVariant;
use dualgap::nn::{Network, SeededRng, SigmaRule};
use dualgap::report::{dg_series, metrics_table, samples_table, CsvTable};
use dualgap::search::{
    capacity_search, iteration_sweep, iters_table, lr_grid_search, median, sigma_sweep, timing_overhead,
    timing_table,
};
use dualgap::toygame::{classify_critical, scalar_dg_traced, toy_dg, ToyGame, ToyPoint, DEFAULT_GRAD_TOL};
use dualgap::trainer::{train, GanSession, Scenario, ScenarioConfig, UpdateRatio};
use dualgap::{Error, Result};

use crate::manifest::OutDir;
use crate::opts::*;

pub struct Ctx {
    pub argv: Vec<String>,
    pub file: Option<Value>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn resolve_seed(io: &OutArgs) -> Result<u64> {
    if let Some(s) = io.seed {
        return Ok(s);
    }
    match std::env::var("DUALGAP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config_err(format!("DUALGAP_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn out_dir(io: &OutArgs) -> PathBuf {
    io.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn dataset(name: Option<&str>, default: &str) -> Result<MixtureSpec> {
    let name = name.unwrap_or(default);
    MixtureSpec::by_name(name)
        .ok_or_else(|| config_err(format!("unknown dataset {name:?}; valid datasets: ring, grid, spiral")))
}

fn variant(name: Option<&str>, clip_c: Option<f64>) -> Result<GameVariant> {
    match name.unwrap_or("classic") {
        "classic" => Ok(GameVariant::Classic),
        "ns" => Ok(GameVariant::NonSaturating),
        "wasserstein" => Ok(GameVariant::WassersteinClipped {
            clip_c: clip_c.unwrap_or(0.01),
        }),
        other => Err(config_err(format!("unknown gan {other:?}; valid: classic, ns, wasserstein"))),
    }
}

/// Preset for the named scenario with every given flag applied on top.
fn scenario_config(a: &ScenarioArgs, seed: u64) -> Result<ScenarioConfig> {
    let scenario: Scenario = a.scenario.as_deref().unwrap_or("convergence").parse()?;
    let v = variant(a.gan.as_deref(), a.clip_c)?;
    let ds = dataset(a.dataset.as_deref(), "ring")?;
    let mut cfg = match v {
        GameVariant::WassersteinClipped { .. } => ScenarioConfig::base(v, ds),
        _ => ScenarioConfig::preset(scenario, v, ds)?,
    };
    cfg.seed = seed;
    if let Some(n) = a.iterations {
        cfg.total_iterations = n;
    }
    if let Some(n) = a.batch_size {
        cfg.batch_size = n;
        cfg.dg_cfg.batch_size = n;
    }
    if let Some(n) = a.latent_dim {
        cfg.latent_dim = n;
    }
    if let Some(h) = &a.hidden {
        cfg.hidden = h.clone();
    }
    if let Some(lr) = a.g_lr {
        cfg.g_lr = lr;
    }
    if let Some(lr) = a.d_lr {
        cfg.d_lr = lr;
    }
    if let Some(r) = &a.ratio {
        cfg.update_ratio = r.parse::<UpdateRatio>()?;
    }
    if let Some(n) = a.dg_interval {
        cfg.dg_interval = n;
    }
    if let Some(n) = a.aux_iters {
        cfg.dg_cfg.aux_iterations = n;
    }
    if let Some(lr) = a.aux_lr {
        cfg.dg_cfg.aux_lr = lr;
    }
    if let Some(s) = a.sigma {
        cfg.dg_cfg.sigma_rule = SigmaRule::global(s);
    }
    if let Some(n) = a.eval_batches {
        cfg.dg_cfg.eval_batches = n;
    }
    if let Some(s) = &a.splits {
        let [a, b, c] = s[..] else {
            return Err(config_err("splits needs exactly three sizes"));
        };
        cfg.split_sizes = [a, b, c];
    }
    if let Some(n) = a.eval_samples {
        cfg.eval_samples = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_point(s: Option<&str>) -> Result<ToyPoint> {
    let s = s.ok_or_else(|| config_err("--point x,y is required"))?;
    let bad = || config_err(format!("point must look like x,y, got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    let p = ToyPoint::new(x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?);
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(bad());
    }
    Ok(p)
}

fn finish(out: OutDir, ctx: &Ctx, config: &impl Serialize, seed: u64) -> Result<()> {
    let m = out.finish(ctx.argv.clone(), serde_json::to_value(config)?, seed)?;
    eprintln!("wrote {} files, content hash {}", m.outputs.len(), &m.content_hash[..12]);
    Ok(())
}

fn load_network(path: &Path) -> Result<Network> {
    let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Network::from_json(&s)
}

pub fn toygame(ctx: &Ctx, cmd: &ToyCommand) -> Result<()> {
    let (args, sweep) = match cmd {
        ToyCommand::Analyze(a) => (merge(a, ctx.file.as_ref())?, false),
        ToyCommand::Sweep(a) => (merge(a, ctx.file.as_ref())?, true),
    };
    let p = parse_point(args.point.as_deref())?;
    let seed = resolve_seed(&args.io)?;
    let sigma = args.sigma.unwrap_or(0.01);
    let lr = args.lr.unwrap_or(5e-4);
    let iters = args.iters.unwrap_or(500);
    if sweep {
        let mut out = OutDir::create(&out_dir(&args.io))?;
        let mut summary = serde_json::Map::new();
        for (name, s) in [("vanilla", 0.0), ("perturbed", sigma)] {
            let t = scalar_dg_traced(&ToyGame, p, s, lr, iters, &mut SeededRng::new(seed))?;
            for (side, path) in [("max", &t.max_path), ("min", &t.min_path)] {
                let mut table = CsvTable::new(&["step", "x", "y", "f"]);
                for &(step, x, y, f) in path {
                    table.rows.push(vec![step.into(), x.into(), y.into(), f.into()]);
                }
                out.write_csv(&format!("{name}_{side}.csv"), &table)?;
            }
            summary.insert(name.into(), serde_json::to_value(t.estimate)?);
        }
        out.write_json("summary.json", &summary)?;
        return finish(out, ctx, &args, seed);
    }
    let n = args.seeds.unwrap_or(100);
    if n == 0 {
        return Err(config_err("seeds must be >= 1"));
    }
    let report = classify_critical(p, args.grad_tol.unwrap_or(DEFAULT_GRAD_TOL));
    let vanilla = toy_dg(p, 0.0, lr, iters, &mut SeededRng::new(seed))?;
    let dgs: Vec<f64> = (0..n)
        .map(|k| toy_dg(p, sigma, lr, iters, &mut SeededRng::derived(seed, &[k as u64])).map(|e| e.dg))
        .collect::<Result<_>>()?;
    let mean = dgs.iter().sum::<f64>() / n as f64;
    let doc = json!({
        "report": report,
        "value": dualgap::toygame::toy_value(p),
        "settings": {"sigma": sigma, "lr": lr, "iters": iters, "seeds": n},
        "vanilla": vanilla,
        "perturbed": {
            "mean": mean,
            "median": median(&dgs),
            "min": dgs.iter().copied().fold(f64::INFINITY, f64::min),
            "max": dgs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "fraction_above_1": dgs.iter().filter(|d| **d > 1.0).count() as f64 / n as f64,
        },
    });
    // A closed pipe (e.g. `| head`) is not an error for a report.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&doc)?);
    if args.io.out.is_some() {
        let mut out = OutDir::create(&out_dir(&args.io))?;
        out.write_json("analyze.json", &doc)?;
        finish(out, ctx, &args, seed)?;
    }
    Ok(())
}

pub fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let args = merge(a, ctx.file.as_ref())?;
    let seed = resolve_seed(&args.io)?;
    let cfg = scenario_config(&args.scenario, seed)?;
    let mut out = OutDir::create(&out_dir(&args.io))?;
    let run = train(&cfg)?;
    out.write("run.json", &(run.log.to_json()? + "\n"))?;
    out.write_csv("metrics.csv", &metrics_table(&run.log))?;
    out.write_csv("dg.csv", &dg_series(&run.log))?;
    out.write("gen.json", &run.state.gen.to_json()?)?;
    out.write("disc.json", &run.state.disc.to_json()?)?;
    if let Some(m) = run.log.terminal() {
        eprintln!(
            "iteration {}: vanilla {:?} perturbed {:?} kl {:?} modes {:?}",
            m.iteration,
            m.vanilla.map(|e| e.dg),
            m.perturbed.map(|e| e.dg),
            m.kl,
            m.modes_covered
        );
    }
    finish(out, ctx, &json!({"args": args, "resolved": cfg}), seed)
}

pub fn dg_cmd(ctx: &Ctx, a: &DgArgs) -> Result<()> {
    let args = merge(a, ctx.file.as_ref())?;
    let seed = resolve_seed(&args.io)?;
    let gen = load_network(args.gen.as_deref().ok_or_else(|| config_err("--gen is required"))?)?;
    let disc = load_network(args.disc.as_deref().ok_or_else(|| config_err("--disc is required"))?)?;
    let mut cfg = scenario_config(&args.scenario, args.data_seed.unwrap_or(seed))?;
    cfg.latent_dim = gen.input_dim();
    let data = GanSession::new(cfg.clone())?.data;
    let trials = args.trials.unwrap_or(1);
    let mut table = CsvTable::new(&["trial", "m1", "m2", "dg", "variant"]);
    for k in 0..trials {
        for (name, dcfg) in [("vanilla", cfg.dg_cfg.vanilla()), ("perturbed", cfg.dg_cfg)] {
            let mut rng = SeededRng::derived(seed, &[k as u64]);
            let e = estimate_dg(&gen, &disc, &data, cfg.latent_dim, &dcfg, &mut rng)?;
            table.rows.push(vec![k.into(), e.m1.into(), e.m2.into(), e.dg.into(), name.into()]);
        }
    }
    let mut out = OutDir::create(&out_dir(&args.io))?;
    out.write_csv("dg.csv", &table)?;
    finish(out, ctx, &json!({"args": args, "dg_cfg": cfg.dg_cfg}), seed)
}

fn parse_axis(s: &str) -> Result<(String, Vec<f64>)> {
    let bad = || config_err(format!("axis must look like name=v1,v2,..., got {s:?}"));
    let (name, values) = s.split_once('=').ok_or_else(bad)?;
    let v = values
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    Ok((name.trim().to_string(), v))
}

pub fn grid_cmd(ctx: &Ctx, a: &GridArgs) -> Result<()> {
    let args = merge(a, ctx.file.as_ref())?;
    let seed = resolve_seed(&args.io)?;
    let mut base = scenario_config(&args.scenario, seed)?;
    if args.scenario.dg_interval.is_none() {
        base.dg_interval = 0;
    }
    let axes = args
        .axes
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|s| parse_axis(s))
        .collect::<Result<Vec<_>>>()?;
    let seeds = args.seeds.unwrap_or(3);
    let names: Vec<&str> = axes.iter().map(|a| a.0.as_str()).collect();
    let find = |n: &str| axes.iter().find(|a| a.0 == n).map(|a| a.1.clone());
    let (grid, logs) = match names.as_slice() {
        ["hidden"] => {
            let widths: Vec<usize> = find("hidden").unwrap().iter().map(|&w| w as usize).collect();
            if widths.iter().zip(find("hidden").unwrap()).any(|(&w, v)| w as f64 != v) {
                return Err(config_err("hidden widths must be whole numbers"));
            }
            capacity_search(&base, &widths, seeds)?
        }
        n if !n.is_empty() && n.iter().all(|x| *x == "g_lr" || *x == "d_lr") && n.len() <= 2 => {
            let g = find("g_lr").unwrap_or(vec![base.g_lr]);
            let d = find("d_lr").unwrap_or(vec![base.d_lr]);
            lr_grid_search(&base, &g, &d, seeds)?
        }
        _ => {
            return Err(config_err(
                "give --axis g_lr=... and/or --axis d_lr=..., or a single --axis hidden=...",
            ))
        }
    };
    let mut out = OutDir::create(&out_dir(&args.io))?;
    out.write_csv("grid.csv", &grid.to_table())?;
    out.write_json("grid.json", &grid)?;
    let mut per_run = CsvTable::new(&["cell", "seed", "terminal_dg_perturbed", "terminal_dg_vanilla", "kl"]);
    let per_cell = logs.len() / grid.cells.len().max(1);
    for (i, log) in logs.iter().enumerate() {
        per_run.rows.push(vec![
            (i / per_cell.max(1)).into(),
            (log.config.seed as usize).into(),
            log.terminal_perturbed_dg().into(),
            log.terminal_vanilla_dg().into(),
            log.terminal_kl().into(),
        ]);
    }
    out.write_csv("runs.csv", &per_run)?;
    finish(out, ctx, &json!({"args": args, "base": base}), seed)
}

pub fn ablate(ctx: &Ctx, cmd: &AblateCommand) -> Result<()> {
    match cmd {
        AblateCommand::Sigma(a) => {
            let args = merge(a, ctx.file.as_ref())?;
            let seed = resolve_seed(&args.io)?;
            let mut cfg = scenario_config(&args.scenario, seed)?;
            cfg.dg_interval = 0;
            cfg.dg_at_end = false;
            let sigmas = args
                .sigmas
                .clone()
                .unwrap_or_else(|| vec![0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.25, 0.5]);
            let run = train(&cfg)?;
            let sweep = sigma_sweep(&run, &cfg.dg_cfg, &sigmas, args.trials.unwrap_or(10), seed)?;
            let mut out = OutDir::create(&out_dir(&args.io))?;
            out.write_csv("sigma.csv", &sweep.to_table())?;
            out.write_json("sigma.json", &sweep)?;
            finish(out, ctx, &json!({"args": args, "resolved": cfg}), seed)
        }
        AblateCommand::Iters(a) => {
            let args = merge(a, ctx.file.as_ref())?;
            let seed = resolve_seed(&args.io)?;
            let mut cfg = scenario_config(&args.scenario, seed)?;
            cfg.dg_interval = 0;
            cfg.dg_at_end = false;
            let checkpoints = args
                .checkpoints
                .clone()
                .unwrap_or_else(|| (1..=8).map(|i| i * 50).collect());
            let run = train(&cfg)?;
            let pts = iteration_sweep(&run, &cfg.dg_cfg, &checkpoints, args.trials.unwrap_or(10), seed)?;
            let mut out = OutDir::create(&out_dir(&args.io))?;
            out.write_csv("iters.csv", &iters_table(&pts))?;
            finish(out, ctx, &json!({"args": args, "resolved": cfg}), seed)
        }
        AblateCommand::Interval(a) => {
            let args = merge(a, ctx.file.as_ref())?;
            let seed = resolve_seed(&args.io)?;
            let mut cfg = scenario_config(&args.scenario, seed)?;
            if args.scenario.aux_iters.is_none() {
                cfg.dg_cfg.aux_iterations = 200;
            }
            let intervals = args
                .intervals
                .clone()
                .unwrap_or_else(|| ["200", "500", "1000", "2000", "never"].map(String::from).to_vec())
                .iter()
                .map(|s| match s.trim() {
                    "never" => Ok(None),
                    v => v
                        .parse::<usize>()
                        .map(Some)
                        .map_err(|_| config_err(format!("interval must be a count or 'never', got {v:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let pts = timing_overhead(&cfg, &intervals, args.trials.unwrap_or(5))?;
            let mut out = OutDir::create(&out_dir(&args.io))?;
            out.write_csv("interval.csv", &timing_table(&pts))?;
            finish(out, ctx, &json!({"args": args, "resolved": cfg}), seed)
        }
    }
}

fn episode_config(e: &EpisodeArgs) -> Result<EpisodeConfig> {
    let mut c = EpisodeConfig::default();
    if let Some(k) = e.k {
        c.k = k;
    }
    if let Some(n) = e.dg_every {
        c.dg_every = n;
    }
    if let Some(v) = e.alpha {
        c.alpha = v;
    }
    if let Some(v) = e.epsilon {
        c.epsilon = v;
    }
    if let Some(n) = e.collapse_window {
        c.collapse_window = n;
    }
    if let Some(v) = e.policy_lr {
        c.policy_lr = v;
    }
    c.validate()?;
    Ok(c)
}

fn task_config(name: Option<&str>, default: &str, e: &EpisodeArgs, seed: u64) -> Result<ScenarioConfig> {
    let mut t = wasserstein_task(dataset(name, default)?, e.task_lr.unwrap_or(DEFAULT_TASK_LR), seed);
    if let Some(n) = e.batch_size {
        t.batch_size = n;
    }
    if let Some(h) = &e.hidden {
        t.hidden = h.clone();
    }
    if let Some(n) = e.latent_dim {
        t.latent_dim = n;
    }
    t.validate()?;
    Ok(t)
}

pub fn controller(ctx: &Ctx, cmd: &ControllerCommand) -> Result<()> {
    match cmd {
        ControllerCommand::Train(a) => {
            let args = merge(a, ctx.file.as_ref())?;
            let seed = resolve_seed(&args.io)?;
            let ecfg = episode_config(&args.episode)?;
            let task = task_config(args.task.as_deref(), "ring", &args.episode, seed)?;
            let (policy, summaries) = train_controller(&task, args.episodes.unwrap_or(20), &ecfg, seed)?;
            let mut out = OutDir::create(&out_dir(&args.io))?;
            out.write("policy.json", &policy.net.to_json()?)?;
            let mut t = CsvTable::new(&["episode", "seed", "reward", "iterations", "final_kl", "collapsed"]);
            for s in &summaries {
                t.rows.push(vec![
                    s.episode.into(),
                    (s.seed as usize).into(),
                    s.reward.into(),
                    s.iterations.into(),
                    s.final_kl.into(),
                    (s.collapsed as usize).into(),
                ]);
            }
            out.write_csv("episodes.csv", &t)?;
            finish(out, ctx, &json!({"args": args, "episode": ecfg, "task": task}), seed)
        }
        ControllerCommand::Run(a) => {
            let args = merge(a, ctx.file.as_ref())?;
            let seed = resolve_seed(&args.io)?;
            let ecfg = episode_config(&args.episode)?;
            let task = task_config(args.task.as_deref(), "grid", &args.episode, seed)?;
            let policy = match (&args.policy, &args.fixed) {
                (Some(p), None) => Some(PolicyNet::from_network(load_network(p)?, ecfg.policy_lr)?),
                (None, Some(_)) => None,
                _ => return Err(config_err("give exactly one of --policy or --fixed")),
            };
            let schedule = match (&policy, &args.fixed) {
                (Some(p), _) => Schedule::Policy(p),
                (None, Some(r)) => Schedule::Fixed(r.parse()?),
                _ => unreachable!(),
            };
            let ep = run_episode(schedule, &task, &ecfg, seed)?;
            let mut out = OutDir::create(&out_dir(&args.io))?;
            out.write("run.json", &(ep.log.to_json()? + "\n"))?;
            out.write_csv("metrics.csv", &metrics_table(&ep.log))?;
            for r in args.resolution.clone().unwrap_or_else(|| vec![100, 500, 1000]) {
                out.write_csv(&format!("actions_{r}.csv"), &ep.action_frequencies(r)?)?;
            }
            eprintln!(
                "final kl {:?}, first kl < 0.5 at {:?}, reward {}",
                ep.final_kl(),
                ep.first_kl_below(0.5),
                ep.reward
            );
            finish(out, ctx, &json!({"args": args, "episode": ecfg, "task": task}), seed)
        }
    }
}

pub fn datasets(ctx: &Ctx, a: &DatasetArgs) -> Result<()> {
    let args = merge(a, ctx.file.as_ref())?;
    let seed = resolve_seed(&args.io)?;
    let spec = dataset(args.dataset.as_deref(), "ring")?;
    let x = sample_mixture(&spec, args.samples.unwrap_or(1000), &mut SeededRng::new(seed));
    let mut out = OutDir::create(&out_dir(&args.io))?;
    out.write_csv("samples.csv", &samples_table(x.view())?)?;
    finish(out, ctx, &json!({"args": args, "spec": spec}), seed)
}
