use std::path::Path;
use std::process::{Command, Output};

fn dualgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualgap"))
        .args(args)
        .env_remove("DUALGAP_SEED")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

const TINY: &[&str] = &[
    "--iterations", "20", "--batch-size", "16", "--hidden", "8,8", "--latent-dim", "4",
    "--splits", "256,128,128", "--eval-samples", "256", "--dg-interval", "10",
    "--aux-iters", "5", "--eval-batches", "2",
];

#[test]
fn toygame_analyze_prints_json() {
    let out = dualgap(&["toygame", "analyze", "--point", "0,0", "--seeds", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["classification"], "non_nash");
    assert!(v["vanilla"]["dg"].as_f64().unwrap().abs() < 1e-2);
}

#[test]
fn negative_points_parse() {
    let out = dualgap(&["toygame", "analyze", "--point", "-12.43373,-8.78737", "--seeds", "1"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let out = dualgap(&["train", "--scenario", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for s in ["convergence", "collapse", "divergence"] {
        assert!(err.contains(s), "{err}");
    }
}

#[test]
fn usage_error_exits_two_and_help_exits_zero() {
    assert_eq!(dualgap(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(dualgap(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let mut args = vec!["train", "--out", o, "--seed", "3"];
    args.extend_from_slice(TINY);
    let out = dualgap(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["run.json", "metrics.csv", "dg.csv", "gen.json", "disc.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert!(read(dir.path(), "dg.csv").starts_with("iteration,m1,m2,dg,variant\n"));
    let m: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(m["seed"], 3);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5);

    // Saved networks feed the dg command.
    let dg_dir = dir.path().join("dg");
    let (g, d) = (dir.path().join("gen.json"), dir.path().join("disc.json"));
    let mut args = vec!["dg", "--out", dg_dir.to_str().unwrap(), "--gen", g.to_str().unwrap()];
    args.extend_from_slice(&["--disc", d.to_str().unwrap(), "--data-seed", "3", "--trials", "2"]);
    args.extend_from_slice(&TINY[2..]);
    let out = dualgap(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&dg_dir, "dg.csv").lines().count(), 5);
}

#[test]
fn same_seed_gives_identical_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let mut args = vec!["train", "--out", d.path().to_str().unwrap(), "--seed", "5"];
        args.extend_from_slice(TINY);
        assert_eq!(dualgap(&args).status.code(), Some(0));
    }
    for f in ["metrics.csv", "dg.csv", "run.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn seed_comes_from_environment_when_flag_absent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |d: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dualgap"));
        c.args(["datasets", "-n", "20", "--out", d.to_str().unwrap()]).env_remove("DUALGAP_SEED");
        if let Some(s) = env {
            c.env("DUALGAP_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        assert!(c.status().unwrap().success());
    };
    run(a.path(), Some("9"), None);
    run(b.path(), None, Some("9"));
    assert_eq!(read(a.path(), "samples.csv"), read(b.path(), "samples.csv"));
    run(b.path(), None, None);
    assert_ne!(read(a.path(), "samples.csv"), read(b.path(), "samples.csv"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dataset": "grid", "samples": 7, "seed": 1}"#).unwrap();
    let out_dir = dir.path().join("o");
    let args = ["--config", cfg.to_str().unwrap(), "datasets", "-n", "4", "--out", out_dir.to_str().unwrap()];
    assert_eq!(dualgap(&args).status.code(), Some(0));
    assert_eq!(read(&out_dir, "samples.csv").lines().count(), 5);
    let m: serde_json::Value = serde_json::from_str(&read(&out_dir, "manifest.json")).unwrap();
    assert_eq!(m["config"]["spec"]["kind"], "grid");

    std::fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    assert_eq!(dualgap(&args).status.code(), Some(2));
}

#[test]
fn controller_fixed_schedule_writes_action_tables() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "controller", "run", "--fixed", "1:5", "--k", "40", "--dg-every", "20", "--batch-size", "16",
        "--hidden", "8,8", "--latent-dim", "4", "--resolution", "10", "--out", dir.path().to_str().unwrap(),
    ];
    let out = dualgap(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let t = read(dir.path(), "actions_10.csv");
    assert!(t.starts_with("interval,resolution,freq_G,freq_D\n"));
    assert_eq!(t.lines().count(), 5);
}
