//! End-to-end tests of the command-line interface, driving the real
//! binary through temporary directories.

use std::path::Path;
use std::process::{Command, Output};

fn housenav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_housenav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = housenav(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn gen_floorplans_is_deterministic_and_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    ok(&["gen-floorplans", "--house", "mini", "--out", a.to_str().unwrap()]);
    ok(&["gen-floorplans", "--house", "mini", "--out", b.to_str().unwrap()]);

    let text = read(&a);
    assert_eq!(text, read(&b), "same seed must give identical plan files");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("housenav-plans v1"));
    let head: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(head[0], "house");
    assert_eq!(head[1], "mini");
    let n: usize = head[3].parse().unwrap();
    assert_eq!(lines.count(), n, "one line per plan");

    // The split file exists, is identical across runs, and is disjoint.
    let split = read(&dir.path().join("a.split.txt"));
    assert_eq!(split, read(&dir.path().join("b.split.txt")));
    assert!(split.starts_with("housenav-split v1\n"));
    let ids = |tag: &str| -> Vec<u32> {
        split
            .lines()
            .find(|l| l.starts_with(tag))
            .unwrap()
            .split('\t')
            .nth(1)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect()
    };
    let (train, holdout) = (ids("train"), ids("holdout"));
    assert_eq!(train.len() + holdout.len(), n);
    assert!(train.iter().all(|i| !holdout.contains(i)));

    // The manifest reaches every artifact the run wrote.
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("a.txt.manifest.json"))).unwrap();
    assert_eq!(manifest["format"], "housenav-manifest");
    assert_eq!(manifest["subcommand"], "gen-floorplans");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let outputs: Vec<String> =
        manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert!(outputs.iter().any(|o| o.ends_with("a.txt")));
    assert!(outputs.iter().any(|o| o.ends_with("a.split.txt")));
}

#[test]
fn config_violations_fail_with_one_line_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = housenav(&[
        "--set",
        "rl.gamma=1.5",
        "gen-floorplans",
        "--out",
        dir.path().join("p.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "stderr must be a single line: {stderr}");
    assert!(stderr.starts_with("error[config]: rl.gamma:"), "got: {stderr}");

    // Typos in override keys are named too.
    let out = housenav(&[
        "--set",
        "rl.gama=0.5",
        "gen-floorplans",
        "--out",
        dir.path().join("q.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rl.gama"));
}

#[test]
fn unknown_subcommands_and_flags_are_usage_errors() {
    assert_eq!(housenav(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(housenav(&["gen-floorplans", "--frazzle"]).status.code(), Some(2));
}

#[test]
fn config_file_loads_and_cli_overrides_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[rl]\ngamma = 1.5\n").unwrap();
    let plan = dir.path().join("p.txt");

    // The bad file value fails validation...
    let out = housenav(&["--config", cfg.to_str().unwrap(), "gen-floorplans", "--out", plan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rl.gamma"));

    // ...and a command-line override replaces it.
    ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "rl.gamma=0.9",
        "gen-floorplans",
        "--out",
        plan.to_str().unwrap(),
    ]);
    assert!(plan.exists());
}

#[test]
fn dump_obs_writes_a_deterministic_pixmap() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ppm");
    let b = dir.path().join("b.ppm");
    for p in [&a, &b] {
        ok(&[
            "dump-obs",
            "--house",
            "mini",
            "--goal",
            "red ball",
            "--seed",
            "5",
            "--out",
            p.to_str().unwrap(),
        ]);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(bytes.starts_with(b"P6\n64 64\n255\n"));
    assert_eq!(bytes.len(), "P6\n64 64\n255\n".len() + 64 * 64 * 3);
}

#[test]
fn bad_goal_and_bad_house_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("o.ppm");
    let out = housenav(&["dump-obs", "--goal", "mauve dodecahedron", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[usage]:"));
    let out = housenav(&["dump-obs", "--house", "mansion", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_checkpoints_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = housenav(&[
        "eval",
        "--agent",
        dir.path().join("nope.ckpt").to_str().unwrap(),
        "--out",
        dir.path().join("ev").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[ckpt]:"));

    // Declaring a learned cue source without supplying the policy fails.
    let out = housenav(&[
        "compose",
        "--controller",
        dir.path().join("nope.ckpt").to_str().unwrap(),
        "--enhance",
        "meta",
        "--out",
        dir.path().join("c.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

/// Tiny end-to-end pipeline on the small house: train, compose, evaluate,
/// classify failures, and plot, checking every artifact exists and parses.
#[test]
fn pipeline_runs_end_to_end_on_the_small_house() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl_dir = dir.path().join("ctrl");
    ok(&[
        "train-controller",
        "--house",
        "mini",
        "--out",
        ctrl_dir.to_str().unwrap(),
        "--set",
        "training.max_env_steps=1200",
        "--set",
        "training.n_workers=2",
        "--set",
        "training.eval_every=1200",
        "--set",
        "training.eval_episodes=2",
        "--set",
        "environment.max_steps=60",
        "--set",
        "rl.t_roll=16",
    ]);
    let ckpt = ctrl_dir.join("controller.ckpt");
    assert!(ckpt.exists());
    let metrics = read(&ctrl_dir.join("metrics.csv"));
    assert!(metrics.starts_with("env_steps,updates,eval_metric,"));
    assert!(metrics.lines().count() >= 2, "at least one evaluation row");
    assert!(ctrl_dir.join("manifest.json").exists());

    let composed = dir.path().join("composed.ckpt");
    ok(&[
        "compose",
        "--controller",
        ckpt.to_str().unwrap(),
        "--out",
        composed.to_str().unwrap(),
    ]);

    let eval_dir = dir.path().join("eval");
    let stdout = ok(&[
        "eval",
        "--agent",
        composed.to_str().unwrap(),
        "--house",
        "mini",
        "--split",
        "train",
        "--out",
        eval_dir.to_str().unwrap(),
        "--set",
        "eval.n_runs=1",
        "--set",
        "eval.n_episodes=4",
        "--set",
        "eval.max_steps=50",
    ]);
    assert!(stdout.contains("success rate"), "summary line: {stdout}");
    let report = read(&eval_dir.join("report.csv"));
    assert!(report.starts_with("objects,environment,runs,episodes,success_rate,"));
    assert_eq!(report.lines().count(), 2, "header plus one row");
    let traces: Vec<_> = std::fs::read_dir(eval_dir.join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 4, "one trace per episode");

    let failures = dir.path().join("failures.csv");
    let stdout = ok(&[
        "classify-failures",
        "--traces",
        eval_dir.join("traces").to_str().unwrap(),
        "--out",
        failures.to_str().unwrap(),
    ]);
    assert!(stdout.contains("4 traces"));
    assert_eq!(read(&failures).lines().count(), 5, "header plus one row per trace");

    for (kind, args, out_name) in [
        ("sr", vec!["--reports", eval_dir.join("report.csv").to_str().unwrap()], "sr.svg"),
        ("failures", vec!["--reports", eval_dir.join("report.csv").to_str().unwrap()], "f.svg"),
        ("curves", vec!["--metrics", ctrl_dir.join("metrics.csv").to_str().unwrap()], "c.svg"),
    ] {
        let out_path = dir.path().join(out_name);
        let mut full = vec!["plot", "--kind", kind];
        full.extend(args);
        full.extend(["--out", out_path.to_str().unwrap()]);
        ok(&full);
        let svg = read(&out_path);
        assert!(svg.starts_with("<svg "), "{kind} plot is an svg");
        assert!(svg.contains("housenav-plot v1"), "{kind} plot is versioned");
        assert!(svg.ends_with("</svg>\n"));
    }
}
