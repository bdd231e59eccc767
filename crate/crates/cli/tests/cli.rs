use std::path::Path;
use std::process::{Command, Output};

fn upstream(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upstream"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn data_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

const SMALL: &str = "
master_seed = 11
[game]
n_agents = 4
[trainer]
episodes = 10
hidden = [16, 16]
batch_size = 16
[evaluation]
episodes = 10
n_firms = [2, 4, 6, 8, 10]
qgrid_sample_episodes = 5
";

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.display().to_string()
}

#[test]
fn train_smoke_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&upstream(
        &["train", "--config", &cfg, "--out", "run"],
        dir.path(),
    ));
    let run = dir.path().join("run");
    assert!(run.join("checkpoint.json").exists());
    assert!(run.join("manifest.json").exists());
    assert_eq!(data_lines(&run.join("training_log.csv")), 10);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&upstream(
        &["train", "--config", &cfg, "--out", "a"],
        dir.path(),
    ));
    ok(&upstream(
        &["train", "--config", &cfg, "--out", "b", "--workers", "3"],
        dir.path(),
    ));
    let read = |d: &str| std::fs::read(dir.path().join(d).join("checkpoint.json")).unwrap();
    assert_eq!(read("a"), read("b"));

    ok(&upstream(
        &["train", "--config", &cfg, "--out", "c", "--stop-after", "4"],
        dir.path(),
    ));
    assert_eq!(data_lines(&dir.path().join("c/training_log.csv")), 4);
    ok(&upstream(
        &[
            "train",
            "--config",
            &cfg,
            "--out",
            "c",
            "--resume",
            "c/checkpoint.json",
        ],
        dir.path(),
    ));
    assert_eq!(data_lines(&dir.path().join("c/training_log.csv")), 10);
}

#[test]
fn resume_with_other_settings_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&upstream(
        &["train", "--config", &cfg, "--out", "a", "--stop-after", "2"],
        dir.path(),
    ));
    let out = upstream(
        &[
            "train",
            "--config",
            &cfg,
            "--out",
            "a",
            "--seed",
            "99",
            "--resume",
            "a/checkpoint.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_writes_tables_traces_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&upstream(
        &["train", "--config", &cfg, "--out", "run"],
        dir.path(),
    ));
    ok(&upstream(
        &[
            "evaluate",
            "--config",
            &cfg,
            "--checkpoint",
            "run/checkpoint.json",
            "--out",
            "ev",
        ],
        dir.path(),
    ));
    let ev = dir.path().join("ev");
    assert_eq!(data_lines(&ev.join("by_competition.csv")), 5);
    assert_eq!(data_lines(&ev.join("distributions.csv")), 10);
    assert_eq!(std::fs::read_dir(ev.join("traces")).unwrap().count(), 10);
    let grid = std::fs::read_to_string(ev.join("qgrid.csv")).unwrap();
    let rows: Vec<&str> = grid.lines().collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.split(',').count() == 100));

    // The manifest alone reproduces every output byte for byte.
    ok(&upstream(
        &[
            "evaluate",
            "--config",
            "ev/manifest.json",
            "--checkpoint",
            "run/checkpoint.json",
            "--out",
            "again",
        ],
        dir.path(),
    ));
    for entry in std::fs::read_dir(&ev).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if name == "manifest.json" || entry.path().is_dir() {
            continue;
        }
        assert_eq!(
            std::fs::read(entry.path()).unwrap(),
            std::fs::read(dir.path().join("again").join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn evaluate_without_checkpoint_uses_random_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&upstream(
        &[
            "evaluate",
            "--config",
            &cfg,
            "--out",
            "ev",
            "--episodes",
            "4",
        ],
        dir.path(),
    ));
    let summary = std::fs::read_to_string(dir.path().join("ev/summary.json")).unwrap();
    assert!(summary.contains("\"Random\""));
    assert!(!dir.path().join("ev/qgrid.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Missing file: I/O.
    let out = upstream(&["train", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    // Unknown key: config.
    std::fs::write(dir.path().join("bad.toml"), "[trainer]\nalpah = 0.1\n").unwrap();
    let out = upstream(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    // Unknown scenario and preset: config.
    assert_eq!(
        upstream(&["train", "--scenario", "boom"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        upstream(&["train", "--preset", "fast"], dir.path())
            .status
            .code(),
        Some(2)
    );
    // Flat price series: numerical.
    let mut csv = String::from("date,price\n");
    for i in 0..40 {
        csv.push_str(&format!("{i},50\n"));
    }
    std::fs::write(dir.path().join("flat.csv"), csv).unwrap();
    let out = upstream(
        &["calibrate", "--prices", "flat.csv", "--out", "cal"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn calibrate_writes_a_config_fragment() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("date,price\n");
    let mut p: f64 = 40.0;
    for i in 0..60 {
        csv.push_str(&format!("{i},{p}\n"));
        // Deterministic mean-reverting path around 60.
        p += 0.4 * (60.0 - p) + 3.0 * ((i as f64) * 1.7).sin();
    }
    std::fs::write(dir.path().join("p.csv"), csv).unwrap();
    ok(&upstream(
        &["calibrate", "--prices", "p.csv", "--out", "cal"],
        dir.path(),
    ));
    let fragment = std::fs::read_to_string(dir.path().join("cal/price_params.toml")).unwrap();
    assert!(fragment.contains("[game.price_params]"));
    // The fragment is a valid run config on its own.
    std::fs::write(dir.path().join("cfg.toml"), &fragment).unwrap();
    ok(&upstream(
        &[
            "evaluate",
            "--config",
            "cfg.toml",
            "--out",
            "ev",
            "--episodes",
            "2",
        ],
        dir.path(),
    ));
}
