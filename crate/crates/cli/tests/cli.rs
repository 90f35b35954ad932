use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geomcp::{load_csv, ScenarioSpec};

fn geomcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geomcp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = geomcp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn changepoints(csv: &Path) -> Vec<usize> {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn detect_recovers_simulated_changes() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let det = dir.path().join("det");
    ok(&["simulate", "--n", "400", "--p", "60", "--theta", "2", "--m", "3", "--seed", "11", "--out", p(&sim)]);
    let out = ok(&["detect", p(&sim.join("data.csv")), "--out", p(&det)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("reconciled changepoints"));

    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(sim.join("truth.json")).unwrap()).unwrap();
    let truth: Vec<usize> = serde_json::from_value(truth["true_cpts"].clone()).unwrap();
    let found = changepoints(&det.join("changepoints.csv"));
    assert_eq!(truth.len(), 3);
    assert_eq!(found.len(), truth.len(), "found {found:?}, truth {truth:?}");
    for (t, f) in truth.iter().zip(&found) {
        assert!(t.abs_diff(*f) <= 10, "found {found:?}, truth {truth:?}");
    }
    assert!(det.join("changepoints.json").exists() && det.join("report.txt").exists());
}

#[test]
fn null_data_gives_empty_changepoint_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut quiet = 0;
    for seed in 0..5 {
        let sim = dir.path().join(format!("sim{seed}"));
        let det = dir.path().join(format!("det{seed}"));
        ok(&["simulate", "--n", "200", "--p", "30", "--m", "0", "--seed", &seed.to_string(), "--out", p(&sim)]);
        ok(&["detect", p(&sim.join("data.csv")), "--out", p(&det)]);
        quiet += usize::from(changepoints(&det.join("changepoints.csv")).is_empty());
    }
    assert!(quiet >= 4, "only {quiet} of 5 null runs were empty");
}

#[test]
fn identical_seeds_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let sim = dir.path().join(format!("sim{tag}"));
        let eval = dir.path().join(format!("eval{tag}"));
        ok(&["simulate", "--n", "150", "--p", "20", "--seed", "3", "--kind", "mean_and_variance", "--out", p(&sim)]);
        ok(&["evaluate", "--n", "150", "--p", "20", "--seed", "3", "--reps", "4", "--out", p(&eval)]);
        ["sim/data.csv", "sim/truth.json", "eval/replications.csv", "eval/summary.csv", "eval/summary.json"]
            .map(|f| {
                let (d, name) = f.split_once('/').unwrap();
                fs::read(dir.path().join(format!("{d}{tag}")).join(name)).unwrap()
            })
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn simulated_csv_loads_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--n", "80", "--p", "7", "--seed", "9", "--out", p(dir.path())]);
    let loaded = load_csv(dir.path().join("data.csv")).unwrap();
    let spec = ScenarioSpec {
        n: 80,
        p: 7,
        seed: 9,
        ..Default::default()
    };
    let (m, _) = geomcp::generate(&spec, &mut geomcp::replication_rng(9, 0)).unwrap();
    assert_eq!((loaded.n(), loaded.p()), (80, 7));
    for t in 0..80 {
        for j in 0..7 {
            assert_eq!(loaded.get(t, j).to_bits(), m.get(t, j).to_bits());
        }
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[detection]\npenalty = \"manual:1e9\"\n[scenario]\nn = 300\np = 40\ntheta = 3\nseed = 2\n").unwrap();
    let sim = dir.path().join("sim");
    ok(&["--config", p(&cfg), "simulate", "--out", p(&sim)]);
    assert_eq!(load_csv(sim.join("data.csv")).unwrap().n(), 300);

    let data = sim.join("data.csv");
    let huge = ok(&["--config", p(&cfg), "detect", p(&data)]);
    assert_eq!(String::from_utf8_lossy(&huge.stdout), "index,source\n");
    let mbic = ok(&["--config", p(&cfg), "detect", p(&data), "--penalty", "mbic"]);
    assert!(String::from_utf8_lossy(&mbic.stdout).lines().count() > 1);
}

#[test]
fn crops_and_validate_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--n", "200", "--p", "30", "--theta", "2", "--m", "2", "--seed", "5", "--out", p(&sim)]);
    let cr = dir.path().join("crops");
    ok(&["crops", p(&sim.join("data.csv")), "--out", p(&cr)]);
    for f in ["crops_distance.csv", "crops_angle.csv"] {
        let text = fs::read_to_string(cr.join(f)).unwrap();
        assert!(text.starts_with("m,Q,beta_lo,beta_hi,elbow_flag\n"));
        assert_eq!(text.lines().filter(|l| l.ends_with(",1")).count(), 1);
    }
    assert!(cr.join("crops.json").exists());

    let val = dir.path().join("val");
    ok(&["validate", "--p", "20", "--reps", "200", "--out", p(&val)]);
    assert_eq!(fs::read_to_string(val.join("validation.csv")).unwrap().lines().count(), 8);
}

#[test]
fn bench_produces_timing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["bench", "--n", "200", "--p", "10,20", "--reps", "2", "--out", p(dir.path())]);
    let text = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert!(text.starts_with("n,p,rep,seconds\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("time grows as p^"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    };

    let ragged = write("ragged.csv", "1,2\n3\n4,5\n");
    let out = geomcp(&["detect", p(&ragged)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let bad_cell = write("cell.csv", "a,b\n1,2\n3,x\n");
    assert_eq!(geomcp(&["detect", p(&bad_cell)]).status.code(), Some(2));
    assert_eq!(geomcp(&["detect", p(&dir.path().join("missing.csv"))]).status.code(), Some(2));

    let fine = write("fine.csv", &(0..40).map(|i| format!("{i},{}\n", i % 3)).collect::<String>());
    assert_eq!(geomcp(&["detect", p(&fine), "--penalty", "bic"]).status.code(), Some(3));
    assert_eq!(geomcp(&["detect", p(&fine), "--cost", "laplace"]).status.code(), Some(3));
    assert_eq!(geomcp(&["simulate", "--kappa", "0"]).status.code(), Some(3));
    assert_eq!(geomcp(&["detect"]).status.code(), Some(3));
    assert_eq!(geomcp(&["--threads", "0", "bench"]).status.code(), Some(3));

    let bad_cfg = write("bad.toml", "nonsense = true\n");
    assert_eq!(geomcp(&["--config", p(&bad_cfg), "detect", p(&fine)]).status.code(), Some(3));

    assert_eq!(geomcp(&["--help"]).status.code(), Some(0));
    assert_eq!(geomcp(&["--version"]).status.code(), Some(0));
}
