use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn blockpart(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockpart"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = blockpart(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) {
    ok(
        dir,
        &["synth", "--q-true", "3", "--instances-per-block", "60", "--labels-per-block", "6",
          "--features", "60", "--seed", "11", "--out", "d"],
    );
}

#[test]
fn auto_partition_reports_planted_q() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path());
    let stdout = ok(tmp.path(), &["partition", "--train", "d.train.txt", "--q", "auto", "--lambda", "0.3", "--out", "p"]);
    assert!(stdout.contains("chosen q = 3"), "{stdout}");
    for suffix in [".partition", ".partition.json", ".trace.csv", ".qsearch.csv", ".pgm", ".rows.csv", ".cols.csv"] {
        assert!(tmp.path().join(format!("p{suffix}")).exists(), "missing p{suffix}");
    }
    let pgm = std::fs::read(tmp.path().join("p.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
}

#[test]
fn single_cluster_warns() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path());
    let out = blockpart(tmp.path(), &["partition", "--train", "d.train.txt", "--q", "1", "--out", "p"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = blockpart(tmp.path(), &["partition", "--train", "missing.txt", "--out", "p"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(tmp.path().join("bad.txt"), "2 2 2\n0 0:1\n").unwrap();
    let out = blockpart(tmp.path(), &["partition", "--train", "bad.txt", "--out", "p"]);
    assert_eq!(out.status.code(), Some(1));

    synth(tmp.path());
    ok(tmp.path(), &["partition", "--train", "d.train.txt", "--q", "3", "--out", "p"]);
    let out = blockpart(tmp.path(), &["train", "--train", "d.test.txt", "--partition", "p.partition", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn training_is_reproducible_and_timed() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path());
    let args = |out: &'static str| ["train", "--train", "d.train.txt", "--q", "3", "--lambda", "0.3", "--out", out];
    let stdout = ok(tmp.path(), &args("m1"));
    assert!(stdout.contains("data partitioning") && stdout.contains("training"));
    ok(tmp.path(), &["--threads", "1"].iter().chain(&args("m2")).copied().collect::<Vec<_>>());
    let a = std::fs::read(tmp.path().join("m1")).unwrap();
    let b = std::fs::read(tmp.path().join("m2")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn predict_then_eval() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path());
    ok(tmp.path(), &["train", "--train", "d.train.txt", "--q", "3", "--lambda", "0.3", "--out", "m"]);
    ok(tmp.path(), &["predict", "--model", "m", "--test", "d.test.txt", "--k", "5", "--out", "pred.txt"]);
    let preds = std::fs::read_to_string(tmp.path().join("pred.txt")).unwrap();
    assert_eq!(preds.lines().count(), 60);
    let mults = std::fs::read_to_string(tmp.path().join("pred.txt.mults.csv")).unwrap();
    assert!(mults.starts_with("instance,mults_used\n"));

    let stdout = ok(
        tmp.path(),
        &["eval", "--predictions", "pred.txt", "--test", "d.test.txt", "--train", "d.train.txt", "--out", "metrics.csv"],
    );
    assert!(stdout.contains("P@1") && stdout.contains("PSP@5") && stdout.contains('x'));
    let csv = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("metric,k,value\n"));
    assert!(csv.contains("\nspeedup,,"));
}

#[test]
fn sweep_speedup_grows_with_lambda() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path());
    ok(
        tmp.path(),
        &["sweep", "--train", "d.train.txt", "--test", "d.test.txt", "--lambdas", "0.01,0.3,3,30",
          "--q", "3", "--out", "sweep.csv"],
    );
    let csv = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lambda,P@1,P@3,P@5,speedup"));
    let speedups: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(speedups.len(), 4);
    assert!(speedups.windows(2).all(|w| w[1] >= w[0]), "{speedups:?}");

    ok(
        tmp.path(),
        &["sweep", "--train", "d.train.txt", "--test", "d.test.txt", "--lambdas", "0.3", "--q", "3", "--out", "one.csv"],
    );
    let one = std::fs::read_to_string(tmp.path().join("one.csv")).unwrap();
    assert_eq!(one.lines().count(), 2);
}

#[test]
fn config_file_supplies_defaults() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path());
    std::fs::write(tmp.path().join("run.toml"), "seed = 3\n[bp]\nq = 2\nlambda = 0.3\n").unwrap();
    let stdout = ok(tmp.path(), &["--config", "run.toml", "partition", "--train", "d.train.txt", "--out", "p"]);
    assert!(stdout.contains("chosen q = 2"), "{stdout}");
    let stdout = ok(tmp.path(), &["--config", "run.toml", "partition", "--train", "d.train.txt", "--q", "3", "--out", "p"]);
    assert!(stdout.contains("chosen q = 3"), "{stdout}");

    std::fs::write(tmp.path().join("typo.toml"), "[bp]\nlamda = 1\n").unwrap();
    let out = blockpart(tmp.path(), &["--config", "typo.toml", "partition", "--train", "d.train.txt", "--out", "p"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_cluster_sweep_has_no_speedup() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path());
    ok(
        tmp.path(),
        &["sweep", "--train", "d.train.txt", "--test", "d.test.txt", "--lambdas", "0", "--q", "1", "--out", "s.csv"],
    );
    let csv = std::fs::read_to_string(tmp.path().join("s.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let speedup: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    // one router product on top of every label with a positive count
    assert!(speedup < 1.0, "{row}");
}
