use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prqr_core::ridge::load_state;
use tempfile::TempDir;

fn prqr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prqr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = prqr(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Temp dir holding a synthetic `s/data.csv`.
fn synth(extra: &[&str]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "synth",
        "--n",
        "300",
        "--d",
        "8",
        "--informative",
        "3",
        "--seed",
        "9",
        "--out",
        "s",
    ];
    args.extend_from_slice(extra);
    ok(&args, dir.path());
    dir
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let b = fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn evaluate_writes_causal_audit_and_outputs() {
    let dir = synth(&[]);
    let out = ok(
        &["evaluate", "--train", "s/data.csv", "--out", "e"],
        dir.path(),
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout
        .lines()
        .next()
        .unwrap()
        .starts_with("{\"command\":\"evaluate\""));
    let e = dir.path().join("e");
    for f in [
        "predictions.csv",
        "audit.csv",
        "metrics.csv",
        "split_plan.csv",
        "model.prqr",
        "run.jsonl",
        "run_config.json",
    ] {
        assert!(e.join(f).exists(), "{f} missing");
    }
    let audit = read(e.join("audit.csv"));
    let mut rows = 0;
    for line in audit.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert!(f[2].is_empty() || f[2] < f[1], "{line}");
        assert_eq!(f[3], f[4]);
        rows += 1;
    }
    assert_eq!(rows, read(e.join("predictions.csv")).lines().count() - 1);
    let metrics = read(e.join("metrics.csv"));
    assert!(metrics.starts_with("prediction,mae,mse,rmse,r2,n\nraw,"));
    assert!(read(e.join("run.jsonl"))
        .lines()
        .last()
        .unwrap()
        .contains("\"event\":\"done\""));
    load_state(&e.join("model.prqr")).unwrap();
}

#[test]
fn quantizer_modes_differ_only_in_quantized_column() {
    let dir = synth(&[]);
    ok(
        &["evaluate", "--train", "s/data.csv", "--out", "a"],
        dir.path(),
    );
    ok(
        &[
            "evaluate",
            "--train",
            "s/data.csv",
            "--out",
            "b",
            "--quantizer",
            "paper-literal",
        ],
        dir.path(),
    );
    let a = read(dir.path().join("a/predictions.csv"));
    let b = read(dir.path().join("b/predictions.csv"));
    let mut differ = 0;
    for (la, lb) in a.lines().zip(b.lines()) {
        let (fa, fb): (Vec<&str>, Vec<&str>) = (la.split(',').collect(), lb.split(',').collect());
        assert_eq!((fa[0], fa[1], fa[3]), (fb[0], fb[1], fb[3]));
        differ += (fa[2] != fb[2]) as usize;
    }
    assert_eq!(a.lines().count(), b.lines().count());
    assert!(differ > 0);
}

#[test]
fn reruns_and_config_replay_are_byte_identical() {
    let dir = synth(&["--missing-fraction", "0.05"]);
    let args = [
        "evaluate",
        "--train",
        "s/data.csv",
        "--out",
        "e",
        "--alpha",
        "1.5",
        "--seed",
        "4",
        "--freeze-imputation",
    ];
    ok(&args, dir.path());
    let first = snapshot(&dir.path().join("e"));
    ok(&args, dir.path());
    assert_eq!(snapshot(&dir.path().join("e")), first);
    fs::copy(
        dir.path().join("e/run_config.json"),
        dir.path().join("saved.json"),
    )
    .unwrap();
    fs::remove_dir_all(dir.path().join("e")).unwrap();
    ok(&["--config", "saved.json"], dir.path());
    assert_eq!(snapshot(&dir.path().join("e")), first);
}

#[test]
fn flags_override_a_saved_config() {
    let dir = synth(&[]);
    ok(
        &["evaluate", "--train", "s/data.csv", "--out", "e"],
        dir.path(),
    );
    ok(
        &[
            "evaluate",
            "--config",
            "e/run_config.json",
            "--alpha",
            "0.5",
            "--out",
            "f",
        ],
        dir.path(),
    );
    assert!(read(dir.path().join("f/run_config.json")).contains("\"alpha\":0.5"));
    let out = prqr(&["sweep", "--config", "e/run_config.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn split_plan_file_reproduces_the_seeded_split() {
    let dir = synth(&[]);
    ok(
        &[
            "evaluate",
            "--train",
            "s/data.csv",
            "--out",
            "a",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    ok(
        &[
            "evaluate",
            "--train",
            "s/data.csv",
            "--out",
            "b",
            "--split-plan",
            "a/split_plan.csv",
        ],
        dir.path(),
    );
    assert_eq!(
        read(dir.path().join("a/predictions.csv")),
        read(dir.path().join("b/predictions.csv"))
    );
}

#[test]
fn separate_test_file_is_predicted() {
    let dir = synth(&[]);
    let data = read(dir.path().join("s/data.csv"));
    let lines: Vec<&str> = data.lines().collect();
    let (head, body) = (lines[0], &lines[1..]);
    let mut train = vec![head];
    let mut test = vec![head];
    for (i, l) in body.iter().enumerate() {
        if i >= 100 && i % 3 == 0 {
            test.push(l);
        } else {
            train.push(l);
        }
    }
    fs::write(dir.path().join("train.csv"), train.join("\n")).unwrap();
    fs::write(dir.path().join("test.csv"), test.join("\n")).unwrap();
    ok(
        &[
            "evaluate",
            "--train",
            "train.csv",
            "--test",
            "test.csv",
            "--out",
            "e",
        ],
        dir.path(),
    );
    let preds = read(dir.path().join("e/predictions.csv"));
    assert_eq!(preds.lines().count(), test.len());
}

#[test]
fn fit_is_deterministic_and_loadable() {
    let dir = synth(&[]);
    ok(&["fit", "--train", "s/data.csv", "--out", "a"], dir.path());
    ok(&["fit", "--train", "s/data.csv", "--out", "b"], dir.path());
    let (a, b) = (
        fs::read(dir.path().join("a/model.prqr")).unwrap(),
        fs::read(dir.path().join("b/model.prqr")).unwrap(),
    );
    assert_eq!(a, b);
    let m = load_state(&dir.path().join("a/model.prqr")).unwrap();
    assert_eq!(m.stats.count, 300);
    assert!(!m.is_dirty());
}

#[test]
fn empty_csv_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "timestamp,x,target\n").unwrap();
    for cmd in ["fit", "report-missing", "evaluate"] {
        let out = prqr(&[cmd, "--train", "empty.csv", "--out", "o"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains("no rows"),
            "{cmd}"
        );
    }
}

#[test]
fn singular_system_is_a_solve_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("timestamp,a,b,target\n");
    for i in 0..20 {
        csv += &format!("2022-01-01 00:{:02}:00,{i},{i},{}\n", i, 2 * i);
    }
    fs::write(dir.path().join("dup.csv"), csv).unwrap();
    let out = prqr(
        &["fit", "--train", "dup.csv", "--alpha", "0", "--out", "o"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(read(dir.path().join("o/run.jsonl")).contains("\"exit\":3"));
}

#[test]
fn missing_train_flag_and_bad_variant_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        prqr(&["evaluate", "--out", "o"], dir.path()).status.code(),
        Some(2)
    );
    let dir = synth(&[]);
    let out = prqr(
        &[
            "compare-features",
            "--train",
            "s/data.csv",
            "--variants",
            "full,bogus:3",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_and_cv_shapes() {
    let dir = synth(&[]);
    ok(
        &["sweep", "--train", "s/data.csv", "--out", "w"],
        dir.path(),
    );
    let sweep = read(dir.path().join("w/sweep.csv"));
    assert_eq!(sweep.lines().count(), 9);
    assert!(sweep.lines().skip(1).all(|l| l.ends_with(",ok")));
    assert_eq!(read(dir.path().join("w/sweep_raw.csv")).lines().count(), 9);

    ok(
        &["cv", "--train", "s/data.csv", "--k", "5", "--out", "c"],
        dir.path(),
    );
    let cv = read(dir.path().join("c/cv.csv"));
    assert_eq!(cv.lines().next(), Some("split,mae,mse,rmse,r2"));
    assert_eq!(cv.lines().count(), 5);
    ok(
        &["cv", "--train", "s/data.csv", "--k", "5", "--out", "c"],
        dir.path(),
    );
    assert_eq!(read(dir.path().join("c/cv.csv")), cv);

    ok(
        &["cv", "--train", "s/data.csv", "--k", "2", "--out", "c2"],
        dir.path(),
    );
    assert_eq!(read(dir.path().join("c2/cv.csv")).lines().count(), 2);
    assert_eq!(
        prqr(
            &["cv", "--train", "s/data.csv", "--k", "400", "--out", "c3"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn missing_report_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("timestamp,a,b,target\n");
    for i in 0..10 {
        let a = if i < 3 { String::new() } else { i.to_string() };
        csv += &format!("2022-01-01 00:{i:02}:00,{a},{i},5\n");
    }
    fs::write(dir.path().join("m.csv"), csv).unwrap();
    ok(
        &["report-missing", "--train", "m.csv", "--out", "o"],
        dir.path(),
    );
    let report = read(dir.path().join("o/missing.csv"));
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(
        lines,
        [
            "column,missing_count,missing_fraction",
            "a,3,0.3",
            "b,0,0.0",
            "target,0,0.0"
        ]
    );
}

#[test]
fn compare_features_with_listed_variant() {
    let dir = synth(&[]);
    fs::write(dir.path().join("picked.txt"), "x0\nx1\n# comment\nx2\n").unwrap();
    ok(
        &[
            "compare-features",
            "--train",
            "s/data.csv",
            "--variants",
            "full,topk:3,pca:4,list:picked.txt",
            "--out",
            "f",
        ],
        dir.path(),
    );
    let table = read(dir.path().join("f/comparison.csv"));
    let names: Vec<&str> = table
        .lines()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["variant", "full", "topk:3", "pca:4", "list:picked"]);
    assert!(!table.contains("NA"));
}

#[test]
fn rank_one_needs_unscaled_features() {
    let dir = synth(&[]);
    let out = prqr(
        &[
            "evaluate",
            "--train",
            "s/data.csv",
            "--rank-one",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    ok(
        &[
            "evaluate",
            "--train",
            "s/data.csv",
            "--rank-one",
            "--no-scale",
            "--out",
            "r",
        ],
        dir.path(),
    );
    ok(
        &[
            "evaluate",
            "--train",
            "s/data.csv",
            "--no-scale",
            "--out",
            "d",
        ],
        dir.path(),
    );
    let parse = |p: &str| -> Vec<f64> {
        read(dir.path().join(p))
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    for (a, b) in parse("r/predictions.csv")
        .iter()
        .zip(parse("d/predictions.csv"))
    {
        assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
    }
}
