use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn operon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_operon"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn operon")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr: {}", o.status, String::from_utf8_lossy(&o.stderr));
}

fn gen_small(dir: &Path, name: &str, functions: &str, queries: &str) -> Output {
    let o = operon(
        dir,
        &["gen", "--problem", "diffusion", "--functions", functions, "--queries", queries, "--seed", "7", "-o", name],
    );
    assert_ok(&o);
    o
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn gen_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let first = gen_small(dir.path(), "d.bin", "10", "5");
    assert!(stdout(&first).contains("records 50"));
    let bytes = fs::read(dir.path().join("d.bin")).unwrap();
    // header: 7 magic, 1 id, m, n_functions, P, seed, JSON length, JSON, then records of 2m+3 floats
    let json_len = u32::from_le_bytes(bytes[28..32].try_into().unwrap()) as usize;
    assert_eq!(bytes.len() - 32 - json_len, 50 * (2 * 101 + 3) * 8);
    assert!(dir.path().join("d.bin.config.json").is_file());

    let second = gen_small(dir.path(), "e.bin", "10", "5");
    let digest = |o: &Output| stdout(o).lines().find(|l| l.starts_with("digest")).unwrap().to_string();
    assert_eq!(digest(&first), digest(&second));
    assert_eq!(bytes, fs::read(dir.path().join("e.bin")).unwrap());
}

#[test]
fn gen_rejects_zero_functions() {
    let dir = tempfile::tempdir().unwrap();
    let o = operon(dir.path(), &["gen", "--functions", "0", "-o", "z.bin"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("z.bin").exists());
}

#[test]
fn train_writes_curves_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "10", "5");
    let o = operon(dir.path(), &["train", "--model", "edeeponet", "--data", "d.bin", "--epochs", "2", "-o", "run"]);
    assert_ok(&o);
    let run = dir.path().join("run");
    assert_eq!(csv_rows(&run.join("curves.csv")).len(), 2);
    assert!(run.join("model.bin").is_file());
    assert!(run.join("config.json").is_file());
    assert!(stdout(&o).lines().last().unwrap().starts_with("best train MSE"));
}

#[test]
fn train_rejects_unknown_model() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "4", "2");
    let o = operon(dir.path(), &["train", "--model", "bogus", "--data", "d.bin"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for kind in ["fnn", "deeponet", "edeeponet"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn frozen_learning_rate_gives_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "10", "5");
    let o = operon(dir.path(), &["train", "--model", "fnn", "--data", "d.bin", "--lr", "0", "--epochs", "3", "-o", "run"]);
    assert_ok(&o);
    let rows = csv_rows(&dir.path().join("run/curves.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == rows[0][1]));
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["train", "compare"] {
        let o = operon(dir.path(), &[cmd, "--data", "absent.bin", "-o", "run"]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
    }
    let o = operon(dir.path(), &["eval", "--checkpoint", "absent.bin", "-o", "ev"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unsupported_branch_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "4", "2");
    let o = operon(dir.path(), &["train", "--data", "d.bin", "--branches", "3", "-o", "run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "100", "5");
    let o = operon(dir.path(), &["compare", "--data", "d.bin", "--seeds", "2", "--epochs", "2", "-o", "cmp"]);
    assert_ok(&o);
    let table = stdout(&o);
    for kind in ["fnn", "deeponet", "edeeponet"] {
        assert!(table.contains(kind));
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cmp/report.json")).unwrap()).unwrap();
    assert_eq!(report["complete"], Value::Bool(true));
    let models = report["models"].as_array().unwrap();
    assert_eq!(models.len(), 3);
    let counts: Vec<f64> = models.iter().map(|m| m["param_count"].as_f64().unwrap()).collect();
    for m in models {
        assert_eq!(m["runs"].as_array().unwrap().len(), 2);
        assert!(dir.path().join("cmp").join(m["kind"].as_str().unwrap()).join("seed1/curves.csv").is_file());
    }
    let max = counts.iter().cloned().fold(0.0, f64::max);
    let min = counts.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min <= 1.05 / 0.95, "{counts:?}");

    let median = |kind: &str, field: &str| {
        models.iter().find(|m| m["kind"] == kind).unwrap()[field].as_f64().unwrap()
    };
    for r in report["ratios"].as_array().unwrap() {
        let base = r["baseline"].as_str().unwrap();
        let test = median(base, "median_best_test_mse") / median("edeeponet", "median_best_test_mse");
        let train = median(base, "median_best_train_mse") / median("edeeponet", "median_best_train_mse");
        assert_eq!(r["test"].as_f64().unwrap(), test);
        assert_eq!(r["train"].as_f64().unwrap(), train);
    }
}

fn read_pgm_dims(path: &Path) -> (usize, usize) {
    let bytes = fs::read(path).unwrap();
    let text = String::from_utf8_lossy(&bytes[..32.min(bytes.len())]).into_owned();
    let mut tokens = text.split_whitespace();
    assert_eq!(tokens.next(), Some("P5"));
    let w = tokens.next().unwrap().parse().unwrap();
    let h = tokens.next().unwrap().parse().unwrap();
    (w, h)
}

#[test]
fn eval_exports_are_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "6", "5");
    assert_ok(&operon(dir.path(), &["train", "--data", "d.bin", "--epochs", "1", "-o", "run"]));
    let eval = |out: &str| {
        let o = operon(dir.path(), &["eval", "--checkpoint", "run/model.bin", "--seed", "11", "-o", out]);
        assert_ok(&o);
        o
    };
    let first = eval("ev1");
    eval("ev2");
    for name in ["truth", "prediction", "error"] {
        for ext in ["txt", "pgm"] {
            let file = format!("{name}.{ext}");
            assert_eq!(
                fs::read(dir.path().join("ev1").join(&file)).unwrap(),
                fs::read(dir.path().join("ev2").join(&file)).unwrap(),
                "{file}"
            );
        }
        assert_eq!(read_pgm_dims(&dir.path().join("ev1").join(format!("{name}.pgm"))), (201, 201));
    }
    let text = fs::read_to_string(dir.path().join("ev1/error.txt")).unwrap();
    let max = text
        .lines()
        .skip(1)
        .flat_map(|l| l.split_whitespace().map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let line = stdout(&first);
    let printed: f64 = line
        .trim()
        .strip_prefix("max error ")
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(printed, max);
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "6", "3");
    assert_ok(&operon(dir.path(), &["train", "--data", "d.bin", "--epochs", "1", "-o", "run"]));
    fs::write(dir.path().join("c.json"), r#"{"generation": {"sensor_count": 51}}"#).unwrap();
    let o = operon(dir.path(), &["eval", "--checkpoint", "run/model.bin", "--config", "c.json", "-o", "ev"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path(), "d.bin", "8", "4");
    fs::write(
        dir.path().join("run.json"),
        r#"{"model": "deeponet", "seed": 3, "train": {"epochs": 2, "lr": 0.001}}"#,
    )
    .unwrap();
    assert_ok(&operon(dir.path(), &["train", "--data", "d.bin", "--config", "run.json", "-o", "a"]));
    assert_ok(&operon(
        dir.path(),
        &["train", "--data", "d.bin", "--model", "deeponet", "--seed", "3", "--epochs", "2", "--lr", "0.001", "-o", "b"],
    ));
    for file in ["curves.csv", "model.bin"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
    let config_a: Value = serde_json::from_slice(&fs::read(dir.path().join("a/config.json")).unwrap()).unwrap();
    let config_b: Value = serde_json::from_slice(&fs::read(dir.path().join("b/config.json")).unwrap()).unwrap();
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(strip(config_a), strip(config_b));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"functions": 3, "colour": "red"}"#).unwrap();
    let o = operon(dir.path(), &["gen", "--config", "bad.json", "-o", "d.bin"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("d.bin").exists());
}

#[test]
fn gen_from_config_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("g.json"),
        r#"{"problem": "advdiff", "functions": 5, "queries": 3, "seed": 9}"#,
    )
    .unwrap();
    assert_ok(&operon(dir.path(), &["gen", "--config", "g.json", "-o", "a.bin"]));
    assert_ok(&operon(
        dir.path(),
        &["gen", "--problem", "advdiff", "--functions", "5", "--queries", "3", "--seed", "9", "-o", "b.bin"],
    ));
    assert_eq!(fs::read(dir.path().join("a.bin")).unwrap(), fs::read(dir.path().join("b.bin")).unwrap());
}
