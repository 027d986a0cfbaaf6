use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use miracle::synthetic::toy_network;

const BIN: &str = env!("CARGO_BIN_EXE_miracle");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("MIRACLE_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Toy network written as the two input CSVs.
fn inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let ds = toy_network(0).unwrap();
    let drugs = dir.join("drugs_in.csv");
    let links = dir.join("links_in.csv");
    let mut d = String::from("drug_id,smiles\n");
    for r in &ds.drugs {
        d.push_str(&format!("{},{}\n", r.id, r.smiles));
    }
    let mut l = String::from("drug_a,drug_b\n");
    for &(i, j) in &ds.pairs {
        l.push_str(&format!("{},{}\n", ds.drugs[i].id, ds.drugs[j].id));
    }
    fs::write(&drugs, d).unwrap();
    fs::write(&links, l).unwrap();
    (drugs, links)
}

const SMALL: [&str; 12] = [
    "--d-h", "8", "--d-g", "8", "--d-u", "8", "--d-hid", "8", "--epochs", "8", "--seed", "7",
];

fn train(dir: &Path, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let (drugs, links) = inputs(dir);
    let out = dir.join(out);
    let mut args = vec![
        "train",
        "--drugs",
        drugs.to_str().unwrap(),
        "--interactions",
        links.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    (run(&args), out)
}

#[test]
fn train_writes_artifacts_and_repeats_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = train(dir.path(), "a", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("AUROC "));
    for f in ["checkpoint.bin", "split.csv", "history.csv", "drugs.csv", "config.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 9);
    let config = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(config.contains("seed = 7") && config.contains("d_h = 8"));

    let (o2, out2) = train(dir.path(), "b", &[]);
    assert!(o2.status.success());
    for f in ["checkpoint.bin", "split.csv", "history.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn evaluate_is_idempotent_and_checks_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = train(dir.path(), "run", &[]);
    let run_dir = out.to_str().unwrap();
    let scores = dir.path().join("scores.csv");
    let first = run(&["evaluate", "--run", run_dir, "--which", "test", "--scores", scores.to_str().unwrap()]);
    assert!(first.status.success(), "{}", stderr(&first));
    let line = stdout(&first);
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[0], "AUROC");
    assert_eq!(fields[2], "AUPRC");
    assert_eq!(fields[4], "F1");
    assert_eq!(stdout(&run(&["evaluate", "--run", run_dir, "--which", "test"])), line);
    let rows = fs::read_to_string(&scores).unwrap();
    assert!(rows.starts_with("drug_a,drug_b,label,score\n"));
    assert!(run(&["evaluate", "--run", run_dir, "--which", "val"]).status.success());

    let bad = run(&["evaluate", "--run", run_dir, "--which", "holdout"]);
    assert_eq!(bad.status.code(), Some(2));

    let ck = out.join("checkpoint.bin");
    let mut bytes = fs::read(&ck).unwrap();
    bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
    fs::write(&ck, bytes).unwrap();
    let old = run(&["evaluate", "--run", run_dir]);
    assert_eq!(old.status.code(), Some(1));
    assert!(stderr(&old).contains("version 99"), "{}", stderr(&old));
}

#[test]
fn predict_and_embed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = train(dir.path(), "run", &[]);
    let run_dir = out.to_str().unwrap();
    let input = dir.path().join("pairs.tsv");
    fs::write(&input, "drug_a\tdrug_b\nD0000\tD0001\nD0003\tD0017\n").unwrap();
    let o = run(&["predict", "--run", run_dir, "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let cols: Vec<&str> = lines[1].split('\t').collect();
    let p: f64 = cols[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(cols[3], if p >= 0.5 { "1" } else { "0" });

    fs::write(&input, "D0004\tD0004\n").unwrap();
    let o = run(&["predict", "--run", run_dir, "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paired with itself"));

    let emb = dir.path().join("emb.tsv");
    let o = run(&["embed", "--run", run_dir, "--output", emb.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&emb).unwrap();
    assert_eq!(text.lines().count(), 30);
    for line in text.lines() {
        let (_, values) = line.split_once('\t').unwrap();
        assert_eq!(values.split(',').count(), 8);
    }
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train",
        "--drugs",
        "/definitely/absent.csv",
        "--interactions",
        "/also/absent.csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/absent.csv"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "alpha = 3\nbeta = 0.5 # halved\nepochs = 2\n").unwrap();
    let (o, out) = train(dir.path(), "run", &["--config", cfg.to_str().unwrap(), "--alpha", "0", "--beta", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(text.contains("alpha = 0\n") && text.contains("beta = 0\n"), "{text}");
    assert!(text.contains("epochs = 8\n"));

    fs::write(&cfg, "alpha = lots\n").unwrap();
    let (o, _) = train(dir.path(), "bad", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeat_reports_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = train(dir.path(), "rep", &["--repeat", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("seed 7: AUROC") && text.contains("seed 8: AUROC"), "{text}");
    assert!(text.lines().last().unwrap().contains(" ± "));
    assert!(out.join("seed-8").join("checkpoint.bin").is_file());
}

#[test]
fn parse_smiles_dumps_json() {
    let o = run(&["parse-smiles", "CCO"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["atom_count"], 3);
    assert_eq!(v["atoms"].as_array().unwrap().len(), 3);
    assert_eq!(v["bonds"][0]["type"], "single");
    let bad = run(&["parse-smiles", "C1CC"]);
    assert_eq!(bad.status.code(), Some(1));
}
