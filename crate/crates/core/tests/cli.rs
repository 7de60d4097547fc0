use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otfs_mimo::detector::parse_ber_csv;
use otfs_mimo::pipeline::Dataset;
use otfs_mimo::reference;

const TINY: &str = "
[system]
m = 8
n = 8
seed = 21

[channel]
paths = 3
l_max = 3
k_max = 1

[training]
frames = 4
max_epochs = 3
batch_size = 64

[eval]
target_symbols = 256
snr_db = [0.0, 8.0, 16.0]
";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_otfs-mimo"));
    c.env_remove("OTFS_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

/// gen-data, train, eval into `dir`; returns (dataset, checkpoint, ber) paths.
fn pipeline(dir: &Path, cfg: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("train.csv");
    let ckpt = dir.join("mlp.json");
    let ber = dir.join("ber.csv");
    ok(&["gen-data", "--config", s(cfg), "--out", s(&data)]);
    ok(&["train", "--config", s(cfg), "--arch", "mlp", "--data", s(&data), "--out", s(&ckpt)]);
    ok(&["eval", "--config", s(cfg), "--detector", "mld", "--ckpt", s(&ckpt), "--out", s(&ber)]);
    (data, ckpt, ber)
}

#[test]
fn table_6g_csv_matches_printed_cells() {
    let out = ok(&["complexity", "--table-6g"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "nt,q,mld,mlp,cnn,resnet,mld_sci,mlp_sci,cnn_sci,resnet_sci");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    for (row, (nt, q, printed)) in rows.iter().zip(reference::COMPLEXITY_6G) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0].parse::<u64>().unwrap(), nt);
        assert_eq!(cells[1].parse::<u64>().unwrap(), q);
        for (cell, p) in cells[2..6].iter().zip(printed) {
            assert!(reference::matches_3sf(cell.parse::<f64>().unwrap(), p), "{cell} vs {p}");
        }
    }
}

#[test]
fn single_complexity_query() {
    let out = ok(&["complexity", "--m", "128", "--n", "128", "--q", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<u128> = text.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    let mn = 128u128 * 128;
    assert_eq!(&row[..5], &[128, 128, 1, 1, 4]);
    assert_eq!(row[5], 6 * 4 * mn);
    assert_eq!(row[7], 128 * mn + 8448);
}

#[test]
fn complexity_markdown_to_file_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/table.md");
    ok(&["complexity", "--table-6g", "--format", "markdown", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with('|'));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("nested/table.md.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "complexity");
    assert_eq!(manifest["tool"], "otfs-mimo");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(run(&["gen-data", "--config", "/nonexistent.toml", "--out", s(&out)]).status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[system]\nq = 8\n").unwrap();
    let o = run(&["gen-data", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("QAM"));

    fs::write(&bad, "[channel]\nl_max = 70\n").unwrap();
    assert_eq!(run(&["gen-data", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));

    assert_eq!(run(&["complexity"]).status.code(), Some(2));
    assert_eq!(run(&["complexity", "--m", "0", "--n", "4"]).status.code(), Some(2));
    assert_eq!(run(&["complexity", "--m", "1048576", "--n", "1048576", "--nt", "8", "--q", "256"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn eval_rejects_unknown_detector_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("b.csv");
    let o = run(&["eval", "--config", s(&cfg), "--detector", "svm", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_refuses_dataset_with_other_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let data = dir.path().join("d.csv");
    ok(&["gen-data", "--config", s(&cfg), "--frames", "1", "--out", s(&data)]);
    let cfg16 = dir.path().join("q16.toml");
    fs::write(&cfg16, TINY.replace("seed = 21", "seed = 21\nq = 16")).unwrap();
    let o = run(&["train", "--config", s(&cfg16), "--arch", "mlp", "--data", s(&data), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn end_to_end_outputs_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (data, ckpt, ber) = pipeline(dir.path(), &cfg);

    let dataset = Dataset::from_csv(&fs::read_to_string(&data).unwrap()).unwrap();
    assert_eq!(dataset.len(), 4 * 64);
    assert_eq!(dataset.snr_db, 8.0);

    let reports = parse_ber_csv(&fs::read_to_string(&ber).unwrap()).unwrap();
    assert_eq!(reports.len(), 6);
    for r in &reports {
        assert_eq!(r.symbols, 256);
        assert!(r.ber() <= 1.0);
    }
    assert_eq!(reports.iter().filter(|r| r.detector == "mld").count(), 3);
    assert_eq!(reports.iter().filter(|r| r.detector == "mlp").count(), 3);

    let history = fs::read_to_string(dir.path().join("mlp.json.history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next().unwrap(), "epoch,fold,train_loss,val_loss,lr");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // five folds of three epochs plus the retrain
    assert!(rows.len() > 15);
    assert!(rows.iter().filter(|r| r[1] == "full").all(|r| r[3].is_empty()));

    for p in [&data, &ckpt, &ber] {
        let m = PathBuf::from(format!("{}.manifest.json", p.display()));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&m).unwrap()).unwrap();
        assert_eq!(v["seed"], 21);
        assert_eq!(v["outputs"][0], s(p));
        assert!(v["config"].as_str().unwrap().contains("[system]"));
    }
}

#[test]
fn reruns_are_byte_identical_and_seed_sensitive() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = write_config(a.path());
    let cfg_b = write_config(b.path());
    let first = pipeline(a.path(), &cfg_a);
    let second = pipeline(b.path(), &cfg_b);
    for (x, y) in [(&first.0, &second.0), (&first.1, &second.1), (&first.2, &second.2)] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
    }

    let other = a.path().join("other.csv");
    let o = bin().env("OTFS_SEED", "22").args(["gen-data", "--config", s(&cfg_a), "--out", s(&other)]).output().unwrap();
    assert!(o.status.success());
    assert_ne!(fs::read(&other).unwrap(), fs::read(&first.0).unwrap());

    let o = bin().env("OTFS_SEED", "x").args(["gen-data", "--config", s(&cfg_a), "--out", s(&other)]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproduce_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("repro");
    ok(&[
        "reproduce",
        "--reference-tables",
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--target-symbols",
        "64",
        "--train-frames",
        "2",
        "--max-epochs",
        "2",
    ]);
    for name in ["complexity_6g", "ber_siso_m1", "ber_siso_m2", "ber_mimo_m1", "ber_mimo_m2", "ber_siso_m2_16qam"] {
        let p = out.join(format!("{name}.csv"));
        assert!(p.exists(), "{name}");
        assert!(out.join(format!("{name}.csv.manifest.json")).exists());
    }
    let mimo = parse_ber_csv(&fs::read_to_string(out.join("ber_mimo_m1.csv")).unwrap()).unwrap();
    assert!(mimo.iter().all(|r| r.nt == 2 && r.nr == 2 && r.symbols == 128));
    let summary = fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(summary.contains("40/40 cells match"));
    assert!(!summary.contains("FAILED"));
}
