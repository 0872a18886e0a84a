use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cilab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cilab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = "K = 2\nnt = 4\norder = 4\npoints = [0.0, 10.0]\ntechniques = [\"nMRT\", \"CRZF\", \"CIDC\"]\n";

#[test]
fn sweep_writes_one_row_per_technique_and_point() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = cilab(dir.path(), &["sweep-snr", "--config", "small.toml", "--trials", "10", "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "technique,axis_name,axis_value,mean_power,mean_sum_rate,eta,ser,failures,trials,ci_halfwidth_eta"
    );
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 10));
    assert!(lines[1..].iter().all(|l| l.split(',').nth(8) == Some("10")));

    assert!(dir.path().join("r.gp").exists());
    assert!(dir.path().join("r.manifest.json").exists());
    let gp = fs::read_to_string(dir.path().join("r.gp")).unwrap();
    assert!(gp.contains("r.csv"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = cilab(
            dir.path(),
            &["sweep-snr", "--config", "small.toml", "--trials", "20", "--seed", "7", "--out", name],
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "nt = 4\norder = 4\npoints = [0.0]\n").unwrap();
    let out = cilab(dir.path(), &["sweep-snr", "--config", "bad.toml", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`K`"), "{}", stderr(&out));
    assert!(!dir.path().join("sweep_snr.csv").exists());
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), format!("{SMALL}antenas = 3\n")).unwrap();
    let out = cilab(dir.path(), &["sweep-snr", "--config", "bad.toml", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("antenas"), "{}", stderr(&out));
}

#[test]
fn bad_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cilab(dir.path(), &["sweep-snr", "--trails", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = cilab(
        dir.path(),
        &["sweep-rate", "--config", "small.toml", "--points", "1,2", "--trials", "15", "--seed", "11", "--out", "first.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("first.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep-rate");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["trials"], 15);
    assert!(manifest["timestamp_unix"].as_u64().unwrap() > 0);

    let out = cilab(dir.path(), &["sweep-rate", "--config", "first.manifest.json", "--out", "second.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let a = fs::read(dir.path().join("first.csv")).unwrap();
    let b = fs::read(dir.path().join("second.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn json_flag_prints_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = cilab(dir.path(), &["sweep-snr", "--config", "small.toml", "--trials", "5", "--json", "--techniques", "CIDC"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[test]
fn single_orthonormal_cidc() {
    let dir = tempfile::tempdir().unwrap();
    let out = cilab(
        dir.path(),
        &["single", "--channel", "1,0;0,1", "--symbols", "0,1", "--zeta", "1,1", "--techniques", "CIDC", "--json"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let r = &report["reports"][0];
    assert!((r["power"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    let w = &r["precoder"];
    let entry = |i: usize| (w[i][0][0].as_f64().unwrap(), w[i][0][1].as_f64().unwrap());
    let (a, b) = (entry(0), entry(1));
    assert!((a.0 - 1.0).abs() < 1e-12 && a.1.abs() < 1e-12);
    assert!(b.0.abs() < 1e-12 && (b.1 - 1.0).abs() < 1e-12);

    assert!(dir.path().join("single.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("single.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "single");
}

#[test]
fn single_colinear_crzf_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = cilab(
        dir.path(),
        &["single", "--channel", "1,0;0.9999,0.014141782", "--symbols", "0,1", "--techniques", "CRZF"],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("degenerate channel"), "{err}");
    assert!(err.contains("colinear"), "{err}");
}

#[test]
fn single_from_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["single", "--seed", "5", "--symbols", "2,3", "--techniques", "nMRT,CCMC", "--json"];
    let a = cilab(dir.path(), &args);
    let b = cilab(dir.path(), &args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}
