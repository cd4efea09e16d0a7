use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn adecot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adecot"))
        .args(args)
        .current_dir(dir)
        .env_remove("ADECOT_ENDPOINT")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// One instance without simulator metadata, as a remote run expects.
fn remote_instances(dir: &Path) {
    let source = adecot::Image::filled(8, 8, 3, 0.5).unwrap();
    let inst = adecot::EditInstance::new("r-0", source, "add a hat").unwrap();
    std::fs::write(
        dir.join("instances.jsonl"),
        serde_json::to_string(&inst).unwrap() + "\n",
    )
    .unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn best_of_n_report_counts_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strategy = \"bon\"\n[search]\nn = 4\n[instances]\ncount = 10\n",
    );
    let out = adecot(&["run", "--config", cfg.to_str().unwrap(), "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("res/report.json"));
    assert_eq!(report["seeds"][0]["summary"]["total_nfe"], 1120.0);
    assert_eq!(report["average"]["total_nfe"], 1120.0);
}

#[test]
fn averaged_block_is_the_mean_of_seed_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strategy = \"ade-cot\"\nseeds = [3, 4, 5]\n[search]\nn = 8\n[instances]\ncount = 12\n",
    );
    let out = adecot(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let report = read_json(&dir.path().join("out/report.json"));
    let seeds = report["seeds"].as_array().unwrap();
    assert_eq!(seeds.len(), 3);
    for key in ["eta", "xi", "mean_final_score", "total_nfe", "speedup_vs_bon"] {
        let mean = seeds.iter().map(|s| s["summary"][key].as_f64().unwrap()).sum::<f64>() / 3.0;
        let avg = report["average"][key].as_f64().unwrap();
        assert!(
            (mean - avg).abs() <= 1e-8 * mean.abs().max(1.0),
            "{key}: {mean} vs {avg}"
        );
    }
}

#[test]
fn trace_lists_each_instance_once_per_strategy_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strategy = \"early-prune-intermediate\"\nseeds = [0, 1]\n[search]\nn = 4\n[instances]\ncount = 6\n",
    );
    let out = adecot(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let text = std::fs::read_to_string(dir.path().join("out/trace.jsonl")).unwrap();
    let mut keys: Vec<(String, u64, String)> = text
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (
                v["strategy"].as_str().unwrap().to_string(),
                v["run_seed"].as_u64().unwrap(),
                v["instance_id"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    assert_eq!(keys.len(), 2 * 2 * 6);
    let before = keys.clone();
    keys.sort();
    assert_eq!(before, keys, "lines come out sorted");
    keys.dedup();
    assert_eq!(keys.len(), 24);
}

#[test]
fn sweep_writes_one_row_per_strategy_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strategy = \"ade-cot\"\nseeds = [0, 1]\n[instances]\ncount = 20\n",
    );
    let out = adecot(
        &["sweep", "--config", cfg.to_str().unwrap(), "--budgets", "1,2,4,8,16,32"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(dir.path().join("out/curves.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["strategy", "N", "mean_nfe", "mean_score", "eta", "xi", "stderr_score"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12);
    let bon: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| &r[0] == "bon")
        .map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap(), r[6].parse().unwrap()))
        .collect();
    assert_eq!(bon.len(), 6);
    for (i, (nfe, _, _)) in bon.iter().enumerate() {
        assert_eq!(*nfe, 28.0 * f64::from(1u32 << i));
    }
    // Best-of-N quality grows with N, up to sampling error.
    for w in bon.windows(2) {
        assert!(w[1].1 >= w[0].1 - 2.0 * w[0].2.max(w[1].2), "{w:?}");
    }
    assert!(bon[5].1 > bon[0].1);
}

#[test]
fn verify_passes_on_the_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strategy = \"ade-cot\"\n[instances]\ncount = 2\n");
    let out = adecot(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strategy = \"bon\"\n[search]\nn = -3\n");
    let out = adecot(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exp.toml"));
    let missing = adecot(&["run", "--config", "nope.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    remote_instances(dir.path());
    let cfg = write_config(
        dir.path(),
        "strategy = \"bon\"\n[backend]\nkind = \"remote\"\nendpoint = \"http://127.0.0.1:9\"\n[backend.http]\ntimeout_ms = 300\nretries = 0\nbackoff_ms = 1\n[instances]\npath = \"instances.jsonl\"\n",
    );
    let out = adecot(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn endpoint_variable_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    remote_instances(dir.path());
    let cfg = write_config(
        dir.path(),
        "strategy = \"bon\"\n[backend]\nkind = \"remote\"\nendpoint = \"http://example.invalid\"\n[backend.http]\ntimeout_ms = 300\nretries = 0\nbackoff_ms = 1\n[instances]\npath = \"instances.jsonl\"\n",
    );
    let out = Command::new(env!("CARGO_BIN_EXE_adecot"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("ADECOT_ENDPOINT", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("127.0.0.1:9"));
}
