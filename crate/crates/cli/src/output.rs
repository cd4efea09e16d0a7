//! Deterministic file output.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::runner::{CurveRow, ExperimentOutput};

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Round a float to nine significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(round_value).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// JSON with every float rounded to nine significant digits.
pub fn to_rounded_json<T: Serialize>(value: &T, pretty: bool) -> CliResult<String> {
    let v = round_value(serde_json::to_value(value)?);
    let text = if pretty {
        serde_json::to_string_pretty(&v)
    } else {
        serde_json::to_string(&v)
    };
    Ok(text?)
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Write `report.json` and `trace.jsonl` into `dir`.
pub fn write_experiment(dir: &Path, out: &ExperimentOutput) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut report = to_rounded_json(&out.report, true)?;
    report.push('\n');
    write(&dir.join("report.json"), &report)?;

    let mut traces: Vec<_> = out
        .runs
        .iter()
        .flat_map(|r| {
            let own = r.traces.iter().filter(|t| t.strategy != adecot::search::Strategy::Bon);
            r.bon.iter().chain(own)
        })
        .collect();
    traces.sort_by(|a, b| (a.strategy, a.run_seed, &a.instance_id).cmp(&(b.strategy, b.run_seed, &b.instance_id)));
    let mut lines = String::new();
    for t in traces {
        lines.push_str(&to_rounded_json(t, false)?);
        lines.push('\n');
    }
    write(&dir.join("trace.jsonl"), &lines)
}

/// Write `curves.csv` into `dir`.
pub fn write_curves(dir: &Path, rows: &[CurveRow]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("curves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(CURVE_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.name().to_string(),
            r.n.to_string(),
            round_sig(r.mean_nfe).to_string(),
            round_sig(r.mean_score).to_string(),
            round_sig(r.eta).to_string(),
            round_sig(r.xi).to_string(),
            round_sig(r.stderr_score).to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

pub const CURVE_HEADER: [&str; 7] = ["strategy", "N", "mean_nfe", "mean_score", "eta", "xi", "stderr_score"];
