//! CSV and JSON writers.

use serde_json::{json, Map, Value};
use std::path::Path;
use uvctl_core::dynamics::Trajectory;
use nalgebra::DMatrix;
use uvctl_core::return_ctrl::RankReport;

use crate::CliError;

/// 17 significant digits, independent of locale.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(header).map_err(|e| io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|x| num(*x))).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn trajectory_header(ports: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "h1", "h2", "h3", "q0", "q1", "q2", "q3", "l1", "l2", "l3", "r1", "r2", "r3"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=ports).map(|k| format!("w{k}")));
    h
}

pub fn write_trajectory(path: &Path, tr: &Trajectory, ports: usize) -> Result<(), CliError> {
    let rows = tr.times.iter().zip(&tr.states).zip(&tr.controls).map(|((t, s), w)| {
        let mut row = vec![*t];
        row.extend_from_slice(&s.to_array());
        row.extend(w.iter().copied());
        row
    });
    write_csv(path, &trajectory_header(ports), rows)
}

pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    let data: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

pub fn blocks_json(blocks: &[(String, DMatrix<f64>)]) -> Value {
    let mut map = Map::new();
    for (name, m) in blocks {
        map.insert(name.clone(), matrix_json(m));
    }
    Value::Object(map)
}

pub fn rank_json(r: &RankReport) -> Value {
    json!({
        "condition": r.condition,
        "dims": [r.dims.0, r.dims.1],
        "singular_values": r.singular_values,
        "rank": r.rank,
        "tolerance": r.tolerance,
        "verdict": r.verdict,
        "marginal": r.marginal,
    })
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io(path, e))
}
