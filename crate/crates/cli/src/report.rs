//! `report`: one comparison table over many run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use csi_sensing::charting::{REFERENCE_CONTINUITY, REFERENCE_REAL_WORLD_CM, REFERENCE_TRUSTWORTHINESS};
use csi_sensing::classify::{REFERENCE_NEXT_DAY, REFERENCE_SAME_DAY, REFERENCE_TWIN_TO_SIBLING};
use csi_sensing::positioning::{REFERENCE_INDOOR_CM, REFERENCE_OUTDOOR_CM};
use serde_json::Value;

use crate::error::CliError;
use crate::run::METRICS_FILE;

/// Every column any pipeline can fill; empty cells where not applicable.
pub const COLUMNS: [&str; 14] = [
    "pipeline",
    "run",
    "preset",
    "mean_cm",
    "median_cm",
    "p95_cm",
    "tail_mean_cm",
    "tail_p95_cm",
    "continuity",
    "trustworthiness",
    "outside_box",
    "same_day_accuracy",
    "next_day_accuracy",
    "twin_to_sibling",
];

const REFERENCE_NOTE: &str = "reference (real measurements, not reproducible)";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub pipeline: String,
    pub run: String,
    pub preset: String,
    pub values: BTreeMap<&'static str, f64>,
}

impl Row {
    fn cell(&self, col: &str) -> String {
        match col {
            "pipeline" => self.pipeline.clone(),
            "run" => self.run.clone(),
            "preset" => self.preset.clone(),
            _ => self.values.get(col).map(|v| format!("{v:.4}")).unwrap_or_default(),
        }
    }
}

fn num(v: &Value, path: &[&str]) -> Option<f64> {
    path.iter().try_fold(v, |v, k| v.get(k))?.as_f64()
}

/// Turns one metrics document into a table row.
pub fn row_from_metrics(run: &str, m: &Value) -> Result<Row, CliError> {
    let text = |k: &str| {
        m.get(k)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| CliError::Data(format!("{run}: metrics lack `{k}`")))
    };
    let mut values = BTreeMap::new();
    let mut put = |col: &'static str, v: Option<f64>, scale: f64| {
        if let Some(v) = v {
            values.insert(col, v * scale);
        }
    };
    put("mean_cm", num(m, &["test", "mean"]), 100.0);
    put("median_cm", num(m, &["test", "median"]), 100.0);
    put("p95_cm", num(m, &["test", "p95"]), 100.0);
    put("tail_mean_cm", num(m, &["tail", "mean"]), 100.0);
    put("tail_p95_cm", num(m, &["tail", "p95"]), 100.0);
    for col in [
        "continuity",
        "trustworthiness",
        "outside_box",
        "same_day_accuracy",
        "next_day_accuracy",
        "twin_to_sibling",
    ] {
        put(col, num(m, &[col]), 1.0);
    }
    Ok(Row {
        pipeline: text("pipeline")?,
        run: run.to_owned(),
        preset: text("preset")?,
        values,
    })
}

fn reference(pipeline: &str, preset: &str, pairs: &[(&'static str, f64)]) -> Row {
    Row {
        pipeline: pipeline.to_owned(),
        run: REFERENCE_NOTE.to_owned(),
        preset: preset.to_owned(),
        values: pairs.iter().copied().collect(),
    }
}

fn cm_triplet(v: [f64; 3]) -> [(&'static str, f64); 3] {
    [("mean_cm", v[0]), ("median_cm", v[1]), ("p95_cm", v[2])]
}

pub fn reference_rows(pipeline: &str) -> Vec<Row> {
    match pipeline {
        "positioning" => vec![
            reference(pipeline, "indoor", &cm_triplet(REFERENCE_INDOOR_CM)),
            reference(pipeline, "outdoor", &cm_triplet(REFERENCE_OUTDOOR_CM)),
        ],
        "chart_triplet" => vec![reference(
            pipeline,
            "outdoor",
            &[("continuity", REFERENCE_CONTINUITY), ("trustworthiness", REFERENCE_TRUSTWORTHINESS)],
        )],
        "chart_real_world" => vec![reference(pipeline, "outdoor", &cm_triplet(REFERENCE_REAL_WORLD_CM))],
        "classify" => vec![reference(
            pipeline,
            "devclass",
            &[("same_day_accuracy", REFERENCE_SAME_DAY), ("next_day_accuracy", REFERENCE_NEXT_DAY)],
        )],
        "twin_classify" => vec![reference(
            pipeline,
            "devclass",
            &[("same_day_accuracy", REFERENCE_SAME_DAY), ("twin_to_sibling", REFERENCE_TWIN_TO_SIBLING)],
        )],
        _ => Vec::new(),
    }
}

/// Run rows grouped by pipeline, each group followed by its reference rows.
pub fn grouped(rows: &[Row]) -> Vec<(String, Vec<Row>)> {
    let mut groups: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.pipeline.clone()).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(p, mut rs)| {
            rs.extend(reference_rows(&p));
            (p, rs)
        })
        .collect()
}

fn used_columns(rows: &[Row]) -> Vec<&'static str> {
    COLUMNS
        .iter()
        .copied()
        .filter(|c| matches!(*c, "run" | "preset") || rows.iter().any(|r| r.values.contains_key(c)))
        .collect()
}

fn md_table(out: &mut String, cols: &[&str], rows: &[Row]) {
    let _ = writeln!(out, "| {} |", cols.join(" | "));
    let _ = writeln!(out, "|{}", cols.iter().map(|_| "---|").collect::<String>());
    for r in rows {
        let cells: Vec<String> = cols.iter().map(|c| r.cell(c)).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
}

pub fn markdown(rows: &[Row]) -> String {
    let mut out = String::new();
    let groups = grouped(rows);
    if groups.is_empty() {
        md_table(&mut out, &COLUMNS, &[]);
        return out;
    }
    for (i, (pipeline, rs)) in groups.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "## {pipeline}\n");
        md_table(&mut out, &used_columns(rs), rs);
    }
    out
}

pub fn csv(rows: &[Row]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for (_, rs) in grouped(rows) {
        for r in rs {
            let cells: Vec<String> = COLUMNS.iter().map(|c| r.cell(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

/// Reads `metrics.json` from every run directory, in the given order.
pub fn load_rows(dirs: &[PathBuf]) -> Result<Vec<Row>, CliError> {
    dirs.iter()
        .map(|d| {
            let p = d.join(METRICS_FILE);
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?;
            let v: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            row_from_metrics(&run_name(d), &v)
        })
        .collect()
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}
