//! Tabular and JSON rendering of metrics records.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;

pub const STATE_HEADER: &str = "state,top1,macro_f1,macro_recall";

/// Per-state rows of one run followed by an `avg` row of the column means.
pub fn state_table_csv(record: &MetricsRecord) -> String {
    let mut out = String::from(STATE_HEADER);
    out.push('\n');
    let n = record.states.len().max(1) as f64;
    let (mut f1, mut rec) = (0.0, 0.0);
    for s in &record.states {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            s.s, s.top1, s.macro_f1, s.macro_recall
        );
        f1 += s.macro_f1;
        rec += s.macro_recall;
    }
    let _ = writeln!(
        out,
        "avg,{:.6},{:.6},{:.6}",
        record.avg_top1,
        f1 / n,
        rec / n
    );
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub avg_top1: f64,
    /// Avg. accuracy minus the reference's, in percentage points.
    pub delta_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub reference: Option<String>,
    pub runs: Vec<RunSummary>,
    pub records: Vec<MetricsRecord>,
}

/// Summarizes `records`, computing deltas against the run named
/// `reference`. Deltas require the same schedule and seed as the reference.
pub fn build_report(records: &[MetricsRecord], reference: Option<&str>) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::Metric("report needs at least one run".into()));
    }
    let base = match reference {
        Some(name) => Some(records.iter().find(|r| r.run_id == name).ok_or_else(|| {
            Error::Metric(format!("reference run `{name}` not among the inputs"))
        })?),
        None => None,
    };
    let mut runs = Vec::with_capacity(records.len());
    for r in records {
        let delta_pp = match base {
            Some(b) => {
                if b.schedule != r.schedule || b.seed != r.seed {
                    return Err(Error::Metric(format!(
                        "run `{}` differs from reference `{}` in schedule or seed",
                        r.run_id, b.run_id
                    )));
                }
                Some(100.0 * (r.avg_top1 - b.avg_top1))
            }
            None => None,
        };
        runs.push(RunSummary {
            run_id: r.run_id.clone(),
            seed: r.seed,
            avg_top1: r.avg_top1,
            delta_pp,
        });
    }
    Ok(Report {
        reference: reference.map(str::to_string),
        runs,
        records: records.to_vec(),
    })
}

pub fn summary_csv(report: &Report) -> String {
    let mut out = String::from("run_id,avg_top1,delta_pp\n");
    for r in &report.runs {
        let delta = r.delta_pp.map(|d| format!("{d:.4}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.6},{}", r.run_id, r.avg_top1, delta);
    }
    out
}

/// One row per (run, state): x is the state index, y the top-1 accuracy.
pub fn plot_data_csv(report: &Report) -> String {
    let mut out = String::from("run_id,state,top1\n");
    for r in &report.records {
        for s in &r.states {
            let _ = writeln!(out, "{},{},{:.6}", r.run_id, s.s, s.top1);
        }
    }
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `report.json`, `summary.csv`, `plot_data.csv` and one
/// `{run_id}_states.csv` per run into `dir`; returns the written paths.
pub fn emit_report(
    records: &[MetricsRecord],
    reference: Option<&str>,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let report = build_report(records, reference)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    let mut paths = vec![
        write(dir.join("report.json"), &json)?,
        write(dir.join("summary.csv"), &summary_csv(&report))?,
        write(dir.join("plot_data.csv"), &plot_data_csv(&report))?,
    ];
    for r in records {
        paths.push(write(
            dir.join(format!("{}_states.csv", r.run_id)),
            &state_table_csv(r),
        )?);
    }
    Ok(paths)
}
