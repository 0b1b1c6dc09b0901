//! Study directory layout: `samples.csv`, `plan.json`, `summary.json` and
//! `slopes.csv`. Samples are appended one cell at a time; a directory is
//! resumable as long as every cell present in `samples.csv` is complete.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{SampleRow, SlopeRecord, StudyCell, StudyKind, StudyPlan, StudyRecord};
use crate::error::{Error, Result};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const PLAN_FILE: &str = "plan.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SLOPES_FILE: &str = "slopes.csv";
pub const CELLS_FILE: &str = "cells.json";

const FIXED_COLUMNS: [&str; 9] = ["cell", "L", "T", "R", "sample_index", "seed", "field_hash", "iterations", "residual"];
pub const SLOPES_HEADER: &str = "quantity,group,slope,std_error,ci,r_squared,n_points";

pub fn samples_header(kind: StudyKind) -> String {
    FIXED_COLUMNS.iter().chain(kind.quantities()).copied().collect::<Vec<_>>().join(",")
}

pub fn format_row(r: &SampleRow) -> String {
    let mut s = format!(
        "{},{},{},{},{},{},{},{},{}",
        r.cell, r.l, r.t, r.r, r.sample_index, r.seed, r.field_hash, r.iterations, r.residual
    );
    for v in &r.values {
        s.push(',');
        s.push_str(&v.to_string());
    }
    s
}

fn bad(line: usize, what: impl std::fmt::Display) -> Error {
    Error::InconsistentResume(format!("{SAMPLES_FILE} line {line}: {what}"))
}

pub fn parse_row(line: &str, kind: StudyKind, line_no: usize) -> Result<SampleRow> {
    let f: Vec<&str> = line.split(',').collect();
    let width = FIXED_COLUMNS.len() + kind.quantities().len();
    if f.len() != width {
        return Err(bad(line_no, format!("expected {width} fields, found {}", f.len())));
    }
    fn p<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<T> {
        s.trim().parse().map_err(|_| bad(line, format!("cannot parse {col} from {s:?}")))
    }
    Ok(SampleRow {
        cell: p(f[0], line_no, "cell")?,
        l: p(f[1], line_no, "L")?,
        t: p(f[2], line_no, "T")?,
        r: p(f[3], line_no, "R")?,
        sample_index: p(f[4], line_no, "sample_index")?,
        seed: p(f[5], line_no, "seed")?,
        field_hash: p(f[6], line_no, "field_hash")?,
        iterations: p(f[7], line_no, "iterations")?,
        residual: p(f[8], line_no, "residual")?,
        values: f[9..].iter().map(|s| p(s, line_no, "value")).collect::<Result<_>>()?,
    })
}

/// Rows already on disk; an absent file is an empty study.
pub fn load_rows(dir: &Path, kind: StudyKind) -> Result<Vec<SampleRow>> {
    let path = dir.join(SAMPLES_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if !text.ends_with('\n') {
        return Err(Error::InconsistentResume(format!("{SAMPLES_FILE} ends with a partial line")));
    }
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != samples_header(kind) {
        return Err(Error::InconsistentResume(format!("{SAMPLES_FILE} header does not match a {kind} study")));
    }
    lines.enumerate().map(|(i, l)| parse_row(l, kind, i + 2)).collect()
}

/// Every cell present in `rows` must be complete and agree with the plan.
pub fn check_resume(cells: &[StudyCell], kind: StudyKind, rows: &[SampleRow]) -> Result<()> {
    let width = kind.quantities().len();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in rows {
        let cell = cells
            .get(r.cell)
            .ok_or_else(|| Error::InconsistentResume(format!("row refers to unknown cell {}", r.cell)))?;
        if r.l != cell.l || r.r != cell.r || !cell.t_values.contains(&r.t) || r.values.len() != width {
            return Err(Error::InconsistentResume(format!(
                "row (cell {}, L {}, T {}, R {}) does not match the plan",
                r.cell, r.l, r.t, r.r
            )));
        }
        *counts.entry(r.cell).or_default() += 1;
    }
    for (c, n) in counts {
        if n != cells[c].expected_rows {
            return Err(Error::InconsistentResume(format!(
                "cell {c} has {n} rows, expected {}",
                cells[c].expected_rows
            )));
        }
    }
    Ok(())
}

/// Writes `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Appends a completed cell to `samples.csv`, creating it with its header.
pub fn append_cell(dir: &Path, kind: StudyKind, rows: &[SampleRow]) -> Result<()> {
    let path = dir.join(SAMPLES_FILE);
    let mut text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e.into()),
    };
    if text.is_empty() {
        text.push_str(&samples_header(kind));
        text.push('\n');
    }
    for r in rows {
        text.push_str(&format_row(r));
        text.push('\n');
    }
    write_atomic(&path, text.as_bytes())
}

/// Records the plan, or checks it against the one a previous run left.
pub fn reconcile_plan(dir: &Path, kind: StudyKind, plan: &StudyPlan) -> Result<()> {
    let path = dir.join(PLAN_FILE);
    let snapshot = serde_json::json!({ "kind": kind, "plan": plan });
    match fs::read_to_string(&path) {
        Ok(text) => {
            let old: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::InconsistentResume(format!("{PLAN_FILE}: {e}")))?;
            if old != snapshot {
                return Err(Error::InconsistentResume(format!("{PLAN_FILE} was written for a different plan")));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let text = pretty(&snapshot)?;
            write_atomic(&path, text.as_bytes())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn slopes_csv(slopes: &[SlopeRecord]) -> String {
    let mut s = String::from(SLOPES_HEADER);
    s.push('\n');
    for r in slopes {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.quantity, r.group, r.slope, r.std_error, r.ci, r.r_squared, r.n_points
        ));
    }
    s
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `summary.json`, `cells.json` and `slopes.csv`; returns their names.
pub fn write_results(dir: &Path, record: &StudyRecord) -> Result<Vec<&'static str>> {
    write_atomic(&dir.join(SUMMARY_FILE), pretty(&record.summary)?.as_bytes())?;
    write_atomic(&dir.join(CELLS_FILE), pretty(&record.cells)?.as_bytes())?;
    write_atomic(&dir.join(SLOPES_FILE), slopes_csv(&record.slopes).as_bytes())?;
    Ok(vec![SUMMARY_FILE, CELLS_FILE, SLOPES_FILE])
}

/// Runs a study into `dir`, resuming from whatever complete cells it holds.
pub fn run_into_dir(dir: &Path, plan: &StudyPlan, kind: StudyKind, workers: usize) -> Result<StudyRecord> {
    fs::create_dir_all(dir)?;
    let cells = plan.cells(kind)?;
    reconcile_plan(dir, kind, plan)?;
    let resume = load_rows(dir, kind)?;
    check_resume(&cells, kind, &resume)?;
    let record = super::run_study(plan, kind, workers, &resume, &mut |_, rows| append_cell(dir, kind, rows))?;
    write_results(dir, &record)?;
    Ok(record)
}
