//! Plot-ready long-format data and a verdict table from run or sweep
//! output directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kslab_core::harness::DiagnosticsRecord;

use crate::run::{RunStatus, VerdictsReport, DIAGNOSTICS_FILE, VERDICTS_FILE};
use crate::{fmt_f64, write_file, CliError};

pub const PLOT_FILE: &str = "plot_data.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

const SERIES: [&str; 8] = [
    "sup_u",
    "inf_u",
    "sup_v",
    "sup_grad_v",
    "sup_lap_v",
    "lyapunov_sup",
    "err_u",
    "err_v",
];

#[derive(Debug, Clone)]
pub struct LoadedRun {
    /// Directory name relative to the report root, `.` for a single run.
    pub name: String,
    pub records: Vec<DiagnosticsRecord>,
    pub verdicts: VerdictsReport,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn parse_diagnostics(path: &Path, text: &str) -> Result<Vec<DiagnosticsRecord>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(DiagnosticsRecord::CSV_HEADER) {
        return Err(corrupt(path, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<f64> = line
                .split(',')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| corrupt(path, format!("line {}: {e}", i + 2)))?;
            let arr: [f64; 9] = fields
                .try_into()
                .map_err(|_| corrupt(path, format!("line {}: expected 9 fields", i + 2)))?;
            Ok(DiagnosticsRecord::from_array(arr))
        })
        .collect()
}

fn load_run(root: &Path, dir: &Path) -> Result<LoadedRun, CliError> {
    let diag_path = dir.join(DIAGNOSTICS_FILE);
    let text = std::fs::read_to_string(&diag_path).map_err(|e| CliError::io(&diag_path, e))?;
    let records = parse_diagnostics(&diag_path, &text)?;
    let verdict_path = dir.join(VERDICTS_FILE);
    let text = std::fs::read_to_string(&verdict_path).map_err(|e| CliError::io(&verdict_path, e))?;
    let verdicts: VerdictsReport =
        serde_json::from_str(&text).map_err(|e| corrupt(&verdict_path, e.to_string()))?;
    let name = match dir.strip_prefix(root) {
        Ok(rel) if rel.as_os_str().is_empty() => ".".to_string(),
        Ok(rel) => rel.display().to_string(),
        Err(_) => dir.display().to_string(),
    };
    Ok(LoadedRun { name, records, verdicts })
}

/// A run directory itself, or the run directories directly below a sweep
/// directory, in name order.
pub fn load_results(root: &Path) -> Result<Vec<LoadedRun>, CliError> {
    if !root.is_dir() {
        return Err(CliError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    if root.join(VERDICTS_FILE).is_file() {
        return Ok(vec![load_run(root, root)?]);
    }
    let entries = std::fs::read_dir(root).map_err(|e| CliError::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(VERDICTS_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(corrupt(root, "no run outputs found"));
    }
    dirs.iter().map(|d| load_run(root, d)).collect()
}

pub fn plot_data(runs: &[LoadedRun]) -> String {
    let mut s = String::from("series,t,value\n");
    for run in runs {
        let prefix = if runs.len() == 1 { String::new() } else { format!("{}/", run.name) };
        for (k, name) in SERIES.iter().enumerate() {
            for r in &run.records {
                let v = r.as_array();
                let _ = writeln!(s, "{prefix}{name},{},{}", fmt_f64(v[0]), fmt_f64(v[k + 1]));
            }
        }
    }
    s
}

fn status_cell(v: &VerdictsReport) -> String {
    match (v.status, v.divergence_time) {
        (RunStatus::Diverged, Some(t)) => format!("DIVERGED(t={t:.6})"),
        (RunStatus::Diverged, None) => "DIVERGED".into(),
        (RunStatus::Completed, _) => "completed".into(),
    }
}

/// One line per run with aligned columns: name, status, final error,
/// fitted rate, then one column per check seen in any run.
pub fn summary_table(runs: &[LoadedRun]) -> String {
    let mut checks: Vec<String> = Vec::new();
    for run in runs {
        for v in &run.verdicts.verdicts {
            if !checks.contains(&v.check) {
                checks.push(v.check.clone());
            }
        }
    }
    let mut header = vec!["run".to_string(), "status".into(), "final_err".into(), "alpha".into()];
    header.extend(checks.iter().cloned());
    let mut rows = vec![header];
    for run in runs {
        let v = &run.verdicts;
        let mut row = vec![
            run.name.clone(),
            status_cell(v),
            v.final_record
                .map_or("-".into(), |r| format!("{:.3e}", r.err_u + r.err_v)),
            v.decay_fit.map_or("-".into(), |f| format!("{:.4}", f.alpha)),
        ];
        for c in &checks {
            let cell = match v.verdicts.iter().find(|x| &x.check == c) {
                Some(x) if x.pass => "PASS",
                Some(_) => "FAIL",
                None => "-",
            };
            row.push(cell.into());
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(s, "{}", cells.join("  ").trim_end());
    }
    s
}

/// Loads `root`, then writes the plot data and summary into `out`
/// (defaults to `root`).
pub fn write_report(root: &Path, out: Option<&Path>) -> Result<Vec<LoadedRun>, CliError> {
    let runs = load_results(root)?;
    let out = out.unwrap_or(root);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_file(&out.join(PLOT_FILE), &plot_data(&runs))?;
    write_file(&out.join(SUMMARY_FILE), &summary_table(&runs))?;
    Ok(runs)
}
