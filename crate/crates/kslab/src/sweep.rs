//! Cartesian parameter sweeps over an experiment template, run point by
//! point on a bounded worker pool.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::{run_to_dir, RunOutcome, RunStatus};
use crate::{fmt_f64, write_file, CliError, Exit};

pub const SUMMARY_FILE: &str = "sweep_summary.csv";

pub const SUMMARY_HEADER: &str = "point,chi,a,b,lambda,mu,dim,seed,theta,existence_threshold,K,\
convergence_threshold,final_t,final_sup_u,final_inf_u,final_sup_v,final_sup_grad_v,final_err_u,\
final_err_v,alpha,r2,status,divergence_time,verdicts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Worker threads; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub axes: Vec<Axis>,
    /// Per-point experiment; its `output_dir` is ignored.
    pub template: ExperimentConfig,
}

/// One swept quantity: a parameter name (`chi`, `a`, `b`, `lambda`, `mu`)
/// or `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

const AXIS_NAMES: [&str; 6] = ["chi", "a", "b", "lambda", "mu", "seed"];

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Structural checks only: point values are validated per point, so a
    /// bad value poisons its own row and nothing else.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.axes.is_empty() {
            return Err(CliError::Config("sweep has no axes".into()));
        }
        for axis in &self.axes {
            if !AXIS_NAMES.contains(&axis.name.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown sweep axis {:?}; expected one of {AXIS_NAMES:?}",
                    axis.name
                )));
            }
            if axis.values.is_empty() {
                return Err(CliError::Config(format!("sweep axis {:?} is empty", axis.name)));
            }
        }
        if self.axes.iter().enumerate().any(|(i, a)| self.axes[..i].iter().any(|b| b.name == a.name)) {
            return Err(CliError::Config("sweep axes must be distinct".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// Cartesian product in row-major order: the last axis varies fastest.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let total: usize = self.axes.iter().map(|a| a.values.len()).product();
        (0..total)
            .map(|mut i| {
                let mut cfg = self.template.clone();
                cfg.output_dir = None;
                for axis in self.axes.iter().rev() {
                    let x = axis.values[i % axis.values.len()];
                    i /= axis.values.len();
                    match axis.name.as_str() {
                        "chi" => cfg.params.chi = x,
                        "a" => cfg.params.a = x,
                        "b" => cfg.params.b = x,
                        "lambda" => cfg.params.lambda = x,
                        "mu" => cfg.params.mu = x,
                        // validated in run_point
                        _ => cfg.seed = if x >= 0.0 && x.fract() == 0.0 { x as u64 } else { u64::MAX },
                    }
                }
                cfg
            })
            .collect()
    }
}

/// What happened at one point.
#[derive(Debug)]
pub enum PointResult {
    Done(Box<RunOutcome>),
    Invalid(String),
}

impl PointResult {
    pub fn exit(&self) -> Exit {
        match self {
            PointResult::Done(o) => o.exit(),
            PointResult::Invalid(_) => Exit::ConfigError,
        }
    }
}

pub fn point_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("point_{index:04}"))
}

fn seed_axis_value(sweep: &SweepConfig, index: usize) -> Option<f64> {
    let mut i = index;
    for axis in sweep.axes.iter().rev() {
        let x = axis.values[i % axis.values.len()];
        i /= axis.values.len();
        if axis.name == "seed" {
            return Some(x);
        }
    }
    None
}

fn run_point(sweep: &SweepConfig, index: usize, cfg: &ExperimentConfig, dir: &Path) -> PointResult {
    if let Some(x) = seed_axis_value(sweep, index) {
        if !(x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64) {
            return PointResult::Invalid(format!("seed {x} is not a non-negative integer"));
        }
    }
    match catch_unwind(AssertUnwindSafe(|| run_to_dir(cfg, dir))) {
        Ok(Ok(o)) => PointResult::Done(Box::new(o)),
        Ok(Err(e)) => PointResult::Invalid(e.to_string()),
        Err(_) => PointResult::Invalid("point panicked".into()),
    }
}

fn summary_row(index: usize, cfg: &ExperimentConfig, result: &PointResult) -> String {
    let p = &cfg.params;
    let mut row = format!(
        "{index},{},{},{},{},{},{},{}",
        fmt_f64(p.chi),
        fmt_f64(p.a),
        fmt_f64(p.b),
        fmt_f64(p.lambda),
        fmt_f64(p.mu),
        p.dim,
        cfg.seed
    );
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    match result {
        PointResult::Done(o) => {
            let c = &o.constants;
            let last = o.report.final_record;
            let last_field = |f: fn(&kslab_core::harness::DiagnosticsRecord) -> f64| opt(last.as_ref().map(f));
            let status = match o.report.status {
                RunStatus::Completed => "completed",
                RunStatus::Diverged => "diverged",
            };
            let verdicts: Vec<String> = o
                .report
                .verdicts
                .iter()
                .map(|v| format!("{}={}", v.check, if v.pass { "pass" } else { "fail" }))
                .collect();
            let _ = write!(
                row,
                ",{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(c.constants.theta),
                fmt_f64(c.existence_threshold),
                fmt_f64(c.constants.k),
                fmt_f64(c.convergence_threshold),
                last_field(|r| r.t),
                last_field(|r| r.sup_u),
                last_field(|r| r.inf_u),
                last_field(|r| r.sup_v),
                last_field(|r| r.sup_grad_v),
                last_field(|r| r.err_u),
                last_field(|r| r.err_v),
                opt(o.report.decay_fit.map(|f| f.alpha)),
                opt(o.report.decay_fit.map(|f| f.r2)),
                status,
                opt(o.report.divergence_time),
                verdicts.join(";"),
            );
        }
        PointResult::Invalid(msg) => {
            let clean: String = msg.chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
            // thirteen empty numeric columns, then status, divergence_time, message
            let _ = write!(row, ",{}invalid,,{clean}", ",".repeat(13));
        }
    }
    row
}

pub struct SweepOutcome {
    pub results: Vec<PointResult>,
    pub exit: Exit,
}

/// Runs every point into `root/point_NNNN` and writes the ordered summary.
/// The exit code is the most severe over all points.
pub fn run_sweep(sweep: &SweepConfig, root: &Path, workers: Option<usize>) -> Result<SweepOutcome, CliError> {
    sweep.validate()?;
    let points = sweep.points();
    let workers = workers
        .or(sweep.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Config("workers must be >= 1".into()));
    }
    std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let results: Vec<PointResult> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| run_point(sweep, i, cfg, &point_dir(root, i)))
            .collect()
    });

    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for (i, (cfg, r)) in points.iter().zip(&results).enumerate() {
        summary.push_str(&summary_row(i, cfg, r));
        summary.push('\n');
    }
    write_file(&root.join(SUMMARY_FILE), &summary)?;
    let exit = results.iter().map(PointResult::exit).max().unwrap_or(Exit::ConfigError);
    Ok(SweepOutcome { results, exit })
}
