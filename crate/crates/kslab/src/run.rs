//! A single experiment: integrate, evaluate the requested checks, persist.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use kslab_core::constants::{
    compute_constants, structured_c2, CalibrationConstants, ModelConstants, DEFAULT_BETA,
    DEFAULT_GAMMA,
};
use kslab_core::harness::{
    check_convergence, check_eventual_bound, check_lyapunov, check_persistence, decay_window,
    fit_decay_rate, DiagnosticsRecord, Selector, Verdict,
};
use kslab_core::imex::ImexStepper;
use kslab_core::mild::{data_radius, local_horizon};
use kslab_core::spectral::measure_grad_envelope;
use kslab_core::types::{validate_params, ValidationMode};
use kslab_core::{Error, Params, SimState};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{fmt_f64, write_file, CliError, Exit};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CONSTANTS_FILE: &str = "constants.json";
pub const VERDICTS_FILE: &str = "verdicts.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Probe times and sample count for measuring `c_grad` when the config does
/// not pin it.
const GRAD_PROBE_TIMES: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
const GRAD_PROBE_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha: f64,
    pub r2: f64,
}

/// Contents of `verdicts.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictsReport {
    pub status: RunStatus,
    pub divergence_time: Option<f64>,
    /// Solver message when the run diverged.
    pub failure: Option<String>,
    pub all_pass: bool,
    pub final_record: Option<DiagnosticsRecord>,
    /// Exponential fit of err_u + err_v, whenever the series admits one.
    pub decay_fit: Option<DecayFit>,
    pub verdicts: Vec<Verdict>,
}

impl VerdictsReport {
    pub fn exit(&self) -> Exit {
        match self.status {
            RunStatus::Diverged => Exit::Diverged,
            RunStatus::Completed if self.all_pass => Exit::Pass,
            RunStatus::Completed => Exit::CheckFailed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Measured,
    Config,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub value: f64,
    pub source: Source,
}

/// Contents of `constants.json`: the model constants at top level plus
/// calibration provenance and the certified local horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    #[serde(flatten)]
    pub constants: ModelConstants,
    pub existence_threshold: f64,
    /// Kχμ.
    pub convergence_threshold: f64,
    pub calibration: BTreeMap<&'static str, Calibrated>,
    pub c2_structured: f64,
    pub beta: f64,
    pub gamma: f64,
    pub data_radius: f64,
    pub local_horizon: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub constants: ConstantsReport,
    pub report: VerdictsReport,
}

impl RunOutcome {
    pub fn exit(&self) -> Exit {
        self.report.exit()
    }
}

fn resolve_calibration(
    cfg: &ExperimentConfig,
    stepper: &ImexStepper,
) -> Result<(CalibrationConstants, BTreeMap<&'static str, Calibrated>), CliError> {
    let p = &cfg.params;
    let spec = &cfg.calibration;
    let c_grad = match spec.c_grad {
        Some(value) => Calibrated { value, source: Source::Config },
        None => {
            let value = measure_grad_envelope(
                stepper.plan(),
                GRAD_PROBE_SAMPLES,
                &GRAD_PROBE_TIMES,
                0.0,
                cfg.seed,
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            Calibrated { value, source: Source::Measured }
        }
    };
    let defaults = CalibrationConstants::defaults(p, c_grad.value);
    let pick = |given: Option<f64>, default: f64| match given {
        Some(value) => Calibrated { value, source: Source::Config },
        None => Calibrated { value: default, source: Source::Default },
    };
    let c_div = pick(spec.c_div, defaults.c_div);
    let c2 = pick(spec.c2, defaults.c2);
    let c_generic = pick(spec.c_generic, defaults.c_generic);
    let cal = CalibrationConstants {
        c_grad: c_grad.value,
        c_div: c_div.value,
        c2: c2.value,
        c_generic: c_generic.value,
    };
    let prov = BTreeMap::from([
        ("c_grad", c_grad),
        ("c_div", c_div),
        ("c2", c2),
        ("c_generic", c_generic),
    ]);
    Ok((cal, prov))
}

/// A requested check that could not be evaluated counts as failed.
fn failed(check: &str, note: String) -> Verdict {
    Verdict {
        check: check.into(),
        pass: false,
        measured: 0.0,
        target: 0.0,
        slack: 0.0,
        transient: 0.0,
        reference: None,
        note: Some(note),
    }
}

fn hypothesis_verdicts(cfg: &ExperimentConfig, k: f64) -> Vec<Verdict> {
    let p = &cfg.params;
    let mut out = Vec::new();
    if cfg.checks.existence {
        let threshold = p.existence_threshold();
        out.push(Verdict {
            check: "existence".into(),
            pass: p.b > threshold,
            measured: p.b,
            target: threshold,
            slack: 0.0,
            transient: 0.0,
            reference: None,
            note: None,
        });
    }
    if cfg.checks.convergence_regime {
        // both flags are Some in convergence mode; params were validated
        let r = validate_params(p, ValidationMode::Convergence { k }).expect("validated params");
        let lambda_ok = r.lambda_ge_half_a.unwrap_or(false);
        out.push(Verdict {
            check: "convergence_regime".into(),
            pass: lambda_ok && r.b_above_k.unwrap_or(false),
            measured: p.b,
            target: k * p.chi * p.mu,
            slack: 0.0,
            transient: 0.0,
            reference: Some(k),
            note: Some(format!("lambda>=a/2: {lambda_ok}")),
        });
    }
    out
}

fn series_verdicts(cfg: &ExperimentConfig, c: &ConstantsReport, records: &[DiagnosticsRecord]) -> Vec<Verdict> {
    let p: &Params = &cfg.params;
    let checks = &cfg.checks;
    let mut out = Vec::new();
    if let Some(b) = &checks.eventual_bound {
        let v = match b.target.or(c.constants.bound_refined) {
            Some(target) => check_eventual_bound(
                records,
                b.selector,
                target,
                b.transient_fraction,
                b.slack,
                b.min_span,
            )
            .unwrap_or_else(|e| failed("eventual_bound", format!("not evaluated: {e}"))),
            None => failed("eventual_bound", "not evaluated: no target configured and b <= N*mu*chi/4".into()),
        };
        out.push(v);
    }
    if let Some(l) = &checks.lyapunov {
        out.push(check_lyapunov(records, p, l.slack).unwrap_or_else(|e| failed("lyapunov", format!("not evaluated: {e}"))));
    }
    if let Some(pc) = &checks.persistence {
        let trend = Some(kslab_core::constants::persistence_trend(
            p,
            c.calibration["c2"].value,
        ));
        let v = check_persistence(records, pc.floor, trend)
            .map(|(v, _)| v)
            .unwrap_or_else(|e| failed("persistence", format!("not evaluated: {e}")));
        out.push(v);
    }
    if let Some(cv) = &checks.convergence {
        out.push(
            check_convergence(records, &cv.criteria())
                .unwrap_or_else(|e| failed("convergence", format!("not evaluated: {e}"))),
        );
    }
    out
}

fn decay_fit(cfg: &ExperimentConfig, records: &[DiagnosticsRecord]) -> Option<DecayFit> {
    let crit = cfg
        .checks
        .convergence
        .map(|c| c.criteria())
        .unwrap_or_default();
    let window = decay_window(records, &crit).ok()?;
    let (alpha, r2) = fit_decay_rate(records, Selector::ErrSum, window).ok()?;
    Some(DecayFit { alpha, r2 })
}

/// Runs the experiment in memory. Errors are configuration problems only;
/// solver breakdown is reported through the outcome's status.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let p = cfg.params;
    let grid = cfg.grid()?;
    let (u0, v0) = cfg.initial_fields()?;
    let s0 = SimState::new(0.0, u0, v0, p).map_err(|e| CliError::Config(e.to_string()))?;
    let stepper = ImexStepper::new(grid);

    let (cal, provenance) = resolve_calibration(cfg, &stepper)?;
    let constants = compute_constants(&p, &cal);
    let radius = data_radius(stepper.plan(), &s0.u, &s0.v).map_err(|e| CliError::Config(e.to_string()))?;
    let constants = ConstantsReport {
        constants,
        existence_threshold: p.existence_threshold(),
        convergence_threshold: constants.k * p.chi * p.mu,
        calibration: provenance,
        c2_structured: structured_c2(p.a, p.lambda, p.dim, cal.c_generic, DEFAULT_BETA, DEFAULT_GAMMA),
        beta: DEFAULT_BETA,
        gamma: DEFAULT_GAMMA,
        data_radius: radius,
        local_horizon: local_horizon(radius, &p, cal.c_div, cal.c_grad),
    };

    let mut records = Vec::new();
    let result = stepper.integrate(&s0, &cfg.control.step_control(), &mut records);
    let mut verdicts = hypothesis_verdicts(cfg, constants.constants.k);
    let report = match result {
        Ok(_) => {
            verdicts.extend(series_verdicts(cfg, &constants, &records));
            VerdictsReport {
                status: RunStatus::Completed,
                divergence_time: None,
                failure: None,
                all_pass: verdicts.iter().all(|v| v.pass),
                final_record: records.last().copied(),
                decay_fit: decay_fit(cfg, &records),
                verdicts,
            }
        }
        Err(e) => {
            let t = match e {
                Error::Divergence { t } | Error::PositivityViolation { t, .. } => t,
                _ => records.last().map_or(0.0, |r| r.t),
            };
            VerdictsReport {
                status: RunStatus::Diverged,
                divergence_time: Some(t),
                failure: Some(e.to_string()),
                all_pass: false,
                final_record: records.last().copied(),
                decay_fit: None,
                verdicts,
            }
        }
    };
    Ok(RunOutcome {
        records,
        constants,
        report,
    })
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::with_capacity(16 + records.len() * 220);
    s.push_str(DiagnosticsRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        let row: Vec<String> = r.as_array().iter().map(|x| fmt_f64(*x)).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes diagnostics, constants, verdicts and the resolved config into
/// `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, outcome: &RunOutcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_file(&dir.join(DIAGNOSTICS_FILE), &diagnostics_csv(&outcome.records))?;
    write_file(&dir.join(CONSTANTS_FILE), &to_json(&outcome.constants))?;
    write_file(&dir.join(VERDICTS_FILE), &to_json(&outcome.report))?;
    write_file(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    Ok(())
}

pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, CliError> {
    let outcome = execute(cfg)?;
    write_outputs(dir, cfg, &outcome)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(b: f64, t_end: f64, regime: bool) -> ExperimentConfig {
        let text = format!(
            r#"
[params]
chi = 1.0
a = 1.0
b = {b}
lambda = 1.0
mu = 1.0
dim = 1
[grid]
extent = 6.283185307179586
points = 64
[initial.u]
kind = "constant-plus-cosine"
base = 0.05
amplitude = 0.02
wavenumber = 1.0
[initial.v]
kind = "constant"
value = 0.05
[control]
dt_max = 0.01
t_end = {t_end}
record_every = 0.1
[checks]
existence = true
convergence_regime = {regime}
[checks.eventual_bound]
[checks.lyapunov]
[checks.persistence]
[checks.convergence]
"#
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn convergent_scenario_passes_everything() {
        let out = execute(&config(10.0, 30.0, false)).unwrap();
        assert_eq!(out.report.status, RunStatus::Completed);
        for v in &out.report.verdicts {
            assert!(v.pass, "{v:?}");
        }
        assert_eq!(out.exit(), Exit::Pass);
        assert_eq!(out.records.len(), 301);
        let fit = out.report.decay_fit.unwrap();
        assert!(fit.alpha > 0.0 && fit.r2 > 0.99);
        assert_eq!(out.constants.calibration["c_grad"].source, Source::Measured);
        assert_eq!(out.constants.calibration["c2"].source, Source::Default);
    }

    #[test]
    fn failed_hypothesis_gives_check_failure() {
        // at a = λ = 1 the threshold Kχμ is about 75, far above b = 10,
        // although the run itself converges
        let out = execute(&config(10.0, 1.0, true)).unwrap();
        assert_eq!(out.report.status, RunStatus::Completed);
        let regime = out.report.verdicts.iter().find(|v| v.check == "convergence_regime").unwrap();
        assert!(!regime.pass);
        assert!(regime.target > 70.0 && regime.target < 80.0);
        assert_eq!(out.exit(), Exit::CheckFailed);
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let out = execute(&config(10.0, 0.3, false)).unwrap();
        let csv = diagnostics_csv(&out.records);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(DiagnosticsRecord::CSV_HEADER));
        for (line, r) in lines.zip(&out.records) {
            let parsed: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            for (a, b) in parsed.iter().zip(r.as_array()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn constants_json_carries_model_constants() {
        let out = execute(&config(10.0, 0.1, false)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&to_json(&out.constants)).unwrap();
        for key in ["theta", "bound_general", "bound_refined", "theta0", "K", "lambda0", "L0_min"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["calibration"]["c_grad"]["source"], "measured");
        assert!((json["theta"].as_f64().unwrap() - 0.025).abs() < 1e-15);
    }
}
