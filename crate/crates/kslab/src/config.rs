//! Experiment configuration: the TOML schema, its validation, and the
//! initial-condition generators.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use kslab_core::harness::{ConvergenceCriteria, Selector};
use kslab_core::imex::{StepControl, DEFAULT_NEG_TOL};
use kslab_core::{Field, Grid, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// RNG stream used for the initial density.
pub const U_STREAM: u64 = 0;
/// RNG stream used for the initial chemical concentration.
pub const V_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of every stochastic initial-condition generator.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub params: Params,
    pub grid: GridSpec,
    pub initial: InitialSpec,
    pub control: ControlSpec,
    #[serde(default)]
    pub checks: ChecksSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Side length of the periodic box.
    pub extent: f64,
    /// Nodes per axis; a power of two, at least 8.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub u: FieldSpec,
    pub v: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// base + amplitude·cos(wavenumber·x_axis). The wavenumber must fit the
    /// box: wavenumber·extent/(2π) an integer.
    ConstantPlusCosine {
        base: f64,
        amplitude: f64,
        wavenumber: f64,
        #[serde(default)]
        axis: usize,
    },
    /// Independent uniform values on a lattice of `knots` points per axis,
    /// joined by a cosine-blended interpolant, so every node lies in
    /// [low, high]. `knots = points` gives independent values per node.
    RandomUniform {
        low: f64,
        high: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        knots: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub dt_max: f64,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default = "default_neg_tol")]
    pub neg_tol: f64,
    pub t_end: f64,
    pub record_every: f64,
}

fn default_cfl_safety() -> f64 {
    0.5
}

fn default_neg_tol() -> f64 {
    DEFAULT_NEG_TOL
}

impl ControlSpec {
    pub fn step_control(&self) -> StepControl {
        StepControl {
            dt_max: self.dt_max,
            cfl_safety: self.cfl_safety,
            neg_tol: self.neg_tol,
            t_end: self.t_end,
            record_every: self.record_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    /// b > Nμχ/4.
    #[serde(default)]
    pub existence: bool,
    /// λ ≥ a/2 and b > Kχμ.
    #[serde(default)]
    pub convergence_regime: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eventual_bound: Option<BoundCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persistence: Option<PersistenceCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceCheck>,
}

impl ChecksSpec {
    pub fn any(&self) -> bool {
        self.existence
            || self.convergence_regime
            || self.eventual_bound.is_some()
            || self.lyapunov.is_some()
            || self.persistence.is_some()
            || self.convergence.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheck {
    #[serde(default = "default_selector")]
    pub selector: Selector,
    /// Defaults to the refined bound 4a/(4b−Nμχ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_half")]
    pub transient_fraction: f64,
    #[serde(default)]
    pub min_span: f64,
}

fn default_selector() -> Selector {
    Selector::SupU
}

fn default_slack() -> f64 {
    0.05
}

fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovCheck {
    #[serde(default = "default_slack")]
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersistenceCheck {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceCheck {
    #[serde(default = "default_tol_final")]
    pub tol_final: f64,
    #[serde(default = "default_min_r2")]
    pub min_r2: f64,
    #[serde(default = "default_transient")]
    pub transient_fraction: f64,
    #[serde(default = "default_fit_floor")]
    pub fit_floor: f64,
}

fn default_tol_final() -> f64 {
    ConvergenceCriteria::default().tol_final
}

fn default_min_r2() -> f64 {
    ConvergenceCriteria::default().min_r2
}

fn default_transient() -> f64 {
    ConvergenceCriteria::default().transient_fraction
}

fn default_fit_floor() -> f64 {
    ConvergenceCriteria::default().fit_floor
}

impl ConvergenceCheck {
    pub fn criteria(&self) -> ConvergenceCriteria {
        ConvergenceCriteria {
            tol_final: self.tol_final,
            min_r2: self.min_r2,
            transient_fraction: self.transient_fraction,
            fit_floor: self.fit_floor,
        }
    }
}

/// Explicit calibration constants. Anything left out is measured
/// (`c_grad`) or takes its default (`c_div = N/√π`, `c2 = a`,
/// `c_generic = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_grad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_div: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_generic: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {x}")))
    }
}

fn fraction(name: &str, x: f64) -> Result<(), CliError> {
    if (0.0..1.0).contains(&x) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0, 1), got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.params.dim, self.grid.extent, self.grid.points)
            .map_err(|e| invalid(e.to_string()))
    }

    /// Full schema validation; nothing is computed or written before this
    /// passes.
    pub fn validate(&self) -> Result<(), CliError> {
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(invalid(format!("seed must be <= {}, got {}", i64::MAX, self.seed)));
        }
        self.params.check().map_err(|e| invalid(e.to_string()))?;
        let grid = self.grid()?;
        self.control
            .step_control()
            .check()
            .map_err(|e| invalid(e.to_string()))?;
        positive("control.t_end", self.control.t_end)?;
        for (name, spec) in [("initial.u", &self.initial.u), ("initial.v", &self.initial.v)] {
            spec.validate(&grid).map_err(|e| invalid(format!("{name}: {e}")))?;
        }
        let c = &self.checks;
        if let Some(b) = &c.eventual_bound {
            if let Some(t) = b.target {
                positive("checks.eventual_bound.target", t)?;
            }
            if !(b.slack >= 0.0 && b.slack.is_finite()) {
                return Err(invalid("checks.eventual_bound.slack must be >= 0"));
            }
            fraction("checks.eventual_bound.transient_fraction", b.transient_fraction)?;
            if !(b.min_span >= 0.0 && b.min_span.is_finite()) {
                return Err(invalid("checks.eventual_bound.min_span must be >= 0"));
            }
        }
        if let Some(l) = &c.lyapunov {
            if !(l.slack >= 0.0 && l.slack.is_finite()) {
                return Err(invalid("checks.lyapunov.slack must be >= 0"));
            }
        }
        if let Some(floor) = c.persistence.and_then(|p| p.floor) {
            positive("checks.persistence.floor", floor)?;
        }
        if let Some(cv) = &c.convergence {
            positive("checks.convergence.tol_final", cv.tol_final)?;
            positive("checks.convergence.fit_floor", cv.fit_floor)?;
            if !(0.0..=1.0).contains(&cv.min_r2) {
                return Err(invalid("checks.convergence.min_r2 must lie in [0, 1]"));
            }
            fraction("checks.convergence.transient_fraction", cv.transient_fraction)?;
        }
        let cal = &self.calibration;
        for (name, v) in [
            ("c_grad", cal.c_grad),
            ("c_div", cal.c_div),
            ("c2", cal.c2),
            ("c_generic", cal.c_generic),
        ] {
            if let Some(v) = v {
                positive(&format!("calibration.{name}"), v)?;
            }
        }
        Ok(())
    }

    /// Initial density and concentration on the configured grid.
    pub fn initial_fields(&self) -> Result<(Field, Field), CliError> {
        let grid = self.grid()?;
        let u = self.initial.u.build(&grid, self.seed, U_STREAM)?;
        let v = self.initial.v.build(&grid, self.seed, V_STREAM)?;
        Ok((u, v))
    }
}

impl FieldSpec {
    fn validate(&self, grid: &Grid) -> Result<(), String> {
        let finite = |name: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite, got {x}"))
            }
        };
        match *self {
            FieldSpec::Constant { value } => {
                finite("value", value)?;
                if value < 0.0 {
                    return Err(format!("value must be >= 0, got {value}"));
                }
            }
            FieldSpec::ConstantPlusCosine {
                base,
                amplitude,
                wavenumber,
                axis,
            } => {
                finite("base", base)?;
                finite("amplitude", amplitude)?;
                finite("wavenumber", wavenumber)?;
                if base - amplitude.abs() < 0.0 {
                    return Err("base - |amplitude| must be >= 0".into());
                }
                if axis >= grid.dim {
                    return Err(format!("axis {axis} out of range for dimension {}", grid.dim));
                }
                let periods = wavenumber * grid.extent / (2.0 * PI);
                if (periods - periods.round()).abs() > 1e-9 * periods.abs().max(1.0) {
                    return Err(format!(
                        "wavenumber {wavenumber} is not periodic on extent {}",
                        grid.extent
                    ));
                }
            }
            FieldSpec::RandomUniform { low, high, knots } => {
                finite("low", low)?;
                finite("high", high)?;
                if !(0.0 <= low && low < high) {
                    return Err(format!("need 0 <= low < high, got [{low}, {high}]"));
                }
                let k = knots.unwrap_or_else(|| default_knots(grid.points));
                if k == 0 || k > grid.points {
                    return Err(format!("knots must lie in 1..={}, got {k}", grid.points));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self, grid: &Grid, seed: u64, stream: u64) -> Result<Field, CliError> {
        self.validate(grid).map_err(invalid)?;
        let field = match *self {
            FieldSpec::Constant { value } => Ok(Field::constant(*grid, value)),
            FieldSpec::ConstantPlusCosine {
                base,
                amplitude,
                wavenumber,
                axis,
            } => Field::from_fn(*grid, |x| base + amplitude * (wavenumber * x[axis]).cos()),
            FieldSpec::RandomUniform { low, high, knots } => {
                let k = knots.unwrap_or_else(|| default_knots(grid.points));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let lattice: Vec<f64> = (0..k.pow(grid.dim as u32))
                    .map(|_| rng.gen_range(low..high))
                    .collect();
                Field::from_vec(*grid, blend(grid, k, &lattice))
            }
        };
        field.map_err(|e| invalid(e.to_string()))
    }
}

/// Eight grid nodes per knot.
pub fn default_knots(points: usize) -> usize {
    (points / 8).max(1)
}

/// Tensor-product cosine blend of a periodic `k`-per-axis lattice onto the
/// grid nodes. Weights are a partition of unity, so the range is preserved.
fn blend(grid: &Grid, k: usize, lattice: &[f64]) -> Vec<f64> {
    let n = grid.points;
    // per-node (left knot, weight of right knot)
    let axis: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let s = (i * k) as f64 / n as f64;
            let j = s.floor();
            (j as usize, 0.5 * (1.0 - (PI * (s - j)).cos()))
        })
        .collect();
    (0..grid.len())
        .map(|flat| {
            let idx = grid.unravel(flat);
            let mut acc = 0.0;
            for corner in 0..(1usize << grid.dim) {
                let mut w = 1.0;
                let mut pos = 0;
                for (d, &i) in idx.iter().enumerate().take(grid.dim) {
                    let (j, r) = axis[i];
                    let (j, wd) = if corner >> d & 1 == 1 { ((j + 1) % k, r) } else { (j, 1.0 - r) };
                    w *= wd;
                    pos = pos * k + j;
                }
                acc += w * lattice[pos];
            }
            acc
        })
        .collect()
}
