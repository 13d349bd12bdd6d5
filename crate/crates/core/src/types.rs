//! Parameters, periodic grids, grid functions and simulation state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the chemotaxis system plus the spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Chemotactic sensitivity χ.
    pub chi: f64,
    /// Intrinsic growth rate.
    pub a: f64,
    /// Logistic damping.
    pub b: f64,
    /// Chemical decay rate.
    pub lambda: f64,
    /// Chemical production rate.
    pub mu: f64,
    /// Spatial dimension N ∈ {1, 2, 3}.
    pub dim: usize,
}

impl Params {
    pub fn new(chi: f64, a: f64, b: f64, lambda: f64, mu: f64, dim: usize) -> Result<Self> {
        let p = Self {
            chi,
            a,
            b,
            lambda,
            mu,
            dim,
        };
        p.check()?;
        Ok(p)
    }

    /// Unit coefficients in dimension `dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            chi: 1.0,
            a: 1.0,
            b: 1.0,
            lambda: 1.0,
            mu: 1.0,
            dim,
        }
    }

    pub fn check(&self) -> Result<()> {
        let named = [
            ("chi", self.chi),
            ("a", self.a),
            ("b", self.b),
            ("lambda", self.lambda),
            ("mu", self.mu),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidParameter(format!(
                "dim must be 1, 2 or 3, got {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Nμχ/4, the damping level above which global bounded solutions exist.
    pub fn existence_threshold(&self) -> f64 {
        self.dim as f64 * self.mu * self.chi / 4.0
    }

    /// Homogeneous positive equilibrium (a/b, μa/(λb)).
    pub fn steady_state(&self) -> (f64, f64) {
        let u = self.a / self.b;
        (u, self.mu * u / self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidationMode {
    Existence,
    /// Convergence regime check; `k` is the threshold multiplier from
    /// [`crate::constants::convergence_k`].
    Convergence { k: f64 },
}

/// Classification of a parameter set against the standing hypotheses.
/// Nothing here is an error: failing a hypothesis is data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    /// b > Nμχ/4.
    pub existence: bool,
    /// λ ≥ a/2, only evaluated in convergence mode.
    pub lambda_ge_half_a: Option<bool>,
    /// b > Kχμ, only evaluated in convergence mode.
    pub b_above_k: Option<bool>,
}

impl ValidationReport {
    pub fn all_hold(&self) -> bool {
        self.existence && self.lambda_ge_half_a.unwrap_or(true) && self.b_above_k.unwrap_or(true)
    }
}

pub fn validate_params(p: &Params, mode: ValidationMode) -> Result<ValidationReport> {
    p.check()?;
    let existence = p.b > p.existence_threshold();
    let (lambda_ge_half_a, b_above_k) = match mode {
        ValidationMode::Existence => (None, None),
        ValidationMode::Convergence { k } => (
            Some(p.lambda >= p.a / 2.0),
            Some(p.b > k * p.chi * p.mu),
        ),
    };
    Ok(ValidationReport {
        existence,
        lambda_ge_half_a,
        b_above_k,
    })
}

/// Uniform periodic grid on the torus [0, extent)^dim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {extent}")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {points}"
            )));
        }
        Ok(Self { dim, extent, points })
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    /// Total number of nodes, points^dim.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat node index; axis 0 varies slowest.
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    /// Physical coordinates of a flat node index.
    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }

    /// Same grid with twice the extent and twice the points per axis.
    pub fn doubled(&self) -> Self {
        Self {
            dim: self.dim,
            extent: 2.0 * self.extent,
            points: 2 * self.points,
        }
    }
}

/// Scalar grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn from_vec(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    /// Values are not checked for finiteness; used internally by solvers
    /// that run their own divergence detection.
    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self::from_vec(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.min() >= -tol
    }

    /// sup |self − other|.
    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs())))
    }

    /// sup |self − c|.
    pub fn sup_distance_to(&self, c: f64) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max((x - c).abs()))
    }
}

/// Vector grid function with `dim` components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn from_components(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim {
            return Err(Error::InvalidArgument(format!(
                "vector field has {} components, grid dimension is {}",
                components.len(),
                grid.dim
            )));
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(Error::InvalidArgument("component length mismatch".into()));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { grid, components })
    }

    pub(crate) fn from_components_unchecked(grid: Grid, components: Vec<Vec<f64>>) -> Self {
        Self { grid, components }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    /// max over components of the component sup-norms.
    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise squared Euclidean magnitude.
    pub fn magnitude_squared(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for c in &self.components {
            for (o, x) in out.iter_mut().zip(c) {
                *o += x * x;
            }
        }
        out
    }

    /// sup_x |w(x)| with the Euclidean norm at each node.
    pub fn sup_magnitude(&self) -> f64 {
        self.magnitude_squared()
            .into_iter()
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// The pair (u, v) at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub params: Params,
}

impl SimState {
    pub fn new(t: f64, u: Field, v: Field, params: Params) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::GridMismatch);
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
        }
        params.check()?;
        if params.dim != u.grid().dim {
            return Err(Error::InvalidArgument(format!(
                "params dimension {} differs from grid dimension {}",
                params.dim,
                u.grid().dim
            )));
        }
        Ok(Self { t, u, v, params })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}
