//! Short-time solution of the system as the fixed point of its Duhamel map
//!
//! ```text
//! u(t) = e^{t(Δ−λ)}u₀ − χ∫₀ᵗ e^{(t−s)(Δ−λ)}∇·(u∇v) ds + ∫₀ᵗ e^{(t−s)(Δ−λ)} u(a+λ−bu) ds
//! v(t) = e^{t(Δ−λ)}v₀ + μ∫₀ᵗ e^{(t−s)(Δ−λ)} u ds
//! ```
//!
//! The time integrals use product integration: the integrand is frozen at
//! the right end of each subinterval and the semigroup is integrated
//! exactly against it, mode by mode. This captures the (t−s)^{−1/2}
//! smoothing of the gradient terms without resolving it by nodes.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::CalibrationConstants;
use crate::error::{Error, Result};
use crate::spectral::SemigroupPlan;
use crate::types::{Field, Grid, Params, SimState, VectorField};

/// Slack kept below one in the contraction condition.
pub const HORIZON_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub max_iter: usize,
    /// Sup-norm tolerance on ‖Φ(x) − x‖.
    pub tol: f64,
    /// Time nodes per horizon, endpoints included.
    pub quad_nodes: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-12,
            quad_nodes: 201,
        }
    }
}

impl PicardConfig {
    pub fn check(&self) -> Result<()> {
        if self.max_iter < 1 || !(self.tol > 0.0) || self.quad_nodes < 2 {
            return Err(Error::InvalidArgument(format!(
                "PicardConfig needs max_iter >= 1, tol > 0, quad_nodes >= 2: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Largest T with
/// 4R·c_div·χ√T + (λ+a+2Rb)T + μT + 2μ·c_grad√T ≤ 1 − margin.
pub fn local_horizon(r: f64, p: &Params, c_div: f64, c_grad: f64) -> f64 {
    let quad = p.lambda + p.a + 2.0 * r * p.b + p.mu;
    let lin = 4.0 * r * c_div * p.chi + 2.0 * p.mu * c_grad;
    let rhs = 1.0 - HORIZON_MARGIN;
    // quad·s² + lin·s − rhs = 0 in s = √T, written to avoid cancellation
    let s = 2.0 * rhs / (lin + (lin * lin + 4.0 * quad * rhs).sqrt());
    s * s
}

/// max(‖u₀‖∞, ‖v₀‖∞ + ‖∇v₀‖∞).
pub fn data_radius(plan: &SemigroupPlan, u0: &Field, v0: &Field) -> Result<f64> {
    let grad = plan.gradient(v0)?.sup_magnitude();
    Ok(u0.sup_norm().max(v0.sup_norm() + grad))
}

/// −χ∇·(u∇v) evaluated spectrally.
pub fn chemotaxis_term(plan: &SemigroupPlan, u: &Field, v: &Field, chi: f64) -> Result<Field> {
    let grad = plan.gradient(v)?;
    let flux = flux_of(u, &grad);
    let div = plan.divergence(&flux)?;
    let vals = div.into_values().into_iter().map(|d| -chi * d).collect();
    Ok(Field::from_vec_unchecked(*u.grid(), vals))
}

fn flux_of(u: &Field, grad_v: &VectorField) -> VectorField {
    let comps = grad_v
        .components()
        .iter()
        .map(|g| g.iter().zip(u.values()).map(|(g, u)| g * u).collect())
        .collect();
    VectorField::from_components_unchecked(*u.grid(), comps)
}

#[derive(Debug, Clone)]
pub struct PicardSolution {
    /// States at the quadrature nodes t_i = iT/(quad_nodes − 1).
    pub states: Vec<SimState>,
    pub iterations: usize,
    /// ‖x_{k+1} − x_k‖ per iteration in the norm sup_t(‖u‖∞ + ‖v‖_{C¹}).
    pub differences: Vec<f64>,
    /// ‖Φ(x) − x‖ of the returned trajectory.
    pub residual: f64,
}

impl PicardSolution {
    pub fn last(&self) -> &SimState {
        self.states.last().expect("trajectory has at least two nodes")
    }

    /// Ratios of successive iterate differences.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.differences.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

pub struct MildSolver {
    plan: SemigroupPlan,
}

impl MildSolver {
    pub fn new(grid: Grid) -> Self {
        Self {
            plan: SemigroupPlan::new(grid),
        }
    }

    pub fn plan(&self) -> &SemigroupPlan {
        &self.plan
    }

    /// Contraction horizon for the initial data of `s0`.
    pub fn certified_horizon(&self, s0: &SimState, cal: &CalibrationConstants) -> Result<f64> {
        let r = data_radius(&self.plan, &s0.u, &s0.v)?;
        Ok(local_horizon(r, &s0.params, cal.c_div, cal.c_grad))
    }

    /// Fixed point of the discretized Duhamel map on [s0.t, s0.t + horizon].
    ///
    /// The horizon should not exceed [`Self::certified_horizon`]; beyond it
    /// the iteration may fail to settle, reported as
    /// [`Error::ContractionFailure`].
    pub fn picard_solve(&self, s0: &SimState, horizon: f64, cfg: &PicardConfig) -> Result<PicardSolution> {
        cfg.check()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
        }
        let grid = *s0.grid();
        if *self.plan.grid() != grid {
            return Err(Error::GridMismatch);
        }
        if s0.u.min() < 0.0 || s0.v.min() < 0.0 {
            return Err(Error::InvalidArgument("initial data must be nonnegative".into()));
        }
        let p = s0.params;
        let plan = &self.plan;
        let n = cfg.quad_nodes - 1;
        let h = horizon / n as f64;
        let modes = grid.len();

        // decay[i][k] = e^{−(|k|²+λ) i h}; weight[k] = (1 − e^{−(|k|²+λ)h})/(|k|²+λ)
        let rates: Vec<f64> = plan.k2().iter().map(|k2| k2 + p.lambda).collect();
        let decay: Vec<Vec<f64>> = (0..=n)
            .map(|i| {
                let t = i as f64 * h;
                rates.iter().map(|c| (-c * t).exp()).collect()
            })
            .collect();
        let weight: Vec<f64> = rates.iter().map(|c| -(-c * h).exp_m1() / c).collect();

        let u0_hat = plan.forward(s0.u.values());
        let v0_hat = plan.forward(s0.v.values());

        // iterate, stored spectrally per node
        let mut u_hat: Vec<Vec<Complex64>> = vec![u0_hat.clone(); n + 1];
        let mut v_hat: Vec<Vec<Complex64>> = vec![v0_hat.clone(); n + 1];
        let mut differences = Vec::new();

        for iteration in 1..=cfg.max_iter {
            // nonlinear integrands at nodes 1..=n
            let mut forcing: Vec<Vec<Complex64>> = Vec::with_capacity(n + 1);
            forcing.push(Vec::new());
            for j in 1..=n {
                let u = Field::from_vec_unchecked(grid, plan.inverse_real(u_hat[j].clone()));
                let grad_v = plan.gradient_of_spectrum(&v_hat[j], None);
                let div = plan.divergence_spectrum(&flux_of(&u, &grad_v));
                let reaction: Vec<f64> = u
                    .values()
                    .iter()
                    .map(|u| u * (p.a + p.lambda - p.b * u))
                    .collect();
                let react_hat = plan.forward(&reaction);
                forcing.push(
                    react_hat
                        .iter()
                        .zip(&div)
                        .map(|(r, d)| r - d * p.chi)
                        .collect(),
                );
            }

            let mut u_new = Vec::with_capacity(n + 1);
            let mut v_new = Vec::with_capacity(n + 1);
            u_new.push(u0_hat.clone());
            v_new.push(v0_hat.clone());
            for i in 1..=n {
                let mut un: Vec<Complex64> = (0..modes).map(|k| u0_hat[k] * decay[i][k]).collect();
                let mut vn: Vec<Complex64> = (0..modes).map(|k| v0_hat[k] * decay[i][k]).collect();
                for j in 1..=i {
                    // subinterval [t_{j−1}, t_j] seen from t_i
                    let lag = &decay[i - j];
                    let f = &forcing[j];
                    let uj = &u_hat[j];
                    for k in 0..modes {
                        let w = lag[k] * weight[k];
                        un[k] += f[k] * w;
                        vn[k] += uj[k] * (p.mu * w);
                    }
                }
                u_new.push(un);
                v_new.push(vn);
            }

            let diff = self.trajectory_distance(&u_new, &u_hat, &v_new, &v_hat);
            if !diff.is_finite() {
                return Err(Error::ContractionFailure {
                    iterations: iteration,
                    last_difference: diff,
                });
            }
            differences.push(diff);
            if diff <= cfg.tol {
                let states = (0..=n)
                    .map(|i| SimState {
                        t: s0.t + i as f64 * h,
                        u: Field::from_vec_unchecked(grid, plan.inverse_real(u_hat[i].clone())),
                        v: Field::from_vec_unchecked(grid, plan.inverse_real(v_hat[i].clone())),
                        params: p,
                    })
                    .collect();
                return Ok(PicardSolution {
                    states,
                    iterations: iteration,
                    differences,
                    residual: diff,
                });
            }
            u_hat = u_new;
            v_hat = v_new;
        }
        Err(Error::ContractionFailure {
            iterations: cfg.max_iter,
            last_difference: *differences.last().unwrap_or(&f64::NAN),
        })
    }

    /// sup over nodes of ‖Δu‖∞ + ‖Δv‖∞ + ‖∇Δv‖∞.
    fn trajectory_distance(
        &self,
        u_a: &[Vec<Complex64>],
        u_b: &[Vec<Complex64>],
        v_a: &[Vec<Complex64>],
        v_b: &[Vec<Complex64>],
    ) -> f64 {
        let plan = &self.plan;
        let mut worst = 0.0f64;
        for i in 0..u_a.len() {
            let du: Vec<Complex64> = u_a[i].iter().zip(&u_b[i]).map(|(a, b)| a - b).collect();
            let dv: Vec<Complex64> = v_a[i].iter().zip(&v_b[i]).map(|(a, b)| a - b).collect();
            let su = sup(&plan.inverse_real(du));
            let sv = sup(&plan.inverse_real(dv.clone()));
            let sg = plan.gradient_of_spectrum(&dv, None).sup_magnitude();
            worst = worst.max(su + sv + sg);
        }
        worst
    }
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
