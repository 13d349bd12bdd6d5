//! Fourier-multiplier realization of the semigroup e^{t(Δ−σI)} on the
//! periodic grid, its compositions with ∇ and ∇·, plain spectral
//! derivatives, and empirical smoothing-envelope measurement.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::types::{Field, Grid, VectorField};

/// Multipliers below this are flushed to zero.
const MULTIPLIER_FLUSH: f64 = 1e-300;

/// Precomputed wavenumbers and FFT plans for one grid. Read-only after
/// construction; every call allocates its own scratch.
pub struct SemigroupPlan {
    grid: Grid,
    wavenumbers: Vec<f64>,
    /// |k|² per flat mode.
    k2: Vec<f64>,
    /// Per-axis first-derivative wavenumber per flat mode (Nyquist zeroed).
    k_axis: Vec<Vec<f64>>,
    /// Modes kept by the 2/3 rule.
    dealias: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SemigroupPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemigroupPlan").field("grid", &self.grid).finish()
    }
}

impl SemigroupPlan {
    pub fn new(grid: Grid) -> Self {
        let n = grid.points;
        let scale = 2.0 * std::f64::consts::PI / grid.extent;
        let wavenumbers: Vec<f64> = (0..n)
            .map(|j| {
                let signed = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                signed * scale
            })
            .collect();

        let len = grid.len();
        let mut k2 = vec![0.0; len];
        let mut k_axis = vec![vec![0.0; len]; grid.dim];
        let mut dealias = vec![true; len];
        let cutoff = n / 3;
        for m in 0..len {
            let idx = grid.unravel(m);
            for axis in 0..grid.dim {
                let j = idx[axis];
                let k = wavenumbers[j];
                k2[m] += k * k;
                k_axis[axis][m] = if j == n / 2 { 0.0 } else { k };
                let signed = if j <= n / 2 { j } else { n - j };
                if signed > cutoff {
                    dealias[m] = false;
                }
            }
        }

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Self {
            grid,
            wavenumbers,
            k2,
            k_axis,
            dealias,
            forward,
            inverse,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Angular wavenumbers per axis index, in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub(crate) fn k2(&self) -> &[f64] {
        &self.k2
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if *grid != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points;
        let dim = self.grid.dim;
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); n];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let outer = n.pow(axis as u32);
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * n * stride + i;
                    for (j, c) in line.iter_mut().enumerate() {
                        *c = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, c) in line.iter().enumerate() {
                        data[base + j * stride] = *c;
                    }
                }
            }
        }
    }

    /// Unnormalized forward DFT of real grid values.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse DFT including the 1/len normalization; returns real parts.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &self.inverse);
        let norm = 1.0 / self.grid.len() as f64;
        spectrum.into_iter().map(|c| c.re * norm).collect()
    }

    /// exp(−(|k|² + σ)t) per flat mode.
    pub fn heat_multiplier(&self, t: f64, sigma: f64) -> Vec<f64> {
        self.k2
            .iter()
            .map(|&k2| {
                let m = (-(k2 + sigma) * t).exp();
                if m < MULTIPLIER_FLUSH {
                    0.0
                } else {
                    m
                }
            })
            .collect()
    }

    /// Zeroes the modes outside the 2/3-rule band.
    pub(crate) fn dealias_in_place(&self, spectrum: &mut [Complex64]) {
        for (c, keep) in spectrum.iter_mut().zip(&self.dealias) {
            if !keep {
                *c = Complex64::default();
            }
        }
    }

    /// e^{t(Δ−σI)} f.
    pub fn apply_semigroup(&self, f: &Field, t: f64, sigma: f64) -> Result<Field> {
        self.check_grid(f.grid())?;
        check_time_shift(t, sigma, false)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        let mut spec = self.forward(f.values());
        let mult = self.heat_multiplier(t, sigma);
        for (c, m) in spec.iter_mut().zip(&mult) {
            *c *= *m;
        }
        Ok(Field::from_vec_unchecked(self.grid, self.inverse_real(spec)))
    }

    /// ∇ e^{t(Δ−σI)} f; requires t > 0.
    pub fn apply_semigroup_grad(&self, f: &Field, t: f64, sigma: f64) -> Result<VectorField> {
        self.check_grid(f.grid())?;
        check_time_shift(t, sigma, true)?;
        let spec = self.forward(f.values());
        let mult = self.heat_multiplier(t, sigma);
        Ok(self.gradient_of_spectrum(&spec, Some(&mult)))
    }

    /// e^{t(Δ−σI)} ∇·w; requires t > 0.
    pub fn apply_semigroup_div(&self, w: &VectorField, t: f64, sigma: f64) -> Result<Field> {
        self.check_grid(w.grid())?;
        check_time_shift(t, sigma, true)?;
        let mut spec = self.divergence_spectrum(w);
        let mult = self.heat_multiplier(t, sigma);
        for (c, m) in spec.iter_mut().zip(&mult) {
            *c *= *m;
        }
        Ok(Field::from_vec_unchecked(self.grid, self.inverse_real(spec)))
    }

    pub fn gradient(&self, f: &Field) -> Result<VectorField> {
        self.check_grid(f.grid())?;
        let spec = self.forward(f.values());
        Ok(self.gradient_of_spectrum(&spec, None))
    }

    pub fn laplacian(&self, f: &Field) -> Result<Field> {
        self.check_grid(f.grid())?;
        let mut spec = self.forward(f.values());
        for (c, k2) in spec.iter_mut().zip(&self.k2) {
            *c *= -k2;
        }
        Ok(Field::from_vec_unchecked(self.grid, self.inverse_real(spec)))
    }

    pub fn divergence(&self, w: &VectorField) -> Result<Field> {
        self.check_grid(w.grid())?;
        let spec = self.divergence_spectrum(w);
        Ok(Field::from_vec_unchecked(self.grid, self.inverse_real(spec)))
    }

    /// Σ_d i k_d ŵ_d.
    pub(crate) fn divergence_spectrum(&self, w: &VectorField) -> Vec<Complex64> {
        let mut acc = vec![Complex64::default(); self.grid.len()];
        for (axis, comp) in w.components().iter().enumerate() {
            let spec = self.forward(comp);
            for ((a, c), k) in acc.iter_mut().zip(spec).zip(&self.k_axis[axis]) {
                *a += Complex64::new(0.0, *k) * c;
            }
        }
        acc
    }

    /// Real-space gradient of a spectrum, optionally pre-multiplied.
    pub(crate) fn gradient_of_spectrum(
        &self,
        spec: &[Complex64],
        multiplier: Option<&[f64]>,
    ) -> VectorField {
        let components = (0..self.grid.dim)
            .map(|axis| {
                let d: Vec<Complex64> = spec
                    .iter()
                    .enumerate()
                    .map(|(m, c)| {
                        let scaled = match multiplier {
                            Some(mult) => c * mult[m],
                            None => *c,
                        };
                        Complex64::new(0.0, self.k_axis[axis][m]) * scaled
                    })
                    .collect();
                self.inverse_real(d)
            })
            .collect();
        VectorField::from_components_unchecked(self.grid, components)
    }
}

fn check_time_shift(t: f64, sigma: f64, strictly_positive_t: bool) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    let ok = if strictly_positive_t { t > 0.0 } else { t >= 0.0 };
    if !(t.is_finite() && ok) {
        let need = if strictly_positive_t { "> 0" } else { ">= 0" };
        return Err(Error::InvalidArgument(format!("time must be {need}, got {t}")));
    }
    Ok(())
}

/// Random field with iid entries uniform in [−1, 1], rescaled to unit
/// sup-norm.
pub fn random_unit_field(grid: Grid, rng: &mut impl Rng) -> Field {
    let mut values: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values.iter_mut().for_each(|v| *v /= sup);
    Field::from_vec_unchecked(grid, values)
}

/// Random vector field whose component sup-norm is one.
pub fn random_unit_vector_field(grid: Grid, rng: &mut impl Rng) -> VectorField {
    let mut comps: Vec<Vec<f64>> = (0..grid.dim)
        .map(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let sup = comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    comps.iter_mut().flatten().for_each(|v| *v /= sup);
    VectorField::from_components_unchecked(grid, comps)
}

/// Largest observed ‖∇e^{t(Δ−σI)}f‖∞ · t^{1/2} e^{σt} over `samples` random
/// unit-sup-norm fields and the given times. This is the empirical
/// gradient-smoothing constant used as `c_grad`.
pub fn measure_grad_envelope(
    plan: &SemigroupPlan,
    samples: usize,
    times: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let f = random_unit_field(*plan.grid(), &mut rng);
        let spec = plan.forward(f.values());
        for &t in times {
            check_time_shift(t, sigma, true)?;
            let mult = plan.heat_multiplier(t, sigma);
            let g = plan.gradient_of_spectrum(&spec, Some(&mult));
            worst = worst.max(g.sup_norm() * t.sqrt() * (sigma * t).exp());
        }
    }
    Ok(worst)
}

/// Same sweep for the divergence composition: largest
/// ‖e^{t(Δ−σI)}∇·w‖∞ · t^{1/2} e^{σt} over random unit vector fields.
pub fn measure_div_envelope(
    plan: &SemigroupPlan,
    samples: usize,
    times: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let w = random_unit_vector_field(*plan.grid(), &mut rng);
        let spec = plan.divergence_spectrum(&w);
        for &t in times {
            check_time_shift(t, sigma, true)?;
            let mult = plan.heat_multiplier(t, sigma);
            let d: Vec<Complex64> = spec.iter().zip(&mult).map(|(c, m)| c * m).collect();
            let out = plan.inverse_real(d);
            let sup = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(sup * t.sqrt() * (sigma * t).exp());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(points: usize) -> Grid {
        Grid::new(1, 2.0 * PI, points).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn constant_decays_by_zero_mode() {
        let g = circle(64);
        let plan = SemigroupPlan::new(g);
        let out = plan.apply_semigroup(&Field::constant(g, 1.0), 0.5, 1.0).unwrap();
        assert_close(out.values(), &vec![(-0.5f64).exp(); 64], 1e-15);
        assert!((0.6065307 - (-0.5f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn cosine_eigenmode() {
        let g = circle(64);
        let plan = SemigroupPlan::new(g);
        let f = Field::from_fn(g, |x| x[0].cos()).unwrap();
        let out = plan.apply_semigroup(&f, 1.0, 0.0).unwrap();
        let expect: Vec<f64> = f.values().iter().map(|c| c * (-1.0f64).exp()).collect();
        assert_close(out.values(), &expect, 1e-14);
    }

    #[test]
    fn zero_time_is_identity() {
        let g = circle(32);
        let plan = SemigroupPlan::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_unit_field(g, &mut rng);
        assert_eq!(plan.apply_semigroup(&f, 0.0, 2.0).unwrap(), f);
    }

    #[test]
    fn mean_preserved_without_shift() {
        let g = circle(128);
        let plan = SemigroupPlan::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = Field::from_vec(g, (0..128).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
        let out = plan.apply_semigroup(&f, 0.3, 0.0).unwrap();
        assert!((out.mean() - f.mean()).abs() <= 1e-12 * f.mean().abs());
    }

    #[test]
    fn grad_of_constant_and_sine() {
        let g = circle(64);
        let plan = SemigroupPlan::new(g);
        let z = plan.apply_semigroup_grad(&Field::constant(g, 3.0), 0.1, 0.0).unwrap();
        assert!(z.sup_norm() < 1e-15);
        let f = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let d = plan.apply_semigroup_grad(&f, 1.0, 0.0).unwrap();
        let expect: Vec<f64> = (0..64).map(|i| g.coords(i)[0].cos() * (-1.0f64).exp()).collect();
        assert_close(d.component(0), &expect, 1e-14);
    }

    #[test]
    fn grad_and_div_reject_zero_time() {
        let g = circle(16);
        let plan = SemigroupPlan::new(g);
        let f = Field::constant(g, 1.0);
        assert!(plan.apply_semigroup_grad(&f, 0.0, 0.0).is_err());
        assert!(plan.apply_semigroup_div(&VectorField::zeros(g), 0.0, 0.0).is_err());
        assert!(plan.apply_semigroup(&f, -1.0, 0.0).is_err());
        assert!(plan.apply_semigroup(&f, 1.0, -0.1).is_err());
        let other = Field::constant(circle(32), 1.0);
        assert_eq!(plan.apply_semigroup(&other, 1.0, 0.0), Err(Error::GridMismatch));
    }

    #[test]
    fn div_examples() {
        let g = circle(64);
        let plan = SemigroupPlan::new(g);
        let w = VectorField::from_components(g, vec![vec![2.0; 64]]).unwrap();
        assert!(plan.apply_semigroup_div(&w, 0.5, 0.0).unwrap().sup_norm() < 1e-15);
        let w = VectorField::from_components(g, vec![(0..64).map(|i| g.coords(i)[0].sin()).collect()]).unwrap();
        let out = plan.apply_semigroup_div(&w, 1.0, 0.0).unwrap();
        let expect: Vec<f64> = (0..64).map(|i| g.coords(i)[0].cos() * (-1.0f64).exp()).collect();
        assert_close(out.values(), &expect, 1e-14);
    }

    #[test]
    fn derivatives_of_modes() {
        let g = circle(64);
        let plan = SemigroupPlan::new(g);
        let s = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let grad = plan.gradient(&s).unwrap();
        let lap = plan.laplacian(&s).unwrap();
        let cos: Vec<f64> = (0..64).map(|i| g.coords(i)[0].cos()).collect();
        let neg_sin: Vec<f64> = s.values().iter().map(|v| -v).collect();
        assert_close(grad.component(0), &cos, 1e-12);
        assert_close(lap.values(), &neg_sin, 1e-12);

        let s2 = Field::from_fn(g, |x| (2.0 * x[0]).sin()).unwrap();
        let lap2 = plan.laplacian(&s2).unwrap();
        let expect: Vec<f64> = s2.values().iter().map(|v| -4.0 * v).collect();
        assert_close(lap2.values(), &expect, 1e-12);

        let c = Field::constant(g, 7.0);
        assert!(plan.gradient(&c).unwrap().sup_norm() < 1e-14);
        assert!(plan.laplacian(&c).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn derivatives_in_three_dimensions() {
        let g = Grid::new(3, 2.0 * PI, 8).unwrap();
        let plan = SemigroupPlan::new(g);
        let f = Field::from_fn(g, |x| x[0].sin() + (2.0 * x[1]).cos() + x[2].sin()).unwrap();
        let grad = plan.gradient(&f).unwrap();
        let lap = plan.laplacian(&f).unwrap();
        for i in 0..g.len() {
            let x = g.coords(i);
            assert!((grad.component(0)[i] - x[0].cos()).abs() < 1e-12);
            assert!((grad.component(1)[i] + 2.0 * (2.0 * x[1]).sin()).abs() < 1e-12);
            assert!((grad.component(2)[i] - x[2].cos()).abs() < 1e-12);
            let expect = -x[0].sin() - 4.0 * (2.0 * x[1]).cos() - x[2].sin();
            assert!((lap.values()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_envelope_is_finite_and_below_one_over_root_pi() {
        let g = Grid::new(1, 2.0 * PI, 1024).unwrap();
        let plan = SemigroupPlan::new(g);
        let c = measure_grad_envelope(&plan, 20, &[1e-3, 1e-2, 1e-1, 1.0], 0.0, 5).unwrap();
        assert!(c.is_finite() && c > 0.0);
        // on ℝ the sharp 1D constant is ∫|G'| = 1/√π; allow slight discrete excess
        assert!(c <= 1.01 / PI.sqrt(), "c = {c}");
    }
}
