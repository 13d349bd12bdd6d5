//! Closed-form thresholds, bounds and auxiliary quantities as pure functions
//! of the coefficients.
//!
//! The generic constants that the estimates leave unspecified are carried
//! explicitly in [`CalibrationConstants`] so every derived number can be
//! traced back to a stated input.

use std::f64::consts::PI;

use serde::Serialize;

use crate::types::Params;

/// Default β for the structured C₂ (any γ−1 < β < 1/2 is admissible).
pub const DEFAULT_BETA: f64 = 0.4;
/// Default γ for the structured C₂ (any γ ∈ (1, 3/2) is admissible).
pub const DEFAULT_GAMMA: f64 = 1.3;

/// First positive zeros j_{N/2−1,1} of the Bessel function J_{N/2−1}.
const BESSEL_ZEROS: [f64; 3] = [
    PI / 2.0,           // j_{-1/2,1}
    2.404_825_557_695_773, // j_{0,1}
    PI,                 // j_{1/2,1}
];

/// Explicit values for the smoothing and generic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationConstants {
    /// Empirical gradient-smoothing constant.
    pub c_grad: f64,
    /// Divergence-smoothing constant, N/√π by default.
    pub c_div: f64,
    /// Stand-in for C₂ in the convergence threshold.
    pub c2: f64,
    /// Stand-in for the generic C in the convergence threshold.
    pub c_generic: f64,
}

impl CalibrationConstants {
    /// c_div = N/√π, c2 = a, c_generic = 1 with the supplied `c_grad`.
    pub fn defaults(p: &Params, c_grad: f64) -> Self {
        Self {
            c_grad,
            c_div: p.dim as f64 / PI.sqrt(),
            c2: p.a,
            c_generic: 1.0,
        }
    }
}

/// C₂ = max{C λ^{γ−β−3/2} a^{β+3/2} √π N^{−2} + C λ^{γ−β−1} a^{β+1} N^{−1}, a}.
pub fn structured_c2(a: f64, lambda: f64, dim: usize, c_generic: f64, beta: f64, gamma: f64) -> f64 {
    let n = dim as f64;
    let first = c_generic * lambda.powf(gamma - beta - 1.5) * a.powf(beta + 1.5) * PI.sqrt() / (n * n)
        + c_generic * lambda.powf(gamma - beta - 1.0) * a.powf(beta + 1.0) / n;
    first.max(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConstants {
    /// Nμχ/(4b).
    pub theta: f64,
    /// (2λ+a)²/(2λ(4b−Nμχ)); `None` when b ≤ Nμχ/4.
    pub bound_general: Option<f64>,
    /// 4a/(4b−Nμχ); `None` when b ≤ Nμχ/4.
    pub bound_refined: Option<f64>,
    pub steady_u: f64,
    pub steady_v: f64,
    pub theta0: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// Principal Dirichlet eigenvalue on the ball of radius `l0_min`.
    pub lambda0: f64,
    #[serde(rename = "L0_min")]
    pub l0_min: f64,
}

pub fn compute_constants(p: &Params, cal: &CalibrationConstants) -> ModelConstants {
    let n = p.dim as f64;
    let theta = n * p.mu * p.chi / (4.0 * p.b);
    let gap = 4.0 * p.b - n * p.mu * p.chi;
    let (bound_general, bound_refined) = if gap > 0.0 {
        (
            Some((2.0 * p.lambda + p.a).powi(2) / (2.0 * p.lambda * gap)),
            Some(4.0 * p.a / gap),
        )
    } else {
        (None, None)
    };
    let (steady_u, steady_v) = p.steady_state();
    let (theta0, k) = convergence_k(p.a, p.lambda, p.dim, cal);
    let l0_min = minimal_ball_radius(p.a, p.dim);
    ModelConstants {
        theta,
        bound_general,
        bound_refined,
        steady_u,
        steady_v,
        theta0,
        k,
        lambda0: principal_eigenvalue(p.a, l0_min, p.dim),
        l0_min,
    }
}

/// Largest θ₀ ∈ (0,1) with 2C₂θ/((1−θ)²a) ≤ 1/6 and
/// 8Cλ^{−1/2}a^{1/2}πθ/(N(1−θ)) ≤ 1/12, and K = N/(4θ₀).
pub fn convergence_k(a: f64, lambda: f64, dim: usize, cal: &CalibrationConstants) -> (f64, f64) {
    let n = dim as f64;
    let first = |th: f64| 2.0 * cal.c2 * th / ((1.0 - th).powi(2) * a) - 1.0 / 6.0;
    let second = |th: f64| {
        8.0 * cal.c_generic * lambda.powf(-0.5) * a.sqrt() * PI * th / (n * (1.0 - th)) - 1.0 / 12.0
    };
    let theta0 = bisect_increasing_root(first).min(bisect_increasing_root(second));
    (theta0, n / (4.0 * theta0))
}

/// Left endpoint of the bracket around the root of an increasing function
/// on (0, 1) that is negative at 0⁺ and tends to +∞ at 1⁻.
fn bisect_increasing_root(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// j_{N/2−1,1}.
pub fn first_bessel_zero(dim: usize) -> f64 {
    BESSEL_ZEROS[dim - 1]
}

/// Principal eigenvalue of Δφ + (a/2)φ = λφ on B_{L0} with Dirichlet data.
pub fn principal_eigenvalue(a: f64, l0: f64, dim: usize) -> f64 {
    let j = first_bessel_zero(dim);
    a / 2.0 - (j / l0).powi(2)
}

/// Same eigenvalue from a finite-volume discretization of the radial
/// Dirichlet Laplacian on `nodes` cells, solved by inverse iteration.
pub fn principal_eigenvalue_fd(a: f64, l0: f64, dim: usize, nodes: usize) -> f64 {
    let n = nodes;
    let h = l0 / n as f64;
    let nd = dim as f64;
    // face areas r^{N−1} at r = (i+1)h; the face at the origin carries no flux
    let area = |i: usize| ((i + 1) as f64 * h).powi(dim as i32 - 1);
    let weight: Vec<f64> = (0..n)
        .map(|i| (((i + 1) as f64 * h).powi(dim as i32) - (i as f64 * h).powi(dim as i32)) / (nd * h))
        .collect();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { area(i - 1) };
        let right = if i == n - 1 { 2.0 * area(i) } else { area(i) };
        diag[i] = (left + right) / (h * h);
        if i + 1 < n {
            off[i] = -area(i) / (h * h);
        }
    }

    let mut x: Vec<f64> = (0..n).map(|i| 1.0 - (i as f64 + 0.5) / n as f64).collect();
    let mut kappa = f64::INFINITY;
    for _ in 0..500 {
        let rhs: Vec<f64> = x.iter().zip(&weight).map(|(x, w)| x * w).collect();
        let mut y = solve_symmetric_tridiagonal(&diag, &off, &rhs);
        let norm = y.iter().zip(&weight).map(|(y, w)| y * y * w).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let mut num = 0.0;
        for i in 0..n {
            let mut sy = diag[i] * y[i];
            if i > 0 {
                sy += off[i - 1] * y[i - 1];
            }
            if i + 1 < n {
                sy += off[i] * y[i + 1];
            }
            num += y[i] * sy;
        }
        let next = num; // y is W-normalized
        let done = (next - kappa).abs() <= 1e-15 * next.abs();
        kappa = next;
        x = y;
        if done {
            break;
        }
    }
    a / 2.0 - kappa
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn solve_symmetric_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        c[i] = if i + 1 < n { off[i] / m } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// max(1, j_{N/2−1,1}·√(2/a)·(1 + 1e−9)).
pub fn minimal_ball_radius(a: f64, dim: usize) -> f64 {
    (first_bessel_zero(dim) * (2.0 / a).sqrt() * (1.0 + 1e-9)).max(1.0)
}

/// T(ε) = max(1, ln(M/ε)/λ).
pub fn persistence_t(epsilon: f64, m: f64, lambda: f64) -> f64 {
    ((m / epsilon).ln() / lambda).max(1.0)
}

/// |S^{N−1}|.
fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(dim as f64 / 2.0) / gamma(dim as f64 / 2.0),
    }
}

/// ∫_{ℝ^N∖B_R} |z|^m e^{−|z|²} dz = |S^{N−1}| · Γ((N+m)/2, R²) / 2.
pub fn gaussian_tail(r: f64, dim: usize, moment: u32) -> f64 {
    let s = (dim as f64 + moment as f64) / 2.0;
    sphere_area(dim) * 0.5 * upper_incomplete_gamma(s, r * r)
}

/// The same tail by adaptive Simpson quadrature of the radial integral.
pub fn gaussian_tail_quadrature(r: f64, dim: usize, moment: u32) -> f64 {
    let power = dim as i32 - 1 + moment as i32;
    let f = |rho: f64| rho.powi(power) * (-rho * rho).exp();
    let upper = (r * r + 80.0).sqrt();
    // split so each panel sees a comparable share of the mass
    let panels = 64;
    let width = (upper - r) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = r + i as f64 * width;
        let hi = if i + 1 == panels { upper } else { lo + width };
        total += adaptive_simpson(&f, lo, hi, 1e-14, 50);
    }
    sphere_area(dim) * total
}

/// `rel_tol` is relative to the panel's own integral.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, rel_tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * rel_tol * (left + right).abs() {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, rel_tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, rel_tol, depth - 1)
}

/// Γ(s) by the Lanczos approximation (g = 7, 9 terms).
pub fn gamma(s: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if s < 0.5 {
        return PI / ((PI * s).sin() * gamma(1.0 - s));
    }
    let x = s - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// Upper incomplete gamma Γ(s, x) = ∫ₓ^∞ t^{s−1} e^{−t} dt for s > 0, x ≥ 0.
///
/// Series for the lower function when x < s + 1, Lentz continued fraction
/// otherwise.
pub fn upper_incomplete_gamma(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return gamma(s);
    }
    let prefactor = (s * x.ln() - x).exp();
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut denom = s;
        for _ in 0..1000 {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        gamma(s) - prefactor * sum
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        prefactor * h
    }
}

/// Smallest L ≥ `l0_min` with
/// max(tail₀, tail₁)(L/(2√(2T))) ≤ ε.
pub fn persistence_l(epsilon: f64, t: f64, dim: usize, l0_min: f64) -> f64 {
    let scale = 2.0 * (2.0 * t).sqrt();
    let worst = |l: f64| {
        let r = l / scale;
        gaussian_tail(r, dim, 0).max(gaussian_tail(r, dim, 1))
    };
    if worst(l0_min) <= epsilon {
        return l0_min;
    }
    let mut lo = l0_min;
    let mut hi = 2.0 * l0_min.max(scale);
    while worst(hi) > epsilon {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if worst(mid) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// M̃ = max{1 + μM/(λπ^{N/2}) + μ/λ, 1 + μπ^{−N/2}λ^{−1/2}Γ(1/2)(M + 1)}.
pub fn step1_m_tilde(lambda: f64, mu: f64, m: f64, dim: usize) -> f64 {
    let pi_half_n = PI.powf(dim as f64 / 2.0);
    let gamma_half = PI.sqrt();
    let first = 1.0 + mu * m / (lambda * pi_half_n) + mu / lambda;
    let second = 1.0
        + mu / pi_half_n * lambda.powf(-0.5) * gamma_half * m
        + mu / pi_half_n * lambda.powf(-0.5) * gamma_half;
    first.max(second)
}

/// a/b − C₂θ/(b(1−θ)²): the lower trend for the density (informational,
/// C₂ is generic).
pub fn persistence_trend(p: &Params, c2: f64) -> f64 {
    let theta = p.dim as f64 * p.mu * p.chi / (4.0 * p.b);
    p.a / p.b - c2 * theta / (p.b * (1.0 - theta).powi(2))
}
