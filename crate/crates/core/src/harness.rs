//! Diagnostics of a state and verdicts on eventual bounds, persistence and
//! exponential convergence computed from diagnostic series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SemigroupPlan;
use crate::types::{Params, SimState};

/// Norms of one state. Field order is the diagnostics CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub sup_u: f64,
    pub inf_u: f64,
    pub sup_v: f64,
    /// sup |∇v|.
    pub sup_grad_v: f64,
    /// sup |Δv|.
    pub sup_lap_v: f64,
    /// sup_x [u/χ + |∇v|²/(2μ)].
    pub lyapunov_sup: f64,
    /// sup |u − a/b|.
    pub err_u: f64,
    /// sup |v − μa/(λb)|.
    pub err_v: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,sup_u,inf_u,sup_v,sup_grad_v,sup_lap_v,lyapunov_sup,err_u,err_v";

    pub fn as_array(&self) -> [f64; 9] {
        [
            self.t,
            self.sup_u,
            self.inf_u,
            self.sup_v,
            self.sup_grad_v,
            self.sup_lap_v,
            self.lyapunov_sup,
            self.err_u,
            self.err_v,
        ]
    }

    pub fn from_array(v: [f64; 9]) -> Self {
        Self {
            t: v[0],
            sup_u: v[1],
            inf_u: v[2],
            sup_v: v[3],
            sup_grad_v: v[4],
            sup_lap_v: v[5],
            lyapunov_sup: v[6],
            err_u: v[7],
            err_v: v[8],
        }
    }
}

/// Which quantity of a record a check looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    SupU,
    InfU,
    SupV,
    SupGradV,
    SupLapV,
    LyapunovSup,
    ErrU,
    ErrV,
    /// err_u + err_v.
    ErrSum,
}

impl Selector {
    pub fn get(&self, r: &DiagnosticsRecord) -> f64 {
        match self {
            Selector::SupU => r.sup_u,
            Selector::InfU => r.inf_u,
            Selector::SupV => r.sup_v,
            Selector::SupGradV => r.sup_grad_v,
            Selector::SupLapV => r.sup_lap_v,
            Selector::LyapunovSup => r.lyapunov_sup,
            Selector::ErrU => r.err_u,
            Selector::ErrV => r.err_v,
            Selector::ErrSum => r.err_u + r.err_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub measured: f64,
    pub target: f64,
    pub slack: f64,
    /// Length of the discarded initial transient (time units).
    pub transient: f64,
    /// Informational companion value (e.g. a fitted rate or a trend floor).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

pub fn diagnostics(plan: &SemigroupPlan, s: &SimState) -> Result<DiagnosticsRecord> {
    let p = &s.params;
    let grad = plan.gradient(&s.v)?;
    let lap = plan.laplacian(&s.v)?;
    let g2 = grad.magnitude_squared();
    let lyapunov_sup = s
        .u
        .values()
        .iter()
        .zip(&g2)
        .map(|(u, g)| u / p.chi + g / (2.0 * p.mu))
        .fold(f64::NEG_INFINITY, f64::max);
    let (us, vs) = p.steady_state();
    Ok(DiagnosticsRecord {
        t: s.t,
        sup_u: s.u.max(),
        inf_u: s.u.min(),
        sup_v: s.v.max(),
        sup_grad_v: g2.iter().fold(0.0f64, |m, g| m.max(*g)).sqrt(),
        sup_lap_v: lap.sup_norm(),
        lyapunov_sup,
        err_u: s.u.sup_distance_to(us),
        err_v: s.v.sup_distance_to(vs),
    })
}

/// 2/min(a, λ): the shortest series span accepted by the tail checks.
pub fn relaxation_span(p: &Params) -> f64 {
    2.0 / p.a.min(p.lambda)
}

/// `measured ≤ ceiling` up to a few ulps, so that ceilings formed as
/// target·(1+slack) are not lost to rounding.
fn within(measured: f64, ceiling: f64) -> bool {
    measured <= ceiling + 4.0 * f64::EPSILON * ceiling.abs()
}

fn tail_start(series: &[DiagnosticsRecord], transient_fraction: f64) -> f64 {
    let t0 = series.first().map_or(0.0, |r| r.t);
    let t1 = series.last().map_or(0.0, |r| r.t);
    t0 + transient_fraction * (t1 - t0)
}

/// Max of the selected quantity over the tail (after `transient_fraction`
/// of the series span) against target·(1+slack).
pub fn check_eventual_bound(
    series: &[DiagnosticsRecord],
    selector: Selector,
    target: f64,
    transient_fraction: f64,
    slack: f64,
    min_span: f64,
) -> Result<Verdict> {
    let span = match (series.first(), series.last()) {
        (Some(first), Some(last)) if series.len() >= 2 => last.t - first.t,
        _ => return Err(Error::SeriesTooShort(format!("{} records", series.len()))),
    };
    if span < min_span {
        return Err(Error::SeriesTooShort(format!(
            "span {span} is shorter than the required {min_span}"
        )));
    }
    let start = tail_start(series, transient_fraction);
    let measured = series
        .iter()
        .filter(|r| r.t >= start)
        .map(|r| selector.get(r))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Verdict {
        check: "eventual_bound".into(),
        pass: within(measured, target * (1.0 + slack)),
        measured,
        target,
        slack,
        transient: start - series[0].t,
        reference: None,
        note: None,
    })
}

/// Every record of the Lyapunov functional against
/// max(initial, (2λ+a)²/(2λχ(4b−Nμχ)))·(1+slack).
pub fn check_lyapunov(series: &[DiagnosticsRecord], p: &Params, slack: f64) -> Result<Verdict> {
    let first = series
        .first()
        .ok_or_else(|| Error::SeriesTooShort("empty series".into()))?;
    let gap = 4.0 * p.b - p.dim as f64 * p.mu * p.chi;
    if gap <= 0.0 {
        return Err(Error::InvalidArgument(
            "Lyapunov comparison bound requires b > Nμχ/4".into(),
        ));
    }
    let level = (2.0 * p.lambda + p.a).powi(2) / (2.0 * p.lambda * p.chi * gap);
    let target = first.lyapunov_sup.max(level);
    let measured = series
        .iter()
        .map(|r| r.lyapunov_sup)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Verdict {
        check: "lyapunov".into(),
        pass: within(measured, target * (1.0 + slack)),
        measured,
        target,
        slack,
        transient: 0.0,
        reference: Some(level),
        note: None,
    })
}

/// Tail infimum of the density. Passes iff it is strictly positive and at
/// least `floor` when one is supplied. Returns the verdict and the floor m.
pub fn check_persistence(
    series: &[DiagnosticsRecord],
    floor: Option<f64>,
    trend: Option<f64>,
) -> Result<(Verdict, f64)> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort(format!("{} records", series.len())));
    }
    if series[0].inf_u <= 0.0 {
        return Err(Error::InvalidArgument(
            "persistence check needs a positive initial infimum".into(),
        ));
    }
    let start = tail_start(series, 0.5);
    let m = series
        .iter()
        .filter(|r| r.t >= start)
        .map(|r| r.inf_u)
        .fold(f64::INFINITY, f64::min);
    let target = floor.unwrap_or(0.0);
    let pass = m > 0.0 && m >= target;
    Ok((
        Verdict {
            check: "persistence".into(),
            pass,
            measured: m,
            target,
            slack: 0.0,
            transient: start - series[0].t,
            reference: trend,
            note: None,
        },
        m,
    ))
}

/// Least-squares line through (t, ln value) for records with
/// t ∈ [window.0, window.1]. Returns (α, r²) with α = −slope.
pub fn fit_decay_rate(
    series: &[DiagnosticsRecord],
    selector: Selector,
    window: (f64, f64),
) -> Result<(f64, f64)> {
    let mut pts = Vec::new();
    for r in series.iter().filter(|r| r.t >= window.0 && r.t <= window.1) {
        let value = selector.get(r);
        if !(value > 0.0) {
            return Err(Error::NonPositiveWindow { t: r.t, value });
        }
        pts.push((r.t, value.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::SeriesTooShort(format!(
            "{} points in fit window [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt == 0.0 {
        return Err(Error::SeriesTooShort("fit window has a single time".into()));
    }
    let slope = sty / stt;
    let ss_res: f64 = pts
        .iter()
        .map(|(t, y)| {
            let e = y - (my + slope * (t - mt));
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok((-slope, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    /// Final err_u + err_v must not exceed this.
    pub tol_final: f64,
    pub min_r2: f64,
    /// Fit window starts after this fraction of the series span.
    pub transient_fraction: f64,
    /// Records whose error is below this are treated as round-off and
    /// excluded from the fit.
    pub fit_floor: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            tol_final: 1e-6,
            min_r2: 0.99,
            transient_fraction: 0.25,
            fit_floor: 1e-12,
        }
    }
}

/// Fit window for the decay of err_u + err_v: from the end of the transient
/// up to the last record still above the round-off floor. Falls back to the
/// start of the series when the tail is already at the floor.
pub fn decay_window(series: &[DiagnosticsRecord], crit: &ConvergenceCriteria) -> Result<(f64, f64)> {
    let above: Vec<&DiagnosticsRecord> = series
        .iter()
        .take_while(|r| Selector::ErrSum.get(r) >= crit.fit_floor)
        .collect();
    let last = above
        .last()
        .ok_or_else(|| Error::SeriesTooShort("no record above the fit floor".into()))?;
    let start = tail_start(series, crit.transient_fraction);
    let in_tail = above.iter().filter(|r| r.t >= start).count();
    let from = if in_tail >= 3 { start } else { series[0].t };
    Ok((from, last.t))
}

pub fn check_convergence(
    series: &[DiagnosticsRecord],
    crit: &ConvergenceCriteria,
) -> Result<Verdict> {
    let last = series
        .last()
        .ok_or_else(|| Error::SeriesTooShort("empty series".into()))?;
    let final_err = Selector::ErrSum.get(last);
    let window = decay_window(series, crit)?;
    let (alpha, r2) = fit_decay_rate(series, Selector::ErrSum, window)?;
    let pass = final_err <= crit.tol_final && alpha > 0.0 && r2 >= crit.min_r2;
    Ok(Verdict {
        check: "convergence".into(),
        pass,
        measured: final_err,
        target: crit.tol_final,
        slack: 0.0,
        transient: window.0 - series[0].t,
        reference: Some(alpha),
        note: Some(format!("alpha={alpha:.6e} r2={r2:.6} window=[{}, {}]", window.0, window.1)),
    })
}
