//! Acceptance suite. Each test prints one line
//! `[criterion NN] PASS|FAIL <name>: <measured> vs <tolerance> (<elapsed>)`
//! and asserts the same condition. Tolerances are fixed here.
//!
//! `cargo test -p kslab --test acceptance -- --nocapture`

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use kslab::config::{
    BoundCheck, ChecksSpec, ControlSpec, ConvergenceCheck, ExperimentConfig, FieldSpec, GridSpec,
    InitialSpec, LyapunovCheck, PersistenceCheck,
};
use kslab::run::{execute, run_to_dir, RunOutcome, RunStatus, DIAGNOSTICS_FILE};
use kslab_core::constants::{
    convergence_k, gaussian_tail, gaussian_tail_quadrature, principal_eigenvalue,
    principal_eigenvalue_fd, CalibrationConstants,
};
use kslab_core::harness::{Selector, Verdict};
use kslab_core::imex::{ImexStepper, DEFAULT_NEG_TOL};
use kslab_core::mild::{MildSolver, PicardConfig};
use kslab_core::spectral::{measure_div_envelope, SemigroupPlan};
use kslab_core::{Field, Grid, Params, SimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration, budget: Duration) -> bool {
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    println!(
        "[criterion {id:02}] {} {name}: {detail} ({:.2?} of {:?} budget)",
        if ok { "PASS" } else { "FAIL" },
        elapsed,
        budget
    );
    ok
}

#[test]
fn c01_semigroup_exact_on_eigenmodes() {
    let start = Instant::now();
    let g = Grid::new(1, 2.0 * PI, 256).unwrap();
    let plan = SemigroupPlan::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let n = g.points;
    for _ in 0..20 {
        let k = rng.gen_range(0..=64usize);
        let sigma = rng.gen_range(0.0..2.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let kf = k as f64;
        // keep the multiplier above 1e-3 so relative error stays meaningful
        let t = rng.gen_range(1e-4f64..1.0).min(6.0 / (kf * kf + sigma));
        // exact argument reduction: k·x_j = 2π (k j mod n)/n
        let mode: Vec<f64> = (0..n)
            .map(|j| (2.0 * PI * ((k * j) % n) as f64 / n as f64 + phase).cos())
            .collect();
        let f = Field::from_vec(g, mode.clone()).unwrap();
        let got = plan.apply_semigroup(&f, t, sigma).unwrap();
        let m = (-(kf * kf + sigma) * t).exp();
        let exact = Field::from_vec(g, mode.iter().map(|c| m * c).collect()).unwrap();
        worst = worst.max(got.sup_distance(&exact).unwrap() / exact.sup_norm());
    }
    let ok = report(
        1,
        "semigroup on Fourier modes",
        worst <= 1e-12,
        format!("max rel err {worst:.3e} <= 1e-12"),
        start.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
}

#[test]
fn c02_divergence_smoothing_envelope() {
    let start = Instant::now();
    let times = [1e-3, 1e-2, 1e-1, 1.0];
    let mut worst = 0.0f64;
    for (dim, points) in [(1, 2048), (2, 256)] {
        let plan = SemigroupPlan::new(Grid::new(dim, 2.0 * PI, points).unwrap());
        let limit = dim as f64 / PI.sqrt();
        for sigma in [0.0, 1.0] {
            let c = measure_div_envelope(&plan, 100, &times, sigma, 202 + dim as u64).unwrap();
            worst = worst.max(c / limit);
        }
    }
    let ok = report(
        2,
        "divergence smoothing envelope (1D 2048, 2D 256^2)",
        worst <= 1.01,
        format!("max ratio to (N/sqrt(pi)) t^-1/2 e^-sigma t = {worst:.4} <= 1.01"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

#[test]
fn c03_mild_and_imex_agree() {
    let start = Instant::now();
    let g = Grid::new(1, 2.0 * PI, 512).unwrap();
    let u = Field::from_fn(g, |x| 0.5 + 0.1 * x[0].cos()).unwrap();
    let s0 = SimState::new(0.0, u, Field::constant(g, 0.5), Params::unit(1)).unwrap();
    let mild = MildSolver::new(g)
        .picard_solve(&s0, 0.02, &PicardConfig::default())
        .unwrap();
    let stepper = ImexStepper::new(g);
    let mut s = s0.clone();
    for _ in 0..200 {
        s = stepper.step(&s, 1e-4, DEFAULT_NEG_TOL).unwrap();
    }
    let last = mild.last();
    let diff = s.u.sup_distance(&last.u).unwrap().max(s.v.sup_distance(&last.v).unwrap());
    let ok = report(
        3,
        "Picard vs exponential Euler at t = 0.02",
        diff <= 1e-4,
        format!("sup diff {diff:.3e} <= 1e-4 ({} Picard iterations)", mild.iterations),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

const BOX: f64 = 16.0 * PI;

fn long_run_config(seed: u64, u: FieldSpec, v: FieldSpec) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        output_dir: None,
        params: Params::unit(1),
        grid: GridSpec { extent: BOX, points: 512 },
        initial: InitialSpec { u, v },
        control: ControlSpec {
            dt_max: 0.01,
            cfl_safety: 0.5,
            neg_tol: DEFAULT_NEG_TOL,
            t_end: 50.0,
            record_every: 0.1,
        },
        checks: ChecksSpec {
            existence: true,
            eventual_bound: Some(BoundCheck {
                selector: Selector::SupU,
                target: Some(4.0 / 3.0),
                slack: 0.05,
                transient_fraction: 0.5,
                min_span: 50.0,
            }),
            lyapunov: Some(LyapunovCheck { slack: 0.05 }),
            persistence: Some(PersistenceCheck { floor: Some(0.5) }),
            ..Default::default()
        },
        calibration: Default::default(),
    }
}

fn band() -> FieldSpec {
    FieldSpec::RandomUniform { low: 0.1, high: 2.0, knots: Some(64) }
}

fn random_run_config(seed: u64) -> ExperimentConfig {
    long_run_config(seed, band(), band())
}

struct LongRuns {
    random: Vec<RunOutcome>,
    small: RunOutcome,
    elapsed: Duration,
}

fn long_runs() -> &'static LongRuns {
    static RUNS: OnceLock<LongRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let random = (1..=5).map(|seed| execute(&random_run_config(seed)).unwrap()).collect();
        let small = execute(&long_run_config(
            0,
            FieldSpec::ConstantPlusCosine { base: 0.01, amplitude: 0.005, wavenumber: 1.0, axis: 0 },
            FieldSpec::Constant { value: 0.01 },
        ))
        .unwrap();
        LongRuns { random, small, elapsed: start.elapsed() }
    })
}

fn verdict<'a>(o: &'a RunOutcome, check: &str) -> &'a Verdict {
    assert_eq!(o.report.status, RunStatus::Completed, "{:?}", o.report.failure);
    o.report.verdicts.iter().find(|v| v.check == check).unwrap()
}

#[test]
fn c04_eventual_sup_bound() {
    let runs = long_runs();
    let worst = runs
        .random
        .iter()
        .map(|o| verdict(o, "eventual_bound").measured)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = runs.random.iter().all(|o| verdict(o, "eventual_bound").pass) && worst <= 1.4;
    let ok = report(
        4,
        "tail-half sup u, five random data",
        pass,
        format!("max {worst:.6} <= 1.4000 (4/3 + 5%)"),
        runs.elapsed,
        Duration::from_secs(120),
    );
    assert!(ok);
}

#[test]
fn c05_lyapunov_bound() {
    let runs = long_runs();
    let p = Params::unit(1);
    let level = (2.0 * p.lambda + p.a).powi(2) / (2.0 * p.lambda * p.chi * (4.0 * p.b - p.mu * p.chi));
    let mut pass = true;
    let mut worst_ratio = 0.0f64;
    for o in &runs.random {
        let v = verdict(o, "lyapunov");
        let initial = o.records[0].lyapunov_sup;
        let ceiling = initial.max(level) * 1.05;
        // every record, re-derived from the series
        let max = o.records.iter().map(|r| r.lyapunov_sup).fold(f64::NEG_INFINITY, f64::max);
        worst_ratio = worst_ratio.max(max / ceiling);
        pass &= v.pass && max <= ceiling;
    }
    let ok = report(
        5,
        "Lyapunov functional comparison bound",
        pass,
        format!("max lyapunov_sup / ceiling = {worst_ratio:.6} <= 1"),
        Duration::ZERO,
        Duration::from_secs(1),
    );
    assert!(ok);
}

#[test]
fn c06_persistence() {
    let runs = long_runs();
    let all: Vec<&RunOutcome> = runs.random.iter().chain(std::iter::once(&runs.small)).collect();
    let floor = all
        .iter()
        .map(|o| verdict(o, "persistence").measured)
        .fold(f64::INFINITY, f64::min);
    let pass = all.iter().all(|o| verdict(o, "persistence").pass) && floor >= 0.5;
    let ok = report(
        6,
        "tail inf u, five random runs plus small data",
        pass,
        format!("min tail inf u {floor:.6} >= 0.5"),
        runs.elapsed,
        Duration::from_secs(120),
    );
    assert!(ok);
}

fn convergence_config(extent: f64, points: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed: 0,
        output_dir: None,
        params: Params::new(1.0, 1.0, 10.0, 1.0, 1.0, 1).unwrap(),
        grid: GridSpec { extent, points },
        initial: InitialSpec {
            u: FieldSpec::ConstantPlusCosine { base: 0.05, amplitude: 0.02, wavenumber: 1.0, axis: 0 },
            v: FieldSpec::Constant { value: 0.05 },
        },
        control: ControlSpec {
            dt_max: 0.01,
            cfl_safety: 0.5,
            neg_tol: DEFAULT_NEG_TOL,
            t_end: 40.0,
            record_every: 0.1,
        },
        checks: ChecksSpec {
            existence: true,
            convergence: Some(ConvergenceCheck {
                tol_final: 1e-6,
                min_r2: 0.99,
                transient_fraction: 0.25,
                fit_floor: 1e-12,
            }),
            ..Default::default()
        },
        calibration: Default::default(),
    }
}

/// (final err_u + err_v, alpha, r²)
fn convergence_run(extent: f64, points: usize) -> (f64, f64, f64, bool) {
    let o = execute(&convergence_config(extent, points)).unwrap();
    let v = verdict(&o, "convergence");
    let fit = o.report.decay_fit.unwrap();
    let last = o.records.last().unwrap();
    (last.err_u + last.err_v, fit.alpha, fit.r2, v.pass)
}

#[test]
fn c07_exponential_convergence() {
    let start = Instant::now();
    let (err, alpha, r2, verdict_pass) = convergence_run(2.0 * PI, 256);
    let pass = verdict_pass && err <= 1e-6 && alpha > 0.0 && r2 >= 0.99;
    let ok = report(
        7,
        "convergence to the homogeneous state at b = 10",
        pass,
        format!("final err {err:.3e} <= 1e-6, alpha {alpha:.4} > 0, r2 {r2:.6} >= 0.99"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

#[test]
fn c08_principal_eigenvalue_two_routes() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for dim in 1..=3 {
        for l0 in [2.0, 5.0, 10.0] {
            let exact = principal_eigenvalue(1.0, l0, dim);
            let fd = principal_eigenvalue_fd(1.0, l0, dim, 4096);
            worst = worst.max((fd - exact).abs() / exact.abs());
        }
    }
    let ok = report(
        8,
        "Bessel-zero eigenvalue vs radial finite volumes",
        worst <= 1e-4,
        format!("max rel diff {worst:.3e} <= 1e-4"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

#[test]
fn c09_gaussian_tails() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for r in [0.0, 0.5, 1.0, 2.0, 4.0] {
        for dim in 1..=3 {
            for m in 0..=1 {
                let a = gaussian_tail(r, dim, m);
                let q = gaussian_tail_quadrature(r, dim, m);
                worst = worst.max((a - q).abs() / q.abs());
            }
        }
    }
    let anchor = (gaussian_tail(1.0, 1, 1) - (-1.0f64).exp()).abs();
    let ok = report(
        9,
        "incomplete gamma vs quadrature",
        worst <= 1e-10 && anchor <= 1e-12,
        format!("max rel diff {worst:.3e} <= 1e-10, |tail(1,N=1,m=1) - 1/e| {anchor:.1e} <= 1e-12"),
        start.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
}

#[test]
fn c10_large_lambda_threshold_limit() {
    let start = Instant::now();
    let p = Params::new(1.0, 1.0, 1.0, 1e6, 1.0, 1).unwrap();
    let cal = CalibrationConstants { c2: p.a, c_generic: 1.0, ..CalibrationConstants::defaults(&p, 1.0) };
    let (theta0, k) = convergence_k(p.a, p.lambda, 1, &cal);
    let reference = 1.0 / 0.281;
    let rel = (k - reference).abs() / reference;
    let ok = report(
        10,
        "threshold multiplier K as lambda grows",
        rel <= 0.02,
        format!("theta0 {theta0:.6}, K {k:.5} = N/{:.4}, rel diff to N/0.281 {rel:.4} <= 0.02", 1.0 / k),
        start.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
}

#[test]
fn c11_domain_doubling() {
    let start = Instant::now();
    let (err, alpha, _, _) = convergence_run(2.0 * PI, 256);
    let (err2, alpha2, _, _) = convergence_run(4.0 * PI, 512);
    let d_err = (err2 - err).abs() / err;
    let d_alpha = (alpha2 - alpha).abs() / alpha;
    let ok = report(
        11,
        "doubled periodic box",
        d_err < 0.01 && d_alpha < 0.01,
        format!("rel change: final err {d_err:.3e} < 0.01, alpha {d_alpha:.3e} < 0.01"),
        start.elapsed(),
        Duration::from_secs(120),
    );
    assert!(ok);
}

#[test]
fn c12_reproducible_diagnostics() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = random_run_config(1);
    let read = |dir: &Path| std::fs::read(dir.join(DIAGNOSTICS_FILE)).unwrap();
    let a = tmp.path().join("first");
    let b = tmp.path().join("second");
    run_to_dir(&cfg, &a).unwrap();
    run_to_dir(&cfg, &b).unwrap();
    let (x, y) = (read(&a), read(&b));
    let ok = report(
        12,
        "repeated run, byte-identical diagnostics",
        x == y && !x.is_empty(),
        format!("{} bytes, identical: {}", x.len(), x == y),
        start.elapsed(),
        Duration::from_secs(300),
    );
    assert!(ok);
}
