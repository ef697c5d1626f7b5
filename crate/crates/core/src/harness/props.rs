//! Randomized invariant checks across the crate. Every check is seeded, so a
//! given [`PropertyOptions`] always yields the same report.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::transcript;
use crate::error::Result;
use crate::geometry::{prox, FeasibleSet, ProxTerm};
use crate::linalg;
use crate::metrics::{
    brute_force_phi, finite_difference_check, gap_decomposition_check, lemma_ystar_drift_check, stationarity_gap,
    GapVariant, DEFAULT_GRID_RESOLUTION,
};
use crate::oracle::{
    gradient_moments, QuadraticSaddle, QuadraticSpec, Regularized, RobustMultiDomain, StochasticOracle,
    SyntheticDomains, WganSpec, WganToy,
};
use crate::schedules::ScheduleConfig;
use crate::solver::{run, trajectory, Algorithm, IteratePair, SolverSpec, Stepper};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOptions {
    pub seed: u64,
    /// Random inputs per set type.
    pub geometry_inputs: usize,
    /// Randomized theorem-mode schedule configs.
    pub schedule_configs: usize,
    /// Single-sample gradients per point in the unbiasedness check.
    pub moment_samples: usize,
    /// Batch size of the large-batch WGAN convergence check.
    pub large_batch: usize,
    /// Random points per problem in the gap decomposition check.
    pub gap_points: usize,
    /// Random quadratic instances for the drift lemma.
    pub lemma_instances: usize,
    /// Seeds for the transcription comparison.
    pub transcription_seeds: usize,
    /// Runs averaged in the estimator-error check.
    pub estimator_runs: usize,
    /// Test hook: scale every projection by 2 inside the geometry checks.
    pub corrupt_projection: bool,
}

impl Default for PropertyOptions {
    fn default() -> Self {
        PropertyOptions {
            seed: 0,
            geometry_inputs: 10_000,
            schedule_configs: 100,
            moment_samples: 100_000,
            large_batch: 1_000_000,
            gap_points: 1_000,
            lemma_instances: 1_000,
            transcription_seeds: 20,
            estimator_runs: 100,
            corrupt_projection: false,
        }
    }
}

impl PropertyOptions {
    pub fn with_seed(seed: u64) -> Self {
        PropertyOptions { seed, ..Self::default() }
    }

    /// Small sizes for smoke tests.
    pub fn quick(seed: u64) -> Self {
        PropertyOptions {
            seed,
            geometry_inputs: 300,
            schedule_configs: 10,
            moment_samples: 20_000,
            large_batch: 100_000,
            gap_points: 50,
            lemma_instances: 20,
            transcription_seeds: 3,
            estimator_runs: 100,
            corrupt_projection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
    pub elapsed_ms: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `suite/name` of every passing check.
    pub fn pass_set(&self) -> Vec<String> {
        self.checks.iter().filter(|c| c.passed).map(|c| format!("{}/{}", c.suite, c.name)).collect()
    }
}

const MAX_DUMPS: usize = 5;

struct Tally {
    suite: &'static str,
    name: String,
    cases: usize,
    failures: usize,
    worst: f64,
    dumps: Vec<String>,
}

impl Tally {
    fn new(suite: &'static str, name: impl Into<String>) -> Self {
        Tally { suite, name: name.into(), cases: 0, failures: 0, worst: f64::NEG_INFINITY, dumps: Vec::new() }
    }

    /// `stat` is the quantity compared against the tolerance (error or margin).
    fn check(&mut self, ok: bool, stat: f64, dump: impl FnOnce() -> String) {
        self.cases += 1;
        if stat > self.worst || stat.is_nan() {
            self.worst = stat;
        }
        if !ok {
            self.failures += 1;
            if self.dumps.len() < MAX_DUMPS {
                self.dumps.push(dump());
            }
        }
    }

    fn finish(self) -> PropertyCheck {
        let mut detail = format!("{} cases, {} failures, worst {:.3e}", self.cases, self.failures, self.worst);
        for d in &self.dumps {
            detail.push_str("\n    ");
            detail.push_str(d);
        }
        PropertyCheck {
            suite: self.suite,
            name: self.name,
            passed: self.failures == 0 && self.cases > 0,
            cases: self.cases,
            failures: self.failures,
            detail,
        }
    }
}

fn suite_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian<R: Rng>(d: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            scale * e
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- geometry

const SET_KINDS: [&str; 4] = ["box", "ball", "simplex", "unbounded"];

fn random_set<R: Rng>(kind: usize, rng: &mut R) -> FeasibleSet {
    let d = rng.random_range(1..=6);
    match kind {
        0 => {
            let lower = gaussian(d, 1.0, rng);
            let upper = lower.iter().map(|l| l + 0.1 + 1.9 * rng.random::<f64>()).collect();
            FeasibleSet::boxed(lower, upper).expect("ordered bounds")
        }
        1 => FeasibleSet::ball(gaussian(d, 1.0, rng), 0.1 + 1.9 * rng.random::<f64>()).expect("valid ball"),
        2 => FeasibleSet::simplex(d).expect("valid simplex"),
        _ => FeasibleSet::unbounded(d, 10.0).expect("valid set"),
    }
}

/// Minimizer of `w|z| + (a/2)(z - p)^2` over `[lo, hi]` by comparing every
/// candidate stationary or boundary point.
fn l1_scalar_oracle(p: f64, w: f64, a: f64, lo: f64, hi: f64) -> f64 {
    let f = |z: f64| w * z.abs() + 0.5 * a * (z - p) * (z - p);
    let mut best = (f64::INFINITY, 0.0);
    for z in [lo, hi, 0.0, p - w / a, p + w / a] {
        if !z.is_finite() {
            continue;
        }
        let z = z.max(lo).min(hi);
        let v = f(z);
        if v < best.0 {
            best = (v, z);
        }
    }
    best.1
}

/// Simplex projection through bisection on the threshold `tau` solving
/// `sum_i max(p_i - tau, 0) = 1`.
fn simplex_oracle(p: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| p.iter().map(|v| (v - tau).max(0.0)).sum::<f64>();
    let hi0 = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (hi0 - 1.0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    p.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Ball projection from the optimality condition `z = c + (p - c)/(1 + mu)`
/// with `mu` found by bisection.
fn ball_oracle(p: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let d = linalg::dist(p, center);
    if d <= radius {
        return p.to_vec();
    }
    let (mut lo, mut hi) = (0.0, d / radius.max(1e-300));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if d / (1.0 + mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    center.iter().zip(p).map(|(c, v)| c + (v - c) / (1.0 + mu)).collect()
}

pub fn geometry_checks(opts: &PropertyOptions) -> Vec<PropertyCheck> {
    let project = |set: &FeasibleSet, p: &[f64]| -> Vec<f64> {
        let q = set.project(p).expect("dimension matches");
        if opts.corrupt_projection {
            linalg::scale(2.0, &q)
        } else {
            q
        }
    };
    let mut out = Vec::new();
    for (kind, label) in SET_KINDS.iter().enumerate() {
        let mut rng = suite_rng(opts.seed, 10 + kind as u64);
        let mut idem = Tally::new("geometry", format!("{label}: idempotence"));
        let mut nonexp = Tally::new("geometry", format!("{label}: nonexpansiveness"));
        let mut vi = Tally::new("geometry", format!("{label}: variational inequality"));
        let mut zero = Tally::new("geometry", format!("{label}: zero prox equals projection"));
        let mut firm = Tally::new("geometry", format!("{label}: prox firm nonexpansiveness"));
        let mut oracle = Tally::new("geometry", format!("{label}: prox matches oracle"));
        for _ in 0..opts.geometry_inputs {
            let set = random_set(kind, &mut rng);
            let d = set.dim();
            let scale = 10f64.powf(rng.random_range(-1.0..1.0)) * 3.0;
            let a = gaussian(d, scale, &mut rng);
            let near = 10f64.powf(rng.random_range(-3.0..0.5));
            let b = linalg::add_scaled(&a, 1.0, &gaussian(d, near, &mut rng));
            let pa = project(&set, &a);
            let pb = project(&set, &b);

            let e = max_abs_diff(&project(&set, &pa), &pa);
            idem.check(e <= 1e-12 * max_abs(&pa).max(1.0), e, || format!("p = {a:?}"));

            let (lhs, rhs) = (linalg::dist(&pa, &pb), linalg::dist(&a, &b));
            nonexp.check(lhs <= rhs * (1.0 + 1e-12), lhs - rhs, || format!("a = {a:?}, b = {b:?}: {lhs} > {rhs}"));

            let r = linalg::sub(&a, &pa);
            for _ in 0..3 {
                let z = set.sample(&mut rng);
                let v = linalg::dot(&r, &linalg::sub(&z, &pa));
                vi.check(v <= 1e-10, v, || format!("p = {a:?}, z = {z:?}: {v}"));
            }

            let alpha = 10f64.powf(rng.random_range(-1.0..1.0));
            let pz = prox(&ProxTerm::Zero, &set, alpha, &a).expect("zero prox");
            let e = max_abs_diff(&pz, &pa);
            zero.check(e <= 1e-12, e, || format!("p = {a:?}"));

            let weight = rng.random::<f64>();
            let term = match set {
                FeasibleSet::Ball { .. } => ProxTerm::Zero,
                _ => ProxTerm::L1 { weight },
            };
            let ta = prox(&term, &set, alpha, &a).expect("closed-form prox");
            let tb = prox(&term, &set, alpha, &b).expect("closed-form prox");
            let dt = linalg::sub(&ta, &tb);
            let gap = linalg::norm_sq(&dt) - linalg::dot(&dt, &linalg::sub(&a, &b));
            firm.check(gap <= 1e-10, gap, || format!("a = {a:?}, b = {b:?}, alpha = {alpha}, {term:?}"));

            let expect = match &set {
                FeasibleSet::Box { lower, upper } => {
                    (0..d).map(|i| l1_scalar_oracle(a[i], weight, alpha, lower[i], upper[i])).collect()
                }
                FeasibleSet::Unbounded { .. } => {
                    a.iter().map(|p| l1_scalar_oracle(*p, weight, alpha, f64::NEG_INFINITY, f64::INFINITY)).collect()
                }
                FeasibleSet::Simplex { .. } => simplex_oracle(&a),
                FeasibleSet::Ball { center, radius } => ball_oracle(&a, center, *radius),
            };
            let e = max_abs_diff(&ta, &expect);
            oracle.check(e <= 1e-9 * max_abs(&a).max(1.0), e, || format!("p = {a:?}, alpha = {alpha}, {term:?}: {ta:?} vs {expect:?}"));
        }
        out.extend([idem, nonexp, vi, zero, firm, oracle].map(Tally::finish));
    }
    out
}

// --------------------------------------------------------------- schedules

/// `(L, beta, b, a1, a2, a4, a5, a6) = (1, 1/6, 100, 0.1, 0.1, 0.1, 1, 1)` at
/// `k = 1`, evaluated to 36 digits.
pub const THEOREM_K1: [f64; 5] = [
    0.655377949285998199187680654742842146,
    0.071317064717042534216615278149336689,
    0.898850973195541874108540435274556343,
    0.362727414487772245826982050868752654,
    0.508612371985483312104707918609398432,
];

/// `alpha_1` of the WGAN experiment schedule.
pub const WGAN_ALPHA_K1: f64 = 0.356585323585212671083076390746683444;

/// A random theorem-mode config inside the admissible region.
pub fn random_admissible_schedule<R: Rng>(rng: &mut R) -> ScheduleConfig {
    let mut u = || 0.05 + 0.95 * rng.random::<f64>();
    let l = 10f64.powf(-1.0 + 2.5 * u());
    let beta = u() / (6.0 * l);
    let a4 = u() * (1.0 / (8.0 * l)).min(beta / (8.0 * 5f64.sqrt()));
    let batch = (1000.0 * u()).ceil() as usize;
    let b = batch as f64;
    let bound = (b / (32.0 * a4 * l * l)).min(b * a4 / (2.0 * l * beta));
    let (a1, a2) = (u() * bound, u() * bound);
    let a5 = (4.0 * a4 / a1 + 12.0 / 13.0) * (1.0 + 3.0 * u());
    let a6 = (80.0 * a4 / a2 + 12.0 / 13.0) * (1.0 + 3.0 * u());
    ScheduleConfig::theorem(l, beta, batch, a1, a2, a4, a5, a6)
}

fn schedule_ks() -> Vec<u64> {
    let mut ks: Vec<u64> = (1..=20).collect();
    ks.extend((0..=200).map(|i| 10f64.powf(6.0 * i as f64 / 200.0).round() as u64));
    ks.sort_unstable();
    ks.dedup();
    ks
}

pub fn schedule_checks(opts: &PropertyOptions) -> Vec<PropertyCheck> {
    let mut rng = suite_rng(opts.seed, 20);
    let mut valid = Tally::new("schedules", "random configs pass the constraint check");
    let mut rho = Tally::new("schedules", "rho nonincreasing");
    let mut range = Tally::new("schedules", "eta, gamma, theta in (0, 1]");
    let mut ratio = Tally::new("schedules", "alpha_k / rho_(k+1) nonincreasing");
    let mut product = Tally::new("schedules", "eta beta rho < 1");
    let ks = schedule_ks();
    for _ in 0..opts.schedule_configs {
        let cfg = random_admissible_schedule(&mut rng);
        let report = cfg.validate_constraints();
        valid.check(report.passed(), 0.0, || format!("{cfg:?}"));
        for &k in &ks {
            let s = cfg.schedule_at(k).expect("valid index");
            let next = cfg.schedule_at(k + 1).expect("valid index");
            rho.check(next.rho <= s.rho, next.rho - s.rho, || format!("k = {k}, {cfg:?}"));
            let inside = [s.eta, s.gamma, s.theta].iter().all(|v| *v > 0.0 && *v <= 1.0);
            range.check(inside, 0.0, || format!("k = {k}: {s:?}"));
            if k >= 2 {
                let prev = cfg.schedule_at(k - 1).expect("valid index");
                let (lhs, rhs) = (s.alpha / next.rho, prev.alpha / s.rho);
                ratio.check(lhs <= rhs, lhs - rhs, || format!("k = {k}, {cfg:?}"));
            }
            let p = s.eta * cfg.beta * s.rho;
            product.check(p < 1.0, p, || format!("k = {k}, {cfg:?}"));
        }
    }
    let mut exact = Tally::new("schedules", "k = 1 values match reference");
    let s = ScheduleConfig::theorem(1.0, 1.0 / 6.0, 100, 0.1, 0.1, 0.1, 1.0, 1.0).schedule_at(1).expect("k = 1");
    for (got, want) in [s.eta, s.alpha, s.rho, s.gamma, s.theta].into_iter().zip(THEOREM_K1) {
        let e = (got - want).abs();
        exact.check(e <= 1e-12, e, || format!("{got} vs {want}"));
    }
    let w = ScheduleConfig::wgan_experiment(100).schedule_at(1).expect("k = 1");
    let e = (w.alpha - WGAN_ALPHA_K1).abs();
    exact.check(e <= 1e-12, e, || format!("{} vs {WGAN_ALPHA_K1}", w.alpha));
    exact.check(w.gamma == 1.0 && w.theta == 1.0, 0.0, || format!("clipping: {w:?}"));
    [valid, rho, range, ratio, product, exact].map(Tally::finish).to_vec()
}

// ------------------------------------------------------------------ oracle

/// A random feasible point. Very large boxes are sampled near the origin.
fn feasible_point<R: Rng>(set: &FeasibleSet, rng: &mut R) -> Vec<f64> {
    if set.max_norm() > 100.0 {
        set.project(&gaussian(set.dim(), 2.0, rng)).expect("dimension matches")
    } else {
        set.sample(rng)
    }
}

/// The three benchmark problems at their default parameters.
pub fn benchmark_problems(seed: u64) -> Result<(QuadraticSaddle, WganToy, RobustMultiDomain)> {
    let quad = QuadraticSaddle::random(&QuadraticSpec { dim_x: 3, dim_y: 2, ..QuadraticSpec::default() }, seed)?;
    let wgan = WganToy::from_spec(&WganSpec::default())?;
    let multi = RobustMultiDomain::new(SyntheticDomains::default().generate(seed)?)?;
    Ok((quad, wgan, multi))
}

fn unbiasedness<O: StochasticOracle>(oracle: &O, opts: &PropertyOptions, rng: &mut ChaCha8Rng) -> Result<PropertyCheck> {
    let mut t = Tally::new("oracle", format!("{}: sample mean within 4 standard errors", oracle.name()));
    let mut variance = 0.0f64;
    for _ in 0..10 {
        let x = feasible_point(oracle.x_set(), rng);
        let y = feasible_point(oracle.y_set(), rng);
        let exact = oracle.exact_gradient(&x, &y).expect("closed-form gradient");
        let m = gradient_moments(oracle, &x, &y, opts.moment_samples, rng)?;
        variance = variance.max(m.variance_x + m.variance_y);
        let comps = m.mean.x.iter().chain(&m.mean.y).zip(m.std_err.x.iter().chain(&m.std_err.y));
        for ((mean, se), truth) in comps.zip(exact.x.iter().chain(&exact.y)) {
            let z = if *se > 0.0 { (mean - truth).abs() / se } else { (mean - truth).abs() * 1e12 };
            t.check(z <= 4.0, z, || format!("x = {x:?}, y = {y:?}: mean {mean}, exact {truth}, se {se}"));
        }
    }
    let mut c = t.finish();
    c.detail.push_str(&format!(", largest per-sample variance {variance:.4e}"));
    Ok(c)
}

fn regularized_identity<O: StochasticOracle>(oracle: &O, rng: &mut ChaCha8Rng) -> PropertyCheck {
    let mut t = Tally::new("oracle", format!("{}: regularized view identity", oracle.name()));
    for _ in 0..100 {
        let x = feasible_point(oracle.x_set(), rng);
        let y = feasible_point(oracle.y_set(), rng);
        let rho = 10.0 * rng.random::<f64>();
        let batch = oracle.draw_batch(8, rng);
        let base = oracle.batch_gradient(&batch, &x, &y);
        let reg = Regularized::new(oracle, rho).expect("rho >= 0").batch_gradient(&batch, &x, &y);
        let same_x = base.x.iter().zip(&reg.x).all(|(a, b)| a.to_bits() == b.to_bits());
        t.check(same_x, 0.0, || format!("x block changed at x = {x:?}, y = {y:?}"));
        for i in 0..y.len() {
            let e = (reg.y[i] + rho * y[i] - base.y[i]).abs();
            let scale = base.y[i].abs().max((rho * y[i]).abs()).max(1.0);
            t.check(e <= 1e-15 * scale, e / scale, || format!("rho = {rho}, y = {y:?}: error {e}"));
        }
    }
    t.finish()
}

fn finite_differences<O: StochasticOracle>(oracle: &O, rng: &mut ChaCha8Rng) -> Result<PropertyCheck> {
    let mut t = Tally::new("oracle", format!("{}: finite differences", oracle.name()));
    for _ in 0..10 {
        let x = feasible_point(oracle.x_set(), rng);
        let y = feasible_point(oracle.y_set(), rng);
        let e = finite_difference_check(oracle, &x, &y, 1e-5)?;
        t.check(e <= 1e-6, e, || format!("x = {x:?}, y = {y:?}: relative error {e}"));
    }
    Ok(t.finish())
}

fn large_batch<O: StochasticOracle>(oracle: &O, opts: &PropertyOptions, rng: &mut ChaCha8Rng) -> Result<PropertyCheck> {
    let mut t = Tally::new("oracle", format!("{}: batch {} mean near the exact gradient", oracle.name(), opts.large_batch));
    for _ in 0..3 {
        let x = feasible_point(oracle.x_set(), rng);
        let y = feasible_point(oracle.y_set(), rng);
        let exact = oracle.exact_gradient(&x, &y).expect("closed-form gradient");
        let spread = gradient_moments(oracle, &x, &y, 10_000, rng)?;
        let g = oracle.sample_gradients(&x, &y, opts.large_batch, rng)?;
        let nb = opts.large_batch as f64;
        let se = spread.std_err.x.iter().chain(&spread.std_err.y).map(|s| s * (10_000f64 / nb).sqrt());
        for ((got, truth), se) in g.x.iter().chain(&g.y).zip(exact.x.iter().chain(&exact.y)).zip(se) {
            let z = (got - truth).abs() / se.max(f64::MIN_POSITIVE);
            t.check(z <= 4.0, z, || format!("x = {x:?}, y = {y:?}: {got} vs {truth}"));
        }
    }
    Ok(t.finish())
}

pub fn oracle_checks(opts: &PropertyOptions) -> Result<Vec<PropertyCheck>> {
    let (quad, wgan, multi) = benchmark_problems(opts.seed)?;
    let mut rng = suite_rng(opts.seed, 30);
    Ok(vec![
        unbiasedness(&quad, opts, &mut rng)?,
        unbiasedness(&wgan, opts, &mut rng)?,
        unbiasedness(&multi, opts, &mut rng)?,
        finite_differences(&quad, &mut rng)?,
        finite_differences(&wgan, &mut rng)?,
        regularized_identity(&quad, &mut rng),
        regularized_identity(&wgan, &mut rng),
        regularized_identity(&multi, &mut rng),
        large_batch(&wgan, opts, &mut rng)?,
    ])
}

// ----------------------------------------------------------------- metrics

fn gap_checks_for<O: StochasticOracle>(oracle: &O, n: usize, rng: &mut ChaCha8Rng) -> Result<[PropertyCheck; 3]> {
    let name = oracle.name().to_string();
    let mut decomp = Tally::new("metrics", format!("{name}: gap decomposition"));
    let mut zero = Tally::new("metrics", format!("{name}: rho = 0 equality"));
    let mut sign = Tally::new("metrics", format!("{name}: gaps nonnegative"));
    for _ in 0..n {
        let x = feasible_point(oracle.x_set(), rng);
        let y = feasible_point(oracle.y_set(), rng);
        let alpha = 10f64.powf(rng.random_range(-2.0..0.0));
        let beta = 10f64.powf(rng.random_range(-2.0..0.0));
        let rho = 5.0 * rng.random::<f64>();
        let c = gap_decomposition_check(oracle, &x, &y, alpha, beta, rho)?;
        decomp.check(c.holds, c.lhs - c.rhs, || format!("x = {x:?}, y = {y:?}, rho = {rho}: {c:?}"));
        sign.check(c.lhs >= 0.0 && c.rhs >= 0.0, -c.lhs.min(c.rhs), || format!("{c:?}"));
        let t = stationarity_gap(oracle, &x, &y, alpha, beta, &GapVariant::True, None)?.norm;
        let r = stationarity_gap(oracle, &x, &y, alpha, beta, &GapVariant::Regularized, Some(0.0))?.norm;
        let e = (t - r).abs();
        zero.check(e <= 1e-12, e, || format!("x = {x:?}, y = {y:?}: {t} vs {r}"));
    }
    Ok([decomp.finish(), zero.finish(), sign.finish()])
}

pub fn metric_checks(opts: &PropertyOptions) -> Result<Vec<PropertyCheck>> {
    let (quad, wgan, multi) = benchmark_problems(opts.seed)?;
    let mut rng = suite_rng(opts.seed, 40);
    let mut out = Vec::new();
    out.extend(gap_checks_for(&quad, opts.gap_points, &mut rng)?);
    out.extend(gap_checks_for(&wgan, opts.gap_points, &mut rng)?);
    out.extend(gap_checks_for(&multi, opts.gap_points, &mut rng)?);

    let mut mono = Tally::new("metrics", "envelope nonincreasing in rho");
    let rhos = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0];
    for i in 0..20 {
        let q = QuadraticSaddle::random(&QuadraticSpec::default(), opts.seed.wrapping_add(1000 + i))?;
        let x = q.x_set().sample(&mut rng);
        let envs = rhos.iter().map(|r| brute_force_phi(&q, &x, *r, DEFAULT_GRID_RESOLUTION)).collect::<Result<Vec<_>>>()?;
        for w in envs.windows(2) {
            let slack = w[0].value_error_bound + w[1].value_error_bound;
            let d = w[1].phi - w[0].phi;
            mono.check(d <= slack, d - slack, || format!("instance {i}, x = {x:?}: {} then {}", w[0].phi, w[1].phi));
        }
    }
    out.push(mono.finish());
    Ok(out)
}

/// One randomized drift-lemma instance: a quadratic with `d_y <= 2`, two
/// points and a decreasing pair of regularization weights.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaInstance {
    pub problem_seed: u64,
    pub dim_x: usize,
    pub dim_y: usize,
    pub x: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub rho_k: f64,
    pub rho_next: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn lemma_instance(seed: u64, index: u64) -> Result<LemmaInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + index);
    let dim_x = rng.random_range(1..=3);
    let dim_y = rng.random_range(1..=2);
    let problem_seed = rng.random::<u64>();
    let q = QuadraticSaddle::random(&QuadraticSpec { dim_x, dim_y, ..QuadraticSpec::default() }, problem_seed)?;
    let x = q.x_set().sample(&mut rng);
    // Nearby points are the regime the lemma is used in; far ones test the bound's slack.
    let x_bar = if rng.random::<bool>() {
        let step = gaussian(dim_x, 10f64.powf(rng.random_range(-3.0..-0.5)), &mut rng);
        q.x_set().project(&linalg::add_scaled(&x, 1.0, &step))?
    } else {
        q.x_set().sample(&mut rng)
    };
    let rho_k = 0.05 + 1.95 * rng.random::<f64>();
    let rho_next = rho_k * (0.5 + 0.5 * rng.random::<f64>());
    let c = lemma_ystar_drift_check(&q, &x, &x_bar, rho_k, rho_next, DEFAULT_GRID_RESOLUTION)?;
    Ok(LemmaInstance {
        problem_seed,
        dim_x,
        dim_y,
        x,
        x_bar,
        rho_k,
        rho_next,
        lhs: c.lhs,
        rhs: c.rhs,
        slack: c.slack,
        holds: c.holds,
    })
}

pub fn lemma_checks(opts: &PropertyOptions) -> Result<Vec<PropertyCheck>> {
    let instances = (0..opts.lemma_instances as u64)
        .into_par_iter()
        .map(|i| lemma_instance(opts.seed, i))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Tally::new("metrics", "regularized maximizer drift bound");
    for (i, inst) in instances.iter().enumerate() {
        t.check(inst.holds, inst.lhs - inst.rhs - inst.slack, || {
            format!("instance {i}: {}", serde_json::to_string(inst).unwrap_or_default())
        });
    }
    Ok(vec![t.finish()])
}

// ------------------------------------------------------------------ solver

fn transcription_problem(seed: u64) -> Result<QuadraticSaddle> {
    QuadraticSaddle::random(&QuadraticSpec { dim_x: 3, dim_y: 2, noise_std: 0.5, ..QuadraticSpec::default() }, seed)
}

const NS_WEIGHTS: (f64, f64) = (0.05, 0.02);
const SGDA_STEPS: (f64, f64) = (0.05, 0.1);
const TRANSCRIPTION_BATCH: usize = 4;

fn same_bits(a: &[IteratePair], b: &[transcript::Point]) -> bool {
    let eq = |u: &[f64], v: &[f64]| u.len() == v.len() && u.iter().zip(v).all(|(p, q)| p.to_bits() == q.to_bits());
    a.len() == b.len() && a.iter().zip(b).all(|(z, (x, y))| eq(&z.x, x) && eq(&z.y, y))
}

/// Compares 10-step solver trajectories with the straight-line
/// transcription for every algorithm, returning one check per algorithm.
pub fn transcription_checks(opts: &PropertyOptions) -> Result<Vec<PropertyCheck>> {
    let mut formda = Tally::new("solver", "formda matches transcription bit-for-bit");
    let mut ns = Tally::new("solver", "formda_ns matches transcription bit-for-bit");
    let mut sgda = Tally::new("solver", "sgda matches transcription bit-for-bit");
    let steps = 10;
    for s in 0..opts.transcription_seeds as u64 {
        let seed = opts.seed.wrapping_mul(1_000_003).wrapping_add(s);
        let q = transcription_problem(seed)?;
        let mut rng = suite_rng(seed, 50);
        let x1 = q.x_set().sample(&mut rng);
        let y1 = q.y_set().sample(&mut rng);
        let sched = ScheduleConfig::largest_admissible(q.lipschitz(), TRANSCRIPTION_BATCH);

        let spec = SolverSpec::new(Algorithm::Formda, sched.clone(), steps);
        let got = trajectory(&spec, &q, &x1, &y1, seed, steps)?;
        let want = transcript::formda(&q, &sched, (0.0, 0.0), &x1, &y1, seed, steps)?;
        formda.check(same_bits(&got, &want), 0.0, || format!("seed {seed}"));

        let mut spec = SolverSpec::new(Algorithm::FormdaNs, sched.clone(), steps);
        spec.prox_x = ProxTerm::L1 { weight: NS_WEIGHTS.0 };
        spec.prox_y = ProxTerm::L1 { weight: NS_WEIGHTS.1 };
        let got = trajectory(&spec, &q, &x1, &y1, seed, steps)?;
        let want = transcript::formda(&q, &sched, NS_WEIGHTS, &x1, &y1, seed, steps)?;
        ns.check(same_bits(&got, &want), 0.0, || format!("seed {seed}"));

        let (a, b) = SGDA_STEPS;
        let spec = SolverSpec::new(Algorithm::Sgda, ScheduleConfig::constant(a, b, TRANSCRIPTION_BATCH), steps);
        let got = trajectory(&spec, &q, &x1, &y1, seed, steps)?;
        let want = transcript::sgda(&q, a, b, TRANSCRIPTION_BATCH, &x1, &y1, seed, steps)?;
        sgda.check(same_bits(&got, &want), 0.0, || format!("seed {seed}"));
    }
    Ok([formda, ns, sgda].map(Tally::finish).to_vec())
}

/// Block means of `E ||v_k - grad_x g(z_k)||^2` over seeded runs, for
/// blocks of 50 iterations after a 50-iteration burn-in.
pub fn estimator_error_profile(runs: usize, seed: u64) -> Result<Vec<f64>> {
    const STEPS: usize = 300;
    const BLOCK: usize = 50;
    let q = QuadraticSaddle::random(&QuadraticSpec { noise_std: 1.0, ..QuadraticSpec::default() }, seed)?;
    let spec = SolverSpec::new(Algorithm::Formda, ScheduleConfig::largest_admissible(q.lipschitz(), 1), STEPS as u64);
    let per_run = (0..runs as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let run_seed = seed.wrapping_mul(7919).wrapping_add(r);
            let mut rng = suite_rng(run_seed, 60);
            let (x1, y1) = (q.x_set().sample(&mut rng), q.y_set().sample(&mut rng));
            let mut st = Stepper::new(&spec, &q, &x1, &y1, run_seed)?;
            let mut errs = Vec::with_capacity(STEPS);
            for _ in 0..STEPS {
                let z = st.iterate().clone();
                let rep = st.step()?;
                let g = q.exact_gradient(&z.x, &z.y).expect("closed form");
                errs.push(linalg::dist(&rep.estimate.0, &g.x).powi(2));
            }
            Ok(errs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean: Vec<f64> = (0..STEPS).map(|k| per_run.iter().map(|e| e[k]).sum::<f64>() / runs as f64).collect();
    Ok(mean[BLOCK..].chunks(BLOCK).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect())
}

pub fn solver_checks(opts: &PropertyOptions) -> Result<Vec<PropertyCheck>> {
    let mut feas = Tally::new("solver", "iterates stay feasible");
    let mut segment = Tally::new("solver", "x_(k+1) on the segment [x_k, x~]");
    let mut ns_zero = Tally::new("solver", "formda_ns with zero prox equals formda");
    let mut determinism = Tally::new("solver", "identical seeds give identical records");
    for s in 0..opts.transcription_seeds as u64 {
        let seed = opts.seed.wrapping_mul(31).wrapping_add(s);
        let q = transcription_problem(seed)?;
        let mut rng = suite_rng(seed, 70);
        let x1 = q.x_set().sample(&mut rng);
        let y1 = q.y_set().sample(&mut rng);
        let sched = ScheduleConfig::largest_admissible(q.lipschitz(), 2);
        let mut ns_spec = SolverSpec::new(Algorithm::FormdaNs, sched.clone(), 200);
        ns_spec.prox_x = ProxTerm::L1 { weight: 0.1 };
        let specs = [
            SolverSpec::new(Algorithm::Formda, sched.clone(), 200),
            ns_spec,
            SolverSpec::new(Algorithm::Sgda, ScheduleConfig::constant(0.2, 0.5, 2), 200),
        ];
        for spec in &specs {
            let mut st = Stepper::new(spec, &q, &x1, &y1, seed)?;
            for _ in 0..spec.max_iters {
                let z = st.iterate().clone();
                let rep = st.step()?;
                let next = st.iterate();
                let inside = q.x_set().contains(&next.x, 1e-10) && q.y_set().contains(&next.y, 1e-10);
                feas.check(inside, 0.0, || format!("{} seed {seed} k = {}", spec.algorithm.name(), z.k));
                if spec.algorithm != Algorithm::Sgda {
                    let eta = rep.at.eta;
                    let comb = |a: &[f64], t: &[f64]| -> Vec<f64> {
                        a.iter().zip(t).map(|(u, v)| (1.0 - eta) * u + eta * v).collect()
                    };
                    let e = linalg::dist(&next.x, &comb(&z.x, &rep.tilde.0)).max(linalg::dist(&next.y, &comb(&z.y, &rep.tilde.1)));
                    segment.check(e <= 1e-12, e, || format!("{} seed {seed} k = {}", spec.algorithm.name(), z.k));
                }
            }
        }
        let a = SolverSpec::new(Algorithm::Formda, sched.clone(), 100);
        let mut b = a.clone();
        b.algorithm = Algorithm::FormdaNs;
        let ra = run(&a, &q, &x1, &y1, seed)?;
        let rb = run(&b, &q, &x1, &y1, seed)?;
        ns_zero.check(ra.records == rb.records && ra.final_iterate == rb.final_iterate, 0.0, || format!("seed {seed}"));
        let again = run(&a, &q, &x1, &y1, seed)?;
        determinism.check(again.records == ra.records, 0.0, || format!("seed {seed}"));
    }

    let mut contraction = Tally::new("solver", "estimator error nonincreasing after burn-in");
    let blocks = estimator_error_profile(opts.estimator_runs, opts.seed)?;
    for w in blocks.windows(2) {
        contraction.check(w[1] <= w[0], w[1] - w[0], || format!("{} after {}", w[1], w[0]));
    }
    let mut c = contraction.finish();
    let shown: Vec<String> = blocks.iter().map(|b| format!("{b:.4e}")).collect();
    c.detail.push_str(&format!(", block means [{}]", shown.join(", ")));
    let mut out = vec![feas.finish(), segment.finish(), ns_zero.finish(), determinism.finish(), c];
    out.extend(transcription_checks(opts)?);
    Ok(out)
}

/// Runs every suite: geometry, schedules, oracle, metrics (including the
/// drift lemma) and solver (including the transcription comparison).
pub fn property_suite(opts: &PropertyOptions) -> Result<PropertyReport> {
    let start = Instant::now();
    let mut checks = geometry_checks(opts);
    checks.extend(schedule_checks(opts));
    checks.extend(oracle_checks(opts)?);
    checks.extend(metric_checks(opts)?);
    checks.extend(lemma_checks(opts)?);
    checks.extend(solver_checks(opts)?);
    Ok(PropertyReport { seed: opts.seed, checks, elapsed_ms: start.elapsed().as_secs_f64() * 1e3 })
}
