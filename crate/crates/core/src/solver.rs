//! Momentum descent-ascent solvers.
//!
//! One FORMDA step at iteration `k` with schedule values `s_k` and the
//! previous step's values `s_{k-1}`:
//!
//! ```text
//! draw I_k (b samples)
//! v_k = grad_x G_k(z_k; I_k) + (1 - gamma_{k-1}) (v_{k-1} - grad_x G_{k-1}(z_{k-1}; I_k))
//! w_k = grad_y G_k(z_k; I_k) + (1 - theta_{k-1}) (w_{k-1} - grad_y G_{k-1}(z_{k-1}; I_k))
//! x~  = P_X(x_k - alpha_k v_k)      x_{k+1} = x_k + eta_k (x~ - x_k)
//! y~  = P_Y(y_k + beta w_k)         y_{k+1} = y_k + eta_k (y~ - y_k)
//! ```
//!
//! where `G_k = G - rho_k/2 ||y||^2`. The first step has no correction term.
//! FORMDA-NS replaces the projections by proximity operators, and SGDA is
//! plain projected stochastic descent-ascent on the unregularized objective.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{ProxPair, ProxTerm};
use crate::linalg;
use crate::metrics::{gap_from_gradient, StationarityGap};
use crate::oracle::{BlockGradient, Regularized, StochasticOracle};
use crate::schedules::{ScheduleAt, ScheduleConfig, ScheduleMode};

/// Membership tolerance for initial points.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Formda,
    FormdaNs,
    Sgda,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Formda => "formda",
            Algorithm::FormdaNs => "formda_ns",
            Algorithm::Sgda => "sgda",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteratePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub k: u64,
}

impl IteratePair {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        IteratePair { x, y, k: 1 }
    }
}

/// Estimators `v_k`, `w_k` and what the next correction term needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub prev_x: Vec<f64>,
    pub prev_y: Vec<f64>,
    /// Schedule values of the step that formed `v`, `w`.
    pub prev: ScheduleAt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumStep {
    pub next: IteratePair,
    pub state: MomentumState,
    pub x_tilde: Vec<f64>,
    pub y_tilde: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdaStep {
    pub next: IteratePair,
    pub gradient: BlockGradient,
}

fn ensure_finite(g: &BlockGradient, iter: u64, what: &'static str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericFailure { iter: iter as usize, what })
    }
}

/// One step of the momentum method with update maps `maps`. Zero maps give
/// FORMDA, other prox terms give FORMDA-NS.
#[allow(clippy::too_many_arguments)]
pub fn momentum_step<O: StochasticOracle, R: Rng + ?Sized>(
    oracle: &O,
    maps: &ProxPair,
    iterate: &IteratePair,
    state: Option<&MomentumState>,
    at: &ScheduleAt,
    beta: f64,
    batch: usize,
    rng: &mut R,
) -> Result<MomentumStep> {
    if batch == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    check_dim(oracle.dim_x(), iterate.x.len())?;
    check_dim(oracle.dim_y(), iterate.y.len())?;
    let k = iterate.k;
    let samples = oracle.draw_batch(batch, rng);
    let cur = Regularized::new(oracle, at.rho)?.batch_gradient(&samples, &iterate.x, &iterate.y);
    ensure_finite(&cur, k, "gradient at the current point")?;
    let (v, w) = match state {
        None => (cur.x, cur.y),
        Some(s) => {
            let old = Regularized::new(oracle, s.prev.rho)?.batch_gradient(&samples, &s.prev_x, &s.prev_y);
            ensure_finite(&old, k, "gradient at the previous point")?;
            let v = (0..cur.x.len()).map(|i| cur.x[i] + (1.0 - s.prev.gamma) * (s.v[i] - old.x[i])).collect();
            let w = (0..cur.y.len()).map(|i| cur.y[i] + (1.0 - s.prev.theta) * (s.w[i] - old.y[i])).collect();
            (v, w)
        }
    };
    let x_tilde = maps.descent(oracle.x_set(), at.alpha, &linalg::add_scaled(&iterate.x, -at.alpha, &v))?;
    let y_tilde = maps.ascent(oracle.y_set(), beta, &linalg::add_scaled(&iterate.y, beta, &w))?;
    let next = IteratePair {
        x: linalg::lerp(&iterate.x, at.eta, &x_tilde),
        y: linalg::lerp(&iterate.y, at.eta, &y_tilde),
        k: k + 1,
    };
    if !(linalg::all_finite(&next.x) && linalg::all_finite(&next.y)) {
        return Err(Error::NumericFailure { iter: k as usize, what: "iterate" });
    }
    let state = MomentumState { v, w, prev_x: iterate.x.clone(), prev_y: iterate.y.clone(), prev: *at };
    Ok(MomentumStep { next, state, x_tilde, y_tilde })
}

#[allow(clippy::too_many_arguments)]
pub fn formda_step<O: StochasticOracle, R: Rng + ?Sized>(
    oracle: &O,
    iterate: &IteratePair,
    state: Option<&MomentumState>,
    at: &ScheduleAt,
    beta: f64,
    batch: usize,
    rng: &mut R,
) -> Result<MomentumStep> {
    momentum_step(oracle, &ProxPair::default(), iterate, state, at, beta, batch, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn formda_ns_step<O: StochasticOracle, R: Rng + ?Sized>(
    oracle: &O,
    maps: &ProxPair,
    iterate: &IteratePair,
    state: Option<&MomentumState>,
    at: &ScheduleAt,
    beta: f64,
    batch: usize,
    rng: &mut R,
) -> Result<MomentumStep> {
    momentum_step(oracle, maps, iterate, state, at, beta, batch, rng)
}

/// `x+ = P_X(x - alpha g_x)`, `y+ = P_Y(y + beta g_y)` with a fresh minibatch
/// gradient of the unregularized objective.
pub fn sgda_step<O: StochasticOracle, R: Rng + ?Sized>(
    oracle: &O,
    iterate: &IteratePair,
    alpha: f64,
    beta: f64,
    batch: usize,
    rng: &mut R,
) -> Result<SgdaStep> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid(format!("stepsizes must be positive (alpha {alpha}, beta {beta})")));
    }
    let gradient = oracle.sample_gradients(&iterate.x, &iterate.y, batch, rng)?;
    ensure_finite(&gradient, iterate.k, "gradient at the current point")?;
    let x = oracle.x_set().project(&linalg::add_scaled(&iterate.x, -alpha, &gradient.x))?;
    let y = oracle.y_set().project(&linalg::add_scaled(&iterate.y, beta, &gradient.y))?;
    if !(linalg::all_finite(&x) && linalg::all_finite(&y)) {
        return Err(Error::NumericFailure { iter: iterate.k as usize, what: "iterate" });
    }
    Ok(SgdaStep { next: IteratePair { x, y, k: iterate.k + 1 }, gradient })
}

/// Which gap the stopping rule compares against the tolerance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopOn {
    /// The true gap when it can be evaluated, otherwise the surrogate.
    #[default]
    Auto,
    True,
    Regularized,
    Surrogate,
}

fn default_stride() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub algorithm: Algorithm,
    /// For SGDA, `alpha_k` and `beta` are the stepsizes and the other
    /// sequences are ignored.
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub prox_x: ProxTerm,
    #[serde(default)]
    pub prox_y: ProxTerm,
    pub max_iters: u64,
    #[serde(default)]
    pub stop_tolerance: f64,
    #[serde(default = "default_stride")]
    pub gap_eval_stride: u64,
    #[serde(default)]
    pub stop_on: StopOn,
    /// Run a manual schedule, or a theorem schedule that fails its
    /// constant bounds.
    #[serde(default)]
    pub allow_unvalidated_schedule: bool,
    /// Minibatch size for gaps of oracles without exact gradients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_batch: Option<usize>,
    /// Off by default so that repeated runs produce identical output.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl SolverSpec {
    pub fn new(algorithm: Algorithm, schedule: ScheduleConfig, max_iters: u64) -> Self {
        SolverSpec {
            algorithm,
            schedule,
            prox_x: ProxTerm::Zero,
            prox_y: ProxTerm::Zero,
            max_iters,
            stop_tolerance: 0.0,
            gap_eval_stride: default_stride(),
            stop_on: StopOn::Auto,
            allow_unvalidated_schedule: false,
            eval_batch: None,
            record_wall_time: false,
        }
    }

    pub fn maps(&self) -> ProxPair {
        ProxPair::new(self.prox_x.clone(), self.prox_y.clone())
    }

    /// Rejects malformed specs and returns warnings for accepted overrides.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if self.stop_tolerance.is_nan() || self.stop_tolerance < 0.0 {
            return Err(Error::Config(format!("stop_tolerance must be >= 0 (got {})", self.stop_tolerance)));
        }
        if self.gap_eval_stride == 0 {
            return Err(Error::Config("gap_eval_stride must be >= 1".into()));
        }
        if self.eval_batch == Some(0) {
            return Err(Error::Config("eval_batch must be >= 1".into()));
        }
        self.schedule.validate()?;
        self.prox_x.validate()?;
        self.prox_y.validate()?;
        if self.algorithm != Algorithm::FormdaNs && !self.maps().is_zero() {
            return Err(Error::Config(format!("prox terms apply to formda_ns only, not {}", self.algorithm.name())));
        }
        let mut warnings = Vec::new();
        if self.algorithm == Algorithm::Sgda {
            return Ok(warnings);
        }
        match self.schedule.mode() {
            ScheduleMode::Manual => {
                if !self.allow_unvalidated_schedule {
                    return Err(Error::Config(
                        "manual schedules are outside the validated family; set allow_unvalidated_schedule".into(),
                    ));
                }
                warnings.push("running a manual schedule without constant-bound validation".into());
            }
            ScheduleMode::Theorem => {
                let report = self.schedule.validate_constraints();
                let failed: Vec<String> = report.failures().map(|c| c.to_string()).collect();
                if !failed.is_empty() {
                    if !self.allow_unvalidated_schedule {
                        return Err(Error::Config(format!("schedule constraints violated: {}", failed.join("; "))));
                    }
                    warnings.push(format!("schedule constraints violated (overridden): {}", failed.join("; ")));
                }
            }
        }
        Ok(warnings)
    }
}

/// Metrics at the iterate `z_k` the step at iteration `iter` started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iter: u64,
    pub gap_true: Option<f64>,
    pub gap_regularized: Option<f64>,
    /// Gap with the step's gradient estimates in place of the gradient.
    pub gap_surrogate: f64,
    pub rho: f64,
    pub estimator_err_x: Option<f64>,
    pub estimator_err_y: Option<f64>,
    pub dist_to_target: Option<f64>,
    /// Cumulative per-sample block-gradient evaluations.
    pub grad_calls: u64,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIters,
    NumericFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub stop_reason: StopReason,
    pub failure: Option<String>,
    /// The iterate described by the last record.
    pub final_iterate: IteratePair,
    pub grad_calls: u64,
    pub elapsed_ms: f64,
}

impl RunOutcome {
    pub fn last(&self) -> &RunRecord {
        self.records.last().expect("a run emits at least one record")
    }
}

/// Exact gradient of `g_rho`, or a minibatch estimate when `eval` is given.
fn reference_gradient<O: StochasticOracle>(
    oracle: &O,
    rho: f64,
    x: &[f64],
    y: &[f64],
    eval: Option<&[O::Sample]>,
) -> Result<Option<BlockGradient>> {
    let view = Regularized::new(oracle, rho)?;
    Ok(match view.exact_gradient(x, y) {
        Some(g) => Some(g),
        None => eval.map(|batch| view.batch_gradient(batch, x, y)),
    })
}

struct Evaluator<'a, O: StochasticOracle> {
    oracle: &'a O,
    maps: ProxPair,
    beta: f64,
    eval_batch: Option<usize>,
    eval_rng: ChaCha8Rng,
    has_exact: bool,
}

impl<O: StochasticOracle> Evaluator<'_, O> {
    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        iter: u64,
        at: &IteratePair,
        alpha: f64,
        rho: Option<f64>,
        estimate: (&[f64], &[f64]),
        tilde: (&[f64], &[f64]),
        grad_calls: u64,
    ) -> Result<RunRecord> {
        let batch = match (self.has_exact, self.eval_batch) {
            (false, Some(n)) => Some(self.oracle.draw_batch(n, &mut self.eval_rng)),
            _ => None,
        };
        let (x, y) = (&at.x, &at.y);
        let gap = |g: &BlockGradient| -> Result<f64> {
            Ok(gap_from_gradient(self.oracle.x_set(), self.oracle.y_set(), &self.maps, x, y, g, alpha, self.beta)?.norm)
        };
        let truth = reference_gradient(self.oracle, 0.0, x, y, batch.as_deref())?;
        let gap_true = truth.as_ref().map(&gap).transpose()?;
        let (gap_regularized, reg) = match rho {
            Some(r) => {
                let g = reference_gradient(self.oracle, r, x, y, batch.as_deref())?;
                (g.as_ref().map(&gap).transpose()?, g)
            }
            None => (None, truth.clone()),
        };
        let exact_reg = if self.has_exact { reg } else { None };
        let surrogate = StationarityGap::from_steps(x, tilde.0, y, tilde.1, alpha, self.beta).norm;
        Ok(RunRecord {
            iter,
            gap_true,
            gap_regularized,
            gap_surrogate: surrogate,
            rho: rho.unwrap_or(0.0),
            estimator_err_x: exact_reg.as_ref().map(|g| linalg::dist(estimate.0, &g.x)),
            estimator_err_y: exact_reg.as_ref().map(|g| linalg::dist(estimate.1, &g.y)),
            dist_to_target: self.oracle.target_x().map(|t| linalg::dist(x, &t)),
            grad_calls,
            wall_ms: None,
        })
    }
}

fn stop_gap(rule: StopOn, r: &RunRecord) -> Option<f64> {
    match rule {
        StopOn::Auto => Some(r.gap_true.unwrap_or(r.gap_surrogate)),
        StopOn::True => r.gap_true,
        StopOn::Regularized => r.gap_regularized,
        StopOn::Surrogate => Some(r.gap_surrogate),
    }
}

/// Solver RNG: `ChaCha8` seeded with `seed`. Gap evaluation batches come
/// from a separate stream of the same seed, so evaluation never perturbs
/// the solver's samples.
pub fn solver_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn eval_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// What one solver step produced, described from the iterate it started at.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub at: ScheduleAt,
    /// Gradient estimate used by the step (`v_k, w_k`, or the SGDA minibatch).
    pub estimate: (Vec<f64>, Vec<f64>),
    /// Prox/projection outputs; for SGDA these equal the next iterate.
    pub tilde: (Vec<f64>, Vec<f64>),
    /// Stochastic gradient evaluations spent by the step.
    pub calls: u64,
}

/// Drives one algorithm from a fixed starting point, one step at a time.
pub struct Stepper<'a, O: StochasticOracle> {
    spec: &'a SolverSpec,
    oracle: &'a O,
    maps: ProxPair,
    rng: ChaCha8Rng,
    iterate: IteratePair,
    state: Option<MomentumState>,
}

impl<'a, O: StochasticOracle> Stepper<'a, O> {
    /// Checks dimensions and feasibility of `(x1, y1)`. The spec is not
    /// validated here.
    pub fn new(spec: &'a SolverSpec, oracle: &'a O, x1: &[f64], y1: &[f64], seed: u64) -> Result<Self> {
        check_dim(oracle.dim_x(), x1.len())?;
        check_dim(oracle.dim_y(), y1.len())?;
        if !oracle.x_set().contains(x1, FEASIBILITY_TOL) || !oracle.y_set().contains(y1, FEASIBILITY_TOL) {
            return Err(Error::invalid("initial point is not feasible"));
        }
        Ok(Stepper {
            spec,
            oracle,
            maps: spec.maps(),
            rng: solver_rng(seed),
            iterate: IteratePair::new(x1.to_vec(), y1.to_vec()),
            state: None,
        })
    }

    pub fn iterate(&self) -> &IteratePair {
        &self.iterate
    }

    pub fn momentum(&self) -> Option<&MomentumState> {
        self.state.as_ref()
    }

    /// Advances `z_k -> z_{k+1}`. On error the stepper is left at `z_k`.
    pub fn step(&mut self) -> Result<StepReport> {
        let k = self.iterate.k;
        let at = self.spec.schedule.schedule_at(k)?;
        let batch = self.spec.schedule.batch;
        let beta = self.spec.schedule.beta;
        match self.spec.algorithm {
            Algorithm::Sgda => {
                let s = sgda_step(self.oracle, &self.iterate, at.alpha, beta, batch, &mut self.rng)?;
                let tilde = (s.next.x.clone(), s.next.y.clone());
                self.iterate = s.next;
                Ok(StepReport { at, estimate: (s.gradient.x, s.gradient.y), tilde, calls: 2 * batch as u64 })
            }
            Algorithm::Formda | Algorithm::FormdaNs => {
                let s = momentum_step(
                    self.oracle,
                    &self.maps,
                    &self.iterate,
                    self.state.as_ref(),
                    &at,
                    beta,
                    batch,
                    &mut self.rng,
                )?;
                let calls = if self.state.is_some() { 4 } else { 2 } * batch as u64;
                let estimate = (s.state.v.clone(), s.state.w.clone());
                self.iterate = s.next;
                self.state = Some(s.state);
                Ok(StepReport { at, estimate, tilde: (s.x_tilde, s.y_tilde), calls })
            }
        }
    }
}

/// Iterates `z_1, ..., z_{steps+1}` of the solver described by `spec`.
pub fn trajectory<O: StochasticOracle>(
    spec: &SolverSpec,
    oracle: &O,
    x1: &[f64],
    y1: &[f64],
    seed: u64,
    steps: u64,
) -> Result<Vec<IteratePair>> {
    let mut stepper = Stepper::new(spec, oracle, x1, y1, seed)?;
    let mut out = vec![stepper.iterate().clone()];
    for _ in 0..steps {
        stepper.step()?;
        out.push(stepper.iterate().clone());
    }
    Ok(out)
}

/// Runs the solver from `(x1, y1)`. Records are emitted at iteration 1, at
/// multiples of the stride, and at the last iteration.
pub fn run<O: StochasticOracle>(spec: &SolverSpec, oracle: &O, x1: &[f64], y1: &[f64], seed: u64) -> Result<RunOutcome> {
    for w in spec.validate()? {
        log::debug!("{}: {w}", spec.algorithm.name());
    }
    let mut stepper = Stepper::new(spec, oracle, x1, y1, seed)?;
    let has_exact = oracle.exact_gradient(x1, y1).is_some();
    let can_evaluate = has_exact || spec.eval_batch.is_some();
    if matches!(spec.stop_on, StopOn::True | StopOn::Regularized) && !can_evaluate {
        return Err(Error::Config(format!("{} has no exact gradient; set eval_batch to stop on that gap", oracle.name())));
    }
    if spec.stop_on == StopOn::Regularized && spec.algorithm == Algorithm::Sgda {
        return Err(Error::Config("sgda has no regularized gap".into()));
    }

    let start = Instant::now();
    let mut eval = Evaluator {
        oracle,
        maps: spec.maps(),
        beta: spec.schedule.beta,
        eval_batch: spec.eval_batch,
        eval_rng: eval_rng(seed),
        has_exact,
    };
    let momentum = spec.algorithm != Algorithm::Sgda;
    let mut records = Vec::new();
    let mut grad_calls = 0u64;
    let mut stop_reason = StopReason::MaxIters;
    let mut failure = None;
    let mut last_evaluated = stepper.iterate().clone();
    let wall = |r: &mut RunRecord| {
        if spec.record_wall_time {
            r.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
    };

    for k in 1..=spec.max_iters {
        let evaluate = k == 1 || k % spec.gap_eval_stride == 0 || k == spec.max_iters;
        let before = stepper.iterate().clone();
        let step = match stepper.step() {
            Ok(step) => step,
            Err(Error::NumericFailure { iter, what }) => {
                let rho = if momentum { spec.schedule.schedule_at(k)?.rho } else { 0.0 };
                let mut r = RunRecord {
                    iter: k,
                    gap_true: None,
                    gap_regularized: None,
                    gap_surrogate: f64::NAN,
                    rho,
                    estimator_err_x: None,
                    estimator_err_y: None,
                    dist_to_target: None,
                    grad_calls,
                    wall_ms: None,
                };
                wall(&mut r);
                records.push(r);
                failure = Some(format!("non-finite {what} at iteration {iter}"));
                stop_reason = StopReason::NumericFailure;
                last_evaluated = before;
                break;
            }
            Err(e) => return Err(e),
        };
        grad_calls += step.calls;
        if evaluate {
            let rho = momentum.then_some(step.at.rho);
            let (est, tilde) = (&step.estimate, &step.tilde);
            let mut r = eval.record(k, &before, step.at.alpha, rho, (&est.0, &est.1), (&tilde.0, &tilde.1), grad_calls)?;
            wall(&mut r);
            let reached = stop_gap(spec.stop_on, &r).is_some_and(|g| g <= spec.stop_tolerance);
            records.push(r);
            last_evaluated = before;
            if reached {
                stop_reason = StopReason::Tolerance;
                break;
            }
        }
    }

    Ok(RunOutcome {
        records,
        stop_reason,
        failure,
        final_iterate: last_evaluated,
        grad_calls,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FeasibleSet;
    use crate::oracle::{QuadraticSaddle, QuadraticSpec};
    use crate::schedules::{ManualSchedule, Sequence};
    use nalgebra::DMatrix;

    fn quad(noise: f64) -> QuadraticSaddle {
        QuadraticSaddle::random(&QuadraticSpec { noise_std: noise, ..QuadraticSpec::default() }, 7).unwrap()
    }

    fn at(eta: f64, alpha: f64, rho: f64, gamma: f64, theta: f64) -> ScheduleAt {
        ScheduleAt { eta, alpha, rho, gamma, theta }
    }

    fn theorem_spec(algorithm: Algorithm, max_iters: u64) -> SolverSpec {
        SolverSpec::new(algorithm, ScheduleConfig::largest_admissible(2.0, 8), max_iters)
    }

    #[test]
    fn unit_momentum_weights_give_plain_minibatch_gradients() {
        let q = quad(0.3);
        let it = IteratePair { x: vec![0.1, -0.2], y: vec![0.3, 0.4], k: 2 };
        let prev = MomentumState {
            v: vec![5.0, 5.0],
            w: vec![-5.0, 5.0],
            prev_x: vec![0.0, 0.0],
            prev_y: vec![0.0, 0.0],
            prev: at(0.5, 0.1, 0.9, 1.0, 1.0),
        };
        let s = at(0.5, 0.1, 0.7, 0.4, 0.4);
        let step = formda_step(&q, &it, Some(&prev), &s, 0.05, 6, &mut solver_rng(3)).unwrap();
        let mut rng = solver_rng(3);
        let samples = q.draw_batch(6, &mut rng);
        let g = Regularized::new(&q, 0.7).unwrap().batch_gradient(&samples, &it.x, &it.y);
        assert_eq!(step.state.v, g.x);
        assert_eq!(step.state.w, g.y);
    }

    #[test]
    fn disabled_acceleration_is_projected_gradient_descent_ascent() {
        let q = quad(0.0);
        let it = IteratePair { x: vec![0.9, -0.4], y: vec![0.2, 0.8], k: 1 };
        let (alpha, beta) = (0.6, 0.7);
        let step = formda_step(&q, &it, None, &at(1.0, alpha, 0.0, 1.0, 1.0), beta, 3, &mut solver_rng(1)).unwrap();
        let g = q.exact_gradient(&it.x, &it.y).unwrap();
        let x = q.x_set().project(&linalg::add_scaled(&it.x, -alpha, &g.x)).unwrap();
        let y = q.y_set().project(&linalg::add_scaled(&it.y, beta, &g.y)).unwrap();
        for (a, b) in step.next.x.iter().zip(&x).chain(step.next.y.iter().zip(&y)) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        assert_eq!(step.next.k, 2);
    }

    #[test]
    fn large_l1_weight_shrinks_to_zero() {
        let q = QuadraticSaddle::new(
            DMatrix::identity(2, 2) * 0.01,
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 1),
            0.0,
            FeasibleSet::unbounded(2, 10.0).unwrap(),
            FeasibleSet::cube(1, 1.0).unwrap(),
        )
        .unwrap();
        let maps = ProxPair::new(ProxTerm::L1 { weight: 100.0 }, ProxTerm::Zero);
        let it = IteratePair { x: vec![0.5, -0.3], y: vec![0.0], k: 1 };
        let step = formda_ns_step(&q, &maps, &it, None, &at(0.5, 0.1, 0.0, 1.0, 1.0), 0.1, 2, &mut solver_rng(0)).unwrap();
        assert_eq!(step.x_tilde, vec![0.0, 0.0]);
    }

    #[test]
    fn sgda_fixed_point() {
        let q = QuadraticSaddle::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            0.0,
            FeasibleSet::cube(1, 1.0).unwrap(),
            FeasibleSet::cube(1, 1.0).unwrap(),
        )
        .unwrap();
        let it = IteratePair { x: vec![0.3], y: vec![-0.2], k: 4 };
        let s = sgda_step(&q, &it, 0.1, 0.1, 5, &mut solver_rng(0)).unwrap();
        assert_eq!((s.next.x, s.next.y), (it.x, it.y));
    }

    #[test]
    fn bilinear_sgda_does_not_converge() {
        let q = QuadraticSaddle::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            0.0,
            FeasibleSet::cube(1, 1.0).unwrap(),
            FeasibleSet::cube(1, 1.0).unwrap(),
        )
        .unwrap();
        let mut spec = SolverSpec::new(Algorithm::Sgda, ScheduleConfig::constant(0.01, 0.01, 1), 1000);
        spec.gap_eval_stride = 1;
        let out = run(&spec, &q, &[0.5], &[0.5], 0).unwrap();
        assert!(out.records.iter().all(|r| r.gap_true.unwrap() > 1e-3));
    }

    #[test]
    fn iteration_contract() {
        let q = quad(0.1);
        assert!(run(&theorem_spec(Algorithm::Formda, 0), &q, &[0.5, -0.5], &[0.1, 0.2], 0).is_err());
        let out = run(&theorem_spec(Algorithm::Formda, 1), &q, &[0.5, -0.5], &[0.1, 0.2], 0).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.stop_reason, StopReason::MaxIters);
        let mut spec = theorem_spec(Algorithm::Formda, 100);
        spec.stop_tolerance = f64::INFINITY;
        let out = run(&spec, &q, &[0.5, -0.5], &[0.1, 0.2], 0).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].iter, 1);
        assert_eq!(out.stop_reason, StopReason::Tolerance);
    }

    #[test]
    fn record_cadence_and_call_counts() {
        let q = quad(0.1);
        let mut spec = theorem_spec(Algorithm::Formda, 25);
        spec.gap_eval_stride = 10;
        let out = run(&spec, &q, &[0.5, -0.5], &[0.1, 0.2], 0).unwrap();
        let iters: Vec<u64> = out.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![1, 10, 20, 25]);
        let b = 8;
        for r in &out.records {
            assert_eq!(r.grad_calls, 4 * b * r.iter - 2 * b);
        }
        assert!(out.records.iter().all(|r| r.wall_ms.is_none()));
    }

    #[test]
    fn schedule_gatekeeping() {
        let q = quad(0.1);
        let manual = SolverSpec::new(Algorithm::Formda, ScheduleConfig::wgan_experiment(10), 5);
        assert!(matches!(run(&manual, &q, &[0.0; 2], &[0.0; 2], 0), Err(Error::Config(_))));
        let allowed = SolverSpec { allow_unvalidated_schedule: true, ..manual };
        assert_eq!(allowed.validate().unwrap().len(), 1);
        assert!(run(&allowed, &q, &[0.0; 2], &[0.0; 2], 0).is_ok());

        let mut bad = theorem_spec(Algorithm::Formda, 5);
        bad.schedule.beta = 1.0;
        match bad.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("beta <= 1/(6L)"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut prox_on_formda = theorem_spec(Algorithm::Formda, 5);
        prox_on_formda.prox_x = ProxTerm::L1 { weight: 0.1 };
        assert!(prox_on_formda.validate().is_err());
    }

    #[test]
    fn zero_prox_matches_formda_bitwise() {
        let q = quad(0.2);
        let mut a = theorem_spec(Algorithm::Formda, 30);
        a.gap_eval_stride = 1;
        let b = SolverSpec { algorithm: Algorithm::FormdaNs, ..a.clone() };
        let ra = run(&a, &q, &[0.5, -0.5], &[0.1, 0.2], 11).unwrap();
        let rb = run(&b, &q, &[0.5, -0.5], &[0.1, 0.2], 11).unwrap();
        assert_eq!(ra.records, rb.records);
        assert_eq!(ra.final_iterate, rb.final_iterate);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let q = quad(0.5);
        let spec = theorem_spec(Algorithm::Formda, 50);
        let a = run(&spec, &q, &[0.5, -0.5], &[0.1, 0.2], 99).unwrap();
        let b = run(&spec, &q, &[0.5, -0.5], &[0.1, 0.2], 99).unwrap();
        assert_eq!(a.records, b.records);
        let c = run(&spec, &q, &[0.5, -0.5], &[0.1, 0.2], 100).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn infeasible_start_rejected() {
        let q = quad(0.1);
        assert!(run(&theorem_spec(Algorithm::Formda, 5), &q, &[2.0, 0.0], &[0.0; 2], 0).is_err());
    }

    struct Exploding;

    impl StochasticOracle for Exploding {
        type Sample = ();
        fn name(&self) -> &str {
            "exploding"
        }
        fn x_set(&self) -> &FeasibleSet {
            static SET: std::sync::OnceLock<FeasibleSet> = std::sync::OnceLock::new();
            SET.get_or_init(|| FeasibleSet::cube(1, 1.0).unwrap())
        }
        fn y_set(&self) -> &FeasibleSet {
            self.x_set()
        }
        fn lipschitz(&self) -> f64 {
            1.0
        }
        fn draw<R: Rng + ?Sized>(&self, _rng: &mut R) {}
        fn accumulate_gradient(&self, _s: &(), x: &[f64], _y: &[f64], gx: &mut [f64], _gy: &mut [f64]) {
            gx[0] += if x[0] > 0.0 { f64::NAN } else { 1.0 };
        }
    }

    #[test]
    fn numeric_failure_ends_the_run_with_a_record() {
        let mut spec = SolverSpec::new(
            Algorithm::Formda,
            ScheduleConfig::manual(
                1.0,
                0.1,
                1,
                ManualSchedule {
                    eta: Sequence::constant(1.0),
                    alpha: Sequence::constant(1.0),
                    rho: Sequence::constant(0.0),
                    gamma: Sequence::constant(1.0),
                    theta: Sequence::constant(1.0),
                },
            ),
            10,
        );
        spec.allow_unvalidated_schedule = true;
        spec.gap_eval_stride = 1;
        let out = run(&spec, &Exploding, &[0.5], &[0.0], 0).unwrap();
        assert_eq!(out.stop_reason, StopReason::NumericFailure);
        assert_eq!(out.records.len(), 1);
        assert!(out.last().gap_surrogate.is_nan());
        assert!(out.failure.unwrap().contains("iteration 1"));
    }
}
