//! Stationarity gaps, brute-force envelope oracles, and checkers for the
//! inequalities the convergence analysis relies on.
//!
//! The stationarity gap at `(x, y)` with stepsizes `alpha`, `beta` is the
//! norm of
//!
//! ```text
//! ( (x - P_X(x - alpha grad_x g)) / alpha ,
//!   (y - P_Y(y + beta  grad_y g)) / beta  )
//! ```
//!
//! The regularized variant uses `g_rho = g - rho/2 ||y||^2`, and the prox
//! variant replaces both projections by proximity operators.

use rand::Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{FeasibleSet, ProxPair, ProxTerm};
use crate::linalg;
use crate::oracle::{BlockGradient, Regularized, StochasticOracle};

#[derive(Debug, Clone, PartialEq)]
pub enum GapVariant {
    True,
    Regularized,
    Prox { prox_x: ProxTerm, prox_y: ProxTerm },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityGap {
    pub x_block: Vec<f64>,
    pub y_block: Vec<f64>,
    pub norm: f64,
}

impl StationarityGap {
    /// Gap from the points the projected steps land on:
    /// `((x - x_tilde) / alpha, (y - y_tilde) / beta)`.
    pub fn from_steps(x: &[f64], x_tilde: &[f64], y: &[f64], y_tilde: &[f64], alpha: f64, beta: f64) -> Self {
        let x_block: Vec<f64> = x.iter().zip(x_tilde).map(|(a, b)| (a - b) / alpha).collect();
        let y_block: Vec<f64> = y.iter().zip(y_tilde).map(|(a, b)| (a - b) / beta).collect();
        let norm = (linalg::norm_sq(&x_block) + linalg::norm_sq(&y_block)).sqrt();
        StationarityGap { x_block, y_block, norm }
    }
}

/// Gap for a given gradient (exact, sampled, or an estimator).
#[allow(clippy::too_many_arguments)]
pub fn gap_from_gradient(
    x_set: &FeasibleSet,
    y_set: &FeasibleSet,
    maps: &ProxPair,
    x: &[f64],
    y: &[f64],
    grad: &BlockGradient,
    alpha: f64,
    beta: f64,
) -> Result<StationarityGap> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid(format!("gap stepsizes must be positive (alpha {alpha}, beta {beta})")));
    }
    check_dim(x.len(), grad.x.len())?;
    check_dim(y.len(), grad.y.len())?;
    let x_tilde = maps.descent(x_set, alpha, &linalg::add_scaled(x, -alpha, &grad.x))?;
    let y_tilde = maps.ascent(y_set, beta, &linalg::add_scaled(y, beta, &grad.y))?;
    Ok(StationarityGap::from_steps(x, &x_tilde, y, &y_tilde, alpha, beta))
}

fn variant_parts(variant: &GapVariant, rho: Option<f64>) -> Result<(ProxPair, f64)> {
    match variant {
        GapVariant::True => Ok((ProxPair::default(), 0.0)),
        GapVariant::Regularized => {
            let rho = rho.ok_or_else(|| Error::invalid("the regularized gap needs rho"))?;
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(Error::invalid(format!("rho must be finite and >= 0 (got {rho})")));
            }
            Ok((ProxPair::default(), rho))
        }
        GapVariant::Prox { prox_x, prox_y } => Ok((ProxPair::new(prox_x.clone(), prox_y.clone()), 0.0)),
    }
}

/// Gap from the oracle's exact gradient.
pub fn stationarity_gap<O: StochasticOracle>(
    oracle: &O,
    x: &[f64],
    y: &[f64],
    alpha: f64,
    beta: f64,
    variant: &GapVariant,
    rho: Option<f64>,
) -> Result<StationarityGap> {
    let (maps, rho) = variant_parts(variant, rho)?;
    let grad = Regularized::new(oracle, rho)?
        .exact_gradient(x, y)
        .ok_or_else(|| Error::Unsupported(format!("{} has no exact gradient", oracle.name())))?;
    gap_from_gradient(oracle.x_set(), oracle.y_set(), &maps, x, y, &grad, alpha, beta)
}

/// Gap from a minibatch gradient of size `batch`, for oracles without an
/// exact gradient.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_gap_sampled<O: StochasticOracle, R: Rng + ?Sized>(
    oracle: &O,
    x: &[f64],
    y: &[f64],
    alpha: f64,
    beta: f64,
    variant: &GapVariant,
    rho: Option<f64>,
    batch: usize,
    rng: &mut R,
) -> Result<StationarityGap> {
    let (maps, rho) = variant_parts(variant, rho)?;
    let grad = Regularized::new(oracle, rho)?.sample_gradients(x, y, batch, rng)?;
    gap_from_gradient(oracle.x_set(), oracle.y_set(), &maps, x, y, &grad, alpha, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Allowance added to `rhs` (rounding, grid resolution).
    pub slack: f64,
    pub holds: bool,
}

/// `||gap(x, y)|| <= ||gap_rho(x, y)|| + rho ||y||`.
pub fn gap_decomposition_check<O: StochasticOracle>(
    oracle: &O,
    x: &[f64],
    y: &[f64],
    alpha: f64,
    beta: f64,
    rho: f64,
) -> Result<InequalityCheck> {
    let lhs = stationarity_gap(oracle, x, y, alpha, beta, &GapVariant::True, None)?.norm;
    let reg = stationarity_gap(oracle, x, y, alpha, beta, &GapVariant::Regularized, Some(rho))?.norm;
    let rhs = reg + rho * linalg::norm(y);
    let slack = 1e-10;
    Ok(InequalityCheck { lhs, rhs, slack, holds: lhs <= rhs + slack })
}

/// Central-difference check of `exact_gradient` against `value`. Returns the
/// largest `|fd - exact| / max(1, |exact|)` over all coordinates.
pub fn finite_difference_check<O: StochasticOracle>(oracle: &O, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let unsupported = || Error::Unsupported(format!("{} has no closed-form value/gradient", oracle.name()));
    let exact = oracle.exact_gradient(x, y).ok_or_else(unsupported)?;
    let f = |xx: &[f64], yy: &[f64]| oracle.value(xx, yy).ok_or_else(unsupported);
    let mut worst = 0.0f64;
    let (mut xp, mut yp) = (x.to_vec(), y.to_vec());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp, y)?;
        xp[i] = x[i] - h;
        let down = f(&xp, y)?;
        xp[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - exact.x[i]).abs() / exact.x[i].abs().max(1.0));
    }
    for i in 0..y.len() {
        yp[i] = y[i] + h;
        let up = f(x, &yp)?;
        yp[i] = y[i] - h;
        let down = f(x, &yp)?;
        yp[i] = y[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - exact.y[i]).abs() / exact.y[i].abs().max(1.0));
    }
    Ok(worst)
}

pub const DEFAULT_GRID_RESOLUTION: usize = 201;
const REFINE_FACTOR: usize = 10;
const MAX_WINDOW_CELLS: usize = 20;
pub const MAX_ENVELOPE_DIM: usize = 3;

/// `Phi_rho(x) = max_{y in Y} g(x, y) - rho/2 ||y||^2` and its maximizer, by
/// exhaustive grid search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceEnvelope {
    pub phi: f64,
    pub ystar: Vec<f64>,
    pub resolution: usize,
    /// Spacing of the refined grid.
    pub spacing: f64,
    /// Bound on `Phi - g_rho(x, ystar)`.
    pub value_error_bound: f64,
    /// Bound on `||ystar - argmax||`; infinite when `rho = 0`.
    pub argmax_error_bound: f64,
}

/// Axis-aligned parametrization of a compact set for gridding. Simplex
/// points are parametrized by their first `d - 1` coordinates.
struct Chart {
    lower: Vec<f64>,
    upper: Vec<f64>,
    simplex: bool,
}

impl Chart {
    fn new(set: &FeasibleSet) -> Self {
        match set {
            FeasibleSet::Box { lower, upper } => Chart { lower: lower.clone(), upper: upper.clone(), simplex: false },
            FeasibleSet::Ball { center, radius } => Chart {
                lower: center.iter().map(|c| c - radius).collect(),
                upper: center.iter().map(|c| c + radius).collect(),
                simplex: false,
            },
            FeasibleSet::Unbounded { dim, radius } => {
                Chart { lower: vec![-radius; *dim], upper: vec![*radius; *dim], simplex: false }
            }
            FeasibleSet::Simplex { dim } => {
                Chart { lower: vec![0.0; dim - 1], upper: vec![1.0; dim - 1], simplex: true }
            }
        }
    }

    fn dims(&self) -> usize {
        self.lower.len()
    }

    /// Maps chart coordinates to a set member, or `None` when outside.
    fn point(&self, set: &FeasibleSet, u: &[f64]) -> Option<Vec<f64>> {
        if self.simplex {
            let s: f64 = u.iter().sum();
            if u.iter().any(|v| *v < -1e-12) || s > 1.0 + 1e-12 {
                return None;
            }
            let mut y: Vec<f64> = u.iter().map(|v| v.max(0.0)).collect();
            y.push((1.0 - s).max(0.0));
            Some(y)
        } else {
            let inside = u.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, h))| *v >= l - 1e-12 && *v <= h + 1e-12);
            if !inside {
                return None;
            }
            let y: Vec<f64> = u.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
            set.contains(&y, 1e-12).then_some(y)
        }
    }
}

/// Visits `prod(counts)` multi-indices in lexicographic order.
fn for_each_index(counts: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; counts.len()];
    if counts.contains(&0) {
        return;
    }
    loop {
        f(&idx);
        let mut d = counts.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

pub fn brute_force_phi<O: StochasticOracle>(oracle: &O, x: &[f64], rho: f64, resolution: usize) -> Result<BruteForceEnvelope> {
    let set = oracle.y_set();
    let dy = set.dim();
    if dy > MAX_ENVELOPE_DIM {
        return Err(Error::Unsupported(format!("grid envelope needs dim_y <= {MAX_ENVELOPE_DIM} (got {dy})")));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be finite and >= 0 (got {rho})")));
    }
    if resolution < 2 {
        return Err(Error::invalid("grid resolution must be >= 2"));
    }
    check_dim(oracle.dim_x(), x.len())?;
    let view = Regularized::new(oracle, rho)?;
    let value = |y: &[f64]| view.value(x, y).ok_or_else(|| Error::Unsupported(format!("{} has no closed-form value", oracle.name())));

    let chart = Chart::new(set);
    let dims = chart.dims();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |best: &mut Option<(f64, Vec<f64>)>, y: Vec<f64>| -> Result<()> {
        let v = value(&y)?;
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            *best = Some((v, y));
        }
        Ok(())
    };

    if dims == 0 {
        // one-point simplex
        consider(&mut best, vec![1.0])?;
        let (phi, ystar) = best.expect("one candidate");
        return Ok(BruteForceEnvelope { phi, ystar, resolution, spacing: 0.0, value_error_bound: 0.0, argmax_error_bound: 0.0 });
    }

    let steps: Vec<f64> = chart.lower.iter().zip(&chart.upper).map(|(l, h)| (h - l) / (resolution - 1) as f64).collect();
    let mut err = Ok(());
    for_each_index(&vec![resolution; dims], |idx| {
        if err.is_err() {
            return;
        }
        let u: Vec<f64> = idx.iter().enumerate().map(|(d, i)| chart.lower[d] + *i as f64 * steps[d]).collect();
        if let Some(y) = chart.point(set, &u) {
            err = consider(&mut best, y);
        }
    });
    err?;

    let smooth = oracle.lipschitz() + rho;
    let coarse = steps.iter().fold(0.0f64, |m, s| m.max(*s));
    let bounds = |h: f64, best: &Option<(f64, Vec<f64>)>| {
        let reach = h * (dy as f64).sqrt() / 2.0;
        let mut value_err = smooth * reach * reach / 2.0;
        if let FeasibleSet::Ball { .. } = set {
            // the grid does not contain the sphere, so add the first-order term
            let grad_norm = best
                .as_ref()
                .and_then(|(_, y)| view.exact_gradient(x, y))
                .map(|g| linalg::norm(&g.y))
                .unwrap_or(0.0);
            value_err += grad_norm * reach;
        }
        let argmax_err = if rho > 0.0 { (2.0 * value_err / rho).sqrt() } else { f64::INFINITY };
        (value_err, argmax_err)
    };
    let (_, coarse_err) = bounds(coarse, &best);
    let window = if coarse_err.is_finite() {
        ((coarse_err / coarse).ceil() as usize).clamp(1, MAX_WINDOW_CELLS)
    } else {
        1
    };

    let center = {
        let (_, y) = best.as_ref().expect("grid contains at least one set member");
        if chart.simplex {
            y[..dims].to_vec()
        } else {
            y.clone()
        }
    };
    let fine: Vec<f64> = steps.iter().map(|s| s / REFINE_FACTOR as f64).collect();
    let half = (window * REFINE_FACTOR) as i64;
    let mut err = Ok(());
    for_each_index(&vec![(2 * half + 1) as usize; dims], |idx| {
        if err.is_err() {
            return;
        }
        let u: Vec<f64> = idx.iter().enumerate().map(|(d, i)| center[d] + (*i as i64 - half) as f64 * fine[d]).collect();
        if let Some(y) = chart.point(set, &u) {
            err = consider(&mut best, y);
        }
    });
    err?;

    let spacing = fine.iter().fold(0.0f64, |m, s| m.max(*s));
    let (value_error_bound, argmax_error_bound) = bounds(spacing, &best);
    let (phi, ystar) = best.expect("nonempty grid");
    Ok(BruteForceEnvelope { phi, ystar, resolution, spacing, value_error_bound, argmax_error_bound })
}

/// Checks the drift bound on regularized maximizers
///
/// ```text
/// ||y*_{k+1}(xbar) - y*_k(x)||^2 <= L^2 / rho_{k+1}^2 ||xbar - x||^2
///     + (rho_k - rho_{k+1}) / rho_{k+1} (||y*_{k+1}(xbar)||^2 - ||y*_k(x)||^2)
/// ```
///
/// with grid maximizers, `L = l + rho_k`, and slack covering the grid's
/// argmax error.
pub fn lemma_ystar_drift_check<O: StochasticOracle>(
    oracle: &O,
    x: &[f64],
    x_bar: &[f64],
    rho_k: f64,
    rho_next: f64,
    resolution: usize,
) -> Result<InequalityCheck> {
    if !(rho_next > 0.0 && rho_k >= rho_next && rho_k.is_finite()) {
        return Err(Error::invalid(format!("need rho_k >= rho_(k+1) > 0 (got {rho_k}, {rho_next})")));
    }
    let cur = brute_force_phi(oracle, x, rho_k, resolution)?;
    let next = brute_force_phi(oracle, x_bar, rho_next, resolution)?;
    let l = oracle.lipschitz() + rho_k;
    let (a, b) = (&next.ystar, &cur.ystar);
    let c = (rho_k - rho_next) / rho_next;
    let lhs = linalg::dist(a, b).powi(2);
    let rhs = l * l / (rho_next * rho_next) * linalg::dist(x_bar, x).powi(2) + c * (linalg::norm_sq(a) - linalg::norm_sq(b));
    let (ea, eb) = (next.argmax_error_bound, cur.argmax_error_bound);
    let e = ea + eb;
    let slack = 2.0 * linalg::dist(a, b) * e
        + e * e
        + c * (2.0 * linalg::norm(a) * ea + ea * ea + 2.0 * linalg::norm(b) * eb + eb * eb)
        + 1e-12;
    Ok(InequalityCheck { lhs, rhs, slack, holds: lhs <= rhs + slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{QuadraticSaddle, QuadraticSpec, WganSpec, WganToy};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad(spec: QuadraticSpec, seed: u64) -> QuadraticSaddle {
        QuadraticSaddle::random(&spec, seed).unwrap()
    }

    /// `g = 0` on `[-1, 1]^2 x [-1, 1]^2`.
    fn zero_problem() -> QuadraticSaddle {
        QuadraticSaddle::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            0.0,
            FeasibleSet::cube(2, 1.0).unwrap(),
            FeasibleSet::cube(2, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_interior_point_has_zero_gap() {
        let q = zero_problem();
        let g = stationarity_gap(&q, &[0.2, 0.1], &[-0.3, 0.4], 0.7, 0.2, &GapVariant::True, None).unwrap();
        assert_eq!(g.norm, 0.0);
    }

    #[test]
    fn one_dimensional_hand_projection() {
        let set = FeasibleSet::boxed(vec![0.0], vec![1.0]).unwrap();
        let ys = FeasibleSet::cube(1, 1.0).unwrap();
        let maps = ProxPair::default();
        let g = BlockGradient { x: vec![1.0], y: vec![0.0] };
        let gap = gap_from_gradient(&set, &ys, &maps, &[0.0], &[0.0], &g, 0.5, 1.0).unwrap();
        assert_eq!(gap.x_block, vec![0.0]);
        let g = BlockGradient { x: vec![-1.0], y: vec![0.0] };
        let gap = gap_from_gradient(&set, &ys, &maps, &[0.0], &[0.0], &g, 0.5, 1.0).unwrap();
        assert_eq!(gap.x_block, vec![-1.0]);
    }

    #[test]
    fn regularized_with_zero_rho_equals_true() {
        let q = quad(QuadraticSpec::default(), 3);
        let (x, y) = ([0.3, -0.9], [0.8, 0.2]);
        let t = stationarity_gap(&q, &x, &y, 0.1, 0.05, &GapVariant::True, None).unwrap();
        let r = stationarity_gap(&q, &x, &y, 0.1, 0.05, &GapVariant::Regularized, Some(0.0)).unwrap();
        assert_eq!(t, r);
    }

    #[test]
    fn regularized_without_rho_is_an_error() {
        let q = quad(QuadraticSpec::default(), 3);
        let r = stationarity_gap(&q, &[0.0; 2], &[0.0; 2], 0.1, 0.1, &GapVariant::Regularized, None);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn norm_squares_add_up() {
        let q = quad(QuadraticSpec::default(), 8);
        let g = stationarity_gap(&q, &[0.5, 0.5], &[0.1, -0.7], 0.3, 0.2, &GapVariant::True, None).unwrap();
        let sq = linalg::norm_sq(&g.x_block) + linalg::norm_sq(&g.y_block);
        assert!((g.norm * g.norm - sq).abs() <= 1e-14 * sq.max(1.0));
    }

    #[test]
    fn saddle_point_of_convex_concave_quadratic_has_zero_gap() {
        // g = x^2/2 + 2xy - y^2 with saddle (0, 0) in the interior
        let q = QuadraticSaddle::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 2.0),
            0.0,
            FeasibleSet::cube(1, 1.0).unwrap(),
            FeasibleSet::cube(1, 1.0).unwrap(),
        )
        .unwrap();
        let g = stationarity_gap(&q, &[0.0], &[0.0], 0.1, 0.1, &GapVariant::True, None).unwrap();
        assert!(g.norm <= 1e-8);
    }

    #[test]
    fn prox_gap_with_zero_terms_matches_true_gap() {
        let q = quad(QuadraticSpec::default(), 5);
        let (x, y) = ([0.1, 0.2], [0.3, 0.4]);
        let t = stationarity_gap(&q, &x, &y, 0.1, 0.1, &GapVariant::True, None).unwrap();
        let p = stationarity_gap(&q, &x, &y, 0.1, 0.1, &GapVariant::Prox { prox_x: ProxTerm::Zero, prox_y: ProxTerm::Zero }, None).unwrap();
        assert_eq!(t, p);
    }

    #[test]
    fn sampled_gap_is_close_to_exact_for_large_batches() {
        let q = quad(QuadraticSpec { noise_std: 0.1, ..QuadraticSpec::default() }, 6);
        let (x, y) = ([0.1, 0.2], [0.3, 0.4]);
        let t = stationarity_gap(&q, &x, &y, 0.1, 0.1, &GapVariant::True, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = stationarity_gap_sampled(&q, &x, &y, 0.1, 0.1, &GapVariant::True, None, 100_000, &mut rng).unwrap();
        assert!((t.norm - s.norm).abs() < 2e-3);
    }

    #[test]
    fn decomposition_equality_at_zero_rho() {
        let q = quad(QuadraticSpec::default(), 1);
        let c = gap_decomposition_check(&q, &[0.2, 0.4], &[0.6, -0.1], 0.2, 0.3, 0.0).unwrap();
        assert_eq!(c.lhs, c.rhs);
        assert!(c.holds);
    }

    #[test]
    fn decomposition_at_zero_dual_point() {
        let q = quad(QuadraticSpec::default(), 1);
        let c = gap_decomposition_check(&q, &[0.2, 0.4], &[0.0, 0.0], 0.2, 0.3, 0.8).unwrap();
        let reg = stationarity_gap(&q, &[0.2, 0.4], &[0.0, 0.0], 0.2, 0.3, &GapVariant::Regularized, Some(0.8)).unwrap();
        assert_eq!(c.rhs, reg.norm);
        assert!(c.holds);
    }

    #[test]
    fn finite_differences_agree() {
        let q = quad(QuadraticSpec { dim_x: 3, dim_y: 2, ..QuadraticSpec::default() }, 2);
        assert!(finite_difference_check(&q, &[0.1, -0.2, 0.3], &[0.4, 0.5], 1e-5).unwrap() <= 1e-6);
        let w = WganToy::from_spec(&WganSpec::default()).unwrap();
        assert!(finite_difference_check(&w, &[0.3, 0.4], &[-0.5, 0.6], 1e-5).unwrap() <= 1e-6);
        assert_eq!(finite_difference_check(&zero_problem(), &[0.1, 0.2], &[0.3, 0.4], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn envelope_matches_closed_form_interior_maximizer() {
        let spec = QuadraticSpec { box_radius: 3.0, coupling: 0.3, c_eigen_range: [0.5, 1.0], ..QuadraticSpec::default() };
        let q = quad(spec, 9);
        let x = [0.4, -0.3];
        let rho = 0.5;
        let exact = q.ystar_unconstrained(&x, rho).unwrap();
        assert!(q.y_set().contains(&exact, 0.0));
        let env = brute_force_phi(&q, &x, rho, DEFAULT_GRID_RESOLUTION).unwrap();
        assert!(linalg::dist(&env.ystar, &exact) <= env.spacing * 2f64.sqrt());
        let phi_exact = Regularized::new(&q, rho).unwrap().value(&x, &exact).unwrap();
        assert!(phi_exact >= env.phi - 1e-12 && phi_exact - env.phi <= env.value_error_bound);
    }

    #[test]
    fn constant_envelope_breaks_ties_at_first_grid_point() {
        let q = zero_problem();
        let env = brute_force_phi(&q, &[0.3, 0.3], 0.0, 11).unwrap();
        assert_eq!(env.phi, 0.0);
        assert_eq!(env.ystar, vec![-1.0, -1.0]);
    }

    #[test]
    fn large_rho_pulls_maximizer_to_projection_of_origin() {
        let q = quad(QuadraticSpec::default(), 4);
        let env = brute_force_phi(&q, &[0.5, 0.5], 1e6, 51).unwrap();
        assert!(linalg::norm(&env.ystar) <= 1e-5);
        let s = QuadraticSaddle::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            0.0,
            FeasibleSet::cube(1, 1.0).unwrap(),
            FeasibleSet::boxed(vec![0.5], vec![2.0]).unwrap(),
        )
        .unwrap();
        let env = brute_force_phi(&s, &[0.1], 1e6, 51).unwrap();
        assert_eq!(env.ystar, vec![0.5]);
    }

    #[test]
    fn envelope_is_nonincreasing_in_rho() {
        let q = quad(QuadraticSpec::default(), 12);
        let x = [0.7, -0.2];
        let mut prev = f64::INFINITY;
        for rho in [0.0, 0.01, 0.1, 0.5, 1.0, 5.0] {
            let phi = brute_force_phi(&q, &x, rho, 101).unwrap().phi;
            assert!(phi <= prev + 1e-12);
            prev = phi;
        }
    }

    #[test]
    fn envelope_on_simplex_dual() {
        // g = y . (0.2, 0.5, 0.1): the maximizer is the second vertex
        let q = QuadraticSaddle::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(1, 3, &[0.2, 0.5, 0.1]),
            DMatrix::zeros(3, 3),
            0.0,
            FeasibleSet::cube(1, 2.0).unwrap(),
            FeasibleSet::simplex(3).unwrap(),
        )
        .unwrap();
        let env = brute_force_phi(&q, &[1.0], 0.0, 21).unwrap();
        assert_eq!(env.ystar, vec![0.0, 1.0, 0.0]);
        assert!((env.phi - 0.5).abs() < 1e-15);
    }

    #[test]
    fn high_dimensional_dual_is_unsupported() {
        let q = quad(QuadraticSpec { dim_y: 4, ..QuadraticSpec::default() }, 1);
        assert!(matches!(brute_force_phi(&q, &[0.0, 0.0], 1.0, 11), Err(Error::Unsupported(_))));
    }

    #[test]
    fn drift_check_identical_problems() {
        let q = quad(QuadraticSpec::default(), 2);
        let c = lemma_ystar_drift_check(&q, &[0.1, 0.2], &[0.1, 0.2], 0.5, 0.5, 101).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
        assert!(c.holds);
    }

    #[test]
    fn drift_check_with_vanishing_rho() {
        let q = quad(QuadraticSpec::default(), 2);
        let c = lemma_ystar_drift_check(&q, &[0.1, 0.2], &[0.5, -0.2], 0.5, 1e-9, 51).unwrap();
        assert!(c.rhs > 1e10);
        assert!(c.holds);
    }

    #[test]
    fn drift_check_rejects_increasing_rho() {
        let q = quad(QuadraticSpec::default(), 2);
        assert!(lemma_ystar_drift_check(&q, &[0.0; 2], &[0.0; 2], 0.1, 0.2, 11).is_err());
        assert!(lemma_ystar_drift_check(&q, &[0.0; 2], &[0.0; 2], 0.1, 0.0, 11).is_err());
    }
}
