//! Euclidean projections onto simple convex sets and proximity operators of
//! the nonsmooth terms used by the composite solver.
//!
//! The proximity operator follows the weighted convention
//!
//! ```text
//! prox(h, Z, alpha, v) = argmin_{z in Z}  h(z) + (alpha / 2) * ||z - v||^2
//! ```
//!
//! so `alpha` is the weight of the quadratic term, not a step length. A
//! gradient step of length `t` pairs with `alpha = 1 / t`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// A nonempty closed convex set in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeasibleSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex { dim: usize },
    /// All of `R^dim`. `radius` is a norm bound carried for bookkeeping
    /// (`sigma_y`, grid searches); projection never enforces it.
    Unbounded { dim: usize, radius: f64 },
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = FeasibleSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    /// The box `[-radius, radius]^dim`.
    pub fn cube(dim: usize, radius: f64) -> Result<Self> {
        Self::boxed(vec![-radius; dim], vec![radius; dim])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = FeasibleSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        let set = FeasibleSet::Simplex { dim };
        set.validate()?;
        Ok(set)
    }

    pub fn unbounded(dim: usize, radius: f64) -> Result<Self> {
        let set = FeasibleSet::Unbounded { dim, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Box { lower, upper } => {
                check_dim(lower.len(), upper.len())?;
                if lower.is_empty() {
                    return Err(Error::invalid("box must have dimension >= 1"));
                }
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !l.is_finite() || !u.is_finite() || l > u {
                        return Err(Error::invalid(format!(
                            "box bounds at coordinate {i} must be finite with lower <= upper (got [{l}, {u}])"
                        )));
                    }
                }
            }
            FeasibleSet::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::invalid("ball must have dimension >= 1"));
                }
                if !(radius.is_finite() && *radius >= 0.0) || !linalg::all_finite(center) {
                    return Err(Error::invalid(format!("ball radius must be finite and >= 0 (got {radius})")));
                }
            }
            FeasibleSet::Simplex { dim } => {
                if *dim == 0 {
                    return Err(Error::invalid("simplex dimension must be >= 1"));
                }
            }
            FeasibleSet::Unbounded { dim, radius } => {
                if *dim == 0 {
                    return Err(Error::invalid("dimension must be >= 1"));
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::invalid(format!("norm bound must be finite and >= 0 (got {radius})")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Simplex { dim } | FeasibleSet::Unbounded { dim, .. } => *dim,
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, FeasibleSet::Unbounded { .. })
    }

    /// Euclidean projection. Identity for `Unbounded`.
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), point.len())?;
        Ok(match self {
            FeasibleSet::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(p, (l, u))| p.clamp(*l, *u))
                .collect(),
            FeasibleSet::Ball { center, radius } => {
                let d = linalg::sub(point, center);
                let n = linalg::norm(&d);
                if n <= *radius {
                    point.to_vec()
                } else {
                    let s = radius / n;
                    center.iter().zip(&d).map(|(c, di)| c + s * di).collect()
                }
            }
            FeasibleSet::Simplex { .. } => project_simplex(point),
            FeasibleSet::Unbounded { .. } => point.to_vec(),
        })
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(p, (l, u))| *p >= l - tol && *p <= u + tol),
            FeasibleSet::Ball { center, radius } => linalg::dist(point, center) <= radius + tol,
            FeasibleSet::Simplex { .. } => {
                point.iter().all(|p| *p >= -tol) && (point.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            FeasibleSet::Unbounded { .. } => point.iter().all(|p| p.is_finite()),
        }
    }

    /// `max { ||z|| : z in set }`; the carried bound for `Unbounded`.
    pub fn max_norm(&self) -> f64 {
        match self {
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (l * l).max(u * u))
                .sum::<f64>()
                .sqrt(),
            FeasibleSet::Ball { center, radius } => linalg::norm(center) + radius,
            FeasibleSet::Simplex { .. } => 1.0,
            FeasibleSet::Unbounded { radius, .. } => *radius,
        }
    }

    /// A random member of the set. `Unbounded` samples its radius cube.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
            FeasibleSet::Ball { center, radius } => {
                let n = center.len();
                let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                let dn = linalg::norm(&dir).max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
                center.iter().zip(&dir).map(|(c, d)| c + r * d / dn).collect()
            }
            FeasibleSet::Simplex { dim } => {
                let e: Vec<f64> = (0..*dim).map(|_| Exp1.sample(rng)).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            }
            FeasibleSet::Unbounded { dim, radius } => {
                (0..*dim).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect()
            }
        }
    }
}

/// Projection onto the probability simplex by sorting and thresholding.
fn project_simplex(point: &[f64]) -> Vec<f64> {
    let mut sorted = point.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    point.iter().map(|p| (p - tau).max(0.0)).collect()
}

/// Projection onto the `dimension`-dimensional probability simplex.
pub fn simplex_project(dimension: usize, point: &[f64]) -> Result<Vec<f64>> {
    FeasibleSet::simplex(dimension)?.project(point)
}

pub fn project(set: &FeasibleSet, point: &[f64]) -> Result<Vec<f64>> {
    set.project(point)
}

/// Nonsmooth convex term `h` handled through its proximity operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProxTerm {
    #[default]
    Zero,
    /// `weight * ||z||_1`
    L1 { weight: f64 },
    /// Indicator of an additional convex set.
    IndicatorOf { set: FeasibleSet },
}

impl ProxTerm {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProxTerm::Zero => Ok(()),
            ProxTerm::L1 { weight } => {
                if weight.is_finite() && *weight >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("L1 weight must be finite and >= 0 (got {weight})")))
                }
            }
            ProxTerm::IndicatorOf { set } => set.validate(),
        }
    }

    /// Value of the term; `+inf` outside an indicator's set.
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            ProxTerm::Zero => 0.0,
            ProxTerm::L1 { weight } => weight * z.iter().map(|v| v.abs()).sum::<f64>(),
            ProxTerm::IndicatorOf { set } => {
                if set.contains(z, 1e-12) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Nonsmooth terms on the two blocks: `f` on `x` (minimized) and `h` on `y`
/// (subtracted from the maximized objective). Both steps use
/// `prox(term, set, 1 / step, .)`, which is the plain projection when the
/// term is `Zero`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProxPair {
    pub x: ProxTerm,
    pub y: ProxTerm,
}

impl ProxPair {
    pub fn new(x: ProxTerm, y: ProxTerm) -> Self {
        ProxPair { x, y }
    }

    pub fn is_zero(&self) -> bool {
        self.x == ProxTerm::Zero && self.y == ProxTerm::Zero
    }

    /// `prox_{f, X}` with quadratic weight `1 / step`.
    pub fn descent(&self, set: &FeasibleSet, step: f64, point: &[f64]) -> Result<Vec<f64>> {
        prox_step(&self.x, set, step, point)
    }

    /// `prox_{h, Y}` with quadratic weight `1 / step`.
    pub fn ascent(&self, set: &FeasibleSet, step: f64, point: &[f64]) -> Result<Vec<f64>> {
        prox_step(&self.y, set, step, point)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `argmin_{z in set} term(z) + (alpha / 2) ||z - point||^2`.
///
/// Closed forms only: `Zero` on any set, `L1` on boxes, unbounded sets and
/// the simplex (where `||z||_1 = 1` is constant), and indicators whose
/// intersection with `set` is itself a box or one of the two sets.
pub fn prox(term: &ProxTerm, set: &FeasibleSet, alpha: f64, point: &[f64]) -> Result<Vec<f64>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("prox weight must be positive and finite (got {alpha})")));
    }
    prox_step(term, set, 1.0 / alpha, point)
}

/// `argmin_{z in set} step * term(z) + 1/2 ||z - point||^2`.
fn prox_step(term: &ProxTerm, set: &FeasibleSet, step: f64, point: &[f64]) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("prox step must be positive and finite (got {step})")));
    }
    check_dim(set.dim(), point.len())?;
    term.validate()?;
    match term {
        ProxTerm::Zero => set.project(point),
        ProxTerm::L1 { weight } if *weight == 0.0 => set.project(point),
        ProxTerm::L1 { weight } => {
            let t = weight * step;
            match set {
                FeasibleSet::Box { lower, upper } => Ok(point
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(p, (l, u))| soft_threshold(*p, t).clamp(*l, *u))
                    .collect()),
                FeasibleSet::Unbounded { .. } => Ok(point.iter().map(|p| soft_threshold(*p, t)).collect()),
                FeasibleSet::Simplex { .. } => set.project(point),
                FeasibleSet::Ball { .. } => Err(Error::Unsupported(
                    "L1 prox restricted to a ball has no closed form".into(),
                )),
            }
        }
        ProxTerm::IndicatorOf { set: inner } => {
            check_dim(set.dim(), inner.dim())?;
            if inner == set || !inner.is_compact() {
                return set.project(point);
            }
            if !set.is_compact() {
                return inner.project(point);
            }
            match (set, inner) {
                (
                    FeasibleSet::Box { lower: l1, upper: u1 },
                    FeasibleSet::Box { lower: l2, upper: u2 },
                ) => {
                    let lower: Vec<f64> = l1.iter().zip(l2).map(|(a, b)| a.max(*b)).collect();
                    let upper: Vec<f64> = u1.iter().zip(u2).map(|(a, b)| a.min(*b)).collect();
                    FeasibleSet::boxed(lower, upper)
                        .map_err(|_| Error::invalid("indicator set does not intersect the feasible box"))?
                        .project(point)
                }
                _ => Err(Error::Unsupported(
                    "projection onto this set intersection has no closed form".into(),
                )),
            }
        }
    }
}
