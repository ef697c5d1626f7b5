//! Stochastic first-order oracles for `min_x max_y g(x, y)` with
//! `g(x, y) = E[G(x, y; zeta)]`.
//!
//! A solver needs to evaluate one minibatch at two different points, so the
//! oracle splits sampling ([`StochasticOracle::draw`]) from evaluation
//! ([`StochasticOracle::accumulate_gradient`]). All randomness comes from the
//! caller's RNG; oracles hold no mutable state.

mod multidomain;
mod quadratic;
mod wgan;

pub use multidomain::{Domain, RobustMultiDomain, SyntheticDomains};
pub use quadratic::{QuadraticSaddle, QuadraticSpec};
pub use wgan::{WganSpec, WganToy};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::FeasibleSet;

/// A gradient split into its `x` and `y` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGradient {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl BlockGradient {
    pub fn zeros(dim_x: usize, dim_y: usize) -> Self {
        BlockGradient { x: vec![0.0; dim_x], y: vec![0.0; dim_y] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

pub trait StochasticOracle: Sync {
    /// One draw of `zeta`.
    type Sample: Clone + Send + Sync;

    fn name(&self) -> &str;
    fn x_set(&self) -> &FeasibleSet;
    fn y_set(&self) -> &FeasibleSet;

    /// Estimate of the gradient Lipschitz constant `l`.
    fn lipschitz(&self) -> f64;

    fn dim_x(&self) -> usize {
        self.x_set().dim()
    }

    fn dim_y(&self) -> usize {
        self.y_set().dim()
    }

    /// `max { ||y|| : y in Y }`
    fn sigma_y(&self) -> f64 {
        self.y_set().max_norm()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Sample;

    /// Adds `grad G(x, y; sample)` into `gx`, `gy`.
    fn accumulate_gradient(&self, sample: &Self::Sample, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]);

    /// `grad g(x, y)` when it has a closed form.
    fn exact_gradient(&self, _x: &[f64], _y: &[f64]) -> Option<BlockGradient> {
        None
    }

    /// `g(x, y)` when it has a closed form.
    fn value(&self, _x: &[f64], _y: &[f64]) -> Option<f64> {
        None
    }

    /// A known optimal `x`, used for distance-to-target reporting.
    fn target_x(&self) -> Option<Vec<f64>> {
        None
    }

    fn draw_batch<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Self::Sample> {
        (0..batch).map(|_| self.draw(rng)).collect()
    }

    /// Minibatch mean of the per-sample gradients, summed in batch order.
    fn batch_gradient(&self, batch: &[Self::Sample], x: &[f64], y: &[f64]) -> BlockGradient {
        let mut g = BlockGradient::zeros(self.dim_x(), self.dim_y());
        for s in batch {
            self.accumulate_gradient(s, x, y, &mut g.x, &mut g.y);
        }
        let b = batch.len() as f64;
        g.x.iter_mut().chain(g.y.iter_mut()).for_each(|v| *v /= b);
        g
    }

    fn sample_gradients<R: Rng + ?Sized>(&self, x: &[f64], y: &[f64], batch: usize, rng: &mut R) -> Result<BlockGradient> {
        if batch == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        check_dim(self.dim_x(), x.len())?;
        check_dim(self.dim_y(), y.len())?;
        let samples = self.draw_batch(batch, rng);
        Ok(self.batch_gradient(&samples, x, y))
    }
}

/// `g_rho(x, y) = g(x, y) - (rho / 2) ||y||^2` over a base oracle.
#[derive(Debug, Clone, Copy)]
pub struct Regularized<'a, O> {
    pub base: &'a O,
    pub rho: f64,
}

impl<'a, O: StochasticOracle> Regularized<'a, O> {
    pub fn new(base: &'a O, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::invalid(format!("rho must be finite and >= 0 (got {rho})")));
        }
        Ok(Regularized { base, rho })
    }

    fn shift(&self, mut g: BlockGradient, y: &[f64]) -> BlockGradient {
        for (gi, yi) in g.y.iter_mut().zip(y) {
            *gi -= self.rho * yi;
        }
        g
    }

    pub fn batch_gradient(&self, batch: &[O::Sample], x: &[f64], y: &[f64]) -> BlockGradient {
        self.shift(self.base.batch_gradient(batch, x, y), y)
    }

    pub fn sample_gradients<R: Rng + ?Sized>(&self, x: &[f64], y: &[f64], batch: usize, rng: &mut R) -> Result<BlockGradient> {
        Ok(self.shift(self.base.sample_gradients(x, y, batch, rng)?, y))
    }

    pub fn exact_gradient(&self, x: &[f64], y: &[f64]) -> Option<BlockGradient> {
        self.base.exact_gradient(x, y).map(|g| self.shift(g, y))
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let ny: f64 = y.iter().map(|v| v * v).sum();
        self.base.value(x, y).map(|v| v - 0.5 * self.rho * ny)
    }
}

/// Minibatch gradient of the regularized objective.
pub fn regularized_sample_gradients<O: StochasticOracle, R: Rng + ?Sized>(
    view: &Regularized<'_, O>,
    x: &[f64],
    y: &[f64],
    batch: usize,
    rng: &mut R,
) -> Result<BlockGradient> {
    view.sample_gradients(x, y, batch, rng)
}

/// Per-component mean and standard error of single-sample gradients.
#[derive(Debug, Clone)]
pub struct GradientMoments {
    pub mean: BlockGradient,
    pub std_err: BlockGradient,
    /// `E ||grad G - mean||^2` per block, i.e. the empirical `delta^2`.
    pub variance_x: f64,
    pub variance_y: f64,
}

/// Empirical moments of `n` single-sample gradients at `(x, y)`.
pub fn gradient_moments<O: StochasticOracle, R: Rng + ?Sized>(oracle: &O, x: &[f64], y: &[f64], n: usize, rng: &mut R) -> Result<GradientMoments> {
    if n < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let (dx, dy) = (oracle.dim_x(), oracle.dim_y());
    let mut sum = vec![0.0; dx + dy];
    let mut sum_sq = vec![0.0; dx + dy];
    let mut g = BlockGradient::zeros(dx, dy);
    for _ in 0..n {
        let s = oracle.draw(rng);
        g.x.iter_mut().chain(g.y.iter_mut()).for_each(|v| *v = 0.0);
        oracle.accumulate_gradient(&s, x, y, &mut g.x, &mut g.y);
        for (i, v) in g.x.iter().chain(&g.y).enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let var: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(s2, m)| ((s2 - nf * m * m) / (nf - 1.0)).max(0.0))
        .collect();
    let se: Vec<f64> = var.iter().map(|v| (v / nf).sqrt()).collect();
    Ok(GradientMoments {
        mean: BlockGradient { x: mean[..dx].to_vec(), y: mean[dx..].to_vec() },
        std_err: BlockGradient { x: se[..dx].to_vec(), y: se[dx..].to_vec() },
        variance_x: var[..dx].iter().sum(),
        variance_y: var[dx..].iter().sum(),
    })
}
