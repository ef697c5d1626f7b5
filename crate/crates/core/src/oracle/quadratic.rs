use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BlockGradient, StochasticOracle};
use crate::error::{check_dim, Error, Result};
use crate::geometry::FeasibleSet;

/// `g(x, y) = 1/2 x'Ax + x'By - 1/2 y'Cy` with `C` positive semidefinite,
/// observed through gradients with additive Gaussian noise of standard
/// deviation `noise_std` per coordinate.
#[derive(Debug, Clone)]
pub struct QuadraticSaddle {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    noise_std: f64,
    x_set: FeasibleSet,
    y_set: FeasibleSet,
    lipschitz: f64,
}

/// Parameters for a randomly rotated quadratic saddle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticSpec {
    pub dim_x: usize,
    pub dim_y: usize,
    /// Eigenvalues of `A` are drawn uniformly from this range; a negative
    /// lower end makes the problem nonconvex in `x`.
    pub a_eigen_range: [f64; 2],
    /// Entries of `B` are `coupling * N(0, 1)`.
    pub coupling: f64,
    /// Eigenvalues of `C`, drawn uniformly; must be nonnegative.
    pub c_eigen_range: [f64; 2],
    pub noise_std: f64,
    /// Both blocks live in `[-box_radius, box_radius]^d`.
    pub box_radius: f64,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        QuadraticSpec {
            dim_x: 2,
            dim_y: 2,
            a_eigen_range: [-0.5, 1.0],
            coupling: 0.5,
            c_eigen_range: [0.0, 1.0],
            noise_std: 0.1,
            box_radius: 1.0,
        }
    }
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    m.qr().q()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl QuadraticSaddle {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        noise_std: f64,
        x_set: FeasibleSet,
        y_set: FeasibleSet,
    ) -> Result<Self> {
        let (dx, dy) = (x_set.dim(), y_set.dim());
        if a.shape() != (dx, dx) || b.shape() != (dx, dy) || c.shape() != (dy, dy) {
            return Err(Error::invalid(format!(
                "matrix shapes A{:?} B{:?} C{:?} do not match dims ({dx}, {dy})",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be finite and >= 0"));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        if (&a - a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) || (&c - c.transpose()).amax() > 1e-12 * (1.0 + c.amax()) {
            return Err(Error::invalid("A and C must be symmetric"));
        }
        let c_min = c.clone().symmetric_eigen().eigenvalues.min();
        if c_min < -1e-12 * (1.0 + c.amax()) {
            return Err(Error::invalid(format!("C must be positive semidefinite (smallest eigenvalue {c_min})")));
        }
        let mut h = DMatrix::zeros(dx + dy, dx + dy);
        h.view_mut((0, 0), (dx, dx)).copy_from(&a);
        h.view_mut((0, dx), (dx, dy)).copy_from(&b);
        h.view_mut((dx, 0), (dy, dx)).copy_from(&b.transpose());
        h.view_mut((dx, dx), (dy, dy)).copy_from(&(-&c));
        let lipschitz = h.symmetric_eigen().eigenvalues.amax().max(f64::MIN_POSITIVE);
        Ok(QuadraticSaddle { a, b, c, noise_std, x_set, y_set, lipschitz })
    }

    /// Random instance: `A = Q diag(a) Q'`, `C = R diag(c) R'` with random
    /// rotations, Gaussian `B`, over boxes.
    pub fn random(spec: &QuadraticSpec, seed: u64) -> Result<Self> {
        let [a_lo, a_hi] = spec.a_eigen_range;
        let [c_lo, c_hi] = spec.c_eigen_range;
        if spec.dim_x == 0 || spec.dim_y == 0 {
            return Err(Error::invalid("dimensions must be >= 1"));
        }
        if !(a_lo <= a_hi && c_lo <= c_hi) {
            return Err(Error::invalid("eigenvalue ranges must be ordered [low, high]"));
        }
        if c_lo < 0.0 {
            return Err(Error::invalid(format!("C eigenvalues must be >= 0 (range starts at {c_lo})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dx, dy) = (spec.dim_x, spec.dim_y);
        let qa = random_orthogonal(dx, &mut rng);
        let ea = DVector::from_fn(dx, |_, _| a_lo + (a_hi - a_lo) * rng.random::<f64>());
        let a = symmetrize(&qa * DMatrix::from_diagonal(&ea) * qa.transpose());
        let b = DMatrix::from_fn(dx, dy, |_, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            spec.coupling * e
        });
        let qc = random_orthogonal(dy, &mut rng);
        let ec = DVector::from_fn(dy, |_, _| c_lo + (c_hi - c_lo) * rng.random::<f64>());
        let c = symmetrize(&qc * DMatrix::from_diagonal(&ec) * qc.transpose());
        Self::new(
            a,
            b,
            c,
            spec.noise_std,
            FeasibleSet::cube(dx, spec.box_radius)?,
            FeasibleSet::cube(dy, spec.box_radius)?,
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Maximizer of `g(x, .) - rho/2 ||.||^2` over all of `R^dy`:
    /// `(C + rho I)^{-1} B' x`.
    pub fn ystar_unconstrained(&self, x: &[f64], rho: f64) -> Result<Vec<f64>> {
        check_dim(self.a.nrows(), x.len())?;
        let dy = self.c.nrows();
        let m = &self.c + DMatrix::identity(dy, dy) * rho;
        let rhs = self.b.transpose() * DVector::from_column_slice(x);
        m.lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::invalid("C + rho I is singular"))
    }

    /// Noise-free gradient, with sums taken in index order.
    fn gradient_into(&self, x: &[f64], y: &[f64], noise: Option<&[f64]>, gx: &mut [f64], gy: &mut [f64]) {
        let (dx, dy) = (x.len(), y.len());
        for i in 0..dx {
            let mut ax = 0.0;
            for j in 0..dx {
                ax += self.a[(i, j)] * x[j];
            }
            let mut by = 0.0;
            for j in 0..dy {
                by += self.b[(i, j)] * y[j];
            }
            let mut gi = ax + by;
            if let Some(n) = noise {
                gi += self.noise_std * n[i];
            }
            gx[i] += gi;
        }
        for i in 0..dy {
            let mut btx = 0.0;
            for j in 0..dx {
                btx += self.b[(j, i)] * x[j];
            }
            let mut cy = 0.0;
            for j in 0..dy {
                cy += self.c[(i, j)] * y[j];
            }
            let mut gi = btx - cy;
            if let Some(n) = noise {
                gi += self.noise_std * n[dx + i];
            }
            gy[i] += gi;
        }
    }
}

impl StochasticOracle for QuadraticSaddle {
    /// Standard-normal noise for the `dx + dy` gradient coordinates.
    type Sample = Vec<f64>;

    fn name(&self) -> &str {
        "quadratic"
    }

    fn x_set(&self) -> &FeasibleSet {
        &self.x_set
    }

    fn y_set(&self) -> &FeasibleSet {
        &self.y_set
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.a.nrows() + self.c.nrows()).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn accumulate_gradient(&self, sample: &Vec<f64>, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        self.gradient_into(x, y, Some(sample), gx, gy);
    }

    fn exact_gradient(&self, x: &[f64], y: &[f64]) -> Option<BlockGradient> {
        let mut g = BlockGradient::zeros(x.len(), y.len());
        self.gradient_into(x, y, None, &mut g.x, &mut g.y);
        Some(g)
    }

    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        Some(0.5 * xv.dot(&(&self.a * &xv)) + xv.dot(&(&self.b * &yv)) - 0.5 * yv.dot(&(&self.c * &yv)))
    }
}
