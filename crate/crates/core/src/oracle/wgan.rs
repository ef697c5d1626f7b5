use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BlockGradient, StochasticOracle};
use crate::error::{Error, Result};
use crate::geometry::FeasibleSet;

/// One-dimensional WGAN with a linear generator `G(z) = p1 + p2 z` and a
/// quadratic discriminator `D(x) = q1 x + q2 x^2`:
///
/// ```text
/// min_p max_q  E[ D_q(x_real) - D_q(G_p(z)) ]
/// ```
///
/// with `x_real ~ N(real_mean, real_std^2)` and `z ~ N(0, z_std^2)`. The
/// generator parameters `p` form the `x` block and the discriminator
/// parameters `q` the `y` block.
#[derive(Debug, Clone)]
pub struct WganToy {
    real_mean: f64,
    real_std: f64,
    z_std: f64,
    x_set: FeasibleSet,
    y_set: FeasibleSet,
    lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WganSpec {
    pub real_mean: f64,
    pub real_std: f64,
    pub z_std: f64,
    /// Generator and discriminator parameters live in `[-r, r]^2`.
    pub box_radius: f64,
}

impl Default for WganSpec {
    fn default() -> Self {
        WganSpec { real_mean: 0.0, real_std: 0.1, z_std: 1.0, box_radius: 2.0 }
    }
}

fn max_abs_coord(set: &FeasibleSet) -> f64 {
    match set {
        FeasibleSet::Box { lower, upper } => lower.iter().chain(upper).fold(0.0, |m, v| m.max(v.abs())),
        other => other.max_norm(),
    }
}

impl WganToy {
    pub fn new(real_mean: f64, real_std: f64, z_std: f64, phi_set: FeasibleSet, psi_set: FeasibleSet) -> Result<Self> {
        if !(real_std > 0.0 && z_std > 0.0) || !real_mean.is_finite() {
            return Err(Error::invalid("real_std and z_std must be positive"));
        }
        if phi_set.dim() != 2 || psi_set.dim() != 2 {
            return Err(Error::invalid("generator and discriminator sets must be 2-dimensional"));
        }
        // Frobenius bound on the Hessian of the expected objective over the sets.
        let (hx, hy) = (max_abs_coord(&phi_set), max_abs_coord(&psi_set));
        let s2 = z_std * z_std;
        let diag = (2.0 * hy).powi(2) + (2.0 * hy * s2).powi(2);
        let off = 1.0 + (2.0 * hx).powi(2) + (2.0 * hx * s2).powi(2);
        let lipschitz = (diag + 2.0 * off).sqrt();
        Ok(WganToy { real_mean, real_std, z_std, x_set: phi_set, y_set: psi_set, lipschitz })
    }

    pub fn from_spec(spec: &WganSpec) -> Result<Self> {
        Self::new(
            spec.real_mean,
            spec.real_std,
            spec.z_std,
            FeasibleSet::cube(2, spec.box_radius)?,
            FeasibleSet::cube(2, spec.box_radius)?,
        )
    }

    /// Generator parameters that reproduce the real distribution's first two
    /// moments: `(real_mean, real_std / z_std)`.
    pub fn target_generator(&self) -> [f64; 2] {
        [self.real_mean, self.real_std / self.z_std]
    }
}

impl StochasticOracle for WganToy {
    /// `(x_real, z)`
    type Sample = [f64; 2];

    fn name(&self) -> &str {
        "wgan"
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

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let xr: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        [self.real_mean + self.real_std * xr, self.z_std * z]
    }

    fn accumulate_gradient(&self, s: &[f64; 2], x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let [xr, z] = *s;
        let fake = x[0] + x[1] * z;
        let d_fake = -y[0] - 2.0 * y[1] * fake;
        gx[0] += d_fake;
        gx[1] += d_fake * z;
        gy[0] += xr - fake;
        gy[1] += xr * xr - fake * fake;
    }

    fn exact_gradient(&self, x: &[f64], y: &[f64]) -> Option<BlockGradient> {
        let (m, s2r, s2z) = (self.real_mean, self.real_std * self.real_std, self.z_std * self.z_std);
        Some(BlockGradient {
            x: vec![-y[0] - 2.0 * y[1] * x[0], -2.0 * y[1] * x[1] * s2z],
            y: vec![m - x[0], m * m + s2r - x[0] * x[0] - x[1] * x[1] * s2z],
        })
    }

    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let (m, s2r, s2z) = (self.real_mean, self.real_std * self.real_std, self.z_std * self.z_std);
        Some(y[0] * (m - x[0]) + y[1] * (m * m + s2r - x[0] * x[0] - x[1] * x[1] * s2z))
    }

    fn target_x(&self) -> Option<Vec<f64>> {
        Some(self.target_generator().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> WganToy {
        WganToy::from_spec(&WganSpec::default()).unwrap()
    }

    #[test]
    fn matched_moments_zero_discriminator_gradient() {
        let w = toy();
        let g = w.exact_gradient(&w.target_generator(), &[0.7, -1.3]).unwrap();
        assert_eq!(g.y, vec![0.0, 0.0]);
    }

    #[test]
    fn generator_gradient_at_target() {
        let w = toy();
        let g = w.exact_gradient(&[0.0, 0.1], &[0.0, 0.0]).unwrap();
        assert_eq!(g.x, vec![0.0, 0.0]);
        // (-q1 - 2 q2 p1, -2 q2 p2 s_z^2) at p = (0.5, 0.1), q = (0.3, 0.2)
        let g = w.exact_gradient(&[0.5, 0.1], &[0.3, 0.2]).unwrap();
        assert!((g.x[0] - (-0.3 - 0.2)).abs() < 1e-15);
        assert!((g.x[1] - (-0.04)).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_reproducible() {
        let w = toy();
        let a = w.sample_gradients(&[0.5, 0.5], &[0.1, 0.2], 100, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = w.sample_gradients(&[0.5, 0.5], &[0.1, 0.2], 100, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        let bits = |g: &BlockGradient| g.x.iter().chain(&g.y).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_nonpositive_scales() {
        let set = FeasibleSet::cube(2, 1.0).unwrap();
        assert!(WganToy::new(0.0, 0.0, 1.0, set.clone(), set.clone()).is_err());
        assert!(WganToy::new(0.0, 0.1, -1.0, set.clone(), set).is_err());
    }
}
