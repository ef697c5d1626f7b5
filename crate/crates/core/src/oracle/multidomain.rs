use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BlockGradient, StochasticOracle};
use crate::error::{check_dim, Error, Result};
use crate::geometry::FeasibleSet;
use crate::linalg;

/// Labelled examples from one domain. Rows are stored with a trailing `1.0`
/// so the last model coordinate acts as a bias.
#[derive(Debug, Clone)]
pub struct Domain {
    rows: Vec<f64>,
    labels: Vec<f64>,
    width: usize,
}

impl Domain {
    /// `labels` must be `+1` or `-1`; a `0` label is read as `-1`.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("domain dataset is empty"));
        }
        check_dim(features.len(), labels.len())?;
        let d = features[0].len();
        let mut rows = Vec::with_capacity(features.len() * (d + 1));
        for f in &features {
            check_dim(d, f.len())?;
            if !linalg::all_finite(f) {
                return Err(Error::invalid("non-finite feature value"));
            }
            rows.extend_from_slice(f);
            rows.push(1.0);
        }
        let labels = labels
            .into_iter()
            .map(|t| match t {
                t if t == 1.0 => Ok(1.0),
                t if t == -1.0 || t == 0.0 => Ok(-1.0),
                t => Err(Error::invalid(format!("labels must be in {{-1, 0, 1}} (got {t})"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Domain { rows, labels, width: d + 1 })
    }

    /// Reads a headerless CSV file: feature columns followed by the label.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path.as_ref())?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::invalid(format!("{}: {e}", path.as_ref().display()))))
                .collect::<Result<Vec<_>>>()?;
            let (label, feats) = vals.split_last().ok_or_else(|| Error::invalid("empty CSV row"))?;
            features.push(feats.to_vec());
            labels.push(*label);
        }
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.width..(i + 1) * self.width]
    }

    fn margin(&self, i: usize, w: &[f64]) -> f64 {
        self.labels[i] * linalg::dot(self.row(i), w)
    }

    /// Logistic loss of example `i`.
    pub fn example_loss(&self, i: usize, w: &[f64]) -> f64 {
        softplus(-self.margin(i, w))
    }

    /// Adds `scale * grad loss_i(w)` into `out`.
    fn add_example_gradient(&self, i: usize, w: &[f64], scale: f64, out: &mut [f64]) {
        let coef = -self.labels[i] * sigmoid(-self.margin(i, w)) * scale;
        for (o, a) in out.iter_mut().zip(self.row(i)) {
            *o += coef * a;
        }
    }

    pub fn mean_loss(&self, w: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.example_loss(i, w)).sum::<f64>() / self.len() as f64
    }

    pub fn mean_gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.width];
        let s = 1.0 / self.len() as f64;
        for i in 0..self.len() {
            self.add_example_gradient(i, w, s, &mut g);
        }
        g
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Generator for Gaussian two-class domains. Domain `m` has its own class
/// direction `u_m` and offset `o_m`; an example with label `t` is
/// `o_m + t (separation / 2) u_m + noise_std * N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticDomains {
    pub domains: usize,
    pub features: usize,
    pub points_per_domain: usize,
    pub separation: f64,
    pub noise_std: f64,
    /// Standard deviation of the per-domain offsets `o_m`.
    pub offset_std: f64,
}

impl Default for SyntheticDomains {
    fn default() -> Self {
        SyntheticDomains { domains: 3, features: 5, points_per_domain: 500, separation: 3.0, noise_std: 1.0, offset_std: 0.5 }
    }
}

impl SyntheticDomains {
    pub fn generate(&self, seed: u64) -> Result<Vec<Domain>> {
        if self.features == 0 || self.points_per_domain == 0 {
            return Err(Error::invalid("features and points_per_domain must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.features;
        (0..self.domains)
            .map(|_| {
                let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = linalg::norm(&dir).max(f64::MIN_POSITIVE);
                dir.iter_mut().for_each(|v| *v /= n);
                let offset: Vec<f64> = (0..d)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        self.offset_std * e
                    })
                    .collect();
                let mut feats = Vec::with_capacity(self.points_per_domain);
                let mut labels = Vec::with_capacity(self.points_per_domain);
                for _ in 0..self.points_per_domain {
                    let t = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let f: Vec<f64> = (0..d)
                        .map(|j| {
                            let e: f64 = StandardNormal.sample(&mut rng);
                            offset[j] + t * 0.5 * self.separation * dir[j] + self.noise_std * e
                        })
                        .collect();
                    feats.push(f);
                    labels.push(t);
                }
                Domain::new(feats, labels)
            })
            .collect()
    }
}

/// `min_x max_{y in simplex} sum_m y_m f_m(x)` where `f_m` is the mean
/// logistic loss on domain `m`. A stochastic sample draws one example per
/// domain.
#[derive(Debug, Clone)]
pub struct RobustMultiDomain {
    domains: Vec<Domain>,
    x_set: FeasibleSet,
    y_set: FeasibleSet,
    lipschitz: f64,
}

impl RobustMultiDomain {
    pub const DEFAULT_BOX_RADIUS: f64 = 1e3;

    pub fn new(domains: Vec<Domain>) -> Result<Self> {
        Self::with_box(domains, Self::DEFAULT_BOX_RADIUS)
    }

    pub fn with_box(domains: Vec<Domain>, box_radius: f64) -> Result<Self> {
        if domains.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 domains (got {})", domains.len())));
        }
        let width = domains[0].width;
        for d in &domains {
            if d.is_empty() {
                return Err(Error::invalid("empty domain dataset"));
            }
            check_dim(width, d.width)?;
        }
        // Hessian of a logistic loss is bounded by ||a||^2 / 4, and the
        // cross block d(grad_x)/dy_m by the per-example gradient norm ||a||.
        let max_sq = domains
            .iter()
            .flat_map(|d| (0..d.len()).map(move |i| linalg::norm_sq(d.row(i))))
            .fold(0.0, f64::max);
        let lipschitz = max_sq / 4.0 + max_sq.sqrt();
        let m = domains.len();
        Ok(RobustMultiDomain {
            domains,
            x_set: FeasibleSet::cube(width, box_radius)?,
            y_set: FeasibleSet::simplex(m)?,
            lipschitz,
        })
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain_losses(&self, x: &[f64]) -> Vec<f64> {
        self.domains.iter().map(|d| d.mean_loss(x)).collect()
    }

    pub fn worst_domain_loss(&self, x: &[f64]) -> f64 {
        self.domain_losses(x).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn domain_gradient(&self, m: usize, x: &[f64]) -> Vec<f64> {
        self.domains[m].mean_gradient(x)
    }
}

impl StochasticOracle for RobustMultiDomain {
    /// One example index per domain.
    type Sample = Vec<usize>;

    fn name(&self) -> &str {
        "robust_multidomain"
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

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.domains.iter().map(|d| rng.random_range(0..d.len())).collect()
    }

    fn accumulate_gradient(&self, s: &Vec<usize>, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        for (m, (d, &i)) in self.domains.iter().zip(s).enumerate() {
            d.add_example_gradient(i, x, y[m], gx);
            gy[m] += d.example_loss(i, x);
        }
    }

    fn exact_gradient(&self, x: &[f64], y: &[f64]) -> Option<BlockGradient> {
        let mut gx = vec![0.0; x.len()];
        let mut gy = Vec::with_capacity(self.domains.len());
        for (d, ym) in self.domains.iter().zip(y) {
            let s = ym / d.len() as f64;
            for i in 0..d.len() {
                d.add_example_gradient(i, x, s, &mut gx);
            }
            gy.push(d.mean_loss(x));
        }
        Some(BlockGradient { x: gx, y: gy })
    }

    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        Some(self.domain_losses(x).iter().zip(y).map(|(f, w)| f * w).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn small() -> RobustMultiDomain {
        let spec = SyntheticDomains { points_per_domain: 40, features: 3, ..SyntheticDomains::default() };
        RobustMultiDomain::new(spec.generate(7).unwrap()).unwrap()
    }

    #[test]
    fn identical_domains_are_symmetric() {
        let d = SyntheticDomains { domains: 1, points_per_domain: 30, ..SyntheticDomains::default() }.generate(1).unwrap();
        let p = RobustMultiDomain::new(vec![d[0].clone(), d[0].clone()]).unwrap();
        let x = vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.05];
        let g1 = p.exact_gradient(&x, &[0.2, 0.8]).unwrap();
        let g2 = p.exact_gradient(&x, &[0.9, 0.1]).unwrap();
        for (a, b) in g1.x.iter().zip(&g2.x) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(g1.y[0], g1.y[1]);
    }

    #[test]
    fn vertex_weight_selects_one_domain() {
        let p = small();
        let x = vec![0.1, 0.2, -0.3, 0.05];
        let g = p.exact_gradient(&x, &[0.0, 1.0, 0.0]).unwrap();
        let single = p.domain_gradient(1, &x);
        for (a, b) in g.x.iter().zip(&single) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = SyntheticDomains { domains: 1, points_per_domain: 5, ..SyntheticDomains::default() }.generate(1).unwrap();
        assert!(RobustMultiDomain::new(d.clone()).is_err());
        assert!(Domain::new(vec![], vec![]).is_err());
        assert!(Domain::new(vec![vec![1.0]], vec![2.0]).is_err());
    }

    #[test]
    fn stable_logistic_pieces() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(sigmoid(-800.0), 0.0);
    }

    #[test]
    fn csv_ingestion() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "0.5, 1.0, 1").unwrap();
        writeln!(f, "-0.5, 2.0, 0").unwrap();
        let d = Domain::from_csv(f.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels, vec![1.0, -1.0]);
        assert_eq!(d.row(1), &[-0.5, 2.0, 1.0]);
    }
}
