//! Parameter sequences for the momentum descent-ascent solvers.
//!
//! In theorem mode the five sequences are
//!
//! ```text
//! eta_k   = (k+2)^(-5/13)          alpha_k = a4 (k+2)^(-4/13)
//! rho_k   = L (k+1)^(-2/13)        gamma_k = a5 (k+2)^(-12/13)
//! theta_k = a6 (k+2)^(-8/13)
//! ```
//!
//! and the constants must satisfy the bounds checked by
//! [`ScheduleConfig::validate_constraints`]. Manual mode replaces each
//! sequence by `scale / ((k + shift)^exponent + offset)`, which covers the
//! shifted variants used in experiments.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// `scale / ((k + shift)^exponent + offset)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sequence {
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
    /// Accepts a number or a `"p/q"` fraction string in config files.
    #[serde(deserialize_with = "deserialize_exponent")]
    pub exponent: f64,
    #[serde(default)]
    pub offset: f64,
}

impl Sequence {
    pub fn new(scale: f64, shift: f64, exponent: f64, offset: f64) -> Self {
        Sequence { scale, shift, exponent, offset }
    }

    pub fn constant(value: f64) -> Self {
        Sequence::new(value, 0.0, 0.0, 0.0)
    }

    pub fn at(&self, k: u64) -> f64 {
        self.scale / ((k as f64 + self.shift).powf(self.exponent) + self.offset)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let finite = [self.scale, self.shift, self.exponent, self.offset].iter().all(|v| v.is_finite());
        if !finite || self.scale < 0.0 || 1.0 + self.shift <= 0.0 {
            return Err(Error::invalid(format!("sequence {name} is malformed: {self:?}")));
        }
        Ok(())
    }
}

fn deserialize_exponent<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(de)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => parse_fraction(&s).ok_or_else(|| serde::de::Error::custom(format!("bad exponent {s:?}"))),
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().ok()?;
            let q: f64 = q.trim().parse().ok()?;
            (q != 0.0).then(|| p / q)
        }
        None => s.trim().parse().ok(),
    }
}

/// Explicit sequences overriding the theorem family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualSchedule {
    pub eta: Sequence,
    pub alpha: Sequence,
    pub rho: Sequence,
    pub gamma: Sequence,
    pub theta: Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Theorem,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub a2: f64,
    #[serde(default)]
    pub a4: f64,
    #[serde(default)]
    pub a5: f64,
    #[serde(default)]
    pub a6: f64,
    /// Smoothness constant `L` of the regularized objective.
    pub lipschitz: f64,
    /// Dual stepsize.
    pub beta: f64,
    /// Minibatch size.
    pub batch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual: Option<ManualSchedule>,
}

/// The five sequence values at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleAt {
    pub eta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl ScheduleConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn theorem(lipschitz: f64, beta: f64, batch: usize, a1: f64, a2: f64, a4: f64, a5: f64, a6: f64) -> Self {
        ScheduleConfig { a1, a2, a4, a5, a6, lipschitz, beta, batch, manual: None }
    }

    /// Theorem-mode constants at the edge of the admissible region:
    /// `beta = 1/(6L)`, the largest `a4`, `a1 = a2 = a1_max`, and the
    /// smallest admissible `a5`, `a6`.
    pub fn largest_admissible(lipschitz: f64, batch: usize) -> Self {
        let l = lipschitz;
        let beta = 1.0 / (6.0 * l);
        let a4 = (1.0 / (8.0 * l)).min(beta / (8.0 * 5f64.sqrt()));
        let b = batch as f64;
        let a1 = (b / (32.0 * a4 * l * l)).min(b * a4 / (2.0 * l * beta));
        let a5 = 4.0 * a4 / a1 + 12.0 / 13.0;
        let a6 = 80.0 * a4 / a1 + 12.0 / 13.0;
        Self::theorem(l, beta, batch, a1, a1, a4, a5, a6)
    }

    pub fn manual(lipschitz: f64, beta: f64, batch: usize, sequences: ManualSchedule) -> Self {
        ScheduleConfig {
            a1: 0.0,
            a2: 0.0,
            a4: 0.0,
            a5: 0.0,
            a6: 0.0,
            lipschitz,
            beta,
            batch,
            manual: Some(sequences),
        }
    }

    /// The WGAN experiment's schedule: `eta = (k+2)^(-5/13)`,
    /// `alpha = 0.5 (k+2)^(-4/13)`, `rho = (k+1)^(-2/13)`,
    /// `gamma = 3 (k+2)^(-12/13)`, `theta = 2 (k+2)^(-8/13)`, `beta = 0.005`.
    pub fn wgan_experiment(batch: usize) -> Self {
        Self::manual(
            1.0,
            0.005,
            batch,
            ManualSchedule {
                eta: Sequence::new(1.0, 2.0, 5.0 / 13.0, 0.0),
                alpha: Sequence::new(0.5, 2.0, 4.0 / 13.0, 0.0),
                rho: Sequence::new(1.0, 1.0, 2.0 / 13.0, 0.0),
                gamma: Sequence::new(3.0, 2.0, 12.0 / 13.0, 0.0),
                theta: Sequence::new(2.0, 2.0, 8.0 / 13.0, 0.0),
            },
        )
    }

    /// The multi-domain experiment's schedule: `eta = 1/((k+12)^(5/13)+1)`,
    /// `alpha = 0.5/((k+12)^(2/13)+1)`, `rho = 8/((k+11)^(2/13)+2)`,
    /// `gamma = 3/((k+12)^(8/13)+1)`, `theta = 2/((k+12)^(8/13)+1)`,
    /// `beta = 0.001`.
    pub fn multidomain_experiment(batch: usize) -> Self {
        Self::manual(
            8.0,
            0.001,
            batch,
            ManualSchedule {
                eta: Sequence::new(1.0, 12.0, 5.0 / 13.0, 1.0),
                alpha: Sequence::new(0.5, 12.0, 2.0 / 13.0, 1.0),
                rho: Sequence::new(8.0, 11.0, 2.0 / 13.0, 2.0),
                gamma: Sequence::new(3.0, 12.0, 8.0 / 13.0, 1.0),
                theta: Sequence::new(2.0, 12.0, 8.0 / 13.0, 1.0),
            },
        )
    }

    /// Constant stepsizes, for the plain descent-ascent baseline.
    pub fn constant(alpha: f64, beta: f64, batch: usize) -> Self {
        Self::manual(
            1.0,
            beta,
            batch,
            ManualSchedule {
                eta: Sequence::constant(1.0),
                alpha: Sequence::constant(alpha),
                rho: Sequence::constant(0.0),
                gamma: Sequence::constant(1.0),
                theta: Sequence::constant(1.0),
            },
        )
    }

    pub fn mode(&self) -> ScheduleMode {
        if self.manual.is_some() {
            ScheduleMode::Manual
        } else {
            ScheduleMode::Theorem
        }
    }

    /// Structural checks (positivity, finiteness). The theorem's constant
    /// bounds are reported separately by [`Self::validate_constraints`].
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(Error::invalid(format!("lipschitz must be positive (got {})", self.lipschitz)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive (got {})", self.beta)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be >= 1"));
        }
        match &self.manual {
            Some(m) => {
                m.eta.validate("eta")?;
                m.alpha.validate("alpha")?;
                m.rho.validate("rho")?;
                m.gamma.validate("gamma")?;
                m.theta.validate("theta")?;
            }
            None => {
                for (name, v) in [("a1", self.a1), ("a2", self.a2), ("a4", self.a4), ("a5", self.a5), ("a6", self.a6)] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::invalid(format!("{name} must be positive (got {v})")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sequence values at iteration `k >= 1`, with `gamma` and `theta`
    /// clipped to 1.
    pub fn schedule_at(&self, k: u64) -> Result<ScheduleAt> {
        if k == 0 {
            return Err(Error::invalid("schedules are indexed from k = 1"));
        }
        let kf = k as f64;
        let raw = match &self.manual {
            None => ScheduleAt {
                eta: (kf + 2.0).powf(-5.0 / 13.0),
                alpha: self.a4 * (kf + 2.0).powf(-4.0 / 13.0),
                rho: self.lipschitz * (kf + 1.0).powf(-2.0 / 13.0),
                gamma: self.a5 * (kf + 2.0).powf(-12.0 / 13.0),
                theta: self.a6 * (kf + 2.0).powf(-8.0 / 13.0),
            },
            Some(m) => ScheduleAt {
                eta: m.eta.at(k),
                alpha: m.alpha.at(k),
                rho: m.rho.at(k),
                gamma: m.gamma.at(k),
                theta: m.theta.at(k),
            },
        };
        let at = ScheduleAt { gamma: raw.gamma.min(1.0), theta: raw.theta.min(1.0), ..raw };
        if !(at.eta > 0.0 && at.eta <= 1.0) {
            return Err(Error::invalid(format!("eta_{k} = {} outside (0, 1]", at.eta)));
        }
        if !(at.alpha > 0.0 && at.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha_{k} = {} must be positive", at.alpha)));
        }
        if !(at.rho >= 0.0 && at.rho.is_finite()) {
            return Err(Error::invalid(format!("rho_{k} = {} must be nonnegative", at.rho)));
        }
        if !(at.gamma > 0.0 && at.theta > 0.0) {
            return Err(Error::invalid(format!("gamma_{k}, theta_{k} must be positive")));
        }
        Ok(at)
    }

    /// Checks the theorem's constant bounds. In manual mode only the
    /// bounds on `beta` apply; the `a*` constants are not part of the schedule.
    pub fn validate_constraints(&self) -> ConstraintReport {
        let l = self.lipschitz;
        let b = self.batch as f64;
        let mut checks = Vec::new();
        let mut push = |name: &str, lhs: f64, relation: Relation, rhs: f64| {
            checks.push(ConstraintCheck::new(name, lhs, relation, rhs));
        };
        if self.manual.is_none() {
            let a_bound = (b / (32.0 * self.a4 * l * l)).min(b * self.a4 / (2.0 * l * self.beta));
            push("a1 > 0", self.a1, Relation::Gt, 0.0);
            push("a1 <= min{b/(32 a4 L^2), b a4/(2 L beta)}", self.a1, Relation::Le, a_bound);
            push("a2 > 0", self.a2, Relation::Gt, 0.0);
            push("a2 <= min{b/(32 a4 L^2), b a4/(2 L beta)}", self.a2, Relation::Le, a_bound);
            push("a4 > 0", self.a4, Relation::Gt, 0.0);
            push(
                "a4 <= min{1/(8L), beta/(8 sqrt 5)}",
                self.a4,
                Relation::Le,
                (1.0 / (8.0 * l)).min(self.beta / (8.0 * 5f64.sqrt())),
            );
            push("a5 >= 4 a4/a1 + 12/13", self.a5, Relation::Ge, 4.0 * self.a4 / self.a1 + 12.0 / 13.0);
            push("a6 >= 80 a4/a2 + 12/13", self.a6, Relation::Ge, 80.0 * self.a4 / self.a2 + 12.0 / 13.0);
        }
        push("beta > 0", self.beta, Relation::Gt, 0.0);
        push("beta <= 1/(6L)", self.beta, Relation::Le, 1.0 / (6.0 * l));
        push("batch >= 1", b, Relation::Ge, 1.0);
        ConstraintReport { mode: self.mode(), checks }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub passed: bool,
}

impl ConstraintCheck {
    fn new(name: &str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let passed = match relation {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        };
        ConstraintCheck { name: name.to_string(), lhs, relation, rhs, passed }
    }
}

impl fmt::Display for ConstraintCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{mark} {}: {} {} {}", self.name, self.lhs, self.relation, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub mode: ScheduleMode,
    pub checks: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityTarget {
    /// `max(0, (2 L sigma_y / epsilon)^(13/2) - 1)`
    pub explicit_branch: f64,
    /// Exponent of `1/epsilon` in the (log-factor-free) iteration bound.
    pub epsilon_exponent: f64,
}

/// The explicit branch of the iteration bound. The implicit branch is not
/// solved.
pub fn complexity_target(epsilon: f64, sigma_y: f64, lipschitz: f64) -> Result<ComplexityTarget> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive (got {epsilon})")));
    }
    let branch = (2.0 * lipschitz * sigma_y / epsilon).powf(6.5) - 1.0;
    Ok(ComplexityTarget { explicit_branch: branch.max(0.0), epsilon_exponent: 6.5 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theorem_values_at_k1() {
        // 40-digit evaluations of the closed forms.
        let cfg = ScheduleConfig::theorem(1.0, 1.0 / 6.0, 100, 0.1, 0.1, 0.1, 1.0, 1.0);
        let s = cfg.schedule_at(1).unwrap();
        assert_relative_eq!(s.eta, 0.655377949285998199187680654742842146, max_relative = 1e-14);
        assert_relative_eq!(s.alpha, 0.071317064717042534216615278149336689, max_relative = 1e-14);
        assert_relative_eq!(s.rho, 0.898850973195541874108540435274556343, max_relative = 1e-14);
        assert_relative_eq!(s.gamma, 0.362727414487772245826982050868752654, max_relative = 1e-14);
        assert_relative_eq!(s.theta, 0.508612371985483312104707918609398432, max_relative = 1e-14);
    }

    #[test]
    fn wgan_values_at_k1_are_clipped() {
        let s = ScheduleConfig::wgan_experiment(100).schedule_at(1).unwrap();
        assert_relative_eq!(s.eta, 0.655377949285998199187680654742842146, max_relative = 1e-14);
        assert_relative_eq!(s.alpha, 0.356585323585212671083076390746683444, max_relative = 1e-14);
        assert_relative_eq!(s.rho, 0.898850973195541874108540435274556343, max_relative = 1e-14);
        // 3 * 3^(-12/13) = 1.088..., 2 * 3^(-8/13) = 1.017...
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.theta, 1.0);
        let later = ScheduleConfig::wgan_experiment(100).schedule_at(10).unwrap();
        assert!(later.gamma < 1.0 && later.theta < 1.0);
    }

    #[test]
    fn k_zero_is_rejected() {
        let cfg = ScheduleConfig::largest_admissible(1.0, 10);
        assert!(matches!(cfg.schedule_at(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sequences_decay() {
        let cfg = ScheduleConfig::theorem(1.0, 1.0 / 6.0, 100, 0.1, 0.1, 0.1, 1.0, 1.0);
        let a = cfg.schedule_at(10).unwrap();
        let b = cfg.schedule_at(1_000_000_000).unwrap();
        for (x, y) in [(a.eta, b.eta), (a.alpha, b.alpha), (a.rho, b.rho), (a.gamma, b.gamma), (a.theta, b.theta)] {
            assert!(y < x && y < 0.3);
        }
    }

    #[test]
    fn reference_config_passes() {
        let l = 1.0;
        let beta = 1.0 / 6.0;
        let a4: f64 = (1.0f64 / 8.0).min(beta / (8.0 * 5f64.sqrt()));
        assert_relative_eq!(a4, 0.009316949906249123735, max_relative = 1e-14);
        let cfg = ScheduleConfig::theorem(
            l,
            beta,
            100,
            0.1,
            0.1,
            a4,
            4.0 * a4 / 0.1 + 12.0 / 13.0,
            80.0 * a4 / 0.1 + 12.0 / 13.0,
        );
        let report = cfg.validate_constraints();
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    }

    #[test]
    fn large_beta_fails() {
        let mut cfg = ScheduleConfig::largest_admissible(1.0, 100);
        cfg.beta = 1.0 / 3.0;
        let report = cfg.validate_constraints();
        assert!(!report.passed());
        assert!(report.failures().any(|c| c.name == "beta <= 1/(6L)"));
    }

    #[test]
    fn zero_a5_fails() {
        let mut cfg = ScheduleConfig::largest_admissible(1.0, 100);
        cfg.a5 = 0.0;
        let report = cfg.validate_constraints();
        let names: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["a5 >= 4 a4/a1 + 12/13"]);
    }

    #[test]
    fn largest_admissible_is_admissible() {
        for l in [0.1, 1.0, 7.5] {
            for b in [1, 32, 1000] {
                let cfg = ScheduleConfig::largest_admissible(l, b);
                assert!(cfg.validate_constraints().passed());
                cfg.validate().unwrap();
            }
        }
    }

    #[test]
    fn complexity_branch() {
        assert_eq!(complexity_target(2.0, 1.0, 1.0).unwrap().explicit_branch, 0.0);
        assert_relative_eq!(
            complexity_target(1.0, 1.0, 1.0).unwrap().explicit_branch,
            89.50966799187808312,
            max_relative = 1e-14
        );
        assert_eq!(complexity_target(1.0, 0.0, 1.0).unwrap().explicit_branch, 0.0);
        assert!(complexity_target(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn fraction_exponents_parse() {
        let s: Sequence = toml::from_str("scale = 1.0\nshift = 2.0\nexponent = \"5/13\"").unwrap();
        assert_eq!(s.exponent, 5.0 / 13.0);
        let s: Sequence = toml::from_str("scale = 1.0\nexponent = 0.5").unwrap();
        assert_eq!(s.exponent, 0.5);
        assert!(toml::from_str::<Sequence>("scale = 1.0\nexponent = \"x/2\"").is_err());
        assert!(toml::from_str::<Sequence>("scale = 1.0\nexponent = 1.0\nbogus = 1").is_err());
    }
}
