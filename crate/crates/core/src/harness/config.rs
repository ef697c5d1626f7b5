use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FeasibleSet, ProxTerm};
use crate::oracle::{Domain, QuadraticSaddle, QuadraticSpec, RobustMultiDomain, StochasticOracle, SyntheticDomains, WganSpec, WganToy};
use crate::schedules::ScheduleConfig;
use crate::solver::{Algorithm, SolverSpec, StopOn, FEASIBILITY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Wgan,
    RobustMultidomain,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Quadratic, ProblemKind::Wgan, ProblemKind::RobustMultidomain];

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Wgan => "wgan",
            ProblemKind::RobustMultidomain => "robust_multidomain",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "random quadratic saddle 1/2 x'Ax + x'By - 1/2 y'Cy over boxes, Gaussian gradient noise",
            ProblemKind::Wgan => "one-dimensional WGAN: linear generator, quadratic discriminator, paired Gaussian samples",
            ProblemKind::RobustMultidomain => "worst-case weighted logistic regression over domains, simplex weights",
        }
    }
}

/// The problem section. Only the table matching `kind` may be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Seed for random problem instances and synthetic data.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<QuadraticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wgan: Option<WganSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticDomains>,
    /// One headerless CSV per domain, label in the last column. Replaces
    /// the synthetic data when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_files: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Quadratic(QuadraticSaddle),
    Wgan(WganToy),
    RobustMultidomain(RobustMultiDomain),
}

impl Problem {
    pub fn lipschitz(&self) -> f64 {
        match self {
            Problem::Quadratic(o) => o.lipschitz(),
            Problem::Wgan(o) => o.lipschitz(),
            Problem::RobustMultidomain(o) => o.lipschitz(),
        }
    }

    pub fn sets(&self) -> (&FeasibleSet, &FeasibleSet) {
        match self {
            Problem::Quadratic(o) => (o.x_set(), o.y_set()),
            Problem::Wgan(o) => (o.x_set(), o.y_set()),
            Problem::RobustMultidomain(o) => (o.x_set(), o.y_set()),
        }
    }
}

impl ProblemConfig {
    fn check_sections(&self) -> Result<()> {
        let present = [
            ("quadratic", self.quadratic.is_some(), ProblemKind::Quadratic),
            ("wgan", self.wgan.is_some(), ProblemKind::Wgan),
            ("synthetic", self.synthetic.is_some(), ProblemKind::RobustMultidomain),
            ("domain_files", self.domain_files.is_some(), ProblemKind::RobustMultidomain),
        ];
        for (table, is_set, owner) in present {
            if is_set && owner != self.kind {
                return Err(Error::Config(format!("problem.{table} does not apply to kind {}", self.kind.name())));
            }
        }
        if self.synthetic.is_some() && self.domain_files.is_some() {
            return Err(Error::Config("give either problem.synthetic or problem.domain_files, not both".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Problem> {
        self.check_sections()?;
        Ok(match self.kind {
            ProblemKind::Quadratic => {
                Problem::Quadratic(QuadraticSaddle::random(&self.quadratic.clone().unwrap_or_default(), self.seed)?)
            }
            ProblemKind::Wgan => Problem::Wgan(WganToy::from_spec(&self.wgan.clone().unwrap_or_default())?),
            ProblemKind::RobustMultidomain => {
                let domains = match &self.domain_files {
                    Some(files) => files.iter().map(Domain::from_csv).collect::<Result<Vec<_>>>()?,
                    None => self.synthetic.clone().unwrap_or_default().generate(self.seed)?,
                };
                Problem::RobustMultidomain(RobustMultiDomain::new(domains)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePreset {
    /// The WGAN experiment's manual schedule.
    WganExperiment,
    /// The multi-domain experiment's manual schedule.
    MultidomainExperiment,
    /// Theorem mode at the edge of the admissible constants, with `L` the
    /// problem's Lipschitz estimate.
    LargestAdmissible,
    /// Constant stepsizes `beta = 1/l`, `alpha = beta/10` with `l` the
    /// problem's Lipschitz estimate; meant for the SGDA baseline.
    TwoTimescale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSchedule {
    pub preset: SchedulePreset,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleEntry {
    Preset(PresetSchedule),
    Explicit(ScheduleConfig),
}

impl ScheduleEntry {
    pub fn resolve(&self, lipschitz: f64) -> ScheduleConfig {
        match self {
            ScheduleEntry::Explicit(s) => s.clone(),
            ScheduleEntry::Preset(PresetSchedule { preset, batch }) => match preset {
                SchedulePreset::WganExperiment => ScheduleConfig::wgan_experiment(*batch),
                SchedulePreset::MultidomainExperiment => ScheduleConfig::multidomain_experiment(*batch),
                SchedulePreset::LargestAdmissible => ScheduleConfig::largest_admissible(lipschitz, *batch),
                SchedulePreset::TwoTimescale => ScheduleConfig::constant(0.1 / lipschitz, 1.0 / lipschitz, *batch),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    /// Label used in output file names; unique within a config.
    pub name: String,
    pub algorithm: Algorithm,
    pub schedule: ScheduleEntry,
    #[serde(default)]
    pub prox_x: ProxTerm,
    #[serde(default)]
    pub prox_y: ProxTerm,
    #[serde(default)]
    pub stop_tolerance: f64,
    #[serde(default)]
    pub stop_on: StopOn,
    #[serde(default)]
    pub allow_unvalidated_schedule: bool,
}

/// Starting point shared by all solvers of one seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPoint {
    /// Uniform draws from both feasible sets, seeded by the run seed.
    #[default]
    Uniform,
    /// Box midpoints, ball centers, the simplex barycenter, or the origin.
    Center,
    Point { x: Vec<f64>, y: Vec<f64> },
}

fn center(set: &FeasibleSet) -> Vec<f64> {
    match set {
        FeasibleSet::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
        FeasibleSet::Ball { center, .. } => center.clone(),
        FeasibleSet::Simplex { dim } => vec![1.0 / *dim as f64; *dim],
        FeasibleSet::Unbounded { dim, .. } => vec![0.0; *dim],
    }
}

impl InitialPoint {
    pub fn resolve(&self, x_set: &FeasibleSet, y_set: &FeasibleSet, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (x, y) = match self {
            InitialPoint::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(2);
                let x = x_set.sample(&mut rng);
                (x, y_set.sample(&mut rng))
            }
            InitialPoint::Center => (center(x_set), center(y_set)),
            InitialPoint::Point { x, y } => (x.clone(), y.clone()),
        };
        if x.len() != x_set.dim() || y.len() != y_set.dim() {
            return Err(Error::Config(format!(
                "initial point has dims ({}, {}), problem has ({}, {})",
                x.len(),
                y.len(),
                x_set.dim(),
                y_set.dim()
            )));
        }
        if !x_set.contains(&x, FEASIBILITY_TOL) || !y_set.contains(&y, FEASIBILITY_TOL) {
            return Err(Error::Config("initial point is outside the feasible sets".into()));
        }
        Ok((x, y))
    }
}

fn default_stride() -> u64 {
    10
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: ProblemConfig,
    pub solvers: Vec<SolverEntry>,
    pub seeds: Vec<u64>,
    pub max_iters: u64,
    #[serde(default = "default_stride")]
    pub gap_eval_stride: u64,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    /// Minibatch size for gaps of problems without exact gradients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_batch: Option<usize>,
    #[serde(default)]
    pub initial: InitialPoint,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn solver_spec(&self, entry: &SolverEntry, lipschitz: f64) -> SolverSpec {
        SolverSpec {
            algorithm: entry.algorithm,
            schedule: entry.schedule.resolve(lipschitz),
            prox_x: entry.prox_x.clone(),
            prox_y: entry.prox_y.clone(),
            max_iters: self.max_iters,
            stop_tolerance: entry.stop_tolerance,
            gap_eval_stride: self.gap_eval_stride,
            stop_on: entry.stop_on,
            allow_unvalidated_schedule: entry.allow_unvalidated_schedule,
            eval_batch: self.eval_batch,
            record_wall_time: self.record_wall_time,
        }
    }
}

/// Loads a config file and resolves its relative paths against the file's
/// directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut config = ExperimentConfig::from_toml_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if config.output_dir.is_relative() {
        config.output_dir = base.join(&config.output_dir);
    }
    if let Some(files) = config.problem.domain_files.as_mut() {
        for f in files.iter_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
    }
    Ok(config)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks everything a run needs before any solver starts: seeds, names,
/// problem construction, schedules, and initial points.
pub fn validate_config(config: &ExperimentConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if config.seeds.is_empty() {
        report.errors.push("seeds: at least one seed is required".into());
    }
    if config.solvers.is_empty() {
        report.errors.push("solvers: at least one solver is required".into());
    }
    let distinct: BTreeSet<u64> = config.seeds.iter().copied().collect();
    if distinct.len() != config.seeds.len() {
        report.errors.push("seeds: every seed must be distinct".into());
    }
    let mut names = BTreeSet::new();
    for s in &config.solvers {
        if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            report.errors.push(format!("solver name {:?} must be nonempty [A-Za-z0-9_-]", s.name));
        }
        if !names.insert(s.name.as_str()) {
            report.errors.push(format!("solver name {:?} is used twice", s.name));
        }
    }
    let problem = match config.problem.build() {
        Ok(p) => p,
        Err(e) => {
            report.errors.push(format!("problem: {e}"));
            return report;
        }
    };
    let lipschitz = problem.lipschitz();
    for entry in &config.solvers {
        match config.solver_spec(entry, lipschitz).validate() {
            Ok(warnings) => report.warnings.extend(warnings.into_iter().map(|w| format!("solver {}: {w}", entry.name))),
            Err(e) => report.errors.push(format!("solver {}: {e}", entry.name)),
        }
    }
    let (x_set, y_set) = problem.sets();
    for seed in &config.seeds {
        if let Err(e) = config.initial.resolve(x_set, y_set, *seed) {
            report.errors.push(format!("seed {seed}: {e}"));
            break;
        }
    }
    report
}
