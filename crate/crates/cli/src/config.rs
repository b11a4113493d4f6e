//! Run configuration: a single TOML file, see the README for the grammar.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use multiphase::grid::{build_domain, BoxSpec, GridDomain, IndicatorSet};
use multiphase::io::{read_spfield, Encoding};
use multiphase::optimize::{InitMode, OptimizerConfig};
use multiphase::pde::{Preconditioning, SolverConfig};
use multiphase::shapefn::{Aggregator, FunctionalSpec, ObjectiveSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub spfield_encoding: EncodingCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainCfg>,
    #[serde(default)]
    pub solver: SolverCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveCfg>,
    #[serde(default)]
    pub optimizer: OptimizerCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotonicity: Option<MonotonicityCfg>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Spfield,
    Png,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Spfield, OutputFormat::Png]
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EncodingCfg {
    #[default]
    Ascii,
    Binary,
}

impl From<EncodingCfg> for Encoding {
    fn from(e: EncodingCfg) -> Self {
        match e {
            EncodingCfg::Ascii => Encoding::Ascii,
            EncodingCfg::Binary => Encoding::Binary,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainCfg {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<ShapeCfg>,
}

/// A region of the box, used for domain masks and solve supports.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeCfg {
    #[default]
    Full,
    /// Disk (ball in 3D).
    Disk { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// SPFIELD file; cells with value `>= 0.5` are inside.
    File { path: PathBuf },
}

impl ShapeCfg {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            ShapeCfg::Full | ShapeCfg::File { .. } => true,
            ShapeCfg::Disk { center, radius } => {
                x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < radius * radius
            }
            ShapeCfg::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        }
    }

    fn check_dim(&self, dim: usize, what: &str) -> Result<(), CliError> {
        let ok = match self {
            ShapeCfg::Full | ShapeCfg::File { .. } => true,
            ShapeCfg::Disk { center, radius } => center.len() == dim && *radius > 0.0,
            ShapeCfg::Box { lower, upper } => lower.len() == dim && upper.len() == dim,
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("{what}: shape does not match dimension {dim}")))
        }
    }

    /// Cells of `domain` inside the shape.
    pub fn to_set(&self, domain: &Arc<GridDomain<f64>>, base: &Path, what: &str) -> Result<IndicatorSet<f64>, CliError> {
        self.check_dim(domain.dim(), what)?;
        match self {
            ShapeCfg::File { path } => {
                let values = read_field(&base.join(path), domain)?;
                Ok(IndicatorSet::new(domain.clone(), values.iter().map(|&v| v >= 0.5).collect())?)
            }
            shape => Ok(IndicatorSet::from_fn(domain.clone(), |x| shape.contains(x))),
        }
    }
}

/// Reads an SPFIELD file that must live on `domain`.
pub fn read_field(path: &Path, domain: &GridDomain<f64>) -> Result<Vec<f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let field = read_spfield(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    field
        .values_on(domain)
        .map_err(|_| CliError::Input(format!("{}: field grid does not match the configured domain", path.display())))
}

impl DomainCfg {
    pub fn build(&self, base: &Path) -> Result<Arc<GridDomain<f64>>, CliError> {
        let spec = BoxSpec::new(&self.lower, &self.upper, &self.cells);
        let domain = Arc::new(build_domain(&spec, None).map_err(|e| CliError::Config(format!("domain: {e}")))?);
        match &self.mask {
            None | Some(ShapeCfg::Full) => Ok(domain),
            Some(shape) => {
                let set = shape.to_set(&domain, base, "domain.mask")?;
                Ok(Arc::new(domain.with_mask(set.support().to_vec())?))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerCfg {
    #[default]
    Multigrid,
    Jacobi,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverCfg {
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
    pub eig_tol: Option<f64>,
    pub eig_max_iter: Option<usize>,
    #[serde(default)]
    pub preconditioner: PreconditionerCfg,
    pub seed: Option<u64>,
}

impl SolverCfg {
    pub fn build(&self) -> Result<SolverConfig<f64>, CliError> {
        let d = SolverConfig::<f64>::default();
        let positive = |v: Option<f64>, default: f64, name: &str| match v {
            Some(t) if !(t > 0.0 && t < 1.0) => Err(CliError::Config(format!("solver.{name} must be in (0, 1), got {t}"))),
            Some(t) => Ok(t),
            None => Ok(default),
        };
        Ok(SolverConfig {
            cg_tol: positive(self.cg_tol, d.cg_tol, "cg_tol")?,
            cg_max_iter: self.cg_max_iter.unwrap_or(d.cg_max_iter),
            eig_tol: positive(self.eig_tol, d.eig_tol, "eig_tol")?,
            eig_max_iter: self.eig_max_iter.unwrap_or(d.eig_max_iter),
            preconditioner: match self.preconditioner {
                PreconditionerCfg::Multigrid => Preconditioning::Multigrid,
                PreconditionerCfg::Jacobi => Preconditioning::Jacobi,
            },
            seed: self.seed.unwrap_or(d.seed),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Eigen,
    Torsion,
    #[default]
    Both,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolveCfg {
    #[serde(default)]
    pub problem: Problem,
    #[serde(default = "default_eigenpairs")]
    pub eigenpairs: usize,
    #[serde(default)]
    pub support: ShapeCfg,
}

fn default_eigenpairs() -> usize {
    3
}

/// `"lambda_<k>"` or `"energy"`.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(try_from = "String", into = "String")]
pub struct FunctionalName(pub FunctionalSpec);

impl TryFrom<String> for FunctionalName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        if s == "energy" || s == "torsion" {
            return Ok(Self(FunctionalSpec::TorsionEnergy));
        }
        s.strip_prefix("lambda_")
            .and_then(|k| k.parse().ok())
            .filter(|&k: &usize| k >= 1)
            .map(|k| Self(FunctionalSpec::Eigenvalue { k }))
            .ok_or_else(|| format!("unknown functional {s:?}; expected \"lambda_<k>\" or \"energy\""))
    }
}

impl From<FunctionalName> for String {
    fn from(f: FunctionalName) -> String {
        match f.0 {
            FunctionalSpec::Eigenvalue { k } => format!("lambda_{k}"),
            FunctionalSpec::TorsionEnergy => "energy".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorCfg {
    #[default]
    Sum,
    Max,
    WeightedSum,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveCfg {
    #[serde(default)]
    pub g: AggregatorCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Number of phases when a single `functional` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals: Option<Vec<FunctionalName>>,
    #[serde(default)]
    pub m: f64,
}

impl ObjectiveCfg {
    pub fn build(&self) -> Result<ObjectiveSpec<f64>, CliError> {
        let functionals: Vec<FunctionalSpec> = match (&self.functional, &self.functionals) {
            (Some(f), None) => vec![f.0; self.phases.unwrap_or(1)],
            (None, Some(list)) => {
                if self.phases.is_some_and(|p| p != list.len()) {
                    return Err(CliError::Config("objective.phases disagrees with objective.functionals".into()));
                }
                list.iter().map(|f| f.0).collect()
            }
            _ => {
                return Err(CliError::Config(
                    "objective: give exactly one of `functional` (with `phases`) or `functionals`".into(),
                ))
            }
        };
        let g = match (self.g, &self.weights) {
            (AggregatorCfg::Sum, None) => Aggregator::Sum,
            (AggregatorCfg::Max, None) => Aggregator::Max,
            (AggregatorCfg::WeightedSum, Some(w)) => Aggregator::WeightedSum(w.clone()),
            (AggregatorCfg::WeightedSum, None) => {
                return Err(CliError::Config("objective.weights is required for g = \"weighted_sum\"".into()))
            }
            (_, Some(_)) => return Err(CliError::Config("objective.weights is only valid for g = \"weighted_sum\"".into())),
        };
        let spec = ObjectiveSpec { g, functionals, m: self.m };
        spec.validate().map_err(|e| CliError::Config(format!("objective: {e}")))?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitCfg {
    #[default]
    Voronoi,
    VoronoiFull,
    Random,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerCfg {
    pub max_iters: Option<usize>,
    pub initial_step: Option<f64>,
    pub backtrack: Option<f64>,
    pub armijo: Option<f64>,
    pub max_halvings: Option<usize>,
    pub mu_schedule: Option<Vec<f64>>,
    pub stop_tol: Option<f64>,
    #[serde(default)]
    pub init: InitCfg,
    pub threshold: Option<f64>,
    pub gap_tol: Option<f64>,
}

impl OptimizerCfg {
    pub fn build(&self, seed: u64, solver: SolverConfig<f64>) -> Result<OptimizerConfig<f64>, CliError> {
        let d = OptimizerConfig::<f64>::default();
        let config = OptimizerConfig {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            initial_step: self.initial_step.or(d.initial_step),
            backtrack: self.backtrack.unwrap_or(d.backtrack),
            armijo: self.armijo.unwrap_or(d.armijo),
            max_halvings: self.max_halvings.unwrap_or(d.max_halvings),
            mu_schedule: self.mu_schedule.clone().unwrap_or(d.mu_schedule),
            stop_tol: self.stop_tol.unwrap_or(d.stop_tol),
            seed,
            init: match self.init {
                InitCfg::Voronoi => InitMode::Voronoi,
                InitCfg::VoronoiFull => InitMode::VoronoiFull,
                InitCfg::Random => InitMode::Random,
            },
            threshold: self.threshold.unwrap_or(d.threshold),
            solver,
            gap_tol: self.gap_tol.unwrap_or(d.gap_tol),
        };
        config.validate().map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Subsolution,
    Perimeter,
    LowerBound,
    Growth,
    Density,
    Junction,
    Separation,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        CheckName::Subsolution,
        CheckName::Perimeter,
        CheckName::LowerBound,
        CheckName::Growth,
        CheckName::Density,
        CheckName::Junction,
        CheckName::Separation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckName::Subsolution => "subsolution",
            CheckName::Perimeter => "perimeter",
            CheckName::LowerBound => "lower_bound",
            CheckName::Growth => "growth",
            CheckName::Density => "density",
            CheckName::Junction => "junction",
            CheckName::Separation => "separation",
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCfg {
    /// Output directory of a previous `optimize` run.
    pub input_dir: PathBuf,
    #[serde(default = "all_checks")]
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub subsolution: SubsolutionCheckCfg,
    #[serde(default)]
    pub perimeter: PerimeterCheckCfg,
    #[serde(default)]
    pub growth: GrowthCheckCfg,
    #[serde(default)]
    pub density: DensityCheckCfg,
    #[serde(default)]
    pub junction: JunctionCheckCfg,
    #[serde(default)]
    pub separation: SeparationCheckCfg,
}

fn all_checks() -> Vec<CheckName> {
    CheckName::ALL.to_vec()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsolutionCheckCfg {
    pub count: usize,
    /// Margin slack in units of `h |Ω|`.
    pub slack_factor: f64,
    pub ball_fraction: f64,
    /// Ball removals used to estimate the γ-Lipschitz constant.
    pub probe_count: usize,
    pub min_pass_fraction: f64,
}

impl Default for SubsolutionCheckCfg {
    fn default() -> Self {
        Self {
            count: 20,
            slack_factor: 5.0,
            ball_fraction: 0.7,
            probe_count: 12,
            min_pass_fraction: 0.95,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerimeterCheckCfg {
    pub tolerance: f64,
}

impl Default for PerimeterCheckCfg {
    fn default() -> Self {
        Self { tolerance: 0.15 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthCheckCfg {
    /// Radii `r` of the two-sided growth bound (evaluated at `r` and `2r`), in cells.
    pub radii_cells: Vec<f64>,
    /// Radii of the linear-growth fit, in cells.
    pub linear_radii_cells: Vec<f64>,
    pub min_linear_constant: f64,
}

impl Default for GrowthCheckCfg {
    fn default() -> Self {
        Self {
            radii_cells: vec![2.0, 3.0, 4.0, 6.0, 8.0],
            linear_radii_cells: vec![4.0, 8.0, 16.0],
            min_linear_constant: 0.01,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityCheckCfg {
    pub radii_cells: Vec<f64>,
}

impl Default for DensityCheckCfg {
    fn default() -> Self {
        Self {
            radii_cells: vec![2.0, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct JunctionCheckCfg {
    pub radius_cells: f64,
}

impl Default for JunctionCheckCfg {
    fn default() -> Self {
        Self { radius_cells: 4.0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationCheckCfg {
    pub tolerance: f64,
}

impl Default for SeparationCheckCfg {
    fn default() -> Self {
        Self { tolerance: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Halfplanes,
    Sectors,
}

/// Radii as an explicit list or a log-spaced range.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum RadiiCfg {
    List(Vec<f64>),
    Range { min: f64, max: f64, count: usize },
}

impl RadiiCfg {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            RadiiCfg::List(v) if v.is_empty() => Err(CliError::Config("monotonicity.radii is empty".into())),
            RadiiCfg::List(v) => Ok(v.clone()),
            RadiiCfg::Range { min, max, count } => {
                if !(*min > 0.0 && max > min && *count >= 2) {
                    return Err(CliError::Config("monotonicity.radii needs 0 < min < max and count >= 2".into()));
                }
                Ok((0..*count)
                    .map(|i| min * (max / min).powf(i as f64 / (*count - 1) as f64))
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityCfg {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Grid spacing of a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// SPFIELD files on `[domain]`, used when no preset is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<RadiiCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// Parses a configuration, reporting the path of the offending key on failure.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner().message()))
    })
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse("[domain]\nlower = [0, 0]\nupper = [1, 1]\ncells = [8, 8]\n").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.formats, default_formats());
        assert!(cfg.solve.is_none());
        let d = cfg.domain.unwrap().build(Path::new(".")).unwrap();
        assert_eq!(d.len(), 64);
    }

    #[test]
    fn errors_name_the_path() {
        let err = parse("[optimizer]\nmu_schedule = [1.0, \"x\"]\n").unwrap_err();
        assert!(err.to_string().contains("optimizer.mu_schedule"), "{err}");
        let err = parse("[objective]\nfunctional = \"lambda_0\"\n").unwrap_err();
        assert!(err.to_string().contains("objective.functional"), "{err}");
        let err = parse("bogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn objective_forms() {
        let cfg = parse("[objective]\nfunctional = \"lambda_1\"\nphases = 3\nm = 50\n").unwrap();
        let spec = cfg.objective.unwrap().build().unwrap();
        assert_eq!(spec.functionals, vec![FunctionalSpec::Eigenvalue { k: 1 }; 3]);
        let cfg = parse("[objective]\nfunctionals = [\"lambda_2\", \"energy\"]\ng = \"max\"\n").unwrap();
        let spec = cfg.objective.unwrap().build().unwrap();
        assert_eq!(spec.g, Aggregator::Max);
        assert_eq!(spec.functionals[1], FunctionalSpec::TorsionEnergy);
        let cfg = parse("[objective]\nfunctional = \"lambda_1\"\ng = \"weighted_sum\"\n").unwrap();
        assert!(cfg.objective.unwrap().build().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let text = "seed = 7\n[domain]\nlower = [0.0, 0.0]\nupper = [2.0, 1.0]\ncells = [16, 8]\n\
                    [domain.mask]\nshape = \"disk\"\ncenter = [1.0, 0.5]\nradius = 0.4\n\
                    [objective]\nfunctional = \"lambda_1\"\nphases = 2\n[optimizer]\ninit = \"voronoi_full\"\n";
        let cfg = parse(text).unwrap();
        let again = parse(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again.seed, 7);
        assert_eq!(again.optimizer.init, InitCfg::VoronoiFull);
        assert!(matches!(again.domain.unwrap().mask, Some(ShapeCfg::Disk { .. })));
    }

    #[test]
    fn radii_range_is_log_spaced() {
        let r = RadiiCfg::Range { min: 0.01, max: 1.0, count: 3 }.values().unwrap();
        assert!((r[1] - 0.1).abs() < 1e-12);
    }
}
