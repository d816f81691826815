//! Experiment configuration files.
//!
//! A configuration is a TOML document with a seed, a geometry, a step
//! configuration, one experiment and output settings. Unknown keys are
//! rejected and every default is filled in, so the serialized form of a
//! parsed configuration records the full resolved experiment.

use serde::{Deserialize, Serialize};

use crate::analytic::TestFunction;
use crate::error::{Error, Result};
use crate::estimators::{FitOptions, GreenTarget, GridSpec, HarnackOptions};
use crate::geometry::{EPoint, ModelParams, RegimeLabel};
use crate::process::domain::DomainSpec;
use crate::process::variant::{ArchSpec, PoleSpec, VPoint, VariantSpace, VariantSpec};
use crate::radial::StepConfig;

/// State space of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    /// Plane with one hole and one pole.
    Single {
        epsilon: f64,
        p: f64,
    },
    MultiPole {
        poles: Vec<PoleSpec>,
    },
    Arch {
        arch: ArchSpec,
    },
}

/// Validated geometry.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Single(ModelParams),
    Variant(VariantSpace),
}

impl GeometryConfig {
    pub fn build(&self) -> Result<Geometry> {
        match self {
            GeometryConfig::Single { epsilon, p } => {
                if !(epsilon.is_finite() && *epsilon > 0.0) {
                    return Err(invalid("geometry.epsilon", "epsilon must be > 0"));
                }
                ModelParams::new(*epsilon, *p).map(Geometry::Single).map_err(|e| invalid("geometry.p", e))
            }
            GeometryConfig::MultiPole { poles } => VariantSpace::new(&VariantSpec::MultiPole { poles: poles.clone() })
                .map(Geometry::Variant)
                .map_err(|e| invalid("geometry.poles", e)),
            GeometryConfig::Arch { arch } => VariantSpace::new(&VariantSpec::Arch { arch: *arch })
                .map(Geometry::Variant)
                .map_err(|e| invalid("geometry.arch", e)),
        }
    }
}

/// Records sampled paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub source: String,
    pub t: f64,
    #[serde(default = "default_sim_paths")]
    pub n_paths: u64,
    /// Keep every `record_every`-th step.
    #[serde(default = "one")]
    pub record_every: usize,
}

/// Endpoint density on a grid at each time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub source: String,
    pub times: Vec<f64>,
    pub n_paths: u64,
    pub grid: GridSpec,
}

/// First hitting time of `a*`, or of junction `target` in a variant geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingConfig {
    pub source: String,
    pub t_max: f64,
    pub n_paths: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub target: usize,
    /// Largest admissible KS distance to the closed-form law from a pole point.
    #[serde(default)]
    pub ks_tolerance: Option<f64>,
}

/// Occupation densities of the process killed on leaving `domain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenConfig {
    pub domain: DomainSpec,
    pub source: String,
    pub targets: Vec<GreenTarget>,
    pub n_paths: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

/// Cells on which an envelope is fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvelopeDesign {
    /// Built-in pair design of a small-time regime.
    SmallTime { regime: RegimeLabel, times: Vec<f64> },
    /// `p(t, a*, a*)` with ball radius `bandwidth * sqrt(t)`.
    ///
    /// Swapping the powers leaves `t^{-1/2} ^ t^{-1}` unchanged, so this design
    /// is checked by the spread of `p(t, a*, a*) (sqrt t v t)` instead of the control.
    OnDiagonal {
        times: Vec<f64>,
        #[serde(default = "default_diag_bandwidth")]
        bandwidth: f64,
        #[serde(default = "default_diag_spread")]
        max_spread: f64,
    },
    /// Explicit pairs that share one regime at every time.
    Pairs { pairs: Vec<[String; 2]>, times: Vec<f64>, bandwidth: f64 },
}

/// Two-sided envelope fit with its negative control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeVerifyConfig {
    pub design: EnvelopeDesign,
    pub n_paths: u64,
    #[serde(default)]
    pub fit: FitOptions,
    /// Require the negative control to be infeasible; ignored by the on-diagonal design.
    #[serde(default = "yes")]
    pub check_control: bool,
}

/// Parabolic Harnack ratio across `a*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackConfig {
    pub s_grid: Vec<f64>,
    /// Planar distance of the reference point for the bounded case.
    #[serde(default)]
    pub control: Option<f64>,
    #[serde(default)]
    pub options: HarnackOptions,
    /// Smallest ratio growth between consecutive scales without control.
    #[serde(default = "default_min_factor")]
    pub min_factor: f64,
    /// Largest over smallest ratio allowed with control.
    #[serde(default = "default_max_spread")]
    pub max_spread: f64,
}

/// Dynkin residuals of test functions against their flux at `a*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub source: String,
    pub t: f64,
    pub n_paths: u64,
    pub functions: Vec<TestFunction>,
    /// Budgets a nonzero-flux residual must reach.
    #[serde(default = "default_factor")]
    pub factor: f64,
}

/// One experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Simulate(SimulateConfig),
    Density(DensityConfig),
    Hitting(HittingConfig),
    Green(GreenConfig),
    EnvelopeVerify(EnvelopeVerifyConfig),
    HarnackDemo(HarnackConfig),
    GeneratorCheck(GeneratorConfig),
}

impl Experiment {
    /// Command-line name of the experiment.
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::Density(_) => "density",
            Experiment::Hitting(_) => "hitting",
            Experiment::Green(_) => "green",
            Experiment::EnvelopeVerify(_) => "envelope-verify",
            Experiment::HarnackDemo(_) => "harnack-demo",
            Experiment::GeneratorCheck(_) => "generator-check",
        }
    }
}

/// Where artifacts are written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

/// Full experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Small/large time threshold `T`.
    #[serde(default = "default_threshold")]
    pub time_threshold: f64,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub step: StepConfig,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_sim_paths() -> u64 {
    10
}
fn one() -> usize {
    1
}
fn default_bins() -> usize {
    50
}
fn default_max_steps() -> usize {
    10_000_000
}
fn default_diag_bandwidth() -> f64 {
    0.2
}
fn default_diag_spread() -> f64 {
    20.0
}
fn yes() -> bool {
    true
}
fn default_min_factor() -> f64 {
    1.5
}
fn default_max_spread() -> f64 {
    1.3
}
fn default_factor() -> f64 {
    5.0
}
fn default_dir() -> String {
    "out".into()
}
fn default_threshold() -> f64 {
    2.0
}

fn invalid(key: &str, message: impl std::fmt::Display) -> Error {
    let message = message.to_string();
    let message = ["invalid parameters: ", "invalid point: ", "invalid domain: ", "parse error: ", "out of range: "]
        .iter()
        .find_map(|p| message.strip_prefix(p))
        .map(str::to_string)
        .unwrap_or(message);
    Error::InvalidConfig { key: key.into(), message }
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let key = e.path().to_string();
    let key = if key == "." { "<root>".to_string() } else { key };
    invalid(&key, e.inner())
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

fn times_ok(key: &str, times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid(key, "must not be empty"));
    }
    times.iter().try_for_each(|&t| positive(key, t))
}

fn count(key: &str, n: u64) -> Result<()> {
    if n == 0 {
        Err(invalid(key, "must be >= 1"))
    } else {
        Ok(())
    }
}

impl Geometry {
    pub fn single(&self) -> Option<&ModelParams> {
        match self {
            Geometry::Single(m) => Some(m),
            Geometry::Variant(_) => None,
        }
    }

    /// Parses and validates a point string of this geometry under configuration key `key`.
    pub fn point(&self, key: &str, s: &str) -> Result<Point> {
        match self {
            Geometry::Single(m) => EPoint::parse(s, m).map(Point::Single).map_err(|e| invalid(key, e)),
            Geometry::Variant(space) => space.parse_point(s).map(Point::Variant).map_err(|e| invalid(key, e)),
        }
    }

    fn require_single(&self, what: &str) -> Result<&ModelParams> {
        self.single().ok_or_else(|| invalid("geometry.kind", format!("{what} needs a single-pole geometry")))
    }
}

/// A point of either kind of geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Single(EPoint),
    Variant(VPoint),
}

impl ExperimentConfig {
    /// Parses and validates a TOML configuration.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(s).map_err(|e| Error::Parse(e.to_string().trim().to_string()))?;
        Self::from_deserializer(de)
    }

    /// Deserializes and validates a configuration from any self-describing format.
    pub fn from_deserializer<'de, D: serde::Deserializer<'de>>(de: D) -> Result<Self>
    where
        D::Error: std::fmt::Display,
    {
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(path_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolved configuration with every default filled in.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Checks every value and names the first offending key.
    pub fn validate(&self) -> Result<()> {
        let geometry = self.geometry.build()?;
        self.step.validate().map_err(|e| invalid("step", e))?;
        positive("time_threshold", self.time_threshold)?;
        if self.output.dir.is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }
        match &self.experiment {
            Experiment::Simulate(c) => {
                geometry.point("experiment.source", &c.source)?;
                positive("experiment.t", c.t)?;
                count("experiment.n_paths", c.n_paths)?;
                count("experiment.record_every", c.record_every as u64)
            }
            Experiment::Density(c) => {
                geometry.require_single("density")?;
                geometry.point("experiment.source", &c.source)?;
                times_ok("experiment.times", &c.times)?;
                count("experiment.n_paths", c.n_paths)?;
                crate::estimators::GridIndex::new(&c.grid).map(|_| ()).map_err(|e| invalid("experiment.grid", e))
            }
            Experiment::Hitting(c) => {
                geometry.point("experiment.source", &c.source)?;
                positive("experiment.t_max", c.t_max)?;
                count("experiment.n_paths", c.n_paths)?;
                count("experiment.bins", c.bins as u64)?;
                if let Some(k) = c.ks_tolerance {
                    positive("experiment.ks_tolerance", k)?;
                    if !matches!(geometry.point("experiment.source", &c.source)?, Point::Single(EPoint::Pole(_))) {
                        return Err(invalid(
                            "experiment.ks_tolerance",
                            "needs a pole source in a single-pole geometry",
                        ));
                    }
                }
                if let Geometry::Variant(space) = &geometry {
                    if c.target >= space.junctions().len() {
                        return Err(invalid("experiment.target", format!("no junction {}", c.target)));
                    }
                }
                Ok(())
            }
            Experiment::Green(c) => {
                let m = geometry.require_single("green")?;
                c.domain.validate(m).map_err(|e| invalid("experiment.domain", e))?;
                let Point::Single(x) = geometry.point("experiment.source", &c.source)? else { unreachable!() };
                if !c.domain.contains(&x, m) {
                    return Err(invalid("experiment.source", "source lies outside the domain"));
                }
                if c.targets.is_empty() {
                    return Err(invalid("experiment.targets", "must not be empty"));
                }
                for (i, t) in c.targets.iter().enumerate() {
                    if let GreenTarget::Ball { center, radius } = t {
                        center.validate(m).map_err(|e| invalid(&format!("experiment.targets[{i}].center"), e))?;
                        positive(&format!("experiment.targets[{i}].radius"), *radius)?;
                    }
                }
                count("experiment.n_paths", c.n_paths)?;
                count("experiment.max_steps", c.max_steps as u64)
            }
            Experiment::EnvelopeVerify(c) => {
                count("experiment.n_paths", c.n_paths)?;
                let fit = &c.fit;
                if !(fit.coverage > 0.0 && fit.coverage <= 1.0) {
                    return Err(invalid("experiment.fit.coverage", "must lie in (0, 1]"));
                }
                match &c.design {
                    EnvelopeDesign::SmallTime { regime, times } => {
                        geometry.require_single("the small-time design")?;
                        if !regime.is_small_time() {
                            return Err(invalid(
                                "experiment.design.regime",
                                format!("{regime} is a large-time regime"),
                            ));
                        }
                        times_ok("experiment.design.times", times)?;
                        if let Some(t) = times.iter().find(|&&t| t > self.time_threshold) {
                            return Err(invalid("experiment.design.times", format!("time {t} exceeds the threshold")));
                        }
                        Ok(())
                    }
                    EnvelopeDesign::OnDiagonal { times, bandwidth, max_spread } => {
                        geometry.require_single("the on-diagonal design")?;
                        times_ok("experiment.design.times", times)?;
                        positive("experiment.design.bandwidth", *bandwidth)?;
                        positive("experiment.design.max_spread", *max_spread)
                    }
                    EnvelopeDesign::Pairs { pairs, times, bandwidth } => {
                        times_ok("experiment.design.times", times)?;
                        positive("experiment.design.bandwidth", *bandwidth)?;
                        if pairs.is_empty() {
                            return Err(invalid("experiment.design.pairs", "must not be empty"));
                        }
                        for (i, [x, y]) in pairs.iter().enumerate() {
                            let key = format!("experiment.design.pairs[{i}]");
                            geometry.point(&key, x)?;
                            geometry.point(&key, y)?;
                        }
                        Ok(())
                    }
                }
            }
            Experiment::HarnackDemo(c) => {
                geometry.require_single("harnack-demo")?;
                times_ok("experiment.s_grid", &c.s_grid)?;
                if c.s_grid.len() < 2 {
                    return Err(invalid("experiment.s_grid", "needs at least two scales"));
                }
                if let Some(norm) = c.control {
                    positive("experiment.control", norm)?;
                }
                count("experiment.options.n_paths", c.options.n_paths)?;
                positive("experiment.min_factor", c.min_factor)?;
                positive("experiment.max_spread", c.max_spread)
            }
            Experiment::GeneratorCheck(c) => {
                geometry.require_single("generator-check")?;
                geometry.point("experiment.source", &c.source)?;
                positive("experiment.t", c.t)?;
                count("experiment.n_paths", c.n_paths)?;
                if c.functions.is_empty() {
                    return Err(invalid("experiment.functions", "must not be empty"));
                }
                positive("experiment.factor", c.factor)
            }
        }
    }

    /// Validated geometry.
    pub fn geometry(&self) -> Result<Geometry> {
        self.geometry.build()
    }
}
