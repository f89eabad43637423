//! TOML configuration for experiments and audits.
//!
//! Relative paths are resolved against the directory holding the config
//! file. A minimal experiment:
//!
//! ```toml
//! seed = 7
//! epsilon = 1.0
//! delta = 0.01
//! mechanism = "PIM"
//!
//! [grid]
//! min_x = 0.0
//! min_y = 0.0
//! cell_size = 1.0
//! rows = 10
//! cols = 10
//!
//! [synthetic]
//! scenario = "random-walk"
//! count = 4
//! length = 100
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::DEFAULT_SLACK;
use crate::error::{Error, Result};
use crate::grid::GridConfig;
use crate::harness::data::TrajectoryFormat;
use crate::mechanism::MechanismKind;

fn one() -> usize {
    1
}

/// Equirectangular projection from degrees to kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Latitude at which east-west distances are measured.
    pub reference_lat: f64,
}

impl Projection {
    pub const EARTH_RADIUS_KM: f64 = 6371.0088;

    pub fn project(&self, lat: f64, lon: f64) -> crate::grid::MapPoint {
        let rad = std::f64::consts::PI / 180.0;
        crate::grid::MapPoint::new(
            Self::EARTH_RADIUS_KM
                * (lon - self.origin_lon)
                * rad
                * (self.reference_lat * rad).cos(),
            Self::EARTH_RADIUS_KM * (lat - self.origin_lat) * rad,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySource {
    pub format: TrajectoryFormat,
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Lazy nearest-neighbour random walk over the whole grid.
    RandomWalk,
    /// Walk restricted to the main diagonal of a square grid.
    Corridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub scenario: Scenario,
    pub count: usize,
    pub length: usize,
    /// Probability of staying put at each step.
    #[serde(default = "SyntheticSpec::default_stay")]
    pub stay: f64,
}

impl SyntheticSpec {
    fn default_stay() -> f64 {
        0.5
    }
}

/// Where the Markov model comes from. With no `path`, it is learned from
/// `training` (or from the experiment trajectories when that is empty);
/// synthetic scenarios default to their generating chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training: Vec<PathBuf>,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSpec {
    /// Uniform over every cell seen in the training data.
    #[default]
    Visited,
    FirstCell,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnSpec {
    pub pois: PathBuf,
    pub k: Vec<usize>,
    pub k_prime: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub mechanism: MechanismKind,
    #[serde(default)]
    pub initial: InitialSpec,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<TrajectorySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Projection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub transition: TransitionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load and resolve relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(src) = &mut self.trajectories {
            src.paths.iter_mut().for_each(fix);
        }
        if let Some(p) = &mut self.transition.path {
            fix(p);
        }
        self.transition.training.iter_mut().for_each(fix);
        if let Some(knn) = &mut self.knn {
            fix(&mut knn.pois);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!(
                "delta must be in [0, 1), got {}",
                self.delta
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if !(self.transition.alpha >= 0.0) {
            return Err(Error::Config("transition.alpha must be >= 0".into()));
        }
        match (&self.trajectories, &self.synthetic) {
            (None, None) => return Err(Error::Config("need [trajectories] or [synthetic]".into())),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "[trajectories] and [synthetic] are exclusive".into(),
                ))
            }
            _ => {}
        }
        if let Some(src) = &self.trajectories {
            if src.paths.is_empty() {
                return Err(Error::Config("trajectories.paths is empty".into()));
            }
            if src.format == TrajectoryFormat::LatLonCsv && self.projection.is_none() {
                return Err(Error::Config(
                    "latlon-csv trajectories need a [projection]".into(),
                ));
            }
        }
        if let Some(s) = &self.synthetic {
            if s.count == 0 || s.length == 0 {
                return Err(Error::Config(
                    "synthetic count and length must be positive".into(),
                ));
            }
            if !(0.0..=1.0).contains(&s.stay) {
                return Err(Error::Config("synthetic.stay must be in [0, 1]".into()));
            }
            if s.scenario == Scenario::Corridor && self.grid.rows != self.grid.cols {
                return Err(Error::Config(
                    "corridor scenario needs a square grid".into(),
                ));
            }
        }
        if let Some(knn) = &self.knn {
            if knn.k.is_empty() || knn.k_prime.is_empty() || knn.k.contains(&0) {
                return Err(Error::Config(
                    "knn.k and knn.k_prime must be non-empty and positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    #[default]
    DpRatio,
    Adversarial,
}

/// Configuration of the `audit` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSpec {
    #[serde(default)]
    pub kind: AuditKind,
    pub mechanism: MechanismKind,
    /// Budget the mechanism actually runs with.
    pub epsilon: f64,
    /// Budget the audit checks against; defaults to `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_epsilon: Option<f64>,
    pub cells: Vec<usize>,
    /// Prior over `cells` for the adversarial audit; uniform if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    pub grid: GridConfig,
    #[serde(default = "AuditSpec::default_samples")]
    pub samples: usize,
    #[serde(default = "AuditSpec::default_slack")]
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_count: Option<u64>,
    /// Bins per axis.
    #[serde(default = "AuditSpec::default_bins")]
    pub bins: usize,
    /// Half-width of the binned region in mean release radii.
    #[serde(default = "AuditSpec::default_radii")]
    pub radii: f64,
    #[serde(default)]
    pub seed: u64,
}

impl AuditSpec {
    fn default_samples() -> usize {
        1_000_000
    }
    fn default_slack() -> f64 {
        DEFAULT_SLACK
    }
    fn default_bins() -> usize {
        20
    }
    fn default_radii() -> f64 {
        6.0
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: AuditSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.grid.validate()?;
        if spec.cells.is_empty() {
            return Err(Error::Config("audit needs at least one cell".into()));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn claimed(&self) -> f64 {
        self.claimed_epsilon.unwrap_or(self.epsilon)
    }
}
