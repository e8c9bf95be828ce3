//! Run configuration: JSON file, then command-line flags, over defaults.

use std::path::{Path, PathBuf};

use gfdeconv::gf::bounds::PolyBound;
use gfdeconv::grid::Grid;
use gfdeconv::sim::{DistributionSpec, ModelSpec, RegressionSpec};
use gfdeconv::study::{ClassicalDesign, SystemDesign, WellposedDesign};
use serde::{Deserialize, Serialize};

/// Schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Input problem: bad config file or inconsistent settings (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Which problem a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `z = x* + u` with known error law.
    Classical,
    /// Errors-in-variables regression `y = g(x*) + u_y`, `x = x* + u_x`, `x* = z − u`.
    #[default]
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// `None`: `ζ = 4 n^{-1/2} log n`.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default, rename = "T")]
    pub cutoff: Option<f64>,
    /// Clip of `φ̂⁻¹`.
    #[serde(default = "default_bound")]
    pub bound: PolyBound,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            zeta: None,
            tau: default_tau(),
            cutoff: None,
            bound: default_bound(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellposedSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_initial_distance")]
    pub initial_distance: f64,
    #[serde(default = "default_v", rename = "V")]
    pub v: f64,
    #[serde(default = "default_illposed_n")]
    pub illposed_n: Vec<usize>,
}

impl Default for WellposedSection {
    fn default() -> Self {
        WellposedSection {
            steps: default_steps(),
            draws: default_draws(),
            initial_distance: default_initial_distance(),
            v: default_v(),
            illposed_n: default_illposed_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Spatial grid; defaults to the standard grid of the model dimension.
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub design: Design,
    /// Classical design: law of `x*`.
    #[serde(default = "default_signal")]
    pub signal: DistributionSpec,
    /// Classical design: law of `u`.
    #[serde(default = "default_error")]
    pub error: DistributionSpec,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    /// Clip of the spatial moment estimates.
    #[serde(default = "default_bound")]
    pub moment_bound: PolyBound,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default = "default_bandwidth_c")]
    pub bandwidth_c: f64,
    /// Read observations from this CSV instead of simulating.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Sample sizes of `convergence-study`.
    #[serde(default = "default_ladder")]
    pub ladder: Vec<usize>,
    #[serde(default)]
    pub wellposed: WellposedSection,
}

fn default_tau() -> f64 {
    1e-6
}
fn default_bound() -> PolyBound {
    PolyBound { m: vec![1], v: 2.0 }
}
fn default_steps() -> usize {
    5
}
fn default_draws() -> usize {
    101
}
fn default_initial_distance() -> f64 {
    0.1
}
fn default_v() -> f64 {
    2.0
}
fn default_illposed_n() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn default_n() -> usize {
    1000
}
fn default_reps() -> usize {
    25
}
fn default_signal() -> DistributionSpec {
    DistributionSpec::Gaussian { sigma: 1.0 }
}
fn default_error() -> DistributionSpec {
    DistributionSpec::Laplace { b: 1.0 }
}
fn default_model() -> ModelSpec {
    ModelSpec::new(
        RegressionSpec::GaussianBump {
            amplitude: 1.0,
            center: 0.0,
            width: 1.0,
        },
        Some(DistributionSpec::Laplace { b: 1.0 }),
    )
}
fn default_bandwidth_c() -> f64 {
    1.0
}
fn default_ladder() -> Vec<usize> {
    vec![250, 1000, 4000]
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            n: default_n(),
            reps: default_reps(),
            grid: None,
            design: Design::default(),
            signal: default_signal(),
            error: default_error(),
            model: default_model(),
            moment_bound: default_bound(),
            solver: SolverSection::default(),
            bandwidth_c: default_bandwidth_c(),
            data: None,
            ladder: default_ladder(),
            wellposed: WellposedSection::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub grid_n: Option<usize>,
    pub grid_l: Option<f64>,
}

impl RunConfig {
    /// Reads `path` (if any) and applies `overrides`; the result is validated.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.n {
            self.n = n;
        }
        if let Some(r) = o.reps {
            self.reps = r;
        }
        if o.grid_n.is_some() || o.grid_l.is_some() {
            let base = self.grid();
            let grid = Grid::new(
                base.dim(),
                o.grid_l.unwrap_or(base.half_width()),
                o.grid_n.unwrap_or(base.points()),
            )
            .map_err(|e| ConfigError(e.to_string()))?;
            self.grid = Some(grid);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |e: gfdeconv::Error| ConfigError(e.to_string());
        if self.version != CONFIG_VERSION {
            return Err(ConfigError(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.n == 0 {
            return Err(ConfigError("n must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(ConfigError("reps must be at least 1".into()));
        }
        if self.ladder.is_empty() || self.ladder.contains(&0) {
            return Err(ConfigError("ladder needs positive sample sizes".into()));
        }
        if !(self.bandwidth_c > 0.0) {
            return Err(ConfigError("bandwidth_c must be positive".into()));
        }
        match self.design {
            Design::Classical => self.classical().validate().map_err(fail)?,
            Design::System => self.system().validate().map_err(fail)?,
        }
        let w = &self.wellposed;
        if w.steps == 0 || w.draws == 0 || !(w.initial_distance > 0.0) || !(w.v > 0.0) {
            return Err(ConfigError(
                "wellposed: steps, draws, initial_distance and V must be positive".into(),
            ));
        }
        if w.illposed_n.iter().any(|&n| n < 2) {
            return Err(ConfigError("wellposed.illposed_n entries must be at least 2".into()));
        }
        Ok(())
    }

    /// Spatial grid in effect.
    pub fn grid(&self) -> Grid {
        self.grid.unwrap_or_else(|| match (self.design, self.model.dim) {
            (Design::System, 2) => Grid::default_2d(),
            _ => Grid::default_1d(),
        })
    }

    pub fn classical(&self) -> ClassicalDesign {
        ClassicalDesign {
            signal: self.signal.clone(),
            error: self.error.clone(),
            grid: self.grid(),
            cutoff: self.solver.cutoff,
            tau: self.solver.tau,
        }
    }

    pub fn system(&self) -> SystemDesign {
        SystemDesign {
            model: self.model.clone(),
            grid: self.grid(),
            moment_bound: self.moment_bound.clone(),
            solver_bound: self.solver.bound.clone(),
            zeta: self.solver.zeta,
            cutoff: self.solver.cutoff,
            bandwidth_c: self.bandwidth_c,
        }
    }

    pub fn wellposed(&self) -> WellposedDesign {
        WellposedDesign {
            steps: self.wellposed.steps,
            draws: self.wellposed.draws,
            initial_distance: self.wellposed.initial_distance,
            v: self.wellposed.v,
            ..WellposedDesign::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.grid(), Grid::default_1d());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let f = write(r#"{"version": 1, "n": 500, "seed": 3, "grid": {"L": 10, "N": 512, "dim": 1}}"#);
        let cfg = RunConfig::load(Some(f.path()), &Overrides::default()).unwrap();
        assert_eq!((cfg.n, cfg.seed, cfg.reps), (500, 3, 25));
        let o = Overrides {
            n: Some(42),
            grid_n: Some(256),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(f.path()), &o).unwrap();
        assert_eq!((cfg.n, cfg.seed), (42, 3));
        assert_eq!(cfg.grid(), Grid::new(1, 10.0, 256).unwrap());
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in [
            r#"{"n": 5}"#,
            r#"{"version": 2}"#,
            r#"{"version": 1, "typo": 1}"#,
            r#"{"version": 1, "n": 0}"#,
            r#"{"version": 1, "design": "classical", "error": {"family": "Laplace", "b": -1}}"#,
            r#"{"version": 1, "grid": {"L": 10, "N": 7, "dim": 1}}"#,
            r#"not json"#,
        ] {
            let f = write(text);
            assert!(
                RunConfig::load(Some(f.path()), &Overrides::default()).is_err(),
                "{text}"
            );
        }
        assert!(RunConfig::load(Some(Path::new("/nonexistent/cfg.json")), &Overrides::default()).is_err());
        let o = Overrides {
            grid_n: Some(3),
            ..Default::default()
        };
        assert!(RunConfig::load(None, &o).is_err());
    }
}
