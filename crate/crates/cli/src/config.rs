//! Experiment configuration: JSON schema, defaults and validation.

use std::path::{Path, PathBuf};

use lti_bounds::bounds::{self, CrSettings, DeltaLevel};
use lti_bounds::minimax::PriorSpec;
use lti_bounds::{Matrix, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: Option<SystemSection>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub a: Option<MatrixSpec>,
    /// Defaults to the identity.
    #[serde(default)]
    pub b: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
    Kind(MatrixKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MatrixKind {
    Diag {
        values: Vec<f64>,
    },
    Rotation {
        angle: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Identity {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Statement,
    Proof,
}

impl From<Level> for DeltaLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::Statement => DeltaLevel::Statement,
            Level::Proof => DeltaLevel::Proof,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub constant_c: f64,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    #[serde(default = "default_t_levels")]
    pub t_levels: Vec<f64>,
    /// Multiplies the Cramér–Rao matrix in dominance checks.
    #[serde(default = "one")]
    pub bound_scale: f64,
    #[serde(default)]
    pub delta_level: Level,
}

fn default_trials() -> u64 {
    10_000
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    0.5
}
fn default_grid() -> usize {
    bounds::DEFAULT_GRID_POINTS
}
fn default_t_levels() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 3.0, 4.0]
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            command: None,
            trials: default_trials(),
            seed: None,
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            constant_c: 1.0,
            grid_points: default_grid(),
            t_levels: default_t_levels(),
            bound_scale: 1.0,
            delta_level: Level::Statement,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default)]
    pub s: f64,
    #[serde(default = "one")]
    pub eps: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self { s: 0.0, eps: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Parse(if inner.is_data() && path != "." {
                format!("field `{path}`: {inner}")
            } else {
                inner.to_string()
            })
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Makes implicit defaults explicit so the echoed config is complete.
    pub fn resolve_defaults(&mut self) {
        if let Some(sys) = &mut self.system {
            sys.b
                .get_or_insert(MatrixSpec::Kind(MatrixKind::Identity { scale: 1.0 }));
        }
    }

    /// Range checks shared by every command.
    pub fn validate(&self) -> Result<(), CliError> {
        let r = &self.run;
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(CliError::Precondition(format!(
                    "run.{name} = {v} must lie in (0, 1)"
                )))
            }
        };
        open_unit("epsilon", r.epsilon)?;
        open_unit("alpha", r.alpha)?;
        if !(r.constant_c >= 0.0 && r.constant_c.is_finite()) {
            return Err(CliError::Precondition(format!(
                "run.constant_c = {} must be finite and nonnegative",
                r.constant_c
            )));
        }
        if !(r.bound_scale > 0.0 && r.bound_scale.is_finite()) {
            return Err(CliError::Precondition(format!(
                "run.bound_scale = {} must be positive",
                r.bound_scale
            )));
        }
        if r.grid_points < bounds::MIN_GRID_POINTS {
            return Err(CliError::Precondition(format!(
                "run.grid_points = {} is below the minimum {}",
                r.grid_points,
                bounds::MIN_GRID_POINTS
            )));
        }
        if r.trials < 2 {
            return Err(CliError::Precondition(format!(
                "run.trials = {} must be at least 2",
                r.trials
            )));
        }
        if let Some(t) = r.t_levels.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(CliError::Precondition(format!(
                "run.t_levels entry {t} must be finite and nonnegative"
            )));
        }
        if !(self.prior.s >= 0.0 && self.prior.s.is_finite()) {
            return Err(CliError::Precondition(format!(
                "prior.s = {} must be nonnegative",
                self.prior.s
            )));
        }
        if !(self.prior.eps > 0.0 && self.prior.eps.is_finite()) {
            return Err(CliError::Precondition(format!(
                "prior.eps = {} must be positive",
                self.prior.eps
            )));
        }
        if let Some(sys) = &self.system {
            if sys.d == 0 {
                return Err(CliError::Precondition("system.d must be at least 1".into()));
            }
            if sys.n < sys.d + 1 {
                return Err(CliError::Precondition(format!(
                    "system.n = {} must be at least d + 1 = {}",
                    sys.n,
                    sys.d + 1
                )));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<&SystemSection, CliError> {
        self.system
            .as_ref()
            .ok_or_else(|| CliError::Parse("missing `system` section".into()))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.run
            .seed
            .ok_or_else(|| CliError::Parse("field `run.seed` is required (or pass --seed)".into()))
    }

    pub fn cr_settings(&self) -> CrSettings {
        CrSettings {
            epsilon: self.run.epsilon,
            constant: self.run.constant_c,
            grid_points: self.run.grid_points,
            level: self.run.delta_level.into(),
        }
    }

    pub fn prior_spec(&self, d: usize) -> Result<PriorSpec, CliError> {
        Ok(PriorSpec::new(self.prior.s, self.prior.eps, d)?)
    }
}

impl SystemSection {
    pub fn params(&self) -> Result<SystemParams, CliError> {
        let a = self
            .a
            .as_ref()
            .ok_or_else(|| CliError::Parse("missing field `system.a`".into()))?;
        let a = a
            .build(self.d)
            .map_err(|m| CliError::Precondition(format!("system.a: {m}")))?;
        let b = match &self.b {
            Some(b) => b
                .build(self.d)
                .map_err(|m| CliError::Precondition(format!("system.b: {m}")))?,
            None => Matrix::identity(self.d, self.d),
        };
        Ok(SystemParams::new(a, b, self.n)?)
    }
}

impl MatrixSpec {
    /// Builds a `d × d` matrix from the spec.
    pub fn build(&self, d: usize) -> Result<Matrix, String> {
        let m = match self {
            Self::Rows(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(format!("expected {d} rows of {d} entries"));
                }
                Matrix::from_fn(d, d, |i, j| rows[i][j])
            }
            Self::Flat(v) => {
                if v.len() != d * d {
                    return Err(format!(
                        "expected {} row-major entries, got {}",
                        d * d,
                        v.len()
                    ));
                }
                Matrix::from_row_slice(d, d, v)
            }
            Self::Kind(MatrixKind::Diag { values }) => {
                if values.len() != d {
                    return Err(format!(
                        "expected {d} diagonal values, got {}",
                        values.len()
                    ));
                }
                Matrix::from_diagonal(&lti_bounds::Vector::from_row_slice(values))
            }
            Self::Kind(MatrixKind::Rotation { angle, scale }) => {
                bounds::rotation_matrix(d, *angle, *scale)
            }
            Self::Kind(MatrixKind::Identity { scale }) => Matrix::identity(d, d) * *scale,
        };
        if m.iter().any(|x| !x.is_finite()) {
            return Err("entries must be finite".into());
        }
        Ok(m)
    }
}
