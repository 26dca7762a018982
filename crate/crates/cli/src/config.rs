//! Run configuration documents.
//!
//! A document is TOML with a schema tag, a handful of top-level keys and two
//! flat tables, `[spec]` and `[mc]`. Unknown keys are rejected. See
//! `docs/formats.md` for the full schema.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use levy_sync::mc::MCConfig;
use levy_sync::synchro::{CoupledSpec, DriftKind};
use levy_sync::StableLaw;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: &str = "levy-sync/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SamplerCheck,
    Averaging,
    Persistence,
    Moments,
    Attractor,
    Mixing,
    Holder,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::SamplerCheck,
        Experiment::Averaging,
        Experiment::Persistence,
        Experiment::Moments,
        Experiment::Attractor,
        Experiment::Mixing,
        Experiment::Holder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SamplerCheck => "sampler-check",
            Experiment::Averaging => "averaging",
            Experiment::Persistence => "persistence",
            Experiment::Moments => "moments",
            Experiment::Attractor => "attractor",
            Experiment::Mixing => "mixing",
            Experiment::Holder => "holder",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The `[spec]` table: a named drift pair and the noise and coupling
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecSection {
    /// Drift of the first system, e.g. `"tanh(gain=2, center=0.5)"`.
    pub f: String,
    pub g: String,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Stability index in `(1, 2]`.
    pub alpha: f64,
    pub dim: usize,
    /// Coupling strength for experiments that do not sweep it.
    pub nu: f64,
}

impl Default for SpecSection {
    fn default() -> Self {
        Self {
            f: "tanh(gain=2, center=0.5)".into(),
            g: "tanh(gain=2, center=-0.5)".into(),
            sigma1: 1.0,
            sigma2: 0.5,
            alpha: 1.5,
            dim: 1,
            nu: 1.0,
        }
    }
}

/// A parsed and validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub experiment: Experiment,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub emit_plots: bool,
    /// Initial states for the attractor experiment; defaults to 8 points
    /// evenly spread over `[-5, 5]` in every coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_conditions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub spec: SpecSection,
    #[serde(default)]
    pub mc: MCConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("levy-sync-output")
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    /// Minimal configuration for `experiment` with every default applied.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            schema: SCHEMA.into(),
            experiment,
            output_dir: default_output_dir(),
            emit_plots: true,
            initial_conditions: None,
            spec: SpecSection::default(),
            mc: MCConfig::default(),
        }
    }

    pub fn drifts(&self) -> Result<(DriftKind, DriftKind), CliError> {
        let parse = |field: &str, text: &str| {
            DriftKind::parse(text).map_err(|e| CliError::Validation {
                field: format!("spec.{field}"),
                message: e.to_string(),
            })
        };
        Ok((parse("f", &self.spec.f)?, parse("g", &self.spec.g)?))
    }

    pub fn coupled_spec(&self) -> Result<CoupledSpec, CliError> {
        let (f, g) = self.drifts()?;
        let law = StableLaw::new(self.spec.alpha, self.spec.dim, 1.0).map_err(|e| CliError::Validation {
            field: "spec.alpha".into(),
            message: e.to_string(),
        })?;
        CoupledSpec::from_kinds(f, g, self.spec.sigma1, self.spec.sigma2, self.spec.nu, law).map_err(|e| {
            CliError::Validation {
                field: "spec".into(),
                message: e.to_string(),
            }
        })
    }

    pub fn initial_set(&self) -> Vec<Vec<f64>> {
        self.initial_conditions.clone().unwrap_or_else(|| {
            (0..8)
                .map(|i| vec![-5.0 + 10.0 * f64::from(i) / 7.0; self.spec.dim])
                .collect()
        })
    }

    /// Checks every cross-field invariant.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(CliError::Validation {
                field: "schema".into(),
                message: format!("unsupported schema '{}', expected '{SCHEMA}'", self.schema),
            });
        }
        if self.spec.dim == 0 {
            return Err(CliError::Validation {
                field: "spec.dim".into(),
                message: "dimension must be at least 1".into(),
            });
        }
        self.coupled_spec()?;
        self.mc.validate(self.spec.alpha).map_err(|e| CliError::Validation {
            field: "mc".into(),
            message: e.to_string(),
        })?;
        self.mc.initial_states(self.spec.dim).map_err(|e| CliError::Validation {
            field: "mc.x0".into(),
            message: e.to_string(),
        })?;
        if let Some(ics) = &self.initial_conditions {
            if ics.len() < 8 || ics.iter().any(|v| v.len() != self.spec.dim) {
                return Err(CliError::Validation {
                    field: "initial_conditions".into(),
                    message: format!("need at least 8 states of dimension {}", self.spec.dim),
                });
            }
        }
        if self.output_dir.exists() && !self.output_dir.is_dir() {
            return Err(CliError::Validation {
                field: "output_dir".into(),
                message: format!("{} exists and is not a directory", self.output_dir.display()),
            });
        }
        if self.output_dir.is_dir() && self.output_dir.metadata().is_ok_and(|m| m.permissions().readonly()) {
            return Err(CliError::Validation {
                field: "output_dir".into(),
                message: format!("{} is not writable", self.output_dir.display()),
            });
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configurations always serialise")
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        CliError::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

impl FromStr for RunConfig {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}
