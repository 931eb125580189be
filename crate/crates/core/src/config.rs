//! Model configuration files: formulas, links, starts, fit options.
//!
//! A configuration names a mean formula and, optionally, a precision
//! formula, the link for each submodel, starting-value anchors, and
//! overrides for the fitting tolerances. TOML and JSON files are both
//! accepted, dispatched on the file extension:
//!
//! ```toml
//! mean = "b1 + b2*x1"
//! mean_link = "loglog"          # default: logit
//! precision = "g1 + g2*x1"      # default: g1 (constant)
//! precision_link = "log"        # default: log
//! mean_start = [0.3, 0.02]      # optional anchors
//! max_iterations = 500          # optional fit-option overrides
//! ```
//!
//! [`ModelConfig::resolve`] turns a configuration into a validated
//! [`ModelSpec`] and [`FitOptions`] pair for a concrete dataset.

use crate::data::Dataset;
use crate::estimation::{FitOptions, ModelSpec};
use crate::formula::{ParamPrefix, PredictorSpec};
use crate::links::LinkKind;
use crate::{Error, Result};
use serde::Deserialize;
use std::path::Path;

fn default_mean_link() -> String {
    "logit".into()
}

fn default_precision() -> String {
    "g1".into()
}

fn default_precision_link() -> String {
    "log".into()
}

/// A model description as read from a configuration file or assembled
/// from command-line flags.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Mean-submodel formula, e.g. `"b1 + b2*x1"`.
    pub mean: String,
    /// Mean link name: `logit` or `loglog`.
    #[serde(default = "default_mean_link")]
    pub mean_link: String,
    /// Precision-submodel formula; defaults to a constant precision.
    #[serde(default = "default_precision")]
    pub precision: String,
    /// Precision link name: `log`, `sqrt`, or `identity`.
    #[serde(default = "default_precision_link")]
    pub precision_link: String,
    /// Starting values for the mean parameters.
    #[serde(default)]
    pub mean_start: Option<Vec<f64>>,
    /// Starting values for the precision parameters.
    #[serde(default)]
    pub precision_start: Option<Vec<f64>>,
    /// Override for the iteration cap.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Override for the log-likelihood convergence tolerance.
    #[serde(default)]
    pub tol_loglik: Option<f64>,
    /// Override for the score convergence tolerance.
    #[serde(default)]
    pub tol_score: Option<f64>,
}

impl ModelConfig {
    /// A configuration with the given mean formula and all defaults.
    pub fn with_mean(mean: impl Into<String>) -> Self {
        ModelConfig {
            mean: mean.into(),
            mean_link: default_mean_link(),
            precision: default_precision(),
            precision_link: default_precision_link(),
            mean_start: None,
            precision_start: None,
            max_iterations: None,
            tol_loglik: None,
            tol_score: None,
        }
    }

    /// Read a configuration from a `.toml` or `.json` file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            Some("json") => Self::from_json_str(&text),
            other => Err(Error::Config(format!(
                "unsupported config extension {:?} (use .toml or .json)",
                other.unwrap_or("")
            ))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn link(name: &str, submodel: &str) -> Result<LinkKind> {
        name.parse::<LinkKind>()
            .map_err(|_| Error::Config(format!("unknown {submodel} link `{name}`")))
    }

    /// Validate against a dataset's schema and produce the model and
    /// fitting options.
    pub fn resolve(&self, data: &Dataset) -> Result<(ModelSpec, FitOptions)> {
        let schema = data.column_names();
        let model = ModelSpec::new(
            PredictorSpec::parse(&self.mean, &schema, ParamPrefix::Mean)?,
            Self::link(&self.mean_link, "mean")?,
            PredictorSpec::parse(&self.precision, &schema, ParamPrefix::Precision)?,
            Self::link(&self.precision_link, "precision")?,
        )?;
        model.validate_for(data)?;
        let mut options = FitOptions::default();
        options.mean_start = self.mean_start.clone();
        options.precision_start = self.precision_start.clone();
        if let Some(m) = self.max_iterations {
            if m == 0 {
                return Err(Error::Config("max_iterations must be at least 1".into()));
            }
            options.max_iterations = m;
        }
        if let Some(tol) = self.tol_loglik {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config("tol_loglik must be a positive number".into()));
            }
            options.tol_loglik = tol;
        }
        if let Some(tol) = self.tol_score {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config("tol_score must be a positive number".into()));
            }
            options.tol_score = tol;
        }
        Ok((model, options))
    }
}
