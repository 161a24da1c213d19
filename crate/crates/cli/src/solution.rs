//! Solution files written by every subcommand.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::problem::{Kind, Rows};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub kind: Kind,
    /// SHA-256 of the problem file (or of the generator settings for demos).
    pub problem_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Other global minimizers, when the solution is not unique.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternates: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicity: Option<String>,
    /// Lagrange multiplier of the sphere constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    /// Rank-1 weight `λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Convex weights of the combined constraint carrier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_weights: Option<Vec<f64>>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Rows>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    pub objective: f64,
    #[serde(default)]
    pub constraint_residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    /// Subcommand-specific diagnostics.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub details: serde_json::Map<String, serde_json::Value>,
}

impl SolutionFile {
    pub fn new(kind: Kind, problem_digest: String) -> Self {
        SolutionFile {
            kind,
            problem_digest,
            x: None,
            alternates: Vec::new(),
            multiplicity: None,
            multiplier: None,
            weight: None,
            carrier_weights: None,
            g: None,
            a: None,
            objective: 0.0,
            constraint_residuals: Vec::new(),
            converged: false,
            iterations: 0,
            wall_time_seconds: 0.0,
            details: serde_json::Map::new(),
        }
    }

    pub fn detail(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.details.insert(key.to_string(), value.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution files always serialize")
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }
}
