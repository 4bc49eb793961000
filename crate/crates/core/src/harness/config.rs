//! TOML run configuration.
//!
//! ```toml
//! example = 3            # built-in problem 1, 2 or 3; omit when members are given
//! degree = 1
//! levels = [1, 2, 3]
//! dt_rule = "h3"         # "h", "h3" or "fixed=<dt>"
//! final_time = 0.1
//! strict_admissibility = false
//! snapshot = "final"     # "none", "final" or "every=<m>"
//! mesh_file = "mesh.txt"
//! out = "results"
//!
//! [[members]]            # constant coefficients, g = 0, u0 = 0
//! c = 60.0
//! beta = [2.0, 3.0]
//! f = 2.0
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{HdgError, Result};
use crate::harness::examples::example;
use crate::problem::{Member, ProblemSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantMember {
    pub c: f64,
    pub beta: [f64; 2],
    pub f: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
    #[serde(default)]
    pub strict_admissibility: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<ConstantMember>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HdgError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HdgError::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The configured ensemble; explicit members take precedence over `example`.
    pub fn problem(&self) -> Result<ProblemSpec> {
        let mut spec = if !self.members.is_empty() {
            let members = self
                .members
                .iter()
                .map(|m| Member::constant(m.c, Vector2::new(m.beta[0], m.beta[1]), m.f))
                .collect();
            ProblemSpec::new(members, self.final_time.unwrap_or(1.0))?
        } else {
            let n = self.example.ok_or_else(|| {
                HdgError::InvalidArgument("configuration names neither an example nor members".into())
            })?;
            example(n).ok_or_else(|| HdgError::InvalidArgument(format!("unknown example {n}")))?
        };
        if let Some(t) = self.final_time {
            spec.final_time = t;
        }
        Ok(spec)
    }
}
