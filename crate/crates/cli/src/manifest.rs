use serde::Serialize;

use crate::config::ExperimentConfig;

/// One named invariant. Boolean checks use `value` = number of violations
/// and `tolerance` = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl InvariantCheck {
    /// Passes when `value <= tolerance`; NaN fails.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        InvariantCheck {
            name: name.to_string(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }

    pub fn count(name: &str, violations: usize) -> Self {
        Self::at_most(name, violations as f64, 0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub artifacts: Vec<String>,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub version: String,
    pub invariants: Vec<InvariantCheck>,
    pub all_passed: bool,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn failed(&self) -> Vec<&str> {
        self.invariants
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}
