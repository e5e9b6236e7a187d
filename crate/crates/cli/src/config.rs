//! Experiment configuration: a JSON document, overridden field by field by
//! command-line flags, validated into a [`Plan`] before anything runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use torus_entropy::choi::MAX_CHOI_DIM;
use torus_entropy::freeness::MIN_FIT_LENGTHS;
use torus_entropy::{build_partition, Centering, FVariant, MapKind, PartitionSpec};

use crate::error::{HarnessError, HarnessResult};

pub const DEFAULT_SAMPLES: usize = 32;
pub const DEFAULT_R_MAX: u32 = 2;
/// Upper bound on the dense matrices a single run may keep alive.
pub const MEMORY_CEILING_BYTES: usize = 2 << 30;
const COMPLEX_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Entropy,
    Freeness,
    Fstats,
    Verify,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Entropy => "entropy",
            Experiment::Freeness => "freeness",
            Experiment::Fstats => "fstats",
            Experiment::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Fast,
    Full,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(format!("unknown suite '{other}' (expected fast or full)")),
        }
    }
}

/// Deliberate faults for self-testing the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    SkipMeasurement,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skip-measurement" => Ok(Fault::SkipMeasurement),
            other => Err(format!("unknown fault '{other}' (expected skip-measurement)")),
        }
    }
}

fn parse_centering(s: &str) -> Result<Centering, String> {
    match s {
        "block-count" | "block_count" => Ok(Centering::BlockCount),
        "traceless" => Ok(Centering::Traceless),
        other => Err(format!(
            "unknown centering '{other}' (expected block-count or traceless)"
        )),
    }
}

/// Everything needed to reproduce a run. Field names are the JSON keys.
///
/// `n_max` is the step count for `entropy`, the longest word for
/// `freeness` and the largest power `m` for `fstats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapKind>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<FVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<Centering>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line values, still unparsed. `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub map: Option<String>,
    pub dim: Option<usize>,
    pub partition: Option<String>,
    pub n_max: Option<usize>,
    pub samples_per_n: Option<usize>,
    pub r_max: Option<u32>,
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub centering: Option<String>,
    pub suite: Option<String>,
    pub fault: Option<String>,
    pub out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            map: None,
            dim: None,
            partition: None,
            n_max: None,
            samples_per_n: None,
            r_max: None,
            seed: 0,
            variant: None,
            centering: None,
            suite: None,
            fault: None,
            out: None,
        }
    }

    /// Reads a JSON config. The `experiment` key may be omitted; if present
    /// it must agree with `experiment`.
    pub fn from_json_file(path: &Path, experiment: Experiment) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json_str(&text, experiment)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn from_json_str(text: &str, experiment: Experiment) -> Result<Self, String> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let object = value
            .as_object_mut()
            .ok_or_else(|| "config must be a JSON object".to_string())?;
        let wanted = serde_json::to_value(experiment).map_err(|e| e.to_string())?;
        match object.get("experiment") {
            Some(found) if *found != wanted => {
                return Err(format!(
                    "config is for experiment {found}, but '{experiment}' was requested"
                ))
            }
            Some(_) => {}
            None => {
                object.insert("experiment".into(), wanted);
            }
        }
        serde_json::from_value(value).map_err(|e| e.to_string())
    }

    pub fn apply(&mut self, o: Overrides) -> HarnessResult<()> {
        if let Some(map) = o.map {
            self.map = Some(map.parse().map_err(config_err)?);
        }
        if let Some(dim) = o.dim {
            self.dim = Some(dim);
        }
        if let Some(spec) = o.partition {
            self.partition = Some(spec.parse().map_err(|e: torus_entropy::Error| config_err(e.to_string()))?);
        }
        if let Some(n) = o.n_max {
            self.n_max = Some(n);
        }
        if let Some(s) = o.samples_per_n {
            self.samples_per_n = Some(s);
        }
        if let Some(r) = o.r_max {
            self.r_max = Some(r);
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(v) = o.variant {
            self.variant = Some(v.parse().map_err(config_err)?);
        }
        if let Some(c) = o.centering {
            self.centering = Some(parse_centering(&c).map_err(config_err)?);
        }
        if let Some(s) = o.suite {
            self.suite = Some(s.parse().map_err(config_err)?);
        }
        if let Some(f) = o.fault {
            self.fault = Some(f.parse().map_err(config_err)?);
        }
        if let Some(out) = o.out {
            self.out = Some(out);
        }
        Ok(())
    }

    /// The config as written into output headers: defaults filled in, the
    /// output directory left out so that the payload does not depend on
    /// where it was written.
    pub fn provenance(&self) -> ExperimentConfig {
        ExperimentConfig {
            out: None,
            ..self.clone()
        }
    }

    pub fn provenance_json(&self) -> String {
        serde_json::to_string(&self.provenance()).expect("config serializes")
    }

    /// Checks the config and fills defaults. Nothing is computed before this
    /// succeeds.
    pub fn validate(&self) -> HarnessResult<Plan> {
        let out = self
            .out
            .clone()
            .ok_or_else(|| config_err("missing output directory (--out)"))?;
        let mut config = self.clone();
        let task = match self.experiment {
            Experiment::Verify => {
                self.reject(&[
                    ("map", self.map.is_some()),
                    ("N", self.dim.is_some()),
                    ("partition", self.partition.is_some()),
                    ("n_max", self.n_max.is_some()),
                    ("samples_per_n", self.samples_per_n.is_some()),
                    ("r_max", self.r_max.is_some()),
                    ("variant", self.variant.is_some()),
                    ("centering", self.centering.is_some()),
                ])?;
                let suite = self.suite.unwrap_or(Suite::Fast);
                config.suite = Some(suite);
                Task::Verify {
                    suite,
                    fault: self.fault,
                }
            }
            experiment => {
                let target = self.target()?;
                let n_max = self
                    .n_max
                    .ok_or_else(|| config_err(format!("missing {}", self.n_max_flag())))?;
                if n_max == 0 {
                    return Err(config_err(format!("{} must be at least 1", self.n_max_flag())));
                }
                self.reject(&[("suite", self.suite.is_some()), ("fault", self.fault.is_some())])?;
                match experiment {
                    Experiment::Entropy => {
                        self.reject(&[
                            ("samples_per_n", self.samples_per_n.is_some()),
                            ("r_max", self.r_max.is_some()),
                            ("variant", self.variant.is_some()),
                            ("centering", self.centering.is_some()),
                        ])?;
                        if target.dim > MAX_CHOI_DIM {
                            return Err(HarnessError::Resource(format!(
                                "entropy runs need N <= {MAX_CHOI_DIM} (N^4 state), got {}",
                                target.dim
                            )));
                        }
                        Task::Entropy { target, steps: n_max }
                    }
                    Experiment::Freeness => {
                        self.reject(&[("variant", self.variant.is_some())])?;
                        let samples = self.samples_per_n.unwrap_or(DEFAULT_SAMPLES);
                        let r_max = self.r_max.unwrap_or(DEFAULT_R_MAX);
                        if samples == 0 || r_max == 0 {
                            return Err(config_err("samples and rmax must be at least 1"));
                        }
                        let centering = self.centering.unwrap_or_default();
                        let partition = build_partition(target.dim, &target.partition)?;
                        let breaking = 2.0 * (target.dim as f64).ln() / partition.h_meas();
                        let beyond = (1..=n_max).filter(|&n| n as f64 > breaking).count();
                        if beyond < MIN_FIT_LENGTHS {
                            return Err(config_err(format!(
                                "nmax = {n_max} leaves {beyond} lengths beyond the breaking time \
                                 {breaking:.2}; the decay fit needs {MIN_FIT_LENGTHS}"
                            )));
                        }
                        check_memory(target.dim, 2 * r_max as usize + 4)?;
                        config.samples_per_n = Some(samples);
                        config.r_max = Some(r_max);
                        config.centering = Some(centering);
                        Task::Freeness {
                            target,
                            n_max,
                            samples,
                            r_max,
                            centering,
                        }
                    }
                    Experiment::Fstats => {
                        self.reject(&[
                            ("samples_per_n", self.samples_per_n.is_some()),
                            ("r_max", self.r_max.is_some()),
                        ])?;
                        let variant = self
                            .variant
                            .ok_or_else(|| config_err("missing --variant {P|Q}"))?;
                        let centering = self.centering.unwrap_or_default();
                        check_memory(target.dim, n_max + 3)?;
                        config.centering = Some(centering);
                        Task::Fstats {
                            target,
                            m_max: n_max,
                            variant,
                            centering,
                        }
                    }
                    Experiment::Verify => unreachable!(),
                }
            }
        };
        Ok(Plan { config, out, task })
    }

    fn n_max_flag(&self) -> &'static str {
        match self.experiment {
            Experiment::Entropy => "--steps",
            Experiment::Freeness => "--nmax",
            Experiment::Fstats => "--mmax",
            Experiment::Verify => "n_max",
        }
    }

    fn target(&self) -> HarnessResult<Target> {
        let map = self.map.ok_or_else(|| config_err("missing --map"))?;
        if map == MapKind::Custom {
            return Err(config_err("map 'custom' cannot be requested from a config"));
        }
        let dim = self.dim.ok_or_else(|| config_err("missing --N"))?;
        if dim < 2 {
            return Err(config_err(format!("N must be at least 2, got {dim}")));
        }
        let partition = self
            .partition
            .clone()
            .ok_or_else(|| config_err("missing --partition"))?;
        build_partition(dim, &partition).map_err(|e| config_err(e.to_string()))?;
        Ok(Target {
            map,
            dim,
            partition,
            seed: self.seed,
        })
    }

    fn reject(&self, fields: &[(&str, bool)]) -> HarnessResult<()> {
        let present: Vec<&str> = fields.iter().filter(|f| f.1).map(|f| f.0).collect();
        if present.is_empty() {
            Ok(())
        } else {
            Err(config_err(format!(
                "{} does not apply to '{}' runs",
                present.join(", "),
                self.experiment
            )))
        }
    }
}

fn check_memory(dim: usize, matrices: usize) -> HarnessResult<()> {
    let bytes = dim
        .saturating_mul(dim)
        .saturating_mul(COMPLEX_BYTES)
        .saturating_mul(matrices);
    if bytes > MEMORY_CEILING_BYTES {
        return Err(HarnessError::Resource(format!(
            "{matrices} dense {dim}x{dim} matrices need {} MiB, ceiling is {} MiB",
            bytes >> 20,
            MEMORY_CEILING_BYTES >> 20
        )));
    }
    Ok(())
}

/// Map, dimension and partition of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub map: MapKind,
    pub dim: usize,
    pub partition: PartitionSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Entropy {
        target: Target,
        steps: usize,
    },
    Freeness {
        target: Target,
        n_max: usize,
        samples: usize,
        r_max: u32,
        centering: Centering,
    },
    Fstats {
        target: Target,
        m_max: usize,
        variant: FVariant,
        centering: Centering,
    },
    Verify {
        suite: Suite,
        fault: Option<Fault>,
    },
}

/// A validated config: the echo (with defaults filled), where to write,
/// and what to do.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub task: Task,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entropy_overrides() -> Overrides {
        Overrides {
            map: Some("cat".into()),
            dim: Some(16),
            partition: Some("equal:4".into()),
            n_max: Some(5),
            out: Some("out".into()),
            ..Overrides::default()
        }
    }

    #[test]
    fn flags_override_file_values() {
        let mut c = ExperimentConfig::from_json_str(
            r#"{"map": "elliptic", "N": 32, "partition": "equal:8", "n_max": 3, "seed": 5}"#,
            Experiment::Entropy,
        )
        .unwrap();
        c.apply(Overrides {
            dim: Some(16),
            out: Some("x".into()),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.map, Some(MapKind::Elliptic));
        assert_eq!(c.dim, Some(16));
        assert_eq!(c.seed, 5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn mismatched_experiment_and_unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"experiment": "verify"}"#, Experiment::Entropy).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"colour": 1}"#, Experiment::Entropy).is_err());
    }

    #[test]
    fn entropy_dimension_ceiling_is_a_resource_error() {
        let mut c = ExperimentConfig::new(Experiment::Entropy);
        c.apply(Overrides {
            dim: Some(128),
            ..entropy_overrides()
        })
        .unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), crate::exit::RESOURCE);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut c = ExperimentConfig::new(Experiment::Entropy);
        assert!(c
            .apply(Overrides {
                map: Some("baker".into()),
                ..Overrides::default()
            })
            .is_err());
        c.apply(Overrides {
            partition: Some("equal:5".into()),
            ..entropy_overrides()
        })
        .unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), crate::exit::CONFIG);
    }

    #[test]
    fn freeness_defaults_are_echoed_and_window_checked() {
        let mut c = ExperimentConfig::new(Experiment::Freeness);
        c.apply(Overrides {
            map: Some("cat".into()),
            dim: Some(64),
            partition: Some("equal:4".into()),
            n_max: Some(8),
            out: Some("o".into()),
            ..Overrides::default()
        })
        .unwrap();
        // breaking time 6: only lengths 7 and 8 remain
        assert_eq!(c.validate().unwrap_err().exit_code(), crate::exit::CONFIG);
        c.n_max = Some(12);
        let plan = c.validate().unwrap();
        assert_eq!(plan.config.r_max, Some(DEFAULT_R_MAX));
        assert_eq!(plan.config.samples_per_n, Some(DEFAULT_SAMPLES));
        assert!(!plan.config.provenance_json().contains("\"out\""));
    }
}
