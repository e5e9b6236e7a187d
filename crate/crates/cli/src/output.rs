//! Output files. Every payload starts with the same provenance header and is
//! a pure function of the config; wall-clock data goes to the manifest only.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, HarnessResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn header_lines(config: &ExperimentConfig) -> [String; 4] {
    [
        format!("torus-entropy sim {} {VERSION}", config.experiment),
        format!("config: {}", config.provenance_json()),
        format!("seed: {}", config.seed),
        "units: natural logarithm (nats)".to_string(),
    ]
}

/// Header placed as the first key of every JSON payload.
#[derive(Debug, Serialize)]
struct JsonHeader {
    generator: String,
    config: ExperimentConfig,
    seed: u64,
    units: &'static str,
}

#[derive(Serialize)]
struct Commented<'a, T: Serialize> {
    #[serde(rename = "_comment")]
    comment: JsonHeader,
    #[serde(flatten)]
    payload: &'a T,
}

/// Formats a float for CSV: shortest round-trip form, in exponent notation
/// for very small or large magnitudes, empty for missing.
pub fn fmt_f64(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&v.abs()) => v.to_string(),
        Some(v) => format!("{v:e}"),
    }
}

/// Output directory of one run, tracking what has been written.
#[derive(Debug)]
pub struct RunDir {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path) -> HarnessResult<Self> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> HarnessResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// CSV with a `#` header block, then a column row, then `rows`.
    pub fn csv(
        &mut self,
        name: &str,
        config: &ExperimentConfig,
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> HarnessResult<()> {
        let mut buf = Vec::new();
        for line in header_lines(config) {
            buf.extend_from_slice(format!("# {line}\n").as_bytes());
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let io_err = |e: csv::Error| HarnessError::io(name, e.into());
            w.write_record(columns).map_err(io_err)?;
            for row in rows {
                w.write_record(&row).map_err(io_err)?;
            }
            w.flush().map_err(|e| HarnessError::io(name, e))?;
        }
        self.write(name, &buf)
    }

    /// Pretty JSON object whose first key `_comment` carries the header.
    pub fn json<T: Serialize>(&mut self, name: &str, config: &ExperimentConfig, payload: &T) -> HarnessResult<()> {
        let doc = Commented {
            comment: JsonHeader {
                generator: format!("torus-entropy sim {} {VERSION}", config.experiment),
                config: config.provenance(),
                seed: config.seed,
                units: "nats",
            },
            payload,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("payload serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Gnuplot script; `body` must only refer to files of this run.
    pub fn gnuplot(&mut self, name: &str, config: &ExperimentConfig, body: &str) -> HarnessResult<()> {
        let mut text = String::new();
        for line in header_lines(config) {
            text.push_str(&format!("# {line}\n"));
        }
        text.push_str(body);
        self.write(name, text.as_bytes())
    }

    /// Writes a file that is not a reproducible payload (the manifest).
    pub(crate) fn write_untracked(&self, name: &str, text: &str) -> HarnessResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }
}

/// Common gnuplot preamble for a PNG named after the script.
pub fn gnuplot_preamble(png: &str) -> String {
    format!(
        "set terminal pngcairo size 900,600\n\
         set output \"{png}\"\n\
         set datafile separator \",\"\n\
         set datafile commentschars \"#\"\n\
         set key autotitle columnheader\n\
         set grid\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, ExperimentConfig};

    #[test]
    fn files_start_with_the_header_and_json_stays_valid() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::new(Experiment::Verify);
        config.seed = 11;
        config.out = Some(tmp.path().to_path_buf());
        let mut dir = RunDir::create(tmp.path()).unwrap();
        dir.csv("a.csv", &config, &["n", "x"], vec![vec!["1".into(), "a,b".into()]])
            .unwrap();
        #[derive(Serialize)]
        struct P {
            value: f64,
        }
        dir.json("b.json", &config, &P { value: 0.5 }).unwrap();
        let csv_text = fs::read_to_string(tmp.path().join("a.csv")).unwrap();
        assert!(csv_text.starts_with("# torus-entropy sim verify"));
        assert!(csv_text.contains("# seed: 11\n"));
        assert!(csv_text.ends_with("n,x\n1,\"a,b\"\n"));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(tmp.path().join("b.json")).unwrap()).unwrap();
        assert_eq!(json["value"], 0.5);
        assert_eq!(json["_comment"]["seed"], 11);
        assert_eq!(dir.artifacts(), ["a.csv", "b.json"]);
    }
}
