//! Batch experiment runner: validated configs in, reproducible CSV/JSON
//! payloads plus gnuplot scripts and a run manifest out.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod runs;
pub mod verify;

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use torus_entropy::SamplingConfig;

pub use config::{Experiment, ExperimentConfig, Overrides, Plan, Suite, Task};
pub use error::{exit, HarnessError, HarnessResult};
pub use manifest::{InvariantCheck, RunManifest};

/// Soft budget for the verification suite.
pub const VERIFY_BUDGET_SECONDS: f64 = 300.0;

/// In-memory results of a run, alongside what was written to disk.
pub enum RunData {
    Entropy(runs::EntropyRun),
    Freeness(runs::FreenessRun),
    Fstats(runs::FStatsRun),
    Verify(verify::VerifyReport),
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub data: RunData,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.all_passed {
            exit::OK
        } else {
            exit::INVARIANT
        }
    }
}

/// Runs a validated plan and writes its artifacts and `manifest.json`.
pub fn execute(plan: &Plan) -> HarnessResult<RunOutcome> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut dir = output::RunDir::create(&plan.out)?;
    let config = &plan.config;
    let mut warnings = Vec::new();
    let (data, invariants) = match &plan.task {
        Task::Entropy { target, steps } => {
            let run = runs::run_entropy(target, *steps, config, &mut dir)?;
            let checks = run.checks.clone();
            (RunData::Entropy(run), checks)
        }
        Task::Freeness {
            target,
            n_max,
            samples,
            r_max,
            centering,
        } => {
            let sampling = SamplingConfig {
                n_max: *n_max,
                samples_per_n: *samples,
                r_max: *r_max,
                seed: target.seed,
                centering: *centering,
            };
            let run = runs::run_freeness(target, &sampling, config, &mut dir)?;
            let checks = run.checks.clone();
            (RunData::Freeness(run), checks)
        }
        Task::Fstats {
            target,
            m_max,
            variant,
            centering,
        } => {
            let run = runs::run_fstats(target, *m_max, *variant, *centering, config, &mut dir)?;
            let checks = run.checks.clone();
            (RunData::Fstats(run), checks)
        }
        Task::Verify { suite, fault } => {
            let report = verify::run_verify(*suite, *fault)?;
            dir.json("verify.json", config, &report)?;
            let elapsed = clock.elapsed().as_secs_f64();
            if elapsed > VERIFY_BUDGET_SECONDS {
                warnings.push(format!(
                    "verify suite took {elapsed:.0} s, over the {VERIFY_BUDGET_SECONDS:.0} s budget"
                ));
            }
            let checks = report.checks.clone();
            (RunData::Verify(report), checks)
        }
    };
    let manifest = RunManifest {
        config: config.clone(),
        artifacts: dir.artifacts().to_vec(),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        version: output::VERSION.to_string(),
        all_passed: invariants.iter().all(|c| c.passed),
        invariants,
        warnings,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    dir.write_untracked("manifest.json", &text)?;
    Ok(RunOutcome { manifest, data })
}

/// Validates and executes in one go.
pub fn run(config: &ExperimentConfig) -> HarnessResult<RunOutcome> {
    execute(&config.validate()?)
}
