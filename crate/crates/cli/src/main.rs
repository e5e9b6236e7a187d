use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sim_harness::{exit, Experiment, ExperimentConfig, HarnessResult, Overrides, RunData};

/// Entropy production and free-independence experiments for quantized
/// torus maps under periodic measurement.
///
/// Settings come from an optional JSON file (`--config`); any flag given on
/// the command line replaces the file value.
#[derive(Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Linear entropy I[n] of the measured evolution.
    Entropy {
        #[command(flatten)]
        target: TargetArgs,
        /// Number of measured steps.
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sampled alternating moments |C[n]| and their decay fit.
    Freeness {
        #[command(flatten)]
        target: TargetArgs,
        /// Longest word length.
        #[arg(long)]
        nmax: Option<usize>,
        /// Random words per length.
        #[arg(long)]
        samples: Option<usize>,
        /// Powers are drawn from ±1..±rmax.
        #[arg(long)]
        rmax: Option<u32>,
        /// Centering of Q_k: block-count (P_k - 1/K) or traceless.
        #[arg(long)]
        centering: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Statistics of the single factors F(m, j) = U^m P_j or U^m Q_j.
    Fstats {
        #[command(flatten)]
        target: TargetArgs,
        /// Largest power m.
        #[arg(long)]
        mmax: Option<usize>,
        /// P or Q.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        centering: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Invariant suite; exits 2 if any invariant fails.
    Verify {
        /// fast or full.
        #[arg(long)]
        suite: Option<String>,
        /// Deliberate fault for self-testing (skip-measurement).
        #[arg(long)]
        inject_fault: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct TargetArgs {
    /// cat, elliptic, shift or haar.
    #[arg(long)]
    map: Option<String>,
    /// Hilbert space dimension.
    #[arg(long = "N")]
    dim: Option<usize>,
    /// equal:K or sizes:d1,d2,...
    #[arg(long)]
    partition: Option<String>,
    /// Seed for random unitaries and sampling.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn target_overrides(t: TargetArgs, out: Option<PathBuf>) -> Overrides {
    Overrides {
        map: t.map,
        dim: t.dim,
        partition: t.partition,
        seed: t.seed,
        out,
        ..Overrides::default()
    }
}

fn build_config(command: Command) -> HarnessResult<ExperimentConfig> {
    let (experiment, common, overrides) = match command {
        Command::Entropy { target, steps, common } => {
            let o = Overrides {
                n_max: steps,
                ..target_overrides(target, common.out.clone())
            };
            (Experiment::Entropy, common, o)
        }
        Command::Freeness {
            target,
            nmax,
            samples,
            rmax,
            centering,
            common,
        } => {
            let o = Overrides {
                n_max: nmax,
                samples_per_n: samples,
                r_max: rmax,
                centering,
                ..target_overrides(target, common.out.clone())
            };
            (Experiment::Freeness, common, o)
        }
        Command::Fstats {
            target,
            mmax,
            variant,
            centering,
            common,
        } => {
            let o = Overrides {
                n_max: mmax,
                variant,
                centering,
                ..target_overrides(target, common.out.clone())
            };
            (Experiment::Fstats, common, o)
        }
        Command::Verify {
            suite,
            inject_fault,
            common,
        } => {
            let o = Overrides {
                suite,
                fault: inject_fault,
                out: common.out.clone(),
                ..Overrides::default()
            };
            (Experiment::Verify, common, o)
        }
    };
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path, experiment)?,
        None => ExperimentConfig::new(experiment),
    };
    config.apply(overrides)?;
    Ok(config)
}

fn summary(data: &RunData) -> String {
    match data {
        RunData::Entropy(run) => format!(
            "I[{}] = {:.6} nats (2 ln N = {:.6})",
            run.series.points.len() - 1,
            run.series.final_entropy(),
            2.0 * (run.series.dim as f64).ln()
        ),
        RunData::Freeness(run) => match &run.fit {
            Some(fit) => format!(
                "{} samples; rate = {:.4} ± {:.4}, A = {:.4}, below-extrapolation fraction = {:.3}",
                run.samples.len(),
                fit.rate,
                fit.rate_stderr,
                fit.ansatz_a,
                fit.below_extrapolation_fraction
            ),
            None => format!("{} samples; decay fit failed", run.samples.len()),
        },
        RunData::Fstats(run) => format!(
            "mean |(1/N) Tr F| = {:.6e}, mean rms = {:.6}, exp(-h/2) = {:.6}",
            run.summary.mean_abs_mean, run.summary.rms_mean, run.summary.reference_mean
        ),
        RunData::Verify(report) => format!(
            "{} checks; purity mismatch {:.2e}, spectral mismatch {:.2e}, trace drift {:.2e}",
            report.checks.len(),
            report.purity_mismatch,
            report.max_spectral_mismatch,
            report.trace_drift
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let outcome = build_config(cli.command).and_then(|c| sim_harness::run(&c));
    match outcome {
        Ok(outcome) => {
            println!("{}", summary(&outcome.data));
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            let failed = outcome.manifest.failed();
            if !failed.is_empty() {
                eprintln!("invariant failure: {}", failed.join(", "));
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
