//! The three data-producing experiments.

use serde::Serialize;
use torus_entropy::freeness::{length_statistics, LengthStats};
use torus_entropy::{
    build_partition, build_unitary, entropy_series, f_variable_stats, fit_decay, linalg,
    sample_correlations, Centering, CorrelationSample, DecaySummary, EntropySeries,
    FVariableStats, FVariant, Partition, PartitionSpec, QuantizedMap, SamplingConfig,
};

use crate::config::{ExperimentConfig, Target};
use crate::error::HarnessResult;
use crate::manifest::InvariantCheck;
use crate::output::{fmt_f64, gnuplot_preamble, RunDir};

const TRACE_TOL: f64 = 1e-8;
const UNITARITY_CHECK_TOL: f64 = 1e-10;
const ABS_C_SLACK: f64 = 1e-12;
const SECOND_MOMENT_TOL: f64 = 1e-12;

fn build(target: &Target) -> HarnessResult<(QuantizedMap, Partition)> {
    let u = build_unitary(target.map, target.dim, target.seed)?;
    let p = build_partition(target.dim, &target.partition)?;
    Ok((u, p))
}

fn unitarity_check(u: &QuantizedMap) -> InvariantCheck {
    InvariantCheck::at_most(
        "unitarity",
        linalg::unitarity_deviation(u.matrix()),
        UNITARITY_CHECK_TOL,
    )
}

pub struct EntropyRun {
    pub series: EntropySeries,
    pub checks: Vec<InvariantCheck>,
}

pub fn run_entropy(
    target: &Target,
    steps: usize,
    config: &ExperimentConfig,
    dir: &mut RunDir,
) -> HarnessResult<EntropyRun> {
    let (u, p) = build(target)?;
    let series = entropy_series(&u, &p, steps)?;
    let rows = series.points.iter().map(|pt| {
        vec![
            pt.n.to_string(),
            fmt_f64(Some(pt.entropy)),
            fmt_f64(Some(pt.bound_lin)),
            fmt_f64(Some(pt.bound_sat)),
            fmt_f64(pt.slope_window),
        ]
    });
    dir.csv(
        "entropy.csv",
        config,
        &["n", "I_n", "bound_lin", "bound_sat", "slope_window"],
        rows,
    )?;
    dir.gnuplot("entropy.gp", config, &entropy_plot(target, &series))?;
    let checks = vec![
        unitarity_check(&u),
        InvariantCheck::count("entropy_bound", series.bound_violations.len()),
        InvariantCheck::count("entropy_monotone", series.monotonicity_violations.len()),
        InvariantCheck::at_most("trace_drift", series.max_trace_drift, TRACE_TOL),
    ];
    Ok(EntropyRun { series, checks })
}

fn entropy_plot(target: &Target, series: &EntropySeries) -> String {
    let ln_k = (series.blocks as f64).ln();
    let h_p = series.h_meas;
    let sat = 2.0 * (series.dim as f64).ln();
    let mut s = gnuplot_preamble("entropy.png");
    s.push_str(&format!(
        "set title \"{} map, N = {}, {}\"\n\
         set xlabel \"n\"\n\
         set ylabel \"I[n] (nats)\"\n\
         set key left top\n\
         set yrange [0:{:.3}]\n\
         lnK = {ln_k}\n\
         hP = {h_p}\n\
         sat = {sat}\n",
        target.map,
        target.dim,
        target.partition,
        sat * 1.15
    ));
    let mut curves = vec![
        "\"entropy.csv\" using 1:2 with linespoints pt 7 title \"I[n]\"".to_string(),
    ];
    match target.partition {
        PartitionSpec::Equal(_) => {
            curves.push("lnK*x with lines dt 2 lw 2 title \"n ln K\"".into());
        }
        PartitionSpec::Sizes(_) => {
            curves.push("lnK*x with lines dt 2 title \"n ln K (bound)\"".into());
            curves.push("hP*x with lines dt 4 lw 2 title \"n h(P) (initial slope)\"".into());
        }
    }
    if let Some(aut) = target.map.automorphism() {
        if aut.ks_entropy > 0.0 {
            s.push_str(&format!("hKS = {}\n", aut.ks_entropy));
            curves.push("hKS*x with lines dt 3 title \"n h_KS\"".into());
        }
    }
    curves.push("sat with lines dt 1 title \"2 ln N\"".into());
    s.push_str("plot ");
    s.push_str(&curves.join(", \\\n     "));
    s.push('\n');
    s
}

/// The fit payload as written to `fit.json`.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(rename = "K")]
    pub blocks: usize,
    pub h_meas: f64,
    pub breaking_time: f64,
    pub rate: f64,
    pub rate_stderr: f64,
    #[serde(rename = "A")]
    pub ansatz_a: f64,
    pub below_extrapolation_fraction: f64,
    #[serde(rename = "A_stderr")]
    pub ansatz_a_stderr: f64,
    pub intercept: f64,
    pub fit_window: (usize, usize),
}

impl From<&DecaySummary> for FitReport {
    fn from(d: &DecaySummary) -> Self {
        FitReport {
            dim: d.dim,
            blocks: d.blocks,
            h_meas: d.h_meas,
            breaking_time: d.breaking_time,
            rate: d.rate,
            rate_stderr: d.rate_stderr,
            ansatz_a: d.ansatz_a,
            below_extrapolation_fraction: d.below_extrapolation_fraction,
            ansatz_a_stderr: d.ansatz_a_stderr,
            intercept: d.intercept,
            fit_window: d.fit_window,
        }
    }
}

pub struct FreenessRun {
    pub samples: Vec<CorrelationSample>,
    pub lengths: Vec<LengthStats>,
    pub fit: Option<DecaySummary>,
    pub checks: Vec<InvariantCheck>,
}

pub fn run_freeness(
    target: &Target,
    sampling: &SamplingConfig,
    config: &ExperimentConfig,
    dir: &mut RunDir,
) -> HarnessResult<FreenessRun> {
    let (u, p) = build(target)?;
    let samples = sample_correlations(&u, &p, sampling)?;
    dir.csv(
        "samples.csv",
        config,
        &["n", "sample_index", "abs_C", "sequence"],
        samples.iter().map(|s| {
            vec![
                s.n().to_string(),
                s.sample_index.to_string(),
                fmt_f64(Some(s.abs_value())),
                s.sequence_string(),
            ]
        }),
    )?;
    let lengths = length_statistics(&samples);
    dir.csv(
        "lengths.csv",
        config,
        &["n", "count", "mean_ln_abs_C", "median_ln_abs_C", "floored"],
        lengths.iter().map(|l| {
            vec![
                l.n.to_string(),
                l.count.to_string(),
                fmt_f64(Some(l.mean_ln_abs)),
                fmt_f64(Some(l.median_ln_abs)),
                l.floored.to_string(),
            ]
        }),
    )?;
    let max_abs = samples.iter().map(|s| s.abs_value()).fold(0.0, f64::max);
    let mut checks = vec![
        unitarity_check(&u),
        InvariantCheck::at_most("abs_c_at_most_one", max_abs, 1.0 + ABS_C_SLACK),
    ];
    let fit = match fit_decay(&samples, &p) {
        Ok(fit) => {
            dir.json("fit.json", config, &FitReport::from(&fit))?;
            dir.csv(
                "rate.csv",
                config,
                &["h_meas", "rate", "rate_stderr", "A"],
                [vec![
                    fmt_f64(Some(fit.h_meas)),
                    fmt_f64(Some(fit.rate)),
                    fmt_f64(Some(fit.rate_stderr)),
                    fmt_f64(Some(fit.ansatz_a)),
                ]],
            )?;
            dir.gnuplot("correlations.gp", config, &correlation_plot(target, &fit))?;
            dir.gnuplot("rate.gp", config, &rate_plot())?;
            checks.push(InvariantCheck::count("decay_fit", 0));
            Some(fit)
        }
        Err(_) => {
            checks.push(InvariantCheck::count("decay_fit", 1));
            None
        }
    };
    Ok(FreenessRun {
        samples,
        lengths,
        fit,
        checks,
    })
}

fn correlation_plot(target: &Target, fit: &DecaySummary) -> String {
    let mut s = gnuplot_preamble("correlations.png");
    s.push_str(&format!(
        "set title \"|C[n]|, {} map, N = {}, {}\"\n\
         set xlabel \"n\"\n\
         set ylabel \"|C[n]|\"\n\
         set logscale y\n\
         set format y \"10^{{%L}}\"\n\
         c0 = {}\n\
         rho = {}\n\
         tb = {}\n\
         set arrow from tb, graph 0 to tb, graph 1 nohead dt 2\n\
         plot \"samples.csv\" using 1:($3 > 0 ? $3 : 1/0) with points pt 6 ps 0.6 title \"samples\", \\\n     \
         \"lengths.csv\" using 1:(exp($4)) with linespoints pt 7 title \"median\", \\\n     \
         \"lengths.csv\" using 1:(exp($3)) with linespoints pt 5 title \"exp(mean ln|C|)\", \\\n     \
         exp(c0 - rho*x) with lines lw 2 title \"long-time fit\"\n",
        target.map, target.dim, target.partition, fit.intercept, fit.rate, fit.breaking_time
    ));
    s
}

fn rate_plot() -> String {
    let mut s = gnuplot_preamble("rate.png");
    s.push_str(
        "set title \"long-time decay rate vs h(P)\"\n\
         set xlabel \"h(P) (nats)\"\n\
         set ylabel \"rate (nats per factor)\"\n\
         set xrange [0:*]\n\
         set yrange [0:*]\n\
         plot \"rate.csv\" using 1:2:3 with yerrorbars pt 7 title \"fitted rate\", \\\n     \
         x/2 with lines dt 2 title \"A = 1\"\n",
    );
    s
}

/// Summary written to `fstats.json`.
#[derive(Debug, Clone, Serialize)]
pub struct FStatsSummary {
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(rename = "K")]
    pub blocks: usize,
    pub variant: FVariant,
    pub m_max: usize,
    pub h_meas: f64,
    /// Average of `|(1/N) Tr F|` over all `(m, j)`.
    pub mean_abs_mean: f64,
    /// Average of `sqrt((1/N) Tr F^dag F)`.
    pub rms_mean: f64,
    /// `exp(-h(P)/2)`.
    pub reference_mean: f64,
    /// Largest `|second_moment - predicted|` over all `(m, j)`.
    pub second_moment_max_error: f64,
}

pub struct FStatsRun {
    pub stats: Vec<FVariableStats>,
    pub summary: FStatsSummary,
    pub checks: Vec<InvariantCheck>,
}

/// `(1/N) Tr X^dag X` for `X = P_j` or `Q_j`; conjugating by `U^m` does
/// not change it.
fn predicted_second_moment(p: &Partition, j: usize, variant: FVariant, centering: Centering) -> f64 {
    let w = p.block_size(j) as f64 / p.dim() as f64;
    match variant {
        FVariant::P => w,
        FVariant::Q => {
            let c = p.centering_constant(j, centering);
            w - 2.0 * c * w + c * c
        }
    }
}

pub fn run_fstats(
    target: &Target,
    m_max: usize,
    variant: FVariant,
    centering: Centering,
    config: &ExperimentConfig,
    dir: &mut RunDir,
) -> HarnessResult<FStatsRun> {
    let (u, p) = build(target)?;
    let mut stats = Vec::with_capacity(m_max * p.block_count());
    for m in 1..=m_max as i64 {
        for j in 0..p.block_count() {
            stats.push(f_variable_stats(&u, &p, m, j, variant, centering)?);
        }
    }
    let count = stats.len() as f64;
    let error = stats
        .iter()
        .map(|s| (s.second_moment - predicted_second_moment(&p, s.block, variant, centering)).abs())
        .fold(0.0, f64::max);
    let summary = FStatsSummary {
        dim: target.dim,
        blocks: p.block_count(),
        variant,
        m_max,
        h_meas: p.h_meas(),
        mean_abs_mean: stats.iter().map(|s| s.mean_abs).sum::<f64>() / count,
        rms_mean: stats.iter().map(|s| s.second_moment.sqrt()).sum::<f64>() / count,
        reference_mean: (-p.h_meas() / 2.0).exp(),
        second_moment_max_error: error,
    };
    dir.csv(
        "fstats.csv",
        config,
        &["m", "block", "mean_abs", "second_moment"],
        stats.iter().map(|s| {
            vec![
                s.m.to_string(),
                (s.block + 1).to_string(),
                fmt_f64(Some(s.mean_abs)),
                fmt_f64(Some(s.second_moment)),
            ]
        }),
    )?;
    dir.json("fstats.json", config, &summary)?;
    let mut plot = gnuplot_preamble("fstats.png");
    plot.push_str(&format!(
        "set title \"F(m, j), variant {variant:?}, {} map, N = {}, {}\"\n\
         set xlabel \"m\"\n\
         set logscale y\n\
         ref = {}\n\
         plot \"fstats.csv\" using 1:3 with points pt 7 title \"|(1/N) Tr F|\", \\\n     \
         \"fstats.csv\" using 1:(sqrt($4)) with points pt 5 title \"sqrt((1/N) Tr F^+F)\", \\\n     \
         ref with lines dt 2 title \"exp(-h(P)/2)\"\n",
        target.map, target.dim, target.partition, summary.reference_mean
    ));
    dir.gnuplot("fstats.gp", config, &plot)?;
    let checks = vec![
        unitarity_check(&u),
        InvariantCheck::at_most("second_moment_identity", error, SECOND_MOMENT_TOL),
    ];
    Ok(FStatsRun {
        stats,
        summary,
        checks,
    })
}
