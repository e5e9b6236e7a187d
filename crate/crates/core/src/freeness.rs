//! Alternating centered moments `C = (1/N) Tr(U^{r_1} Q_{k_1} ⋯ U^{r_n} Q_{k_n})`,
//! their sampling, the exponential-decay fit and the single-factor
//! statistics of `F(m, j) = U^m X_j`.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::{Centering, Partition};
use crate::torus_maps::QuantizedMap;
use crate::C64;

/// `|C|` values below this are floored before taking logarithms.
pub const ABS_FLOOR: f64 = 1e-15;
/// Evaluation budget for [`exhaustive_low_order_check`].
pub const EXHAUSTIVE_BUDGET: usize = 1_000_000;

/// One factor `U^{power} Q_{block}` of a correlation word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Factor {
    pub power: i64,
    pub block: usize,
}

/// Formats a word as `r1:k1,r2:k2,...` with 1-based blocks.
pub struct SequenceDisplay<'a>(pub &'a [Factor]);

impl fmt::Display for SequenceDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, factor) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", factor.power, factor.block + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSample {
    pub sequence: Vec<Factor>,
    pub value: C64,
    /// Position within a sampled batch; zero for single evaluations.
    pub sample_index: usize,
}

impl CorrelationSample {
    pub fn n(&self) -> usize {
        self.sequence.len()
    }

    pub fn abs_value(&self) -> f64 {
        self.value.norm()
    }

    pub fn sequence_string(&self) -> String {
        SequenceDisplay(&self.sequence).to_string()
    }
}

fn check(u: &QuantizedMap, partition: &Partition, sequence: &[Factor]) -> Result<()> {
    if u.dim() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            found: u.dim(),
        });
    }
    for (pos, f) in sequence.iter().enumerate() {
        if f.power == 0 {
            return Err(Error::ZeroPower(pos + 1));
        }
        if f.block >= partition.block_count() {
            return Err(Error::BlockIndex {
                index: f.block,
                count: partition.block_count(),
            });
        }
    }
    Ok(())
}

/// `U^r Q_k` as a dense matrix.
fn factor_matrix(u: &QuantizedMap, partition: &Partition, f: Factor, centering: Centering) -> Array2<C64> {
    let mut m = u.power(f.power).as_ref().clone();
    partition.mul_centered_right(f.block, centering, m.view_mut());
    m
}

/// `Tr(A B) = Σ_il A_il B_li`.
fn trace_of_product(a: ArrayView2<'_, C64>, b: ArrayView2<'_, C64>) -> C64 {
    a.iter().zip(b.t().iter()).map(|(x, y)| x * y).sum()
}

/// Evaluates `C` for one word. The first and last factors come straight
/// from the power cache; the middle ones are applied as `M <- M U^r` then a
/// column mask, so a length-`n` word costs `n - 2` structured products.
pub fn correlation_value(
    u: &QuantizedMap,
    partition: &Partition,
    sequence: &[Factor],
    centering: Centering,
) -> Result<CorrelationSample> {
    check(u, partition, sequence)?;
    let n = u.dim() as f64;
    let value = match sequence {
        [] => C64::new(1.0, 0.0),
        [only] => linalg::trace(factor_matrix(u, partition, *only, centering).view()) / n,
        [first, middle @ .., last] => {
            let mut acc = factor_matrix(u, partition, *first, centering);
            for f in middle {
                acc = u.mul_right(f.power, acc.view());
                partition.mul_centered_right(f.block, centering, acc.view_mut());
            }
            let tail = factor_matrix(u, partition, *last, centering);
            trace_of_product(acc.view(), tail.view()) / n
        }
    };
    Ok(CorrelationSample {
        sequence: sequence.to_vec(),
        value,
        sample_index: 0,
    })
}

/// Independent RNG stream for sample `index` of word length `n`.
fn sample_rng(seed: u64, n: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | index as u64);
    rng
}

fn draw_sequence(rng: &mut ChaCha8Rng, n: usize, r_max: u32, blocks: usize) -> Vec<Factor> {
    let r_max = i64::from(r_max);
    (0..n)
        .map(|_| {
            let draw = rng.random_range(0..2 * r_max);
            let power = if draw < r_max { draw - r_max } else { draw - r_max + 1 };
            Factor {
                power,
                block: rng.random_range(0..blocks),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingConfig {
    pub n_max: usize,
    pub samples_per_n: usize,
    pub r_max: u32,
    pub seed: u64,
    pub centering: Centering,
}

/// Draws `samples_per_n` random words for each length `1..=n_max`, with
/// powers uniform on `±1..±r_max` and blocks uniform. Every sample has its
/// own RNG stream, so the result does not depend on scheduling.
pub fn sample_correlations(
    u: &QuantizedMap,
    partition: &Partition,
    config: &SamplingConfig,
) -> Result<Vec<CorrelationSample>> {
    if config.r_max == 0 || config.samples_per_n == 0 {
        return Err(Error::InvariantViolation(
            "r_max and samples_per_n must be at least 1".into(),
        ));
    }
    let tasks: Vec<(usize, usize)> = (1..=config.n_max)
        .flat_map(|n| (0..config.samples_per_n).map(move |i| (n, i)))
        .collect();
    tasks
        .into_par_iter()
        .map(|(n, index)| {
            let mut rng = sample_rng(config.seed, n, index);
            let seq = draw_sequence(&mut rng, n, config.r_max, partition.block_count());
            let mut sample = correlation_value(u, partition, &seq, config.centering)?;
            sample.sample_index = index;
            Ok(sample)
        })
        .collect()
}

/// Worst word found by exhaustive enumeration at one length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowOrderWorst {
    pub n: usize,
    pub max_abs: f64,
    pub argmax: Vec<Factor>,
    pub evaluated: usize,
}

/// Enumerates every word of length `1..=max_n` (at most 3) with powers from
/// `r_set` and reports the largest `|C|` per length.
pub fn exhaustive_low_order_check(
    u: &QuantizedMap,
    partition: &Partition,
    max_n: usize,
    r_set: &[i64],
    centering: Centering,
) -> Result<Vec<LowOrderWorst>> {
    if max_n > 3 {
        return Err(Error::CapExceeded {
            what: "exhaustive word length",
            requested: max_n,
            cap: 3,
        });
    }
    if let Some(pos) = r_set.iter().position(|&r| r == 0) {
        return Err(Error::ZeroPower(pos + 1));
    }
    let alphabet: Vec<Factor> = r_set
        .iter()
        .flat_map(|&power| (0..partition.block_count()).map(move |block| Factor { power, block }))
        .collect();
    let total = alphabet.len().checked_pow(max_n as u32).unwrap_or(usize::MAX);
    if total > EXHAUSTIVE_BUDGET {
        return Err(Error::CapExceeded {
            what: "exhaustive evaluations",
            requested: total,
            cap: EXHAUSTIVE_BUDGET,
        });
    }
    let mut out = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let count = alphabet.len().pow(n as u32);
        let words: Vec<Vec<Factor>> = (0..count)
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let f = alphabet[code % alphabet.len()];
                        code /= alphabet.len();
                        f
                    })
                    .collect()
            })
            .collect();
        let values: Vec<f64> = words
            .par_iter()
            .map(|w| correlation_value(u, partition, w, centering).map(|s| s.abs_value()))
            .collect::<Result<_>>()?;
        let (best, max_abs) = values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        out.push(LowOrderWorst {
            n,
            max_abs,
            argmax: words[best].clone(),
            evaluated: count,
        });
    }
    Ok(out)
}

/// Per-length statistics of `ln |C|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthStats {
    pub n: usize,
    pub count: usize,
    pub mean_ln_abs: f64,
    pub median_ln_abs: f64,
    /// Samples that hit [`ABS_FLOOR`].
    pub floored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecaySummary {
    pub dim: usize,
    pub blocks: usize,
    pub h_meas: f64,
    /// `2 ln N / h(P)`.
    pub breaking_time: f64,
    pub per_length: Vec<LengthStats>,
    /// Lengths used by the fit (all `n > breaking_time`).
    pub fit_window: (usize, usize),
    /// `ρ` in `mean ln|C[n]| ≈ c - ρ n`.
    pub rate: f64,
    pub rate_stderr: f64,
    pub intercept: f64,
    /// `2ρ / h(P)`.
    pub ansatz_a: f64,
    pub ansatz_a_stderr: f64,
    /// Fraction of lengths `n ≤ breaking_time` whose median `ln|C|` lies
    /// below the backward extrapolation `c - ρ n`.
    pub below_extrapolation_fraction: f64,
    /// `(n, median ln|C[n]| - (c - ρ n))` for the early lengths.
    pub extrapolation_gaps: Vec<(usize, f64)>,
}

impl DecaySummary {
    /// `exp(-ρ)`: the per-factor magnitude implied by the fitted decay.
    pub fn per_factor_magnitude(&self) -> f64 {
        (-self.rate).exp()
    }
}

fn median(sorted: &[f64]) -> f64 {
    let len = sorted.len();
    if len % 2 == 1 {
        sorted[len / 2]
    } else {
        0.5 * (sorted[len / 2 - 1] + sorted[len / 2])
    }
}

pub fn length_statistics(samples: &[CorrelationSample]) -> Vec<LengthStats> {
    let n_max = samples.iter().map(CorrelationSample::n).max().unwrap_or(0);
    (1..=n_max)
        .filter_map(|n| {
            let mut logs: Vec<f64> = Vec::new();
            let mut floored = 0;
            for s in samples.iter().filter(|s| s.n() == n) {
                let abs = s.abs_value();
                if abs < ABS_FLOOR {
                    floored += 1;
                }
                logs.push(abs.max(ABS_FLOOR).ln());
            }
            if logs.is_empty() {
                return None;
            }
            logs.sort_by(f64::total_cmp);
            Some(LengthStats {
                n,
                count: logs.len(),
                mean_ln_abs: logs.iter().sum::<f64>() / logs.len() as f64,
                median_ln_abs: median(&logs),
                floored,
            })
        })
        .collect()
}

/// Minimum number of lengths beyond the breaking time needed for a fit.
pub const MIN_FIT_LENGTHS: usize = 4;

/// Fits `mean ln|C[n]| ≈ c - ρ n` over `n > 2 ln N / h(P)` and compares
/// the early lengths against the backward extrapolation.
pub fn fit_decay(samples: &[CorrelationSample], partition: &Partition) -> Result<DecaySummary> {
    let dim = partition.dim();
    let h = partition.h_meas();
    if h <= 0.0 {
        return Err(Error::Fit("h(P) = 0: no breaking time".into()));
    }
    let breaking_time = 2.0 * (dim as f64).ln() / h;
    let per_length = length_statistics(samples);
    let window: Vec<&LengthStats> = per_length
        .iter()
        .filter(|s| s.n as f64 > breaking_time)
        .collect();
    if window.len() < MIN_FIT_LENGTHS {
        return Err(Error::Fit(format!(
            "{} lengths beyond breaking time {breaking_time:.3}, need {MIN_FIT_LENGTHS}",
            window.len()
        )));
    }
    if window.iter().all(|s| s.floored == s.count) {
        return Err(Error::Fit("every sample in the fit window is zero".into()));
    }
    let points: Vec<(f64, f64)> = window.iter().map(|s| (s.n as f64, s.mean_ln_abs)).collect();
    let (slope, intercept, stderr) =
        linalg::least_squares_line(&points).ok_or_else(|| Error::Fit("degenerate window".into()))?;
    let rate = -slope;
    let early: Vec<&LengthStats> = per_length
        .iter()
        .filter(|s| s.n as f64 <= breaking_time)
        .collect();
    let extrapolation_gaps: Vec<(usize, f64)> = early
        .iter()
        .map(|s| (s.n, s.median_ln_abs - (intercept - rate * s.n as f64)))
        .collect();
    let below = extrapolation_gaps.iter().filter(|(_, gap)| *gap < 0.0).count();
    let below_extrapolation_fraction = if extrapolation_gaps.is_empty() {
        f64::NAN
    } else {
        below as f64 / extrapolation_gaps.len() as f64
    };
    Ok(DecaySummary {
        dim,
        blocks: partition.block_count(),
        h_meas: h,
        breaking_time,
        fit_window: (window[0].n, window[window.len() - 1].n),
        rate,
        rate_stderr: stderr,
        intercept,
        ansatz_a: 2.0 * rate / h,
        ansatz_a_stderr: 2.0 * stderr / h,
        below_extrapolation_fraction,
        extrapolation_gaps,
        per_length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FVariant {
    /// `F = U^m P_j`.
    P,
    /// `F = U^m Q_j`.
    Q,
}

impl std::str::FromStr for FVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "P" | "p" => Ok(FVariant::P),
            "Q" | "q" => Ok(FVariant::Q),
            other => Err(format!("unknown variant '{other}' (expected P or Q)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FVariableStats {
    pub m: i64,
    pub block: usize,
    pub variant: FVariant,
    /// `|(1/N) Tr F|`.
    pub mean_abs: f64,
    /// `(1/N) Tr(F^dag F)`.
    pub second_moment: f64,
}

pub fn f_variable_stats(
    u: &QuantizedMap,
    partition: &Partition,
    m: i64,
    j: usize,
    variant: FVariant,
    centering: Centering,
) -> Result<FVariableStats> {
    check(u, partition, &[Factor { power: m, block: j }])?;
    let mut f = u.power(m).as_ref().clone();
    match variant {
        FVariant::Q => partition.mul_centered_right(j, centering, f.view_mut()),
        FVariant::P => {
            let range = partition.range(j);
            for mut row in f.rows_mut() {
                for (col, z) in row.iter_mut().enumerate() {
                    if !range.contains(&col) {
                        *z = C64::default();
                    }
                }
            }
        }
    }
    let n = u.dim() as f64;
    Ok(FVariableStats {
        m,
        block: j,
        variant,
        mean_abs: linalg::trace(f.view()).norm() / n,
        second_moment: linalg::frobenius_norm_sqr(f.as_slice().expect("standard layout")) / n,
    })
}
