//! The invariant suite behind `sim verify`.

use ndarray::Array2;
use serde::Serialize;
use torus_entropy::choi::{evolve_series, EvolutionOptions};
use torus_entropy::linalg::{self, nonzero_spectrum_mismatch};
use torus_entropy::torus_maps::CAT_AUTOMORPHISM;
use torus_entropy::{
    apply_measurement_step, apply_unitary_step, build_partition, build_unitary,
    classify_automorphism, correlation_value, f_variable_stats, gram_matrix, init_choi,
    linear_entropy, purity_from_gram, sample_correlations, Centering, FVariant, Factor, MapKind,
    Partition, PartitionSpec, QuantizedMap, SamplingConfig, C64,
};

use crate::config::{Fault, Suite};
use crate::error::HarnessResult;
use crate::manifest::InvariantCheck;

pub const PURITY_TOL: f64 = 1e-8;
pub const SPECTRUM_TOL: f64 = 1e-7;
pub const TRACE_TOL: f64 = 1e-8;
const EXACT_TOL: f64 = 1e-12;
const UNITARY_POWER_TOL: f64 = 1e-9;
const STRUCTURED_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-10;
const ZERO_CUT: f64 = 1e-10;

const ALL_MAPS: [MapKind; 4] = [MapKind::Cat, MapKind::Elliptic, MapKind::Shift, MapKind::Haar];

/// Choi evolution against the Gram oracle at one step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OraclePoint {
    pub n: usize,
    /// `|exp(-I[n]) - Tr D²|`.
    pub purity_mismatch: f64,
    /// Largest gap between the sorted nonzero spectra of `Ω[n]` and `D`.
    pub spectral_mismatch: f64,
    /// `max(|Tr Ω - 1|, |Tr D - 1|)`.
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
}

/// Evolves the Choi state step by step and compares every step
/// `1..=n_max` with the Gram matrix of the Kraus paths.
pub fn compare_with_oracle(
    u: &QuantizedMap,
    partition: &Partition,
    n_max: usize,
    skip_measurement: bool,
) -> HarnessResult<Vec<OraclePoint>> {
    let mut state = init_choi(u.dim())?;
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        apply_unitary_step(&mut state, u)?;
        if !skip_measurement {
            apply_measurement_step(&mut state, partition)?;
        }
        let d = gram_matrix(u, partition, n)?;
        let choi_spectrum = state.eigenvalues();
        out.push(OraclePoint {
            n,
            purity_mismatch: ((-linear_entropy(&state)).exp() - purity_from_gram(&d)).abs(),
            spectral_mismatch: nonzero_spectrum_mismatch(&choi_spectrum, &d.eigenvalues(), ZERO_CUT),
            trace_drift: (state.trace() - 1.0).norm().max((d.trace() - 1.0).norm()),
            min_eigenvalue: choi_spectrum.last().copied().unwrap_or(0.0),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub max_spectral_mismatch: f64,
    pub trace_drift: f64,
    pub purity_mismatch: f64,
    pub suite: Suite,
    pub fault: Option<Fault>,
    pub checks: Vec<InvariantCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn equal(dim: usize, k: usize) -> HarnessResult<Partition> {
    Ok(build_partition(dim, &PartitionSpec::Equal(k))?)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    // NaN propagates so that a broken value cannot hide behind `max`.
    values
        .into_iter()
        .fold(0.0, |acc: f64, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) })
}

/// Deterministic non-Hermitian test matrix.
fn probe_matrix(dim: usize) -> Array2<C64> {
    Array2::from_shape_fn((dim, dim), |(i, j)| {
        let t = (i * 7 + j * 3) as f64;
        C64::new(t.sin(), (0.5 * t + j as f64).cos())
    })
}

pub fn run_verify(suite: Suite, fault: Option<Fault>) -> HarnessResult<VerifyReport> {
    let skip_measurement = fault == Some(Fault::SkipMeasurement);
    let full = suite == Suite::Full;
    let mut checks = Vec::new();

    let cat = classify_automorphism(CAT_AUTOMORPHISM)?;
    checks.push(InvariantCheck::at_most(
        "ks_entropy_cat",
        (cat.ks_entropy - (3.0 + 2.0 * 2f64.sqrt()).ln()).abs(),
        EXACT_TOL,
    ));

    let mut h_err: f64 = 0.0;
    for dim in [16, 64] {
        for k in [1, 2, 4, 8, 16] {
            h_err = h_err.max((equal(dim, k)?.h_meas() - (k as f64).ln()).abs());
        }
    }
    checks.push(InvariantCheck::at_most("h_meas_equal", h_err, EXACT_TOL));
    let sizes = build_partition(16, &PartitionSpec::Sizes(vec![2, 2, 4, 8]))?;
    checks.push(InvariantCheck::at_most(
        "h_meas_sizes",
        (sizes.h_meas() + (88.0f64 / 256.0).ln()).abs(),
        EXACT_TOL,
    ));

    let unit_dims: &[usize] = if full { &[4, 8, 16, 32, 64] } else { &[4, 8, 16, 32] };
    let mut unit_err: f64 = 0.0;
    let mut structured_err: f64 = 0.0;
    let mut shift_period: f64 = 0.0;
    for &dim in unit_dims {
        for kind in ALL_MAPS {
            let u = build_unitary(kind, dim, 0)?;
            for r in [-4i64, -3, -2, -1, 1, 2, 3, 4] {
                unit_err = unit_err.max(linalg::unitarity_deviation(u.power(r).view()));
            }
            if u.is_structured() {
                let x = probe_matrix(dim);
                let dense = u.to_dense();
                for s in [-2i64, -1, 1, 3] {
                    structured_err = structured_err.max(linalg::max_abs_difference(
                        u.mul_right(s, x.view()).view(),
                        dense.mul_right(s, x.view()).view(),
                    ));
                }
            }
        }
        let shift = build_unitary(MapKind::Shift, dim, 0)?;
        shift_period = shift_period
            .max(linalg::max_deviation_from_identity(shift.power(dim as i64).view()));
    }
    checks.push(InvariantCheck::at_most("unitarity_powers", unit_err, UNITARY_POWER_TOL));
    checks.push(InvariantCheck::at_most("structured_vs_dense", structured_err, STRUCTURED_TOL));
    checks.push(InvariantCheck::at_most("shift_period", shift_period, EXACT_TOL));

    let oracle_dims: &[usize] = if full { &[4, 8, 16] } else { &[4, 8] };
    let mut points = Vec::new();
    for &dim in oracle_dims {
        for kind in ALL_MAPS {
            let u = build_unitary(kind, dim, 0)?;
            for k in [2, 4] {
                points.extend(compare_with_oracle(&u, &equal(dim, k)?, 3, skip_measurement)?);
            }
        }
    }
    let purity_mismatch = max_of(points.iter().map(|p| p.purity_mismatch));
    let max_spectral_mismatch = max_of(points.iter().map(|p| p.spectral_mismatch));
    let oracle_drift = max_of(points.iter().map(|p| p.trace_drift));
    let min_eig = points.iter().map(|p| p.min_eigenvalue).fold(0.0, f64::min);
    checks.push(InvariantCheck::at_most("oracle_purity", purity_mismatch, PURITY_TOL));
    checks.push(InvariantCheck::at_most("oracle_spectrum", max_spectral_mismatch, SPECTRUM_TOL));
    checks.push(InvariantCheck::at_most("choi_positivity", -min_eig, POSITIVITY_TOL));

    let options = EvolutionOptions {
        skip_measurement,
        ..EvolutionOptions::default()
    };
    let (entropy_dims, steps): (&[usize], usize) = if full { (&[16, 32, 64], 14) } else { (&[16, 32], 10) };
    let mut bound_violations = 0;
    let mut monotone_violations = 0;
    let mut series_drift: f64 = 0.0;
    for &dim in entropy_dims {
        for kind in ALL_MAPS {
            let u = build_unitary(kind, dim, 0)?;
            for k in [4, 8] {
                let mut state = init_choi(dim)?;
                let series = evolve_series(&mut state, &u, &equal(dim, k)?, steps, options)?;
                bound_violations += series.bound_violations.len();
                monotone_violations += series.monotonicity_violations.len();
                series_drift = series_drift.max(series.max_trace_drift);
            }
        }
    }
    let trace_drift = max_of([oracle_drift, series_drift]);
    checks.push(InvariantCheck::count("entropy_bound", bound_violations));
    checks.push(InvariantCheck::count("entropy_monotone", monotone_violations));
    checks.push(InvariantCheck::at_most("trace_drift", trace_drift, TRACE_TOL));

    let u = build_unitary(MapKind::Cat, 64, 0)?;
    let mut moment_err: f64 = 0.0;
    let mut sum_err: f64 = 0.0;
    for k in [2, 4, 8] {
        let p = equal(64, k)?;
        let target = (1.0 / k as f64) * (1.0 - 1.0 / k as f64);
        for m in 1..=4 {
            for j in 0..k {
                let s = f_variable_stats(&u, &p, m, j, FVariant::Q, Centering::BlockCount)?;
                moment_err = moment_err.max((s.second_moment - target).abs());
            }
            let total: C64 = (0..k)
                .map(|block| {
                    correlation_value(&u, &p, &[Factor { power: m, block }], Centering::BlockCount)
                        .map(|s| s.value)
                })
                .sum::<torus_entropy::Result<C64>>()?;
            sum_err = sum_err.max(total.norm());
        }
    }
    checks.push(InvariantCheck::at_most("q_second_moment", moment_err, EXACT_TOL));
    checks.push(InvariantCheck::at_most("c1_block_sum", sum_err, EXACT_TOL));

    let sampling = SamplingConfig {
        n_max: if full { 12 } else { 6 },
        samples_per_n: 8,
        r_max: 3,
        seed: 0,
        centering: Centering::BlockCount,
    };
    let mut max_abs: f64 = 0.0;
    for kind in ALL_MAPS {
        let u = build_unitary(kind, 32, 0)?;
        let samples = sample_correlations(&u, &equal(32, 4)?, &sampling)?;
        max_abs = max_abs.max(max_of(samples.iter().map(|s| s.abs_value())));
    }
    checks.push(InvariantCheck::at_most("abs_c_at_most_one", max_abs, 1.0 + EXACT_TOL));

    Ok(VerifyReport {
        max_spectral_mismatch,
        trace_drift,
        purity_mismatch,
        suite,
        fault,
        checks,
    })
}
