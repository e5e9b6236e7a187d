//! Evolution of the system+ancilla state under alternating unitary and
//! measurement steps, and the linear entropy it produces.
//!
//! The state `Ω = [P U ⊗ 1]^n |Ψ><Ψ|` is stored as `N²` blocks indexed by the
//! ancilla pair `(α, β)`; block `(α, β)` holds the `N x N` system matrix
//! `Ω_{(·,α),(·,β)}`. The unitary step conjugates every block by `U`, the
//! measurement step masks every block, and neither touches the ancilla.

use ndarray::{Array2, Array4, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::Partition;
use crate::torus_maps::{MapKind, QuantizedMap};
use crate::C64;

/// Largest `N` accepted for explicit state evolution (`N⁴` complex entries).
pub const MAX_CHOI_DIM: usize = 64;
/// Trace drift that aborts an evolution run.
pub const TRACE_ABORT_TOL: f64 = 1e-8;
/// Slack allowed on the entropy bound and on monotonicity.
pub const ENTROPY_SLACK: f64 = 1e-9;
/// Points per sliding least-squares window in [`EntropySeries`].
pub const SLOPE_WINDOW: usize = 3;

#[derive(Debug, Clone)]
pub struct ChoiState {
    dim: usize,
    /// Indexed `[α, β, a, b]`.
    blocks: Array4<C64>,
    steps: usize,
}

/// The maximally entangled state `N^{-1/2} Σ_l |l> ⊗ |l>` as a density matrix.
pub fn init_choi(dim: usize) -> Result<ChoiState> {
    check_dim(dim)?;
    let mut blocks = Array4::zeros((dim, dim, dim, dim));
    let value = C64::new(1.0 / dim as f64, 0.0);
    for alpha in 0..dim {
        for beta in 0..dim {
            blocks[[alpha, beta, alpha, beta]] = value;
        }
    }
    Ok(ChoiState {
        dim,
        blocks,
        steps: 0,
    })
}

/// `(1 ⊗ V)|Ψ>`: the maximally entangled state written in the ancilla basis
/// `{V|l>}`.
pub fn init_choi_rotated(v: ArrayView2<'_, C64>) -> Result<ChoiState> {
    let dim = v.nrows();
    check_dim(dim)?;
    if v.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.ncols(),
        });
    }
    let scale = 1.0 / dim as f64;
    let blocks = Array4::from_shape_fn((dim, dim, dim, dim), |(alpha, beta, a, b)| {
        v[[alpha, a]] * v[[beta, b]].conj() * scale
    });
    Ok(ChoiState {
        dim,
        blocks,
        steps: 0,
    })
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    if dim > MAX_CHOI_DIM {
        return Err(Error::CapExceeded {
            what: "N for state evolution",
            requested: dim,
            cap: MAX_CHOI_DIM,
        });
    }
    Ok(())
}

impl ChoiState {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    /// `Ω_{(a,α),(b,β)}`.
    pub fn entry(&self, a: usize, alpha: usize, b: usize, beta: usize) -> C64 {
        self.blocks[[alpha, beta, a, b]]
    }

    fn flat(&self) -> &[C64] {
        self.blocks.as_slice().expect("standard layout")
    }

    fn flat_mut(&mut self) -> &mut [C64] {
        self.blocks.as_slice_mut().expect("standard layout")
    }

    pub fn trace(&self) -> C64 {
        let mut acc = C64::default();
        for alpha in 0..self.dim {
            for a in 0..self.dim {
                acc += self.blocks[[alpha, alpha, a, a]];
            }
        }
        acc
    }

    /// `Tr Ω²`, the squared Frobenius norm of the Hermitian state.
    pub fn purity(&self) -> f64 {
        linalg::frobenius_norm_sqr(self.flat())
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for alpha in 0..n {
            for beta in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let x = self.blocks[[alpha, beta, a, b]];
                        let y = self.blocks[[beta, alpha, b, a]].conj();
                        worst = worst.max((x - y).norm());
                    }
                }
            }
        }
        worst
    }

    /// `Ω <- (Ω + Ω^dag)/2`.
    pub fn resymmetrize(&mut self) {
        let n = self.dim;
        for alpha in 0..n {
            for beta in alpha..n {
                for a in 0..n {
                    for b in 0..n {
                        if alpha == beta && b < a {
                            continue;
                        }
                        let x = self.blocks[[alpha, beta, a, b]];
                        let y = self.blocks[[beta, alpha, b, a]];
                        let avg = (x + y.conj()) * 0.5;
                        self.blocks[[alpha, beta, a, b]] = avg;
                        self.blocks[[beta, alpha, b, a]] = avg.conj();
                    }
                }
            }
        }
    }

    /// Dense `N² x N²` matrix with row index `a·N + α`.
    pub fn to_matrix(&self) -> Array2<C64> {
        let n = self.dim;
        Array2::from_shape_fn((n * n, n * n), |(row, col)| {
            let (a, alpha) = (row / n, row % n);
            let (b, beta) = (col / n, col % n);
            self.blocks[[alpha, beta, a, b]]
        })
    }

    /// `Tr_ancilla Ω`.
    pub fn reduced_system(&self) -> Array2<C64> {
        let n = self.dim;
        let mut out = Array2::zeros((n, n));
        for alpha in 0..n {
            out += &self.blocks.slice(ndarray::s![alpha, alpha, .., ..]);
        }
        out
    }

    /// `Tr_system Ω`.
    pub fn reduced_ancilla(&self) -> Array2<C64> {
        let n = self.dim;
        Array2::from_shape_fn((n, n), |(alpha, beta)| {
            (0..n).map(|a| self.blocks[[alpha, beta, a, a]]).sum()
        })
    }

    /// Smallest eigenvalue of the dense state. `O(N⁶)`; small `N` only.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(self.to_matrix().view())
            .last()
            .copied()
            .unwrap_or(0.0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(self.to_matrix().view())
    }
}

/// `Ω <- (U ⊗ 1) Ω (U^dag ⊗ 1)`.
pub fn apply_unitary_step(state: &mut ChoiState, u: &QuantizedMap) -> Result<()> {
    if u.dim() != state.dim {
        return Err(Error::DimensionMismatch {
            expected: state.dim,
            found: u.dim(),
        });
    }
    let n = state.dim;
    if u.is_structured() {
        // Right multiplication batches over all N³ rows; the left factor
        // goes through a per-block adjoint.
        let data = state.flat_mut();
        u.mul_right_rows(-1, data);
        data.par_chunks_mut(n * n)
            .for_each(|block| linalg::adjoint_in_place(block, n));
        u.mul_right_rows(-1, data);
        data.par_chunks_mut(n * n)
            .for_each(|block| linalg::adjoint_in_place(block, n));
    } else {
        let m = u.matrix().to_owned();
        let m_adj = linalg::adjoint(m.view());
        state.flat_mut().par_chunks_mut(n * n).for_each(|block| {
            let x = ArrayView2::from_shape((n, n), &*block).expect("block shape");
            let y = m.dot(&x).dot(&m_adj);
            block.copy_from_slice(y.as_slice().expect("standard layout"));
        });
    }
    Ok(())
}

/// `Ω <- Σ_k (P_k ⊗ 1) Ω (P_k ⊗ 1)`: zeroes the system entries that couple
/// different blocks.
pub fn apply_measurement_step(state: &mut ChoiState, partition: &Partition) -> Result<()> {
    if partition.dim() != state.dim {
        return Err(Error::DimensionMismatch {
            expected: state.dim,
            found: partition.dim(),
        });
    }
    let n = state.dim;
    state.flat_mut().par_chunks_mut(n * n).for_each(|block| {
        for (idx, z) in block.iter_mut().enumerate() {
            if partition.block_of(idx / n) != partition.block_of(idx % n) {
                *z = C64::default();
            }
        }
    });
    Ok(())
}

/// `I = -ln Tr Ω²`.
pub fn linear_entropy(state: &ChoiState) -> f64 {
    0.0 - state.purity().ln()
}

/// One point of an [`EntropySeries`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyPoint {
    pub n: usize,
    /// Linear entropy in nats.
    pub entropy: f64,
    /// `n ln K`.
    pub bound_lin: f64,
    /// `2 ln N`.
    pub bound_sat: f64,
    /// Least-squares slope over the last [`SLOPE_WINDOW`] points.
    pub slope_window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySeries {
    pub dim: usize,
    pub blocks: usize,
    pub map_kind: MapKind,
    pub partition: String,
    pub h_meas: f64,
    pub points: Vec<EntropyPoint>,
    /// Steps `n` where `I[n] < I[n-1] - slack`.
    pub monotonicity_violations: Vec<usize>,
    /// Steps `n` where `I[n]` exceeds `min(n ln K, 2 ln N) + slack`.
    pub bound_violations: Vec<usize>,
    pub max_trace_drift: f64,
}

impl EntropySeries {
    pub fn entropies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.entropy).collect()
    }

    /// Least-squares slope of `I[n]` over `first..=last`.
    pub fn slope(&self, first: usize, last: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.n >= first && p.n <= last)
            .map(|p| (p.n as f64, p.entropy))
            .collect();
        linalg::least_squares_line(&pts).map(|(slope, _, _)| slope)
    }

    pub fn final_entropy(&self) -> f64 {
        self.points.last().map(|p| p.entropy).unwrap_or(0.0)
    }
}

/// Knobs for [`entropy_series_with`]. The defaults are the physical
/// evolution; `skip_measurement` exists for fault-injection self tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvolutionOptions {
    pub resymmetrize_every: usize,
    pub skip_measurement: bool,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        EvolutionOptions {
            resymmetrize_every: 4,
            skip_measurement: false,
        }
    }
}

pub fn entropy_series(u: &QuantizedMap, partition: &Partition, n_max: usize) -> Result<EntropySeries> {
    entropy_series_with(u, partition, n_max, EvolutionOptions::default())
}

/// Runs `n_max` measured steps from [`init_choi`], recording `I[n]` after
/// each measurement.
pub fn entropy_series_with(
    u: &QuantizedMap,
    partition: &Partition,
    n_max: usize,
    options: EvolutionOptions,
) -> Result<EntropySeries> {
    let mut state = init_choi(u.dim())?;
    evolve_series(&mut state, u, partition, n_max, options)
}

/// Like [`entropy_series_with`] but from a caller supplied initial state.
pub fn evolve_series(
    state: &mut ChoiState,
    u: &QuantizedMap,
    partition: &Partition,
    n_max: usize,
    options: EvolutionOptions,
) -> Result<EntropySeries> {
    if n_max == 0 {
        return Err(Error::InvariantViolation("n_max must be at least 1".into()));
    }
    let dim = u.dim();
    let blocks = partition.block_count();
    let ln_k = (blocks as f64).ln();
    let sat = 2.0 * (dim as f64).ln();
    let mut points = vec![EntropyPoint {
        n: 0,
        entropy: linear_entropy(state),
        bound_lin: 0.0,
        bound_sat: sat,
        slope_window: None,
    }];
    let mut max_trace_drift: f64 = (state.trace() - 1.0).norm();
    for n in 1..=n_max {
        apply_unitary_step(state, u)?;
        if !options.skip_measurement {
            apply_measurement_step(state, partition)?;
        }
        state.steps += 1;
        if options.resymmetrize_every > 0 && n % options.resymmetrize_every == 0 {
            state.resymmetrize();
        }
        let drift = (state.trace() - 1.0).norm();
        max_trace_drift = max_trace_drift.max(drift);
        if drift > TRACE_ABORT_TOL {
            return Err(Error::InvariantViolation(format!(
                "trace drift {drift:e} at step {n} (N = {dim}, {})",
                u.kind()
            )));
        }
        points.push(EntropyPoint {
            n,
            entropy: linear_entropy(state),
            bound_lin: n as f64 * ln_k,
            bound_sat: sat,
            slope_window: None,
        });
        if points.len() >= SLOPE_WINDOW {
            let window: Vec<(f64, f64)> = points[points.len() - SLOPE_WINDOW..]
                .iter()
                .map(|p| (p.n as f64, p.entropy))
                .collect();
            points.last_mut().expect("nonempty").slope_window =
                linalg::least_squares_line(&window).map(|(s, _, _)| s);
        }
    }
    let monotonicity_violations = points
        .windows(2)
        .filter(|w| w[1].entropy < w[0].entropy - ENTROPY_SLACK)
        .map(|w| w[1].n)
        .collect();
    let bound_violations = points
        .iter()
        .filter(|p| p.entropy > p.bound_lin.min(p.bound_sat) + ENTROPY_SLACK)
        .map(|p| p.n)
        .collect();
    Ok(EntropySeries {
        dim,
        blocks,
        map_kind: u.kind(),
        partition: partition_label(partition),
        h_meas: partition.h_meas(),
        points,
        monotonicity_violations,
        bound_violations,
        max_trace_drift,
    })
}

fn partition_label(partition: &Partition) -> String {
    if partition.is_equal() {
        format!("equal:{}", partition.block_count())
    } else {
        let sizes: Vec<String> = partition.block_sizes().iter().map(|d| d.to_string()).collect();
        format!("sizes:{}", sizes.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{build_partition, PartitionSpec};
    use crate::torus_maps::build_unitary;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_two_level() {
        let s = init_choi(2).unwrap();
        let m = s.to_matrix();
        for (row, col) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_eq!(m[[row, col]], C64::new(0.5, 0.0));
        }
        assert_eq!(m.iter().filter(|z| z.norm() != 0.0).count(), 4);
    }

    #[test]
    fn init_is_pure_and_maximally_entangled() {
        for n in [2, 5, 8] {
            let s = init_choi(n).unwrap();
            assert_abs_diff_eq!(s.trace().re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(s.purity(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(linear_entropy(&s), 0.0, epsilon = 1e-14);
            let reduced = s.reduced_system();
            let expected = linalg::identity(n).mapv(|z| z / n as f64);
            assert!(linalg::max_abs_difference(reduced.view(), expected.view()) < 1e-15);
        }
    }

    #[test]
    fn rejects_dimension_above_ceiling() {
        assert!(matches!(init_choi(65), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn identity_step_and_purity_preservation() {
        let mut s = init_choi(6).unwrap();
        let before = s.clone();
        apply_unitary_step(&mut s, &QuantizedMap::identity(6).unwrap()).unwrap();
        assert_eq!(s.blocks, before.blocks);
        let cat = build_unitary(MapKind::Cat, 6, 0).unwrap();
        let p = build_partition(6, &PartitionSpec::Equal(2)).unwrap();
        apply_measurement_step(&mut s, &p).unwrap();
        let purity = s.purity();
        apply_unitary_step(&mut s, &cat).unwrap();
        assert_abs_diff_eq!(s.purity(), purity, epsilon = 1e-10);
    }

    #[test]
    fn shift_keeps_state_pure_and_ancilla_fixed() {
        let mut s = init_choi(4).unwrap();
        let ancilla = s.reduced_ancilla();
        apply_unitary_step(&mut s, &build_unitary(MapKind::Shift, 4, 0).unwrap()).unwrap();
        assert_abs_diff_eq!(s.purity(), 1.0, epsilon = 1e-14);
        assert!(linalg::max_abs_difference(s.reduced_ancilla().view(), ancilla.view()) < 1e-15);
    }

    #[test]
    fn measurement_on_initial_state_costs_ln_k() {
        for (n, k) in [(8, 2), (8, 4), (12, 3)] {
            let mut s = init_choi(n).unwrap();
            let p = build_partition(n, &PartitionSpec::Equal(k)).unwrap();
            apply_measurement_step(&mut s, &p).unwrap();
            assert_abs_diff_eq!(s.purity(), 1.0 / k as f64, epsilon = 1e-14);
            assert_abs_diff_eq!(linear_entropy(&s), (k as f64).ln(), epsilon = 1e-13);
            let once = s.clone();
            apply_measurement_step(&mut s, &p).unwrap();
            assert_eq!(s.blocks, once.blocks);
        }
        let mut s = init_choi(5).unwrap();
        let before = s.clone();
        apply_measurement_step(&mut s, &build_partition(5, &PartitionSpec::Equal(1)).unwrap())
            .unwrap();
        assert_eq!(s.blocks, before.blocks);
    }

    #[test]
    fn structured_and_dense_steps_agree() {
        let cat = build_unitary(MapKind::Cat, 8, 0).unwrap();
        let dense = cat.to_dense();
        let p = build_partition(8, &PartitionSpec::Equal(4)).unwrap();
        let mut a = init_choi(8).unwrap();
        let mut b = init_choi(8).unwrap();
        for _ in 0..3 {
            apply_unitary_step(&mut a, &cat).unwrap();
            apply_unitary_step(&mut b, &dense).unwrap();
            apply_measurement_step(&mut a, &p).unwrap();
            apply_measurement_step(&mut b, &p).unwrap();
        }
        let diff = a
            .flat()
            .iter()
            .zip(b.flat())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13, "{diff}");
    }

    #[test]
    fn single_block_produces_no_entropy() {
        let cat = build_unitary(MapKind::Cat, 8, 0).unwrap();
        let p = build_partition(8, &PartitionSpec::Equal(1)).unwrap();
        let series = entropy_series(&cat, &p, 5).unwrap();
        assert!(series.points.iter().all(|pt| pt.entropy.abs() < 1e-12));
    }

    #[test]
    fn first_measured_step_of_cat_is_within_bounds() {
        let cat = build_unitary(MapKind::Cat, 16, 0).unwrap();
        let p = build_partition(16, &PartitionSpec::Equal(4)).unwrap();
        let series = entropy_series(&cat, &p, 1).unwrap();
        let i1 = series.points[1].entropy;
        assert!(i1 > 0.0 && i1 <= 4f64.ln() + ENTROPY_SLACK);
        assert!(series.bound_violations.is_empty());
    }

    #[test]
    fn state_invariants_hold_after_evolution() {
        let cat = build_unitary(MapKind::Cat, 8, 0).unwrap();
        let p = build_partition(8, &PartitionSpec::Sizes(vec![1, 3, 4])).unwrap();
        let mut s = init_choi(8).unwrap();
        for _ in 0..5 {
            apply_unitary_step(&mut s, &cat).unwrap();
            apply_measurement_step(&mut s, &p).unwrap();
        }
        assert!(s.hermiticity_deviation() < 1e-12);
        assert_abs_diff_eq!(s.trace().re, 1.0, epsilon = 1e-10);
        assert!(s.min_eigenvalue() >= -1e-8);
        let purity = s.purity();
        assert!(purity > 0.0 && purity <= 1.0);
    }

    #[test]
    fn slope_window_follows_last_three_points() {
        let cat = build_unitary(MapKind::Cat, 16, 0).unwrap();
        let p = build_partition(16, &PartitionSpec::Equal(4)).unwrap();
        let s = entropy_series(&cat, &p, 4).unwrap();
        assert!(s.points[1].slope_window.is_none());
        let e = s.entropies();
        let expected = (e[4] - e[2]) / 2.0;
        assert_abs_diff_eq!(s.points[4].slope_window.unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(s.slope(2, 4).unwrap(), expected, epsilon = 1e-12);
    }
}
