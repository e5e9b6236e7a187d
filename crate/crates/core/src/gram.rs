//! Brute-force reference: Kraus path operators, the correlation (Gram)
//! matrix of the paths, and explicit path sums.
//!
//! Everything here is exponential in the number of steps and is meant for
//! oracle-sized problems only.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::Partition;
use crate::torus_maps::QuantizedMap;
use crate::C64;

/// Hard cap on the number of Kraus paths `K^n`.
pub const MAX_PATHS: usize = 4096;

/// One measurement history `p = (p_1, …, p_n)` and `K_p = P_{p_n} U ⋯ P_{p_1} U`.
#[derive(Debug, Clone)]
pub struct PathState {
    pub path: Vec<usize>,
    pub operator: Array2<C64>,
}

impl PathState {
    /// `K_{p·k} = P_k U K_p`.
    pub fn extend(&self, u: &QuantizedMap, partition: &Partition, k: usize) -> PathState {
        let mut operator = u.mul_left(1, self.operator.view());
        for (row, mut values) in operator.rows_mut().into_iter().enumerate() {
            if partition.block_of(row) != k {
                values.fill(C64::default());
            }
        }
        let mut path = self.path.clone();
        path.push(k);
        PathState { path, operator }
    }
}

fn path_count(blocks: usize, steps: usize) -> Result<usize> {
    let mut count: usize = 1;
    for _ in 0..steps {
        count = count.saturating_mul(blocks);
        if count > MAX_PATHS {
            return Err(Error::CapExceeded {
                what: "number of Kraus paths K^n",
                requested: count,
                cap: MAX_PATHS,
            });
        }
    }
    Ok(count)
}

fn check_dims(u: &QuantizedMap, partition: &Partition) -> Result<()> {
    if u.dim() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            found: u.dim(),
        });
    }
    Ok(())
}

/// All `K^n` path operators, ordered lexicographically with `p_1` varying
/// fastest: path index `Σ_i p_i K^{i-1}`.
pub fn path_operators(u: &QuantizedMap, partition: &Partition, steps: usize) -> Result<Vec<PathState>> {
    check_dims(u, partition)?;
    let blocks = partition.block_count();
    path_count(blocks, steps)?;
    let mut level = vec![PathState {
        path: Vec::new(),
        operator: linalg::identity(u.dim()),
    }];
    for _ in 0..steps {
        let next: Vec<PathState> = (0..blocks)
            .into_par_iter()
            .flat_map_iter(|k| level.iter().map(move |p| p.extend(u, partition, k)))
            .collect();
        level = next;
    }
    Ok(level)
}

#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub steps: usize,
    pub blocks: usize,
    /// `D[p; q] = (1/N) Tr(K_q^dag K_p)`.
    pub entries: Array2<C64>,
}

impl GramMatrix {
    pub fn trace(&self) -> C64 {
        linalg::trace(self.entries.view())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(self.entries.view())
    }
}

/// `Tr(A^dag B)` without forming the product.
fn trace_inner(a: ArrayView2<'_, C64>, b: ArrayView2<'_, C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn gram_matrix(u: &QuantizedMap, partition: &Partition, steps: usize) -> Result<GramMatrix> {
    let paths = path_operators(u, partition, steps)?;
    let count = paths.len();
    let scale = 1.0 / u.dim() as f64;
    let rows: Vec<Vec<C64>> = (0..count)
        .into_par_iter()
        .map(|p| {
            (0..count)
                .map(|q| trace_inner(paths[q].operator.view(), paths[p].operator.view()) * scale)
                .collect()
        })
        .collect();
    let entries = Array2::from_shape_fn((count, count), |(p, q)| rows[p][q]);
    Ok(GramMatrix {
        steps,
        blocks: partition.block_count(),
        entries,
    })
}

/// `Tr D²`; equals the purity `Tr Ω[n]²` since the nonzero spectra agree.
pub fn purity_from_gram(d: &GramMatrix) -> f64 {
    linalg::frobenius_norm_sqr(d.entries.as_slice().expect("standard layout"))
}

/// Distance of `D` from the maximal-production pattern `δ_pq / K^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxEnprReport {
    pub max_deviation: f64,
    /// `(p, q)` of the worst entry.
    pub location: (usize, usize),
    pub within_tolerance: bool,
}

pub fn check_max_enpr(d: &GramMatrix, tol: f64) -> MaxEnprReport {
    let target = 1.0 / d.entries.nrows() as f64;
    let mut worst = (0.0, (0, 0));
    for ((p, q), z) in d.entries.indexed_iter() {
        let expected = if p == q { target } else { 0.0 };
        let dev = (z - expected).norm();
        if dev > worst.0 {
            worst = (dev, (p, q));
        }
    }
    MaxEnprReport {
        max_deviation: worst.0,
        location: worst.1,
        within_tolerance: worst.0 <= tol,
    }
}

/// Tolerance used to accept `ρ0` as a density matrix.
const DENSITY_TOL: f64 = 1e-10;

/// Explicit path sum `ρ(n) = Σ_p K_p ρ0 K_p^dag`.
pub fn brute_force_state(
    u: &QuantizedMap,
    partition: &Partition,
    steps: usize,
    rho0: ArrayView2<'_, C64>,
) -> Result<Array2<C64>> {
    check_dims(u, partition)?;
    let dim = u.dim();
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rho0.nrows().max(rho0.ncols()),
        });
    }
    let tr = linalg::trace(rho0);
    if (tr - 1.0).norm() > DENSITY_TOL {
        return Err(Error::InvalidDensityMatrix(format!("trace is {tr}")));
    }
    if linalg::max_abs_difference(rho0, linalg::adjoint(rho0).view()) > DENSITY_TOL {
        return Err(Error::InvalidDensityMatrix("not Hermitian".into()));
    }
    let min_eig = linalg::hermitian_eigenvalues(rho0).last().copied().unwrap_or(0.0);
    if min_eig < -DENSITY_TOL {
        return Err(Error::InvalidDensityMatrix(format!(
            "negative eigenvalue {min_eig:e}"
        )));
    }
    let paths = path_operators(u, partition, steps)?;
    let mut rho = Array2::zeros((dim, dim));
    for p in &paths {
        rho += &p.operator.dot(&rho0).dot(&linalg::adjoint(p.operator.view()));
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{build_partition, PartitionSpec};
    use crate::torus_maps::{build_unitary, MapKind};
    use approx::assert_abs_diff_eq;

    fn equal(n: usize, k: usize) -> Partition {
        build_partition(n, &PartitionSpec::Equal(k)).unwrap()
    }

    #[test]
    fn ordering_has_first_step_fastest() {
        let u = build_unitary(MapKind::Cat, 4, 0).unwrap();
        let paths = path_operators(&u, &equal(4, 2), 2).unwrap();
        let labels: Vec<Vec<usize>> = paths.iter().map(|p| p.path.clone()).collect();
        assert_eq!(labels, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn one_step_diagonal_is_one_over_k() {
        let u = build_unitary(MapKind::Cat, 8, 0).unwrap();
        let p = equal(8, 4);
        let d = gram_matrix(&u, &p, 1).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(d.entries[[j, j]].re, 0.25, epsilon = 1e-14);
        }
        // K_l^dag K_j = U^dag P_l P_j U vanishes for l != j
        for j in 0..4 {
            for l in 0..4 {
                if j != l {
                    assert_eq!(d.entries[[j, l]].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn identity_dynamics_keeps_only_constant_paths() {
        let id = QuantizedMap::identity(8).unwrap();
        let p = build_partition(8, &PartitionSpec::Sizes(vec![3, 5])).unwrap();
        let d = gram_matrix(&id, &p, 2).unwrap();
        // index p1 + 2 p2
        assert_abs_diff_eq!(d.entries[[0, 0]].re, 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.entries[[3, 3]].re, 5.0 / 8.0, epsilon = 1e-15);
        for (idx, z) in d.entries.indexed_iter() {
            if idx != (0, 0) && idx != (3, 3) {
                assert_eq!(z.norm(), 0.0);
            }
        }
        let report = check_max_enpr(&gram_matrix(&id, &equal(8, 2), 2).unwrap(), 1e-3);
        assert_abs_diff_eq!(report.max_deviation, 0.5 - 0.25, epsilon = 1e-15);
        assert!(!report.within_tolerance);
    }

    #[test]
    fn gram_purity_of_ideal_pattern() {
        let scalar = GramMatrix {
            steps: 0,
            blocks: 3,
            entries: Array2::from_elem((1, 1), C64::new(1.0, 0.0)),
        };
        assert_eq!(purity_from_gram(&scalar), 1.0);
        let k: usize = 3;
        let n = 2;
        let size = k.pow(n);
        let ideal = GramMatrix {
            steps: n as usize,
            blocks: k,
            entries: linalg::identity(size).mapv(|z| z / size as f64),
        };
        assert_abs_diff_eq!(-purity_from_gram(&ideal).ln(), n as f64 * (k as f64).ln(), epsilon = 1e-13);
        assert_eq!(check_max_enpr(&ideal, 0.0).max_deviation, 0.0);
    }

    #[test]
    fn trace_is_one_and_cap_enforced() {
        let u = build_unitary(MapKind::Elliptic, 8, 0).unwrap();
        let d = gram_matrix(&u, &equal(8, 2), 3).unwrap();
        assert_abs_diff_eq!(d.trace().re, 1.0, epsilon = 1e-12);
        assert!(matches!(
            gram_matrix(&u, &equal(8, 8), 5),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn brute_force_state_basics() {
        let u = build_unitary(MapKind::Cat, 6, 0).unwrap();
        let rho0 = Array2::from_shape_fn((6, 6), |(a, b)| {
            if a == b {
                C64::new(1.0 / 6.0, 0.0)
            } else if a + 1 == b {
                C64::new(0.02, 0.01)
            } else if b + 1 == a {
                C64::new(0.02, -0.01)
            } else {
                C64::default()
            }
        });
        let same = brute_force_state(&u, &equal(6, 3), 0, rho0.view()).unwrap();
        assert!(linalg::max_abs_difference(same.view(), rho0.view()) == 0.0);

        let one_block = build_partition(6, &PartitionSpec::Equal(1)).unwrap();
        let rho = brute_force_state(&u, &one_block, 3, rho0.view()).unwrap();
        let u3 = u.power(3);
        let expected = u3.dot(&rho0).dot(&linalg::adjoint(u3.view()));
        assert!(linalg::max_abs_difference(rho.view(), expected.view()) < 1e-13);

        let rho = brute_force_state(&u, &equal(6, 3), 3, rho0.view()).unwrap();
        assert_abs_diff_eq!(linalg::trace(rho.view()).re, 1.0, epsilon = 1e-10);

        let bad = rho0.mapv(|z| z * 2.0);
        assert!(matches!(
            brute_force_state(&u, &equal(6, 3), 1, bad.view()),
            Err(Error::InvalidDensityMatrix(_))
        ));
    }
}
