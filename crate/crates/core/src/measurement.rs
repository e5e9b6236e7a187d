//! Diagonal-block projective measurements.
//!
//! A [`Partition`] splits the basis `0..N` into `K` consecutive blocks. The
//! projector `P_j` onto block `j` is never stored; products with it are row
//! or column masks. Block indices are 0-based in the API and 1-based in
//! anything written to disk.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus_maps::QuantizedMap;
use crate::C64;

/// How a partition is requested: `equal:K` or `sizes:d1,d2,...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PartitionSpec {
    Equal(usize),
    Sizes(Vec<usize>),
}

impl FromStr for PartitionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidPartition(format!("'{s}': {why}"));
        let (head, tail) = s
            .split_once(':')
            .ok_or_else(|| bad("expected 'equal:K' or 'sizes:d1,d2,...'"))?;
        match head.trim() {
            "equal" => {
                let k = tail
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| bad("block count is not a positive integer"))?;
                Ok(PartitionSpec::Equal(k))
            }
            "sizes" => {
                let sizes = tail
                    .split(',')
                    .map(|d| d.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("block sizes must be positive integers"))?;
                Ok(PartitionSpec::Sizes(sizes))
            }
            _ => Err(bad("unknown partition kind")),
        }
    }
}

impl TryFrom<String> for PartitionSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PartitionSpec> for String {
    fn from(spec: PartitionSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionSpec::Equal(k) => write!(f, "equal:{k}"),
            PartitionSpec::Sizes(sizes) => {
                let parts: Vec<String> = sizes.iter().map(|d| d.to_string()).collect();
                write!(f, "sizes:{}", parts.join(","))
            }
        }
    }
}

/// Which constant is subtracted from `P_j` to form the centered `Q_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// `Q_j = P_j - 1/K`.
    #[default]
    BlockCount,
    /// `Q_j = P_j - d_j/N`, traceless for every partition.
    Traceless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Both,
}

/// Consecutive blocks `(N_{j-1}, N_j]` of the computational basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    dim: usize,
    boundaries: Vec<usize>,
    #[serde(skip)]
    block_of: Vec<usize>,
    h_meas: f64,
}

/// Builds the partition for `spec` on an `N`-dimensional space.
pub fn build_partition(dim: usize, spec: &PartitionSpec) -> Result<Partition> {
    let sizes = match spec {
        PartitionSpec::Equal(0) => {
            return Err(Error::InvalidPartition("block count must be positive".into()))
        }
        PartitionSpec::Equal(k) => {
            if !dim.is_multiple_of(*k) {
                return Err(Error::InvalidPartition(format!(
                    "{k} blocks do not divide N = {dim}"
                )));
            }
            vec![dim / k; *k]
        }
        PartitionSpec::Sizes(sizes) => sizes.clone(),
    };
    Partition::from_sizes(dim, &sizes)
}

impl Partition {
    pub fn from_sizes(dim: usize, sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidPartition("block sizes must be positive".into()));
        }
        let total: usize = sizes.iter().sum();
        if total != dim {
            return Err(Error::InvalidPartition(format!(
                "block sizes sum to {total}, expected N = {dim}"
            )));
        }
        let mut boundaries = Vec::with_capacity(sizes.len() + 1);
        boundaries.push(0);
        let mut block_of = Vec::with_capacity(dim);
        for (j, &d) in sizes.iter().enumerate() {
            boundaries.push(boundaries[j] + d);
            block_of.extend(std::iter::repeat_n(j, d));
        }
        let mut partition = Partition {
            dim,
            boundaries,
            block_of,
            h_meas: 0.0,
        };
        partition.h_meas = measurement_entropy(&partition);
        Ok(partition)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn block_size(&self, j: usize) -> usize {
        self.boundaries[j + 1] - self.boundaries[j]
    }

    /// Basis indices covered by `P_j`.
    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        self.boundaries[j]..self.boundaries[j + 1]
    }

    /// Block containing basis index `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    /// Measurement entropy `h(P)` in nats.
    pub fn h_meas(&self) -> f64 {
        self.h_meas
    }

    pub fn is_equal(&self) -> bool {
        let sizes = self.block_sizes();
        sizes.iter().all(|&d| d == sizes[0])
    }

    fn check_block(&self, j: usize) -> Result<()> {
        if j >= self.block_count() {
            return Err(Error::BlockIndex {
                index: j,
                count: self.block_count(),
            });
        }
        Ok(())
    }

    /// The constant `c_j` in `Q_j = P_j - c_j`.
    pub fn centering_constant(&self, j: usize, centering: Centering) -> f64 {
        match centering {
            Centering::BlockCount => 1.0 / self.block_count() as f64,
            Centering::Traceless => self.block_size(j) as f64 / self.dim as f64,
        }
    }

    /// Zeroes every entry whose row and column lie in different blocks,
    /// i.e. `M -> Σ_j P_j M P_j`.
    pub fn pinch_in_place(&self, mut m: ArrayViewMut2<'_, C64>) {
        for ((a, b), z) in m.indexed_iter_mut() {
            if self.block_of[a] != self.block_of[b] {
                *z = C64::default();
            }
        }
    }

    /// `M <- M Q_j` for an `rows x N` matrix: column mask minus `c_j M`.
    pub fn mul_centered_right(&self, j: usize, centering: Centering, mut m: ArrayViewMut2<'_, C64>) {
        let c = self.centering_constant(j, centering);
        let range = self.range(j);
        for mut row in m.rows_mut() {
            for (col, z) in row.iter_mut().enumerate() {
                let keep = if range.contains(&col) { 1.0 } else { 0.0 };
                *z *= keep - c;
            }
        }
    }

    /// Dense `Q_j`, for tests and small diagnostics only.
    pub fn centered_projector(&self, j: usize, centering: Centering) -> Array2<C64> {
        let c = self.centering_constant(j, centering);
        Array2::from_shape_fn((self.dim, self.dim), |(a, b)| {
            let p = if a == b && self.block_of[a] == j { 1.0 } else { 0.0 };
            let id = if a == b { c } else { 0.0 };
            C64::new(p - id, 0.0)
        })
    }
}

/// `h(P) = -ln Σ_j (Tr P_j)² / N²`.
pub fn measurement_entropy(partition: &Partition) -> f64 {
    let n2 = (partition.dim as f64).powi(2);
    let collision: f64 = partition
        .block_sizes()
        .iter()
        .map(|&d| (d as f64).powi(2) / n2)
        .sum();
    -collision.ln()
}

/// Masks `M` with `P_j` from the left (rows), right (columns) or both.
pub fn apply_projector(
    partition: &Partition,
    j: usize,
    m: ArrayView2<'_, C64>,
    side: Side,
) -> Result<Array2<C64>> {
    partition.check_block(j)?;
    if m.nrows() != partition.dim || m.ncols() != partition.dim {
        return Err(Error::DimensionMismatch {
            expected: partition.dim,
            found: m.nrows().max(m.ncols()),
        });
    }
    let range = partition.range(j);
    let mut out = m.to_owned();
    for ((a, b), z) in out.indexed_iter_mut() {
        let keep = match side {
            Side::Left => range.contains(&a),
            Side::Right => range.contains(&b),
            Side::Both => range.contains(&a) && range.contains(&b),
        };
        if !keep {
            *z = C64::default();
        }
    }
    Ok(out)
}

/// Diagnostics for `Tr P_j / N = 1/K` and `Tr U^n / N = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplifyingReport {
    /// `|Tr P_j / N - 1/K|` per block.
    pub projector_deviation: Vec<f64>,
    /// `(n, |Tr U^n| / N)` for `n = 1..=n_max`.
    pub trace_powers: Vec<(usize, f64)>,
}

pub fn verify_simplifying_conditions(
    u: &QuantizedMap,
    partition: &Partition,
    n_max: usize,
) -> Result<SimplifyingReport> {
    if u.dim() != partition.dim {
        return Err(Error::DimensionMismatch {
            expected: partition.dim,
            found: u.dim(),
        });
    }
    let n = partition.dim as f64;
    let k = partition.block_count() as f64;
    let projector_deviation = partition
        .block_sizes()
        .iter()
        .map(|&d| (d as f64 / n - 1.0 / k).abs())
        .collect();
    let trace_powers = (1..=n_max)
        .map(|p| (p, u.trace_power(p as i64).norm() / n))
        .collect();
    Ok(SimplifyingReport {
        projector_deviation,
        trace_powers,
    })
}
