//! Classical torus automorphisms and their quantized unitaries.
//!
//! The quantized maps are stored densely, but every map also carries a
//! structured action used by the hot loops: the cat and elliptic maps factor
//! as `diag · Fourier · diag` and are applied with FFTs, the shift is a
//! cyclic rotation, and only Haar (and user supplied) matrices fall back to
//! dense products.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};

use faer::Mat;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

/// Maximum tolerated `max |U^dag U - 1|` for a constructed map.
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Hyperbolic,
    Elliptic,
    Parabolic,
}

/// A linear automorphism `x -> T x mod 1` of the two-torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusAutomorphism {
    pub matrix: [[i64; 2]; 2],
    pub classification: Classification,
    /// Kolmogorov-Sinai entropy in nats per step.
    pub ks_entropy: f64,
}

impl TorusAutomorphism {
    pub fn trace(&self) -> i64 {
        self.matrix[0][0] + self.matrix[1][1]
    }
}

/// Classifies an integer matrix with unit determinant by its trace and
/// computes the KS entropy `ln λ₊` of the hyperbolic case.
pub fn classify_automorphism(t: [[i64; 2]; 2]) -> Result<TorusAutomorphism> {
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    if det != 1 {
        return Err(Error::NotUnimodular(det));
    }
    let tr = (t[0][0] + t[1][1]).abs();
    let (classification, ks_entropy) = match tr {
        0 | 1 => (Classification::Elliptic, 0.0),
        2 => (Classification::Parabolic, 0.0),
        _ => {
            let tr = tr as f64;
            let lambda = (tr + (tr * tr - 4.0).sqrt()) / 2.0;
            (Classification::Hyperbolic, lambda.ln())
        }
    };
    Ok(TorusAutomorphism {
        matrix: t,
        classification,
        ks_entropy,
    })
}

/// The hyperbolic automorphism used for the chaotic runs.
pub const CAT_AUTOMORPHISM: [[i64; 2]; 2] = [[2, 7], [1, 4]];
/// The elliptic quarter rotation.
pub const ELLIPTIC_AUTOMORPHISM: [[i64; 2]; 2] = [[0, 1], [-1, 0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Cat,
    Elliptic,
    Shift,
    Haar,
    /// A caller supplied unitary (identity, basis relabelings, tests).
    Custom,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Cat => "cat",
            MapKind::Elliptic => "elliptic",
            MapKind::Shift => "shift",
            MapKind::Haar => "haar",
            MapKind::Custom => "custom",
        }
    }

    /// The classical automorphism behind the map, where there is one.
    pub fn automorphism(self) -> Option<TorusAutomorphism> {
        match self {
            MapKind::Cat => classify_automorphism(CAT_AUTOMORPHISM).ok(),
            MapKind::Elliptic => classify_automorphism(ELLIPTIC_AUTOMORPHISM).ok(),
            _ => None,
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MapKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cat" => Ok(MapKind::Cat),
            "elliptic" => Ok(MapKind::Elliptic),
            "shift" => Ok(MapKind::Shift),
            "haar" => Ok(MapKind::Haar),
            other => Err(format!(
                "unknown map kind '{other}' (expected cat, elliptic, shift or haar)"
            )),
        }
    }
}

/// `exp(2πi e / N)` with the exponent reduced modulo `N` first.
fn root_of_unity(exponent: i64, dim: usize) -> C64 {
    let n = dim as i64;
    let e = exponent.rem_euclid(n) as f64;
    C64::from_polar(1.0, 2.0 * PI * e / dim as f64)
}

/// Cat map entries `N^{-1/2} exp{-(2πi/N)(r² + 2k² - kr)}`, `r, k = 1..N`.
fn cat_matrix(dim: usize) -> Array2<C64> {
    let scale = 1.0 / (dim as f64).sqrt();
    Array2::from_shape_fn((dim, dim), |(i, j)| {
        let (r, k) = (i as i64 + 1, j as i64 + 1);
        root_of_unity(-(r * r + 2 * k * k - k * r), dim) * scale
    })
}

/// Elliptic map entries `(i/N)^{1/2} exp{(2πi/N) r k}`, `r, k = 1..N`.
fn elliptic_matrix(dim: usize) -> Array2<C64> {
    let prefactor = (C64::i() / dim as f64).sqrt();
    Array2::from_shape_fn((dim, dim), |(i, j)| {
        let (r, k) = (i as i64 + 1, j as i64 + 1);
        root_of_unity(r * k, dim) * prefactor
    })
}

/// `U|r> = |r + 1 mod N>`.
fn shift_matrix(dim: usize) -> Array2<C64> {
    let mut u = Array2::zeros((dim, dim));
    for col in 0..dim {
        u[[(col + 1) % dim, col]] = C64::new(1.0, 0.0);
    }
    u
}

/// Ginibre matrix orthonormalized by QR, with the phases of `diag(R)`
/// moved into `Q` so that the result is Haar distributed.
fn haar_matrix(dim: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // row-major draw order, so the matrix does not depend on storage layout
    let draws: Vec<C64> = (0..dim * dim)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    let ginibre = Mat::from_fn(dim, dim, |i, j| draws[i * dim + j]);
    let qr = ginibre.qr();
    let (q, r) = (qr.compute_Q(), qr.R());
    let phases: Vec<C64> = (0..dim)
        .map(|j| {
            let d = r[(j, j)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    Array2::from_shape_fn((dim, dim), |(i, j)| q[(i, j)] * phases[j])
}

/// `U_ij = out_i ω^{ij} in_j` with `ω = exp(2πi/N)`, 0-based indices.
struct ChirpFactors {
    out: Vec<C64>,
    inn: Vec<C64>,
    /// Unnormalized `Σ_k exp(+2πi jk/N) x_k`.
    inverse: Arc<dyn Fft<f64>>,
    /// Unnormalized `Σ_k exp(-2πi jk/N) x_k`.
    forward: Arc<dyn Fft<f64>>,
}

impl ChirpFactors {
    fn new(out: Vec<C64>, inn: Vec<C64>) -> Self {
        let dim = out.len();
        let mut planner = FftPlanner::new();
        ChirpFactors {
            out,
            inn,
            inverse: planner.plan_fft_inverse(dim),
            forward: planner.plan_fft_forward(dim),
        }
    }

    /// Cat factors. With `r = i+1`, `k = j+1` the phase exponent
    /// `-(r² + 2k² - kr)` splits as `ij + [i + 1 - (i+1)²] + [j - 2(j+1)²]`.
    fn cat(dim: usize) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let out = (0..dim as i64)
            .map(|i| root_of_unity(i + 1 - (i + 1) * (i + 1), dim) * scale)
            .collect();
        let inn = (0..dim as i64)
            .map(|j| root_of_unity(j - 2 * (j + 1) * (j + 1), dim))
            .collect();
        ChirpFactors::new(out, inn)
    }

    /// Elliptic factors: `rk = ij + (i + 1) + j`.
    fn elliptic(dim: usize) -> Self {
        let prefactor = (C64::i() / dim as f64).sqrt();
        let out = (0..dim as i64)
            .map(|i| root_of_unity(i + 1, dim) * prefactor)
            .collect();
        let inn = (0..dim as i64).map(|j| root_of_unity(j, dim)).collect();
        ChirpFactors::new(out, inn)
    }

    /// Row-wise `X <- X U`: `(XU)_ij = in_j Σ_k ω^{kj} out_k X_ik`.
    fn mul_right(&self, rows: &mut [C64], scratch: &mut Vec<C64>) {
        let dim = self.out.len();
        for row in rows.chunks_exact_mut(dim) {
            for (x, o) in row.iter_mut().zip(&self.out) {
                *x *= o;
            }
        }
        scratch.resize(self.inverse.get_inplace_scratch_len(), C64::default());
        self.inverse.process_with_scratch(rows, scratch);
        for row in rows.chunks_exact_mut(dim) {
            for (x, i) in row.iter_mut().zip(&self.inn) {
                *x *= i;
            }
        }
    }

    /// Row-wise `X <- X U^dag`: `(XU^dag)_ij = conj(out_j) Σ_k ω^{-jk} conj(in_k) X_ik`.
    fn mul_right_adjoint(&self, rows: &mut [C64], scratch: &mut Vec<C64>) {
        let dim = self.out.len();
        for row in rows.chunks_exact_mut(dim) {
            for (x, i) in row.iter_mut().zip(&self.inn) {
                *x *= i.conj();
            }
        }
        scratch.resize(self.forward.get_inplace_scratch_len(), C64::default());
        self.forward.process_with_scratch(rows, scratch);
        for row in rows.chunks_exact_mut(dim) {
            for (x, o) in row.iter_mut().zip(&self.out) {
                *x *= o.conj();
            }
        }
    }
}

enum Action {
    Chirp(ChirpFactors),
    /// Cyclic shift `U|j> = |j+1>`.
    Rotation,
    Dense,
}

/// A quantized map: an `N x N` unitary with its provenance and a cache of
/// integer powers.
pub struct QuantizedMap {
    dim: usize,
    kind: MapKind,
    matrix: Array2<C64>,
    action: Action,
    powers: Mutex<HashMap<i64, Arc<Array2<C64>>>>,
}

impl fmt::Debug for QuantizedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantizedMap")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

/// Builds the quantized unitary of the given kind. `seed` is only used by
/// [`MapKind::Haar`].
pub fn build_unitary(kind: MapKind, dim: usize, seed: u64) -> Result<QuantizedMap> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    let (matrix, action) = match kind {
        MapKind::Cat => (cat_matrix(dim), Action::Chirp(ChirpFactors::cat(dim))),
        MapKind::Elliptic => (
            elliptic_matrix(dim),
            Action::Chirp(ChirpFactors::elliptic(dim)),
        ),
        MapKind::Shift => (shift_matrix(dim), Action::Rotation),
        MapKind::Haar => (haar_matrix(dim, seed), Action::Dense),
        MapKind::Custom => {
            return Err(Error::InvalidDensityMatrix(
                "custom maps are built with QuantizedMap::from_matrix".into(),
            ))
        }
    };
    QuantizedMap::checked(kind, matrix, action)
}

impl QuantizedMap {
    fn checked(kind: MapKind, matrix: Array2<C64>, action: Action) -> Result<Self> {
        let dim = matrix.nrows();
        let deviation = linalg::unitarity_deviation(matrix.view());
        if deviation.is_nan() || deviation > UNITARITY_TOL {
            return Err(Error::NotUnitary {
                kind,
                dim,
                deviation,
            });
        }
        Ok(QuantizedMap {
            dim,
            kind,
            matrix,
            action,
            powers: Mutex::new(HashMap::new()),
        })
    }

    /// Wraps an arbitrary unitary; all products go through dense gemm.
    pub fn from_matrix(matrix: Array2<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() < 2 {
            return Err(Error::DimensionTooSmall(matrix.nrows()));
        }
        QuantizedMap::checked(MapKind::Custom, matrix, Action::Dense)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        QuantizedMap::from_matrix(linalg::identity(dim))
    }

    /// Same unitary, but every product goes through the dense matrix. Used to
    /// cross-check the structured actions.
    pub fn to_dense(&self) -> QuantizedMap {
        QuantizedMap {
            dim: self.dim,
            kind: self.kind,
            matrix: self.matrix.clone(),
            action: Action::Dense,
            powers: Mutex::new(HashMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn matrix(&self) -> ArrayView2<'_, C64> {
        self.matrix.view()
    }

    pub fn is_structured(&self) -> bool {
        !matches!(self.action, Action::Dense)
    }

    /// `U^r`; negative powers are adjoints of positive ones. Cached.
    pub fn power(&self, r: i64) -> Arc<Array2<C64>> {
        if let Some(p) = self.powers.lock().expect("power cache poisoned").get(&r) {
            return Arc::clone(p);
        }
        let value = match r {
            0 => linalg::identity(self.dim),
            1 => self.matrix.clone(),
            r if r < 0 => linalg::adjoint(self.power(-r).view()),
            r => self.power(r - 1).dot(&self.matrix),
        };
        let value = Arc::new(value);
        self.powers
            .lock()
            .expect("power cache poisoned")
            .insert(r, Arc::clone(&value));
        value
    }

    /// Treats `rows` as a row-major stack of length-`N` rows `X` and sets
    /// `X <- X U^s`.
    pub fn mul_right_rows(&self, s: i64, rows: &mut [C64]) {
        assert_eq!(rows.len() % self.dim, 0, "row stack length not a multiple of N");
        if s == 0 {
            return;
        }
        match &self.action {
            Action::Chirp(chirp) => {
                let mut scratch = Vec::new();
                for _ in 0..s.unsigned_abs() {
                    if s > 0 {
                        chirp.mul_right(rows, &mut scratch);
                    } else {
                        chirp.mul_right_adjoint(rows, &mut scratch);
                    }
                }
            }
            Action::Rotation => {
                // (X U)_ij = X_{i, j+1}
                let shift = s.rem_euclid(self.dim as i64) as usize;
                for row in rows.chunks_exact_mut(self.dim) {
                    row.rotate_left(shift);
                }
            }
            Action::Dense => {
                let p = self.power(s);
                let count = rows.len() / self.dim;
                let x = ArrayView2::from_shape((count, self.dim), &*rows).expect("row stack shape");
                let product = x.dot(&*p);
                rows.copy_from_slice(product.as_slice().expect("standard layout"));
            }
        }
    }

    /// `X U^s` for an `M x N` matrix.
    pub fn mul_right(&self, s: i64, x: ArrayView2<'_, C64>) -> Array2<C64> {
        assert_eq!(x.ncols(), self.dim);
        let mut out = x.as_standard_layout().into_owned();
        self.mul_right_rows(s, out.as_slice_mut().expect("standard layout"));
        out
    }

    /// `U^s X` for a square `N x N` matrix, via `(X^dag U^{-s})^dag`.
    pub fn mul_left(&self, s: i64, x: ArrayView2<'_, C64>) -> Array2<C64> {
        assert_eq!(x.nrows(), self.dim);
        assert_eq!(x.ncols(), self.dim);
        let mut out = x.as_standard_layout().into_owned();
        self.mul_left_in_place(s, out.view_mut());
        out
    }

    pub(crate) fn mul_left_in_place(&self, s: i64, mut x: ArrayViewMut2<'_, C64>) {
        let slice = x.as_slice_mut().expect("standard layout");
        linalg::adjoint_in_place(slice, self.dim);
        self.mul_right_rows(-s, slice);
        linalg::adjoint_in_place(slice, self.dim);
    }

    /// `U X U^dag` in place for a square block.
    pub fn conjugate_block(&self, block: &mut [C64]) {
        self.mul_right_rows(-1, block);
        linalg::adjoint_in_place(block, self.dim);
        self.mul_right_rows(-1, block);
        linalg::adjoint_in_place(block, self.dim);
    }

    /// `Tr U^n`.
    pub fn trace_power(&self, n: i64) -> C64 {
        linalg::trace(self.power(n).view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive_adjoint_gram(u: &Array2<C64>) -> f64 {
        // direct N^3 evaluation of U^dag U
        let n = u.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::default();
                for k in 0..n {
                    acc += u[[k, i]].conj() * u[[k, j]];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }

    #[test]
    fn classifies_cat_matrix_as_hyperbolic() {
        let t = classify_automorphism(CAT_AUTOMORPHISM).unwrap();
        assert_eq!(t.classification, Classification::Hyperbolic);
        assert_abs_diff_eq!(t.ks_entropy, (3.0 + 2.0 * 2f64.sqrt()).ln(), epsilon = 1e-14);
        assert_eq!(format!("{:.2}", t.ks_entropy), "1.76");
    }

    #[test]
    fn classifies_rotation_and_shear() {
        let e = classify_automorphism(ELLIPTIC_AUTOMORPHISM).unwrap();
        assert_eq!(e.classification, Classification::Elliptic);
        assert_eq!(e.ks_entropy, 0.0);
        let p = classify_automorphism([[1, 1], [0, 1]]).unwrap();
        assert_eq!(p.classification, Classification::Parabolic);
        assert_eq!(p.ks_entropy, 0.0);
        let neg = classify_automorphism([[-2, 1], [-1, 0]]).unwrap();
        assert_eq!(neg.classification, Classification::Parabolic);
    }

    #[test]
    fn rejects_non_unimodular() {
        assert!(matches!(
            classify_automorphism([[2, 0], [0, 2]]),
            Err(Error::NotUnimodular(4))
        ));
    }

    #[test]
    fn shift_is_a_period_n_permutation() {
        let u = build_unitary(MapKind::Shift, 4, 0).unwrap();
        for col in u.matrix().columns() {
            let nonzero: Vec<_> = col.iter().filter(|z| z.norm() != 0.0).collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(*nonzero[0], C64::new(1.0, 0.0));
        }
        assert_eq!(*u.power(4), linalg::identity(4));
        let u8 = build_unitary(MapKind::Shift, 8, 0).unwrap();
        assert_eq!(*u8.power(8), linalg::identity(8));
    }

    #[test]
    fn elliptic_and_cat_are_unitary() {
        let e = build_unitary(MapKind::Elliptic, 16, 0).unwrap();
        assert!(linalg::unitarity_deviation(e.matrix()) <= 1e-12);
        let c = build_unitary(MapKind::Cat, 16, 0).unwrap();
        assert!(naive_adjoint_gram(&c.matrix().to_owned()) <= 1e-10);
    }

    #[test]
    fn printed_cat_formula_is_unitary_for_odd_and_even_n() {
        for n in [2, 3, 5, 7, 12, 33, 64] {
            let c = build_unitary(MapKind::Cat, n, 0).unwrap();
            assert!(linalg::unitarity_deviation(c.matrix()) <= 1e-10, "N = {n}");
        }
    }

    #[test]
    fn rejects_too_small_and_non_unitary() {
        assert!(matches!(
            build_unitary(MapKind::Cat, 1, 0),
            Err(Error::DimensionTooSmall(1))
        ));
        let mut m = linalg::identity(3);
        m[[0, 1]] = C64::new(0.5, 0.0);
        assert!(matches!(
            QuantizedMap::from_matrix(m),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn power_zero_and_inverse() {
        let u = build_unitary(MapKind::Cat, 12, 0).unwrap();
        assert_eq!(*u.power(0), linalg::identity(12));
        let inv = u.power(-1);
        assert!(linalg::max_abs_difference(inv.view(), linalg::adjoint(u.matrix()).view()) == 0.0);
        let prod = inv.dot(&u.matrix());
        assert!(linalg::max_deviation_from_identity(prod.view()) <= 1e-12);
    }

    #[test]
    fn structured_actions_match_dense_products() {
        let x = Array2::from_shape_fn((10, 10), |(i, j)| {
            C64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.05)
        });
        for kind in [MapKind::Cat, MapKind::Elliptic, MapKind::Shift] {
            let u = build_unitary(kind, 10, 0).unwrap();
            assert!(u.is_structured());
            for s in [-3i64, -1, 1, 2, 5] {
                let right = u.mul_right(s, x.view());
                let expected = x.dot(&*u.power(s));
                assert!(
                    linalg::max_abs_difference(right.view(), expected.view()) < 1e-12,
                    "{kind} right s={s}"
                );
                let left = u.mul_left(s, x.view());
                let expected = u.power(s).dot(&x);
                assert!(
                    linalg::max_abs_difference(left.view(), expected.view()) < 1e-12,
                    "{kind} left s={s}"
                );
            }
        }
    }

    #[test]
    fn haar_is_seeded_and_unitary() {
        let a = build_unitary(MapKind::Haar, 16, 7).unwrap();
        let b = build_unitary(MapKind::Haar, 16, 7).unwrap();
        let c = build_unitary(MapKind::Haar, 16, 8).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_ne!(a.matrix(), c.matrix());
        assert!(linalg::unitarity_deviation(a.matrix()) <= 1e-12);
    }

    #[test]
    fn conjugate_block_matches_dense() {
        let u = build_unitary(MapKind::Cat, 8, 0).unwrap();
        let x = Array2::from_shape_fn((8, 8), |(i, j)| C64::new(i as f64, j as f64 * 0.3));
        let mut flat: Vec<C64> = x.iter().copied().collect();
        u.conjugate_block(&mut flat);
        let expected = u.matrix().dot(&x).dot(&linalg::adjoint(u.matrix()));
        let got = Array2::from_shape_vec((8, 8), flat).unwrap();
        assert!(linalg::max_abs_difference(got.view(), expected.view()) < 1e-12);
    }
}
