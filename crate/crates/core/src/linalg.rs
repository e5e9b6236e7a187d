//! Small dense helpers shared by the simulation modules.

use faer::{Mat, Side};
use ndarray::{Array2, ArrayView2};

use crate::C64;

pub fn identity(dim: usize) -> Array2<C64> {
    Array2::from_diag_elem(dim, C64::new(1.0, 0.0))
}

/// Conjugate transpose in standard (row-major) layout.
pub fn adjoint(m: ArrayView2<'_, C64>) -> Array2<C64> {
    Array2::from_shape_fn((m.ncols(), m.nrows()), |(i, j)| m[[j, i]].conj())
}

/// Conjugate-transposes a square row-major block in place.
pub(crate) fn adjoint_in_place(block: &mut [C64], dim: usize) {
    debug_assert_eq!(block.len(), dim * dim);
    for i in 0..dim {
        block[i * dim + i] = block[i * dim + i].conj();
        for j in (i + 1)..dim {
            let upper = block[i * dim + j];
            block[i * dim + j] = block[j * dim + i].conj();
            block[j * dim + i] = upper.conj();
        }
    }
}

pub fn trace(m: ArrayView2<'_, C64>) -> C64 {
    m.diag().iter().sum()
}

/// `max |m_ij - δ_ij|`.
pub fn max_deviation_from_identity(m: ArrayView2<'_, C64>) -> f64 {
    m.indexed_iter()
        .map(|((i, j), z)| {
            let target = if i == j { 1.0 } else { 0.0 };
            (z - target).norm()
        })
        .fold(0.0, f64::max)
}

pub fn max_abs_difference(a: ArrayView2<'_, C64>, b: ArrayView2<'_, C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `max |U^dag U - 1|`.
pub fn unitarity_deviation(u: ArrayView2<'_, C64>) -> f64 {
    let gram = adjoint(u).dot(&u);
    max_deviation_from_identity(gram.view())
}

pub fn frobenius_norm_sqr(values: &[C64]) -> f64 {
    values.iter().map(|z| z.norm_sqr()).sum()
}

/// Eigenvalues of a Hermitian matrix in descending order.
///
/// Only the Hermitian part `(m + m^dag)/2` is used. If the solver does not
/// converge every entry is NaN, so downstream comparisons fail loudly.
pub fn hermitian_eigenvalues(m: ArrayView2<'_, C64>) -> Vec<f64> {
    let n = m.nrows();
    let h = Mat::from_fn(n, n, |i, j| (m[[i, j]] + m[[j, i]].conj()) * 0.5);
    match h.self_adjoint_eigenvalues(Side::Lower) {
        Ok(mut values) => {
            values.reverse();
            values
        }
        Err(_) => vec![f64::NAN; n],
    }
}

/// Compares two spectra after dropping eigenvalues below `zero_cut`.
///
/// The shorter list is padded with zeros, so a genuinely missing eigenvalue
/// shows up as a mismatch equal to its size.
pub fn nonzero_spectrum_mismatch(a: &[f64], b: &[f64], zero_cut: f64) -> f64 {
    let keep = |v: &[f64]| -> Vec<f64> {
        let mut kept: Vec<f64> = v.iter().copied().filter(|x| x.abs() > zero_cut).collect();
        kept.sort_by(|x, y| y.total_cmp(x));
        kept
    };
    let (a, b) = (keep(a), keep(b));
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            (x - y).abs()
        })
        .fold(0.0, f64::max)
}

/// Ordinary least-squares line through `(x, y)`, returning
/// `(slope, intercept, slope_stderr)`. The standard error is `NaN` for fewer
/// than three points.
pub fn least_squares_line(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let stderr = if n > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some((slope, intercept, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_place_adjoint_matches_allocating_one() {
        let m = Array2::from_shape_fn((3, 3), |(i, j)| C64::new(i as f64, j as f64 + 0.5));
        let mut flat: Vec<C64> = m.iter().copied().collect();
        adjoint_in_place(&mut flat, 3);
        let expected = adjoint(m.view());
        assert_eq!(flat, expected.iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn least_squares_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (slope, intercept, stderr) = least_squares_line(&pts).unwrap();
        assert!((slope + 0.5).abs() < 1e-14);
        assert!((intercept - 2.0).abs() < 1e-14);
        assert!(stderr.abs() < 1e-12);
    }

    #[test]
    fn spectrum_mismatch_pads_missing_values() {
        let a = [0.5, 0.5, 1e-14];
        let b = [0.5, 0.5];
        assert!(nonzero_spectrum_mismatch(&a, &b, 1e-10) == 0.0);
        let c = [0.5];
        assert!((nonzero_spectrum_mismatch(&a, &c, 1e-10) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hermitian_eigenvalues_of_diagonal() {
        let m = Array2::from_diag(&ndarray::arr1(&[
            C64::new(0.25, 0.0),
            C64::new(0.75, 0.0),
        ]));
        let ev = hermitian_eigenvalues(m.view());
        assert!((ev[0] - 0.75).abs() < 1e-14 && (ev[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn hermitian_eigenvalues_with_zero_columns_and_complex_entries() {
        // |v><v| with v = (1, i)/sqrt 2 padded by zero rows and columns
        let mut m = Array2::zeros((4, 4));
        m[[0, 0]] = C64::new(0.5, 0.0);
        m[[0, 2]] = C64::new(0.0, -0.5);
        m[[2, 0]] = C64::new(0.0, 0.5);
        m[[2, 2]] = C64::new(0.5, 0.0);
        let ev = hermitian_eigenvalues(m.view());
        assert_eq!(ev.len(), 4);
        assert!((ev[0] - 1.0).abs() < 1e-14);
        assert!(ev[1..].iter().all(|x| x.abs() < 1e-14));
    }
}
