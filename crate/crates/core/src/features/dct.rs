//! Orthonormal DCT-II and its inverse (DCT-III).

use std::f64::consts::PI;

/// Row-major `n_out x n_in` orthonormal DCT-II basis, truncated to `n_out` rows.
pub fn dct_ii_matrix(n_in: usize, n_out: usize) -> Vec<f64> {
    let n = n_in as f64;
    let mut m = Vec::with_capacity(n_in * n_out);
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            m.push(scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos());
        }
    }
    m
}

pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    let m = dct_ii_matrix(x.len(), x.len());
    apply(&m, x, x.len())
}

/// Inverse of [`dct_ii`]: the transpose of the orthonormal basis.
pub fn dct_iii(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let m = dct_ii_matrix(n, n);
    (0..n).map(|i| (0..n).map(|k| m[k * n + i] * c[k]).sum()).collect()
}

pub(crate) fn apply(matrix: &[f64], x: &[f64], n_out: usize) -> Vec<f64> {
    let n_in = x.len();
    (0..n_out)
        .map(|k| matrix[k * n_in..(k + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}
