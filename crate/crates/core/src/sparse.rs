//! Thin helpers over `sprs` CSR matrices.

use sprs::{CsMat, TriMat};

pub type SparseMatrix = CsMat<f64>;

/// `y = M x`.
pub fn matvec(m: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.rows()];
    matvec_acc(m, x, &mut y);
    y
}

/// `y += M x`.
pub fn matvec_acc(m: &SparseMatrix, x: &[f64], y: &mut [f64]) {
    debug_assert!(m.is_csr());
    for (i, row) in m.outer_iterator().enumerate() {
        let mut acc = 0.0;
        for (j, v) in row.iter() {
            acc += v * x[j];
        }
        y[i] += acc;
    }
}

/// `y += Mᵀ x`.
pub fn transpose_matvec_acc(m: &SparseMatrix, x: &[f64], y: &mut [f64]) {
    debug_assert!(m.is_csr());
    for (i, row) in m.outer_iterator().enumerate() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (j, v) in row.iter() {
            y[j] += v * xi;
        }
    }
}

/// Builds a CSR matrix from triplets; duplicates are summed.
pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> SparseMatrix {
    let mut tri = TriMat::with_capacity((rows, cols), triplets.len());
    for &(i, j, v) in triplets {
        tri.add_triplet(i, j, v);
    }
    tri.to_csr()
}

pub fn triplets(m: &SparseMatrix) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(m.nnz());
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, v) in row.iter() {
            out.push((i, j, *v));
        }
    }
    out
}

pub fn row_sums(m: &SparseMatrix) -> Vec<f64> {
    m.outer_iterator().map(|row| row.data().iter().sum()).collect()
}

pub fn to_dense(m: &SparseMatrix) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; m.cols()]; m.rows()];
    for (i, j, v) in triplets(m) {
        d[i][j] += v;
    }
    d
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
