//! Sparse symmetric factorizations backed by faer.
//!
//! Matrices are stored as the upper triangle in compressed-column form. The
//! pattern is fixed at construction so that the symbolic analysis (AMD
//! ordering, elimination tree) is done once and values can be refreshed in
//! place between numeric factorizations.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::{LdltParams, LdltRegularization};
use faer::linalg::cholesky::llt::factor::{LltParams, LltRegularization};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, LltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side, Spec};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Upper triangle of a symmetric matrix, compressed by column.
#[derive(Debug, Clone)]
pub struct SymmetricCsc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    pub values: Vec<f64>,
    diag: Vec<usize>,
}

impl SymmetricCsc {
    /// Builds the pattern from `(row, col, value)` entries, any triangle.
    /// Entries are mirrored into the upper triangle and duplicates summed.
    /// Every diagonal entry is stored, zero if absent. Returns the matrix and,
    /// for each input entry, the index of the value slot it landed in.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> (Self, Vec<usize>) {
        let mut keyed: Vec<(usize, usize, usize)> = entries
            .iter()
            .enumerate()
            .map(|(k, &(i, j, _))| {
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                (c, r, k)
            })
            .chain((0..n).map(|i| (i, i, usize::MAX)))
            .collect();
        keyed.sort_unstable();
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(keyed.len());
        let mut values = Vec::with_capacity(keyed.len());
        let mut slots = vec![0usize; entries.len()];
        let mut diag = vec![0usize; n];
        let mut last: Option<(usize, usize)> = None;
        for (c, r, k) in keyed {
            if last != Some((c, r)) {
                row_idx.push(r);
                values.push(0.0);
                col_ptr[c + 1] = row_idx.len();
                if r == c {
                    diag[c] = row_idx.len() - 1;
                }
                last = Some((c, r));
            }
            if k != usize::MAX {
                let slot = row_idx.len() - 1;
                slots[k] = slot;
                values[slot] += entries[k].2;
            }
        }
        for c in 0..n {
            col_ptr[c + 1] = col_ptr[c + 1].max(col_ptr[c]);
        }
        (
            Self {
                n,
                col_ptr,
                row_idx,
                values,
                diag,
            },
            slots,
        )
    }

    /// Upper triangle of a CSR matrix assumed symmetric.
    pub fn from_symmetric_csr(m: &SparseMatrix) -> Self {
        let entries: Vec<(usize, usize, f64)> = crate::sparse::triplets(m)
            .into_iter()
            .filter(|&(i, j, _)| i <= j)
            .collect();
        Self::from_triplets(m.rows(), &entries).0
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Value slot of diagonal entry `i`.
    pub fn diag_slot(&self, i: usize) -> usize {
        self.diag[i]
    }

    /// `y = M x` using both triangles.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                let v = self.values[k];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }

    fn view(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.symbolic(), &self.values)
    }

    fn analyze(&self) -> Result<SymbolicCholesky<usize>> {
        factorize_symbolic_cholesky(
            self.symbolic(),
            Side::Upper,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Singular(format!("symbolic analysis failed: {e:?}")))
    }
}

/// `L D Lᵀ` of a quasi-definite matrix with prescribed pivot signs. Pivots
/// whose sign disagrees or whose magnitude falls below `epsilon` are replaced
/// by `±delta`.
pub struct LdltFactor {
    symbolic: SymbolicCholesky<usize>,
    l_values: Vec<f64>,
    signs: Vec<i8>,
    /// Number of pivots replaced in the last factorization.
    pub regularized_pivots: usize,
}

impl std::fmt::Debug for LdltFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LdltFactor")
            .field("n", &self.signs.len())
            .field("factor_nnz", &self.l_values.len())
            .finish()
    }
}

impl LdltFactor {
    pub fn analyze(matrix: &SymmetricCsc, signs: Vec<i8>) -> Result<Self> {
        crate::error::check_len("pivot signs", matrix.dim(), signs.len())?;
        let symbolic = matrix.analyze()?;
        let l_values = vec![0.0; symbolic.len_val()];
        Ok(Self {
            symbolic,
            l_values,
            signs,
            regularized_pivots: 0,
        })
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_values.len()
    }

    pub fn factorize(&mut self, matrix: &SymmetricCsc, delta: f64, epsilon: f64) -> Result<()> {
        let params: Spec<LdltParams, f64> = Default::default();
        let req = self
            .symbolic
            .factorize_numeric_ldlt_scratch::<f64>(Par::Seq, params);
        let mut mem = MemBuffer::new(req);
        let reg = LdltRegularization {
            dynamic_regularization_signs: Some(&self.signs),
            dynamic_regularization_delta: delta,
            dynamic_regularization_epsilon: epsilon,
        };
        self.symbolic
            .factorize_numeric_ldlt(
                &mut self.l_values,
                matrix.view(),
                Side::Upper,
                reg,
                Par::Seq,
                MemStack::new(&mut mem),
                params,
            )
            .map_err(|e| Error::Singular(format!("LDLT factorization failed: {e:?}")))?;
        Ok(())
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        let req = self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq);
        let mut mem = MemBuffer::new(req);
        LdltRef::new(&self.symbolic, &self.l_values).solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(rhs, n, 1),
            Par::Seq,
            MemStack::new(&mut mem),
        );
    }
}

/// `L Lᵀ` of a symmetric positive definite matrix.
pub struct CholeskyFactor {
    symbolic: SymbolicCholesky<usize>,
    l_values: Vec<f64>,
}

impl std::fmt::Debug for CholeskyFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CholeskyFactor")
            .field("n", &self.symbolic.nrows())
            .field("factor_nnz", &self.l_values.len())
            .finish()
    }
}

impl CholeskyFactor {
    pub fn new(matrix: &SymmetricCsc) -> Result<Self> {
        let symbolic = matrix.analyze()?;
        let mut l_values = vec![0.0; symbolic.len_val()];
        let params: Spec<LltParams, f64> = Default::default();
        let req = symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, params);
        let mut mem = MemBuffer::new(req);
        symbolic
            .factorize_numeric_llt(
                &mut l_values,
                matrix.view(),
                Side::Upper,
                LltRegularization {
                    dynamic_regularization_delta: 0.0,
                    dynamic_regularization_epsilon: 0.0,
                },
                Par::Seq,
                MemStack::new(&mut mem),
                params,
            )
            .map_err(|e| Error::Singular(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Self { symbolic, l_values })
    }

    pub fn dim(&self) -> usize {
        self.symbolic.nrows()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        let req = self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq);
        let mut mem = MemBuffer::new(req);
        LltRef::new(&self.symbolic, &self.l_values).solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(rhs, n, 1),
            Par::Seq,
            MemStack::new(&mut mem),
        );
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
