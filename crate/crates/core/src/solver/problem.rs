use crate::error::{check_len, invalid, Result};
use crate::sparse::{self, SparseMatrix};

/// `coef · v vᵀ` with sparse `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankTerm {
    pub coef: f64,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl LowRankTerm {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * x[i])
            .sum()
    }
}

/// Symmetric sparse matrix plus low-rank corrections. `sparse` holds both
/// triangles.
#[derive(Debug, Clone)]
pub struct Hessian {
    pub sparse: SparseMatrix,
    pub low_rank: Vec<LowRankTerm>,
}

impl Hessian {
    pub fn zeros(n: usize) -> Self {
        Self {
            sparse: SparseMatrix::zero((n, n)),
            low_rank: Vec::new(),
        }
    }

    pub fn from_sparse(sparse: SparseMatrix) -> Self {
        Self {
            sparse,
            low_rank: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.sparse.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = sparse::matvec(&self.sparse, x);
        for t in &self.low_rank {
            let s = t.coef * t.dot(x);
            for (&i, &v) in t.indices.iter().zip(&t.values) {
                y[i] += s * v;
            }
        }
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        sparse::dot(x, &self.apply(x))
    }

    /// Dense copy, for small problems and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = sparse::to_dense(&self.sparse);
        for t in &self.low_rank {
            for (&i, &vi) in t.indices.iter().zip(&t.values) {
                for (&j, &vj) in t.indices.iter().zip(&t.values) {
                    d[i][j] += t.coef * vi * vj;
                }
            }
        }
        d
    }
}

/// `min ½ xᵀHx + cᵀx  s.t.  A x = b,  G x ≤ h`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: Hessian,
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub g: SparseMatrix,
    pub h: Vec<f64>,
}

impl QuadraticProgram {
    pub fn new(
        hessian: Hessian,
        c: Vec<f64>,
        a: SparseMatrix,
        b: Vec<f64>,
        g: SparseMatrix,
        h: Vec<f64>,
    ) -> Result<Self> {
        let qp = Self {
            hessian,
            c,
            a,
            b,
            g,
            h,
        };
        qp.validate()?;
        Ok(qp)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        check_len("hessian rows", n, self.hessian.sparse.rows())?;
        check_len("hessian cols", n, self.hessian.sparse.cols())?;
        check_len("equality columns", n, self.a.cols())?;
        check_len("equality rows", self.a.rows(), self.b.len())?;
        check_len("inequality columns", n, self.g.cols())?;
        check_len("inequality rows", self.g.rows(), self.h.len())?;
        for t in &self.hessian.low_rank {
            check_len("low-rank term", t.indices.len(), t.values.len())?;
            if t.indices.iter().any(|&i| i >= n) {
                return Err(invalid("hessian", "low-rank index out of range"));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.c) && finite(&self.b) && finite(&self.h)) {
            return Err(invalid("qp", "non-finite problem data"));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.h.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.hessian.quadratic_form(x) + sparse::dot(&self.c, x)
    }
}
