//! Independent reference implementations used by the integration tests and
//! the acceptance harness. Dense and brute force on purpose.

#![allow(dead_code)]

use meltplan_core::solver::{Hessian, QuadraticProgram};
use meltplan_core::sparse::from_triplets;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense tiny QP: min ½xᵀHx + cᵀx, A x = b, G x ≤ h.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub hv: DVector<f64>,
}

fn sparse_of(m: &DMatrix<f64>) -> meltplan_core::sparse::SparseMatrix {
    let mut t = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] != 0.0 {
                t.push((i, j, m[(i, j)]));
            }
        }
    }
    from_triplets(m.nrows(), m.ncols(), &t)
}

impl DenseQp {
    pub fn to_sparse(&self) -> QuadraticProgram {
        QuadraticProgram::new(
            Hessian::from_sparse(sparse_of(&self.h)),
            self.c.iter().copied().collect(),
            sparse_of(&self.a),
            self.b.iter().copied().collect(),
            sparse_of(&self.g),
            self.hv.iter().copied().collect(),
        )
        .expect("consistent dimensions")
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    /// Random feasible, bounded problem: PSD Hessian of random rank, a box
    /// `|x_i| ≤ 2`, a few general inequalities and up to two equalities,
    /// all satisfied by a hidden interior point.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        let rank = rng.random_range(0..=n);
        let m = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
        let h = m.transpose() * m;
        let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let me = rng.random_range(0..=n.min(2)).min(n - 1);
        let a = DMatrix::from_fn(me, n, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * &x0;
        let mg = rng.random_range(0..=3);
        let mut g = DMatrix::zeros(2 * n + mg, n);
        let mut hv = DVector::zeros(2 * n + mg);
        for i in 0..n {
            g[(2 * i, i)] = 1.0;
            g[(2 * i + 1, i)] = -1.0;
            hv[2 * i] = 2.0;
            hv[2 * i + 1] = 2.0;
        }
        for r in 0..mg {
            let row = 2 * n + r;
            for j in 0..n {
                g[(row, j)] = rng.random_range(-1.0..1.0);
            }
            let gx: f64 = (0..n).map(|j| g[(row, j)] * x0[j]).sum();
            hv[row] = gx + rng.random_range(0.0..0.5);
        }
        Self { h, c, a, b, g, hv }
    }
}

/// Global minimum by enumerating every set of active inequalities and
/// solving the equality-constrained KKT system of each face.
pub fn active_set_minimum(qp: &DenseQp) -> Option<(f64, DVector<f64>)> {
    let n = qp.c.len();
    let me = qp.b.len();
    let mi = qp.hv.len();
    assert!(mi <= 20, "enumeration is exponential");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for set in 0u32..(1 << mi) {
        let active: Vec<usize> = (0..mi).filter(|&r| set >> r & 1 == 1).collect();
        let k = me + active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        for j in 0..n {
            rhs[j] = -qp.c[j];
        }
        let mut put = |row: usize, coeffs: Vec<f64>, value: f64| {
            for j in 0..n {
                kkt[(n + row, j)] = coeffs[j];
                kkt[(j, n + row)] = coeffs[j];
            }
            rhs[n + row] = value;
        };
        for r in 0..me {
            put(r, qp.a.row(r).iter().copied().collect(), qp.b[r]);
        }
        for (i, &r) in active.iter().enumerate() {
            put(me + i, qp.g.row(r).iter().copied().collect(), qp.hv[r]);
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-10) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        if me > 0 && (&qp.a * &x - &qp.b).amax() > 1e-8 {
            continue;
        }
        if mi > 0 && (&qp.g * &x - &qp.hv).max() > 1e-8 {
            continue;
        }
        let f = qp.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best
}

/// `exp(M)` through nalgebra.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Exact solution of `dT/dt = A T + f` with constant `f` after time `t`,
/// via the exponential of the augmented matrix `[[A, f], [0, 0]]`.
pub fn affine_flow(a: &DMatrix<f64>, f: &DVector<f64>, t0: &DVector<f64>, t: f64) -> DVector<f64> {
    let n = a.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    for i in 0..n {
        aug[(i, n)] = f[i] * t;
    }
    let e = expm(&aug);
    let mut v = DVector::zeros(n + 1);
    v.rows_mut(0, n).copy_from(t0);
    v[n] = 1.0;
    (e * v).rows(0, n).into_owned()
}

pub fn dense(m: &meltplan_core::sparse::SparseMatrix) -> DMatrix<f64> {
    let d = meltplan_core::sparse::to_dense(m);
    DMatrix::from_fn(d.len(), d.first().map_or(0, Vec::len), |i, j| d[i][j])
}

/// Population variance of the masked entries, computed directly.
pub fn masked_variance(t: &[f64], members: &[usize]) -> f64 {
    let k = members.len() as f64;
    let mean = members.iter().map(|&i| t[i]).sum::<f64>() / k;
    members.iter().map(|&i| (t[i] - mean).powi(2)).sum::<f64>() / k
}
