//! Ruiz equilibration of the KKT matrix.

use super::problem::{Hessian, QuadraticProgram};
use crate::sparse::SparseMatrix;

const PASSES: usize = 15;
const FLOOR: f64 = 1e-4;
const CEIL: f64 = 1e4;

/// `x = D x̃`, `y = E_a ỹ / σ`, `z = E_g z̃ / σ`, constraint rows scaled by
/// `E`, cost by `σ`.
#[derive(Debug, Clone)]
pub struct Scaling {
    pub d: Vec<f64>,
    pub e_eq: Vec<f64>,
    pub e_in: Vec<f64>,
    pub cost: f64,
}

impl Scaling {
    pub fn identity(qp: &QuadraticProgram) -> Self {
        Self {
            d: vec![1.0; qp.num_vars()],
            e_eq: vec![1.0; qp.num_eq()],
            e_in: vec![1.0; qp.num_ineq()],
            cost: 1.0,
        }
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    pub fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e_eq).map(|(y, e)| y * e / self.cost).collect()
    }

    pub fn unscale_z(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.e_in).map(|(z, e)| z * e / self.cost).collect()
    }
}

fn col_norms(m: &SparseMatrix, out: &mut [f64]) {
    for vec in m.outer_iterator() {
        for (j, &v) in vec.iter() {
            out[j] = out[j].max(v.abs());
        }
    }
}

fn row_norms(m: &SparseMatrix) -> Vec<f64> {
    m.outer_iterator()
        .map(|r| r.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max))
        .collect()
}

fn scale_matrix(m: &mut SparseMatrix, rows: &[f64], cols: &[f64]) {
    for (i, mut row) in m.outer_iterator_mut().enumerate() {
        for (j, v) in row.iter_mut() {
            *v *= rows[i] * cols[j];
        }
    }
}

fn hessian_col_norms(h: &Hessian) -> Vec<f64> {
    let mut out = vec![0.0; h.dim()];
    col_norms(&h.sparse, &mut out);
    for t in &h.low_rank {
        let vmax = t.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (&i, &v) in t.indices.iter().zip(&t.values) {
            out[i] = out[i].max((t.coef * v).abs() * vmax);
        }
    }
    out
}

fn scale_hessian(h: &mut Hessian, d: &[f64], cost: f64) {
    let s: Vec<f64> = d.iter().map(|v| v * cost.sqrt()).collect();
    scale_matrix(&mut h.sparse, &s, &s);
    for t in &mut h.low_rank {
        t.coef *= cost;
        for (&i, v) in t.indices.iter().zip(t.values.iter_mut()) {
            *v *= d[i];
        }
    }
}

fn inv_sqrt(v: f64) -> f64 {
    if v > 0.0 {
        (1.0 / v.sqrt()).clamp(FLOOR, CEIL)
    } else {
        1.0
    }
}

/// Equilibrates `qp`, returning the scaled problem and the factors needed to
/// map a solution back.
pub fn equilibrate(qp: &QuadraticProgram) -> (QuadraticProgram, Scaling) {
    let mut scaled = qp.clone();
    let mut sc = Scaling::identity(qp);
    for _ in 0..PASSES {
        let mut cn = hessian_col_norms(&scaled.hessian);
        col_norms(&scaled.a, &mut cn);
        col_norms(&scaled.g, &mut cn);
        let dd: Vec<f64> = cn.into_iter().map(inv_sqrt).collect();
        let ea: Vec<f64> = row_norms(&scaled.a).into_iter().map(inv_sqrt).collect();
        let eg: Vec<f64> = row_norms(&scaled.g).into_iter().map(inv_sqrt).collect();
        scale_hessian(&mut scaled.hessian, &dd, 1.0);
        scale_matrix(&mut scaled.a, &ea, &dd);
        scale_matrix(&mut scaled.g, &eg, &dd);
        for (c, d) in scaled.c.iter_mut().zip(&dd) {
            *c *= d;
        }
        for (b, e) in scaled.b.iter_mut().zip(&ea) {
            *b *= e;
        }
        for (h, e) in scaled.h.iter_mut().zip(&eg) {
            *h *= e;
        }
        sc.d.iter_mut().zip(&dd).for_each(|(a, b)| *a *= b);
        sc.e_eq.iter_mut().zip(&ea).for_each(|(a, b)| *a *= b);
        sc.e_in.iter_mut().zip(&eg).for_each(|(a, b)| *a *= b);
    }
    let hn = hessian_col_norms(&scaled.hessian);
    let mean_h = if hn.is_empty() {
        0.0
    } else {
        hn.iter().sum::<f64>() / hn.len() as f64
    };
    let cn = crate::sparse::norm_inf(&scaled.c);
    let size = mean_h.max(cn);
    let cost = if size > 0.0 {
        (1.0 / size).clamp(FLOOR, CEIL)
    } else {
        1.0
    };
    scale_hessian(&mut scaled.hessian, &vec![1.0; qp.num_vars()], cost);
    scaled.c.iter_mut().for_each(|c| *c *= cost);
    sc.cost = cost;
    (scaled, sc)
}
