use super::problem::QuadraticProgram;
use crate::sparse::{self, norm_inf};

/// Scaled optimality measures of a primal/dual point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Residuals of `(x, y, z)` for the Lagrangian `½xᵀHx + cᵀx + yᵀ(Ax − b) +
/// zᵀ(Gx − h)`:
///
/// * stationarity `‖Hx + c + Aᵀy + Gᵀz‖∞`, relative to the largest term;
/// * primal `‖Ax − b‖∞` and `‖(Gx − h)₊‖∞`, each relative to its operands;
/// * dual `‖z₋‖∞`;
/// * complementarity `|zᵀ(h − Gx)|`, relative to `1 + max(|primal obj|, |dual obj|)`.
pub fn kkt_residuals(qp: &QuadraticProgram, x: &[f64], y: &[f64], z: &[f64]) -> KktResiduals {
    let hx = qp.hessian.apply(x);
    let mut aty = vec![0.0; x.len()];
    sparse::transpose_matvec_acc(&qp.a, y, &mut aty);
    let mut gtz = vec![0.0; x.len()];
    sparse::transpose_matvec_acc(&qp.g, z, &mut gtz);
    let grad: Vec<f64> = (0..x.len())
        .map(|i| hx[i] + qp.c[i] + aty[i] + gtz[i])
        .collect();
    let stat_scale = 1.0
        + norm_inf(&hx)
            .max(norm_inf(&qp.c))
            .max(norm_inf(&aty))
            .max(norm_inf(&gtz));
    let stationarity = norm_inf(&grad) / stat_scale;

    let ax = sparse::matvec(&qp.a, x);
    let eq: Vec<f64> = ax.iter().zip(&qp.b).map(|(a, b)| a - b).collect();
    let eq_res = norm_inf(&eq) / (1.0 + norm_inf(&ax).max(norm_inf(&qp.b)));
    let gx = sparse::matvec(&qp.g, x);
    let viol = gx
        .iter()
        .zip(&qp.h)
        .map(|(g, h)| (g - h).max(0.0))
        .fold(0.0, f64::max);
    let in_res = viol / (1.0 + norm_inf(&gx).max(norm_inf(&qp.h)));
    let primal = eq_res.max(in_res);

    let dual = z.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);

    let xhx = sparse::dot(x, &hx);
    let pobj = 0.5 * xhx + sparse::dot(&qp.c, x);
    let dobj = -0.5 * xhx - sparse::dot(&qp.b, y) - sparse::dot(&qp.h, z);
    let gap: f64 = z.iter().zip(qp.h.iter().zip(&gx)).map(|(z, (h, g))| z * (h - g)).sum();
    let complementarity = gap.abs() / (1.0 + pobj.abs().max(dobj.abs()));

    KktResiduals {
        stationarity,
        primal,
        dual,
        complementarity,
    }
}
