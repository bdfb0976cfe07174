use crate::error::{check_len, invalid, Error, Result};
use crate::input::InputMap;
use crate::linalg::{CholeskyFactor, SymmetricCsc};
use crate::sparse::{self, SparseMatrix};
use crate::transport::LinearDynamics;

/// Implicit Euler step `(I − Δt A) T₊ = T + Δt (B u + e)`.
///
/// Equivalent to the explicit form `T₊ = A_d T + B_d u + e_d` with
/// `A_d = (I − Δt A)⁻¹`, `B_d = Δt A_d B`, `e_d = Δt A_d e`, but keeps the
/// sparse implicit matrix instead of the dense inverse.
#[derive(Debug)]
pub struct ImplicitEulerStep {
    dt: f64,
    /// `I − Δt A`
    system: SparseMatrix,
    factor: CholeskyFactor,
    e_dt: Vec<f64>,
    input: InputMap,
}

pub fn discretize(dynamics: &LinearDynamics, input: &InputMap, dt: f64) -> Result<ImplicitEulerStep> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let n = dynamics.dim();
    check_len("input map rows", n, input.state_dim())?;
    let entries: Vec<(usize, usize, f64)> = sparse::triplets(&dynamics.a)
        .into_iter()
        .map(|(i, j, v)| (i, j, if i == j { 1.0 - dt * v } else { -dt * v }))
        .collect();
    let system = sparse::from_triplets(n, n, &entries);
    for (i, row) in system.outer_iterator().enumerate() {
        let mut diag = 0.0;
        let mut off = 0.0;
        for (j, &v) in row.iter() {
            if i == j {
                diag = v;
            } else {
                off += v.abs();
            }
        }
        if diag < off {
            return Err(Error::Singular(format!(
                "I - dt*A is not diagonally dominant in row {i}"
            )));
        }
    }
    let factor = CholeskyFactor::new(&SymmetricCsc::from_symmetric_csr(&system))?;
    Ok(ImplicitEulerStep {
        dt,
        system,
        factor,
        e_dt: dynamics.e.iter().map(|e| e * dt).collect(),
        input: input.clone(),
    })
}

impl ImplicitEulerStep {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.e_dt.len()
    }

    /// `I − Δt A`.
    pub fn system_matrix(&self) -> &SparseMatrix {
        &self.system
    }

    pub fn input(&self) -> &InputMap {
        &self.input
    }

    /// Advances with commanded power `u` (W per input; empty for none).
    pub fn step(&self, t: &[f64], u: &[f64]) -> Vec<f64> {
        let mut rhs: Vec<f64> = t.iter().zip(&self.e_dt).map(|(t, e)| t + e).collect();
        if !u.is_empty() {
            self.input.apply_acc(u, self.dt, &mut rhs);
        }
        self.factor.solve_in_place(&mut rhs);
        rhs
    }

    /// Advances with a per-voxel power vector (W per voxel).
    pub fn step_voxel_power(&self, t: &[f64], power: &[f64]) -> Vec<f64> {
        let scale = self.dt / self.input.heat_capacity();
        let mut rhs: Vec<f64> = t
            .iter()
            .zip(&self.e_dt)
            .zip(power)
            .map(|((t, e), p)| t + e + scale * p)
            .collect();
        self.factor.solve_in_place(&mut rhs);
        rhs
    }

    /// `(I − Δt A) T₊ − T − Δt (B u + e)`.
    pub fn residual(&self, t: &[f64], u: &[f64], t_next: &[f64]) -> Vec<f64> {
        let mut r = sparse::matvec(&self.system, t_next);
        for i in 0..r.len() {
            r[i] -= t[i] + self.e_dt[i];
        }
        if !u.is_empty() {
            self.input.apply_acc(u, -self.dt, &mut r);
        }
        r
    }
}
