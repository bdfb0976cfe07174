//! Power-field input model: commanded power on each controllable surface
//! voxel enters that voxel's energy balance directly, `dT/dt += B u` with
//! `B[i, j] = 1/C` when surface input `j` is voxel `i`.

use crate::error::{check_len, invalid, Result};
use crate::sparse::{self, SparseMatrix};
use crate::transcription::Schedule;
use crate::transport::{Material, VoxelMesh};
use sprs::CsMat;

#[derive(Debug, Clone)]
pub struct InputMap {
    /// n × m, K/(s·W)
    pub b: SparseMatrix,
    surface_voxels: Vec<usize>,
    /// W
    pub p_min: f64,
    /// W
    pub p_max: f64,
    heat_capacity: f64,
}

/// Every voxel on the top level of the mesh becomes a controllable input.
/// Power limits start unbounded (`0 ..= ∞`).
pub fn build_power_field_input(mesh: &VoxelMesh, material: &Material) -> InputMap {
    let surface = mesh.top_surface();
    let cap = material.voxel_heat_capacity(mesh.voxel_size());
    InputMap::new(mesh.len(), surface, cap)
}

impl InputMap {
    pub fn new(n: usize, surface_voxels: Vec<usize>, heat_capacity: f64) -> Self {
        let m = surface_voxels.len();
        // CSC of B is one entry per column; store CSR by transposing.
        let b_csc = CsMat::new_csc(
            (n, m),
            (0..=m).collect(),
            surface_voxels.clone(),
            vec![1.0 / heat_capacity; m],
        );
        Self {
            b: b_csc.to_csr(),
            surface_voxels,
            p_min: 0.0,
            p_max: f64::INFINITY,
            heat_capacity,
        }
    }

    pub fn with_power_limits(mut self, p_min: f64, p_max: f64) -> Result<Self> {
        if !(p_min >= 0.0 && p_min <= p_max) {
            return Err(invalid(
                "power limits",
                format!("need 0 <= p_min <= p_max, got {p_min}..{p_max}"),
            ));
        }
        self.p_min = p_min;
        self.p_max = p_max;
        Ok(self)
    }

    /// Number of inputs `m`.
    pub fn len(&self) -> usize {
        self.surface_voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface_voxels.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.b.rows()
    }

    pub fn surface_voxels(&self) -> &[usize] {
        &self.surface_voxels
    }

    pub fn heat_capacity(&self) -> f64 {
        self.heat_capacity
    }

    /// Whether total power is pinned to a single value.
    pub fn fixed_power(&self) -> Option<f64> {
        (self.p_min == self.p_max).then_some(self.p_max)
    }

    /// `B u`, K/s.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        sparse::matvec(&self.b, u)
    }

    /// `y += scale · B u`.
    pub fn apply_acc(&self, u: &[f64], scale: f64, y: &mut [f64]) {
        let inv_c = scale / self.heat_capacity;
        for (&i, &uj) in self.surface_voxels.iter().zip(u) {
            y[i] += inv_c * uj;
        }
    }
}

/// Sequence of per-step input vectors `u_k` (W), one per schedule knot.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFieldTrajectory {
    pub inputs: Vec<Vec<f64>>,
}

impl PowerFieldTrajectory {
    pub fn new(inputs: Vec<Vec<f64>>) -> Self {
        Self { inputs }
    }

    pub fn zeros(steps: usize, m: usize) -> Self {
        Self {
            inputs: vec![vec![0.0; m]; steps],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn total_power(&self, k: usize) -> f64 {
        self.inputs[k].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerViolation {
    Negative { step: usize, input: usize, value: f64 },
    BelowMinimum { step: usize, total: f64 },
    AboveMaximum { step: usize, total: f64 },
    PoweredCoolStep { step: usize, input: usize, value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerFieldReport {
    pub violations: Vec<PowerViolation>,
}

impl PowerFieldReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks nonnegativity, the total-power window on build steps and zero
/// input on cool steps. Totals are compared with a relative slack of 1e-9.
pub fn validate_power_field(
    traj: &PowerFieldTrajectory,
    map: &InputMap,
    schedule: &Schedule,
) -> Result<PowerFieldReport> {
    check_len("power field steps", schedule.len(), traj.len())?;
    let mut report = PowerFieldReport::default();
    let slack = 1e-9 * map.p_max.clamp(1.0, f64::MAX);
    for (k, u) in traj.inputs.iter().enumerate() {
        check_len("power field inputs", map.len(), u.len())?;
        let build = schedule.is_build(k);
        for (j, &v) in u.iter().enumerate() {
            if v < 0.0 {
                report.violations.push(PowerViolation::Negative {
                    step: k,
                    input: j,
                    value: v,
                });
            }
            if !build && v != 0.0 {
                report.violations.push(PowerViolation::PoweredCoolStep {
                    step: k,
                    input: j,
                    value: v,
                });
            }
        }
        if build {
            let total: f64 = u.iter().sum();
            if total < map.p_min - slack {
                report
                    .violations
                    .push(PowerViolation::BelowMinimum { step: k, total });
            }
            if total > map.p_max + slack {
                report
                    .violations
                    .push(PowerViolation::AboveMaximum { step: k, total });
            }
        }
    }
    Ok(report)
}
