//! One-layer process model: geometry, physics, actuator and melt target.

use crate::error::{check_len, invalid, Result};
use crate::input::{build_power_field_input, InputMap};
use crate::objective::{build_variance_weight, MaskVector, VarianceWeight};
use crate::transcription::{assemble_qp, MeltLimits, QpProblem, Schedule};
use crate::transport::{
    assemble_dynamics, build_voxel_grid, Environment, LinearDynamics, Material, Occupancy,
    VoxelMesh,
};

#[derive(Debug, Clone)]
pub struct ProcessModel {
    pub mesh: VoxelMesh,
    pub material: Material,
    pub environment: Environment,
    pub dynamics: LinearDynamics,
    pub input: InputMap,
    pub mask: MaskVector,
    pub weight: VarianceWeight,
    pub limits: MeltLimits,
}

impl ProcessModel {
    /// Builds the model from a mesh whose melt flags mark the target.
    pub fn new(
        mesh: VoxelMesh,
        material: Material,
        environment: Environment,
        limits: MeltLimits,
        p_min: f64,
        p_max: f64,
    ) -> Result<Self> {
        let dynamics = assemble_dynamics(&mesh, &material, &environment)?;
        let input = build_power_field_input(&mesh, &material).with_power_limits(p_min, p_max)?;
        let mask = MaskVector::new(mesh.melt_flags().to_vec())?;
        let weight = build_variance_weight(&mask);
        limits.validate()?;
        Ok(Self {
            mesh,
            material,
            environment,
            dynamics,
            input,
            mask,
            weight,
            limits,
        })
    }

    /// Full `nx × ny × layers` box of powder/part whose top layer is melted
    /// where `target[y][x]` is set.
    pub fn layer(
        target: &[Vec<bool>],
        layers: usize,
        voxel_size: f64,
        material: Material,
        environment: Environment,
        limits: MeltLimits,
        power: f64,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(invalid("layers", "must be at least 1"));
        }
        let ny = target.len();
        let nx = target.first().map_or(0, Vec::len);
        for row in target {
            check_len("target row", nx, row.len())?;
        }
        let mesh = build_voxel_grid(&Occupancy::filled(nx, ny, layers), voxel_size)?
            .with_melt_region(|[x, y, z]| z + 1 == layers && target[y][x]);
        Self::new(mesh, material, environment, limits, power, power)
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn assemble(&self, schedule: &Schedule, t_init: &[f64]) -> Result<QpProblem> {
        assemble_qp(
            &self.dynamics,
            &self.input,
            &self.weight,
            &self.limits,
            schedule,
            t_init,
        )
    }

    /// Surface inputs that lie on the melt target.
    pub fn mask_inputs(&self) -> Vec<usize> {
        crate::beamplan::mask_surface_inputs(&self.input, &self.mask)
    }
}
