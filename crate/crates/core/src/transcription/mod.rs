//! Time discretization and QP assembly.

mod assemble;
mod collocation;
mod discretize;
pub mod export;
mod schedule;

pub use assemble::{
    assemble_qp, ConstraintAudit, ConstraintFamily, FamilyViolation, Layout, QpProblem,
};
pub use collocation::hermite_simpson_defect;
pub use discretize::{discretize, ImplicitEulerStep};
pub use schedule::{CycleSpec, Phase, Schedule};

use crate::error::{invalid, Result};
use crate::input::PowerFieldTrajectory;

/// Solidus and liquidus temperatures, K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeltLimits {
    pub solidus: f64,
    pub liquidus: f64,
}

impl MeltLimits {
    pub fn new(solidus: f64, liquidus: f64) -> Result<Self> {
        let l = Self { solidus, liquidus };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.solidus > 0.0 && self.solidus <= self.liquidus && self.liquidus.is_finite()) {
            return Err(invalid(
                "melt limits",
                format!("need 0 < T_s <= T_l, got {} and {}", self.solidus, self.liquidus),
            ));
        }
        Ok(())
    }
}

/// Knot states and the inputs applied over each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub dt: Vec<f64>,
    pub phases: Vec<Phase>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn power_field(&self) -> PowerFieldTrajectory {
        PowerFieldTrajectory::new(self.inputs.clone())
    }
}
