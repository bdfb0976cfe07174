//! Thermal optimal-control planning for melting-based additive manufacturing.
//!
//! The crate is organised as a pipeline:
//!
//! * [`transport`] voxelizes the part and assembles the linear conduction /
//!   convection dynamics `dT/dt = A T + e`.
//! * [`input`] maps per-surface-voxel power commands into the state
//!   derivative (`B u`).
//! * [`objective`] builds the masked thermal-variance weight.
//! * [`transcription`] discretizes the dynamics in time and assembles the
//!   convex quadratic program.
//! * [`solver`] is a sparse primal-dual interior-point QP solver.
//! * [`beamplan`] turns power fields into spot-melt beam sequences.
//! * [`simulate`] replays fields or beam sequences and scores them.

pub mod beamplan;
pub mod error;
pub mod input;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod simulate;
pub mod solver;
pub mod sparse;
pub mod transcription;
pub mod transport;

pub use error::{Error, Result};
pub use input::{build_power_field_input, InputMap, PowerFieldTrajectory};
pub use model::ProcessModel;
pub use objective::{MaskVector, VarianceWeight};
pub use transcription::{MeltLimits, Phase, QpProblem, Schedule, Trajectory};
pub use transport::{
    assemble_dynamics, build_voxel_grid, Environment, LinearDynamics, Material, Occupancy,
    VoxelMesh,
};
