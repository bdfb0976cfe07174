//! Sparse primal-dual interior-point solver for convex QPs.

mod ipm;
mod kkt;
mod problem;
mod scaling;

pub use ipm::{solve_qp, IterationRecord, QpSolution, SolveStatus, SolverSettings};
pub use kkt::{kkt_residuals, KktResiduals};
pub use problem::{Hessian, LowRankTerm, QuadraticProgram};
pub use scaling::{equilibrate, Scaling};

use std::time::Duration;

use crate::error::Result;
use crate::transcription::{QpProblem, Trajectory};

/// Solved planning problem.
#[derive(Debug, Clone)]
pub struct Solution {
    pub trajectory: Trajectory,
    /// K²·s
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub wall_time: Duration,
    pub raw: QpSolution,
}

/// Solves an assembled planning QP and unpacks the trajectory.
pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<Solution> {
    let raw = solve_qp(&problem.qp, settings)?;
    Ok(Solution {
        trajectory: problem.trajectory(&raw.x),
        objective: raw.objective,
        status: raw.status,
        residuals: raw.residuals,
        iterations: raw.iterations,
        wall_time: raw.wall_time,
        raw,
    })
}
