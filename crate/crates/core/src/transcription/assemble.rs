use std::ops::Range;

use super::discretize::discretize;
use super::schedule::Schedule;
use super::{MeltLimits, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::input::InputMap;
use crate::objective::VarianceWeight;
use crate::solver::{Hessian, LowRankTerm, QuadraticProgram};
use crate::sparse::{self, from_triplets};
use crate::transport::LinearDynamics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintFamily {
    InitialCondition,
    Dynamics,
    TotalPower,
    PowerUpper,
    PowerLower,
    NoMelt,
    FullMelt,
    Nonnegativity,
}

impl ConstraintFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintFamily::InitialCondition => "initial_condition",
            ConstraintFamily::Dynamics => "dynamics",
            ConstraintFamily::TotalPower => "total_power",
            ConstraintFamily::PowerUpper => "power_upper",
            ConstraintFamily::PowerLower => "power_lower",
            ConstraintFamily::NoMelt => "no_melt",
            ConstraintFamily::FullMelt => "full_melt",
            ConstraintFamily::Nonnegativity => "nonnegativity",
        }
    }
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Decision vector layout: all knot states `T_0 … T_{N−1}`, then the inputs
/// of the build steps in step order. Cool-step inputs are not variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub state_dim: usize,
    pub input_dim: usize,
    pub knots: usize,
    input_offset: Vec<Option<usize>>,
    total: usize,
}

impl Layout {
    fn new(state_dim: usize, input_dim: usize, schedule: &Schedule) -> Self {
        let mut next = state_dim * schedule.len();
        let input_offset = (0..schedule.len())
            .map(|k| {
                schedule.is_build(k).then(|| {
                    let off = next;
                    next += input_dim;
                    off
                })
            })
            .collect();
        Self {
            state_dim,
            input_dim,
            knots: schedule.len(),
            input_offset,
            total: next,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.total
    }

    pub fn state(&self, k: usize) -> Range<usize> {
        k * self.state_dim..(k + 1) * self.state_dim
    }

    pub fn input(&self, k: usize) -> Option<Range<usize>> {
        self.input_offset[k].map(|o| o..o + self.input_dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintAudit {
    pub equalities: usize,
    pub inequalities: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyViolation {
    pub family: ConstraintFamily,
    /// Largest violation in the family, in constraint units.
    pub max: f64,
    /// Largest violation relative to `1 + |rhs|`.
    pub relative: f64,
}

/// Planning QP together with the bookkeeping needed to interpret it.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub qp: QuadraticProgram,
    pub layout: Layout,
    pub schedule: Schedule,
    pub eq_blocks: Vec<(ConstraintFamily, Range<usize>)>,
    pub ineq_blocks: Vec<(ConstraintFamily, Range<usize>)>,
}

struct Rows {
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
    blocks: Vec<(ConstraintFamily, Range<usize>)>,
}

impl Rows {
    fn new() -> Self {
        Self {
            triplets: Vec::new(),
            rhs: Vec::new(),
            blocks: Vec::new(),
        }
    }

    fn push(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.rhs.len();
        self.triplets.extend(entries.into_iter().map(|(c, v)| (r, c, v)));
        self.rhs.push(rhs);
    }

    fn family(&mut self, family: ConstraintFamily, f: impl FnOnce(&mut Self)) {
        let start = self.rhs.len();
        f(self);
        if self.rhs.len() > start {
            self.blocks.push((family, start..self.rhs.len()));
        }
    }
}

/// Assembles the planning QP:
///
/// * objective `Σ_k ½ T_kᵀ Q T_k Δt` over all knots;
/// * `T_0 = T_init` and implicit-Euler dynamics between consecutive knots;
/// * total power per build step (one equality row when `P_min = P_max`);
/// * `T_k,i ≤ T_s` off the mask at every knot;
/// * `T_k,i ≥ T_l` on the mask at the knot ending each cycle's build period;
/// * `u ≥ 0`.
pub fn assemble_qp(
    dynamics: &LinearDynamics,
    input: &InputMap,
    weight: &VarianceWeight,
    limits: &MeltLimits,
    schedule: &Schedule,
    t_init: &[f64],
) -> Result<QpProblem> {
    let n = dynamics.dim();
    check_len("input map rows", n, input.state_dim())?;
    check_len("variance weight", n, weight.dim())?;
    check_len("initial state", n, t_init.len())?;
    limits.validate()?;
    let dt = schedule.uniform_dt().ok_or_else(|| {
        Error::Unsupported("variable timesteps are not supported by the QP transcription".into())
    })?;
    let mask = weight.mask();

    if let Some(i) = mask.off_mask().find(|&i| t_init[i] > limits.solidus) {
        return Err(Error::Infeasible(format!(
            "{}: initial temperature {} K of off-mask voxel {i} exceeds the solidus",
            ConstraintFamily::NoMelt,
            t_init[i]
        )));
    }
    let melt_knots = schedule.melt_knots();
    if melt_knots.contains(&0) {
        if let Some(&i) = mask.members().iter().find(|&&i| t_init[i] < limits.liquidus) {
            return Err(Error::Infeasible(format!(
                "{}: melt knot coincides with the initial state and voxel {i} is below the liquidus",
                ConstraintFamily::FullMelt
            )));
        }
    }
    let m = input.len();
    if schedule.build_count() > 0 && m == 0 && input.p_min > 0.0 {
        return Err(Error::Infeasible(format!(
            "{}: no controllable inputs but a positive minimum power",
            ConstraintFamily::TotalPower
        )));
    }

    let layout = Layout::new(n, m, schedule);
    let step = discretize(dynamics, input, dt)?;
    let system = sparse::triplets(step.system_matrix());
    let knots = schedule.len();

    // objective
    let d = weight.diagonal() * dt;
    let mut h_trip = Vec::with_capacity(knots * mask.count());
    let mut low_rank = Vec::with_capacity(knots);
    for k in 0..knots {
        let off = layout.state(k).start;
        for &i in mask.members() {
            h_trip.push((off + i, off + i, d));
        }
        low_rank.push(LowRankTerm {
            coef: weight.rank_one() * dt,
            indices: mask.members().iter().map(|&i| off + i).collect(),
            values: vec![1.0; mask.count()],
        });
    }
    let nv = layout.num_vars();
    let hessian = Hessian {
        sparse: from_triplets(nv, nv, &h_trip),
        low_rank,
    };

    // equalities
    let mut eq = Rows::new();
    eq.family(ConstraintFamily::InitialCondition, |rows| {
        for i in 0..n {
            rows.push([(i, 1.0)], t_init[i]);
        }
    });
    let b_scale = -dt / input.heat_capacity();
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, v) in &system {
        by_row[i].push((j, v));
    }
    let mut input_of_voxel: Vec<Option<usize>> = vec![None; n];
    for (j, &v) in input.surface_voxels().iter().enumerate() {
        input_of_voxel[v] = Some(j);
    }
    eq.family(ConstraintFamily::Dynamics, |rows| {
        for k in 0..knots.saturating_sub(1) {
            let cur = layout.state(k).start;
            let next = layout.state(k + 1).start;
            let u = layout.input(k);
            for i in 0..n {
                let mut entries: Vec<(usize, f64)> =
                    by_row[i].iter().map(|&(j, v)| (next + j, v)).collect();
                entries.push((cur + i, -1.0));
                if let (Some(u), Some(j)) = (&u, input_of_voxel[i]) {
                    entries.push((u.start + j, b_scale));
                }
                rows.push(entries, dt * dynamics.e[i]);
            }
        }
    });
    let fixed = input.fixed_power();
    if let Some(p) = fixed {
        eq.family(ConstraintFamily::TotalPower, |rows| {
            for k in schedule.build_steps() {
                let u = layout.input(k).expect("build step has inputs");
                rows.push(u.map(|c| (c, 1.0)), p);
            }
        });
    }

    // inequalities
    let mut ineq = Rows::new();
    if fixed.is_none() {
        if input.p_max.is_finite() {
            ineq.family(ConstraintFamily::PowerUpper, |rows| {
                for k in schedule.build_steps() {
                    let u = layout.input(k).expect("build step has inputs");
                    rows.push(u.map(|c| (c, 1.0)), input.p_max);
                }
            });
        }
        if input.p_min > 0.0 {
            ineq.family(ConstraintFamily::PowerLower, |rows| {
                for k in schedule.build_steps() {
                    let u = layout.input(k).expect("build step has inputs");
                    rows.push(u.map(|c| (c, -1.0)), -input.p_min);
                }
            });
        }
    }
    let off_mask: Vec<usize> = mask.off_mask().collect();
    ineq.family(ConstraintFamily::NoMelt, |rows| {
        for k in 0..knots {
            let s = layout.state(k).start;
            for &i in &off_mask {
                rows.push([(s + i, 1.0)], limits.solidus);
            }
        }
    });
    ineq.family(ConstraintFamily::FullMelt, |rows| {
        for &k in &melt_knots {
            let s = layout.state(k).start;
            for &i in mask.members() {
                rows.push([(s + i, -1.0)], -limits.liquidus);
            }
        }
    });
    ineq.family(ConstraintFamily::Nonnegativity, |rows| {
        for k in schedule.build_steps() {
            for c in layout.input(k).expect("build step has inputs") {
                rows.push([(c, -1.0)], 0.0);
            }
        }
    });

    let qp = QuadraticProgram::new(
        hessian,
        vec![0.0; nv],
        from_triplets(eq.rhs.len(), nv, &eq.triplets),
        eq.rhs,
        from_triplets(ineq.rhs.len(), nv, &ineq.triplets),
        ineq.rhs,
    )?;
    Ok(QpProblem {
        qp,
        layout,
        schedule: schedule.clone(),
        eq_blocks: eq.blocks,
        ineq_blocks: ineq.blocks,
    })
}

impl QpProblem {
    pub fn audit(&self) -> ConstraintAudit {
        ConstraintAudit {
            equalities: self.qp.num_eq(),
            inequalities: self.qp.num_ineq(),
        }
    }

    pub fn family_rows(&self, family: ConstraintFamily) -> usize {
        self.eq_blocks
            .iter()
            .chain(&self.ineq_blocks)
            .filter(|(f, _)| *f == family)
            .map(|(_, r)| r.len())
            .sum()
    }

    /// Unpacks a decision vector. Cool-step inputs come back as zeros.
    pub fn trajectory(&self, x: &[f64]) -> Trajectory {
        let l = &self.layout;
        Trajectory {
            states: (0..l.knots).map(|k| x[l.state(k)].to_vec()).collect(),
            inputs: (0..l.knots)
                .map(|k| match l.input(k) {
                    Some(r) => x[r].to_vec(),
                    None => vec![0.0; l.input_dim],
                })
                .collect(),
            dt: self.schedule.dt().to_vec(),
            phases: self.schedule.phases().to_vec(),
        }
    }

    /// Packs a trajectory into a decision vector.
    pub fn pack(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let l = &self.layout;
        check_len("trajectory knots", l.knots, traj.states.len())?;
        check_len("trajectory inputs", l.knots, traj.inputs.len())?;
        let mut x = vec![0.0; l.num_vars()];
        for k in 0..l.knots {
            check_len("trajectory state", l.state_dim, traj.states[k].len())?;
            x[l.state(k)].copy_from_slice(&traj.states[k]);
            if let Some(r) = l.input(k) {
                check_len("trajectory input", l.input_dim, traj.inputs[k].len())?;
                x[r].copy_from_slice(&traj.inputs[k]);
            }
        }
        Ok(x)
    }

    /// Largest violation of each constraint family at `x`.
    pub fn violations(&self, x: &[f64]) -> Vec<FamilyViolation> {
        let ax = sparse::matvec(&self.qp.a, x);
        let gx = sparse::matvec(&self.qp.g, x);
        let mut out = Vec::new();
        let mut scan = |blocks: &[(ConstraintFamily, Range<usize>)],
                        lhs: &[f64],
                        rhs: &[f64],
                        eq: bool| {
            for (family, range) in blocks {
                let mut max = 0.0f64;
                let mut relative = 0.0f64;
                for r in range.clone() {
                    let v = if eq {
                        (lhs[r] - rhs[r]).abs()
                    } else {
                        (lhs[r] - rhs[r]).max(0.0)
                    };
                    max = max.max(v);
                    relative = relative.max(v / (1.0 + rhs[r].abs()));
                }
                out.push(FamilyViolation {
                    family: *family,
                    max,
                    relative,
                });
            }
        };
        scan(&self.eq_blocks, &ax, &self.qp.b, true);
        scan(&self.ineq_blocks, &gx, &self.qp.h, false);
        out
    }

    /// First family, in assembly order, with a relative violation above `tol`.
    pub fn first_violated(&self, x: &[f64], tol: f64) -> Option<ConstraintFamily> {
        self.violations(x)
            .into_iter()
            .find(|v| v.relative > tol)
            .map(|v| v.family)
    }
}
