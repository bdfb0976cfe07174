mod oracle;

use meltplan_core::simulate::simulate_fields;
use meltplan_core::solver::{solve, SolveStatus, SolverSettings};
use meltplan_core::transcription::{ConstraintFamily, CycleSpec};
use meltplan_core::*;
use nalgebra::{DMatrix, SymmetricEigen};

const T0: f64 = 1100.0;

fn limits() -> MeltLimits {
    MeltLimits::new(1658.0, 1723.0).unwrap()
}

fn env() -> Environment {
    Environment::new(10.0, T0, T0).unwrap()
}

/// 4 × 3 × 2 block whose top layer melts on two central cells.
fn small_mesh() -> VoxelMesh {
    build_voxel_grid(&Occupancy::filled(4, 3, 2), 2e-4)
        .unwrap()
        .with_melt_region(|[x, y, z]| z == 1 && y == 1 && (1..3).contains(&x))
}

fn small_model(mesh: VoxelMesh, p_min: f64, p_max: f64) -> ProcessModel {
    ProcessModel::new(mesh, Material::stainless_316l(), env(), limits(), p_min, p_max).unwrap()
}

fn tight() -> SolverSettings {
    SolverSettings {
        kkt_tolerance: 1e-10,
        ..SolverSettings::default()
    }
}

fn two_cycles() -> Schedule {
    Schedule::from_cycles(
        1e-4,
        &[
            CycleSpec {
                build_steps: 12,
                cool_steps: 4,
            },
            CycleSpec {
                build_steps: 10,
                cool_steps: 6,
            },
        ],
    )
    .unwrap()
}

#[test]
fn constraint_rows_match_the_counting_formula() {
    let sched = two_cycles();
    let knots = sched.len();
    let build = sched.build_count();
    for (p_min, p_max) in [(80.0, 80.0), (10.0, 40.0), (0.0, 40.0)] {
        let model = small_model(small_mesh(), p_min, p_max);
        let (n, m, members) = (model.len(), model.input.len(), model.mask.count());
        let p = model.assemble(&sched, &vec![T0; n]).unwrap();
        let audit = p.audit();
        let fixed = usize::from(p_min == p_max);
        let upper = 1 - fixed;
        let lower = usize::from(p_min > 0.0 && p_min < p_max);
        assert_eq!(audit.equalities, n + n * (knots - 1) + fixed * build);
        assert_eq!(
            audit.inequalities,
            (n - members) * knots + members * 2 + (upper + lower) * build + m * build
        );
        assert_eq!(p.family_rows(ConstraintFamily::FullMelt), 2 * members);
        assert_eq!(p.family_rows(ConstraintFamily::Nonnegativity), m * build);
        assert_eq!(p.qp.num_vars(), n * knots + m * build);
    }
}

#[test]
fn single_voxel_feasibility_follows_the_closed_form() {
    let material = Material::stainless_316l();
    let mesh = build_voxel_grid(&Occupancy::filled(1, 1, 1), 2e-4)
        .unwrap()
        .insulate_baseplate()
        .with_melt_region(|_| true);
    let dt = 1e-4;
    let c = material.voxel_heat_capacity(2e-4);
    let lim = limits();
    let threshold = (lim.liquidus - T0) * c / dt;
    let insulated = Environment::new(0.0, T0, T0).unwrap();
    let sched = Schedule::all_build(2, dt).unwrap();
    for (scale, feasible) in [(1.01, true), (0.99, false)] {
        let power = threshold * scale;
        let model = ProcessModel::new(mesh.clone(), material, insulated, lim, power, power).unwrap();
        let p = model.assemble(&sched, &[T0]).unwrap();
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        if feasible {
            assert_eq!(sol.status, SolveStatus::Optimal);
            let t1 = sol.trajectory.states[1][0];
            assert!((t1 - (T0 + power * dt / c)).abs() < 1e-6 * t1);
        } else {
            assert_eq!(sol.status, SolveStatus::Infeasible);
        }
    }
}

#[test]
fn voxel_renumbering_leaves_the_optimum_unchanged() {
    let sched = Schedule::all_build(20, 1e-4).unwrap();
    let mesh = small_mesh();
    let n = mesh.len();
    let order: Vec<usize> = (0..n).map(|k| (7 * k + 3) % n).collect();
    let base = small_model(mesh.clone(), 80.0, 80.0);
    let perm = small_model(mesh.permuted(&order).unwrap(), 80.0, 80.0);
    let a = solve(&base.assemble(&sched, &vec![T0; n]).unwrap(), &tight()).unwrap();
    let b = solve(&perm.assemble(&sched, &vec![T0; n]).unwrap(), &tight()).unwrap();
    assert_eq!(a.status, SolveStatus::Optimal);
    assert_eq!(b.status, SolveStatus::Optimal);
    assert!(
        (a.objective - b.objective).abs() <= 1e-9 * a.objective.abs(),
        "{} vs {}",
        a.objective,
        b.objective
    );
    for (k, (sa, sb)) in a.trajectory.states.iter().zip(&b.trajectory.states).enumerate() {
        for (new, &old) in order.iter().enumerate() {
            assert!((sa[old] - sb[new]).abs() < 1e-4, "knot {k} voxel {old}");
        }
    }
}

#[test]
fn all_cool_objective_is_the_free_response_variance() {
    let model = small_model(small_mesh(), 80.0, 80.0);
    let n = model.len();
    let sched = Schedule::from_cycles(
        1e-4,
        &[CycleSpec {
            build_steps: 0,
            cool_steps: 15,
        }],
    )
    .unwrap();
    let t_init: Vec<f64> = (0..n).map(|i| 1200.0 + 25.0 * (i % 5) as f64).collect();
    let p = model.assemble(&sched, &t_init).unwrap();
    assert_eq!(p.audit().inequalities, (n - model.mask.count()) * sched.len());
    let sol = solve(&p, &tight()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);

    let zero = PowerFieldTrajectory::zeros(sched.len() - 1, model.input.len());
    let free = simulate_fields(
        &model.dynamics,
        &model.input,
        &zero,
        &model.weight,
        &t_init,
        &sched,
        1,
    )
    .unwrap();
    let direct: f64 = free
        .knot_states()
        .iter()
        .map(|t| oracle::masked_variance(t, model.mask.members()) * 1e-4)
        .sum();
    assert!((sol.objective - direct).abs() <= 1e-9 * direct, "{} vs {direct}", sol.objective);
    assert!((free.cumulative_variance() - direct).abs() <= 1e-9 * direct);
}

#[test]
fn optimal_plan_respects_the_melt_bounds() {
    let model = small_model(small_mesh(), 80.0, 80.0);
    let sched = two_cycles();
    let p = model.assemble(&sched, &vec![T0; model.len()]).unwrap();
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let lim = limits();
    let states = &sol.trajectory.states;
    for t in states {
        for i in model.mask.off_mask() {
            assert!(t[i] <= lim.solidus * (1.0 + 1e-6), "off-mask {i}: {}", t[i]);
        }
    }
    for k in sched.melt_knots() {
        for &i in model.mask.members() {
            assert!(states[k][i] >= lim.liquidus * (1.0 - 1e-6), "knot {k} voxel {i}");
        }
    }
    for u in &sol.trajectory.inputs {
        assert!(u.iter().all(|&v| v >= -1e-6));
    }
}

#[test]
fn planning_hessian_is_positive_semidefinite() {
    let model = small_model(small_mesh(), 80.0, 80.0);
    let sched = Schedule::all_build(3, 1e-4).unwrap();
    let p = model.assemble(&sched, &vec![T0; model.len()]).unwrap();
    let h = p.qp.hessian.to_dense();
    let nv = h.len();
    let m = DMatrix::from_fn(nv, nv, |i, j| h[i][j]);
    assert!((&m - m.transpose()).amax() < 1e-15);
    let eig = SymmetricEigen::new(m.clone());
    let scale = m.amax();
    assert!(eig.eigenvalues.min() >= -1e-12 * scale, "{}", eig.eigenvalues.min());
}

