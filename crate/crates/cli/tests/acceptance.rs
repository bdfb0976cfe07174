//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any check fails. The full-scale run (criterion 2) is long and
//! memory hungry; it runs only when `MELTPLAN_FULL_SCALE` is set.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use meltplan_cli::pipeline::{self, CompareReport, RunOptions, Setup};
use meltplan_cli::RunConfig;
use meltplan_core::solver::{solve_qp, SolveStatus, SolverSettings, Solution};
use meltplan_core::transcription::{discretize, hermite_simpson_defect, QpProblem};
use meltplan_core::transport::graph_laplacian;
use meltplan_core::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_meltplan");

const MIN_EXACT_REDUCTION: f64 = 70.0;
const MIN_GREEDY_REDUCTION: f64 = 60.0;
const MAX_DESK_RUNTIME: Duration = Duration::from_secs(300);
const MAX_FULL_SCALE_MB: f64 = 32.0 * 1024.0;
const GREEDY_SEPARATION: f64 = 0.05;
const BOUND_TOL: f64 = 1e-6;
const QUADRATIC_FORM_TOL: f64 = 1e-9;
const QP_TOL: f64 = 1e-6;
const EULER_RATIO: (f64, f64) = (2.0, 0.2);
const HS_RATIO: (f64, f64) = (32.0, 0.25);
const ENERGY_TOL: f64 = 1e-6;
const NULLSPACE_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    skipped: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        skipped: false,
        detail: detail.into(),
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&configs().join(name)).expect("bundled config loads")
}

fn options(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        verbose: false,
    }
}

fn reduction(opt: f64, base: f64) -> f64 {
    100.0 * (1.0 - opt / base)
}

fn variance_reduction(report: &CompareReport, elapsed: Duration) -> Outcome {
    let ue = report.cumulative("uniform_exact");
    let ug = report.cumulative("uniform_greedy");
    let exact = reduction(report.cumulative("optimized_exact"), ue);
    let greedy = reduction(report.cumulative("optimized_greedy"), ue);
    let greedy_vs_greedy = reduction(report.cumulative("optimized_greedy"), ug);
    outcome(
        exact >= MIN_EXACT_REDUCTION && greedy >= MIN_GREEDY_REDUCTION && elapsed <= MAX_DESK_RUNTIME,
        format!(
            "desk: exact {exact:.1}% (>= {MIN_EXACT_REDUCTION}%), greedy {greedy:.1}% (>= {MIN_GREEDY_REDUCTION}%) below uniform exact; greedy vs uniform greedy {greedy_vs_greedy:.1}%; runtime {:.1} s (<= {} s)",
            elapsed.as_secs_f64(),
            MAX_DESK_RUNTIME.as_secs()
        ),
    )
}

fn full_scale() -> Option<Outcome> {
    std::env::var_os("MELTPLAN_FULL_SCALE")?;
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = Command::new(BIN)
        .args(["plan", "--config"])
        .arg(configs().join("demo.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .expect("spawn planner");
    let elapsed = start.elapsed().as_secs_f64();
    if !out.status.success() {
        let tail: String = String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("").into();
        return Some(outcome(
            false,
            format!("24x22x4, 108 steps: planner exited with {} after {elapsed:.0} s: {tail}", out.status),
        ));
    }
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap()
    };
    let summary = read("summary.json");
    let timing = read("plan_timing.json");
    let rss = timing["peak_rss_mb"].as_f64().unwrap_or(f64::NAN);
    Some(outcome(
        summary["status"] == "optimal" && rss < MAX_FULL_SCALE_MB,
        format!(
            "24x22x4, 108 steps: status {}, solve {:.0} s, peak RSS {rss:.0} MB (< {MAX_FULL_SCALE_MB} MB)",
            summary["status"],
            timing["solve_s"].as_f64().unwrap_or(f64::NAN)
        ),
    ))
}

fn ordering(report: &CompareReport) -> Outcome {
    let c = |n| report.cumulative(n);
    let (oe, og, ue, ug, rs) = (
        c("optimized_exact"),
        c("optimized_greedy"),
        c("uniform_exact"),
        c("uniform_greedy"),
        c("random_spot"),
    );
    let random_worst = [oe, og, ue, ug].iter().all(|&v| rs > v);
    let separated = og < (1.0 - GREEDY_SEPARATION) * ug;
    outcome(
        oe <= og && ue <= ug && random_worst && separated,
        format!(
            "opt exact {oe:.4} <= opt greedy {og:.4}; uniform exact {ue:.4} <= uniform greedy {ug:.4}; random {rs:.4} worst; opt greedy {:.1}% below uniform greedy (>= {:.0}%)",
            reduction(og, ug),
            100.0 * GREEDY_SEPARATION
        ),
    )
}

/// Worst relative excess over the no-melt bound and shortfall below the
/// full-melt bound, in units of the bound.
fn bound_excess(setup: &Setup, sol: &Solution) -> (f64, f64) {
    let lim = setup.model.limits;
    let states = &sol.trajectory.states;
    let over = states
        .iter()
        .flat_map(|t| setup.model.mask.off_mask().map(move |i| t[i] / lim.solidus - 1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let under = setup
        .schedule
        .melt_knots()
        .iter()
        .flat_map(|&k| setup.model.mask.members().iter().map(move |&i| 1.0 - states[k][i] / lim.liquidus))
        .fold(f64::NEG_INFINITY, f64::max);
    (over, under)
}

fn constraint_satisfaction(solved: &[(&str, &Setup, &QpProblem, &Solution)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, setup, _, sol) in solved {
        let (over, under) = bound_excess(setup, sol);
        let ok = sol.status == SolveStatus::Optimal && over <= BOUND_TOL && under <= BOUND_TOL;
        pass &= ok;
        let over = if over.is_finite() {
            format!("{over:.2e}")
        } else {
            "none (no off-mask voxels)".into()
        };
        parts.push(format!(
            "{name}: {} off-mask excess {over}, mask shortfall {under:.2e}",
            sol.status
        ));
    }
    outcome(pass, format!("{} (tol {BOUND_TOL:e} relative)", parts.join("; ")))
}

fn oracle_suites() -> Outcome {
    // (a) quadratic form against the direct population variance
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_a: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..60);
        let mut flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        flags[rng.random_range(0..n)] = true;
        let mask = MaskVector::new(flags).unwrap();
        let weight = objective::build_variance_weight(&mask);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(300.0..2500.0)).collect();
        let direct = oracle::masked_variance(&t, mask.members());
        worst_a = worst_a.max((weight.quadratic_form(&t) - direct).abs() / direct.max(1.0));
    }
    let a = worst_a <= QUADRATIC_FORM_TOL;

    // (b) interior point against active-set enumeration
    let settings = SolverSettings {
        kkt_tolerance: 1e-9,
        ..SolverSettings::default()
    };
    let mut worst_b: f64 = 0.0;
    let mut b = true;
    for seed in 0..50 {
        let qp = oracle::DenseQp::random(seed);
        let Some((f, _)) = oracle::active_set_minimum(&qp) else {
            b = false;
            continue;
        };
        let sol = solve_qp(&qp.to_sparse(), &settings).unwrap();
        b &= sol.status == SolveStatus::Optimal;
        worst_b = worst_b.max((sol.objective - f).abs() / (1.0 + f.abs()));
    }
    b &= worst_b <= QP_TOL;

    // (c) implicit Euler against the matrix exponential
    let mesh = build_voxel_grid(&Occupancy::filled(5, 4, 2), 2e-4).unwrap();
    let mat = Material::stainless_316l();
    let dynamics = assemble_dynamics(&mesh, &mat, &Environment::new(10.0, 1100.0, 1100.0).unwrap()).unwrap();
    let input = build_power_field_input(&mesh, &mat);
    let u: Vec<f64> = (0..input.len()).map(|j| if j % 3 == 0 { 40.0 } else { 5.0 }).collect();
    let t0: Vec<f64> = (0..mesh.len()).map(|i| 1100.0 + 3.0 * (i % 7) as f64).collect();
    let a_dense = oracle::dense(&dynamics.a);
    let forcing = DVector::from_vec(dynamics.e.clone()) + DVector::from_vec(input.apply(&u));
    let horizon = 2e-3;
    let exact = oracle::affine_flow(&a_dense, &forcing, &DVector::from_vec(t0.clone()), horizon);
    let errors: Vec<f64> = [8usize, 16, 32, 64]
        .iter()
        .map(|&steps| {
            let step = discretize(&dynamics, &input, horizon / steps as f64).unwrap();
            let mut t = t0.clone();
            for _ in 0..steps {
                t = step.step(&t, &u);
            }
            (DVector::from_vec(t) - &exact).amax()
        })
        .collect();
    let euler: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let c = mesh.len() <= 200
        && euler
            .iter()
            .all(|r| (r - EULER_RATIO.0).abs() <= EULER_RATIO.1 * EULER_RATIO.0);

    // (d) Hermite-Simpson: exact on a cubic, fifth-order defect on 3 voxels
    let x = |t: f64| 1.0 + 2.0 * t - t * t + 0.5 * t.powi(3);
    let dx = |t: f64| 2.0 - 2.0 * t + 1.5 * t * t;
    let cubic = hermite_simpson_defect(|_, u| vec![dx(u[0])], &[x(0.3)], &[0.3], &[x(0.8)], &[0.8], 0.5)[0];
    let mesh3 = build_voxel_grid(&Occupancy::filled(3, 1, 1), 2e-4).unwrap();
    let dyn3 = assemble_dynamics(&mesh3, &mat, &Environment::new(10.0, 1100.0, 1100.0).unwrap()).unwrap();
    let in3 = build_power_field_input(&mesh3, &mat);
    let u3 = vec![2.0, 0.5, 1.0];
    let a3 = oracle::dense(&dyn3.a);
    let f3 = DVector::from_vec(dyn3.e.clone()) + DVector::from_vec(in3.apply(&u3));
    let x0 = DVector::from_vec(vec![1500.0, 1100.0, 1300.0]);
    let rhs = |x: &[f64], u: &[f64]| {
        let mut r = dyn3.rate(x);
        in3.apply_acc(u, 1.0, &mut r);
        r
    };
    let defect = |dt: f64| {
        let x1 = oracle::affine_flow(&a3, &f3, &x0, dt);
        DVector::from_vec(hermite_simpson_defect(rhs, x0.as_slice(), &u3, x1.as_slice(), &u3, dt)).amax()
    };
    let hs: Vec<f64> = [4e-4, 2e-4].iter().map(|&dt| defect(dt) / defect(dt / 2.0)).collect();
    let d = cubic.abs() < 1e-12 && hs.iter().all(|r| (r - HS_RATIO.0).abs() <= HS_RATIO.1 * HS_RATIO.0);

    outcome(
        a && b && c && d,
        format!(
            "(a) {} worst {worst_a:.1e} (<= {QUADRATIC_FORM_TOL:e}); (b) {} worst {worst_b:.1e} over 50 QPs (<= {QP_TOL:e}); (c) {} Euler ratios {euler:.3?} (2 ± 20%); (d) {} cubic defect {cubic:.1e}, ratios {hs:.2?} (32 ± 25%)",
            pf(a),
            pf(b),
            pf(c),
            pf(d)
        ),
    )
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn conservation(setup: &Setup, report: &CompareReport) -> Outcome {
    let row_sum = sparse::row_sums(&graph_laplacian(&setup.model.mesh))
        .iter()
        .fold(0.0f64, |m, s| m.max(s.abs()));
    let energy = report
        .scenarios
        .iter()
        .map(|s| s.result.energy.relative())
        .fold(0.0f64, f64::max);
    let weight = &setup.model.weight;
    let n = setup.model.len();
    let null = weight
        .apply(&vec![1.0; n])
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t: Vec<f64> = (0..n).map(|_| rng.random_range(1000.0..2000.0)).collect();
    let mut moved = t.clone();
    for i in setup.model.mask.off_mask() {
        moved[i] += rng.random_range(-500.0..500.0);
    }
    let base = weight.quadratic_form(&t);
    let invariance = (weight.quadratic_form(&moved) - base).abs() / base.max(1.0);
    outcome(
        row_sum == 0.0 && energy <= ENERGY_TOL && null <= NULLSPACE_TOL && invariance <= NULLSPACE_TOL,
        format!(
            "Laplacian row sums {row_sum:.1e}; worst energy residual {energy:.1e} over {} runs (<= {ENERGY_TOL:e}); |Q 1| {null:.1e}, off-mask change {invariance:.1e} (<= {NULLSPACE_TOL:e})",
            report.scenarios.len()
        ),
    )
}

/// SHA-256 of every non-timing file in `dir`.
fn hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with("_timing.json") {
            continue;
        }
        let digest = Sha256::digest(std::fs::read(&path).unwrap());
        out.insert(name, digest.iter().map(|b| format!("{b:02x}")).collect());
    }
    out
}

fn determinism() -> Outcome {
    let config = configs().join("desk.json");
    let root = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (command, threads) in [("plan", 1), ("plan", 2), ("plan", 2), ("compare", 1), ("compare", 2)] {
        let dir = root.path().join(format!("{command}_{}", runs.len()));
        let out = Command::new(BIN)
            .arg(command)
            .arg("--config")
            .arg(&config)
            .arg("--threads")
            .arg(threads.to_string())
            .arg("--out")
            .arg(&dir)
            .output()
            .expect("spawn planner");
        if !out.status.success() {
            return outcome(false, format!("{command} --threads {threads} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        runs.push((command, threads, hashes(&dir)));
    }
    let mut pass = true;
    let mut files = 0;
    for command in ["plan", "compare"] {
        let same: Vec<_> = runs.iter().filter(|r| r.0 == command).collect();
        files += same[0].2.len();
        pass &= !same[0].2.is_empty() && same.iter().all(|r| r.2 == same[0].2);
    }
    outcome(
        pass,
        format!("desk plan x3 (1, 2, 2 threads) and compare x2 (1, 2 threads): {files} output files, SHA-256 identical across runs"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    let desk = load("desk.json");
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let report = pipeline::run_compare(&desk, &options(dir.path())).expect("desk compare runs");
    let compare_time = start.elapsed();
    let desk_setup = Setup::new(&desk, &options(dir.path())).unwrap();
    let (desk_qp, desk_sol) = desk_setup.solve(false).expect("desk plan solves");
    let toy_setup = Setup::new(&load("toy.json"), &options(dir.path())).unwrap();
    let (toy_qp, toy_sol) = toy_setup.solve(false).expect("toy plan solves");

    results.push((1, "variance reduction", variance_reduction(&report, compare_time)));
    let skipped = Outcome {
        pass: true,
        skipped: true,
        detail: "set MELTPLAN_FULL_SCALE=1 to run the 24x22x4, 108-step plan".into(),
    };
    results.push((2, "full-scale solve", full_scale().unwrap_or(skipped)));
    results.push((3, "ordering", ordering(&report)));
    results.push((
        4,
        "constraint satisfaction",
        constraint_satisfaction(&[
            ("desk", &desk_setup, &desk_qp, &desk_sol),
            ("toy", &toy_setup, &toy_qp, &toy_sol),
        ]),
    ));
    results.push((5, "oracle suites", oracle_suites()));
    results.push((6, "conservation and structure", conservation(&desk_setup, &report)));
    results.push((7, "determinism", determinism()));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = match (o.skipped, o.pass) {
            (true, _) => "SKIP",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        println!("{tag}  {id} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
