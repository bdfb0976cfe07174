//! The four commands: plan, simulate, compare, export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use meltplan_core::beamplan::{
    greedy_approximate, random_spot_plan, uniform_field_plan, BeamModel, GreedySettings,
    SpotCommand, SpotSequence, SurfaceGrid,
};
use meltplan_core::simulate::{
    melt_metrics, simulate_beam, simulate_fields, write_top_layer_pgm, MeltMetrics,
    SimulationResult,
};
use meltplan_core::solver::{solve, Solution, SolveStatus, SolverSettings};
use meltplan_core::transcription::export::write_qp;
use meltplan_core::transcription::{CycleSpec, QpProblem};
use meltplan_core::{Environment, Material, MeltLimits, PowerFieldTrajectory, ProcessModel, Schedule};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::mask::read_mask;

/// Files written by `plan`.
pub const PLAN_FILES: [&str; 5] = [
    "fields.csv",
    "spots.csv",
    "solve_log.csv",
    "summary.json",
    "plan_timing.json",
];

/// Scenario names used by `compare`, in report order.
pub const SCENARIOS: [&str; 5] = [
    "uniform_exact",
    "uniform_greedy",
    "optimized_exact",
    "optimized_greedy",
    "random_spot",
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the configured output directory.
    pub out_dir: Option<PathBuf>,
    /// Prints the iteration log to stderr.
    pub verbose: bool,
}

/// Everything derived from a configuration before any solve.
pub struct Setup {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub model: ProcessModel,
    pub schedule: Schedule,
    pub t_init: Vec<f64>,
    pub grid: SurfaceGrid,
    pub beam: BeamModel,
}

impl Setup {
    pub fn new(config: &RunConfig, options: &RunOptions) -> Result<Self, CliError> {
        let target = read_mask(&config.mask)?;
        let c = config;
        let material = Material::new(
            c.material.conductivity_w_per_m_k,
            c.material.density_kg_per_m3,
            c.material.specific_heat_j_per_kg_k,
        )?;
        let env = Environment::new(
            c.environment.convection_w_per_m2_k,
            c.environment.ambient_k,
            c.environment.baseplate_k,
        )?;
        let limits = MeltLimits::new(c.limits.solidus_k, c.limits.liquidus_k)?;
        let model = ProcessModel::layer(
            &target,
            c.grid.layers,
            c.grid.voxel_size_um * 1e-6,
            material,
            env,
            limits,
            c.beam.power_w,
        )?;
        let cycle = CycleSpec {
            build_steps: c.schedule.build_steps,
            cool_steps: c.schedule.cool_steps,
        };
        let schedule = Schedule::from_cycles(
            c.schedule.dt_us as f64 * 1e-6,
            &vec![cycle; c.schedule.cycles],
        )?;
        let grid = SurfaceGrid::new(&model.mesh, &model.input)?;
        let beam = BeamModel::new(
            c.beam.power_w,
            c.beam.fwhm_um * 1e-6,
            c.beam.time_constant_us * 1e-6,
            c.beam.max_speed_m_per_s,
        )?;
        let t_init = vec![c.environment.initial_k; model.len()];
        let out_dir = options
            .out_dir
            .clone()
            .unwrap_or_else(|| config.output_dir.clone());
        Ok(Self {
            config: config.clone(),
            out_dir,
            model,
            schedule,
            t_init,
            grid,
            beam,
        })
    }

    fn greedy_settings(&self) -> GreedySettings {
        GreedySettings {
            dwell_us: self.config.approximation.dwell_us,
            window_us: self.config.approximation.window_us,
        }
    }

    fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            kkt_tolerance: self.config.solver.kkt_tolerance,
            max_iterations: self.config.solver.max_iterations,
            ..SolverSettings::default()
        }
    }

    pub fn assemble(&self) -> Result<QpProblem, CliError> {
        self.model
            .assemble(&self.schedule, &self.t_init)
            .map_err(infeasible_family)
    }

    /// Assembles and solves; infeasibility becomes an error naming the
    /// constraint family, the iteration cap is left to the caller.
    pub fn solve(&self, verbose: bool) -> Result<(QpProblem, Solution), CliError> {
        let problem = self.assemble()?;
        let sol = solve(&problem, &self.solver_settings())?;
        if verbose {
            for r in &sol.raw.log {
                eprintln!(
                    "iter {:3}  mu {:.3e}  stat {:.3e}  prim {:.3e}  dual {:.3e}  comp {:.3e}  step {:.3}",
                    r.iteration,
                    r.mu,
                    r.residuals.stationarity,
                    r.residuals.primal,
                    r.residuals.dual,
                    r.residuals.complementarity,
                    r.step
                );
            }
        }
        if sol.status == SolveStatus::Infeasible {
            return Err(CliError::Infeasible {
                family: blocking_family(&problem, &sol),
                detail: violation_summary(&problem, &sol.raw.x),
            });
        }
        Ok((problem, sol))
    }

    fn simulate_fields(&self, fields: &PowerFieldTrajectory) -> Result<SimulationResult, CliError> {
        Ok(simulate_fields(
            &self.model.dynamics,
            &self.model.input,
            fields,
            &self.model.weight,
            &self.t_init,
            &self.schedule,
            self.config.approximation.substeps,
        )?)
    }

    fn simulate_beam(&self, seq: &SpotSequence) -> Result<SimulationResult, CliError> {
        Ok(simulate_beam(
            &self.model.dynamics,
            &self.model.input,
            &self.grid,
            seq,
            &self.model.weight,
            &self.t_init,
            &self.schedule,
            self.config.approximation.substeps,
        )?)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(BufWriter::new(File::create(self.out_dir.join(name))?))
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut f = self.create(name)?;
        serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::from)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    fn write_with(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let mut f = self.create(name)?;
        body(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Maps an assembly-time infeasibility (`"family: reason"`) to the CLI error.
fn infeasible_family(e: meltplan_core::Error) -> CliError {
    match e {
        meltplan_core::Error::Infeasible(msg) => {
            let (family, detail) = msg.split_once(": ").unwrap_or(("unknown", &msg));
            CliError::Infeasible {
                family: family.to_owned(),
                detail: detail.to_owned(),
            }
        }
        other => other.into(),
    }
}

/// Inequality family carrying the largest multiplier mass in the
/// infeasibility certificate; falls back to the first family violated at the
/// last iterate.
fn blocking_family(problem: &QpProblem, sol: &Solution) -> String {
    let z = &sol.raw.z;
    problem
        .ineq_blocks
        .iter()
        .map(|(family, rows)| (family, z[rows.clone()].iter().map(|v| v.abs()).sum::<f64>()))
        .filter(|(_, w)| *w > 0.0)
        .fold(None, |best: Option<(_, f64)>, (f, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((f, w)),
        })
        .map(|(f, _)| f.to_string())
        .or_else(|| problem.first_violated(&sol.raw.x, 1e-6).map(|f| f.to_string()))
        .unwrap_or_else(|| "unknown".into())
}

fn violation_summary(problem: &QpProblem, x: &[f64]) -> String {
    let parts: Vec<String> = problem
        .violations(x)
        .into_iter()
        .filter(|v| v.relative > 1e-6)
        .map(|v| format!("{} {:.3e}", v.family, v.max))
        .collect();
    if parts.is_empty() {
        "no constraint is violated at the last iterate".into()
    } else {
        format!("largest violations at the last iterate: {}", parts.join(", "))
    }
}

/// Peak resident set size of this process, from `/proc/self/status` where
/// available.
pub fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn status_str(status: SolveStatus) -> &'static str {
    status.as_str()
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn metrics_json(r: &SimulationResult, m: &MeltMetrics) -> Value {
    json!({
        "cumulative_variance_K2s": r.cumulative_variance(),
        "over_melt": m.over,
        "under_melt": m.under,
        "erroneous_melt": m.erroneous(),
        "energy_residual_relative": r.energy.relative(),
    })
}

/// Long-form power field: one row per step and surface input.
fn write_fields<W: Write>(
    grid: &SurfaceGrid,
    schedule: &Schedule,
    fields: &PowerFieldTrajectory,
    out: &mut W,
) -> Result<(), CliError> {
    writeln!(out, "step,t_us,x,y,power_W")?;
    let dt = schedule.dt_micros()?;
    let mut t = 0u64;
    for (k, u) in fields.inputs.iter().enumerate() {
        for (j, p) in u.iter().enumerate() {
            let [x, y] = grid.coords(j);
            writeln!(out, "{k},{t},{x},{y},{p:.9e}")?;
        }
        t += dt[k];
    }
    Ok(())
}

pub struct PlanReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub spots: usize,
}

/// `plan`: solve, convert to a spot sequence, write the plan files.
pub fn run_plan(config: &RunConfig, options: &RunOptions) -> Result<PlanReport, CliError> {
    let start = Instant::now();
    let setup = Setup::new(config, options)?;
    let (problem, sol) = setup.solve(options.verbose)?;
    let fields = sol.trajectory.power_field();
    let greedy_start = Instant::now();
    let spots = greedy_approximate(
        &fields,
        &setup.schedule,
        &setup.beam,
        &setup.grid,
        &setup.greedy_settings(),
    )?;
    let greedy_time = greedy_start.elapsed();

    setup.write_with("fields.csv", |f| {
        write_fields(&setup.grid, &setup.schedule, &fields, f)
    })?;
    setup.write_with("spots.csv", |f| Ok(spots.write_csv(f)?))?;
    setup.write_with("solve_log.csv", |f| {
        writeln!(f, "iteration,mu,stationarity,primal,dual,complementarity,step,sigma")?;
        for r in &sol.raw.log {
            writeln!(
                f,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.iteration,
                r.mu,
                r.residuals.stationarity,
                r.residuals.primal,
                r.residuals.dual,
                r.residuals.complementarity,
                r.step,
                r.sigma
            )?;
        }
        Ok(())
    })?;
    let audit = problem.audit();
    let violations: serde_json::Map<String, Value> = problem
        .violations(&sol.raw.x)
        .into_iter()
        .map(|v| (v.family.to_string(), json!(v.max)))
        .collect();
    setup.write_json(
        "summary.json",
        &json!({
            "status": status_str(sol.status),
            "objective_K2s": sol.objective,
            "iterations": sol.iterations,
            "residuals": {
                "stationarity": sol.residuals.stationarity,
                "primal": sol.residuals.primal,
                "dual": sol.residuals.dual,
                "complementarity": sol.residuals.complementarity,
            },
            "max_violation": violations,
            "problem": {
                "voxels": setup.model.len(),
                "mask_voxels": setup.model.mask.members().len(),
                "surface_inputs": setup.grid.len(),
                "knots": setup.schedule.len(),
                "variables": problem.qp.num_vars(),
                "equalities": audit.equalities,
                "inequalities": audit.inequalities,
            },
            "spots": spots.len(),
            "commanded_us": spots.commanded_us(),
        }),
    )?;
    setup.write_json(
        "plan_timing.json",
        &json!({
            "solve_s": sol.wall_time.as_secs_f64(),
            "greedy_s": greedy_time.as_secs_f64(),
            "total_s": start.elapsed().as_secs_f64(),
            "peak_rss_mb": peak_rss_mb(),
        }),
    )?;
    if sol.status == SolveStatus::MaxIter {
        return Err(CliError::MaxIter {
            iterations: sol.iterations,
        });
    }
    Ok(PlanReport {
        status: sol.status,
        objective: sol.objective,
        spots: spots.len(),
    })
}

/// Reads a spot CSV written by `plan`; targets snap to voxel centres.
pub fn read_spots(path: &Path, grid: &SurfaceGrid, beam: &BeamModel) -> Result<SpotSequence, CliError> {
    let file = File::open(path).map_err(|e| {
        CliError::Config(format!("{}: {e} (run `plan` first)", path.display()))
    })?;
    let bad = |line: usize, reason: String| CliError::Config(format!("{}:{line}: {reason}", path.display()));
    let mut commands = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if i == 0 {
            if line != "t_us,x_mm,y_mm,dwell_us,power_W" {
                return Err(bad(no, format!("unexpected header '{line}'")));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(no, format!("expected 5 columns, found {}", cols.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad(no, format!("'{s}': {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| bad(no, format!("'{s}': {e}")));
        let (start_us, x, y, dwell_us, power) =
            (int(cols[0])?, real(cols[1])?, real(cols[2])?, int(cols[3])?, real(cols[4])?);
        if (power - beam.power).abs() > 1e-9 * beam.power {
            return Err(bad(no, format!("power {power} W differs from the configured {} W", beam.power)));
        }
        let l = grid.voxel_size();
        let cell = |v: f64| (v * 1e-3 / l).floor();
        let (cx, cy) = (cell(x), cell(y));
        let input = (cx >= 0.0 && cy >= 0.0)
            .then(|| grid.input_at(cx as usize, cy as usize))
            .flatten()
            .ok_or_else(|| bad(no, format!("({x}, {y}) mm is outside the build surface")))?;
        commands.push(SpotCommand {
            start_us,
            input,
            target: grid.center(input),
            dwell_us,
        });
    }
    Ok(SpotSequence {
        commands,
        beam: *beam,
        start: grid.middle(),
    })
}

fn snapshot_name(t_us: u64) -> String {
    format!("heatmap_{t_us}us.pgm")
}

/// Sample closest to `t` seconds.
fn sample_at(result: &SimulationResult, t: f64) -> usize {
    result
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map_or(0, |(i, _)| i)
}

/// `simulate`: replays `spots.csv` from the output directory.
pub fn run_simulate(config: &RunConfig, options: &RunOptions) -> Result<MeltMetrics, CliError> {
    let setup = Setup::new(config, options)?;
    let spots = read_spots(&setup.out_dir.join("spots.csv"), &setup.grid, &setup.beam)?;
    let result = setup.simulate_beam(&spots)?;
    let metrics = melt_metrics(&result, &setup.model.mask, &setup.model.limits);
    setup.write_with("simulate_series.csv", |f| {
        Ok(result.write_series_csv(&setup.model.mask, f)?)
    })?;
    let env = &config.environment;
    let lo = env.initial_k.min(env.ambient_k).min(env.baseplate_k);
    let hi = config.limits.liquidus_k;
    for &t_us in &config.snapshots_us {
        let i = sample_at(&result, t_us as f64 * 1e-6);
        setup.write_with(&snapshot_name(t_us), |f| {
            Ok(write_top_layer_pgm(&setup.model.mesh, &result.states[i], lo, hi, f)?)
        })?;
    }
    setup.write_json("simulate_metrics.json", &metrics_json(&result, &metrics))?;
    Ok(metrics)
}

pub struct ScenarioOutcome {
    pub name: &'static str,
    pub result: SimulationResult,
    pub metrics: MeltMetrics,
}

pub struct CompareReport {
    pub scenarios: Vec<ScenarioOutcome>,
    /// `(optimized, baseline, 1 − opt/baseline in percent)`.
    pub reductions: Vec<(&'static str, &'static str, f64)>,
}

impl CompareReport {
    pub fn cumulative(&self, name: &str) -> f64 {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .map_or(f64::NAN, |s| s.result.cumulative_variance())
    }
}

/// `compare`: the five scenarios simulated side by side.
pub fn run_compare(config: &RunConfig, options: &RunOptions) -> Result<CompareReport, CliError> {
    let start = Instant::now();
    let setup = Setup::new(config, options)?;
    let (_, sol) = setup.solve(options.verbose)?;
    if sol.status == SolveStatus::MaxIter {
        return Err(CliError::MaxIter {
            iterations: sol.iterations,
        });
    }
    let optimized = sol.trajectory.power_field();
    let uniform = uniform_field_plan(
        &setup.model.input,
        &setup.model.mask,
        &setup.schedule,
        config.beam.power_w,
    )?;
    let gs = setup.greedy_settings();
    let greedy = |f: &PowerFieldTrajectory| {
        greedy_approximate(f, &setup.schedule, &setup.beam, &setup.grid, &gs)
    };
    let random = random_spot_plan(
        &setup.grid,
        &setup.model.mask_inputs(),
        &setup.beam,
        config.approximation.dwell_us,
        &setup.schedule,
        config.seeds.random_spot,
    )?;
    let (uniform_greedy, optimized_greedy) = rayon::join(|| greedy(&uniform), || greedy(&optimized));
    let (uniform_greedy, optimized_greedy) = (uniform_greedy?, optimized_greedy?);

    enum Plan<'a> {
        Fields(&'a PowerFieldTrajectory),
        Spots(&'a SpotSequence),
    }
    let plans = [
        Plan::Fields(&uniform),
        Plan::Spots(&uniform_greedy),
        Plan::Fields(&optimized),
        Plan::Spots(&optimized_greedy),
        Plan::Spots(&random),
    ];
    use rayon::prelude::*;
    let results: Vec<SimulationResult> = plans
        .par_iter()
        .map(|p| match p {
            Plan::Fields(f) => setup.simulate_fields(f),
            Plan::Spots(s) => setup.simulate_beam(s),
        })
        .collect::<Result<_, _>>()?;
    let scenarios: Vec<ScenarioOutcome> = SCENARIOS
        .iter()
        .zip(results)
        .map(|(&name, result)| ScenarioOutcome {
            name,
            metrics: melt_metrics(&result, &setup.model.mask, &setup.model.limits),
            result,
        })
        .collect();

    let mut reductions = Vec::new();
    for opt in ["optimized_exact", "optimized_greedy"] {
        for base in ["uniform_exact", "uniform_greedy", "random_spot"] {
            let o = scenarios.iter().find(|s| s.name == opt).unwrap();
            let b = scenarios.iter().find(|s| s.name == base).unwrap();
            let pct = 100.0 * (1.0 - o.result.cumulative_variance() / b.result.cumulative_variance());
            reductions.push((opt, base, pct));
        }
    }

    for s in &scenarios {
        setup.write_with(&format!("series_{}.csv", s.name), |f| {
            Ok(s.result.write_series_csv(&setup.model.mask, f)?)
        })?;
    }
    setup.write_with("compare.csv", |f| {
        writeln!(f, "scenario,cumulative_variance_K2s,over_melt,under_melt,erroneous_melt,energy_residual_relative")?;
        for s in &scenarios {
            writeln!(
                f,
                "{},{:e},{},{},{},{:e}",
                s.name,
                s.result.cumulative_variance(),
                s.metrics.over,
                s.metrics.under,
                s.metrics.erroneous(),
                s.result.energy.relative()
            )?;
        }
        Ok(())
    })?;
    let scen: serde_json::Map<String, Value> = scenarios
        .iter()
        .map(|s| (s.name.to_owned(), metrics_json(&s.result, &s.metrics)))
        .collect();
    let red: Vec<Value> = reductions
        .iter()
        .map(|(o, b, p)| json!({"optimized": o, "baseline": b, "reduction_percent": round1(*p)}))
        .collect();
    setup.write_json(
        "compare.json",
        &json!({
            "solver_status": status_str(sol.status),
            "objective_K2s": sol.objective,
            "scenarios": scen,
            "reductions": red,
        }),
    )?;
    setup.write_json(
        "compare_timing.json",
        &json!({
            "solve_s": sol.wall_time.as_secs_f64(),
            "total_s": start.elapsed().as_secs_f64(),
            "peak_rss_mb": peak_rss_mb(),
        }),
    )?;
    Ok(CompareReport {
        scenarios,
        reductions,
    })
}

/// `export`: the assembled QP in the text exchange format.
pub fn run_export(config: &RunConfig, options: &RunOptions) -> Result<PathBuf, CliError> {
    let setup = Setup::new(config, options)?;
    let problem = setup.assemble()?;
    setup.write_with("qp.txt", |f| Ok(write_qp(&problem.qp, f)?))?;
    Ok(setup.out_dir.join("qp.txt"))
}

/// Table printed by `compare`.
pub fn format_compare(report: &CompareReport) -> String {
    let mut s = format!(
        "{:<18} {:>16} {:>6} {:>6} {:>10}\n",
        "scenario", "cum. var (K²s)", "over", "under", "erroneous"
    );
    for sc in &report.scenarios {
        s += &format!(
            "{:<18} {:>16.4} {:>6} {:>6} {:>10}\n",
            sc.name,
            sc.result.cumulative_variance(),
            sc.metrics.over,
            sc.metrics.under,
            sc.metrics.erroneous()
        );
    }
    s.push('\n');
    for (o, b, p) in &report.reductions {
        s += &format!("{o} vs {b}: {p:.1}% lower cumulative variance\n");
    }
    s
}
