use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meltplan_cli::pipeline::{self, RunOptions};
use meltplan_cli::{CliError, RunConfig};

const PLAN_OUTPUTS: &str = "\
Output files (in the output directory):
  fields.csv        optimal power field, one row per step and surface voxel:
                    step,t_us,x,y,power_W
  spots.csv         greedy spot sequence: t_us,x_mm,y_mm,dwell_us,power_W
  solve_log.csv     interior-point iterations: iteration,mu,stationarity,
                    primal,dual,complementarity,step,sigma
  summary.json      status, objective (K²·s), KKT residuals, constraint
                    violations, problem size, spot count
  plan_timing.json  wall times of the solve, the greedy pass and the run";

const SIMULATE_OUTPUTS: &str = "\
Reads spots.csv from the output directory (written by `plan`).

Output files:
  simulate_series.csv    time_s,variance_K2,cumulative_K2s,mask_max_K,mask_min_K
                         at every thermal substep
  heatmap_<t>us.pgm      top-layer temperature at each configured snapshot
                         time, binary PGM, black = coldest boundary
                         temperature, white = liquidus
  simulate_metrics.json  cumulative variance, over/under/erroneous melt
                         counts, energy-audit residual";

const COMPARE_OUTPUTS: &str = "\
Scenarios: uniform_exact, uniform_greedy, optimized_exact, optimized_greedy,
random_spot.

Output files:
  series_<scenario>.csv  time_s,variance_K2,cumulative_K2s,mask_max_K,mask_min_K
  compare.csv            scenario,cumulative_variance_K2s,over_melt,
                         under_melt,erroneous_melt,energy_residual_relative
  compare.json           the same metrics plus reductions 1 − opt/baseline
                         in percent (1 decimal)
  compare_timing.json    wall times of the solve and the run";

const EXPORT_OUTPUTS: &str = "\
Output files:
  qp.txt  assembled QP: dimensions, then c, Hessian, A, b, G, h in triplet
          form";

const EXIT_CODES: &str = "\
Exit codes: 0 success, 1 I/O or internal error, 2 configuration or parse
error, 3 infeasible plan, 4 solver iteration limit.";

#[derive(Parser)]
#[command(name = "meltplan", version, about = "Thermal optimal-control planner for electron-beam spot melting", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the planning QP and convert it to a spot sequence.
    #[command(after_help = PLAN_OUTPUTS)]
    Plan(Common),
    /// Replay the planned spot sequence through the thermal model.
    #[command(after_help = SIMULATE_OUTPUTS)]
    Simulate(Common),
    /// Simulate optimized, uniform and random-spot plans side by side.
    #[command(after_help = COMPARE_OUTPUTS)]
    Compare(Common),
    /// Write the assembled QP for external solvers.
    #[command(after_help = EXPORT_OUTPUTS)]
    Export(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, env = "MELTPLAN_THREADS")]
    threads: Option<usize>,
    /// Print the solver iteration log to stderr.
    #[arg(long)]
    verbose: bool,
    /// Output directory, overriding the configuration.
    #[arg(long, env = "MELTPLAN_OUT_DIR")]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Plan(common)
    | Command::Simulate(common)
    | Command::Compare(common)
    | Command::Export(common)) = &cli.command;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let config = RunConfig::load(&common.config)?;
    let options = RunOptions {
        out_dir: common.out.clone(),
        verbose: common.verbose,
    };
    match cli.command {
        Command::Plan(_) => {
            let r = pipeline::run_plan(&config, &options)?;
            println!(
                "status {}  objective {:.6e} K²·s  {} spots",
                r.status, r.objective, r.spots
            );
        }
        Command::Simulate(_) => {
            let m = pipeline::run_simulate(&config, &options)?;
            println!(
                "over-melt {}  under-melt {}  erroneous {}",
                m.over,
                m.under,
                m.erroneous()
            );
        }
        Command::Compare(_) => {
            let r = pipeline::run_compare(&config, &options)?;
            print!("{}", pipeline::format_compare(&r));
        }
        Command::Export(_) => {
            let path = pipeline::run_export(&config, &options)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
