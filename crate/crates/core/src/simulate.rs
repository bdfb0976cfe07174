//! Forward simulation of power fields and spot sequences, and the metrics
//! used to compare them.

use std::borrow::Cow;
use std::io::Write;

use crate::beamplan::{SpotSequence, SurfaceGrid, SUBSTEPS_PER_US};
use crate::error::{check_len, invalid, Result};
use crate::input::{InputMap, PowerFieldTrajectory};
use crate::objective::{MaskVector, VarianceWeight};
use crate::transcription::{discretize, ImplicitEulerStep, MeltLimits, Schedule};
use crate::transport::{LinearDynamics, VoxelMesh};

/// Energy bookkeeping of one run, J.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAudit {
    pub initial: f64,
    pub end: f64,
    /// Deposited by the inputs.
    pub input: f64,
    /// Net boundary exchange (negative for losses).
    pub boundary: f64,
}

impl EnergyAudit {
    pub fn residual(&self) -> f64 {
        (self.end - self.initial) - (self.input + self.boundary)
    }

    /// Residual relative to the largest energy flow of the run.
    pub fn relative(&self) -> f64 {
        let scale = (self.end - self.initial)
            .abs()
            .max(self.input.abs())
            .max(self.boundary.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.residual().abs() / scale
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    /// Sample times, s.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Quadrature weight of each sample, s.
    pub weights: Vec<f64>,
    pub substeps: usize,
    /// Masked population variance per sample, K².
    pub variance: Vec<f64>,
    /// Running `Σ variance · weight`, K²·s.
    pub cumulative: Vec<f64>,
    /// Peak temperature per voxel, K.
    pub peak: Vec<f64>,
    pub energy: EnergyAudit,
}

impl SimulationResult {
    /// State at schedule knot `k`.
    pub fn knot(&self, k: usize) -> &[f64] {
        &self.states[k * self.substeps]
    }

    pub fn knot_states(&self) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .step_by(self.substeps)
            .cloned()
            .collect()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn cumulative_variance(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `time_s,variance_K2,cumulative_K2s,mask_max_K,mask_min_K`.
    pub fn write_series_csv<W: Write>(&self, mask: &MaskVector, mut out: W) -> Result<()> {
        writeln!(out, "time_s,variance_K2,cumulative_K2s,mask_max_K,mask_min_K")?;
        for (i, s) in self.states.iter().enumerate() {
            let (lo, hi) = mask
                .members()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(s[v]), hi.max(s[v]))
                });
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e}",
                self.times[i], self.variance[i], self.cumulative[i], hi, lo
            )?;
        }
        Ok(())
    }
}

/// Melt accounting against the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeltMetrics {
    /// Off-mask voxels whose peak exceeded the solidus.
    pub over: usize,
    /// Mask voxels whose peak stayed below the liquidus.
    pub under: usize,
    /// Per mask member, in member order: peak reached the liquidus.
    pub melted: Vec<bool>,
}

impl MeltMetrics {
    pub fn erroneous(&self) -> usize {
        self.over + self.under
    }
}

pub fn melt_metrics(result: &SimulationResult, mask: &MaskVector, limits: &MeltLimits) -> MeltMetrics {
    let melted: Vec<bool> = mask
        .members()
        .iter()
        .map(|&i| result.peak[i] >= limits.liquidus)
        .collect();
    MeltMetrics {
        over: mask
            .off_mask()
            .filter(|&i| result.peak[i] > limits.solidus)
            .count(),
        under: melted.iter().filter(|m| !**m).count(),
        melted,
    }
}

/// Integrates `schedule` at `dt / substeps` resolution. `power(b)` is the
/// input held over substep `b`.
fn integrate<'a>(
    dynamics: &LinearDynamics,
    input: &InputMap,
    weight: &VarianceWeight,
    t_init: &[f64],
    schedule: &Schedule,
    substeps: usize,
    mut power: impl FnMut(usize) -> Cow<'a, [f64]>,
) -> Result<SimulationResult> {
    let n = dynamics.dim();
    check_len("initial state", n, t_init.len())?;
    check_len("variance weight", n, weight.dim())?;
    if substeps == 0 {
        return Err(invalid("substeps", "must be at least 1"));
    }
    let steps = schedule.len() - 1;
    let mut steppers: Vec<(f64, ImplicitEulerStep)> = Vec::new();
    let cap = dynamics.heat_capacity;
    let energy = |t: &[f64]| cap * t.iter().sum::<f64>();

    let samples = steps * substeps + 1;
    let mut times = Vec::with_capacity(samples);
    let mut states = Vec::with_capacity(samples);
    let mut weights = Vec::with_capacity(samples);
    let mut peak = t_init.to_vec();
    let mut audit = EnergyAudit {
        initial: energy(t_init),
        end: 0.0,
        input: 0.0,
        boundary: 0.0,
    };
    let mut t = t_init.to_vec();
    let mut now = 0.0;
    for k in 0..steps {
        let h = schedule.dt()[k] / substeps as f64;
        let idx = match steppers.iter().position(|(d, _)| *d == h) {
            Some(i) => i,
            None => {
                steppers.push((h, discretize(dynamics, input, h)?));
                steppers.len() - 1
            }
        };
        let stepper = &steppers[idx].1;
        for s in 0..substeps {
            let u = power(k * substeps + s);
            let next = stepper.step(&t, &u);
            audit.input += h * u.iter().sum::<f64>();
            audit.boundary += h * dynamics.boundary_power(&next);
            times.push(now);
            weights.push(h);
            states.push(std::mem::replace(&mut t, next));
            now += h;
            for (p, v) in peak.iter_mut().zip(&t) {
                *p = p.max(*v);
            }
        }
    }
    audit.end = energy(&t);
    times.push(now);
    weights.push(schedule.dt()[steps]);
    states.push(t);

    let variance: Vec<f64> = states.iter().map(|s| weight.variance(s)).collect();
    let mut total = 0.0;
    let cumulative = variance
        .iter()
        .zip(&weights)
        .map(|(v, w)| {
            total += v * w;
            total
        })
        .collect();
    Ok(SimulationResult {
        times,
        states,
        weights,
        substeps,
        variance,
        cumulative,
        peak,
        energy: audit,
    })
}

/// Replays a power-field trajectory with zero-order hold. At `substeps = 1`
/// this is the same implicit-Euler recursion as the planning QP.
pub fn simulate_fields(
    dynamics: &LinearDynamics,
    input: &InputMap,
    fields: &PowerFieldTrajectory,
    weight: &VarianceWeight,
    t_init: &[f64],
    schedule: &Schedule,
    substeps: usize,
) -> Result<SimulationResult> {
    let steps = schedule.len() - 1;
    if fields.len() < steps {
        return Err(crate::error::Error::DimensionMismatch {
            context: "power field steps",
            expected: steps,
            found: fields.len(),
        });
    }
    for u in &fields.inputs[..steps] {
        check_len("power field inputs", input.len(), u.len())?;
    }
    integrate(dynamics, input, weight, t_init, schedule, substeps, |b| {
        Cow::Borrowed(fields.inputs[b / substeps].as_slice())
    })
}

/// Replays a spot sequence. Beam positions are sampled every 0.1 µs and their
/// footprints averaged into the input held over each thermal substep. The
/// beam is off outside commands and past the end of the sequence.
#[allow(clippy::too_many_arguments)]
pub fn simulate_beam(
    dynamics: &LinearDynamics,
    input: &InputMap,
    grid: &SurfaceGrid,
    sequence: &SpotSequence,
    weight: &VarianceWeight,
    t_init: &[f64],
    schedule: &Schedule,
    substeps: usize,
) -> Result<SimulationResult> {
    check_len("surface grid", input.len(), grid.len())?;
    sequence.beam.validate()?;
    let fields = beam_fields(grid, sequence, schedule, substeps)?;
    integrate(dynamics, input, weight, t_init, schedule, substeps, |b| {
        Cow::Borrowed(fields[b].as_slice())
    })
}

/// Average beam power per input over each thermal substep, W.
pub fn beam_fields(
    grid: &SurfaceGrid,
    sequence: &SpotSequence,
    schedule: &Schedule,
    substeps: usize,
) -> Result<Vec<Vec<f64>>> {
    if substeps == 0 {
        return Err(invalid("substeps", "must be at least 1"));
    }
    let steps = schedule.len() - 1;
    // Substep boundaries in units of 0.1 µs, so bins are found exactly.
    let ticks_per_step: Vec<u64> = schedule.dt_micros()?[..steps]
        .iter()
        .map(|us| us * SUBSTEPS_PER_US)
        .collect();
    if let Some(t) = ticks_per_step.iter().find(|t| *t % substeps as u64 != 0) {
        return Err(invalid(
            "substeps",
            format!("{t} ticks of 0.1 µs do not divide into {substeps} substeps"),
        ));
    }
    let mut bounds = vec![0u64];
    let mut widths = Vec::new();
    for &t in &ticks_per_step {
        let w = t / substeps as u64;
        for _ in 0..substeps {
            bounds.push(bounds.last().unwrap() + w);
            widths.push(w);
        }
    }
    let horizon = *bounds.last().unwrap();
    let m = grid.len();
    let mut energy = vec![vec![0.0; m]; widths.len()];

    let beam = &sequence.beam;
    let sigma = beam.sigma();
    let tick_energy = beam.power * 1e-6 / SUBSTEPS_PER_US as f64;
    let mut axes = [Vec::new(), Vec::new()];
    let mut pos = sequence.start;
    for c in &sequence.commands {
        let mut tick = c.start_us * SUBSTEPS_PER_US;
        let mut bin = bounds.partition_point(|&b| b <= tick).saturating_sub(1);
        pos = crate::beamplan::trace_path(pos, c.target, c.dwell_us, beam, |p| {
            if tick < horizon {
                while bounds[bin + 1] <= tick {
                    bin += 1;
                }
                let e = &mut energy[bin];
                grid.deposit(p, sigma, tick_energy, &mut axes, |j, v| e[j] += v);
            }
            tick += 1;
        });
    }
    for (e, &w) in energy.iter_mut().zip(&widths) {
        let seconds = w as f64 * 1e-6 / SUBSTEPS_PER_US as f64;
        e.iter_mut().for_each(|v| *v /= seconds);
    }
    Ok(energy)
}

/// Binary PGM (P5) of the top layer, linearly mapping `[lo, hi]` K to
/// `0..=255`. Cells without a voxel are black.
pub fn write_top_layer_pgm<W: Write>(
    mesh: &VoxelMesh,
    state: &[f64],
    lo: f64,
    hi: f64,
    mut out: W,
) -> Result<()> {
    check_len("state", mesh.len(), state.len())?;
    if !(hi > lo) {
        return Err(invalid("heatmap range", "needs hi > lo"));
    }
    let [nx, ny, _] = mesh.dims();
    let top = mesh.top_level();
    let mut pixels = vec![0u8; nx * ny];
    for (i, c) in mesh.coords().iter().enumerate() {
        if c[2] == top {
            let v = ((state[i] - lo) / (hi - lo)).clamp(0.0, 1.0);
            // Image row 0 is the far edge (largest y).
            pixels[(ny - 1 - c[1]) * nx + c[0]] = (v * 255.0).round() as u8;
        }
    }
    write!(out, "P5\n{nx} {ny}\n255\n")?;
    out.write_all(&pixels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamplan::{BeamModel, SpotCommand};
    use crate::input::build_power_field_input;
    use crate::objective::build_variance_weight;
    use crate::transport::{assemble_dynamics, build_voxel_grid, Environment, Material, Occupancy};

    struct Rig {
        mesh: VoxelMesh,
        dynamics: LinearDynamics,
        input: InputMap,
        weight: VarianceWeight,
    }

    fn rig(nx: usize, ny: usize, nz: usize, insulated: bool) -> Rig {
        let mut mesh = build_voxel_grid(&Occupancy::filled(nx, ny, nz), 200e-6).unwrap();
        let env = if insulated {
            mesh = mesh.insulate_baseplate();
            Environment::new(0.0, 300.0, 300.0).unwrap()
        } else {
            Environment::new(10.0, 300.0, 300.0).unwrap()
        };
        let mat = Material::stainless_316l();
        let dynamics = assemble_dynamics(&mesh, &mat, &env).unwrap();
        let input = build_power_field_input(&mesh, &mat);
        let weight = build_variance_weight(&MaskVector::new(vec![true; mesh.len()]).unwrap());
        Rig {
            mesh,
            dynamics,
            input,
            weight,
        }
    }

    #[test]
    fn insulated_rest_stays_put() {
        let r = rig(2, 2, 1, true);
        let sched = Schedule::all_build(5, 1e-4).unwrap();
        let fields = PowerFieldTrajectory::zeros(5, 4);
        let t0 = vec![500.0; 4];
        let res =
            simulate_fields(&r.dynamics, &r.input, &fields, &r.weight, &t0, &sched, 3).unwrap();
        assert_eq!(res.states.len(), 13);
        assert!(res.states.iter().flatten().all(|&t| (t - 500.0).abs() < 1e-9));
        assert!(res.cumulative_variance() < 1e-20);
    }

    #[test]
    fn one_watt_for_a_millisecond() {
        let r = rig(1, 1, 1, true);
        let sched = Schedule::all_build(2, 1e-3).unwrap();
        let fields = PowerFieldTrajectory::new(vec![vec![1.0]; 2]);
        for substeps in [1, 10] {
            let res = simulate_fields(&r.dynamics, &r.input, &fields, &r.weight, &[300.0], &sched, substeps)
                .unwrap();
            assert!((res.final_state()[0] - 300.0 - 23.884).abs() < 1e-3);
            assert!(res.energy.relative() < 1e-12);
        }
    }

    #[test]
    fn energy_audit_closes_with_losses() {
        let r = rig(3, 3, 2, false);
        let sched = Schedule::all_build(6, 1e-4).unwrap();
        let fields = PowerFieldTrajectory::new(vec![vec![20.0; 9]; 6]);
        let t0 = vec![1100.0; 18];
        let res = simulate_fields(&r.dynamics, &r.input, &fields, &r.weight, &t0, &sched, 4).unwrap();
        assert!(res.energy.boundary < 0.0);
        assert!(res.energy.relative() < 1e-6, "{:?}", res.energy);
        assert!((res.energy.input - 20.0 * 9.0 * 5e-4).abs() < 1e-12);
    }

    #[test]
    fn metrics_count_over_and_under() {
        let r = rig(2, 1, 1, true);
        let mask = MaskVector::new(vec![true, false]).unwrap();
        let limits = MeltLimits::new(1658.0, 1723.0).unwrap();
        let sched = Schedule::all_build(2, 1e-4).unwrap();
        let fields = PowerFieldTrajectory::zeros(2, 2);
        let cold = simulate_fields(&r.dynamics, &r.input, &fields, &r.weight, &[300.0; 2], &sched, 1)
            .unwrap();
        let m = melt_metrics(&cold, &mask, &limits);
        assert_eq!((m.over, m.under, m.erroneous()), (0, 1, 1));
        let mut hot = cold.clone();
        hot.peak = vec![1800.0, 1700.0];
        let m = melt_metrics(&hot, &mask, &limits);
        assert_eq!((m.over, m.under), (1, 0));
        assert_eq!(m.melted, vec![true]);
    }

    #[test]
    fn parked_beam_matches_field() {
        let r = rig(3, 3, 1, true);
        let grid = SurfaceGrid::new(&r.mesh, &r.input).unwrap();
        let j = grid.input_at(1, 1).unwrap();
        let beam = BeamModel::new(100.0, 1e-6, 1e-6, 4000.0).unwrap();
        let sched = Schedule::all_build(3, 20e-6).unwrap();
        let seq = SpotSequence {
            commands: vec![SpotCommand {
                start_us: 0,
                input: j,
                target: grid.center(j),
                dwell_us: 40,
            }],
            beam,
            start: grid.center(j),
        };
        let t0 = vec![300.0; 9];
        let a = simulate_beam(&r.dynamics, &r.input, &grid, &seq, &r.weight, &t0, &sched, 4).unwrap();
        let mut u = vec![0.0; 9];
        u[j] = 100.0;
        let fields = PowerFieldTrajectory::new(vec![u; 3]);
        let b = simulate_fields(&r.dynamics, &r.input, &fields, &r.weight, &t0, &sched, 4).unwrap();
        for (x, y) in a.final_state().iter().zip(b.final_state()) {
            assert!((x - y).abs() <= 0.01 * (y - 300.0).abs().max(1e-9), "{x} {y}");
        }
    }

    #[test]
    fn empty_sequence_only_cools() {
        let r = rig(2, 2, 1, false);
        let grid = SurfaceGrid::new(&r.mesh, &r.input).unwrap();
        let seq = SpotSequence {
            commands: vec![],
            beam: BeamModel::new(100.0, 250e-6, 1e-6, 4000.0).unwrap(),
            start: [0.0; 2],
        };
        let sched = Schedule::all_build(4, 1e-4).unwrap();
        let t0 = vec![1000.0; 4];
        let res = simulate_beam(&r.dynamics, &r.input, &grid, &seq, &r.weight, &t0, &sched, 2).unwrap();
        assert_eq!(res.energy.input, 0.0);
        assert!(res.final_state().iter().all(|&t| t < 1000.0));
    }

    #[test]
    fn heatmap_header_and_size() {
        let r = rig(3, 2, 2, true);
        let state: Vec<f64> = (0..12).map(|i| 300.0 + i as f64).collect();
        let mut buf = Vec::new();
        write_top_layer_pgm(&r.mesh, &state, 300.0, 311.0, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(buf.len(), b"P5\n3 2\n255\n".len() + 6);
        let i = r.mesh.index_of([2, 0, 1]).unwrap();
        let expected = ((state[i] - 300.0) / 11.0 * 255.0).round() as u8;
        assert_eq!(*buf.last().unwrap(), expected);
    }
}
