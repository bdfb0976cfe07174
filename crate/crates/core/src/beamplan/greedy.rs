use rayon::prelude::*;

use crate::error::{check_len, invalid, Error, Result};
use crate::input::PowerFieldTrajectory;
use crate::transcription::Schedule;

use super::footprint::SurfaceGrid;
use super::motion::{trace, SUBSTEPS_PER_US};
use super::{build_windows, BeamModel, SpotCommand, SpotSequence};

const SAMPLE_SECONDS: f64 = 1e-6 / SUBSTEPS_PER_US as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedySettings {
    pub dwell_us: u64,
    /// Length of the trailing time-average, µs.
    pub window_us: u64,
}

impl GreedySettings {
    pub fn validate(&self) -> Result<()> {
        if self.dwell_us == 0 {
            return Err(invalid("dwell", "must be at least 1 µs"));
        }
        if self.window_us < self.dwell_us {
            return Err(invalid("greedy window", "must be at least one dwell"));
        }
        Ok(())
    }
}

/// Per-µs energy deposited by committed spots, kept for the last `window` µs.
struct History {
    bins: Vec<Vec<f64>>,
    stamps: Vec<Option<u64>>,
}

impl History {
    fn new(window: u64, m: usize) -> Self {
        Self {
            bins: vec![vec![0.0; m]; window as usize],
            stamps: vec![None; window as usize],
        }
    }

    fn slot(&mut self, t: u64) -> &mut Vec<f64> {
        let i = (t % self.bins.len() as u64) as usize;
        if self.stamps[i] != Some(t) {
            self.stamps[i] = Some(t);
            self.bins[i].iter_mut().for_each(|v| *v = 0.0);
        }
        &mut self.bins[i]
    }

    /// Energy over `[from, to)` µs, J.
    fn sum(&self, from: u64, to: u64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in from..to {
            let i = (t % self.bins.len() as u64) as usize;
            if self.stamps[i] == Some(t) {
                out.iter_mut().zip(&self.bins[i]).for_each(|(o, b)| *o += b);
            }
        }
    }
}

struct Scratch {
    energy: Vec<f64>,
    touched: Vec<usize>,
    axes: [Vec<f64>; 2],
}

/// Approximates a power-field trajectory with a spot sequence by repeatedly
/// committing the spot whose traverse and dwell bring the trailing
/// time-averaged deposition closest (in squared norm) to the active field.
/// Ties go to the lowest input index.
pub fn greedy_approximate(
    fields: &PowerFieldTrajectory,
    schedule: &Schedule,
    beam: &BeamModel,
    grid: &SurfaceGrid,
    settings: &GreedySettings,
) -> Result<SpotSequence> {
    settings.validate()?;
    beam.validate()?;
    let m = grid.len();
    if m == 0 {
        return Err(Error::NoCandidates);
    }
    let steps = schedule.len().saturating_sub(1);
    if fields.len() < steps {
        return Err(Error::DimensionMismatch {
            context: "power field steps",
            expected: steps,
            found: fields.len(),
        });
    }
    for u in &fields.inputs[..steps] {
        check_len("power field inputs", m, u.len())?;
    }
    let dt = schedule.dt_micros()?;
    let mut step_end = Vec::with_capacity(dt.len());
    let mut acc = 0;
    for d in &dt {
        acc += d;
        step_end.push(acc);
    }

    let sigma = beam.sigma();
    let sample_energy = beam.power * SAMPLE_SECONDS;
    let mut history = History::new(settings.window_us, m);
    let mut past = vec![0.0; m];
    let mut residual = vec![0.0; m];
    let mut commands = Vec::new();
    let start = grid.middle();
    let mut pos = start;
    let mut k = 0;

    for window in build_windows(schedule)? {
        let mut t = window.start;
        while t < window.end {
            while step_end[k] <= t {
                k += 1;
            }
            let d = settings.dwell_us.min(step_end[k] - t);
            let span = settings.window_us.min(t + d);
            let seconds = span as f64 * 1e-6;
            history.sum(t + d - span, t, &mut past);
            for ((r, p), u) in residual.iter_mut().zip(&past).zip(&fields.inputs[k]) {
                *r = p / seconds - u;
            }

            // Score relative to leaving the field as is: Σ (r + e/W)² − r².
            let scores: Vec<f64> = (0..m)
                .into_par_iter()
                .map_init(
                    || Scratch {
                        energy: vec![0.0; m],
                        touched: Vec::new(),
                        axes: [Vec::new(), Vec::new()],
                    },
                    |s, j| {
                        trace(pos, grid.center(j), d, beam, |p| {
                            grid.deposit(p, sigma, sample_energy, &mut s.axes, |i, e| {
                                if s.energy[i] == 0.0 {
                                    s.touched.push(i);
                                }
                                s.energy[i] += e;
                            });
                        });
                        let mut score = 0.0;
                        for &i in &s.touched {
                            let a = s.energy[i] / seconds;
                            score += a * (2.0 * residual[i] + a);
                            s.energy[i] = 0.0;
                        }
                        s.touched.clear();
                        score
                    },
                )
                .collect();
            let mut best = 0;
            for (j, &s) in scores.iter().enumerate() {
                if s < scores[best] {
                    best = j;
                }
            }

            let target = grid.center(best);
            let mut axes = [Vec::new(), Vec::new()];
            let mut n = 0u64;
            pos = trace(pos, target, d, beam, |p| {
                let bin = history.slot(t + n / SUBSTEPS_PER_US);
                grid.deposit(p, sigma, sample_energy, &mut axes, |i, e| bin[i] += e);
                n += 1;
            });
            commands.push(SpotCommand {
                start_us: t,
                input: best,
                target,
                dwell_us: d,
            });
            t += d;
        }
    }
    Ok(SpotSequence {
        commands,
        beam: *beam,
        start,
    })
}
