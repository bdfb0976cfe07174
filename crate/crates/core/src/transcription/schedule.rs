use std::ops::Range;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Build,
    Cool,
}

/// Per-cycle step counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleSpec {
    pub build_steps: usize,
    pub cool_steps: usize,
}

/// Knot schedule. Step `k` spans `[t_k, t_k + dt_k)`; the input of step `k`
/// carries knot `k` to knot `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    dt: Vec<f64>,
    phases: Vec<Phase>,
    cycles: Vec<Range<usize>>,
}

impl Schedule {
    pub fn new(dt: Vec<f64>, phases: Vec<Phase>, cycles: Vec<Range<usize>>) -> Result<Self> {
        crate::error::check_len("schedule phases", dt.len(), phases.len())?;
        if dt.is_empty() {
            return Err(invalid("schedule", "needs at least one knot"));
        }
        if let Some(v) = dt.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid("dt", format!("timesteps must be positive, got {v}")));
        }
        let mut next = 0;
        for c in &cycles {
            if c.start != next || c.end <= c.start {
                return Err(invalid("cycles", "cycle ranges must partition the knots"));
            }
            let first_cool = phases[c.clone()]
                .iter()
                .position(|p| *p == Phase::Cool)
                .map_or(c.end, |p| c.start + p);
            if phases[first_cool..c.end].iter().any(|p| *p == Phase::Build) {
                return Err(invalid("cycles", "build steps must precede cool steps"));
            }
            next = c.end;
        }
        if next != dt.len() {
            return Err(invalid("cycles", "cycle ranges must partition the knots"));
        }
        Ok(Self { dt, phases, cycles })
    }

    /// Fixed-timestep schedule made of consecutive cycles.
    pub fn from_cycles(dt: f64, cycles: &[CycleSpec]) -> Result<Self> {
        let mut phases = Vec::new();
        let mut ranges = Vec::new();
        for c in cycles {
            let start = phases.len();
            phases.extend(std::iter::repeat_n(Phase::Build, c.build_steps));
            phases.extend(std::iter::repeat_n(Phase::Cool, c.cool_steps));
            ranges.push(start..phases.len());
        }
        Self::new(vec![dt; phases.len()], phases, ranges)
    }

    pub fn all_build(knots: usize, dt: f64) -> Result<Self> {
        Self::from_cycles(
            dt,
            &[CycleSpec {
                build_steps: knots,
                cool_steps: 0,
            }],
        )
    }

    pub fn len(&self) -> usize {
        self.dt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt.is_empty()
    }

    pub fn dt(&self) -> &[f64] {
        &self.dt
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn cycles(&self) -> &[Range<usize>] {
        &self.cycles
    }

    pub fn is_build(&self, k: usize) -> bool {
        self.phases[k] == Phase::Build
    }

    pub fn build_steps(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.is_build(k))
    }

    pub fn build_count(&self) -> usize {
        self.build_steps().count()
    }

    /// Knot times `t_k`, starting at zero.
    pub fn knot_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.dt
            .iter()
            .map(|dt| {
                let now = t;
                t += dt;
                now
            })
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.dt.iter().sum()
    }

    /// Common timestep, if all steps share one.
    pub fn uniform_dt(&self) -> Option<f64> {
        let first = self.dt[0];
        self.dt.iter().all(|&d| d == first).then_some(first)
    }

    /// Knot at which each cycle's build period ends, for cycles that have
    /// build steps: the knot right after the last build step, or the final
    /// knot when the build runs to the end of the horizon.
    pub fn melt_knots(&self) -> Vec<usize> {
        self.cycles
            .iter()
            .filter_map(|c| {
                let last_build = c.clone().filter(|&k| self.is_build(k)).last()?;
                Some((last_build + 1).min(self.len() - 1))
            })
            .collect()
    }

    /// Step index containing time `t` (clamped to the last step).
    pub fn step_at(&self, t: f64) -> usize {
        let mut acc = 0.0;
        for (k, dt) in self.dt.iter().enumerate() {
            acc += dt;
            if t < acc {
                return k;
            }
        }
        self.len() - 1
    }

    /// Timesteps as whole microseconds; fails if any step is not a multiple
    /// of one microsecond.
    pub fn dt_micros(&self) -> Result<Vec<u64>> {
        self.dt
            .iter()
            .map(|&dt| {
                let us = (dt * 1e6).round();
                if (dt * 1e6 - us).abs() > 1e-6 || us < 1.0 {
                    Err(invalid(
                        "dt",
                        format!("{dt} s is not a whole number of microseconds"),
                    ))
                } else {
                    Ok(us as u64)
                }
            })
            .collect()
    }
}
