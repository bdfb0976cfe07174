//! Spot-melt beam planning: Gaussian deposition, deflection dynamics,
//! greedy power-field tracking and baseline plans.

mod baseline;
mod footprint;
mod greedy;
mod motion;

pub use baseline::{mask_surface_inputs, random_spot_plan, uniform_field_plan};
pub use footprint::{gaussian_footprint, SurfaceGrid};
pub use greedy::{greedy_approximate, GreedySettings};
pub use motion::{beam_motion_step, BeamMotion, SUBSTEPS_PER_US};
pub(crate) use motion::trace as trace_path;

use std::io::Write;
use std::ops::Range;

use crate::error::{invalid, Result};
use crate::transcription::Schedule;

/// FWHM to standard deviation, `2√(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamModel {
    /// W
    pub power: f64,
    /// m
    pub fwhm: f64,
    /// First-order deflection time constant, s.
    pub time_constant: f64,
    /// m/s
    pub max_traverse_speed: f64,
}

impl BeamModel {
    /// Shortest command, s.
    pub const COMMAND_RESOLUTION: f64 = 1e-6;

    pub fn new(power: f64, fwhm: f64, time_constant: f64, max_traverse_speed: f64) -> Result<Self> {
        let b = Self {
            power,
            fwhm,
            time_constant,
            max_traverse_speed,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("beam power", self.power)?;
        positive("beam fwhm", self.fwhm)?;
        positive("deflection time constant", self.time_constant)?;
        if !(self.max_traverse_speed > 0.0) {
            return Err(invalid("max traverse speed", "must be positive"));
        }
        Ok(())
    }

    /// m
    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamState {
    /// Beam centroid, m.
    pub position: [f64; 2],
    /// Commanded target, m.
    pub target: [f64; 2],
    pub time_us: u64,
}

impl BeamState {
    pub fn at(position: [f64; 2]) -> Self {
        Self {
            position,
            target: position,
            time_us: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotCommand {
    pub start_us: u64,
    /// Index of the targeted surface input.
    pub input: usize,
    /// Target centre, m.
    pub target: [f64; 2],
    pub dwell_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpotSequence {
    pub commands: Vec<SpotCommand>,
    pub beam: BeamModel,
    /// Beam position before the first command, m.
    pub start: [f64; 2],
}

impl SpotSequence {
    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Σ dwell, µs.
    pub fn commanded_us(&self) -> u64 {
        self.commands.iter().map(|c| c.dwell_us).sum()
    }

    /// End of the last command, µs.
    pub fn end_us(&self) -> u64 {
        self.commands
            .last()
            .map_or(0, |c| c.start_us + c.dwell_us)
    }

    /// `t_us,x_mm,y_mm,dwell_us,power_W`, one row per command.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_us,x_mm,y_mm,dwell_us,power_W")?;
        for c in &self.commands {
            writeln!(
                out,
                "{},{:.6},{:.6},{},{}",
                c.start_us,
                c.target[0] * 1e3,
                c.target[1] * 1e3,
                c.dwell_us,
                self.beam.power
            )?;
        }
        Ok(())
    }
}

/// Build periods of the schedule in whole microseconds.
pub fn build_windows(schedule: &Schedule) -> Result<Vec<Range<u64>>> {
    let dt = schedule.dt_micros()?;
    let mut windows: Vec<Range<u64>> = Vec::new();
    let mut t = 0;
    // The last knot's step lies past the horizon.
    for k in 0..schedule.len().saturating_sub(1) {
        let end = t + dt[k];
        if schedule.is_build(k) {
            match windows.last_mut() {
                Some(w) if w.end == t => w.end = end,
                _ => windows.push(t..end),
            }
        }
        t = end;
    }
    Ok(windows)
}
