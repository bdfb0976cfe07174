use super::{BeamModel, BeamState};

/// Sub-microsecond integration resolution of the beam deflection.
pub const SUBSTEPS_PER_US: u64 = 10;

const SUBSTEP: f64 = 1e-6 / SUBSTEPS_PER_US as f64;

/// Beam positions over one command.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamMotion {
    /// Position at the midpoint of each 0.1 µs substep, m.
    pub samples: Vec<[f64; 2]>,
    pub end: BeamState,
}

/// Moves the beam toward `target` for `duration_us` under first-order
/// deflection dynamics, saturated at the maximum traverse speed.
pub fn beam_motion_step(
    state: &BeamState,
    target: [f64; 2],
    duration_us: u64,
    beam: &BeamModel,
) -> BeamMotion {
    let mut samples = Vec::with_capacity((duration_us * SUBSTEPS_PER_US) as usize);
    let position = trace(state.position, target, duration_us, beam, |p| samples.push(p));
    BeamMotion {
        samples,
        end: BeamState {
            position,
            target,
            time_us: state.time_us + duration_us,
        },
    }
}

/// Calls `f` with each substep midpoint position; returns the end position.
pub(crate) fn trace(
    mut pos: [f64; 2],
    target: [f64; 2],
    duration_us: u64,
    beam: &BeamModel,
    mut f: impl FnMut([f64; 2]),
) -> [f64; 2] {
    let half = Response::new(beam, 0.5 * SUBSTEP);
    let full = Response::new(beam, SUBSTEP);
    for _ in 0..duration_us * SUBSTEPS_PER_US {
        f(half.advance(pos, target));
        pos = full.advance(pos, target);
    }
    pos
}

struct Response {
    gain: f64,
    max_step: f64,
}

impl Response {
    fn new(beam: &BeamModel, dt: f64) -> Self {
        Self {
            gain: -(-dt / beam.time_constant).exp_m1(),
            max_step: beam.max_traverse_speed * dt,
        }
    }

    fn advance(&self, pos: [f64; 2], target: [f64; 2]) -> [f64; 2] {
        let d = [target[0] - pos[0], target[1] - pos[1]];
        let dist = d[0].hypot(d[1]);
        if dist == 0.0 {
            return pos;
        }
        let step = (dist * self.gain).min(self.max_step);
        let s = step / dist;
        [pos[0] + s * d[0], pos[1] + s * d[1]]
    }
}
