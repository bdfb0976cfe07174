use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::input::{InputMap, PowerFieldTrajectory};
use crate::objective::MaskVector;
use crate::transcription::Schedule;

use super::footprint::SurfaceGrid;
use super::{build_windows, BeamModel, SpotCommand, SpotSequence};

/// Surface inputs whose voxel lies on the mask.
pub fn mask_surface_inputs(input: &InputMap, mask: &MaskVector) -> Vec<usize> {
    input
        .surface_voxels()
        .iter()
        .enumerate()
        .filter(|(_, &v)| mask.contains(v))
        .map(|(j, _)| j)
        .collect()
}

/// `P / N` on every masked surface input during build steps, zero elsewhere.
pub fn uniform_field_plan(
    input: &InputMap,
    mask: &MaskVector,
    schedule: &Schedule,
    power: f64,
) -> Result<PowerFieldTrajectory> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(invalid("power", format!("must be nonnegative, got {power}")));
    }
    let on = mask_surface_inputs(input, mask);
    if on.is_empty() {
        return Err(Error::EmptyMask);
    }
    let share = power / on.len() as f64;
    let mut build = vec![0.0; input.len()];
    for &j in &on {
        build[j] = share;
    }
    let cool = vec![0.0; input.len()];
    Ok(PowerFieldTrajectory::new(
        (0..schedule.len())
            .map(|k| {
                if schedule.is_build(k) {
                    build.clone()
                } else {
                    cool.clone()
                }
            })
            .collect(),
    ))
}

/// Spots drawn uniformly from `candidates` with no immediate repeat, filling
/// the schedule's build periods with fixed dwells.
pub fn random_spot_plan(
    grid: &SurfaceGrid,
    candidates: &[usize],
    beam: &BeamModel,
    dwell_us: u64,
    schedule: &Schedule,
    seed: u64,
) -> Result<SpotSequence> {
    beam.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptyMask);
    }
    if dwell_us == 0 {
        return Err(invalid("dwell", "must be at least 1 µs"));
    }
    if let Some(&j) = candidates.iter().find(|&&j| j >= grid.len()) {
        return Err(invalid("candidates", format!("input {j} is not on the surface")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev: Option<usize> = None;
    let mut commands = Vec::new();
    for window in build_windows(schedule)? {
        let mut t = window.start;
        while t < window.end {
            let pick = match prev {
                Some(p) if candidates.len() > 1 => {
                    let r = rng.random_range(0..candidates.len() - 1);
                    if r >= p {
                        r + 1
                    } else {
                        r
                    }
                }
                _ => rng.random_range(0..candidates.len()),
            };
            prev = Some(pick);
            let dwell = dwell_us.min(window.end - t);
            let input = candidates[pick];
            commands.push(SpotCommand {
                start_us: t,
                input,
                target: grid.center(input),
                dwell_us: dwell,
            });
            t += dwell;
        }
    }
    Ok(SpotSequence {
        commands,
        beam: *beam,
        start: grid.middle(),
    })
}
