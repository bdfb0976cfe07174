//! Shared fixtures for the benchmarks.

use meltplan_core::{Environment, Material, MeltLimits, ProcessModel, Schedule};

/// Bridge-shaped target on an `nx × ny` plane: a span across the bottom and
/// two legs rising from it.
pub fn bridge(nx: usize, ny: usize, s: usize) -> Vec<Vec<bool>> {
    let leg_end = ny - 1;
    (0..ny)
        .map(|y| {
            (0..nx)
                .map(|x| {
                    (s..4 * s).contains(&y) && (s..nx - s).contains(&x)
                        || (4 * s..leg_end).contains(&y)
                            && ((s..4 * s).contains(&x) || (nx - 4 * s..nx - s).contains(&x))
                })
                .collect()
        })
        .collect()
}

/// Bridge layer model at 200 µm voxels with stainless steel constants.
pub fn bridge_model(nx: usize, ny: usize, layers: usize, power: f64) -> ProcessModel {
    ProcessModel::layer(
        &bridge(nx, ny, 1),
        layers,
        2e-4,
        Material::stainless_316l(),
        Environment::new(10.0, 1100.0, 1100.0).expect("valid environment"),
        MeltLimits::new(1658.0, 1723.0).expect("valid limits"),
        power,
    )
    .expect("valid model")
}

pub fn schedule(knots: usize) -> Schedule {
    Schedule::all_build(knots, 1e-4).expect("valid schedule")
}
