use std::f64::consts::SQRT_2;

use crate::error::{check_len, invalid, Result};
use crate::input::InputMap;
use crate::transport::VoxelMesh;

use super::BeamModel;

/// Beyond this many standard deviations the Gaussian tail is below 1e-15.
const CUTOFF_SIGMAS: f64 = 8.0;

/// In-plane layout of the surface inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    nx: usize,
    ny: usize,
    voxel_size: f64,
    /// `iy * nx + ix` to input index.
    cells: Vec<Option<usize>>,
    coords: Vec<[usize; 2]>,
}

impl SurfaceGrid {
    pub fn new(mesh: &VoxelMesh, input: &InputMap) -> Result<Self> {
        check_len("input map rows", mesh.len(), input.state_dim())?;
        let [nx, ny, _] = mesh.dims();
        let mut cells = vec![None; nx * ny];
        let mut coords = Vec::with_capacity(input.len());
        for (j, &v) in input.surface_voxels().iter().enumerate() {
            let [x, y, _] = mesh.coords()[v];
            let cell = &mut cells[y * nx + x];
            if cell.is_some() {
                return Err(invalid(
                    "surface inputs",
                    format!("two inputs share column ({x}, {y})"),
                ));
            }
            *cell = Some(j);
            coords.push([x, y]);
        }
        Ok(Self {
            nx,
            ny,
            voxel_size: mesh.voxel_size(),
            cells,
            coords,
        })
    }

    /// Number of surface inputs.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.nx, self.ny]
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn coords(&self, j: usize) -> [usize; 2] {
        self.coords[j]
    }

    pub fn input_at(&self, x: usize, y: usize) -> Option<usize> {
        self.cells[y * self.nx + x]
    }

    /// Centre of input `j`, m.
    pub fn center(&self, j: usize) -> [f64; 2] {
        let [x, y] = self.coords[j];
        [
            (x as f64 + 0.5) * self.voxel_size,
            (y as f64 + 0.5) * self.voxel_size,
        ]
    }

    /// Centre of the bounding rectangle, m.
    pub fn middle(&self) -> [f64; 2] {
        [
            0.5 * self.nx as f64 * self.voxel_size,
            0.5 * self.ny as f64 * self.voxel_size,
        ]
    }

    /// Calls `f(j, scale · fraction_j)` for every input the Gaussian spot
    /// centred at `pos` reaches. `scratch` avoids reallocating per call.
    pub(crate) fn deposit(
        &self,
        pos: [f64; 2],
        sigma: f64,
        scale: f64,
        scratch: &mut [Vec<f64>; 2],
        mut f: impl FnMut(usize, f64),
    ) {
        let [fx, fy] = scratch;
        let Some(x0) = axis_fractions(pos[0], sigma, self.voxel_size, self.nx, fx) else {
            return;
        };
        let Some(y0) = axis_fractions(pos[1], sigma, self.voxel_size, self.ny, fy) else {
            return;
        };
        for (dy, &wy) in fy.iter().enumerate() {
            let row = (y0 + dy) * self.nx;
            for (dx, &wx) in fx.iter().enumerate() {
                if let Some(j) = self.cells[row + x0 + dx] {
                    f(j, scale * wx * wy);
                }
            }
        }
    }
}

/// Fills `out` with the Gaussian mass on each cell of the reachable span and
/// returns the span's first cell.
fn axis_fractions(p: f64, sigma: f64, l: f64, cells: usize, out: &mut Vec<f64>) -> Option<usize> {
    out.clear();
    let reach = CUTOFF_SIGMAS * sigma;
    let lo = ((p - reach) / l).floor().max(0.0);
    let hi = ((p + reach) / l).ceil().min(cells as f64);
    if hi <= lo {
        return None;
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let s = sigma * SQRT_2;
    let mut prev = libm::erf((lo as f64 * l - p) / s);
    for c in lo..hi {
        let next = libm::erf(((c + 1) as f64 * l - p) / s);
        out.push(0.5 * (next - prev));
        prev = next;
    }
    Some(lo)
}

/// Power landing on each surface input (W) with the beam centred at `pos`.
pub fn gaussian_footprint(pos: [f64; 2], grid: &SurfaceGrid, beam: &BeamModel) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    let mut scratch = [Vec::new(), Vec::new()];
    grid.deposit(pos, beam.sigma(), beam.power, &mut scratch, |j, p| out[j] += p);
    out
}
