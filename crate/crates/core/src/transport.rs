//! Voxelized finite-volume conduction/convection model.
//!
//! The part is discretized into uniform cubic voxels of side `l`. Each voxel
//! exchanges heat with its face neighbours (conduction), with the baseplate
//! through its bottom face when it sits on layer zero, and with the ambient
//! through every other free face (convection). Collecting the per-voxel energy
//! balances gives the autonomous linear system `dT/dt = A T + e` with
//!
//! ```text
//! A = -(α/l² L + α/l⁴ diag(A_i0) + h/C diag(A_i∞))
//! e =  (α/l⁴ diag(A_i0) T_plate + h/C diag(A_i∞) T_∞) · 1
//! ```
//!
//! where `L` is the graph Laplacian of the voxel adjacency graph.

use crate::error::{invalid, Error, Result};
use crate::sparse::{self, SparseMatrix};
use sprs::CsMat;

/// Constant thermophysical properties of the build material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// W/(m·K)
    pub conductivity: f64,
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
}

impl Material {
    pub fn new(conductivity: f64, density: f64, specific_heat: f64) -> Result<Self> {
        let m = Self {
            conductivity,
            density,
            specific_heat,
        };
        m.validate()?;
        Ok(m)
    }

    /// 316L stainless steel evaluated at the solidus.
    pub fn stainless_316l() -> Self {
        Self {
            conductivity: 31.1,
            density: 7269.0,
            specific_heat: 720.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("conductivity", self.conductivity),
            ("density", self.density),
            ("specific_heat", self.specific_heat),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Thermal diffusivity `k / (ρ c_p)` in m²/s.
    pub fn diffusivity(&self) -> f64 {
        self.conductivity / (self.density * self.specific_heat)
    }

    /// Heat capacity of one cubic voxel of side `l`, J/K.
    pub fn voxel_heat_capacity(&self, voxel_size: f64) -> f64 {
        self.specific_heat * self.density * voxel_size.powi(3)
    }
}

/// Boundary conditions: convection to the chamber and a fixed-temperature
/// baseplate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    /// W/(m²·K)
    pub convection_coefficient: f64,
    /// K
    pub ambient_temperature: f64,
    /// K
    pub baseplate_temperature: f64,
}

impl Environment {
    pub fn new(
        convection_coefficient: f64,
        ambient_temperature: f64,
        baseplate_temperature: f64,
    ) -> Result<Self> {
        let env = Self {
            convection_coefficient,
            ambient_temperature,
            baseplate_temperature,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.convection_coefficient.is_finite() && self.convection_coefficient >= 0.0) {
            return Err(invalid(
                "convection_coefficient",
                format!("must be nonnegative, got {}", self.convection_coefficient),
            ));
        }
        for (name, t) in [
            ("ambient_temperature", self.ambient_temperature),
            ("baseplate_temperature", self.baseplate_temperature),
        ] {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid(name, format!("must be > 0 K, got {t}")));
            }
        }
        Ok(())
    }
}

/// Dense boolean occupancy grid, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    dims: [usize; 3],
    cells: Vec<bool>,
}

impl Occupancy {
    pub fn new(dims: [usize; 3], cells: Vec<bool>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        crate::error::check_len("occupancy cells", expected, cells.len())?;
        Ok(Self { dims, cells })
    }

    pub fn filled(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            dims: [nx, ny, nz],
            cells: vec![true; nx * ny * nz],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    cells.push(f(x, y, z));
                }
            }
        }
        Self { dims, cells }
    }

    /// Repeats a 2-D `rows[y][x]` pattern over `layers` z levels.
    pub fn extrude(rows: &[Vec<bool>], layers: usize) -> Result<Self> {
        let ny = rows.len();
        let nx = rows.first().map_or(0, Vec::len);
        if let Some((y, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != nx) {
            return Err(invalid(
                "rows",
                format!("row {y} has {} cells, expected {nx}", r.len()),
            ));
        }
        Ok(Self::from_fn([nx, ny, layers], |x, y, _| rows[y][x]))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

const FACE_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Uniform cubic voxel mesh with its 6-neighbourhood adjacency graph.
#[derive(Debug, Clone)]
pub struct VoxelMesh {
    voxel_size: f64,
    dims: [usize; 3],
    coords: Vec<[usize; 3]>,
    lookup: Vec<Option<usize>>,
    neighbors: Vec<Vec<usize>>,
    exposed_area: Vec<f64>,
    baseplate_area: Vec<f64>,
    melt: Vec<bool>,
}

/// Voxelizes an occupancy grid. Voxels are numbered in grid order (x fastest).
pub fn build_voxel_grid(occupancy: &Occupancy, voxel_size: f64) -> Result<VoxelMesh> {
    if !(voxel_size.is_finite() && voxel_size > 0.0) {
        return Err(invalid("voxel_size", format!("must be positive, got {voxel_size}")));
    }
    let dims = occupancy.dims();
    let mut coords = Vec::new();
    let mut lookup = vec![None; dims[0] * dims[1] * dims[2]];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if occupancy.get(x, y, z) {
                    lookup[x + dims[0] * (y + dims[1] * z)] = Some(coords.len());
                    coords.push([x, y, z]);
                }
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let face = voxel_size * voxel_size;
    let n = coords.len();
    let mut mesh = VoxelMesh {
        voxel_size,
        dims,
        coords,
        lookup,
        neighbors: vec![Vec::new(); n],
        exposed_area: vec![0.0; n],
        baseplate_area: vec![0.0; n],
        melt: vec![false; n],
    };
    for i in 0..n {
        let c = mesh.coords[i];
        let mut exposed = 0usize;
        for off in FACE_OFFSETS {
            match mesh.offset(c, off) {
                Some(j) => mesh.neighbors[i].push(j),
                None if off[2] == -1 && c[2] == 0 => mesh.baseplate_area[i] = face,
                None => exposed += 1,
            }
        }
        mesh.neighbors[i].sort_unstable();
        mesh.exposed_area[i] = face * exposed as f64;
    }
    Ok(mesh)
}

impl VoxelMesh {
    fn offset(&self, c: [usize; 3], off: [i64; 3]) -> Option<usize> {
        let mut p = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + off[a];
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            p[a] = v as usize;
        }
        self.index_of(p)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn coords(&self) -> &[[usize; 3]] {
        &self.coords
    }

    pub fn index_of(&self, c: [usize; 3]) -> Option<usize> {
        if c[0] >= self.dims[0] || c[1] >= self.dims[1] || c[2] >= self.dims[2] {
            return None;
        }
        self.lookup[c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn exposed_area(&self) -> &[f64] {
        &self.exposed_area
    }

    pub fn baseplate_area(&self) -> &[f64] {
        &self.baseplate_area
    }

    /// Melt-target membership flags.
    pub fn melt_flags(&self) -> &[bool] {
        &self.melt
    }

    /// Flags the voxels selected by `f(x, y, z)` as melt targets.
    pub fn with_melt_region(mut self, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        for (flag, &c) in self.melt.iter_mut().zip(&self.coords) {
            *flag = f(c);
        }
        self
    }

    /// Drops the baseplate contact, leaving those faces adiabatic.
    pub fn insulate_baseplate(mut self) -> Self {
        self.baseplate_area.iter_mut().for_each(|a| *a = 0.0);
        self
    }

    /// Highest occupied z level.
    pub fn top_level(&self) -> usize {
        self.coords.iter().map(|c| c[2]).max().unwrap_or(0)
    }

    /// Voxels on the highest occupied z level, in index order.
    pub fn top_surface(&self) -> Vec<usize> {
        let top = self.top_level();
        (0..self.len()).filter(|&i| self.coords[i][2] == top).collect()
    }

    /// Centre of voxel `i` in metres.
    pub fn center(&self, i: usize) -> [f64; 3] {
        let c = self.coords[i];
        [
            (c[0] as f64 + 0.5) * self.voxel_size,
            (c[1] as f64 + 0.5) * self.voxel_size,
            (c[2] as f64 + 0.5) * self.voxel_size,
        ]
    }

    /// Renumbers voxels so that old voxel `order[k]` becomes voxel `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.len();
        crate::error::check_len("permutation", n, order.len())?;
        let mut new_of_old = vec![usize::MAX; n];
        for (k, &old) in order.iter().enumerate() {
            if old >= n || new_of_old[old] != usize::MAX {
                return Err(invalid("order", "not a permutation"));
            }
            new_of_old[old] = k;
        }
        let pick = |v: &[f64]| order.iter().map(|&o| v[o]).collect::<Vec<_>>();
        let mut neighbors: Vec<Vec<usize>> = order
            .iter()
            .map(|&o| self.neighbors[o].iter().map(|&j| new_of_old[j]).collect())
            .collect();
        neighbors.iter_mut().for_each(|ns| ns.sort_unstable());
        Ok(Self {
            voxel_size: self.voxel_size,
            dims: self.dims,
            coords: order.iter().map(|&o| self.coords[o]).collect(),
            lookup: self.lookup.iter().map(|s| s.map(|i| new_of_old[i])).collect(),
            neighbors,
            exposed_area: pick(&self.exposed_area),
            baseplate_area: pick(&self.baseplate_area),
            melt: order.iter().map(|&o| self.melt[o]).collect(),
        })
    }
}

/// `L = Δ − Λ` of the voxel adjacency graph. The diagonal is always stored.
pub fn graph_laplacian(mesh: &VoxelMesh) -> SparseMatrix {
    let n = mesh.len();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(n + 2 * mesh.edge_count());
    let mut data = Vec::with_capacity(indices.capacity());
    indptr.push(0);
    for i in 0..n {
        let ns = mesh.neighbors(i);
        let mut diag_done = false;
        for &j in ns {
            if !diag_done && j > i {
                indices.push(i);
                data.push(ns.len() as f64);
                diag_done = true;
            }
            indices.push(j);
            data.push(-1.0);
        }
        if !diag_done {
            indices.push(i);
            data.push(ns.len() as f64);
        }
        indptr.push(indices.len());
    }
    CsMat::new((n, n), indptr, indices, data)
}

/// Autonomous linear dynamics `dT/dt = A T + e`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    /// 1/s
    pub a: SparseMatrix,
    /// K/s
    pub e: Vec<f64>,
    /// Per-voxel heat capacity, J/K.
    pub heat_capacity: f64,
}

impl LinearDynamics {
    pub fn dim(&self) -> usize {
        self.e.len()
    }

    /// `A T + e`.
    pub fn rate(&self, temperatures: &[f64]) -> Vec<f64> {
        let mut r = self.e.clone();
        sparse::matvec_acc(&self.a, temperatures, &mut r);
        r
    }

    /// Net power entering the part through its boundaries (W); negative when
    /// the part is losing heat. The conduction terms cancel because `L·1 = 0`.
    pub fn boundary_power(&self, temperatures: &[f64]) -> f64 {
        self.heat_capacity * self.rate(temperatures).iter().sum::<f64>()
    }
}

pub fn assemble_dynamics(
    mesh: &VoxelMesh,
    material: &Material,
    env: &Environment,
) -> Result<LinearDynamics> {
    material.validate()?;
    env.validate()?;
    if mesh.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let l = mesh.voxel_size();
    let alpha = material.diffusivity();
    let cap = material.voxel_heat_capacity(l);
    let conduction = alpha / (l * l);
    let plate = alpha / l.powi(4);
    let conv = env.convection_coefficient / cap;

    let (indptr, indices, mut data) = graph_laplacian(mesh).into_raw_storage();
    let mut e = vec![0.0; mesh.len()];
    for i in 0..mesh.len() {
        let plate_coupling = plate * mesh.baseplate_area()[i];
        let conv_coupling = conv * mesh.exposed_area()[i];
        e[i] = plate_coupling * env.baseplate_temperature
            + conv_coupling * env.ambient_temperature;
        for k in indptr[i]..indptr[i + 1] {
            data[k] *= -conduction;
            if indices[k] == i {
                data[k] -= plate_coupling + conv_coupling;
            }
        }
    }
    let a = CsMat::new((mesh.len(), mesh.len()), indptr, indices, data);
    Ok(LinearDynamics {
        a,
        e,
        heat_capacity: cap,
    })
}
