//! Voxel-grid data model.
//!
//! All buffers are stored x-fastest: the voxel `(i, j, k)` lives at linear
//! index `i + nx * (j + ny * k)`. Coordinates of a voxel center in µm are
//! `(i * sx, j * sy, k * sz)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default voxel edge length in µm.
pub const DEFAULT_SPACING_UM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl VoxelIndex {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        VoxelIndex { i, j, k }
    }

    pub fn as_array(self) -> [usize; 3] {
        [self.i, self.j, self.k]
    }
}

impl From<[usize; 3]> for VoxelIndex {
    fn from(a: [usize; 3]) -> Self {
        VoxelIndex::new(a[0], a[1], a[2])
    }
}

/// Dimensions and physical spacing of a regular voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive and finite, got {spacing:?}")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidParameter(format!("grid {dims:?} is too large")))?;
        Ok(Grid { dims, spacing })
    }

    /// Isotropic grid with the given edge length.
    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Result<Self> {
        Grid::new(dims, [spacing; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_isotropic(&self) -> bool {
        self.spacing[0] == self.spacing[1] && self.spacing[1] == self.spacing[2]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, idx: VoxelIndex) -> bool {
        idx.i < self.dims[0] && idx.j < self.dims[1] && idx.k < self.dims[2]
    }

    pub fn check(&self, idx: VoxelIndex) -> Result<()> {
        if self.contains(idx) {
            Ok(())
        } else {
            Err(Error::OutOfBounds { index: idx, dims: self.dims })
        }
    }

    #[inline]
    pub fn linear(&self, idx: VoxelIndex) -> usize {
        idx.i + self.dims[0] * (idx.j + self.dims[1] * idx.k)
    }

    #[inline]
    pub fn index(&self, lin: usize) -> VoxelIndex {
        let nx = self.dims[0];
        let ny = self.dims[1];
        VoxelIndex::new(lin % nx, (lin / nx) % ny, lin / (nx * ny))
    }

    /// Voxel-center position in µm.
    pub fn position(&self, idx: VoxelIndex) -> [f64; 3] {
        [idx.i as f64 * self.spacing[0], idx.j as f64 * self.spacing[1], idx.k as f64 * self.spacing[2]]
    }

    /// Physical (spacing-scaled) distance between two voxel centers.
    pub fn distance(&self, a: VoxelIndex, b: VoxelIndex) -> f64 {
        self.squared_distance(a, b).sqrt()
    }

    pub fn squared_distance(&self, a: VoxelIndex, b: VoxelIndex) -> f64 {
        let d = |x: usize, y: usize, s: f64| (x as f64 - y as f64) * s;
        let dx = d(a.i, b.i, self.spacing[0]);
        let dy = d(a.j, b.j, self.spacing[1]);
        let dz = d(a.k, b.k, self.spacing[2]);
        dx * dx + dy * dy + dz * dz
    }

    /// Offset `idx` by `delta`, returning the neighbor if it stays in bounds.
    #[inline]
    pub fn offset(&self, idx: VoxelIndex, delta: [isize; 3]) -> Option<VoxelIndex> {
        let step = |v: usize, d: isize, n: usize| {
            let r = v as isize + d;
            (r >= 0 && (r as usize) < n).then_some(r as usize)
        };
        Some(VoxelIndex::new(
            step(idx.i, delta[0], self.dims[0])?,
            step(idx.j, delta[1], self.dims[1])?,
            step(idx.k, delta[2], self.dims[2])?,
        ))
    }
}

/// The three standard 3D voxel neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    pub fn count(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Neighbor offsets in a fixed order (z-major, then y, then x).
    pub fn offsets(self) -> &'static [[isize; 3]] {
        match self {
            Connectivity::Six => &OFFSETS_6,
            Connectivity::Eighteen => &OFFSETS_18,
            Connectivity::TwentySix => &OFFSETS_26,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(Error::InvalidParameter(format!("connectivity must be 6, 18 or 26, got {n}"))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        c.count()
    }
}

const fn offsets<const N: usize>(max_nonzero: usize) -> [[isize; 3]; N] {
    let mut out = [[0isize; 3]; N];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                let nz = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                if nz >= 1 && nz <= max_nonzero {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
}

static OFFSETS_6: [[isize; 3]; 6] = offsets::<6>(1);
static OFFSETS_18: [[isize; 3]; 18] = offsets::<18>(2);
static OFFSETS_26: [[isize; 3]; 26] = offsets::<26>(3);

/// In-bounds voxels adjacent to `idx` under `conn`.
pub fn neighbors(idx: VoxelIndex, grid: &Grid, conn: Connectivity) -> Result<Vec<VoxelIndex>> {
    grid.check(idx)?;
    Ok(conn.offsets().iter().filter_map(|&d| grid.offset(idx, d)).collect())
}

/// Gray-scale scalar field on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    grid: Grid,
    values: Vec<f32>,
}

impl Volume3D {
    pub fn new(grid: Grid, values: Vec<f32>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "buffer holds {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Volume3D { grid, values })
    }

    pub fn filled(grid: Grid, value: f32) -> Self {
        Volume3D { grid, values: vec![value; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, idx: VoxelIndex) -> f32 {
        self.values[self.grid.linear(idx)]
    }

    pub fn set(&mut self, idx: VoxelIndex, v: f32) {
        let lin = self.grid.linear(idx);
        self.values[lin] = v;
    }
}

/// Boolean membership over a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "mask holds {} voxels, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(BinaryMask { grid, data })
    }

    pub fn empty(grid: Grid) -> Self {
        BinaryMask { grid, data: vec![false; grid.len()] }
    }

    pub fn full(grid: Grid) -> Self {
        BinaryMask { grid, data: vec![true; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(VoxelIndex) -> bool) -> Self {
        let data = (0..grid.len()).map(|lin| f(grid.index(lin))).collect();
        BinaryMask { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<bool> {
        self.data
    }

    pub fn get(&self, idx: VoxelIndex) -> bool {
        self.data[self.grid.linear(idx)]
    }

    pub fn set(&mut self, idx: VoxelIndex, v: bool) {
        let lin = self.grid.linear(idx);
        self.data[lin] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Linear indices of set voxels, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask { grid: self.grid, data: self.data.iter().map(|&b| !b).collect() }
    }

    /// True when every voxel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.grid == other.grid && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub(crate) fn require_same_grid(&self, other: &BinaryMask) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// 0/1 volume for export.
    pub fn to_volume(&self) -> Volume3D {
        Volume3D { grid: self.grid, values: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect() }
    }

    /// Nonzero voxels of `vol` become members.
    pub fn from_volume(vol: &Volume3D) -> Self {
        BinaryMask { grid: vol.grid, data: vol.values.iter().map(|&v| v != 0.0).collect() }
    }
}
