//! Seeded region growing and connected-component counting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Connectivity, Grid, Volume3D, VoxelIndex};

/// Lower attenuation threshold for opacified vessel lumens, in 1000/cm.
pub const VESSEL_LO: f64 = 1500.0;
/// Attenuation range of kidney tissue, in 1000/cm.
pub const TISSUE_RANGE: (f64, f64) = (600.0, 1200.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    pub lo: f64,
    /// Upper bound; `f64::INFINITY` when unbounded.
    pub hi: f64,
    pub seed: VoxelIndex,
    pub conn: Connectivity,
}

impl GrowParams {
    pub fn new(lo: f64, hi: Option<f64>, seed: VoxelIndex, conn: Connectivity) -> Result<Self> {
        let hi = hi.unwrap_or(f64::INFINITY);
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidParameter(format!("threshold range [{lo}, {hi}] is empty")));
        }
        Ok(GrowParams { lo, hi, seed, conn })
    }

    /// Vessel preset: `[1500, ∞)`, 26-connected.
    pub fn vessel(seed: VoxelIndex) -> Self {
        GrowParams { lo: VESSEL_LO, hi: f64::INFINITY, seed, conn: Connectivity::TwentySix }
    }

    /// Tissue preset: `[600, 1200]`, 6-connected.
    pub fn tissue(seed: VoxelIndex) -> Self {
        GrowParams { lo: TISSUE_RANGE.0, hi: TISSUE_RANGE.1, seed, conn: Connectivity::Six }
    }

    #[inline]
    pub fn accepts(&self, v: f32) -> bool {
        let v = v as f64;
        self.lo <= v && v <= self.hi
    }
}

/// Offsets from a linear index, with the per-axis deltas used for bounds checks.
pub(crate) fn linear_offsets(grid: &Grid, conn: Connectivity) -> Vec<([isize; 3], isize)> {
    let [nx, ny, _] = grid.dims();
    conn.offsets().iter().map(|&d| (d, d[0] + d[1] * nx as isize + d[2] * (nx * ny) as isize)).collect()
}

#[inline]
pub(crate) fn step(dims: [usize; 3], idx: VoxelIndex, d: [isize; 3]) -> bool {
    let ok = |v: usize, d: isize, n: usize| match d {
        -1 => v > 0,
        1 => v + 1 < n,
        _ => true,
    };
    ok(idx.i, d[0], dims[0]) && ok(idx.j, d[1], dims[1]) && ok(idx.k, d[2], dims[2])
}

/// Flood `admit` from `seed`, writing visited voxels into `out`.
fn flood(grid: &Grid, seed: usize, conn: Connectivity, out: &mut [bool], mut admit: impl FnMut(usize) -> bool) {
    let dims = grid.dims();
    let offs = linear_offsets(grid, conn);
    let mut work = vec![seed];
    out[seed] = true;
    while let Some(v) = work.pop() {
        let idx = grid.index(v);
        for &(d, off) in &offs {
            if !step(dims, idx, d) {
                continue;
            }
            let n = (v as isize + off) as usize;
            if !out[n] && admit(n) {
                out[n] = true;
                work.push(n);
            }
        }
    }
}

/// The `p.conn`-connected component of `{v : lo <= vol(v) <= hi}` holding the seed.
pub fn region_grow(vol: &Volume3D, p: &GrowParams) -> Result<BinaryMask> {
    let grid = *vol.grid();
    grid.check(p.seed)?;
    let seed_value = vol.get(p.seed);
    if !p.accepts(seed_value) {
        return Err(Error::SeedOutsideRange { value: seed_value as f64, lo: p.lo, hi: p.hi });
    }
    let values = vol.values();
    let mut out = vec![false; grid.len()];
    flood(&grid, grid.linear(p.seed), p.conn, &mut out, |n| p.accepts(values[n]));
    BinaryMask::new(grid, out)
}

/// Per-voxel component labels (0 = background, 1.. = component) and the count.
///
/// Labels are assigned in order of each component's lowest linear index.
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, usize) {
    let grid = *mask.grid();
    let dims = grid.dims();
    let offs = linear_offsets(&grid, conn);
    let data = mask.data();
    let mut labels = vec![0u32; grid.len()];
    let mut count = 0usize;
    let mut work = Vec::new();
    for start in 0..grid.len() {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        let label = count as u32;
        labels[start] = label;
        work.push(start);
        while let Some(v) = work.pop() {
            let idx = grid.index(v);
            for &(d, off) in &offs {
                if !step(dims, idx, d) {
                    continue;
                }
                let n = (v as isize + off) as usize;
                if data[n] && labels[n] == 0 {
                    labels[n] = label;
                    work.push(n);
                }
            }
        }
    }
    (labels, count)
}

pub fn count_components(mask: &BinaryMask, conn: Connectivity) -> usize {
    label_components(mask, conn).1
}

/// Lowest-index voxel whose value lies in `[lo, hi]`.
pub fn first_in_range(vol: &Volume3D, lo: f64, hi: f64) -> Option<VoxelIndex> {
    vol.values().iter().position(|&v| lo <= v as f64 && v as f64 <= hi).map(|lin| vol.grid().index(lin))
}
