//! Exact Euclidean distance and nearest-feature transforms.
//!
//! Three separable passes (x, then y, then z), each computing the lower
//! envelope of the parabolas `g(u) + w * (x - u)^2` along one grid line.
//! Isotropic grids run in integer voxel units and are scaled to µm² at the
//! end, so squared distances are exact. Anisotropic grids run in f64 with
//! per-axis weights `s^2`.
//!
//! Ties between co-minimal features resolve to the lowest linear index:
//! every pass prefers the candidate with the smaller coordinate along its
//! axis, and axes are processed from least to most significant.

use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, VoxelIndex};

const NO_FEATURE: u32 = u32::MAX;

/// Per-voxel distance to the nearest voxel of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    grid: Grid,
    squared: Vec<f64>,
    nearest: Vec<u32>,
}

impl DistanceField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Squared distances in µm², indexed like the grid.
    pub fn squared(&self) -> &[f64] {
        &self.squared
    }

    pub fn squared_at(&self, lin: usize) -> f64 {
        self.squared[lin]
    }

    /// Distance in µm.
    pub fn distance_at(&self, lin: usize) -> f64 {
        self.squared[lin].sqrt()
    }

    pub fn distance(&self, idx: VoxelIndex) -> f64 {
        self.distance_at(self.grid.linear(idx))
    }

    /// Linear index of the feature voxel attaining the distance at `lin`.
    pub fn nearest_at(&self, lin: usize) -> usize {
        self.nearest[lin] as usize
    }

    pub fn nearest(&self, idx: VoxelIndex) -> VoxelIndex {
        self.grid.index(self.nearest_at(self.grid.linear(idx)))
    }
}

trait SqMetric: Copy + PartialOrd + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    const INF: Self;
    fn from_i64(v: i64) -> Self;
    /// Smallest integer strictly greater than `num / den` (`den > 0`).
    fn first_above(num: Self, den: Self) -> i64;
}

impl SqMetric for i64 {
    const INF: i64 = i64::MAX;

    fn from_i64(v: i64) -> i64 {
        v
    }

    fn first_above(num: i64, den: i64) -> i64 {
        num.div_euclid(den) + 1
    }
}

impl SqMetric for f64 {
    const INF: f64 = f64::INFINITY;

    fn from_i64(v: i64) -> f64 {
        v as f64
    }

    fn first_above(num: f64, den: f64) -> i64 {
        let q = (num / den).floor();
        if q >= i64::MAX as f64 / 2.0 {
            i64::MAX / 2
        } else if q <= i64::MIN as f64 / 2.0 {
            i64::MIN / 2
        } else {
            q as i64 + 1
        }
    }
}

#[derive(Default)]
struct Scratch<T> {
    g: Vec<T>,
    f: Vec<u32>,
    apex: Vec<usize>,
    start: Vec<i64>,
}

impl<T: SqMetric> Scratch<T> {
    fn resize(&mut self, n: usize) {
        self.g.clear();
        self.g.resize(n, T::INF);
        self.f.clear();
        self.f.resize(n, NO_FEATURE);
    }
}

/// Lower envelope along one line. Reads `scratch.g/f`, writes `out_g/out_f`.
fn envelope<T: SqMetric>(scratch: &mut Scratch<T>, w: T, out_g: &mut [T], out_f: &mut [u32]) {
    let n = scratch.g.len();
    let g = &scratch.g;
    let apex = &mut scratch.apex;
    let start = &mut scratch.start;
    apex.clear();
    start.clear();

    let value = |u: usize, x: i64| -> T {
        let d = T::from_i64(x - u as i64);
        g[u] + w * d * d
    };

    for u in 0..n {
        if g[u] == T::INF {
            continue;
        }
        while let Some(&top) = apex.last() {
            let t = *start.last().unwrap();
            if value(u, t) >= value(top, t) {
                break;
            }
            apex.pop();
            start.pop();
        }
        match apex.last() {
            None => {
                apex.push(u);
                start.push(0);
            }
            Some(&top) => {
                let (ui, vi) = (T::from_i64(u as i64), T::from_i64(top as i64));
                let num = g[u] - g[top] + w * (ui * ui - vi * vi);
                let den = T::from_i64(2) * w * (ui - vi);
                let x0 = T::first_above(num, den).max(*start.last().unwrap() + 1);
                if x0 < n as i64 {
                    apex.push(u);
                    start.push(x0);
                }
            }
        }
    }

    if apex.is_empty() {
        out_g.fill(T::INF);
        out_f.fill(NO_FEATURE);
        return;
    }
    let mut seg = 0;
    for x in 0..n {
        while seg + 1 < apex.len() && start[seg + 1] <= x as i64 {
            seg += 1;
        }
        let u = apex[seg];
        out_g[x] = value(u, x as i64);
        out_f[x] = scratch.f[u];
    }
}

fn transform<T: SqMetric + Default>(feature: &BinaryMask, weights: [T; 3]) -> (Vec<T>, Vec<u32>) {
    let [nx, ny, nz] = feature.grid().dims();
    let n = nx * ny * nz;
    let mut g = vec![T::INF; n];
    let mut f = vec![NO_FEATURE; n];

    // x: contiguous rows
    g.par_chunks_mut(nx).zip(f.par_chunks_mut(nx)).zip(feature.data().par_chunks(nx)).enumerate().for_each_init(
        Scratch::<T>::default,
        |s, (row, ((g_row, f_row), m_row))| {
            s.resize(nx);
            for (x, &m) in m_row.iter().enumerate() {
                if m {
                    s.g[x] = T::from_i64(0);
                    s.f[x] = (row * nx + x) as u32;
                }
            }
            envelope(s, weights[0], g_row, f_row);
        },
    );

    // y: columns inside each z-slab
    g.par_chunks_mut(nx * ny).zip(f.par_chunks_mut(nx * ny)).for_each_init(
        || (Scratch::<T>::default(), vec![T::INF; ny], vec![NO_FEATURE; ny]),
        |(s, og, of), (g_slab, f_slab)| {
            for x in 0..nx {
                s.resize(ny);
                for y in 0..ny {
                    s.g[y] = g_slab[y * nx + x];
                    s.f[y] = f_slab[y * nx + x];
                }
                envelope(s, weights[1], og, of);
                for y in 0..ny {
                    g_slab[y * nx + x] = og[y];
                    f_slab[y * nx + x] = of[y];
                }
            }
        },
    );

    if nz > 1 {
        // z: gather per y-row of columns, then scatter back slab by slab
        let plane = nx * ny;
        let rows: Vec<(Vec<T>, Vec<u32>)> = (0..ny)
            .into_par_iter()
            .map_init(Scratch::<T>::default, |s, y| {
                let mut og = vec![T::INF; nx * nz];
                let mut of = vec![NO_FEATURE; nx * nz];
                for x in 0..nx {
                    s.resize(nz);
                    for z in 0..nz {
                        s.g[z] = g[z * plane + y * nx + x];
                        s.f[z] = f[z * plane + y * nx + x];
                    }
                    envelope(s, weights[2], &mut og[x * nz..(x + 1) * nz], &mut of[x * nz..(x + 1) * nz]);
                }
                (og, of)
            })
            .collect();
        g.par_chunks_mut(plane).zip(f.par_chunks_mut(plane)).enumerate().for_each(|(z, (g_slab, f_slab))| {
            for (y, (rg, rf)) in rows.iter().enumerate() {
                for x in 0..nx {
                    g_slab[y * nx + x] = rg[x * nz + z];
                    f_slab[y * nx + x] = rf[x * nz + z];
                }
            }
        });
    }
    (g, f)
}

/// Exact anisotropic Euclidean distance transform of `feature`.
///
/// Every voxel receives its voxel-center distance to the nearest feature
/// voxel together with the lowest-index feature voxel attaining it.
pub fn distance_transform(feature: &BinaryMask) -> Result<DistanceField> {
    let grid = *feature.grid();
    if grid.len() >= NO_FEATURE as usize {
        return Err(Error::InvalidParameter(format!("grid {:?} exceeds the 32-bit voxel index range", grid.dims())));
    }
    if feature.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let (squared, nearest) = if grid.is_isotropic() {
        let (g, f) = transform::<i64>(feature, [1, 1, 1]);
        let s2 = grid.spacing()[0] * grid.spacing()[0];
        (g.into_par_iter().map(|v| v as f64 * s2).collect(), f)
    } else {
        let s = grid.spacing();
        transform::<f64>(feature, [s[0] * s[0], s[1] * s[1], s[2] * s[2]])
    };
    Ok(DistanceField { grid, squared, nearest })
}
