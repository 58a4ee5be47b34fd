//! Topology-preserving thinning of 3D binary masks to 1-voxel-wide centerlines.
//!
//! Foreground uses 26-connectivity, background 6-connectivity. A voxel is
//! removed only if it is simple (its deletion changes neither the number of
//! foreground components, tunnels nor cavities) and is not a line endpoint.
//!
//! Each pass runs six directional sub-iterations. Within a sub-iteration the
//! candidate set is computed from the state at the start of the
//! sub-iteration; candidates are then re-checked and removed one by one in
//! ascending linear order, which keeps removal topology-safe and the result
//! deterministic.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, VoxelIndex};

const CENTER: u32 = 13;
const ALL: u32 = (1 << 27) - 1;

#[inline]
fn bit(dx: isize, dy: isize, dz: isize) -> u32 {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as u32
}

fn bit_coords(b: u32) -> [isize; 3] {
    let b = b as isize;
    [b % 3 - 1, (b / 3) % 3 - 1, b / 9 - 1]
}

struct Tables {
    adj26: [u32; 27],
    adj6: [u32; 27],
    n6: u32,
    n18: u32,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut adj26 = [0u32; 27];
        let mut adj6 = [0u32; 27];
        let mut n6 = 0;
        let mut n18 = 0;
        for a in 0..27u32 {
            let ca = bit_coords(a);
            let nz = ca.iter().filter(|&&v| v != 0).count();
            if nz == 1 {
                n6 |= 1 << a;
            }
            if (1..=2).contains(&nz) {
                n18 |= 1 << a;
            }
            for b in 0..27u32 {
                if a == b {
                    continue;
                }
                let cb = bit_coords(b);
                let d: Vec<isize> = (0..3).map(|i| (ca[i] - cb[i]).abs()).collect();
                if d.iter().all(|&v| v <= 1) {
                    adj26[a as usize] |= 1 << b;
                    if d.iter().sum::<isize>() == 1 {
                        adj6[a as usize] |= 1 << b;
                    }
                }
            }
        }
        Tables { adj26, adj6, n6, n18 }
    })
}

/// Flood the component of `set` holding the lowest bit of `seed`.
#[inline]
fn component(set: u32, seed: u32, adj: &[u32; 27]) -> u32 {
    let mut comp = seed & set;
    let mut frontier = comp;
    while frontier != 0 {
        let b = frontier.trailing_zeros();
        frontier &= frontier - 1;
        let grow = adj[b as usize] & set & !comp;
        comp |= grow;
        frontier |= grow;
    }
    comp
}

/// Simple-point test on a 3×3×3 configuration (bit 13 = center).
///
/// Requires exactly one 26-component of foreground in the 26-neighborhood
/// and exactly one 6-component of background in the 18-neighborhood that is
/// 6-adjacent to the center.
pub fn is_simple(config: u32) -> bool {
    let t = tables();
    let fg = config & ALL & !(1 << CENTER);
    if fg == 0 {
        return false;
    }
    let first = component(fg, fg & fg.wrapping_neg(), &t.adj26);
    if first != fg {
        return false;
    }
    let bg = !config & t.n18;
    let touching = bg & t.n6;
    if touching == 0 {
        return false;
    }
    let comp = component(bg, touching & touching.wrapping_neg(), &t.adj6);
    touching & !comp == 0
}

/// Number of foreground 26-neighbors in a configuration.
#[inline]
pub fn neighbor_count(config: u32) -> u32 {
    (config & ALL & !(1 << CENTER)).count_ones()
}

pub(crate) fn configuration(data: &[bool], grid: &Grid, lin: usize) -> u32 {
    let [nx, ny, nz] = grid.dims();
    let idx = grid.index(lin);
    let mut cfg = 0u32;
    for dz in -1isize..=1 {
        let z = idx.k as isize + dz;
        if z < 0 || z >= nz as isize {
            continue;
        }
        for dy in -1isize..=1 {
            let y = idx.j as isize + dy;
            if y < 0 || y >= ny as isize {
                continue;
            }
            for dx in -1isize..=1 {
                let x = idx.i as isize + dx;
                if x < 0 || x >= nx as isize {
                    continue;
                }
                if data[x as usize + nx * (y as usize + ny * z as usize)] {
                    cfg |= 1 << bit(dx, dy, dz);
                }
            }
        }
    }
    cfg
}

/// Centerline voxels of a binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    mask: BinaryMask,
}

impl Skeleton {
    /// Wraps a mask that is already a centerline.
    pub fn from_mask(mask: BinaryMask) -> Self {
        Skeleton { mask }
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn into_mask(self) -> BinaryMask {
        self.mask
    }

    pub fn grid(&self) -> &Grid {
        self.mask.grid()
    }
}

const DIRECTIONS: [(isize, isize, isize); 6] = [(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)];

/// Thin `mask` until no removable voxel remains.
pub fn thin(mask: &BinaryMask) -> Result<Skeleton> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let grid = *mask.grid();
    let mut data = mask.data().to_vec();
    let mut active: Vec<usize> = mask.indices().collect();

    loop {
        let mut removed = 0usize;
        for &(dx, dy, dz) in &DIRECTIONS {
            let side = 1u32 << bit(dx, dy, dz);
            let candidates: Vec<usize> = active
                .par_iter()
                .copied()
                .filter(|&v| {
                    if !data[v] {
                        return false;
                    }
                    let cfg = configuration(&data, &grid, v);
                    cfg & side == 0 && neighbor_count(cfg) > 1 && is_simple(cfg)
                })
                .collect();
            for v in candidates {
                let cfg = configuration(&data, &grid, v);
                if neighbor_count(cfg) > 1 && is_simple(cfg) {
                    data[v] = false;
                    removed += 1;
                }
            }
        }
        if removed == 0 {
            break;
        }
        active.retain(|&v| data[v]);
    }
    Ok(Skeleton { mask: BinaryMask::new(grid, data)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoxelClass {
    Endpoint,
    Regular,
    Junction,
}

/// Per-voxel class by 26-neighbor count within the skeleton; `None` off-skeleton.
pub fn classify(skel: &Skeleton) -> Vec<Option<VoxelClass>> {
    let grid = *skel.grid();
    let data = skel.mask().data();
    (0..grid.len())
        .into_par_iter()
        .map(|v| {
            if !data[v] {
                return None;
            }
            Some(match neighbor_count(configuration(data, &grid, v)) {
                0 | 1 => VoxelClass::Endpoint,
                2 => VoxelClass::Regular,
                _ => VoxelClass::Junction,
            })
        })
        .collect()
}

/// Euler characteristic of the union of closed unit cubes at set voxels.
///
/// Matches (26, 6) digital topology: `components - tunnels + cavities`.
pub fn euler_characteristic(mask: &BinaryMask) -> i64 {
    let [nx, ny, nz] = mask.grid().dims();
    let data = mask.data();
    let at = |x: isize, y: isize, z: isize| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && data[x as usize + nx * (y as usize + ny * z as usize)]
    };
    // Count lattice cells of each dimension touched by at least one voxel.
    // A cell with corner (x,y,z) and extent e in {0,1}^3 is shared by the
    // voxels whose cube contains it.
    let mut chi = 0i64;
    for z in 0..=nz as isize {
        for y in 0..=ny as isize {
            for x in 0..=nx as isize {
                for e in 0..8u32 {
                    let ex = (e & 1) as isize;
                    let ey = ((e >> 1) & 1) as isize;
                    let ez = ((e >> 2) & 1) as isize;
                    if (ex == 1 && x == nx as isize) || (ey == 1 && y == ny as isize) || (ez == 1 && z == nz as isize) {
                        continue;
                    }
                    let mut hit = false;
                    'outer: for oz in (ez - 1)..=0 {
                        for oy in (ey - 1)..=0 {
                            for ox in (ex - 1)..=0 {
                                if at(x + ox, y + oy, z + oz) {
                                    hit = true;
                                    break 'outer;
                                }
                            }
                        }
                    }
                    if hit {
                        let dim = ex + ey + ez;
                        chi += if dim % 2 == 0 { 1 } else { -1 };
                    }
                }
            }
        }
    }
    chi
}

/// True when some 2×2×2 block is entirely set.
pub fn has_full_block(mask: &BinaryMask) -> bool {
    let grid = mask.grid();
    let [nx, ny, nz] = grid.dims();
    let d = mask.data();
    for z in 0..nz.saturating_sub(1) {
        for y in 0..ny.saturating_sub(1) {
            for x in 0..nx.saturating_sub(1) {
                let full = (0..8).all(|c| {
                    let idx = VoxelIndex::new(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                    d[grid.linear(idx)]
                });
                if full {
                    return true;
                }
            }
        }
    }
    false
}
