//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vasctree::phantom::point_segment_sq;
use vasctree::{BinaryMask, Connectivity, Grid, Volume3D, VoxelIndex};

/// Neighbor offsets derived from the squared offset length, not the library table.
pub fn brute_offsets(conn: Connectivity) -> Vec<[isize; 3]> {
    let max = match conn {
        Connectivity::Six => 1,
        Connectivity::Eighteen => 2,
        Connectivity::TwentySix => 3,
    };
    let mut out = Vec::new();
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let n = dx * dx + dy * dy + dz * dz;
                if n > 0 && n <= max {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn shifted(dims: [usize; 3], p: [usize; 3], d: [isize; 3]) -> Option<[usize; 3]> {
    let mut q = [0usize; 3];
    for a in 0..3 {
        let v = p[a] as isize + d[a];
        if v < 0 || v >= dims[a] as isize {
            return None;
        }
        q[a] = v as usize;
    }
    Some(q)
}

fn lin(dims: [usize; 3], p: [usize; 3]) -> usize {
    p[0] + dims[0] * (p[1] + dims[1] * p[2])
}

/// Breadth-first flood over voxels whose value lies in `[lo, hi]`.
pub fn bfs_flood(vol: &Volume3D, lo: f64, hi: f64, seed: [usize; 3], conn: Connectivity) -> Vec<bool> {
    let dims = vol.grid().dims();
    let vals = vol.values();
    let ok = |p: [usize; 3]| {
        let v = vals[lin(dims, p)] as f64;
        v >= lo && v <= hi
    };
    let mut seen = vec![false; vals.len()];
    if !ok(seed) {
        return seen;
    }
    let offs = brute_offsets(conn);
    let mut q = VecDeque::from([seed]);
    seen[lin(dims, seed)] = true;
    while let Some(p) = q.pop_front() {
        for d in &offs {
            if let Some(n) = shifted(dims, p, *d) {
                let l = lin(dims, n);
                if !seen[l] && ok(n) {
                    seen[l] = true;
                    q.push_back(n);
                }
            }
        }
    }
    seen
}

/// Squared physical distance from every voxel to its nearest feature, all pairs.
pub fn brute_sq_edt(features: &BinaryMask) -> Vec<f64> {
    let g = *features.grid();
    let sp = g.spacing();
    let feats: Vec<[f64; 3]> =
        features.indices().map(|l| g.index(l)).map(|v| [v.i as f64, v.j as f64, v.k as f64]).collect();
    (0..g.len())
        .map(|l| {
            let v = g.index(l);
            let p = [v.i as f64, v.j as f64, v.k as f64];
            feats
                .iter()
                .map(|f| {
                    let d = [(p[0] - f[0]) * sp[0], (p[1] - f[1]) * sp[1], (p[2] - f[2]) * sp[2]];
                    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Integer all-pairs squared distances on a unit grid.
pub fn brute_sq_edt_unit(features: &BinaryMask) -> Vec<i64> {
    let g = *features.grid();
    let feats: Vec<[i64; 3]> =
        features.indices().map(|l| g.index(l)).map(|v| [v.i as i64, v.j as i64, v.k as i64]).collect();
    (0..g.len())
        .map(|l| {
            let v = g.index(l);
            let p = [v.i as i64, v.j as i64, v.k as i64];
            feats
                .iter()
                .map(|f| (p[0] - f[0]).pow(2) + (p[1] - f[1]).pow(2) + (p[2] - f[2]).pow(2))
                .min()
                .unwrap_or(i64::MAX)
        })
        .collect()
}

/// Component count by union-find over all adjacent foreground pairs.
pub fn union_find_components(mask: &BinaryMask, conn: Connectivity) -> usize {
    let g = mask.grid();
    let dims = g.dims();
    let mut parent: Vec<usize> = (0..g.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let offs = brute_offsets(conn);
    for l in mask.indices() {
        let a = g.index(l).as_array();
        for d in &offs {
            if let Some(n) = shifted(dims, a, *d) {
                if mask.get(VoxelIndex::from(n)) {
                    let (ra, rb) = (find(&mut parent, lin(dims, a)), find(&mut parent, lin(dims, n)));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut roots: Vec<usize> = mask.indices().map(|l| find(&mut parent, l)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// A tube: axis segment in voxel coordinates plus radius in voxels.
#[derive(Debug, Clone, Copy)]
pub struct Tube {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub r: f64,
}

/// Random connected union of tubes: every tube after the first starts on an
/// earlier tube's axis.
pub fn random_tubes(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Tube> {
    let margin = 5.0;
    let mut tubes: Vec<Tube> = Vec::new();
    let rand_point = |rng: &mut ChaCha8Rng| {
        [
            rng.random_range(margin..extent - margin),
            rng.random_range(margin..extent - margin),
            rng.random_range(margin..extent - margin),
        ]
    };
    while tubes.len() < n {
        let a = match tubes.last() {
            None => rand_point(rng),
            Some(_) => {
                let t = tubes[rng.random_range(0..tubes.len())];
                let s: f64 = rng.random_range(0.0..1.0);
                [t.a[0] + s * (t.b[0] - t.a[0]), t.a[1] + s * (t.b[1] - t.a[1]), t.a[2] + s * (t.b[2] - t.a[2])]
            }
        };
        let b = rand_point(rng);
        let r = rng.random_range(1.0..3.5);
        tubes.push(Tube { a, b, r });
    }
    tubes
}

pub fn tube_mask(grid: Grid, tubes: &[Tube]) -> BinaryMask {
    BinaryMask::from_fn(grid, |v| {
        let p = [v.i as f64, v.j as f64, v.k as f64];
        tubes.iter().any(|t| point_segment_sq(p, t.a, t.b) <= t.r * t.r)
    })
}

pub fn random_mask(rng: &mut ChaCha8Rng, grid: Grid, density: f64) -> BinaryMask {
    BinaryMask::from_fn(grid, |_| rng.random_bool(density))
}
