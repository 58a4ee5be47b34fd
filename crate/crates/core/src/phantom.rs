//! Synthetic bifurcating vessel trees with analytic ground truth.
//!
//! Every segment is a capsule (cylinder with hemispherical caps) around a
//! straight axis. Children leave their parent's far end, rotated by the
//! branching half-angles inside a plane that turns 90° at every generation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, DType};
use crate::volume::{Grid, Volume3D, VoxelIndex};

/// Gray value of opacified lumen, in 1000/cm.
pub const LUMEN_VALUE: f32 = 6000.0;
/// Gray value of the surrounding tissue envelope, in 1000/cm.
pub const TISSUE_VALUE: f32 = 900.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub generations: u32,
    pub d0_um: f64,
    pub l0_um: f64,
    /// Child/parent diameter ratio for the first child.
    pub ratio1: f64,
    /// Child/parent diameter ratio for the second child.
    pub ratio2: f64,
    /// Child/parent length ratio.
    pub length_ratio: f64,
    /// Branching half-angles of the two children, degrees.
    pub angles_deg: [f64; 2],
    pub seed: u64,
    /// Relative jitter amplitude applied to diameters, lengths and angles.
    pub jitter: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        let r = 2f64.powf(-1.0 / 3.0);
        PhantomSpec {
            generations: 4,
            d0_um: 240.0,
            l0_um: 1200.0,
            ratio1: r,
            ratio2: r,
            length_ratio: 0.8,
            angles_deg: [35.0, 35.0],
            seed: 0,
            jitter: 0.0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.generations < 1 || self.generations > 20 {
            return bad(format!("generations must be in 1..=20, got {}", self.generations));
        }
        if !(self.d0_um > 0.0 && self.l0_um > 0.0) {
            return bad("root diameter and length must be positive".into());
        }
        for r in [self.ratio1, self.ratio2] {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("diameter ratios must lie in (0, 1), got {r}"));
            }
        }
        if !(self.length_ratio > 0.0 && self.length_ratio.is_finite()) {
            return bad(format!("length ratio must be positive, got {}", self.length_ratio));
        }
        for a in self.angles_deg {
            if !(a > 0.0 && a < 90.0) {
                return bad(format!("branching half-angles must lie in (0, 90) degrees, got {a}"));
            }
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return bad(format!("jitter must lie in [0, 0.5), got {}", self.jitter));
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.ratio1 == self.ratio2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSegment {
    pub id: usize,
    pub parent: Option<usize>,
    pub generation: u32,
    /// Axis start point, µm.
    pub start: [f64; 3],
    /// Axis end point, µm.
    pub end: [f64; 3],
    pub diameter_um: f64,
    pub length_um: f64,
}

impl TruthSegment {
    pub fn radius_um(&self) -> f64 {
        0.5 * self.diameter_um
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: PhantomSpec,
    /// Breadth-first order; segment 0 is the root.
    pub segments: Vec<TruthSegment>,
    /// `ln 2 / ln(1/r)` for symmetric specs.
    pub expected_gamma: Option<f64>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn normalize(a: [f64; 3]) -> [f64; 3] {
    scale(a, 1.0 / dot(a, a).sqrt())
}

/// Rotate `v` about unit `axis` by `angle` radians (Rodrigues).
fn rotate(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let t1 = scale(v, c);
    let t2 = scale(cross(axis, v), s);
    let t3 = scale(axis, dot(axis, v) * (1.0 - c));
    add(add(t1, t2), t3)
}

/// Squared distance from `p` to the segment `[a, b]`.
pub fn point_segment_sq(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 == 0.0 { 0.0 } else { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) };
    let q = add(a, scale(ab, t));
    let d = sub(p, q);
    dot(d, d)
}

/// Minimum distance between segments `[p1, q1]` and `[p2, q2]`.
fn segment_segment_distance(p1: [f64; 3], q1: [f64; 3], p2: [f64; 3], q2: [f64; 3]) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let c = dot(d1, r);
    let b = dot(d1, d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-12 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    let c1 = add(p1, scale(d1, s));
    let c2 = add(p2, scale(d2, t));
    let d = sub(c1, c2);
    dot(d, d).sqrt()
}

/// Build the analytic tree described by `spec`.
///
/// The root starts at the origin heading +z. Jittered quantities are drawn
/// from a ChaCha8 stream seeded with `spec.seed`, in breadth-first segment
/// order, so the result is reproducible.
pub fn generate(spec: &PhantomSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jit =
        |rng: &mut ChaCha8Rng| if spec.jitter > 0.0 { 1.0 + rng.random_range(-spec.jitter..=spec.jitter) } else { 1.0 };

    struct Pending {
        parent: Option<usize>,
        generation: u32,
        start: [f64; 3],
        dir: [f64; 3],
        normal: [f64; 3],
        nominal_d: f64,
        nominal_l: f64,
    }

    let mut segments: Vec<TruthSegment> = Vec::new();
    let mut queue = std::collections::VecDeque::from([Pending {
        parent: None,
        generation: 1,
        start: [0.0; 3],
        dir: [0.0, 0.0, 1.0],
        normal: [0.0, 1.0, 0.0],
        nominal_d: spec.d0_um,
        nominal_l: spec.l0_um,
    }]);
    while let Some(p) = queue.pop_front() {
        let diameter = p.nominal_d * jit(&mut rng);
        let length = p.nominal_l * jit(&mut rng);
        let end = add(p.start, scale(p.dir, length));
        let id = segments.len();
        segments.push(TruthSegment {
            id,
            parent: p.parent,
            generation: p.generation,
            start: p.start,
            end,
            diameter_um: diameter,
            length_um: length,
        });
        if p.generation < spec.generations {
            for (child, (ratio, sign)) in [(spec.ratio1, 1.0), (spec.ratio2, -1.0)].into_iter().enumerate() {
                let angle = spec.angles_deg[child].to_radians() * jit(&mut rng);
                let dir = normalize(rotate(p.dir, p.normal, sign * angle));
                let normal = normalize(cross(dir, p.normal));
                queue.push_back(Pending {
                    parent: Some(id),
                    generation: p.generation + 1,
                    start: end,
                    dir,
                    normal,
                    nominal_d: p.nominal_d * ratio,
                    nominal_l: p.nominal_l * spec.length_ratio,
                });
            }
        }
    }

    // segments sharing an endpoint (parent/child, siblings) are exempt
    for a in 0..segments.len() {
        for b in (a + 1)..segments.len() {
            let (sa, sb) = (&segments[a], &segments[b]);
            let adjacent =
                sb.parent == Some(a) || sa.parent == Some(b) || (sa.parent.is_some() && sa.parent == sb.parent);
            if adjacent {
                continue;
            }
            let gap = segment_segment_distance(sa.start, sa.end, sb.start, sb.end);
            if gap < sa.radius_um() + sb.radius_um() {
                return Err(Error::SelfIntersection { a, b });
            }
        }
    }

    let expected_gamma = spec.is_symmetric().then(|| 2f64.ln() / (1.0 / spec.ratio1).ln());
    Ok(GroundTruth { spec: spec.clone(), segments, expected_gamma })
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Axis-aligned bounds of all capsules, grown by `pad_um`.
    pub fn bounds(&self, pad_um: f64) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &self.segments {
            let r = s.radius_um() + pad_um;
            for p in [s.start, s.end] {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a] - r);
                    hi[a] = hi[a].max(p[a] + r);
                }
            }
        }
        (lo, hi)
    }

    /// Smallest grid (plus `border` voxels per side) holding the tree grown by `pad_um`.
    pub fn fitting_dims(&self, spacing: [f64; 3], pad_um: f64, border: usize) -> [usize; 3] {
        let (lo, hi) = self.bounds(pad_um);
        let mut dims = [0; 3];
        for a in 0..3 {
            dims[a] = ((hi[a] - lo[a]) / spacing[a]).ceil() as usize + 1 + 2 * border;
        }
        dims
    }

    pub fn translated(&self, by: [f64; 3]) -> GroundTruth {
        let mut out = self.clone();
        for s in &mut out.segments {
            s.start = add(s.start, by);
            s.end = add(s.end, by);
        }
        out
    }

    /// Rigid rotation about the unit `axis` through the root start point.
    pub fn rotated(&self, axis: [f64; 3], angle_deg: f64) -> GroundTruth {
        let axis = normalize(axis);
        let origin = self.segments[0].start;
        let mut out = self.clone();
        for s in &mut out.segments {
            s.start = add(origin, rotate(sub(s.start, origin), axis, angle_deg.to_radians()));
            s.end = add(origin, rotate(sub(s.end, origin), axis, angle_deg.to_radians()));
        }
        out
    }

    /// Translate so the padded bounds sit centered in `grid`, with the root
    /// start moved onto the nearest voxel center.
    pub fn centered_in(&self, grid: &Grid, pad_um: f64) -> GroundTruth {
        let (lo, hi) = self.bounds(pad_um);
        let dims = grid.dims();
        let sp = grid.spacing();
        let root = self.segments[0].start;
        let mut by = [0.0; 3];
        for a in 0..3 {
            let center = 0.5 * (dims[a] - 1) as f64 * sp[a];
            let shift = center - 0.5 * (lo[a] + hi[a]);
            // snap so the root start lands on a voxel center
            let target = ((root[a] + shift) / sp[a]).round() * sp[a];
            by[a] = target - root[a];
        }
        self.translated(by)
    }

    /// Voxel containing the root start point.
    pub fn root_voxel(&self, grid: &Grid) -> Result<VoxelIndex> {
        let p = self.segments[0].start;
        let sp = grid.spacing();
        let dims = grid.dims();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let v = (p[a] / sp[a]).round();
            if v < 0.0 || v >= dims[a] as f64 {
                return Err(Error::TreeOutOfBounds(format!("root start {p:?} is outside the grid")));
            }
            idx[a] = v as usize;
        }
        Ok(VoxelIndex::from(idx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterOptions {
    pub lumen_value: f32,
    pub tissue_value: f32,
    pub background_value: f32,
    /// Thickness of the tissue envelope around each vessel wall, µm.
    pub tissue_margin_um: f64,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions {
            lumen_value: LUMEN_VALUE,
            tissue_value: TISSUE_VALUE,
            background_value: 0.0,
            tissue_margin_um: 200.0,
        }
    }
}

/// Rasterize the tree into a gray-scale volume.
///
/// A voxel is lumen when its center lies within any segment capsule, tissue
/// when within `tissue_margin_um` of a capsule surface, background otherwise.
/// Coordinates are taken as grid µm (voxel `(i,j,k)` centered at
/// `(i*sx, j*sy, k*sz)`); lumen outside the grid is an error.
pub fn rasterize(gt: &GroundTruth, grid: &Grid, opts: &RasterOptions) -> Result<Volume3D> {
    let dims = grid.dims();
    let sp = grid.spacing();
    let extent: Vec<f64> = (0..3).map(|a| (dims[a] - 1) as f64 * sp[a]).collect();
    for s in &gt.segments {
        let r = s.radius_um();
        for p in [s.start, s.end] {
            for a in 0..3 {
                if p[a] - r < -0.5 * sp[a] || p[a] + r > extent[a] + 0.5 * sp[a] {
                    return Err(Error::TreeOutOfBounds(format!(
                        "segment {} reaches {:?} outside the {:?} grid",
                        s.id, p, dims
                    )));
                }
            }
        }
    }
    let margin = opts.tissue_margin_um.max(0.0);
    let [nx, ny, _] = dims;
    let mut values = vec![opts.background_value; grid.len()];
    values.par_chunks_mut(nx * ny).enumerate().for_each(|(k, slab)| {
        let z = k as f64 * sp[2];
        let mut state = vec![0u8; nx * ny];
        for s in &gt.segments {
            let r = s.radius_um();
            let reach = r + margin;
            let zlo = s.start[2].min(s.end[2]) - reach;
            let zhi = s.start[2].max(s.end[2]) + reach;
            if z < zlo || z > zhi {
                continue;
            }
            let range = |a: usize, n: usize| -> Option<(usize, usize)> {
                let lo = ((s.start[a].min(s.end[a]) - reach) / sp[a]).ceil().max(0.0);
                let hi = ((s.start[a].max(s.end[a]) + reach) / sp[a]).floor().min((n - 1) as f64);
                (lo <= hi).then_some((lo as usize, hi as usize))
            };
            let (Some((x0, x1)), Some((y0, y1))) = (range(0, nx), range(1, ny)) else {
                continue;
            };
            let (r2, reach2) = (r * r, reach * reach);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    let cell = &mut state[j * nx + i];
                    if *cell == 2 {
                        continue;
                    }
                    let d2 = point_segment_sq([i as f64 * sp[0], j as f64 * sp[1], z], s.start, s.end);
                    if d2 <= r2 {
                        *cell = 2;
                    } else if d2 <= reach2 && margin > 0.0 {
                        *cell = 1;
                    }
                }
            }
        }
        for (v, st) in slab.iter_mut().zip(&state) {
            match st {
                2 => *v = opts.lumen_value,
                1 => *v = opts.tissue_value,
                _ => {}
            }
        }
    });
    Volume3D::new(*grid, values)
}

/// Ground-truth sidecar written next to a rasterized phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSidecar {
    pub dims: [usize; 3],
    pub spacing_um: [f64; 3],
    /// Voxel at the root inlet; a valid vessel seed and root hint.
    pub root_voxel: [usize; 3],
    pub truth: GroundTruth,
}

/// Place `gt` in `grid` (or the smallest fitting grid at `spacing` when
/// `dims` is `None`), rasterize it and write `<base>.json/.raw` (u16) plus
/// `<base>_truth.json`. Returns the sidecar.
pub fn write_phantom(
    gt: &GroundTruth,
    dims: Option<[usize; 3]>,
    spacing: [f64; 3],
    opts: &RasterOptions,
    base: &Path,
) -> Result<PhantomSidecar> {
    let pad = opts.tissue_margin_um.max(0.0);
    let dims = dims.unwrap_or_else(|| gt.fitting_dims(spacing, pad, 2));
    let grid = Grid::new(dims, spacing)?;
    let placed = gt.centered_in(&grid, pad);
    let vol = rasterize(&placed, &grid, opts)?;
    let root = placed.root_voxel(&grid)?;
    io::write_volume(&vol, base, DType::U16)?;
    let sidecar = PhantomSidecar { dims, spacing_um: spacing, root_voxel: root.as_array(), truth: placed };
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push("_truth.json");
    io::write_json(&base.with_file_name(name), &sidecar)?;
    Ok(sidecar)
}
