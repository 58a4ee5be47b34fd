//! Rooted vessel tree built from the centerline graph, plus spur pruning and
//! per-segment length/diameter measurement.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edt::DistanceField;
use crate::error::{Error, Result};
use crate::graph::{CenterlineGraph, NodeKind};
use crate::volume::{Connectivity, Grid, VoxelIndex};

/// Inter-branch segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Ordered centerline voxels, from the parent-side node to the far node.
    pub path: Vec<VoxelIndex>,
    pub length_um: f64,
    pub diameter_um: f64,
    pub generation: u32,
    /// Voxel count of the centerline path (kept when paths are not loaded).
    pub n_voxels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselTree {
    pub segments: Vec<Segment>,
    pub root: usize,
}

/// Flat per-segment record, the row type of the segments CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: usize,
    pub parent_id: Option<usize>,
    pub generation: u32,
    pub length_um: f64,
    pub diameter_um: f64,
    pub n_voxels: usize,
}

impl VesselTree {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.children.is_empty())
    }

    pub fn max_generation(&self) -> u32 {
        self.segments.iter().map(|s| s.generation).max().unwrap_or(0)
    }

    pub fn records(&self) -> Vec<SegmentRecord> {
        self.segments
            .iter()
            .map(|s| SegmentRecord {
                id: s.id,
                parent_id: s.parent,
                generation: s.generation,
                length_um: s.length_um,
                diameter_um: s.diameter_um,
                n_voxels: s.n_voxels,
            })
            .collect()
    }

    /// Rebuild a tree (without centerline paths) from CSV records.
    pub fn from_records(records: &[SegmentRecord]) -> Result<Self> {
        let n = records.len();
        let mut segments: Vec<Segment> = Vec::with_capacity(n);
        for (pos, r) in records.iter().enumerate() {
            if r.id != pos {
                return Err(Error::InvalidParameter(format!(
                    "segment ids must be 0..n in order, row {pos} has id {}",
                    r.id
                )));
            }
            segments.push(Segment {
                id: r.id,
                parent: r.parent_id,
                children: Vec::new(),
                path: Vec::new(),
                length_um: r.length_um,
                diameter_um: r.diameter_um,
                generation: r.generation,
                n_voxels: r.n_voxels,
            });
        }
        let mut root = None;
        for r in records {
            match r.parent_id {
                None if root.is_some() => return Err(Error::InvalidParameter("more than one root segment".into())),
                None => root = Some(r.id),
                Some(p) if p >= n || p == r.id => {
                    return Err(Error::InvalidParameter(format!("segment {} has invalid parent {p}", r.id)))
                }
                Some(p) => segments[p].children.push(r.id),
            }
        }
        let root = root.ok_or_else(|| Error::InvalidParameter("no root segment".into()))?;
        Ok(VesselTree { segments, root })
    }
}

/// Things changed while turning the graph into a tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    /// Edges deleted to break cycles: (first voxel of the edge, mean radius µm).
    pub broken_cycles: Vec<BrokenCycle>,
    /// Skeleton components not connected to the root, dropped.
    pub dropped_components: usize,
    /// Terminal segments removed by pruning.
    pub pruned_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrokenCycle {
    pub voxel: VoxelIndex,
    pub mean_radius_um: f64,
}

/// Polyline arc length of a voxel path under the grid spacing.
pub fn arc_length(grid: &Grid, path: &[VoxelIndex]) -> f64 {
    path.windows(2).map(|w| grid.distance(w[0], w[1])).sum()
}

/// Half-width, in path voxels, of the moving average used by [`smoothed_length`].
pub const SMOOTH_HALF_WIDTH: usize = 2;

/// Arc length after a centered moving average over the voxel centers. The
/// window shrinks near the ends so both end voxels stay in place; straight
/// paths keep their exact length while lattice staircases are flattened.
pub fn smoothed_length(grid: &Grid, path: &[VoxelIndex]) -> f64 {
    let pts: Vec<[f64; 3]> = path.iter().map(|&v| grid.position(v)).collect();
    let n = pts.len();
    let smooth: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let h = SMOOTH_HALF_WIDTH.min(i).min(n - 1 - i);
            let mut c = [0.0; 3];
            for p in &pts[i - h..=i + h] {
                for a in 0..3 {
                    c[a] += p[a];
                }
            }
            c.map(|x| x / (2 * h + 1) as f64)
        })
        .collect();
    smooth
        .windows(2)
        .map(|w| ((w[0][0] - w[1][0]).powi(2) + (w[0][1] - w[1][1]).powi(2) + (w[0][2] - w[1][2]).powi(2)).sqrt())
        .sum()
}

/// Largest distance-to-wall over a voxel and its 26 neighbors.
pub fn local_radius(edt: &DistanceField, v: VoxelIndex) -> f64 {
    let grid = edt.grid();
    let mut best = edt.distance(v);
    for d in Connectivity::TwentySix.offsets() {
        if let Some(n) = grid.offset(v, *d) {
            best = best.max(edt.distance(n));
        }
    }
    best
}

struct Disjoint(Vec<usize>);

impl Disjoint {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
}

/// Orient the graph as a tree rooted at the endpoint nearest `root_hint`.
///
/// Cycles are broken by dropping, per cycle, the edge with the smallest mean
/// distance-to-wall (a maximum spanning forest on mean radius). Pass-through
/// nodes left with one child are merged away.
pub fn root_tree(
    graph: &CenterlineGraph,
    root_hint: VoxelIndex,
    edt: &DistanceField,
) -> Result<(VesselTree, TreeReport)> {
    let grid = *graph.grid();
    if graph.nodes.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hint = grid.position(root_hint);
    let root_node = graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Endpoint)
        .map(|n| {
            let p = grid.position(grid.index(n.representative));
            let d: f64 = (0..3).map(|a| (p[a] - hint[a]).powi(2)).sum();
            (d, n.representative, n.id)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|t| t.2)
        .ok_or(Error::NoRootCandidate)?;

    let mut report = TreeReport::default();

    let mean_radius = |e: &crate::graph::Edge| -> f64 {
        let vox: Vec<usize> = if e.path.is_empty() {
            vec![graph.nodes[e.from].representative, graph.nodes[e.to].representative]
        } else {
            e.path.clone()
        };
        vox.iter().map(|&v| edt.distance_at(v)).sum::<f64>() / vox.len() as f64
    };

    // maximum spanning forest on mean radius, canonical order on ties
    let mut order: Vec<(f64, usize, usize, usize)> = graph
        .edges
        .iter()
        .map(|e| {
            let a = graph.nodes[e.from].representative;
            let b = graph.nodes[e.to].representative;
            (mean_radius(e), a.min(b), e.path.first().copied().unwrap_or(a.max(b)), e.id)
        })
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut dsu = Disjoint((0..graph.nodes.len()).collect());
    let mut kept = vec![false; graph.edges.len()];
    for &(radius, _, first, id) in &order {
        let e = &graph.edges[id];
        let (a, b) = (dsu.find(e.from), dsu.find(e.to));
        if a == b {
            report.broken_cycles.push(BrokenCycle { voxel: grid.index(first), mean_radius_um: radius });
        } else {
            dsu.0[a] = b;
            kept[id] = true;
        }
    }

    // adjacency over kept edges
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for e in graph.edges.iter().filter(|e| kept[e.id]) {
        adj[e.from].push(e.id);
        adj[e.to].push(e.id);
    }

    // BFS orientation
    struct Raw {
        parent_node: usize,
        child_node: usize,
        path: Vec<usize>,
    }
    let mut raws: Vec<Raw> = Vec::new();
    let mut seen_node = vec![false; graph.nodes.len()];
    let mut queue = VecDeque::from([root_node]);
    seen_node[root_node] = true;
    while let Some(n) = queue.pop_front() {
        for &eid in &adj[n] {
            let e = &graph.edges[eid];
            let other = if e.from == n { e.to } else { e.from };
            if seen_node[other] {
                continue;
            }
            seen_node[other] = true;
            let mut interior = e.path.clone();
            if e.from != n {
                interior.reverse();
            }
            let mut path = Vec::with_capacity(interior.len() + 2);
            path.push(graph.nodes[n].representative);
            path.extend(interior);
            path.push(graph.nodes[other].representative);
            raws.push(Raw { parent_node: n, child_node: other, path });
            queue.push_back(other);
        }
    }
    report.dropped_components = {
        let mut comps = std::collections::BTreeSet::new();
        for node in graph.nodes.iter().filter(|n| !seen_node[n.id]) {
            comps.insert(dsu.find(node.id));
        }
        comps.len()
    };

    if raws.is_empty() {
        // isolated root voxel
        let v = graph.nodes[root_node].representative;
        let seg = Segment {
            id: 0,
            parent: None,
            children: Vec::new(),
            path: vec![grid.index(v)],
            length_um: 0.0,
            diameter_um: 0.0,
            generation: 1,
            n_voxels: 1,
        };
        return Ok((VesselTree { segments: vec![seg], root: 0 }, report));
    }

    let mut seg_ending_at = vec![usize::MAX; graph.nodes.len()];
    for (i, r) in raws.iter().enumerate() {
        seg_ending_at[r.child_node] = i;
    }
    let mut work = WorkTree {
        grid,
        segs: raws
            .iter()
            .map(|r| WorkSeg {
                parent: (r.parent_node != root_node).then(|| seg_ending_at[r.parent_node]),
                path: r.path.clone(),
                alive: true,
            })
            .collect(),
    };
    // a root endpoint normally has one edge; extra edges hang off the first
    let root_segs: Vec<usize> = (0..work.segs.len()).filter(|&i| work.segs[i].parent.is_none()).collect();
    for &extra in root_segs.iter().skip(1) {
        work.segs[extra].parent = Some(root_segs[0]);
    }
    work.merge_chains();
    Ok((work.finish(), report))
}

#[derive(Clone)]
struct WorkSeg {
    parent: Option<usize>,
    path: Vec<usize>,
    alive: bool,
}

struct WorkTree {
    grid: Grid,
    segs: Vec<WorkSeg>,
}

impl WorkTree {
    fn from_tree(tree: &VesselTree, grid: Grid) -> Self {
        WorkTree {
            grid,
            segs: tree
                .segments
                .iter()
                .map(|s| WorkSeg {
                    parent: s.parent,
                    path: s.path.iter().map(|&v| grid.linear(v)).collect(),
                    alive: true,
                })
                .collect(),
        }
    }

    fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.segs.len()];
        for (i, s) in self.segs.iter().enumerate() {
            if let (true, Some(p)) = (s.alive, s.parent) {
                ch[p].push(i);
            }
        }
        ch
    }

    /// Merge every segment that has exactly one live child with that child.
    fn merge_chains(&mut self) {
        loop {
            let ch = self.children();
            let Some(p) = (0..self.segs.len()).find(|&i| self.segs[i].alive && ch[i].len() == 1) else {
                break;
            };
            let c = ch[p][0];
            let tail = std::mem::take(&mut self.segs[c].path);
            let joint = self.segs[p].path.last().copied();
            let skip = usize::from(joint.is_some() && tail.first().copied() == joint);
            self.segs[p].path.extend_from_slice(&tail[skip..]);
            self.segs[c].alive = false;
            for s in self.segs.iter_mut() {
                if s.parent == Some(c) {
                    s.parent = Some(p);
                }
            }
        }
    }

    /// Canonical renumbering: breadth-first from the root, siblings ordered
    /// by the linear index of their far end.
    fn finish(self) -> VesselTree {
        let ch = self.children();
        let root = (0..self.segs.len())
            .find(|&i| self.segs[i].alive && self.segs[i].parent.is_none())
            .expect("tree has a root");
        let key = |i: usize| -> (usize, usize) {
            let p = &self.segs[i].path;
            (p.last().copied().unwrap_or(0), p.get(1).copied().unwrap_or(0))
        };
        let mut order = vec![root];
        let mut new_id = vec![usize::MAX; self.segs.len()];
        let mut head = 0;
        while head < order.len() {
            let s = order[head];
            new_id[s] = head;
            head += 1;
            let mut kids = ch[s].clone();
            kids.sort_by_key(|&c| key(c));
            order.extend(kids);
        }
        let mut segments: Vec<Segment> = order
            .iter()
            .enumerate()
            .map(|(id, &old)| {
                let s = &self.segs[old];
                Segment {
                    id,
                    parent: s.parent.map(|p| new_id[p]),
                    children: Vec::new(),
                    path: s.path.iter().map(|&v| self.grid.index(v)).collect(),
                    length_um: arc_length_linear(&self.grid, &s.path),
                    diameter_um: 0.0,
                    generation: 1,
                    n_voxels: s.path.len(),
                }
            })
            .collect();
        for id in 0..segments.len() {
            if let Some(p) = segments[id].parent {
                segments[p].children.push(id);
                segments[id].generation = segments[p].generation + 1;
            }
        }
        VesselTree { segments, root: 0 }
    }
}

fn arc_length_linear(grid: &Grid, path: &[usize]) -> f64 {
    path.windows(2).map(|w| grid.distance(grid.index(w[0]), grid.index(w[1]))).sum()
}

/// Remove short terminal spurs.
///
/// A leaf (never the root) is a spur when its length is below `factor` times
/// the distance-to-wall at its attachment voxel. When every child of a
/// segment qualifies, the longest one is kept. Single-child chains are merged
/// after each round; rounds repeat until nothing changes. Returns the pruned
/// tree, measured, and the number of removed segments.
pub fn prune(tree: &VesselTree, edt: &DistanceField, factor: f64) -> (VesselTree, usize) {
    let grid = *edt.grid();
    let mut work = WorkTree::from_tree(tree, grid);
    let mut removed = 0usize;
    loop {
        let ch = work.children();
        let mut to_remove = Vec::new();
        for p in 0..work.segs.len() {
            if !work.segs[p].alive || ch[p].is_empty() {
                continue;
            }
            let mut spurs: Vec<(f64, usize)> = ch[p]
                .iter()
                .copied()
                .filter(|&c| ch[c].is_empty())
                .filter_map(|c| {
                    let s = &work.segs[c];
                    let len = arc_length_linear(&grid, &s.path);
                    let attach = edt.distance_at(s.path[0]);
                    (len < factor * attach).then_some((len, c))
                })
                .collect();
            if spurs.len() == ch[p].len() {
                spurs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                spurs.remove(0);
            }
            to_remove.extend(spurs.into_iter().map(|(_, c)| c));
        }
        if to_remove.is_empty() {
            break;
        }
        removed += to_remove.len();
        for c in to_remove {
            work.segs[c].alive = false;
        }
        work.merge_chains();
    }
    if removed == 0 {
        return (measure(tree, edt), 0);
    }
    (measure(&work.finish(), edt), removed)
}

/// Fraction of the path trimmed at most from each end before averaging radii.
const TRIM_FRACTION: f64 = 0.25;

/// Segment length ([`smoothed_length`]) and diameter (twice the trimmed mean
/// of [`local_radius`] along the centerline).
///
/// At each end, `min(25% of the path voxels, local radius in voxels)` voxels
/// are dropped so junction bulges do not inflate the estimate.
pub fn measure(tree: &VesselTree, edt: &DistanceField) -> VesselTree {
    let grid = *edt.grid();
    let voxel = grid.min_spacing();
    let segments = tree
        .segments
        .par_iter()
        .map(|s| {
            let mut s = s.clone();
            if s.path.is_empty() {
                return s;
            }
            s.length_um = smoothed_length(&grid, &s.path);
            s.n_voxels = s.path.len();
            let radii: Vec<f64> = s.path.iter().map(|&v| local_radius(edt, v)).collect();
            let n = radii.len();
            let quarter = (n as f64 * TRIM_FRACTION).floor() as usize;
            let trim = |r: f64| quarter.min((r / voxel).ceil() as usize);
            let (t0, t1) = (trim(radii[0]), trim(radii[n - 1]));
            let body = if t0 + t1 < n { &radii[t0..n - t1] } else { &radii[n / 2..n / 2 + 1] };
            let mean = body.iter().sum::<f64>() / body.len() as f64;
            s.diameter_um = 2.0 * mean;
            s
        })
        .collect();
    VesselTree { segments, root: tree.root }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edt::distance_transform;
    use crate::graph::build_graph;
    use crate::skeleton::Skeleton;
    use crate::volume::BinaryMask;

    fn line_setup(n: usize, spacing: f64) -> (CenterlineGraph, DistanceField) {
        let grid = Grid::isotropic([n + 2, 3, 3], spacing).unwrap();
        let skel = BinaryMask::from_fn(grid, |v| v.j == 1 && v.k == 1 && (1..=n).contains(&v.i));
        let edt = distance_transform(&skel.complement()).unwrap();
        (build_graph(&Skeleton::from_mask(skel)).unwrap(), edt)
    }

    #[test]
    fn single_edge_tree() {
        let (g, edt) = line_setup(11, 20.0);
        for hint in [VoxelIndex::new(0, 1, 1), VoxelIndex::new(12, 1, 1)] {
            let (t, report) = root_tree(&g, hint, &edt).unwrap();
            assert_eq!(t.len(), 1);
            assert_eq!(t.segments[0].generation, 1);
            assert!(report.broken_cycles.is_empty());
            let m = measure(&t, &edt);
            assert_eq!(m.segments[0].length_um, 200.0);
        }
    }

    #[test]
    fn root_follows_hint() {
        let (g, edt) = line_setup(6, 1.0);
        let (t, _) = root_tree(&g, VoxelIndex::new(12, 1, 1), &edt).unwrap();
        assert_eq!(t.segments[0].path[0], VoxelIndex::new(6, 1, 1));
    }

    #[test]
    fn no_endpoint_means_no_root() {
        let grid = Grid::isotropic([5, 5, 3], 1.0).unwrap();
        let ring = [[1, 1, 1], [2, 1, 1], [3, 1, 1], [3, 2, 1], [3, 3, 1], [2, 3, 1], [1, 3, 1], [1, 2, 1]];
        let mut m = BinaryMask::empty(grid);
        for p in ring {
            m.set(VoxelIndex::from(p), true);
        }
        let edt = distance_transform(&m.complement()).unwrap();
        let g = build_graph(&Skeleton::from_mask(m)).unwrap();
        assert!(matches!(root_tree(&g, VoxelIndex::new(0, 0, 0), &edt), Err(Error::NoRootCandidate)));
    }

    #[test]
    fn records_round_trip() {
        let (g, edt) = line_setup(5, 1.0);
        let (t, _) = root_tree(&g, VoxelIndex::new(0, 1, 1), &edt).unwrap();
        let t = measure(&t, &edt);
        let back = VesselTree::from_records(&t.records()).unwrap();
        assert_eq!(back.records(), t.records());
    }

    #[test]
    fn single_voxel_path_uses_its_radius() {
        let grid = Grid::isotropic([3, 3, 3], 10.0).unwrap();
        let mut m = BinaryMask::empty(grid);
        m.set(VoxelIndex::new(1, 1, 1), true);
        let edt = distance_transform(&m.complement()).unwrap();
        let g = build_graph(&Skeleton::from_mask(m)).unwrap();
        let (t, _) = root_tree(&g, VoxelIndex::new(1, 1, 1), &edt).unwrap();
        let t = measure(&t, &edt);
        assert_eq!(t.segments[0].diameter_um, 20.0);
        assert_eq!(t.segments[0].length_um, 0.0);
    }

    #[test]
    fn smoothed_length_of_lines_and_staircases() {
        let grid = Grid::isotropic([40, 40, 3], 10.0).unwrap();
        let straight: Vec<VoxelIndex> = (0..30).map(|i| VoxelIndex::new(i, 5, 1)).collect();
        assert!((smoothed_length(&grid, &straight) - 290.0).abs() < 1e-9);
        let diagonal: Vec<VoxelIndex> = (0..30).map(|i| VoxelIndex::new(i, i, 1)).collect();
        assert!((smoothed_length(&grid, &diagonal) - 290.0 * 2f64.sqrt()).abs() < 1e-9);
        // Alternating x and diagonal steps along a line of slope 1/2.
        let stair: Vec<VoxelIndex> = (0..31).map(|i| VoxelIndex::new(i, i / 2, 1)).collect();
        let raw: f64 = stair.windows(2).map(|w| grid.distance(w[0], w[1])).sum();
        let chord = grid.distance(stair[0], stair[30]);
        let s = smoothed_length(&grid, &stair);
        assert!(s < raw && s >= chord - 1e-9, "chord {chord}, smoothed {s}, raw {raw}");
        assert!((s - chord) / chord < 0.02);
        assert_eq!(smoothed_length(&grid, &straight[..1]), 0.0);
        assert!((smoothed_length(&grid, &straight[..2]) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn local_radius_takes_neighborhood_max() {
        let grid = Grid::isotropic([9, 9, 9], 1.0).unwrap();
        let tube = BinaryMask::from_fn(grid, |v| (v.i as f64 - 4.0).powi(2) + (v.j as f64 - 4.0).powi(2) <= 9.0);
        let edt = distance_transform(&tube.complement()).unwrap();
        let centre = VoxelIndex::new(4, 4, 4);
        let off = VoxelIndex::new(5, 4, 4);
        assert_eq!(local_radius(&edt, centre), edt.distance(centre));
        assert_eq!(local_radius(&edt, off), edt.distance(centre));
        assert!(edt.distance(off) < edt.distance(centre));
        let corner = VoxelIndex::new(0, 0, 0);
        assert_eq!(local_radius(&edt, corner), 0.0);
    }
}
