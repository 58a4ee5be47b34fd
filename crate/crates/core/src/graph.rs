//! Centerline graph: junction clusters and endpoints joined by voxel paths.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::segment::{linear_offsets, step};
use crate::skeleton::{classify, Skeleton, VoxelClass};
use crate::volume::{Connectivity, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Endpoint,
    Junction,
    /// Anchor placed on a closed loop that has no endpoint or junction.
    LoopAnchor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    /// Linear indices of the member voxels, ascending.
    pub voxels: Vec<usize>,
    /// Member voxel closest to the cluster centroid (lowest index on ties).
    pub representative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Interior voxels, ordered from `from` to `to`. Empty when the two
    /// nodes touch directly.
    pub path: Vec<usize>,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.from == self.to
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineGraph {
    grid: Grid,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl CenterlineGraph {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().map(|e| (e.from == node) as usize + (e.to == node) as usize).sum()
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }
}

struct Builder<'a> {
    grid: Grid,
    data: &'a [bool],
    offs: Vec<([isize; 3], isize)>,
}

impl Builder<'_> {
    fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let idx = self.grid.index(v);
        let dims = self.grid.dims();
        self.offs.iter().filter_map(move |&(d, off)| {
            if !step(dims, idx, d) {
                return None;
            }
            let n = (v as isize + off) as usize;
            self.data[n].then_some(n)
        })
    }

    fn representative(&self, voxels: &[usize]) -> usize {
        let n = voxels.len() as f64;
        let mut c = [0.0; 3];
        for &v in voxels {
            let p = self.grid.position(self.grid.index(v));
            for a in 0..3 {
                c[a] += p[a] / n;
            }
        }
        let mut best = (f64::INFINITY, usize::MAX);
        for &v in voxels {
            let p = self.grid.position(self.grid.index(v));
            let d: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
            if d < best.0 {
                best = (d, v);
            }
        }
        best.1
    }
}

/// Build the centerline graph of a skeleton.
///
/// Junction voxels (3+ skeleton neighbors) are merged into clusters by
/// 26-adjacency; regular voxels whose neighbors all lie in one cluster are
/// absorbed into it. Edges are traced through the remaining regular voxels.
pub fn build_graph(skel: &Skeleton) -> Result<CenterlineGraph> {
    let grid = *skel.grid();
    let data = skel.mask().data();
    if skel.mask().is_empty() {
        return Err(Error::EmptyMask);
    }
    let b = Builder { grid, data, offs: linear_offsets(&grid, Connectivity::TwentySix) };
    let mut class = classify(skel);

    let mut node_of: Vec<u32> = vec![u32::MAX; grid.len()];
    let mut nodes: Vec<Node> = Vec::new();

    // junction clusters, then single-voxel endpoints, in ascending voxel order
    let mut cluster: Vec<Option<u32>> = vec![None; grid.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for v in 0..grid.len() {
        if class[v] != Some(VoxelClass::Junction) || cluster[v].is_some() {
            continue;
        }
        let id = clusters.len() as u32;
        let mut members = vec![v];
        cluster[v] = Some(id);
        let mut work = vec![v];
        while let Some(u) = work.pop() {
            for n in b.neighbors(u) {
                if class[n] == Some(VoxelClass::Junction) && cluster[n].is_none() {
                    cluster[n] = Some(id);
                    members.push(n);
                    work.push(n);
                }
            }
        }
        clusters.push(members);
    }
    // regular voxels wedged inside a single cluster belong to it
    for v in 0..grid.len() {
        if class[v] != Some(VoxelClass::Regular) {
            continue;
        }
        let owners: BTreeSet<Option<u32>> = b.neighbors(v).map(|n| cluster[n]).collect();
        if owners.len() == 1 {
            if let Some(Some(id)) = owners.into_iter().next() {
                cluster[v] = Some(id);
                class[v] = Some(VoxelClass::Junction);
                clusters[id as usize].push(v);
            }
        }
    }
    for members in &mut clusters {
        members.sort_unstable();
    }
    let mut order: Vec<(usize, Vec<usize>)> = clusters.into_iter().map(|m| (m[0], m)).collect();
    for (v, c) in class.iter().enumerate() {
        if *c == Some(VoxelClass::Endpoint) {
            order.push((v, vec![v]));
        }
    }
    order.sort_by_key(|(first, _)| *first);
    for (_, voxels) in order {
        let id = nodes.len();
        let kind = if class[voxels[0]] == Some(VoxelClass::Endpoint) { NodeKind::Endpoint } else { NodeKind::Junction };
        for &v in &voxels {
            node_of[v] = id as u32;
        }
        let representative = b.representative(&voxels);
        nodes.push(Node { id, kind, voxels, representative });
    }

    let mut visited = vec![false; grid.len()];
    let mut edges: Vec<Edge> = Vec::new();
    let mut direct: BTreeSet<(usize, usize)> = BTreeSet::new();

    let trace = |start_node: usize, first: usize, visited: &mut Vec<bool>, node_of: &Vec<u32>| -> (Vec<usize>, usize) {
        let mut path = vec![first];
        visited[first] = true;
        let mut prev: Option<usize> = None;
        let mut cur = first;
        loop {
            let mut next_regular = None;
            let mut end_node = None;
            for n in b.neighbors(cur) {
                if Some(n) == prev {
                    continue;
                }
                let owner = node_of[n];
                if owner != u32::MAX {
                    // the node we left is only a valid end after the first step
                    if owner as usize != start_node || prev.is_some() {
                        end_node.get_or_insert(owner as usize);
                    }
                } else if !visited[n] {
                    next_regular.get_or_insert(n);
                }
            }
            if let Some(n) = next_regular {
                visited[n] = true;
                path.push(n);
                prev = Some(cur);
                cur = n;
            } else {
                return (path, end_node.unwrap_or(start_node));
            }
        }
    };

    for (node, members) in nodes.iter().map(|n| &n.voxels).enumerate() {
        for &m in members {
            let adj: Vec<usize> = b.neighbors(m).collect();
            for n in adj {
                let owner = node_of[n];
                if owner == node as u32 {
                    continue;
                }
                if owner != u32::MAX {
                    let key = (node.min(owner as usize), node.max(owner as usize));
                    if direct.insert(key) {
                        edges.push(Edge { id: edges.len(), from: key.0, to: key.1, path: Vec::new() });
                    }
                    continue;
                }
                if visited[n] {
                    continue;
                }
                let (path, end) = trace(node, n, &mut visited, &node_of);
                edges.push(Edge { id: edges.len(), from: node, to: end, path });
            }
        }
    }

    // closed loops without any node: anchor at the lowest voxel
    for v in 0..grid.len() {
        if !data[v] || visited[v] || node_of[v] != u32::MAX {
            continue;
        }
        let id = nodes.len();
        node_of[v] = id as u32;
        visited[v] = true;
        nodes.push(Node { id, kind: NodeKind::LoopAnchor, voxels: vec![v], representative: v });
        let first = b.neighbors(v).find(|&n| !visited[n] && node_of[n] == u32::MAX);
        if let Some(first) = first {
            let (path, end) = trace(id, first, &mut visited, &node_of);
            edges.push(Edge { id: edges.len(), from: id, to: end, path });
        }
    }

    Ok(CenterlineGraph { grid, nodes, edges })
}
