//! Graph queries on bond configurations restricted to a box: clusters,
//! crossings, the minimal open path, closed cutsets and pivotal edges.
//!
//! Every query uses only the edges with both endpoints in the given region.

use std::collections::VecDeque;

use crate::error::{param, Result};
use crate::lattice::{Box3, Direction, SlabLattice, Vertex};
use crate::rng;
use crate::sampler::BondConfiguration;
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Orientation {
    /// Left face to right face.
    Horizontal,
    /// Bottom face to top face.
    Vertical,
}

/// Local dense indexing of a box's vertices. Local order equals the
/// lexicographic vertex order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Local {
    pub bx: Box3,
    pub lattice: SlabLattice,
    h: usize,
    layers: usize,
}

impl Local {
    pub fn new(lattice: &SlabLattice, bx: &Box3) -> Result<Self> {
        lattice.check_box(bx)?;
        Ok(Self { bx: *bx, lattice: *lattice, h: bx.height(), layers: lattice.layers() })
    }

    pub fn len(&self) -> usize {
        self.bx.width() * self.h * self.layers
    }

    #[inline]
    pub fn index(&self, v: Vertex) -> usize {
        ((v.x as i64 - self.bx.x_lo) as usize * self.h + (v.y as i64 - self.bx.y_lo) as usize) * self.layers
            + v.z as usize
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Vertex {
        let z = i % self.layers;
        let r = i / self.layers;
        Vertex::new(
            (r / self.h) as u32 + self.bx.x_lo as u32,
            (r % self.h) as u32 + self.bx.y_lo as u32,
            z as u32,
        )
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.bx.contains_vertex(v) && (v.z as usize) < self.layers
    }

    /// Neighbours inside the box with the connecting edge index, in
    /// increasing vertex order.
    #[inline]
    pub fn neighbors(&self, v: Vertex, out: &mut [(Vertex, usize); 6]) -> usize {
        let mut n = 0;
        let b = &self.bx;
        let lat = &self.lattice;
        let mut push = |w: Vertex, base: Vertex, dir: Direction| {
            out[n] = (w, lat.edge_index_from(base, dir).expect("edge inside window"));
            n += 1;
        };
        if v.x as i64 > b.x_lo {
            let w = Vertex::new(v.x - 1, v.y, v.z);
            push(w, w, Direction::X);
        }
        if v.y as i64 > b.y_lo {
            let w = Vertex::new(v.x, v.y - 1, v.z);
            push(w, w, Direction::Y);
        }
        if v.z > 0 {
            let w = Vertex::new(v.x, v.y, v.z - 1);
            push(w, w, Direction::Z);
        }
        if (v.z as usize) + 1 < self.layers {
            push(Vertex::new(v.x, v.y, v.z + 1), v, Direction::Z);
        }
        if (v.y as i64) < b.y_hi {
            push(Vertex::new(v.x, v.y + 1, v.z), v, Direction::Y);
        }
        if (v.x as i64) < b.x_hi {
            push(Vertex::new(v.x + 1, v.y, v.z), v, Direction::X);
        }
        n
    }

    /// Calls `f(i, j, e)` for every edge `e` of the box, with local endpoint
    /// indices `i < j`.
    #[inline]
    pub fn for_each_edge(&self, mut f: impl FnMut(usize, usize, usize)) {
        let lat = &self.lattice;
        let (ex, ey) = (lat.extent_x(), lat.extent_y());
        let (oy, oz) = lat.edge_offsets();
        let (x0, y0) = (self.bx.x_lo as usize, self.bx.y_lo as usize);
        let (w, h, l) = (self.bx.width(), self.h, self.layers);
        for dx in 0..w {
            let x = x0 + dx;
            for dy in 0..h {
                let y = y0 + dy;
                let base = (dx * h + dy) * l;
                for z in 0..l {
                    let i = base + z;
                    if z + 1 < l {
                        f(i, i + 1, oz + (z * ey + y) * ex + x);
                    }
                    if dy + 1 < h {
                        f(i, i + l, oy + (z * (ey - 1) + y) * ex + x);
                    }
                    if dx + 1 < w {
                        f(i, i + h * l, (z * ey + y) * (ex - 1) + x);
                    }
                }
            }
        }
    }

    fn check_set(&self, set: &[Vertex], name: &str) -> Result<()> {
        match set.iter().find(|v| !self.contains(**v)) {
            Some(v) => param(format!("vertex {v:?} of {name} lies outside the region")),
            None => Ok(()),
        }
    }

    fn faces(&self, orientation: Orientation) -> (Vec<Vertex>, Vec<Vertex>) {
        let k = self.lattice.thickness();
        match orientation {
            Orientation::Horizontal => (self.bx.left_face(k), self.bx.right_face(k)),
            Orientation::Vertical => (self.bx.bottom_face(k), self.bx.top_face(k)),
        }
    }
}

/// Breadth-first marks of the vertices joined to `sources` by open edges of the region.
fn open_reach(config: &BondConfiguration, loc: &Local, sources: &[Vertex]) -> Vec<bool> {
    let mut seen = vec![false; loc.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        let i = loc.index(s);
        if !seen[i] {
            seen[i] = true;
            queue.push_back(s);
        }
    }
    let mut nb = [(Vertex::new(0, 0, 0), 0); 6];
    while let Some(v) = queue.pop_front() {
        let cnt = loc.neighbors(v, &mut nb);
        for &(w, e) in &nb[..cnt] {
            let j = loc.index(w);
            if !seen[j] && config.is_open(e) {
                seen[j] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Union-find partition of a region's vertices under its open edges.
#[derive(Debug, Clone)]
pub struct ClusterIndex {
    loc: Local,
    labels: Vec<u32>,
}

impl ClusterIndex {
    pub fn build(config: &BondConfiguration, region: &Box3) -> Result<Self> {
        let loc = Local::new(config.lattice(), region)?;
        let mut uf = UnionFind::new(loc.len());
        loc.for_each_edge(|i, j, e| {
            if config.is_open(e) {
                uf.union(i, j);
            }
        });
        let labels = (0..loc.len()).map(|i| uf.find(i) as u32).collect();
        Ok(Self { loc, labels })
    }

    /// Cluster label of `v`; two vertices share a label iff they are joined
    /// by an open path inside the region.
    pub fn label(&self, v: Vertex) -> usize {
        self.labels[self.loc.index(v)] as usize
    }

    pub fn connected(&self, a: Vertex, b: Vertex) -> bool {
        self.label(a) == self.label(b)
    }

    /// Whether some vertex of `a` shares a cluster with some vertex of `b`.
    pub fn sets_connected(&self, a: &[Vertex], b: &[Vertex]) -> bool {
        let mut mark = vec![false; self.labels.len()];
        for &v in a {
            mark[self.label(v)] = true;
        }
        b.iter().any(|&v| mark[self.label(v)])
    }

    pub fn cluster_count(&self) -> usize {
        self.labels.iter().enumerate().filter(|&(i, &l)| l as usize == i).count()
    }
}

/// Whether an open path inside `region` joins `a` to `b`. Empty sets are
/// never connected; a common vertex connects by the empty path.
pub fn connected(config: &BondConfiguration, region: &Box3, a: &[Vertex], b: &[Vertex]) -> Result<bool> {
    let loc = Local::new(config.lattice(), region)?;
    loc.check_set(a, "A")?;
    loc.check_set(b, "B")?;
    if a.is_empty() || b.is_empty() {
        return Ok(false);
    }
    let seen = open_reach(config, &loc, a);
    Ok(b.iter().any(|&v| seen[loc.index(v)]))
}

/// `H(B)` or `V(B)` by union-find. A box of zero width (or height) is
/// crossed by convention, since its two faces coincide.
pub fn crossing(config: &BondConfiguration, bx: &Box3, orientation: Orientation) -> Result<bool> {
    let idx = ClusterIndex::build(config, bx)?;
    let (a, b) = idx.loc.faces(orientation);
    Ok(idx.sets_connected(&a, &b))
}

pub fn crossing_h(config: &BondConfiguration, bx: &Box3) -> Result<bool> {
    crossing(config, bx, Orientation::Horizontal)
}

pub fn crossing_v(config: &BondConfiguration, bx: &Box3) -> Result<bool> {
    crossing(config, bx, Orientation::Vertical)
}

/// The same event as [`crossing`], by breadth-first search.
pub fn crossing_bfs(config: &BondConfiguration, bx: &Box3, orientation: Orientation) -> Result<bool> {
    let loc = Local::new(config.lattice(), bx)?;
    let (a, b) = loc.faces(orientation);
    let seen = open_reach(config, &loc, &a);
    Ok(b.iter().any(|&v| seen[loc.index(v)]))
}

/// The box `B_N = [0, 2N]^2` (after the shift by `(N, N)`).
pub fn box_n(side: usize) -> Box3 {
    let n = side as i64;
    Box3 { x_lo: 0, x_hi: 2 * n, y_lo: 0, y_hi: 2 * n }
}

/// Whether the centre `(N, N, 0)` of `B_N` connects to the side boundary of
/// `B_N` inside `B_N`.
pub fn one_arm(config: &BondConfiguration, side: usize) -> Result<bool> {
    let bx = box_n(side);
    let loc = Local::new(config.lattice(), &bx)?;
    let centre = Vertex::new(side as u32, side as u32, 0);
    let seen = open_reach(config, &loc, &[centre]);
    Ok(bx.side_boundary(config.lattice().thickness()).iter().any(|&v| seen[loc.index(v)]))
}

/// A self-avoiding open path with its edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenPath {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<usize>,
}

impl OpenPath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// The path order: the lexicographic order on vertex sequences, where a
/// proper prefix precedes its extensions. This is the slice ordering.
pub fn path_order(a: &[Vertex], b: &[Vertex]) -> std::cmp::Ordering {
    a.cmp(b)
}

/// The least open self-avoiding path from `a` to `b` inside `region`, or
/// `None` when they are not connected.
///
/// Runs a depth-first search over starting vertices and neighbours in
/// increasing vertex order, stopping at the first vertex of `b`. A vertex
/// whose exploration fails cannot reach `b` from any later branch, so marks
/// are permanent and the search is linear. The result equals the greedy
/// construction that always extends by the least vertex from which `b`
/// stays reachable.
pub fn minimal_open_path(
    config: &BondConfiguration,
    region: &Box3,
    a: &[Vertex],
    b: &[Vertex],
) -> Result<Option<OpenPath>> {
    let loc = Local::new(config.lattice(), region)?;
    loc.check_set(a, "A")?;
    loc.check_set(b, "B")?;
    let mut in_b = vec![false; loc.len()];
    for &v in b {
        in_b[loc.index(v)] = true;
    }
    let mut starts: Vec<usize> = a.iter().map(|&v| loc.index(v)).collect();
    starts.sort_unstable();
    starts.dedup();
    let mut visited = vec![false; loc.len()];
    let mut nb = [(Vertex::new(0, 0, 0), 0); 6];
    // Stack of (vertex, edge into it, next neighbour slot).
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for s in starts {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        if in_b[s] {
            return Ok(Some(OpenPath { vertices: vec![loc.vertex(s)], edges: Vec::new() }));
        }
        stack.push((s, usize::MAX, 0));
        while let Some(top) = stack.last_mut() {
            let v = loc.vertex(top.0);
            let cnt = loc.neighbors(v, &mut nb);
            let mut next = None;
            while top.2 < cnt {
                let (w, e) = nb[top.2];
                top.2 += 1;
                let j = loc.index(w);
                if !visited[j] && config.is_open(e) {
                    next = Some((j, e));
                    break;
                }
            }
            match next {
                Some((j, e)) => {
                    visited[j] = true;
                    stack.push((j, e, 0));
                    if in_b[j] {
                        let vertices = stack.iter().map(|s| loc.vertex(s.0)).collect();
                        let edges = stack[1..].iter().map(|s| s.1).collect();
                        return Ok(Some(OpenPath { vertices, edges }));
                    }
                }
                None => {
                    stack.pop();
                }
            }
        }
    }
    Ok(None)
}

/// The closed edges of the region with an endpoint in the open cluster of `a`.
pub fn closed_boundary(config: &BondConfiguration, region: &Box3, a: &[Vertex]) -> Result<Vec<usize>> {
    let loc = Local::new(config.lattice(), region)?;
    loc.check_set(a, "A")?;
    let cluster = open_reach(config, &loc, a);
    Ok(closed_boundary_of(config, &loc, &cluster))
}

fn closed_boundary_of(config: &BondConfiguration, loc: &Local, cluster: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut nb = [(Vertex::new(0, 0, 0), 0); 6];
    for i in 0..loc.len() {
        if !cluster[i] {
            continue;
        }
        let cnt = loc.neighbors(loc.vertex(i), &mut nb);
        for &(_, e) in &nb[..cnt] {
            if !config.is_open(e) {
                out.push(e);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// The nearest closed cutset to `a`: the unique minimal closed edge set inside
/// the closed boundary of `a`'s cluster separating `a` from `b`. `None` when
/// `a` and `b` are connected.
pub fn nearest_cutset(
    config: &BondConfiguration,
    region: &Box3,
    a: &[Vertex],
    b: &[Vertex],
) -> Result<Option<Vec<usize>>> {
    let loc = Local::new(config.lattice(), region)?;
    loc.check_set(a, "A")?;
    loc.check_set(b, "B")?;
    let cluster = open_reach(config, &loc, a);
    if b.iter().any(|&v| cluster[loc.index(v)]) {
        if a.iter().any(|v| b.contains(v)) {
            return param("A and B must be disjoint");
        }
        return Ok(None);
    }
    // Vertices reaching B in the full graph with the closed boundary removed.
    // Those edges all touch the cluster, so it suffices to never step into it.
    let mut reach = vec![false; loc.len()];
    let mut queue = VecDeque::new();
    for &v in b {
        let i = loc.index(v);
        if !reach[i] {
            reach[i] = true;
            queue.push_back(v);
        }
    }
    let mut nb = [(Vertex::new(0, 0, 0), 0); 6];
    while let Some(v) = queue.pop_front() {
        let cnt = loc.neighbors(v, &mut nb);
        for &(w, _) in &nb[..cnt] {
            let j = loc.index(w);
            if !reach[j] && !cluster[j] {
                reach[j] = true;
                queue.push_back(w);
            }
        }
    }
    let mut cut = Vec::new();
    for i in 0..loc.len() {
        if !cluster[i] {
            continue;
        }
        let cnt = loc.neighbors(loc.vertex(i), &mut nb);
        for &(w, e) in &nb[..cnt] {
            let j = loc.index(w);
            if !cluster[j] && reach[j] {
                debug_assert!(!config.is_open(e));
                cut.push(e);
            }
        }
    }
    cut.sort_unstable();
    cut.dedup();
    Ok(Some(cut))
}

/// Whether removing `cut` from the region's full edge set separates `a` from `b`.
pub fn separates(lattice: &SlabLattice, region: &Box3, cut: &[usize], a: &[Vertex], b: &[Vertex]) -> Result<bool> {
    let removed: std::collections::HashSet<usize> = cut.iter().copied().collect();
    let all = BondConfiguration::from_fn(*lattice, |e| !removed.contains(&e));
    Ok(!connected(&all, region, a, b)?)
}

/// Whether the event differs between `e` forced open and forced closed.
pub fn is_pivotal(config: &BondConfiguration, e: usize, event: impl Fn(&BondConfiguration) -> bool) -> bool {
    event(&config.force_edge(e, true)) != event(&config.force_edge(e, false))
}

/// All edges pivotal for the crossing of `bx` in the given orientation, in
/// increasing index order.
///
/// When the box is crossed these are the bridges of the open graph (with a
/// source joined to one face and a sink to the other) separating source from
/// sink. Otherwise they are the closed edges joining the source's cluster to
/// the sink's cluster.
pub fn pivotal_edges_for_crossing(
    config: &BondConfiguration,
    bx: &Box3,
    orientation: Orientation,
) -> Result<Vec<usize>> {
    let loc = Local::new(config.lattice(), bx)?;
    let (fa, fb) = loc.faces(orientation);
    let nv = loc.len();
    let (src, sink) = (nv, nv + 1);
    let total = nv + 2;
    const VIRTUAL: usize = usize::MAX;

    // Open graph in compressed adjacency form, with the source joined to one
    // face and the sink to the other by virtual edges.
    let mut deg = vec![0u32; total + 1];
    loc.for_each_edge(|i, j, e| {
        if config.is_open(e) {
            deg[i] += 1;
            deg[j] += 1;
        }
    });
    for &v in &fa {
        deg[loc.index(v)] += 1;
        deg[src] += 1;
    }
    for &v in &fb {
        deg[loc.index(v)] += 1;
        deg[sink] += 1;
    }
    let mut start = vec![0usize; total + 1];
    for i in 0..total {
        start[i + 1] = start[i] + deg[i] as usize;
    }
    let mut fill = start.clone();
    let mut adj = vec![(0u32, VIRTUAL); start[total]];
    let mut link = |a: usize, b: usize, e: usize| {
        adj[fill[a]] = (b as u32, e);
        fill[a] += 1;
        adj[fill[b]] = (a as u32, e);
        fill[b] += 1;
    };
    loc.for_each_edge(|i, j, e| {
        if config.is_open(e) {
            link(i, j, e);
        }
    });
    for &v in &fa {
        link(src, loc.index(v), VIRTUAL);
    }
    for &v in &fb {
        link(sink, loc.index(v), VIRTUAL);
    }

    const UNSEEN: u32 = u32::MAX;
    let mut disc = vec![UNSEEN; total];
    let mut low = vec![0u32; total];
    let mut finish = vec![0u32; total];
    let mut clock = 0u32;
    // (node, parent, edge into node, next adjacency slot)
    let mut stack: Vec<(usize, usize, usize, usize)> = vec![(src, usize::MAX, VIRTUAL, start[src])];
    disc[src] = 0;
    let mut bridges: Vec<(usize, usize)> = Vec::new();
    while let Some(top) = stack.last_mut() {
        let node = top.0;
        if top.3 < start[node + 1] {
            let (w, _) = adj[top.3];
            let w = w as usize;
            let e = adj[top.3].1;
            top.3 += 1;
            if disc[w] == UNSEEN {
                clock += 1;
                disc[w] = clock;
                low[w] = clock;
                stack.push((w, node, e, start[w]));
            } else if w != top.1 {
                low[node] = low[node].min(disc[w]);
            }
        } else {
            let (node, parent, e, _) = stack.pop().unwrap();
            finish[node] = clock;
            if parent != usize::MAX {
                low[parent] = low[parent].min(low[node]);
                if low[node] > disc[parent] && e != VIRTUAL {
                    bridges.push((node, e));
                }
            }
        }
    }
    let mut out = Vec::new();
    if disc[sink] != UNSEEN {
        let t = disc[sink];
        for (child, e) in bridges {
            if disc[child] <= t && t <= finish[child] {
                out.push(e);
            }
        }
    } else {
        // Not crossed: disc marks the source side; mark the sink side.
        let sink_side = open_reach(config, &loc, &fb);
        loc.for_each_edge(|i, j, e| {
            let (si, sj) = (disc[i] != UNSEEN, disc[j] != UNSEEN);
            if (si && sink_side[j]) || (sj && sink_side[i]) {
                out.push(e);
            }
        });
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// The minimax threshold of a crossing for homogeneous percolation driven by
/// the uniforms `counter_uniform(key, e)` of `lattice`'s edges: the box is
/// crossed at `p` iff the threshold is `< p`. Degenerate boxes give `-inf`.
pub fn crossing_threshold(lattice: &SlabLattice, bx: &Box3, orientation: Orientation, key: u64) -> Result<f64> {
    let loc = Local::new(lattice, bx)?;
    let (fa, fb) = loc.faces(orientation);
    let nv = loc.len();
    let (src, sink) = (nv, nv + 1);
    let mut uf = UnionFind::new(nv + 2);
    for &v in &fa {
        uf.union(src, loc.index(v));
    }
    for &v in &fb {
        uf.union(sink, loc.index(v));
    }
    if uf.same(src, sink) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut edges = 0usize;
    loc.for_each_edge(|_, _, _| edges += 1);
    // Up to 256 buckets by leading bits, about 64 edges each.
    let count = (edges / 64).next_power_of_two().min(256);
    let shift = 53 - count.trailing_zeros();
    let per = edges / count + 16;
    let mut buckets: Vec<Vec<(u64, u32, u32)>> = (0..count).map(|_| Vec::with_capacity(per + per / 4)).collect();
    loc.for_each_edge(|i, j, e| {
        let bits = rng::counter_bits(key, e as u64);
        buckets[(bits >> shift) as usize].push((bits, i as u32, j as u32));
    });
    // Each bucket is unioned unsorted with an undo log; the bucket that joins
    // the faces is rolled back and replayed in sorted order.
    let mut log = Vec::new();
    for bucket in buckets.iter_mut() {
        log.clear();
        let joined = bucket.iter().any(|&(_, i, j)| uf.union_logged(i as usize, j as usize, &mut log) && uf.same_logged(src, sink, &mut log));
        if !joined {
            continue;
        }
        uf.rollback(&mut log);
        bucket.sort_unstable();
        for &(bits, i, j) in bucket.iter() {
            if uf.union(i as usize, j as usize) && uf.same(src, sink) {
                return Ok(rng::bits_to_unit(bits));
            }
        }
        unreachable!("bucket was found to join the faces");
    }
    unreachable!("opening every edge of a box crosses it")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{ModelParams, PercolationModel};
    use proptest::prelude::*;

    fn v(x: u32, y: u32, z: u32) -> Vertex {
        Vertex::new(x, y, z)
    }

    fn random_config(lat: SlabLattice, p: f64, seed: u64) -> BondConfiguration {
        PercolationModel::homogeneous(lat).sample_replica(&ModelParams::homogeneous(p).unwrap(), seed, 0)
    }

    #[test]
    fn local_edges_match_edges_within() {
        let lat = SlabLattice::new(7, 6, 2).unwrap();
        for bx in [lat.full_box(), Box3::new(1, 4, 2, 5).unwrap(), Box3::new(3, 3, 0, 5).unwrap()] {
            let loc = Local::new(&lat, &bx).unwrap();
            let mut seen = Vec::new();
            loc.for_each_edge(|i, j, e| {
                let edge = lat.edge(e);
                assert_eq!((loc.vertex(i), loc.vertex(j)), (edge.a, edge.b));
                seen.push(e);
            });
            seen.sort_unstable();
            assert_eq!(seen, lat.edges_within(&bx));
        }
    }

    #[test]
    fn two_by_two_crossing_is_three_quarters() {
        let lat = SlabLattice::new(2, 2, 0).unwrap();
        let bx = lat.full_box();
        let crossed = (0..16u64).filter(|&m| crossing_h(&BondConfiguration::from_mask(lat, m), &bx).unwrap()).count();
        assert_eq!(crossed, 12);
    }

    #[test]
    fn trivial_connectivity() {
        let lat = SlabLattice::new(4, 3, 1).unwrap();
        let bx = lat.full_box();
        let open = BondConfiguration::all_open(lat);
        let closed = BondConfiguration::all_closed(lat);
        assert!(connected(&open, &bx, &[v(0, 0, 0)], &[v(3, 2, 1)]).unwrap());
        assert!(!connected(&closed, &bx, &[v(0, 0, 0)], &[v(3, 2, 1)]).unwrap());
        assert!(!connected(&open, &bx, &[], &[v(3, 2, 1)]).unwrap());
        assert!(connected(&closed, &bx, &[v(1, 1, 0)], &[v(1, 1, 0)]).unwrap());
        assert!(connected(&open, &bx, &[v(9, 0, 0)], &[v(1, 1, 0)]).is_err());
        assert!(crossing_h(&open, &bx).unwrap() && crossing_v(&open, &bx).unwrap());
        assert!(!crossing_h(&closed, &bx).unwrap());
        let thin = Box3::new(2, 2, 0, 2).unwrap();
        assert!(crossing_h(&closed, &thin).unwrap());
    }

    #[test]
    fn one_arm_examples() {
        let lat = SlabLattice::new(9, 9, 1).unwrap();
        assert!(one_arm(&BondConfiguration::all_open(lat), 4).unwrap());
        let centre = v(4, 4, 0);
        let mut c = BondConfiguration::all_open(lat);
        for w in lat.neighbors(centre).collect::<Vec<_>>() {
            c.set(lat.edge_index(centre, w).unwrap(), false);
        }
        assert!(!one_arm(&c, 4).unwrap());
    }

    #[test]
    fn cluster_index_counts() {
        let lat = SlabLattice::new(3, 3, 0).unwrap();
        assert_eq!(ClusterIndex::build(&BondConfiguration::all_closed(lat), &lat.full_box()).unwrap().cluster_count(), 9);
        assert_eq!(ClusterIndex::build(&BondConfiguration::all_open(lat), &lat.full_box()).unwrap().cluster_count(), 1);
    }

    #[test]
    fn unique_path_is_found() {
        let lat = SlabLattice::new(4, 3, 0).unwrap();
        let mut c = BondConfiguration::all_closed(lat);
        let path = [v(0, 1, 0), v(1, 1, 0), v(1, 2, 0), v(2, 2, 0), v(3, 2, 0)];
        for w in path.windows(2) {
            c.set(lat.edge_index(w[0], w[1]).unwrap(), true);
        }
        let bx = lat.full_box();
        let g = minimal_open_path(&c, &bx, &bx.left_face(0), &bx.right_face(0)).unwrap().unwrap();
        assert_eq!(g.vertices, path);
        assert_eq!(g.len(), 4);
        let g = minimal_open_path(&c, &bx, &[v(1, 1, 0)], &[v(1, 1, 0), v(3, 2, 0)]).unwrap().unwrap();
        assert_eq!(g.vertices, vec![v(1, 1, 0)]);
        assert!(minimal_open_path(&c, &bx, &[v(0, 0, 0)], &[v(3, 2, 0)]).unwrap().is_none());
    }

    #[test]
    fn prefix_precedes_extension() {
        let a = [v(0, 0, 0), v(1, 0, 0)];
        let b = [v(0, 0, 0), v(1, 0, 0), v(1, 1, 0)];
        assert_eq!(path_order(&a, &b), std::cmp::Ordering::Less);
        let c = [v(0, 1, 0)];
        assert_eq!(path_order(&b, &c), std::cmp::Ordering::Less);
    }

    #[test]
    fn closed_boundary_examples() {
        let lat = SlabLattice::new(4, 4, 1).unwrap();
        let bx = lat.full_box();
        let a = bx.left_face(1);
        assert!(closed_boundary(&BondConfiguration::all_open(lat), &bx, &a).unwrap().is_empty());
        let closed = BondConfiguration::all_closed(lat);
        let mut expect: Vec<usize> = lat
            .edges()
            .filter(|e| a.contains(&e.a) || a.contains(&e.b))
            .map(|e| e.index)
            .collect();
        expect.sort_unstable();
        assert_eq!(closed_boundary(&closed, &bx, &a).unwrap(), expect);
    }

    #[test]
    fn wall_is_the_cutset() {
        let lat = SlabLattice::new(5, 3, 0).unwrap();
        let bx = lat.full_box();
        let mut c = BondConfiguration::all_open(lat);
        let wall: Vec<usize> = (0..3).map(|y| lat.edge_index(v(2, y, 0), v(3, y, 0)).unwrap()).collect();
        for &e in &wall {
            c.set(e, false);
        }
        let cut = nearest_cutset(&c, &bx, &bx.left_face(0), &bx.right_face(0)).unwrap().unwrap();
        assert_eq!(cut, wall);
        assert!(nearest_cutset(&BondConfiguration::all_open(lat), &bx, &bx.left_face(0), &bx.right_face(0))
            .unwrap()
            .is_none());
        assert!(nearest_cutset(&c, &bx, &[v(0, 0, 0)], &[v(0, 0, 0)]).is_err());
    }

    #[test]
    fn pivotal_examples() {
        let lat = SlabLattice::new(4, 4, 0).unwrap();
        let c = random_config(lat, 0.5, 1);
        for e in 0..lat.edge_count() {
            assert!(is_pivotal(&c, e, |w| w.is_open(e)));
        }
        let open = BondConfiguration::all_open(lat);
        assert!(pivotal_edges_for_crossing(&open, &lat.full_box(), Orientation::Vertical).unwrap().is_empty());
    }

    #[test]
    fn threshold_matches_sampled_crossing() {
        let lat = SlabLattice::new(12, 9, 1).unwrap();
        let bx = Box3::new(1, 10, 0, 8).unwrap();
        for r in 0..50 {
            let key = rng::stream_key(17, r);
            let t = crossing_threshold(&lat, &bx, Orientation::Horizontal, key).unwrap();
            for p in [0.2, 0.3, 0.35, 0.4, 0.5, 0.6] {
                let c = PercolationModel::homogeneous(lat).sample_replica(&ModelParams::homogeneous(p).unwrap(), 17, r);
                assert_eq!(crossing_h(&c, &bx).unwrap(), t < p);
            }
            let c = PercolationModel::homogeneous(lat).sample_replica(&ModelParams::homogeneous(t).unwrap(), 17, r);
            assert!(!crossing_h(&c, &bx).unwrap());
        }
        let thin = Box3::new(3, 3, 0, 4).unwrap();
        assert_eq!(crossing_threshold(&lat, &thin, Orientation::Horizontal, 1).unwrap(), f64::NEG_INFINITY);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn union_find_and_bfs_crossings_agree(seed in any::<u64>(), p in 0.2f64..0.8, k in 0usize..3) {
            let lat = SlabLattice::new(7, 6, k).unwrap();
            let c = random_config(lat, p, seed);
            let bx = Box3::new(1, 5, 0, 4).unwrap();
            for o in [Orientation::Horizontal, Orientation::Vertical] {
                prop_assert_eq!(crossing(&c, &bx, o).unwrap(), crossing_bfs(&c, &bx, o).unwrap());
            }
        }

        #[test]
        fn connected_is_symmetric_and_monotone(seed in any::<u64>(), p in 0.2f64..0.8, e in 0usize..49) {
            let lat = SlabLattice::new(6, 5, 0).unwrap();
            let c = random_config(lat, p, seed);
            let bx = lat.full_box();
            let (a, b) = (bx.left_face(0), vec![v(4, 2, 0), v(5, 0, 0)]);
            let ab = connected(&c, &bx, &a, &b).unwrap();
            prop_assert_eq!(ab, connected(&c, &bx, &b, &a).unwrap());
            if ab {
                prop_assert!(connected(&c.force_edge(e, true), &bx, &a, &b).unwrap());
            }
        }

        #[test]
        fn minimal_path_is_valid(seed in any::<u64>(), p in 0.3f64..0.9, k in 0usize..2) {
            let lat = SlabLattice::new(6, 6, k).unwrap();
            let c = random_config(lat, p, seed);
            let bx = lat.full_box();
            let (a, b) = (bx.left_face(k), bx.right_face(k));
            match minimal_open_path(&c, &bx, &a, &b).unwrap() {
                None => prop_assert!(!crossing_h(&c, &bx).unwrap()),
                Some(g) => {
                    prop_assert!(a.contains(&g.vertices[0]));
                    prop_assert!(b.contains(g.vertices.last().unwrap()));
                    prop_assert!(g.vertices[..g.vertices.len() - 1].iter().all(|x| !b.contains(x)));
                    let mut sorted = g.vertices.clone();
                    sorted.sort();
                    sorted.dedup();
                    prop_assert_eq!(sorted.len(), g.vertices.len());
                    for (w, &e) in g.vertices.windows(2).zip(&g.edges) {
                        prop_assert_eq!(lat.edge_index(w[0], w[1]), Some(e));
                        prop_assert!(c.is_open(e));
                    }
                }
            }
        }

        #[test]
        fn fast_pivotals_match_forcing(seed in any::<u64>(), p in 0.3f64..0.8, k in 0usize..2) {
            let lat = SlabLattice::new(6, 5, k).unwrap();
            let c = random_config(lat, p, seed);
            let bx = Box3::new(1, 4, 0, 4).unwrap();
            for o in [Orientation::Horizontal, Orientation::Vertical] {
                let fast = pivotal_edges_for_crossing(&c, &bx, o).unwrap();
                let slow: Vec<usize> = (0..lat.edge_count())
                    .filter(|&e| is_pivotal(&c, e, |w| crossing(w, &bx, o).unwrap()))
                    .collect();
                prop_assert_eq!(fast, slow);
            }
        }

        #[test]
        fn cutset_properties(seed in any::<u64>(), p in 0.2f64..0.6) {
            let lat = SlabLattice::new(5, 4, 1).unwrap();
            let c = random_config(lat, p, seed);
            let bx = lat.full_box();
            let (a, b) = (bx.left_face(1), bx.right_face(1));
            if let Some(cut) = nearest_cutset(&c, &bx, &a, &b).unwrap() {
                let boundary = closed_boundary(&c, &bx, &a).unwrap();
                prop_assert!(cut.iter().all(|e| !c.is_open(*e) && boundary.contains(e)));
                prop_assert!(separates(&lat, &bx, &cut, &a, &b).unwrap());
                for i in 0..cut.len() {
                    let mut less = cut.clone();
                    less.remove(i);
                    prop_assert!(!separates(&lat, &bx, &less, &a, &b).unwrap());
                }
            }
        }
    }
}
