//! Finite windows of the slab `Z_+^2 x {0..k}` and the named sub-regions used
//! by crossing and block events.
//!
//! Coordinates are non-negative. A region written with a centred box
//! `[-n, n]^2` is stored after the fixed shift by `(n, n)`, so block `x` of
//! half-size `n` occupies `[2n x_1, 2n x_1 + 2n] x [2n x_2, 2n x_2 + 2n]`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// A lattice vertex. The derived ordering is the lexicographic order on
/// `(x, y, z)` used to rank paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Vertex {
    pub const fn new(x: u32, y: u32, z: u32) -> Self {
        Self { x, y, z }
    }

    pub fn l1_distance(&self, other: &Vertex) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y) + self.z.abs_diff(other.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    X,
    Y,
    Z,
}

/// A nearest-neighbour edge; `a` is the endpoint with the smaller coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub index: usize,
    pub dir: Direction,
    pub a: Vertex,
    pub b: Vertex,
}

/// A window `[0, extent_x) x [0, extent_y) x {0..=k}` of the slab with dense
/// vertex and edge indexing. Edges are ordered by direction, then `z`, `y`, `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlabLattice {
    extent_x: usize,
    extent_y: usize,
    k: usize,
}

impl SlabLattice {
    pub fn new(extent_x: usize, extent_y: usize, k: usize) -> Result<Self> {
        if extent_x == 0 || extent_y == 0 {
            return param("lattice extents must be positive");
        }
        if extent_x > u32::MAX as usize || extent_y > u32::MAX as usize || k >= u32::MAX as usize {
            return Err(Error::Size("lattice extent does not fit 32-bit coordinates".into()));
        }
        Ok(Self { extent_x, extent_y, k })
    }

    /// The smallest window containing `bx` with its lower corner at the origin.
    pub fn enclosing(bx: &Box3, k: usize) -> Result<Self> {
        if bx.x_lo < 0 || bx.y_lo < 0 {
            return Err(Error::Window(format!("{bx:?} has negative coordinates")));
        }
        Self::new(bx.x_hi as usize + 1, bx.y_hi as usize + 1, k)
    }

    pub fn extent_x(&self) -> usize {
        self.extent_x
    }

    pub fn extent_y(&self) -> usize {
        self.extent_y
    }

    /// Slab thickness; layers are `0..=k`.
    pub fn thickness(&self) -> usize {
        self.k
    }

    pub fn layers(&self) -> usize {
        self.k + 1
    }

    pub fn vertex_count(&self) -> usize {
        self.extent_x * self.extent_y * self.layers()
    }

    fn count_x(&self) -> usize {
        (self.extent_x - 1) * self.extent_y * self.layers()
    }

    fn count_y(&self) -> usize {
        self.extent_x * (self.extent_y - 1) * self.layers()
    }

    fn count_z(&self) -> usize {
        self.extent_x * self.extent_y * self.k
    }

    /// First indices of the y-edges and of the z-edges.
    pub(crate) fn edge_offsets(&self) -> (usize, usize) {
        (self.count_x(), self.count_x() + self.count_y())
    }

    pub fn edge_count(&self) -> usize {
        self.count_x() + self.count_y() + self.count_z()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        (v.x as usize) < self.extent_x && (v.y as usize) < self.extent_y && (v.z as usize) <= self.k
    }

    pub fn vertex_index(&self, v: Vertex) -> usize {
        debug_assert!(self.contains(v));
        (v.z as usize * self.extent_y + v.y as usize) * self.extent_x + v.x as usize
    }

    pub fn vertex(&self, index: usize) -> Vertex {
        let x = index % self.extent_x;
        let rest = index / self.extent_x;
        Vertex::new(x as u32, (rest % self.extent_y) as u32, (rest / self.extent_y) as u32)
    }

    /// Index of the edge leaving `base` in the positive `dir` direction, if
    /// that edge lies in the window.
    pub fn edge_index_from(&self, base: Vertex, dir: Direction) -> Option<usize> {
        if !self.contains(base) {
            return None;
        }
        let (x, y, z) = (base.x as usize, base.y as usize, base.z as usize);
        match dir {
            Direction::X if x + 1 < self.extent_x => {
                Some((z * self.extent_y + y) * (self.extent_x - 1) + x)
            }
            Direction::Y if y + 1 < self.extent_y => {
                Some(self.count_x() + (z * (self.extent_y - 1) + y) * self.extent_x + x)
            }
            Direction::Z if z < self.k => {
                Some(self.count_x() + self.count_y() + (z * self.extent_y + y) * self.extent_x + x)
            }
            _ => None,
        }
    }

    /// Index of the edge joining two vertices, if they are adjacent and inside.
    pub fn edge_index(&self, u: Vertex, v: Vertex) -> Option<usize> {
        if u.l1_distance(&v) != 1 || !self.contains(u) || !self.contains(v) {
            return None;
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        let dir = if a.x != b.x {
            Direction::X
        } else if a.y != b.y {
            Direction::Y
        } else {
            Direction::Z
        };
        self.edge_index_from(a, dir)
    }

    pub fn edge(&self, index: usize) -> Edge {
        let (cx, cy) = (self.count_x(), self.count_y());
        let (dir, a) = if index < cx {
            let w = self.extent_x - 1;
            let x = index % w;
            let r = index / w;
            (Direction::X, Vertex::new(x as u32, (r % self.extent_y) as u32, (r / self.extent_y) as u32))
        } else if index < cx + cy {
            let i = index - cx;
            let x = i % self.extent_x;
            let r = i / self.extent_x;
            let h = self.extent_y - 1;
            (Direction::Y, Vertex::new(x as u32, (r % h) as u32, (r / h) as u32))
        } else {
            let i = index - cx - cy;
            (Direction::Z, self.vertex(i))
        };
        let b = match dir {
            Direction::X => Vertex::new(a.x + 1, a.y, a.z),
            Direction::Y => Vertex::new(a.x, a.y + 1, a.z),
            Direction::Z => Vertex::new(a.x, a.y, a.z + 1),
        };
        Edge { index, dir, a, b }
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.edge_count()).map(move |i| self.edge(i))
    }

    /// Lattice neighbours of `v` inside the window, in increasing vertex order.
    pub fn neighbors(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        let cands = [
            (v.x > 0).then(|| Vertex::new(v.x - 1, v.y, v.z)),
            (v.y > 0).then(|| Vertex::new(v.x, v.y - 1, v.z)),
            (v.z > 0).then(|| Vertex::new(v.x, v.y, v.z - 1)),
            Some(Vertex::new(v.x, v.y, v.z + 1)),
            Some(Vertex::new(v.x, v.y + 1, v.z)),
            Some(Vertex::new(v.x + 1, v.y, v.z)),
        ];
        cands.into_iter().flatten().filter(move |w| self.contains(*w))
    }

    pub fn full_box(&self) -> Box3 {
        Box3 { x_lo: 0, x_hi: self.extent_x as i64 - 1, y_lo: 0, y_hi: self.extent_y as i64 - 1 }
    }

    pub fn contains_box(&self, bx: &Box3) -> bool {
        bx.x_lo >= 0 && bx.y_lo >= 0 && (bx.x_hi as usize) < self.extent_x && (bx.y_hi as usize) < self.extent_y
    }

    pub fn check_box(&self, bx: &Box3) -> Result<()> {
        if self.contains_box(bx) {
            Ok(())
        } else {
            Err(Error::Window(format!(
                "{bx:?} not inside {}x{} window",
                self.extent_x, self.extent_y
            )))
        }
    }

    /// Indices of the edges with both endpoints in `bx`.
    pub fn edges_within(&self, bx: &Box3) -> Vec<usize> {
        let mut out = Vec::new();
        for v in bx.vertices(self.k) {
            for dir in [Direction::X, Direction::Y, Direction::Z] {
                if let Some(e) = self.edge_index_from(v, dir) {
                    let b = self.edge(e).b;
                    if bx.contains_vertex(b) {
                        out.push(e);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Vertices of `bx` adjacent to a window vertex outside `bx`.
    pub fn vertex_boundary(&self, bx: &Box3) -> Vec<Vertex> {
        bx.vertices(self.k)
            .filter(|&v| self.neighbors(v).any(|w| !bx.contains_vertex(w)))
            .collect()
    }
}

/// A box `[x_lo, x_hi] x [y_lo, y_hi] x {0..=k}` (bounds inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Box3 {
    pub x_lo: i64,
    pub x_hi: i64,
    pub y_lo: i64,
    pub y_hi: i64,
}

impl Box3 {
    pub fn new(x_lo: i64, x_hi: i64, y_lo: i64, y_hi: i64) -> Result<Self> {
        if x_lo > x_hi || y_lo > y_hi {
            return param(format!("empty box [{x_lo},{x_hi}]x[{y_lo},{y_hi}]"));
        }
        Ok(Self { x_lo, x_hi, y_lo, y_hi })
    }

    /// Number of vertex columns along x.
    pub fn width(&self) -> usize {
        (self.x_hi - self.x_lo + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.y_hi - self.y_lo + 1) as usize
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Box3 {
        Box3 { x_lo: self.x_lo + dx, x_hi: self.x_hi + dx, y_lo: self.y_lo + dy, y_hi: self.y_hi + dy }
    }

    pub fn contains_xy(&self, x: i64, y: i64) -> bool {
        (self.x_lo..=self.x_hi).contains(&x) && (self.y_lo..=self.y_hi).contains(&y)
    }

    pub fn contains_vertex(&self, v: Vertex) -> bool {
        self.contains_xy(v.x as i64, v.y as i64)
    }

    pub fn contains_box(&self, other: &Box3) -> bool {
        self.x_lo <= other.x_lo && other.x_hi <= self.x_hi && self.y_lo <= other.y_lo && other.y_hi <= self.y_hi
    }

    pub fn intersects(&self, other: &Box3) -> bool {
        self.x_lo <= other.x_hi && other.x_lo <= self.x_hi && self.y_lo <= other.y_hi && other.y_lo <= self.y_hi
    }

    /// All vertices of the bold box (every layer `0..=k`), lexicographically.
    pub fn vertices(&self, k: usize) -> impl Iterator<Item = Vertex> {
        let b = *self;
        assert!(b.x_lo >= 0 && b.y_lo >= 0, "box has negative coordinates");
        (b.x_lo..=b.x_hi).flat_map(move |x| {
            (b.y_lo..=b.y_hi)
                .flat_map(move |y| (0..=k as u32).map(move |z| Vertex::new(x as u32, y as u32, z)))
        })
    }

    pub fn left_face(&self, k: usize) -> Vec<Vertex> {
        Box3 { x_hi: self.x_lo, ..*self }.vertices(k).collect()
    }

    pub fn right_face(&self, k: usize) -> Vec<Vertex> {
        Box3 { x_lo: self.x_hi, ..*self }.vertices(k).collect()
    }

    pub fn bottom_face(&self, k: usize) -> Vec<Vertex> {
        Box3 { y_hi: self.y_lo, ..*self }.vertices(k).collect()
    }

    pub fn top_face(&self, k: usize) -> Vec<Vertex> {
        Box3 { y_lo: self.y_hi, ..*self }.vertices(k).collect()
    }

    /// Vertex boundary of the bold box as if it sat in the interior of the
    /// slab: the four side faces. The z-direction never leaves the slab.
    pub fn side_boundary(&self, k: usize) -> Vec<Vertex> {
        let b = *self;
        self.vertices(k)
            .filter(move |v| {
                let (x, y) = (v.x as i64, v.y as i64);
                x == b.x_lo || x == b.x_hi || y == b.y_lo || y == b.y_hi
            })
            .collect()
    }
}

/// Named sub-regions of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    /// The block `[-n, n]^2`.
    B,
    /// Lower-left corner square `[-n, -n/2]^2`.
    LB,
    /// Upper-right corner square `[n/2, n]^2`.
    RB,
    /// Left side `{-n} x [-n/2, n/2]`.
    LS,
    /// Right side `{n} x [-n/2, n/2]`.
    RS,
    /// Bottom side `[-n/2, n/2] x {-n}`.
    BS,
    /// Top side `[-n/2, n/2] x {n}`.
    TS,
    /// Horizontal rectangle `[-n, 3n] x [-n/2, n/2]`.
    HR,
    /// Vertical rectangle `[-n/2, n/2] x [-n, 3n]`.
    VR,
}

impl RegionKind {
    pub const ALL: [RegionKind; 9] = [
        RegionKind::B,
        RegionKind::LB,
        RegionKind::RB,
        RegionKind::LS,
        RegionKind::RS,
        RegionKind::BS,
        RegionKind::TS,
        RegionKind::HR,
        RegionKind::VR,
    ];

    /// Centred bounds `(x_lo, x_hi, y_lo, y_hi)` for half-size `n`.
    fn centred(self, n: i64) -> (i64, i64, i64, i64) {
        let h = n / 2;
        match self {
            RegionKind::B => (-n, n, -n, n),
            RegionKind::LB => (-n, -h, -n, -h),
            RegionKind::RB => (h, n, h, n),
            RegionKind::LS => (-n, -n, -h, h),
            RegionKind::RS => (n, n, -h, h),
            RegionKind::BS => (-h, h, -n, -n),
            RegionKind::TS => (-h, h, n, n),
            RegionKind::HR => (-n, 3 * n, -h, h),
            RegionKind::VR => (-h, h, -n, 3 * n),
        }
    }
}

/// The region `2n x + A + (n, n)` for region kind `A` and coarse vertex `x`.
pub fn region(kind: RegionKind, n: usize, x: (i64, i64)) -> Result<Box3> {
    if n == 0 || n % 2 != 0 {
        return param(format!("block half-size n must be even and positive, got {n}"));
    }
    let n = n as i64;
    let (xl, xh, yl, yh) = kind.centred(n);
    let bx = Box3::new(xl, xh, yl, yh)?.translate(2 * n * x.0 + n, 2 * n * x.1 + n);
    if bx.x_lo < 0 || bx.y_lo < 0 {
        return Err(Error::Window(format!("{kind:?}_{n}({},{}) leaves the quarter-space", x.0, x.1)));
    }
    Ok(bx)
}

/// [`region`], additionally checked against a lattice window.
pub fn region_in(lattice: &SlabLattice, kind: RegionKind, n: usize, x: (i64, i64)) -> Result<Box3> {
    let bx = region(kind, n, x)?;
    lattice.check_box(&bx)?;
    Ok(bx)
}

/// The box `B_N` together with the auxiliary regions used when bounding
/// pivotal probabilities, all shifted by `(N, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofRegions {
    /// `B_N = [-N, N]^2`.
    pub box_n: Box3,
    /// Lower half `[-N, N] x [-N, 0]`.
    pub r_prime: Box3,
    /// Central strip `[-N/2, N/2] x [-N, N]`.
    pub r_double_prime: Box3,
    /// Thin strip `[-N, N] x [4N/6, 5N/6]`.
    pub q: Box3,
}

pub fn proof_regions(side: usize) -> Result<ProofRegions> {
    if side == 0 || side % 12 != 0 {
        return param(format!("N must be a positive multiple of 12, got {side}"));
    }
    let n = side as i64;
    let shift = |b: Box3| b.translate(n, n);
    Ok(ProofRegions {
        box_n: shift(Box3::new(-n, n, -n, n)?),
        r_prime: shift(Box3::new(-n, n, -n, 0)?),
        r_double_prime: shift(Box3::new(-n / 2, n / 2, -n, n)?),
        q: shift(Box3::new(-n, n, 4 * n / 6, 5 * n / 6)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edge_counts() {
        assert_eq!(SlabLattice::new(2, 2, 0).unwrap().edge_count(), 4);
        assert_eq!(SlabLattice::new(2, 2, 1).unwrap().edge_count(), 12);
        assert_eq!(SlabLattice::new(1, 1, 5).unwrap().edge_count(), 5);
        assert!(SlabLattice::new(0, 3, 1).is_err());
    }

    #[test]
    fn region_examples() {
        assert_eq!(region(RegionKind::LB, 2, (0, 0)).unwrap(), Box3::new(0, 1, 0, 1).unwrap());
        assert_eq!(region(RegionKind::HR, 2, (0, 0)).unwrap(), Box3::new(0, 8, 1, 3).unwrap());
        assert_eq!(region(RegionKind::B, 4, (1, 0)).unwrap(), Box3::new(8, 16, 0, 8).unwrap());
        assert!(matches!(region(RegionKind::B, 3, (0, 0)), Err(Error::Parameter(_))));
        assert!(matches!(region(RegionKind::B, 4, (-1, 0)), Err(Error::Window(_))));
        let lat = SlabLattice::new(9, 9, 0).unwrap();
        assert!(region_in(&lat, RegionKind::HR, 2, (0, 0)).is_ok());
        assert!(matches!(region_in(&lat, RegionKind::HR, 2, (1, 0)), Err(Error::Window(_))));
    }

    #[test]
    fn proof_region_examples() {
        let r = proof_regions(12).unwrap();
        assert_eq!(r.box_n, Box3::new(0, 24, 0, 24).unwrap());
        // Q_12 sits at heights 8..=10 above the centre (12, 12).
        assert_eq!((r.q.y_lo - 12, r.q.y_hi - 12), (8, 10));
        assert_eq!(r.r_prime, Box3::new(0, 24, 0, 12).unwrap());
        assert_eq!(r.r_double_prime, Box3::new(6, 18, 0, 24).unwrap());
        assert!(proof_regions(10).is_err());
    }

    #[test]
    fn boundary_count_for_interior_box() {
        let lat = SlabLattice::new(12, 11, 2).unwrap();
        for (a, b) in [(2usize, 2usize), (3, 5), (6, 4)] {
            let bx = Box3::new(2, 1 + a as i64, 3, 2 + b as i64).unwrap();
            let expected = a * b * 3 - (a - 2) * (b - 2) * 3;
            assert_eq!(lat.vertex_boundary(&bx).len(), expected);
            assert_eq!(bx.side_boundary(2).len(), expected);
        }
    }

    #[test]
    fn enumeration_agrees_with_count() {
        let lat = SlabLattice::new(4, 3, 2).unwrap();
        let mut n = 0;
        for v in lat.full_box().vertices(2) {
            for w in lat.neighbors(v) {
                if v < w {
                    n += 1;
                }
            }
        }
        assert_eq!(n, lat.edge_count());
        assert_eq!(lat.edges_within(&lat.full_box()).len(), lat.edge_count());
    }

    proptest! {
        #[test]
        fn edge_index_is_a_bijection(nx in 1usize..6, ny in 1usize..6, k in 0usize..3) {
            let lat = SlabLattice::new(nx, ny, k).unwrap();
            for i in 0..lat.edge_count() {
                let e = lat.edge(i);
                prop_assert_eq!(e.a.l1_distance(&e.b), 1);
                prop_assert!(lat.contains(e.a) && lat.contains(e.b));
                prop_assert_eq!(lat.edge_index(e.a, e.b), Some(i));
                prop_assert_eq!(lat.edge_index(e.b, e.a), Some(i));
            }
            for i in 0..lat.vertex_count() {
                prop_assert_eq!(lat.vertex_index(lat.vertex(i)), i);
            }
        }

        #[test]
        fn regions_are_translation_equivariant(n in 1usize..6, x1 in 0i64..5, x2 in 0i64..5) {
            let n = 2 * n;
            for kind in RegionKind::ALL {
                let base = region(kind, n, (0, 0)).unwrap();
                let moved = region(kind, n, (x1, x2)).unwrap();
                let s = 2 * n as i64;
                prop_assert_eq!(moved, base.translate(s * x1, s * x2));
            }
        }
    }
}
