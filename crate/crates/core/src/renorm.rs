//! The block construction: favored and unfavored coarse edges, the block
//! events `D_n`, `H_n`, `V_n`, `A_n(f)`, `A*_n(f)`, the corner edges `C(f)`
//! and the coarse configuration `sigma_n`.
//!
//! Coarse vertex `x` owns the block `B_n(x) = [2n x_1, 2n x_1 + 2n] x
//! [2n x_2, 2n x_2 + 2n] x {0..k}`. A window of `cw x ch` coarse vertices
//! lives on a fine lattice of `(2n cw + 1) x (2n ch + 1)` columns.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{connected, minimal_open_path, OpenPath, Orientation};
use crate::environment::{classify_intervals, Environment, IntervalClassification};
use crate::error::{param, Error, Result};
use crate::lattice::{region, Box3, Direction, RegionKind, SlabLattice, Vertex};
use crate::rng;
use crate::sampler::{BondConfiguration, EnhancementRule, ModelParams, PercolationModel};

/// The coarse edge `<x, x + e_1>` (horizontal) or `<x, x + e_2>` (vertical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoarseEdge {
    pub x: (usize, usize),
    pub orientation: Orientation,
}

impl CoarseEdge {
    pub fn horizontal(x: usize, y: usize) -> Self {
        Self { x: (x, y), orientation: Orientation::Horizontal }
    }

    pub fn vertical(x: usize, y: usize) -> Self {
        Self { x: (x, y), orientation: Orientation::Vertical }
    }

    /// The second endpoint.
    pub fn y(&self) -> (usize, usize) {
        match self.orientation {
            Orientation::Horizontal => (self.x.0 + 1, self.x.1),
            Orientation::Vertical => (self.x.0, self.x.1 + 1),
        }
    }

    fn ix(c: (usize, usize)) -> (i64, i64) {
        (c.0 as i64, c.1 as i64)
    }
}

/// Everything fixed across samples of one block construction.
#[derive(Debug, Clone)]
pub struct RenormSpec {
    n: usize,
    lambda: f64,
    cw: usize,
    ch: usize,
    model: PercolationModel,
    classification: IntervalClassification,
    coarse: SlabLattice,
}

impl RenormSpec {
    /// `cw x ch` coarse vertices, block half-size `n` (even), slab thickness
    /// `k`. The environment must cover the `cw + 1` intervals of length `2n`
    /// met by the window's blocks.
    pub fn new(
        n: usize,
        lambda: f64,
        k: usize,
        cw: usize,
        ch: usize,
        env: &Environment,
        rule: EnhancementRule,
    ) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return param(format!("block half-size n must be even and positive, got {n}"));
        }
        if cw == 0 || ch == 0 {
            return param("coarse window must be nonempty");
        }
        let need = 2 * n as u64 * (cw as u64 + 1);
        if env.window_x() < need {
            return Err(Error::Window(format!("environment window {} shorter than {need}", env.window_x())));
        }
        let classification = classify_intervals(env, n, lambda)?;
        let lattice = SlabLattice::new(2 * n * cw + 1, 2 * n * ch + 1, k)?;
        let model = PercolationModel::new(lattice, env, rule)?;
        Ok(Self { n, lambda, cw, ch, model, classification, coarse: SlabLattice::new(cw, ch, 0)? })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coarse_extent(&self) -> (usize, usize) {
        (self.cw, self.ch)
    }

    pub fn k(&self) -> usize {
        self.model.lattice().thickness()
    }

    pub fn lattice(&self) -> &SlabLattice {
        self.model.lattice()
    }

    pub fn model(&self) -> &PercolationModel {
        &self.model
    }

    pub fn classification(&self) -> &IntervalClassification {
        &self.classification
    }

    /// The coarse window as a two-dimensional lattice.
    pub fn coarse_lattice(&self) -> &SlabLattice {
        &self.coarse
    }

    pub fn region(&self, kind: RegionKind, x: (usize, usize)) -> Box3 {
        region(kind, self.n, CoarseEdge::ix(x)).expect("coarse vertex in window")
    }

    /// All coarse edges of the window in coarse-lattice index order.
    pub fn coarse_edges(&self) -> Vec<CoarseEdge> {
        self.coarse.edges().map(|e| to_coarse(&e)).collect()
    }

    pub fn coarse_edge_index(&self, f: &CoarseEdge) -> Result<usize> {
        let a = Vertex::new(f.x.0 as u32, f.x.1 as u32, 0);
        let dir = match f.orientation {
            Orientation::Horizontal => Direction::X,
            Orientation::Vertical => Direction::Y,
        };
        self.coarse
            .edge_index_from(a, dir)
            .ok_or_else(|| Error::Window(format!("coarse edge {f:?} outside the window")))
    }

    fn check_edge(&self, f: &CoarseEdge) -> Result<()> {
        self.coarse_edge_index(f).map(|_| ())
    }

    /// Whether every column of `B_n(x) u B_n(y)` lies in a good interval.
    pub fn is_favored(&self, f: &CoarseEdge) -> bool {
        favored_under(&self.classification, self.n, f)
    }

    pub fn edge_classes(&self) -> EdgeClass {
        EdgeClass::from_classification(&self.classification, self.cw, self.ch)
    }

    /// `R(f)`: `HR_n(x)` for horizontal and `VR_n(x)` for vertical edges.
    pub fn rectangle(&self, f: &CoarseEdge) -> Box3 {
        match f.orientation {
            Orientation::Horizontal => self.region(RegionKind::HR, f.x),
            Orientation::Vertical => self.region(RegionKind::VR, f.x),
        }
    }

    /// The fine box `B_n(x) u B_n(y)`, which contains every edge `sigma_n(f)`
    /// depends on.
    pub fn dependency_box(&self, f: &CoarseEdge) -> Box3 {
        let a = self.region(RegionKind::B, f.x);
        let b = self.region(RegionKind::B, f.y());
        Box3 { x_lo: a.x_lo, x_hi: b.x_hi, y_lo: a.y_lo, y_hi: b.y_hi }
    }

    /// The fine edges with both endpoints in `dependency_box(f)`.
    pub fn dependency_edges(&self, f: &CoarseEdge) -> Vec<usize> {
        self.lattice().edges_within(&self.dependency_box(f))
    }
}

fn to_coarse(e: &crate::lattice::Edge) -> CoarseEdge {
    let x = (e.a.x as usize, e.a.y as usize);
    match e.dir {
        Direction::X => CoarseEdge::horizontal(x.0, x.1),
        _ => CoarseEdge::vertical(x.0, x.1),
    }
}

fn favored_under(c: &IntervalClassification, n: usize, f: &CoarseEdge) -> bool {
    let lo = 2 * n as u64 * f.x.0 as u64;
    let hi = 2 * n as u64 * (f.y().0 as u64 + 1);
    c.columns_good(lo, hi)
}

/// Favored flags of every coarse edge of a window, in coarse-lattice index order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeClass {
    pub favored: Vec<bool>,
}

impl EdgeClass {
    pub fn from_classification(c: &IntervalClassification, cw: usize, ch: usize) -> Self {
        let coarse = SlabLattice::new(cw, ch, 0).expect("nonempty window");
        Self { favored: coarse.edges().map(|e| favored_under(c, c.n, &to_coarse(&e))).collect() }
    }

    pub fn favored_count(&self) -> usize {
        self.favored.iter().filter(|&&b| b).count()
    }
}

/// `C(f)`: edges with both endpoints on the boundary of a corner square of
/// either block, minus edges with both endpoints on a block boundary. The
/// boundary of a box is its four side faces.
pub fn corner_edges(spec: &RenormSpec, f: &CoarseEdge) -> Result<Vec<usize>> {
    spec.check_edge(f)?;
    let k = spec.k();
    let lat = spec.lattice();
    let mut corner: BTreeSet<Vertex> = BTreeSet::new();
    let mut block: BTreeSet<Vertex> = BTreeSet::new();
    for x in [f.x, f.y()] {
        for kind in [RegionKind::LB, RegionKind::RB] {
            corner.extend(spec.region(kind, x).side_boundary(k));
        }
        block.extend(spec.region(RegionKind::B, x).side_boundary(k));
    }
    let within = |set: &BTreeSet<Vertex>, e: &crate::lattice::Edge| set.contains(&e.a) && set.contains(&e.b);
    let mut out = BTreeSet::new();
    for &v in &corner {
        for w in lat.neighbors(v) {
            if w > v {
                let e = lat.edge(lat.edge_index(v, w).expect("adjacent"));
                if within(&corner, &e) && !within(&block, &e) {
                    out.insert(e.index);
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

fn bold(bx: &Box3, k: usize) -> Vec<Vertex> {
    bx.vertices(k).collect()
}

/// `D_n(x)`: `LB_n(x)` connects to `RB_n(x)` inside `B_n(x)`.
pub fn eval_d(x: (usize, usize), config: &BondConfiguration, spec: &RenormSpec) -> Result<bool> {
    let k = spec.k();
    connected(
        config,
        &spec.region(RegionKind::B, x),
        &bold(&spec.region(RegionKind::LB, x), k),
        &bold(&spec.region(RegionKind::RB, x), k),
    )
}

/// `H_n(x)`: `LS_n(x)` connects to `RS_n(x + e_1)` inside `HR_n(x)`.
pub fn eval_h(x: (usize, usize), config: &BondConfiguration, spec: &RenormSpec) -> Result<bool> {
    let k = spec.k();
    let hr = spec.region(RegionKind::HR, x);
    spec.lattice().check_box(&hr)?;
    connected(
        config,
        &hr,
        &bold(&spec.region(RegionKind::LS, x), k),
        &bold(&spec.region(RegionKind::RS, (x.0 + 1, x.1)), k),
    )
}

/// `V_n(x)`: `BS_n(x)` connects to `TS_n(x + e_2)` inside `VR_n(x)`.
pub fn eval_v(x: (usize, usize), config: &BondConfiguration, spec: &RenormSpec) -> Result<bool> {
    let k = spec.k();
    let vr = spec.region(RegionKind::VR, x);
    spec.lattice().check_box(&vr)?;
    connected(
        config,
        &vr,
        &bold(&spec.region(RegionKind::BS, x), k),
        &bold(&spec.region(RegionKind::TS, (x.0, x.1 + 1)), k),
    )
}

/// `Gamma_x`: the least open path from `LB_n(x)` to `RB_n(x)` inside `B_n(x)`,
/// present exactly when `D_n(x)` occurs.
pub fn gamma(x: (usize, usize), config: &BondConfiguration, spec: &RenormSpec) -> Result<Option<OpenPath>> {
    let k = spec.k();
    minimal_open_path(
        config,
        &spec.region(RegionKind::B, x),
        &bold(&spec.region(RegionKind::LB, x), k),
        &bold(&spec.region(RegionKind::RB, x), k),
    )
}

fn a_given_paths(
    f: &CoarseEdge,
    gx: Option<&OpenPath>,
    gy: Option<&OpenPath>,
    config: &BondConfiguration,
    spec: &RenormSpec,
) -> Result<bool> {
    let (Some(gx), Some(gy)) = (gx, gy) else {
        return Ok(false);
    };
    let r = spec.rectangle(f);
    let inside = |g: &OpenPath| g.vertices.iter().copied().filter(|v| r.contains_vertex(*v)).collect::<Vec<_>>();
    connected(config, &r, &inside(gx), &inside(gy))
}

/// `A_n(f) = D_n(x) n D_n(y) n {Gamma_x <-> Gamma_y inside R(f)}`.
pub fn eval_a(f: &CoarseEdge, config: &BondConfiguration, spec: &RenormSpec) -> Result<bool> {
    spec.check_edge(f)?;
    let gx = gamma(f.x, config, spec)?;
    if gx.is_none() {
        return Ok(false);
    }
    let gy = gamma(f.y(), config, spec)?;
    a_given_paths(f, gx.as_ref(), gy.as_ref(), config, spec)
}

/// `A*_n(f)`: `A_n(f)` with every corner edge open.
pub fn eval_a_star(f: &CoarseEdge, config: &BondConfiguration, spec: &RenormSpec) -> Result<bool> {
    let corners = corner_edges(spec, f)?;
    Ok(corners.iter().all(|&e| config.is_open(e)) && eval_a(f, config, spec)?)
}

/// `sigma_n(f)` for one edge: `A_n(f)` if favored, `A*_n(f)` otherwise.
pub fn eval_sigma(f: &CoarseEdge, config: &BondConfiguration, spec: &RenormSpec) -> Result<bool> {
    if spec.is_favored(f) {
        eval_a(f, config, spec)
    } else {
        eval_a_star(f, config, spec)
    }
}

/// The coarse configuration together with the edge classes.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormConfig {
    pub sigma: BondConfiguration,
    pub classes: EdgeClass,
}

/// `sigma_n(omega)` on every coarse edge of the window. Each block's path is
/// computed once.
pub fn build_sigma(config: &BondConfiguration, spec: &RenormSpec) -> Result<RenormConfig> {
    if config.lattice() != spec.lattice() {
        return param("configuration lattice does not match the block construction");
    }
    let (cw, ch) = (spec.cw, spec.ch);
    let mut paths = Vec::with_capacity(cw * ch);
    for y in 0..ch {
        for x in 0..cw {
            paths.push(gamma((x, y), config, spec)?);
        }
    }
    let path = |c: (usize, usize)| paths[c.1 * cw + c.0].as_ref();
    let classes = spec.edge_classes();
    let edges = spec.coarse_edges();
    let mut bits = Vec::with_capacity(edges.len());
    for (i, f) in edges.iter().enumerate() {
        let mut open = a_given_paths(f, path(f.x), path(f.y()), config, spec)?;
        if open && !classes.favored[i] {
            open = corner_edges(spec, f)?.iter().all(|&e| config.is_open(e));
        }
        bits.push(open);
    }
    Ok(RenormConfig { sigma: BondConfiguration::from_fn(spec.coarse, |i| bits[i]), classes })
}

/// The default schedule `delta_n = eps / (2 (1 + n^lambda))` for the
/// subcritical shift of `p` on regular edges.
pub fn delta_schedule(eps: f64, n: usize, lambda: f64) -> f64 {
    eps / (2.0 * (1.0 + (n as f64).powf(lambda)))
}

/// Empirical covariance of two coarse indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub mean_a: f64,
    pub mean_b: f64,
    pub covariance: f64,
    /// Standard error of the covariance estimate.
    pub std_error: f64,
    pub samples: u64,
    /// `|covariance| <= 3 std_error`.
    pub pass: bool,
}

/// Covariance of `sigma_n(f1)` and `sigma_n(f2)` over `samples`
/// configurations. With `f1 == f2` this is the plug-in variance.
pub fn sigma_covariance(
    spec: &RenormSpec,
    params: &ModelParams,
    f1: &CoarseEdge,
    f2: &CoarseEdge,
    samples: u64,
    seed: u64,
) -> Result<CovarianceReport> {
    if samples < 2 {
        return param("need at least two samples");
    }
    let pairs: Vec<(bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let c = spec.model.sample_replica(params, seed, r);
            Ok((eval_sigma(f1, &c, spec)?, eval_sigma(f2, &c, spec)?))
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let ma = pairs.iter().filter(|p| p.0).count() as f64 / n;
    let mb = pairs.iter().filter(|p| p.1).count() as f64 / n;
    let terms: Vec<f64> = pairs.iter().map(|&(a, b)| (a as u8 as f64 - ma) * (b as u8 as f64 - mb)).collect();
    let cov = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - cov).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    Ok(CovarianceReport { mean_a: ma, mean_b: mb, covariance: cov, std_error: se, samples, pass: cov.abs() <= 3.0 * se })
}

/// Covariance check for two coarse edges whose dependency boxes are
/// disjoint; refuses overlapping pairs.
pub fn one_dependence_test(
    spec: &RenormSpec,
    params: &ModelParams,
    f1: &CoarseEdge,
    f2: &CoarseEdge,
    samples: u64,
    seed: u64,
) -> Result<CovarianceReport> {
    spec.check_edge(f1)?;
    spec.check_edge(f2)?;
    if spec.dependency_box(f1).intersects(&spec.dependency_box(f2)) {
        return param(format!("dependency regions of {f1:?} and {f2:?} overlap"));
    }
    sigma_covariance(spec, params, f1, f2, samples, seed)
}

/// `W_f = sigma_n(f) Z_f` with `Z_f` independent Bernoulli(1 - psi) drawn from
/// stream `(seed, stream)`.
pub fn thin_sigma(renorm: &RenormConfig, psi: f64, seed: u64, stream: u64) -> Result<BondConfiguration> {
    if !(psi > 0.0 && psi < 0.5) {
        return param(format!("psi must lie in (0, 1/2), got {psi}"));
    }
    let key = rng::stream_key(seed, stream);
    Ok(thin_with(renorm, |f| rng::counter_uniform(key, f as u64) >= psi))
}

/// `W_f = sigma_n(f) z(f)` for a given thinning field.
pub fn thin_with(renorm: &RenormConfig, z: impl Fn(usize) -> bool) -> BondConfiguration {
    let s = &renorm.sigma;
    BondConfiguration::from_fn(*s.lattice(), |f| s.is_open(f) && z(f))
}

/// Header of a coarse-configuration bitmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbmHeader {
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    pub p: f64,
    pub q: f64,
}

/// Plain PBM of a coarse configuration on a `cw x ch` window. Pixel
/// `(2x, 2y)` is coarse vertex `x` (always set), pixels between two vertices
/// are their edge and the remaining pixels are clear. The top row is the
/// largest `y`. The header is a JSON comment line.
pub fn to_pbm(sigma: &BondConfiguration, header: &PbmHeader) -> String {
    let lat = sigma.lattice();
    let (cw, ch) = (lat.extent_x(), lat.extent_y());
    let (w, h) = (2 * cw - 1, 2 * ch - 1);
    let mut s = format!("P1\n# {}\n{w} {h}\n", serde_json::to_string(header).expect("header serializes"));
    for py in (0..h).rev() {
        let row: Vec<&str> = (0..w)
            .map(|px| {
                let on = match (px % 2, py % 2) {
                    (0, 0) => true,
                    (1, 0) => sigma.is_open(
                        lat.edge_index_from(Vertex::new(px as u32 / 2, py as u32 / 2, 0), Direction::X).unwrap(),
                    ),
                    (0, 1) => sigma.is_open(
                        lat.edge_index_from(Vertex::new(px as u32 / 2, py as u32 / 2, 0), Direction::Y).unwrap(),
                    ),
                    _ => false,
                };
                if on {
                    "1"
                } else {
                    "0"
                }
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn from_pbm(text: &str) -> Result<(PbmHeader, BondConfiguration)> {
    let bad = |m: &str| Error::Format(m.to_string());
    let mut lines = text.lines();
    if lines.next() != Some("P1") {
        return Err(bad("expected plain PBM magic P1"));
    }
    let header: PbmHeader = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| bad("missing JSON comment"))
        .and_then(|l| serde_json::from_str(l).map_err(|e| Error::Format(e.to_string())))?;
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing dimensions"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad dimension")))
        .collect::<Result<_>>()?;
    let [w, h] = dims[..] else {
        return Err(bad("expected two dimensions"));
    };
    if w % 2 == 0 || h % 2 == 0 {
        return Err(bad("dimensions must be odd"));
    }
    let pixels: Vec<bool> = lines
        .flat_map(|l| l.split_whitespace())
        .map(|t| match t {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad("bad pixel")),
        })
        .collect::<Result<_>>()?;
    if pixels.len() != w * h {
        return Err(bad("pixel count does not match dimensions"));
    }
    let at = |px: usize, py: usize| pixels[(h - 1 - py) * w + px];
    let lat = SlabLattice::new(w.div_ceil(2), h.div_ceil(2), 0)?;
    let config = BondConfiguration::from_fn(lat, |e| {
        let edge = lat.edge(e);
        let (px, py) = (2 * edge.a.x as usize, 2 * edge.a.y as usize);
        match edge.dir {
            Direction::X => at(px + 1, py),
            _ => at(px, py + 1),
        }
    });
    Ok((header, config))
}
