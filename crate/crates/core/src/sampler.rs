//! Bond configurations under `P^Λ_{p,q}` with a monotone coupling.
//!
//! Edge `e` of replica `r` gets the uniform `counter_uniform(stream_key(seed, r), e)`
//! and is open iff that value is below its threshold (`q` on enhanced edges,
//! `p` elsewhere). Reusing one field across parameter values makes every
//! increasing event pointwise monotone in `(p, q)`.

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{param, Error, Result};
use crate::lattice::{Direction, Edge, SlabLattice};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Opening probability of regular edges.
    pub p: f64,
    /// Opening probability of enhanced edges.
    pub q: f64,
}

impl ModelParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return param(format!("p and q must lie in [0, 1], got p={p}, q={q}"));
        }
        Ok(Self { p, q })
    }

    pub fn homogeneous(p: f64) -> Result<Self> {
        Self::new(p, p)
    }
}

/// Which edges of the columns `Λ x Z_+ x {0}` count as enhanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EnhancementRule {
    /// Every edge with both endpoints in `Λ x Z_+ x {0}`, including x-edges
    /// between two adjacent selected columns.
    #[default]
    SetTheoretic,
    /// Only the y-edges running along a selected column.
    ColumnsOnly,
}

/// Whether `e` is enhanced under `rule`; columns outside the environment
/// window are not selected.
pub fn is_enhanced(e: &Edge, env: &Environment, rule: EnhancementRule) -> bool {
    if e.a.z != 0 || e.b.z != 0 {
        return false;
    }
    match (e.dir, rule) {
        (Direction::Y, _) => env.contains(e.a.x as u64),
        (Direction::X, EnhancementRule::SetTheoretic) => env.contains(e.a.x as u64) && env.contains(e.b.x as u64),
        _ => false,
    }
}

/// A lattice window together with its enhanced-edge mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PercolationModel {
    lattice: SlabLattice,
    enhanced: Vec<bool>,
}

impl PercolationModel {
    /// The homogeneous model: no enhanced edges.
    pub fn homogeneous(lattice: SlabLattice) -> Self {
        Self { lattice, enhanced: Vec::new() }
    }

    pub fn new(lattice: SlabLattice, env: &Environment, rule: EnhancementRule) -> Result<Self> {
        if (env.window_x() as usize) < lattice.extent_x() {
            return Err(Error::Window(format!(
                "environment window {} narrower than lattice extent {}",
                env.window_x(),
                lattice.extent_x()
            )));
        }
        let enhanced = lattice.edges().map(|e| is_enhanced(&e, env, rule)).collect();
        Ok(Self { lattice, enhanced })
    }

    pub fn lattice(&self) -> &SlabLattice {
        &self.lattice
    }

    pub fn is_enhanced(&self, e: usize) -> bool {
        self.enhanced.get(e).copied().unwrap_or(false)
    }

    pub fn enhanced_count(&self) -> usize {
        self.enhanced.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn threshold(&self, e: usize, params: &ModelParams) -> f64 {
        if self.is_enhanced(e) {
            params.q
        } else {
            params.p
        }
    }

    /// The configuration `{ field(e) < threshold(e) }`.
    pub fn sample(&self, params: &ModelParams, field: &UniformField) -> Result<BondConfiguration> {
        if field.len() != self.lattice.edge_count() {
            return param(format!(
                "uniform field has {} values, lattice has {} edges",
                field.len(),
                self.lattice.edge_count()
            ));
        }
        Ok(BondConfiguration::from_fn(self.lattice, |e| field.values[e] < self.threshold(e, params)))
    }

    /// Same as [`sample`](Self::sample) on the field of `(seed, replica)`,
    /// without materializing the field.
    pub fn sample_replica(&self, params: &ModelParams, seed: u64, replica: u64) -> BondConfiguration {
        let key = rng::stream_key(seed, replica);
        BondConfiguration::from_fn(self.lattice, |e| rng::counter_uniform(key, e as u64) < self.threshold(e, params))
    }
}

/// One uniform value in `[0, 1)` per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformField {
    values: Vec<f64>,
}

impl UniformField {
    pub fn generate(lattice: &SlabLattice, seed: u64, replica: u64) -> Self {
        let key = rng::stream_key(seed, replica);
        Self { values: (0..lattice.edge_count() as u64).map(|e| rng::counter_uniform(key, e)).collect() }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..1.0).contains(v)) {
            return param("uniform values must lie in [0, 1)");
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One bit per edge of a lattice window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BondConfiguration {
    lattice: SlabLattice,
    bits: Vec<u64>,
}

impl BondConfiguration {
    pub fn all_closed(lattice: SlabLattice) -> Self {
        Self { lattice, bits: vec![0; lattice.edge_count().div_ceil(64)] }
    }

    pub fn all_open(lattice: SlabLattice) -> Self {
        Self::from_fn(lattice, |_| true)
    }

    pub fn from_fn(lattice: SlabLattice, mut open: impl FnMut(usize) -> bool) -> Self {
        let m = lattice.edge_count();
        let mut bits = vec![0u64; m.div_ceil(64)];
        for e in 0..m {
            if open(e) {
                bits[e >> 6] |= 1 << (e & 63);
            }
        }
        Self { lattice, bits }
    }

    /// Configuration whose open edges are the set bits of `mask` (edge `e` is
    /// bit `e`); for exhaustive enumeration of small windows.
    pub fn from_mask(lattice: SlabLattice, mask: u64) -> Self {
        assert!(lattice.edge_count() <= 64);
        Self::from_fn(lattice, |e| mask >> e & 1 == 1)
    }

    pub fn lattice(&self) -> &SlabLattice {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.lattice.edge_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn is_open(&self, e: usize) -> bool {
        self.bits[e >> 6] >> (e & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, e: usize, open: bool) {
        if open {
            self.bits[e >> 6] |= 1 << (e & 63);
        } else {
            self.bits[e >> 6] &= !(1 << (e & 63));
        }
    }

    /// A copy with `e` set to `open`.
    pub fn force_edge(&self, e: usize, open: bool) -> Self {
        let mut c = self.clone();
        c.set(e, open);
        c
    }

    pub fn open_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn open_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&e| self.is_open(e))
    }

    /// Every edge open here is open in `other`.
    pub fn is_dominated_by(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    /// A JSON header line followed by the packed bits, little-endian, one
    /// byte per eight edges.
    pub fn to_dump(&self, header: &DumpHeader) -> Vec<u8> {
        let mut out = serde_json::to_vec(header).expect("header serializes");
        out.push(b'\n');
        let nbytes = self.len().div_ceil(8);
        out.extend(self.bits.iter().flat_map(|w| w.to_le_bytes()).take(nbytes));
        out
    }

    pub fn from_dump(bytes: &[u8]) -> Result<(DumpHeader, Self)> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing header line".into()))?;
        let header: DumpHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Format(e.to_string()))?;
        let lattice = SlabLattice::new(header.extent_x, header.extent_y, header.k)
            .map_err(|e| Error::Format(e.to_string()))?;
        let body = &bytes[nl + 1..];
        let m = lattice.edge_count();
        if body.len() != m.div_ceil(8) || header.edges != m {
            return Err(Error::Format(format!("expected {} bytes of edge bits", m.div_ceil(8))));
        }
        let config = Self::from_fn(lattice, |e| body[e >> 3] >> (e & 7) & 1 == 1);
        if body.len() * 8 > m && (m..body.len() * 8).any(|e| body[e >> 3] >> (e & 7) & 1 == 1) {
            return Err(Error::Format("padding bits set".into()));
        }
        Ok((header, config))
    }
}

/// Header of a configuration dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub extent_x: usize,
    pub extent_y: usize,
    pub k: usize,
    pub edges: usize,
    pub seed: u64,
    pub replica: u64,
    pub p: f64,
    pub q: f64,
}

impl DumpHeader {
    pub fn new(lattice: &SlabLattice, seed: u64, replica: u64, params: &ModelParams) -> Self {
        Self {
            extent_x: lattice.extent_x(),
            extent_y: lattice.extent_y(),
            k: lattice.thickness(),
            edges: lattice.edge_count(),
            seed,
            replica,
            p: params.p,
            q: params.q,
        }
    }
}
