//! The multiscale hierarchy on the coarse lattice: scales `L_m`, heights
//! `H_m`, strong/weak labels of the intervals `J^m_i = [i L_m, (i+1) L_m)`,
//! the level-0 weak-interval bound, the decoupling constant, the independent
//! coarse model with its crossing failures `q_m`, and the parameter
//! conditions and selection.

use num_bigint::BigUint;
use num_traits::{FromPrimitive, One, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{crossing, Orientation};
use crate::environment::{classify_intervals, generate_environment_stream, Environment, IntervalClassification, RenewalParams};
use crate::error::{param, Error, Result};
use crate::estimators::McEstimate;
use crate::lattice::{Box3, SlabLattice};
use crate::renorm::EdgeClass;
use crate::rng;
use crate::sampler::BondConfiguration;

/// Exponents and constants of the multiscale scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiscaleParams {
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
    pub beta: f64,
    pub l0: u64,
    pub phi1: f64,
    /// Empirical decoupling constant.
    pub c27_hat: f64,
    pub c30_hat: f64,
    /// Renewal tail constant, 1 for the sampler in this crate.
    pub c: f64,
    pub lambda: f64,
    pub phi: f64,
    pub n: usize,
}

impl Default for MultiscaleParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 1.3,
            mu: 0.9,
            beta: 0.95,
            l0: 64,
            phi1: 30.0,
            c27_hat: 0.0,
            c30_hat: 1.0,
            c: 1.0,
            lambda: 0.5,
            phi: 40.0,
            n: 16,
        }
    }
}

/// Upper end of the admissible `gamma` range, `1 + alpha / (alpha + 2)`.
pub fn gamma_upper(alpha: f64) -> f64 {
    1.0 + alpha / (alpha + 2.0)
}

/// `c_29 = 2 + 2 alpha - gamma alpha - 2 gamma`.
pub fn c29(alpha: f64, gamma: f64) -> f64 {
    2.0 + 2.0 * alpha - gamma * alpha - 2.0 * gamma
}

/// One checked inequality; `margin > 0` exactly when it holds (for closed
/// inequalities `margin >= 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub conditions: Vec<Condition>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// All conditions except those named.
    pub fn pass_except(&self, names: &[&str]) -> bool {
        self.conditions.iter().filter(|c| !names.contains(&c.name.as_str())).all(|c| c.pass)
    }
}

fn open_range(name: &str, x: f64, lo: f64, hi: f64) -> Condition {
    let margin = (x - lo).min(hi - x);
    Condition { name: name.into(), pass: x > lo && x < hi, margin }
}

/// Evaluates every range and scale condition of the scheme.
pub fn validate_params(p: &MultiscaleParams) -> ValidationReport {
    let l = p.l0 as f64;
    let mut c = Vec::new();
    c.push(Condition { name: "alpha_range".into(), pass: p.alpha > 0.0 && p.alpha <= 1.0, margin: p.alpha.min(1.0 - p.alpha) });
    c.push(open_range("gamma_range", p.gamma, 1.0, gamma_upper(p.alpha)));
    c.push(open_range("mu_range", p.mu, 1.0 / p.gamma, 1.0));
    c.push(open_range("beta_range", p.beta, p.gamma * p.mu - p.gamma + 1.0, 1.0));
    let phi1_margin = if p.phi1 > 2.0 {
        (p.gamma * p.mu - 1.0) - (1.0 + p.alpha) / (p.phi1 / 2.0 - 1.0)
    } else {
        f64::NEG_INFINITY
    };
    c.push(Condition { name: "phi1".into(), pass: phi1_margin > 0.0, margin: phi1_margin });
    c.push(Condition { name: "phi_above_phi1".into(), pass: p.phi > p.phi1, margin: p.phi - p.phi1 });
    let lm = p.lambda - 1.0 / p.phi;
    c.push(Condition { name: "lambda_above_inverse_phi".into(), pass: lm > 0.0, margin: lm });
    let i = l.powf(p.gamma - 1.0) - 3.0;
    c.push(Condition { name: "i".into(), pass: i >= 0.0, margin: i });
    let ii = l.powf(c29(p.alpha, p.gamma)) - (1.0 + p.c27_hat);
    c.push(Condition { name: "ii".into(), pass: ii > 0.0, margin: ii });
    let iii = 1.0 - 4.0 * l.powf(p.gamma - 1.0) * (-l.powf(p.beta)).exp() - (-1.0f64).exp();
    c.push(Condition { name: "iii".into(), pass: iii > 0.0, margin: iii });
    let expo = l.powf(p.mu * p.gamma) + l.powf(p.gamma) + l.powf(p.beta * p.gamma) - l.powf(p.beta + p.gamma - 1.0) / 24.0;
    let iv = -((4.0 / (1.0 - (-1.0f64).exp())).ln() + expo);
    c.push(Condition { name: "iv".into(), pass: iv > 0.0, margin: iv });
    ValidationReport { conditions: c }
}

/// `floor(x)`, snapping values within rounding of an integer onto it.
fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// `L_0, ..., L_levels` with `L_m = L_{m-1} floor(L_{m-1}^(gamma - 1))`.
pub fn build_scales(l0: u64, gamma: f64, levels: usize) -> Result<Vec<u64>> {
    if !(gamma > 1.0) {
        return param(format!("gamma must exceed 1, got {gamma}"));
    }
    let mut out = vec![l0];
    for m in 1..=levels {
        let prev = out[m - 1];
        let f = snapped_floor((prev as f64).powf(gamma - 1.0));
        if f <= 1.0 {
            return Err(Error::DegenerateScale(format!("floor({prev}^{}) = {f} does not grow the scale", gamma - 1.0)));
        }
        let next = prev
            .checked_mul(f as u64)
            .ok_or_else(|| Error::Size(format!("scale L_{m} overflows 64 bits")))?;
        out.push(next);
    }
    Ok(out)
}

/// `ceil(exp(x))`, exact while `exp(x)` is a finite double and carried in
/// 53 significant bits beyond that.
fn ceil_exp(x: f64) -> BigUint {
    let e = x.exp();
    if e.is_finite() {
        return BigUint::from_f64(e.ceil()).expect("finite");
    }
    let t = x / std::f64::consts::LN_2;
    let shift = t.floor() - 52.0;
    let mant = (t - shift).exp2().ceil();
    BigUint::from_f64(mant).expect("finite") << (shift as usize)
}

/// `H_0 = 2 exp(L_0^mu)` and the integer ratios `H_m / H_{m-1} = 2 ceil(exp(L_m^mu))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heights {
    pub h0: f64,
    #[serde(with = "biguint_strings")]
    pub ratios: Vec<BigUint>,
}

mod biguint_strings {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|b| b.to_string()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

impl Heights {
    pub fn levels(&self) -> usize {
        self.ratios.len()
    }

    /// `H_m / H_0`.
    pub fn ratio_product(&self, m: usize) -> BigUint {
        self.ratios[..m].iter().fold(BigUint::one(), |a, b| a * b)
    }

    /// `H_m` as a double (infinite once out of range).
    pub fn h(&self, m: usize) -> f64 {
        self.h0 * self.ratio_product(m).to_f64().unwrap_or(f64::INFINITY)
    }

    /// Number of integer rows in `[0, t H_m)`, if it fits in a `u64`.
    pub fn rows(&self, m: usize, t: u64) -> Option<u64> {
        let r = (t as f64 * self.h(m)).ceil();
        (r.is_finite() && r < 2f64.powi(53)).then_some(r as u64)
    }
}

pub fn build_heights(scales: &[u64], mu: f64) -> Result<Heights> {
    if scales.is_empty() {
        return param("need at least one scale");
    }
    if !(mu > 0.0 && mu < 1.0) {
        return param(format!("mu must lie in (0, 1), got {mu}"));
    }
    let h0 = 2.0 * (scales[0] as f64).powf(mu).exp();
    let ratios = scales[1..].iter().map(|&l| ceil_exp((l as f64).powf(mu)) * 2u32).collect();
    Ok(Heights { h0, ratios })
}

/// Strong flags per level; `strong[m][i]` labels `J^m_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub strong: Vec<Vec<bool>>,
}

impl Labels {
    pub fn levels(&self) -> usize {
        self.strong.len()
    }
}

/// Weak when two weak children have indices at least 2 apart.
fn parent_strong(children: &[bool]) -> bool {
    let first = children.iter().position(|&s| !s);
    let last = children.iter().rposition(|&s| !s);
    match (first, last) {
        (Some(a), Some(b)) => b - a < 2,
        _ => true,
    }
}

/// Labels of `top` intervals at level `scales.len() - 1` and of every
/// interval below them. Level 0 interval `J^0_i` is strong when the
/// intervals `I_j`, `j in [i L_0, (i+1) L_0)`, are all good.
pub fn label_hierarchy(classification: &IntervalClassification, scales: &[u64], top: usize) -> Result<Labels> {
    if scales.is_empty() {
        return param("need at least one scale");
    }
    for w in scales.windows(2) {
        if w[1] % w[0] != 0 || w[1] <= w[0] {
            return param(format!("scale {} is not a proper multiple of {}", w[1], w[0]));
        }
    }
    let last = *scales.last().unwrap();
    let need = top as u64 * last;
    if (classification.len() as u64) < need {
        return param(format!("classification has {} intervals, hierarchy needs {need}", classification.len()));
    }
    let l0 = scales[0] as usize;
    let count0 = (need / scales[0]) as usize;
    let mut strong = vec![(0..count0)
        .map(|i| classification.flags[i * l0..(i + 1) * l0].iter().all(|&f| f))
        .collect::<Vec<_>>()];
    for m in 1..scales.len() {
        let r = (scales[m] / scales[m - 1]) as usize;
        let below = &strong[m - 1];
        let level = below.chunks(r).map(parent_strong).collect();
        strong.push(level);
    }
    Ok(Labels { strong })
}

/// JSON view of a hierarchy: scales, heights and `'1'`/`'0'` strong bitmaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyExport {
    pub scales: Vec<u64>,
    pub heights: Heights,
    pub labels: Vec<String>,
}

impl HierarchyExport {
    pub fn new(scales: &[u64], heights: &Heights, labels: &Labels) -> Self {
        let labels = labels
            .strong
            .iter()
            .map(|l| l.iter().map(|&s| if s { '1' } else { '0' }).collect())
            .collect();
        Self { scales: scales.to_vec(), heights: heights.clone(), labels }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("export serializes")
    }
}

/// The `n` the level-0 argument asks for, `L_0^((1+alpha)/(lambda phi - 1)) / (3c)`.
pub fn n_environment_stated(l0: u64, alpha: f64, lambda: f64, phi: f64, c: f64) -> f64 {
    (l0 as f64).powf((1.0 + alpha) / (lambda * phi - 1.0)) / (3.0 * c)
}

/// The `n` at which the union bound `3 c L_0 n^(1 - lambda phi)` reaches
/// `L_0^(-alpha)`, `(3 c L_0^(1+alpha))^(1 / (lambda phi - 1))`.
pub fn n_environment_sufficient(l0: u64, alpha: f64, lambda: f64, phi: f64, c: f64) -> f64 {
    (3.0 * c * (l0 as f64).powf(1.0 + alpha)).powf(1.0 / (lambda * phi - 1.0))
}

/// Frequency of `J^m_0` being weak over environments `env(r)`, `r < replicas`,
/// each covering `L_m` intervals of length `2n`.
pub fn weak_fraction(
    scales: &[u64],
    m: usize,
    n: usize,
    lambda: f64,
    replicas: u64,
    seed: u64,
    env: impl Fn(u64) -> Result<Environment> + Sync,
) -> Result<McEstimate> {
    if m >= scales.len() {
        return param(format!("level {m} beyond the {} scales given", scales.len()));
    }
    let weak = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let c = classify_intervals(&env(r)?, n, lambda)?;
            Ok(!label_hierarchy(&c, &scales[..=m], 1)?.strong[m][0])
        })
        .collect::<Result<Vec<bool>>>()?;
    McEstimate::from_counts(weak.iter().filter(|&&w| w).count() as u64, replicas, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakFractionReport {
    pub level: usize,
    pub scale: u64,
    pub estimate: McEstimate,
    /// `L_m^(-alpha)`.
    pub bound: f64,
    pub std_error: f64,
    /// `estimate <= bound + 3 std_error`.
    pub pass: bool,
}

/// The weak-interval bound at level `m` over `replicas` renewal environments
/// with exponent `params.phi`. Requires `lambda > 1/phi`, `n` at least
/// [`n_environment_sufficient`], and `phi > phi1` for `m >= 1`.
pub fn weak_fraction_check(params: &MultiscaleParams, m: usize, replicas: u64, seed: u64) -> Result<WeakFractionReport> {
    let p = params;
    if !(p.lambda * p.phi > 1.0) {
        return param(format!("need lambda > 1/phi, got lambda = {} and phi = {}", p.lambda, p.phi));
    }
    let need = n_environment_sufficient(p.l0, p.alpha, p.lambda, p.phi, p.c);
    if (p.n as f64) < need {
        return param(format!("n = {} below the level-0 requirement {need:.3}", p.n));
    }
    if m >= 1 && p.phi <= p.phi1 {
        return param(format!("levels above 0 need phi > phi1 = {}", p.phi1));
    }
    let scales = build_scales(p.l0, p.gamma, m)?;
    let renewal = RenewalParams::new(p.phi, seed)?;
    let window = scales[m] * 2 * p.n as u64;
    let estimate = weak_fraction(&scales, m, p.n, p.lambda, replicas, seed, |r| {
        generate_environment_stream(&renewal, window, r)
    })?;
    let bound = (scales[m] as f64).powf(-p.alpha);
    let se = estimate.std_error();
    Ok(WeakFractionReport { level: m, scale: scales[m], pass: estimate.mean <= bound + 3.0 * se, estimate, bound, std_error: se })
}

/// Event templates for the decoupling check: `A` = intervals `0..j` all
/// good, `B` = intervals `j-1+r .. 2j-1+r` all good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingTemplate {
    pub j: usize,
    pub n: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingPoint {
    pub r: usize,
    pub nu_a: f64,
    pub nu_b: f64,
    pub nu_ab: f64,
    /// `nu(A n B) - nu(A) nu(B)`.
    pub excess: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingFit {
    pub points: Vec<DecouplingPoint>,
    /// `max_r r max(0, excess)`.
    pub c27_hat: f64,
    /// `r std_error` at the maximizing `r`.
    pub c27_se: f64,
}

/// Fits the decoupling constant over the separations `r_grid` (in intervals)
/// from environments `env(window, r)`.
pub fn decoupling_fit(
    template: &DecouplingTemplate,
    r_grid: &[usize],
    replicas: u64,
    env: impl Fn(u64, u64) -> Result<Environment> + Sync,
) -> Result<DecouplingFit> {
    let t = template;
    if t.j == 0 || replicas < 2 {
        return param("template needs j >= 1 and at least two replicas");
    }
    let mut points = Vec::new();
    for &r in r_grid {
        if r == 0 {
            return param("separation must be positive");
        }
        let b0 = t.j - 1 + r;
        let window = 2 * t.n as u64 * (b0 + t.j) as u64;
        let pairs = (0..replicas)
            .into_par_iter()
            .map(|s| {
                let c = classify_intervals(&env(window, s)?, t.n, t.lambda)?;
                Ok((c.flags[..t.j].iter().all(|&f| f), c.flags[b0..b0 + t.j].iter().all(|&f| f)))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = replicas as f64;
        let a = pairs.iter().filter(|p| p.0).count() as f64 / n;
        let b = pairs.iter().filter(|p| p.1).count() as f64 / n;
        let ab = pairs.iter().filter(|p| p.0 && p.1).count() as f64 / n;
        let terms: Vec<f64> = pairs.iter().map(|&(x, y)| (x as u8 as f64 - a) * (y as u8 as f64 - b)).collect();
        let cov = terms.iter().sum::<f64>() / n;
        let var = terms.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / (n - 1.0);
        points.push(DecouplingPoint { r, nu_a: a, nu_b: b, nu_ab: ab, excess: ab - a * b, std_error: (var / n).sqrt() });
    }
    let (mut c27_hat, mut c27_se) = (0.0, 0.0);
    for p in &points {
        let v = p.r as f64 * p.excess.max(0.0);
        if v > c27_hat {
            c27_hat = v;
            c27_se = p.r as f64 * p.std_error;
        }
    }
    Ok(DecouplingFit { points, c27_hat, c27_se })
}

/// Independent coarse bits: favored edges open with probability `p_g`,
/// unfavored with `p_b`, from stream `(seed, stream)`.
pub fn sample_independent_coarse(
    classes: &EdgeClass,
    lattice: SlabLattice,
    p_g: f64,
    p_b: f64,
    seed: u64,
    stream: u64,
) -> Result<BondConfiguration> {
    if !(0.0..=1.0).contains(&p_g) || !(0.0..=1.0).contains(&p_b) {
        return param(format!("p_G = {p_g} and p_B = {p_b} must lie in [0, 1]"));
    }
    if lattice.thickness() != 0 || classes.favored.len() != lattice.edge_count() {
        return param("edge classes do not match the coarse lattice");
    }
    let key = rng::stream_key(seed, stream);
    Ok(BondConfiguration::from_fn(lattice, |f| {
        let p = if classes.favored[f] { p_g } else { p_b };
        rng::counter_uniform(key, f as u64) < p
    }))
}

/// Which crossing a placement asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QmEvent {
    /// Horizontal crossing of `(J_i u J_{i+1}) x [0, H_m)`.
    C,
    /// Vertical crossing of `J_i x [0, 2 H_m)`.
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmPlacement {
    pub event: QmEvent,
    pub i: usize,
    pub failure: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmEstimate {
    /// Failure frequency of the worst placement.
    pub q: McEstimate,
    pub placements: Vec<QmPlacement>,
}

/// Default limit on coarse cells for `q_m` estimation.
pub const QM_CELL_CAP: u64 = 1 << 24;

/// Inputs for `q_m` on one environment.
#[derive(Debug, Clone)]
pub struct QmSetup {
    pub classification: IntervalClassification,
    pub scales: Vec<u64>,
    pub heights: Heights,
    pub labels: Labels,
    pub cell_cap: u64,
}

impl QmSetup {
    /// Builds scales, heights and labels for `top` level-`levels` intervals.
    pub fn new(classification: IntervalClassification, l0: u64, gamma: f64, mu: f64, levels: usize, top: usize) -> Result<Self> {
        let scales = build_scales(l0, gamma, levels)?;
        let heights = build_heights(&scales, mu)?;
        let labels = label_hierarchy(&classification, &scales, top)?;
        Ok(Self { classification, scales, heights, labels, cell_cap: QM_CELL_CAP })
    }

    /// The coarse lattice used at level `m`: `count L_m` columns and the rows
    /// of `[0, 2 H_m)`.
    pub fn window(&self, m: usize) -> Result<SlabLattice> {
        let width = self.labels.strong[m].len() as u64 * self.scales[m];
        let rows = self
            .heights
            .rows(m, 2)
            .filter(|&r| r.saturating_mul(width) <= self.cell_cap)
            .ok_or_else(|| Error::Size(format!("level {m} needs more than {} coarse cells", self.cell_cap)))?;
        if (self.classification.len() as u64) < width + 1 {
            return param(format!("classification must cover {} intervals for level {m}", width + 1));
        }
        SlabLattice::new(width as usize, rows as usize, 0)
    }
}

/// Empirical `q_m(p_G, p_B)` with replica `r` drawn from stream `(seed, r)`:
/// the worst failure frequency over placements with the required strong
/// intervals, at height index `j = 0`.
pub fn estimate_qm(setup: &QmSetup, m: usize, p_g: f64, p_b: f64, replicas: u64, seed: u64) -> Result<QmEstimate> {
    if m >= setup.labels.levels() {
        return param(format!("level {m} not labelled"));
    }
    if replicas == 0 {
        return param("replicas must be positive");
    }
    let lattice = setup.window(m)?;
    let lm = setup.scales[m] as i64;
    let strong = &setup.labels.strong[m];
    let rows_c = setup.heights.rows(m, 1).expect("fits when 2 H_m fits") as i64;
    let rows_d = lattice.extent_y() as i64;
    let mut boxes = Vec::new();
    for i in 0..strong.len() {
        if i + 1 < strong.len() && strong[i] && strong[i + 1] {
            boxes.push((QmEvent::C, i, Box3::new(i as i64 * lm, (i as i64 + 2) * lm - 1, 0, rows_c - 1)?));
        }
        if strong[i] {
            boxes.push((QmEvent::D, i, Box3::new(i as i64 * lm, (i as i64 + 1) * lm - 1, 0, rows_d - 1)?));
        }
    }
    if boxes.is_empty() {
        return param(format!("no strong placement at level {m}"));
    }
    let classes = EdgeClass { favored: lattice.edges().map(|e| coarse_favored(setup, &e)).collect() };
    let fails = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let c = sample_independent_coarse(&classes, lattice, p_g, p_b, seed, r)?;
            boxes
                .iter()
                .map(|(ev, _, bx)| {
                    let o = match ev {
                        QmEvent::C => Orientation::Horizontal,
                        QmEvent::D => Orientation::Vertical,
                    };
                    Ok(!crossing(&c, bx, o)?)
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut placements = Vec::with_capacity(boxes.len());
    for (b, (ev, i, _)) in boxes.iter().enumerate() {
        let count = fails.iter().filter(|f| f[b]).count() as u64;
        placements.push(QmPlacement { event: *ev, i: *i, failure: McEstimate::from_counts(count, replicas, seed)? });
    }
    let q = placements.iter().map(|p| p.failure).max_by_key(|f| f.successes).expect("nonempty");
    Ok(QmEstimate { q, placements })
}

fn coarse_favored(setup: &QmSetup, e: &crate::lattice::Edge) -> bool {
    let c = &setup.classification;
    let len = 2 * c.n as u64;
    let hi = match e.dir {
        crate::lattice::Direction::X => e.a.x as u64 + 2,
        _ => e.a.x as u64 + 1,
    };
    c.columns_good(e.a.x as u64 * len, hi * len)
}

/// Bisection for the least `p_G` with `q_0 <= exp(-L_0^beta)` on fixed
/// replicas; `None` when even `p_G = 1` misses the bound.
pub fn strong_crossing_threshold(setup: &QmSetup, beta: f64, p_b: f64, replicas: u64, seed: u64, tol: f64) -> Result<Option<f64>> {
    let target = (-(setup.scales[0] as f64).powf(beta)).exp();
    let ok = |p: f64| -> Result<bool> { Ok(estimate_qm(setup, 0, p, p_b, replicas, seed)?.q.mean <= target) };
    if !ok(1.0)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Which branch of the selection produced the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionCase {
    /// `n_1` already in the interval.
    Kept,
    /// `n_1` below the interval; `n` raised.
    RaisedN,
    /// `n_1` above the interval; `L_0` raised.
    RaisedL0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    Feasible { l0: u64, n: u64, case: SelectionCase, interval: (f64, f64) },
    Infeasible { reason: String },
}

/// `I(L_0) = (L_0^((1+alpha)/(lambda phi - 1)) / (3c), c_30 L_0^(gamma mu - 1))`.
pub fn selection_interval(p: &MultiscaleParams, l0: u64) -> (f64, f64) {
    (
        n_environment_stated(l0, p.alpha, p.lambda, p.phi, p.c),
        p.c30_hat * (l0 as f64).powf(p.gamma * p.mu - 1.0),
    )
}

/// Whether `n` lies strictly inside `I(l0)`.
pub fn satisfies_both(p: &MultiscaleParams, l0: u64, n: u64) -> bool {
    let (lo, hi) = selection_interval(p, l0);
    (n as f64) > lo && (n as f64) < hi
}

/// Least integer strictly inside `(lo, hi)` and above `floor`.
fn integer_inside(lo: f64, hi: f64, floor: u64) -> Option<u64> {
    let n = (lo.floor() as u64 + 1).max(floor + 1);
    ((n as f64) < hi).then_some(n)
}

/// Chooses `(L_0*, n)` from `L_0 = params.l0` and the calibrated `n1`,
/// searching `L_0` up to `l0_cap`. Every condition of [`validate_params`]
/// except `iv` must hold.
pub fn feasibility_and_selection(p: &MultiscaleParams, n1: u64, l0_cap: u64) -> Selection {
    let report = validate_params(p);
    if !report.pass_except(&["iv"]) {
        let failed: Vec<&str> = report.conditions.iter().filter(|c| !c.pass && c.name != "iv").map(|c| c.name.as_str()).collect();
        return Selection::Infeasible { reason: format!("conditions fail: {}", failed.join(", ")) };
    }
    let (lo, hi) = selection_interval(p, p.l0);
    let n1f = n1 as f64;
    if n1f > lo && n1f < hi {
        return Selection::Feasible { l0: p.l0, n: n1, case: SelectionCase::Kept, interval: (lo, hi) };
    }
    if n1f <= lo {
        for l in p.l0..=l0_cap {
            let (a, b) = selection_interval(p, l);
            if let Some(n) = integer_inside(a, b, n1) {
                return Selection::Feasible { l0: l, n, case: SelectionCase::RaisedN, interval: (a, b) };
            }
        }
        return Selection::Infeasible { reason: format!("no integer n > {n1} in I(L_0) for L_0 <= {l0_cap}") };
    }
    for l in p.l0 + 1..=l0_cap {
        let (a, b) = selection_interval(p, l);
        if n1f > a && n1f < b {
            return Selection::Feasible { l0: l, n: n1, case: SelectionCase::RaisedL0, interval: (a, b) };
        }
    }
    Selection::Infeasible { reason: format!("n1 = {n1} outside I(L_0) for every L_0 <= {l0_cap}") }
}
