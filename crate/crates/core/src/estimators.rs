//! Monte Carlo estimators: event probabilities with Wilson intervals, the
//! crossing function `f_p(n, m)`, the correlation length, the critical point,
//! pivotal sums and power-law fits.
//!
//! Replica `r` always draws from stream `(seed, r)`, and success counts are
//! integers, so results do not depend on the thread schedule.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{crossing_threshold, pivotal_edges_for_crossing, Orientation};
use crate::error::{param, Error, Result};
use crate::lattice::{Box3, SlabLattice};
use crate::rng;
use crate::sampler::{BondConfiguration, ModelParams, PercolationModel};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A Bernoulli frequency with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub successes: u64,
    pub replicas: u64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_counts(successes: u64, replicas: u64, seed: u64) -> Result<Self> {
        if replicas == 0 {
            return param("replicas must be positive");
        }
        if successes > replicas {
            return param("more successes than replicas");
        }
        let (lo, hi) = wilson_interval(successes, replicas, Z95);
        let mean = successes as f64 / replicas as f64;
        Ok(Self { successes, replicas, mean, ci_lo: lo.min(mean), ci_hi: hi.max(mean), seed })
    }

    /// Plug-in binomial standard error.
    pub fn std_error(&self) -> f64 {
        (self.mean * (1.0 - self.mean) / self.replicas as f64).sqrt()
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}

/// Wilson score interval for `s` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(s: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let ph = s as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (ph + z2 / (2.0 * n)) / denom;
    let half = z * (ph * (1.0 - ph) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicas: u64,
    pub seed: u64,
}

impl MeanEstimate {
    pub fn from_moments(sum: f64, sum_sq: f64, replicas: u64, seed: u64) -> Result<Self> {
        if replicas < 2 {
            return param("a mean estimate needs at least two replicas");
        }
        let n = replicas as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Ok(Self { mean, std_error: (var / n).sqrt(), replicas, seed })
    }
}

/// Frequency of `event(r)` over replicas `0..replicas`.
pub fn estimate_indicator(replicas: u64, seed: u64, event: impl Fn(u64) -> bool + Sync) -> Result<McEstimate> {
    if replicas == 0 {
        return param("replicas must be positive");
    }
    let hits = (0..replicas).into_par_iter().filter(|&r| event(r)).count() as u64;
    McEstimate::from_counts(hits, replicas, seed)
}

/// What to sample for each replica.
#[derive(Debug, Clone)]
pub struct SamplerSpec {
    pub model: PercolationModel,
    pub params: ModelParams,
    pub seed: u64,
}

/// Frequency of an event over independently sampled configurations.
pub fn estimate_event(
    spec: &SamplerSpec,
    replicas: u64,
    event: impl Fn(&BondConfiguration) -> bool + Sync,
) -> Result<McEstimate> {
    estimate_indicator(replicas, spec.seed, |r| event(&spec.model.sample_replica(&spec.params, spec.seed, r)))
}

/// Crossing thresholds of one box for replicas `0..replicas`, using the
/// uniforms of the smallest window containing the box.
pub fn crossing_thresholds(bx: &Box3, k: usize, orientation: Orientation, seed: u64, replicas: u64) -> Result<Vec<f64>> {
    let lattice = SlabLattice::enclosing(bx, k)?;
    (0..replicas)
        .into_par_iter()
        .map(|r| crossing_threshold(&lattice, bx, orientation, rng::stream_key(seed, r)))
        .collect()
}

fn count_below(thresholds: &[f64], p: f64) -> u64 {
    thresholds.iter().filter(|&&t| t < p).count() as u64
}

/// `f_p(n, m)`: the horizontal crossing probability of `[0, n] x [0, m] x [0, k]`
/// under homogeneous percolation.
pub fn estimate_f(n: usize, m: usize, p: f64, k: usize, replicas: u64, seed: u64) -> Result<McEstimate> {
    if n == 0 || m == 0 {
        return param("n and m must be positive");
    }
    ModelParams::homogeneous(p)?;
    let bx = Box3::new(0, n as i64, 0, m as i64)?;
    let t = crossing_thresholds(&bx, k, Orientation::Horizontal, seed, replicas)?;
    McEstimate::from_counts(count_below(&t, p), replicas, seed)
}

/// Result of a correlation-length search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrLength {
    Finite(usize),
    /// No `n <= n_max` reached the target probability.
    Saturated,
}

impl CorrLength {
    pub fn finite(self) -> Option<usize> {
        match self {
            CorrLength::Finite(n) => Some(n),
            CorrLength::Saturated => None,
        }
    }
}

/// Correlation-length search with thresholds cached per box size.
///
/// The replicas for size `n` are drawn from a seed depending on `n` only,
/// so every `p` sees the same samples and the result is nonincreasing in `p`.
#[derive(Debug, Clone)]
pub struct CorrLengthEstimator {
    pub tau: f64,
    pub k: usize,
    pub replicas: u64,
    pub seed: u64,
    pub n_max: usize,
    cache: HashMap<usize, Vec<f64>>,
}

impl CorrLengthEstimator {
    pub fn new(tau: f64, k: usize, replicas: u64, seed: u64, n_max: usize) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return param(format!("tau must lie in (0, 1), got {tau}"));
        }
        if replicas == 0 || n_max == 0 {
            return param("replicas and n_max must be positive");
        }
        Ok(Self { tau, k, replicas, seed, n_max, cache: HashMap::new() })
    }

    fn thresholds(&mut self, n: usize) -> Result<&[f64]> {
        if !self.cache.contains_key(&n) {
            let bx = Box3::new(0, 2 * n as i64, 0, n as i64)?;
            let t = crossing_thresholds(&bx, self.k, Orientation::Horizontal, rng::derive(self.seed, n as u64), self.replicas)?;
            self.cache.insert(n, t);
        }
        Ok(&self.cache[&n])
    }

    /// Point estimate of `P_p(H([0, 2n] x [0, n] x [0, k]))`.
    pub fn crossing_probability(&mut self, n: usize, p: f64) -> Result<McEstimate> {
        let (replicas, seed) = (self.replicas, self.seed);
        let t = self.thresholds(n)?;
        McEstimate::from_counts(count_below(t, p), replicas, seed)
    }

    fn succeeds(&mut self, n: usize, p: f64) -> Result<bool> {
        let target = 1.0 - self.tau;
        Ok(self.crossing_probability(n, p)?.mean >= target)
    }

    /// Doubling `n = 1, 2, 4, ...` (capped at `n_max`), then bisection
    /// between the last failure and the first success.
    pub fn estimate(&mut self, p: f64) -> Result<CorrLength> {
        if !(0.0..=1.0).contains(&p) {
            return param(format!("p must lie in [0, 1], got {p}"));
        }
        let mut lo = 0;
        let mut hi = 1;
        loop {
            if self.succeeds(hi, p)? {
                break;
            }
            if hi >= self.n_max {
                return Ok(CorrLength::Saturated);
            }
            lo = hi;
            hi = (hi * 2).min(self.n_max);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.succeeds(mid, p)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(CorrLength::Finite(hi))
    }
}

pub fn estimate_corrlen(p: f64, tau: f64, k: usize, replicas: u64, n_max: usize, seed: u64) -> Result<CorrLength> {
    CorrLengthEstimator::new(tau, k, replicas, seed, n_max)?.estimate(p)
}

/// Correlation lengths for several `p` on common samples.
pub fn corrlen_curve(ps: &[f64], tau: f64, k: usize, replicas: u64, n_max: usize, seed: u64) -> Result<Vec<CorrLength>> {
    let mut est = CorrLengthEstimator::new(tau, k, replicas, seed, n_max)?;
    ps.iter().map(|&p| est.estimate(p)).collect()
}

/// The square-box crossing point for one size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeCrossing {
    pub n: usize,
    pub p: f64,
    /// Standard error from the spread of order statistics around the median.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub estimate: f64,
    pub spread: f64,
    pub per_size: Vec<SizeCrossing>,
}

const BISECTION_TOL: f64 = 1e-7;

/// Bisects `p` so that the fraction of thresholds below `p` reaches 1/2.
fn bisect_half(thresholds: &[f64]) -> Result<f64> {
    let r = thresholds.len() as f64;
    let est = |p: f64| count_below(thresholds, p) as f64 / r;
    let (mut lo, mut hi) = (0.0, 1.0 + f64::EPSILON);
    if est(lo) >= 0.5 || est(hi) < 0.5 {
        return Err(Error::NonBracketing(format!(
            "crossing estimate {} at p=0 and {} at p=1 do not bracket 1/2",
            est(lo),
            est(hi)
        )));
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if est(mid) >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// For each size, the `p` at which the horizontal crossing estimate of the
/// square box `[0, n]^2 x [0, k]` equals 1/2; the estimate is the mean over the
/// two largest sizes.
pub fn estimate_pc(k: usize, sizes: &[usize], replicas: u64, seed: u64) -> Result<PcEstimate> {
    if sizes.is_empty() {
        return param("size grid must be nonempty");
    }
    if replicas < 4 {
        return param("need at least four replicas");
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut per_size = Vec::new();
    for &n in &sizes {
        if n == 0 {
            return param("sizes must be positive");
        }
        let bx = Box3::new(0, n as i64, 0, n as i64)?;
        let mut t = crossing_thresholds(&bx, k, Orientation::Horizontal, rng::derive(seed, n as u64), replicas)?;
        let p = bisect_half(&t)?;
        t.sort_unstable_by(f64::total_cmp);
        let half = (replicas as f64).sqrt() / 2.0;
        let mid = replicas as f64 / 2.0;
        let lo = t[((mid - half).floor().max(0.0)) as usize];
        let hi = t[((mid + half).ceil() as usize).min(t.len() - 1)];
        per_size.push(SizeCrossing { n, p, std_error: (hi - lo) / 2.0 });
    }
    let last = per_size.len();
    let (estimate, spread) = if last == 1 {
        (per_size[0].p, per_size[0].std_error)
    } else {
        let (a, b) = (per_size[last - 2], per_size[last - 1]);
        let se = 0.5 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        (0.5 * (a.p + b.p), ((a.p - b.p).abs() / 2.0).max(se))
    };
    Ok(PcEstimate { estimate, spread, per_size })
}

/// Expected numbers of pivotal edges for `V(B_N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RussoSum {
    /// Pivotal edges anywhere in `E(B_N)`.
    pub all_edges: MeanEstimate,
    /// Pivotal edges inside the requested sub-region.
    pub region: MeanEstimate,
}

/// A pivotal sum next to the central finite difference of `P(V(B_N))`
/// computed on the same samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RussoReport {
    pub sum: RussoSum,
    pub p_plus: McEstimate,
    pub p_minus: McEstimate,
    pub h: f64,
    /// `(P(p + h) - P(p - h)) / 2h`.
    pub finite_difference: f64,
    pub finite_difference_se: f64,
}

impl RussoReport {
    /// Difference between the pivotal sum and the finite difference in units
    /// of their combined standard error; zero when both sides are exact and
    /// equal.
    pub fn z_score(&self) -> f64 {
        let se = (self.sum.all_edges.std_error.powi(2) + self.finite_difference_se.powi(2)).sqrt();
        let diff = self.sum.all_edges.mean - self.finite_difference;
        if diff == 0.0 {
            0.0
        } else {
            diff / se
        }
    }
}

struct RussoRow {
    all: u64,
    region: u64,
    plus: bool,
    minus: bool,
}

fn russo_rows(p: f64, side: usize, k: usize, region: Option<&Box3>, h: f64, replicas: u64, seed: u64) -> Result<Vec<RussoRow>> {
    ModelParams::homogeneous(p)?;
    if side == 0 || replicas < 2 {
        return param("N must be positive and replicas at least 2");
    }
    let bx = crate::connectivity::box_n(side);
    let lattice = SlabLattice::enclosing(&bx, k)?;
    if let Some(r) = region {
        if !bx.contains_box(r) {
            return Err(Error::Window("russo region must lie inside B_N".into()));
        }
    }
    let model = PercolationModel::homogeneous(lattice);
    let params = ModelParams::homogeneous(p)?;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let config = model.sample_replica(&params, seed, r);
            let piv = pivotal_edges_for_crossing(&config, &bx, Orientation::Vertical)?;
            let in_region = match region {
                Some(rb) => piv
                    .iter()
                    .filter(|&&e| {
                        let edge = lattice.edge(e);
                        rb.contains_vertex(edge.a) && rb.contains_vertex(edge.b)
                    })
                    .count(),
                None => piv.len(),
            };
            let (plus, minus) = if h > 0.0 {
                let t = crossing_threshold(&lattice, &bx, Orientation::Vertical, rng::stream_key(seed, r))?;
                (t < p + h, t < p - h)
            } else {
                (false, false)
            };
            Ok(RussoRow { all: piv.len() as u64, region: in_region as u64, plus, minus })
        })
        .collect()
}

fn mean_of(rows: &[RussoRow], seed: u64, f: impl Fn(&RussoRow) -> f64) -> Result<MeanEstimate> {
    let (s, s2) = rows.iter().fold((0.0, 0.0), |(s, s2), row| {
        let x = f(row);
        (s + x, s2 + x * x)
    });
    MeanEstimate::from_moments(s, s2, rows.len() as u64, seed)
}

/// Pivotal sums for `V(B_N)` at `p` on the slab of thickness `k`. `region`
/// restricts the second sum to a box (for instance `R''_N`); an edge counts
/// when both endpoints lie in it.
pub fn russo_sum(p: f64, side: usize, k: usize, region: Option<&Box3>, replicas: u64, seed: u64) -> Result<RussoSum> {
    let rows = russo_rows(p, side, k, region, 0.0, replicas, seed)?;
    Ok(RussoSum { all_edges: mean_of(&rows, seed, |r| r.all as f64)?, region: mean_of(&rows, seed, |r| r.region as f64)? })
}

/// [`russo_sum`] over all edges together with the finite difference of
/// `P(V(B_N))` at `p +- h` under the coupling.
pub fn russo_consistency(p: f64, h: f64, side: usize, k: usize, replicas: u64, seed: u64) -> Result<RussoReport> {
    if !(h > 0.0 && p - h >= 0.0 && p + h <= 1.0) {
        return param("finite-difference step must keep p +- h inside [0, 1]");
    }
    let rows = russo_rows(p, side, k, None, h, replicas, seed)?;
    let all = mean_of(&rows, seed, |r| r.all as f64)?;
    let plus = rows.iter().filter(|r| r.plus).count() as u64;
    let minus = rows.iter().filter(|r| r.minus).count() as u64;
    // Under the coupling the two indicators differ by a 0/1 variable.
    let diff = mean_of(&rows, seed, |r| (r.plus as u8 - r.minus as u8) as f64)?;
    Ok(RussoReport {
        sum: RussoSum { all_edges: all, region: all },
        p_plus: McEstimate::from_counts(plus, replicas, seed)?,
        p_minus: McEstimate::from_counts(minus, replicas, seed)?,
        h,
        finite_difference: diff.mean / (2.0 * h),
        finite_difference_se: diff.std_error / (2.0 * h),
    })
}

/// Least-squares fit of `L = c1 x^(-c2)` on log-log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits points `(p - p_c, L)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return param(format!("power-law fit needs at least 3 points, got {}", points.len()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return param("power-law points must be positive and finite");
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return param("power-law points need distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(PowerLawFit { c1: intercept.exp(), c2: -slope, r_squared, points: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::crossing_h;

    #[test]
    fn wilson_examples() {
        let e = McEstimate::from_counts(0, 10, 0).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.ci_lo, 0.0);
        assert!(e.ci_hi > 0.2 && e.ci_hi < 0.35);
        let e = McEstimate::from_counts(50, 100, 0).unwrap();
        assert!((e.ci_lo - 0.4038).abs() < 1e-3 && (e.ci_hi - 0.5962).abs() < 1e-3);
        assert!(McEstimate::from_counts(1, 0, 0).is_err());
    }

    #[test]
    fn constant_events() {
        assert_eq!(estimate_indicator(100, 1, |_| true).unwrap().mean, 1.0);
        assert_eq!(estimate_indicator(100, 1, |_| false).unwrap().mean, 0.0);
        assert!(estimate_indicator(0, 1, |_| true).is_err());
    }

    #[test]
    fn two_by_two_box_at_half() {
        let lat = SlabLattice::new(2, 2, 0).unwrap();
        let spec = SamplerSpec {
            model: PercolationModel::homogeneous(lat),
            params: ModelParams::homogeneous(0.5).unwrap(),
            seed: 3,
        };
        let bx = lat.full_box();
        let est = estimate_event(&spec, 10_000, |c| crossing_h(c, &bx).unwrap()).unwrap();
        assert!(est.covers(0.75), "{est:?}");
        assert_eq!(est, estimate_event(&spec, 10_000, |c| crossing_h(c, &bx).unwrap()).unwrap());
    }

    #[test]
    fn f_extremes_and_thresholds_agree_with_sampling() {
        assert_eq!(estimate_f(4, 3, 1.0, 1, 50, 2).unwrap().mean, 1.0);
        assert_eq!(estimate_f(4, 3, 0.0, 1, 50, 2).unwrap().mean, 0.0);
        let bx = Box3::new(0, 6, 0, 4).unwrap();
        let lat = SlabLattice::enclosing(&bx, 1).unwrap();
        let spec = SamplerSpec {
            model: PercolationModel::homogeneous(lat),
            params: ModelParams::homogeneous(0.4).unwrap(),
            seed: 8,
        };
        let a = estimate_f(6, 4, 0.4, 1, 400, 8).unwrap();
        let b = estimate_event(&spec, 400, |c| crossing_h(c, &bx).unwrap()).unwrap();
        assert_eq!(a.successes, b.successes);
    }

    #[test]
    fn corrlen_trivial_cases() {
        assert_eq!(estimate_corrlen(1.0, 0.1, 0, 100, 64, 1).unwrap(), CorrLength::Finite(1));
        assert_eq!(estimate_corrlen(0.0, 0.1, 0, 100, 64, 1).unwrap(), CorrLength::Saturated);
        assert!(estimate_corrlen(0.5, 1.0, 0, 100, 64, 1).is_err());
    }

    #[test]
    fn corrlen_monotone_in_n_max() {
        let small = estimate_corrlen(0.51, 0.1, 0, 200, 4, 5).unwrap();
        assert_eq!(small, CorrLength::Saturated);
        let large = estimate_corrlen(0.8, 0.1, 0, 200, 64, 5).unwrap();
        assert!(large.finite().is_some());
    }

    #[test]
    fn pc_bisection_is_the_median() {
        let t = vec![0.1, 0.2, 0.3, 0.4];
        let p = bisect_half(&t).unwrap();
        assert!(p > 0.2 && p <= 0.2 + 2e-7);
        assert!(matches!(bisect_half(&[f64::NEG_INFINITY; 4]), Err(Error::NonBracketing(_))));
        assert!(estimate_pc(0, &[], 100, 1).is_err());
    }

    #[test]
    fn power_law_recovery() {
        let pts: Vec<(f64, f64)> = [0.02, 0.04, 0.06, 0.1].iter().map(|&x| (x, 7.0 * f64::powf(x, -1.5))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.c1 - 7.0).abs() < 1e-9 && (fit.c2 - 1.5).abs() < 1e-9 && (fit.r_squared - 1.0).abs() < 1e-9);
        assert!(fit_power_law(&pts[..1]).is_err());
        assert!(fit_power_law(&[(0.1, 1.0), (0.2, f64::INFINITY), (0.3, 2.0)]).is_err());
    }

    #[test]
    fn russo_at_p_one_has_no_pivotals() {
        let s = russo_sum(1.0, 2, 0, None, 20, 1).unwrap();
        assert_eq!(s.all_edges.mean, 0.0);
        let r = crate::lattice::proof_regions(12).unwrap().r_double_prime;
        let s = russo_sum(0.5, 12, 0, Some(&r), 200, 1).unwrap();
        assert!(s.region.mean <= s.all_edges.mean);
        assert!(russo_consistency(0.995, 0.01, 4, 0, 20, 1).is_err());
    }
}
