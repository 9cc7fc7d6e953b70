//! The random environment: a stationary discrete renewal process selecting
//! enhanced columns, and the good/bad classification of length-`2n` intervals.
//!
//! Inter-arrival times are drawn as `ceil(V^(-1/phi))` with `V` uniform, which
//! gives `P(xi > t) = t^(-phi)` for every integer `t >= 1`. The stationary
//! delay `U` has `P(U = k) = P(xi > k) / E(xi)` with `E(xi) = 1 + zeta(phi)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng;

/// Hurwitz zeta `sum_{j >= 0} (a + j)^(-s)` for `s > 1`, `a > 0`, by
/// Euler-Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    debug_assert!(s > 1.0 && a > 0.0);
    // B_{2m} / (2m)!
    const COEF: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
    ];
    let direct = if a < 12.0 { (12.0 - a).ceil() as usize } else { 0 };
    let mut sum = 0.0;
    for j in 0..direct {
        sum += (a + j as f64).powf(-s);
    }
    let b = a + direct as f64;
    sum += b.powf(1.0 - s) / (s - 1.0) + 0.5 * b.powf(-s);
    // rising factorial s (s+1) ... (s + 2m - 2) times b^(-s-2m+1)
    let mut fact = s;
    let mut pow = b.powf(-s - 1.0);
    for (m, c) in COEF.iter().enumerate() {
        sum += c * fact * pow;
        let q = (s + 2.0 * m as f64 + 1.0) * (s + 2.0 * m as f64 + 2.0);
        fact *= q;
        pow /= b * b;
    }
    sum
}

/// Riemann zeta for `s > 1`.
pub fn zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

/// Parameters of the renewal environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalParams {
    /// Tail exponent; `P(xi > t) = t^(-phi)` at integers.
    pub phi: f64,
    pub master_seed: u64,
}

impl RenewalParams {
    pub fn new(phi: f64, master_seed: u64) -> Result<Self> {
        if !(phi > 1.0) || !phi.is_finite() {
            return param(format!("tail exponent phi must exceed 1, got {phi}"));
        }
        Ok(Self { phi, master_seed })
    }

    /// `E(xi) = 1 + zeta(phi)`.
    pub fn mean_inter_arrival(&self) -> f64 {
        1.0 + zeta(self.phi)
    }
}

/// Draws one inter-arrival time `ceil(V^(-1/phi))`.
pub fn sample_xi<R: Rng + ?Sized>(phi: f64, rng: &mut R) -> u64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return xi_from_uniform(phi, v);
        }
    }
}

/// The inter-arrival time for a given uniform draw `v` in `(0, 1)`.
pub fn xi_from_uniform(phi: f64, v: f64) -> u64 {
    let t = v.powf(-1.0 / phi).ceil();
    if t >= u64::MAX as f64 {
        u64::MAX
    } else {
        t as u64
    }
}

const DELAY_TABLE_CAP: usize = 1 << 20;

/// Inverse-CDF sampler for the stationary delay `U`.
///
/// Holds survival values `S(k) = P(U > k)`, grown by doubling on demand. Draws
/// beyond the table cap are resolved by bisection on the exact survival
/// function, so the tail is never truncated.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    phi: f64,
    norm: f64,
    survival: Vec<f64>,
}

impl DelaySampler {
    pub fn new(phi: f64) -> Result<Self> {
        RenewalParams::new(phi, 0)?;
        let mut s = Self { phi, norm: 1.0 + zeta(phi), survival: Vec::new() };
        s.grow_to(64);
        Ok(s)
    }

    /// `P(U > k) = zeta(phi, k + 1) / E(xi)`.
    pub fn survival(&self, k: u64) -> f64 {
        hurwitz_zeta(self.phi, k as f64 + 1.0) / self.norm
    }

    /// `P(U = k)`.
    pub fn mass(&self, k: u64) -> f64 {
        if k == 0 {
            1.0 / self.norm
        } else {
            (k as f64).powf(-self.phi) / self.norm
        }
    }

    fn grow_to(&mut self, len: usize) {
        let start = self.survival.len();
        for k in start..len {
            let v = self.survival(k as u64);
            self.survival.push(v);
        }
    }

    pub fn table_len(&self) -> usize {
        self.survival.len()
    }

    /// The delay for a uniform draw `v` in `[0, 1)`: the least `k` with
    /// `P(U <= k) >= v`. Saturates at `2^62`, far beyond any window.
    pub fn delay_from_uniform(&mut self, v: f64) -> u64 {
        let w = 1.0 - v;
        while *self.survival.last().unwrap() > w && self.survival.len() < DELAY_TABLE_CAP {
            let len = (self.survival.len() * 2).min(DELAY_TABLE_CAP);
            self.grow_to(len);
        }
        if *self.survival.last().unwrap() > w {
            // Beyond the table: S is decreasing, bisect on k.
            let (mut lo, mut hi) = (self.survival.len() as u64 - 1, u64::MAX >> 2);
            if self.survival(hi) > w {
                return hi;
            }
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if self.survival(mid) > w {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return hi;
        }
        self.survival.partition_point(|&s| s > w) as u64
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        let v: f64 = rng.random();
        self.delay_from_uniform(v)
    }
}

/// A source of the delay and inter-arrival times driving the renewal recursion.
pub trait RenewalSource {
    fn delay(&mut self) -> u64;
    fn inter_arrival(&mut self) -> u64;
}

/// The stationary `phi`-renewal process on one random stream.
pub struct PhiRenewal {
    phi: f64,
    delay: DelaySampler,
    rng: ChaCha8Rng,
}

impl PhiRenewal {
    pub fn new(params: &RenewalParams, stream: u64) -> Result<Self> {
        Ok(Self {
            phi: params.phi,
            delay: DelaySampler::new(params.phi)?,
            rng: rng::stream_rng(params.master_seed, stream),
        })
    }
}

impl RenewalSource for PhiRenewal {
    fn delay(&mut self) -> u64 {
        self.delay.sample(&mut self.rng)
    }

    fn inter_arrival(&mut self) -> u64 {
        sample_xi(self.phi, &mut self.rng)
    }
}

/// Arrivals of the environment inside `[0, window_x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    arrivals: Vec<u64>,
    window_x: u64,
    params: Option<RenewalParams>,
    stream: u64,
}

impl Environment {
    /// An environment given by explicit arrivals (sorted and deduplicated).
    pub fn from_arrivals(mut arrivals: Vec<u64>, window_x: u64) -> Result<Self> {
        if window_x == 0 {
            return param("window must be positive");
        }
        arrivals.sort_unstable();
        arrivals.dedup();
        if arrivals.last().is_some_and(|&a| a >= window_x) {
            return param("arrival outside window");
        }
        Ok(Self { arrivals, window_x, params: None, stream: 0 })
    }

    /// No enhanced columns.
    pub fn empty(window_x: u64) -> Self {
        Self { arrivals: Vec::new(), window_x: window_x.max(1), params: None, stream: 0 }
    }

    pub fn arrivals(&self) -> &[u64] {
        &self.arrivals
    }

    pub fn window_x(&self) -> u64 {
        self.window_x
    }

    pub fn params(&self) -> Option<&RenewalParams> {
        self.params.as_ref()
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn contains(&self, x: u64) -> bool {
        self.arrivals.binary_search(&x).is_ok()
    }

    /// Per-column membership flags over the window.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.window_x as usize];
        for &a in &self.arrivals {
            m[a as usize] = true;
        }
        m
    }

    /// Line format: a `#` header with phi, seed, stream and window, then one
    /// arrival per line.
    pub fn to_text(&self) -> String {
        let mut s = match &self.params {
            Some(p) => format!(
                "# phi={} seed={} stream={} window_x={}\n",
                p.phi, p.master_seed, self.stream, self.window_x
            ),
            None => format!("# window_x={}\n", self.window_x),
        };
        for a in &self.arrivals {
            s.push_str(&a.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::Format("missing '#' header".into()))?;
        let (mut phi, mut seed, mut stream, mut window) = (None, None, 0u64, None);
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header field {field:?}")))?;
            let bad = |_| Error::Format(format!("bad value for {k}"));
            match k {
                "phi" => phi = Some(v.parse::<f64>().map_err(|_| Error::Format("bad phi".into()))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(bad)?),
                "stream" => stream = v.parse::<u64>().map_err(bad)?,
                "window_x" => window = Some(v.parse::<u64>().map_err(bad)?),
                _ => return Err(Error::Format(format!("unknown header key {k}"))),
            }
        }
        let window = window.ok_or_else(|| Error::Format("missing window_x".into()))?;
        let mut arrivals = Vec::new();
        for l in lines.filter(|l| !l.trim().is_empty()) {
            arrivals.push(l.trim().parse::<u64>().map_err(|_| Error::Format(format!("bad arrival {l:?}")))?);
        }
        if arrivals.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("arrivals not strictly increasing".into()));
        }
        let mut env = Self::from_arrivals(arrivals, window).map_err(|e| Error::Format(e.to_string()))?;
        if let (Some(phi), Some(seed)) = (phi, seed) {
            env.params = Some(RenewalParams::new(phi, seed).map_err(|e| Error::Format(e.to_string()))?);
            env.stream = stream;
        }
        Ok(env)
    }
}

/// Runs the renewal recursion `eta_0 = U`, `eta_i = eta_{i-1} + xi_i` and keeps
/// the arrivals below `window_x`.
pub fn generate_from_source<S: RenewalSource + ?Sized>(source: &mut S, window_x: u64) -> Result<Environment> {
    if window_x == 0 {
        return param("window must be positive");
    }
    let mut arrivals = Vec::new();
    let mut eta = source.delay();
    while eta < window_x {
        arrivals.push(eta);
        eta = eta.saturating_add(source.inter_arrival().max(1));
    }
    Ok(Environment { arrivals, window_x, params: None, stream: 0 })
}

/// The environment on stream 0 of the master seed.
pub fn generate_environment(params: &RenewalParams, window_x: u64) -> Result<Environment> {
    generate_environment_stream(params, window_x, 0)
}

/// The environment on a given stream; streams are independent replicas.
pub fn generate_environment_stream(params: &RenewalParams, window_x: u64, stream: u64) -> Result<Environment> {
    let mut src = PhiRenewal::new(params, stream)?;
    let mut env = generate_from_source(&mut src, window_x)?;
    env.params = Some(*params);
    env.stream = stream;
    Ok(env)
}

/// Columns selected independently with probability `density`; used as a
/// product-measure reference environment.
pub fn generate_iid_environment(density: f64, seed: u64, stream: u64, window_x: u64) -> Result<Environment> {
    if !(0.0..=1.0).contains(&density) {
        return param("density must lie in [0, 1]");
    }
    let key = rng::stream_key(seed, stream);
    let arrivals = (0..window_x).filter(|&x| rng::counter_uniform(key, x) < density).collect();
    Environment::from_arrivals(arrivals, window_x)
}

/// Good/bad flags for the intervals `I_i = [2 i n, 2 (i + 1) n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalClassification {
    pub n: usize,
    pub lambda: f64,
    /// `true` when the interval is good.
    pub flags: Vec<bool>,
    /// Largest gap `d_i` between consecutive points of
    /// `{2in} ∪ (Λ ∩ I_i) ∪ {2(i+1)n}`.
    pub gaps: Vec<u64>,
}

impl IntervalClassification {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn is_good(&self, i: usize) -> bool {
        self.flags[i]
    }

    /// Whether every interval meeting the columns `[lo, hi]` is good.
    pub fn columns_good(&self, lo: u64, hi: u64) -> bool {
        let len = 2 * self.n as u64;
        let (a, b) = ((lo / len) as usize, (hi / len) as usize);
        b < self.flags.len() && self.flags[a..=b].iter().all(|&f| f)
    }

    pub fn threshold(&self) -> f64 {
        (self.n as f64).powf(self.lambda)
    }
}

/// `d <= n^lambda`, ties resolved up to floating rounding of `n^lambda`.
pub(crate) fn gap_is_good(d: u64, threshold: f64) -> bool {
    (d as f64) <= threshold * (1.0 + 1e-12)
}

pub fn classify_intervals(env: &Environment, n: usize, lambda: f64) -> Result<IntervalClassification> {
    if n == 0 {
        return param("n must be positive");
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return param(format!("lambda must lie in (0, 1), got {lambda}"));
    }
    let len = 2 * n as u64;
    if env.window_x % len != 0 {
        return param(format!("2n = {len} does not divide the window {}", env.window_x));
    }
    let count = (env.window_x / len) as usize;
    let threshold = (n as f64).powf(lambda);
    let mut flags = Vec::with_capacity(count);
    let mut gaps = Vec::with_capacity(count);
    let arr = env.arrivals();
    let mut idx = 0;
    for i in 0..count as u64 {
        let (lo, hi) = (i * len, (i + 1) * len);
        let mut prev = lo;
        let mut d = 0;
        while idx < arr.len() && arr[idx] < hi {
            let a = arr[idx];
            if a >= lo {
                d = d.max(a - prev);
                prev = a;
            }
            idx += 1;
        }
        d = d.max(hi - prev);
        gaps.push(d);
        flags.push(gap_is_good(d, threshold));
    }
    Ok(IntervalClassification { n, lambda, flags, gaps })
}

/// Lower bound `max(0, 1 - 3 n^(1 - phi lambda))` on the probability that an
/// interval is good, with tail constant 1.
///
/// The sampler's tail `P(xi > t)` equals `t^(-phi)` at integers and
/// `floor(t)^(-phi)` in general, so the constant 1 is exact when `n^lambda`
/// is an integer.
pub fn good_probability_bound(n: usize, lambda: f64, phi: f64) -> Result<f64> {
    if !(phi > 2.0) {
        return param(format!("bound requires phi > 2, got {phi}"));
    }
    if !(lambda > 1.0 / phi && lambda < 1.0) {
        return param(format!("bound requires lambda in (1/phi, 1), got {lambda}"));
    }
    if n == 0 {
        return param("n must be positive");
    }
    Ok((1.0 - 3.0 * (n as f64).powf(1.0 - phi * lambda)).max(0.0))
}
