use std::fs;

use rayon::prelude::*;
use serde_json::Value;
use slabperc::connectivity::{crossing, crossing_h, crossing_v, Orientation};
use slabperc::environment::{classify_intervals, generate_environment_stream, good_probability_bound};
use slabperc::estimators::{
    corrlen_curve, estimate_event, estimate_pc, russo_consistency, CorrLength, McEstimate, SamplerSpec,
};
use slabperc::multiscale::{
    build_heights, build_scales, feasibility_and_selection, label_hierarchy, validate_params, weak_fraction,
    HierarchyExport,
};
use slabperc::renorm::{build_sigma, thin_sigma, to_pbm, PbmHeader};
use slabperc::rng::derive;
use slabperc::sampler::DumpHeader;
use slabperc::{
    BondConfiguration, Box3, Environment, ModelParams, PercolationModel, RenewalParams, RenormSpec, SlabLattice,
};

use crate::config::{with_param, EnvSource, Kind, Params, RunConfig, Sweep};
use crate::CliError;

/// Label separating environment randomness from configuration randomness.
const ENV_LABEL: u64 = 0x656e76;

/// Largest region the oracle can enumerate regardless of `max_edges`.
const ORACLE_HARD_CAP: usize = 30;

/// Column names of `results.csv` for each kind; a sweep prepends one
/// `grid.<name>` column per axis to the schema of the swept kind.
pub fn schema(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Env => &["n", "lambda", "phi", "replicas", "good", "good_fraction", "std_error", "bound"],
        Kind::Sample => &["replica", "open_edges", "enhanced_edges", "enhanced_open", "crossing_h", "crossing_v"],
        Kind::Crossing => &[
            "n", "m", "k", "p", "q", "orientation", "successes", "replicas", "estimate", "std_error", "ci_lo", "ci_hi",
        ],
        Kind::Corrlen => &["p", "tau", "k", "replicas", "n_max", "corrlen", "saturated"],
        Kind::Pc => &["size", "p_cross", "std_error", "spread"],
        Kind::Russo => &[
            "p",
            "h",
            "side",
            "k",
            "replicas",
            "pivotal_sum",
            "pivotal_se",
            "finite_difference",
            "finite_difference_se",
            "z_score",
        ],
        Kind::Renorm => &["x1", "x2", "orientation", "favored", "sigma_frequency", "thinned_frequency", "replicas"],
        Kind::Multiscale => &["level", "scale", "height", "weak_fraction", "std_error", "bound"],
        Kind::Oracle => &["p", "probability", "derivative", "expected_pivotals"],
        Kind::Sweep => &[],
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// An output file besides `results.csv`.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: &str, bytes: impl Into<Vec<u8>>) -> Self {
        Self { name: name.to_string(), bytes: bytes.into() }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub results: Table,
    pub extra: Vec<Artifact>,
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn orientation_name(o: Orientation) -> &'static str {
    match o {
        Orientation::Horizontal => "horizontal",
        Orientation::Vertical => "vertical",
    }
}

fn estimate_cells(e: &McEstimate) -> Vec<String> {
    vec![
        e.successes.to_string(),
        e.replicas.to_string(),
        f(e.mean),
        f(e.std_error()),
        f(e.ci_lo),
        f(e.ci_hi),
    ]
}

fn check_lattice(lattice: &SlabLattice, p: &Params) -> Result<(), CliError> {
    if lattice.edge_count() > p.max_lattice_edges {
        return Err(CliError::Resource(format!(
            "lattice has {} edges, above max_lattice_edges = {}",
            lattice.edge_count(),
            p.max_lattice_edges
        )));
    }
    Ok(())
}

fn box_lattice(w: usize, h: usize, k: usize, p: &Params) -> Result<SlabLattice, CliError> {
    let lattice = SlabLattice::new(w + 1, h + 1, k)?;
    check_lattice(&lattice, p)?;
    Ok(lattice)
}

/// The environment named by `p`, covering at least `window` columns.
pub fn environment(p: &Params, seed: u64, window: u64) -> Result<Environment, CliError> {
    if let Some(path) = &p.env_file {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let env = Environment::from_text(&text)?;
        if env.window_x() < window {
            return Err(CliError::Config(format!(
                "environment file covers {} columns, {window} needed",
                env.window_x()
            )));
        }
        return Ok(env);
    }
    match p.environment {
        EnvSource::None => Ok(Environment::empty(window)),
        EnvSource::Renewal => {
            let renewal = RenewalParams::new(p.phi, derive(seed, ENV_LABEL))?;
            Ok(generate_environment_stream(&renewal, window, 0)?)
        }
    }
}

/// Runs one experiment in memory.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.kind {
        Kind::Env => run_env(cfg),
        Kind::Sample => run_sample(cfg),
        Kind::Crossing => run_crossing(cfg),
        Kind::Corrlen => run_corrlen(cfg),
        Kind::Pc => run_pc(cfg),
        Kind::Russo => run_russo(cfg),
        Kind::Renorm => run_renorm(cfg),
        Kind::Multiscale => run_multiscale(cfg),
        Kind::Oracle => run_oracle(cfg),
        Kind::Sweep => {
            let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("kind sweep needs a sweep section".into()))?;
            run_sweep(cfg, sweep)
        }
    }
}

fn run_env(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    if p.n == 0 {
        return Err(CliError::Config("n must be positive".into()));
    }
    let renewal = RenewalParams::new(p.phi, derive(cfg.seed, ENV_LABEL))?;
    let interval = 2 * p.n as u64;
    let flags = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let env = generate_environment_stream(&renewal, interval, r)?;
            Ok(classify_intervals(&env, p.n, p.lambda)?.flags[0])
        })
        .collect::<slabperc::Result<Vec<bool>>>()?;
    let good = flags.iter().filter(|&&g| g).count() as u64;
    let est = McEstimate::from_counts(good, cfg.replicas, cfg.seed)?;
    let bound = good_probability_bound(p.n, p.lambda, p.phi).map(f).unwrap_or_default();
    let mut results = Table::new(schema(Kind::Env));
    results.push(vec![
        p.n.to_string(),
        f(p.lambda),
        f(p.phi),
        cfg.replicas.to_string(),
        good.to_string(),
        f(est.mean),
        f(est.std_error()),
        bound,
    ]);

    let window = p.window.unwrap_or(8 * interval);
    let env = generate_environment_stream(&renewal, window, 0)?;
    let classification = classify_intervals(&env, p.n, p.lambda)?;
    let mut intervals = Table::new(&["interval", "gap", "good"]);
    for (i, (&gap, &good)) in classification.gaps.iter().zip(&classification.flags).enumerate() {
        intervals.push(vec![i.to_string(), gap.to_string(), (good as u8).to_string()]);
    }
    Ok(Outcome {
        results,
        extra: vec![
            Artifact::new("environment.txt", env.to_text()),
            Artifact::new("intervals.csv", intervals.to_csv()),
        ],
    })
}

struct BoxModel {
    model: PercolationModel,
    bx: Box3,
}

fn box_model(cfg: &RunConfig) -> Result<BoxModel, CliError> {
    let p = &cfg.params;
    let (n, m) = (p.n, p.height());
    if n == 0 || m == 0 {
        return Err(CliError::Config("box sides n and m must be positive".into()));
    }
    let lattice = box_lattice(n, m, p.k, p)?;
    let env = environment(p, cfg.seed, p.window.unwrap_or(n as u64 + 1))?;
    let model = PercolationModel::new(lattice, &env, p.rule)?;
    let bx = Box3::new(0, n as i64, 0, m as i64)?;
    Ok(BoxModel { model, bx })
}

fn run_sample(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let BoxModel { model, bx } = box_model(cfg)?;
    let params = ModelParams::new(p.p, p.q)?;
    let rows = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let c = model.sample_replica(&params, cfg.seed, r);
            let enhanced_open = (0..c.len()).filter(|&e| model.is_enhanced(e) && c.is_open(e)).count();
            Ok(vec![
                r.to_string(),
                c.open_count().to_string(),
                model.enhanced_count().to_string(),
                enhanced_open.to_string(),
                (crossing_h(&c, &bx)? as u8).to_string(),
                (crossing_v(&c, &bx)? as u8).to_string(),
            ])
        })
        .collect::<slabperc::Result<Vec<_>>>()?;
    let mut results = Table::new(schema(Kind::Sample));
    rows.into_iter().for_each(|r| results.push(r));
    let first = model.sample_replica(&params, cfg.seed, 0);
    let dump = first.to_dump(&DumpHeader::new(model.lattice(), cfg.seed, 0, &params));
    Ok(Outcome { results, extra: vec![Artifact::new("sample.bin", dump)] })
}

fn run_crossing(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let BoxModel { model, bx } = box_model(cfg)?;
    let mut results = Table::new(schema(Kind::Crossing));
    for prob in p.p_list() {
        let spec = SamplerSpec { model: model.clone(), params: ModelParams::new(prob, p.q)?, seed: cfg.seed };
        let est = estimate_event(&spec, cfg.replicas, |c| {
            crossing(c, &bx, p.orientation).expect("box lies inside its lattice")
        })?;
        let mut row = vec![p.n.to_string(), p.height().to_string(), p.k.to_string(), f(prob), f(p.q)];
        row.push(orientation_name(p.orientation).to_string());
        row.extend(estimate_cells(&est));
        results.push(row);
    }
    Ok(Outcome { results, extra: Vec::new() })
}

fn run_corrlen(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    box_lattice(2 * p.n_max, p.n_max, p.k, p)?;
    let ps = p.p_list();
    let curve = corrlen_curve(&ps, p.tau, p.k, cfg.replicas, p.n_max, cfg.seed)?;
    let mut results = Table::new(schema(Kind::Corrlen));
    for (&prob, l) in ps.iter().zip(curve) {
        let (value, saturated) = match l {
            CorrLength::Finite(n) => (n.to_string(), "0"),
            CorrLength::Saturated => (String::new(), "1"),
        };
        results.push(vec![
            f(prob),
            f(p.tau),
            p.k.to_string(),
            cfg.replicas.to_string(),
            p.n_max.to_string(),
            value,
            saturated.to_string(),
        ]);
    }
    Ok(Outcome { results, extra: Vec::new() })
}

fn run_pc(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let largest = p.sizes.iter().copied().max().ok_or_else(|| CliError::Config("sizes is empty".into()))?;
    box_lattice(largest, largest, p.k, p)?;
    let est = estimate_pc(p.k, &p.sizes, cfg.replicas, cfg.seed)?;
    let mut results = Table::new(schema(Kind::Pc));
    for s in &est.per_size {
        results.push(vec![s.n.to_string(), f(s.p), f(s.std_error), String::new()]);
    }
    results.push(vec!["pooled".into(), f(est.estimate), String::new(), f(est.spread)]);
    Ok(Outcome { results, extra: Vec::new() })
}

fn run_russo(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    box_lattice(p.n, p.n, p.k, p)?;
    let r = russo_consistency(p.p, p.h, p.n, p.k, cfg.replicas, cfg.seed)?;
    let mut results = Table::new(schema(Kind::Russo));
    results.push(vec![
        f(p.p),
        f(p.h),
        p.n.to_string(),
        p.k.to_string(),
        cfg.replicas.to_string(),
        f(r.sum.all_edges.mean),
        f(r.sum.all_edges.std_error),
        f(r.finite_difference),
        f(r.finite_difference_se),
        f(r.z_score()),
    ]);
    Ok(Outcome { results, extra: Vec::new() })
}

fn run_renorm(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    if p.cw == 0 || p.ch == 0 {
        return Err(CliError::Config("coarse window must be nonempty".into()));
    }
    box_lattice(2 * p.n * p.cw, 2 * p.n * p.ch, p.k, p)?;
    let env = environment(p, cfg.seed, p.window.unwrap_or(2 * p.n as u64 * (p.cw as u64 + 1)))?;
    let spec = RenormSpec::new(p.n, p.lambda, p.k, p.cw, p.ch, &env, p.rule)?;
    let params = ModelParams::new(p.p, p.q)?;
    if let Some(psi) = p.psi {
        if !(psi > 0.0 && psi < 0.5) {
            return Err(CliError::Config(format!("psi must lie in (0, 1/2), got {psi}")));
        }
    }
    let samples = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let config = spec.model().sample_replica(&params, cfg.seed, r);
            let renorm = build_sigma(&config, &spec)?;
            let thinned = p.psi.map(|psi| thin_sigma(&renorm, psi, cfg.seed, r)).transpose()?;
            Ok((renorm.sigma, thinned))
        })
        .collect::<slabperc::Result<Vec<(BondConfiguration, Option<BondConfiguration>)>>>()?;

    let mut results = Table::new(schema(Kind::Renorm));
    for edge in spec.coarse_edges() {
        let i = spec.coarse_edge_index(&edge)?;
        let open = samples.iter().filter(|(s, _)| s.is_open(i)).count();
        let thinned = match p.psi {
            Some(_) => f(samples.iter().filter(|(_, t)| t.as_ref().is_some_and(|t| t.is_open(i))).count() as f64
                / cfg.replicas as f64),
            None => String::new(),
        };
        results.push(vec![
            edge.x.0.to_string(),
            edge.x.1.to_string(),
            orientation_name(edge.orientation).to_string(),
            (spec.is_favored(&edge) as u8).to_string(),
            f(open as f64 / cfg.replicas as f64),
            thinned,
            cfg.replicas.to_string(),
        ]);
    }
    let (sigma, thinned) = &samples[0];
    let header = PbmHeader { n: p.n, lambda: p.lambda, seed: cfg.seed, p: p.p, q: p.q };
    let pbm = to_pbm(thinned.as_ref().unwrap_or(sigma), &header);
    Ok(Outcome { results, extra: vec![Artifact::new("sigma.pbm", pbm)] })
}

fn run_multiscale(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let mp = &p.multiscale;
    let mut conditions = Table::new(&["name", "pass", "margin"]);
    for c in validate_params(mp).conditions {
        conditions.push(vec![c.name.clone(), (c.pass as u8).to_string(), f(c.margin)]);
    }
    let scales = build_scales(mp.l0, mp.gamma, p.levels)?;
    let heights = build_heights(&scales, mp.mu)?;
    let interval = 2 * mp.n as u64;
    let top_window = (p.top.max(1) as u64)
        .checked_mul(scales[p.levels])
        .and_then(|w| w.checked_mul(interval))
        .filter(|&w| w <= p.max_lattice_edges as u64)
        .ok_or_else(|| CliError::Resource(format!("level {} needs more than {} columns", p.levels, p.max_lattice_edges)))?;
    let renewal = RenewalParams::new(mp.phi, derive(cfg.seed, ENV_LABEL))?;

    let mut results = Table::new(schema(Kind::Multiscale));
    for (m, &scale) in scales.iter().enumerate() {
        let est = weak_fraction(&scales, m, mp.n, mp.lambda, cfg.replicas, cfg.seed, |r| {
            generate_environment_stream(&renewal, scale * interval, r)
        })?;
        results.push(vec![
            m.to_string(),
            scale.to_string(),
            format!("{:e}", heights.h(m)),
            f(est.mean),
            f(est.std_error()),
            f((scale as f64).powf(-mp.alpha)),
        ]);
    }

    let env = generate_environment_stream(&renewal, top_window, 0)?;
    let classification = classify_intervals(&env, mp.n, mp.lambda)?;
    let labels = label_hierarchy(&classification, &scales, p.top.max(1))?;
    let mut extra = vec![
        Artifact::new("conditions.csv", conditions.to_csv()),
        Artifact::new("hierarchy.json", HierarchyExport::new(&scales, &heights, &labels).to_json()),
    ];
    if let Some(n1) = p.n1 {
        let selection = feasibility_and_selection(mp, n1, p.l0_cap);
        let json = serde_json::to_string_pretty(&selection).expect("selection serializes");
        extra.push(Artifact::new("selection.json", json));
    }
    Ok(Outcome { results, extra })
}

/// `p^j (1-p)^(e-j)`.
fn bernstein(j: usize, e: usize, p: f64) -> f64 {
    p.powi(j as i32) * (1.0 - p).powi((e - j) as i32)
}

/// Derivative of [`bernstein`] in `p`.
fn bernstein_derivative(j: usize, e: usize, p: f64) -> f64 {
    let mut d = 0.0;
    if j > 0 {
        d += j as f64 * p.powi(j as i32 - 1) * (1.0 - p).powi((e - j) as i32);
    }
    if j < e {
        d -= (e - j) as f64 * p.powi(j as i32) * (1.0 - p).powi((e - j) as i32 - 1);
    }
    d
}

fn run_oracle(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = &cfg.params;
    let (n, m) = (p.n, p.height());
    if n == 0 || m == 0 {
        return Err(CliError::Config("box sides n and m must be positive".into()));
    }
    let lattice = SlabLattice::new(n + 1, m + 1, p.k)?;
    let e = lattice.edge_count();
    let cap = p.max_edges.min(ORACLE_HARD_CAP);
    if e > cap {
        return Err(CliError::Resource(format!("oracle region has {e} edges, above the enumeration cap {cap}")));
    }
    let bx = Box3::new(0, n as i64, 0, m as i64)?;
    let crosses: Vec<bool> = (0..1u64 << e)
        .into_par_iter()
        .map(|mask| crossing(&BondConfiguration::from_mask(lattice, mask), &bx, p.orientation))
        .collect::<slabperc::Result<_>>()?;

    let mut binomial = vec![0u64; e + 1];
    let mut crossing_count = vec![0u64; e + 1];
    let mut pivotal_count = vec![0u64; e + 1];
    for (mask, &c) in crosses.iter().enumerate() {
        let j = mask.count_ones() as usize;
        binomial[j] += 1;
        crossing_count[j] += c as u64;
        pivotal_count[j] += (0..e).filter(|&b| crosses[mask | 1 << b] != crosses[mask & !(1 << b)]).count() as u64;
    }

    let ps = p.ps.clone().unwrap_or_else(|| (0..=20).map(|i| i as f64 / 20.0).collect());
    let mut results = Table::new(schema(Kind::Oracle));
    for prob in ps {
        if !(0.0..=1.0).contains(&prob) {
            return Err(CliError::Config(format!("p must lie in [0, 1], got {prob}")));
        }
        let (mut pr, mut d, mut piv) = (0.0, 0.0, 0.0);
        for j in 0..=e {
            pr += crossing_count[j] as f64 * bernstein(j, e, prob);
            d += crossing_count[j] as f64 * bernstein_derivative(j, e, prob);
            piv += pivotal_count[j] as f64 * bernstein(j, e, prob);
        }
        results.push(vec![f(prob), f(pr), f(d), f(piv)]);
    }
    let mut polynomial = Table::new(&["open_edges", "configurations", "crossing", "pivotal_pairs"]);
    for j in 0..=e {
        polynomial.push(vec![
            j.to_string(),
            binomial[j].to_string(),
            crossing_count[j].to_string(),
            pivotal_count[j].to_string(),
        ]);
    }
    Ok(Outcome { results, extra: vec![Artifact::new("polynomial.csv", polynomial.to_csv())] })
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn run_sweep(cfg: &RunConfig, sweep: &Sweep) -> Result<Outcome, CliError> {
    let mut axes = sweep.grid.clone();
    for axis in &mut axes {
        if axis.values.iter().all(Value::is_number) {
            axis.values.sort_by(|a, b| a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap()));
        }
    }
    let mut header: Vec<String> = axes.iter().map(|a| format!("grid.{}", a.name)).collect();
    header.extend(schema(sweep.kind).iter().map(|s| s.to_string()));
    let mut results = Table { header, rows: Vec::new() };

    let total: usize = axes.iter().map(|a| a.values.len()).product();
    for i in 0..total {
        let mut rest = i;
        let mut point = vec![Value::Null; axes.len()];
        for (slot, axis) in point.iter_mut().zip(&axes).rev() {
            *slot = axis.values[rest % axis.values.len()].clone();
            rest /= axis.values.len();
        }
        let mut params = cfg.params.clone();
        for (axis, value) in axes.iter().zip(&point) {
            params = with_param(&params, &axis.name, value.clone())?;
        }
        let sub = RunConfig {
            kind: sweep.kind,
            seed: if sweep.crn { cfg.seed } else { derive(cfg.seed, i as u64) },
            replicas: cfg.replicas,
            threads: cfg.threads,
            out: None,
            params,
            sweep: None,
        };
        for row in execute(&sub)?.results.rows {
            let mut full: Vec<String> = point.iter().map(cell).collect();
            full.extend(row);
            results.push(full);
        }
    }
    Ok(Outcome { results, extra: Vec::new() })
}
