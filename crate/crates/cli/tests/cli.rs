use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use slabperc_cli::{run, schema, Kind, RunConfig, RunManifest};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slabperc"))
}

fn slabperc(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, v.to_string()).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn config(kind: Kind, out: &Path, params: Value) -> RunConfig {
    let mut v = json!({ "kind": kind, "out": out, "params": params });
    v["replicas"] = json!(400);
    RunConfig::from_json(&v.to_string()).unwrap()
}

/// Crossing probability of `[0, n] x [0, m]` (k = 0) from an edge list built
/// here and a flood fill per subset.
fn brute_force_crossing(n: usize, m: usize, p: f64) -> f64 {
    let id = |x: usize, y: usize| y * (n + 1) + x;
    let mut edges = Vec::new();
    for y in 0..=m {
        for x in 0..=n {
            if x < n {
                edges.push((id(x, y), id(x + 1, y)));
            }
            if y < m {
                edges.push((id(x, y), id(x, y + 1)));
            }
        }
    }
    let e = edges.len();
    let mut total = 0.0;
    for mask in 0u64..1 << e {
        let mut reached = vec![false; (n + 1) * (m + 1)];
        let mut stack: Vec<usize> = (0..=m).map(|y| id(0, y)).collect();
        stack.iter().for_each(|&v| reached[v] = true);
        while let Some(v) = stack.pop() {
            for (i, &(a, b)) in edges.iter().enumerate() {
                if mask >> i & 1 == 1 && (a == v || b == v) {
                    let w = if a == v { b } else { a };
                    if !reached[w] {
                        reached[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        if (0..=m).any(|y| reached[id(n, y)]) {
            let open = mask.count_ones() as i32;
            total += p.powi(open) * (1.0 - p).powi(e as i32 - open);
        }
    }
    total
}

#[test]
fn oracle_table_matches_independent_enumeration() {
    let tmp = TempDir::new().unwrap();
    for (n, m) in [(1usize, 1usize), (2, 1), (2, 2), (3, 2)] {
        let out = tmp.path().join(format!("oracle-{n}-{m}"));
        let cfg = config(Kind::Oracle, &out, json!({ "n": n, "m": m, "ps": [0.0, 0.1, 0.35, 0.5, 0.8, 1.0] }));
        run(&cfg).unwrap();
        let (header, rows) = read_csv(&out.join("results.csv"));
        let (pc, prc, dc, pivc) =
            (column(&header, "p"), column(&header, "probability"), column(&header, "derivative"), column(&header, "expected_pivotals"));
        for row in rows {
            let p: f64 = row[pc].parse().unwrap();
            let prob: f64 = row[prc].parse().unwrap();
            assert!((prob - brute_force_crossing(n, m, p)).abs() < 1e-12, "{n}x{m} at p = {p}");
            let d: f64 = row[dc].parse().unwrap();
            let piv: f64 = row[pivc].parse().unwrap();
            assert!((d - piv).abs() < 1e-9, "Russo identity fails for {n}x{m} at p = {p}: {d} vs {piv}");
        }
    }
}

#[test]
fn oracle_unit_square_closed_form() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    run(&config(Kind::Oracle, &out, json!({ "n": 1, "m": 1, "ps": [0.3] }))).unwrap();
    let (_, rows) = read_csv(&out.join("results.csv"));
    let v: Vec<f64> = rows[0].iter().map(|s| s.parse().unwrap()).collect();
    // Crossing iff one of the two horizontal edges is open.
    assert!((v[1] - (1.0 - 0.7f64.powi(2))).abs() < 1e-12);
    assert!((v[2] - 2.0 * 0.7).abs() < 1e-12);
    assert!((v[3] - 2.0 * 0.7).abs() < 1e-12);
    let (_, poly) = read_csv(&out.join("polynomial.csv"));
    let configurations: u64 = poly.iter().map(|r| r[1].parse::<u64>().unwrap()).sum();
    assert_eq!(configurations, 16);
}

#[test]
fn corrlen_at_p_one_is_a_single_row_of_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("c");
    run(&config(Kind::Corrlen, &out, json!({ "p": 1.0 }))).unwrap();
    let (header, rows) = read_csv(&out.join("results.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][column(&header, "corrlen")], "1");
    assert_eq!(rows[0][column(&header, "saturated")], "0");
}

#[test]
fn reruns_and_thread_counts_give_identical_digests() {
    let tmp = TempDir::new().unwrap();
    let params = json!({ "n": 6, "m": 4, "k": 1, "environment": "renewal", "phi": 2.5, "ps": [0.3, 0.5] });
    let mut digests = Vec::new();
    for (i, threads) in [1usize, 2, 1].into_iter().enumerate() {
        let mut cfg = config(Kind::Crossing, &tmp.path().join(format!("run{i}")), params.clone());
        cfg.threads = threads;
        let (dir, manifest) = run(&cfg).unwrap();
        digests.push((manifest.outputs.clone(), fs::read(dir.join("results.csv")).unwrap()));
    }
    assert!(digests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn every_kind_writes_its_schema_and_a_manifest() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (Kind::Env, json!({ "n": 8 })),
        (Kind::Sample, json!({ "n": 4, "environment": "renewal" })),
        (Kind::Crossing, json!({ "n": 4 })),
        (Kind::Corrlen, json!({ "p": 0.7, "n_max": 32 })),
        (Kind::Pc, json!({ "sizes": [4, 8] })),
        (Kind::Russo, json!({ "n": 4 })),
        (Kind::Renorm, json!({ "n": 2, "cw": 2, "ch": 2, "environment": "renewal", "psi": 0.1 })),
        (Kind::Multiscale, json!({ "levels": 1, "n1": 20 })),
        (Kind::Oracle, json!({ "n": 2, "m": 1 })),
    ];
    for (kind, params) in cases {
        let out = tmp.path().join(kind.name());
        let mut cfg = config(kind, &out, params);
        cfg.replicas = 50;
        let (_, manifest) = run(&cfg).unwrap();
        let (header, rows) = read_csv(&out.join("results.csv"));
        assert_eq!(header, schema(kind), "{}", kind.name());
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.len() == header.len()));
        let text = fs::read_to_string(out.join("manifest.json")).unwrap();
        let on_disk: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(on_disk, manifest);
        assert_eq!(on_disk.config, cfg);
        for (name, digest) in &manifest.outputs {
            assert_eq!(&slabperc_cli::sha256_hex(&fs::read(out.join(name)).unwrap()), digest);
        }
    }
}

#[test]
fn schema_document_lists_every_header() {
    let doc = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/csv-schema.md")).unwrap();
    for kind in Kind::ALL.into_iter().filter(|&k| k != Kind::Sweep) {
        let section = doc
            .split(&format!("## {}\n", kind.name()))
            .nth(1)
            .unwrap_or_else(|| panic!("no section for {}", kind.name()));
        let block = section.split("```\n").nth(1).unwrap();
        let line = block.lines().next().unwrap();
        assert_eq!(line, schema(kind).join(","), "{}", kind.name());
    }
}

fn sweep_config(out: &Path, kind: Kind, grid: Value, params: Value, replicas: u64) -> RunConfig {
    let v = json!({
        "kind": "sweep",
        "replicas": replicas,
        "out": out,
        "params": params,
        "sweep": { "kind": kind, "grid": grid },
    });
    RunConfig::from_json(&v.to_string()).unwrap()
}

#[test]
fn corrlen_sweep_is_sorted_and_monotone() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    let grid = json!([{ "name": "p", "values": [0.6, 0.52, 0.58, 0.54, 0.56] }]);
    run(&sweep_config(&out, Kind::Corrlen, grid, json!({ "n_max": 256 }), 300)).unwrap();
    let (header, rows) = read_csv(&out.join("results.csv"));
    assert_eq!(header[0], "grid.p");
    let ps: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(ps.windows(2).all(|w| w[0] < w[1]));
    let lc = column(&header, "corrlen");
    let ls: Vec<usize> = rows.iter().map(|r| r[lc].parse().unwrap()).collect();
    assert!(ls.windows(2).all(|w| w[0] >= w[1]), "{ls:?}");
}

#[test]
fn one_point_sweep_equals_a_plain_run() {
    let tmp = TempDir::new().unwrap();
    let params = json!({ "n": 5, "m": 3, "k": 1 });
    let sweep = sweep_config(
        &tmp.path().join("sweep"),
        Kind::Crossing,
        json!([{ "name": "p", "values": [0.45] }]),
        params.clone(),
        500,
    );
    run(&sweep).unwrap();
    let mut plain = config(Kind::Crossing, &tmp.path().join("plain"), params);
    plain.params.p = 0.45;
    plain.replicas = 500;
    run(&plain).unwrap();
    let (sh, srows) = read_csv(&tmp.path().join("sweep/results.csv"));
    let (ph, prows) = read_csv(&tmp.path().join("plain/results.csv"));
    assert_eq!(&sh[1..], &ph[..]);
    assert_eq!(srows.len(), 1);
    assert_eq!(&srows[0][1..], &prows[0][..]);
}

#[test]
fn good_interval_sweep_reports_bound_next_to_frequency() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    let grid = json!([
        { "name": "n", "values": [16, 64] },
        { "name": "lambda", "values": [0.5, 0.75] },
    ]);
    run(&sweep_config(&out, Kind::Env, grid, json!({ "phi": 3.0 }), 2000)).unwrap();
    let (header, rows) = read_csv(&out.join("results.csv"));
    assert_eq!(rows.len(), 4);
    let (bc, gc, sc) = (column(&header, "bound"), column(&header, "good_fraction"), column(&header, "std_error"));
    for row in rows {
        let n: f64 = row[0].parse().unwrap();
        let lambda: f64 = row[1].parse().unwrap();
        let expected = (1.0 - 3.0 * n.powf(1.0 - 3.0 * lambda)).max(0.0);
        let bound: f64 = row[bc].parse().unwrap();
        assert!((bound - expected).abs() < 1e-12);
        let freq: f64 = row[gc].parse().unwrap();
        let se: f64 = row[sc].parse().unwrap();
        assert!(freq >= bound - 3.0 * se - 1e-12, "n = {n}, lambda = {lambda}: {freq} < {bound}");
    }
}

#[test]
fn crn_sweep_crossing_is_monotone_in_p() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    let grid = json!([{ "name": "p", "values": [0.3, 0.4, 0.5, 0.6] }]);
    let params = json!({ "n": 8, "environment": "renewal", "phi": 2.5, "q": 0.9 });
    run(&sweep_config(&out, Kind::Crossing, grid, params, 500)).unwrap();
    let (header, rows) = read_csv(&out.join("results.csv"));
    let sc = column(&header, "successes");
    let s: Vec<u64> = rows.iter().map(|r| r[sc].parse().unwrap()).collect();
    assert!(s.windows(2).all(|w| w[0] <= w[1]), "{s:?}");
}

#[test]
fn cli_flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({ "seed": 3, "replicas": 10, "params": { "n": 2, "m": 1 } }));
    let o = slabperc(
        tmp.path(),
        &["oracle", "--config", path.to_str().unwrap(), "--seed", "9", "--set", "n=3", "--out", "x", "--print-config"],
    );
    assert!(o.status.success());
    let cfg: RunConfig = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((cfg.kind, cfg.seed, cfg.replicas, cfg.params.n, cfg.params.height()), (Kind::Oracle, 9, 10, 3, 1));
    assert_eq!(cfg.out, Some(PathBuf::from("x")));
}

fn error_report(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let bad_kind = write_config(tmp.path(), "k.json", &json!({ "kind": "pc" }));
    let unknown = write_config(tmp.path(), "u.json", &json!({ "params": { "bogus": 1 } }));
    let empty_grid = write_config(tmp.path(), "g.json", &json!({ "sweep": { "kind": "oracle", "grid": [] } }));
    let empty_axis =
        write_config(tmp.path(), "a.json", &json!({ "sweep": { "kind": "oracle", "grid": [{ "name": "p", "values": [] }] } }));
    let cases: Vec<Vec<&str>> = vec![
        vec!["oracle", "--config", bad_kind.to_str().unwrap()],
        vec!["oracle", "--config", unknown.to_str().unwrap()],
        vec!["sweep", "--config", empty_grid.to_str().unwrap()],
        vec!["sweep", "--config", empty_axis.to_str().unwrap()],
        vec!["sweep"],
        vec!["crossing", "--set", "p=1.5", "--out", "bad-p"],
        vec!["renorm", "--set", "n=3", "--out", "odd-n"],
        vec!["oracle", "--config", "missing.json"],
    ];
    for args in cases {
        let o = slabperc(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let report = error_report(&o);
        assert_eq!(report["kind"], "config", "{args:?}");
        assert_eq!(report["exit_code"], 2);
    }
}

#[test]
fn resource_caps_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    for args in [
        vec!["oracle", "--set", "n=4", "--set", "m=4"],
        vec!["crossing", "--set", "n=1000", "--set", "max_lattice_edges=1000"],
    ] {
        let o = slabperc(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        assert_eq!(error_report(&o)["kind"], "resource");
    }
}

#[test]
fn output_directories_are_not_shared_between_runs() {
    let tmp = TempDir::new().unwrap();
    let first = slabperc(tmp.path(), &["oracle", "--set", "n=2", "--set", "m=1", "--out", "o"]);
    assert!(first.status.success());
    let digest = fs::read(tmp.path().join("o/results.csv")).unwrap();
    let again = slabperc(tmp.path(), &["oracle", "--set", "n=2", "--set", "m=1", "--out", "o", "--threads", "1"]);
    assert!(again.status.success());
    assert_eq!(fs::read(tmp.path().join("o/results.csv")).unwrap(), digest);
    let other = slabperc(tmp.path(), &["oracle", "--set", "n=1", "--set", "m=1", "--out", "o"]);
    assert_eq!(other.status.code(), Some(2));
    assert_eq!(fs::read(tmp.path().join("o/results.csv")).unwrap(), digest);

    fs::create_dir(tmp.path().join("busy")).unwrap();
    fs::write(tmp.path().join("busy/notes.txt"), "keep").unwrap();
    let busy = slabperc(tmp.path(), &["oracle", "--set", "n=1", "--set", "m=1", "--out", "busy"]);
    assert_eq!(busy.status.code(), Some(2));
}

#[test]
fn default_output_directory_depends_on_the_config() {
    let tmp = TempDir::new().unwrap();
    for n in ["1", "2", "1"] {
        assert!(slabperc(tmp.path(), &["oracle", "--set", &format!("n={n}"), "--set", "m=1"]).status.success());
    }
    let runs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 2);
}

#[test]
fn environment_files_feed_later_runs() {
    let tmp = TempDir::new().unwrap();
    let env_run = slabperc(tmp.path(), &["env", "--set", "n=4", "--set", "window=64", "--replicas", "20", "--out", "e"]);
    assert!(env_run.status.success());
    let env_path = tmp.path().join("e/environment.txt");
    let env = slabperc::Environment::from_text(&fs::read_to_string(&env_path).unwrap()).unwrap();
    assert_eq!(env.window_x(), 64);

    let set = format!("env_file={}", env_path.display());
    let o = slabperc(tmp.path(), &["sample", "--set", "n=8", "--set", &set, "--replicas", "5", "--out", "s"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: RunManifest = serde_json::from_slice(&fs::read(tmp.path().join("s/manifest.json")).unwrap()).unwrap();
    let digest = slabperc_cli::sha256_hex(&fs::read(&env_path).unwrap());
    assert_eq!(manifest.inputs.values().next(), Some(&digest));

    let bytes = fs::read(tmp.path().join("s/sample.bin")).unwrap();
    let (header, config) = slabperc::BondConfiguration::from_dump(&bytes).unwrap();
    assert_eq!((header.extent_x, header.extent_y, header.replica), (9, 9, 0));
    let (h, rows) = read_csv(&tmp.path().join("s/results.csv"));
    assert_eq!(rows[0][column(&h, "open_edges")], config.open_count().to_string());
    let enhanced: usize = rows[0][column(&h, "enhanced_edges")].parse().unwrap();
    let columns = (0..=8u64).filter(|&x| env.contains(x)).count();
    assert!(enhanced >= 8 * columns);
}

#[test]
fn renorm_bitmap_round_trips() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let params = json!({ "n": 4, "cw": 3, "ch": 2, "environment": "renewal", "phi": 2.5, "lambda": 0.6, "p": 0.6 });
    let mut cfg = config(Kind::Renorm, &out, params);
    cfg.replicas = 30;
    run(&cfg).unwrap();
    let (header, sigma) = slabperc::renorm::from_pbm(&fs::read_to_string(out.join("sigma.pbm")).unwrap()).unwrap();
    assert_eq!((header.n, header.seed), (4, cfg.seed));
    assert_eq!((sigma.lattice().extent_x(), sigma.lattice().extent_y()), (3, 2));
    let (h, rows) = read_csv(&out.join("results.csv"));
    assert_eq!(rows.len(), sigma.lattice().edge_count());
    let fc = column(&h, "sigma_frequency");
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r[fc].parse::<f64>().unwrap())));
}
