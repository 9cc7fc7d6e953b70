use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slabperc_cli::{run, CliError, Kind, RunConfig};

#[derive(Parser)]
#[command(name = "slabperc", version, about = "Percolation experiments on slabs with enhanced columns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Renewal environments: good-interval frequency and one sampled environment.
    Env(RunArgs),
    /// Bond configurations on a box.
    Sample(RunArgs),
    /// Crossing probability of a box.
    Crossing(RunArgs),
    /// Correlation length.
    Corrlen(RunArgs),
    /// Square-box crossing point.
    Pc(RunArgs),
    /// Pivotal sum against the finite-difference derivative.
    Russo(RunArgs),
    /// Coarse-grained configuration of a block window.
    Renorm(RunArgs),
    /// Scale hierarchy, parameter conditions and weak-interval frequencies.
    Multiscale(RunArgs),
    /// Cross product of parameter values for another kind.
    Sweep(RunArgs),
    /// Exact crossing polynomial of a small box by enumeration.
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override, as in `--set p=0.6` or `--set multiscale.phi=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (Kind, RunArgs) {
        match self {
            Command::Env(a) => (Kind::Env, a),
            Command::Sample(a) => (Kind::Sample, a),
            Command::Crossing(a) => (Kind::Crossing, a),
            Command::Corrlen(a) => (Kind::Corrlen, a),
            Command::Pc(a) => (Kind::Pc, a),
            Command::Russo(a) => (Kind::Russo, a),
            Command::Renorm(a) => (Kind::Renorm, a),
            Command::Multiscale(a) => (Kind::Multiscale, a),
            Command::Sweep(a) => (Kind::Sweep, a),
            Command::Oracle(a) => (Kind::Oracle, a),
        }
    }
}

fn resolve(kind: Kind, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let obj = value
                .as_object_mut()
                .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
            let named = serde_json::to_value(kind).expect("kind serializes");
            match obj.get("kind") {
                Some(k) if *k != named => {
                    return Err(CliError::Config(format!("config kind {k} does not match subcommand {}", kind.name())))
                }
                _ => obj.insert("kind".into(), named),
            };
            RunConfig::from_json(&value.to_string())?
        }
        None => RunConfig::new(kind),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    for assignment in &args.set {
        cfg.set_param(assignment)?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let result = resolve(kind, &args).and_then(|cfg| {
        if args.print_config {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            return Ok(());
        }
        let (dir, manifest) = run(&cfg)?;
        println!("{}", dir.join("results.csv").display());
        println!("wall time {:.3}s", manifest.wall_time_s);
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
