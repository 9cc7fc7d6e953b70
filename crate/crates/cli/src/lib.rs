//! Experiment driver: a JSON run configuration in, `results.csv`, auxiliary
//! artifacts and `manifest.json` out.

pub mod config;
pub mod experiments;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{Kind, Params, RunConfig, Sweep};
pub use experiments::{execute, schema, Outcome, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Resource(_) => "resource",
            CliError::Runtime(_) => "runtime",
            CliError::Io(_) => "io",
        }
    }

    /// One-line JSON error report.
    pub fn report(&self) -> String {
        serde_json::json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

impl From<slabperc::Error> for CliError {
    fn from(e: slabperc::Error) -> Self {
        match e {
            slabperc::Error::Size(_) => CliError::Resource(e.to_string()),
            slabperc::Error::NonBracketing(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Written once per run, after every other output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub artifact_version: String,
    pub wall_time_s: f64,
    /// sha256 of each output file.
    pub outputs: BTreeMap<String, String>,
    /// sha256 of each input file the run read.
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The output directory: `cfg.out`, or `runs/<kind>-<config digest>`.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        let digest = sha256_hex(cfg.identity().to_string().as_bytes());
        PathBuf::from("runs").join(format!("{}-{}", cfg.kind.name(), &digest[..12]))
    })
}

/// Refuses directories holding anything other than an earlier run of the
/// same configuration.
fn claim_dir(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = dir.join("manifest.json");
    if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(|e| io_error(&manifest, e))?;
        let other: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: unreadable manifest: {e}", manifest.display())))?;
        if other.config.identity() != cfg.identity() {
            return Err(CliError::Config(format!("{} holds the output of a different run", dir.display())));
        }
        return Ok(());
    }
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
        if entries.next().is_some() {
            return Err(CliError::Config(format!("{} is not empty and has no manifest", dir.display())));
        }
    }
    Ok(())
}

fn write(dir: &Path, name: &str, bytes: &[u8], digests: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
    digests.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

fn input_digests(cfg: &RunConfig) -> Result<BTreeMap<String, String>, CliError> {
    let mut inputs = BTreeMap::new();
    if let Some(path) = &cfg.params.env_file {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        inputs.insert(path.display().to_string(), sha256_hex(&bytes));
    }
    Ok(inputs)
}

/// Validates `cfg`, runs it on a pool of `cfg.threads` workers and writes
/// the outputs.
pub fn run(cfg: &RunConfig) -> Result<(PathBuf, RunManifest), CliError> {
    cfg.validate()?;
    let dir = output_dir(cfg);
    claim_dir(&dir, cfg)?;
    let inputs = input_digests(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;

    let start = Instant::now();
    let outcome = pool.install(|| execute(cfg))?;
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let mut outputs = BTreeMap::new();
    write(&dir, "results.csv", outcome.results.to_csv().as_bytes(), &mut outputs)?;
    for artifact in &outcome.extra {
        write(&dir, &artifact.name, &artifact.bytes, &mut outputs)?;
    }
    let manifest = RunManifest {
        config: cfg.clone(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
        inputs,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| io_error(&path, e))?;
    Ok((dir, manifest))
}
