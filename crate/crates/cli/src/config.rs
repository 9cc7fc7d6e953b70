use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use slabperc::connectivity::Orientation;
use slabperc::{EnhancementRule, MultiscaleParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Env,
    Sample,
    Crossing,
    Corrlen,
    Pc,
    Russo,
    Renorm,
    Multiscale,
    Sweep,
    Oracle,
}

impl Kind {
    pub const ALL: [Kind; 10] = [
        Kind::Env,
        Kind::Sample,
        Kind::Crossing,
        Kind::Corrlen,
        Kind::Pc,
        Kind::Russo,
        Kind::Renorm,
        Kind::Multiscale,
        Kind::Sweep,
        Kind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Env => "env",
            Kind::Sample => "sample",
            Kind::Crossing => "crossing",
            Kind::Corrlen => "corrlen",
            Kind::Pc => "pc",
            Kind::Russo => "russo",
            Kind::Renorm => "renorm",
            Kind::Multiscale => "multiscale",
            Kind::Sweep => "sweep",
            Kind::Oracle => "oracle",
        }
    }
}

/// Where the enhanced columns come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvSource {
    /// No enhanced columns.
    #[default]
    None,
    /// The renewal process with exponent `phi`.
    Renewal,
}

/// Every experiment parameter. Each kind reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Box width, interval length or block half-size depending on the kind.
    pub n: usize,
    /// Box height; defaults to `n`.
    pub m: Option<usize>,
    pub k: usize,
    pub p: f64,
    /// Opening probability of enhanced edges.
    pub q: f64,
    pub orientation: Orientation,
    pub environment: EnvSource,
    /// Environment text file; takes precedence over `environment`.
    pub env_file: Option<PathBuf>,
    pub phi: f64,
    pub lambda: f64,
    /// Environment window in columns; each kind picks a default.
    pub window: Option<u64>,
    pub rule: EnhancementRule,
    /// A list of `p` values for the kinds that scan `p`.
    pub ps: Option<Vec<f64>>,
    pub tau: f64,
    pub n_max: usize,
    pub sizes: Vec<usize>,
    pub h: f64,
    pub cw: usize,
    pub ch: usize,
    /// Thinning probability for the coarse configuration.
    pub psi: Option<f64>,
    pub multiscale: MultiscaleParams,
    /// Highest multiscale level.
    pub levels: usize,
    /// Number of top-level intervals in the exported hierarchy.
    pub top: usize,
    /// Calibrated `n` for the selection step.
    pub n1: Option<u64>,
    pub l0_cap: u64,
    /// Largest region the oracle enumerates.
    pub max_edges: usize,
    /// Largest lattice any kind may build.
    pub max_lattice_edges: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 16,
            m: None,
            k: 0,
            p: 0.5,
            q: 0.75,
            orientation: Orientation::Horizontal,
            environment: EnvSource::None,
            env_file: None,
            phi: 3.0,
            lambda: 0.5,
            window: None,
            rule: EnhancementRule::SetTheoretic,
            ps: None,
            tau: 0.2,
            n_max: 1024,
            sizes: vec![16, 32, 64],
            h: 0.01,
            cw: 4,
            ch: 4,
            psi: None,
            multiscale: MultiscaleParams::default(),
            levels: 2,
            top: 2,
            n1: None,
            l0_cap: 1 << 20,
            max_edges: 20,
            max_lattice_edges: 1 << 26,
        }
    }
}

impl Params {
    pub fn height(&self) -> usize {
        self.m.unwrap_or(self.n)
    }

    pub fn p_list(&self) -> Vec<f64> {
        self.ps.clone().unwrap_or_else(|| vec![self.p])
    }
}

/// One axis of a sweep grid: a parameter key (dotted for nested keys, as in
/// `multiscale.phi`) and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// The experiment run at each grid point.
    pub kind: Kind,
    pub grid: Vec<GridAxis>,
    /// Run every grid point on the master seed.
    #[serde(default = "default_crn")]
    pub crn: bool,
}

fn default_crn() -> bool {
    true
}

fn default_seed() -> u64 {
    1
}

fn default_replicas() -> u64 {
    1000
}

/// A complete run description. A run is a function of this value alone;
/// `threads` and `out` do not change the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Kind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

impl RunConfig {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            seed: default_seed(),
            replicas: default_replicas(),
            threads: 0,
            out: None,
            params: Params::default(),
            sweep: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// The part of the config that determines the results.
    pub fn identity(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("threads");
        obj.remove("out");
        v
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.replicas == 0 {
            return Err(CliError::Config("replicas must be positive".into()));
        }
        match (&self.sweep, self.kind) {
            (None, Kind::Sweep) => Err(CliError::Config("kind sweep needs a sweep section".into())),
            (Some(_), k) if k != Kind::Sweep => Err(CliError::Config(format!("sweep section given for kind {}", k.name()))),
            (Some(s), _) => {
                if s.kind == Kind::Sweep {
                    return Err(CliError::Config("a sweep cannot run a sweep".into()));
                }
                if s.grid.is_empty() || s.grid.iter().any(|a| a.values.is_empty()) {
                    return Err(CliError::Config("sweep grid is empty".into()));
                }
                Ok(())
            }
            (None, _) => Ok(()),
        }
    }

    /// Applies a `key=value` override to `params`; the value is parsed as
    /// JSON and falls back to a string.
    pub fn set_param(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.params = with_param(&self.params, key, value)?;
        Ok(())
    }
}

/// `params` with the (possibly dotted) key replaced.
pub fn with_param(params: &Params, key: &str, value: Value) -> Result<Params, CliError> {
    let mut v = serde_json::to_value(params).expect("params serialize");
    let mut slot = &mut v;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| CliError::Config(format!("unknown parameter {key:?}")))?;
    }
    *slot = value;
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("parameter {key}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_reach_nested_params() {
        let p = with_param(&Params::default(), "multiscale.phi", Value::from(55.0)).unwrap();
        assert_eq!(p.multiscale.phi, 55.0);
        assert!(with_param(&p, "multiscale.nope", Value::from(1)).is_err());
        assert!(with_param(&p, "n", Value::from("x")).is_err());
    }

    #[test]
    fn identity_ignores_threads_and_out() {
        let a = RunConfig::new(Kind::Pc);
        let mut b = a.clone();
        b.threads = 7;
        b.out = Some("elsewhere".into());
        assert_eq!(a.identity(), b.identity());
        b.seed += 1;
        assert_ne!(a.identity(), b.identity());
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"kind":"multiscale","params":{"multiscale":{"phi":50}}}"#).unwrap();
        assert_eq!(cfg.params.multiscale.phi, 50.0);
        assert_eq!(cfg.params.multiscale.l0, MultiscaleParams::default().l0);
        assert_eq!((cfg.seed, cfg.replicas), (1, 1000));
        assert!(RunConfig::from_json(r#"{"kind":"pc","extra":1}"#).is_err());
    }

    #[test]
    fn set_param_parses_json_then_strings() {
        let mut cfg = RunConfig::new(Kind::Crossing);
        cfg.set_param("ps=[0.1,0.2]").unwrap();
        cfg.set_param("environment=renewal").unwrap();
        cfg.set_param("orientation=Vertical").unwrap();
        assert_eq!(cfg.params.ps, Some(vec![0.1, 0.2]));
        assert_eq!(cfg.params.environment, EnvSource::Renewal);
        assert_eq!(cfg.params.orientation, Orientation::Vertical);
        assert!(cfg.set_param("no_equals").is_err());
    }
}
