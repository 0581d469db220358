//! Run configuration: a TOML file, overridden by command-line flags and
//! resolved into a self-contained form that is echoed into the manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use rfs_slam::error::SlamError;
use rfs_slam::eval::GospaConfig;
use rfs_slam::experiment::FilterKind;
use rfs_slam::filters::FilterConfig;
use rfs_slam::sim::ScenarioConfig;
use serde::{Deserialize, Serialize};

/// Failure of a CLI invocation, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    /// Wraps a core error, qualifying configuration fields with `section`.
    pub fn from_core(e: SlamError, section: &str) -> Self {
        match e {
            SlamError::Config { field, message } if section.is_empty() => {
                Failure::Config(format!("configuration error in `{field}`: {message}"))
            }
            SlamError::Config { field, message } => {
                Failure::Config(format!("configuration error in `{section}.{field}`: {message}"))
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

/// Contents of a run configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Filter of the `run` subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterKind>,
    /// Monte-Carlo run count.
    pub runs: usize,
    /// Base seed; when set it replaces both `scenario.seed` and `params.seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Scenario TOML file, relative to this file; replaces `[scenario]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    /// Stored bundle to run once instead of simulating, relative to this file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle_file: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub params: FilterConfig,
    pub gospa: GospaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            filter: None,
            runs: 10,
            seed: None,
            output_dir: PathBuf::from("out"),
            scenario_file: None,
            bundle_file: None,
            scenario: ScenarioConfig::default(),
            params: FilterConfig::default(),
            gospa: GospaConfig::default(),
        }
    }
}

/// Flag values that override the configuration file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub filter: Option<FilterKind>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub particles: Option<usize>,
    pub max_hypotheses: Option<usize>,
    pub lbp_iterations: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub bundle_file: Option<PathBuf>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn relative_to(base: Option<&Path>, path: &Path) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

impl RunConfig {
    /// Loads `path` (or the defaults), applies `overrides` and validates.
    ///
    /// The result has no file references left except `bundle_file`, and its
    /// seeds are written into the scenario and filter sections.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, Failure> {
        let mut cfg: RunConfig = match path {
            Some(p) => read_toml(p)?,
            None => RunConfig::default(),
        };
        if let Some(file) = cfg.scenario_file.take() {
            cfg.scenario = read_toml(&relative_to(path, &file))?;
        }
        cfg.bundle_file = match &overrides.bundle_file {
            Some(b) => Some(b.clone()),
            None => cfg.bundle_file.as_ref().map(|b| relative_to(path, b)),
        };
        cfg.filter = overrides.filter.or(cfg.filter);
        cfg.runs = overrides.runs.unwrap_or(cfg.runs);
        if let Some(seed) = overrides.seed.or(cfg.seed.take()) {
            cfg.scenario.seed = seed;
            cfg.params.seed = seed;
        }
        if let Some(n) = overrides.particles {
            cfg.params.particles = n;
        }
        if let Some(b) = overrides.max_hypotheses {
            cfg.params.max_hypotheses = b;
        }
        if let Some(l) = overrides.lbp_iterations {
            cfg.params.lbp.max_iterations = l;
        }
        if let Some(o) = &overrides.output_dir {
            cfg.output_dir = o.clone();
        }
        if cfg.bundle_file.is_some() {
            cfg.runs = 1;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.runs == 0 {
            return Err(Failure::Config("configuration error in `runs`: must be at least 1".into()));
        }
        self.params.validate().map_err(|e| Failure::from_core(e, "params"))?;
        self.scenario.validate().map_err(|e| Failure::from_core(e, "scenario"))?;
        if !(self.gospa.p >= 1.0) {
            return Err(Failure::Config("configuration error in `gospa.p`: must be at least 1".into()));
        }
        if !(self.gospa.c_m > 0.0) {
            return Err(Failure::Config("configuration error in `gospa.c_m`: must be positive".into()));
        }
        Ok(())
    }

    /// The configuration as TOML text.
    pub fn to_toml(&self) -> Result<String, Failure> {
        toml::to_string(self).map_err(|e| Failure::Runtime(format!("cannot serialise config: {e}")))
    }
}
