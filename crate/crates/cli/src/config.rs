//! JSON run configuration and its merge with command-line flags.

use std::path::{Component, Path, PathBuf};

use aoii::experiments::{builtin, PolicySet, Scenario, ScenarioSpec};
use serde::Deserialize;

use crate::CliError;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "AOII_SEED";

/// Built-in scenario name or an inline model.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Builtin(String),
    Inline(Box<ScenarioSpec>),
}

/// Every field is optional; command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: Option<u32>,
    pub scenario: Option<ScenarioRef>,
    pub lambda: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub tau_max: Option<u32>,
    pub xi_grid: Option<Vec<f64>>,
    pub horizon: Option<u64>,
    pub replications: Option<u32>,
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub policies: Option<String>,
    pub cycles: Option<u64>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        if let Some(v) = cfg.schema_version {
            if v != 1 {
                return Err(CliError::Parse(format!("unsupported schema_version {v}")));
            }
        }
        Ok(cfg)
    }
}

/// Flags shared by every subcommand, already parsed by clap.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub lambda: Option<f64>,
    pub tau_max: Option<u32>,
    pub horizon: Option<u64>,
    pub replications: Option<u32>,
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub policies: Option<String>,
    pub cycles: Option<u64>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// Fully merged and validated inputs of one run.
#[derive(Debug)]
pub struct Resolved {
    pub scenario: Scenario,
    pub lambda: Option<f64>,
    pub policy: Option<String>,
    pub policies: PolicySet,
    pub cycles: Option<u64>,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
}

pub const DEFAULT_OUT: &str = "aoii-out";

pub fn resolve(cfg: RunConfig, flags: Overrides) -> Result<Resolved, CliError> {
    let mut scenario = match (flags.scenario, cfg.scenario) {
        (Some(name), _) => builtin(&name)?,
        (None, Some(ScenarioRef::Builtin(name))) => builtin(&name)?,
        (None, Some(ScenarioRef::Inline(spec))) => spec.build()?,
        (None, None) => {
            return Err(CliError::Parse(
                "no scenario: pass --scenario or set \"scenario\" in the config".into(),
            ))
        }
    };
    if let Some(grid) = cfg.lambda_grid {
        scenario.lambda_grid = grid;
    }
    if let Some(grid) = cfg.xi_grid {
        scenario.xi_grid = grid;
    }
    if let Some(t) = flags.tau_max.or(cfg.tau_max) {
        scenario.tau_max = t;
    }
    if let Some(h) = flags.horizon.or(cfg.horizon) {
        scenario.sim_config.horizon = h;
    }
    if let Some(r) = flags.replications.or(cfg.replications) {
        scenario.sim_config.replications = r;
    }
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Parse(format!("{SEED_ENV}={v} is not a u64")))?,
        ),
        Err(_) => None,
    };
    if let Some(s) = flags.seed.or(env_seed).or(cfg.seed) {
        scenario.sim_config.seed = s;
    }
    scenario.validate()?;

    let lambda = flags.lambda.or(cfg.lambda);
    if let Some(l) = lambda {
        if !(l.is_finite() && l >= 0.0) {
            return Err(CliError::Parse(format!("lambda = {l} must be finite and >= 0")));
        }
    }
    let policies = match flags.policies.or(cfg.policies) {
        Some(s) => s.parse()?,
        None => PolicySet::ALL,
    };
    let out = flags
        .out
        .or(cfg.out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let trace = match flags.trace.or(cfg.trace) {
        Some(p) => Some(inside(&out, &p)?),
        None => None,
    };
    Ok(Resolved {
        scenario,
        lambda,
        policy: flags.policy.or(cfg.policy),
        policies,
        cycles: flags.cycles.or(cfg.cycles),
        out,
        trace,
    })
}

/// `rel` joined onto `out`; absolute paths and `..` are refused so nothing is
/// written outside the output directory.
pub fn inside(out: &Path, rel: &Path) -> Result<PathBuf, CliError> {
    let ok = rel
        .components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if !ok || rel.as_os_str().is_empty() {
        return Err(CliError::Parse(format!(
            "{} must be a relative path inside the output directory",
            rel.display()
        )));
    }
    Ok(out.join(rel))
}
