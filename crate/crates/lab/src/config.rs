//! JSON experiment configs. Every struct rejects unknown keys, and errors
//! carry the dotted path of the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use difflab::jump::{JumpFunctional, TokenDist};
use difflab::variational::ObjectiveMode;
use difflab::weak_error::TestFunctional;
use difflab::{Integrator, Scheduler, TargetSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Schedulers,
    GaussianBias,
    WeakError,
    StatError,
    Variational,
    Jump,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

/// The file layout; `seed` and `output_dir` may instead come from flags.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<Command>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    threads: Option<usize>,
    parameters: Value,
}

/// A fully resolved run, serializable back into a config file.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub parameters: Parameters,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Parameters {
    Schedulers(SchedulersParams),
    GaussianBias(GaussianBiasParams),
    WeakError(WeakErrorParams),
    StatError(StatErrorParams),
    Variational(VariationalParams),
    Jump(JumpParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulersParams {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "Tprime")]
    pub terminal: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBiasParams {
    pub mu: f64,
    pub sigma2: Vec<f64>,
    #[serde(rename = "K")]
    pub steps: Vec<usize>,
    #[serde(rename = "Tprime")]
    pub terminal: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakErrorParams {
    pub target: TargetSpec,
    pub scheduler: Scheduler,
    pub delta: f64,
    #[serde(rename = "K")]
    pub steps: Vec<usize>,
    /// Score perturbation magnitudes; 0 runs the exact score.
    pub eps: Vec<f64>,
    /// Perturbation direction; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave: Option<Vec<f64>>,
    pub phi: TestFunctional,
    pub reps: usize,
    pub n_paths: usize,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
}

fn default_integrator() -> Integrator {
    Integrator::ExactOu
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatErrorParams {
    pub target: TargetSpec,
    pub scheduler: Scheduler,
    pub t: f64,
    pub phi: TestFunctional,
    #[serde(rename = "N")]
    pub sizes: Vec<usize>,
    pub reps: usize,
}

fn default_step() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalParams {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "Tprime")]
    pub terminal: f64,
    /// Required for the continuous objective; the discrete one uses `K + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_knots: Option<usize>,
    pub mode: ObjectiveMode,
    pub iters: usize,
    #[serde(default = "default_step")]
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpParams {
    pub functional: JumpFunctional,
    pub m0: TokenDist,
    pub lambda: f64,
    /// Horizon of the `eps` and `N` sweeps.
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "T_sweep")]
    pub horizons: Vec<f64>,
    pub eps: Vec<f64>,
    #[serde(rename = "N")]
    pub sizes: Vec<usize>,
    pub ode_steps: usize,
    pub reps: usize,
}

fn parse_params<T: DeserializeOwned>(v: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "parameters".to_string() } else { format!("parameters.{path}") };
        CliError::Config { key, reason: e.into_inner().to_string() }
    })
}

/// Overrides from the command line.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

pub fn load(command: Command, path: &Path, ov: Overrides) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config { key: "--config".into(), reason: format!("{}: {e}", path.display()) })?;
    parse(command, &text, ov)
}

pub fn parse(command: Command, text: &str, ov: Overrides) -> Result<ExperimentConfig, CliError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CliError::Config { key: "config".into(), reason: e.to_string() })?;
    let raw: RawConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config { key: if path == "." { "config".into() } else { path }, reason: e.into_inner().to_string() }
    })?;
    if let Some(c) = raw.command {
        if c != command {
            return Err(CliError::Config {
                key: "command".into(),
                reason: format!("config is for `{c}`, not `{command}`"),
            });
        }
    }
    let seed = ov.seed.or(raw.seed).ok_or_else(|| missing("seed"))?;
    let output_dir = ov.output_dir.or(raw.output_dir).ok_or_else(|| missing("output_dir"))?;
    if raw.threads == Some(0) {
        return Err(CliError::Config { key: "threads".into(), reason: "must be at least 1".into() });
    }
    let parameters = match command {
        Command::Schedulers => Parameters::Schedulers(parse_params(raw.parameters)?),
        Command::GaussianBias => Parameters::GaussianBias(parse_params(raw.parameters)?),
        Command::WeakError => Parameters::WeakError(parse_params(raw.parameters)?),
        Command::StatError => Parameters::StatError(parse_params(raw.parameters)?),
        Command::Variational => Parameters::Variational(parse_params(raw.parameters)?),
        Command::Jump => Parameters::Jump(parse_params(raw.parameters)?),
    };
    Ok(ExperimentConfig { command, seed, output_dir, threads: raw.threads, parameters })
}

fn missing(key: &str) -> CliError {
    CliError::Config {
        key: key.into(),
        reason: format!("missing field `{key}` (set it in the config or on the command line)"),
    }
}
