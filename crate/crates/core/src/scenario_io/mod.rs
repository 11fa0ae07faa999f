//! Scenario files, initial conditions, initial guesses and trajectory
//! export.
//!
//! Scenarios are TOML documents:
//!
//! ```toml
//! dim = 2            # 2 or 3
//! tf = 2.0
//! lambda = 3.0
//! epsilon = 0.1
//! alpha = 1.0
//! beta = 0.02
//! dog_cost = "origin"        # or "ring"
//! sheep_costate = "adjoint"  # or "literal"
//! seed = 7                   # optional, falls back to HERDOPT_SEED, then 0
//! m = 2                      # optional; must match the [[dogs]] count
//! n = 1                      # optional; must match the [[sheep]] count
//!
//! [[dogs]]
//! position = [2.0, 0.0]
//! velocity = [0.0, 0.0]      # optional, defaults to rest
//!
//! [[dogs]]
//! position = [-2.0, 0.5]
//!
//! [[sheep]]
//! position = [1.0, 0.0]
//! ```
//!
//! Every key except the agent positions is optional.

mod export;
mod init;

pub use export::{
    export_trajectory, read_trajectory_csv, trajectory_csv, trajectory_svg, ExportFormat,
};
pub use init::{
    make_guess, nearest_root_angle, random_circle_init, structured_guess, GuessStyle,
    InitialConditions, VelocityMode, DEFAULT_SPIRAL_RADIUS, DOG_RADIUS_PRESETS,
    SHEEP_RADIUS_PRESETS,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    AgentState, DogCostMode, ScenarioSpec, SheepCostate, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_DIM,
    DEFAULT_EPSILON, DEFAULT_LAMBDA, DEFAULT_TF,
};
use crate::error::{Error, Result};
use crate::lqr::LqrWeights;

/// Environment variable supplying the seed when a scenario omits it.
pub const SEED_ENV: &str = "HERDOPT_SEED";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default = "default_tf")]
    tf: f64,
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_beta")]
    beta: f64,
    #[serde(default)]
    dog_cost: DogCostMode,
    #[serde(default)]
    sheep_costate: SheepCostate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default)]
    dogs: Vec<AgentEntry>,
    #[serde(default)]
    sheep: Vec<AgentEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentEntry {
    position: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    velocity: Option<Vec<f64>>,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}
fn default_tf() -> f64 {
    DEFAULT_TF
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}

/// Seed from [`SEED_ENV`], or 0.
pub fn env_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    parse_scenario_str(&read_text(path)?, path)
}

/// Parses scenario text; `origin` names the source in error messages.
pub fn parse_scenario_str(text: &str, origin: &Path) -> Result<ScenarioSpec> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| parse_error(origin, e.to_string()))?;
    for (key, declared, actual) in [
        ("m", file.m, file.dogs.len()),
        ("n", file.n, file.sheep.len()),
    ] {
        if let Some(d) = declared {
            if d != actual {
                return Err(Error::Validation(format!(
                    "{key} = {d} but {actual} agents are listed"
                )));
            }
        }
    }
    let agent = |e: AgentEntry| {
        let vel = e.velocity.unwrap_or_else(|| vec![0.0; e.position.len()]);
        AgentState::new(e.position, vel)
    };
    let spec = ScenarioSpec {
        dim: file.dim,
        tf: file.tf,
        lambda: file.lambda,
        epsilon: file.epsilon,
        alpha: file.alpha,
        beta: file.beta,
        dog_cost: file.dog_cost,
        sheep_costate: file.sheep_costate,
        seed: file.seed.unwrap_or_else(env_seed),
        dogs: file.dogs.into_iter().map(agent).collect(),
        sheep: file.sheep.into_iter().map(agent).collect(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Scenario as TOML text, with every field written out.
pub fn scenario_to_string(spec: &ScenarioSpec) -> String {
    let entry = |a: &AgentState| AgentEntry {
        position: a.pos.clone(),
        velocity: Some(a.vel.clone()),
    };
    let file = ScenarioFile {
        dim: spec.dim,
        tf: spec.tf,
        lambda: spec.lambda,
        epsilon: spec.epsilon,
        alpha: spec.alpha,
        beta: spec.beta,
        dog_cost: spec.dog_cost,
        sheep_costate: spec.sheep_costate,
        seed: Some(spec.seed),
        m: Some(spec.m()),
        n: Some(spec.n()),
        dogs: spec.dogs.iter().map(entry).collect(),
        sheep: spec.sheep.iter().map(entry).collect(),
    };
    toml::to_string(&file).expect("scenario fields are always serializable")
}

pub fn write_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario_to_string(spec)).map_err(|e| Error::io(path, e))
}

/// Reads an LQR weight table; omitted keys keep their defaults.
pub fn parse_weights(path: impl AsRef<Path>) -> Result<LqrWeights> {
    let path = path.as_ref();
    let w: LqrWeights =
        toml::from_str(&read_text(path)?).map_err(|e| parse_error(path, e.to_string()))?;
    w.validate()?;
    Ok(w)
}
