//! Fixed workloads shared by the benchmarks.

use herdopt_core::dynamics::{AgentState, ScenarioSpec};
use herdopt_core::scenario_io::{random_circle_init, VelocityMode};

/// `m` dogs on radius 2 and `n` sheep on radius 1 at rest, default
/// hyperparameters.
pub fn herding_scenario(m: usize, n: usize, seed: u64) -> ScenarioSpec {
    random_circle_init(m, n, 2, 2.0, 1.0, VelocityMode::Zero, seed).into_spec(2, seed)
}

/// One dog and no sheep: the linear-quadratic case.
pub fn lone_dog(tf: f64) -> ScenarioSpec {
    ScenarioSpec {
        tf,
        alpha: 0.0,
        beta: 1.0,
        ..ScenarioSpec::new(2, vec![AgentState::at_rest(&[1.0, 0.5])], vec![])
    }
}
