//! Optimal herding controls for `m` dog agents steering `n` sheep agents to
//! the origin.
//!
//! Three solution strategies share one set of dynamics:
//!
//! * [`bvp`]: the Pontryagin boundary-value problem solved by cubic
//!   collocation with mesh refinement and restarts.
//! * [`shooting`]: direct single shooting on the initial costate, with
//!   variational-equation sensitivities.
//! * [`lqr`]: closed-loop infinite-horizon LQR on the dynamics linearized at
//!   the current state.
//!
//! [`numkernel`] holds the dense/banded linear algebra, the adaptive
//! Dormand–Prince integrator and a damped Newton solver used by all of them.

pub mod bvp;
pub mod dynamics;
pub mod error;
pub mod gradcheck;
pub mod lqr;
pub mod numkernel;
pub mod pmp;
pub mod scenario_io;
pub mod shooting;
pub mod trajectory;

pub use bvp::{BvpOptions, Mesh, SolverReport};
pub use dynamics::{AgentState, DogCostMode, Layout, ScenarioSpec, SheepCostate};
pub use error::{Error, Result};
pub use lqr::{CareOptions, LqrWeights};
pub use numkernel::{BandMatrix, DenseMatrix, OdePath};
pub use trajectory::Trajectory;
