//! Numerical primitives shared by every solver: dense and banded linear
//! algebra, adaptive Runge–Kutta integration and damped Newton iteration.

mod band;
mod field;
pub mod linalg;
mod matrix;
mod newton;
mod ode;

pub use band::{BandLu, BandMatrix};
pub use field::{FnField, VectorField};
pub use linalg::{inverse, least_squares, linear_solve, lu_factor, LuFactors};
pub use matrix::DenseMatrix;
pub use newton::{newton_damped, LinearSystem, NewtonOutcome, MAX_HALVINGS, MAX_STALLS};
pub use ode::{integrate_adaptive, integrate_with, IntegratorOptions, OdePath, MIN_STEP_RATIO};
