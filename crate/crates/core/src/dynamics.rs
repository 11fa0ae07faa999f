//! Herding dynamics: sheep repulsion, dog double integrators, their
//! Jacobians, and the running cost.
//!
//! A [`ScenarioSpec`] fixes the agent counts and parameters. States are
//! packed according to [`Layout`]: every dog as `[position, velocity]`,
//! followed by every sheep as `[position, velocity]`, each block `dim`
//! long.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::DenseMatrix;
use crate::trajectory::Trajectory;

/// Dog-position penalty in the running cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DogCostMode {
    /// `β ‖d‖²`
    #[default]
    Origin,
    /// `½ β (‖d‖² − 1)²`: any point on the unit circle is free.
    Ring,
}

/// Form of the sheep velocity-costate equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SheepCostate {
    /// `q_s' = −p_s`, the adjoint of `s' = v_s`.
    #[default]
    Adjoint,
    /// `q_s' = −q_s`, kept for comparison runs only.
    Literal,
}

/// Packed index layout for `dogs` dogs and `sheep` sheep in `dim` dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub dogs: usize,
    pub sheep: usize,
    pub dim: usize,
}

impl Layout {
    pub fn new(dogs: usize, sheep: usize, dim: usize) -> Self {
        Self { dogs, sheep, dim }
    }

    pub fn state_len(&self) -> usize {
        2 * self.dim * (self.dogs + self.sheep)
    }

    pub fn control_len(&self) -> usize {
        self.dim * self.dogs
    }

    /// State plus costate.
    pub fn augmented_len(&self) -> usize {
        2 * self.state_len()
    }

    pub fn dog_pos(&self, j: usize) -> usize {
        2 * self.dim * j
    }

    pub fn dog_vel(&self, j: usize) -> usize {
        2 * self.dim * j + self.dim
    }

    pub fn sheep_pos(&self, i: usize) -> usize {
        2 * self.dim * (self.dogs + i)
    }

    pub fn sheep_vel(&self, i: usize) -> usize {
        2 * self.dim * (self.dogs + i) + self.dim
    }

    pub fn control(&self, j: usize) -> usize {
        self.dim * j
    }
}

/// Initial position and velocity of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
}

impl AgentState {
    pub fn new(pos: Vec<f64>, vel: Vec<f64>) -> Self {
        Self { pos, vel }
    }

    pub fn at_rest(pos: &[f64]) -> Self {
        Self {
            pos: pos.to_vec(),
            vel: vec![0.0; pos.len()],
        }
    }
}

pub const DEFAULT_DIM: usize = 2;
pub const DEFAULT_TF: f64 = 2.0;
pub const DEFAULT_LAMBDA: f64 = 3.0;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 0.02;

/// Problem definition for one herding run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub dim: usize,
    /// Horizon `t_f`.
    pub tf: f64,
    /// Interaction exponent λ.
    pub lambda: f64,
    /// Regularizer ε keeping the repulsion finite at contact.
    pub epsilon: f64,
    /// Weight on squared sheep distance to the origin.
    pub alpha: f64,
    /// Weight on the dog-position penalty.
    pub beta: f64,
    pub dog_cost: DogCostMode,
    pub sheep_costate: SheepCostate,
    pub dogs: Vec<AgentState>,
    pub sheep: Vec<AgentState>,
    pub seed: u64,
}

impl ScenarioSpec {
    /// A scenario with default hyperparameters (`tf = 2`, `λ = 3`,
    /// `ε = 0.1`, `α = 1`, `β = 0.02`).
    pub fn new(dim: usize, dogs: Vec<AgentState>, sheep: Vec<AgentState>) -> Self {
        Self {
            dim,
            tf: DEFAULT_TF,
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            dog_cost: DogCostMode::Origin,
            sheep_costate: SheepCostate::Adjoint,
            dogs,
            sheep,
            seed: 0,
        }
    }

    pub fn m(&self) -> usize {
        self.dogs.len()
    }

    pub fn n(&self) -> usize {
        self.sheep.len()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.m(), self.n(), self.dim)
    }

    /// Packed initial state.
    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layout().state_len());
        for a in self.dogs.iter().chain(&self.sheep) {
            x.extend_from_slice(&a.pos);
            x.extend_from_slice(&a.vel);
        }
        x
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.dim != 2 && self.dim != 3 {
            return bad(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.dogs.is_empty() {
            return bad("at least one dog is required".into());
        }
        if !(self.tf > 0.0 && self.tf.is_finite()) {
            return bad(format!("tf must be positive, got {}", self.tf));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        for (kind, agents) in [("dog", &self.dogs), ("sheep", &self.sheep)] {
            for (k, a) in agents.iter().enumerate() {
                if a.pos.len() != self.dim || a.vel.len() != self.dim {
                    return bad(format!(
                        "{kind} {} needs position and velocity of length {}",
                        k + 1,
                        self.dim
                    ));
                }
                if a.pos.iter().chain(&a.vel).any(|v| !v.is_finite()) {
                    return bad(format!("{kind} {} has non-finite coordinates", k + 1));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Adds `x / (‖x‖² + ε)^{λ/2}` with `x = s − d` into `out`.
#[inline]
fn add_repulsion(s: &[f64], d: &[f64], epsilon: f64, lambda: f64, out: &mut [f64]) {
    let w: f64 = s.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + epsilon;
    let c = w.powf(-0.5 * lambda);
    for ((o, a), b) in out.iter_mut().zip(s).zip(d) {
        *o += c * (a - b);
    }
}

/// Acceleration of a sheep at `sheep_pos` repelled by every dog.
pub fn sheep_accel(
    sheep_pos: &[f64],
    dog_positions: &[&[f64]],
    epsilon: f64,
    lambda: f64,
) -> Vec<f64> {
    let mut acc = vec![0.0; sheep_pos.len()];
    for d in dog_positions {
        add_repulsion(sheep_pos, d, epsilon, lambda, &mut acc);
    }
    acc
}

/// Jacobian of `x ↦ x / (‖x‖² + ε)^{λ/2}`:
/// `(‖x‖²+ε)^{−λ/2} (I − λ (‖x‖²+ε)^{−1} x xᵀ)`.
pub fn interaction_jacobian(x: &[f64], epsilon: f64, lambda: f64) -> DenseMatrix {
    let k = x.len();
    let w = norm_sq(x) + epsilon;
    let c = w.powf(-0.5 * lambda);
    let g = lambda / w;
    let mut j = DenseMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let id = if a == b { 1.0 } else { 0.0 };
            j[(a, b)] = c * (id - g * x[a] * x[b]);
        }
    }
    j
}

/// Derivative of `x ↦ J(x)·q` where `J` is [`interaction_jacobian`]:
/// `−λ w^{−λ/2−1} [q xᵀ + x qᵀ + (xᵀq) I − (λ+2)(xᵀq)/w · x xᵀ]`, `w = ‖x‖²+ε`.
///
/// This is the third-derivative contraction needed by the costate Jacobian.
pub fn interaction_curvature(x: &[f64], q: &[f64], epsilon: f64, lambda: f64) -> DenseMatrix {
    let k = x.len();
    let w = norm_sq(x) + epsilon;
    let a = w.powf(-0.5 * lambda - 1.0);
    let xq = dot(x, q);
    let g = (lambda + 2.0) * xq / w;
    let mut t = DenseMatrix::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            let id = if r == c { xq } else { 0.0 };
            t[(r, c)] = -lambda * a * (q[r] * x[c] + x[r] * q[c] + id - g * x[r] * x[c]);
        }
    }
    t
}

fn check_len(what: &str, got: usize, want: usize) {
    assert_eq!(got, want, "{what} has length {got}, layout needs {want}");
}

/// Time derivative of the packed state under dog accelerations `controls`.
pub fn state_deriv(state: &[f64], controls: &[f64], spec: &ScenarioSpec) -> Vec<f64> {
    let mut out = vec![0.0; state.len()];
    state_deriv_into(state, controls, spec, &mut out);
    out
}

pub(crate) fn state_deriv_into(
    state: &[f64],
    controls: &[f64],
    spec: &ScenarioSpec,
    out: &mut [f64],
) {
    let l = spec.layout();
    check_len("state", state.len(), l.state_len());
    check_len("controls", controls.len(), l.control_len());
    let dim = l.dim;
    for j in 0..l.dogs {
        let (p, v, u) = (l.dog_pos(j), l.dog_vel(j), l.control(j));
        out[p..p + dim].copy_from_slice(&state[v..v + dim]);
        out[v..v + dim].copy_from_slice(&controls[u..u + dim]);
    }
    for i in 0..l.sheep {
        let (p, v) = (l.sheep_pos(i), l.sheep_vel(i));
        out[p..p + dim].copy_from_slice(&state[v..v + dim]);
        let acc = &mut out[v..v + dim];
        acc.fill(0.0);
        let s = &state[p..p + dim];
        for j in 0..l.dogs {
            let d = &state[l.dog_pos(j)..l.dog_pos(j) + dim];
            add_repulsion(s, d, spec.epsilon, spec.lambda, acc);
        }
    }
}

/// Exact Jacobian of [`state_deriv`] with respect to the state.
pub fn dynamics_jacobian(state: &[f64], spec: &ScenarioSpec) -> DenseMatrix {
    let l = spec.layout();
    check_len("state", state.len(), l.state_len());
    let dim = l.dim;
    let mut a = DenseMatrix::zeros(l.state_len(), l.state_len());
    let eye = DenseMatrix::identity(dim);
    for j in 0..l.dogs {
        a.set_block(l.dog_pos(j), l.dog_vel(j), &eye);
    }
    for i in 0..l.sheep {
        let (p, v) = (l.sheep_pos(i), l.sheep_vel(i));
        a.set_block(p, v, &eye);
        let s = &state[p..p + dim];
        for j in 0..l.dogs {
            let dp = l.dog_pos(j);
            let x: Vec<f64> = s
                .iter()
                .zip(&state[dp..dp + dim])
                .map(|(a, b)| a - b)
                .collect();
            let jx = interaction_jacobian(&x, spec.epsilon, spec.lambda);
            a.add_block(v, p, &jx, 1.0);
            a.add_block(v, dp, &jx, -1.0);
        }
    }
    a
}

/// Constant input matrix: identity blocks from `u^(j)` into dog velocity rows.
pub fn control_jacobian(spec: &ScenarioSpec) -> DenseMatrix {
    let l = spec.layout();
    let mut b = DenseMatrix::zeros(l.state_len(), l.control_len());
    let eye = DenseMatrix::identity(l.dim);
    for j in 0..l.dogs {
        b.set_block(l.dog_vel(j), l.control(j), &eye);
    }
    b
}

/// Dog-position penalty for one dog.
pub(crate) fn dog_penalty(d: &[f64], spec: &ScenarioSpec) -> f64 {
    let r2 = norm_sq(d);
    match spec.dog_cost {
        DogCostMode::Origin => spec.beta * r2,
        DogCostMode::Ring => 0.5 * spec.beta * (r2 - 1.0) * (r2 - 1.0),
    }
}

/// Gradient of [`dog_penalty`].
pub(crate) fn dog_penalty_grad(d: &[f64], spec: &ScenarioSpec) -> Vec<f64> {
    let scale = match spec.dog_cost {
        DogCostMode::Origin => 2.0 * spec.beta,
        DogCostMode::Ring => 2.0 * spec.beta * (norm_sq(d) - 1.0),
    };
    d.iter().map(|v| scale * v).collect()
}

/// Hessian of [`dog_penalty`].
pub(crate) fn dog_penalty_hessian(d: &[f64], spec: &ScenarioSpec) -> DenseMatrix {
    let k = d.len();
    match spec.dog_cost {
        DogCostMode::Origin => DenseMatrix::identity(k).scale(2.0 * spec.beta),
        DogCostMode::Ring => {
            let mut h = DenseMatrix::identity(k).scale(2.0 * spec.beta * (norm_sq(d) - 1.0));
            for a in 0..k {
                for b in 0..k {
                    h[(a, b)] += 4.0 * spec.beta * d[a] * d[b];
                }
            }
            h
        }
    }
}

/// State part of the integrand: `α Σ‖s‖² + Σ dog penalties`.
pub(crate) fn state_cost(state: &[f64], spec: &ScenarioSpec) -> f64 {
    let l = spec.layout();
    let dim = l.dim;
    let sheep: f64 = (0..l.sheep)
        .map(|i| norm_sq(&state[l.sheep_pos(i)..l.sheep_pos(i) + dim]))
        .sum();
    let dogs: f64 = (0..l.dogs)
        .map(|j| dog_penalty(&state[l.dog_pos(j)..l.dog_pos(j) + dim], spec))
        .sum();
    spec.alpha * sheep + dogs
}

/// Cost integrand `α Σ‖s‖² + D(d) + Σ‖u‖²`.
pub fn running_cost(state: &[f64], controls: &[f64], spec: &ScenarioSpec) -> f64 {
    let l = spec.layout();
    check_len("state", state.len(), l.state_len());
    check_len("controls", controls.len(), l.control_len());
    state_cost(state, spec) + norm_sq(controls)
}

/// Trapezoidal quadrature of [`running_cost`] over the trajectory's nodes.
pub fn trajectory_cost(traj: &Trajectory, spec: &ScenarioSpec) -> Result<f64> {
    let l = spec.layout();
    if traj.states.len() != traj.times.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} states for {} times",
            traj.states.len(),
            traj.times.len()
        )));
    }
    let mut integrand = Vec::with_capacity(traj.times.len());
    for (k, x) in traj.states.iter().enumerate() {
        let u = match traj.controls.get(k) {
            Some(u) if u.len() == l.control_len() => u,
            _ => return Err(Error::MissingControls { node: k }),
        };
        if x.len() != l.state_len() {
            return Err(Error::DimensionMismatch(format!(
                "state at node {k} has length {}, expected {}",
                x.len(),
                l.state_len()
            )));
        }
        integrand.push(running_cost(x, u, spec));
    }
    Ok(traj
        .times
        .windows(2)
        .zip(integrand.windows(2))
        .map(|(t, c)| 0.5 * (t[1] - t[0]) * (c[0] + c[1]))
        .sum())
}
