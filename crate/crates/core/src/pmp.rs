//! Pontryagin boundary-value system for the herding problem.
//!
//! The augmented vector is `[state | costate]` where the costate mirrors the
//! state layout: `[p_d, q_d]` per dog then `[p_s, q_s]` per sheep. Costs
//! enter the Hamiltonian with a minus sign, so the optimal control
//! maximizes it and equals `u = ½ q_d`.

use crate::dynamics::{
    dog_penalty_grad, dog_penalty_hessian, interaction_curvature, interaction_jacobian, state_cost,
    state_deriv_into, ScenarioSpec, SheepCostate,
};
use crate::numkernel::{DenseMatrix, VectorField};
use crate::trajectory::Trajectory;

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `u^(j) = ½ q_d^(j)` for every dog.
pub fn optimal_control(aug: &[f64], spec: &ScenarioSpec) -> Vec<f64> {
    let l = spec.layout();
    assert_eq!(aug.len(), l.augmented_len(), "augmented state length");
    let cs = l.state_len();
    let mut u = vec![0.0; l.control_len()];
    for j in 0..l.dogs {
        let q = cs + l.dog_vel(j);
        for (k, uk) in u[l.control(j)..l.control(j) + l.dim].iter_mut().enumerate() {
            *uk = 0.5 * aug[q + k];
        }
    }
    u
}

/// Hamiltonian `Σ (p·x') − running cost` for an arbitrary control.
pub fn hamiltonian(aug: &[f64], controls: &[f64], spec: &ScenarioSpec) -> f64 {
    let l = spec.layout();
    assert_eq!(aug.len(), l.augmented_len(), "augmented state length");
    let n = l.state_len();
    let (x, costate) = aug.split_at(n);
    let mut dx = vec![0.0; n];
    state_deriv_into(x, controls, spec, &mut dx);
    dot(costate, &dx) - state_cost(x, spec) - dot(controls, controls)
}

/// Time derivative of the augmented state under the optimal control.
pub fn augmented_deriv(aug: &[f64], spec: &ScenarioSpec) -> Vec<f64> {
    let mut out = vec![0.0; aug.len()];
    augmented_deriv_into(aug, spec, &mut out);
    out
}

pub(crate) fn augmented_deriv_into(aug: &[f64], spec: &ScenarioSpec, out: &mut [f64]) {
    let l = spec.layout();
    assert_eq!(aug.len(), l.augmented_len(), "augmented state length");
    let n = l.state_len();
    let dim = l.dim;
    let u = optimal_control(aug, spec);
    let (x, lam) = aug.split_at(n);
    let (dx, dlam) = out.split_at_mut(n);
    state_deriv_into(x, &u, spec, dx);
    dlam.fill(0.0);

    for j in 0..l.dogs {
        let (pd, vd) = (l.dog_pos(j), l.dog_vel(j));
        let grad = dog_penalty_grad(&x[pd..pd + dim], spec);
        for k in 0..dim {
            dlam[pd + k] += grad[k];
            dlam[vd + k] = -lam[pd + k];
        }
    }
    for i in 0..l.sheep {
        let (ps, vs) = (l.sheep_pos(i), l.sheep_vel(i));
        let s = &x[ps..ps + dim];
        let q_s = &lam[vs..vs + dim];
        for j in 0..l.dogs {
            let pd = l.dog_pos(j);
            let jx = interaction_jacobian(&diff(s, &x[pd..pd + dim]), spec.epsilon, spec.lambda);
            let push = jx.matvec(q_s);
            for k in 0..dim {
                dlam[pd + k] += push[k];
                dlam[ps + k] -= push[k];
            }
        }
        for k in 0..dim {
            dlam[ps + k] += 2.0 * spec.alpha * s[k];
            dlam[vs + k] = match spec.sheep_costate {
                SheepCostate::Adjoint => -lam[ps + k],
                SheepCostate::Literal => -lam[vs + k],
            };
        }
    }
}

/// Exact Jacobian of [`augmented_deriv`].
pub fn augmented_jacobian(aug: &[f64], spec: &ScenarioSpec) -> DenseMatrix {
    let l = spec.layout();
    assert_eq!(aug.len(), l.augmented_len(), "augmented state length");
    let n = l.state_len();
    let dim = l.dim;
    let (x, lam) = aug.split_at(n);
    let eye = DenseMatrix::identity(dim);
    let mut jac = DenseMatrix::zeros(2 * n, 2 * n);

    for j in 0..l.dogs {
        let (pd, vd) = (l.dog_pos(j), l.dog_vel(j));
        jac.set_block(pd, vd, &eye);
        jac.add_block(vd, n + vd, &eye, 0.5);
        jac.add_block(
            n + pd,
            pd,
            &dog_penalty_hessian(&x[pd..pd + dim], spec),
            1.0,
        );
        jac.add_block(n + vd, n + pd, &eye, -1.0);
    }
    for i in 0..l.sheep {
        let (ps, vs) = (l.sheep_pos(i), l.sheep_vel(i));
        let s = &x[ps..ps + dim];
        let q_s = &lam[vs..vs + dim];
        jac.set_block(ps, vs, &eye);
        for j in 0..l.dogs {
            let pd = l.dog_pos(j);
            let sep = diff(s, &x[pd..pd + dim]);
            let jx = interaction_jacobian(&sep, spec.epsilon, spec.lambda);
            let tx = interaction_curvature(&sep, q_s, spec.epsilon, spec.lambda);
            // sheep acceleration
            jac.add_block(vs, ps, &jx, 1.0);
            jac.add_block(vs, pd, &jx, -1.0);
            // dog position costate
            jac.add_block(n + pd, n + vs, &jx, 1.0);
            jac.add_block(n + pd, ps, &tx, 1.0);
            jac.add_block(n + pd, pd, &tx, -1.0);
            // sheep position costate
            jac.add_block(n + ps, n + vs, &jx, -1.0);
            jac.add_block(n + ps, ps, &tx, -1.0);
            jac.add_block(n + ps, pd, &tx, 1.0);
        }
        jac.add_block(n + ps, ps, &eye, 2.0 * spec.alpha);
        match spec.sheep_costate {
            SheepCostate::Adjoint => jac.add_block(n + vs, n + ps, &eye, -1.0),
            SheepCostate::Literal => jac.add_block(n + vs, n + vs, &eye, -1.0),
        }
    }
    jac
}

/// Two-point boundary residual: initial state mismatch followed by the
/// terminal costate.
pub fn boundary_residual(aug_0: &[f64], aug_f: &[f64], spec: &ScenarioSpec) -> Vec<f64> {
    let l = spec.layout();
    assert_eq!(aug_0.len(), l.augmented_len(), "augmented state length");
    assert_eq!(aug_f.len(), l.augmented_len(), "augmented state length");
    let n = l.state_len();
    let x0 = spec.initial_state();
    let mut r: Vec<f64> = aug_0[..n].iter().zip(&x0).map(|(a, b)| a - b).collect();
    r.extend_from_slice(&aug_f[n..]);
    r
}

/// The augmented system as a [`VectorField`].
#[derive(Clone, Copy, Debug)]
pub struct PmpSystem<'a> {
    pub spec: &'a ScenarioSpec,
}

impl<'a> PmpSystem<'a> {
    pub fn new(spec: &'a ScenarioSpec) -> Self {
        Self { spec }
    }
}

impl VectorField for PmpSystem<'_> {
    fn dim(&self) -> usize {
        self.spec.layout().augmented_len()
    }

    fn eval(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        augmented_deriv_into(y, self.spec, out)
    }

    fn jacobian(&self, _t: f64, y: &[f64]) -> DenseMatrix {
        augmented_jacobian(y, self.spec)
    }
}

/// Splits augmented node values into a [`Trajectory`] with controls
/// `½ q_d` at every node.
pub fn augmented_trajectory(times: &[f64], values: &[Vec<f64>], spec: &ScenarioSpec) -> Trajectory {
    let n = spec.layout().state_len();
    Trajectory {
        layout: spec.layout(),
        times: times.to_vec(),
        states: values.iter().map(|v| v[..n].to_vec()).collect(),
        controls: values.iter().map(|v| optimal_control(v, spec)).collect(),
        costates: Some(values.iter().map(|v| v[n..].to_vec()).collect()),
    }
}
