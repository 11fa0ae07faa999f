//! Central-difference checks of the analytic Jacobians.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    dynamics_jacobian, interaction_jacobian, sheep_accel, state_deriv, ScenarioSpec,
};
use crate::numkernel::DenseMatrix;
use crate::pmp::{augmented_deriv, augmented_jacobian};

/// Default pass threshold on [`relative_error`].
pub const GRADCHECK_TOL: f64 = 1e-5;
const STEP: f64 = 1e-6;

/// Central-difference Jacobian of `f` at `x` with step `h`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DenseMatrix {
    let rows = f(x).len();
    let mut j = DenseMatrix::zeros(rows, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..rows {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// `max |fd − analytic| / max(1, max |analytic|)`.
pub fn relative_error(fd: &DenseMatrix, analytic: &DenseMatrix) -> f64 {
    (fd - analytic).max_abs() / analytic.max_abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub samples: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, half_width: f64) -> Vec<f64> {
    (0..len)
        .map(|_| rng.random_range(-half_width..half_width))
        .collect()
}

/// Compares every analytic Jacobian of `spec` against central differences
/// at `samples` random states (positions in `[−2, 2]`, velocities and
/// costates in `[−1, 1]`) and random controls.
pub fn check_scenario(spec: &ScenarioSpec, samples: usize, seed: u64) -> Vec<CheckResult> {
    let l = spec.layout();
    let n = l.state_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut interaction = 0.0f64;
    let mut dynamics = 0.0f64;
    let mut augmented = 0.0f64;

    for _ in 0..samples {
        let mut x = random_vec(&mut rng, n, 1.0);
        for j in 0..l.dogs {
            x[l.dog_pos(j)..l.dog_pos(j) + l.dim]
                .copy_from_slice(&random_vec(&mut rng, l.dim, 2.0));
        }
        for i in 0..l.sheep {
            x[l.sheep_pos(i)..l.sheep_pos(i) + l.dim]
                .copy_from_slice(&random_vec(&mut rng, l.dim, 2.0));
        }
        let u = random_vec(&mut rng, l.control_len(), 1.0);

        let rel = random_vec(&mut rng, l.dim, 2.0);
        let an = interaction_jacobian(&rel, spec.epsilon, spec.lambda);
        let zero = vec![0.0; l.dim];
        let fd = fd_jacobian(
            |s| sheep_accel(s, &[&zero], spec.epsilon, spec.lambda),
            &rel,
            STEP,
        );
        interaction = interaction.max(relative_error(&fd, &an));

        let fd = fd_jacobian(|y| state_deriv(y, &u, spec), &x, STEP);
        dynamics = dynamics.max(relative_error(&fd, &dynamics_jacobian(&x, spec)));

        let mut aug = x.clone();
        aug.extend(random_vec(&mut rng, n, 1.0));
        let fd = fd_jacobian(|y| augmented_deriv(y, spec), &aug, STEP);
        augmented = augmented.max(relative_error(&fd, &augmented_jacobian(&aug, spec)));
    }

    vec![
        CheckResult {
            name: "interaction_jacobian",
            samples,
            max_rel_error: interaction,
        },
        CheckResult {
            name: "dynamics_jacobian",
            samples,
            max_rel_error: dynamics,
        },
        CheckResult {
            name: "augmented_jacobian",
            samples,
            max_rel_error: augmented,
        },
    ]
}
