//! Single shooting on the initial costate.
//!
//! The unknown is the costate at `t = 0`; the residual is the terminal
//! costate, whose Jacobian comes from integrating the variational equation
//! `M' = J(y) M` alongside the augmented state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::ScenarioSpec;
use crate::error::{Error, Result};
use crate::numkernel::{integrate_adaptive, newton_damped, DenseMatrix, OdePath};
use crate::pmp::{augmented_deriv_into, augmented_jacobian, augmented_trajectory};
use crate::trajectory::Trajectory;

/// Relative tolerance used by [`shoot`].
pub const SHOOT_RTOL: f64 = 1e-10;
/// Iterate norm beyond which shooting is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Debug, PartialEq)]
pub struct ShootResult {
    pub initial_costate: Vec<f64>,
    pub terminal_costate_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trajectory: Trajectory,
}

fn atol(rtol: f64) -> f64 {
    1e-2 * rtol
}

fn check_aug(aug0: &[f64], spec: &ScenarioSpec) -> Result<()> {
    let len = spec.layout().augmented_len();
    if aug0.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "augmented state has length {}, expected {len}",
            aug0.len()
        )));
    }
    Ok(())
}

/// Integrates the augmented system alone over `[0, tf]`.
pub fn integrate_augmented(aug0: &[f64], spec: &ScenarioSpec, rtol: f64) -> Result<OdePath> {
    check_aug(aug0, spec)?;
    integrate_adaptive(
        |_, y, dy| {
            augmented_deriv_into(y, spec, dy);
            Ok(())
        },
        aug0,
        (0.0, spec.tf),
        rtol,
        atol(rtol),
    )
}

/// Integrates the augmented system together with its sensitivity to the
/// initial costate.
///
/// Returns the terminal augmented state and `∂(terminal costate)/∂(initial
/// costate)`, a square matrix of the state length.
pub fn integrate_with_sensitivity(
    aug0: &[f64],
    spec: &ScenarioSpec,
    rtol: f64,
) -> Result<(Vec<f64>, DenseMatrix)> {
    check_aug(aug0, spec)?;
    let d = aug0.len();
    let n = d / 2;

    // flattened [y | M] with M a d×n row-major block
    let mut y0 = aug0.to_vec();
    let mut m0 = DenseMatrix::zeros(d, n);
    for i in 0..n {
        m0[(n + i, i)] = 1.0;
    }
    y0.extend_from_slice(m0.as_slice());

    let path = integrate_adaptive(
        |_, y, dy| {
            let (aug, m) = y.split_at(d);
            augmented_deriv_into(aug, spec, &mut dy[..d]);
            let j = augmented_jacobian(aug, spec);
            let m = DenseMatrix::from_row_major(d, n, m.to_vec());
            dy[d..].copy_from_slice(j.matmul(&m).as_slice());
            Ok(())
        },
        &y0,
        (0.0, spec.tf),
        rtol,
        atol(rtol),
    )?;

    let yf = path.final_value();
    let m = DenseMatrix::from_row_major(d, n, yf[d..].to_vec());
    Ok((yf[..d].to_vec(), m.block(n, 0, n, n)))
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn augmented_start(spec: &ScenarioSpec, costate: &[f64]) -> Vec<f64> {
    let mut aug = spec.initial_state();
    aug.extend_from_slice(costate);
    aug
}

fn diverged(iterations: usize, reason: impl Into<String>) -> Error {
    Error::Diverged {
        iterations,
        reason: reason.into(),
    }
}

/// Initial costate with i.i.d. `N(0, σ²)` entries, deterministic per seed.
pub fn gaussian_costate_guess(spec: &ScenarioSpec, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma)
        .ok()
        .filter(|_| sigma > 0.0)
        .ok_or_else(|| Error::Validation(format!("sigma must be positive, got {sigma}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.layout().state_len())
        .map(|_| normal.sample(&mut rng))
        .collect())
}

/// Newton iteration on the initial costate until the terminal costate
/// vanishes (`‖·‖∞ ≤ tol`).
///
/// Blow-up of the integration or of the iterate is reported as
/// [`Error::Diverged`]; running out of iterations as
/// [`Error::MaxIterationsExceeded`].
pub fn shoot(
    spec: &ScenarioSpec,
    costate0_guess: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<ShootResult> {
    spec.validate()?;
    let n = spec.layout().state_len();
    if costate0_guess.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "costate guess has length {}, expected {n}",
            costate0_guess.len()
        )));
    }

    let mut evaluations = 0usize;
    let terminal_costate = |c: &[f64], evals: &mut usize| -> Result<Vec<f64>> {
        *evals += 1;
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(diverged(*evals, format!("iterate norm {norm:.3e}")));
        }
        let path = integrate_augmented(&augmented_start(spec, c), spec, SHOOT_RTOL)?;
        Ok(path.final_value()[n..].to_vec())
    };

    let outcome = newton_damped(
        |c| terminal_costate(c, &mut evaluations),
        |c| {
            let (_, sens) =
                integrate_with_sensitivity(&augmented_start(spec, c), spec, SHOOT_RTOL)?;
            Ok(sens)
        },
        costate0_guess,
        max_iter,
        tol,
    );
    let outcome = match outcome {
        Ok(o) => o,
        Err(Error::StepSizeUnderflow { t, .. }) => {
            return Err(diverged(
                evaluations,
                format!("trajectory blew up at t = {t:.4}"),
            ))
        }
        Err(Error::SingularMatrix { .. }) => {
            return Err(diverged(evaluations, "singular sensitivity matrix"))
        }
        Err(e) => return Err(e),
    };

    if !outcome.converged {
        if outcome.iterations < max_iter {
            return Err(diverged(
                outcome.iterations,
                format!("Newton stalled at residual {:.3e}", outcome.residual_norm),
            ));
        }
        return Err(Error::MaxIterationsExceeded {
            iterations: outcome.iterations,
            residual: outcome.residual_norm,
        });
    }

    let path = integrate_augmented(&augmented_start(spec, &outcome.root), spec, SHOOT_RTOL)?;
    Ok(ShootResult {
        terminal_costate_norm: norm_inf(&path.final_value()[n..]),
        initial_costate: outcome.root,
        converged: true,
        iterations: outcome.iterations,
        trajectory: augmented_trajectory(&path.times, &path.values, spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AgentState;
    use crate::pmp::augmented_deriv;

    fn trivial() -> ScenarioSpec {
        ScenarioSpec {
            alpha: 0.0,
            beta: 0.0,
            ..ScenarioSpec::new(
                2,
                vec![
                    AgentState::at_rest(&[2.0, 0.0]),
                    AgentState::at_rest(&[-2.0, 0.0]),
                ],
                vec![AgentState::at_rest(&[0.0, 0.0])],
            )
        }
    }

    fn herding(tf: f64) -> ScenarioSpec {
        ScenarioSpec {
            tf,
            ..ScenarioSpec::new(
                2,
                vec![
                    AgentState::at_rest(&[2.0, 0.3]),
                    AgentState::at_rest(&[-0.5, 1.8]),
                ],
                vec![AgentState::new(vec![1.0, 0.2], vec![0.1, -0.2])],
            )
        }
    }

    fn lone_dog(tf: f64) -> ScenarioSpec {
        ScenarioSpec {
            tf,
            alpha: 0.0,
            beta: 1.0,
            ..ScenarioSpec::new(
                2,
                vec![AgentState::new(vec![1.0, -0.5], vec![0.2, 0.3])],
                vec![],
            )
        }
    }

    /// `exp(a)` by scaling and squaring a Taylor series.
    fn expm(a: &DenseMatrix) -> DenseMatrix {
        let norm = a.norm_inf();
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let scaled = a.scale(0.5f64.powi(squarings));
        let mut term = DenseMatrix::identity(a.rows());
        let mut sum = term.clone();
        for k in 1..30 {
            term = term.matmul(&scaled).scale(1.0 / k as f64);
            sum = &sum + &term;
        }
        for _ in 0..squarings {
            sum = sum.matmul(&sum);
        }
        sum
    }

    #[test]
    fn zero_costate_stays_zero() {
        let spec = trivial();
        let aug0 = augmented_start(&spec, &[0.0; 12]);
        let (aug_f, sens) = integrate_with_sensitivity(&aug0, &spec, 1e-9).unwrap();
        assert!(aug_f[12..].iter().all(|v| *v == 0.0));
        for j in 0..2 {
            for k in 0..2 {
                let i = 2 + 4 * j + k;
                assert!(
                    sens[(i, i)].abs() > 0.1,
                    "q_d diagonal {i}: {}",
                    sens[(i, i)]
                );
            }
        }
    }

    #[test]
    fn linear_sensitivity_matches_matrix_exponential() {
        let spec = lone_dog(1.5);
        let aug0 = augmented_start(&spec, &[0.3, -0.1, 0.2, 0.4]);
        // the augmented system is linear: y' = A y with A its Jacobian
        let a = augmented_jacobian(&aug0, &spec);
        let phi = expm(&a.scale(spec.tf));
        let (aug_f, sens) = integrate_with_sensitivity(&aug0, &spec, 1e-11).unwrap();
        let expect = phi.block(4, 4, 4, 4);
        assert!((&sens - &expect).max_abs() < 1e-6, "{sens:?} vs {expect:?}");
        let yf = phi.matvec(&aug0);
        for (a, b) in aug_f.iter().zip(&yf) {
            assert!((a - b).abs() < 1e-6);
        }
        // A y reproduces the augmented derivative
        let dy = augmented_deriv(&aug0, &spec);
        for (a, b) in a.matvec(&aug0).iter().zip(&dy) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn check_against_differences(spec: &ScenarioSpec, costate: &[f64]) {
        let n = spec.layout().state_len();
        let aug0 = augmented_start(spec, costate);
        let (_, sens) = integrate_with_sensitivity(&aug0, spec, 1e-11).unwrap();
        let h = 1e-6;
        for k in 0..n {
            let mut plus = costate.to_vec();
            let mut minus = costate.to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fp = integrate_augmented(&augmented_start(spec, &plus), spec, 1e-12).unwrap();
            let fm = integrate_augmented(&augmented_start(spec, &minus), spec, 1e-12).unwrap();
            for i in 0..n {
                let fd = (fp.final_value()[n + i] - fm.final_value()[n + i]) / (2.0 * h);
                let scale = sens[(i, k)].abs().max(1.0);
                assert!(
                    (fd - sens[(i, k)]).abs() <= 1e-4 * scale,
                    "entry ({i},{k}): fd {fd} vs {}",
                    sens[(i, k)]
                );
            }
        }
    }

    #[test]
    fn sensitivity_matches_finite_differences() {
        let spec = herding(0.5);
        let costate: Vec<f64> = (0..12).map(|k| 0.3 * ((k as f64) * 1.3).sin()).collect();
        check_against_differences(&spec, &costate);
    }

    #[test]
    fn sensitivity_matches_finite_differences_ring_3d() {
        let spec = ScenarioSpec {
            tf: 0.5,
            dog_cost: crate::dynamics::DogCostMode::Ring,
            beta: 0.5,
            ..ScenarioSpec::new(
                3,
                vec![AgentState::at_rest(&[1.5, 0.2, -0.4])],
                vec![AgentState::at_rest(&[0.6, -0.3, 0.2])],
            )
        };
        let costate: Vec<f64> = (0..12).map(|k| 0.2 * ((k as f64) * 0.7).cos()).collect();
        check_against_differences(&spec, &costate);
    }

    #[test]
    fn trivial_scenario_is_a_fixed_point() {
        let spec = trivial();
        let res = shoot(&spec, &[0.0; 12], 10, 1e-10).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 1);
        assert!(res.trajectory.controls.iter().flatten().all(|u| *u == 0.0));
    }

    #[test]
    fn linear_scenario_converges_and_is_idempotent() {
        let spec = lone_dog(1.0);
        let tol = 1e-9;
        let res = shoot(&spec, &[0.0; 4], 10, tol).unwrap();
        assert!(res.converged);
        assert!(res.terminal_costate_norm <= tol);
        let again = integrate_augmented(
            &augmented_start(&spec, &res.initial_costate),
            &spec,
            SHOOT_RTOL,
        )
        .unwrap();
        assert!(norm_inf(&again.final_value()[4..]) <= tol);
    }

    #[test]
    fn wrong_guess_length() {
        assert!(matches!(
            shoot(&trivial(), &[0.0; 3], 5, 1e-8),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn huge_guess_is_divergent() {
        let err = shoot(&herding(1.0), &[1e9; 12], 5, 1e-8).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn gaussian_guess_is_seeded() {
        let spec = herding(1.0);
        let a = gaussian_costate_guess(&spec, 1.0, 4).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, gaussian_costate_guess(&spec, 1.0, 4).unwrap());
        assert_ne!(a, gaussian_costate_guess(&spec, 1.0, 5).unwrap());
        let b = gaussian_costate_guess(&spec, 2.0, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        assert!(gaussian_costate_guess(&spec, 0.0, 4).is_err());
        assert!(gaussian_costate_guess(&spec, f64::NAN, 4).is_err());
    }
}
