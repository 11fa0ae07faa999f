//! Closed-loop infinite-horizon LQR.
//!
//! At every evaluation the dynamics are linearized at the current state,
//! the Riccati equation for that frozen linearization is solved, and the
//! feedback `u = −Kx` regulates toward the origin.

mod care;

pub use care::{lqr_gain, riccati_residual, solve_care, CareOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bvp::SolverReport;
use crate::dynamics::{
    control_jacobian, dynamics_jacobian, state_deriv, trajectory_cost, ScenarioSpec,
};
use crate::error::{Error, Result};
use crate::numkernel::{integrate_adaptive, DenseMatrix};
use crate::trajectory::Trajectory;

/// Diagonal weights of the quadratic regulator cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrWeights {
    pub control_effort: f64,
    pub sheep_pos: f64,
    pub sheep_vel: f64,
    pub dog_vel: f64,
    pub dog_pos: f64,
    /// Interaction regularizer used in place of the scenario's.
    pub epsilon: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            control_effort: 10.0,
            sheep_pos: 10.0,
            sheep_vel: 1.0,
            dog_vel: 0.1,
            dog_pos: 0.2,
            epsilon: 0.1,
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.control_effort > 0.0) {
            return Err(Error::Validation(format!(
                "control_effort must be positive, got {}",
                self.control_effort
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Validation(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        for (name, v) in [
            ("sheep_pos", self.sheep_pos),
            ("sheep_vel", self.sheep_vel),
            ("dog_vel", self.dog_vel),
            ("dog_pos", self.dog_pos),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The scenario with this table's interaction regularizer.
    pub fn apply_to(&self, spec: &ScenarioSpec) -> ScenarioSpec {
        ScenarioSpec {
            epsilon: self.epsilon,
            ..spec.clone()
        }
    }
}

/// `(Q, R)` with the default regularization.
pub fn weight_matrices(spec: &ScenarioSpec, w: &LqrWeights) -> (DenseMatrix, DenseMatrix) {
    weight_matrices_with(spec, w, CareOptions::default().q_regularization)
}

/// Diagonal `Q` in the packed state layout plus `q_regularization`, and
/// `R = control_effort·I`.
pub fn weight_matrices_with(
    spec: &ScenarioSpec,
    w: &LqrWeights,
    q_regularization: f64,
) -> (DenseMatrix, DenseMatrix) {
    let l = spec.layout();
    let mut diag = vec![0.0; l.state_len()];
    let mut fill = |start: usize, v: f64| diag[start..start + l.dim].fill(v);
    for j in 0..l.dogs {
        fill(l.dog_pos(j), w.dog_pos);
        fill(l.dog_vel(j), w.dog_vel);
    }
    for i in 0..l.sheep {
        fill(l.sheep_pos(i), w.sheep_pos);
        fill(l.sheep_vel(i), w.sheep_vel);
    }
    let mut q = DenseMatrix::from_diagonal(&diag);
    q.add_diagonal(q_regularization);
    let r = DenseMatrix::identity(l.control_len()).scale(w.control_effort);
    (q, r)
}

/// Last successful gain, reused when the Riccati solve fails.
#[derive(Clone, Debug, Default)]
pub struct ControllerCache {
    gain: Option<DenseMatrix>,
    /// Evaluations that fell back to the cached gain.
    pub fallbacks: usize,
}

impl ControllerCache {
    pub fn gain(&self) -> Option<&DenseMatrix> {
        self.gain.as_ref()
    }
}

/// Frozen-linearization regulator for one scenario.
#[derive(Clone, Debug)]
pub struct LqrController {
    spec: ScenarioSpec,
    b: DenseMatrix,
    q: DenseMatrix,
    r: DenseMatrix,
    opts: CareOptions,
}

impl LqrController {
    /// `spec` is used as given; apply the weights' ε beforehand if needed.
    pub fn new(spec: &ScenarioSpec, w: &LqrWeights, opts: &CareOptions) -> Result<Self> {
        w.validate()?;
        let (q, r) = weight_matrices_with(spec, w, opts.q_regularization);
        Ok(Self {
            spec: spec.clone(),
            b: control_jacobian(spec),
            q,
            r,
            opts: opts.clone(),
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Gain of the linearization at `state`.
    pub fn gain_at(&self, state: &[f64]) -> Result<DenseMatrix> {
        let a = dynamics_jacobian(state, &self.spec);
        let p = solve_care(&a, &self.b, &self.q, &self.r, &self.opts)?;
        lqr_gain(&p, &self.b, &self.r)
    }

    /// `u = −Kx`, falling back to the cached gain when the Riccati solve
    /// fails.
    pub fn control(&self, state: &[f64], cache: &mut ControllerCache) -> Result<Vec<f64>> {
        match self.gain_at(state) {
            Ok(k) => {
                let u = k.matvec(state).iter().map(|v| -v).collect();
                cache.gain = Some(k);
                Ok(u)
            }
            Err(Error::NoStabilizingSolution(msg)) => {
                let Some(k) = cache.gain.as_ref() else {
                    return Err(Error::ControllerStalled(format!(
                        "no stabilizing gain at the initial state: {msg}"
                    )));
                };
                cache.fallbacks += 1;
                log::debug!("Riccati solve failed ({msg}); reusing the previous gain");
                Ok(k.matvec(state).iter().map(|v| -v).collect())
            }
            Err(e) => Err(e),
        }
    }

    /// Closed-loop derivative and the control applied.
    pub fn deriv(
        &self,
        state: &[f64],
        cache: &mut ControllerCache,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.control(state, cache)?;
        Ok((state_deriv(state, &u, &self.spec), u))
    }
}

/// One closed-loop evaluation with the weights' ε applied to `spec`.
pub fn closed_loop_deriv(
    state: &[f64],
    spec: &ScenarioSpec,
    w: &LqrWeights,
    cache: &mut ControllerCache,
) -> Result<(Vec<f64>, Vec<f64>)> {
    LqrController::new(&w.apply_to(spec), w, &CareOptions::default())?.deriv(state, cache)
}

/// Per-run health of the frozen-linearization controller.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LqrDiagnostics {
    /// Accepted steps whose Riccati solve failed and reused a gain.
    pub care_fallbacks: usize,
    /// Accepted steps where `A − BK` had an eigenvalue with real part
    /// ≥ 1e-8.
    pub unstable_steps: usize,
    pub max_spectral_abscissa: f64,
    /// Smallest dog–sheep distance and when it occurred.
    pub closest_approach: Option<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LqrRun {
    pub trajectory: Trajectory,
    pub report: SolverReport,
    pub diagnostics: LqrDiagnostics,
}

fn spectral_abscissa(m: &DenseMatrix) -> f64 {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    dm.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn simulate_lqr(
    spec: &ScenarioSpec,
    w: &LqrWeights,
    rtol: f64,
) -> Result<(Trajectory, SolverReport)> {
    let run = simulate_lqr_with(spec, w, rtol, &CareOptions::default())?;
    Ok((run.trajectory, run.report))
}

/// Integrates the closed loop over `[0, tf]`.
///
/// Controls are recorded at the accepted steps by replaying the controller
/// along the accepted states.
pub fn simulate_lqr_with(
    spec: &ScenarioSpec,
    w: &LqrWeights,
    rtol: f64,
    opts: &CareOptions,
) -> Result<LqrRun> {
    spec.validate()?;
    let spec = w.apply_to(spec);
    let ctrl = LqrController::new(&spec, w, opts)?;

    let mut cache = ControllerCache::default();
    let path = integrate_adaptive(
        |_, x, dx| {
            let (d, _) = ctrl.deriv(x, &mut cache)?;
            dx.copy_from_slice(&d);
            Ok(())
        },
        &spec.initial_state(),
        (0.0, spec.tf),
        rtol,
        1e-2 * rtol,
    )?;

    let mut replay = ControllerCache::default();
    let mut diagnostics = LqrDiagnostics {
        max_spectral_abscissa: f64::NEG_INFINITY,
        ..LqrDiagnostics::default()
    };
    let mut controls = Vec::with_capacity(path.len());
    for (t, x) in path.times.iter().zip(&path.values) {
        let before = replay.fallbacks;
        let u = ctrl.control(x, &mut replay)?;
        if replay.fallbacks > before {
            diagnostics.care_fallbacks += 1;
        }
        let k = replay
            .gain()
            .expect("a gain exists after a successful control");
        let mut closed = dynamics_jacobian(x, &spec);
        closed.add_block(0, 0, &ctrl.b.matmul(k), -1.0);
        let abscissa = spectral_abscissa(&closed);
        if abscissa >= 1e-8 {
            diagnostics.unstable_steps += 1;
            log::debug!("closed loop unstable at t = {t:.4} (abscissa {abscissa:.3e})");
        }
        diagnostics.max_spectral_abscissa = diagnostics.max_spectral_abscissa.max(abscissa);
        controls.push(u);
    }

    let trajectory = Trajectory {
        layout: spec.layout(),
        times: path.times,
        states: path.values,
        controls,
        costates: None,
    };
    diagnostics.closest_approach = trajectory.closest_approach();
    if diagnostics.unstable_steps > 0 || diagnostics.care_fallbacks > 0 {
        log::warn!(
            "LQR: {} unstable steps, {} gain fallbacks, closest dog-sheep approach {:?}",
            diagnostics.unstable_steps,
            diagnostics.care_fallbacks,
            diagnostics.closest_approach
        );
    }
    let report = SolverReport {
        converged: true,
        restarts_used: 0,
        newton_iterations: 0,
        max_rms_residual: 0.0,
        final_cost: trajectory_cost(&trajectory, &spec)?,
    };
    Ok(LqrRun {
        trajectory,
        report,
        diagnostics,
    })
}
