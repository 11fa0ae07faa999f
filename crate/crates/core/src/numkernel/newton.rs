use super::{band::BandLu, linalg, BandMatrix, DenseMatrix};
use crate::error::Result;

/// A Jacobian that can solve `J·dx = rhs`.
pub trait LinearSystem {
    fn solve_system(&self, rhs: &[f64]) -> Result<Vec<f64>>;
}

impl LinearSystem for DenseMatrix {
    fn solve_system(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        linalg::linear_solve(self, rhs)
    }
}

impl LinearSystem for BandLu {
    fn solve_system(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(rhs))
    }
}

impl LinearSystem for BandMatrix {
    fn solve_system(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.clone().factor()?.solve(rhs))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub root: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the residual at `root`.
    pub residual_norm: f64,
}

/// Step halvings tried before a step counts as a stall.
pub const MAX_HALVINGS: usize = 8;
/// Consecutive stalls that end the iteration.
pub const MAX_STALLS: usize = 3;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton iteration.
///
/// Each step is halved up to [`MAX_HALVINGS`] times until the residual
/// 2-norm decreases; if no halving helps, the full step is taken and
/// counted as a stall. The iteration converges when `‖residual‖∞ ≤ tol`
/// and gives up after `max_iter` steps or [`MAX_STALLS`] consecutive
/// stalls.
///
/// A trial point whose residual evaluation fails is treated as a
/// non-decrease. Failures at accepted points and singular Jacobians are
/// returned as errors.
pub fn newton_damped<R, J, M>(
    mut residual: R,
    mut jacobian: J,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<NewtonOutcome>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<M>,
    M: LinearSystem,
{
    let mut x = x0.to_vec();
    let mut f = residual(&x)?;
    let mut stalls = 0;

    if norm_inf(&f) <= tol {
        return Ok(NewtonOutcome {
            residual_norm: norm_inf(&f),
            root: x,
            converged: true,
            iterations: 0,
        });
    }

    for iter in 1..=max_iter {
        let jac = jacobian(&x)?;
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = jac.solve_system(&neg_f)?;

        let f_norm = norm2(&f);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
            if let Ok(ft) = residual(&trial) {
                if norm2(&ft) < f_norm {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= 0.5;
        }

        match accepted {
            Some((xt, ft)) => {
                x = xt;
                f = ft;
                stalls = 0;
            }
            None => {
                x = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
                f = residual(&x)?;
                stalls += 1;
            }
        }

        let r = norm_inf(&f);
        if r <= tol {
            return Ok(NewtonOutcome {
                root: x,
                converged: true,
                iterations: iter,
                residual_norm: r,
            });
        }
        if stalls >= MAX_STALLS || !r.is_finite() {
            return Ok(NewtonOutcome {
                root: x,
                converged: false,
                iterations: iter,
                residual_norm: r,
            });
        }
    }

    Ok(NewtonOutcome {
        residual_norm: norm_inf(&f),
        root: x,
        converged: false,
        iterations: max_iter,
    })
}
