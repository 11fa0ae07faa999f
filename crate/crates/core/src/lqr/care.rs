//! Continuous algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
//!
//! The stabilizing solution is read off the stable invariant subspace of
//! the Hamiltonian matrix `[[A, −G], [−Q, −Aᵀ]]`, `G = BR⁻¹Bᵀ`, computed
//! with the matrix sign function, and then polished by Newton–Kleinman
//! steps whose Lyapunov equations are also solved by sign iteration.

use crate::error::{Error, Result};
use crate::numkernel::linalg::{matrix_sign, symmetric_eigenvalues};
use crate::numkernel::{inverse, least_squares, lu_factor, DenseMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct CareOptions {
    /// Residual bound relative to `1 + ‖Q‖∞`.
    pub residual_tol: f64,
    pub max_refine_iter: usize,
    /// Added to the diagonal of the state weight by
    /// [`weight_matrices_with`](super::weight_matrices_with).
    pub q_regularization: f64,
}

impl Default for CareOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-9,
            max_refine_iter: 25,
            q_regularization: 1e-8,
        }
    }
}

const SIGN_TOL: f64 = 1e-13;
const SIGN_MAX_ITER: usize = 100;
const PSD_FLOOR: f64 = 1e-8;

fn no_solution(msg: impl Into<String>) -> Error {
    Error::NoStabilizingSolution(msg.into())
}

fn check_dims(a: &DenseMatrix, b: &DenseMatrix, q: &DenseMatrix, r: &DenseMatrix) -> Result<()> {
    let n = a.rows();
    let ok = a.is_square()
        && b.rows() == n
        && q.rows() == n
        && q.cols() == n
        && r.is_square()
        && r.rows() == b.cols();
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "CARE with A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            q.rows(),
            q.cols(),
            r.rows(),
            r.cols()
        )))
    }
}

/// `AᵀP + PA − PGP + Q`.
pub fn riccati_residual(
    a: &DenseMatrix,
    g: &DenseMatrix,
    q: &DenseMatrix,
    p: &DenseMatrix,
) -> DenseMatrix {
    let pa = p.matmul(a);
    let mut res = &pa + &pa.transpose();
    res.add_block(0, 0, &p.matmul(g).matmul(p), -1.0);
    res.add_block(0, 0, q, 1.0);
    res
}

/// Solves `FᵀX + XF + C = 0` for stable `F`.
///
/// Uses the sign function of `[[F, 0], [C, −Fᵀ]]`, which converges to
/// `[[−I, 0], [2X, I]]`. Returns `None` if `F` is not stable.
pub(crate) fn lyapunov(f: &DenseMatrix, c: &DenseMatrix) -> Option<DenseMatrix> {
    let n = f.rows();
    let nf = n as f64;
    let mut e = f.clone();
    let mut cc = c.clone();
    let mut scaling = true;
    for _ in 0..SIGN_MAX_ITER {
        let lu = lu_factor(&e).ok()?;
        let s = if scaling {
            (-lu.log_abs_det() / nf).exp()
        } else {
            1.0
        };
        let e_inv = lu.inverse();
        let mut e_next = e.scale(0.5 * s);
        e_next.add_block(0, 0, &e_inv, 0.5 / s);
        let mut c_next = cc.scale(0.5 * s);
        c_next.add_block(0, 0, &e_inv.transpose().matmul(&cc).matmul(&e_inv), 0.5 / s);
        if !(e_next.is_finite() && c_next.is_finite()) {
            return None;
        }
        let delta = (&e_next - &e).norm_one();
        let size = e_next.norm_one();
        e = e_next;
        cc = c_next;
        if delta <= SIGN_TOL * size {
            break;
        }
        if delta < 1e-2 * size {
            scaling = false;
        }
    }
    let mut plus_i = e;
    plus_i.add_diagonal(1.0);
    if plus_i.norm_inf() > 1e-6 {
        return None;
    }
    Some(cc.scale(0.5).symmetrized())
}

/// Stabilizing solution of the CARE.
///
/// The returned `P` is symmetric positive semidefinite and satisfies
/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖∞ ≤ residual_tol·(1 + ‖Q‖∞)`.
pub fn solve_care(
    a: &DenseMatrix,
    b: &DenseMatrix,
    q: &DenseMatrix,
    r: &DenseMatrix,
    opts: &CareOptions,
) -> Result<DenseMatrix> {
    check_dims(a, b, q, r)?;
    let n = a.rows();
    let r_inv = inverse(r).map_err(|_| no_solution("control weight R is singular"))?;
    let g = b.matmul(&r_inv).matmul(&b.transpose()).symmetrized();

    let mut h = DenseMatrix::zeros(2 * n, 2 * n);
    h.set_block(0, 0, a);
    h.set_block(0, n, &-&g);
    h.set_block(n, 0, &-q);
    h.set_block(n, n, &-&a.transpose());

    let w = matrix_sign(&h, SIGN_TOL, SIGN_MAX_ITER)
        .ok_or_else(|| no_solution("Hamiltonian matrix has eigenvalues on the imaginary axis"))?;
    if w.trace().abs() >= 0.5 {
        return Err(no_solution(format!(
            "stable subspace has the wrong dimension (sign trace {:.3})",
            w.trace()
        )));
    }

    // (W + I)[I; P] = 0
    let mut lhs = DenseMatrix::zeros(2 * n, n);
    lhs.set_block(0, 0, &w.block(0, n, n, n));
    let mut w22 = w.block(n, n, n, n);
    w22.add_diagonal(1.0);
    lhs.set_block(n, 0, &w22);
    let mut rhs = DenseMatrix::zeros(2 * n, n);
    let mut w11 = w.block(0, 0, n, n);
    w11.add_diagonal(1.0);
    rhs.set_block(0, 0, &-&w11);
    rhs.set_block(n, 0, &-&w.block(n, 0, n, n));
    let raw = least_squares(&lhs, &rhs)
        .map_err(|_| no_solution("stable subspace is not a graph over the state"))?;

    let asym = (&raw - &raw.transpose()).norm_inf();
    if !(asym <= 1e-6 * (1.0 + raw.norm_inf())) {
        return Err(no_solution(format!(
            "subspace solution is not symmetric ({asym:.3e})"
        )));
    }
    let mut p = raw.symmetrized();

    let bound = opts.residual_tol * (1.0 + q.norm_inf());
    let mut res_norm = riccati_residual(a, &g, q, &p).norm_inf();
    for _ in 0..opts.max_refine_iter {
        if res_norm <= 1e-3 * bound {
            break;
        }
        let mut f = a.clone();
        f.add_block(0, 0, &g.matmul(&p), -1.0);
        let res = riccati_residual(a, &g, q, &p);
        let Some(dp) = lyapunov(&f, &res) else {
            break;
        };
        let candidate = (&p + &dp).symmetrized();
        let cand_norm = riccati_residual(a, &g, q, &candidate).norm_inf();
        if !(cand_norm < res_norm) {
            break;
        }
        p = candidate;
        res_norm = cand_norm;
    }

    if !(res_norm <= bound) {
        return Err(no_solution(format!(
            "Riccati residual {res_norm:.3e} exceeds {bound:.3e}"
        )));
    }
    let floor = symmetric_eigenvalues(&p)[0];
    if floor < -PSD_FLOOR * (1.0 + p.norm_inf()) {
        return Err(no_solution(format!(
            "solution is indefinite (eigenvalue {floor:.3e})"
        )));
    }
    Ok(p)
}

/// Feedback gain `K = R⁻¹BᵀP`; the control law is `u = −Kx`.
pub fn lqr_gain(p: &DenseMatrix, b: &DenseMatrix, r: &DenseMatrix) -> Result<DenseMatrix> {
    if p.rows() != b.rows() || r.rows() != b.cols() || !p.is_square() || !r.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "gain with P {}x{}, B {}x{}, R {}x{}",
            p.rows(),
            p.cols(),
            b.rows(),
            b.cols(),
            r.rows(),
            r.cols()
        )));
    }
    let bt_p = b.transpose().matmul(p);
    Ok(lu_factor(r)?.solve_matrix(&bt_p))
}
