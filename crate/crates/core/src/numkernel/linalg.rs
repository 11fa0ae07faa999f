//! Dense LU with partial pivoting, least squares, and a few spectral helpers.

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest row norm are singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// Packed LU factors `P·A = L·U` of a square matrix.
#[derive(Clone, Debug)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
    parity: f64,
}

pub fn lu_factor(a: &DenseMatrix) -> Result<LuFactors> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "LU needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let threshold = SINGULAR_PIVOT_RATIO * a.norm_inf();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut parity = 1.0;

    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in (k + 1)..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best >= threshold) || best == 0.0 {
            return Err(Error::SingularMatrix {
                column: k,
                pivot: best,
                threshold,
            });
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            parity = -parity;
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let l = lu[(i, k)] / pivot;
            lu[(i, k)] = l;
            if l == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= l * u;
            }
        }
    }
    Ok(LuFactors { lu, perm, parity })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&x[i + 1..])
                .map(|(u, y)| u * y)
                .sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let n = self.dim();
        assert_eq!(b.rows(), n);
        let mut out = DenseMatrix::zeros(n, b.cols());
        let mut col = vec![0.0; n];
        for j in 0..b.cols() {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> DenseMatrix {
        self.solve_matrix(&DenseMatrix::identity(self.dim()))
    }

    /// `ln |det A|`
    pub fn log_abs_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.lu[(i, i)].abs().ln()).sum()
    }

    pub fn det(&self) -> f64 {
        self.parity * (0..self.dim()).map(|i| self.lu[(i, i)]).product::<f64>()
    }
}

/// Solves the square system `a·x = b` by LU with partial pivoting.
pub fn linear_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} for a {}x{} system",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    Ok(lu_factor(a)?.solve(b))
}

pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(lu_factor(a)?.inverse())
}

/// Least-squares solution of `a·X ≈ b` for a tall, full-column-rank `a`,
/// via Householder QR.
pub fn least_squares(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, n) = (a.rows(), a.cols());
    if m < n || b.rows() != m {
        return Err(Error::DimensionMismatch(format!(
            "least squares with a {}x{} matrix and {} rhs rows",
            m,
            n,
            b.rows()
        )));
    }
    let mut r = a.clone();
    let mut qtb = b.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let norm = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm <= SINGULAR_PIVOT_RATIO * scale {
            return Err(Error::SingularMatrix {
                column: k,
                pivot: norm,
                threshold: SINGULAR_PIVOT_RATIO * scale,
            });
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let apply = |mat: &mut DenseMatrix, from_col: usize| {
            for j in from_col..mat.cols() {
                let dot: f64 = v
                    .iter()
                    .enumerate()
                    .map(|(t, vi)| vi * mat[(k + t, j)])
                    .sum();
                let f = 2.0 * dot / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    mat[(k + t, j)] -= f * vi;
                }
            }
        };
        apply(&mut r, k);
        apply(&mut qtb, 0);
    }
    let mut x = DenseMatrix::zeros(n, b.cols());
    for j in 0..b.cols() {
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|t| r[(i, t)] * x[(t, j)]).sum();
            x[(i, j)] = (qtb[(i, j)] - s) / r[(i, i)];
        }
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    assert!(a.is_square());
    let n = a.rows();
    let mut m = a.symmetrized();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-30 * m.max_abs().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Matrix sign function by the scaled Newton iteration
/// `Z ← (cZ + (cZ)⁻¹)/2` with determinant scaling.
///
/// Returns `None` when the iteration does not settle (eigenvalues on or
/// very near the imaginary axis) or hits a singular iterate.
pub fn matrix_sign(z: &DenseMatrix, tol: f64, max_iter: usize) -> Option<DenseMatrix> {
    let n = z.rows() as f64;
    let mut w = z.clone();
    let mut scaling = true;
    for _ in 0..max_iter {
        let lu = lu_factor(&w).ok()?;
        let c = if scaling {
            (-lu.log_abs_det() / n).exp()
        } else {
            1.0
        };
        let inv = lu.inverse();
        let mut next = w.scale(0.5 * c);
        next.add_block(0, 0, &inv, 0.5 / c);
        if !next.is_finite() {
            return None;
        }
        let delta = (&next - &w).norm_one();
        let size = next.norm_one();
        w = next;
        if delta <= tol * size {
            return Some(w);
        }
        if delta < 1e-2 * size {
            scaling = false;
        }
    }
    None
}
