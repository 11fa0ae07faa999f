//! Two-point boundary-value solving by cubic Hermite collocation.
//!
//! On every interval the solution is the cubic Hermite segment through the
//! node values and their derivatives `f(y_k)`, `f(y_{k+1})`; the ODE is
//! enforced at the interval midpoint. All node values are solved for at
//! once by damped Newton on a banded Jacobian. Converged meshes are checked
//! at the quarter points and intervals with large relative residuals are
//! bisected until every interval passes or the node budget runs out.

use crate::dynamics::{trajectory_cost, ScenarioSpec};
use crate::error::{Error, Result};
use crate::numkernel::{newton_damped, BandMatrix, DenseMatrix, VectorField};
use crate::pmp::{augmented_trajectory, PmpSystem};
use crate::trajectory::Trajectory;

/// Collocation mesh: node times and one value vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Mesh {
    pub fn new(nodes: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::DimensionMismatch(format!(
                "a mesh needs at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} nodes but {} value vectors",
                nodes.len(),
                values.len()
            )));
        }
        if !nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::DimensionMismatch(
                "mesh nodes must be strictly increasing".into(),
            ));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(
                "mesh values have mixed lengths".into(),
            ));
        }
        Ok(Self { nodes, values })
    }

    /// `count` equally spaced nodes on `[t0, t1]` with values `init(t)`.
    pub fn uniform(t0: f64, t1: f64, count: usize, init: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let count = count.max(2);
        let nodes: Vec<f64> = (0..count)
            .map(|k| {
                if k + 1 == count {
                    t1
                } else {
                    t0 + (t1 - t0) * k as f64 / (count - 1) as f64
                }
            })
            .collect();
        let values = nodes.iter().map(|&t| init(t)).collect();
        Self::new(nodes, values)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    fn flatten(&self) -> Vec<f64> {
        self.values.concat()
    }

    fn from_flat(nodes: &[f64], flat: &[f64], dim: usize) -> Self {
        Self {
            nodes: nodes.to_vec(),
            values: flat.chunks(dim).map(<[f64]>::to_vec).collect(),
        }
    }

    /// Evaluates the piecewise cubic Hermite interpolant at `t`, clamped to
    /// the mesh span.
    pub fn interpolate(&self, field: &impl VectorField, t: f64) -> Vec<f64> {
        let last = self.nodes.len() - 1;
        let t = t.clamp(self.nodes[0], self.nodes[last]);
        let k = match self.nodes.partition_point(|&x| x <= t) {
            0 => 0,
            p => (p - 1).min(last - 1),
        };
        let seg = Segment::new(self, field, k);
        let tau = (t - self.nodes[k]) / seg.h;
        seg.value(tau)
    }

    /// Resamples onto `nodes` (which must lie within this mesh's span).
    pub fn resample(&self, nodes: &[f64], field: &impl VectorField) -> Result<Self> {
        let values = nodes.iter().map(|&t| self.interpolate(field, t)).collect();
        Self::new(nodes.to_vec(), values)
    }
}

/// One cubic Hermite segment.
struct Segment<'a> {
    y0: &'a [f64],
    y1: &'a [f64],
    f0: Vec<f64>,
    f1: Vec<f64>,
    t0: f64,
    h: f64,
}

impl<'a> Segment<'a> {
    fn new(mesh: &'a Mesh, field: &impl VectorField, k: usize) -> Self {
        let (t0, t1) = (mesh.nodes[k], mesh.nodes[k + 1]);
        Self {
            y0: &mesh.values[k],
            y1: &mesh.values[k + 1],
            f0: field.eval_vec(t0, &mesh.values[k]),
            f1: field.eval_vec(t1, &mesh.values[k + 1]),
            t0,
            h: t1 - t0,
        }
    }

    fn value(&self, tau: f64) -> Vec<f64> {
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        (0..self.y0.len())
            .map(|i| {
                h00 * self.y0[i]
                    + h10 * self.h * self.f0[i]
                    + h01 * self.y1[i]
                    + h11 * self.h * self.f1[i]
            })
            .collect()
    }

    fn derivative(&self, tau: f64) -> Vec<f64> {
        let t2 = tau * tau;
        let d00 = 6.0 * t2 - 6.0 * tau;
        let d10 = 3.0 * t2 - 4.0 * tau + 1.0;
        let d01 = -6.0 * t2 + 6.0 * tau;
        let d11 = 3.0 * t2 - 2.0 * tau;
        (0..self.y0.len())
            .map(|i| {
                (d00 * self.y0[i] + d01 * self.y1[i]) / self.h + d10 * self.f0[i] + d11 * self.f1[i]
            })
            .collect()
    }

    /// `y_c'(τ) − f(y_c(τ))` together with `f(y_c(τ))`.
    fn defect(&self, field: &impl VectorField, tau: f64) -> (Vec<f64>, Vec<f64>) {
        let y = self.value(tau);
        let f = field.eval_vec(self.t0 + tau * self.h, &y);
        let r = self
            .derivative(tau)
            .iter()
            .zip(&f)
            .map(|(a, b)| a - b)
            .collect();
        (r, f)
    }
}

/// Separated two-point boundary conditions: the first `left_len()`
/// equations involve only `y(a)`, the rest only `y(b)`.
pub trait BoundaryConditions {
    fn left_len(&self) -> usize;
    fn left(&self, ya: &[f64]) -> Vec<f64>;
    fn left_jacobian(&self, ya: &[f64]) -> DenseMatrix;
    fn right(&self, yb: &[f64]) -> Vec<f64>;
    fn right_jacobian(&self, yb: &[f64]) -> DenseMatrix;
}

/// Boundary conditions pinning individual components: `y_i(a) = v` on the
/// left and `y_i(b) = v` on the right.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedComponents {
    pub dim: usize,
    pub left: Vec<(usize, f64)>,
    pub right: Vec<(usize, f64)>,
}

impl FixedComponents {
    fn rows(dim: usize, pins: &[(usize, f64)]) -> DenseMatrix {
        let mut j = DenseMatrix::zeros(pins.len(), dim);
        for (r, &(c, _)) in pins.iter().enumerate() {
            j[(r, c)] = 1.0;
        }
        j
    }
}

impl BoundaryConditions for FixedComponents {
    fn left_len(&self) -> usize {
        self.left.len()
    }

    fn left(&self, ya: &[f64]) -> Vec<f64> {
        self.left.iter().map(|&(i, v)| ya[i] - v).collect()
    }

    fn left_jacobian(&self, _ya: &[f64]) -> DenseMatrix {
        Self::rows(self.dim, &self.left)
    }

    fn right(&self, yb: &[f64]) -> Vec<f64> {
        self.right.iter().map(|&(i, v)| yb[i] - v).collect()
    }

    fn right_jacobian(&self, _yb: &[f64]) -> DenseMatrix {
        Self::rows(self.dim, &self.right)
    }
}

/// Initial state fixed, terminal costate zero.
pub fn pmp_boundary(spec: &ScenarioSpec) -> FixedComponents {
    let n = spec.layout().state_len();
    FixedComponents {
        dim: 2 * n,
        left: spec.initial_state().into_iter().enumerate().collect(),
        right: (n..2 * n).map(|i| (i, 0.0)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvpOptions {
    /// Bound on each interval's normalized RMS residual.
    pub residual_tol: f64,
    pub max_nodes: usize,
    /// Newton iterations per mesh.
    pub max_newton_iter: usize,
    /// Collocation attempts in [`solve_with_restarts`].
    pub max_restarts: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-3,
            max_nodes: 5000,
            max_newton_iter: 20,
            max_restarts: 30,
        }
    }
}

impl BvpOptions {
    /// Tolerance on the ∞-norm of the collocation equations inside Newton.
    pub fn newton_tol(&self) -> f64 {
        1e-2 * self.residual_tol
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverReport {
    pub converged: bool,
    /// Collocation attempts made, counting the first.
    pub restarts_used: usize,
    pub newton_iterations: usize,
    /// Largest normalized interval residual of the returned solution.
    pub max_rms_residual: f64,
    pub final_cost: f64,
}

fn check_mesh(mesh: &Mesh, field: &impl VectorField, bc: &impl BoundaryConditions) -> Result<()> {
    if mesh.dim() != field.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mesh values have length {}, vector field has dimension {}",
            mesh.dim(),
            field.dim()
        )));
    }
    let probe_l = bc.left(&mesh.values[0]).len();
    let probe_r = bc.right(&mesh.values[mesh.len() - 1]).len();
    if probe_l != bc.left_len() || probe_l + probe_r != mesh.dim() {
        return Err(Error::DimensionMismatch(format!(
            "boundary conditions give {probe_l}+{probe_r} equations for dimension {}",
            mesh.dim()
        )));
    }
    Ok(())
}

/// Midpoint defect of every interval, node-major.
fn interval_defects(mesh: &Mesh, field: &impl VectorField) -> Vec<f64> {
    let mut out = Vec::with_capacity(mesh.intervals() * mesh.dim());
    for k in 0..mesh.intervals() {
        let seg = Segment::new(mesh, field, k);
        out.extend(seg.defect(field, 0.5).0);
    }
    out
}

/// Collocation residual: midpoint defect of each interval followed by the
/// boundary residual (left equations, then right).
pub fn collocation_residual(
    mesh: &Mesh,
    field: &impl VectorField,
    bc: &impl BoundaryConditions,
) -> Vec<f64> {
    let mut r = interval_defects(mesh, field);
    r.extend(bc.left(&mesh.values[0]));
    r.extend(bc.right(&mesh.values[mesh.len() - 1]));
    r
}

/// Residual in banded row order: left conditions, intervals, right conditions.
fn banded_residual(
    mesh: &Mesh,
    field: &impl VectorField,
    bc: &impl BoundaryConditions,
) -> Vec<f64> {
    let mut r = bc.left(&mesh.values[0]);
    r.extend(interval_defects(mesh, field));
    r.extend(bc.right(&mesh.values[mesh.len() - 1]));
    r
}

fn banded_jacobian(
    mesh: &Mesh,
    field: &impl VectorField,
    bc: &impl BoundaryConditions,
) -> BandMatrix {
    let d = mesh.dim();
    let ka = bc.left_len();
    let nodes = mesh.len();
    let mut jac = BandMatrix::zeros(nodes * d, ka + d - 1, 2 * d - 1 - ka);

    let jl = bc.left_jacobian(&mesh.values[0]);
    for r in 0..ka {
        for c in 0..d {
            let v = jl[(r, c)];
            if v != 0.0 {
                jac.add(r, c, v);
            }
        }
    }

    let node_jac: Vec<DenseMatrix> = (0..nodes)
        .map(|k| field.jacobian(mesh.nodes[k], &mesh.values[k]))
        .collect();
    let eye = DenseMatrix::identity(d);
    for k in 0..mesh.intervals() {
        let seg = Segment::new(mesh, field, k);
        let h = seg.h;
        let y_mid = seg.value(0.5);
        let jm = field.jacobian(seg.t0 + 0.5 * h, &y_mid);
        let (j0, j1) = (&node_jac[k], &node_jac[k + 1]);

        // ∂y_mid/∂y_k = I/2 + h/8 J_k,  ∂y_mid/∂y_{k+1} = I/2 − h/8 J_{k+1}
        let mut dm0 = eye.scale(0.5);
        dm0.add_block(0, 0, j0, h / 8.0);
        let mut dm1 = eye.scale(0.5);
        dm1.add_block(0, 0, j1, -h / 8.0);

        let mut a = eye.scale(-1.5 / h);
        a.add_block(0, 0, j0, -0.25);
        a.add_block(0, 0, &jm.matmul(&dm0), -1.0);
        let mut b = eye.scale(1.5 / h);
        b.add_block(0, 0, j1, -0.25);
        b.add_block(0, 0, &jm.matmul(&dm1), -1.0);

        let row0 = ka + k * d;
        for r in 0..d {
            for c in 0..d {
                let (va, vb) = (a[(r, c)], b[(r, c)]);
                if va != 0.0 {
                    jac.add(row0 + r, k * d + c, va);
                }
                if vb != 0.0 {
                    jac.add(row0 + r, (k + 1) * d + c, vb);
                }
            }
        }
    }

    let jr = bc.right_jacobian(&mesh.values[nodes - 1]);
    let row0 = ka + mesh.intervals() * d;
    let col0 = (nodes - 1) * d;
    for r in 0..jr.rows() {
        for c in 0..d {
            let v = jr[(r, c)];
            if v != 0.0 {
                jac.add(row0 + r, col0 + c, v);
            }
        }
    }
    jac
}

/// Normalized RMS residual of each interval, sampled at its quarter points.
pub fn interval_rms_residuals(mesh: &Mesh, field: &impl VectorField) -> Vec<f64> {
    (0..mesh.intervals())
        .map(|k| {
            let seg = Segment::new(mesh, field, k);
            let mut acc = 0.0;
            for tau in [0.25, 0.75] {
                let (r, f) = seg.defect(field, tau);
                acc += r
                    .iter()
                    .zip(&f)
                    .map(|(ri, fi)| {
                        let e = ri / (1.0 + fi.abs());
                        e * e
                    })
                    .sum::<f64>();
            }
            (0.5 * acc).sqrt()
        })
        .collect()
}

/// Largest midpoint defect normalized by `1 + |f|`, per interval.
fn midpoint_normalized(mesh: &Mesh, field: &impl VectorField) -> Vec<f64> {
    (0..mesh.intervals())
        .map(|k| {
            let seg = Segment::new(mesh, field, k);
            let (r, f) = seg.defect(field, 0.5);
            r.iter()
                .zip(&f)
                .fold(0.0f64, |m, (ri, fi)| m.max((ri / (1.0 + fi.abs())).abs()))
        })
        .collect()
}

fn bisect(mesh: &Mesh, field: &impl VectorField, refine: &[bool]) -> Mesh {
    let mut nodes = Vec::with_capacity(mesh.len() + refine.len());
    let mut values = Vec::with_capacity(mesh.len() + refine.len());
    for k in 0..mesh.intervals() {
        nodes.push(mesh.nodes[k]);
        values.push(mesh.values[k].clone());
        if refine[k] {
            let seg = Segment::new(mesh, field, k);
            nodes.push(mesh.nodes[k] + 0.5 * seg.h);
            values.push(seg.value(0.5));
        }
    }
    nodes.push(mesh.nodes[mesh.len() - 1]);
    values.push(mesh.values[mesh.len() - 1].clone());
    Mesh { nodes, values }
}

/// Solves the BVP on `initial_mesh` with refinement.
///
/// Returns the final mesh and a report. When the node budget would be
/// exceeded the best mesh so far is returned with `converged = false`; a
/// singular Newton Jacobian or a non-finite iterate is an error.
pub fn solve_collocation(
    field: &impl VectorField,
    bc: &impl BoundaryConditions,
    initial_mesh: &Mesh,
    opts: &BvpOptions,
) -> Result<(Mesh, SolverReport)> {
    check_mesh(initial_mesh, field, bc)?;
    let d = initial_mesh.dim();
    let mut mesh = initial_mesh.clone();
    let mut newton_total = 0;

    loop {
        let nodes = mesh.nodes.clone();
        let outcome = newton_damped(
            |flat: &[f64]| {
                Ok(banded_residual(
                    &Mesh::from_flat(&nodes, flat, d),
                    field,
                    bc,
                ))
            },
            |flat: &[f64]| banded_jacobian(&Mesh::from_flat(&nodes, flat, d), field, bc).factor(),
            &mesh.flatten(),
            opts.max_newton_iter,
            opts.newton_tol(),
        )?;
        newton_total += outcome.iterations;
        if outcome.root.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotConverged(
                "collocation Newton produced non-finite values".into(),
            ));
        }
        mesh = Mesh::from_flat(&nodes, &outcome.root, d);

        let rms = interval_rms_residuals(&mesh, field);
        let max_rms = rms.iter().copied().fold(0.0, f64::max);
        let mut refine: Vec<bool> = rms.iter().map(|&r| r > opts.residual_tol).collect();

        let report = |converged| SolverReport {
            converged,
            restarts_used: 1,
            newton_iterations: newton_total,
            max_rms_residual: max_rms,
            final_cost: 0.0,
        };

        if outcome.converged && !refine.contains(&true) {
            return Ok((mesh, report(true)));
        }
        if !refine.contains(&true) {
            // Newton stalled although the quarter points look fine: refine
            // where the collocation equations themselves are violated.
            let mid = midpoint_normalized(&mesh, field);
            refine = mid.iter().map(|&r| r > opts.newton_tol()).collect();
            if !refine.contains(&true) {
                refine.fill(true);
            }
        }
        let added = refine.iter().filter(|&&r| r).count();
        if mesh.len() + added > opts.max_nodes {
            log::debug!(
                "collocation stopped at {} nodes (max rms residual {max_rms:.3e})",
                mesh.len()
            );
            return Ok((mesh, report(false)));
        }
        mesh = bisect(&mesh, field, &refine);
    }
}

/// Solves the herding BVP from `guess`, restarting from the resampled
/// solution whenever the node budget runs out.
///
/// Non-convergence after `opts.max_restarts` attempts is reported through
/// `converged = false` alongside the best trajectory found.
pub fn solve_with_restarts(
    spec: &ScenarioSpec,
    guess: &Mesh,
    opts: &BvpOptions,
) -> Result<(Trajectory, SolverReport)> {
    spec.validate()?;
    let field = PmpSystem::new(spec);
    let bc = pmp_boundary(spec);
    let mut current = guess.clone();
    let mut newton_total = 0;
    let mut best: Option<(Mesh, SolverReport)> = None;

    for attempt in 1..=opts.max_restarts.max(1) {
        let (mesh, rep) = solve_collocation(&field, &bc, &current, opts)?;
        newton_total += rep.newton_iterations;
        let converged = rep.converged;
        if best
            .as_ref()
            .is_none_or(|(_, b)| converged || rep.max_rms_residual < b.max_rms_residual)
        {
            best = Some((
                mesh.clone(),
                SolverReport {
                    restarts_used: attempt,
                    ..rep
                },
            ));
        }
        if converged {
            break;
        }
        log::info!(
            "restart {attempt}: max rms residual {:.3e} at {} nodes",
            rep.max_rms_residual,
            mesh.len()
        );
        current = mesh.resample(&guess.nodes, &field)?;
    }

    let (mesh, mut report) = best.expect("at least one attempt runs");
    let traj = augmented_trajectory(&mesh.nodes, &mesh.values, spec);
    report.newton_iterations = newton_total;
    if !report.converged {
        report.restarts_used = opts.max_restarts.max(1);
    }
    report.final_cost = trajectory_cost(&traj, spec)?;
    Ok((traj, report))
}
