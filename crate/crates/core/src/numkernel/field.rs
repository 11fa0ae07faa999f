use super::DenseMatrix;

/// An autonomous-or-not vector field `y' = f(t, y)` with an analytic
/// Jacobian, as consumed by the collocation and shooting solvers.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]);

    fn jacobian(&self, t: f64, y: &[f64]) -> DenseMatrix;

    fn eval_vec(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(t, y, &mut out);
        out
    }
}

/// Adapts a pair of closures into a [`VectorField`].
pub struct FnField<F, J> {
    dim: usize,
    f: F,
    jac: J,
}

impl<F, J> FnField<F, J>
where
    F: Fn(f64, &[f64], &mut [f64]),
    J: Fn(f64, &[f64]) -> DenseMatrix,
{
    pub fn new(dim: usize, f: F, jac: J) -> Self {
        Self { dim, f, jac }
    }
}

impl<F, J> VectorField for FnField<F, J>
where
    F: Fn(f64, &[f64], &mut [f64]),
    J: Fn(f64, &[f64]) -> DenseMatrix,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.f)(t, y, out)
    }

    fn jacobian(&self, t: f64, y: &[f64]) -> DenseMatrix {
        (self.jac)(t, y)
    }
}
