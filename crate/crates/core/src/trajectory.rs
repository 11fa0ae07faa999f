use crate::dynamics::Layout;

/// Solver output: a time mesh with per-node states and controls, and
/// costates when the solver produces them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub layout: Layout,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub costates: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Position of sheep `i` at node `k`.
    pub fn sheep_position(&self, k: usize, i: usize) -> &[f64] {
        let p = self.layout.sheep_pos(i);
        &self.states[k][p..p + self.layout.dim]
    }

    /// Position of dog `j` at node `k`.
    pub fn dog_position(&self, k: usize, j: usize) -> &[f64] {
        let p = self.layout.dog_pos(j);
        &self.states[k][p..p + self.layout.dim]
    }

    /// Distance of sheep `i` from the origin at node `k`.
    pub fn sheep_distance(&self, k: usize, i: usize) -> f64 {
        self.sheep_position(k, i)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest dog–sheep separation over all nodes, with its time.
    pub fn closest_approach(&self) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for k in 0..self.len() {
            for i in 0..self.layout.sheep {
                for j in 0..self.layout.dogs {
                    let d: f64 = self
                        .sheep_position(k, i)
                        .iter()
                        .zip(self.dog_position(k, j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if best.is_none_or(|(b, _)| d < b) {
                        best = Some((d, self.times[k]));
                    }
                }
            }
        }
        best
    }

    /// Sup-norm distance between the control of this trajectory and
    /// `control_at(t)` over nodes with `t ≤ t_max`.
    pub fn control_sup_distance(
        &self,
        t_max: f64,
        mut control_at: impl FnMut(f64) -> Vec<f64>,
    ) -> f64 {
        self.times
            .iter()
            .zip(&self.controls)
            .filter(|(t, _)| **t <= t_max)
            .map(|(t, u)| {
                control_at(*t)
                    .iter()
                    .zip(u)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0, f64::max)
    }
}
