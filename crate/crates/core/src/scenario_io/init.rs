//! Random initial conditions and initial guesses for the collocation solver.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bvp::Mesh;
use crate::dynamics::{AgentState, ScenarioSpec};
use crate::error::{Error, Result};

/// Usual dog circle radii.
pub const DOG_RADIUS_PRESETS: [f64; 2] = [2.0, 10.0];
/// Usual sheep circle radii.
pub const SHEEP_RADIUS_PRESETS: [f64; 2] = [0.5, 1.0];
/// Final dog radius of the spiral guess.
pub const DEFAULT_SPIRAL_RADIUS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VelocityMode {
    Zero,
    /// Independent `N(0, σ²)` components.
    Gaussian(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialConditions {
    pub dogs: Vec<AgentState>,
    pub sheep: Vec<AgentState>,
}

impl InitialConditions {
    /// A default-parameter scenario with these agents.
    pub fn into_spec(self, dim: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            ..ScenarioSpec::new(dim, self.dogs, self.sheep)
        }
    }
}

fn on_sphere(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    if dim == 2 {
        let theta = rng.random_range(0.0..TAU);
        return vec![radius * theta.cos(), radius * theta.sin()];
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| radius * x / norm).collect();
        }
    }
}

/// Dogs uniformly on the circle (sphere for `dim = 3`) of `dog_radius`,
/// sheep on `sheep_radius`; deterministic in `seed`.
///
/// # Panics
///
/// If a radius is not positive or `dim` is not 2 or 3.
pub fn random_circle_init(
    m: usize,
    n: usize,
    dim: usize,
    dog_radius: f64,
    sheep_radius: f64,
    velocity_mode: VelocityMode,
    seed: u64,
) -> InitialConditions {
    assert!(dim == 2 || dim == 3, "dim must be 2 or 3");
    assert!(
        dog_radius > 0.0 && sheep_radius > 0.0,
        "radii must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = |rng: &mut ChaCha8Rng, radius: f64| {
        let pos = on_sphere(rng, dim, radius);
        let vel = match velocity_mode {
            VelocityMode::Zero => vec![0.0; dim],
            VelocityMode::Gaussian(sigma) => {
                let normal = Normal::new(0.0, sigma).expect("sigma must be finite");
                (0..dim).map(|_| normal.sample(rng)).collect()
            }
        };
        AgentState::new(pos, vel)
    };
    let dogs = (0..m).map(|_| agent(&mut rng, dog_radius)).collect();
    let sheep = (0..n).map(|_| agent(&mut rng, sheep_radius)).collect();
    InitialConditions { dogs, sheep }
}

/// `a − b` wrapped into `(−π, π]`.
fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Angle of the `m`-th root of unity nearest to `theta0`, unwrapped so that
/// it lies within `π/m` of `theta0`. Ties go to the smaller root index.
pub fn nearest_root_angle(theta0: f64, m: usize) -> f64 {
    assert!(m > 0);
    let step = TAU / m as f64;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..m {
        let d = angle_diff(k as f64 * step, theta0);
        if d.abs() < best.0 - 1e-12 {
            best = (d.abs(), d);
        }
    }
    theta0 + best.1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GuessStyle {
    /// State frozen at the initial conditions, zero costate.
    Zeros,
    /// State frozen at the initial conditions, `N(0, σ²)` costate.
    GaussianNoise { sigma: f64 },
    /// Dogs spiral onto the roots of unity at radius `r_f` while the sheep
    /// walk straight to the origin.
    StructuredSpiral { r_f: f64 },
}

impl GuessStyle {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GuessStyle::GaussianNoise { sigma } if !(sigma > 0.0) => Err(Error::Validation(
                format!("noise sigma must be positive, got {sigma}"),
            )),
            GuessStyle::StructuredSpiral { r_f } if !(r_f > 0.0) => Err(Error::Validation(
                format!("spiral radius must be positive, got {r_f}"),
            )),
            _ => Ok(()),
        }
    }
}

fn uniform_times(tf: f64, node_count: usize) -> Vec<f64> {
    (0..node_count)
        .map(|k| {
            if k + 1 == node_count {
                tf
            } else {
                tf * k as f64 / (node_count - 1) as f64
            }
        })
        .collect()
}

fn check_nodes(node_count: usize) -> Result<()> {
    if node_count < 3 {
        return Err(Error::Validation(format!(
            "a guess needs at least 3 nodes, got {node_count}"
        )));
    }
    Ok(())
}

/// Initial guess of the given style on `node_count` uniform nodes.
pub fn make_guess(
    spec: &ScenarioSpec,
    style: GuessStyle,
    node_count: usize,
    seed: u64,
) -> Result<Mesh> {
    spec.validate()?;
    style.validate()?;
    check_nodes(node_count)?;
    let x0 = spec.initial_state();
    let n = x0.len();
    match style {
        GuessStyle::StructuredSpiral { r_f } => structured_guess(spec, r_f, node_count),
        GuessStyle::Zeros => Mesh::new(uniform_times(spec.tf, node_count), {
            let mut v = x0.clone();
            v.resize(2 * n, 0.0);
            vec![v; node_count]
        }),
        GuessStyle::GaussianNoise { sigma } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, sigma).expect("sigma validated");
            let values = (0..node_count)
                .map(|_| {
                    let mut v = x0.clone();
                    v.extend((0..n).map(|_| normal.sample(&mut rng)));
                    v
                })
                .collect();
            Mesh::new(uniform_times(spec.tf, node_count), values)
        }
    }
}

/// Spiral guess: sheep move linearly to the origin, dogs follow
/// `r(τ) = r₀(1−τ) + r_f τ`, `θ(τ) = θ₀(1−τ) + θ_f τ` with `θ_f` the
/// nearest `m`-th root of unity; the dog velocity costate is twice the
/// curve acceleration so that `u = ½ q_d` reproduces it. Node 0 carries
/// the exact initial state.
///
/// In three dimensions the spiral acts on `(x, y)` and `z` goes linearly
/// to zero.
pub fn structured_guess(spec: &ScenarioSpec, r_f: f64, node_count: usize) -> Result<Mesh> {
    spec.validate()?;
    GuessStyle::StructuredSpiral { r_f }.validate()?;
    check_nodes(node_count)?;
    let l = spec.layout();
    let (dim, tf, m) = (l.dim, spec.tf, l.dogs);
    let n = l.state_len();
    let times = uniform_times(tf, node_count);

    let mut values = Vec::with_capacity(node_count);
    for &t in &times {
        let tau = t / tf;
        let mut v = vec![0.0; 2 * n];
        for (j, dog) in spec.dogs.iter().enumerate() {
            let (x0, y0) = (dog.pos[0], dog.pos[1]);
            let r0 = x0.hypot(y0);
            let th0 = y0.atan2(x0);
            let thf = nearest_root_angle(th0, m);
            let r = r0 * (1.0 - tau) + r_f * tau;
            let th = th0 * (1.0 - tau) + thf * tau;
            let rdot = (r_f - r0) / tf;
            let thdot = (thf - th0) / tf;
            let (c, s) = (th.cos(), th.sin());
            let er = [c, s];
            let et = [-s, c];
            let (ar, at) = (-r * thdot * thdot, 2.0 * rdot * thdot);

            let p = l.dog_pos(j);
            let q = l.dog_vel(j);
            for k in 0..2 {
                v[p + k] = r * er[k];
                v[q + k] = rdot * er[k] + r * thdot * et[k];
                v[n + q + k] = 2.0 * (ar * er[k] + at * et[k]);
            }
            if dim == 3 {
                let z0 = dog.pos[2];
                v[p + 2] = z0 * (1.0 - tau);
                v[q + 2] = -z0 / tf;
            }
        }
        for (i, sheep) in spec.sheep.iter().enumerate() {
            let (p, q) = (l.sheep_pos(i), l.sheep_vel(i));
            for k in 0..dim {
                v[p + k] = sheep.pos[k] * (1.0 - tau);
                v[q + k] = -sheep.pos[k] / tf;
            }
        }
        values.push(v);
    }
    values[0][..n].copy_from_slice(&spec.initial_state());
    Mesh::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmp::boundary_residual;

    fn one_dog(pos: &[f64]) -> ScenarioSpec {
        ScenarioSpec::new(pos.len(), vec![AgentState::at_rest(pos)], vec![])
    }

    #[test]
    fn dogs_lie_on_their_circle() {
        for dim in [2, 3] {
            let ic = random_circle_init(5, 3, dim, 10.0, 0.5, VelocityMode::Zero, 9);
            for d in &ic.dogs {
                let r = d.pos.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((r - 10.0).abs() < 1e-12);
                assert_eq!(d.vel, vec![0.0; dim]);
            }
            for s in &ic.sheep {
                let r = s.pos.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((r - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = random_circle_init(2, 1, 2, 2.0, 1.0, VelocityMode::Gaussian(0.3), 42);
        let b = random_circle_init(2, 1, 2, 2.0, 1.0, VelocityMode::Gaussian(0.3), 42);
        let c = random_circle_init(2, 1, 2, 2.0, 1.0, VelocityMode::Gaussian(0.3), 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.dogs[0].vel.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn presets() {
        assert_eq!(DOG_RADIUS_PRESETS, [2.0, 10.0]);
        assert_eq!(SHEEP_RADIUS_PRESETS, [0.5, 1.0]);
    }

    #[test]
    fn nearest_root_examples() {
        let deg = PI / 180.0;
        assert!((nearest_root_angle(50.0 * deg, 4) - 90.0 * deg).abs() < 1e-12);
        assert!(nearest_root_angle(40.0 * deg, 4).abs() < 1e-12);
        // unwrapped next to θ₀ rather than reduced to [0, 2π)
        assert!((nearest_root_angle(-10.0 * deg, 3)).abs() < 1e-12);
        assert!((nearest_root_angle(170.0 * deg, 2) - PI).abs() < 1e-12);
        assert!((nearest_root_angle(-170.0 * deg, 2) + PI).abs() < 1e-12);
        // a tie between 0° and 90° takes index 0
        assert!(nearest_root_angle(45.0 * deg, 4).abs() < 1e-12);
    }

    #[test]
    fn nearest_root_stays_within_half_sector() {
        for m in 1..7 {
            for k in 0..360 {
                let th0 = (k as f64 - 180.0) * PI / 180.0;
                let thf = nearest_root_angle(th0, m);
                assert!((thf - th0).abs() <= PI / m as f64 + 1e-12);
                let steps = thf / (TAU / m as f64);
                assert!((steps - steps.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spiral_radius_and_endpoint() {
        let spec = one_dog(&[2.0, 0.0]);
        let mesh = structured_guess(&spec, 1.0, 5).unwrap();
        let last = &mesh.values[4];
        assert!((last[0] - 1.0).abs() < 1e-14 && last[1].abs() < 1e-14);
        let mid = &mesh.values[2];
        assert!((mid[0].hypot(mid[1]) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn sheep_walk_straight_home() {
        let spec = ScenarioSpec::new(
            2,
            vec![AgentState::at_rest(&[3.0, 0.0])],
            vec![AgentState::at_rest(&[1.0, 1.0])],
        );
        let mesh = structured_guess(&spec, 5.0, 3).unwrap();
        assert_eq!(mesh.nodes[1], 1.0);
        let l = spec.layout();
        let p = l.sheep_pos(0);
        assert!((mesh.values[1][p] - 0.5).abs() < 1e-15);
        assert!((mesh.values[1][p + 1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spiral_velocity_and_costate_are_curve_derivatives() {
        let spec = ScenarioSpec {
            tf: 3.0,
            ..ScenarioSpec::new(
                2,
                vec![
                    AgentState::at_rest(&[1.2, 1.7]),
                    AgentState::at_rest(&[-2.0, 0.4]),
                    AgentState::at_rest(&[0.3, -2.5]),
                ],
                vec![],
            )
        };
        let nodes = 3001;
        let mesh = structured_guess(&spec, 4.0, nodes).unwrap();
        let l = spec.layout();
        let n = l.state_len();
        let h = mesh.nodes[1] - mesh.nodes[0];
        for k in [700, 1500, 2300] {
            for j in 0..3 {
                let (p, q) = (l.dog_pos(j), l.dog_vel(j));
                for c in 0..2 {
                    let vel = (mesh.values[k + 1][p + c] - mesh.values[k - 1][p + c]) / (2.0 * h);
                    assert!((vel - mesh.values[k][q + c]).abs() < 1e-5);
                    let acc = (mesh.values[k + 1][q + c] - mesh.values[k - 1][q + c]) / (2.0 * h);
                    assert!((2.0 * acc - mesh.values[k][n + q + c]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn guess_starts_at_the_initial_state() {
        let spec = ScenarioSpec::new(
            3,
            vec![
                AgentState::new(vec![2.0, 0.5, 0.3], vec![0.1, 0.0, -0.2]),
                AgentState::at_rest(&[-1.0, 1.0, 0.0]),
            ],
            vec![AgentState::new(vec![0.4, 0.2, -0.1], vec![0.3, 0.3, 0.3])],
        );
        let mesh = structured_guess(&spec, 5.0, 11).unwrap();
        let n = spec.layout().state_len();
        assert_eq!(mesh.values[0][..n], spec.initial_state()[..]);
        let r = boundary_residual(&mesh.values[0], &mesh.values[10], &spec);
        assert!(r[..n].iter().all(|v| *v == 0.0));
        // z goes to zero
        assert!(mesh.values[10][2].abs() < 1e-15);
    }

    #[test]
    fn other_styles() {
        let spec = one_dog(&[2.0, 1.0]);
        let z = make_guess(&spec, GuessStyle::Zeros, 4, 0).unwrap();
        assert!(z
            .values
            .iter()
            .all(|v| v[..4] == spec.initial_state()[..] && v[4..] == [0.0; 4]));
        let a = make_guess(&spec, GuessStyle::GaussianNoise { sigma: 0.5 }, 4, 3).unwrap();
        let b = make_guess(&spec, GuessStyle::GaussianNoise { sigma: 0.5 }, 4, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.values[1][4..].iter().any(|v| *v != 0.0));
        assert!(make_guess(&spec, GuessStyle::GaussianNoise { sigma: 0.0 }, 4, 3).is_err());
        assert!(make_guess(&spec, GuessStyle::Zeros, 2, 0).is_err());
    }
}
