//! Shared fixtures: scalar instances and a brute-force inner-problem oracle.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use robosynth::problem::{validate_spec, ProblemSpec, RawSpec};
use robosynth::sip::ScenarioTuple;

/// Data of a `d = m = n_w = 1` instance with symmetric boxes.
#[derive(Clone, Copy, Debug)]
pub struct Scalar {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub q: f64,
    pub r: f64,
    pub p: f64,
    pub x_max: f64,
    pub u_max: f64,
    pub w_max: f64,
    pub eps: f64,
    pub n: usize,
}

impl Scalar {
    pub fn spec(&self) -> ProblemSpec {
        validate_spec(&self.raw()).expect("scalar fixture is valid")
    }

    pub fn raw(&self) -> RawSpec {
        RawSpec {
            a: vec![vec![self.a]],
            b: vec![vec![self.b]],
            g: Some(vec![vec![self.g]]),
            q: vec![vec![self.q]],
            r: vec![vec![self.r]],
            p: vec![vec![self.p]],
            horizon: self.n,
            state_box: Some(vec![[-self.x_max, self.x_max]]),
            state_polytope: None,
            control_box: Some(vec![[-self.u_max, self.u_max]]),
            control_polytope: None,
            dist_box: vec![[-self.w_max, self.w_max]],
            terminal_box: None,
            terminal_polytope: None,
            eps: self.eps,
        }
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        Scalar {
            a: rng.random_range(-1.2..1.2),
            b: rng.random_range(0.5..1.5),
            g: rng.random_range(0.5..1.5),
            q: rng.random_range(0.2..2.0),
            r: rng.random_range(0.2..2.0),
            p: rng.random_range(0.2..2.0),
            x_max: rng.random_range(1.0..3.0),
            u_max: rng.random_range(0.5..2.0),
            w_max: rng.random_range(0.0..0.2),
            eps: rng.random_range(0.0..0.05),
            n: rng.random_range(1..=2),
        }
    }

    /// `w̃ = g·w_max·ξ₀ + b·eps·ξ₁`.
    pub fn aggregate(&self, xi: &[f64]) -> f64 {
        self.g * self.w_max * xi[0] + self.b * self.eps * xi[1]
    }

    /// Worst-case cost over the scenarios for `(η₀, η₁, θ₁₀)`; `None` if any constraint fails.
    pub fn worst_cost(
        &self,
        x0: f64,
        tuple: &ScenarioTuple,
        eta: &[f64],
        theta: f64,
    ) -> Option<f64> {
        let u_tight = self.u_max - self.eps;
        if eta.iter().any(|e| e.abs() > u_tight + 1e-12) {
            return None;
        }
        let mut worst = f64::NEG_INFINITY;
        for i in 0..tuple.n_scenarios() {
            let w: Vec<f64> = (0..self.n)
                .map(|t| self.aggregate(tuple.coeff(i, t)))
                .collect();
            let mut x = x0;
            let mut j = 0.0;
            for t in 0..self.n {
                let u = if t == 1 {
                    eta[1] + theta * w[0]
                } else {
                    eta[t]
                };
                if u.abs() > u_tight + 1e-12 {
                    return None;
                }
                if t >= 1 && x.abs() > self.x_max + 1e-12 {
                    return None;
                }
                j += self.q * x * x + self.r * u * u;
                x = self.a * x + self.b * u + w[t];
            }
            if x.abs() > self.x_max + 1e-12 {
                return None;
            }
            j += self.p * x * x;
            worst = worst.max(j);
        }
        Some(worst)
    }

    /// Nested-zoom grid search over `(η, θ)`; `+∞` when no grid point is feasible.
    pub fn grid_value(&self, x0: f64, tuple: &ScenarioTuple) -> f64 {
        let dim = if self.n == 1 { 1 } else { 3 };
        let per = if dim == 1 { 2001 } else { 41 };
        let u = self.u_max - self.eps;
        let mut center = vec![0.0; dim];
        let mut radius: Vec<f64> = (0..dim).map(|k| if k < 2 { u } else { 20.0 }).collect();
        let mut best = f64::INFINITY;
        for _level in 0..12 {
            let mut best_pt = center.clone();
            let mut idx = vec![0usize; dim];
            loop {
                let pt: Vec<f64> = (0..dim)
                    .map(|k| {
                        center[k] - radius[k] + 2.0 * radius[k] * idx[k] as f64 / (per - 1) as f64
                    })
                    .collect();
                let eta: Vec<f64> = pt.iter().take(self.n).copied().collect();
                let theta = if dim == 3 { pt[2] } else { 0.0 };
                if let Some(v) = self.worst_cost(x0, tuple, &eta, theta) {
                    if v < best {
                        best = v;
                        best_pt = pt.clone();
                    }
                }
                let mut k = 0;
                while k < dim {
                    idx[k] += 1;
                    if idx[k] < per {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == dim {
                    break;
                }
            }
            if !best.is_finite() {
                return best;
            }
            center = best_pt;
            for r in radius.iter_mut() {
                *r *= 0.25;
            }
        }
        best
    }
}

pub fn random_tuple(
    rng: &mut ChaCha8Rng,
    n_scenarios: usize,
    horizon: usize,
    coeff_dim: usize,
) -> ScenarioTuple {
    let coeffs = (0..n_scenarios * horizon * coeff_dim)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    ScenarioTuple::from_coeffs(horizon, coeff_dim, coeffs).unwrap()
}

/// Example 1 with `W = {0}` and `ε = 0`.
pub fn example1_undisturbed() -> ProblemSpec {
    let mut raw = ProblemSpec::example1().to_raw();
    raw.dist_box = vec![[0.0, 0.0]; 2];
    raw.eps = 0.0;
    validate_spec(&raw).unwrap()
}
