//! Exact solution of the robust problem by maximizing the inner value over scenario tuples.
//!
//! The outer maximization of `𝒲 ↦ G(𝒲; x̄)` is run as a simulated-annealing
//! chain over generator coefficients, starting from the all-zero tuple.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::sip::{DFPolicy, ScenarioTuple, Transcription};

/// Annealing schedule `T_t = decay · T_{t-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SAConfig {
    pub t0: f64,
    pub decay: f64,
    pub iters: usize,
    pub step_scale: f64,
    pub seed: u64,
}

pub const DEFAULT_STEP_SCALE: f64 = 4.0;

impl SAConfig {
    /// 200 iterations, `T0 = 10`, decay `0.99`.
    pub fn desk() -> Self {
        SAConfig {
            t0: 10.0,
            decay: 0.99,
            iters: 200,
            step_scale: DEFAULT_STEP_SCALE,
            seed: 0,
        }
    }

    /// 1500 iterations, `T0 = 10`, decay `0.99`.
    pub fn full() -> Self {
        SAConfig {
            iters: 1500,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::InvalidArgument(format!(
                "unknown SA preset `{other}` (expected `desk` or `full`)"
            ))),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SAConfig { seed, ..self }
    }

    pub fn with_iters(self, iters: usize) -> Self {
        SAConfig { iters, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(Error::InvalidArgument("T0 must be positive".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidArgument("decay must lie in (0, 1)".into()));
        }
        if self.iters < 1 {
            return Err(Error::InvalidArgument("iters must be at least 1".into()));
        }
        if !(self.step_scale > 0.0) {
            return Err(Error::InvalidArgument("step_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn temperature(&self, iteration: usize) -> f64 {
        self.t0 * self.decay.powi(iteration as i32)
    }
}

impl Default for SAConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One row of the annealing history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SAStep {
    pub iteration: usize,
    pub temperature: f64,
    /// Value of the proposal (`NaN` when its inner solve stalled).
    pub candidate: f64,
    pub accepted: bool,
    pub incumbent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolveResult {
    /// `G_max`; `+∞` when `x̄ ∉ X_N`.
    pub value: f64,
    pub policy: Option<DFPolicy>,
    pub feasible: bool,
    pub history: Vec<SAStep>,
    pub inner_solves: usize,
    /// Proposals rejected because the inner solver stalled.
    pub stalls: usize,
    pub accepted: usize,
    pub best_tuple: ScenarioTuple,
}

impl ExactSolveResult {
    /// Incumbent value after each iteration (nondecreasing).
    pub fn incumbent_series(&self) -> Vec<f64> {
        self.history.iter().map(|s| s.incumbent).collect()
    }

    /// First control `u_0 = η_0` of the recovered policy.
    pub fn first_control(&self) -> Option<Vec<f64>> {
        self.policy
            .as_ref()
            .map(|p| p.first_control().as_slice().to_vec())
    }

    /// Fraction of proposals accepted.
    pub fn acceptance_rate(&self) -> f64 {
        let proposals = self.history.len().saturating_sub(1);
        if proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / proposals as f64
        }
    }

    /// Writes `iteration,temperature,incumbent` rows.
    pub fn write_history_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iteration,temperature,incumbent")?;
        for s in &self.history {
            writeln!(f, "{},{},{}", s.iteration, s.temperature, s.incumbent)?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Probability of moving to a proposal whose value differs by `delta` (larger is better).
///
/// Logistic rule `1 / (1 + exp(-delta / T))`.
pub fn acceptance_probability(delta: f64, temperature: f64) -> f64 {
    if delta.is_nan() {
        return 0.0;
    }
    let x = -delta / temperature;
    if x > 700.0 {
        0.0
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Gaussian move of every coefficient with standard deviation `step_scale·min(1, T/T0)`, clipped to `[-1, 1]`.
pub fn sa_propose(
    current: &ScenarioTuple,
    temperature: f64,
    cfg: &SAConfig,
    rng: &mut ChaCha8Rng,
) -> ScenarioTuple {
    let sigma = cfg.step_scale * (temperature / cfg.t0).min(1.0);
    let mut next = current.clone();
    if sigma > 0.0 && sigma.is_finite() {
        let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
        for c in next.coeffs_mut() {
            *c = (*c + normal.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    next
}

/// Exact SIP value at `x0` by annealing over scenario tuples.
pub fn exact_solve(spec: &ProblemSpec, x0: &[f64], cfg: &SAConfig) -> Result<ExactSolveResult> {
    exact_solve_with(
        &Transcription::new(spec),
        x0,
        cfg,
        &SolverSettings::default(),
    )
}

/// [`exact_solve`] with a shared transcription and explicit inner tolerances.
pub fn exact_solve_with(
    tr: &Transcription,
    x0: &[f64],
    cfg: &SAConfig,
    settings: &SolverSettings,
) -> Result<ExactSolveResult> {
    cfg.validate()?;
    let spec = tr.spec();
    if x0.len() != spec.dims().d {
        return Err(Error::Dimension(format!(
            "state has {} entries, expected {}",
            x0.len(),
            spec.dims().d
        )));
    }
    if !spec.state_set().contains(x0, 1e-12) {
        return Err(Error::OutsideFeasibleSet { state: x0.to_vec() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = ScenarioTuple::nominal(spec);
    let first = tr.solve_inner(x0, &current, settings)?;
    let mut inner_solves = 1;
    let mut history = vec![SAStep {
        iteration: 0,
        temperature: cfg.t0,
        candidate: first.value,
        accepted: true,
        incumbent: first.value,
    }];
    if !first.feasible() {
        return Ok(ExactSolveResult {
            value: f64::INFINITY,
            policy: None,
            feasible: false,
            history,
            inner_solves,
            stalls: 0,
            accepted: 0,
            best_tuple: current,
        });
    }
    let mut current_value = first.value;
    let mut current_binding = first.binding.clone();
    let mut best_value = first.value;
    let mut best_policy = first.policy;
    let mut best_tuple = current.clone();
    let mut stalls = 0;
    let mut accepted = 0;
    let mut temperature = cfg.t0;
    for iteration in 1..=cfg.iters {
        temperature *= cfg.decay;
        let proposal = sa_propose(&current, temperature, cfg, &mut rng);
        // drawn even when unused so the stream does not depend on solver outcomes
        let u: f64 = rand::Rng::random(&mut rng);
        inner_solves += 1;
        let sol = match tr.solve_inner_hinted(x0, &proposal, settings, &current_binding) {
            Ok(sol) => sol,
            Err(Error::SolverStall { .. }) => {
                stalls += 1;
                history.push(SAStep {
                    iteration,
                    temperature,
                    candidate: f64::NAN,
                    accepted: false,
                    incumbent: best_value,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        if !sol.feasible() {
            history.push(SAStep {
                iteration,
                temperature,
                candidate: f64::INFINITY,
                accepted: true,
                incumbent: f64::INFINITY,
            });
            return Ok(ExactSolveResult {
                value: f64::INFINITY,
                policy: None,
                feasible: false,
                history,
                inner_solves,
                stalls,
                accepted: accepted + 1,
                best_tuple: proposal,
            });
        }
        if sol.value >= best_value {
            best_value = sol.value;
            best_policy = sol.policy.clone();
            best_tuple = proposal.clone();
        }
        let take = u < acceptance_probability(sol.value - current_value, temperature);
        if take {
            accepted += 1;
            current = proposal;
            current_value = sol.value;
            current_binding = sol.binding;
        }
        history.push(SAStep {
            iteration,
            temperature,
            candidate: sol.value,
            accepted: take,
            incumbent: best_value,
        });
    }
    Ok(ExactSolveResult {
        value: best_value,
        policy: best_policy,
        feasible: true,
        history,
        inner_solves,
        stalls,
        accepted,
        best_tuple,
    })
}
