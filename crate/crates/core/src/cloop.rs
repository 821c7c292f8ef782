//! Closed-loop simulation, the online receding-horizon baseline, feasible-region
//! masks and probabilistic validation.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{phase1_feasibility, ConicProblem, SolverSettings};
use crate::datagen::{record_seed, Dataset};
use crate::error::{Error, Result};
use crate::msa::{exact_solve_with, SAConfig};
use crate::policy::Policy;
use crate::problem::{aggregate_disturbance, Polytope, ProblemSpec};
use crate::quifs::lattice_data;
use crate::sip::Transcription;

/// Constraint slack below which a row counts as violated.
pub const VIOLATION_TOL: f64 = 1e-9;
pub const DEFAULT_STEPS: usize = 30;
pub const DEFAULT_ROLLOUTS_PER_STATE: usize = 5;

/// How `w_t` is drawn from the disturbance box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceSampler {
    #[default]
    Uniform,
    /// Cycles through the box vertices from a seed-dependent start.
    Vertex,
    Zero,
}

impl std::str::FromStr for DisturbanceSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DisturbanceSampler::Uniform),
            "vertex" => Ok(DisturbanceSampler::Vertex),
            "zero" => Ok(DisturbanceSampler::Zero),
            _ => Err(Error::InvalidArgument(format!(
                "unknown disturbance sampler `{s}` (uniform, vertex, zero)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    State,
    Control,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub kind: ConstraintKind,
    pub row: usize,
    /// `H_i v - k_i > 0`.
    pub margin: f64,
}

/// Why a trace stopped before its horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum TraceExit {
    /// The policy needed a lattice node it does not store.
    Coverage { t: usize, index: Vec<i64> },
    /// The online solve found the state outside the feasible region.
    Infeasible { t: usize },
}

impl TraceExit {
    pub fn time(&self) -> usize {
        match self {
            TraceExit::Coverage { t, .. } | TraceExit::Infeasible { t } => *t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// `x_0, ..., x_T'` with `T' <= T` when truncated.
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub violations: Vec<Violation>,
    /// Optimal value at each visited state (receding-horizon runs only).
    pub values: Option<Vec<f64>>,
    pub exit: Option<TraceExit>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    /// No violations and no early exit.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.exit.is_none()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trace holds the initial state")
    }

    /// `t,x_1..x_d,u_1..u_m,w_1..w_nw,violation_count`; the last row has empty `u` and `w`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let d = self.states[0].len();
        let m = self.controls.first().map_or(0, Vec::len);
        let nw = self.disturbances.first().map_or(0, Vec::len);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend((1..=nw).map(|i| format!("w_{i}")));
        header.push("violation_count".into());
        writeln!(f, "{}", header.join(","))?;
        for (t, x) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            match (self.controls.get(t), self.disturbances.get(t)) {
                (Some(u), Some(w)) => {
                    row.extend(u.iter().map(|v| v.to_string()));
                    row.extend(w.iter().map(|v| v.to_string()));
                }
                _ => row.extend(std::iter::repeat_n(String::new(), m + nw)),
            }
            row.push(
                self.violations
                    .iter()
                    .filter(|v| v.t == t)
                    .count()
                    .to_string(),
            );
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// `x_{t+1} = A x_t + B u_t + G w_t` from stored controls and disturbances.
pub fn replay(
    spec: &ProblemSpec,
    x0: &[f64],
    controls: &[Vec<f64>],
    disturbances: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let mut states = vec![x0.to_vec()];
    for (u, w) in controls.iter().zip(disturbances) {
        let x = states.last().expect("nonempty");
        states.push(step(spec, x, u, w));
    }
    states
}

fn step(spec: &ProblemSpec, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
    let next = spec.a() * DVector::from_column_slice(x)
        + spec.b() * DVector::from_column_slice(u)
        + spec.g() * DVector::from_column_slice(w);
    next.as_slice().to_vec()
}

fn push_violations(
    set: &Polytope,
    v: &[f64],
    t: usize,
    kind: ConstraintKind,
    out: &mut Vec<Violation>,
) {
    let hv = set.h() * DVector::from_column_slice(v);
    for (row, (a, k)) in hv.iter().zip(set.k().iter()).enumerate() {
        let margin = a - k;
        if margin > VIOLATION_TOL {
            out.push(Violation {
                t,
                kind,
                row,
                margin,
            });
        }
    }
}

struct DisturbanceStream {
    sampler: DisturbanceSampler,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rng: ChaCha8Rng,
    vertex: u64,
}

impl DisturbanceStream {
    fn new(spec: &ProblemSpec, sampler: DisturbanceSampler, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_w = spec.dims().n_w;
        let vertex = if n_w < 64 {
            rng.random_range(0..1u64 << n_w)
        } else {
            rng.random()
        };
        DisturbanceStream {
            sampler,
            lo: spec.dist_box().lo.clone(),
            hi: spec.dist_box().hi.clone(),
            rng,
            vertex,
        }
    }

    fn next(&mut self) -> Vec<f64> {
        match self.sampler {
            DisturbanceSampler::Uniform => {
                let rng = &mut self.rng;
                self.lo
                    .iter()
                    .zip(&self.hi)
                    .map(|(a, b)| if a < b { rng.random_range(*a..=*b) } else { *a })
                    .collect()
            }
            DisturbanceSampler::Vertex => {
                let v = self.vertex;
                self.vertex = self.vertex.wrapping_add(1);
                self.lo
                    .iter()
                    .zip(&self.hi)
                    .enumerate()
                    .map(|(k, (a, b))| if k < 64 && (v >> k) & 1 == 1 { *b } else { *a })
                    .collect()
            }
            DisturbanceSampler::Zero => self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        }
    }
}

/// One closed-loop step's decision: a control and, optionally, the optimal value.
type Decision = (Vec<f64>, Option<f64>);

fn run_loop<F>(
    spec: &ProblemSpec,
    x0: &[f64],
    steps: usize,
    sampler: DisturbanceSampler,
    seed: u64,
    mut decide: F,
) -> Result<Trace>
where
    F: FnMut(&[f64]) -> Result<Decision>,
{
    let dims = spec.dims();
    if x0.len() != dims.d {
        return Err(Error::Dimension(format!(
            "state has {} entries, expected {}",
            x0.len(),
            dims.d
        )));
    }
    let mut dist = DisturbanceStream::new(spec, sampler, seed);
    let mut trace = Trace {
        states: vec![x0.to_vec()],
        controls: Vec::with_capacity(steps),
        disturbances: Vec::with_capacity(steps),
        violations: Vec::new(),
        values: None,
        exit: None,
    };
    let mut values = Vec::new();
    let mut with_values = false;
    push_violations(
        spec.state_set(),
        x0,
        0,
        ConstraintKind::State,
        &mut trace.violations,
    );
    for t in 0..steps {
        let x = trace.states[t].clone();
        let (u, value) = match decide(&x) {
            Ok(dec) => dec,
            Err(Error::CoverageMiss { index }) => {
                trace.exit = Some(TraceExit::Coverage { t, index });
                break;
            }
            Err(Error::OutsideFeasibleSet { .. }) => {
                trace.exit = Some(TraceExit::Infeasible { t });
                break;
            }
            Err(e) => return Err(e),
        };
        if u.len() != dims.m {
            return Err(Error::Dimension(format!(
                "policy returned {} controls, expected {}",
                u.len(),
                dims.m
            )));
        }
        if let Some(v) = value {
            with_values = true;
            values.push(v);
        }
        push_violations(
            spec.control_set(),
            &u,
            t,
            ConstraintKind::Control,
            &mut trace.violations,
        );
        let w = dist.next();
        let next = step(spec, &x, &u, &w);
        push_violations(
            spec.state_set(),
            &next,
            t + 1,
            ConstraintKind::State,
            &mut trace.violations,
        );
        trace.controls.push(u);
        trace.disturbances.push(w);
        trace.states.push(next);
    }
    if with_values {
        trace.values = Some(values);
    }
    Ok(trace)
}

/// Applies `u_t = policy(x_t)` for `steps` steps; a coverage miss truncates the trace.
pub fn simulate<P: Policy + ?Sized>(
    spec: &ProblemSpec,
    policy: &P,
    x0: &[f64],
    steps: usize,
    sampler: DisturbanceSampler,
    seed: u64,
) -> Result<Trace> {
    run_loop(spec, x0, steps, sampler, seed, |x| {
        Ok((policy.action(x)?, None))
    })
}

/// Online receding-horizon controller solving the exact problem at every state.
pub struct RhcPolicy {
    tr: Transcription,
    cfg: SAConfig,
    settings: SolverSettings,
}

impl RhcPolicy {
    pub fn new(spec: &ProblemSpec, cfg: SAConfig) -> Self {
        RhcPolicy {
            tr: Transcription::new(spec),
            cfg,
            settings: SolverSettings::default(),
        }
    }

    /// First control and optimal value at `x`.
    pub fn solve(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let res = exact_solve_with(&self.tr, x, &self.cfg, &self.settings)?;
        match res.first_control() {
            Some(u) if res.feasible => Ok((u, res.value)),
            _ => Err(Error::OutsideFeasibleSet { state: x.to_vec() }),
        }
    }
}

impl Policy for RhcPolicy {
    fn action(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.solve(x).map(|(u, _)| u)
    }
}

/// `μ₀*(x)` from a fresh exact solve.
pub fn rhc_step(spec: &ProblemSpec, x: &[f64], cfg: &SAConfig) -> Result<Vec<f64>> {
    RhcPolicy::new(spec, *cfg).action(x)
}

/// Receding-horizon closed loop recording the optimal value at each visited state.
pub fn simulate_rhc(
    spec: &ProblemSpec,
    cfg: &SAConfig,
    x0: &[f64],
    steps: usize,
    sampler: DisturbanceSampler,
    seed: u64,
) -> Result<Trace> {
    let rhc = RhcPolicy::new(spec, *cfg);
    run_loop(spec, x0, steps, sampler, seed, |x| {
        let (u, v) = rhc.solve(x)?;
        Ok((u, Some(v)))
    })
}

/// `xᵀQx + uᵀRu`.
pub fn stage_cost(spec: &ProblemSpec, x: &[f64], u: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x);
    let u = DVector::from_column_slice(u);
    x.dot(&(spec.q() * &x)) + u.dot(&(spec.r() * &u))
}

/// `J(x_{t+1}) - J(x_t) + c(x_t, u_t)` along a receding-horizon trace.
pub fn value_descent_slacks(spec: &ProblemSpec, trace: &Trace) -> Vec<f64> {
    let Some(values) = &trace.values else {
        return Vec::new();
    };
    values
        .windows(2)
        .enumerate()
        .map(|(t, w)| w[1] - w[0] + stage_cost(spec, &trace.states[t], &trace.controls[t]))
        .collect()
}

/// Entry into a neighbourhood of the origin and the largest norm afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssProxy {
    pub entry_time: usize,
    /// `max_{s >= entry} ‖x_s‖∞`.
    pub gamma_hat: f64,
}

/// First time `‖x_t‖∞ <= radius`, or `None` if never.
pub fn iss_proxy(trace: &Trace, radius: f64) -> Option<IssProxy> {
    let norms: Vec<f64> = trace
        .states
        .iter()
        .map(|x| x.iter().fold(0.0, |a: f64, v| a.max(v.abs())))
        .collect();
    let entry_time = norms.iter().position(|n| *n <= radius)?;
    let gamma_hat = norms[entry_time..].iter().copied().fold(0.0, f64::max);
    Some(IssProxy {
        entry_time,
        gamma_hat,
    })
}

/// Open-loop robust feasibility: some fixed control sequence keeps every
/// disturbance realization inside the constraints.
///
/// Conservative inner approximation of the feasible region.
pub fn open_loop_feasible(spec: &ProblemSpec, x0: &[f64]) -> Result<bool> {
    let dims = spec.dims();
    if x0.len() != dims.d {
        return Err(Error::Dimension(format!(
            "state has {} entries, expected {}",
            x0.len(),
            dims.d
        )));
    }
    let (d, m, n) = (dims.d, dims.m, dims.horizon);
    let agg = aggregate_disturbance(spec);
    let gens = agg.generator_matrix();
    let nv = m * n;
    let mut lp = ConicProblem::new(nv, vec![0.0; nv]);
    // x_t = A^t x0 + Σ_i A^{t-1-i}(B η_i + c̃) + Σ_i A^{t-1-i} G̃ ξ_i
    let mut powers = vec![DMatrix::<f64>::identity(d, d)];
    for t in 1..=n {
        powers.push(spec.a() * &powers[t - 1]);
    }
    let x0 = DVector::from_column_slice(x0);
    for t in 1..=n {
        let set = if t == n {
            spec.terminal_set()
        } else {
            spec.state_set()
        };
        let mut lin = DMatrix::zeros(d, nv);
        let mut offset = &powers[t] * &x0;
        for i in 0..t {
            let p = &powers[t - 1 - i];
            lin.view_mut((0, i * m), (d, m)).copy_from(&(p * spec.b()));
            offset += p * agg.center();
        }
        for row in 0..set.n_rows() {
            let h = set.h().row(row).transpose();
            let mut spread = 0.0;
            for i in 0..t {
                spread += (gens.transpose() * powers[t - 1 - i].transpose() * &h).lp_norm(1);
            }
            let a = lin.transpose() * &h;
            lp.add_linear(a.as_slice(), set.k()[row] - h.dot(&offset) - spread);
        }
    }
    let k_u = spec.tightened_control_offsets();
    let hu = spec.control_set().h();
    for t in 0..n {
        for (row, k) in k_u.iter().enumerate() {
            let mut a = vec![0.0; nv];
            for j in 0..m {
                a[t * m + j] = hu[(row, j)];
            }
            lp.add_linear(&a, *k);
        }
    }
    Ok(phase1_feasibility(&lp).feasible)
}

/// Feasibility masks from the exact solver and the open-loop baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoaResult {
    pub states: Vec<Vec<f64>>,
    pub exact: Vec<bool>,
    pub baseline: Vec<bool>,
    /// States whose exact solve stalled; reported infeasible in `exact`.
    pub stalled: Vec<usize>,
}

impl RoaResult {
    pub fn n_exact(&self) -> usize {
        self.exact.iter().filter(|f| **f).count()
    }

    pub fn n_baseline(&self) -> usize {
        self.baseline.iter().filter(|f| **f).count()
    }

    /// Every baseline-feasible state is exactly feasible.
    pub fn exact_dominates(&self) -> bool {
        self.exact
            .iter()
            .zip(&self.baseline)
            .all(|(e, b)| *e || !*b)
    }

    /// Indices feasible for the baseline but not the exact solver.
    pub fn dominance_failures(&self) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&i| self.baseline[i] && !self.exact[i])
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let d = self.states.first().map_or(0, Vec::len);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        header.push("exact".into());
        header.push("baseline".into());
        writeln!(f, "{}", header.join(","))?;
        for (i, x) in self.states.iter().enumerate() {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(u8::from(self.exact[i]).to_string());
            row.push(u8::from(self.baseline[i]).to_string());
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Masks over `states`: exact solves plus the open-loop baseline.
pub fn region_of_attraction(
    spec: &ProblemSpec,
    states: &[Vec<f64>],
    cfg: &SAConfig,
    workers: usize,
) -> Result<RoaResult> {
    let ds = crate::datagen::generate(spec, states, cfg, workers)?;
    roa_from_dataset(spec, &ds, workers)
}

/// As [`region_of_attraction`], reusing an existing dataset's exact flags.
pub fn roa_from_dataset(spec: &ProblemSpec, ds: &Dataset, workers: usize) -> Result<RoaResult> {
    ds.check_spec(spec)?;
    let states: Vec<Vec<f64>> = ds.records.iter().map(|r| r.x.clone()).collect();
    let baseline = pool(workers)?.install(|| {
        states
            .par_iter()
            .map(|x| open_loop_feasible(spec, x))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(RoaResult {
        exact: ds.records.iter().map(|r| r.feasible).collect(),
        baseline,
        stalled: ds.meta.stalled.clone(),
        states,
    })
}

/// `sqrt(ln(2/δ) / (2p))`.
pub fn hoeffding_eps(p: usize, delta_h: f64) -> f64 {
    ((2.0 / delta_h).ln() / (2.0 * p as f64)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub delta_h: f64,
    pub mu_crit: f64,
    pub steps: usize,
    pub rollouts_per_state: usize,
    pub sampler: DisturbanceSampler,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            delta_h: 0.01,
            mu_crit: 0.98,
            steps: DEFAULT_STEPS,
            rollouts_per_state: DEFAULT_ROLLOUTS_PER_STATE,
            sampler: DisturbanceSampler::Uniform,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub p: usize,
    pub delta_h: f64,
    pub eps_h: f64,
    pub mu_tilde: f64,
    pub mu_crit: f64,
    pub pass: bool,
    pub steps: usize,
    pub rollouts_per_state: usize,
    pub successes: usize,
    /// Initial states with at least one rollout leaving the stored lattice.
    pub coverage_exits: usize,
    /// Initial states with at least one constraint violation.
    pub violating: usize,
}

impl ValidationReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Success rate over `initial_states`: a state succeeds when all its rollouts are clean.
pub fn validate<P: Policy + ?Sized>(
    spec: &ProblemSpec,
    policy: &P,
    initial_states: &[Vec<f64>],
    cfg: &ValidationConfig,
    workers: usize,
) -> Result<ValidationReport> {
    let p = initial_states.len();
    if p == 0 {
        return Err(Error::InvalidArgument(
            "validation needs at least one initial state".into(),
        ));
    }
    if !(cfg.delta_h > 0.0 && cfg.delta_h < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta_h must lie in (0, 1), got {}",
            cfg.delta_h
        )));
    }
    if cfg.rollouts_per_state == 0 {
        return Err(Error::InvalidArgument(
            "rollouts_per_state must be positive".into(),
        ));
    }
    // (clean, coverage exit, violation)
    let outcomes = pool(workers)?.install(|| {
        initial_states
            .par_iter()
            .enumerate()
            .map(|(i, x0)| -> Result<(bool, bool, bool)> {
                let state_seed = record_seed(cfg.seed, i);
                let mut exit = false;
                let mut violated = false;
                for r in 0..cfg.rollouts_per_state {
                    let tr = simulate(
                        spec,
                        policy,
                        x0,
                        cfg.steps,
                        cfg.sampler,
                        record_seed(state_seed, r),
                    )?;
                    exit |= tr.exit.is_some();
                    violated |= !tr.violations.is_empty();
                }
                Ok((!exit && !violated, exit, violated))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let successes = outcomes.iter().filter(|o| o.0).count();
    let mu_tilde = successes as f64 / p as f64;
    let eps_h = hoeffding_eps(p, cfg.delta_h);
    Ok(ValidationReport {
        p,
        delta_h: cfg.delta_h,
        eps_h,
        mu_tilde,
        mu_crit: cfg.mu_crit,
        pass: mu_tilde - eps_h > cfg.mu_crit,
        steps: cfg.steps,
        rollouts_per_state: cfg.rollouts_per_state,
        successes,
        coverage_exits: outcomes.iter().filter(|o| o.1).count(),
        violating: outcomes.iter().filter(|o| o.2).count(),
    })
}

/// `p` uniform states in grid cells whose corners are all feasible dataset nodes.
pub fn sample_initial_states(ds: &Dataset, p: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let (h, nodes) = lattice_data(ds)?;
    let d = ds.meta.d;
    let set: HashSet<Vec<i64>> = nodes.iter().map(|(i, _)| i.clone()).collect();
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for (idx, _) in &nodes {
        for k in 0..d {
            lo[k] = lo[k].min(idx[k]);
            hi[k] = hi[k].max(idx[k]);
        }
    }
    if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
        return Err(Error::InvalidArgument(
            "feasible nodes span no full grid cell".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(p);
    let max_draws = 1000 * p.max(1);
    let mut corner = vec![0i64; d];
    for _ in 0..max_draws {
        if out.len() == p {
            break;
        }
        let x: Vec<f64> = (0..d)
            .map(|k| rng.random_range(lo[k] as f64 * h..hi[k] as f64 * h))
            .collect();
        let base: Vec<i64> = x.iter().map(|v| (v / h).floor() as i64).collect();
        let inside = (0..1usize << d).all(|mask| {
            for k in 0..d {
                corner[k] = base[k] + ((mask >> k) & 1) as i64;
            }
            set.contains(&corner)
        });
        if inside {
            out.push(x);
        }
    }
    if out.len() < p {
        return Err(Error::InvalidArgument(format!(
            "drew only {} of {p} states inside fully feasible cells",
            out.len()
        )));
    }
    Ok(out)
}
