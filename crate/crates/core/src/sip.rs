//! Disturbance-feedback transcription of the robust problem.
//!
//! Controls are affine in past aggregate disturbances,
//! `u_t = Σ_{i<t} θ_{t,i} w̃_i + η_t`, so for a fixed disturbance sequence the
//! whole trajectory is affine in the decision vector `z = (θ_causal, η, r)`.
//! [`build_inner`] turns a finite [`ScenarioTuple`] into a [`ConicProblem`]
//! whose value is `G(𝒲; x̄)`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicProblem, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::problem::{aggregate_disturbance, AggregateDisturbance, Dims, ProblemSpec};

/// Causal disturbance-feedback policy plus the epigraph slack `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DFPolicy {
    horizon: usize,
    d: usize,
    m: usize,
    /// Row-major `m×d` blocks indexed by `t * N + i`; blocks with `i >= t` stay zero.
    theta: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    pub r: f64,
}

impl DFPolicy {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { d, m, horizon, .. } = dims;
        DFPolicy {
            horizon,
            d,
            m,
            theta: vec![vec![0.0; m * d]; horizon * horizon],
            eta: vec![vec![0.0; m]; horizon],
            r: 0.0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `θ_{t,i}` as an `m×d` matrix.
    pub fn theta(&self, t: usize, i: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.d, &self.theta[t * self.horizon + i])
    }

    /// Sets a causal block; panics when `i >= t`.
    pub fn set_theta(&mut self, t: usize, i: usize, block: &DMatrix<f64>) {
        assert!(i < t, "θ_{{t,i}} is frozen to zero for i >= t");
        assert_eq!(block.shape(), (self.m, self.d));
        let dst = &mut self.theta[t * self.horizon + i];
        for a in 0..self.m {
            for b in 0..self.d {
                dst[a * self.d + b] = block[(a, b)];
            }
        }
    }

    pub fn eta(&self, t: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.eta[t])
    }

    pub fn set_eta(&mut self, t: usize, v: &[f64]) {
        self.eta[t].copy_from_slice(v);
    }

    /// First control `u_0 = η_0`.
    pub fn first_control(&self) -> DVector<f64> {
        self.eta(0)
    }

    pub fn is_causal(&self) -> bool {
        (0..self.horizon).all(|t| {
            (t..self.horizon).all(|i| self.theta[t * self.horizon + i].iter().all(|v| *v == 0.0))
        })
    }

    /// `u_t` given the aggregate disturbances `w̃_0..w̃_{t-1}`.
    pub fn control(&self, t: usize, past: &[DVector<f64>]) -> DVector<f64> {
        let mut u = self.eta(t);
        for (i, w) in past.iter().enumerate().take(t) {
            u += self.theta(t, i) * w;
        }
        u
    }
}

/// `n_z` scenarios, each a length-`N` sequence of generator coefficients in `[-1, 1]^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTuple {
    horizon: usize,
    coeff_dim: usize,
    /// Flattened `[scenario][t][k]`.
    coeffs: Vec<f64>,
}

impl ScenarioTuple {
    pub fn zeros(n_scenarios: usize, horizon: usize, coeff_dim: usize) -> Self {
        ScenarioTuple {
            horizon,
            coeff_dim,
            coeffs: vec![0.0; n_scenarios * horizon * coeff_dim],
        }
    }

    /// Nominal tuple sized for `spec`.
    pub fn nominal(spec: &ProblemSpec) -> Self {
        let dims = spec.dims();
        Self::zeros(dims.n_z(), dims.horizon, dims.n_w + dims.m)
    }

    /// Builds a tuple from flat coefficients; values must lie in `[-1, 1]`.
    pub fn from_coeffs(horizon: usize, coeff_dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        let block = horizon * coeff_dim;
        if block == 0 || coeffs.len() % block != 0 {
            return Err(Error::Dimension(format!(
                "{} coefficients do not split into blocks of {block}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument(
                "scenario coefficients must lie in [-1, 1]".into(),
            ));
        }
        Ok(ScenarioTuple {
            horizon,
            coeff_dim,
            coeffs,
        })
    }

    pub fn n_scenarios(&self) -> usize {
        self.coeffs.len() / (self.horizon * self.coeff_dim).max(1)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn coeff_dim(&self) -> usize {
        self.coeff_dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficients of scenario `i` at time `t`.
    pub fn coeff(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.horizon + t) * self.coeff_dim;
        &self.coeffs[start..start + self.coeff_dim]
    }

    /// Appends one scenario given as `N·k` coefficients.
    pub fn push(&mut self, scenario: &[f64]) {
        assert_eq!(scenario.len(), self.horizon * self.coeff_dim);
        self.coeffs.extend_from_slice(scenario);
    }

    pub fn is_valid(&self) -> bool {
        self.coeffs.iter().all(|c| (-1.0..=1.0).contains(c))
    }

    /// Realized sequences `w̃^i_t`.
    pub fn realize(&self, agg: &AggregateDisturbance) -> Vec<Vec<DVector<f64>>> {
        (0..self.n_scenarios())
            .map(|i| {
                (0..self.horizon)
                    .map(|t| agg.realize(self.coeff(i, t)))
                    .collect()
            })
            .collect()
    }
}

/// Positions of the free scalars inside `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
    pub m: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn new(dims: Dims) -> Self {
        Layout {
            d: dims.d,
            m: dims.m,
            horizon: dims.horizon,
        }
    }

    /// Number of causal blocks `θ_{t,i}`, `i < t`.
    fn n_blocks(&self) -> usize {
        self.horizon * (self.horizon.saturating_sub(1)) / 2
    }

    /// Offset of `θ_{t,i}[a, b]` for `i < t`.
    pub fn theta_index(&self, t: usize, i: usize, a: usize, b: usize) -> usize {
        debug_assert!(i < t);
        (t * (t - 1) / 2 + i) * self.m * self.d + a * self.d + b
    }

    pub fn eta_index(&self, t: usize, a: usize) -> usize {
        self.n_blocks() * self.m * self.d + t * self.m + a
    }

    pub fn r_index(&self) -> usize {
        self.n_vars() - 1
    }

    /// Length of `z` (free causal entries, `η`, `r`).
    pub fn n_vars(&self) -> usize {
        self.n_blocks() * self.m * self.d + self.horizon * self.m + 1
    }

    /// `mN·dN + mN + 1`: every `θ` block counted, frozen ones included.
    pub fn full_param_count(&self) -> usize {
        let (m, d, n) = (self.m, self.d, self.horizon);
        m * n * d * n + m * n + 1
    }

    pub fn policy_from_z(&self, z: &[f64]) -> DFPolicy {
        let dims = Dims {
            d: self.d,
            m: self.m,
            n_w: 0,
            horizon: self.horizon,
        };
        let mut p = DFPolicy::zeros(dims);
        for t in 1..self.horizon {
            for i in 0..t {
                let dst = &mut p.theta[t * self.horizon + i];
                for a in 0..self.m {
                    for b in 0..self.d {
                        dst[a * self.d + b] = z[self.theta_index(t, i, a, b)];
                    }
                }
            }
        }
        for t in 0..self.horizon {
            for a in 0..self.m {
                p.eta[t][a] = z[self.eta_index(t, a)];
            }
        }
        p.r = z[self.r_index()];
        p
    }

    pub fn z_from_policy(&self, p: &DFPolicy) -> Vec<f64> {
        let mut z = vec![0.0; self.n_vars()];
        for t in 1..self.horizon {
            for i in 0..t {
                let src = &p.theta[t * self.horizon + i];
                for a in 0..self.m {
                    for b in 0..self.d {
                        z[self.theta_index(t, i, a, b)] = src[a * self.d + b];
                    }
                }
            }
        }
        for t in 0..self.horizon {
            for a in 0..self.m {
                z[self.eta_index(t, a)] = p.eta[t][a];
            }
        }
        z[self.r_index()] = p.r;
        z
    }
}

/// States and controls of a rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

/// Rolls `x_{t+1} = A x_t + B u_t + w̃_t` forward under the policy.
pub fn rollout(
    spec: &ProblemSpec,
    policy: &DFPolicy,
    x0: &[f64],
    w_seq: &[DVector<f64>],
) -> Rollout {
    let n = spec.horizon();
    assert_eq!(w_seq.len(), n, "disturbance sequence must have N entries");
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut x = DVector::from_column_slice(x0);
    states.push(x.clone());
    for t in 0..n {
        let u = policy.control(t, &w_seq[..t]);
        x = spec.a() * &x + spec.b() * &u + &w_seq[t];
        controls.push(u);
        states.push(x.clone());
    }
    Rollout { states, controls }
}

/// `Σ_t x_tᵀQx_t + u_tᵀRu_t + x_NᵀPx_N` along the rollout.
pub fn cost(spec: &ProblemSpec, policy: &DFPolicy, x0: &[f64], w_seq: &[DVector<f64>]) -> f64 {
    trajectory_cost(spec, &rollout(spec, policy, x0, w_seq))
}

pub fn trajectory_cost(spec: &ProblemSpec, tr: &Rollout) -> f64 {
    let n = tr.controls.len();
    let mut j = 0.0;
    for t in 0..n {
        let x = &tr.states[t];
        let u = &tr.controls[t];
        j += x.dot(&(spec.q() * x)) + u.dot(&(spec.r() * u));
    }
    let xn = &tr.states[n];
    j + xn.dot(&(spec.p() * xn))
}

/// Largest violation of the state, terminal and tightened control constraints along a rollout.
pub fn constraint_violation(spec: &ProblemSpec, tr: &Rollout) -> f64 {
    violation_from(spec, tr, 0)
}

/// As [`constraint_violation`] but skipping controls before `first_control`.
fn violation_from(spec: &ProblemSpec, tr: &Rollout, first_control: usize) -> f64 {
    let n = tr.controls.len();
    let k_u = spec.tightened_control_offsets();
    let mut worst = f64::NEG_INFINITY;
    for t in 0..n {
        if t < first_control {
            if t >= 1 {
                worst = worst.max(spec.state_set().max_violation(tr.states[t].as_slice()));
            }
            continue;
        }
        let hu = spec.control_set().h() * &tr.controls[t];
        for (v, k) in hu.iter().zip(&k_u) {
            worst = worst.max(v - k);
        }
        if t >= 1 {
            worst = worst.max(spec.state_set().max_violation(tr.states[t].as_slice()));
        }
    }
    worst.max(spec.terminal_set().max_violation(tr.states[n].as_slice()))
}

/// `F` with `FᵀF = S` for a PSD `S`, dropping null directions.
pub fn psd_factor(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let scale = eig.eigenvalues.amax().max(1e-300);
    let keep: Vec<usize> = (0..s.nrows())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * scale)
        .collect();
    let mut f = DMatrix::zeros(keep.len(), s.ncols());
    for (r, &i) in keep.iter().enumerate() {
        let lam = eig.eigenvalues[i].max(0.0).sqrt();
        for j in 0..s.ncols() {
            f[(r, j)] = lam * eig.eigenvectors[(j, i)];
        }
    }
    f
}

/// Precomputed per-spec data for building inner problems.
#[derive(Clone, Debug)]
pub struct Transcription {
    spec: ProblemSpec,
    layout: Layout,
    agg: AggregateDisturbance,
    fq: DMatrix<f64>,
    fr: DMatrix<f64>,
    fp: DMatrix<f64>,
    k_u: Vec<f64>,
}

/// Affine trajectory map `x_t = X_t z + c_t`, `u_t = U_t z`.
pub struct AffineTrajectory {
    pub xs: Vec<DMatrix<f64>>,
    pub cs: Vec<DVector<f64>>,
    pub us: Vec<DMatrix<f64>>,
}

impl Transcription {
    pub fn new(spec: &ProblemSpec) -> Self {
        Transcription {
            layout: Layout::new(spec.dims()),
            agg: aggregate_disturbance(spec),
            fq: psd_factor(spec.q()),
            fr: psd_factor(spec.r()),
            fp: psd_factor(spec.p()),
            k_u: spec.tightened_control_offsets(),
            spec: spec.clone(),
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn aggregate(&self) -> &AggregateDisturbance {
        &self.agg
    }

    /// Trajectory map for one realized disturbance sequence.
    pub fn affine_trajectory(&self, x0: &[f64], w_seq: &[DVector<f64>]) -> AffineTrajectory {
        let Layout { d, m, horizon } = self.layout;
        let nv = self.layout.n_vars();
        let a = self.spec.a();
        let b = self.spec.b();
        let mut us = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let mut u = DMatrix::zeros(m, nv);
            for a_ in 0..m {
                for (i, w) in w_seq.iter().enumerate().take(t) {
                    for bb in 0..d {
                        u[(a_, self.layout.theta_index(t, i, a_, bb))] = w[bb];
                    }
                }
                u[(a_, self.layout.eta_index(t, a_))] = 1.0;
            }
            us.push(u);
        }
        let mut xs = Vec::with_capacity(horizon + 1);
        let mut cs = Vec::with_capacity(horizon + 1);
        xs.push(DMatrix::zeros(d, nv));
        cs.push(DVector::from_column_slice(x0));
        for t in 0..horizon {
            xs.push(a * &xs[t] + b * &us[t]);
            cs.push(a * &cs[t] + &w_seq[t]);
        }
        AffineTrajectory { xs, cs, us }
    }

    /// Cost `J = ‖M z + c‖²` for one sequence.
    pub fn cost_factor(&self, tr: &AffineTrajectory) -> (DMatrix<f64>, DVector<f64>) {
        let horizon = self.layout.horizon;
        let nv = self.layout.n_vars();
        let (rq, rr, rp) = (self.fq.nrows(), self.fr.nrows(), self.fp.nrows());
        let rows = horizon * (rq + rr) + rp;
        let mut mat = DMatrix::zeros(rows, nv);
        let mut off = DVector::zeros(rows);
        let mut row = 0;
        for t in 0..horizon {
            mat.rows_mut(row, rq).copy_from(&(&self.fq * &tr.xs[t]));
            off.rows_mut(row, rq).copy_from(&(&self.fq * &tr.cs[t]));
            row += rq;
            mat.rows_mut(row, rr).copy_from(&(&self.fr * &tr.us[t]));
            row += rr;
        }
        mat.rows_mut(row, rp)
            .copy_from(&(&self.fp * &tr.xs[horizon]));
        off.rows_mut(row, rp)
            .copy_from(&(&self.fp * &tr.cs[horizon]));
        (mat, off)
    }

    /// Linear rows `a·z <= b` for one sequence (state `t = 1..N-1`, terminal, tightened controls).
    pub fn linear_rows(&self, tr: &AffineTrajectory, mut sink: impl FnMut(&[f64], f64)) {
        let horizon = self.layout.horizon;
        let mut push = |h: &DMatrix<f64>, k: &[f64], x: &DMatrix<f64>, c: Option<&DVector<f64>>| {
            let hx = h * x;
            let hc = c.map(|c| h * c);
            for i in 0..h.nrows() {
                let row: Vec<f64> = hx.row(i).iter().copied().collect();
                let rhs = k[i] - hc.as_ref().map_or(0.0, |v| v[i]);
                sink(&row, rhs);
            }
        };
        let hx = self.spec.state_set().h();
        let kx = self.spec.state_set().k().as_slice();
        for t in 1..horizon {
            push(hx, kx, &tr.xs[t], Some(&tr.cs[t]));
        }
        push(
            self.spec.terminal_set().h(),
            self.spec.terminal_set().k().as_slice(),
            &tr.xs[horizon],
            Some(&tr.cs[horizon]),
        );
        for t in 0..horizon {
            push(self.spec.control_set().h(), &self.k_u, &tr.us[t], None);
        }
    }

    /// Inner problem `min r  s.t.  J(x̄, θ, η, W^i) <= r` and all constraints, for every scenario.
    pub fn build_inner(&self, x0: &[f64], tuple: &ScenarioTuple) -> Result<ConicProblem> {
        self.check_inputs(x0, tuple)?;
        let seqs: Vec<Vec<DVector<f64>>> = distinct_scenarios(tuple)
            .into_iter()
            .map(|i| self.realize(tuple, i))
            .collect();
        Ok(self.problem_for(x0, seqs.iter().map(|s| s.as_slice())))
    }

    fn realize(&self, tuple: &ScenarioTuple, i: usize) -> Vec<DVector<f64>> {
        (0..tuple.horizon())
            .map(|t| self.agg.realize(tuple.coeff(i, t)))
            .collect()
    }

    fn problem_for<'a>(
        &self,
        x0: &[f64],
        seqs: impl Iterator<Item = &'a [DVector<f64>]>,
    ) -> ConicProblem {
        let nv = self.layout.n_vars();
        let mut obj = vec![0.0; nv];
        obj[self.layout.r_index()] = 1.0;
        let mut prob = ConicProblem::new(nv, obj);
        let mut seen_rows: HashSet<Vec<u64>> = HashSet::new();
        for w_seq in seqs {
            let tr = self.affine_trajectory(x0, w_seq);
            let (mat, off) = self.cost_factor(&tr);
            prob.add_quadratic(mat, off, self.layout.r_index());
            self.linear_rows(&tr, |row, rhs| {
                let mut key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
                key.push((rhs + 0.0).to_bits());
                if seen_rows.insert(key) {
                    prob.add_linear(row, rhs);
                }
            });
        }
        prob
    }

    fn check_inputs(&self, x0: &[f64], tuple: &ScenarioTuple) -> Result<()> {
        let Layout { d, horizon, .. } = self.layout;
        if x0.len() != d {
            return Err(Error::Dimension(format!(
                "state has {} entries, expected {d}",
                x0.len()
            )));
        }
        if tuple.horizon() != horizon || tuple.coeff_dim() != self.agg.coeff_dim() {
            return Err(Error::Dimension(format!(
                "scenario tuple has shape N={} k={}, expected N={horizon} k={}",
                tuple.horizon(),
                tuple.coeff_dim(),
                self.agg.coeff_dim()
            )));
        }
        if tuple.n_scenarios() == 0 {
            return Err(Error::InvalidArgument("scenario tuple is empty".into()));
        }
        Ok(())
    }

    /// `G(𝒲; x̄)`; `+∞` when the relaxation is infeasible.
    ///
    /// Scenarios are added to the conic problem only when the current
    /// solution violates them, so the result equals the full inner problem.
    pub fn solve_inner(
        &self,
        x0: &[f64],
        tuple: &ScenarioTuple,
        settings: &SolverSettings,
    ) -> Result<InnerSolution> {
        self.solve_inner_hinted(x0, tuple, settings, &ActiveSet::default())
    }

    /// [`Transcription::solve_inner`] starting from the constraints in `hint`
    /// (typically [`InnerSolution::binding`] of a nearby tuple).
    pub fn solve_inner_hinted(
        &self,
        x0: &[f64],
        tuple: &ScenarioTuple,
        settings: &SolverSettings,
        hint: &ActiveSet,
    ) -> Result<InnerSolution> {
        self.check_inputs(x0, tuple)?;
        let ids = distinct_scenarios(tuple);
        let seqs: Vec<Vec<DVector<f64>>> = ids.iter().map(|&i| self.realize(tuple, i)).collect();
        let n_rows = self.rows_per_scenario();
        let mut cost_on = vec![false; seqs.len()];
        let mut row_on = vec![vec![false; n_rows]; seqs.len()];
        cost_on[0] = true;
        row_on[0].iter_mut().for_each(|r| *r = true);
        for h in &hint.costs {
            if let Ok(pos) = ids.binary_search(h) {
                cost_on[pos] = true;
            }
        }
        for (h, row) in &hint.rows {
            if let Ok(pos) = ids.binary_search(h) {
                if *row < n_rows {
                    row_on[pos][*row] = true;
                }
            }
        }
        let mut iterations = 0;
        loop {
            let prob = self.subset_problem(x0, &seqs, &cost_on, &row_on);
            let sol = conic::solve(&prob, settings)?;
            iterations += sol.iterations;
            match sol.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => {
                    return Ok(InnerSolution {
                        value: f64::INFINITY,
                        policy: None,
                        iterations,
                        binding: ActiveSet::default(),
                    })
                }
                SolveStatus::MaxIter => {
                    return Err(Error::SolverStall {
                        iterations,
                        primal_residual: sol.primal_residual,
                        dual_residual: sol.dual_residual,
                    })
                }
            }
            let mut policy = self.layout.policy_from_z(sol.z.as_slice());
            let r = policy.r;
            let cost_tol = settings.tol_opt * r.abs().max(1.0);
            let gap = COST_HINT_GAP * r.abs().max(1.0);
            let mut value = f64::NEG_INFINITY;
            let mut cost_cuts: Vec<(f64, usize)> = Vec::new();
            let mut row_cuts = 0;
            let mut binding = ActiveSet::default();
            for (i, w) in seqs.iter().enumerate() {
                let ro = rollout(&self.spec, &policy, x0, w);
                let j = trajectory_cost(&self.spec, &ro);
                value = value.max(j);
                if j >= r - gap {
                    binding.costs.push(ids[i]);
                }
                if !cost_on[i] && j > r + cost_tol {
                    cost_cuts.push((j - r, i));
                }
                for (k, v) in self.row_values(&ro).into_iter().enumerate() {
                    if v >= -BINDING_GAP {
                        binding.rows.push((ids[i], k));
                    }
                    if !row_on[i][k] && v > settings.tol_feas {
                        row_on[i][k] = true;
                        row_cuts += 1;
                    }
                }
            }
            if cost_cuts.is_empty() && row_cuts == 0 {
                // r is the certified worst scenario cost of the recovered policy
                policy.r = value;
                return Ok(InnerSolution {
                    value,
                    policy: Some(policy),
                    iterations,
                    binding,
                });
            }
            cost_cuts.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, i) in cost_cuts.into_iter().take(CUTS_PER_ROUND) {
                cost_on[i] = true;
            }
        }
    }

    fn rows_per_scenario(&self) -> usize {
        let h = self.layout.horizon;
        self.spec.state_set().n_rows() * h.saturating_sub(1)
            + self.spec.terminal_set().n_rows()
            + self.spec.control_set().n_rows() * h
    }

    /// Constraint values `a·z - b` of one rollout, in [`Transcription::linear_rows`] order.
    fn row_values(&self, ro: &Rollout) -> Vec<f64> {
        let h = self.layout.horizon;
        let mut out = Vec::with_capacity(self.rows_per_scenario());
        let mut push = |hm: &DMatrix<f64>, k: &[f64], v: &DVector<f64>| {
            let hv = hm * v;
            out.extend(hv.iter().zip(k).map(|(a, b)| a - b));
        };
        let xs = self.spec.state_set();
        for t in 1..h {
            push(xs.h(), xs.k().as_slice(), &ro.states[t]);
        }
        let xf = self.spec.terminal_set();
        push(xf.h(), xf.k().as_slice(), &ro.states[h]);
        for t in 0..h {
            push(self.spec.control_set().h(), &self.k_u, &ro.controls[t]);
        }
        out
    }

    fn subset_problem(
        &self,
        x0: &[f64],
        seqs: &[Vec<DVector<f64>>],
        cost_on: &[bool],
        row_on: &[Vec<bool>],
    ) -> ConicProblem {
        let nv = self.layout.n_vars();
        let mut obj = vec![0.0; nv];
        obj[self.layout.r_index()] = 1.0;
        let mut prob = ConicProblem::new(nv, obj);
        let mut seen_rows: HashSet<Vec<u64>> = HashSet::new();
        for (i, w_seq) in seqs.iter().enumerate() {
            if !cost_on[i] && !row_on[i].iter().any(|r| *r) {
                continue;
            }
            let tr = self.affine_trajectory(x0, w_seq);
            if cost_on[i] {
                let (mat, off) = self.cost_factor(&tr);
                prob.add_quadratic(mat, off, self.layout.r_index());
            }
            let mut k = 0;
            self.linear_rows(&tr, |row, rhs| {
                if row_on[i][k] {
                    let mut key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
                    key.push((rhs + 0.0).to_bits());
                    if seen_rows.insert(key) {
                        prob.add_linear(row, rhs);
                    }
                }
                k += 1;
            });
        }
        prob
    }

    /// [`Transcription::solve_inner`] on the full problem from [`Transcription::build_inner`].
    pub fn solve_inner_full(
        &self,
        x0: &[f64],
        tuple: &ScenarioTuple,
        settings: &SolverSettings,
    ) -> Result<InnerSolution> {
        let prob = self.build_inner(x0, tuple)?;
        let sol = conic::solve(&prob, settings)?;
        match sol.status {
            SolveStatus::Optimal => {
                let mut policy = self.layout.policy_from_z(sol.z.as_slice());
                let value = (0..tuple.n_scenarios())
                    .map(|i| cost(&self.spec, &policy, x0, &self.realize(tuple, i)))
                    .fold(f64::NEG_INFINITY, f64::max);
                policy.r = value;
                Ok(InnerSolution {
                    value,
                    policy: Some(policy),
                    iterations: sol.iterations,
                    binding: ActiveSet::default(),
                })
            }
            SolveStatus::Infeasible => Ok(InnerSolution {
                value: f64::INFINITY,
                policy: None,
                iterations: sol.iterations,
                binding: ActiveSet::default(),
            }),
            SolveStatus::MaxIter => Err(Error::SolverStall {
                iterations: sol.iterations,
                primal_residual: sol.primal_residual,
                dual_residual: sol.dual_residual,
            }),
        }
    }
}

const CUTS_PER_ROUND: usize = 64;
const BINDING_GAP: f64 = 1e-6;
/// Relative cost gap for scenarios carried into the next warm start.
const COST_HINT_GAP: f64 = 0.02;

/// Tight constraints at an inner solution, by tuple index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActiveSet {
    /// Scenarios whose cost is within 2% of `r`.
    pub costs: Vec<usize>,
    /// `(scenario, row)` pairs of nearly active linear rows.
    pub rows: Vec<(usize, usize)>,
}

/// First index of each bitwise-distinct scenario.
fn distinct_scenarios(tuple: &ScenarioTuple) -> Vec<usize> {
    let block = tuple.horizon() * tuple.coeff_dim();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    (0..tuple.n_scenarios())
        .filter(|&i| {
            let raw = &tuple.coeffs()[i * block..(i + 1) * block];
            seen.insert(raw.iter().map(|v| (v + 0.0).to_bits()).collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    pub value: f64,
    pub policy: Option<DFPolicy>,
    /// Total interior-point iterations over all cutting rounds.
    pub iterations: usize,
    /// Constraints that are (nearly) tight at the solution.
    pub binding: ActiveSet,
}

impl InnerSolution {
    pub fn feasible(&self) -> bool {
        self.value.is_finite()
    }
}

/// One-shot [`Transcription::build_inner`].
pub fn build_inner(spec: &ProblemSpec, x0: &[f64], tuple: &ScenarioTuple) -> Result<ConicProblem> {
    Transcription::new(spec).build_inner(x0, tuple)
}

/// One-shot [`Transcription::solve_inner`].
pub fn solve_inner(
    spec: &ProblemSpec,
    x0: &[f64],
    tuple: &ScenarioTuple,
    settings: &SolverSettings,
) -> Result<InnerSolution> {
    Transcription::new(spec).solve_inner(x0, tuple, settings)
}
