//! Inner convex solver.
//!
//! Problems have a linear objective, linear inequalities `a·z <= b` and
//! convex quadratic inequalities `‖M z + c‖² <= z_r`. The quadratic rows are
//! embedded as rotated second-order cones and the whole problem is solved by
//! an infeasible-start primal-dual interior-point method with Nesterov-Todd
//! scaling and Mehrotra predictor-corrector steps. Infeasibility is decided by
//! a separate phase-I problem that minimizes the largest constraint violation.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

const STEP_FRACTION: f64 = 0.99;
const REGULARIZATION: f64 = 1e-13;
const REFINEMENT_STEPS: usize = 2;
/// Factor by which the tolerances are loosened for a stalled run's best iterate.
const REDUCED_ACCURACY: f64 = 1e3;
/// Ratio `‖Gᵀz‖ / (-hᵀz)` below which the dual iterate looks like a Farkas certificate.
const CERTIFICATE_RATIO: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadIneq {
    /// `rows × n_vars` factor.
    pub factor: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// Index of the epigraph variable.
    pub epi: usize,
}

/// `min objective·z` s.t. linear rows and quadratic epigraph rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicProblem {
    n_vars: usize,
    objective: Vec<f64>,
    lin_rows: Vec<f64>,
    lin_rhs: Vec<f64>,
    quad: Vec<QuadIneq>,
}

impl ConicProblem {
    pub fn new(n_vars: usize, objective: Vec<f64>) -> Self {
        assert_eq!(
            objective.len(),
            n_vars,
            "objective length must equal n_vars"
        );
        ConicProblem {
            n_vars,
            objective,
            lin_rows: Vec::new(),
            lin_rhs: Vec::new(),
            quad: Vec::new(),
        }
    }

    /// Adds `a·z <= b`.
    pub fn add_linear(&mut self, a: &[f64], b: f64) {
        assert_eq!(a.len(), self.n_vars, "linear row length must equal n_vars");
        self.lin_rows.extend_from_slice(a);
        self.lin_rhs.push(b);
    }

    /// Adds `‖factor·z + offset‖² <= z[epi]`.
    pub fn add_quadratic(&mut self, factor: DMatrix<f64>, offset: DVector<f64>, epi: usize) {
        self.quad.push(QuadIneq {
            factor,
            offset,
            epi,
        });
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn n_linear(&self) -> usize {
        self.lin_rhs.len()
    }

    pub fn linear_row(&self, i: usize) -> (&[f64], f64) {
        let n = self.n_vars;
        (&self.lin_rows[i * n..(i + 1) * n], self.lin_rhs[i])
    }

    pub fn quadratics(&self) -> &[QuadIneq] {
        &self.quad
    }

    pub fn scale_objective(&mut self, factor: f64) {
        self.objective.iter_mut().for_each(|c| *c *= factor);
    }

    /// Structural checks: factor widths, offset lengths and epigraph indices.
    pub fn check(&self) -> Result<()> {
        for (i, q) in self.quad.iter().enumerate() {
            if q.factor.ncols() != self.n_vars {
                return Err(Error::Dimension(format!(
                    "quadratic {i}: factor has {} columns, expected {}",
                    q.factor.ncols(),
                    self.n_vars
                )));
            }
            if q.offset.len() != q.factor.nrows() {
                return Err(Error::Dimension(format!(
                    "quadratic {i}: offset has {} entries, factor has {} rows",
                    q.offset.len(),
                    q.factor.nrows()
                )));
            }
            if q.epi >= self.n_vars {
                return Err(Error::Dimension(format!(
                    "quadratic {i}: epigraph index {} out of range",
                    q.epi
                )));
            }
        }
        if self
            .objective
            .iter()
            .chain(&self.lin_rows)
            .chain(&self.lin_rhs)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Dimension("non-finite problem data".into()));
        }
        Ok(())
    }

    /// Value of each constraint function `f_i(z)` (feasible iff all `<= 0`); linear rows first.
    pub fn constraint_values(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n_vars;
        let mut out = Vec::with_capacity(self.n_linear() + self.quad.len());
        for i in 0..self.n_linear() {
            let (a, b) = self.linear_row(i);
            out.push(dot(a, z) - b);
        }
        let zv = DVector::from_column_slice(z);
        for q in &self.quad {
            let y = &q.factor * &zv + &q.offset;
            out.push(y.norm_squared() - z[q.epi]);
        }
        debug_assert_eq!(z.len(), n);
        out
    }

    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.constraint_values(z).into_iter().fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol_feas: 1e-8,
            tol_opt: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase1Report {
    pub feasible: bool,
    /// Minimal achievable largest violation `min_z max_i f_i(z)`, clipped at 0.
    pub max_violation: f64,
    /// `Σ_i max(f_i, 0)` at the phase-I minimizer.
    pub total_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub z: DVector<f64>,
    pub obj: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Present whenever phase I was run (always for `Infeasible`).
    pub phase1: Option<Phase1Report>,
}

/// Cone-form data `min cᵀx  s.t.  Gx + s = h,  s ∈ R₊^l × Q^{q_1} × ...`.
struct ConeForm {
    n: usize,
    c: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    nonneg: usize,
    soc: Vec<usize>,
    /// `-G_bᵀ J G_b` per SOC block, constant across iterations.
    soc_gram: Vec<DMatrix<f64>>,
}

impl ConeForm {
    fn m(&self) -> usize {
        self.g.nrows()
    }

    fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// Offsets of each SOC block.
    fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&q| {
            let start = off;
            off += q;
            (start, q)
        })
    }
}

/// Builds the cone form. `slack` appends an extra variable `t` that relaxes every
/// constraint (phase I); rows with a zero normal are checked directly.
fn cone_form(p: &ConicProblem, slack: bool) -> (ConeForm, f64) {
    let n0 = p.n_vars;
    let n = if slack { n0 + 1 } else { n0 };
    let mut trivially_violated: f64 = 0.0;

    let mut lin: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p.n_linear() + 1);
    for i in 0..p.n_linear() {
        let (a, b) = p.linear_row(i);
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            trivially_violated = trivially_violated.max(-b);
            continue;
        }
        let mut row: Vec<f64> = a.iter().map(|v| v / norm).collect();
        if slack {
            row.push(-1.0);
        }
        lin.push((row, b / norm));
    }
    if slack {
        // t >= -1 keeps phase I bounded
        let mut row = vec![0.0; n];
        row[n0] = -1.0;
        lin.push((row, 1.0));
    }

    let nonneg = lin.len();
    let soc: Vec<usize> = p.quad.iter().map(|q| q.factor.nrows() + 2).collect();
    let m = nonneg + soc.iter().sum::<usize>();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    for (i, (row, b)) in lin.iter().enumerate() {
        for j in 0..n {
            g[(i, j)] = row[j];
        }
        h[i] = *b;
    }
    // ‖y‖² <= u  <=>  (u + 1/2, u - 1/2, √2·y) ∈ Q, with s = h - Gx.
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut off = nonneg;
    for q in &p.quad {
        let rows = q.factor.nrows();
        g[(off, q.epi)] = -1.0;
        h[off] = 0.5;
        g[(off + 1, q.epi)] = -1.0;
        h[off + 1] = -0.5;
        if slack {
            g[(off, n0)] = -1.0;
            g[(off + 1, n0)] = -1.0;
        }
        for r in 0..rows {
            for j in 0..n0 {
                g[(off + 2 + r, j)] = -sqrt2 * q.factor[(r, j)];
            }
            h[off + 2 + r] = sqrt2 * q.offset[r];
        }
        off += rows + 2;
    }
    // the two epigraph rows cancel under J, leaving 2MᵀM
    let soc_gram = p
        .quad
        .iter()
        .map(|q| {
            let mut k = DMatrix::zeros(n, n);
            k.view_mut((0, 0), (n0, n0))
                .copy_from(&(q.factor.tr_mul(&q.factor) * 2.0));
            k
        })
        .collect();
    let mut c = DVector::zeros(n);
    if slack {
        c[n0] = 1.0;
    } else {
        c.as_mut_slice()[..n0].copy_from_slice(&p.objective);
    }
    (
        ConeForm {
            n,
            c,
            g,
            h,
            nonneg,
            soc,
            soc_gram,
        },
        trivially_violated,
    )
}

/// Nesterov-Todd scaling: `W z = W⁻¹ s = λ`.
struct Scaling {
    /// Nonnegative part: `W_ii = sqrt(s_i / z_i)`.
    lin: Vec<f64>,
    /// Per SOC block: `(β, v)` with `W = β(2vvᵀ - J)`.
    soc: Vec<(f64, DVector<f64>)>,
    /// Per SOC block: `J w̄` with `W⁻² = β⁻²(2(Jw̄)(Jw̄)ᵀ - J)`.
    soc_jw: Vec<DVector<f64>>,
}

fn jdot(x: &[f64], y: &[f64]) -> f64 {
    x[0] * y[0] - dot(&x[1..], &y[1..])
}

/// `x0² - ‖x1‖²` without cancellation.
fn soc_det(x: &[f64]) -> f64 {
    let nrm = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    (x[0] - nrm) * (x[0] + nrm)
}

fn soc_min_eig(x: &[f64]) -> f64 {
    x[0] - x[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Scaling {
    fn new(cf: &ConeForm, s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let lin = (0..cf.nonneg)
            .map(|i| (s[i] / z[i]).sqrt())
            .collect::<Vec<_>>();
        let mut soc = Vec::with_capacity(cf.soc.len());
        let mut soc_jw = Vec::with_capacity(cf.soc.len());
        for (off, q) in cf.soc_blocks() {
            let sb = &s.as_slice()[off..off + q];
            let zb = &z.as_slice()[off..off + q];
            let a2 = soc_det(sb);
            let b2 = soc_det(zb);
            if !(a2 > 0.0 && b2 > 0.0) {
                return None;
            }
            let (a, b) = (a2.sqrt(), b2.sqrt());
            let sbar: Vec<f64> = sb.iter().map(|v| v / a).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / b).collect();
            let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
            let mut w = DVector::zeros(q);
            w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for i in 1..q {
                w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
            }
            let denom = (2.0 * (w[0] + 1.0)).sqrt();
            let mut jw = w.clone();
            jw.rows_mut(1, q - 1).neg_mut();
            soc_jw.push(jw);
            let mut v = w / denom;
            v[0] += 1.0 / denom;
            soc.push(((a / b).sqrt(), v));
        }
        Some(Scaling { lin, soc, soc_jw })
    }

    /// `W = I`.
    fn identity(cf: &ConeForm) -> Self {
        let e = |q: usize| {
            let mut v = DVector::zeros(q);
            v[0] = 1.0;
            v
        };
        Scaling {
            lin: vec![1.0; cf.nonneg],
            soc: cf.soc.iter().map(|&q| (1.0, e(q))).collect(),
            soc_jw: cf.soc.iter().map(|&q| e(q)).collect(),
        }
    }

    /// `y <- W y` (or `W⁻¹ y` when `inverse`) on a cone-shaped vector.
    fn apply(&self, cf: &ConeForm, y: &mut [f64], inverse: bool) {
        for (i, w) in self.lin.iter().enumerate() {
            if inverse {
                y[i] /= w;
            } else {
                y[i] *= w;
            }
        }
        for ((off, q), (beta, v)) in cf.soc_blocks().zip(&self.soc) {
            let blk = &mut y[off..off + q];
            apply_soc(blk, *beta, v, inverse);
        }
    }

    /// `Gᵀ W⁻² G`; `lin_buf` holds the scaled nonnegative rows.
    fn normal_matrix(&self, cf: &ConeForm, lin_buf: &mut DMatrix<f64>) -> DMatrix<f64> {
        let l = cf.nonneg;
        lin_buf.copy_from(&cf.g.rows(0, l));
        for j in 0..cf.n {
            for (i, w) in self.lin.iter().enumerate() {
                lin_buf[(i, j)] /= w;
            }
        }
        let mut k = lin_buf.tr_mul(lin_buf);
        for ((((off, q), (beta, _)), jw), gram) in cf
            .soc_blocks()
            .zip(&self.soc)
            .zip(&self.soc_jw)
            .zip(&cf.soc_gram)
        {
            let a = cf.g.rows(off, q).tr_mul(jw);
            let inv_b2 = 1.0 / (beta * beta);
            k += gram * inv_b2;
            k.ger(2.0 * inv_b2, &a, &a, 1.0);
        }
        k
    }
}

/// `H(v) = 2vvᵀ - J`; `W = βH(v)`, `W⁻¹ = β⁻¹ J H(v) J`.
fn apply_soc(y: &mut [f64], beta: f64, v: &DVector<f64>, inverse: bool) {
    let q = y.len();
    if inverse {
        // J H J y = 2 (Jv)(Jv)ᵀ y - J y
        let jv_dot_y = v[0] * y[0] - (1..q).map(|i| v[i] * y[i]).sum::<f64>();
        y[0] = (2.0 * v[0] * jv_dot_y - y[0]) / beta;
        for i in 1..q {
            y[i] = (-2.0 * v[i] * jv_dot_y + y[i]) / beta;
        }
    } else {
        let v_dot_y = (0..q).map(|i| v[i] * y[i]).sum::<f64>();
        y[0] = beta * (2.0 * v[0] * v_dot_y - y[0]);
        for i in 1..q {
            y[i] = beta * (2.0 * v[i] * v_dot_y + y[i]);
        }
    }
}

/// Jordan product `x ∘ y`.
fn jordan(cf: &ConeForm, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..cf.nonneg {
        out[i] = x[i] * y[i];
    }
    for (off, q) in cf.soc_blocks() {
        let xb = &x[off..off + q];
        let yb = &y[off..off + q];
        out[off] = dot(xb, yb);
        for i in 1..q {
            out[off + i] = xb[0] * yb[i] + yb[0] * xb[i];
        }
    }
    out
}

/// Solves `λ ∘ u = d` for `u`.
fn jordan_div(cf: &ConeForm, lambda: &[f64], d: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; d.len()];
    for i in 0..cf.nonneg {
        u[i] = d[i] / lambda[i];
    }
    for (off, q) in cf.soc_blocks() {
        let l = &lambda[off..off + q];
        let db = &d[off..off + q];
        let det = jdot(l, l);
        let u0 = (l[0] * db[0] - dot(&l[1..], &db[1..])) / det;
        u[off] = u0;
        for i in 1..q {
            u[off + i] = (db[i] - u0 * l[i]) / l[0];
        }
    }
    u
}

fn identity_element(cf: &ConeForm) -> Vec<f64> {
    let mut e = vec![0.0; cf.m()];
    e[..cf.nonneg].iter_mut().for_each(|v| *v = 1.0);
    for (off, _) in cf.soc_blocks() {
        e[off] = 1.0;
    }
    e
}

/// Smallest cone "eigenvalue" of `x`.
fn min_eig(cf: &ConeForm, x: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for v in &x[..cf.nonneg] {
        m = m.min(*v);
    }
    for (off, q) in cf.soc_blocks() {
        m = m.min(soc_min_eig(&x[off..off + q]));
    }
    m
}

/// Largest `α <= cap` keeping `x + α dx` in the cone.
fn max_step(cf: &ConeForm, x: &[f64], dx: &[f64], cap: f64) -> f64 {
    let mut alpha = cap;
    for i in 0..cf.nonneg {
        if dx[i] < 0.0 {
            alpha = alpha.min(-x[i] / dx[i]);
        }
    }
    for (off, q) in cf.soc_blocks() {
        let xb = &x[off..off + q];
        let db = &dx[off..off + q];
        // (x0 + a d0)² - ‖x1 + a d1‖² >= 0 and x0 + a d0 >= 0
        let qa = jdot(db, db);
        let qb = jdot(xb, db);
        let qc = jdot(xb, xb).max(0.0);
        let mut a_max = f64::INFINITY;
        if db[0] < 0.0 {
            a_max = a_max.min(-xb[0] / db[0]);
        }
        // smallest positive root of qa a² + 2 qb a + qc = 0
        if qa.abs() < 1e-300 {
            if qb < 0.0 {
                a_max = a_max.min(-qc / (2.0 * qb));
            }
        } else {
            let disc = qb * qb - qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let r1 = (-qb - sq) / qa;
                let r2 = (-qb + sq) / qa;
                for r in [r1, r2] {
                    if r > 0.0 {
                        a_max = a_max.min(r);
                    }
                }
            }
        }
        alpha = alpha.min(a_max);
    }
    alpha.max(0.0)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum IpmOutcome {
    Converged,
    SuspectInfeasible,
    Stalled,
}

struct IpmResult {
    x: DVector<f64>,
    outcome: IpmOutcome,
    iterations: usize,
    pres: f64,
    dres: f64,
}

/// Cholesky of `K`, adding diagonal regularization only when `K` is numerically singular.
fn factor(k: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = Cholesky::new(k.clone()) {
        return Some(ch);
    }
    let scale = k.diagonal().amax().max(1.0);
    let mut delta = REGULARIZATION * scale;
    for _ in 0..6 {
        let mut kr = k.clone();
        for i in 0..kr.nrows() {
            kr[(i, i)] += delta;
        }
        if let Some(ch) = Cholesky::new(kr) {
            return Some(ch);
        }
        delta *= 100.0;
    }
    None
}

fn ipm(cf: &ConeForm, settings: &SolverSettings) -> IpmResult {
    let n = cf.n;
    let deg = cf.degree() as f64;
    let e = identity_element(cf);

    // Least-squares initialization, shifted into the cone interior.
    let mut lin_buf = DMatrix::zeros(cf.nonneg, n);
    let gtg = Scaling::identity(cf).normal_matrix(cf, &mut lin_buf);
    let chol = match factor(gtg) {
        Some(ch) => ch,
        None => {
            return IpmResult {
                x: DVector::zeros(n),
                outcome: IpmOutcome::Stalled,
                iterations: 0,
                pres: f64::INFINITY,
                dres: f64::INFINITY,
            }
        }
    };
    let mut x = chol.solve(&cf.g.tr_mul(&cf.h));
    let mut s = &cf.h - &cf.g * &x;
    let mut z = &cf.g * chol.solve(&(-&cf.c));
    let shift = |v: &mut DVector<f64>| {
        let me = min_eig(cf, v.as_slice());
        if me <= 1e-8 {
            let add = 1.0 - me;
            for (vi, ei) in v.iter_mut().zip(&e) {
                *vi += add * ei;
            }
        }
    };
    shift(&mut s);
    shift(&mut z);

    let mut pres = f64::INFINITY;
    let mut dres = f64::INFINITY;
    let mut best: Option<BestIterate> = None;
    for iter in 0..settings.max_iter {
        let rx = cf.g.tr_mul(&z) + &cf.c;
        let rz = &cf.g * &x + &s - &cf.h;
        let gap = s.dot(&z);
        let mu = gap / deg;
        let relgap;
        (pres, dres, relgap) = residuals(cf, &x, &s, &z);
        let merit = pres.max(dres).max(relgap);
        if best.as_ref().is_none_or(|b| merit < b.merit) {
            best = Some(BestIterate {
                x: x.clone(),
                merit,
                pres,
                dres: dres.max(relgap),
                iterations: iter,
            });
        }
        if pres <= settings.tol_feas && dres <= settings.tol_opt && relgap <= settings.tol_opt {
            return IpmResult {
                x,
                outcome: IpmOutcome::Converged,
                iterations: iter,
                pres,
                dres: dres.max(relgap),
            };
        }
        let hz = cf.h.dot(&z);
        if hz < 0.0 {
            let gtz = cf.g.tr_mul(&z);
            if inf_norm(gtz.as_slice()) <= CERTIFICATE_RATIO * (-hz) {
                return IpmResult {
                    x,
                    outcome: IpmOutcome::SuspectInfeasible,
                    iterations: iter,
                    pres,
                    dres,
                };
            }
        }

        let scaling = match Scaling::new(cf, &s, &z) {
            Some(sc) => sc,
            None => return stalled(best, x, iter, pres, dres, settings),
        };
        let mut lambda = z.as_slice().to_vec();
        scaling.apply(cf, &mut lambda, false);
        let kmat = scaling.normal_matrix(cf, &mut lin_buf);
        let chol = match factor(kmat.clone()) {
            Some(ch) => ch,
            None => return stalled(best, x, iter, pres, dres, settings),
        };

        // W⁻¹ rz, reused by both solves
        let mut winv_rz = rz.as_slice().to_vec();
        scaling.apply(cf, &mut winv_rz, true);

        let solve = |dvec: &[f64]| -> (DVector<f64>, Vec<f64>, Vec<f64>) {
            let u = jordan_div(cf, &lambda, dvec);
            let t: Vec<f64> = winv_rz.iter().zip(&u).map(|(a, b)| a + b).collect();
            let mut t = t;
            scaling.apply(cf, &mut t, true);
            let rhs = -(&rx) - cf.g.tr_mul(&DVector::from_vec(t));
            let mut dx = chol.solve(&rhs);
            // iterative refinement against the unregularized normal equations
            for _ in 0..REFINEMENT_STEPS {
                let res = &rhs - &kmat * &dx;
                dx += chol.solve(&res);
            }
            // W Δz = W⁻¹(GΔx + rz) + u  (scaled dual step)
            let mut gdx = (&cf.g * &dx).as_slice().to_vec();
            scaling.apply(cf, &mut gdx, true);
            let dz_scaled: Vec<f64> = gdx
                .iter()
                .zip(&winv_rz)
                .zip(&u)
                .map(|((a, b), c)| a + b + c)
                .collect();
            // W⁻¹ Δs = u - W Δz
            let ds_scaled: Vec<f64> = u.iter().zip(&dz_scaled).map(|(a, b)| a - b).collect();
            (dx, ds_scaled, dz_scaled)
        };

        // predictor
        let lam_sq = jordan(cf, &lambda, &lambda);
        let d_aff: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let (_, ds_a, dz_a) = solve(&d_aff);
        let a_aff = max_step(cf, &lambda, &ds_a, 1.0).min(max_step(cf, &lambda, &dz_a, 1.0));
        let gap_aff: f64 = {
            let sa: Vec<f64> = lambda
                .iter()
                .zip(&ds_a)
                .map(|(l, d)| l + a_aff * d)
                .collect();
            let za: Vec<f64> = lambda
                .iter()
                .zip(&dz_a)
                .map(|(l, d)| l + a_aff * d)
                .collect();
            dot(&sa, &za)
        };
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // corrector
        let cross = jordan(cf, &ds_a, &dz_a);
        let d_cc: Vec<f64> = lam_sq
            .iter()
            .zip(&cross)
            .zip(&e)
            .map(|((l2, cr), ei)| -l2 - cr + sigma * mu * ei)
            .collect();
        let (dx, ds_sc, dz_sc) = solve(&d_cc);
        let alpha = (STEP_FRACTION
            * max_step(cf, &lambda, &ds_sc, f64::INFINITY).min(max_step(
                cf,
                &lambda,
                &dz_sc,
                f64::INFINITY,
            )))
        .min(1.0);
        if !(alpha > 1e-14) || dx.iter().any(|v| !v.is_finite()) {
            return stalled(best, x, iter + 1, pres, dres, settings);
        }
        // unscale: Δs = W (W⁻¹Δs), Δz = W⁻¹ (WΔz)
        let mut ds = ds_sc;
        scaling.apply(cf, &mut ds, false);
        let mut dz = dz_sc;
        scaling.apply(cf, &mut dz, true);
        let (ds, dz) = (DVector::from_vec(ds), DVector::from_vec(dz));
        // round-off can land a full step on the boundary
        let mut step = alpha;
        loop {
            let xn = &x + step * &dx;
            let sn = &s + step * &ds;
            let zn = &z + step * &dz;
            if min_eig(cf, sn.as_slice()) > 0.0 && min_eig(cf, zn.as_slice()) > 0.0 {
                x = xn;
                s = sn;
                z = zn;
                break;
            }
            let (p, d, g) = residuals(cf, &xn, &sn.map(|v| v.max(0.0)), &zn.map(|v| v.max(0.0)));
            if p <= settings.tol_feas && d <= settings.tol_opt && g <= settings.tol_opt {
                return IpmResult {
                    x: xn,
                    outcome: IpmOutcome::Converged,
                    iterations: iter + 1,
                    pres: p,
                    dres: d.max(g),
                };
            }
            step *= 0.5;
            if step < 1e-14 {
                return stalled(best, x, iter + 1, pres, dres, settings);
            }
        }
    }
    stalled(best, x, settings.max_iter, pres, dres, settings)
}

struct BestIterate {
    x: DVector<f64>,
    merit: f64,
    pres: f64,
    dres: f64,
    iterations: usize,
}

/// Falls back to the best iterate seen when it meets the reduced tolerances.
fn stalled(
    best: Option<BestIterate>,
    x: DVector<f64>,
    iterations: usize,
    pres: f64,
    dres: f64,
    settings: &SolverSettings,
) -> IpmResult {
    if let Some(b) = best {
        if b.pres <= settings.tol_feas * REDUCED_ACCURACY
            && b.dres <= settings.tol_opt * REDUCED_ACCURACY
        {
            return IpmResult {
                x: b.x,
                outcome: IpmOutcome::Converged,
                iterations: b.iterations,
                pres: b.pres,
                dres: b.dres,
            };
        }
    }
    IpmResult {
        x,
        outcome: IpmOutcome::Stalled,
        iterations,
        pres,
        dres,
    }
}

/// Scaled primal residual, dual residual and relative gap.
fn residuals(
    cf: &ConeForm,
    x: &DVector<f64>,
    s: &DVector<f64>,
    z: &DVector<f64>,
) -> (f64, f64, f64) {
    let h_norm = inf_norm(cf.h.as_slice()).max(1.0);
    let c_norm = inf_norm(cf.c.as_slice()).max(1.0);
    let rx = cf.g.tr_mul(z) + &cf.c;
    let rz = &cf.g * x + s - &cf.h;
    let gap = s.dot(z);
    let pcost = cf.c.dot(x);
    (
        inf_norm(rz.as_slice()) / h_norm,
        inf_norm(rx.as_slice()) / c_norm,
        gap.abs() / pcost.abs().max(1.0),
    )
}

/// Minimizes the largest constraint violation.
pub fn phase1_feasibility(problem: &ConicProblem) -> Phase1Report {
    phase1_with(problem, &SolverSettings::default())
}

fn phase1_with(problem: &ConicProblem, settings: &SolverSettings) -> Phase1Report {
    let (cf, trivial) = cone_form(problem, true);
    let res = ipm(&cf, settings);
    let n0 = problem.n_vars();
    let z = &res.x.as_slice()[..n0];
    // Measure at the phase-I point in original units; normalized t only ranks rows.
    let values = problem.constraint_values(z);
    let worst = values.iter().copied().fold(trivial, f64::max).max(0.0);
    let total = values.iter().map(|v| v.max(0.0)).sum::<f64>() + trivial.max(0.0);
    let t = res.x[n0];
    let max_violation = match res.outcome {
        IpmOutcome::Converged => t.max(0.0).max(trivial),
        _ => worst,
    };
    Phase1Report {
        feasible: max_violation <= settings.tol_feas,
        max_violation,
        total_violation: total,
    }
}

/// Solves a [`ConicProblem`]. Structural errors are returned before any iteration.
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    problem.check()?;
    if !(settings.tol_feas > 0.0 && settings.tol_opt > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let (cf, trivial) = cone_form(problem, false);
    if trivial > settings.tol_feas {
        let report = phase1_with(problem, settings);
        return Ok(infeasible(problem, report, 0));
    }
    let res = ipm(&cf, settings);
    let zvec = res.x.clone();
    let obj = cf.c.dot(&zvec);
    match res.outcome {
        IpmOutcome::Converged => {
            let viol = problem.max_violation(zvec.as_slice());
            Ok(ConicSolution {
                status: SolveStatus::Optimal,
                z: zvec,
                obj,
                primal_residual: viol.max(0.0).min(res.pres.max(viol)),
                dual_residual: res.dres,
                iterations: res.iterations,
                phase1: None,
            })
        }
        IpmOutcome::SuspectInfeasible | IpmOutcome::Stalled => {
            let report = phase1_with(problem, settings);
            if !report.feasible {
                return Ok(infeasible(problem, report, res.iterations));
            }
            Ok(ConicSolution {
                status: SolveStatus::MaxIter,
                obj,
                primal_residual: problem.max_violation(zvec.as_slice()),
                z: zvec,
                dual_residual: res.dres,
                iterations: res.iterations,
                phase1: Some(report),
            })
        }
    }
}

fn infeasible(problem: &ConicProblem, report: Phase1Report, iterations: usize) -> ConicSolution {
    ConicSolution {
        status: SolveStatus::Infeasible,
        z: DVector::zeros(problem.n_vars()),
        obj: f64::INFINITY,
        primal_residual: report.max_violation,
        dual_residual: f64::NAN,
        iterations,
        phase1: Some(report),
    }
}
