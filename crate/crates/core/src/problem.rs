//! Robust OCP data: dynamics, weights, constraint polytopes and the
//! aggregate disturbance zonotope `W ⊕ B·V`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::conic::{self, ConicProblem, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

const PSD_FLOOR: f64 = -1e-10;
const SYMMETRY_TOL: f64 = 1e-9;
const CONTAINMENT_TOL: f64 = 1e-9;

/// H-polytope `{x : H x <= k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    h: DMatrix<f64>,
    k: DVector<f64>,
}

impl Polytope {
    pub fn new(h: DMatrix<f64>, k: DVector<f64>) -> Result<Self> {
        if h.nrows() != k.len() {
            return Err(Error::Dimension(format!(
                "polytope has {} rows but {} offsets",
                h.nrows(),
                k.len()
            )));
        }
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::Dimension(
                "polytope must have rows and columns".into(),
            ));
        }
        Ok(Polytope { h, k })
    }

    /// Axis-aligned box `lo <= x <= hi`, stored as `+e_i x <= hi_i`, `-e_i x <= -lo_i`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must have equal length");
        let d = lo.len();
        let mut h = DMatrix::zeros(2 * d, d);
        let mut k = DVector::zeros(2 * d);
        for i in 0..d {
            h[(2 * i, i)] = 1.0;
            k[2 * i] = hi[i];
            h[(2 * i + 1, i)] = -1.0;
            k[2 * i + 1] = -lo[i];
        }
        Polytope { h, k }
    }

    /// `‖x‖∞ <= radius` in `dim` dimensions.
    pub fn cube(dim: usize, radius: f64) -> Self {
        Self::from_box(&vec![-radius; dim], &vec![radius; dim])
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn k(&self) -> &DVector<f64> {
        &self.k
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// `max_i (H x - k)_i`, negative when `x` is interior.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.n_rows())
            .map(|i| {
                let hx: f64 = (0..self.dim()).map(|j| self.h[(i, j)] * x[j]).sum();
                hx - self.k[i]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Returns `(lo, hi)` when the polytope is exactly the box produced by [`Polytope::from_box`].
    pub fn as_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        if self.n_rows() != 2 * d {
            return None;
        }
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                let up = if i == j { 1.0 } else { 0.0 };
                if self.h[(2 * i, j)] != up || self.h[(2 * i + 1, j)] != -up {
                    return None;
                }
            }
            hi[i] = self.k[2 * i];
            lo[i] = -self.k[2 * i + 1];
        }
        Some((lo, hi))
    }

    /// Support function `max { dir·x : x in P }`, by LP unless the polytope is a box.
    pub fn support(&self, dir: &[f64]) -> Result<f64> {
        if let Some((lo, hi)) = self.as_box() {
            return Ok(dir
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(c, (l, u))| if *c >= 0.0 { c * u } else { c * l })
                .sum());
        }
        let n = self.dim();
        let mut lp = ConicProblem::new(n, dir.iter().map(|c| -c).collect());
        for i in 0..self.n_rows() {
            let row: Vec<f64> = (0..n).map(|j| self.h[(i, j)]).collect();
            lp.add_linear(&row, self.k[i]);
        }
        let sol = conic::solve(&lp, &SolverSettings::default())?;
        match sol.status {
            SolveStatus::Optimal => Ok(-sol.obj),
            SolveStatus::Infeasible => Err(Error::spec("polytope is empty")),
            SolveStatus::MaxIter => Err(Error::spec(
                "support function did not converge (polytope may be unbounded)",
            )),
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some(b) = self.as_box() {
            return Ok(b);
        }
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            hi[i] = self.support(&e)?;
            e[i] = -1.0;
            lo[i] = -self.support(&e)?;
        }
        Ok((lo, hi))
    }

    /// Row-wise containment `self ⊆ other` via support functions.
    pub fn is_subset_of(&self, other: &Polytope) -> Result<bool> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(
                "containment check across dimensions".into(),
            ));
        }
        for i in 0..other.n_rows() {
            let row: Vec<f64> = (0..other.dim()).map(|j| other.h[(i, j)]).collect();
            if self.support(&row)? > other.k[i] + CONTAINMENT_TOL * (1.0 + other.k[i].abs()) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// ℓ1 norms of the rows of `H`; the exact tightening of `H u <= k` against `‖v‖∞ <= ε`.
    pub fn row_l1_norms(&self) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| (0..self.dim()).map(|j| self.h[(i, j)].abs()).sum())
            .collect()
    }

    fn to_json(&self) -> SetJson {
        match self.as_box() {
            Some((lo, hi)) => SetJson::Box(lo.into_iter().zip(hi).map(|(l, u)| [l, u]).collect()),
            None => SetJson::Polytope(PolytopeJson {
                h: rows_of(&self.h),
                k: self.k.iter().copied().collect(),
            }),
        }
    }
}

/// Axis-aligned box for the physical disturbance.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn symmetric(half: &[f64]) -> Self {
        BoxSet {
            lo: half.iter().map(|h| -h).collect(),
            hi: half.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, u)| 0.5 * (u - l))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    /// State dimension.
    pub d: usize,
    /// Control dimension.
    pub m: usize,
    /// Physical disturbance dimension.
    pub n_w: usize,
    pub horizon: usize,
}

impl Dims {
    /// `dim(θ) + dim(η) + dim(r) = mN·dN + mN + 1`.
    pub fn n_z(&self) -> usize {
        let mn = self.m * self.horizon;
        mn * self.d * self.horizon + mn + 1
    }
}

/// Validated robust OCP.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    g: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    p: DMatrix<f64>,
    horizon: usize,
    state_set: Polytope,
    control_set: Polytope,
    dist_box: BoxSet,
    terminal_set: Polytope,
    eps: f64,
    dims: Dims,
}

/// Unvalidated spec, field-for-field the JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_polytope: Option<PolytopeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_polytope: Option<PolytopeJson>,
    pub dist_box: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_polytope: Option<PolytopeJson>,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeJson {
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub k: Vec<f64>,
}

enum SetJson {
    Box(Vec<[f64; 2]>),
    Polytope(PolytopeJson),
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    if nr == 0 {
        return Err(Error::spec(format!("{name} has no rows")));
    }
    let nc = rows[0].len();
    if nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::spec(format!("{name} is not a rectangular matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::spec(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn set_from(
    name: &str,
    bx: &Option<Vec<[f64; 2]>>,
    poly: &Option<PolytopeJson>,
) -> Result<Option<Polytope>> {
    match (bx, poly) {
        (Some(_), Some(_)) => Err(Error::spec(format!(
            "{name}: give either a box or a polytope, not both"
        ))),
        (Some(b), None) => {
            if b.iter()
                .any(|[l, u]| !(l <= u) || !l.is_finite() || !u.is_finite())
            {
                return Err(Error::spec(format!(
                    "{name}: box bounds must satisfy lo <= hi"
                )));
            }
            let lo: Vec<f64> = b.iter().map(|p| p[0]).collect();
            let hi: Vec<f64> = b.iter().map(|p| p[1]).collect();
            Ok(Some(Polytope::from_box(&lo, &hi)))
        }
        (None, Some(p)) => {
            let h = matrix(&format!("{name}.H"), &p.h)?;
            Ok(Some(Polytope::new(h, DVector::from_vec(p.k.clone()))?))
        }
        (None, None) => Ok(None),
    }
}

fn check_psd(name: &str, m: &DMatrix<f64>, strict: bool) -> Result<()> {
    if !m.is_square() {
        return Err(Error::spec(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::spec(format!("{name} must be symmetric")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    if strict && min_eig <= 0.0 {
        return Err(Error::spec(format!(
            "{name} must be positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    if min_eig < PSD_FLOOR {
        return Err(Error::spec(format!(
            "{name} must be positive semidefinite (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(())
}

/// Validates every invariant of the OCP data and caches the derived dimensions.
pub fn validate_spec(raw: &RawSpec) -> Result<ProblemSpec> {
    let a = matrix("A", &raw.a)?;
    let b = matrix("B", &raw.b)?;
    let d = a.nrows();
    if !a.is_square() {
        return Err(Error::spec("A must be square"));
    }
    if b.nrows() != d {
        return Err(Error::spec(format!(
            "B has {} rows, expected {d}",
            b.nrows()
        )));
    }
    let m = b.ncols();
    let g = match &raw.g {
        Some(rows) => matrix("G", rows)?,
        None => DMatrix::identity(d, d),
    };
    if g.nrows() != d {
        return Err(Error::spec(format!(
            "G has {} rows, expected {d}",
            g.nrows()
        )));
    }
    let n_w = g.ncols();
    let q = matrix("Q", &raw.q)?;
    let r = matrix("R", &raw.r)?;
    let p = matrix("P", &raw.p)?;
    for (name, mat, n) in [("Q", &q, d), ("R", &r, m), ("P", &p, d)] {
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::spec(format!("{name} must be {n}x{n}")));
        }
    }
    check_psd("Q", &q, false)?;
    check_psd("P", &p, false)?;
    check_psd("R", &r, true)?;
    if raw.horizon < 1 {
        return Err(Error::spec("horizon N must be at least 1"));
    }
    if !(raw.eps >= 0.0) || !raw.eps.is_finite() {
        return Err(Error::spec("eps must be a finite nonnegative number"));
    }

    let state_set = set_from("state set", &raw.state_box, &raw.state_polytope)?
        .ok_or_else(|| Error::spec("missing state_box or state_polytope"))?;
    let control_set = set_from("control set", &raw.control_box, &raw.control_polytope)?
        .ok_or_else(|| Error::spec("missing control_box or control_polytope"))?;
    let terminal_set = set_from("terminal set", &raw.terminal_box, &raw.terminal_polytope)?
        .unwrap_or_else(|| state_set.clone());
    if state_set.dim() != d || terminal_set.dim() != d {
        return Err(Error::spec("state and terminal sets must live in R^d"));
    }
    if control_set.dim() != m {
        return Err(Error::spec("control set must live in R^m"));
    }
    if raw.dist_box.len() != n_w {
        return Err(Error::spec(format!(
            "dist_box has {} entries, G has {n_w} columns",
            raw.dist_box.len()
        )));
    }
    let dist_box = BoxSet {
        lo: raw.dist_box.iter().map(|p| p[0]).collect(),
        hi: raw.dist_box.iter().map(|p| p[1]).collect(),
    };

    let origin_d = vec![0.0; d];
    if state_set.max_violation(&origin_d) >= 0.0 {
        return Err(Error::spec("origin must be interior to the state set"));
    }
    if terminal_set.max_violation(&origin_d) >= 0.0 {
        return Err(Error::spec("origin must be interior to the terminal set"));
    }
    if control_set.max_violation(&vec![0.0; m]) >= 0.0 {
        return Err(Error::spec("origin must be interior to the control set"));
    }
    if dist_box
        .lo
        .iter()
        .zip(&dist_box.hi)
        .any(|(l, u)| !(*l <= 0.0 && 0.0 <= *u && l.is_finite() && u.is_finite()))
    {
        return Err(Error::spec("disturbance box must contain the origin"));
    }
    if !terminal_set.is_subset_of(&state_set)? {
        return Err(Error::spec(
            "terminal set is not contained in the state set",
        ));
    }

    let dims = Dims {
        d,
        m,
        n_w,
        horizon: raw.horizon,
    };
    Ok(ProblemSpec {
        a,
        b,
        g,
        q,
        r,
        p,
        horizon: raw.horizon,
        state_set,
        control_set,
        dist_box,
        terminal_set,
        eps: raw.eps,
        dims,
    })
}

fn pairs(b: &BoxSet) -> Vec<[f64; 2]> {
    b.lo.iter().zip(&b.hi).map(|(l, u)| [*l, *u]).collect()
}

impl ProblemSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(s)?;
        validate_spec(&raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical raw form: boxes where the set is a box, explicit terminal set.
    pub fn to_raw(&self) -> RawSpec {
        let mut raw = RawSpec {
            a: rows_of(&self.a),
            b: rows_of(&self.b),
            g: Some(rows_of(&self.g)),
            q: rows_of(&self.q),
            r: rows_of(&self.r),
            p: rows_of(&self.p),
            horizon: self.horizon,
            state_box: None,
            state_polytope: None,
            control_box: None,
            control_polytope: None,
            dist_box: pairs(&self.dist_box),
            terminal_box: None,
            terminal_polytope: None,
            eps: self.eps,
        };
        match self.state_set.to_json() {
            SetJson::Box(b) => raw.state_box = Some(b),
            SetJson::Polytope(p) => raw.state_polytope = Some(p),
        }
        match self.control_set.to_json() {
            SetJson::Box(b) => raw.control_box = Some(b),
            SetJson::Polytope(p) => raw.control_polytope = Some(p),
        }
        match self.terminal_set.to_json() {
            SetJson::Box(b) => raw.terminal_box = Some(b),
            SetJson::Polytope(p) => raw.terminal_polytope = Some(p),
        }
        raw
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("spec serializes")
    }

    /// SHA-256 of the canonical (compact) JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_raw()).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Re-runs validation; a validated spec always passes and is returned unchanged.
    pub fn revalidate(&self) -> Result<ProblemSpec> {
        validate_spec(&self.to_raw())
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn state_set(&self) -> &Polytope {
        &self.state_set
    }
    pub fn control_set(&self) -> &Polytope {
        &self.control_set
    }
    pub fn terminal_set(&self) -> &Polytope {
        &self.terminal_set
    }
    pub fn dist_box(&self) -> &BoxSet {
        &self.dist_box
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn n_z(&self) -> usize {
        self.dims.n_z()
    }

    /// Copy with a different approximation margin (re-validated).
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.eps = eps;
        validate_spec(&raw)
    }

    /// Copy with a different disturbance box (re-validated).
    pub fn with_dist_box(&self, dist: BoxSet) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.dist_box = pairs(&dist);
        validate_spec(&raw)
    }

    /// Tightened control polytope `H_U u <= k_U - ε‖H_U rows‖₁`.
    pub fn tightened_control_offsets(&self) -> Vec<f64> {
        self.control_set
            .row_l1_norms()
            .iter()
            .zip(self.control_set.k().iter())
            .map(|(l1, k)| k - self.eps * l1)
            .collect()
    }

    /// Second-order system with `N = 5`, `‖x‖∞ <= 1.5`, `|u| <= 2`, `‖w‖∞ <= 0.05`, `ε = 0.03`.
    pub fn example1() -> Self {
        let raw = RawSpec {
            a: vec![vec![0.732, -0.086], vec![0.172, 0.990]],
            b: vec![vec![0.060], vec![0.006]],
            g: Some(vec![vec![0.3, 0.4], vec![0.2, 0.15]]),
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            r: vec![vec![0.01]],
            p: vec![vec![5.5461, 4.9873], vec![4.9873, 10.4940]],
            horizon: 5,
            state_box: Some(vec![[-1.5, 1.5]; 2]),
            state_polytope: None,
            control_box: Some(vec![[-2.0, 2.0]]),
            control_polytope: None,
            dist_box: vec![[-0.05, 0.05]; 2],
            terminal_box: None,
            terminal_polytope: None,
            eps: 0.03,
        };
        validate_spec(&raw).expect("example 1 data is valid")
    }

    /// Fourth-order system with `N = 8`, `‖x‖∞ <= 5`, `|u| <= 0.2`, scalar `|w| <= 0.01`, `ε = 0.1`.
    pub fn example2() -> Self {
        let raw = RawSpec {
            a: vec![
                vec![0.40, 0.37, 0.29, -0.72],
                vec![-0.21, 0.64, -0.67, -0.04],
                vec![0.83, 0.01, -0.28, 0.38],
                vec![-0.07, 0.60, 0.55, 0.49],
            ],
            b: vec![vec![1.61], vec![0.40], vec![-1.45], vec![-0.67]],
            g: Some(vec![vec![1.0]; 4]),
            q: (0..4)
                .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            r: vec![vec![0.2]],
            p: vec![vec![0.0; 4]; 4],
            horizon: 8,
            state_box: Some(vec![[-5.0, 5.0]; 4]),
            state_polytope: None,
            control_box: Some(vec![[-0.2, 0.2]]),
            control_polytope: None,
            dist_box: vec![[-0.01, 0.01]],
            terminal_box: None,
            terminal_polytope: None,
            eps: 0.1,
        };
        validate_spec(&raw).expect("example 2 data is valid")
    }
}

/// Zonotope `center + Σ_k ξ_k g_k`, `ξ ∈ [-1, 1]^coeff_dim`, representing `W ⊕ B·V`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateDisturbance {
    generators: DMatrix<f64>,
    center: DVector<f64>,
}

/// Generators `[G·diag(w_half), B·diag(ε·1_m)]` and center `G·w_center`.
pub fn aggregate_disturbance(spec: &ProblemSpec) -> AggregateDisturbance {
    let Dims { d, m, n_w, .. } = spec.dims();
    let half = spec.dist_box().half_widths();
    let mut gens = DMatrix::zeros(d, n_w + m);
    for k in 0..n_w {
        gens.set_column(k, &(spec.g().column(k) * half[k]));
    }
    for k in 0..m {
        gens.set_column(n_w + k, &(spec.b().column(k) * spec.eps()));
    }
    let center = spec.g() * DVector::from_vec(spec.dist_box().center());
    AggregateDisturbance {
        generators: gens,
        center,
    }
}

impl AggregateDisturbance {
    pub fn coeff_dim(&self) -> usize {
        self.generators.ncols()
    }

    pub fn dim(&self) -> usize {
        self.generators.nrows()
    }

    pub fn generator_matrix(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn generators(&self) -> Vec<DVector<f64>> {
        self.generators
            .column_iter()
            .map(|c| c.into_owned())
            .collect()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// `w̃ = center + Σ_k ξ_k g_k`.
    pub fn realize(&self, coeffs: &[f64]) -> DVector<f64> {
        debug_assert_eq!(coeffs.len(), self.coeff_dim());
        let mut w = self.center.clone();
        for (k, xi) in coeffs.iter().enumerate() {
            w.axpy(*xi, &self.generators.column(k), 1.0);
        }
        w
    }

    /// Minimal `t` with `‖w - center - Gξ‖∞ <= t` and `‖ξ‖∞ <= 1 + t`; `w ∈ W̃` iff the result is `<= tol`.
    pub fn membership_violation(&self, w: &[f64]) -> Result<f64> {
        let k = self.coeff_dim();
        let d = self.dim();
        // variables (ξ, t); minimize t
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        let mut lp = ConicProblem::new(k + 1, c);
        for i in 0..d {
            let mut row = vec![0.0; k + 1];
            for j in 0..k {
                row[j] = self.generators[(i, j)];
            }
            let rhs = w[i] - self.center[i];
            // |G_i ξ - rhs| <= t
            let mut up = row.clone();
            up[k] = -1.0;
            lp.add_linear(&up, rhs);
            let mut dn: Vec<f64> = row.iter().map(|v| -v).collect();
            dn[k] = -1.0;
            lp.add_linear(&dn, -rhs);
        }
        for j in 0..k {
            let mut up = vec![0.0; k + 1];
            up[j] = 1.0;
            up[k] = -1.0;
            lp.add_linear(&up, 1.0);
            let mut dn = vec![0.0; k + 1];
            dn[j] = -1.0;
            dn[k] = -1.0;
            lp.add_linear(&dn, 1.0);
        }
        let mut lb = vec![0.0; k + 1];
        lb[k] = -1.0;
        lp.add_linear(&lb, 1.0);
        let sol = conic::solve(&lp, &SolverSettings::default())?;
        match sol.status {
            SolveStatus::Optimal => Ok(sol.obj.max(0.0)),
            _ => Err(Error::SolverStall {
                iterations: sol.iterations,
                primal_residual: sol.primal_residual,
                dual_residual: sol.dual_residual,
            }),
        }
    }
}

/// `dim(θ) + dim(η) + dim(r)` for the full (non-causal-reduced) parameterization.
pub fn n_z(spec: &ProblemSpec) -> usize {
    spec.n_z()
}
