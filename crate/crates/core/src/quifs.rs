//! Quasi-interpolation of a gridded policy with a uniform error budget.
//!
//! The gridded actions are first extended off the feasible set by the
//! component-wise McShane formula `μ_E(x) = min_y μ(y) + L0‖x - y‖₂`, then
//! smoothed by the truncated lattice sum
//! `𝒟^{-d/2} Σ_{‖x - mh‖ <= r0·h} μ_E(mh) ψ((x - mh)/(h√𝒟))`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Sampling};
use crate::error::{Error, Result};

/// Largest lattice radius tried when selecting `r0`.
const MAX_R0: usize = 12;
/// Radius treated as the untruncated sum when measuring saturation.
const FULL_RADIUS: usize = 16;
/// Probe points per axis of the unit cell.
const CELL_PROBES: usize = 9;
const DEFAULT_SHAPE: f64 = 2.0;
const DEFAULT_R0: usize = 4;
/// Inflation applied to the finite-difference Lipschitz estimate.
const L0_INFLATION: f64 = 1.25;
const GRID_SNAP_TOL: f64 = 1e-7;

/// Radial generating function `ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// `π^{-d/2} L₂^{(d/2)}(‖y‖²) e^{-‖y‖²}`, moments vanish below order 6.
    LaguerreGaussian6,
    /// `π^{-d/2} e^{-‖y‖²}`, order 2.
    Gaussian2,
}

impl Generator {
    /// Moment order `M`.
    pub fn order(self) -> usize {
        match self {
            Generator::LaguerreGaussian6 => 6,
            Generator::Gaussian2 => 2,
        }
    }

    /// `C_γ = M·Γ(M)/Γ(M+2) = 1/(M+1)`.
    pub fn c_gamma(self) -> f64 {
        1.0 / (self.order() as f64 + 1.0)
    }

    /// `ψ` as a function of `‖y‖²` in dimension `d`.
    pub fn eval_r2(self, r2: f64, d: usize) -> f64 {
        let norm = PI.powf(-(d as f64) / 2.0);
        match self {
            Generator::LaguerreGaussian6 => {
                let a = d as f64 / 2.0;
                let poly = (a + 1.0) * (a + 2.0) / 2.0 - (a + 2.0) * r2 + 0.5 * r2 * r2;
                norm * poly * (-r2).exp()
            }
            Generator::Gaussian2 => norm * (-r2).exp(),
        }
    }

    pub fn eval(self, y: &[f64]) -> f64 {
        self.eval_r2(y.iter().map(|v| v * v).sum(), y.len())
    }
}

/// Built-in sixth-order generator `ψ(y)`.
pub fn psi_lg6(y: &[f64]) -> f64 {
    Generator::LaguerreGaussian6.eval(y)
}

/// Scale-free interpolation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuifsParams {
    pub h: f64,
    pub shape: f64,
    pub r0: usize,
    pub c_gamma: f64,
    /// Measured `sup_x |𝒟^{-d/2} Σ_m ψ((x - m)/√𝒟) - 1|` (untruncated).
    pub saturation: f64,
    /// Measured `sup_x 𝒟^{-d/2} Σ_{‖x-m‖ > r0} |ψ((x - m)/√𝒟)|`.
    pub truncation: f64,
}

/// `h = ε / (3 C_γ L0 √𝒟)`.
pub fn grid_step(eps: f64, l0: f64, c_gamma: f64, shape: f64) -> f64 {
    eps / (3.0 * c_gamma * l0 * shape.sqrt())
}

/// Chooses `(h, 𝒟, r0)` so each error term stays within `ε/3` for policies bounded by `sup_norm`.
///
/// `𝒟` starts at 2 and grows by 25% until the saturation term passes; `r0`
/// is the smallest radius whose measured tail passes (4 when `sup_norm = 0`).
pub fn select_params(
    eps: f64,
    l0: f64,
    sup_norm: f64,
    d: usize,
    gen: Generator,
) -> Result<QuifsParams> {
    if !(eps > 0.0 && l0 > 0.0) {
        return Err(Error::InvalidArgument("eps and L0 must be positive".into()));
    }
    if !(sup_norm >= 0.0) {
        return Err(Error::InvalidArgument(
            "policy sup-norm must be nonnegative".into(),
        ));
    }
    let budget = eps / 3.0;
    let mut shape = DEFAULT_SHAPE;
    let mut saturation = saturation_error(gen, d, shape);
    while sup_norm * saturation > budget {
        shape *= 1.25;
        if shape > 64.0 {
            return Err(Error::InvalidArgument(format!(
                "no shape parameter up to 64 meets the saturation budget {budget}"
            )));
        }
        saturation = saturation_error(gen, d, shape);
    }
    let mut r0 = DEFAULT_R0;
    let mut truncation = truncation_error(gen, d, shape, r0);
    if sup_norm > 0.0 {
        r0 = (1..=MAX_R0)
            .find(|&r| sup_norm * truncation_error(gen, d, shape, r) <= budget)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "no truncation radius up to {MAX_R0} meets the budget {budget}"
                ))
            })?;
        truncation = truncation_error(gen, d, shape, r0);
    }
    let c_gamma = gen.c_gamma();
    Ok(QuifsParams {
        h: grid_step(eps, l0, c_gamma, shape),
        shape,
        r0,
        c_gamma,
        saturation,
        truncation,
    })
}

/// Probe points on a regular subgrid of the unit cell `[0, 1)^d`.
fn cell_probes(d: usize) -> Vec<Vec<f64>> {
    let per = if d <= 2 {
        CELL_PROBES
    } else if d == 3 {
        5
    } else {
        3
    };
    let total = per.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let i = k % per;
                    k /= per;
                    (i as f64 + 0.5) / per as f64
                })
                .collect()
        })
        .collect()
}

/// Sums of `𝒟^{-d/2} ψ((y - m)/√𝒟)` over lattice points within `outer`:
/// the part within `inner`, the absolute part beyond it, and the total.
fn lattice_sums(
    gen: Generator,
    y: &[f64],
    shape: f64,
    inner: f64,
    outer: usize,
) -> (f64, f64, f64) {
    let d = y.len();
    let base: Vec<i64> = y.iter().map(|v| v.floor() as i64).collect();
    let span = outer as i64 + 1;
    let scale = shape.powf(-(d as f64) / 2.0);
    let mut near = 0.0;
    let mut far_abs = 0.0;
    let mut total = 0.0;
    let mut off = vec![-span; d];
    loop {
        let r2: f64 = (0..d)
            .map(|i| {
                let t = y[i] - (base[i] + off[i]) as f64;
                t * t
            })
            .sum();
        if r2 <= (outer as f64).powi(2) {
            let v = scale * gen.eval_r2(r2 / shape, d);
            total += v;
            if r2 <= inner * inner {
                near += v;
            } else {
                far_abs += v.abs();
            }
        }
        let mut k = d;
        loop {
            if k == 0 {
                return (near, far_abs, total);
            }
            k -= 1;
            if off[k] < span {
                off[k] += 1;
                break;
            }
            off[k] = -span;
        }
    }
}

/// Deviation of the (effectively untruncated) lattice sum of `ψ` from one.
pub fn saturation_error(gen: Generator, d: usize, shape: f64) -> f64 {
    let outer = if d <= 2 { FULL_RADIUS } else { 8 };
    cell_probes(d)
        .iter()
        .map(|y| (lattice_sums(gen, y, shape, outer as f64, outer).2 - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Largest absolute tail mass beyond lattice radius `r0`.
pub fn truncation_error(gen: Generator, d: usize, shape: f64, r0: usize) -> f64 {
    let outer = r0 + if d <= 2 { 8 } else { 4 };
    cell_probes(d)
        .iter()
        .map(|y| lattice_sums(gen, y, shape, r0 as f64, outer).1)
        .fold(0.0, f64::max)
}

/// Fitted quasi-interpolant.
#[derive(Clone, Debug)]
pub struct QuifsModel {
    pub generator: Generator,
    pub d: usize,
    pub m: usize,
    pub h: f64,
    pub shape: f64,
    pub r0: usize,
    pub l0: f64,
    /// Target uniform margin.
    pub eps: f64,
    /// Grid step the margin would require.
    pub h_required: f64,
    pub saturation: f64,
    pub truncation: f64,
    /// Feasible lattice indices.
    pub mask: Vec<Vec<i64>>,
    /// Hash of the spec the training data was generated for.
    pub spec_hash: Option<String>,
    lo: Vec<i64>,
    shape_dims: Vec<usize>,
    /// Row-major over `lo + index`, `m` entries per node; NaN where not stored.
    values: Vec<f64>,
}

/// Options for [`QuifsModel::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuifsConfig {
    pub eps: f64,
    /// Lipschitz rank; estimated from the data when `None`.
    pub l0: Option<f64>,
    pub generator: Generator,
}

impl QuifsConfig {
    pub fn new(eps: f64) -> Self {
        QuifsConfig {
            eps,
            l0: None,
            generator: Generator::LaguerreGaussian6,
        }
    }
}

/// Feasible nodes of a grid dataset as `(lattice index, action)`.
pub fn lattice_data(ds: &Dataset) -> Result<(f64, Vec<(Vec<i64>, Vec<f64>)>)> {
    let h = match ds.meta.sampling {
        Sampling::Grid { h } => h,
        _ => {
            return Err(Error::InvalidArgument(
                "quasi-interpolation needs a grid dataset".into(),
            ))
        }
    };
    let mut nodes = Vec::new();
    for r in ds.feasible_records() {
        let idx: Vec<i64> = r.x.iter().map(|v| (v / h).round() as i64).collect();
        if idx
            .iter()
            .zip(&r.x)
            .any(|(&i, &v)| (i as f64 * h - v).abs() > GRID_SNAP_TOL * h.max(1.0))
        {
            return Err(Error::InvalidArgument(format!(
                "state {:?} is not on the grid of step {h}",
                r.x
            )));
        }
        nodes.push((idx, r.u0.clone().expect("feasible record has an action")));
    }
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(
            "dataset has no feasible records".into(),
        ));
    }
    Ok((h, nodes))
}

/// Largest adjacent-node slope per component, inflated by 25%.
pub fn estimate_l0(h: f64, nodes: &[(Vec<i64>, Vec<f64>)]) -> f64 {
    let map: HashMap<&[i64], &[f64]> = nodes
        .iter()
        .map(|(i, u)| (i.as_slice(), u.as_slice()))
        .collect();
    let mut slope: f64 = 0.0;
    for (idx, u) in nodes {
        for k in 0..idx.len() {
            let mut nb = idx.clone();
            nb[k] += 1;
            if let Some(v) = map.get(nb.as_slice()) {
                for (a, b) in u.iter().zip(v.iter()) {
                    slope = slope.max((a - b).abs() / h);
                }
            }
        }
    }
    L0_INFLATION * slope
}

/// Component-wise `min_y μ(y) + L0‖x - y‖₂` over the net `nodes` (lattice units scaled by `h`).
pub fn extend(nodes: &[(Vec<f64>, Vec<f64>)], l0: f64, x: &[f64]) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(
            "extension needs at least one feasible point".into(),
        ));
    }
    if !(l0 > 0.0) {
        return Err(Error::InvalidArgument("L0 must be positive".into()));
    }
    let m = nodes[0].1.len();
    let mut out = vec![f64::INFINITY; m];
    for (y, u) in nodes {
        let dist = y
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        for (o, v) in out.iter_mut().zip(u) {
            *o = o.min(v + l0 * dist);
        }
    }
    Ok(out)
}

/// Result of a uniform-error audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformReport {
    pub max_err: f64,
    pub argmax: Vec<f64>,
    pub n_probes: usize,
    /// Probes the oracle reported infeasible.
    pub skipped: usize,
    pub eps: f64,
    pub pass: bool,
}

impl QuifsModel {
    /// Extends the dataset's feasible actions and stores them on the mask plus a coverage ring.
    pub fn fit(ds: &Dataset, cfg: &QuifsConfig) -> Result<Self> {
        if !(cfg.eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        let (h, nodes) = lattice_data(ds)?;
        let d = ds.meta.d;
        let m = ds.meta.m;
        let l0 = match cfg.l0 {
            Some(l) => l,
            None => estimate_l0(h, &nodes),
        };
        // constant data has zero slope; any positive rank is valid
        let l0 = if l0 > 0.0 {
            l0
        } else {
            f64::MIN_POSITIVE.max(1e-12)
        };
        let sup_norm = nodes
            .iter()
            .flat_map(|(_, u)| u.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let params = select_params(cfg.eps, l0, sup_norm, d, cfg.generator)?;
        let ring = params.r0 as i64 + 1;
        let mut lo = nodes[0].0.clone();
        let mut hi = nodes[0].0.clone();
        for (idx, _) in &nodes {
            for k in 0..d {
                lo[k] = lo[k].min(idx[k]);
                hi[k] = hi[k].max(idx[k]);
            }
        }
        for k in 0..d {
            lo[k] -= ring;
            hi[k] += ring;
        }
        let dims: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| (b - a + 1) as usize)
            .collect();
        let total: usize = dims.iter().product();
        let mut stored = vec![false; total];
        let mut values = vec![f64::NAN; total * m];
        let flat = |idx: &[i64]| -> usize {
            let mut f = 0;
            for k in 0..d {
                f = f * dims[k] + (idx[k] - lo[k]) as usize;
            }
            f
        };
        // mask nodes keep the data; ring nodes within Chebyshev distance r0+1 get the extension
        for (idx, _) in &nodes {
            let mut off = vec![-ring; d];
            loop {
                let nb: Vec<i64> = idx.iter().zip(&off).map(|(a, b)| a + b).collect();
                stored[flat(&nb)] = true;
                let mut k = d;
                let done = loop {
                    if k == 0 {
                        break true;
                    }
                    k -= 1;
                    if off[k] < ring {
                        off[k] += 1;
                        break false;
                    }
                    off[k] = -ring;
                };
                if done {
                    break;
                }
            }
        }
        let net: Vec<(Vec<f64>, Vec<f64>)> = nodes
            .iter()
            .map(|(i, u)| (i.iter().map(|&v| v as f64 * h).collect(), u.clone()))
            .collect();
        let unflat = |mut f: usize| -> Vec<i64> {
            let mut idx = vec![0; d];
            for k in (0..d).rev() {
                idx[k] = lo[k] + (f % dims[k]) as i64;
                f /= dims[k];
            }
            idx
        };
        let ext: Vec<(usize, Vec<f64>)> = (0..total)
            .into_par_iter()
            .filter(|&f| stored[f])
            .map(|f| {
                let x: Vec<f64> = unflat(f).iter().map(|&v| v as f64 * h).collect();
                (f, extend(&net, l0, &x).expect("net is nonempty"))
            })
            .collect();
        for (f, u) in ext {
            values[f * m..(f + 1) * m].copy_from_slice(&u);
        }
        for (idx, u) in &nodes {
            let f = flat(idx);
            values[f * m..(f + 1) * m].copy_from_slice(u);
        }
        Ok(QuifsModel {
            generator: cfg.generator,
            d,
            m,
            h,
            shape: params.shape,
            r0: params.r0,
            l0,
            eps: cfg.eps,
            h_required: params.h,
            saturation: params.saturation,
            truncation: params.truncation,
            mask: nodes.into_iter().map(|(i, _)| i).collect(),
            spec_hash: Some(ds.meta.spec_hash.clone()),
            lo,
            shape_dims: dims,
            values,
        })
    }

    /// `C_γ L0 h √𝒟`.
    pub fn lipschitz_term(&self) -> f64 {
        self.generator.c_gamma() * self.l0 * self.h * self.shape.sqrt()
    }

    /// Worst-case sup-norm of the stored values.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `C_γ L0 h √𝒟 + sup|μ|·(saturation + truncation)`.
    pub fn error_bound(&self) -> f64 {
        self.lipschitz_term() + self.sup_norm() * (self.saturation + self.truncation)
    }

    /// True when the grid is at least as fine as the margin requires.
    pub fn grid_meets_margin(&self) -> bool {
        self.h <= self.h_required * (1.0 + 1e-12)
    }

    fn flat(&self, idx: &[i64]) -> Option<usize> {
        let mut f = 0;
        for k in 0..self.d {
            let off = idx[k] - self.lo[k];
            if off < 0 || off as usize >= self.shape_dims[k] {
                return None;
            }
            f = f * self.shape_dims[k] + off as usize;
        }
        Some(f)
    }

    /// Stored (data or extension) value at a lattice node.
    pub fn node_value(&self, idx: &[i64]) -> Option<&[f64]> {
        let f = self.flat(idx)?;
        let v = &self.values[f * self.m..(f + 1) * self.m];
        if v[0].is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Truncated lattice sum; errors when a needed node is not stored.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m];
        self.visit(x, |w, v| {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += w * vi;
            }
        })?;
        Ok(out)
    }

    /// `𝒟^{-d/2} Σ_{F_x(r0)} ψ((x - mh)/(h√𝒟))`.
    pub fn partition_of_unity(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        self.visit(x, |w, _| total += w)?;
        Ok(total)
    }

    fn visit(&self, x: &[f64], mut f: impl FnMut(f64, &[f64])) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Dimension(format!(
                "state has {} entries, expected {}",
                x.len(),
                self.d
            )));
        }
        let d = self.d;
        let y: Vec<f64> = x.iter().map(|v| v / self.h).collect();
        let base: Vec<i64> = y.iter().map(|v| v.floor() as i64).collect();
        let span = self.r0 as i64 + 1;
        let r0sq = (self.r0 * self.r0) as f64;
        let scale = self.shape.powf(-(d as f64) / 2.0);
        let mut off = vec![-span; d];
        let mut idx = vec![0i64; d];
        loop {
            let mut r2 = 0.0;
            for k in 0..d {
                idx[k] = base[k] + off[k];
                let t = y[k] - idx[k] as f64;
                r2 += t * t;
            }
            if r2 <= r0sq {
                let v = self
                    .node_value(&idx)
                    .ok_or_else(|| Error::CoverageMiss { index: idx.clone() })?;
                f(scale * self.generator.eval_r2(r2 / self.shape, d), v);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(());
                }
                k -= 1;
                if off[k] < span {
                    off[k] += 1;
                    break;
                }
                off[k] = -span;
            }
        }
    }

    /// Overwrites a stored node value (fault injection and tests).
    pub fn set_node_value(&mut self, idx: &[i64], u: &[f64]) -> Result<()> {
        let f = self.flat(idx).ok_or_else(|| Error::CoverageMiss {
            index: idx.to_vec(),
        })?;
        self.values[f * self.m..(f + 1) * self.m].copy_from_slice(u);
        Ok(())
    }

    /// Max ∞-norm error against `oracle` over `probes` (oracle `None` = infeasible, skipped).
    pub fn verify_uniform<F>(&self, probes: &[Vec<f64>], oracle: F) -> Result<UniformReport>
    where
        F: Fn(&[f64]) -> Result<Option<Vec<f64>>> + Sync,
    {
        verify_uniform(|x| self.eval(x), probes, oracle, self.eps)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: QuifsFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(file)
    }

    pub fn to_file(&self) -> QuifsFile {
        let total: usize = self.shape_dims.iter().product();
        let mut values = Vec::new();
        for f in 0..total {
            let v = &self.values[f * self.m..(f + 1) * self.m];
            if v[0].is_nan() {
                continue;
            }
            let mut g = f;
            let mut idx = vec![0i64; self.d];
            for k in (0..self.d).rev() {
                idx[k] = self.lo[k] + (g % self.shape_dims[k]) as i64;
                g /= self.shape_dims[k];
            }
            let mut row: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
            row.extend_from_slice(v);
            values.push(row);
        }
        QuifsFile {
            generator: self.generator,
            h: self.h,
            D: self.shape,
            r0: self.r0,
            L0: self.l0,
            M: self.generator.order(),
            eps: self.eps,
            h_required: self.h_required,
            saturation: self.saturation,
            truncation: self.truncation,
            lattice_origin: vec![0.0; self.d],
            d: self.d,
            m: self.m,
            values,
            mask: self.mask.clone(),
            spec_hash: self.spec_hash.clone(),
        }
    }

    pub fn from_file(file: QuifsFile) -> Result<Self> {
        let (d, m) = (file.d, file.m);
        if !(file.h > 0.0 && file.D > 0.0 && file.r0 > 0) {
            return Err(Error::InvalidArgument(
                "model needs positive h, D and r0".into(),
            ));
        }
        if file.lattice_origin.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidArgument(
                "only lattices through the origin are supported".into(),
            ));
        }
        if file.M != file.generator.order() {
            return Err(Error::InvalidArgument(format!(
                "moment order {} does not match the generator's {}",
                file.M,
                file.generator.order()
            )));
        }
        if file.values.is_empty() {
            return Err(Error::InvalidArgument("model stores no values".into()));
        }
        let mut nodes = Vec::with_capacity(file.values.len());
        for (i, row) in file.values.iter().enumerate() {
            if row.len() != d + m {
                return Err(Error::Parse {
                    line: i + 1,
                    field: "values".into(),
                    message: format!("entry has {} numbers, expected {}", row.len(), d + m),
                });
            }
            let idx: Vec<i64> = row[..d].iter().map(|v| *v as i64).collect();
            nodes.push((idx, row[d..].to_vec()));
        }
        let mut lo = nodes[0].0.clone();
        let mut hi = nodes[0].0.clone();
        for (idx, _) in &nodes {
            for k in 0..d {
                lo[k] = lo[k].min(idx[k]);
                hi[k] = hi[k].max(idx[k]);
            }
        }
        let dims: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| (b - a + 1) as usize)
            .collect();
        let total: usize = dims.iter().product();
        let mut model = QuifsModel {
            generator: file.generator,
            d,
            m,
            h: file.h,
            shape: file.D,
            r0: file.r0,
            l0: file.L0,
            eps: file.eps,
            h_required: file.h_required,
            saturation: file.saturation,
            truncation: file.truncation,
            mask: file.mask,
            spec_hash: file.spec_hash,
            lo,
            shape_dims: dims,
            values: vec![f64::NAN; total * m],
        };
        for (idx, u) in nodes {
            model.set_node_value(&idx, &u)?;
        }
        Ok(model)
    }
}

// unstored nodes hold NaN, so compare the stored content instead of the raw buffer
impl PartialEq for QuifsModel {
    fn eq(&self, other: &Self) -> bool {
        self.l0 == other.l0 && self.to_file() == other.to_file()
    }
}

/// Serialized model.
#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuifsFile {
    pub generator: Generator,
    pub h: f64,
    pub D: f64,
    pub r0: usize,
    pub L0: f64,
    pub M: usize,
    pub eps: f64,
    pub h_required: f64,
    pub saturation: f64,
    pub truncation: f64,
    pub lattice_origin: Vec<f64>,
    pub d: usize,
    pub m: usize,
    /// `[m_1, ..., m_d, u_1, ..., u_m]` per stored node.
    pub values: Vec<Vec<f64>>,
    pub mask: Vec<Vec<i64>>,
    #[serde(default)]
    pub spec_hash: Option<String>,
}

/// Max ∞-norm distance between `policy` and `oracle` over `probes`.
pub fn verify_uniform<P, F>(
    policy: P,
    probes: &[Vec<f64>],
    oracle: F,
    eps: f64,
) -> Result<UniformReport>
where
    P: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    F: Fn(&[f64]) -> Result<Option<Vec<f64>>> + Sync,
{
    if probes.is_empty() {
        return Err(Error::InvalidArgument("no probes".into()));
    }
    let errs: Vec<Option<f64>> = probes
        .par_iter()
        .map(|x| -> Result<Option<f64>> {
            let Some(want) = oracle(x)? else {
                return Ok(None);
            };
            let got = policy(x)?;
            Ok(Some(
                got.iter()
                    .zip(&want)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_err = 0.0;
    let mut argmax = probes[0].clone();
    let mut skipped = 0;
    for (x, e) in probes.iter().zip(&errs) {
        match e {
            Some(e) if *e > max_err => {
                max_err = *e;
                argmax = x.clone();
            }
            Some(_) => {}
            None => skipped += 1,
        }
    }
    Ok(UniformReport {
        max_err,
        argmax,
        n_probes: probes.len(),
        skipped,
        eps,
        pass: max_err <= eps,
    })
}
