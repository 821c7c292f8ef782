//! ReLU network policies: theoretical width/depth sizing, SGD training on
//! solver data, and uniform-error checks.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::quifs::{verify_uniform, UniformReport};

const BOUND_CONSTANT: f64 = 131.0;
const DIVERGENCE_LOSS: f64 = 1e6;

/// Which size is held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedSize {
    Width(u64),
    Depth(u64),
}

/// Width and depth that certify a uniform error `eps` for an `L0`-Lipschitz target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NNSizing {
    pub d: usize,
    pub l0: f64,
    pub eps: f64,
    pub fixed: FixedSize,
    /// `ln W̃` with `W̃ = W / (3^{d+5} d)`.
    pub ln_w_tilde: f64,
    /// `L̃ = (L - 18 - 2d) / 22`.
    pub l_tilde: f64,
    /// `ln W`; the width itself can exceed every integer type.
    pub ln_width: f64,
    /// `W` when it fits in a `u64`.
    pub width: Option<u64>,
    pub depth: u64,
    /// `W >= 3^{d+4} d` and `L >= 29 + 2d`.
    pub meets_floors: bool,
}

impl NNSizing {
    /// Bound evaluated at the returned sizes.
    pub fn bound(&self) -> f64 {
        let l_tilde = (self.depth as f64 - 18.0 - 2.0 * self.d as f64) / 22.0;
        let ln_wt = match self.fixed {
            FixedSize::Width(w) => (w as f64 / width_unit(self.d)).ln(),
            // the ceiling only enlarges W, so the unrounded value is conservative
            FixedSize::Depth(_) => self.ln_w_tilde,
        };
        nn_error_bound_ln(self.d, self.l0, ln_wt, l_tilde).exp()
    }
}

/// `3^{d+5} d`.
fn width_unit(d: usize) -> f64 {
    3f64.powi(d as i32 + 5) * d as f64
}

pub fn width_floor(d: usize) -> f64 {
    3f64.powi(d as i32 + 4) * d as f64
}

pub fn depth_floor(d: usize) -> u64 {
    29 + 2 * d as u64
}

/// `ln` of `131√d L0 (W̃² L̃² log₃(W̃ + 2))^{-1/d}`.
pub fn nn_error_bound_ln(d: usize, l0: f64, ln_w_tilde: f64, l_tilde: f64) -> f64 {
    let df = d as f64;
    let w_tilde = ln_w_tilde.exp();
    let ln_w2 = if w_tilde.is_finite() {
        (w_tilde + 2.0).ln()
    } else {
        ln_w_tilde
    };
    let log3 = ln_w2 / 3f64.ln();
    (BOUND_CONSTANT * df.sqrt() * l0).ln()
        - (2.0 * ln_w_tilde + 2.0 * l_tilde.ln() + log3.ln()) / df
}

/// Uniform error bound at width `w` and depth `l`.
pub fn nn_error_bound(d: usize, l0: f64, w: f64, l: f64) -> f64 {
    let l_tilde = (l - 18.0 - 2.0 * d as f64) / 22.0;
    nn_error_bound_ln(d, l0, (w / width_unit(d)).ln(), l_tilde).exp()
}

fn check_common(d: usize, l0: f64, eps: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::Sizing("input dimension must be positive".into()));
    }
    if !(l0 > 0.0 && eps > 0.0) {
        return Err(Error::Sizing("L0 and eps must be positive".into()));
    }
    Ok(())
}

/// Depth for a fixed width `w0`: `L̃ = sqrt(ε^{-d} / ((131√d L0)^{-d} W̃² log₃(W̃+2)))`, `L = ⌈22L̃ + 18 + 2d⌉`.
pub fn size_for_width(d: usize, l0: f64, eps: f64, w0: u64) -> Result<NNSizing> {
    check_common(d, l0, eps)?;
    if w0 == 0 {
        return Err(Error::Sizing("width must be at least 1".into()));
    }
    let df = d as f64;
    let w_tilde = w0 as f64 / width_unit(d);
    let log3 = (w_tilde + 2.0).ln() / 3f64.ln();
    let ln_c = (BOUND_CONSTANT * df.sqrt() * l0).ln();
    // ln L̃ = ½(-d ln ε + d ln c - 2 ln W̃ - ln log₃(W̃+2))
    let ln_l_tilde = 0.5 * (-df * eps.ln() + df * ln_c - 2.0 * w_tilde.ln() - log3.ln());
    let l_tilde = ln_l_tilde.exp();
    let depth_f = (22.0 * l_tilde + 18.0 + 2.0 * df).ceil();
    if !(depth_f < u64::MAX as f64) {
        return Err(Error::Sizing(format!("depth e^{ln_l_tilde:.1} overflows")));
    }
    let depth = (depth_f as u64).max(depth_floor(d));
    Ok(NNSizing {
        d,
        l0,
        eps,
        fixed: FixedSize::Width(w0),
        ln_w_tilde: w_tilde.ln(),
        l_tilde,
        ln_width: (w0 as f64).ln(),
        width: Some(w0),
        depth,
        meets_floors: w0 as f64 >= width_floor(d),
    })
}

/// Width for a fixed depth `l0_depth`: `W̃ = 3^{[ε^{-d} / ((131√d L0)^{-d} L̃²)]^{1/3}} - 1`, `W = ⌈3^{d+5} d W̃⌉`.
pub fn size_for_depth(d: usize, l0: f64, eps: f64, depth: u64) -> Result<NNSizing> {
    check_common(d, l0, eps)?;
    if depth < depth_floor(d) {
        return Err(Error::Sizing(format!(
            "depth {depth} is below the floor {} for d = {d}",
            depth_floor(d)
        )));
    }
    let df = d as f64;
    let l_tilde = (depth as f64 - 18.0 - 2.0 * df) / 22.0;
    let ln_c = (BOUND_CONSTANT * df.sqrt() * l0).ln();
    let ln_inner = -df * eps.ln() + df * ln_c - 2.0 * l_tilde.ln();
    let exponent = (ln_inner / 3.0).exp();
    // W̃ + 1 = 3^exponent
    let ln_wt1 = exponent * 3f64.ln();
    let ln_w_tilde = if ln_wt1 > 40.0 {
        ln_wt1
    } else {
        ln_wt1.exp_m1().ln()
    };
    let ln_width = ln_w_tilde + width_unit(d).ln();
    let width_f = ln_width.exp();
    let width = if width_f < u64::MAX as f64 {
        Some((width_unit(d) * ln_w_tilde.exp()).ceil() as u64)
    } else {
        None
    };
    Ok(NNSizing {
        d,
        l0,
        eps,
        fixed: FixedSize::Depth(depth),
        ln_w_tilde,
        l_tilde,
        ln_width,
        width,
        depth,
        meets_floors: ln_width >= width_floor(d).ln(),
    })
}

/// Fully connected network, ReLU on hidden layers, identity output.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluNet {
    layer_dims: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

impl ReluNet {
    /// All-zero network with `hidden` layers of `width`.
    pub fn zeros(d: usize, width: usize, hidden: usize, m: usize) -> Self {
        let mut dims = vec![d];
        dims.extend(std::iter::repeat_n(width, hidden));
        dims.push(m);
        Self::zeros_with_dims(&dims)
    }

    pub fn zeros_with_dims(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "a network needs input and output layers");
        ReluNet {
            layer_dims: dims.to_vec(),
            weights: dims
                .windows(2)
                .map(|w| DMatrix::zeros(w[1], w[0]))
                .collect(),
            biases: dims.windows(2).map(|w| DVector::zeros(w[1])).collect(),
        }
    }

    /// He-style fan-in uniform weights `U(±√(6/fan_in))`, zero biases.
    pub fn he_uniform(dims: &[usize], seed: u64) -> Self {
        let mut net = Self::zeros_with_dims(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut net.weights {
            let bound = (6.0 / w.ncols() as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_parts(weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Dimension("need one bias per weight matrix".into()));
        }
        let mut dims = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ncols() != *dims.last().unwrap() || b.len() != w.nrows() {
                return Err(Error::Dimension("layer shapes do not chain".into()));
            }
            dims.push(w.nrows());
        }
        Ok(ReluNet {
            layer_dims: dims,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut a = DVector::from_column_slice(x);
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = w * a + b;
            if k < last {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        a.as_slice().to_vec()
    }

    /// Parameters in layer order, each weight matrix column-major then its bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter count mismatch");
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }

    /// Mean squared error `(1/n) Σ ‖f(x) - y‖²` over the columns of `xs`/`ys`, and its gradient.
    pub fn loss_and_grad(
        &self,
        xs: &DMatrix<f64>,
        ys: &DMatrix<f64>,
    ) -> (f64, Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
        let n = xs.ncols() as f64;
        let last = self.weights.len() - 1;
        let mut acts = vec![xs.clone()];
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if k < last {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let diff = acts.last().unwrap() - ys;
        let loss = diff.norm_squared() / n;
        let mut delta = diff * (2.0 / n);
        let mut gw = vec![DMatrix::zeros(0, 0); self.weights.len()];
        let mut gb = vec![DVector::zeros(0); self.weights.len()];
        for k in (0..self.weights.len()).rev() {
            gw[k] = &delta * acts[k].transpose();
            gb[k] = delta.column_sum();
            if k > 0 {
                let mut back = self.weights[k].tr_mul(&delta);
                // ReLU derivative from the post-activation sign
                back.zip_apply(&acts[k], |g, a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = back;
            }
        }
        (loss, gw, gb)
    }

    pub fn mse(&self, xs: &DMatrix<f64>, ys: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for j in 0..xs.ncols() {
            let out = self.eval(xs.column(j).as_slice());
            total += out
                .iter()
                .zip(ys.column(j).iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        total / xs.ncols() as f64
    }

    pub fn verify_uniform<F>(
        &self,
        probes: &[Vec<f64>],
        oracle: F,
        eps: f64,
    ) -> Result<UniformReport>
    where
        F: Fn(&[f64]) -> Result<Option<Vec<f64>>> + Sync,
    {
        verify_uniform_nn(self, probes, oracle, eps)
    }

    pub fn to_file(&self, training_meta: Option<TrainingMeta>) -> ReluNetFile {
        ReluNetFile {
            layer_dims: self.layer_dims.clone(),
            weights: self
                .weights
                .iter()
                .map(|w| {
                    (0..w.nrows())
                        .flat_map(|i| w.row(i).iter().copied().collect::<Vec<_>>())
                        .collect()
                })
                .collect(),
            biases: self.biases.iter().map(|b| b.as_slice().to_vec()).collect(),
            training_meta,
        }
    }

    pub fn from_file(f: &ReluNetFile) -> Result<Self> {
        let dims = &f.layer_dims;
        if dims.len() < 2 || f.weights.len() != dims.len() - 1 || f.biases.len() != dims.len() - 1 {
            return Err(Error::Dimension(
                "layer_dims do not match the stored layers".into(),
            ));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..dims.len() - 1 {
            let (rows, cols) = (dims[k + 1], dims[k]);
            if f.weights[k].len() != rows * cols || f.biases[k].len() != rows {
                return Err(Error::Dimension(format!(
                    "layer {k} has the wrong number of entries"
                )));
            }
            weights.push(DMatrix::from_row_slice(rows, cols, &f.weights[k]));
            biases.push(DVector::from_column_slice(&f.biases[k]));
        }
        Self::from_parts(weights, biases)
    }

    pub fn save(&self, path: impl AsRef<Path>, training_meta: Option<TrainingMeta>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_file(training_meta))?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f: ReluNetFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(&f)
    }
}

/// Serialized network; weights are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluNetFile {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default)]
    pub training_meta: Option<TrainingMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub hyper: TrainConfig,
    pub samples: usize,
    pub final_loss: f64,
    #[serde(default)]
    pub spec_hash: Option<String>,
}

/// Plain constant-rate minibatch SGD on the mean squared error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub width: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// `W = 64`, `L = 4`, learning rate `5e-4`.
    pub fn desk() -> Self {
        TrainConfig {
            width: 64,
            hidden: 4,
            lr: 5e-4,
            epochs: 2000,
            batch: 256,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub net: ReluNet,
    /// Mean minibatch loss per epoch.
    pub losses: Vec<f64>,
}

/// `(x, u0)` pairs of the feasible records.
pub fn training_pairs(ds: &Dataset) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    ds.feasible_records()
        .map(|r| {
            (
                r.x.clone(),
                r.u0.clone().expect("feasible record has an action"),
            )
        })
        .unzip()
}

pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    let (xs, ys) = training_pairs(ds);
    train_samples(&xs, &ys, cfg)
}

/// Trains a fresh He-initialized network on `(xs, ys)`.
pub fn train_samples(xs: &[Vec<f64>], ys: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainResult> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidArgument(
            "training needs matching, nonempty inputs and targets".into(),
        ));
    }
    if !(cfg.lr > 0.0) || cfg.batch == 0 || cfg.width == 0 {
        return Err(Error::InvalidArgument(
            "lr, batch and width must be positive".into(),
        ));
    }
    let d = xs[0].len();
    let m = ys[0].len();
    let mut dims = vec![d];
    dims.extend(std::iter::repeat_n(cfg.width, cfg.hidden));
    dims.push(m);
    let net = ReluNet::he_uniform(&dims, cfg.seed);
    continue_training(net, xs, ys, cfg)
}

/// Runs `cfg.epochs` SGD epochs from `net`.
pub fn continue_training(
    mut net: ReluNet,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    let n = xs.len();
    let d = net.input_dim();
    let m = net.output_dim();
    if xs.iter().any(|x| x.len() != d) || ys.iter().any(|y| y.len() != m) {
        return Err(Error::Dimension(
            "sample shapes do not match the network".into(),
        ));
    }
    // shuffling stream independent of the initialization stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5bd1_e995);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let bx = DMatrix::from_fn(d, chunk.len(), |i, j| xs[chunk[j]][i]);
            let by = DMatrix::from_fn(m, chunk.len(), |i, j| ys[chunk[j]][i]);
            let (loss, gw, gb) = net.loss_and_grad(&bx, &by);
            total += loss * chunk.len() as f64;
            for (w, g) in net.weights.iter_mut().zip(&gw) {
                w.zip_apply(g, |a, b| *a -= cfg.lr * b);
            }
            for (b, g) in net.biases.iter_mut().zip(&gb) {
                b.zip_apply(g, |a, v| *a -= cfg.lr * v);
            }
        }
        let loss = total / n as f64;
        if !(loss <= DIVERGENCE_LOSS) {
            return Err(Error::Divergence { epoch, loss });
        }
        losses.push(loss);
    }
    Ok(TrainResult { net, losses })
}

/// Max ∞-norm error of `net` against `oracle` over `probes`.
pub fn verify_uniform_nn<F>(
    net: &ReluNet,
    probes: &[Vec<f64>],
    oracle: F,
    eps: f64,
) -> Result<UniformReport>
where
    F: Fn(&[f64]) -> Result<Option<Vec<f64>>> + Sync,
{
    verify_uniform(|x| Ok(net.eval(x)), probes, oracle, eps)
}
