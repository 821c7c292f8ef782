use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robosynth::error::Error;
use robosynth::nnfs::{
    depth_floor, size_for_depth, size_for_width, train_samples, width_floor, ReluNet, TrainConfig,
    TrainingMeta,
};

/// `ln` of `131√d L0 (W̃² L̃² log₃(W̃+2))^{-1/d}` written out from the raw sizes.
fn ln_bound(d: usize, l0: f64, ln_w: f64, depth: f64) -> f64 {
    let df = d as f64;
    let ln_wt = ln_w - (df + 5.0) * 3f64.ln() - df.ln();
    let lt = (depth - 18.0 - 2.0 * df) / 22.0;
    let log3 = if ln_wt < 30.0 {
        (ln_wt.exp() + 2.0).ln() / 3f64.ln()
    } else {
        ln_wt / 3f64.ln()
    };
    (131.0 * df.sqrt() * l0).ln() - (2.0 * ln_wt + 2.0 * lt.ln() + log3.ln()) / df
}

fn random_samples(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..4 {
        let mut net = ReluNet::he_uniform(&[3, 6, 5, 2], seed);
        let mut p = net.params();
        for v in p.iter_mut() {
            *v += 0.05 * rng.random_range(-1.0..1.0);
        }
        net.set_params(&p);
        let xs = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let ys = DMatrix::from_fn(2, 7, |_, _| rng.random_range(-1.0..1.0));
        let (_, gw, gb) = net.loss_and_grad(&xs, &ys);
        let mut analytic = Vec::new();
        for (w, b) in gw.iter().zip(&gb) {
            analytic.extend_from_slice(w.as_slice());
            analytic.extend_from_slice(b.as_slice());
        }
        let step = 1e-5;
        for i in 0..p.len() {
            let mut probe = net.clone();
            let mut q = p.clone();
            q[i] += step;
            probe.set_params(&q);
            let up = probe.loss_and_grad(&xs, &ys).0;
            q[i] -= 2.0 * step;
            probe.set_params(&q);
            let down = probe.loss_and_grad(&xs, &ys).0;
            let fd = (up - down) / (2.0 * step);
            let scale = analytic[i].abs().max(fd.abs()).max(1e-3);
            assert!(
                (fd - analytic[i]).abs() / scale < 1e-4,
                "parameter {i}: analytic {} vs finite difference {fd}",
                analytic[i]
            );
        }
    }
}

#[test]
fn memorizes_a_single_record() {
    let cfg = TrainConfig {
        width: 8,
        hidden: 2,
        lr: 0.05,
        epochs: 1000,
        batch: 1,
        seed: 3,
    };
    let res = train_samples(&[vec![0.3, -0.7]], &[vec![1.2]], &cfg).unwrap();
    assert!(*res.losses.last().unwrap() < 1e-8);
    assert_eq!(res.losses.len(), 1000);
}

#[test]
fn fits_a_linear_target() {
    let xs = random_samples(1000, 2, 5);
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.6 * x[0] - 0.4 * x[1]]).collect();
    let cfg = TrainConfig {
        width: 16,
        hidden: 2,
        lr: 0.02,
        epochs: 300,
        batch: 16,
        seed: 1,
    };
    let net = train_samples(&xs, &ys, &cfg).unwrap().net;
    let xm = DMatrix::from_fn(2, xs.len(), |i, j| xs[j][i]);
    let ym = DMatrix::from_fn(1, ys.len(), |i, j| ys[j][i]);
    let mse = net.mse(&xm, &ym);
    assert!(mse < 1e-4, "mse {mse}");
}

#[test]
fn training_is_deterministic() {
    let xs = random_samples(64, 2, 8);
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0].abs() - x[1]]).collect();
    let cfg = TrainConfig {
        width: 12,
        hidden: 2,
        lr: 0.01,
        epochs: 50,
        batch: 8,
        seed: 21,
    };
    let a = train_samples(&xs, &ys, &cfg).unwrap();
    let b = train_samples(&xs, &ys, &cfg).unwrap();
    assert_eq!(
        a.losses.last().unwrap().to_bits(),
        b.losses.last().unwrap().to_bits()
    );
    assert_eq!(a.net, b.net);
    let c = train_samples(&xs, &ys, &TrainConfig { seed: 22, ..cfg }).unwrap();
    assert_ne!(a.net, c.net);
}

#[test]
fn divergence_reports_the_epoch() {
    let xs = random_samples(32, 2, 2);
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![100.0 * x[0]]).collect();
    let cfg = TrainConfig {
        width: 16,
        hidden: 3,
        lr: 5.0,
        epochs: 100,
        batch: 4,
        seed: 0,
    };
    match train_samples(&xs, &ys, &cfg) {
        Err(Error::Divergence { epoch, loss }) => {
            assert!(epoch < 100);
            assert!(!(loss <= 1e6));
        }
        other => panic!(
            "expected divergence, got {:?}",
            other.map(|r| r.losses.last().copied())
        ),
    }
}

#[test]
fn zero_network_and_bias_free_homogeneity() {
    assert_eq!(ReluNet::zeros(2, 4, 3, 1).eval(&[0.4, -9.0]), vec![0.0]);
    let net = ReluNet::he_uniform(&[2, 10, 10, 2], 4);
    for x in random_samples(20, 2, 6) {
        let y = net.eval(&x);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y2 = net.eval(&x2);
        for (a, b) in y.iter().zip(&y2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_embedding_reproduces_a_linear_map() {
    // x = ReLU(x) - ReLU(-x) routed through two hidden layers
    let a = [0.7, -1.9, 0.25];
    let embed = DMatrix::from_row_slice(
        6,
        3,
        &[
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0,
            -1.0,
        ],
    );
    let readout = DMatrix::from_row_slice(1, 6, &[a[0], a[1], a[2], -a[0], -a[1], -a[2]]);
    let net = ReluNet::from_parts(
        vec![embed, DMatrix::identity(6, 6), readout],
        vec![DVector::zeros(6), DVector::zeros(6), DVector::zeros(1)],
    )
    .unwrap();
    for x in random_samples(50, 3, 9) {
        let want: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
        assert!((net.eval(&x)[0] - want).abs() < 1e-12);
    }
}

#[test]
fn piecewise_affine_along_a_segment() {
    let net = ReluNet::he_uniform(&[2, 6, 6, 1], 13);
    let (p, q) = ([-0.8, 0.3], [0.9, -0.6]);
    let n = 2000;
    let f = |t: f64| net.eval(&[p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])])[0];
    let vals: Vec<f64> = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
    let kinks = vals
        .windows(3)
        .filter(|w| (w[0] - 2.0 * w[1] + w[2]).abs() > 1e-10)
        .count();
    // each kink shows up in at most two consecutive second differences
    assert!(kinks <= 2 * 12, "{kinks} nonzero second differences");
}

#[test]
fn oracle_equal_to_net_gives_zero_error() {
    let net = ReluNet::he_uniform(&[2, 5, 1], 2);
    let probes = random_samples(30, 2, 1);
    let r = net
        .verify_uniform(&probes, |x| Ok(Some(net.eval(x))), 0.1)
        .unwrap();
    assert_eq!(r.max_err, 0.0);
    assert!(r.pass);
}

#[test]
fn certified_depth_for_width_64() {
    let s = size_for_width(2, 2.5, 0.1, 64).unwrap();
    let rel = (s.depth as f64 - 8_721_411.0).abs() / 8_721_411.0;
    assert!(rel < 1e-3, "depth {}", s.depth);
    assert!(!s.meets_floors);
}

#[test]
fn sizing_bounds_are_sound() {
    for d in 1..=4 {
        for l0 in [1.0, 2.5] {
            for eps in [0.1, 0.03] {
                let w0 = (width_floor(d) * 2.0) as u64;
                let s = size_for_width(d, l0, eps, w0).unwrap();
                assert!(s.depth >= depth_floor(d));
                let b = ln_bound(d, l0, (w0 as f64).ln(), s.depth as f64);
                assert!(b <= eps.ln() + 1e-9, "width mode d={d} L0={l0} eps={eps}");
                assert!((s.bound().ln() - b).abs() < 1e-9);
                if s.depth > depth_floor(d) {
                    let shallower = ln_bound(d, l0, (w0 as f64).ln(), s.depth as f64 - 1.0);
                    assert!(shallower > eps.ln() - 1e-9, "depth not minimal for d={d}");
                }

                let depth = depth_floor(d) + 10;
                let s = size_for_depth(d, l0, eps, depth).unwrap();
                let ln_w = match s.width {
                    Some(w) => (w as f64).ln(),
                    None => s.ln_width,
                };
                let b = ln_bound(d, l0, ln_w, depth as f64);
                assert!(b <= eps.ln() + 1e-9, "depth mode d={d} L0={l0} eps={eps}");
            }
        }
    }
}

#[test]
fn width_shrinks_with_depth() {
    let mut prev = f64::INFINITY;
    for depth in [33, 40, 60, 100, 400] {
        let s = size_for_depth(2, 2.5, 0.1, depth).unwrap();
        assert!(s.ln_w_tilde < prev);
        prev = s.ln_w_tilde;
    }
    let s = size_for_depth(2, 2.5, 0.1, 33).unwrap();
    let w = s.ln_width.exp();
    assert!(w.is_finite() && s.width.is_none());
    assert!(w >= width_floor(2));
    assert!(s.meets_floors);
    assert!(matches!(
        size_for_depth(2, 2.5, 0.1, 32),
        Err(Error::Sizing(_))
    ));
    assert!(matches!(
        size_for_width(2, 2.5, 0.0, 64),
        Err(Error::Sizing(_))
    ));
}

#[test]
fn save_load_round_trip() {
    let net = ReluNet::he_uniform(&[2, 7, 7, 1], 31);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let meta = TrainingMeta {
        hyper: TrainConfig::desk(),
        samples: 10,
        final_loss: 0.5,
        spec_hash: Some("abc".into()),
    };
    net.save(&path, Some(meta)).unwrap();
    assert_eq!(ReluNet::load(&path).unwrap(), net);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(json["layer_dims"], serde_json::json!([2, 7, 7, 1]));
    assert_eq!(json["training_meta"]["samples"], 10);
}
