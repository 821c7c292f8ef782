use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robosynth::error::Error;
use robosynth::problem::{aggregate_disturbance, n_z, validate_spec, Polytope, ProblemSpec};

mod common;

#[test]
fn example1_is_valid() {
    let spec = ProblemSpec::example1();
    assert_eq!(spec.dims().d, 2);
    assert_eq!(spec.horizon(), 5);
    assert_eq!(spec.eps(), 0.03);
    assert_eq!(spec.revalidate().unwrap(), spec);
}

#[test]
fn zero_input_weight_is_rejected() {
    let mut raw = ProblemSpec::example1().to_raw();
    raw.r = vec![vec![0.0]];
    assert!(matches!(validate_spec(&raw), Err(Error::Spec { .. })));
}

#[test]
fn oversized_terminal_set_is_rejected() {
    let mut raw = ProblemSpec::example1().to_raw();
    raw.terminal_box = Some(vec![[-3.0, 3.0]; 2]);
    raw.terminal_polytope = None;
    assert!(matches!(validate_spec(&raw), Err(Error::Spec { .. })));
}

#[test]
fn mismatched_shapes_are_rejected() {
    let mut raw = ProblemSpec::example1().to_raw();
    raw.b = vec![vec![1.0]];
    assert!(validate_spec(&raw).is_err());
    let mut raw = ProblemSpec::example1().to_raw();
    raw.horizon = 0;
    assert!(validate_spec(&raw).is_err());
    let mut raw = ProblemSpec::example1().to_raw();
    raw.eps = -0.1;
    assert!(validate_spec(&raw).is_err());
}

#[test]
fn unknown_json_keys_are_rejected() {
    let text = ProblemSpec::example1()
        .to_json_string()
        .replacen("\"eps\"", "\"epsilon\"", 1);
    assert!(ProblemSpec::from_json_str(&text).is_err());
}

#[test]
fn json_round_trip_keeps_hash() {
    let spec = ProblemSpec::example2();
    let back = ProblemSpec::from_json_str(&spec.to_json_string()).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.hash(), spec.hash());
    assert_ne!(spec.hash(), ProblemSpec::example1().hash());
}

#[test]
fn decision_dimensions() {
    assert_eq!(n_z(&ProblemSpec::example1()), 56);
    assert_eq!(n_z(&ProblemSpec::example2()), 265);
    let one = common::Scalar {
        a: 1.0,
        b: 1.0,
        g: 1.0,
        q: 1.0,
        r: 1.0,
        p: 1.0,
        x_max: 1.0,
        u_max: 1.0,
        w_max: 0.1,
        eps: 0.0,
        n: 1,
    };
    assert_eq!(n_z(&one.spec()), 3);
    // counting entries of θ (mN × dN), η (mN) and r
    let dims = ProblemSpec::example2().dims();
    let (m, d, n) = (dims.m, dims.d, dims.horizon);
    assert_eq!((m * n) * (d * n) + m * n + 1, 265);
}

#[test]
fn example1_generators() {
    let spec = ProblemSpec::example1();
    let agg = aggregate_disturbance(&spec);
    assert_eq!(agg.coeff_dim(), 3);
    let g = agg.generator_matrix();
    for i in 0..2 {
        assert!((g[(i, 0)] - spec.g()[(i, 0)] * 0.05).abs() < 1e-15);
        assert!((g[(i, 1)] - spec.g()[(i, 1)] * 0.05).abs() < 1e-15);
        assert!((g[(i, 2)] - spec.b()[(i, 0)] * 0.03).abs() < 1e-15);
    }
    assert_eq!(agg.center(), &DVector::zeros(2));
}

#[test]
fn undisturbed_identity_generators() {
    let mut raw = ProblemSpec::example1().to_raw();
    raw.g = Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    raw.eps = 0.0;
    let agg = aggregate_disturbance(&validate_spec(&raw).unwrap());
    assert_eq!(agg.coeff_dim(), 3);
    let g = agg.generator_matrix();
    assert_eq!(g[(0, 0)], 0.05);
    assert_eq!(g[(1, 1)], 0.05);
    assert_eq!(g[(0, 1)], 0.0);
    assert_eq!(g.column(2).amax(), 0.0);
}

#[test]
fn realized_disturbances_are_members() {
    let agg = aggregate_disturbance(&ProblemSpec::example1());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let xi: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let w = agg.realize(&xi);
        assert!(agg.membership_violation(w.as_slice()).unwrap() <= 1e-7);
    }
    // far outside the zonotope
    assert!(agg.membership_violation(&[1.0, 1.0]).unwrap() > 0.5);
}

#[test]
fn polytope_queries() {
    let set = Polytope::cube(2, 1.5);
    assert!(set.contains(&[1.5, -1.5], 0.0));
    assert!(!set.contains(&[1.6, 0.0], 1e-9));
    assert_eq!(set.as_box().unwrap(), (vec![-1.5, -1.5], vec![1.5, 1.5]));
    assert!((set.support(&[1.0, 1.0]).unwrap() - 3.0).abs() < 1e-6);
    assert!(Polytope::cube(2, 1.0).is_subset_of(&set).unwrap());
    assert!(!set.is_subset_of(&Polytope::cube(2, 1.0)).unwrap());
}
