use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robosynth::conic::SolverSettings;
use robosynth::problem::{aggregate_disturbance, ProblemSpec};
use robosynth::sip::{
    build_inner, cost, rollout, solve_inner, DFPolicy, Layout, ScenarioTuple, Transcription,
};

mod common;
use common::{example1_undisturbed, random_tuple, Scalar};

fn random_policy(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> DFPolicy {
    let dims = spec.dims();
    let mut p = DFPolicy::zeros(dims);
    for t in 0..dims.horizon {
        let eta: Vec<f64> = (0..dims.m).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.set_eta(t, &eta);
        for i in 0..t {
            p.set_theta(
                t,
                i,
                &DMatrix::from_fn(dims.m, dims.d, |_, _| rng.random_range(-1.0..1.0)),
            );
        }
    }
    p
}

#[test]
fn zero_rollout_stays_at_origin() {
    let spec = ProblemSpec::example1();
    let p = DFPolicy::zeros(spec.dims());
    let w = vec![DVector::zeros(2); 5];
    let r = rollout(&spec, &p, &[0.0, 0.0], &w);
    assert!(r.states.iter().all(|x| x.amax() == 0.0));
    assert!(r.controls.iter().all(|u| u.amax() == 0.0));
    assert_eq!(cost(&spec, &p, &[0.0, 0.0], &w), 0.0);
}

#[test]
fn autonomous_rollout_is_matrix_power() {
    let spec = ProblemSpec::example1();
    let p = DFPolicy::zeros(spec.dims());
    let w = vec![DVector::zeros(2); 5];
    let x0 = DVector::from_vec(vec![0.7, -0.4]);
    let r = rollout(&spec, &p, x0.as_slice(), &w);
    let mut ak = DMatrix::identity(2, 2);
    for t in 0..=5 {
        assert!((&r.states[t] - &ak * &x0).amax() < 1e-14);
        ak = spec.a() * ak;
    }
}

#[test]
fn rollout_matches_hand_recursion() {
    let spec = ProblemSpec::example1();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_policy(&spec, &mut rng);
    let w: Vec<DVector<f64>> = (0..5)
        .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-0.1..0.1)))
        .collect();
    let x0 = [0.3, -0.2];
    let r = rollout(&spec, &p, &x0, &w);
    let (a, b) = (spec.a(), spec.b());
    let mut x = [x0[0], x0[1]];
    for t in 0..5 {
        let mut u = p.eta(t)[0];
        for i in 0..t {
            let th = p.theta(t, i);
            u += th[(0, 0)] * w[i][0] + th[(0, 1)] * w[i][1];
        }
        assert!((r.controls[t][0] - u).abs() < 1e-12);
        x = [
            a[(0, 0)] * x[0] + a[(0, 1)] * x[1] + b[(0, 0)] * u + w[t][0],
            a[(1, 0)] * x[0] + a[(1, 1)] * x[1] + b[(1, 0)] * u + w[t][1],
        ];
        assert!((r.states[t + 1][0] - x[0]).abs() < 1e-12);
        assert!((r.states[t + 1][1] - x[1]).abs() < 1e-12);
    }
}

#[test]
fn scalar_cost_by_hand() {
    let s = Scalar {
        a: 1.0,
        b: 1.0,
        g: 1.0,
        q: 1.0,
        r: 1.0,
        p: 1.0,
        x_max: 2.0,
        u_max: 1.0,
        w_max: 0.1,
        eps: 0.0,
        n: 1,
    };
    let spec = s.spec();
    let p = DFPolicy::zeros(spec.dims());
    assert_eq!(cost(&spec, &p, &[1.0], &[DVector::zeros(1)]), 2.0);
}

#[test]
fn cost_matches_stacked_quadratic_form() {
    let spec = ProblemSpec::example1();
    let tr = Transcription::new(&spec);
    let layout = tr.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let p = random_policy(&spec, &mut rng);
        let w: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-0.1..0.1)))
            .collect();
        let x0 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let z = DVector::from_vec(layout.z_from_policy(&p));
        let (m, off) = tr.cost_factor(&tr.affine_trajectory(&x0, &w));
        let stacked = (m * z + off).norm_squared();
        let direct = cost(&spec, &p, &x0, &w);
        assert!(
            (stacked - direct).abs() < 1e-9 * direct.max(1.0),
            "{stacked} vs {direct}"
        );
    }
}

#[test]
fn layout_round_trip() {
    let spec = ProblemSpec::example1();
    let layout = Layout::new(spec.dims());
    // 10 causal 1×2 blocks, 5 entries of η, r
    assert_eq!(layout.n_vars(), 26);
    assert_eq!(layout.full_param_count(), 56);
    let p = random_policy(&spec, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(layout.policy_from_z(&layout.z_from_policy(&p)), p);
}

#[test]
fn example1_inner_keeps_only_causal_entries() {
    let spec = ProblemSpec::example1();
    let tuple = ScenarioTuple::nominal(&spec);
    assert_eq!(tuple.n_scenarios(), 56);
    let p = build_inner(&spec, &[0.5, 0.5], &tuple).unwrap();
    assert_eq!(p.n_vars(), 26);
}

#[test]
fn untightened_controls_without_margin() {
    let mut raw = ProblemSpec::example1().to_raw();
    raw.eps = 0.0;
    let spec = robosynth::problem::validate_spec(&raw).unwrap();
    assert_eq!(spec.tightened_control_offsets(), vec![2.0, 2.0]);
    let tight = ProblemSpec::example1().tightened_control_offsets();
    assert!((tight[0] - 1.97).abs() < 1e-15);
}

#[test]
fn scalar_constraint_count() {
    let s = Scalar {
        a: 0.5,
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
    let spec = s.spec();
    let p = build_inner(
        &spec,
        &[0.2],
        &ScenarioTuple::from_coeffs(1, 2, vec![0.5, 0.0]).unwrap(),
    )
    .unwrap();
    // one quadratic, two terminal rows, two control rows
    assert_eq!(p.quadratics().len(), 1);
    assert_eq!(p.n_linear(), 4);
}

#[test]
fn origin_without_disturbance_costs_nothing() {
    let spec = example1_undisturbed();
    let sol = solve_inner(
        &spec,
        &[0.0, 0.0],
        &ScenarioTuple::nominal(&spec),
        &SolverSettings::default(),
    )
    .unwrap();
    assert!(sol.value.abs() < 1e-7);
    let p = sol.policy.unwrap();
    assert!(p.eta(0).amax() < 1e-4);
    assert!(p.is_causal());
}

#[test]
fn scalar_single_scenario_matches_grid() {
    let s = Scalar {
        a: 0.5,
        b: 1.0,
        g: 1.0,
        q: 1.0,
        r: 1.0,
        p: 1.0,
        x_max: 1.0,
        u_max: 1.0,
        w_max: 0.1,
        eps: 0.0,
        n: 2,
    };
    let spec = s.spec();
    let tuple = ScenarioTuple::from_coeffs(2, 2, vec![1.0, 0.0, -0.5, 0.0]).unwrap();
    let sol = solve_inner(&spec, &[0.8], &tuple, &SolverSettings::default()).unwrap();
    let oracle = s.grid_value(0.8, &tuple);
    assert!(
        (sol.value - oracle).abs() < 1e-3,
        "{} vs {oracle}",
        sol.value
    );
}

#[test]
fn random_scalar_instances_match_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..8 {
        let s = Scalar::random(&mut rng);
        let spec = s.spec();
        let k = rng.random_range(1..=3);
        let tuple = random_tuple(&mut rng, k, s.n, 2);
        let x0 = rng.random_range(-0.5..0.5) * s.x_max;
        let sol = solve_inner(&spec, &[x0], &tuple, &SolverSettings::default()).unwrap();
        let oracle = s.grid_value(x0, &tuple);
        if oracle.is_finite() {
            assert!(
                (sol.value - oracle).abs() < 1e-3,
                "{s:?}: {} vs {oracle}",
                sol.value
            );
        } else {
            assert!(!sol.feasible(), "{s:?}: solver feasible, grid not");
        }
    }
}

#[test]
fn adding_scenarios_never_lowers_value() {
    let spec = ProblemSpec::example1();
    let tr = Transcription::new(&spec);
    let k = aggregate_disturbance(&spec).coeff_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..6 {
        let x0 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let base = random_tuple(&mut rng, 2, 5, k);
        let mut more = base.clone();
        let extra = random_tuple(&mut rng, 1, 5, k);
        more.push(extra.coeffs());
        let a = tr
            .solve_inner(&x0, &base, &SolverSettings::default())
            .unwrap()
            .value;
        let b = tr
            .solve_inner(&x0, &more, &SolverSettings::default())
            .unwrap()
            .value;
        assert!(a <= b + 1e-7, "{a} > {b}");
    }
}

#[test]
fn bad_tuples_are_rejected() {
    assert!(ScenarioTuple::from_coeffs(5, 3, vec![0.0; 14]).is_err());
    assert!(ScenarioTuple::from_coeffs(1, 1, vec![1.5]).is_err());
    let spec = ProblemSpec::example1();
    let wrong = ScenarioTuple::zeros(1, 4, 3);
    assert!(build_inner(&spec, &[0.0, 0.0], &wrong).is_err());
    assert!(build_inner(&spec, &[0.0], &ScenarioTuple::nominal(&spec)).is_err());
}
