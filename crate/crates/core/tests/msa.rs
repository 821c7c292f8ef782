use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robosynth::conic::SolverSettings;
use robosynth::msa::{acceptance_probability, exact_solve, sa_propose, SAConfig};
use robosynth::problem::{aggregate_disturbance, ProblemSpec};
use robosynth::sip::{
    constraint_violation, rollout, trajectory_cost, ScenarioTuple, Transcription,
};

mod common;

/// Exchange method over all generator-vertex sequences: the robust value of the inner problem.
fn exchange_value(spec: &ProblemSpec, x0: &[f64]) -> f64 {
    let tr = Transcription::new(spec);
    let agg = aggregate_disturbance(spec);
    let k = agg.coeff_dim();
    let n = spec.horizon();
    let per_step = 1usize << k;
    let total = per_step.pow(n as u32);
    let seq_coeffs = |mut idx: usize| -> Vec<f64> {
        let mut c = Vec::with_capacity(n * k);
        for _ in 0..n {
            let v = idx % per_step;
            idx /= per_step;
            c.extend((0..k).map(|j| if (v >> j) & 1 == 1 { 1.0 } else { -1.0 }));
        }
        c
    };
    let mut tuple = ScenarioTuple::from_coeffs(n, k, vec![0.0; n * k]).unwrap();
    for _round in 0..200 {
        let sol = tr
            .solve_inner(x0, &tuple, &SolverSettings::default())
            .unwrap();
        let Some(policy) = sol.policy else {
            return f64::INFINITY;
        };
        let mut worst = (0.0, 0usize);
        for s in 0..total {
            let c = seq_coeffs(s);
            let w: Vec<DVector<f64>> = (0..n)
                .map(|t| agg.realize(&c[t * k..(t + 1) * k]))
                .collect();
            let r = rollout(spec, &policy, x0, &w);
            let excess = (trajectory_cost(spec, &r) - sol.value) / sol.value.max(1.0);
            let score = excess.max(constraint_violation(spec, &r));
            if score > worst.0 {
                worst = (score, s);
            }
        }
        if worst.0 <= 1e-7 {
            return sol.value;
        }
        tuple.push(&seq_coeffs(worst.1));
    }
    panic!("exchange method did not converge");
}

#[test]
fn origin_without_disturbance_is_free() {
    let spec = common::example1_undisturbed();
    for iters in [1, 10] {
        let res = exact_solve(&spec, &[0.0, 0.0], &SAConfig::desk().with_iters(iters)).unwrap();
        assert!(res.feasible);
        assert!(res.value.abs() < 1e-7);
    }
}

#[test]
fn incumbent_never_decreases_and_is_seeded() {
    let spec = ProblemSpec::example1();
    let cfg = SAConfig::desk().with_iters(40).with_seed(3);
    let a = exact_solve(&spec, &[0.2, -0.4], &cfg).unwrap();
    let series = a.incumbent_series();
    assert!(series.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(a.history.len(), 41);
    let b = exact_solve(&spec, &[0.2, -0.4], &cfg).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.first_control(), b.first_control());
}

#[test]
fn value_bounded_by_nominal_and_exchange_method() {
    let spec = ProblemSpec::example1();
    let x0 = [0.5, 0.5];
    let nominal = Transcription::new(&spec)
        .solve_inner(
            &x0,
            &ScenarioTuple::nominal(&spec),
            &SolverSettings::default(),
        )
        .unwrap()
        .value;
    let robust = exchange_value(&spec, &x0);
    let res = exact_solve(&spec, &x0, &SAConfig::desk()).unwrap();
    assert!(res.value >= nominal - 1e-9);
    assert!(
        res.value <= robust + 1e-6 * robust,
        "{} above the robust value {robust}",
        res.value
    );
    assert!(
        res.value >= 0.95 * robust,
        "{} far below the robust value {robust}",
        res.value
    );
}

#[test]
fn state_box_corner_is_infeasible() {
    let res = exact_solve(
        &ProblemSpec::example1(),
        &[1.5, 1.5],
        &SAConfig::desk().with_iters(5),
    )
    .unwrap();
    assert!(!res.feasible);
    assert!(res.value.is_infinite());
    assert!(res.policy.is_none());
}

#[test]
fn outside_state_set_is_an_error() {
    assert!(exact_solve(&ProblemSpec::example1(), &[2.0, 0.0], &SAConfig::desk()).is_err());
}

#[test]
fn acceptance_rule() {
    assert_eq!(acceptance_probability(0.0, 1.0), 0.5);
    assert!(acceptance_probability(10.0, 0.1) > 0.999);
    assert!(acceptance_probability(-10.0, 0.1) < 1e-3);
    assert_eq!(acceptance_probability(f64::NAN, 1.0), 0.0);
}

#[test]
fn proposals_are_clipped_and_cool() {
    let cfg = SAConfig::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ones = ScenarioTuple::from_coeffs(5, 3, vec![1.0; 15 * 4]).unwrap();
    let next = sa_propose(&ones, cfg.t0, &cfg, &mut rng);
    assert!(next.is_valid());
    assert!(next.coeffs().iter().all(|c| (-1.0..=1.0).contains(c)));
    let zero = ScenarioTuple::zeros(4, 5, 3);
    let cold = sa_propose(&zero, 1e-9, &cfg, &mut rng);
    assert!(cold.coeffs().iter().all(|c| c.abs() < 1e-6));
}

#[test]
fn acceptance_rate_at_start_temperature() {
    let spec = ProblemSpec::example1();
    // decay close to 1 keeps the temperature near T0 for all 100 proposals
    let cfg = SAConfig {
        decay: 0.999_999,
        ..SAConfig::desk().with_iters(100)
    };
    let res = exact_solve(&spec, &[0.5, 0.5], &cfg).unwrap();
    let rate = res.acceptance_rate();
    assert!(rate > 0.2 && rate < 0.9, "acceptance rate {rate}");
}

#[test]
fn config_checks() {
    assert!(SAConfig::preset("desk").is_ok());
    assert_eq!(SAConfig::preset("full").unwrap().iters, 1500);
    assert!(SAConfig::preset("fast").is_err());
    assert!(SAConfig {
        decay: 1.0,
        ..SAConfig::desk()
    }
    .validate()
    .is_err());
    assert!(SAConfig {
        iters: 0,
        ..SAConfig::desk()
    }
    .validate()
    .is_err());
}
