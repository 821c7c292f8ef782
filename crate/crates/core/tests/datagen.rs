use nalgebra::{DMatrix, DVector};

use robosynth::datagen::{
    generate, grid_states, random_states, sidecar_path, Dataset, DatasetMeta, Record, Sampling,
};
use robosynth::error::Error;
use robosynth::msa::SAConfig;
use robosynth::problem::{Polytope, ProblemSpec};

mod common;

fn record(x: Vec<f64>, u: Option<f64>) -> Record {
    Record {
        feasible: u.is_some(),
        value: u.map(|v| v * v + 0.25),
        u0: u.map(|v| vec![v]),
        x,
        seed: 7,
        iters_used: 200,
        stalled: false,
    }
}

fn meta(spec: &ProblemSpec, sampling: Sampling) -> DatasetMeta {
    DatasetMeta {
        spec_hash: spec.hash(),
        d: spec.dims().d,
        m: spec.dims().m,
        sampling,
        sa: SAConfig::desk(),
        stalled: Vec::new(),
        created_by: "test".into(),
    }
}

#[test]
fn full_resolution_grid_size() {
    let spec = ProblemSpec::example1();
    assert_eq!(grid_states(spec.state_set(), 0.02).unwrap().len(), 22801);
    assert_eq!(grid_states(spec.state_set(), 0.1).unwrap().len(), 961);
}

#[test]
fn unit_interval_grid() {
    let got = grid_states(&Polytope::cube(1, 1.0), 1.0).unwrap();
    assert_eq!(got, vec![vec![-1.0], vec![0.0], vec![1.0]]);
}

#[test]
fn grid_respects_general_polytopes() {
    let h = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0, 1.0]);
    let k = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 0.0]);
    let set = Polytope::new(h, k).unwrap();
    let got = grid_states(&set, 1.0).unwrap();
    let mut brute = Vec::new();
    for a in -1..=1 {
        for b in -1..=1 {
            if a + b <= 0 {
                brute.push(vec![a as f64, b as f64]);
            }
        }
    }
    assert_eq!(got.len(), 6);
    assert_eq!(got, brute);
}

#[test]
fn random_states_lie_in_the_set() {
    let set = Polytope::cube(2, 1.5);
    let xs = random_states(&set, 50, 3).unwrap();
    assert_eq!(xs.len(), 50);
    assert!(xs.iter().all(|x| set.contains(x, 0.0)));
    assert_eq!(xs, random_states(&set, 50, 3).unwrap());
}

#[test]
fn undisturbed_origin_record() {
    let spec = common::example1_undisturbed();
    let ds = generate(&spec, &[vec![0.0, 0.0]], &SAConfig::desk().with_iters(3), 1).unwrap();
    assert_eq!(ds.len(), 1);
    let r = &ds.records[0];
    assert!(r.feasible);
    assert!(r.value.unwrap().abs() < 1e-7);
}

#[test]
fn worker_count_does_not_change_results() {
    let spec = ProblemSpec::example1();
    let states = vec![
        vec![0.5, 0.5],
        vec![-0.3, 0.2],
        vec![1.5, 1.5],
        vec![0.0, -1.0],
        vec![-1.2, 0.4],
        vec![0.9, -0.1],
    ];
    let cfg = SAConfig::desk().with_iters(8).with_seed(5);
    let one = generate(&spec, &states, &cfg, 1).unwrap();
    let eight = generate(&spec, &states, &cfg, 8).unwrap();
    assert_eq!(one, eight);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    one.save(&a).unwrap();
    eight.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn duplicate_states_are_rejected() {
    let spec = ProblemSpec::example1();
    let states = vec![vec![0.1, 0.1], vec![0.1, 0.1]];
    assert!(generate(&spec, &states, &SAConfig::desk().with_iters(1), 1).is_err());
}

#[test]
fn save_load_identity() {
    let spec = ProblemSpec::example1();
    let ds = Dataset {
        records: vec![
            record(vec![0.1, -0.2], Some(0.3)),
            record(vec![1.5, 1.5], None),
            record(vec![-0.7, 0.123456789012345], Some(-1.97)),
        ],
        meta: meta(&spec, Sampling::List { count: 3 }),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.csv");
    ds.save(&path).unwrap();
    assert!(sidecar_path(&path).exists());
    assert_eq!(Dataset::load(&path).unwrap(), ds);
}

#[test]
fn wrong_action_width_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.csv");
    let spec = ProblemSpec::example1();
    let ds = Dataset {
        records: vec![
            record(vec![0.1, 0.2], Some(0.3)),
            record(vec![0.2, 0.2], Some(0.4)),
        ],
        meta: meta(&spec, Sampling::List { count: 2 }),
    };
    ds.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // second record gains an extra action column
    lines[2] = lines[2].replacen(",0.4,", ",0.4,0.5,", 1);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    match Dataset::load(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn spec_hash_mismatch_is_refused() {
    let ds = Dataset {
        records: vec![record(vec![0.0, 0.0], Some(0.0))],
        meta: meta(&ProblemSpec::example1(), Sampling::List { count: 1 }),
    };
    assert!(ds.check_spec(&ProblemSpec::example1()).is_ok());
    assert!(matches!(
        ds.check_spec(&common::example1_undisturbed()),
        Err(Error::HashMismatch { .. })
    ));
}

#[test]
fn full_resolution_file_round_trip() {
    let spec = ProblemSpec::example1();
    let states = grid_states(spec.state_set(), 0.02).unwrap();
    let records = states
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let u = (i % 31 != 0).then(|| (x[0] - x[1]).clamp(-1.97, 1.97));
            record(x, u)
        })
        .collect();
    let ds = Dataset {
        records,
        meta: meta(&spec, Sampling::Grid { h: 0.02 }),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.csv");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.len(), 22801);
    assert_eq!(back.meta.spec_hash, spec.hash());
    assert_eq!(back, ds);
}
