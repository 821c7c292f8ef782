use std::path::Path;
use std::process::{Command, Output};

use robosynth::datagen::{Dataset, DatasetMeta, Record, Sampling};
use robosynth::msa::SAConfig;
use robosynth::problem::ProblemSpec;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robosynth"))
        .current_dir(dir)
        .env_remove("ROBOSYNTH_WORKERS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn spec_validate_reports_hash_and_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["spec", "validate", "example1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains(&ProblemSpec::example1().hash()));
    assert!(text.contains("56"));
    let spec_file = dir.path().join("spec.json");
    std::fs::write(&spec_file, ProblemSpec::example1().to_json_string()).unwrap();
    let out = run(dir.path(), &["spec", "validate", "spec.json"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains(&ProblemSpec::example1().hash()));
    std::fs::write(&spec_file, "{\"A\": 3}").unwrap();
    assert_eq!(
        code(&run(dir.path(), &["spec", "validate", "spec.json"])),
        1
    );
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(
        dir.path(),
        &[
            "solve", "--spec", "example1", "--x0", "-0.3,0.2", "--iters", "3",
        ],
    );
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(dir.path().join("solve.manifest.json").exists());
    let infeasible = run(
        dir.path(),
        &[
            "solve", "--spec", "example1", "--x0", "1.5,1.5", "--iters", "3",
        ],
    );
    assert_eq!(code(&infeasible), 2);
    let bad = run(dir.path(), &["solve", "--spec", "example1", "--x0", "abc"]);
    assert_eq!(code(&bad), 1);
    let wrong_dim = run(
        dir.path(),
        &["solve", "--spec", "example1", "--x0", "0.1", "--iters", "3"],
    );
    assert_eq!(code(&wrong_dim), 1);
}

#[test]
fn help_and_usage() {
    let dir = tempfile::tempdir().unwrap();
    let help = run(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    for sub in [
        "spec", "solve", "datagen", "learn", "train", "policy", "simulate", "roa", "validate",
    ] {
        assert!(stdout(&help).contains(sub), "help lists {sub}");
    }
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
}

#[test]
fn missing_upstream_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "learn",
            "quifs",
            "--spec",
            "example1",
            "--data",
            "nothing.csv",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nothing.csv"));
    assert!(stderr(&out).contains("datagen"));
    let out = run(
        dir.path(),
        &["policy", "eval", "--policy", "gone.json", "--x", "0,0"],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gone.json"));
}

#[test]
fn dataset_without_feasible_records_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ProblemSpec::example1();
    let ds = Dataset {
        records: vec![Record {
            x: vec![1.5, 1.5],
            u0: None,
            value: None,
            feasible: false,
            seed: 0,
            iters_used: 1,
            stalled: false,
        }],
        meta: DatasetMeta {
            spec_hash: spec.hash(),
            d: 2,
            m: 1,
            sampling: Sampling::Grid { h: 1.5 },
            sa: SAConfig::desk(),
            stalled: Vec::new(),
            created_by: "test".into(),
        },
    };
    ds.save(dir.path().join("empty.csv")).unwrap();
    let out = run(
        dir.path(),
        &[
            "learn",
            "quifs",
            "--spec",
            "example1",
            "--data",
            "empty.csv",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("missing dependency"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), r#"{"sa": {"itres": 4}}"#).unwrap();
    let out = run(
        dir.path(),
        &[
            "--config", "run.json", "solve", "--spec", "example1", "--x0", "0,0",
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn pipeline_from_data_to_rollout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = run(
        p,
        &[
            "datagen", "--spec", "example1", "--h", "0.5", "--iters", "3", "--out", "d.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(p.join("d.meta.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("datagen.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["spec_hash"], ProblemSpec::example1().hash());
    assert_eq!(manifest["outputs"][0]["path"], "d.csv");

    let out = run(
        p,
        &[
            "learn", "quifs", "--spec", "example1", "--data", "d.csv", "--probes", "0", "--out",
            "q.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(p, &["policy", "eval", "--policy", "q.json", "--x", "0,0"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).trim().parse::<f64>().is_ok());
    let out = run(
        p,
        &[
            "policy", "eval", "--policy", "q.json", "--x", "0,0", "--spec", "example2",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("hash"));

    let out = run(
        p,
        &[
            "simulate",
            "--spec",
            "example1",
            "--policy",
            "q.json",
            "--x0",
            "0,0",
            "--steps",
            "4",
            "--sampler",
            "zero",
            "--out",
            "tr.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read_to_string(p.join("tr.csv"))
            .unwrap()
            .lines()
            .count(),
        6
    );

    let out = run(
        p,
        &[
            "roa", "--spec", "example1", "--data", "d.csv", "--out", "roa.csv",
        ],
    );
    assert!(p.join("roa.csv").exists(), "{}", stderr(&out));
    assert_ne!(code(&out), 2);

    let out = run(
        p,
        &[
            "train", "nn", "--spec", "example1", "--data", "d.csv", "--width", "8", "--hidden",
            "2", "--epochs", "5", "--probes", "0", "--out", "nn.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(
        p,
        &[
            "policy", "eval", "--model", "nn.json", "--x", "0.1,-0.1", "--spec", "example1",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn worker_count_from_the_environment_does_not_change_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let name = format!("d{workers}.csv");
        let out = Command::new(env!("CARGO_BIN_EXE_robosynth"))
            .current_dir(dir.path())
            .env("ROBOSYNTH_WORKERS", workers)
            .args([
                "datagen", "--spec", "example1", "--h", "0.75", "--iters", "3", "--out", &name,
            ])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        outputs.push(std::fs::read(dir.path().join(&name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
