//! Probabilistic validation of a learned policy with a Hoeffding margin.

use robosynth::cloop::{sample_initial_states, validate, ValidationConfig};
use robosynth::datagen::{default_workers, generate_grid, Dataset};
use robosynth::msa::SAConfig;
use robosynth::policy::ConstantPolicy;
use robosynth::problem::ProblemSpec;
use robosynth::quifs::{QuifsConfig, QuifsModel};

fn main() -> robosynth::error::Result<()> {
    let spec = ProblemSpec::example1();
    let ds = match std::env::args().nth(1) {
        Some(p) => Dataset::load(p)?,
        None => generate_grid(
            &spec,
            0.25,
            &SAConfig::desk().with_iters(30),
            default_workers(),
        )?,
    };
    let policy = QuifsModel::fit(&ds, &QuifsConfig::new(spec.eps()))?;
    let states = sample_initial_states(&ds, 500, 1)?;
    let cfg = ValidationConfig::default();

    let rep = validate(&spec, &policy, &states, &cfg, default_workers())?;
    println!(
        "learned: mu = {:.4}, eps_h = {:.4}, pass {} ({} violating, {} coverage exits)",
        rep.mu_tilde, rep.eps_h, rep.pass, rep.violating, rep.coverage_exits
    );
    let rep = validate(
        &spec,
        &ConstantPolicy(vec![2.5]),
        &states,
        &cfg,
        default_workers(),
    )?;
    println!(
        "out-of-bounds constant: mu = {:.4}, pass {}",
        rep.mu_tilde, rep.pass
    );
    Ok(())
}
