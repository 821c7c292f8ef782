//! Solves the finite-scenario inner problem for the nominal scenario tuple.

use robosynth::conic::SolverSettings;
use robosynth::problem::ProblemSpec;
use robosynth::sip::{ScenarioTuple, Transcription};

fn main() -> robosynth::error::Result<()> {
    let spec = ProblemSpec::example1();
    let tr = Transcription::new(&spec);
    let x0 = [0.5, 0.5];
    let tuple = ScenarioTuple::nominal(&spec);
    let sol = tr.solve_inner(&x0, &tuple, &SolverSettings::default())?;
    println!(
        "{} scenarios, value {:.6}, {} IPM iterations",
        tuple.n_scenarios(),
        sol.value,
        sol.iterations
    );
    if let Some(policy) = &sol.policy {
        let eta: Vec<f64> = (0..spec.horizon()).map(|t| policy.eta(t)[0]).collect();
        println!("eta = {eta:.4?}");
        println!("causal: {}", policy.is_causal());
    }
    Ok(())
}
