//! Closed loop under a learned policy next to the online receding-horizon controller.

use robosynth::cloop::{
    iss_proxy, simulate, simulate_rhc, value_descent_slacks, DisturbanceSampler,
};
use robosynth::datagen::{default_workers, generate_grid, Dataset};
use robosynth::msa::SAConfig;
use robosynth::problem::ProblemSpec;
use robosynth::quifs::{QuifsConfig, QuifsModel};

fn main() -> robosynth::error::Result<()> {
    let spec = ProblemSpec::example1();
    let sa = SAConfig::desk().with_iters(30);
    let ds = match std::env::args().nth(1) {
        Some(p) => Dataset::load(p)?,
        None => generate_grid(&spec, 0.25, &sa, default_workers())?,
    };
    let policy = QuifsModel::fit(&ds, &QuifsConfig::new(spec.eps()))?;

    let x0 = [1.0, 1.0];
    let learned = simulate(&spec, &policy, &x0, 30, DisturbanceSampler::Uniform, 7)?;
    let online = simulate_rhc(&spec, &sa, &x0, 30, DisturbanceSampler::Uniform, 7)?;
    println!("{:>3} {:>18} {:>18}", "t", "learned", "online");
    for t in (0..=30).step_by(3) {
        let show = |s: Option<&Vec<f64>>| {
            s.map_or("-".into(), |x| format!("({:+.3}, {:+.3})", x[0], x[1]))
        };
        println!(
            "{t:>3} {:>18} {:>18}",
            show(learned.states.get(t)),
            show(online.states.get(t))
        );
    }
    println!(
        "violations: learned {}, online {}",
        learned.violations.len(),
        online.violations.len()
    );
    if let Some(p) = iss_proxy(&learned, 0.3) {
        println!(
            "learned loop enters ‖x‖∞ <= 0.3 at t = {}, max norm afterwards {:.3}",
            p.entry_time, p.gamma_hat
        );
    }
    let slacks = value_descent_slacks(&spec, &online);
    let worst = slacks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("largest value-descent slack along the online loop: {worst:.4}");
    learned.write_csv("closed_loop_trace.csv")?;
    Ok(())
}
