//! Exact feasible region against the open-loop robust baseline.
//!
//! ```bash
//! cargo run --release --example region_of_attraction -- [dataset.csv]
//! ```

use robosynth::cloop::roa_from_dataset;
use robosynth::datagen::{default_workers, generate_grid, Dataset};
use robosynth::msa::SAConfig;
use robosynth::problem::ProblemSpec;

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
    let roa = roa_from_dataset(&spec, &ds, default_workers())?;
    println!("{} grid states", roa.states.len());
    println!("exact feasible    {}", roa.n_exact());
    println!("baseline feasible {}", roa.n_baseline());
    println!("baseline ⊆ exact: {}", roa.exact_dominates());
    // coarse picture, x₂ rows from top
    let side = (roa.states.len() as f64).sqrt().round() as usize;
    for row in (0..side).rev() {
        let line: String = (0..side)
            .map(
                |col| match (roa.exact[col * side + row], roa.baseline[col * side + row]) {
                    (true, true) => '#',
                    (true, false) => '+',
                    (false, true) => '!',
                    (false, false) => '.',
                },
            )
            .collect();
        println!("{line}");
    }
    Ok(())
}
