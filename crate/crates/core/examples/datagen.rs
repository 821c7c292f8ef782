//! Builds the Example 1 desk dataset (31×31 grid, 200 annealing iterations).
//!
//! ```bash
//! cargo run --release --example datagen -- /tmp/ex1_desk.csv
//! ```

use std::time::Instant;

use robosynth::datagen::{default_workers, generate_grid};
use robosynth::msa::SAConfig;
use robosynth::problem::ProblemSpec;

fn main() -> robosynth::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "ex1_desk.csv".into());
    let spec = ProblemSpec::example1();
    let start = Instant::now();
    let ds = generate_grid(&spec, 0.1, &SAConfig::desk(), default_workers())?;
    println!(
        "{} states, {} infeasible ({:.2}%), {} stalled, {:.1?}",
        ds.len(),
        ds.n_infeasible(),
        100.0 * ds.infeasible_fraction(),
        ds.meta.stalled.len(),
        start.elapsed()
    );
    ds.save(&out)?;
    println!("wrote {out}");
    Ok(())
}
