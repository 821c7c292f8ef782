//! Trains a W = 64, L = 4 ReLU network on a dataset.
//!
//! ```bash
//! cargo run --release --example nn_train -- [dataset.csv]
//! ```

use robosynth::datagen::{default_workers, generate_grid, Dataset};
use robosynth::msa::SAConfig;
use robosynth::nnfs::{train, TrainConfig};
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
    let cfg = TrainConfig::desk();
    let res = train(&ds, &cfg)?;
    for (epoch, loss) in res.losses.iter().enumerate().step_by(cfg.epochs / 10) {
        println!("epoch {epoch:>5}  loss {loss:.3e}");
    }
    let worst = ds
        .feasible_records()
        .map(|r| (res.net.eval(&r.x)[0] - r.u0.as_ref().unwrap()[0]).abs())
        .fold(0.0, f64::max);
    println!(
        "{} parameters, max training error {worst:.4}",
        res.net.n_params()
    );
    Ok(())
}
