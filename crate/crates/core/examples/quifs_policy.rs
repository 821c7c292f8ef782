//! Quasi-interpolation policy fitted to a grid dataset.
//!
//! ```bash
//! cargo run --release --example quifs_policy -- [dataset.csv]
//! ```
//!
//! Without an argument a coarse 13×13 grid is labelled first.

use robosynth::datagen::{default_workers, generate_grid, Dataset};
use robosynth::msa::SAConfig;
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
    let model = QuifsModel::fit(&ds, &QuifsConfig::new(spec.eps()))?;
    println!(
        "grid h {}, shape {}, radius {}, L0 {:.3}",
        model.h, model.shape, model.r0, model.l0
    );
    println!(
        "error bound {:.4} (Lipschitz term {:.4}); grid step needed for eps {}: {:.4}",
        model.error_bound(),
        model.lipschitz_term(),
        model.eps,
        model.h_required
    );
    for x in [[0.0, 0.0], [0.5, 0.5], [-0.8, 0.3]] {
        println!(
            "u({x:?}) = {:.4?}, Σψ = {:.6}",
            model.eval(&x)?,
            model.partition_of_unity(&x)?
        );
    }
    Ok(())
}
