//! Exact robust value at one state by annealing over scenario tuples.
//!
//! ```bash
//! cargo run --release --example exact_solve -- 0.5 0.5 [iters]
//! ```

use robosynth::msa::{exact_solve, SAConfig};
use robosynth::problem::ProblemSpec;

fn main() -> robosynth::error::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let x0 = if args.len() >= 2 {
        vec![args[0], args[1]]
    } else {
        vec![0.5, 0.5]
    };
    let iters = args.get(2).map_or(200, |v| *v as usize);

    let spec = ProblemSpec::example1();
    let res = exact_solve(&spec, &x0, &SAConfig::desk().with_iters(iters))?;
    if !res.feasible {
        println!("{x0:?} is outside the feasible set");
        return Ok(());
    }
    let series = res.incumbent_series();
    for (i, v) in series.iter().enumerate().step_by((iters / 10).max(1)) {
        println!("iter {i:>5}  incumbent {v:.5}");
    }
    println!(
        "value {:.5}, u0 {:?}",
        res.value,
        res.first_control().unwrap()
    );
    println!(
        "acceptance rate {:.2}, {} inner solves",
        res.acceptance_rate(),
        res.inner_solves
    );
    Ok(())
}
