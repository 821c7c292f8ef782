//! Width/depth pairs certified by the ReLU approximation bound.

use robosynth::nnfs::{depth_floor, size_for_depth, size_for_width, width_floor};

fn main() -> robosynth::error::Result<()> {
    let (d, l0) = (2, 2.5);
    println!(
        "d = {d}: width floor {:.1}, depth floor {}",
        width_floor(d),
        depth_floor(d)
    );
    println!(
        "{:>8} {:>8} {:>16} {:>12}",
        "eps", "width", "depth", "bound"
    );
    for eps in [0.1, 0.05, 0.03] {
        for w in [64u64, 256, 1024] {
            let s = size_for_width(d, l0, eps, w)?;
            println!("{eps:>8} {w:>8} {:>16} {:>12.6}", s.depth, s.bound());
        }
    }
    let s = size_for_depth(d, l0, 0.1, 1_000)?;
    match s.width {
        Some(w) => println!("depth 1000 needs width {w}"),
        None => println!("depth 1000 needs width e^{:.1}", s.ln_width),
    }
    Ok(())
}
