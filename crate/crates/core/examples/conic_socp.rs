//! Projects a point onto a half-plane with the conic interior-point solver.
//!
//! `min t  s.t.  ‖z - (3, 4)‖² <= t,  z₁ + z₂ <= 1`

use nalgebra::{DMatrix, DVector};
use robosynth::conic::{solve, ConicProblem, SolverSettings};

fn main() -> robosynth::error::Result<()> {
    // variables (z₁, z₂, t)
    let mut lp = ConicProblem::new(3, vec![0.0, 0.0, 1.0]);
    lp.add_linear(&[1.0, 1.0, 0.0], 1.0);
    let factor = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    lp.add_quadratic(factor, DVector::from_vec(vec![-3.0, -4.0]), 2);

    let sol = solve(&lp, &SolverSettings::default())?;
    println!(
        "status {:?} after {} iterations",
        sol.status, sol.iterations
    );
    println!(
        "z = ({:.6}, {:.6}), squared distance {:.6}",
        sol.z[0], sol.z[1], sol.obj
    );
    println!("closed form: z = (0, 1), squared distance 18");
    Ok(())
}
