//! The constrained least-squares engine on a small rank-deficient problem.

use commuteproj::cls::{self, KktProblem};
use faer::{mat, Mat};

fn main() -> commuteproj::Result<()> {
    let mass = Mat::<f64>::identity(3, 3);
    // the second row repeats the first
    let a = mat![[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]];
    let prob = KktProblem::new(mass, vec![1.0, 0.0, 2.0], a, vec![1.0, 2.0]).with_context("example");
    let sol = cls::solve(&prob)?;
    println!("x = {:?}", sol.x);
    println!("multipliers = {:?}", sol.multipliers);
    println!("rank {}, nullspace dim {}", sol.diag.rank, sol.diag.nullspace_dim);
    Ok(())
}
