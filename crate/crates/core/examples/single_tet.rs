//! Constrained against unconstrained elementwise minima on the reference
//! tetrahedron, p = 0..6.

use commuteproj::harness::{run, ExperimentConfig};

fn main() -> commuteproj::Result<()> {
    let cfg = ExperimentConfig::for_command("single-tet");
    let rep = run("single-tet", &cfg)?;
    for r in rep.find("ratio") {
        println!("p = {}: ratio {:.4}", r.p, r.value);
    }
    let g = rep.find("ratio-growth").next().map_or(f64::NAN, |r| r.value);
    println!("growth {g:.3}");
    Ok(())
}
