//! Divergence-free projection by the KKT engine against the curl of the
//! three-field mixed solution.

use commuteproj::globalbest::{mixed_pi_div, three_field};
use commuteproj::mesh::{BoundaryKind, TetMesh};
use commuteproj::polyspace::{curl, SpaceCache};
use commuteproj::source::AnalyticVector;
use std::sync::Arc;

fn main() -> commuteproj::Result<()> {
    let mesh = TetMesh::cube_kuhn(0, BoundaryKind::Neumann)?;
    let cache = SpaceCache::new();
    let v = AnalyticVector::new(Arc::new(|x: [f64; 3]| [x[0] * x[1] * x[2], x[0] * x[0], 0.0]), None, 10);
    let w = AnalyticVector::solenoidal(Arc::new(|x: [f64; 3]| [0.0, x[0] * x[1], 2.0 * x[0] - x[0] * x[2]]), 10);
    let pi = mixed_pi_div(&mesh, &cache, &w, 1)?;
    let tf = three_field(&mesh, &cache, &v, &w, 1)?;
    let mut d = 0.0;
    for ((u, t), el) in tf.v_h.iter().zip(&pi).zip(&mesh.elems) {
        d += curl(el, u).sub(t).norm_sq(el.vol);
    }
    println!("||curl v_h - Pi w|| = {:.2e}", d.sqrt());
    Ok(())
}
