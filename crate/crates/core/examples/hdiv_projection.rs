//! The local H(div) projector applied to `(sin y, 0, 0)`; its divergence is
//! the elementwise L2 projection of `div w = 0`.

use commuteproj::hdiv_proj::{phd_apply, SolveOpts, Variant};
use commuteproj::mesh::{BoundaryKind, TetMesh};
use commuteproj::polyspace::SpaceCache;
use commuteproj::source::AnalyticVector;
use std::sync::Arc;

fn main() -> commuteproj::Result<()> {
    let mesh = TetMesh::cube_kuhn(1, BoundaryKind::Dirichlet)?;
    let cache = SpaceCache::new();
    let w = AnalyticVector::solenoidal(Arc::new(|x: [f64; 3]| [x[1].sin(), 0.0, 0.0]), 12);
    for p in 0..3 {
        let pr = phd_apply(&mesh, &cache, &w, p, Variant::Canonical, &SolveOpts::default())?;
        println!("p = {p}: commuting residual {:.2e}, normal jump {:.2e}", pr.diag.commute_residual, pr.diag.normal_jump);
    }
    Ok(())
}
