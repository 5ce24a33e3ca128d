//! Global best approximation against the sum of elementwise ones.

use commuteproj::globalbest::equivalence_report;
use commuteproj::hdiv_proj::SolveOpts;
use commuteproj::mesh::{BoundaryKind, TetMesh};
use commuteproj::polyspace::SpaceCache;
use commuteproj::source::AnalyticVector;
use std::sync::Arc;

fn main() -> commuteproj::Result<()> {
    let v = AnalyticVector::new(Arc::new(|x: [f64; 3]| [x[1].sin(), x[2].sin(), x[0].sin()]), None, 12);
    let w = AnalyticVector::solenoidal(Arc::new(|x: [f64; 3]| [-x[2].cos(), -x[0].cos(), -x[1].cos()]), 12);
    let mut mesh = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet)?;
    for level in 0..2 {
        let cache = SpaceCache::new();
        for p in 0..2 {
            let eq = equivalence_report(&mesh, &cache, &v, &w, p, &SolveOpts::default())?;
            println!(
                "level {level}, p = {p}: m2 = {:.3e}, local = {:.3e}, ratios {:.4} / {:.4}",
                eq.m2,
                eq.local.total(),
                eq.ratio_unconstrained,
                eq.ratio_constrained
            );
        }
        mesh = mesh.uniform_refine()?;
    }
    Ok(())
}
