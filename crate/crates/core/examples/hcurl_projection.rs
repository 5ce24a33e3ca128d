//! The local H(curl) projector: `curl Phi(v) = Phi^div(curl v)`.

use commuteproj::hcurl_proj::{phc_apply, HcurlOpts};
use commuteproj::hdiv_proj::Variant;
use commuteproj::mesh::{BoundaryKind, TetMesh};
use commuteproj::polyspace::SpaceCache;
use commuteproj::source::AnalyticVector;
use std::sync::Arc;

fn main() -> commuteproj::Result<()> {
    let mesh = TetMesh::cube_kuhn(1, BoundaryKind::Dirichlet)?;
    let cache = SpaceCache::new();
    let v = AnalyticVector::new(Arc::new(|x: [f64; 3]| [x[1].sin(), x[2].sin(), x[0].sin()]), None, 12);
    let w = AnalyticVector::solenoidal(Arc::new(|x: [f64; 3]| [-x[2].cos(), -x[0].cos(), -x[1].cos()]), 12);
    for p in 0..3 {
        let pr = phc_apply(&mesh, &cache, &v, &w, p, Variant::Canonical, &HcurlOpts::default())?;
        println!(
            "p = {p}: commuting residual {:.2e}, tangential jump {:.2e}, worst check {:.2e}",
            pr.diag.commute_residual,
            pr.diag.tangential_jump,
            pr.diag.checks.worst()
        );
    }
    Ok(())
}
