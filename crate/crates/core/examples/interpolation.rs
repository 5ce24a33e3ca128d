//! Canonical interpolation on the reference tetrahedron and the commuting
//! identity `curl I^ND u = I^RT curl u`.

use commuteproj::interp::{canonical_nd, canonical_rt};
use commuteproj::mesh::{BoundaryKind, TetMesh};
use commuteproj::polyspace::{curl, SPoly, SpaceCache, VPoly};

fn main() -> commuteproj::Result<()> {
    let mesh = TetMesh::reference_tet(BoundaryKind::Dirichlet)?;
    let cache = SpaceCache::new();
    let el = &mesh.elems[0];
    // barycentric lambda_1..3 are x, y, z on the reference element
    let (x, y) = (SPoly::lambda(1), SPoly::lambda(2));
    let u = VPoly::from_comps([y.mul(&y), SPoly::zeros(2), x.mul(&y)]);
    for q in 0..3 {
        let lhs = curl(el, &canonical_nd(&mesh, &cache, 0, q, &u));
        let rhs = canonical_rt(&mesh, &cache, 0, q, &curl(el, &u));
        println!("q = {q}: ||curl I u - I curl u|| = {:.2e}", lhs.sub(&rhs).norm_sq(el.vol).sqrt());
    }
    Ok(())
}
