//! Build the Kuhn cube, refine it, and look at shape regularity and patches.

use commuteproj::mesh::{BoundaryKind, PatchClass, TetMesh};

fn main() -> commuteproj::Result<()> {
    let mut mesh = TetMesh::cube_kuhn(0, BoundaryKind::Mixed)?;
    for level in 0..3 {
        println!(
            "level {level}: {} tets, {} vertices, h = {:.4}, kappa = {:.4}",
            mesh.n_elems(),
            mesh.n_vertices(),
            mesh.max_h(),
            mesh.shape_regularity()
        );
        mesh = mesh.uniform_refine()?;
    }
    let mut counts = std::collections::BTreeMap::new();
    for a in mesh.active_vertices() {
        let patch = mesh.vertex_patch(a)?;
        let kind = match patch.class {
            PatchClass::Interior => "interior",
            PatchClass::Neumann => "Neumann boundary",
            PatchClass::Dirichlet { .. } => "Dirichlet boundary",
        };
        *counts.entry(kind).or_insert(0) += 1;
    }
    println!("patches: {counts:?}");
    Ok(())
}
