//! Face quadrature of normal and tangential trace jumps of broken fields.

use crate::mesh::{cross, dot, FaceTag, TetMesh, VertexPatch};
use crate::polyspace::quad::tri_rule;
use crate::polyspace::VPoly;
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    /// `u . n`
    Normal,
    /// `u x n`
    Tangential,
}

/// Broken field given on a subset of the mesh elements.
#[derive(Clone, Debug, Default)]
pub struct PatchField {
    pub elems: Vec<usize>,
    pub polys: Vec<VPoly>,
}

impl PatchField {
    pub fn new(elems: Vec<usize>, polys: Vec<VPoly>) -> Self {
        assert_eq!(elems.len(), polys.len());
        PatchField { elems, polys }
    }

    pub fn get(&self, e: usize) -> Option<&VPoly> {
        self.elems.iter().position(|&t| t == e).map(|i| &self.polys[i])
    }

    pub fn norm_sq(&self, mesh: &TetMesh) -> f64 {
        self.elems.iter().zip(&self.polys).map(|(&e, p)| p.norm_sq(mesh.elems[e].vol)).sum()
    }
}

/// `||[trace]||_F^2`; a missing side counts as zero.
pub fn face_jump_sq<'a>(mesh: &TetMesh, f: usize, kind: TraceKind, get: &dyn Fn(usize) -> Option<&'a VPoly>) -> f64 {
    let face = &mesh.faces[f];
    let sides: Vec<(usize, &VPoly)> = face.elems.iter().filter_map(|&t| get(t).map(|u| (t, u))).collect();
    if sides.is_empty() {
        return 0.0;
    }
    let deg = sides.iter().map(|s| s.1.deg).max().unwrap();
    let rule = tri_rule(2 * deg).expect("face rule");
    let locs: Vec<[usize; 3]> = sides.iter().map(|(t, _)| face.verts.map(|v| mesh.elems[*t].local_index(v).unwrap())).collect();
    let n = face.normal;
    let mut s = 0.0;
    for (pt, w) in rule.points.iter().zip(&rule.weights) {
        let mut jump = [0.0; 3];
        for (side, ((_, u), loc)) in sides.iter().zip(&locs).enumerate() {
            let mut lam = [0.0; 4];
            for i in 0..3 {
                lam[loc[i]] = pt[i];
            }
            let val = u.eval(&lam);
            let sign = if side == 0 { 1.0 } else { -1.0 };
            match kind {
                TraceKind::Normal => jump[0] += sign * dot(val, n),
                TraceKind::Tangential => {
                    let t = cross(val, n);
                    for k in 0..3 {
                        jump[k] += sign * t[k];
                    }
                }
            }
        }
        s += w * dot(jump, jump);
    }
    s * face.area
}

/// Root of the summed squared jumps over the faces that must be continuous
/// (interior) or vanish (Neumann) for a field in `H_{0,N}`.
pub fn global_jump(mesh: &TetMesh, kind: TraceKind, polys: &[VPoly]) -> f64 {
    let get = |e: usize| polys.get(e);
    (0..mesh.faces.len())
        .filter(|&f| mesh.faces[f].tag != FaceTag::Dirichlet)
        .map(|f| face_jump_sq(mesh, f, kind, &get))
        .sum::<f64>()
        .sqrt()
}

/// Same for a patch field in `H_a`: interior patch faces and the patch
/// boundary outside the Dirichlet faces at the vertex.
pub fn patch_jump(mesh: &TetMesh, patch: &VertexPatch, kind: TraceKind, field: &PatchField) -> f64 {
    let get = |e: usize| field.get(e);
    let mut faces: HashMap<usize, ()> = HashMap::new();
    for &t in &patch.elems {
        for f in mesh.elems[t].faces {
            faces.insert(f, ());
        }
    }
    let gd = patch.gamma_d();
    let mut fs: Vec<usize> = faces.into_keys().filter(|f| !gd.contains(f)).collect();
    fs.sort_unstable();
    fs.into_iter().map(|f| face_jump_sq(mesh, f, kind, &get)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;

    #[test]
    fn constant_field_is_continuous() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let polys = vec![VPoly::constant([1.0, 2.0, 3.0]); m.n_elems()];
        assert!(global_jump(&m, TraceKind::Normal, &polys) < 1e-14);
        assert!(global_jump(&m, TraceKind::Tangential, &polys) < 1e-14);
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Neumann).unwrap();
        // nonzero on the Neumann boundary: six unit faces, |u.n|^2 = 1, 4, 9 twice each
        let j = global_jump(&m, TraceKind::Normal, &polys);
        assert!((j * j - 28.0).abs() < 1e-12);
    }
}
