//! Conforming `ND_q` / `RT_q` spaces over a set of elements (a vertex patch
//! or the whole mesh), assembled from the element dual bases by identifying
//! shared canonical functionals.

use super::basis::{DofKey, ElemSpace, SpaceCache};
use super::poly::VPoly;
use super::Family;
use crate::mesh::{FaceTag, TetMesh, VertexPatch, LOCAL_EDGES};
use faer::Mat;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

/// Which boundary traces are forced to vanish.
#[derive(Clone, Copy, Debug)]
pub enum Essential<'a> {
    /// No essential condition.
    None,
    /// Zero trace on the patch boundary except the Dirichlet faces at the vertex.
    Patch(&'a VertexPatch),
    /// Zero trace on Neumann boundary faces.
    Neumann,
}

#[derive(Clone, Debug)]
pub struct ConfSpace {
    pub family: Family,
    pub q: usize,
    pub elems: Vec<usize>,
    pub spaces: Vec<Arc<ElemSpace>>,
    /// Local dual-basis index to global unknown (`None` when essential).
    pub map: Vec<Vec<Option<usize>>>,
    pub keys: Vec<DofKey>,
    pub ndof: usize,
}

impl ConfSpace {
    pub fn new(mesh: &TetMesh, cache: &SpaceCache, elems: &[usize], family: Family, q: usize, ess: Essential) -> Self {
        assert!(matches!(family, Family::Nd | Family::Rt), "conforming spaces are ND or RT");
        let ess_faces: HashSet<usize> = match ess {
            Essential::None => HashSet::new(),
            Essential::Patch(p) => p.boundary_faces.iter().copied().filter(|f| !p.gamma_d().contains(f)).collect(),
            Essential::Neumann => elems
                .iter()
                .flat_map(|&t| mesh.elems[t].faces)
                .filter(|&f| mesh.faces[f].tag == FaceTag::Neumann)
                .collect(),
        };
        let mut ess_edges: HashSet<usize> = HashSet::new();
        for &t in elems {
            let el = &mesh.elems[t];
            for i in 0..4 {
                if ess_faces.contains(&el.faces[i]) {
                    for (j, le) in LOCAL_EDGES.iter().enumerate() {
                        if le[0] != i && le[1] != i {
                            ess_edges.insert(el.edges[j]);
                        }
                    }
                }
            }
        }
        let spaces: Vec<Arc<ElemSpace>> = elems.iter().map(|&t| cache.get(mesh, t, family, q)).collect();
        let mut index: HashMap<DofKey, usize> = HashMap::new();
        let mut keys = Vec::new();
        let mut map = Vec::with_capacity(elems.len());
        for sp in &spaces {
            let m = sp
                .keys
                .iter()
                .map(|k| {
                    let essential = match k {
                        DofKey::Face(f, _) => ess_faces.contains(f),
                        DofKey::Edge(e, _) => ess_edges.contains(e),
                        DofKey::Cell(..) => false,
                    };
                    if essential {
                        None
                    } else {
                        Some(*index.entry(*k).or_insert_with(|| {
                            keys.push(*k);
                            keys.len() - 1
                        }))
                    }
                })
                .collect();
            map.push(m);
        }
        ConfSpace { family, q, elems: elems.to_vec(), spaces, map, ndof: keys.len(), keys }
    }

    pub fn deg(&self) -> usize {
        self.spaces[0].deg
    }

    /// Dense mass matrix.
    pub fn mass(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.ndof, self.ndof);
        for (sp, map) in self.spaces.iter().zip(&self.map) {
            for (i, gi) in map.iter().enumerate() {
                let Some(gi) = gi else { continue };
                for (j, gj) in map.iter().enumerate() {
                    if let Some(gj) = gj {
                        m[(*gi, *gj)] += sp.mass_dual[(i, j)];
                    }
                }
            }
        }
        m
    }

    /// Global load vector from per-element monomial moments at `deg()`.
    pub fn loads(&self, moments: &[Vec<f64>]) -> Vec<f64> {
        let mut b = vec![0.0; self.ndof];
        for ((sp, map), mom) in self.spaces.iter().zip(&self.map).zip(moments) {
            let l = sp.loads_dual(mom);
            for (i, gi) in map.iter().enumerate() {
                if let Some(gi) = gi {
                    b[*gi] += l[i];
                }
            }
        }
        b
    }

    /// Scatter a per-element row block (rows x local dofs) into global columns.
    pub fn scatter_rows(&self, local: usize, block: &Mat<f64>, out: &mut Mat<f64>, row0: usize) {
        for (j, gj) in self.map[local].iter().enumerate() {
            if let Some(gj) = gj {
                for i in 0..block.nrows() {
                    out[(row0 + i, *gj)] += block[(i, j)];
                }
            }
        }
    }

    /// Local dual coefficients of element `local` from global coefficients.
    pub fn local_coeffs(&self, local: usize, x: &[f64]) -> Vec<f64> {
        self.map[local].iter().map(|g| g.map_or(0.0, |g| x[g])).collect()
    }

    /// Broken representation, one polynomial per element of `elems`.
    pub fn field(&self, x: &[f64]) -> Vec<VPoly> {
        (0..self.elems.len()).map(|l| self.spaces[l].field_dual(&self.local_coeffs(l, x))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;
    use crate::polyspace::space_dimension;

    #[test]
    fn global_counts() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let all: Vec<usize> = (0..m.n_elems()).collect();
        let (ne, nf, nt) = (m.edges.len(), m.faces.len(), m.n_elems());
        for q in 0..3 {
            let nd = ConfSpace::new(&m, &c, &all, Family::Nd, q, Essential::None);
            let expect = ne * (q + 1) + nf * q * (q + 1) + nt * 3 * (q.saturating_sub(1)) * q * (q + 1) / 6;
            assert_eq!(nd.ndof, expect);
            let rt = ConfSpace::new(&m, &c, &all, Family::Rt, q, Essential::None);
            assert_eq!(rt.ndof, nf * (q + 1) * (q + 2) / 2 + nt * (space_dimension(Family::Rt, q) - 4 * (q + 1) * (q + 2) / 2));
        }
    }

    #[test]
    fn neumann_removes_boundary() {
        let m = TetMesh::reference_tet(BoundaryKind::Neumann).unwrap();
        let c = SpaceCache::new();
        let rt = ConfSpace::new(&m, &c, &[0], Family::Rt, 1, Essential::Neumann);
        assert_eq!(rt.ndof, 3);
        let nd = ConfSpace::new(&m, &c, &[0], Family::Nd, 0, Essential::Neumann);
        assert_eq!(nd.ndof, 0);
    }

    #[test]
    fn assembled_fields_are_conforming() {
        use crate::traces::{global_jump, TraceKind};
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Neumann).unwrap();
        let c = SpaceCache::new();
        let all: Vec<usize> = (0..m.n_elems()).collect();
        for q in 0..3 {
            for (fam, kind) in [(Family::Nd, TraceKind::Tangential), (Family::Rt, TraceKind::Normal)] {
                let cs = ConfSpace::new(&m, &c, &all, fam, q, Essential::Neumann);
                let x: Vec<f64> = (0..cs.ndof).map(|i| ((i * 7919 % 113) as f64 / 56.0) - 1.0).collect();
                let j = global_jump(&m, kind, &cs.field(&x));
                assert!(j < 1e-10, "{fam:?} q={q} jump {j}");
            }
        }
    }
}
