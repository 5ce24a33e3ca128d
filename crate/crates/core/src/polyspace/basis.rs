//! Element bases: an L2-orthonormal frame built from the generating sets of
//! each space, and for `ND_q` / `RT_q` the basis dual to the canonical
//! moment functionals (edge, face and cell moments with globally fixed
//! orientation).

use super::poly::{edge_weight, face_weight, gram, monomials, nmono, vol_weight, SPoly, VPoly};
use super::{curl, div, space_dimension, storage_degree, Family};
use crate::error::{Error, Result};
use crate::mesh::{cross, scale, sub, TetMesh, LOCAL_EDGES};
use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Identifies a canonical degree of freedom shared between elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DofKey {
    Edge(usize, usize),
    Face(usize, usize),
    Cell(usize, usize),
}

#[derive(Clone, Debug)]
pub struct ElemSpace {
    pub family: Family,
    pub q: usize,
    /// Storage degree of the barycentric forms.
    pub deg: usize,
    pub elem: usize,
    pub ncomp: usize,
    /// Orthonormal frame, one coefficient column per function.
    pub onb: Mat<f64>,
    pub mass_onb: Mat<f64>,
    /// Dual basis of the canonical functionals (empty for `P`, `Pvec`).
    pub dual: Mat<f64>,
    pub mass_dual: Mat<f64>,
    pub keys: Vec<DofKey>,
}

impl ElemSpace {
    pub fn dim(&self) -> usize {
        self.onb.ncols()
    }

    fn column_vpoly(m: &Mat<f64>, deg: usize, j: usize) -> VPoly {
        VPoly { deg, c: m.col_as_slice(j).to_vec() }
    }

    pub fn onb_fn(&self, j: usize) -> VPoly {
        debug_assert_eq!(self.ncomp, 3);
        Self::column_vpoly(&self.onb, self.deg, j)
    }

    pub fn dual_fn(&self, j: usize) -> VPoly {
        Self::column_vpoly(&self.dual, self.deg, j)
    }

    pub fn onb_scalar(&self, j: usize) -> SPoly {
        debug_assert_eq!(self.ncomp, 1);
        SPoly { deg: self.deg, c: self.onb.col_as_slice(j).to_vec() }
    }

    fn combine(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m.nrows()];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (ci, bi) in c.iter_mut().zip(m.col_as_slice(j)) {
                    *ci += xj * bi;
                }
            }
        }
        c
    }

    pub fn field_onb(&self, x: &[f64]) -> VPoly {
        VPoly { deg: self.deg, c: Self::combine(&self.onb, x) }
    }

    pub fn field_dual(&self, x: &[f64]) -> VPoly {
        VPoly { deg: self.deg, c: Self::combine(&self.dual, x) }
    }

    pub fn scalar_onb(&self, x: &[f64]) -> SPoly {
        SPoly { deg: self.deg, c: Self::combine(&self.onb, x) }
    }

    fn project(m: &Mat<f64>, mom: &[f64]) -> Vec<f64> {
        (0..m.ncols()).map(|j| m.col_as_slice(j).iter().zip(mom).map(|(a, b)| a * b).sum()).collect()
    }

    /// Inner products with the frame, from monomial moments at `self.deg`.
    pub fn loads_onb(&self, mom: &[f64]) -> Vec<f64> {
        Self::project(&self.onb, mom)
    }

    pub fn loads_dual(&self, mom: &[f64]) -> Vec<f64> {
        Self::project(&self.dual, mom)
    }
}

fn mass_of(b: &Mat<f64>, deg: usize, ncomp: usize, vol: f64) -> Mat<f64> {
    let g = gram(deg, deg);
    let n = nmono(deg);
    let m = b.ncols();
    let mut out = Mat::<f64>::zeros(m, m);
    for k in 0..ncomp {
        let bk = b.subrows(k * n, n);
        let gb = g.as_ref() * bk;
        out += bk.transpose() * &gb;
    }
    out * faer::Scale(vol)
}

fn orthonormalize(b: Mat<f64>, deg: usize, ncomp: usize, vol: f64) -> Result<Mat<f64>> {
    let mut b = b;
    for _ in 0..2 {
        let m = mass_of(&b, deg, ncomp, vol);
        let l = m.llt(faer::Side::Lower).map_err(|_| Error::NotSpd("generating set is rank deficient".into()))?;
        let mut bt = b.transpose().to_owned();
        l.L().solve_lower_triangular_in_place(bt.as_mut());
        b = bt.transpose().to_owned();
    }
    Ok(b)
}

fn unit_vec(deg: usize, k: usize, alpha: [u8; 4]) -> Vec<f64> {
    let n = nmono(deg);
    let mut c = vec![0.0; 3 * n];
    c[k * n + monomials(deg).index(alpha)] = 1.0;
    c
}

fn raise_vec(c: &[f64], deg: usize, to: usize) -> Vec<f64> {
    VPoly { deg, c: c.to_vec() }.raise_to(to).c
}

/// Generating set of the space, as coefficient columns at the storage degree.
fn generating_set(mesh: &TetMesh, elem: usize, family: Family, q: usize) -> Vec<Vec<f64>> {
    let el = &mesh.elems[elem];
    let d = storage_degree(family, q);
    let mut cols = Vec::new();
    match family {
        Family::P => {
            for i in 0..nmono(q) {
                let mut c = vec![0.0; nmono(q)];
                c[i] = 1.0;
                cols.push(c);
            }
        }
        Family::Pvec | Family::Nd | Family::Rt => {
            for k in 0..3 {
                for a in &monomials(q).alphas {
                    cols.push(raise_vec(&unit_vec(q, k, *a), q, d));
                }
            }
        }
    }
    if matches!(family, Family::Nd | Family::Rt) {
        let h = el.h;
        let dv: Vec<[f64; 3]> = (1..4).map(|i| scale(sub(el.x[i], el.x[0]), 1.0 / h)).collect();
        let md = monomials(d);
        let n = nmono(d);
        let homog: Vec<[u8; 4]> = monomials(q).alphas.iter().copied().filter(|a| a[0] == 0).collect();
        let push_field = |cols: &mut Vec<Vec<f64>>, beta: [u8; 4], vecs: &dyn Fn(usize) -> [f64; 3]| {
            let mut c = vec![0.0; 3 * n];
            for i in 1..4 {
                let mut g = beta;
                g[i] += 1;
                let idx = md.index(g);
                let v = vecs(i);
                for k in 0..3 {
                    c[k * n + idx] += v[k];
                }
            }
            cols.push(c);
        };
        match family {
            Family::Rt => {
                for beta in &homog {
                    push_field(&mut cols, *beta, &|i| dv[i - 1]);
                }
            }
            Family::Nd => {
                for j in 1..4 {
                    for beta in homog.iter().filter(|b| j < 3 || b[3] == 0) {
                        push_field(&mut cols, *beta, &|i| cross(dv[i - 1], dv[j - 1]));
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    cols
}

/// Face-local monomial exponents of total degree `q`.
fn face_monos(q: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for b2 in 0..=q {
        for b1 in 0..=q - b2 {
            out.push([q - b1 - b2, b1, b2]);
        }
    }
    out
}

/// Values of the canonical functionals of `family` (ND or RT, degree `q`)
/// applied to `u`, with their keys.
pub fn dof_values(mesh: &TetMesh, elem: usize, family: Family, q: usize, u: &VPoly) -> (Vec<f64>, Vec<DofKey>) {
    let el = &mesh.elems[elem];
    let mu = monomials(u.deg);
    let mut vals = Vec::new();
    let mut keys = Vec::new();
    // integral of (u . t) r over the face opposite local vertex i, divided by |F|
    let face_moment = |i: usize, t: [f64; 3], loc: [usize; 3], beta: [usize; 3]| -> f64 {
        let s = u.dot_const(&t);
        let mut acc = 0.0;
        for (ai, a) in mu.alphas.iter().enumerate() {
            if a[i] != 0 || s.c[ai] == 0.0 {
                continue;
            }
            acc += s.c[ai]
                * face_weight([a[loc[0]] as usize + beta[0], a[loc[1]] as usize + beta[1], a[loc[2]] as usize + beta[2]]);
        }
        acc
    };
    let cell_moments = |r: usize, vals: &mut Vec<f64>, keys: &mut Vec<DofKey>| {
        let mr = monomials(r);
        let mut k = 0;
        for comp in 0..3 {
            let uc = u.comp_slice(comp);
            for b in &mr.alphas {
                let mut acc = 0.0;
                for (ai, a) in mu.alphas.iter().enumerate() {
                    if uc[ai] != 0.0 {
                        acc += uc[ai] * vol_weight(super::poly::add_idx(*a, *b));
                    }
                }
                vals.push(acc);
                keys.push(DofKey::Cell(elem, k));
                k += 1;
            }
        }
    };
    let face_local = |i: usize| -> (usize, [usize; 3]) {
        let f = el.faces[i];
        let loc = mesh.faces[f].verts.map(|v| el.local_index(v).unwrap());
        (f, loc)
    };
    match family {
        Family::Rt => {
            for i in 0..4 {
                let (f, loc) = face_local(i);
                for (k, beta) in face_monos(q).into_iter().enumerate() {
                    vals.push(face_moment(i, mesh.faces[f].normal, loc, beta));
                    keys.push(DofKey::Face(f, k));
                }
            }
            if q >= 1 {
                cell_moments(q - 1, &mut vals, &mut keys);
            }
        }
        Family::Nd => {
            for (j, le) in LOCAL_EDGES.iter().enumerate() {
                let e = el.edges[j];
                let edge = &mesh.edges[e];
                let l0 = el.local_index(edge.verts[0]).unwrap();
                let l1 = el.local_index(edge.verts[1]).unwrap();
                let s = u.dot_const(&edge.tangent);
                for b0 in (0..=q).rev() {
                    let b1 = q - b0;
                    let mut acc = 0.0;
                    for (ai, a) in mu.alphas.iter().enumerate() {
                        let off = (0..4).filter(|&m| m != le[0] && m != le[1]).any(|m| a[m] != 0);
                        if off || s.c[ai] == 0.0 {
                            continue;
                        }
                        acc += s.c[ai] * edge_weight([a[l0] as usize + b0, a[l1] as usize + b1]);
                    }
                    vals.push(acc);
                    keys.push(DofKey::Edge(e, q - b0));
                }
            }
            if q >= 1 {
                for i in 0..4 {
                    let (f, loc) = face_local(i);
                    let face = &mesh.faces[f];
                    let t1 = {
                        let d = sub(mesh.nodes[face.verts[1]], mesh.nodes[face.verts[0]]);
                        scale(d, 1.0 / crate::mesh::norm(d))
                    };
                    let t2 = cross(face.normal, t1);
                    let mono = face_monos(q - 1);
                    for (s, t) in [t1, t2].into_iter().enumerate() {
                        for (k, beta) in mono.iter().enumerate() {
                            vals.push(face_moment(i, t, loc, *beta));
                            keys.push(DofKey::Face(f, s * mono.len() + k));
                        }
                    }
                }
            }
            if q >= 2 {
                cell_moments(q - 2, &mut vals, &mut keys);
            }
        }
        _ => panic!("canonical functionals exist only for ND and RT"),
    }
    (vals, keys)
}

pub fn build_basis(mesh: &TetMesh, elem: usize, family: Family, q: usize) -> Result<ElemSpace> {
    let el = &mesh.elems[elem];
    let deg = storage_degree(family, q);
    let ncomp = if family == Family::P { 1 } else { 3 };
    let cols = generating_set(mesh, elem, family, q);
    let dim = space_dimension(family, q);
    if cols.len() != dim {
        return Err(Error::NotSpd(format!("generating set has {} functions, expected {dim}", cols.len())));
    }
    let rows = cols[0].len();
    let b = Mat::from_fn(rows, dim, |i, j| cols[j][i]);
    let onb = orthonormalize(b, deg, ncomp, el.vol)?;
    let mass_onb = mass_of(&onb, deg, ncomp, el.vol);
    let (dual, mass_dual, keys) = if matches!(family, Family::Nd | Family::Rt) {
        let mut dmat = Mat::<f64>::zeros(dim, dim);
        let mut keys = Vec::new();
        for j in 0..dim {
            let (v, k) = dof_values(mesh, elem, family, q, &VPoly { deg, c: onb.col_as_slice(j).to_vec() });
            for i in 0..dim {
                dmat[(i, j)] = v[i];
            }
            keys = k;
        }
        let inv = dmat.partial_piv_lu().inverse();
        let dual = &onb * &inv;
        let md = mass_of(&dual, deg, ncomp, el.vol);
        (dual, md, keys)
    } else {
        (Mat::zeros(0, 0), Mat::zeros(0, 0), Vec::new())
    };
    Ok(ElemSpace { family, q, deg, elem, ncomp, onb, mass_onb, dual, mass_dual, keys })
}

/// Matrix `C` with `curl(nd_j) = sum_i C[i, j] rt_i` in the orthonormal frames.
pub fn curl_map(mesh: &TetMesh, nd: &ElemSpace, rt: &ElemSpace) -> Mat<f64> {
    let el = &mesh.elems[nd.elem];
    let lhs = rt.mass_onb.llt(faer::Side::Lower).expect("mass matrix is SPD");
    let mut b = Mat::<f64>::zeros(rt.dim(), nd.dim());
    for j in 0..nd.dim() {
        let cj = curl(el, &nd.onb_fn(j)).raise_to(rt.deg);
        let l = rt.loads_onb(&cj.moments(el.vol, rt.deg));
        for i in 0..rt.dim() {
            b[(i, j)] = l[i];
        }
    }
    use faer::linalg::solvers::Solve;
    lhs.solve(&b)
}

/// Divergence of every frame function, as rows of moments against `P_r`.
pub fn div_moment_rows(mesh: &TetMesh, sp: &ElemSpace, dual: bool, r: usize) -> Mat<f64> {
    let el = &mesh.elems[sp.elem];
    let mut a = Mat::<f64>::zeros(nmono(r), sp.dim());
    for j in 0..sp.dim() {
        let f = if dual { sp.dual_fn(j) } else { sp.onb_fn(j) };
        let m = div(el, &f).moments(el.vol, r);
        for i in 0..m.len() {
            a[(i, j)] = m[i];
        }
    }
    a
}

/// Curl of every frame function, as rows of moments against `[P_r]^3`.
pub fn curl_moment_rows(mesh: &TetMesh, sp: &ElemSpace, dual: bool, r: usize) -> Mat<f64> {
    let el = &mesh.elems[sp.elem];
    let mut a = Mat::<f64>::zeros(3 * nmono(r), sp.dim());
    for j in 0..sp.dim() {
        let f = if dual { sp.dual_fn(j) } else { sp.onb_fn(j) };
        let m = curl(el, &f).moments(el.vol, r);
        for i in 0..m.len() {
            a[(i, j)] = m[i];
        }
    }
    a
}

/// Frame functions' moments against `[P_r]^3`.
pub fn value_moment_rows(mesh: &TetMesh, sp: &ElemSpace, dual: bool, r: usize) -> Mat<f64> {
    let el = &mesh.elems[sp.elem];
    let mut a = Mat::<f64>::zeros(3 * nmono(r), sp.dim());
    for j in 0..sp.dim() {
        let f = if dual { sp.dual_fn(j) } else { sp.onb_fn(j) };
        let m = f.moments(el.vol, r);
        for i in 0..m.len() {
            a[(i, j)] = m[i];
        }
    }
    a
}

/// Per-element cache of built bases, keyed by `(mesh, element, family, degree)`.
#[derive(Default)]
pub struct SpaceCache {
    map: Mutex<HashMap<(u64, usize, Family, usize), Arc<ElemSpace>>>,
}

impl SpaceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, mesh: &TetMesh, elem: usize, family: Family, q: usize) -> Arc<ElemSpace> {
        let key = (mesh.uid(), elem, family, q);
        if let Some(s) = self.map.lock().unwrap().get(&key) {
            return s.clone();
        }
        let s = Arc::new(build_basis(mesh, elem, family, q).expect("element basis"));
        self.map.lock().unwrap().insert(key, s.clone());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{local_face, BoundaryKind};

    fn reftet() -> TetMesh {
        TetMesh::reference_tet(BoundaryKind::Dirichlet).unwrap()
    }

    #[test]
    fn counts_match_dimension() {
        let m = reftet();
        for q in 0..4 {
            for f in [Family::P, Family::Pvec, Family::Nd, Family::Rt] {
                let s = build_basis(&m, 0, f, q).unwrap();
                assert_eq!(s.dim(), space_dimension(f, q));
            }
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        for q in 0..5 {
            for f in [Family::Nd, Family::Rt] {
                let s = build_basis(&m, 2, f, q).unwrap();
                let n = s.dim();
                let mut worst = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        let e = if i == j { 1.0 } else { 0.0 };
                        worst = worst.max((s.mass_onb[(i, j)] - e).abs());
                    }
                }
                assert!(worst < 1e-10, "{f:?} {q}: {worst:e}");
            }
        }
    }

    #[test]
    fn lowest_order_traces() {
        let m = reftet();
        let rt = build_basis(&m, 0, Family::Rt, 0).unwrap();
        let el = &m.elems[0];
        for j in 0..4 {
            let f = rt.dual_fn(j);
            for i in 0..4 {
                let face = &m.faces[el.faces[i]];
                let n = face.normal;
                // normal trace is constant on each face: evaluate at two face points
                let lf = local_face(i);
                let mut p1 = [0.0; 4];
                let mut p2 = [0.0; 4];
                p1[lf[0]] = 0.2;
                p1[lf[1]] = 0.3;
                p1[lf[2]] = 0.5;
                p2[lf[0]] = 0.6;
                p2[lf[1]] = 0.3;
                p2[lf[2]] = 0.1;
                let a = crate::mesh::dot(f.eval(&p1), n);
                let b = crate::mesh::dot(f.eval(&p2), n);
                assert!((a - b).abs() < 1e-12);
                let expect = if rt.keys[j] == DofKey::Face(el.faces[i], 0) { 1.0 } else { 0.0 };
                assert!((a - expect).abs() < 1e-12, "{j} {i} {a}");
            }
        }
        let nd = build_basis(&m, 0, Family::Nd, 0).unwrap();
        for j in 0..6 {
            let f = nd.dual_fn(j);
            for (le, e) in LOCAL_EDGES.iter().zip(el.edges) {
                let edge = &m.edges[e];
                let mut p = [0.0; 4];
                p[le[0]] = 0.3;
                p[le[1]] = 0.7;
                let t = crate::mesh::dot(f.eval(&p), edge.tangent);
                let expect = if nd.keys[j] == DofKey::Edge(e, 0) { 1.0 } else { 0.0 };
                assert!((t - expect).abs() < 1e-12);
            }
        }
    }
}
