//! Elementwise regularity terms
//! `v_{K,q,s,t}^2 = (h^min(q,s) / q^s |v|_{H^s})^2 + (h/q h^min(q,t) / q^t |curl v|_{H^t})^2`
//! with full Sobolev norms evaluated on a high-degree L2 projection.

use crate::error::Result;
use crate::interp::l2_project;
use crate::mesh::{Element, TetMesh};
use crate::polyspace::{grad, Family, SPoly, SpaceCache, VPoly};
use crate::source::VectorSource;
use std::collections::BTreeMap;

/// `||u||_{H^s(K)}^2` of a polynomial field, summing every multi-index
/// `|alpha| <= s` once.
pub fn sobolev_norm_sq(el: &Element, u: &VPoly, s: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..3 {
        let mut level: BTreeMap<[usize; 3], SPoly> = BTreeMap::new();
        level.insert([0; 3], u.comp(k));
        for _ in 0..=s {
            total += level.values().map(|f| f.norm_sq(el.vol)).sum::<f64>();
            let mut next = BTreeMap::new();
            for (a, f) in &level {
                let g = grad(el, f);
                for j in 0..3 {
                    let mut b = *a;
                    b[j] += 1;
                    next.entry(b).or_insert_with(|| g.comp(j));
                }
            }
            level = next;
        }
    }
    total
}

/// Per-element `v_{K,q,s,t}^2`. Infinite `s`, `t` are replaced by `q`.
pub fn hp_terms(
    mesh: &TetMesh,
    cache: &SpaceCache,
    v: &dyn VectorSource,
    w: &dyn VectorSource,
    q: usize,
    s: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let q = q.max(1);
    let s = if s.is_finite() { s.max(0.0) as usize } else { q };
    let t = if t.is_finite() { t.max(0.0) as usize } else { q };
    let qf = q as f64;
    let mut out = Vec::with_capacity(mesh.n_elems());
    for e in 0..mesh.n_elems() {
        let el = &mesh.elems[e];
        let pv = l2_project(mesh, cache, e, Family::Pvec, s + 4, v)?.field;
        let pw = l2_project(mesh, cache, e, Family::Pvec, t + 4, w)?.field;
        let a = el.h.powi(q.min(s) as i32) / qf.powi(s as i32);
        let b = el.h / qf * el.h.powi(q.min(t) as i32) / qf.powi(t as i32);
        out.push(a * a * sobolev_norm_sq(el, &pv, s) + b * b * sobolev_norm_sq(el, &pw, t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;

    #[test]
    fn norm_of_linear_field() {
        // u = (x, 0, 0) on the reference tet: ||u||^2 = 1/60, |u|_1^2 = 1/6
        let m = TetMesh::reference_tet(BoundaryKind::Dirichlet).unwrap();
        let x = SPoly::lambda(1);
        let u = VPoly::from_comps([x, SPoly::zeros(1), SPoly::zeros(1)]);
        let el = &m.elems[0];
        assert!((sobolev_norm_sq(el, &u, 0) - 1.0 / 60.0).abs() < 1e-14);
        assert!((sobolev_norm_sq(el, &u, 1) - (1.0 / 60.0 + 1.0 / 6.0)).abs() < 1e-14);
        assert!((sobolev_norm_sq(el, &u, 3) - sobolev_norm_sq(el, &u, 1)).abs() < 1e-14);
    }
}
