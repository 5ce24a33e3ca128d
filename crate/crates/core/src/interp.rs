//! Elementwise L2 projectors and the canonical RT / ND interpolators.

use crate::error::{Error, Result};
use crate::mesh::TetMesh;
use crate::polyspace::{dof_values, Family, SPoly, SpaceCache, VPoly};
use crate::source::{ScalarSource, VectorSource};

/// Relative change, under a more accurate rule, that flags the quadrature
/// as insufficient.
pub const QUAD_CHECK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjKind {
    ScalarL2(usize),
    VectorL2(usize),
    RtL2(usize),
    RtCanonical(usize),
    NdCanonical(usize),
}

#[derive(Clone, Debug)]
pub struct Projected<T> {
    pub field: T,
    /// Set when integrating with two more degrees changed the result.
    pub quad_insufficient: bool,
}

fn rel_change(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / n.max(f64::MIN_POSITIVE)
}

/// Elementwise L2 projection of scalar data onto `P_q(K)`.
pub fn l2_project_scalar(mesh: &TetMesh, cache: &SpaceCache, e: usize, q: usize, src: &dyn ScalarSource) -> Result<Projected<SPoly>> {
    let sp = cache.get(mesh, e, Family::P, q);
    let coef = |s: &dyn ScalarSource| -> Result<Vec<f64>> { Ok(sp.loads_onb(&s.moments(mesh, e, sp.deg)?)) };
    let c = coef(src)?;
    let quad_insufficient = match src.refined() {
        Some(r) => rel_change(&c, &coef(&*r)?) > QUAD_CHECK_TOL,
        None => false,
    };
    Ok(Projected { field: sp.scalar_onb(&c), quad_insufficient })
}

/// Elementwise L2 projection of vector data onto `[P_q(K)]^3` or `RT_q(K)`.
pub fn l2_project(
    mesh: &TetMesh,
    cache: &SpaceCache,
    e: usize,
    family: Family,
    q: usize,
    src: &dyn VectorSource,
) -> Result<Projected<VPoly>> {
    if !matches!(family, Family::Pvec | Family::Rt | Family::Nd) {
        return Err(Error::Unsupported(format!("vector L2 projection onto {family:?}")));
    }
    let sp = cache.get(mesh, e, family, q);
    let coef = |s: &dyn VectorSource| -> Result<Vec<f64>> { Ok(sp.loads_onb(&s.moments(mesh, e, sp.deg)?)) };
    let c = coef(src)?;
    let quad_insufficient = match src.refined() {
        Some(r) => rel_change(&c, &coef(&*r)?) > QUAD_CHECK_TOL,
        None => false,
    };
    Ok(Projected { field: sp.field_onb(&c), quad_insufficient })
}

/// Canonical interpolate `I^{RT,q}_K u` of a polynomial field.
pub fn canonical_rt(mesh: &TetMesh, cache: &SpaceCache, e: usize, q: usize, u: &VPoly) -> VPoly {
    let (vals, _) = dof_values(mesh, e, Family::Rt, q, u);
    cache.get(mesh, e, Family::Rt, q).field_dual(&vals)
}

/// Canonical interpolate `I^{ND,q}_K u` of a polynomial field.
pub fn canonical_nd(mesh: &TetMesh, cache: &SpaceCache, e: usize, q: usize, u: &VPoly) -> VPoly {
    let (vals, _) = dof_values(mesh, e, Family::Nd, q, u);
    cache.get(mesh, e, Family::Nd, q).field_dual(&vals)
}

/// Apply a projector of any kind to vector data; canonical kinds require
/// polynomial data.
pub fn project(mesh: &TetMesh, cache: &SpaceCache, e: usize, kind: ProjKind, src: &dyn VectorSource) -> Result<Projected<VPoly>> {
    let poly = || src.poly(e).ok_or_else(|| Error::Invalid("canonical interpolation needs polynomial input".into()));
    match kind {
        ProjKind::ScalarL2(_) => Err(Error::Unsupported("scalar projection of vector data".into())),
        ProjKind::VectorL2(q) => l2_project(mesh, cache, e, Family::Pvec, q, src),
        ProjKind::RtL2(q) => l2_project(mesh, cache, e, Family::Rt, q, src),
        ProjKind::RtCanonical(q) => Ok(Projected { field: canonical_rt(mesh, cache, e, q, poly()?), quad_insufficient: false }),
        ProjKind::NdCanonical(q) => Ok(Projected { field: canonical_nd(mesh, cache, e, q, poly()?), quad_insufficient: false }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;
    use crate::polyspace::{curl, div};
    use crate::source::{AnalyticScalar, BrokenVector};
    use std::sync::Arc;

    fn reftet() -> TetMesh {
        TetMesh::reference_tet(BoundaryKind::Dirichlet).unwrap()
    }

    fn coords() -> [SPoly; 3] {
        [SPoly::lambda(1), SPoly::lambda(2), SPoly::lambda(3)]
    }

    #[test]
    fn mean_of_x_on_reference() {
        let m = reftet();
        let c = SpaceCache::new();
        let src = AnalyticScalar { f: Arc::new(|x: [f64; 3]| x[0]), quad: 4 };
        let p = l2_project_scalar(&m, &c, 0, 0, &src).unwrap();
        assert!((p.field.eval(&[0.1, 0.2, 0.3, 0.4]) - 0.25).abs() < 1e-14);
        assert!(!p.quad_insufficient);
    }

    #[test]
    fn constant_field_preserved() {
        let m = reftet();
        let c = SpaceCache::new();
        let k = VPoly::constant([1.0, -2.0, 0.5]);
        let b = BrokenVector::new(&m, vec![k.clone()]);
        let p = l2_project(&m, &c, 0, Family::Rt, 0, &b).unwrap();
        assert!(p.field.sub(&k).max_abs() < 1e-13);
        assert!(canonical_rt(&m, &c, 0, 0, &k).sub(&k).max_abs() < 1e-13);
        assert!(canonical_nd(&m, &c, 0, 0, &k).sub(&k).max_abs() < 1e-13);
    }

    #[test]
    fn div_commutes_for_x_squared() {
        let m = reftet();
        let c = SpaceCache::new();
        let [x, _, _] = coords();
        let v = VPoly::from_comps([x.mul(&x), SPoly::zeros(2), SPoly::zeros(2)]);
        let el = &m.elems[0];
        let lhs = div(el, &canonical_rt(&m, &c, 0, 1, &v));
        // div v = 2x is already in P_1
        let rhs = x.scale(2.0);
        for lam in [[0.25; 4], [0.7, 0.1, 0.1, 0.1], [0.0, 0.5, 0.5, 0.0]] {
            assert!((lhs.eval(&lam) - rhs.eval(&lam)).abs() < 1e-12);
        }
    }

    #[test]
    fn curl_commutes_for_xy() {
        let m = reftet();
        let c = SpaceCache::new();
        let [x, y, _] = coords();
        let v = VPoly::from_comps([SPoly::zeros(2), SPoly::zeros(2), x.mul(&y)]);
        let el = &m.elems[0];
        let lhs = curl(el, &canonical_nd(&m, &c, 0, 1, &v));
        let rhs = canonical_rt(&m, &c, 0, 1, &curl(el, &v));
        assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn canonical_needs_polynomial() {
        let m = reftet();
        let c = SpaceCache::new();
        let src = crate::source::AnalyticVector::new(Arc::new(|x: [f64; 3]| x), None, 4);
        assert!(project(&m, &c, 0, ProjKind::RtCanonical(0), &src).is_err());
    }
}
