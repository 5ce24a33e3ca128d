//! Data fed to the projectors: analytic callbacks integrated by quadrature,
//! or broken polynomial fields integrated exactly. Everything downstream
//! only sees monomial moments `int u l^a` and squared distances.

use crate::error::{Error, Result};
use crate::mesh::TetMesh;
use crate::polyspace::poly::{monomials, mono_values};
use crate::polyspace::quad::tet_rule;
use crate::polyspace::{div, nmono, SPoly, VPoly};
use std::sync::Arc;

pub type VecFn = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;

/// Default quadrature degree for analytic data at polynomial degree `p`.
pub fn default_quad_degree(p: usize) -> usize {
    (2 * p + 16).min(crate::polyspace::quad::MAX_QUAD_DEG)
}

pub trait VectorSource: Send + Sync {
    /// `int_K u_k l^a` for all degree-`d` monomials, component-major.
    fn moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>>;
    /// `int_K (div u) l^a` for all degree-`d` monomials.
    fn div_moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>>;
    /// `||u - q||_K^2`.
    fn dist2(&self, mesh: &TetMesh, e: usize, q: &VPoly) -> Result<f64>;
    /// The exact polynomial on `e`, when the data is polynomial.
    fn poly(&self, _e: usize) -> Option<&VPoly> {
        None
    }
    /// Same data integrated with a more accurate rule, if that means anything.
    fn refined(&self) -> Option<Box<dyn VectorSource>> {
        None
    }
}

pub trait ScalarSource: Send + Sync {
    fn moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>>;
    fn dist2(&self, mesh: &TetMesh, e: usize, q: &SPoly) -> Result<f64>;
    fn refined(&self) -> Option<Box<dyn ScalarSource>> {
        None
    }
}

/// Moments at degree `to` from moments at degree `from >= to`, using
/// `l0 + l1 + l2 + l3 = 1`. Works per block of `ncomp` components.
pub fn lower_moments(mom: &[f64], from: usize, to: usize, ncomp: usize) -> Vec<f64> {
    assert!(to <= from);
    let mut cur = mom.to_vec();
    for d in (to..from).rev() {
        let (hi, lo) = (monomials(d + 1), monomials(d));
        let (nh, nl) = (hi.len(), lo.len());
        let mut next = vec![0.0; ncomp * nl];
        for k in 0..ncomp {
            for (i, a) in lo.alphas.iter().enumerate() {
                let mut s = 0.0;
                for l in 0..4 {
                    let mut b = *a;
                    b[l] += 1;
                    s += cur[k * nh + hi.index(b)];
                }
                next[k * nl + i] = s;
            }
        }
        cur = next;
    }
    cur
}

fn quad_moments(mesh: &TetMesh, e: usize, d: usize, quad: usize, ncomp: usize, f: &dyn Fn([f64; 3]) -> [f64; 3]) -> Result<Vec<f64>> {
    let el = &mesh.elems[e];
    let rule = tet_rule(quad)?;
    let n = nmono(d);
    let mut out = vec![0.0; ncomp * n];
    for (lam, w) in rule.points.iter().zip(&rule.weights) {
        let u = f(el.point(lam));
        let m = mono_values(d, lam);
        for k in 0..ncomp {
            let s = w * el.vol * u[k];
            for (o, mi) in out[k * n..(k + 1) * n].iter_mut().zip(&m) {
                *o += s * mi;
            }
        }
    }
    Ok(out)
}

/// Vector field given by callbacks, integrated with a fixed-degree rule.
#[derive(Clone)]
pub struct AnalyticVector {
    pub f: VecFn,
    pub div: Option<ScalarFn>,
    pub quad: usize,
}

impl AnalyticVector {
    pub fn new(f: VecFn, div: Option<ScalarFn>, quad: usize) -> Self {
        AnalyticVector { f, div, quad }
    }

    /// Divergence-free field (e.g. a curl).
    pub fn solenoidal(f: VecFn, quad: usize) -> Self {
        AnalyticVector { f, div: Some(Arc::new(|_| 0.0)), quad }
    }
}

impl VectorSource for AnalyticVector {
    fn moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>> {
        quad_moments(mesh, e, d, self.quad, 3, &*self.f)
    }

    fn div_moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>> {
        let g = self.div.as_ref().ok_or_else(|| Error::Invalid("field has no divergence callback".into()))?;
        quad_moments(mesh, e, d, self.quad, 1, &|x| [g(x), 0.0, 0.0])
    }

    fn dist2(&self, mesh: &TetMesh, e: usize, q: &VPoly) -> Result<f64> {
        let el = &mesh.elems[e];
        let rule = tet_rule(self.quad)?;
        let mut s = 0.0;
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let u = (self.f)(el.point(lam));
            let v = q.eval(lam);
            s += w * ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2));
        }
        Ok(s * el.vol)
    }

    fn refined(&self) -> Option<Box<dyn VectorSource>> {
        let quad = self.quad + 2;
        (quad <= crate::polyspace::quad::MAX_QUAD_DEG).then(|| Box::new(AnalyticVector { quad, ..self.clone() }) as Box<dyn VectorSource>)
    }
}

#[derive(Clone)]
pub struct AnalyticScalar {
    pub f: ScalarFn,
    pub quad: usize,
}

impl ScalarSource for AnalyticScalar {
    fn moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>> {
        quad_moments(mesh, e, d, self.quad, 1, &|x| [(self.f)(x), 0.0, 0.0])
    }

    fn dist2(&self, mesh: &TetMesh, e: usize, q: &SPoly) -> Result<f64> {
        let el = &mesh.elems[e];
        let rule = tet_rule(self.quad)?;
        let s: f64 = rule.points.iter().zip(&rule.weights).map(|(lam, w)| w * ((self.f)(el.point(lam)) - q.eval(lam)).powi(2)).sum();
        Ok(s * el.vol)
    }

    fn refined(&self) -> Option<Box<dyn ScalarSource>> {
        let quad = self.quad + 2;
        (quad <= crate::polyspace::quad::MAX_QUAD_DEG).then(|| Box::new(AnalyticScalar { quad, ..self.clone() }) as Box<dyn ScalarSource>)
    }
}

/// Broken polynomial field, one polynomial per mesh element.
#[derive(Clone, Debug)]
pub struct BrokenVector {
    pub polys: Vec<VPoly>,
    divs: Vec<SPoly>,
}

impl BrokenVector {
    pub fn new(mesh: &TetMesh, polys: Vec<VPoly>) -> Self {
        assert_eq!(polys.len(), mesh.n_elems(), "one polynomial per element");
        let divs = polys.iter().zip(&mesh.elems).map(|(p, el)| div(el, p)).collect();
        BrokenVector { polys, divs }
    }

    /// Elementwise curl.
    pub fn curl(&self, mesh: &TetMesh) -> BrokenVector {
        BrokenVector::new(mesh, self.polys.iter().zip(&mesh.elems).map(|(p, el)| crate::polyspace::curl(el, p)).collect())
    }
}

impl VectorSource for BrokenVector {
    fn moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>> {
        Ok(self.polys[e].moments(mesh.elems[e].vol, d))
    }

    fn div_moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>> {
        Ok(self.divs[e].moments(mesh.elems[e].vol, d))
    }

    fn dist2(&self, mesh: &TetMesh, e: usize, q: &VPoly) -> Result<f64> {
        Ok(self.polys[e].sub(q).norm_sq(mesh.elems[e].vol))
    }

    fn poly(&self, e: usize) -> Option<&VPoly> {
        Some(&self.polys[e])
    }
}

#[derive(Clone, Debug)]
pub struct BrokenScalar {
    pub polys: Vec<SPoly>,
}

impl ScalarSource for BrokenScalar {
    fn moments(&self, mesh: &TetMesh, e: usize, d: usize) -> Result<Vec<f64>> {
        Ok(self.polys[e].moments(mesh.elems[e].vol, d))
    }

    fn dist2(&self, mesh: &TetMesh, e: usize, q: &SPoly) -> Result<f64> {
        Ok(self.polys[e].add(&q.scale(-1.0)).norm_sq(mesh.elems[e].vol))
    }
}

/// The zero field.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl VectorSource for Zero {
    fn moments(&self, _: &TetMesh, _: usize, d: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; 3 * nmono(d)])
    }

    fn div_moments(&self, _: &TetMesh, _: usize, d: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; nmono(d)])
    }

    fn dist2(&self, mesh: &TetMesh, e: usize, q: &VPoly) -> Result<f64> {
        Ok(q.norm_sq(mesh.elems[e].vol))
    }
}

impl ScalarSource for Zero {
    fn moments(&self, _: &TetMesh, _: usize, d: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; nmono(d)])
    }

    fn dist2(&self, mesh: &TetMesh, e: usize, q: &SPoly) -> Result<f64> {
        Ok(q.norm_sq(mesh.elems[e].vol))
    }
}
