//! Local commuting projector onto `RT_p(T_h) ∩ H_{0,N}(div)`: a broken
//! divergence-constrained projection followed by patchwise minimizations
//! whose sum is conforming.

use crate::cls::{self, KktProblem};
use crate::error::{Error, Result};
use crate::interp::canonical_rt;
use crate::mesh::{PatchClass, TetMesh, VertexPatch};
use crate::polyspace::basis::div_moment_rows;
use crate::polyspace::poly::monomials;
use crate::polyspace::{div, nmono, ConfSpace, Essential, Family, SpaceCache, VPoly};
use crate::source::{lower_moments, VectorSource};
use crate::traces::{global_jump, patch_jump, PatchField, TraceKind};
use faer::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Canonical,
    /// Interpolator-free construction with lowered broken degree (`p >= 1`).
    Alternative,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Variant::Canonical),
            "alternative" => Ok(Variant::Alternative),
            _ => Err(Error::Parse(format!("unknown variant '{s}' (canonical | alternative)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Canonical => "canonical",
            Variant::Alternative => "alternative",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOpts {
    pub tol_feas: f64,
    /// Run the well-posedness assertions.
    pub assert: bool,
    pub assert_tol: f64,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts { tol_feas: cls::TOL_FEAS, assert: true, assert_tol: 1e-10 }
    }
}

/// Monomial moments of the data and its divergence, computed once per
/// element at degree `deg` and lowered on demand.
#[derive(Clone, Debug)]
pub struct ElementMoments {
    pub deg: usize,
    pub vals: Vec<Vec<f64>>,
    pub divs: Vec<Vec<f64>>,
}

impl ElementMoments {
    pub fn new(mesh: &TetMesh, src: &dyn VectorSource, deg: usize, with_div: bool) -> Result<Self> {
        let mut vals = Vec::with_capacity(mesh.n_elems());
        let mut divs = Vec::with_capacity(mesh.n_elems());
        for e in 0..mesh.n_elems() {
            vals.push(src.moments(mesh, e, deg)?);
            if with_div {
                divs.push(src.div_moments(mesh, e, deg)?);
            }
        }
        Ok(ElementMoments { deg, vals, divs })
    }

    pub fn vec_at(&self, e: usize, d: usize) -> Vec<f64> {
        lower_moments(&self.vals[e], self.deg, d, 3)
    }

    pub fn div_at(&self, e: usize, d: usize) -> Vec<f64> {
        lower_moments(&self.divs[e], self.deg, d, 1)
    }

    /// Moments at degree `d` of `grad(l_i) . u`.
    pub fn dot_grad(&self, mesh: &TetMesh, e: usize, i: usize, d: usize) -> Vec<f64> {
        let m = self.vec_at(e, d);
        let n = nmono(d);
        let g = mesh.elems[e].grad[i];
        (0..n).map(|a| g[0] * m[a] + g[1] * m[n + a] + g[2] * m[2 * n + a]).collect()
    }
}

/// Moments at degree `d` of `l_i f` from moments of `f` at degree `d + 1`.
pub fn times_lambda(hi: &[f64], d: usize, i: usize) -> Vec<f64> {
    let (lo, up) = (monomials(d), monomials(d + 1));
    lo.alphas
        .iter()
        .map(|a| {
            let mut b = *a;
            b[i] += 1;
            hi[up.index(b)]
        })
        .collect()
}

fn class_name(p: &VertexPatch) -> &'static str {
    match p.class {
        PatchClass::Interior => "interior",
        PatchClass::Neumann => "Neumann",
        PatchClass::Dirichlet { .. } => "Dirichlet",
    }
}

pub(crate) fn stack(blocks: Vec<(Mat<f64>, Vec<f64>)>, ncols: usize) -> (Mat<f64>, Vec<f64>) {
    let nrows: usize = blocks.iter().map(|b| b.0.nrows()).sum();
    let mut a = Mat::<f64>::zeros(nrows, ncols);
    let mut rhs = Vec::with_capacity(nrows);
    let mut r0 = 0;
    for (b, r) in blocks {
        for j in 0..ncols {
            for i in 0..b.nrows() {
                a[(r0 + i, j)] = b[(i, j)];
            }
        }
        r0 += b.nrows();
        rhs.extend(r);
    }
    (a, rhs)
}

/// Broken degree of the first step.
pub fn tau_degree(p: usize, variant: Variant) -> usize {
    match variant {
        Variant::Canonical => p,
        Variant::Alternative => p - 1,
    }
}

/// `arg min ||w - w_h||_K` over `RT_q(K)` with `div w_h = Pi^q(div w)`.
pub fn phd_tau(mesh: &TetMesh, cache: &SpaceCache, e: usize, q: usize, wm: &ElementMoments, opts: &SolveOpts) -> Result<VPoly> {
    let sp = cache.get(mesh, e, Family::Rt, q);
    let a = div_moment_rows(mesh, &sp, false, q);
    let rhs = wm.div_at(e, q);
    let load = sp.loads_onb(&wm.vec_at(e, sp.deg));
    let prob = KktProblem::new(sp.mass_onb.clone(), load, a, rhs).with_tol(opts.tol_feas).with_context(format!("tau on element {e}"));
    let sol = cls::solve(&prob)?;
    Ok(sp.field_onb(&sol.x))
}

/// Patch problem on `RT_p(T_a) ∩ H_a(div)`:
/// `arg min ||target - w_h||` with `div w_h = Pi^p(psi_a div w + grad psi_a . w)`.
pub fn phd_sigma_a(
    mesh: &TetMesh,
    cache: &SpaceCache,
    patch: &VertexPatch,
    tau: &[VPoly],
    wm: &ElementMoments,
    p: usize,
    variant: Variant,
    opts: &SolveOpts,
) -> Result<PatchField> {
    let cs = ConfSpace::new(mesh, cache, &patch.elems, Family::Rt, p, Essential::Patch(patch));
    let mut moms = Vec::with_capacity(patch.elems.len());
    let mut blocks = Vec::new();
    for (l, (&e, &i)) in patch.elems.iter().zip(&patch.local).enumerate() {
        let el = &mesh.elems[e];
        let cut = tau[e].mul_lambda(i);
        let target = match variant {
            Variant::Canonical => canonical_rt(mesh, cache, e, p, &cut),
            Variant::Alternative => cut,
        };
        moms.push(target.moments(el.vol, cs.deg()));
        let rows = div_moment_rows(mesh, &cs.spaces[l], true, p);
        let mut g = Mat::<f64>::zeros(rows.nrows(), cs.ndof);
        cs.scatter_rows(l, &rows, &mut g, 0);
        let pd = times_lambda(&wm.div_at(e, p + 1), p, i);
        let gw = wm.dot_grad(mesh, e, i, p);
        blocks.push((g, pd.iter().zip(&gw).map(|(a, b)| a + b).collect()));
    }
    if cs.ndof == 0 {
        return Ok(PatchField::new(patch.elems.clone(), vec![VPoly::zeros(cs.deg()); patch.elems.len()]));
    }
    let (a, rhs) = stack(blocks, cs.ndof);
    let prob = KktProblem::new(cs.mass(), cs.loads(&moms), a, rhs)
        .with_tol(opts.tol_feas)
        .with_context(format!("sigma_a at vertex {} ({} patch)", patch.vertex, class_name(patch)));
    let sol = cls::solve(&prob)?;
    Ok(PatchField::new(patch.elems.clone(), cs.field(&sol.x)))
}

#[derive(Clone, Debug, Default)]
pub struct HdivDiagnostics {
    /// `||div sigma - Pi^p div w|| / scale`.
    pub commute_residual: f64,
    /// Normal jumps of `sigma` on interior and Neumann faces, relative.
    pub normal_jump: f64,
    pub max_patch_jump: f64,
}

#[derive(Clone, Debug)]
pub struct HdivProjection {
    pub p: usize,
    pub variant: Variant,
    pub tau: Vec<VPoly>,
    pub vertices: Vec<usize>,
    pub sigma_a: Vec<PatchField>,
    pub sigma: Vec<VPoly>,
    pub diag: HdivDiagnostics,
}

/// Apply the H(div) projector to `w` at degree `p`.
pub fn phd_apply(mesh: &TetMesh, cache: &SpaceCache, w: &dyn VectorSource, p: usize, variant: Variant, opts: &SolveOpts) -> Result<HdivProjection> {
    if variant == Variant::Alternative && p == 0 {
        return Err(Error::Invalid("the alternative variant needs p >= 1".into()));
    }
    let wm = ElementMoments::new(mesh, w, p + 1, true)?;
    phd_apply_moments(mesh, cache, &wm, p, variant, opts)
}

pub fn phd_apply_moments(mesh: &TetMesh, cache: &SpaceCache, wm: &ElementMoments, p: usize, variant: Variant, opts: &SolveOpts) -> Result<HdivProjection> {
    let q = tau_degree(p, variant);
    let tau = (0..mesh.n_elems()).map(|e| phd_tau(mesh, cache, e, q, wm, opts)).collect::<Result<Vec<_>>>()?;
    let vertices: Vec<usize> = mesh.active_vertices().collect();
    let mut sigma = vec![VPoly::zeros(p + 1); mesh.n_elems()];
    let mut sigma_a = Vec::with_capacity(vertices.len());
    let mut max_patch_jump = 0.0f64;
    for &a in &vertices {
        let patch = mesh.vertex_patch(a)?;
        let s = phd_sigma_a(mesh, cache, &patch, &tau, wm, p, variant, opts)?;
        let n = s.norm_sq(mesh).sqrt();
        if n > 0.0 {
            max_patch_jump = max_patch_jump.max(patch_jump(mesh, &patch, TraceKind::Normal, &s) / n);
        }
        for (&e, f) in s.elems.iter().zip(&s.polys) {
            sigma[e] = sigma[e].add(f);
        }
        sigma_a.push(s);
    }
    let diag = hdiv_diagnostics(mesh, cache, &sigma, wm, p, max_patch_jump);
    Ok(HdivProjection { p, variant, tau, vertices, sigma_a, sigma, diag })
}

fn hdiv_diagnostics(mesh: &TetMesh, cache: &SpaceCache, sigma: &[VPoly], wm: &ElementMoments, p: usize, max_patch_jump: f64) -> HdivDiagnostics {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut norm = 0.0;
    for (e, s) in sigma.iter().enumerate() {
        let el = &mesh.elems[e];
        let sp = cache.get(mesh, e, Family::P, p);
        let proj = sp.scalar_onb(&sp.loads_onb(&wm.div_at(e, p)));
        let d = div(el, s);
        num += d.add(&proj.scale(-1.0)).norm_sq(el.vol) * el.h * el.h;
        den += proj.norm_sq(el.vol) * el.h * el.h;
        norm += s.norm_sq(el.vol);
    }
    let scale = den.max(norm).sqrt().max(f64::MIN_POSITIVE);
    HdivDiagnostics {
        commute_residual: num.sqrt() / scale,
        normal_jump: global_jump(mesh, TraceKind::Normal, sigma) / norm.sqrt().max(f64::MIN_POSITIVE),
        max_patch_jump,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;
    use crate::source::{AnalyticVector, BrokenVector, Zero};
    use std::sync::Arc;

    #[test]
    fn constant_field_on_reference() {
        let m = TetMesh::reference_tet(BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let w = BrokenVector::new(&m, vec![VPoly::constant([1.0, 0.0, 0.0])]);
        let wm = ElementMoments::new(&m, &w, 1, true).unwrap();
        let t = phd_tau(&m, &c, 0, 0, &wm, &SolveOpts::default()).unwrap();
        assert!(t.sub(&VPoly::constant([1.0, 0.0, 0.0])).max_abs() < 1e-13);
    }

    #[test]
    fn zero_maps_to_zero() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let r = phd_apply(&m, &c, &Zero, 1, Variant::Canonical, &SolveOpts::default()).unwrap();
        assert!(r.sigma.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn commutes_for_sine() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let w = AnalyticVector::solenoidal(Arc::new(|x: [f64; 3]| [x[1].sin(), 0.0, 0.0]), 16);
        for p in 0..2 {
            let r = phd_apply(&m, &c, &w, p, Variant::Canonical, &SolveOpts::default()).unwrap();
            assert!(r.diag.commute_residual < 1e-10, "{:?}", r.diag);
            assert!(r.diag.normal_jump < 1e-10, "{:?}", r.diag);
        }
    }
}
