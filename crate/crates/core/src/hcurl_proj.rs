//! Local commuting projector onto `ND_p(T_h) ∩ H_{0,N}(curl)`.
//!
//! Pipeline: `tau`, `sigma_a` from the H(div) projector applied to
//! `w = curl v`; broken `iota` with `curl iota = tau`; patch fields
//! `theta_a`; their sum `delta` and its divergence-free split `delta_a`;
//! patch fields `h_a` whose curls are `sigma_a + I(theta_a - delta_a)`.
//! The well-posedness conditions of every step are evaluated numerically
//! and, unless disabled, enforced.

use crate::cls::{self, KktProblem};
use crate::error::{Error, Result};
use crate::hdiv_proj::{phd_apply_moments, stack, tau_degree, ElementMoments, HdivProjection, SolveOpts, Variant};
use crate::interp::{canonical_nd, canonical_rt};
use crate::mesh::{cross, norm, FaceTag, PatchClass, TetMesh, VertexPatch};
use crate::polyspace::basis::{curl_moment_rows, div_moment_rows, value_moment_rows, DofKey};
use crate::polyspace::poly::monomials;
use crate::polyspace::{curl, div, dof_values, ConfSpace, Essential, Family, SpaceCache, VPoly};
use crate::source::VectorSource;
use crate::traces::{global_jump, patch_jump, PatchField, TraceKind};
use faer::Mat;
use std::collections::BTreeMap;

/// Names of the numerical well-posedness checks.
pub mod checks {
    /// Patch target of the `theta_a` problem lies in the broken RT space.
    pub const THETA_TARGET: &str = "theta-target-in-space";
    /// Zero mean of the `theta_a` divergence datum away from the Dirichlet boundary.
    pub const THETA_MEAN: &str = "theta-mean-compatibility";
    /// Compatibility of the constant-moment constraints with the divergence datum.
    pub const THETA_ORTH: &str = "theta-hat-orthogonality";
    pub const DELTA_DIV: &str = "delta-divergence";
    pub const DELTA_JUMP: &str = "delta-normal-jump";
    /// `(delta, r)_K = 0` for constant `r`.
    pub const DELTA_CONST: &str = "delta-constant-moments";
    /// `sum_a delta_a = delta`.
    pub const SPLIT_SUM: &str = "split-sum";
    pub const SPLIT_DIV: &str = "split-divergence";
    pub const SPLIT_JUMP: &str = "split-normal-jump";
    /// The curl datum of `h_a` is `H_a(div)`-conforming ...
    pub const DATUM_JUMP: &str = "curl-datum-normal-jump";
    /// ... and divergence-free.
    pub const DATUM_DIV: &str = "curl-datum-divergence";

    pub const ALL: [&str; 11] = [
        THETA_TARGET, THETA_MEAN, THETA_ORTH, DELTA_DIV, DELTA_JUMP, DELTA_CONST, SPLIT_SUM, SPLIT_DIV, SPLIT_JUMP, DATUM_JUMP, DATUM_DIV,
    ];
}

/// Largest relative residual seen per check, with where it occurred.
#[derive(Clone, Debug, Default)]
pub struct CheckLog {
    pub entries: BTreeMap<&'static str, (f64, String)>,
}

impl CheckLog {
    pub fn record(&mut self, name: &'static str, location: impl FnOnce() -> String, residual: f64, opts: &SolveOpts) -> Result<()> {
        let e = self.entries.entry(name).or_insert((0.0, String::new()));
        let bad = !(residual <= opts.assert_tol);
        if bad || residual > e.0 {
            let loc = location();
            if residual > e.0 || bad {
                *e = (residual, loc.clone());
            }
            if bad && opts.assert {
                return Err(Error::Feasibility { check: name.into(), location: loc, residual });
            }
        }
        Ok(())
    }

    pub fn max(&self, name: &str) -> f64 {
        self.entries.get(name).map_or(0.0, |e| e.0)
    }

    pub fn worst(&self) -> f64 {
        self.entries.values().fold(0.0, |m, e| m.max(e.0))
    }

    pub fn merge(&mut self, o: &CheckLog) {
        for (k, v) in &o.entries {
            let e = self.entries.entry(k).or_insert((0.0, String::new()));
            if v.0 > e.0 {
                *e = v.clone();
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HcurlOpts {
    pub solve: SolveOpts,
    /// Perturb `sigma_a` at this vertex (fault injection for the checks).
    pub corrupt_sigma: Option<usize>,
}

/// Data moments shared by all steps.
pub struct CurlData {
    pub vm: ElementMoments,
    pub wm: ElementMoments,
    /// `||Pi w||_K` at degree `wm.deg`, for scaling residuals.
    pub wnorm: Vec<f64>,
}

impl CurlData {
    pub fn new(mesh: &TetMesh, cache: &SpaceCache, v: &dyn VectorSource, w: &dyn VectorSource, p: usize) -> Result<Self> {
        let vm = ElementMoments::new(mesh, v, p + 1, false)?;
        let wm = ElementMoments::new(mesh, w, p + 1, true)?;
        let wnorm = (0..mesh.n_elems())
            .map(|e| {
                let sp = cache.get(mesh, e, Family::Pvec, p + 1);
                sp.loads_onb(&wm.vals[e]).iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .collect();
        Ok(CurlData { vm, wm, wnorm })
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den.max(f64::MIN_POSITIVE)
    }
}

/// `arg min ||v - v_h||_K` over `ND_q(K)` with `curl v_h = tau`.
/// Returns the field and the Euler-Lagrange residual.
pub fn phc_iota(mesh: &TetMesh, cache: &SpaceCache, e: usize, q: usize, vm: &ElementMoments, tau: &VPoly, opts: &SolveOpts) -> Result<(VPoly, f64)> {
    let el = &mesh.elems[e];
    let sp = cache.get(mesh, e, Family::Nd, q);
    let a = curl_moment_rows(mesh, &sp, false, tau.deg);
    let rhs = tau.moments(el.vol, tau.deg);
    let load = sp.loads_onb(&vm.vec_at(e, sp.deg));
    let prob = KktProblem::new(sp.mass_onb.clone(), load, a, rhs).with_tol(opts.tol_feas).with_context(format!("iota on element {e}"));
    let sol = cls::solve(&prob)?;
    Ok((sp.field_onb(&sol.x), sol.diag.el_residual))
}

/// Patch problem for `theta_a` on `RT_r(T_a) ∩ H_a(div)`. The constant-moment
/// constraints are imposed when `moments` is set.
#[allow(clippy::too_many_arguments)]
pub fn phc_theta(
    mesh: &TetMesh,
    cache: &SpaceCache,
    patch: &VertexPatch,
    iota: &[VPoly],
    data: &CurlData,
    r: usize,
    moments: bool,
    opts: &SolveOpts,
    log: &mut CheckLog,
) -> Result<PatchField> {
    let a = patch.vertex;
    let cs = ConfSpace::new(mesh, cache, &patch.elems, Family::Rt, r, Essential::Patch(patch));
    let mut loads = Vec::new();
    let mut blocks = Vec::new();
    let mut target_res = 0.0f64;
    let mut target_norm = 0.0f64;
    let mut mean = 0.0;
    let mut mean_scale = 0.0;
    for (l, (&e, &i)) in patch.elems.iter().zip(&patch.local).enumerate() {
        let el = &mesh.elems[e];
        let target = iota[e].cross_const_left(&el.grad[i]);
        let interp = canonical_rt(mesh, cache, e, r, &target);
        target_res += interp.sub(&target).norm_sq(el.vol);
        target_norm += target.norm_sq(el.vol);
        loads.push(target.moments(el.vol, cs.deg()));
        let sp = &cs.spaces[l];
        let drows = div_moment_rows(mesh, sp, true, r);
        let mut g = Mat::<f64>::zeros(drows.nrows(), cs.ndof);
        cs.scatter_rows(l, &drows, &mut g, 0);
        let gw = data.wm.dot_grad(mesh, e, i, r);
        mean -= data.wm.dot_grad(mesh, e, i, 0)[0];
        mean_scale += el.vol.sqrt() * norm(el.grad[i]) * data.wnorm[e];
        blocks.push((g, gw.iter().map(|x| -x).collect::<Vec<_>>()));
        if moments {
            let mrows = value_moment_rows(mesh, sp, true, 0);
            let mut g = Mat::<f64>::zeros(3, cs.ndof);
            cs.scatter_rows(l, &mrows, &mut g, 0);
            blocks.push((g, target.moments(el.vol, 0)));
        }
    }
    let loc = || format!("patch of vertex {a}");
    log.record(checks::THETA_TARGET, loc, rel(target_res.sqrt(), target_norm.sqrt()), opts)?;
    if !matches!(patch.class, PatchClass::Dirichlet { .. }) {
        log.record(checks::THETA_MEAN, loc, rel(mean.abs(), mean_scale), opts)?;
    }
    if moments {
        let (res, scale) = theta_orthogonality(mesh, patch, iota, data);
        log.record(checks::THETA_ORTH, loc, rel(res, scale), opts)?;
    }
    if cs.ndof == 0 {
        return Ok(PatchField::new(patch.elems.clone(), vec![VPoly::zeros(cs.deg()); patch.elems.len()]));
    }
    let (amat, rhs) = stack(blocks, cs.ndof);
    let prob = KktProblem::new(cs.mass(), cs.loads(&loads), amat, rhs).with_tol(opts.tol_feas).with_context(format!("theta_a at vertex {a}"));
    let sol = cls::solve(&prob)?;
    Ok(PatchField::new(patch.elems.clone(), cs.field(&sol.x)))
}

/// Largest `|(grad psi_a x iota, grad psi_b) + (g, psi_b)|` over patch hats
/// `psi_b` vanishing on the Dirichlet faces at the vertex, with its scale.
fn theta_orthogonality(mesh: &TetMesh, patch: &VertexPatch, iota: &[VPoly], data: &CurlData) -> (f64, f64) {
    let gd = patch.gamma_d();
    let mut verts: Vec<usize> = patch.elems.iter().flat_map(|&t| mesh.elems[t].verts).collect();
    verts.sort_unstable();
    verts.dedup();
    verts.retain(|b| !gd.iter().any(|&f| mesh.faces[f].verts.contains(b)));
    let m1 = monomials(1);
    let mut worst = 0.0f64;
    let mut worst_scale = 0.0f64;
    for b in verts {
        let mut s = 0.0;
        let mut scale = 0.0;
        for (&e, &i) in patch.elems.iter().zip(&patch.local) {
            let el = &mesh.elems[e];
            let Some(j) = el.local_index(b) else { continue };
            let c = cross(el.grad[j], el.grad[i]);
            s += iota[e].dot_const(&c).integral(el.vol);
            let mut aj = [0u8; 4];
            aj[j] = 1;
            s -= data.wm.dot_grad(mesh, e, i, 1)[m1.index(aj)];
            scale += el.vol.sqrt() * (norm(c) * iota[e].norm_sq(el.vol).sqrt() + norm(el.grad[i]) * data.wnorm[e]);
        }
        if rel(s.abs(), scale) >= rel(worst, worst_scale) {
            worst = s.abs();
            worst_scale = scale;
        }
    }
    (worst, worst_scale)
}

/// `delta = sum_a theta_a`, with its divergence, conformity and
/// constant-moment checks.
/// Sum of the `theta_a`; `moments` records the zero constant moments that
/// the canonical variant imposes.
pub fn phc_delta(mesh: &TetMesh, theta_a: &[PatchField], deg: usize, moments: bool, opts: &SolveOpts, log: &mut CheckLog) -> Result<Vec<VPoly>> {
    let mut delta = vec![VPoly::zeros(deg); mesh.n_elems()];
    let mut scale = 0.0;
    for t in theta_a {
        scale += t.norm_sq(mesh);
        for (&e, f) in t.elems.iter().zip(&t.polys) {
            delta[e] = delta[e].add(f);
        }
    }
    let scale = scale.sqrt();
    let mut dv = 0.0;
    for (e, d) in delta.iter().enumerate() {
        let el = &mesh.elems[e];
        dv += div(el, d).norm_sq(el.vol) * el.h * el.h;
        if moments {
            let m = d.moments(el.vol, 0);
            let r = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt() / el.vol.sqrt();
            log.record(checks::DELTA_CONST, || format!("element {e}"), rel(r, scale), opts)?;
        }
    }
    log.record(checks::DELTA_DIV, || "mesh".into(), rel(dv.sqrt(), scale), opts)?;
    log.record(checks::DELTA_JUMP, || "mesh".into(), rel(global_jump(mesh, TraceKind::Normal, &delta), scale), opts)?;
    Ok(delta)
}

/// Divergence-free piece of `delta` attached to local vertex `i` of `e`:
/// `arg min ||I(psi_a delta) - v_h||_K` over `RT_r(K)` with `div v_h = 0`
/// and normal trace equal to that of `I(psi_a delta)`.
/// `floor` is the coefficient size of the `theta_a` on `e`; `delta` is
/// often pure cancellation error of those.
#[allow(clippy::too_many_arguments)]
pub fn phc_delta_split(
    mesh: &TetMesh,
    cache: &SpaceCache,
    e: usize,
    delta: &VPoly,
    i: usize,
    r: usize,
    floor: f64,
    opts: &SolveOpts,
) -> Result<VPoly> {
    let el = &mesh.elems[e];
    let sp = cache.get(mesh, e, Family::Rt, r);
    let target = canonical_rt(mesh, cache, e, r, &delta.mul_lambda(i));
    let (dofs, keys) = dof_values(mesh, e, Family::Rt, r, &target);
    let drows = div_moment_rows(mesh, &sp, true, r);
    let face: Vec<usize> = keys.iter().enumerate().filter(|(_, k)| matches!(k, DofKey::Face(..))).map(|(j, _)| j).collect();
    let n = sp.dim();
    let mut a = Mat::<f64>::zeros(drows.nrows() + face.len(), n);
    let mut rhs = vec![0.0; drows.nrows()];
    for j in 0..n {
        for k in 0..drows.nrows() {
            a[(k, j)] = drows[(k, j)];
        }
    }
    for (row, &j) in face.iter().enumerate() {
        a[(drows.nrows() + row, j)] = 1.0;
        rhs.push(dofs[j]);
    }
    let load = sp.loads_dual(&target.moments(el.vol, sp.deg));
    let prob = KktProblem::new(sp.mass_dual.clone(), load, a, rhs)
        .with_tol(opts.tol_feas)
        .with_scale_floor(floor)
        .with_context(format!("delta split on element {e} at vertex {}", el.verts[i]));
    Ok(sp.field_dual(&cls::solve(&prob)?.x))
}

/// Patch problem for `h_a` on `ND_p(T_a) ∩ H_a(curl)` with `curl h_a = datum`.
/// `floor` is the size of the terms the datum was summed from; on small
/// boundary patches the datum itself can be pure cancellation error.
#[allow(clippy::too_many_arguments)]
pub fn phc_h_a(
    mesh: &TetMesh,
    cache: &SpaceCache,
    patch: &VertexPatch,
    iota: &[VPoly],
    datum: &PatchField,
    floor: f64,
    p: usize,
    variant: Variant,
    opts: &SolveOpts,
    log: &mut CheckLog,
) -> Result<PatchField> {
    let a = patch.vertex;
    let dn = datum.norm_sq(mesh).sqrt();
    let scale = dn.max(floor).max(datum.elems.iter().zip(&datum.polys).map(|(&e, f)| f.max_abs() * mesh.elems[e].vol.sqrt()).fold(0.0, f64::max));
    let jump = patch_jump(mesh, patch, TraceKind::Normal, datum);
    let dv: f64 = datum.elems.iter().zip(&datum.polys).map(|(&e, f)| div(&mesh.elems[e], f).norm_sq(mesh.elems[e].vol) * mesh.elems[e].h.powi(2)).sum();
    log.record(checks::DATUM_JUMP, || format!("patch of vertex {a}"), rel(jump, scale), opts)?;
    log.record(checks::DATUM_DIV, || format!("patch of vertex {a}"), rel(dv.sqrt(), scale), opts)?;
    let cs = ConfSpace::new(mesh, cache, &patch.elems, Family::Nd, p, Essential::Patch(patch));
    let mut loads = Vec::new();
    let mut blocks = Vec::new();
    for (l, (&e, &i)) in patch.elems.iter().zip(&patch.local).enumerate() {
        let el = &mesh.elems[e];
        let cut = iota[e].mul_lambda(i);
        let target = match variant {
            Variant::Canonical => canonical_nd(mesh, cache, e, p, &cut),
            Variant::Alternative => cut,
        };
        loads.push(target.moments(el.vol, cs.deg()));
        let d = &datum.polys[l];
        let crows = curl_moment_rows(mesh, &cs.spaces[l], true, d.deg);
        let mut g = Mat::<f64>::zeros(crows.nrows(), cs.ndof);
        cs.scatter_rows(l, &crows, &mut g, 0);
        blocks.push((g, d.moments(el.vol, d.deg)));
    }
    if cs.ndof == 0 {
        return Ok(PatchField::new(patch.elems.clone(), vec![VPoly::zeros(cs.deg()); patch.elems.len()]));
    }
    let (amat, rhs) = stack(blocks, cs.ndof);
    let prob = KktProblem::new(cs.mass(), cs.loads(&loads), amat, rhs).with_tol(opts.tol_feas).with_context(format!("h_a at vertex {a}"));
    let sol = cls::solve(&prob)?;
    Ok(PatchField::new(patch.elems.clone(), cs.field(&sol.x)))
}

#[derive(Clone, Debug, Default)]
pub struct HcurlDiagnostics {
    pub checks: CheckLog,
    /// Largest Euler-Lagrange residual of the broken `iota` problems.
    pub iota_el: f64,
    /// `||curl h - sigma|| / ||sigma||` (canonical) or
    /// `||curl h - sigma - delta|| / (||sigma|| + ||delta||)` (alternative).
    pub commute_residual: f64,
    /// Element with the largest commuting defect.
    pub worst_element: usize,
    /// Tangential jumps of `h` on interior and Neumann faces, relative.
    pub tangential_jump: f64,
}

#[derive(Clone, Debug)]
pub struct HcurlProjection {
    pub p: usize,
    pub variant: Variant,
    pub hdiv: HdivProjection,
    pub iota: Vec<VPoly>,
    pub vertices: Vec<usize>,
    pub theta_a: Vec<PatchField>,
    pub delta: Vec<VPoly>,
    /// `delta_split[e][i]`: piece of `delta` on `e` attached to local vertex `i`.
    pub delta_split: Vec<Vec<VPoly>>,
    pub h_a: Vec<PatchField>,
    pub h: Vec<VPoly>,
    pub diag: HcurlDiagnostics,
}

/// Apply the H(curl) projector to `v`, with `w = curl v` supplied as data.
pub fn phc_apply(
    mesh: &TetMesh,
    cache: &SpaceCache,
    v: &dyn VectorSource,
    w: &dyn VectorSource,
    p: usize,
    variant: Variant,
    opts: &HcurlOpts,
) -> Result<HcurlProjection> {
    if variant == Variant::Alternative && p == 0 {
        return Err(Error::Invalid("the alternative variant needs p >= 1".into()));
    }
    let data = CurlData::new(mesh, cache, v, w, p)?;
    phc_apply_data(mesh, cache, &data, p, variant, opts)
}

pub fn phc_apply_data(mesh: &TetMesh, cache: &SpaceCache, data: &CurlData, p: usize, variant: Variant, opts: &HcurlOpts) -> Result<HcurlProjection> {
    let so = &opts.solve;
    let mut hdiv = phd_apply_moments(mesh, cache, &data.wm, p, variant, so)?;
    let q = tau_degree(p, variant);
    let mut log = CheckLog::default();
    let mut iota = Vec::with_capacity(mesh.n_elems());
    let mut iota_el = 0.0f64;
    for e in 0..mesh.n_elems() {
        let (f, el) = phc_iota(mesh, cache, e, q, &data.vm, &hdiv.tau[e], so)?;
        iota_el = iota_el.max(el);
        iota.push(f);
    }
    let r = match variant {
        Variant::Canonical => p + 1,
        Variant::Alternative => p,
    };
    let vertices = hdiv.vertices.clone();
    let patches: Vec<VertexPatch> = vertices.iter().map(|&a| mesh.vertex_patch(a)).collect::<Result<_>>()?;
    if let Some(a) = opts.corrupt_sigma {
        if let Some(k) = vertices.iter().position(|&b| b == a) {
            for f in &mut hdiv.sigma_a[k].polys {
                *f = f.scale(1.001);
            }
        }
    }
    let mut theta_a = Vec::with_capacity(vertices.len());
    for patch in &patches {
        theta_a.push(phc_theta(mesh, cache, patch, &iota, data, r, variant == Variant::Canonical, so, &mut log)?);
    }
    let delta = phc_delta(mesh, &theta_a, r + 1, variant == Variant::Canonical, so, &mut log)?;
    let mut delta_split: Vec<Vec<VPoly>> = Vec::new();
    if variant == Variant::Canonical {
        // delta vanishes in exact arithmetic for some data, so measure
        // against the theta_a it is summed from
        let tscale = theta_a.iter().map(|t| t.norm_sq(mesh)).sum::<f64>().sqrt();
        let dscale = delta.iter().zip(&mesh.elems).map(|(d, el)| d.norm_sq(el.vol)).sum::<f64>().sqrt().max(tscale);
        let mut sum_res = 0.0;
        let mut div_res = 0.0;
        for (e, d) in delta.iter().enumerate() {
            let el = &mesh.elems[e];
            let floor = theta_a
                .iter()
                .filter_map(|t| t.get(e))
                .map(|f| f.max_abs())
                .fold(0.0, f64::max);
            let parts = (0..4).map(|i| phc_delta_split(mesh, cache, e, d, i, r, floor, so)).collect::<Result<Vec<_>>>()?;
            let mut s = VPoly::zeros(r + 1);
            for f in &parts {
                s = s.add(f);
                div_res += div(el, f).norm_sq(el.vol) * el.h * el.h;
            }
            sum_res += s.sub(d).norm_sq(el.vol);
            delta_split.push(parts);
        }
        log.record(checks::SPLIT_SUM, || "mesh".into(), rel(sum_res.sqrt(), dscale), so)?;
        log.record(checks::SPLIT_DIV, || "mesh".into(), rel(div_res.sqrt(), dscale), so)?;
        for patch in &patches {
            let f = PatchField::new(patch.elems.clone(), patch.elems.iter().zip(&patch.local).map(|(&e, &i)| delta_split[e][i].clone()).collect());
            let j = patch_jump(mesh, patch, TraceKind::Normal, &f);
            log.record(checks::SPLIT_JUMP, || format!("patch of vertex {}", patch.vertex), rel(j, dscale), so)?;
        }
    }
    let mut h = vec![VPoly::zeros(p + 1); mesh.n_elems()];
    let mut h_a = Vec::with_capacity(vertices.len());
    for (k, patch) in patches.iter().enumerate() {
        let mut floor = 0.0;
        let datum: Vec<VPoly> = patch
            .elems
            .iter()
            .zip(&patch.local)
            .enumerate()
            .map(|(l, (&e, &i))| {
                let vol = mesh.elems[e].vol;
                let s = &hdiv.sigma_a[k].polys[l];
                let t = &theta_a[k].polys[l];
                match variant {
                    Variant::Canonical => {
                        let d = &delta_split[e][i];
                        floor += s.norm_sq(vol) + t.norm_sq(vol) + d.norm_sq(vol);
                        s.add(&canonical_rt(mesh, cache, e, p, &t.sub(d)))
                    }
                    Variant::Alternative => {
                        floor += s.norm_sq(vol) + t.norm_sq(vol);
                        s.add(t)
                    }
                }
            })
            .collect();
        let datum = PatchField::new(patch.elems.clone(), datum);
        let f = phc_h_a(mesh, cache, patch, &iota, &datum, floor.sqrt(), p, variant, so, &mut log)?;
        for (&e, g) in f.elems.iter().zip(&f.polys) {
            h[e] = h[e].add(g);
        }
        h_a.push(f);
    }
    // commuting defect
    let mut num = 0.0;
    let mut den = 0.0;
    let mut worst = (0.0, 0);
    for e in 0..mesh.n_elems() {
        let el = &mesh.elems[e];
        let mut rhs = hdiv.sigma[e].clone();
        if variant == Variant::Alternative {
            rhs = rhs.add(&delta[e]);
        }
        let d = curl(el, &h[e]).sub(&rhs).norm_sq(el.vol);
        if d > worst.0 {
            worst = (d, e);
        }
        num += d;
        den += rhs.norm_sq(el.vol);
    }
    let hn = h.iter().zip(&mesh.elems).map(|(f, el)| f.norm_sq(el.vol)).sum::<f64>().sqrt();
    let diag = HcurlDiagnostics {
        checks: log,
        iota_el,
        commute_residual: if num == 0.0 { 0.0 } else { num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE) },
        worst_element: worst.1,
        tangential_jump: rel(global_jump(mesh, TraceKind::Tangential, &h), hn),
    };
    Ok(HcurlProjection { p, variant, hdiv, iota, vertices, theta_a, delta, delta_split, h_a, h, diag })
}

/// Whether `v` has zero tangential trace on the Neumann faces (needed by
/// the compatibility of the patch problems), measured by face quadrature.
pub fn neumann_trace(mesh: &TetMesh, v: &[VPoly]) -> f64 {
    let get = |e: usize| v.get(e);
    (0..mesh.faces.len())
        .filter(|&f| mesh.faces[f].tag == FaceTag::Neumann)
        .map(|f| crate::traces::face_jump_sq(mesh, f, TraceKind::Tangential, &get))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;
    use crate::source::{AnalyticVector, BrokenVector, Zero};
    use std::sync::Arc;

    #[test]
    fn h_a_reaches_curl_of_patch_field() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        for p in 0..2 {
            for a in [0usize, 1] {
                let patch = m.vertex_patch(a).unwrap();
                let cs = ConfSpace::new(&m, &c, &patch.elems, Family::Nd, p, Essential::Patch(&patch));
                let x: Vec<f64> = (0..cs.ndof).map(|i| ((i * 7919 % 113) as f64 / 56.0) - 1.0).collect();
                let u = cs.field(&x);
                let d: Vec<VPoly> = patch.elems.iter().zip(&u).map(|(&e, f)| curl(&m.elems[e], f).raise_to(p + 1)).collect();
                let datum = PatchField::new(patch.elems.clone(), d);
                let iota = vec![VPoly::zeros(p + 1); m.n_elems()];
                let mut log = CheckLog::default();
                let h = phc_h_a(&m, &c, &patch, &iota, &datum, 0.0, p, Variant::Canonical, &SolveOpts::default(), &mut log);
                assert!(h.is_ok(), "p={p} a={a} {:?} ndof={}", h.err(), cs.ndof);
            }
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let r = phc_apply(&m, &c, &Zero, &Zero, 1, Variant::Canonical, &HcurlOpts::default()).unwrap();
        assert!(r.h.iter().all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn constant_field_reproduced() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let k = VPoly::constant([0.3, -1.0, 2.0]);
        let v = BrokenVector::new(&m, vec![k.clone(); m.n_elems()]);
        let w = v.curl(&m);
        for p in 0..2 {
            let r = phc_apply(&m, &c, &v, &w, p, Variant::Canonical, &HcurlOpts::default()).unwrap();
            for e in 0..m.n_elems() {
                assert!(r.iota[e].sub(&k).max_abs() < 1e-12);
                assert!(r.h[e].sub(&k).max_abs() < 1e-11, "p={p} e={e}");
                assert!(r.delta[e].max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn commutes_for_trig_field() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let pi = std::f64::consts::PI;
        let v = AnalyticVector::new(Arc::new(move |x: [f64; 3]| [(pi * x[1]).sin(), (pi * x[2]).sin(), (pi * x[0]).sin()]), None, 16);
        let w = AnalyticVector::solenoidal(
            Arc::new(move |x: [f64; 3]| [-pi * (pi * x[2]).cos(), -pi * (pi * x[0]).cos(), -pi * (pi * x[1]).cos()]),
            16,
        );
        for p in 0..2 {
            let r = phc_apply(&m, &c, &v, &w, p, Variant::Canonical, &HcurlOpts::default()).unwrap();
            assert!(r.diag.commute_residual < 1e-9, "p={p}: {:?}", r.diag);
            assert!(r.diag.tangential_jump < 1e-10, "p={p}: {:?}", r.diag);
            assert!(r.diag.checks.worst() < 1e-10, "p={p}: {:?}", r.diag.checks);
        }
    }
}
