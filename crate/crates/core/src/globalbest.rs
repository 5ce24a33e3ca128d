//! Global best approximations over the conforming spaces, and the local
//! (elementwise) quantities they are compared with.

use crate::cls::{self, KktProblem};
use crate::error::{Error, Result};
use crate::hdiv_proj::{phd_apply, stack, SolveOpts, Variant};
use crate::interp::l2_project;
use crate::mesh::TetMesh;
use crate::polyspace::basis::div_moment_rows;
use crate::polyspace::{curl, div, dof_values, ConfSpace, Essential, Family, SPoly, SpaceCache, VPoly};
use crate::source::{BrokenVector, VectorSource};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};

/// Conforming `ND_q` or `RT_q` space on the whole mesh with the Neumann
/// traces removed.
pub struct ConformingSystem {
    pub space: ConfSpace,
}

impl ConformingSystem {
    pub fn new(mesh: &TetMesh, cache: &SpaceCache, family: Family, q: usize) -> Self {
        let all: Vec<usize> = (0..mesh.n_elems()).collect();
        ConformingSystem { space: ConfSpace::new(mesh, cache, &all, family, q, Essential::Neumann) }
    }

    pub fn ndof(&self) -> usize {
        self.space.ndof
    }

    pub fn to_broken(&self, x: &[f64]) -> Vec<VPoly> {
        self.space.field(x)
    }

    /// Global coefficients of a conforming field given elementwise; each
    /// shared functional is read from the first element that carries it.
    pub fn from_broken(&self, mesh: &TetMesh, polys: &[VPoly]) -> Vec<f64> {
        let mut x = vec![f64::NAN; self.ndof()];
        for (l, &e) in self.space.elems.iter().enumerate() {
            let (vals, _) = dof_values(mesh, e, self.space.family, self.space.q, &polys[e]);
            for (j, g) in self.space.map[l].iter().enumerate() {
                if let Some(g) = g {
                    if x[*g].is_nan() {
                        x[*g] = vals[j];
                    }
                }
            }
        }
        x
    }
}

/// Sparse matrix accumulated from element blocks.
struct Assembly {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Assembly {
    fn new(n: usize) -> Self {
        Assembly { n, entries: Vec::new() }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    /// Symmetric pair of off-diagonal blocks.
    fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, v);
        self.add(j, i, v);
    }

    fn build(mut self) -> Result<SparseColMat<usize, f64>> {
        self.entries.sort_by_key(|&(i, j, _)| (j, i));
        let mut trip: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(self.entries.len());
        for (i, j, v) in self.entries {
            match trip.last_mut() {
                Some(t) if t.row == i && t.col == j => t.val += v,
                _ => trip.push(Triplet::new(i, j, v)),
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip).map_err(|e| Error::Invalid(format!("sparse assembly: {e:?}")))
    }
}

fn col_to_vec(c: &Col<f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

#[derive(Clone, Debug)]
pub struct BestApprox {
    pub coeffs: Vec<f64>,
    pub field: Vec<VPoly>,
    /// Value of the minimized functional.
    pub value: f64,
}

/// `min ||v - v_h||^2 + sum_K (h_K/(p+1) ||curl(v - v_h)||_K)^2` over
/// `ND_p(T_h) ∩ H_{0,N}(curl)`; `w` is `curl v`.
pub fn global_unconstrained_best(
    mesh: &TetMesh,
    cache: &SpaceCache,
    v: &dyn VectorSource,
    w: &dyn VectorSource,
    p: usize,
) -> Result<BestApprox> {
    let sys = ConformingSystem::new(mesh, cache, Family::Nd, p);
    let cs = &sys.space;
    let n = cs.ndof;
    let mut asm = Assembly::new(n);
    let mut b = vec![0.0; n];
    let weight = |e: usize| (mesh.elems[e].h / (p + 1) as f64).powi(2);
    for (l, &e) in cs.elems.iter().enumerate() {
        let sp = &cs.spaces[l];
        let el = &mesh.elems[e];
        let curls: Vec<VPoly> = (0..sp.dim()).map(|j| curl(el, &sp.dual_fn(j))).collect();
        let wk = weight(e);
        let lv = sp.loads_dual(&v.moments(mesh, e, sp.deg)?);
        let wm = w.moments(mesh, e, sp.deg - 1)?;
        let map = &cs.map[l];
        for (i, gi) in map.iter().enumerate() {
            let Some(gi) = *gi else { continue };
            let lw: f64 = curls[i].c.iter().zip(&wm).map(|(a, m)| a * m).sum();
            b[gi] += lv[i] + wk * lw;
            for (j, gj) in map.iter().enumerate() {
                if let Some(gj) = *gj {
                    asm.add(gi, gj, sp.mass_dual[(i, j)] + wk * curls[i].inner(&curls[j], el.vol));
                }
            }
        }
    }
    let x = if n == 0 {
        vec![]
    } else {
        let a = asm.build()?;
        let llt = a.sp_cholesky(Side::Lower).map_err(|e| Error::NotSpd(format!("global curl-weighted system: {e:?}")))?;
        col_to_vec(&llt.solve(Col::from_fn(n, |i| b[i])))
    };
    let field = sys.to_broken(&x);
    let mut value = 0.0;
    for (e, f) in field.iter().enumerate() {
        value += v.dist2(mesh, e, f)? + weight(e) * w.dist2(mesh, e, &curl(&mesh.elems[e], f))?;
    }
    Ok(BestApprox { coeffs: x, field, value })
}

/// Solution of the saddle-point system that minimizes `||v - v_h||` over
/// `ND_p(T_h) ∩ H_{0,N}(curl)` subject to `curl v_h` being the divergence-free
/// L2 projection of `t` onto `RT_p(T_h) ∩ H_{0,N}(div)`.
#[derive(Clone, Debug)]
pub struct ThreeField {
    pub v_h: Vec<VPoly>,
    pub r_h: Vec<VPoly>,
    pub q_h: Vec<SPoly>,
}

/// Unknowns `(v_h, r_h, q_h)`:
/// `(v_h, w) + (r_h, curl w) = (v, w)`,
/// `(curl v_h, s) + (q_h, div s) = (t, s)`,
/// `(div r_h, z) = 0`,
/// with `q_h` of mean zero when there is no Dirichlet boundary.
pub fn three_field(mesh: &TetMesh, cache: &SpaceCache, v: &dyn VectorSource, t: &dyn VectorSource, p: usize) -> Result<ThreeField> {
    let nd = ConformingSystem::new(mesh, cache, Family::Nd, p);
    let rt = ConformingSystem::new(mesh, cache, Family::Rt, p);
    let np = crate::polyspace::space_dimension(Family::P, p);
    let (n1, n2) = (nd.ndof(), rt.ndof());
    let n3 = np * mesh.n_elems();
    let border = !mesh.has_dirichlet();
    let n = n1 + n2 + n3 + usize::from(border);
    let mut asm = Assembly::new(n);
    let mut b = vec![0.0; n];
    for e in 0..mesh.n_elems() {
        let el = &mesh.elems[e];
        let (snd, srt) = (&nd.space.spaces[e], &rt.space.spaces[e]);
        let sp = cache.get(mesh, e, Family::P, p);
        let (mnd, mrt) = (&nd.space.map[e], &rt.space.map[e]);
        let lv = snd.loads_dual(&v.moments(mesh, e, snd.deg)?);
        let lt = srt.loads_dual(&t.moments(mesh, e, srt.deg)?);
        let curls: Vec<VPoly> = (0..snd.dim()).map(|j| curl(el, &snd.dual_fn(j))).collect();
        let rts: Vec<VPoly> = (0..srt.dim()).map(|j| srt.dual_fn(j)).collect();
        let divs: Vec<SPoly> = rts.iter().map(|f| div(el, f)).collect();
        let qs: Vec<SPoly> = (0..np).map(|k| sp.onb_scalar(k)).collect();
        for (i, gi) in mnd.iter().enumerate() {
            let Some(gi) = *gi else { continue };
            b[gi] += lv[i];
            for (j, gj) in mnd.iter().enumerate() {
                if let Some(gj) = *gj {
                    asm.add(gi, gj, snd.mass_dual[(i, j)]);
                }
            }
            for (j, gj) in mrt.iter().enumerate() {
                if let Some(gj) = *gj {
                    asm.add_sym(gi, n1 + gj, curls[i].inner(&rts[j], el.vol));
                }
            }
        }
        for (j, gj) in mrt.iter().enumerate() {
            let Some(gj) = *gj else { continue };
            b[n1 + gj] += lt[j];
            for (k, q) in qs.iter().enumerate() {
                asm.add_sym(n1 + gj, n1 + n2 + e * np + k, q.inner(&divs[j], el.vol));
            }
        }
        if border {
            for (k, q) in qs.iter().enumerate() {
                asm.add_sym(n1 + n2 + e * np + k, n - 1, q.integral(el.vol));
            }
        }
    }
    let a = asm.build()?;
    let lu = a.sp_lu().map_err(|e| Error::Invalid(format!("three-field system: {e:?}")))?;
    let x = col_to_vec(&lu.solve(Col::from_fn(n, |i| b[i])));
    let v_h = nd.to_broken(&x[..n1]);
    let r_h = rt.to_broken(&x[n1..n1 + n2]);
    let q_h = (0..mesh.n_elems()).map(|e| cache.get(mesh, e, Family::P, p).scalar_onb(&x[n1 + n2 + e * np..n1 + n2 + (e + 1) * np])).collect();
    Ok(ThreeField { v_h, r_h, q_h })
}

fn rel_curl_defect(mesh: &TetMesh, v_h: &[VPoly], target: &[VPoly]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, (f, t)) in v_h.iter().zip(target).enumerate() {
        let el = &mesh.elems[e];
        num += curl(el, f).sub(t).norm_sq(el.vol);
        den += t.norm_sq(el.vol);
    }
    if num == 0.0 {
        0.0
    } else {
        num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE)
    }
}

/// `min ||v - v_h||^2` over `ND_p(T_h) ∩ H_{0,N}(curl)` with `curl v_h = target`;
/// the target must be the curl of a conforming field.
pub fn global_constrained_best(
    mesh: &TetMesh,
    cache: &SpaceCache,
    v: &dyn VectorSource,
    p: usize,
    target: &[VPoly],
    tol_feas: f64,
) -> Result<BestApprox> {
    let t = BrokenVector::new(mesh, target.to_vec());
    let sol = three_field(mesh, cache, v, &t, p)?;
    let res = rel_curl_defect(mesh, &sol.v_h, target);
    if !(res <= tol_feas) {
        return Err(Error::Infeasible { context: "global curl constraint".into(), residual: res });
    }
    let sys = ConformingSystem::new(mesh, cache, Family::Nd, p);
    let mut value = 0.0;
    for (e, f) in sol.v_h.iter().enumerate() {
        value += v.dist2(mesh, e, f)?;
    }
    Ok(BestApprox { coeffs: sys.from_broken(mesh, &sol.v_h), field: sol.v_h, value })
}

/// Same minimization as [`global_constrained_best`], by the dense KKT
/// engine on the conforming ND space. For small meshes.
pub fn global_constrained_best_dense(
    mesh: &TetMesh,
    cache: &SpaceCache,
    v: &dyn VectorSource,
    p: usize,
    target: &[VPoly],
    tol_feas: f64,
) -> Result<BestApprox> {
    let sys = ConformingSystem::new(mesh, cache, Family::Nd, p);
    let cs = &sys.space;
    let mut loads = Vec::new();
    let mut blocks = Vec::new();
    for (l, &e) in cs.elems.iter().enumerate() {
        let el = &mesh.elems[e];
        loads.push(v.moments(mesh, e, cs.deg())?);
        let t = &target[e];
        let rows = crate::polyspace::basis::curl_moment_rows(mesh, &cs.spaces[l], true, t.deg);
        let mut g = faer::Mat::<f64>::zeros(rows.nrows(), cs.ndof);
        cs.scatter_rows(l, &rows, &mut g, 0);
        blocks.push((g, t.moments(el.vol, t.deg)));
    }
    let (a, rhs) = stack(blocks, cs.ndof);
    let prob = KktProblem::new(cs.mass(), cs.loads(&loads), a, rhs).with_tol(tol_feas).with_context("global curl constraint");
    let x = cls::solve(&prob)?.x;
    let field = sys.to_broken(&x);
    let mut value = 0.0;
    for (e, f) in field.iter().enumerate() {
        value += v.dist2(mesh, e, f)?;
    }
    Ok(BestApprox { coeffs: x, field, value })
}

/// Global L2 projection of `w` onto the divergence-free part of
/// `RT_p(T_h) ∩ H_{0,N}(div)`, by the KKT engine.
pub fn mixed_pi_div(mesh: &TetMesh, cache: &SpaceCache, w: &dyn VectorSource, p: usize) -> Result<Vec<VPoly>> {
    let sys = ConformingSystem::new(mesh, cache, Family::Rt, p);
    let cs = &sys.space;
    if cs.ndof == 0 {
        return Ok(vec![VPoly::zeros(p + 1); mesh.n_elems()]);
    }
    let mut loads = Vec::new();
    let mut blocks = Vec::new();
    for (l, &e) in cs.elems.iter().enumerate() {
        loads.push(w.moments(mesh, e, cs.deg())?);
        let rows = div_moment_rows(mesh, &cs.spaces[l], true, p);
        let mut g = faer::Mat::<f64>::zeros(rows.nrows(), cs.ndof);
        cs.scatter_rows(l, &rows, &mut g, 0);
        blocks.push((g, vec![0.0; rows.nrows()]));
    }
    let (a, rhs) = stack(blocks, cs.ndof);
    let prob = KktProblem::new(cs.mass(), cs.loads(&loads), a, rhs).with_context("global divergence-free projection");
    Ok(sys.to_broken(&cls::solve(&prob)?.x))
}

/// Elementwise `min_{ND_q(K)} ||v - v_h||_K^2` and
/// `(h_K/(q+1) ||w - Pi^{RT,q} w||_K)^2`.
#[derive(Clone, Debug, Default)]
pub struct LocalBest {
    pub localbest: Vec<f64>,
    pub oscillation: Vec<f64>,
    pub quad_insufficient: bool,
}

impl LocalBest {
    pub fn localbest_sum(&self) -> f64 {
        self.localbest.iter().sum()
    }

    pub fn oscillation_sum(&self) -> f64 {
        self.oscillation.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.localbest_sum() + self.oscillation_sum()
    }
}

/// Local quantities at degree `q`, with the oscillation weighted by
/// `h_K/(q+1)`.
pub fn localbest_sum(mesh: &TetMesh, cache: &SpaceCache, v: &dyn VectorSource, w: &dyn VectorSource, q: usize) -> Result<LocalBest> {
    let mut out = LocalBest::default();
    for e in 0..mesh.n_elems() {
        let pv = l2_project(mesh, cache, e, Family::Nd, q, v)?;
        let pw = l2_project(mesh, cache, e, Family::Rt, q, w)?;
        out.quad_insufficient |= pv.quad_insufficient || pw.quad_insufficient;
        out.localbest.push(v.dist2(mesh, e, &pv.field)?);
        let hk = mesh.elems[e].h / (q + 1) as f64;
        out.oscillation.push(hk * hk * w.dist2(mesh, e, &pw.field)?);
    }
    Ok(out)
}

/// `lhs / rhs`, with the convention `0/0 = 1`.
pub fn ratio(lhs: f64, rhs: f64, tiny: f64) -> f64 {
    if lhs.abs() <= tiny && rhs.abs() <= tiny {
        1.0
    } else {
        lhs / rhs.max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Debug)]
pub struct Equivalence {
    pub p: usize,
    /// Global unconstrained curl-weighted minimum.
    pub m2: f64,
    /// Global minimum with `curl v_h` fixed to the local commuting projection
    /// of `curl v`, plus the oscillation sum.
    pub constrained: f64,
    /// Sum of local minima plus oscillation at degree `p`.
    pub local: LocalBest,
    pub ratio_constrained: f64,
    pub ratio_unconstrained: f64,
    /// `m2` against the degree `p-1` local quantities (weights `h_K/p`), for `p >= 1`.
    pub local_lowered: Option<LocalBest>,
    pub ratio_lowered: Option<f64>,
}

/// Both sides of the local-global equivalences for `v` with `w = curl v`.
pub fn equivalence_report(
    mesh: &TetMesh,
    cache: &SpaceCache,
    v: &dyn VectorSource,
    w: &dyn VectorSource,
    p: usize,
    opts: &SolveOpts,
) -> Result<Equivalence> {
    let local = localbest_sum(mesh, cache, v, w, p)?;
    let m2 = global_unconstrained_best(mesh, cache, v, w, p)?.value;
    let hdiv = phd_apply(mesh, cache, w, p, Variant::Canonical, opts)?;
    let cb = global_constrained_best(mesh, cache, v, p, &hdiv.sigma, opts.tol_feas)?;
    let constrained = cb.value + local.oscillation_sum();
    let tiny = 1e-28;
    let rhs = local.total();
    let (local_lowered, ratio_lowered) = if p >= 1 {
        let l = localbest_sum(mesh, cache, v, w, p - 1)?;
        let r = ratio(m2, l.total(), tiny);
        (Some(l), Some(r))
    } else {
        (None, None)
    };
    Ok(Equivalence {
        p,
        m2,
        constrained,
        ratio_constrained: ratio(constrained, rhs, tiny),
        ratio_unconstrained: ratio(m2, rhs, tiny),
        local,
        local_lowered,
        ratio_lowered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;
    use crate::source::AnalyticVector;
    use std::sync::Arc;

    fn random_conforming(mesh: &TetMesh, cache: &SpaceCache, family: Family, p: usize, seed: u64) -> Vec<VPoly> {
        use rand::{Rng, SeedableRng};
        let sys = ConformingSystem::new(mesh, cache, family, p);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..sys.ndof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        sys.to_broken(&x)
    }

    #[test]
    fn broken_round_trip() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Mixed).unwrap();
        let c = SpaceCache::new();
        for fam in [Family::Nd, Family::Rt] {
            for p in 0..3 {
                let sys = ConformingSystem::new(&m, &c, fam, p);
                let f = random_conforming(&m, &c, fam, p, 3);
                let x = sys.from_broken(&m, &f);
                let g = sys.to_broken(&x);
                for (a, b) in f.iter().zip(&g) {
                    assert!(a.sub(b).max_abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn discrete_field_is_its_own_best_approximation() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        for p in 0..2 {
            let f = random_conforming(&m, &c, Family::Nd, p, 7);
            let v = BrokenVector::new(&m, f.clone());
            let w = v.curl(&m);
            let g = global_unconstrained_best(&m, &c, &v, &w, p).unwrap();
            assert!(g.value < 1e-20, "{}", g.value);
            let t: Vec<VPoly> = f.iter().zip(&m.elems).map(|(u, el)| curl(el, u)).collect();
            let cb = global_constrained_best(&m, &c, &v, p, &t, 1e-9).unwrap();
            assert!(cb.value < 1e-20);
            let lb = localbest_sum(&m, &c, &v, &w, p).unwrap();
            assert!(lb.total() < 1e-20);
        }
    }

    #[test]
    fn sparse_and_dense_constrained_agree() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Mixed).unwrap();
        let c = SpaceCache::new();
        let v = AnalyticVector::new(Arc::new(|x: [f64; 3]| [x[1] * x[2], (x[0]).sin(), x[0] * x[0]]), None, 12);
        for p in 0..2 {
            let f = random_conforming(&m, &c, Family::Nd, p, 11);
            let t: Vec<VPoly> = f.iter().zip(&m.elems).map(|(u, el)| curl(el, u)).collect();
            let a = global_constrained_best(&m, &c, &v, p, &t, 1e-9).unwrap();
            let b = global_constrained_best_dense(&m, &c, &v, p, &t, 1e-9).unwrap();
            assert!((a.value - b.value).abs() <= 1e-10 * b.value.max(1.0));
            for (x, y) in a.field.iter().zip(&b.field) {
                assert!(x.sub(y).max_abs() < 1e-9);
            }
        }
    }

    #[test]
    fn infeasible_target_is_reported() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        // div t = 1, so t is no curl
        let t: Vec<VPoly> = m.elems.iter().map(|_| VPoly::from_comps([SPoly::lambda(1), SPoly::zeros(1), SPoly::zeros(1)])).collect();
        let v = crate::source::Zero;
        match global_constrained_best(&m, &c, &v, 1, &t, 1e-9) {
            Err(Error::Infeasible { residual, .. }) => assert!(residual > 1e-3),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn mixed_projection_matches_three_field_system() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Neumann).unwrap();
        let c = SpaceCache::new();
        let pi = std::f64::consts::PI;
        let v = AnalyticVector::new(Arc::new(move |x: [f64; 3]| [(pi * x[1]).sin() * x[2], (pi * x[2]).cos(), x[0] * x[1]]), None, 14);
        let w = AnalyticVector::new(Arc::new(move |x: [f64; 3]| [(pi * x[2]).sin() - x[0], (pi * x[1]).sin(), x[0] * x[2]]), None, 14);
        let p = 1;
        let pd = mixed_pi_div(&m, &c, &w, p).unwrap();
        let tf = three_field(&m, &c, &v, &w, p).unwrap();
        let d = rel_curl_defect(&m, &tf.v_h, &pd);
        assert!(d < 1e-9, "{d}");
        for (e, f) in pd.iter().enumerate() {
            assert!(div(&m.elems[e], f).norm_sq(m.elems[e].vol).sqrt() < 1e-11);
        }
    }

    #[test]
    fn ratios_at_least_one() {
        let m = TetMesh::cube_kuhn(0, BoundaryKind::Dirichlet).unwrap();
        let c = SpaceCache::new();
        let pi = std::f64::consts::PI;
        let v = AnalyticVector::new(Arc::new(move |x: [f64; 3]| [(pi * x[1]).sin(), (pi * x[2]).sin(), (pi * x[0]).sin()]), None, 16);
        let w = AnalyticVector::solenoidal(
            Arc::new(move |x: [f64; 3]| [-pi * (pi * x[2]).cos(), -pi * (pi * x[0]).cos(), -pi * (pi * x[1]).cos()]),
            16,
        );
        for p in 0..2 {
            let r = equivalence_report(&m, &c, &v, &w, p, &SolveOpts::default()).unwrap();
            assert!(r.ratio_constrained >= 1.0 - 1e-9);
            assert!(r.ratio_unconstrained >= 1.0 - 1e-9);
        }
    }
}
