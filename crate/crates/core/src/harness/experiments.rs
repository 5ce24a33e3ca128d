//! Experiment drivers. Each returns CSV rows; a FAIL row marks a violated
//! acceptance threshold.

use super::config::ExperimentConfig;
use super::fields::{self, FieldData};
use super::hp::hp_terms;
use super::report::{Context, Report, Status};
use crate::error::{Error, Result};
use crate::globalbest::{equivalence_report, global_unconstrained_best, localbest_sum, mixed_pi_div, ratio, three_field};
use crate::hcurl_proj::{checks, phc_apply, phc_iota, HcurlOpts, HcurlProjection};
use crate::hdiv_proj::{phd_apply, phd_tau, ElementMoments, Variant};
use crate::interp::l2_project;
use crate::mesh::{dot, sub, TetMesh};
use crate::polyspace::{curl, Family, SpaceCache, VPoly};
use crate::source::VectorSource;

/// Commuting and conformity threshold (relative).
pub const TOL_COMMUTE: f64 = 1e-8;
/// Commuting threshold when `Phi^div(curl v) = 0`.
pub const TOL_COMMUTE_ABS: f64 = 1e-10;
pub const TOL_PROJECT: f64 = 1e-10;
pub const TOL_CHECK: f64 = 1e-10;
pub const TOL_RATE: f64 = 0.2;
/// Lower bound slack for the trivially true side of the equivalences.
pub const TOL_RATIO: f64 = 1e-9;
pub const MAX_GROWTH: f64 = 2.0;
pub const TOL_MIXED: f64 = 1e-9;
pub const TOL_MONOTONE: f64 = 1e-12;

pub const COMMANDS: &[&str] = &["check-commute", "check-project", "convergence", "equivalence", "single-tet", "mixed"];

pub fn run(cmd: &str, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    match cmd {
        "check-commute" => run_commute(cfg),
        "check-project" => run_project(cfg),
        "convergence" => run_convergence(cfg),
        "equivalence" => run_equivalence(cfg),
        "single-tet" => run_single_tet(cfg),
        "mixed" => run_mixed(cfg),
        _ => Err(Error::Parse(format!("unknown experiment '{cmd}'"))),
    }
}

/// Least-squares slope of `log e` against `log h`.
pub fn estimate_rate(errors: &[f64], h: &[f64]) -> Result<f64> {
    if errors.len() != h.len() {
        return Err(Error::Invalid(format!("{} errors for {} mesh sizes", errors.len(), h.len())));
    }
    if errors.len() < 2 {
        return Err(Error::Invalid("a rate needs at least two errors".into()));
    }
    if let Some(e) = errors.iter().chain(h).find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Invalid(format!("rate estimate needs positive finite data, got {e}")));
    }
    let n = errors.len() as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("rate estimate needs distinct mesh sizes".into()));
    }
    Ok(sxy / sxx)
}

/// `max / min` of positive values, 1 for fewer than two.
pub fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    if values.len() < 2 {
        1.0
    } else {
        hi / lo.max(f64::MIN_POSITIVE)
    }
}

/// Growth of a sweep relative to its first entry: `max_i values[i] / values[0]`,
/// at least 1. The bounds swept over `p` are one-sided, so decreases do
/// not count.
pub fn growth(values: &[f64]) -> f64 {
    match values.first() {
        Some(&v0) => values.iter().fold(1.0f64, |g, &v| g.max(v / v0.max(f64::MIN_POSITIVE))),
        None => 1.0,
    }
}

/// The base mesh and its uniform refinements.
pub fn levels(cfg: &ExperimentConfig) -> Result<Vec<TetMesh>> {
    let mut out = vec![TetMesh::from_spec(&cfg.mesh)?];
    for _ in 0..cfg.refine {
        let next = out.last().unwrap().uniform_refine()?;
        out.push(next);
    }
    Ok(out)
}

fn context(exp: &str, cfg: &ExperimentConfig, mesh: &TetMesh, level: usize, p: usize) -> Context {
    Context {
        experiment: exp.into(),
        mesh: cfg.mesh.clone(),
        level,
        p,
        variant: cfg.variant.to_string(),
        field: cfg.field.clone(),
        nelem: mesh.n_elems(),
        h: mesh.max_h(),
    }
}

fn field(cfg: &ExperimentConfig, mesh: &TetMesh, cache: &SpaceCache, p: usize) -> Result<FieldData> {
    fields::build(&cfg.field, mesh, cache, p, cfg.quad(p), cfg.seed)
}

/// WARN row when an analytic field has tangential trace on Neumann faces.
fn trace_warning(ctx: &Context, mesh: &TetMesh, fd: &FieldData) -> Option<super::report::Row> {
    let f = fd.analytic.as_ref()?;
    let t = fields::neumann_tangential_max(f, mesh);
    (t > 1e-12).then(|| ctx.row("field-neumann-trace", "max", t, Status::Warn, "field is not in H_0,N(curl); patch problems may be infeasible"))
}

fn hcurl_opts(cfg: &ExperimentConfig) -> HcurlOpts {
    HcurlOpts { solve: cfg.solve_opts(), corrupt_sigma: cfg.corrupt_sigma }
}

/// Turn a located solver failure into a FAIL row; other errors propagate.
fn failure_row(ctx: &Context, e: Error) -> Result<super::report::Row> {
    match e {
        Error::Feasibility { check, location, residual } => Ok(ctx.row(&check, "max", residual, Status::Fail, location)),
        Error::Infeasible { context, residual } => Ok(ctx.row("kkt-feasibility", "max", residual, Status::Fail, context)),
        e => Err(e),
    }
}

fn l2_norm(mesh: &TetMesh, f: &[VPoly]) -> f64 {
    f.iter().zip(&mesh.elems).map(|(u, el)| u.norm_sq(el.vol)).sum::<f64>().sqrt()
}

fn l2_dist(mesh: &TetMesh, a: &[VPoly], b: &[VPoly]) -> f64 {
    a.iter().zip(b).zip(&mesh.elems).map(|((u, v), el)| u.sub(v).norm_sq(el.vol)).sum::<f64>().sqrt()
}

/// `||curl h - target||` and `||target||`, with the target `sigma`
/// (plus `delta` for the alternative variant).
pub fn commute_defect(mesh: &TetMesh, pr: &HcurlProjection) -> (f64, f64) {
    let target: Vec<VPoly> = (0..mesh.n_elems())
        .map(|e| match pr.variant {
            Variant::Canonical => pr.hdiv.sigma[e].clone(),
            Variant::Alternative => pr.hdiv.sigma[e].add(&pr.delta[e]),
        })
        .collect();
    let ch: Vec<VPoly> = pr.h.iter().zip(&mesh.elems).map(|(h, el)| curl(el, h)).collect();
    (l2_dist(mesh, &ch, &target), l2_norm(mesh, &target))
}

pub fn run_commute(cfg: &ExperimentConfig) -> Result<Report> {
    let meshes = levels(cfg)?;
    let level = meshes.len() - 1;
    let mesh = &meshes[level];
    let cache = SpaceCache::new();
    let mut rep = Report::default();
    for p in cfg.degrees() {
        let ctx = context("commute", cfg, mesh, level, p);
        let fd = field(cfg, mesh, &cache, p)?;
        rep.rows.extend(trace_warning(&ctx, mesh, &fd));
        let pr = match phc_apply(mesh, &cache, &*fd.v, &*fd.w, p, cfg.variant, &hcurl_opts(cfg)) {
            Ok(pr) => pr,
            Err(e) => {
                rep.push(failure_row(&ctx, e)?);
                continue;
            }
        };
        let (num, den) = commute_defect(mesh, &pr);
        let worst = format!("worst element {}", pr.diag.worst_element);
        if den > 0.0 {
            rep.push(ctx.row("commute-residual", "value", num / den, Status::check(num / den <= TOL_COMMUTE), worst));
        } else {
            rep.push(ctx.row("commute-residual-abs", "value", num, Status::check(num <= TOL_COMMUTE_ABS), worst));
        }
        let d = &pr.hdiv.diag;
        rep.push(ctx.row("hdiv-commute-residual", "value", d.commute_residual, Status::check(d.commute_residual <= TOL_COMMUTE), ""));
        rep.push(ctx.row("hdiv-normal-jump", "value", d.normal_jump, Status::check(d.normal_jump <= TOL_COMMUTE), ""));
        let tj = pr.diag.tangential_jump;
        rep.push(ctx.row("tangential-jump", "value", tj, Status::check(tj <= TOL_COMMUTE), ""));
        for name in checks::ALL {
            if let Some((r, loc)) = pr.diag.checks.entries.get(name) {
                rep.push(ctx.row(name, "max", *r, Status::check(*r <= TOL_CHECK), loc.clone()));
            }
        }
        rep.push(ctx.row("iota-euler-lagrange", "max", pr.diag.iota_el, Status::Info, ""));
        if fd.discrete {
            let v: Vec<VPoly> = (0..mesh.n_elems()).map(|e| fd.v.poly(e).unwrap().clone()).collect();
            let err = l2_dist(mesh, &pr.h, &v) / l2_norm(mesh, &v).max(f64::MIN_POSITIVE);
            rep.push(ctx.row("hcurl-projection-error", "value", err, Status::check(err <= TOL_PROJECT), ""));
        }
    }
    Ok(rep)
}

pub fn run_project(cfg: &ExperimentConfig) -> Result<Report> {
    let meshes = levels(cfg)?;
    let level = meshes.len() - 1;
    let mesh = &meshes[level];
    let cache = SpaceCache::new();
    let mut rep = Report::default();
    for p in cfg.degrees() {
        let mut ctx = context("project", cfg, mesh, level, p);
        ctx.field = "random".into();
        let mut worst_curl = (0.0f64, String::new());
        let mut worst_div = (0.0f64, String::new());
        let mut failed = false;
        for i in 0..cfg.samples as u64 {
            let seed = cfg.seed.wrapping_add(i);
            let v = fields::random_conforming(mesh, &cache, Family::Nd, p, seed);
            let vs = crate::source::BrokenVector::new(mesh, v.clone());
            let ws = vs.curl(mesh);
            match phc_apply(mesh, &cache, &vs, &ws, p, cfg.variant, &hcurl_opts(cfg)) {
                Ok(pr) => {
                    let err = l2_dist(mesh, &pr.h, &v) / l2_norm(mesh, &v).max(f64::MIN_POSITIVE);
                    if err >= worst_curl.0 {
                        worst_curl = (err, format!("seed {seed}"));
                    }
                }
                Err(e) => {
                    rep.push(failure_row(&ctx, e)?);
                    failed = true;
                }
            }
            let seed = cfg.seed.wrapping_add(1_000_000 + i);
            let w = fields::random_conforming(mesh, &cache, Family::Rt, p, seed);
            let wsrc = crate::source::BrokenVector::new(mesh, w.clone());
            match phd_apply(mesh, &cache, &wsrc, p, cfg.variant, &cfg.solve_opts()) {
                Ok(pr) => {
                    let err = l2_dist(mesh, &pr.sigma, &w) / l2_norm(mesh, &w).max(f64::MIN_POSITIVE);
                    if err >= worst_div.0 {
                        worst_div = (err, format!("seed {seed}"));
                    }
                }
                Err(e) => {
                    rep.push(failure_row(&ctx, e)?);
                    failed = true;
                }
            }
        }
        if !failed {
            // the lowered-degree variant is not a projector
            let st = |e: f64| match cfg.variant {
                Variant::Canonical => Status::check(e <= TOL_PROJECT),
                Variant::Alternative => Status::Info,
            };
            rep.push(ctx.row("hcurl-projection-error", "max", worst_curl.0, st(worst_curl.0), worst_curl.1));
            rep.push(ctx.row("hdiv-projection-error", "max", worst_div.0, st(worst_div.0), worst_div.1));
        }
    }
    Ok(rep)
}

/// Expected convergence order `min(p+1, s)`.
fn expected_rate(p: usize, fd: &FieldData) -> f64 {
    let s = fd.analytic.as_ref().map_or(f64::INFINITY, |f| f.s);
    ((p + 1) as f64).min(s)
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Report> {
    let meshes = levels(cfg)?;
    let cache = SpaceCache::new();
    let mut rep = Report::default();
    for p in cfg.degrees() {
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        let mut discrete = false;
        let mut expected = (p + 1) as f64;
        for (level, mesh) in meshes.iter().enumerate() {
            let ctx = context("convergence", cfg, mesh, level, p);
            let fd = field(cfg, mesh, &cache, p)?;
            discrete = fd.discrete;
            expected = expected_rate(p, &fd);
            let m2 = global_unconstrained_best(mesh, &cache, &*fd.v, &*fd.w, p)?.value;
            let e = m2.max(0.0).sqrt();
            rep.push(ctx.row("m", "value", e, Status::Info, "square root of the global curl-weighted minimum"));
            errs.push(e);
            hs.push(mesh.max_h());
        }
        let last = meshes.last().unwrap();
        let ctx = context("convergence", cfg, last, meshes.len() - 1, p);
        if discrete {
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            rep.push(ctx.row("rate", "trend", f64::NAN, Status::check(worst <= 1e-10), format!("exact: field is discrete, largest error {worst:e}")));
            continue;
        }
        if meshes.len() < 3 {
            rep.push(ctx.row("rate", "trend", f64::NAN, Status::Warn, "fewer than three levels"));
        }
        if errs.windows(2).any(|w| w[1] >= w[0] * (1.0 - TOL_MONOTONE)) {
            rep.push(ctx.row("monotone", "trend", 0.0, Status::Warn, "error sequence is not decreasing"));
        }
        if meshes.len() >= 2 {
            let rate = estimate_rate(&errs, &hs)?;
            let ok = (rate - expected).abs() <= TOL_RATE;
            rep.push(ctx.row("rate", "trend", rate, Status::check(ok), format!("expected {expected} +- {TOL_RATE}")));
        }
    }
    Ok(rep)
}

/// Whether every vertex patch is convex: each patch boundary face must
/// leave all patch vertices on its inner side.
pub fn nonconvex_patches(mesh: &TetMesh) -> Result<Vec<usize>> {
    let mut bad = Vec::new();
    for a in mesh.active_vertices() {
        let patch = mesh.vertex_patch(a)?;
        let verts: Vec<usize> = {
            let mut v: Vec<usize> = patch.elems.iter().flat_map(|&e| mesh.elems[e].verts).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut convex = true;
        'faces: for &f in &patch.boundary_faces {
            let Some((e, i)) = patch.elems.iter().find_map(|&e| mesh.elems[e].faces.iter().position(|&g| g == f).map(|i| (e, i))) else {
                continue;
            };
            let el = &mesh.elems[e];
            // grad l_i points from the face into the element
            let n = el.grad[i];
            let x0 = mesh.nodes[mesh.faces[f].verts[0]];
            let tol = 1e-10 * el.h * crate::mesh::norm(n);
            for &v in &verts {
                if dot(n, sub(mesh.nodes[v], x0)) < -tol {
                    convex = false;
                    break 'faces;
                }
            }
        }
        if !convex {
            bad.push(a);
        }
    }
    Ok(bad)
}

pub fn run_equivalence(cfg: &ExperimentConfig) -> Result<Report> {
    let meshes = levels(cfg)?;
    let cache = SpaceCache::new();
    let opts = cfg.solve_opts();
    let mut rep = Report::default();
    let degrees = cfg.degrees();
    let finest = meshes.len() - 1;
    let mut lowered_at_finest = Vec::new();
    for &p in &degrees {
        let mut rc = Vec::new();
        let mut ru = Vec::new();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for (level, mesh) in meshes.iter().enumerate() {
            let ctx = context("equivalence", cfg, mesh, level, p);
            let fd = field(cfg, mesh, &cache, p)?;
            let eq = match equivalence_report(mesh, &cache, &*fd.v, &*fd.w, p, &opts) {
                Ok(eq) => eq,
                Err(e) => {
                    rep.push(failure_row(&ctx, e)?);
                    continue;
                }
            };
            let lmax = eq.local.localbest.iter().cloned().fold(0.0, f64::max);
            rep.push(ctx.row("m2", "value", eq.m2, Status::Info, "global curl-weighted minimum"));
            rep.push(ctx.row("constrained", "value", eq.constrained, Status::Info, "constrained global minimum plus oscillation"));
            rep.push(ctx.row("localbest", "sum", eq.local.localbest_sum(), Status::Info, ""));
            rep.push(ctx.row("localbest", "max", lmax, Status::Info, ""));
            rep.push(ctx.row("oscillation", "sum", eq.local.oscillation_sum(), Status::Info, ""));
            if eq.local.quad_insufficient {
                rep.push(ctx.row("quadrature", "value", 0.0, Status::Warn, "raising the quadrature degree changed a local projection"));
            }
            let lo = 1.0 - TOL_RATIO;
            rep.push(ctx.row("ratio-constrained", "value", eq.ratio_constrained, Status::check(eq.ratio_constrained >= lo), "lower bound 1"));
            rep.push(ctx.row("ratio-unconstrained", "value", eq.ratio_unconstrained, Status::check(eq.ratio_unconstrained >= lo), "lower bound 1"));
            if let (Some(l), Some(r)) = (&eq.local_lowered, eq.ratio_lowered) {
                rep.push(ctx.row("localbest-lowered", "sum", l.total(), Status::Info, "degree p-1, weight h/p"));
                rep.push(ctx.row("ratio-lowered", "value", r, Status::Info, ""));
                if level == finest {
                    lowered_at_finest.push((p, r));
                }
            }
            if let Some(f) = &fd.analytic {
                let hp = hp_terms(mesh, &cache, &*fd.v, &*fd.w, p + 1, f.s, f.t)?;
                let total: f64 = hp.iter().sum();
                rep.push(ctx.row("hp-bound", "sum", total, Status::Info, "sum of v_K^2 with q = p+1"));
                rep.push(ctx.row("ratio-hp", "value", ratio(eq.m2, total, 1e-28), Status::Info, ""));
            }
            rc.push(eq.ratio_constrained);
            ru.push(eq.ratio_unconstrained);
            errs.push(eq.m2.max(0.0).sqrt());
            hs.push(mesh.max_h());
        }
        let ctx = context("equivalence", cfg, &meshes[finest], finest, p);
        for (name, r) in [("ratio-constrained-stability", &rc), ("ratio-unconstrained-stability", &ru)] {
            if r.len() >= 2 {
                let worst = r.windows(2).map(spread).fold(1.0, f64::max);
                rep.push(ctx.row(name, "trend", worst, Status::check(worst <= MAX_GROWTH), "largest change factor across one refinement"));
            }
        }
        if let Ok(rate) = estimate_rate(&errs, &hs) {
            rep.push(ctx.row("rate", "trend", rate, Status::Info, "slope of sqrt(m2)"));
        }
    }
    if degrees.iter().any(|&p| p >= 1) {
        let mesh = &meshes[finest];
        let p = *degrees.last().unwrap();
        let ctx = context("equivalence", cfg, mesh, finest, p);
        if mesh.has_dirichlet() {
            rep.push(ctx.row("hypothesis-neumann-only", "value", 0.0, Status::Warn, "degree-lowered bound assumes an empty Dirichlet part"));
        }
        let bad = nonconvex_patches(mesh)?;
        let detail = if bad.is_empty() { "all patches convex".to_string() } else { format!("non-convex patches at vertices {bad:?}") };
        rep.push(ctx.row("nonconvex-patches", "value", bad.len() as f64, if bad.is_empty() { Status::Info } else { Status::Warn }, detail));
        if lowered_at_finest.len() >= 2 {
            let vals: Vec<f64> = lowered_at_finest.iter().map(|x| x.1).collect();
            let g = growth(&vals);
            let (a, b) = (lowered_at_finest[0].0, lowered_at_finest.last().unwrap().0);
            rep.push(ctx.row("ratio-lowered-growth", "trend", g, Status::check(g <= MAX_GROWTH), format!("growth from p = {a} over {a}..{b}")));
        }
    }
    Ok(rep)
}

/// Constrained and unconstrained elementwise minima on one element.
#[derive(Clone, Copy, Debug)]
pub struct SingleTet {
    pub p: usize,
    /// `||v - iota||^2` with `curl iota = tau`.
    pub constrained_sq: f64,
    pub unconstrained_sq: f64,
    pub oscillation_sq: f64,
}

impl SingleTet {
    /// `constrained / (unconstrained + oscillation)` in norms.
    pub fn ratio(&self) -> f64 {
        let c = self.constrained_sq.max(0.0).sqrt();
        let r = self.unconstrained_sq.max(0.0).sqrt() + self.oscillation_sq.max(0.0).sqrt();
        ratio(c, r, 1e-14)
    }
}

pub fn single_tet(mesh: &TetMesh, cache: &SpaceCache, v: &dyn VectorSource, w: &dyn VectorSource, p: usize, cfg: &ExperimentConfig) -> Result<SingleTet> {
    let opts = cfg.solve_opts();
    let wm = ElementMoments::new(mesh, w, p + 1, true)?;
    let vm = ElementMoments::new(mesh, v, p + 1, false)?;
    let tau = phd_tau(mesh, cache, 0, p, &wm, &opts)?;
    let (iota, _) = phc_iota(mesh, cache, 0, p, &vm, &tau, &opts)?;
    let pv = l2_project(mesh, cache, 0, Family::Nd, p, v)?.field;
    let pw = l2_project(mesh, cache, 0, Family::Rt, p, w)?.field;
    let hk = mesh.elems[0].h / (p + 1) as f64;
    Ok(SingleTet {
        p,
        constrained_sq: v.dist2(mesh, 0, &iota)?,
        unconstrained_sq: v.dist2(mesh, 0, &pv)?,
        oscillation_sq: hk * hk * w.dist2(mesh, 0, &pw)?,
    })
}

/// Relative slack allowed in `constrained >= unconstrained`.
pub const TOL_ORDER: f64 = 1e-12;

pub fn run_single_tet(cfg: &ExperimentConfig) -> Result<Report> {
    let mesh = TetMesh::from_spec(&cfg.mesh)?;
    if mesh.n_elems() != 1 {
        return Err(Error::Invalid(format!("single-tet needs a one-element mesh, '{}' has {}", cfg.mesh, mesh.n_elems())));
    }
    let cache = SpaceCache::new();
    let mut rep = Report::default();
    let mut ratios = Vec::new();
    for p in cfg.degrees() {
        let ctx = context("single-tet", cfg, &mesh, 0, p);
        let fd = field(cfg, &mesh, &cache, p)?;
        let st = single_tet(&mesh, &cache, &*fd.v, &*fd.w, p, cfg)?;
        rep.push(ctx.row("constrained", "value", st.constrained_sq.max(0.0).sqrt(), Status::Info, ""));
        rep.push(ctx.row("unconstrained", "value", st.unconstrained_sq.max(0.0).sqrt(), Status::Info, ""));
        rep.push(ctx.row("oscillation", "value", st.oscillation_sq.max(0.0).sqrt(), Status::Info, ""));
        let gap = st.constrained_sq - st.unconstrained_sq;
        let ok = gap >= -TOL_ORDER * st.unconstrained_sq;
        rep.push(ctx.row("constrained-minus-unconstrained", "value", gap, Status::check(ok), "squared norms, must be >= 0"));
        rep.push(ctx.row("ratio", "value", st.ratio(), Status::Info, "constrained / (unconstrained + oscillation)"));
        ratios.push(st.ratio());
    }
    if ratios.len() >= 2 {
        let degrees = cfg.degrees();
        let ctx = context("single-tet", cfg, &mesh, 0, *degrees.last().unwrap());
        let g = growth(&ratios);
        rep.push(ctx.row("ratio-growth", "trend", g, Status::check(g <= MAX_GROWTH), format!("growth from p = {0} over {0}..{1}", degrees[0], degrees.last().unwrap())));
    }
    Ok(rep)
}

pub fn run_mixed(cfg: &ExperimentConfig) -> Result<Report> {
    let meshes = levels(cfg)?;
    let cache = SpaceCache::new();
    let mut rep = Report::default();
    for p in cfg.degrees() {
        if p == 0 {
            return Err(Error::Invalid("the mixed comparison needs p >= 1".into()));
        }
        let mut ratios = Vec::new();
        for (level, mesh) in meshes.iter().enumerate() {
            let ctx = context("mixed", cfg, mesh, level, p);
            if level == 0 && mesh.has_dirichlet() && mesh.has_neumann() {
                rep.push(ctx.row("hypothesis-single-bc", "value", 0.0, Status::Warn, "mixed comparison assumes one boundary kind"));
            }
            let fd = field(cfg, mesh, &cache, p)?;
            let tf = three_field(mesh, &cache, &*fd.v, &*fd.w, p)?;
            let local = localbest_sum(mesh, &cache, &*fd.v, &*fd.w, p)?;
            let mut lhs = local.oscillation_sum();
            for (e, f) in tf.v_h.iter().enumerate() {
                lhs += fd.v.dist2(mesh, e, f)?;
            }
            let r = ratio(lhs, local.total(), 1e-28);
            rep.push(ctx.row("mixed-minimum", "value", lhs, Status::Info, "plus oscillation"));
            rep.push(ctx.row("local", "sum", local.total(), Status::Info, ""));
            rep.push(ctx.row("ratio", "value", r, Status::check(r >= 1.0 - TOL_RATIO), "lower bound 1"));
            ratios.push(r);
            let pi = mixed_pi_div(mesh, &cache, &*fd.w, p)?;
            let ch: Vec<VPoly> = tf.v_h.iter().zip(&mesh.elems).map(|(u, el)| curl(el, u)).collect();
            let d = l2_dist(mesh, &ch, &pi);
            let n = l2_norm(mesh, &pi);
            let (val, detail) = if n > 0.0 { (d / n, "relative") } else { (d, "absolute") };
            rep.push(ctx.row("curl-vs-divfree-projection", "value", val, Status::check(val <= TOL_MIXED), detail));
        }
        if ratios.len() >= 2 {
            let ctx = context("mixed", cfg, meshes.last().unwrap(), meshes.len() - 1, p);
            let worst = ratios.windows(2).map(spread).fold(1.0, f64::max);
            let st = if worst <= MAX_GROWTH { Status::Info } else { Status::Warn };
            rep.push(ctx.row("ratio-stability", "trend", worst, st, "reported only"));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_of_exact_sequences() {
        let h = [1.0, 0.5, 0.25];
        assert!((estimate_rate(&[1.0, 0.5, 0.25], &h).unwrap() - 1.0).abs() < 1e-14);
        assert!((estimate_rate(&[1.0, 0.25, 0.0625], &h).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn noisy_rate_is_the_least_squares_slope() {
        // log2 e = (0, -1.1, -1.9) against log2 h = (0, -1, -2): slope 0.95
        let e = [1.0, 2f64.powf(-1.1), 2f64.powf(-1.9)];
        let r = estimate_rate(&e, &[1.0, 0.5, 0.25]).unwrap();
        assert!((r - 0.95).abs() < 1e-13);
        assert_eq!(r, estimate_rate(&e, &[1.0, 0.5, 0.25]).unwrap());
    }

    #[test]
    fn rate_rejects_bad_data() {
        assert!(estimate_rate(&[1.0], &[1.0]).is_err());
        assert!(estimate_rate(&[1.0, 0.0], &[1.0, 0.5]).is_err());
        assert!(estimate_rate(&[1.0, -1.0], &[1.0, 0.5]).is_err());
        assert!(estimate_rate(&[1.0, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn growth_and_spread() {
        assert_eq!(growth(&[2.0]), 1.0);
        assert_eq!(growth(&[1.0, 3.0, 1.5]), 3.0);
        assert_eq!(growth(&[4.0, 1.0, 1.5, 3.0]), 1.0);
        assert_eq!(growth(&[2.0, 1.0, 3.0]), 1.5);
        assert_eq!(growth(&[3.0, 2.0, 1.0]), 1.0);
        assert_eq!(spread(&[3.0, 2.0, 1.0]), 3.0);
        assert_eq!(spread(&[2.0]), 1.0);
    }

    #[test]
    fn patch_convexity() {
        let m = TetMesh::cube_kuhn(1, crate::mesh::BoundaryKind::Dirichlet).unwrap();
        assert!(nonconvex_patches(&m).unwrap().is_empty());
        // two tetrahedra folded about a shared face; the segment between the
        // apexes misses the face
        let nodes = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [2.0, 2.0, -1.5]];
        let m = TetMesh::from_tets_with(nodes, vec![[0, 1, 2, 3], [4, 1, 2, 3]], |_| crate::mesh::FaceTag::Dirichlet).unwrap();
        let bad = nonconvex_patches(&m).unwrap();
        assert!(bad.contains(&1) && bad.contains(&2) && bad.contains(&3), "{bad:?}");
        assert!(!bad.contains(&0) && !bad.contains(&4));
    }

    #[test]
    fn sinxy_ratio_stays_bounded() {
        // (0, 0, sin xy): the ratio alternates with p, so only boundedness holds
        let mut cfg = ExperimentConfig::for_command("single-tet");
        cfg.field = "sinxy".into();
        cfg.p_sweep = Some((0, 6));
        let rep = run_single_tet(&cfg).unwrap();
        let ratios: Vec<f64> = rep.find("ratio").map(|r| r.value).collect();
        assert_eq!(ratios.len(), 7);
        assert!(ratios.iter().all(|&r| r > 0.0 && r <= MAX_GROWTH), "{ratios:?}");
        assert!(rep.find("constrained-minus-unconstrained").all(|r| r.status == Status::Pass));
    }
}
