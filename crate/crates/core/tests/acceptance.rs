//! Acceptance criteria, run in sequence. One PASS/FAIL line per criterion;
//! the process exits non-zero if any criterion fails.

use commuteproj::cls::{self, KktProblem};
use commuteproj::globalbest::{global_constrained_best_dense, mixed_pi_div, three_field};
use commuteproj::harness::experiments::{self, MAX_GROWTH, TOL_CHECK, TOL_COMMUTE, TOL_COMMUTE_ABS, TOL_MIXED, TOL_ORDER, TOL_PROJECT, TOL_RATE, TOL_RATIO};
use commuteproj::harness::{fields, ExperimentConfig, Report, Status};
use commuteproj::interp::{canonical_nd, canonical_rt, l2_project_scalar};
use commuteproj::mesh::{FaceTag, TetMesh};
use commuteproj::polyspace::{curl, div, nmono, Family, SpaceCache, VPoly};
use commuteproj::source::BrokenScalar;
use faer::Mat;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const SEED: u64 = 20240917;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn cfg(cmd: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_command(cmd);
    edit(&mut c);
    c
}

/// All rows with the given metric must be present and at most `tol`.
fn rows_below(rep: &Report, metric: &str, tol: f64) -> (bool, f64, usize) {
    let mut worst = 0.0f64;
    let mut n = 0;
    let mut ok = true;
    for r in rep.find(metric) {
        n += 1;
        worst = worst.max(r.value);
        ok &= r.value <= tol;
    }
    (ok && n > 0, worst, n)
}

fn failures(rep: &Report) -> Vec<String> {
    rep.rows
        .iter()
        .filter(|r| r.status == Status::Fail)
        .map(|r| format!("{} p={} {}={:e} ({})", r.field, r.p, r.metric, r.value, r.detail))
        .collect()
}

fn random_tet(rng: &mut ChaCha8Rng) -> TetMesh {
    loop {
        let nodes: Vec<[f64; 3]> = (0..4).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let Ok(m) = TetMesh::from_tets_with(nodes, vec![[0, 1, 2, 3]], |_| FaceTag::Dirichlet) else { continue };
        if m.shape_regularity() <= 10.0 {
            return m;
        }
    }
}

fn random_vpoly(rng: &mut ChaCha8Rng, deg: usize) -> VPoly {
    VPoly { deg, c: (0..3 * nmono(deg)).map(|_| rng.gen_range(-1.0..1.0)).collect() }
}

fn interpolator_commuting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let tets: Vec<TetMesh> = (0..20).map(|_| random_tet(&mut rng)).collect();
    let (mut worst_curl, mut worst_div) = (0.0f64, 0.0f64);
    for q in 0..=3 {
        for mesh in &tets {
            let cache = SpaceCache::new();
            let el = &mesh.elems[0];
            for _ in 0..100 {
                let u = random_vpoly(&mut rng, q + 2);
                let cu = curl(el, &u);
                let lhs = curl(el, &canonical_nd(mesh, &cache, 0, q, &u));
                let rhs = canonical_rt(mesh, &cache, 0, q, &cu);
                let r = lhs.sub(&rhs).norm_sq(el.vol).sqrt() / cu.norm_sq(el.vol).sqrt();
                worst_curl = worst_curl.max(r);

                let du = div(el, &u);
                let lhs = div(el, &canonical_rt(mesh, &cache, 0, q, &u));
                let pi = l2_project_scalar(mesh, &cache, 0, q, &BrokenScalar { polys: vec![du.clone()] }).unwrap().field;
                let r = lhs.add(&pi.scale(-1.0)).norm_sq(el.vol).sqrt() / du.norm_sq(el.vol).sqrt();
                worst_div = worst_div.max(r);
            }
        }
    }
    let ok = worst_curl <= 1e-11 && worst_div <= 1e-11;
    outcome(ok, format!("curl {worst_curl:.2e}, div {worst_div:.2e} (tol 1e-11, q 0..3, 20 tets x 100 inputs)"))
}

fn commute_runs() -> Report {
    let mut rep = Report::default();
    for f in ["trig", "poly", "grad"] {
        let c = cfg("check-commute", |c| {
            c.mesh = "cube-kuhn:refined=1".into();
            c.field = f.into();
            c.p_sweep = Some((0, 2));
        });
        match experiments::run("check-commute", &c) {
            Ok(r) => rep.extend(r),
            Err(e) => panic!("commuting run for {f} failed: {e}"),
        }
    }
    rep
}

fn commuting(rep: &Report) -> Outcome {
    let (ok_rel, worst, n_rel) = rows_below(rep, "commute-residual", TOL_COMMUTE);
    // curl-free fields have a zero target; their residual is absolute
    let (ok_abs, worst_abs, n_abs) = rows_below(rep, "commute-residual-abs", TOL_COMMUTE_ABS);
    let (ok_div, worst_div, _) = rows_below(rep, "hdiv-commute-residual", TOL_COMMUTE);
    let fails = failures(rep);
    let ok = (ok_rel || n_rel == 0) && (ok_abs || n_abs == 0) && ok_div && n_rel + n_abs == 9 && fails.is_empty();
    outcome(
        ok,
        format!(
            "curl {worst:.2e} relative over {n_rel} runs, {worst_abs:.2e} absolute over {n_abs}, div {worst_div:.2e} (tol {TOL_COMMUTE:e} / {TOL_COMMUTE_ABS:e}) {}",
            fails.join("; ")
        ),
    )
}

fn projection() -> Outcome {
    let c = cfg("check-project", |c| {
        c.mesh = "cube-kuhn:refined=1".into();
        c.p_sweep = Some((0, 2));
        c.samples = 20;
    });
    let rep = match experiments::run("check-project", &c) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (ok_c, wc, nc) = rows_below(&rep, "hcurl-projection-error", TOL_PROJECT);
    let (ok_d, wd, nd) = rows_below(&rep, "hdiv-projection-error", TOL_PROJECT);
    let fails = failures(&rep);
    let ok = ok_c && ok_d && nc == 3 && nd == 3 && fails.is_empty();
    outcome(ok, format!("hcurl {wc:.2e}, hdiv {wd:.2e} (tol {TOL_PROJECT:e}, 20 fields per p) {}", fails.join("; ")))
}

fn all_checks(rep: &Report, names: &[&str]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        let (o, w, n) = rows_below(rep, name, TOL_CHECK);
        ok &= o && n == 9;
        parts.push(format!("{name} {w:.1e}"));
    }
    let fails = failures(rep);
    ok &= fails.is_empty();
    outcome(ok, format!("{} (tol {TOL_CHECK:e}) {}", parts.join(", "), fails.join("; ")))
}

fn convergence() -> Outcome {
    let c = cfg("convergence", |c| {
        c.mesh = "cube-kuhn".into();
        c.refine = 3;
        c.field = "trig-low".into();
        c.p_sweep = Some((0, 2));
    });
    let rep = match experiments::run("convergence", &c) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let rates: Vec<(usize, f64)> = rep.find("rate").map(|r| (r.p, r.value)).collect();
    let ok = rates.len() == 3 && rates.iter().all(|&(p, r)| (r - (p + 1) as f64).abs() <= TOL_RATE);
    let s: Vec<String> = rates.iter().map(|(p, r)| format!("p={p}: {r:.3}")).collect();
    outcome(ok, format!("{} (expected p+1 +- {TOL_RATE})", s.join(", ")))
}

fn equivalence() -> Outcome {
    let c = cfg("equivalence", |c| {
        c.mesh = "cube-kuhn".into();
        c.refine = 1;
        c.field = "trig".into();
        c.p_sweep = Some((0, 1));
    });
    let rep = match experiments::run("equivalence", &c) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut ok = true;
    let mut lo = f64::INFINITY;
    for m in ["ratio-constrained", "ratio-unconstrained"] {
        let v: Vec<f64> = rep.find(m).map(|r| r.value).collect();
        ok &= v.len() == 4 && v.iter().all(|&r| r >= 1.0 - TOL_RATIO);
        lo = v.iter().cloned().fold(lo, f64::min);
    }
    let mut hi = 1.0f64;
    for m in ["ratio-constrained-stability", "ratio-unconstrained-stability"] {
        let v: Vec<f64> = rep.find(m).map(|r| r.value).collect();
        ok &= v.len() == 2 && v.iter().all(|&r| r <= MAX_GROWTH);
        hi = v.iter().cloned().fold(hi, f64::max);
    }
    let fails = failures(&rep);
    ok &= fails.is_empty();
    outcome(ok, format!("smallest ratio {lo:.4}, largest change factor {hi:.3} {}", fails.join("; ")))
}

fn single_tet() -> Outcome {
    let c = cfg("single-tet", |c| {
        c.mesh = "reftet".into();
        c.field = "trig-low".into();
        c.p_sweep = Some((0, 6));
    });
    let rep = match experiments::run("single-tet", &c) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let growth: Vec<f64> = rep.find("ratio-growth").map(|r| r.value).collect();
    let gaps: Vec<&_> = rep.find("constrained-minus-unconstrained").collect();
    let ok_order = gaps.len() == 7 && gaps.iter().all(|r| r.status == Status::Pass);
    let ok = growth.len() == 1 && growth[0] <= MAX_GROWTH && ok_order;
    let g = growth.first().copied().unwrap_or(f64::NAN);
    outcome(ok, format!("growth {g:.3} (max {MAX_GROWTH}), constrained >= unconstrained at all 7 degrees: {ok_order} (tol {TOL_ORDER:e})"))
}

fn mixed() -> Outcome {
    let c = cfg("mixed", |c| {
        c.mesh = "cube-kuhn:bc=N".into();
        c.refine = 0;
        c.degree = 1;
        c.p_sweep = None;
        c.field = "trig-n".into();
    });
    let rep = match experiments::run("mixed", &c) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (ok, worst, n) = rows_below(&rep, "curl-vs-divfree-projection", TOL_MIXED);

    // the minimizer itself: sparse three-field solve against the dense KKT
    // engine with the divergence-free projection as curl target
    let mesh = TetMesh::from_spec("cube-kuhn:bc=N").unwrap();
    let cache = SpaceCache::new();
    let fd = fields::build("trig-n", &mesh, &cache, 1, c.quad(1), c.seed).unwrap();
    let pi = mixed_pi_div(&mesh, &cache, &*fd.w, 1).unwrap();
    let tf = three_field(&mesh, &cache, &*fd.v, &*fd.w, 1).unwrap();
    let dense = global_constrained_best_dense(&mesh, &cache, &*fd.v, 1, &pi, c.tol_feas).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for ((a, b), el) in tf.v_h.iter().zip(&dense.field).zip(&mesh.elems) {
        num += a.sub(b).norm_sq(el.vol);
        den += b.norm_sq(el.vol);
    }
    let dv = (num / den).sqrt();
    let ok = ok && n == 1 && dv <= TOL_MIXED && failures(&rep).is_empty();
    outcome(ok, format!("curl of mixed solution vs KKT projection {worst:.2e}, minimizers {dv:.2e} (tol {TOL_MIXED:e})"))
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Minimizer of `x'Mx/2 - l'x` on `{Ax = r}` by pseudo-inverse enumeration:
/// `x = A+ r + N (N'MN)^{-1} N'(l - M A+ r)`, with `A+` and the nullspace
/// basis `N` from the eigenpairs of `A'A`. (nalgebra's SVD is inaccurate on
/// exactly rank-deficient input, the symmetric eigensolver is not.)
fn pinv_oracle(m: &DMatrix<f64>, l: &DVector<f64>, a: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let n = m.nrows();
    let eig = (a.transpose() * a).symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut ap = DMatrix::zeros(n, a.nrows());
    let mut null = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        if top > 0.0 && lam > 1e-12 * top {
            ap += v * (a * v).transpose() / lam;
        } else {
            null.push(v.into_owned());
        }
    }
    let x0 = &ap * r;
    if null.is_empty() {
        return x0;
    }
    let nb = DMatrix::from_columns(&null);
    let h = nb.transpose() * m * &nb;
    let y = h.cholesky().unwrap().solve(&(nb.transpose() * (l - m * &x0)));
    x0 + nb * y
}

fn kkt_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mesh = random_tet(&mut rng);
    let cache = SpaceCache::new();
    let spaces = [(Family::P, 0), (Family::P, 1), (Family::P, 2), (Family::Pvec, 0), (Family::Pvec, 1), (Family::Nd, 0), (Family::Rt, 0)];
    let mut worst = 0.0f64;
    let mut count = 0;
    for (fam, q) in spaces {
        let sp = cache.get(&mesh, 0, fam, q);
        let base = if sp.dual.ncols() > 0 { to_na(&sp.mass_dual) } else { to_na(&sp.mass_onb) };
        let n = base.nrows();
        assert!(n <= 12);
        for _ in 0..50 {
            // a generic basis of the same space
            let b = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) + 0.3 * rng.gen_range(-1.0..1.0));
            let m = b.transpose() * &base * &b;
            let l = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let k = rng.gen_range(0..=n + 2);
            let rank = rng.gen_range(0..=k.min(n));
            let a = DMatrix::from_fn(k, rank, |_, _| rng.gen_range(-1.0..1.0)) * DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
            let x_true = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let r = &a * x_true;
            let prob = KktProblem::new(to_faer(&m), l.iter().copied().collect(), to_faer(&a), r.iter().copied().collect());
            let sol = match cls::solve(&prob) {
                Ok(s) => s,
                Err(e) => return outcome(false, format!("{fam:?}_{q}, {k} rows of rank {rank}: {e}")),
            };
            let oracle = pinv_oracle(&m, &l, &a, &r);
            let diff = sol.x.iter().zip(oracle.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst = worst.max(diff / oracle.amax().max(1.0));
            count += 1;
        }
    }
    outcome(worst <= 1e-9, format!("largest relative difference {worst:.2e} over {count} problems on 7 spaces (tol 1e-9)"))
}

fn main() {
    let mut failed = false;
    let mut report = |name: &str, t: Instant, o: Outcome| {
        let tag = if o.ok { "PASS" } else { "FAIL" };
        failed |= !o.ok;
        println!("{tag} {name}: {} [{:.1} s]", o.detail.trim_end(), t.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    report("interpolator-commuting", t, interpolator_commuting());

    let t = Instant::now();
    let rep = commute_runs();
    report("commuting", t, commuting(&rep));
    let t = Instant::now();
    report("projection", t, projection());
    let t = Instant::now();
    report("decomposition-identities", t, all_checks(&rep, &["delta-divergence", "delta-constant-moments", "split-sum", "split-divergence"]));
    let t = Instant::now();
    report(
        "feasibility-assertions",
        t,
        all_checks(&rep, &["theta-target-in-space", "theta-mean-compatibility", "theta-hat-orthogonality", "curl-datum-normal-jump", "curl-datum-divergence"]),
    );
    let t = Instant::now();
    report("convergence", t, convergence());
    let t = Instant::now();
    report("local-global-equivalence", t, equivalence());
    let t = Instant::now();
    report("single-tet-p-robustness", t, single_tet());
    let t = Instant::now();
    report("mixed-consistency", t, mixed());
    let t = Instant::now();
    report("kkt-oracle", t, kkt_oracle());

    if failed {
        std::process::exit(1);
    }
}
