//! Built-in test fields: analytic `v` with its curl, and seeded random
//! conforming discrete fields.

use crate::error::{Error, Result};
use crate::globalbest::ConformingSystem;
use crate::mesh::{cross, norm, FaceTag, TetMesh};
use crate::polyspace::{Family, SpaceCache, VPoly};
use crate::source::{AnalyticVector, BrokenVector, VecFn, VectorSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// `v` and `curl v` as callbacks, with elementwise regularity exponents.
#[derive(Clone)]
pub struct AnalyticField {
    pub id: String,
    pub v: VecFn,
    pub curl: VecFn,
    /// `v|_K in H^s(K)`; infinite for smooth fields.
    pub s: f64,
    pub t: f64,
}

/// Field data on a given mesh.
pub struct FieldData {
    pub v: Box<dyn VectorSource>,
    pub w: Box<dyn VectorSource>,
    /// `v` lies in the conforming discrete space of the run.
    pub discrete: bool,
    pub analytic: Option<AnalyticField>,
}

pub const FIELD_IDS: &[&str] = &["trig", "trig-low", "trig-x", "trig-n", "sinxy", "poly", "poly-<k>", "grad", "random"];

fn smooth(id: &str, v: VecFn, curl: VecFn) -> AnalyticField {
    AnalyticField { id: id.into(), v, curl, s: f64::INFINITY, t: f64::INFINITY }
}

fn trig(k: f64, id: &str) -> AnalyticField {
    smooth(
        id,
        Arc::new(move |x: [f64; 3]| [(k * x[1]).sin(), (k * x[2]).sin(), (k * x[0]).sin()]),
        Arc::new(move |x: [f64; 3]| [-k * (k * x[2]).cos(), -k * (k * x[0]).cos(), -k * (k * x[1]).cos()]),
    )
}

/// `(y^k + z^k, z^k + x^k, x^k + y^k)`.
fn poly(k: usize) -> AnalyticField {
    let k = k as i32;
    let kf = k as f64;
    let dk = move |t: f64| if k == 0 { 0.0 } else { kf * t.powi(k - 1) };
    smooth(
        &format!("poly-{k}"),
        Arc::new(move |x: [f64; 3]| [x[1].powi(k) + x[2].powi(k), x[2].powi(k) + x[0].powi(k), x[0].powi(k) + x[1].powi(k)]),
        Arc::new(move |x: [f64; 3]| [dk(x[1]) - dk(x[2]), dk(x[2]) - dk(x[0]), dk(x[0]) - dk(x[1])]),
    )
}

/// Analytic field by id; `p` fixes the degree of `poly`.
pub fn analytic(id: &str, p: usize) -> Result<AnalyticField> {
    Ok(match id {
        "trig" => trig(PI, id),
        "trig-low" => trig(1.0, id),
        // zero tangential trace on x = 0 and x = 1
        "trig-x" => smooth(id, Arc::new(|x: [f64; 3]| [(PI * x[1]).sin(), 0.0, 0.0]), Arc::new(|x: [f64; 3]| [0.0, 0.0, -PI * (PI * x[1]).cos()])),
        // zero tangential trace on the whole unit cube boundary
        "trig-n" => {
            let s = |t: f64| (PI * t).sin();
            let c = |t: f64| (PI * t).cos();
            smooth(
                id,
                Arc::new(move |x: [f64; 3]| [s(x[1]) * s(x[2]), s(x[2]) * s(x[0]), s(x[0]) * s(x[1])]),
                Arc::new(move |x: [f64; 3]| {
                    [PI * s(x[0]) * (c(x[1]) - c(x[2])), PI * s(x[1]) * (c(x[2]) - c(x[0])), PI * s(x[2]) * (c(x[0]) - c(x[1]))]
                }),
            )
        }
        "sinxy" => smooth(
            id,
            Arc::new(|x: [f64; 3]| [0.0, 0.0, (x[0] * x[1]).sin()]),
            Arc::new(|x: [f64; 3]| [x[0] * (x[0] * x[1]).cos(), -x[1] * (x[0] * x[1]).cos(), 0.0]),
        ),
        "poly" => poly(p + 2),
        // gradient of sin(pi x) sin(pi y) sin(pi z): curl-free, zero tangential trace on the cube
        "grad" => {
            let s = |t: f64| (PI * t).sin();
            let c = |t: f64| (PI * t).cos();
            smooth(
                id,
                Arc::new(move |x: [f64; 3]| {
                    [PI * c(x[0]) * s(x[1]) * s(x[2]), PI * s(x[0]) * c(x[1]) * s(x[2]), PI * s(x[0]) * s(x[1]) * c(x[2])]
                }),
                Arc::new(|_| [0.0; 3]),
            )
        }
        _ => match id.strip_prefix("poly-").map(str::parse::<usize>) {
            Some(Ok(k)) => poly(k),
            _ => return Err(Error::Parse(format!("unknown field '{id}' (known: {})", FIELD_IDS.join(", ")))),
        },
    })
}

/// Largest relative mismatch between the curl callback and a central
/// difference curl of `v` at `n` seeded points of the unit cube.
pub fn fd_curl_mismatch(f: &AnalyticField, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let x: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let mut jac = [[0.0; 3]; 3];
        for k in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let (a, b) = ((f.v)(xp), (f.v)(xm));
            for j in 0..3 {
                jac[j][k] = (a[j] - b[j]) / (2.0 * h);
            }
        }
        let fd = [jac[2][1] - jac[1][2], jac[0][2] - jac[2][0], jac[1][0] - jac[0][1]];
        let ex = (f.curl)(x);
        let scale = jac.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for k in 0..3 {
            worst = worst.max((fd[k] - ex[k]).abs() / scale);
        }
    }
    worst
}

/// Largest `|v x n|` sampled on the Neumann faces. The projectors need
/// `v` in `H_{0,N}(curl)`, so this should vanish.
pub fn neumann_tangential_max(f: &AnalyticField, mesh: &TetMesh) -> f64 {
    let mut worst = 0.0f64;
    for face in mesh.faces.iter().filter(|f| f.tag == FaceTag::Neumann) {
        let x = face.verts.map(|v| mesh.nodes[v]);
        for i in 0..=4 {
            for j in 0..=4 - i {
                let (a, b) = (i as f64 / 4.0, j as f64 / 4.0);
                let pt: [f64; 3] = std::array::from_fn(|k| (1.0 - a - b) * x[0][k] + a * x[1][k] + b * x[2][k]);
                worst = worst.max(norm(cross((f.v)(pt), face.normal)));
            }
        }
    }
    worst
}

/// Random coefficients in the conforming `family` space of degree `p`.
pub fn random_conforming(mesh: &TetMesh, cache: &SpaceCache, family: Family, p: usize, seed: u64) -> Vec<VPoly> {
    let sys = ConformingSystem::new(mesh, cache, family, p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..sys.ndof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    sys.to_broken(&x)
}

/// Field `id` on `mesh`; random fields are conforming `ND_p`.
pub fn build(id: &str, mesh: &TetMesh, cache: &SpaceCache, p: usize, quad: usize, seed: u64) -> Result<FieldData> {
    if id == "random" {
        let v = BrokenVector::new(mesh, random_conforming(mesh, cache, Family::Nd, p, seed));
        let w = v.curl(mesh);
        return Ok(FieldData { v: Box::new(v), w: Box::new(w), discrete: true, analytic: None });
    }
    let f = analytic(id, p)?;
    let mismatch = fd_curl_mismatch(&f, 20, seed);
    if mismatch > 1e-6 {
        return Err(Error::Invalid(format!("curl of field '{id}' disagrees with finite differences ({mismatch:e})")));
    }
    Ok(FieldData {
        v: Box::new(AnalyticVector::new(f.v.clone(), None, quad)),
        w: Box::new(AnalyticVector::solenoidal(f.curl.clone(), quad)),
        discrete: false,
        analytic: Some(f),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curls_match_finite_differences() {
        for id in ["trig", "trig-low", "trig-x", "trig-n", "sinxy", "poly", "poly-1", "poly-4", "grad"] {
            let f = analytic(id, 1).unwrap();
            assert!(fd_curl_mismatch(&f, 20, 1) < 1e-6, "{id}");
        }
    }

    #[test]
    fn wrong_curl_is_caught() {
        let mut f = analytic("trig", 0).unwrap();
        f.curl = Arc::new(|_| [1.0, 0.0, 0.0]);
        assert!(fd_curl_mismatch(&f, 20, 1) > 1e-3);
    }

    #[test]
    fn unknown_field() {
        assert!(analytic("nope", 0).is_err());
        assert!(analytic("poly-x", 0).is_err());
    }
}
