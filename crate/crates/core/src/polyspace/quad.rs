//! Collapsed-coordinate Gauss-Jacobi rules on the tetrahedron, triangle and
//! segment. Points are barycentric; weights sum to one (scale by the measure).

use crate::error::{Error, Result};
use std::sync::{Arc, OnceLock};

pub const MAX_QUAD_DEG: usize = 30;

#[derive(Clone, Debug)]
pub struct QuadRule<const N: usize> {
    pub points: Vec<[f64; N]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub type TetRule = QuadRule<4>;
pub type TriRule = QuadRule<3>;
pub type SegRule = QuadRule<2>;

/// Orthonormal three-term recurrence for the weight `(1-x)^alpha` on [-1, 1].
fn jacobi_recurrence(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let beta = 0.0;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + alpha + beta;
        a[k] = if k == 0 {
            (beta - alpha) / (alpha + beta + 2.0)
        } else {
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        if k >= 1 {
            let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + alpha + beta);
            let den = s * s * (s + 1.0) * (s - 1.0);
            b[k] = (num / den).sqrt();
        }
    }
    (a, b)
}

/// Gauss-Jacobi nodes/weights on [0, 1] for weight `(1-t)^alpha`,
/// `n` points, weights summing to `1/(alpha+1)`.
fn gauss_jacobi01(n: usize, alpha: usize) -> (Vec<f64>, Vec<f64>) {
    let al = alpha as f64;
    let (a, b) = jacobi_recurrence(n + 1, al);
    let jac = faer::Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            a[i]
        } else if i + 1 == j {
            b[j]
        } else if j + 1 == i {
            b[i]
        } else {
            0.0
        }
    });
    let eig = jac
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric tridiagonal eigenproblem");
    let s = eig.S().column_vector();
    let mu0 = 2f64.powf(al + 1.0) / (al + 1.0);
    // Evaluate orthonormal polynomials p_0..p_n at x.
    let eval = |x: f64| -> (Vec<f64>, f64) {
        let mut p = vec![0.0; n + 1];
        let mut dp = vec![0.0; n + 1];
        p[0] = 1.0 / mu0.sqrt();
        for k in 1..=n {
            let pm2 = if k >= 2 { p[k - 2] } else { 0.0 };
            let dpm2 = if k >= 2 { dp[k - 2] } else { 0.0 };
            let bm = if k >= 2 { b[k - 1] } else { 0.0 };
            p[k] = ((x - a[k - 1]) * p[k - 1] - bm * pm2) / b[k];
            dp[k] = ((x - a[k - 1]) * dp[k - 1] + p[k - 1] - bm * dpm2) / b[k];
        }
        let d = dp[n];
        (p, d)
    };
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = s[i];
        for _ in 0..3 {
            let (p, d) = eval(x);
            if d != 0.0 {
                x -= p[n] / d;
            }
        }
        let (p, _) = eval(x);
        let w = 1.0 / p[..n].iter().map(|v| v * v).sum::<f64>();
        xs.push(0.5 * (x + 1.0));
        ws.push(w / 2f64.powf(al + 1.0));
    }
    (xs, ws)
}

fn npts(degree: usize) -> usize {
    degree / 2 + 1
}

fn build_tet(degree: usize) -> TetRule {
    let n = npts(degree);
    let (u, wu) = gauss_jacobi01(n, 2);
    let (v, wv) = gauss_jacobi01(n, 1);
    let (w, ww) = gauss_jacobi01(n, 0);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = u[i];
                let y = v[j] * (1.0 - u[i]);
                let z = w[k] * (1.0 - u[i]) * (1.0 - v[j]);
                points.push([1.0 - x - y - z, x, y, z]);
                weights.push(6.0 * wu[i] * wv[j] * ww[k]);
            }
        }
    }
    QuadRule { points, weights, degree }
}

fn build_tri(degree: usize) -> TriRule {
    let n = npts(degree);
    let (u, wu) = gauss_jacobi01(n, 1);
    let (v, wv) = gauss_jacobi01(n, 0);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = u[i];
            let y = v[j] * (1.0 - u[i]);
            points.push([1.0 - x - y, x, y]);
            weights.push(2.0 * wu[i] * wv[j]);
        }
    }
    QuadRule { points, weights, degree }
}

fn build_seg(degree: usize) -> SegRule {
    let n = npts(degree);
    let (u, wu) = gauss_jacobi01(n, 0);
    QuadRule { points: u.iter().map(|t| [1.0 - t, *t]).collect(), weights: wu, degree }
}

fn check(degree: usize) -> Result<()> {
    if degree > MAX_QUAD_DEG {
        return Err(Error::Invalid(format!(
            "quadrature degree {degree} exceeds the supported maximum {MAX_QUAD_DEG}"
        )));
    }
    Ok(())
}

macro_rules! cached {
    ($name:ident, $ty:ty, $build:ident) => {
        pub fn $name(degree: usize) -> Result<Arc<$ty>> {
            static C: OnceLock<Vec<OnceLock<Arc<$ty>>>> = OnceLock::new();
            check(degree)?;
            let c = C.get_or_init(|| (0..=MAX_QUAD_DEG).map(|_| OnceLock::new()).collect());
            Ok(c[degree].get_or_init(|| Arc::new($build(degree))).clone())
        }
    };
}

cached!(tet_rule, TetRule, build_tet);
cached!(tri_rule, TriRule, build_tri);
cached!(seg_rule, SegRule, build_seg);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyspace::poly::{edge_weight, face_weight, vol_weight};

    #[test]
    fn reference_tet_values() {
        let r = tet_rule(6).unwrap();
        let vol = 1.0 / 6.0;
        let one: f64 = r.weights.iter().sum::<f64>() * vol;
        assert!((one - 1.0 / 6.0).abs() < 1e-15);
        let x: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[1]).sum::<f64>() * vol;
        assert!((x - 1.0 / 24.0).abs() < 1e-16);
        // x^2 y^2 z^2 = 2!2!2!/9!
        let exact = 8.0 / 362880.0;
        let q: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| w * (p[1] * p[2] * p[3]).powi(2))
            .sum::<f64>()
            * vol;
        assert!(((q - exact) / exact).abs() < 1e-14);
    }

    #[test]
    fn exact_up_to_degree() {
        for d in [0usize, 3, 8, 15, 22, 30] {
            let r = tet_rule(d).unwrap();
            let t = tri_rule(d).unwrap();
            let s = seg_rule(d).unwrap();
            let mut worst = 0.0f64;
            for a in 0..=d {
                for b in 0..=d - a {
                    let c = d - a - b;
                    let q: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                        .sum();
                    let e = vol_weight([a, b, c, 0]);
                    worst = worst.max(((q - e) / e).abs());
                    let q: f64 = t
                        .points
                        .iter()
                        .zip(&t.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                        .sum();
                    let e = face_weight([a, b, c]);
                    worst = worst.max(((q - e) / e).abs());
                }
                let q: f64 =
                    s.points.iter().zip(&s.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi((d - a) as i32)).sum();
                let e = edge_weight([a, d - a]);
                worst = worst.max(((q - e) / e).abs());
            }
            assert!(worst < 1e-13, "degree {d}: {worst:e}");
        }
    }

    #[test]
    fn too_high_degree_rejected() {
        assert!(tet_rule(31).is_err());
    }
}
