//! Polynomials on a tetrahedron, stored as homogeneous forms in the four
//! barycentric coordinates.
//!
//! A polynomial of total degree `<= d` has exactly one representation as a
//! homogeneous degree-`d` form in `(l0, l1, l2, l3)` because `l0+l1+l2+l3 = 1`.
//! Integrals of monomials are exact closed forms, so every mass matrix,
//! moment and DOF functional below is computed without quadrature.

use faer::Mat;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Largest degree the monomial tables support.
pub const MAX_DEG: usize = 40;

/// Number of monomials of degree exactly `d` in four variables.
pub fn nmono(d: usize) -> usize {
    (d + 1) * (d + 2) * (d + 3) / 6
}

/// Multi-index table for one degree.
pub struct Monomials {
    pub deg: usize,
    pub alphas: Vec<[u8; 4]>,
    lookup: Vec<u32>,
}

impl Monomials {
    fn build(d: usize) -> Self {
        let mut alphas = Vec::with_capacity(nmono(d));
        let s = d + 1;
        let mut lookup = vec![u32::MAX; s * s * s];
        for a3 in 0..=d {
            for a2 in 0..=d - a3 {
                for a1 in 0..=d - a3 - a2 {
                    let a0 = d - a1 - a2 - a3;
                    lookup[a1 + s * (a2 + s * a3)] = alphas.len() as u32;
                    alphas.push([a0 as u8, a1 as u8, a2 as u8, a3 as u8]);
                }
            }
        }
        Monomials { deg: d, alphas, lookup }
    }

    #[inline]
    pub fn index(&self, a: [u8; 4]) -> usize {
        let s = self.deg + 1;
        self.lookup[a[1] as usize + s * (a[2] as usize + s * a[3] as usize)] as usize
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Cached multi-index table of degree `d`.
pub fn monomials(d: usize) -> &'static Monomials {
    static TABLES: OnceLock<Vec<OnceLock<Monomials>>> = OnceLock::new();
    assert!(d <= MAX_DEG, "degree {d} exceeds monomial table limit");
    let tables = TABLES.get_or_init(|| (0..=MAX_DEG).map(|_| OnceLock::new()).collect());
    tables[d].get_or_init(|| Monomials::build(d))
}

fn factorials() -> &'static [f64] {
    static F: OnceLock<Vec<f64>> = OnceLock::new();
    F.get_or_init(|| {
        let mut f = vec![1.0f64; 171];
        for i in 1..171 {
            f[i] = f[i - 1] * i as f64;
        }
        f
    })
}

#[inline]
pub fn fact(n: usize) -> f64 {
    factorials()[n]
}

/// `(1/|K|) * integral over K of l^g`.
#[inline]
pub fn vol_weight(g: [usize; 4]) -> f64 {
    let s = g[0] + g[1] + g[2] + g[3];
    6.0 * fact(g[0]) * fact(g[1]) * fact(g[2]) * fact(g[3]) / fact(s + 3)
}

/// `(1/|F|) * integral over a face of the product of its three barycentrics`.
#[inline]
pub fn face_weight(g: [usize; 3]) -> f64 {
    let s = g[0] + g[1] + g[2];
    2.0 * fact(g[0]) * fact(g[1]) * fact(g[2]) / fact(s + 2)
}

/// `(1/|e|) * integral over an edge of l_a^g0 l_b^g1`.
#[inline]
pub fn edge_weight(g: [usize; 2]) -> f64 {
    fact(g[0]) * fact(g[1]) / fact(g[0] + g[1] + 1)
}

#[inline]
pub fn add_idx(a: [u8; 4], b: [u8; 4]) -> [usize; 4] {
    [
        (a[0] + b[0]) as usize,
        (a[1] + b[1]) as usize,
        (a[2] + b[2]) as usize,
        (a[3] + b[3]) as usize,
    ]
}

/// Reference Gram matrix `G[a, b] = vol_weight(a + b)` between degree `d1`
/// and degree `d2` monomials (multiply by `|K|` for the physical element).
pub fn gram(d1: usize, d2: usize) -> Arc<Mat<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Mat<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(g) = cache.lock().unwrap().get(&(d1, d2)) {
        return g.clone();
    }
    let m1 = monomials(d1);
    let m2 = monomials(d2);
    let g = Mat::from_fn(m1.len(), m2.len(), |i, j| vol_weight(add_idx(m1.alphas[i], m2.alphas[j])));
    let g = Arc::new(g);
    cache.lock().unwrap().insert((d1, d2), g.clone());
    g
}

/// Values of all degree-`d` monomials at barycentric point `lam`.
pub fn mono_values(d: usize, lam: &[f64; 4]) -> Vec<f64> {
    let m = monomials(d);
    let mut pw = [[1.0f64; MAX_DEG + 1]; 4];
    for i in 0..4 {
        for k in 1..=d {
            pw[i][k] = pw[i][k - 1] * lam[i];
        }
    }
    m.alphas
        .iter()
        .map(|a| pw[0][a[0] as usize] * pw[1][a[1] as usize] * pw[2][a[2] as usize] * pw[3][a[3] as usize])
        .collect()
}

/// Scalar polynomial: homogeneous degree-`deg` coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SPoly {
    pub deg: usize,
    pub c: Vec<f64>,
}

impl SPoly {
    pub fn zeros(deg: usize) -> Self {
        SPoly { deg, c: vec![0.0; nmono(deg)] }
    }

    pub fn constant(v: f64) -> Self {
        SPoly { deg: 0, c: vec![v] }
    }

    /// Barycentric coordinate `l_a` as a degree-1 form.
    pub fn lambda(a: usize) -> Self {
        let mut p = SPoly::zeros(1);
        let mut al = [0u8; 4];
        al[a] = 1;
        p.c[monomials(1).index(al)] = 1.0;
        p
    }

    pub fn eval(&self, lam: &[f64; 4]) -> f64 {
        mono_values(self.deg, lam).iter().zip(&self.c).map(|(m, c)| m * c).sum()
    }

    /// Same polynomial written at degree `deg + 1` (multiplied by `sum l_i`).
    pub fn raise(&self) -> Self {
        let m = monomials(self.deg);
        let mt = monomials(self.deg + 1);
        let mut out = vec![0.0; mt.len()];
        for (i, a) in m.alphas.iter().enumerate() {
            let v = self.c[i];
            if v == 0.0 {
                continue;
            }
            for l in 0..4 {
                let mut b = *a;
                b[l] += 1;
                out[mt.index(b)] += v;
            }
        }
        SPoly { deg: self.deg + 1, c: out }
    }

    pub fn raise_to(&self, deg: usize) -> Self {
        assert!(deg >= self.deg, "cannot lower degree {} to {}", self.deg, deg);
        let mut p = self.clone();
        while p.deg < deg {
            p = p.raise();
        }
        p
    }

    pub fn mul_lambda(&self, a: usize) -> Self {
        let m = monomials(self.deg);
        let mt = monomials(self.deg + 1);
        let mut out = vec![0.0; mt.len()];
        for (i, al) in m.alphas.iter().enumerate() {
            let mut b = *al;
            b[a] += 1;
            out[mt.index(b)] = self.c[i];
        }
        SPoly { deg: self.deg + 1, c: out }
    }

    /// Partial derivative with respect to `l_l` (treating the four as independent).
    pub fn dlam(&self, l: usize) -> Self {
        if self.deg == 0 {
            return SPoly::zeros(0);
        }
        let m = monomials(self.deg);
        let mt = monomials(self.deg - 1);
        let mut out = vec![0.0; mt.len()];
        for (i, a) in m.alphas.iter().enumerate() {
            if a[l] > 0 {
                let mut b = *a;
                b[l] -= 1;
                out[mt.index(b)] += a[l] as f64 * self.c[i];
            }
        }
        SPoly { deg: self.deg - 1, c: out }
    }

    pub fn add(&self, o: &SPoly) -> SPoly {
        let d = self.deg.max(o.deg);
        let mut a = self.raise_to(d);
        let b = o.raise_to(d);
        for (x, y) in a.c.iter_mut().zip(&b.c) {
            *x += y;
        }
        a
    }

    pub fn scale(&self, s: f64) -> SPoly {
        SPoly { deg: self.deg, c: self.c.iter().map(|x| x * s).collect() }
    }

    pub fn mul(&self, o: &SPoly) -> SPoly {
        let d = self.deg + o.deg;
        let mt = monomials(d);
        let ma = monomials(self.deg);
        let mb = monomials(o.deg);
        let mut out = vec![0.0; mt.len()];
        for (i, a) in ma.alphas.iter().enumerate() {
            if self.c[i] == 0.0 {
                continue;
            }
            for (j, b) in mb.alphas.iter().enumerate() {
                let g = [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
                out[mt.index(g)] += self.c[i] * o.c[j];
            }
        }
        SPoly { deg: d, c: out }
    }

    /// Integral over an element of volume `vol`.
    pub fn integral(&self, vol: f64) -> f64 {
        let m = monomials(self.deg);
        vol * m
            .alphas
            .iter()
            .zip(&self.c)
            .map(|(a, c)| c * vol_weight([a[0] as usize, a[1] as usize, a[2] as usize, a[3] as usize]))
            .sum::<f64>()
    }

    /// `integral of self * l^a` for all degree-`d` monomials.
    pub fn moments(&self, vol: f64, d: usize) -> Vec<f64> {
        let g = gram(d, self.deg);
        let n = g.nrows();
        (0..n)
            .map(|i| vol * (0..self.c.len()).map(|j| g[(i, j)] * self.c[j]).sum::<f64>())
            .collect()
    }

    pub fn inner(&self, o: &SPoly, vol: f64) -> f64 {
        let g = gram(self.deg, o.deg);
        let mut s = 0.0;
        for i in 0..self.c.len() {
            if self.c[i] == 0.0 {
                continue;
            }
            let mut t = 0.0;
            for j in 0..o.c.len() {
                t += g[(i, j)] * o.c[j];
            }
            s += self.c[i] * t;
        }
        vol * s
    }

    pub fn norm_sq(&self, vol: f64) -> f64 {
        self.inner(self, vol).max(0.0)
    }
}

/// Vector polynomial with three components of common degree.
#[derive(Clone, Debug, PartialEq)]
pub struct VPoly {
    pub deg: usize,
    /// Component-major: `c[k * nmono(deg) + i]`.
    pub c: Vec<f64>,
}

impl VPoly {
    pub fn zeros(deg: usize) -> Self {
        VPoly { deg, c: vec![0.0; 3 * nmono(deg)] }
    }

    pub fn constant(v: [f64; 3]) -> Self {
        VPoly { deg: 0, c: v.to_vec() }
    }

    pub fn from_comps(c: [SPoly; 3]) -> Self {
        let d = c.iter().map(|p| p.deg).max().unwrap();
        let mut out = Vec::with_capacity(3 * nmono(d));
        for p in &c {
            out.extend(p.raise_to(d).c);
        }
        VPoly { deg: d, c: out }
    }

    #[inline]
    pub fn n(&self) -> usize {
        nmono(self.deg)
    }

    pub fn comp(&self, k: usize) -> SPoly {
        let n = self.n();
        SPoly { deg: self.deg, c: self.c[k * n..(k + 1) * n].to_vec() }
    }

    pub fn comp_slice(&self, k: usize) -> &[f64] {
        let n = self.n();
        &self.c[k * n..(k + 1) * n]
    }

    pub fn eval(&self, lam: &[f64; 4]) -> [f64; 3] {
        let mv = mono_values(self.deg, lam);
        let n = mv.len();
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = self.c[k * n..(k + 1) * n].iter().zip(&mv).map(|(c, m)| c * m).sum();
        }
        out
    }

    pub fn map_comps(&self, f: impl Fn(&SPoly) -> SPoly) -> VPoly {
        VPoly::from_comps([f(&self.comp(0)), f(&self.comp(1)), f(&self.comp(2))])
    }

    pub fn raise_to(&self, deg: usize) -> Self {
        if deg == self.deg {
            return self.clone();
        }
        self.map_comps(|p| p.raise_to(deg))
    }

    pub fn mul_lambda(&self, a: usize) -> Self {
        self.map_comps(|p| p.mul_lambda(a))
    }

    pub fn mul_scalar(&self, s: &SPoly) -> Self {
        self.map_comps(|p| p.mul(s))
    }

    pub fn add(&self, o: &VPoly) -> VPoly {
        let d = self.deg.max(o.deg);
        let mut a = self.raise_to(d);
        let b = o.raise_to(d);
        for (x, y) in a.c.iter_mut().zip(&b.c) {
            *x += y;
        }
        a
    }

    pub fn sub(&self, o: &VPoly) -> VPoly {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> VPoly {
        VPoly { deg: self.deg, c: self.c.iter().map(|x| x * s).collect() }
    }

    /// `g . u` for a constant vector `g`.
    pub fn dot_const(&self, g: &[f64; 3]) -> SPoly {
        let n = self.n();
        let c = (0..n).map(|i| g[0] * self.c[i] + g[1] * self.c[n + i] + g[2] * self.c[2 * n + i]).collect();
        SPoly { deg: self.deg, c }
    }

    /// `g x u` for a constant vector `g`.
    pub fn cross_const_left(&self, g: &[f64; 3]) -> VPoly {
        let n = self.n();
        let (u0, u1, u2) = (&self.c[..n], &self.c[n..2 * n], &self.c[2 * n..]);
        let mut c = vec![0.0; 3 * n];
        for i in 0..n {
            c[i] = g[1] * u2[i] - g[2] * u1[i];
            c[n + i] = g[2] * u0[i] - g[0] * u2[i];
            c[2 * n + i] = g[0] * u1[i] - g[1] * u0[i];
        }
        VPoly { deg: self.deg, c }
    }

    /// `integral of u_k * l^a` for degree-`d` monomials, component-major.
    pub fn moments(&self, vol: f64, d: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * nmono(d));
        for k in 0..3 {
            out.extend(self.comp(k).moments(vol, d));
        }
        out
    }

    pub fn inner(&self, o: &VPoly, vol: f64) -> f64 {
        (0..3).map(|k| self.comp(k).inner(&o.comp(k), vol)).sum()
    }

    pub fn norm_sq(&self, vol: f64) -> f64 {
        self.inner(self, vol).max(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Squared L2 distance of two polynomial fields, exact.
pub fn dist_sq(a: &VPoly, b: &VPoly, vol: f64) -> f64 {
    a.sub(b).norm_sq(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes_and_roundtrip() {
        for d in 0..8 {
            let m = monomials(d);
            assert_eq!(m.len(), nmono(d));
            for (i, a) in m.alphas.iter().enumerate() {
                assert_eq!(m.index(*a), i);
                assert_eq!(a.iter().map(|x| *x as usize).sum::<usize>(), d);
            }
        }
    }

    #[test]
    fn raise_preserves_values() {
        let p = SPoly { deg: 2, c: (0..10).map(|i| i as f64 - 3.5).collect() };
        let q = p.raise_to(4);
        let lam = [0.1, 0.2, 0.3, 0.4];
        assert!((p.eval(&lam) - q.eval(&lam)).abs() < 1e-13);
    }

    #[test]
    fn weight_of_constant_is_one() {
        assert_eq!(vol_weight([0; 4]), 1.0);
        assert_eq!(face_weight([0; 3]), 1.0);
        assert_eq!(edge_weight([0; 2]), 1.0);
        // integral of l0 over K is |K|/4
        assert!((vol_weight([1, 0, 0, 0]) - 0.25).abs() < 1e-15);
    }
}
