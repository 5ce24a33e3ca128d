//! Polynomial spaces `P_q`, `[P_q]^3`, `ND_q`, `RT_q` on tetrahedra.

pub mod basis;
pub mod conforming;
pub mod poly;
pub mod quad;

pub use basis::{build_basis, curl_map, dof_values, DofKey, ElemSpace, SpaceCache};
pub use conforming::{ConfSpace, Essential};
pub use poly::{nmono, SPoly, VPoly};

use crate::error::{Error, Result};
use crate::mesh::Element;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Scalar polynomials.
    P,
    /// Vector polynomials.
    Pvec,
    /// Nedelec (first kind).
    Nd,
    /// Raviart-Thomas.
    Rt,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(Family::P),
            "pvec" => Ok(Family::Pvec),
            "nd" => Ok(Family::Nd),
            "rt" => Ok(Family::Rt),
            _ => Err(Error::Unsupported(format!("polynomial family '{s}'"))),
        }
    }
}

/// Dimension of the local space of degree `q`.
pub fn space_dimension(family: Family, q: usize) -> usize {
    match family {
        Family::P => nmono(q),
        Family::Pvec => 3 * nmono(q),
        Family::Nd => (q + 1) * (q + 3) * (q + 4) / 2,
        Family::Rt => (q + 1) * (q + 2) * (q + 4) / 2,
    }
}

/// Degree of the barycentric form used to store functions of the space.
pub fn storage_degree(family: Family, q: usize) -> usize {
    match family {
        Family::P | Family::Pvec => q,
        Family::Nd | Family::Rt => q + 1,
    }
}

/// Physical partial derivatives `d u / d x_k` of a scalar polynomial.
pub fn grad(el: &Element, u: &SPoly) -> VPoly {
    let dl: Vec<SPoly> = (0..4).map(|l| u.dlam(l)).collect();
    let d = dl[0].deg;
    let n = nmono(d);
    let mut c = vec![0.0; 3 * n];
    for k in 0..3 {
        for l in 0..4 {
            let g = el.grad[l][k];
            for i in 0..n {
                c[k * n + i] += g * dl[l].c[i];
            }
        }
    }
    VPoly { deg: d, c }
}

/// Jacobian rows: `out[j][k] = d u_j / d x_k`.
fn jacobian(el: &Element, u: &VPoly) -> [[SPoly; 3]; 3] {
    let g = |j: usize| grad(el, &u.comp(j));
    let rows = [g(0), g(1), g(2)];
    rows.map(|r| [r.comp(0), r.comp(1), r.comp(2)])
}

pub fn curl(el: &Element, u: &VPoly) -> VPoly {
    let j = jacobian(el, u);
    let sub = |a: &SPoly, b: &SPoly| a.add(&b.scale(-1.0));
    VPoly::from_comps([sub(&j[2][1], &j[1][2]), sub(&j[0][2], &j[2][0]), sub(&j[1][0], &j[0][1])])
}

pub fn div(el: &Element, u: &VPoly) -> SPoly {
    let j = jacobian(el, u);
    j[0][0].add(&j[1][1]).add(&j[2][2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryKind, TetMesh};

    #[test]
    fn dimensions() {
        assert_eq!(space_dimension(Family::P, 1), 4);
        assert_eq!(space_dimension(Family::Nd, 0), 6);
        assert_eq!(space_dimension(Family::Rt, 0), 4);
        assert_eq!(space_dimension(Family::Nd, 1), 20);
        assert_eq!(space_dimension(Family::Rt, 1), 15);
    }

    #[test]
    fn curl_and_div_of_simple_fields() {
        let m = TetMesh::reference_tet(BoundaryKind::Dirichlet).unwrap();
        let el = &m.elems[0];
        // x = l1, y = l2, z = l3 on the reference element
        let x = SPoly::lambda(1);
        let y = SPoly::lambda(2);
        let z = SPoly::lambda(3);
        let v = VPoly::from_comps([y.scale(-1.0), x.clone(), SPoly::zeros(1)]);
        let c = curl(el, &v);
        for lam in [[0.25; 4], [0.1, 0.2, 0.3, 0.4]] {
            let cv = c.eval(&lam);
            assert!((cv[0]).abs() < 1e-14 && (cv[1]).abs() < 1e-14 && (cv[2] - 2.0).abs() < 1e-14);
        }
        let w = VPoly::from_comps([x, y, z]);
        let d = div(el, &w);
        assert!((d.eval(&[0.3, 0.3, 0.2, 0.2]) - 3.0).abs() < 1e-14);
    }
}
