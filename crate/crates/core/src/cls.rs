//! Equality-constrained least squares: minimize `x'Mx/2 - b'x` subject to
//! `Ax = c`, by the nullspace method on a column-pivoted QR of `A'`.
//!
//! Redundant but consistent rows are expected (several projector steps are
//! over-determined on purpose), so rank is decided after scaling every row
//! to unit norm, and consistency is checked explicitly.

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

/// Relative pivot threshold for the rank decision.
pub const RANK_TOL: f64 = 1e-11;
/// Rows below this fraction of the largest row norm are treated as zero.
pub const ROW_TOL: f64 = 1e-12;
/// Default relative feasibility tolerance.
pub const TOL_FEAS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct KktProblem {
    /// SPD Gram matrix of the trial space.
    pub mass: Mat<f64>,
    /// Inner products of the target with the trial functions.
    pub load: Vec<f64>,
    /// Constraint rows.
    pub a: Mat<f64>,
    pub rhs: Vec<f64>,
    pub tol_feas: f64,
    /// Lower bound on the reference scale of the feasibility residual, for
    /// data that may be pure roundoff of a larger computation.
    pub scale_floor: f64,
    /// Label used in error messages.
    pub context: String,
}

#[derive(Clone, Debug, Default)]
pub struct KktDiagnostics {
    pub rank: usize,
    pub nullspace_dim: usize,
    /// Relative residual of the least-squares particular solution.
    pub feas_residual: f64,
    /// Relative residual of the final point in the constraints.
    pub constraint_residual: f64,
    /// Relative Euler-Lagrange residual on the constraint nullspace.
    pub el_residual: f64,
}

#[derive(Clone, Debug)]
pub struct KktSolution {
    pub x: Vec<f64>,
    /// Minimum-norm multipliers of the unit-row-scaled system, mapped back to
    /// the original rows (`M x - b + A' mu = 0`).
    pub multipliers: Vec<f64>,
    pub diag: KktDiagnostics,
}

impl KktProblem {
    pub fn new(mass: Mat<f64>, load: Vec<f64>, a: Mat<f64>, rhs: Vec<f64>) -> Self {
        KktProblem { mass, load, a, rhs, tol_feas: TOL_FEAS, scale_floor: 0.0, context: String::new() }
    }

    pub fn unconstrained(mass: Mat<f64>, load: Vec<f64>) -> Self {
        let n = mass.nrows();
        Self::new(mass, load, Mat::zeros(0, n), vec![])
    }

    pub fn with_context(mut self, c: impl Into<String>) -> Self {
        self.context = c.into();
        self
    }

    pub fn with_scale_floor(mut self, s: f64) -> Self {
        self.scale_floor = s;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_feas = tol;
        self
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn matvec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.nrows()];
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj != 0.0 {
            for (yi, mij) in y.iter_mut().zip(m.col_as_slice(j)) {
                *yi += mij * xj;
            }
        }
    }
    y
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

struct Factored {
    /// Row scaling of kept rows and their original indices.
    kept: Vec<usize>,
    scale: Vec<f64>,
    max_row: f64,
    q: Mat<f64>,
    r: Mat<f64>,
    /// `perm[j]` = index (into kept rows) of the j-th pivoted column of A'.
    perm: Vec<usize>,
    rank: usize,
}

fn factor(a: &Mat<f64>) -> Factored {
    let (k, n) = (a.nrows(), a.ncols());
    let norms: Vec<f64> = (0..k).map(|i| (0..n).map(|j| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt()).collect();
    // rows that are roundoff relative to the largest one would become unit
    // noise after scaling
    let max_row = norms.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let cut = ROW_TOL * max_row;
    let mut kept = Vec::new();
    let mut scale = Vec::new();
    for (i, &s) in norms.iter().enumerate() {
        if s > cut && s > 0.0 {
            kept.push(i);
            scale.push(s);
        }
    }
    let kk = kept.len();
    if kk == 0 || n == 0 {
        return Factored { kept, scale, max_row, q: Mat::identity(n, n), r: Mat::zeros(0, kk), perm: (0..kk).collect(), rank: 0 };
    }
    let at = Mat::from_fn(n, kk, |j, i| a[(kept[i], j)] / scale[i]);
    let qr = at.col_piv_qr();
    let r = qr.R().to_owned();
    let q = qr.compute_Q();
    let perm: Vec<usize> = qr.P().arrays().0.to_vec();
    let mut rank = 0;
    let r00 = r[(0, 0)].abs().max(f64::MIN_POSITIVE);
    for i in 0..n.min(kk) {
        if r[(i, i)].abs() > RANK_TOL * r00 {
            rank += 1;
        } else {
            break;
        }
    }
    Factored { kept, scale, max_row, q, r, perm, rank }
}

/// `dim(space) - rank(A)` with the same rank decision as [`solve`].
pub fn nullspace_dim(p: &KktProblem) -> usize {
    p.a.ncols() - factor(&p.a).rank
}

pub fn solve(p: &KktProblem) -> Result<KktSolution> {
    let n = p.mass.nrows();
    assert_eq!(p.a.ncols(), n, "constraint width does not match the space");
    assert_eq!(p.a.nrows(), p.rhs.len(), "constraint rows and right-hand side differ");
    assert_eq!(p.load.len(), n);
    let f = factor(&p.a);
    let r = f.rank;

    // Reference scale: size of the unconstrained minimizer and of the data.
    let llt_m = p.mass.llt(Side::Lower).map_err(|_| Error::NotSpd(format!("mass matrix ({})", p.context)))?;
    let xu = llt_m.solve(col(&p.load));
    let xu_norm = (0..n).map(|i| xu[(i, 0)] * xu[(i, 0)]).sum::<f64>().sqrt();

    // Dropped (negligible) rows must carry a negligible right-hand side.
    let c_hat: Vec<f64> = f.kept.iter().zip(&f.scale).map(|(&i, s)| p.rhs[i] / s).collect();
    let scale = norm(&c_hat).max(xu_norm).max(p.scale_floor).max(f64::MIN_POSITIVE);
    let mut is_kept = vec![false; p.a.nrows()];
    for &i in &f.kept {
        is_kept[i] = true;
    }
    let zero_row_res: f64 =
        (0..p.a.nrows()).filter(|&i| !is_kept[i]).map(|i| (p.rhs[i] / f.max_row).powi(2)).sum::<f64>().sqrt();

    // Particular solution x0 = Q1 y with R11' y = (P' c)[..r].
    let mut y = vec![0.0; r];
    for i in 0..r {
        let mut s = c_hat[f.perm[i]];
        for j in 0..i {
            s -= f.r[(j, i)] * y[j];
        }
        y[i] = s / f.r[(i, i)];
    }
    let mut x0 = vec![0.0; n];
    for (j, yj) in y.iter().enumerate() {
        for i in 0..n {
            x0[i] += f.q[(i, j)] * yj;
        }
    }
    let constraint_res = |x: &[f64]| -> f64 {
        let mut s = zero_row_res * zero_row_res;
        for (ii, &i) in f.kept.iter().enumerate() {
            let ax: f64 = (0..n).map(|j| p.a[(i, j)] * x[j]).sum::<f64>() / f.scale[ii];
            s += (ax - c_hat[ii]).powi(2);
        }
        s.sqrt() / scale
    };
    let feas_residual = constraint_res(&x0);
    if !(feas_residual <= p.tol_feas) {
        return Err(Error::Infeasible { context: p.context.clone(), residual: feas_residual });
    }

    // Minimize over the nullspace Z = Q[:, r..].
    let nz = n - r;
    let mut x = x0.clone();
    let z = f.q.get(.., r..n).to_owned();
    if nz > 0 {
        let mx0 = matvec(&p.mass, &x0);
        let g: Vec<f64> = p.load.iter().zip(&mx0).map(|(b, m)| b - m).collect();
        let zg = z.transpose() * col(&g);
        let h = z.transpose() * &p.mass * &z;
        let llt = h.llt(Side::Lower).map_err(|_| Error::NotSpd(format!("reduced Hessian ({})", p.context)))?;
        let yz = llt.solve(&zg);
        let dx = &z * &yz;
        for i in 0..n {
            x[i] += dx[(i, 0)];
        }
    }
    let mx = matvec(&p.mass, &x);
    let resid: Vec<f64> = p.load.iter().zip(&mx).map(|(b, m)| b - m).collect();
    let el_residual = if nz > 0 {
        let zr = z.transpose() * col(&resid);
        let zb = z.transpose() * col(&p.load);
        let zm = z.transpose() * col(&mx);
        let nr = (0..nz).map(|i| zr[(i, 0)].powi(2)).sum::<f64>().sqrt();
        let nb = (0..nz).map(|i| zb[(i, 0)].powi(2)).sum::<f64>().sqrt();
        let nm = (0..nz).map(|i| zm[(i, 0)].powi(2)).sum::<f64>().sqrt();
        nr / nb.max(nm).max(f64::MIN_POSITIVE)
    } else {
        0.0
    };

    // Minimum-norm multipliers: R1 z = Q1' (b - M x), z = R1' (R1 R1')^{-1} s.
    let mut multipliers = vec![0.0; p.a.nrows()];
    if r > 0 {
        let s: Vec<f64> = (0..r).map(|i| (0..n).map(|k| f.q[(k, i)] * resid[k]).sum()).collect();
        let r1 = f.r.get(0..r, ..).to_owned();
        let g = &r1 * r1.transpose();
        let w = g.llt(Side::Lower).map(|l| l.solve(col(&s))).unwrap_or_else(|_| g.partial_piv_lu().solve(col(&s)));
        let zz = r1.transpose() * &w;
        for (j, &kj) in f.perm.iter().enumerate() {
            let orig = f.kept[kj];
            multipliers[orig] = zz[(j, 0)] / f.scale[kj];
        }
    }
    let constraint_residual = constraint_res(&x);
    Ok(KktSolution {
        x,
        multipliers,
        diag: KktDiagnostics { rank: r, nullspace_dim: nz, feas_residual, constraint_residual, el_residual },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Mat<f64> {
        Mat::from_fn(n, n, |i, j| if i == j { 2.0 + i as f64 * 0.1 } else { 0.3 / (1.0 + (i as f64 - j as f64).abs()) })
    }

    #[test]
    fn unconstrained_is_normal_equations() {
        let m = spd(5);
        let b = vec![1.0, -2.0, 0.5, 0.0, 3.0];
        let s = solve(&KktProblem::unconstrained(m.clone(), b.clone())).unwrap();
        let mx = matvec(&m, &s.x);
        for i in 0..5 {
            assert!((mx[i] - b[i]).abs() < 1e-12);
        }
        assert_eq!(s.diag.nullspace_dim, 5);
    }

    #[test]
    fn fully_pinned() {
        let m = spd(3);
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 1.0 } else if j == i + 1 { 0.5 } else { 0.0 });
        let s = solve(&KktProblem::new(m, vec![9.0, 9.0, 9.0], a.clone(), vec![1.0, 2.0, 3.0])).unwrap();
        let ax = matvec(&a, &s.x);
        assert!((ax[0] - 1.0).abs() < 1e-13 && (ax[1] - 2.0).abs() < 1e-13 && (ax[2] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn contradictory_rows_rejected() {
        let a = Mat::from_fn(2, 3, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let e = solve(&KktProblem::new(spd(3), vec![0.0; 3], a, vec![0.0, 1.0])).unwrap_err();
        assert!(matches!(e, Error::Infeasible { .. }));
    }

    #[test]
    fn duplicate_rows_do_not_change_solution() {
        let m = spd(4);
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let a1 = Mat::from_fn(1, 4, |_, j| j as f64 + 1.0);
        let a2 = Mat::from_fn(2, 4, |_, j| 2.0 * (j as f64 + 1.0));
        let s1 = solve(&KktProblem::new(m.clone(), b.clone(), a1, vec![1.0])).unwrap();
        let s2 = solve(&KktProblem::new(m, b, a2, vec![2.0, 2.0])).unwrap();
        for i in 0..4 {
            assert!((s1.x[i] - s2.x[i]).abs() < 1e-12);
        }
        assert_eq!(s2.diag.rank, 1);
        // multipliers satisfy stationarity
        let _ = s2.multipliers;
    }

    #[test]
    fn multipliers_satisfy_stationarity() {
        let m = spd(6);
        let b = vec![1.0, -1.0, 2.0, 0.0, 0.5, 1.5];
        let a = Mat::from_fn(3, 6, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let a = Mat::from_fn(4, 6, |i, j| if i < 3 { a[(i, j)] } else { a[(0, j)] + a[(1, j)] });
        let c = vec![1.0, 2.0, 0.0, 3.0];
        let s = solve(&KktProblem::new(m.clone(), b.clone(), a.clone(), c)).unwrap();
        let mx = matvec(&m, &s.x);
        for j in 0..6 {
            let atm: f64 = (0..4).map(|i| a[(i, j)] * s.multipliers[i]).sum();
            assert!((mx[j] - b[j] + atm).abs() < 1e-10);
        }
    }

    fn reference_space(family: crate::polyspace::Family) -> (crate::mesh::TetMesh, crate::polyspace::ElemSpace) {
        let m = crate::mesh::TetMesh::reference_tet(crate::mesh::BoundaryKind::Dirichlet).unwrap();
        let sp = crate::polyspace::build_basis(&m, 0, family, 0).unwrap();
        (m, sp)
    }

    #[test]
    fn curl_free_lowest_order_edge_fields() {
        let (m, sp) = reference_space(crate::polyspace::Family::Nd);
        let a = crate::polyspace::basis::curl_moment_rows(&m, &sp, true, 1);
        let rhs = vec![0.0; a.nrows()];
        let p = KktProblem::new(sp.mass_dual.clone(), vec![0.0; 6], a, rhs);
        assert_eq!(nullspace_dim(&p), 3);
        assert_eq!(nullspace_dim(&KktProblem::unconstrained(sp.mass_dual.clone(), vec![0.0; 6])), 6);
    }

    #[test]
    fn div_free_lowest_order_face_fields() {
        let (m, sp) = reference_space(crate::polyspace::Family::Rt);
        let a = crate::polyspace::basis::div_moment_rows(&m, &sp, true, 1);
        let rhs = vec![0.0; a.nrows()];
        let p = KktProblem::new(sp.mass_dual.clone(), vec![0.0; 4], a, rhs);
        assert_eq!(nullspace_dim(&p), 3);
        assert_eq!(solve(&p).unwrap().diag.nullspace_dim, 3);
    }
}
