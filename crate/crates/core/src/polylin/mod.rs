//! Dense linear-algebra kernel: ranks and subspaces, inequality feasibility
//! with strict margins, cone points, extreme rays and M-matrix tests.

pub mod lp;
mod rays;

use nalgebra::{DMatrix, DVector};

use crate::error::{ReachError, Result};
use lp::{Cmp, LinearProgram, LpOutcome};

pub use rays::{extreme_rays, ExtremeRays, MAX_RAY_DIM};

/// Relative rank tolerance.
pub const RANK_TOL: f64 = 1e-9;
/// Bounding box for feasibility searches.
pub const M_BOX: f64 = 1e6;
/// Smallest shared margin accepted for strict rows.
pub const STRICT_MARGIN: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// `g·z + offset ≤ 0`
    Le,
    /// `g·z + offset < 0`
    Lt,
    /// `g·z + offset = 0`
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IneqRow {
    pub coeffs: DVector<f64>,
    pub offset: f64,
    pub relation: Relation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IneqSystem {
    dim: usize,
    rows: Vec<IneqRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasiblePoint {
    pub point: DVector<f64>,
    /// Shared margin achieved on the strict rows (1 when none are present).
    pub margin: f64,
}

impl IneqSystem {
    pub fn new(dim: usize) -> Self {
        IneqSystem {
            dim,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[IneqRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, coeffs: DVector<f64>, offset: f64, relation: Relation) -> Result<()> {
        if coeffs.len() != self.dim {
            return Err(ReachError::DimensionMismatch(format!(
                "row of length {} in a system of dimension {}",
                coeffs.len(),
                self.dim
            )));
        }
        self.rows.push(IneqRow {
            coeffs,
            offset,
            relation,
        });
        Ok(())
    }

    pub fn le(mut self, coeffs: DVector<f64>, offset: f64) -> Result<Self> {
        self.push(coeffs, offset, Relation::Le)?;
        Ok(self)
    }

    pub fn lt(mut self, coeffs: DVector<f64>, offset: f64) -> Result<Self> {
        self.push(coeffs, offset, Relation::Lt)?;
        Ok(self)
    }

    pub fn eq(mut self, coeffs: DVector<f64>, offset: f64) -> Result<Self> {
        self.push(coeffs, offset, Relation::Eq)?;
        Ok(self)
    }

    /// Worst violation over all rows, with strict rows treated as closed.
    pub fn max_residual(&self, z: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let v = r.coeffs.dot(z) + r.offset;
                let scale = r.coeffs.norm().max(1.0);
                match r.relation {
                    Relation::Eq => v.abs() / scale,
                    _ => v.max(0.0) / scale,
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Finds a point satisfying every row, maximizing a shared margin on the
/// strict rows. Returns `None` when infeasible or when the margin stays
/// below [`STRICT_MARGIN`].
pub fn feasible_point(sys: &IneqSystem) -> Result<Option<FeasiblePoint>> {
    if sys.dim == 0 {
        return Err(ReachError::DimensionMismatch(
            "feasibility over a zero-dimensional space".into(),
        ));
    }
    let has_strict = sys.rows.iter().any(|r| r.relation == Relation::Lt);
    let mut lp = LinearProgram::maximize();
    let z: Vec<usize> = (0..sys.dim).map(|_| lp.var(0.0, -M_BOX, M_BOX)).collect();
    let t = lp.var(if has_strict { 1.0 } else { 0.0 }, 0.0, 1.0);

    for row in &sys.rows {
        let norm = row.coeffs.norm();
        if norm <= 1e-14 {
            let ok = match row.relation {
                Relation::Le => row.offset <= 1e-12,
                Relation::Lt => row.offset < -STRICT_MARGIN,
                Relation::Eq => row.offset.abs() <= 1e-12,
            };
            if !ok {
                return Ok(None);
            }
            continue;
        }
        let mut terms: Vec<(usize, f64)> = z
            .iter()
            .zip(row.coeffs.iter())
            .map(|(&v, &c)| (v, c / norm))
            .collect();
        let rhs = -row.offset / norm;
        match row.relation {
            Relation::Le => lp.constraint(terms, Cmp::Le, rhs),
            Relation::Eq => lp.constraint(terms, Cmp::Eq, rhs),
            Relation::Lt => {
                terms.push((t, 1.0));
                lp.constraint(terms, Cmp::Le, rhs);
            }
        }
    }

    let (x, _) = match lp.solve()? {
        LpOutcome::Optimal { x, objective } => (x, objective),
        LpOutcome::Infeasible => return Ok(None),
        LpOutcome::Unbounded => {
            return Err(ReachError::NumericalFailure(
                "bounded feasibility problem reported unbounded".into(),
            ))
        }
    };
    let margin = if has_strict { x[t] } else { 1.0 };
    if has_strict && margin <= STRICT_MARGIN {
        return Ok(None);
    }
    let point = DVector::from_iterator(sys.dim, z.iter().map(|&i| x[i]));
    if sys.max_residual(&point) > 1e-7 {
        return Err(ReachError::NumericalFailure(format!(
            "feasible point fails re-check (residual {:.3e})",
            sys.max_residual(&point)
        )));
    }
    Ok(Some(FeasiblePoint { point, margin }))
}

/// Orthonormal basis of a linear subspace, stored as matrix columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Orthonormalizes the columns of `m` (dropping dependent ones).
    pub fn from_columns(m: &DMatrix<f64>) -> Self {
        image_basis(m)
    }

    pub fn full(n: usize) -> Self {
        SubspaceBasis {
            basis: DMatrix::identity(n, n),
        }
    }

    pub fn zero(n: usize) -> Self {
        SubspaceBasis {
            basis: DMatrix::zeros(n, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.basis.column(i).into_owned()
    }

    pub fn coordinates(&self, y: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(y)
    }

    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.basis * self.coordinates(y)
    }

    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        (y - self.project(y)).norm()
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.residual(y) <= tol * y.norm().max(1.0)
    }
}

/// Full singular value decomposition `m = U diag(s) V^T` with square `U`
/// and `V` and singular values in descending order.
pub struct FullSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Full SVD. nalgebra's bidiagonal SVD loses accuracy on some exactly
/// rank-deficient rectangular inputs, so this goes through faer.
pub fn full_svd(m: &DMatrix<f64>) -> FullSvd {
    let (r, c) = m.shape();
    let fm = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    match fm.svd() {
        Ok(svd) => {
            let (u, v) = (svd.U(), svd.V());
            let s = svd.S().column_vector();
            FullSvd {
                u: DMatrix::from_fn(r, r, |i, j| u[(i, j)]),
                s: (0..r.min(c)).map(|k| s[k]).collect(),
                v: DMatrix::from_fn(c, c, |i, j| v[(i, j)]),
            }
        }
        Err(_) => {
            // Thin fallback padded to square factors.
            let svd = m.clone().svd(true, true);
            let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
            let k = r.min(c);
            FullSvd {
                u: complete_basis(&u, r),
                s: (0..k).map(|i| svd.singular_values[i]).collect(),
                v: complete_basis(&vt.transpose(), c),
            }
        }
    }
}

/// Extends orthonormal columns to a basis of `ℝ^n`.
fn complete_basis(cols: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = cols.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..n {
        if out.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for b in &out {
            let d = b.dot(&v);
            v.axpy(-d, b, 1.0);
        }
        if v.norm() > 1e-8 {
            out.push(v.normalize());
        }
    }
    DMatrix::from_columns(&out)
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    full_svd(m).s
}

fn cutoff(s: &[f64], tol: f64) -> f64 {
    let smax = s.iter().copied().fold(0.0, f64::max);
    (tol * smax).max(1e-300)
}

/// Numerical rank relative to the largest singular value.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax <= 1e-300 {
        return 0;
    }
    let cut = cutoff(&sv, tol);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Least-squares solution of `m z = rhs` with minimal norm, dropping
/// singular values below the rank cutoff.
pub fn min_norm_solution(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(m.ncols());
    if m.nrows() == 0 || m.ncols() == 0 {
        return z;
    }
    let svd = full_svd(m);
    let cut = cutoff(&svd.s, RANK_TOL);
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cut {
            let coef = svd.u.column(k).dot(rhs) / s;
            z.axpy(coef, &svd.v.column(k), 1.0);
        }
    }
    z
}

/// Orthonormal basis of the column space.
pub fn image_basis(m: &DMatrix<f64>) -> SubspaceBasis {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return SubspaceBasis::zero(n);
    }
    let svd = full_svd(m);
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    if smax <= 1e-300 {
        return SubspaceBasis::zero(n);
    }
    let cut = cutoff(&svd.s, RANK_TOL);
    let cols: Vec<DVector<f64>> = (0..svd.s.len())
        .filter(|&i| svd.s[i] > cut)
        .map(|i| svd.u.column(i).into_owned())
        .collect();
    SubspaceBasis {
        basis: DMatrix::from_columns(&cols),
    }
}

/// Orthonormal basis of `{z : m z = 0}`.
pub fn null_basis(m: &DMatrix<f64>) -> SubspaceBasis {
    let n = m.ncols();
    if n == 0 {
        return SubspaceBasis::zero(0);
    }
    if m.nrows() == 0 {
        return SubspaceBasis::full(n);
    }
    let svd = full_svd(m);
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    let cut = cutoff(&svd.s, RANK_TOL);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| smax <= 1e-300 || svd.s.get(i).map_or(true, |&s| s <= cut))
        .map(|i| svd.v.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return SubspaceBasis::zero(n);
    }
    SubspaceBasis {
        basis: DMatrix::from_columns(&cols),
    }
}

pub fn inf_normalize(v: &DVector<f64>) -> DVector<f64> {
    let m = v.amax();
    if m > 0.0 {
        v / m
    } else {
        v.clone()
    }
}

/// Looks for a nonzero `b` in `subspace` with `h·b ≤ 0` for every normal.
/// The result is scaled to unit sup-norm. One LP is solved per coefficient
/// and sign; among the feasible ones the point with the largest slack wins.
pub fn nonzero_cone_point(
    normals: &[DVector<f64>],
    subspace: &SubspaceBasis,
) -> Result<Option<DVector<f64>>> {
    let k = subspace.dim();
    if k == 0 {
        return Ok(None);
    }
    let q = subspace.matrix();
    let reduced: Vec<DVector<f64>> = normals.iter().map(|h| q.tr_mul(h)).collect();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for i in 0..k {
        for sign in [1.0, -1.0] {
            let mut lp = LinearProgram::maximize();
            let c: Vec<usize> = (0..k)
                .map(|j| {
                    if j == i {
                        lp.var(0.0, sign, sign)
                    } else {
                        lp.var(0.0, -1.0, 1.0)
                    }
                })
                .collect();
            let s = lp.var(1.0, 0.0, 1.0);
            for a in &reduced {
                let norm = a.norm();
                if norm <= 1e-14 {
                    continue;
                }
                let mut terms: Vec<(usize, f64)> =
                    c.iter().zip(a.iter()).map(|(&v, &x)| (v, x / norm)).collect();
                terms.push((s, 1.0));
                lp.constraint(terms, Cmp::Le, 0.0);
            }
            if let LpOutcome::Optimal { x, objective } = lp.solve()? {
                let coeffs = DVector::from_iterator(k, c.iter().map(|&v| x[v]));
                let b = q * coeffs;
                if b.amax() <= 1e-12 {
                    continue;
                }
                let b = inf_normalize(&b);
                let viol = normals
                    .iter()
                    .map(|h| h.dot(&b))
                    .fold(f64::NEG_INFINITY, f64::max);
                if viol > 1e-8 {
                    return Err(ReachError::NumericalFailure(format!(
                        "cone point violates a normal by {viol:.3e}"
                    )));
                }
                if best.as_ref().map_or(true, |(o, _)| objective > *o + 1e-12) {
                    best = Some((objective, b));
                }
            }
        }
    }
    Ok(best.map(|(_, b)| b))
}

/// Z-matrix with eigenvalues in the open right half-plane.
pub fn is_nonsingular_m_matrix(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] > tol {
                return false;
            }
        }
    }
    m.complex_eigenvalues().iter().all(|z| z.re > tol)
}
