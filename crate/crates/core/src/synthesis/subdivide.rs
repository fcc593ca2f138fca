//! Splitting the simplex along the edges `(v0, v_lead)` of each index group.

use nalgebra::{DMatrix, DVector};

use super::{SubdivisionRecord, SubdivisionStep};
use crate::analysis::{compute_g, ProblemInstance, ReachControlIndices};
use crate::error::{ReachError, Result};
use crate::geometry::Simplex;

/// Refinement steps tried after the midpoint choice.
const LAMBDA_REFINEMENTS: i32 = 50;

/// `γ_1 … γ_n` with `h0 = −Σ γ_j h_j`.
pub fn gamma_coefficients(s: &Simplex) -> Result<Vec<f64>> {
    let n = s.dim();
    let h = DMatrix::from_columns(&s.normals()[1..]);
    let rhs = -s.exit_normal();
    let gamma = h
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ReachError::ConstructionFailed("facet normals are dependent".into()))?;
    if let Some((j, g)) = gamma.iter().enumerate().find(|(_, &g)| g <= 1e-9) {
        return Err(ReachError::ConstructionFailed(format!(
            "γ{} = {g:.3e} is not positive",
            j + 1
        )));
    }
    debug_assert_eq!(gamma.len(), n);
    Ok(gamma.iter().copied().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    /// Root of `h'·b = 0` in `λ`.
    pub lambda_star: f64,
    /// `h' = γ_t (1 − λ) h_t − λ h0`
    pub normal: DVector<f64>,
}

pub fn normal_formula(s: &Simplex, t: usize, gamma_t: f64, lambda: f64) -> DVector<f64> {
    s.normal(t) * (gamma_t * (1.0 - lambda)) - s.exit_normal() * lambda
}

/// Picks `λ` on the edge `(v0, v_t)` so that the new facet normal makes
/// `h'·b` clearly negative.
pub fn select_lambda(s: &Simplex, t: usize, b: &DVector<f64>, gamma_t: f64) -> Result<LambdaChoice> {
    let htb = s.normal(t).dot(b);
    let h0b = s.exit_normal().dot(b);
    if htb <= 0.0 || h0b <= 0.0 {
        return Err(ReachError::ConstructionFailed(format!(
            "λ selection needs h_t·b > 0 and h0·b > 0 (got {htb:.3e}, {h0b:.3e})"
        )));
    }
    let lambda_star = gamma_t * htb / (gamma_t * htb + h0b);
    let target = -0.1 * h0b.abs() / b.norm();
    let ok = |lambda: f64| {
        let h = normal_formula(s, t, gamma_t, lambda);
        h.dot(b) / (h.norm() * b.norm()) <= target
    };
    let mut lambda = 0.5 * (1.0 + lambda_star);
    let mut k = 1;
    while !ok(lambda) {
        k += 1;
        if k > LAMBDA_REFINEMENTS {
            return Err(ReachError::ConstructionFailed(
                "no λ on the refinement grid reaches the crossing margin".into(),
            ));
        }
        lambda = 1.0 - (1.0 - lambda_star) / 2f64.powi(k);
    }
    Ok(LambdaChoice {
        lambda,
        lambda_star,
        normal: normal_formula(s, t, gamma_t, lambda),
    })
}

/// Runs the subdivision and returns `S^1 … S^{p+1}`. Pieces keep the
/// original vertex positions; position 0 of each piece is its own `v0`.
pub fn subdivide(
    inst: &ProblemInstance,
    idx: &ReachControlIndices,
    pinned: &[DVector<f64>],
) -> Result<(Vec<Simplex>, SubdivisionRecord)> {
    let mut cur: Vec<DVector<f64>> = inst.simplex.vertices().to_vec();
    let mut pieces = Vec::with_capacity(idx.p() + 1);
    let mut record = SubdivisionRecord::default();
    for k in 0..idx.p() {
        let t = idx.lead_vertex(k);
        let b = idx.lead_vector(k);
        let s = Simplex::new(cur.clone())?;
        let gamma = gamma_coefficients(&s)?;
        let gamma_t = gamma[t - 1];

        let (lambda, normal, is_pinned) = match pinned.get(k) {
            Some(point) => {
                let lambda = edge_parameter(&s, t, point)?;
                let normal = normal_formula(&s, t, gamma_t, lambda);
                if normal.dot(b) >= 0.0 {
                    return Err(ReachError::ConstructionFailed(format!(
                        "pinned point {k} gives h'·b = {:.3e} ≥ 0",
                        normal.dot(b)
                    )));
                }
                (lambda, normal, true)
            }
            None => {
                let c = select_lambda(&s, t, b, gamma_t)?;
                (c.lambda, c.normal, false)
            }
        };
        let point = match pinned.get(k) {
            Some(p) => p.clone(),
            None => s.vertex(t) * lambda + s.vertex(0) * (1.0 - lambda),
        };

        let mut lower = cur.clone();
        lower[0] = point.clone();
        let piece = Simplex::new(lower)?;
        let unit = normal.normalize();
        if (piece.normal(t) - &unit).norm() > 1e-8 {
            return Err(ReachError::NumericalFailure(format!(
                "normal formula disagrees with the piece geometry at step {}",
                k + 1
            )));
        }
        if !piece.tangent_cone().contains(b, 1e-9) || piece.normal(t).dot(b) >= -1e-9 {
            return Err(ReachError::ConstructionFailed(format!(
                "lead vector is not in B ∩ cone(S^{}) with strict crossing",
                k + 1
            )));
        }
        pieces.push(piece);
        cur[t] = point.clone();
        record.steps.push(SubdivisionStep {
            lambda,
            point,
            normal,
            gamma,
            lead_vertex: t,
            pinned: is_pinned,
        });
    }
    let last = Simplex::new(cur)?;
    let g_last = compute_g(&last, &inst.equilibrium)?;
    let dim = g_last.as_ref().map(|f| f.dim() as isize).unwrap_or(-1);
    if dim != idx.m_hat as isize - 1 {
        return Err(ReachError::ConstructionFailed(format!(
            "last piece meets O in dimension {dim}, expected {}",
            idx.m_hat as isize - 1
        )));
    }
    pieces.push(last);
    Ok((pieces, record))
}

/// `λ` with `point = λ v_t + (1 − λ) v0`, requiring `λ ∈ (0, 1)`.
fn edge_parameter(s: &Simplex, t: usize, point: &DVector<f64>) -> Result<f64> {
    let e = s.vertex(t) - s.vertex(0);
    let lambda = (point - s.vertex(0)).dot(&e) / e.norm_squared();
    let back = s.vertex(t) * lambda + s.vertex(0) * (1.0 - lambda);
    if (back - point).norm() > 1e-9 * (1.0 + e.norm()) || lambda <= 0.0 || lambda >= 1.0 {
        return Err(ReachError::ConstructionFailed(format!(
            "pinned point is not on the open edge (v0, v{t})"
        )));
    }
    Ok(lambda)
}
