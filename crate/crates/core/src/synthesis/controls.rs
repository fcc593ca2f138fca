//! Vertex control selection and affine interpolation.

use nalgebra::{DMatrix, DVector};

use super::{AffinePiece, SynthesisOptions};
use crate::analysis::{AffineSystem, ProblemInstance};
use crate::error::{ReachError, Result};
use crate::geometry::Simplex;
use crate::polylin::lp::{Cmp, LinearProgram, LpOutcome};

/// Weight of the L1 penalty on controls in the margin problem.
const L1_WEIGHT: f64 = 1e-3;
/// Weight of the exit reward; below the margin weight so invariance margins
/// win where the two compete.
const EXIT_WEIGHT: f64 = 0.1;

/// How a piece must be steered beyond the invariance conditions.
#[derive(Clone, Debug, PartialEq)]
pub enum PieceMode {
    /// Invariance with maximal margins only.
    Plain,
    /// Push every vertex along `b ∈ B ∩ cone(piece)` until the field leaves
    /// through the exit facet with margin.
    Cone { b: DVector<f64> },
    /// Fix the closed-loop field to `b` at the listed vertices (which must lie
    /// in `O`).
    Independent { targets: Vec<(usize, DVector<f64>)> },
}

/// Solves `K v_i + g = u_i` for every vertex.
pub fn affine_from_vertex_controls(
    simplex: &Simplex,
    controls: &[DVector<f64>],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = simplex.dim();
    if controls.len() != n + 1 {
        return Err(ReachError::DimensionMismatch(format!(
            "{} vertex controls for a simplex with {} vertices",
            controls.len(),
            n + 1
        )));
    }
    let m = controls[0].len();
    if controls.iter().any(|u| u.len() != m) || m == 0 {
        return Err(ReachError::DimensionMismatch("vertex controls differ in length".into()));
    }
    let lhs = DMatrix::from_fn(n + 1, n + 1, |r, c| if c < n { simplex.vertex(r)[c] } else { 1.0 });
    let rhs = DMatrix::from_fn(n + 1, m, |r, c| controls[r][c]);
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ReachError::DegenerateSimplex("interpolation system is singular".into()))?;
    let gain = sol.rows(0, n).transpose();
    let offset = sol.row(n).transpose();
    Ok((gain, offset))
}

/// Controls at vertex `i` satisfying the invariance rows with maximal
/// per-row margins (capped at 1), a capped reward for `h0·y` and a small L1
/// penalty.
pub fn base_vertex_controls(
    sys: &AffineSystem,
    piece: &Simplex,
    i: usize,
    control_box: f64,
) -> Result<DVector<f64>> {
    let m = sys.m();
    let drift = sys.drift(piece.vertex(i));
    let mut lp = LinearProgram::maximize();
    let u: Vec<usize> = (0..m).map(|_| lp.var(0.0, -control_box, control_box)).collect();
    let abs: Vec<usize> = (0..m).map(|_| lp.var(-L1_WEIGHT, 0.0, control_box)).collect();
    for k in 0..m {
        lp.constraint(vec![(u[k], 1.0), (abs[k], -1.0)], Cmp::Le, 0.0);
        lp.constraint(vec![(u[k], -1.0), (abs[k], -1.0)], Cmp::Le, 0.0);
    }
    for j in piece.facets_containing_vertex(i) {
        let h = piece.normal(j);
        let g = sys.b().tr_mul(h);
        let s = lp.var(1.0, 0.0, 1.0);
        let mut terms: Vec<(usize, f64)> = u.iter().copied().zip(g.iter().copied()).collect();
        terms.push((s, 1.0));
        lp.constraint(terms, Cmp::Le, -h.dot(&drift));
    }
    // Reward leaving through the exit facet, capped like the other margins.
    let h0 = piece.exit_normal();
    let g0 = sys.b().tr_mul(h0);
    let s0 = lp.var(EXIT_WEIGHT, f64::NEG_INFINITY, 1.0);
    let mut terms: Vec<(usize, f64)> = u.iter().copied().zip(g0.iter().map(|v| -v)).collect();
    terms.push((s0, 1.0));
    lp.constraint(terms, Cmp::Le, h0.dot(&drift));
    match lp.solve()? {
        LpOutcome::Optimal { x, .. } => Ok(DVector::from_iterator(m, u.iter().map(|&k| x[k]))),
        _ => Err(ReachError::InfeasibleInvariance { vertex: i }),
    }
}

pub fn vertex_controls_for_piece(
    sys: &AffineSystem,
    piece: &Simplex,
    mode: &PieceMode,
    opts: &SynthesisOptions,
) -> Result<Vec<DVector<f64>>> {
    let count = piece.vertices().len();
    let mut controls: Vec<DVector<f64>> = Vec::with_capacity(count);
    for i in 0..count {
        if let PieceMode::Independent { targets } = mode {
            if let Some((_, b)) = targets.iter().find(|(v, _)| *v == i) {
                let need = b - sys.drift(piece.vertex(i));
                let u = sys.input_for(&need);
                let resid = (sys.b() * &u - &need).norm();
                if resid > 1e-8 * (1.0 + need.norm()) {
                    return Err(ReachError::ConstructionFailed(format!(
                        "vertex {i} of the piece is not in O (residual {resid:.3e})"
                    )));
                }
                controls.push(u);
                continue;
            }
        }
        controls.push(base_vertex_controls(sys, piece, i, opts.control_box)?);
    }

    if let PieceMode::Cone { b } = mode {
        let h0 = piece.exit_normal();
        let h0b = h0.dot(b);
        if h0b <= 1e-12 {
            return Err(ReachError::ConstructionFailed(format!(
                "cone vector does not leave through the exit facet (h0·b = {h0b:.3e})"
            )));
        }
        for j in 1..=piece.dim() {
            let v = piece.normal(j).dot(b);
            if v > 1e-9 {
                return Err(ReachError::ConstructionFailed(format!(
                    "cone vector violates facet {j} of the piece (h·b = {v:.3e})"
                )));
            }
        }
        let delta = opts.delta;
        let mut eps: f64 = 0.0;
        for (i, u) in controls.iter().enumerate() {
            let y = sys.field(piece.vertex(i), u);
            eps = eps.max((delta - h0.dot(&y)) / h0b);
            for j in piece.facets_containing_vertex(i) {
                let h = piece.normal(j);
                let hb = h.dot(b);
                if hb < -1e-12 {
                    eps = eps.max((delta + h.dot(&y)) / -hb);
                }
            }
        }
        let w = sys.input_for(b);
        let eps = 2.0 * eps;
        for u in controls.iter_mut() {
            u.axpy(eps, &w, 1.0);
        }
    }
    Ok(controls)
}

/// Minimum sup-norm of the closed-loop field over the piece. The field is
/// affine, so this is the distance from 0 to `co{y_i}`.
pub fn min_field_speed(sys: &AffineSystem, piece: &Simplex, controls: &[DVector<f64>]) -> Result<f64> {
    let ys: Vec<DVector<f64>> = piece
        .vertices()
        .iter()
        .zip(controls)
        .map(|(v, u)| sys.field(v, u))
        .collect();
    let n = piece.dim();
    let mut lp = LinearProgram::minimize();
    let lam: Vec<usize> = ys.iter().map(|_| lp.var(0.0, 0.0, 1.0)).collect();
    let t = lp.var(1.0, 0.0, f64::INFINITY);
    lp.dense(&lam, &vec![1.0; ys.len()], Cmp::Eq, 1.0);
    for k in 0..n {
        let coeffs: Vec<f64> = ys.iter().map(|y| y[k]).collect();
        let mut up: Vec<(usize, f64)> = lam.iter().copied().zip(coeffs.iter().copied()).collect();
        up.push((t, -1.0));
        lp.constraint(up, Cmp::Le, 0.0);
        let mut down: Vec<(usize, f64)> = lam.iter().copied().zip(coeffs.iter().map(|c| -c)).collect();
        down.push((t, -1.0));
        lp.constraint(down, Cmp::Le, 0.0);
    }
    match lp.solve()? {
        LpOutcome::Optimal { objective, .. } => Ok(objective.max(0.0)),
        _ => Err(ReachError::NumericalFailure("speed LP failed".into())),
    }
}

/// Checks interpolation, invariance at every vertex, absence of
/// equilibria and, for inner pieces, strict crossing into the piece across
/// the facet opposite `crossing`.
pub(crate) fn validate_piece(
    inst: &ProblemInstance,
    piece: &AffinePiece,
    _mode: Option<&PieceMode>,
    crossing: Option<usize>,
) -> Result<()> {
    let sys = &inst.system;
    let s = &piece.simplex;
    let scale = piece.vertex_controls.iter().map(|u| u.amax()).fold(1.0, f64::max);
    if piece.interpolation_error() > 1e-9 * scale {
        return Err(ReachError::NumericalFailure(format!(
            "interpolation error {:.3e}",
            piece.interpolation_error()
        )));
    }
    for (i, u) in piece.vertex_controls.iter().enumerate() {
        let y = sys.field(s.vertex(i), u);
        for j in s.facets_containing_vertex(i) {
            let v = s.normal(j).dot(&y);
            if v > 1e-9 {
                return Err(ReachError::SynthesisFailed(format!(
                    "invariance fails at vertex {i}: h{j}·y = {v:.3e}"
                )));
            }
        }
        if let Some(t) = crossing {
            if i != t {
                let v = s.normal(t).dot(&y);
                if v >= -1e-9 {
                    return Err(ReachError::SynthesisFailed(format!(
                        "field at vertex {i} does not cross strictly into the piece (h·y = {v:.3e})"
                    )));
                }
            }
        }
    }
    let speed = min_field_speed(sys, s, &piece.vertex_controls)?;
    if speed <= 1e-9 {
        return Err(ReachError::SynthesisFailed(format!(
            "closed loop has an equilibrium in piece {} (min speed {speed:.3e})",
            piece.index
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use nalgebra::dvector;

    #[test]
    fn first_piece_published_law() {
        let s1 = Simplex::new(vec![dvector![0.5, 0.25], dvector![1.0, 0.0], dvector![0.0, 0.0]]).unwrap();
        let (k, g) = affine_from_vertex_controls(&s1, &[dvector![-1.0], dvector![-1.0], dvector![-1.0]]).unwrap();
        assert!(k.amax() < 1e-12);
        assert!((g[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_dim_first_piece_published_law() {
        let s1 = Simplex::new(vec![
            dvector![0.0, 0.75, 0.0, 0.0],
            dvector![1.0, 0.0, 0.0, 0.0],
            dvector![0.0, 1.0, 0.0, 0.0],
            dvector![0.0, 0.0, 1.0, 0.0],
            dvector![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let u = vec![
            dvector![-1.0, -2.0],
            dvector![-1.0, -2.0],
            dvector![-1.0, -2.0],
            dvector![-1.0, -2.0],
            dvector![1.0, 0.0],
        ];
        let (k, g) = affine_from_vertex_controls(&s1, &u).unwrap();
        let expect = nalgebra::dmatrix![0.0, 0.0, 0.0, 2.0; 0.0, 0.0, 0.0, 2.0];
        assert!((k - expect).amax() < 1e-9);
        assert!((g - dvector![-1.0, -2.0]).amax() < 1e-9);
    }

    #[test]
    fn equilibrium_detected_for_single_law() {
        let inst = catalog::double_integrator();
        let speed = min_field_speed(&inst.system, &inst.simplex, &catalog::double_integrator_affine_controls()).unwrap();
        assert!(speed < 1e-9);
    }

    #[test]
    fn margin_forces_nonzero_input_at_rest_point() {
        // A v + a = 0 at the vertex; positive margins require B u ≠ 0.
        let inst = catalog::double_integrator();
        let u = base_vertex_controls(&inst.system, &inst.simplex, 2, 1e3).unwrap();
        let y = inst.system.field(inst.simplex.vertex(2), &u);
        assert!(y.norm() > 1e-6);
    }
}
