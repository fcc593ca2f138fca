//! Maximal independent choice of one vector per cone `B ∩ C(v_i)`.

use nalgebra::DVector;

use super::ProblemInstance;
use crate::error::{ReachError, Result};

pub const MAX_G_VERTICES: usize = 8;

const INDEP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub m_hat: usize,
    /// Vertices whose chosen vectors form the independent set, with those
    /// vectors.
    pub independent: Vec<(usize, DVector<f64>)>,
    /// Remaining vertices of `G`.
    pub dependent: Vec<usize>,
    /// Vertices of `G` with `B ∩ C(v_i) = 0`.
    pub zero_cones: Vec<usize>,
}

/// Candidate generators of a cone: extreme rays, both signs of each line and
/// one interior sample.
pub(crate) fn cone_candidates(inst: &ProblemInstance, i: usize) -> Result<Vec<DVector<f64>>> {
    let rays = inst.vertex_cone_rays(i)?;
    let mut cands = rays.as_rays();
    if cands.len() > 1 {
        let mut sum = DVector::zeros(inst.n());
        for (k, c) in cands.iter().enumerate() {
            // Uneven weights keep the sample off any line through the origin.
            sum.axpy(1.0 + 0.1 * k as f64, &c.normalize(), 1.0);
        }
        if sum.amax() > 1e-9 {
            cands.push(crate::polylin::inf_normalize(&sum));
        }
    }
    Ok(cands)
}

pub fn max_independent_selection(inst: &ProblemInstance, g_vertices: &[usize]) -> Result<Selection> {
    if g_vertices.len() > MAX_G_VERTICES {
        return Err(ReachError::DimensionTooLarge {
            dim: g_vertices.len(),
            max: MAX_G_VERTICES,
        });
    }
    let cands: Vec<Vec<DVector<f64>>> = g_vertices
        .iter()
        .map(|&i| cone_candidates(inst, i))
        .collect::<Result<_>>()?;
    let zero_cones: Vec<usize> = g_vertices
        .iter()
        .zip(&cands)
        .filter(|(_, c)| c.is_empty())
        .map(|(&i, _)| i)
        .collect();
    let cap = inst.system.m().min(g_vertices.len());

    let mut search = Search {
        cands: &cands,
        cap,
        best: Vec::new(),
        current: Vec::new(),
        basis: Vec::new(),
    };
    search.run(0);

    let independent: Vec<(usize, DVector<f64>)> = search
        .best
        .iter()
        .map(|&(slot, c)| (g_vertices[slot], cands[slot][c].clone()))
        .collect();
    let dependent = g_vertices
        .iter()
        .copied()
        .filter(|v| !independent.iter().any(|(w, _)| w == v))
        .collect();
    Ok(Selection {
        m_hat: independent.len(),
        independent,
        dependent,
        zero_cones,
    })
}

struct Search<'a> {
    cands: &'a [Vec<DVector<f64>>],
    cap: usize,
    best: Vec<(usize, usize)>,
    current: Vec<(usize, usize)>,
    /// Orthonormal vectors spanning the current choice.
    basis: Vec<DVector<f64>>,
}

impl Search<'_> {
    fn done(&self) -> bool {
        self.best.len() >= self.cap
    }

    fn run(&mut self, slot: usize) {
        if self.current.len() > self.best.len() {
            self.best = self.current.clone();
        }
        if self.done() || slot == self.cands.len() {
            return;
        }
        if self.current.len() + (self.cands.len() - slot) <= self.best.len() {
            return;
        }
        for c in 0..self.cands[slot].len() {
            if let Some(q) = residual_direction(&self.basis, &self.cands[slot][c]) {
                self.basis.push(q);
                self.current.push((slot, c));
                self.run(slot + 1);
                self.current.pop();
                self.basis.pop();
                if self.done() {
                    return;
                }
            }
        }
        self.run(slot + 1);
    }
}

/// Gram-Schmidt step: the normalized component of `v` orthogonal to the
/// basis, if it is not negligible.
fn residual_direction(basis: &[DVector<f64>], v: &DVector<f64>) -> Option<DVector<f64>> {
    let v = v.normalize();
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let d = q.dot(&r);
            r.axpy(-d, q, 1.0);
        }
    }
    let n = r.norm();
    (n > INDEP_TOL.sqrt()).then(|| r / n)
}
