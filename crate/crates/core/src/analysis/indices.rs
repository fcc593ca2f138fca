//! Construction of the reach control indices.

use nalgebra::{DMatrix, DVector};

use super::{ProblemInstance, LEMMA_TOL};
use crate::error::{ReachError, Result};
use crate::polylin::lp::{Cmp, LinearProgram, LpOutcome};
use crate::polylin;

/// Smallest per-coefficient magnitude accepted for the dependent vector.
const COEFF_MARGIN: f64 = 1e-7;

/// One index group. `members` lists `(vertex, b)`; all but the last are
/// independent and the last equals `Σ coeffs[i] · members[i].1`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexGroup {
    pub members: Vec<(usize, DVector<f64>)>,
    pub coeffs: Vec<f64>,
}

impl IndexGroup {
    pub fn r(&self) -> usize {
        self.members.len()
    }

    pub fn vertices(&self) -> Vec<usize> {
        self.members.iter().map(|(v, _)| *v).collect()
    }

    pub fn lead(&self) -> (usize, &DVector<f64>) {
        let (v, b) = &self.members[0];
        (*v, b)
    }

    /// `‖b_last − Σ c_i b_i‖`
    pub fn relation_residual(&self) -> f64 {
        let last = &self.members[self.r() - 1].1;
        let mut s = -last.clone();
        for (c, (_, b)) in self.coeffs.iter().zip(&self.members) {
            s.axpy(*c, b, 1.0);
        }
        s.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachControlIndices {
    /// `permutation[new position] = original vertex index`, over `0..=n`.
    pub permutation: Vec<usize>,
    pub r: Vec<usize>,
    /// `m_k` (1-based positions).
    pub m_starts: Vec<usize>,
    /// `b_i` for positions `1..=κ+1` in the permuted order.
    pub b_vectors: Vec<DVector<f64>>,
    /// Per group, `c_{m_k} … c_{m_k+r_k−2}`.
    pub c_coeffs: Vec<Vec<f64>>,
    pub groups: Vec<IndexGroup>,
    pub kappa: usize,
    pub m_hat: usize,
}

impl ReachControlIndices {
    pub fn p(&self) -> usize {
        self.r.len()
    }

    /// Original vertex index of the lead of group `k` (0-based `k`).
    pub fn lead_vertex(&self, k: usize) -> usize {
        self.groups[k].members[0].0
    }

    pub fn lead_vector(&self, k: usize) -> &DVector<f64> {
        &self.groups[k].members[0].1
    }
}

/// Runs the grouping construction without the lead reordering.
pub fn build_groups(inst: &ProblemInstance) -> Result<Vec<IndexGroup>> {
    inst.check_assumption2()?;
    let sel = inst.selection.as_ref().expect("checked by assumption gate");
    let bsp = inst.system.input_subspace();
    let mut current: Vec<(usize, DVector<f64>)> = sel.independent.clone();
    current.sort_by_key(|(v, _)| *v);
    let mut groups: Vec<IndexGroup> = Vec::new();
    let mut used: Vec<usize> = Vec::new();
    let n = inst.n();

    for &d in &sel.dependent {
        let rays = inst.vertex_cone_rays(d)?.as_rays();
        let subset = minimal_containing_subset(&current, &rays).ok_or_else(|| {
            ReachError::ConstructionFailed(format!(
                "no subset of the independent list spans B ∩ C(v{d})"
            ))
        })?;
        let members: Vec<(usize, DVector<f64>)> = subset.iter().map(|&k| current[k].clone()).collect();
        if let Some((v, _)) = members.iter().find(|(v, _)| used.contains(v)) {
            return Err(ReachError::ConstructionFailed(format!(
                "group for v{d} reuses v{v} from an earlier group"
            )));
        }

        let normals = inst.vertex_cone_normals(d);
        let coeffs = dependent_coefficients(&members, &normals, n)?;
        let mut bbar = DVector::zeros(n);
        for (c, (_, b)) in coeffs.iter().zip(&members) {
            bbar.axpy(*c, b, 1.0);
        }
        // Rescale so the stored vectors stay comparable.
        let scale = bbar.amax();
        let bbar = bbar / scale;
        let coeffs: Vec<f64> = coeffs.iter().map(|c| c / scale).collect();
        if !bsp.contains(&bbar, 1e-9) {
            return Err(ReachError::NumericalFailure("dependent vector left B".into()));
        }

        let first = subset[0];
        let mut group_members = members.clone();
        group_members.push((d, bbar.clone()));
        used.extend(group_members.iter().map(|(v, _)| *v));
        current.remove(first);
        current.push((d, bbar));
        let group = IndexGroup {
            members: group_members,
            coeffs,
        };
        check_group(inst, &group)?;
        groups.push(group);
    }
    Ok(groups)
}

/// Full construction with each group's lead chosen so that `h0·b > 0`.
pub fn reach_control_indices(inst: &ProblemInstance) -> Result<ReachControlIndices> {
    let raw = build_groups(inst)?;
    let h0 = inst.simplex.exit_normal();
    let mut groups = Vec::with_capacity(raw.len());
    for (k, g) in raw.into_iter().enumerate() {
        let mut order: Vec<usize> = (0..g.r()).collect();
        order.sort_by_key(|&i| g.members[i].0);
        let lead = order
            .iter()
            .copied()
            .find(|&i| h0.dot(&g.members[i].1.normalize()) > LEMMA_TOL)
            .ok_or_else(|| {
                ReachError::ConstructionFailed(format!(
                    "group {} has no vector leaving through the exit facet (span lies in H0 side)",
                    k + 1
                ))
            })?;
        let mut members = vec![g.members[lead].clone()];
        members.extend(order.iter().filter(|&&i| i != lead).map(|&i| g.members[i].clone()));
        let coeffs = solve_relation(&members);
        let group = IndexGroup { members, coeffs };
        check_group(inst, &group)?;
        groups.push(group);
    }

    let n = inst.n();
    let mut permutation = vec![0];
    let mut b_vectors = Vec::new();
    let mut r = Vec::new();
    let mut m_starts = Vec::new();
    let mut c_coeffs = Vec::new();
    for g in &groups {
        m_starts.push(permutation.len());
        r.push(g.r());
        c_coeffs.push(g.coeffs.clone());
        for (v, b) in &g.members {
            permutation.push(*v);
            b_vectors.push(b.clone());
        }
    }
    let sel = inst.selection.as_ref().expect("checked by assumption gate");
    let g_vertices = inst.g_vertices();
    for &v in g_vertices {
        if permutation.contains(&v) {
            continue;
        }
        // Extra vertices keep a vector from their own cone.
        let b = sel
            .independent
            .iter()
            .find(|(w, _)| *w == v)
            .map(|(_, b)| b.clone())
            .map_or_else(
                || {
                    polylin::nonzero_cone_point(&inst.vertex_cone_normals(v), &inst.system.input_subspace())
                        .map(|o| o.unwrap_or_else(|| DVector::zeros(n)))
                },
                Ok,
            )?;
        permutation.push(v);
        b_vectors.push(b);
    }
    for v in 1..=n {
        if !permutation.contains(&v) {
            permutation.push(v);
        }
    }
    let kappa = g_vertices.len() - 1;
    Ok(ReachControlIndices {
        permutation,
        r,
        m_starts,
        b_vectors,
        c_coeffs,
        groups,
        kappa,
        m_hat: sel.m_hat,
    })
}

/// Smallest subset (by cardinality, then lexicographically) of `current`
/// whose span contains every generator.
fn minimal_containing_subset(current: &[(usize, DVector<f64>)], gens: &[DVector<f64>]) -> Option<Vec<usize>> {
    let k = current.len();
    for size in 1..=k {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let cols: Vec<DVector<f64>> = combo.iter().map(|&i| current[i].1.clone()).collect();
            let span = polylin::SubspaceBasis::from_columns(&DMatrix::from_columns(&cols));
            if gens.iter().all(|g| span.residual(&g.normalize()) <= LEMMA_TOL) {
                return Some(combo);
            }
            if !next_combination(&mut combo, k) {
                break;
            }
        }
    }
    None
}

pub(crate) fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Finds `c < 0` with `Σ c_i b_i` in the cone given by `normals`, maximizing
/// `min |c_i|` over `c ∈ [−1, 0]`.
fn dependent_coefficients(
    members: &[(usize, DVector<f64>)],
    normals: &[DVector<f64>],
    n: usize,
) -> Result<Vec<f64>> {
    let mut lp = LinearProgram::maximize();
    let c: Vec<usize> = members.iter().map(|_| lp.var(0.0, -1.0, 0.0)).collect();
    let mu = lp.var(1.0, 0.0, 1.0);
    for &ci in &c {
        lp.constraint(vec![(ci, 1.0), (mu, 1.0)], Cmp::Le, 0.0);
    }
    for h in normals {
        let coeffs: Vec<f64> = members.iter().map(|(_, b)| h.dot(b)).collect();
        lp.dense(&c, &coeffs, Cmp::Le, 0.0);
    }
    let x = match lp.solve()? {
        LpOutcome::Optimal { x, .. } => x,
        _ => {
            return Err(ReachError::ConstructionFailed(
                "no dependent vector with all coefficients negative".into(),
            ))
        }
    };
    if x[mu] < COEFF_MARGIN {
        return Err(ReachError::ConstructionFailed(format!(
            "dependent vector coefficient margin {:.3e} below {COEFF_MARGIN:.0e}",
            x[mu]
        )));
    }
    let coeffs: Vec<f64> = c.iter().map(|&i| x[i]).collect();
    let mut bbar = DVector::zeros(n);
    for (cv, (_, b)) in coeffs.iter().zip(members) {
        bbar.axpy(*cv, b, 1.0);
    }
    if bbar.amax() <= 1e-12 {
        return Err(ReachError::ConstructionFailed("dependent vector vanished".into()));
    }
    Ok(coeffs)
}

/// Least-squares coefficients of the last member in terms of the others.
fn solve_relation(members: &[(usize, DVector<f64>)]) -> Vec<f64> {
    let r = members.len();
    let cols: Vec<DVector<f64>> = members[..r - 1].iter().map(|(_, b)| b.clone()).collect();
    let y = DMatrix::from_columns(&cols);
    let target = &members[r - 1].1;
    let c = polylin::min_norm_solution(&y, target);
    c.iter().copied().collect()
}

fn check_group(inst: &ProblemInstance, g: &IndexGroup) -> Result<()> {
    let r = g.r();
    if r < 2 {
        return Err(ReachError::ConstructionFailed("group with fewer than two members".into()));
    }
    if let Some(c) = g.coeffs.iter().find(|&&c| c >= -1e-9) {
        return Err(ReachError::ConstructionFailed(format!(
            "relation coefficient {c:.3e} is not negative"
        )));
    }
    let scale = g.members.iter().map(|(_, b)| b.norm()).fold(1.0, f64::max);
    if g.relation_residual() > LEMMA_TOL * scale {
        return Err(ReachError::ConstructionFailed(format!(
            "group relation residual {:.3e}",
            g.relation_residual()
        )));
    }
    let indep: Vec<DVector<f64>> = g.members[..r - 1].iter().map(|(_, b)| b.clone()).collect();
    if polylin::rank(&DMatrix::from_columns(&indep), 1e-9) != r - 1 {
        return Err(ReachError::ConstructionFailed("group basis is dependent".into()));
    }
    let verts = g.vertices();
    let n = inst.n();
    for (_, b) in &g.members {
        let bu = b.normalize();
        for j in (1..=n).filter(|j| !verts.contains(j)) {
            let v = inst.simplex.normal(j).dot(&bu);
            if v.abs() > LEMMA_TOL {
                return Err(ReachError::ConstructionFailed(format!(
                    "orthogonality fails: h{j}·b = {v:.3e}"
                )));
            }
        }
    }
    let m = group_m_matrix(inst, g);
    if !polylin::is_nonsingular_m_matrix(&m, 1e-10) {
        return Err(ReachError::ConstructionFailed(
            "group matrix H^T Y is not a nonsingular M-matrix".into(),
        ));
    }
    Ok(())
}

/// `H^T Y` over the leading `r − 1` members, with unit-normalized columns.
pub fn group_m_matrix(inst: &ProblemInstance, g: &IndexGroup) -> DMatrix<f64> {
    let k = g.r() - 1;
    DMatrix::from_fn(k, k, |i, j| {
        let h = inst.simplex.normal(g.members[i].0);
        h.dot(&g.members[j].1.normalize())
    })
}
