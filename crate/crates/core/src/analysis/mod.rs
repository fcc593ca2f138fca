//! Instance classification: the equilibrium set `O`, the face `G = S ∩ O`,
//! the structural assumptions, necessary conditions and reach control
//! indices.

mod indices;
mod selection;

use nalgebra::{DMatrix, DVector};

use crate::error::{Assumption, ReachError, Result};
use crate::geometry::{Face, Simplex};
use crate::polylin::lp::{Cmp, LinearProgram, LpOutcome};
use crate::polylin::{self, IneqSystem, Relation, SubspaceBasis, RANK_TOL};

pub use indices::{build_groups, reach_control_indices, IndexGroup, ReachControlIndices};
pub use selection::{max_independent_selection, Selection, MAX_G_VERTICES};

/// Absolute tolerance for lemma checks on unit-normalized data.
pub const LEMMA_TOL: f64 = 1e-8;
/// Tolerance for membership of a vertex in `O`.
pub const O_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct AffineSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ReachError::DimensionMismatch(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || offset.len() != n {
            return Err(ReachError::DimensionMismatch(format!(
                "B has {} rows and a has length {}, expected {n}",
                b.nrows(),
                offset.len()
            )));
        }
        if b.ncols() == 0 {
            return Err(ReachError::InvalidSystem("B has no columns".into()));
        }
        let finite = a.iter().chain(b.iter()).chain(offset.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(ReachError::InvalidSystem("non-finite entry".into()));
        }
        let r = polylin::rank(&b, RANK_TOL);
        if r != b.ncols() {
            return Err(ReachError::InvalidSystem(format!(
                "rank(B) = {r} but B has {} columns",
                b.ncols()
            )));
        }
        Ok(AffineSystem { a, b, offset })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// `Ax + a`
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.offset
    }

    /// `Ax + Bu + a`
    pub fn field(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + &self.b * u
    }

    pub fn input_subspace(&self) -> SubspaceBasis {
        SubspaceBasis::from_columns(&self.b)
    }

    /// The unique `w` with `Bw = y` for `y` in the input image (least squares
    /// otherwise).
    pub fn input_for(&self, y: &DVector<f64>) -> DVector<f64> {
        let bt = self.b.transpose();
        let gram = &bt * &self.b;
        gram.lu()
            .solve(&(bt * y))
            .expect("rank(B) = m makes the Gram matrix invertible")
    }
}

/// `O = {x : Ax + a ∈ Im B}` in the normal form `W x = d` with orthonormal
/// rows.
#[derive(Clone, Debug, PartialEq)]
pub enum EquilibriumSet {
    Empty,
    Affine {
        point: DVector<f64>,
        constraints: DMatrix<f64>,
        offsets: DVector<f64>,
    },
}

impl EquilibriumSet {
    pub fn is_empty(&self) -> bool {
        matches!(self, EquilibriumSet::Empty)
    }

    /// Affine dimension, `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        match self {
            EquilibriumSet::Empty => None,
            EquilibriumSet::Affine { constraints, .. } => {
                Some(constraints.ncols() - constraints.nrows())
            }
        }
    }

    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        match self {
            EquilibriumSet::Empty => f64::INFINITY,
            EquilibriumSet::Affine {
                constraints,
                offsets,
                ..
            } => (constraints * x - offsets).norm(),
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.distance(x) <= tol
    }
}

pub fn compute_o(sys: &AffineSystem) -> EquilibriumSet {
    let n = sys.n();
    let left = polylin::null_basis(&sys.b.transpose());
    if left.dim() == 0 {
        return EquilibriumSet::Affine {
            point: DVector::zeros(n),
            constraints: DMatrix::zeros(0, n),
            offsets: DVector::zeros(0),
        };
    }
    let nt = left.matrix().transpose();
    let m = &nt * &sys.a;
    let rhs = -(&nt * &sys.offset);
    let rows = polylin::image_basis(&m.transpose());
    if rows.dim() == 0 {
        return if rhs.norm() <= 1e-9 * (1.0 + sys.offset.norm()) {
            EquilibriumSet::Affine {
                point: DVector::zeros(n),
                constraints: DMatrix::zeros(0, n),
                offsets: DVector::zeros(0),
            }
        } else {
            EquilibriumSet::Empty
        };
    }
    let point = polylin::min_norm_solution(&m, &rhs);
    let scale = 1.0 + m.norm() * point.norm() + rhs.norm();
    if (&m * &point - &rhs).norm() > 1e-9 * scale {
        return EquilibriumSet::Empty;
    }
    let w = rows.matrix().transpose();
    let d = &w * &point;
    EquilibriumSet::Affine {
        point,
        constraints: w,
        offsets: d,
    }
}

/// `G = S ∩ O` when it is a face. Returns `None` for an empty intersection.
pub fn compute_g(simplex: &Simplex, o: &EquilibriumSet) -> Result<Option<Face>> {
    let (w, d) = match o {
        EquilibriumSet::Empty => return Ok(None),
        EquilibriumSet::Affine {
            constraints,
            offsets,
            ..
        } => (constraints, offsets),
    };
    let count = simplex.vertices().len();
    let scale = simplex.diameter().max(1.0);
    let in_o: Vec<usize> = (0..count)
        .filter(|&i| o.distance(simplex.vertex(i)) <= O_TOL * scale)
        .collect();
    let outside: Vec<usize> = (0..count).filter(|i| !in_o.contains(i)).collect();
    if outside.is_empty() {
        return Ok(Some(simplex.face(&in_o)?));
    }

    // Maximize the weight on vertices outside O over S ∩ O.
    let mut lp = LinearProgram::maximize();
    let lam: Vec<usize> = (0..count)
        .map(|i| lp.var(if outside.contains(&i) { 1.0 } else { 0.0 }, 0.0, 1.0))
        .collect();
    lp.dense(&lam, &vec![1.0; count], Cmp::Eq, 1.0);
    for r in 0..w.nrows() {
        let coeffs: Vec<f64> = (0..count).map(|i| w.row(r).dot(&simplex.vertex(i).transpose())).collect();
        lp.dense(&lam, &coeffs, Cmp::Eq, d[r]);
    }
    match lp.solve()? {
        LpOutcome::Infeasible => {
            if in_o.is_empty() {
                Ok(None)
            } else {
                Err(ReachError::NumericalFailure(
                    "vertices lie in O but S ∩ O was found empty".into(),
                ))
            }
        }
        LpOutcome::Unbounded => Err(ReachError::NumericalFailure(
            "bounded face LP reported unbounded".into(),
        )),
        LpOutcome::Optimal { objective, .. } => {
            if objective > 1e-9 {
                Err(ReachError::assumption(
                    Assumption::FaceStructure,
                    format!("S ∩ O is not a face (weight {objective:.3e} off the O vertices)"),
                ))
            } else if in_o.is_empty() {
                Err(ReachError::assumption(
                    Assumption::FaceStructure,
                    "S ∩ O is nonempty but contains no vertex",
                ))
            } else {
                Ok(Some(simplex.face(&in_o)?))
            }
        }
    }
}

/// Invariance rows at vertex `i` of `simplex`, as an inequality system in `u`:
/// `h_j·(A v_i + B u + a) ≤ 0` for every non-exit facet containing `v_i`.
pub fn invariance_system(sys: &AffineSystem, simplex: &Simplex, i: usize) -> Result<IneqSystem> {
    let drift = sys.drift(simplex.vertex(i));
    let mut ineq = IneqSystem::new(sys.m());
    for j in simplex.facets_containing_vertex(i) {
        let h = simplex.normal(j);
        ineq.push(sys.b().tr_mul(h), h.dot(&drift), Relation::Le)?;
    }
    Ok(ineq)
}

/// Witness controls for the invariance conditions, one per vertex.
pub fn invariance_witnesses(sys: &AffineSystem, simplex: &Simplex) -> Result<Vec<Option<DVector<f64>>>> {
    (0..simplex.vertices().len())
        .map(|i| {
            let ineq = invariance_system(sys, simplex, i)?;
            Ok(polylin::feasible_point(&ineq)?.map(|p| p.point))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Route {
    /// `S ∩ O = ∅`: affine feedback.
    GEmpty,
    /// `B ∩ cone(S) ≠ 0`: affine feedback.
    BConeNontrivial,
    /// `m̂ = κ + 1`: affine feedback.
    KappaLtMhat,
    /// The reach control indices are defined and the simplex is subdivided.
    NeedsSubdivision,
    Infeasible(String),
}

impl Route {
    pub fn tag(&self) -> &'static str {
        match self {
            Route::GEmpty => "G_EMPTY",
            Route::BConeNontrivial => "B_CONE_NONTRIVIAL",
            Route::KappaLtMhat => "KAPPA_LT_MHAT",
            Route::NeedsSubdivision => "NEEDS_SUBDIVISION",
            Route::Infeasible(_) => "INFEASIBLE",
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Route::GEmpty | Route::BConeNontrivial | Route::KappaLtMhat)
    }
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub system: AffineSystem,
    pub simplex: Simplex,
    pub equilibrium: EquilibriumSet,
    pub g_face: Option<Face>,
    pub kappa: Option<usize>,
    pub m_hat: Option<usize>,
    pub route: Route,
    /// Nonzero point of `B ∩ cone(S)` when one exists.
    pub tangent_cone_point: Option<DVector<f64>>,
    pub invariance: Vec<Option<DVector<f64>>>,
    pub selection: Option<Selection>,
}

impl ProblemInstance {
    pub fn new(system: AffineSystem, simplex: Simplex) -> Result<Self> {
        if system.n() != simplex.dim() {
            return Err(ReachError::DimensionMismatch(format!(
                "system has n = {} but the simplex lives in dimension {}",
                system.n(),
                simplex.dim()
            )));
        }
        let equilibrium = compute_o(&system);
        let g_face = compute_g(&simplex, &equilibrium)?;
        let kappa = g_face.as_ref().map(|f| f.dim());
        let invariance = invariance_witnesses(&system, &simplex)?;
        let bsp = system.input_subspace();
        let tangent: Vec<DVector<f64>> = (1..=simplex.dim()).map(|j| simplex.normal(j).clone()).collect();
        let tangent_cone_point = polylin::nonzero_cone_point(&tangent, &bsp)?;

        let mut inst = ProblemInstance {
            system,
            simplex,
            equilibrium,
            g_face,
            kappa,
            m_hat: None,
            route: Route::GEmpty,
            tangent_cone_point,
            invariance,
            selection: None,
        };
        if let Some(face) = &inst.g_face {
            if !face.contains_vertex(0) {
                let sel = max_independent_selection(&inst, face.vertex_indices())?;
                inst.m_hat = Some(sel.m_hat);
                inst.selection = Some(sel);
            }
        }
        inst.route = classify_route(&inst);
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// `p = κ + 1 − m̂`
    pub fn p(&self) -> Option<usize> {
        match (self.kappa, self.m_hat) {
            (Some(k), Some(m)) if m <= k + 1 => Some(k + 1 - m),
            _ => None,
        }
    }

    /// Normals of `C(v_i)` (facets in `{1..n}` other than `i`).
    pub fn vertex_cone_normals(&self, i: usize) -> Vec<DVector<f64>> {
        self.simplex.vertex_cone(i).normals
    }

    /// Extreme generators of `B ∩ C(v_i)`.
    pub fn vertex_cone_rays(&self, i: usize) -> Result<polylin::ExtremeRays> {
        polylin::extreme_rays(&self.vertex_cone_normals(i), &self.system.input_subspace())
    }

    pub fn g_vertices(&self) -> &[usize] {
        self.g_face.as_ref().map_or(&[], |f| f.vertex_indices())
    }

    pub fn invariance_solvable(&self) -> bool {
        self.invariance.iter().all(Option::is_some)
    }

    /// Checks (A1)-(A4), returning the first failure.
    pub fn check_assumption2(&self) -> Result<()> {
        let face = self.g_face.as_ref().ok_or_else(|| {
            ReachError::assumption(Assumption::A1, "S ∩ O is empty")
        })?;
        if face.contains_vertex(0) {
            return Err(ReachError::assumption(Assumption::A1, "v0 lies in G"));
        }
        if let Some(b) = &self.tangent_cone_point {
            return Err(ReachError::assumption(
                Assumption::A2,
                format!("B ∩ cone(S) contains {}", fmt_vec(b)),
            ));
        }
        let sel = self.selection.as_ref().expect("selection exists when v0 ∉ G");
        if let Some(&i) = sel.zero_cones.first() {
            return Err(ReachError::assumption(
                Assumption::A4,
                format!("B ∩ C(v{i}) = {{0}}"),
            ));
        }
        let kappa = face.dim();
        if sel.m_hat >= kappa + 1 {
            return Err(ReachError::assumption(
                Assumption::A3,
                format!("m̂ = {} equals κ + 1 = {}", sel.m_hat, kappa + 1),
            ));
        }
        Ok(())
    }
}

pub fn classify_route(inst: &ProblemInstance) -> Route {
    if let Some(i) = inst.invariance.iter().position(Option::is_none) {
        return Route::Infeasible(format!("invariance conditions infeasible at v{i}"));
    }
    let face = match &inst.g_face {
        None => return Route::GEmpty,
        Some(f) => f,
    };
    if inst.tangent_cone_point.is_some() {
        return Route::BConeNontrivial;
    }
    if face.contains_vertex(0) {
        return Route::Infeasible("v0 lies in G while B ∩ cone(S) = 0".into());
    }
    let sel = inst.selection.as_ref().expect("selection exists when v0 ∉ G");
    if let Some(&i) = sel.zero_cones.first() {
        return Route::Infeasible(format!("B ∩ C(v{i}) = 0 at a vertex of G"));
    }
    if sel.m_hat == face.dim() + 1 {
        return Route::KappaLtMhat;
    }
    Route::NeedsSubdivision
}

/// Outcome of the three executable necessary conditions.
#[derive(Clone, Debug)]
pub struct NecessaryReport {
    /// Invariance witness per vertex.
    pub invariance: Vec<Option<DVector<f64>>>,
    pub invariance_ok: bool,
    /// Nonzero `b ∈ B ∩ C(v_i)` per vertex of `G`.
    pub cone_witnesses: Vec<(usize, Option<DVector<f64>>)>,
    pub cone_ok: bool,
    /// Each group span avoids the exit hyperplane (coarse `B ⊄ H₀` before
    /// indices exist).
    pub not_parallel_ok: bool,
    pub not_parallel_refined: bool,
    pub detail: Vec<String>,
}

impl NecessaryReport {
    pub fn all_pass(&self) -> bool {
        self.invariance_ok && self.cone_ok && self.not_parallel_ok
    }
}

pub fn check_necessary(inst: &ProblemInstance) -> Result<NecessaryReport> {
    let mut detail = Vec::new();
    let invariance = inst.invariance.clone();
    let invariance_ok = invariance.iter().all(Option::is_some);
    for (i, w) in invariance.iter().enumerate() {
        if w.is_none() {
            detail.push(format!("invariance conditions infeasible at v{i}"));
        }
    }

    let bsp = inst.system.input_subspace();
    let mut cone_witnesses = Vec::new();
    for &i in inst.g_vertices() {
        let w = polylin::nonzero_cone_point(&inst.vertex_cone_normals(i), &bsp)?;
        if w.is_none() {
            detail.push(format!("B ∩ C(v{i}) = 0"));
        }
        cone_witnesses.push((i, w));
    }
    let cone_ok = cone_witnesses.iter().all(|(_, w)| w.is_some());

    let h0 = inst.simplex.exit_normal();
    let mut not_parallel_refined = false;
    let mut not_parallel_ok = inst.system.b().tr_mul(h0).amax() > LEMMA_TOL;
    if inst.route == Route::NeedsSubdivision {
        if let Ok(groups) = build_groups(inst) {
            not_parallel_refined = true;
            not_parallel_ok = true;
            for (k, g) in groups.iter().enumerate() {
                let ok = g.members[..g.members.len() - 1]
                    .iter()
                    .any(|(_, b)| h0.dot(&b.normalize()).abs() > LEMMA_TOL);
                if !ok {
                    not_parallel_ok = false;
                    detail.push(format!("group {} spans a subspace of H0", k + 1));
                }
            }
        }
    }
    if !not_parallel_ok && !not_parallel_refined {
        detail.push("B lies in H0".into());
    }
    Ok(NecessaryReport {
        invariance,
        invariance_ok,
        cone_witnesses,
        cone_ok,
        not_parallel_ok,
        not_parallel_refined,
        detail,
    })
}

pub(crate) fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn planar_equilibrium_line() {
        let inst = catalog::double_integrator();
        match &inst.equilibrium {
            EquilibriumSet::Affine {
                constraints,
                offsets,
                ..
            } => {
                assert_eq!(constraints.nrows(), 1);
                assert!(constraints[(0, 0)].abs() < 1e-12);
                assert!((constraints[(0, 1)].abs() - 1.0).abs() < 1e-12);
                assert!(offsets[0].abs() < 1e-12);
            }
            EquilibriumSet::Empty => panic!("O should be a line"),
        }
        assert_eq!(inst.g_vertices(), &[1, 2]);
        assert_eq!(inst.kappa, Some(1));
        assert_eq!(inst.m_hat, Some(1));
        assert_eq!(inst.route, Route::NeedsSubdivision);
    }

    #[test]
    fn four_dim_equilibrium_hyperplane() {
        let inst = catalog::two_input_4d();
        let EquilibriumSet::Affine {
            constraints,
            offsets,
            ..
        } = &inst.equilibrium
        else {
            panic!("O should be a hyperplane");
        };
        assert_eq!(constraints.nrows(), 1);
        let s = constraints.row(0).sum().signum();
        for k in 0..4 {
            assert!((constraints[(0, k)] * s - 0.5).abs() < 1e-9);
        }
        assert!((offsets[0] * s - 0.5).abs() < 1e-9);
        assert_eq!(inst.kappa, Some(3));
        assert_eq!(inst.m_hat, Some(2));
        assert_eq!(inst.p(), Some(2));
        assert_eq!(inst.route, Route::NeedsSubdivision);
    }

    #[test]
    fn full_rank_input_gives_whole_space() {
        let sys = AffineSystem::new(DMatrix::identity(3, 3), DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert_eq!(compute_o(&sys).dim(), Some(3));
    }

    #[test]
    fn shifted_offset_misses_simplex() {
        let sys = AffineSystem::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            dmatrix![0.0; 1.0],
            dvector![5.0, 0.0],
        )
        .unwrap();
        // O = {x2 = -5}
        let s = catalog::double_integrator().simplex;
        let inst = ProblemInstance::new(sys, s).unwrap();
        assert!(inst.g_face.is_none());
        assert_eq!(inst.route, Route::GEmpty);
    }

    #[test]
    fn rank_deficient_b_rejected() {
        let r = AffineSystem::new(DMatrix::zeros(2, 2), dmatrix![1.0, 2.0; 2.0, 4.0], DVector::zeros(2));
        assert!(matches!(r, Err(ReachError::InvalidSystem(_))));
    }

    #[test]
    fn necessary_conditions_on_catalog() {
        let inst = catalog::double_integrator();
        let rep = check_necessary(&inst).unwrap();
        assert!(rep.all_pass(), "{:?}", rep.detail);
        // u2 = 1 satisfies the single invariance row at v2.
        let h1 = inst.simplex.normal(1);
        let y = inst.system.field(inst.simplex.vertex(2), &dvector![1.0]);
        assert!(h1.dot(&y) <= 0.0);

        let inst = catalog::two_input_4d();
        let rep = check_necessary(&inst).unwrap();
        assert!(rep.all_pass(), "{:?}", rep.detail);
        assert!(rep.not_parallel_refined);
        let b1 = &rep.cone_witnesses[0].1.as_ref().unwrap();
        assert!((b1.normalize() - dvector![-2.0, 1.0, 0.0, 0.0].normalize()).norm() < 1e-9);
        let b3 = &rep.cone_witnesses[2].1.as_ref().unwrap();
        assert!((b3.normalize() - dvector![0.0, 0.0, -2.0, 1.0].normalize()).norm() < 1e-9);
    }

    #[test]
    fn input_parallel_to_exit_facet_fails() {
        let sys = AffineSystem::new(
            dmatrix![0.0, 0.0; 0.0, -1.0],
            dmatrix![1.0; 0.0],
            dvector![0.0, 0.0],
        )
        .unwrap();
        let s = Simplex::new(vec![dvector![0.0, 1.0], dvector![1.0, 0.0], dvector![-1.0, 0.0]]).unwrap();
        let inst = ProblemInstance::new(sys, s).unwrap();
        assert_eq!(inst.route, Route::NeedsSubdivision);
        let rep = check_necessary(&inst).unwrap();
        assert!(rep.invariance_ok);
        assert!(rep.cone_ok);
        assert!(!rep.not_parallel_ok);
        assert!(rep.not_parallel_refined);
        assert!(matches!(
            reach_control_indices(&inst),
            Err(ReachError::ConstructionFailed(_))
        ));
    }

    #[test]
    fn assumption_gate_a3() {
        // O = {x1 + x2 = 0} touches S only at v1, so κ = 0 and m̂ = 1.
        let sys = AffineSystem::new(
            dmatrix![0.0, 0.0; -1.0, -1.0],
            dmatrix![1.0; 1.0],
            dvector![0.0, 0.0],
        )
        .unwrap();
        let s = Simplex::new(vec![dvector![0.0, 1.0], dvector![0.0, 0.0], dvector![1.0, 0.0]]).unwrap();
        let inst = ProblemInstance::new(sys, s).unwrap();
        assert_eq!(inst.kappa, Some(0));
        assert_eq!(inst.m_hat, Some(1));
        assert!(inst.tangent_cone_point.is_none());
        assert_eq!(inst.route, Route::KappaLtMhat);
        assert!(matches!(
            reach_control_indices(&inst),
            Err(ReachError::AssumptionViolated {
                tag: Assumption::A3,
                ..
            })
        ));
    }
}
