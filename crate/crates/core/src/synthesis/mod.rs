//! Controller construction: vertex controls, affine interpolation, the
//! subdivision of the simplex and assembly of the piecewise affine law.

mod controls;
mod format;
mod subdivide;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::analysis::{reach_control_indices, ProblemInstance, Route};
use crate::error::{ReachError, Result};
use crate::geometry::{Simplex, MEMBERSHIP_TOL};

pub use controls::{
    affine_from_vertex_controls, base_vertex_controls, min_field_speed, vertex_controls_for_piece, PieceMode,
};
pub use format::{parse_controller, write_controller};
pub use subdivide::{gamma_coefficients, select_lambda, subdivide, LambdaChoice};

/// User-fixed values that replace computed ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pins {
    /// Subdivision points by iteration.
    pub points: Vec<DVector<f64>>,
    /// Vertex controls by 1-based piece index, in piece vertex order.
    pub pieces: BTreeMap<usize, Vec<DVector<f64>>>,
    /// Forces a single affine law on the whole simplex with these controls.
    pub single: Option<Vec<DVector<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisOptions {
    pub pins: Pins,
    /// Margin on unit normals for the cone-vector scaling.
    pub delta: f64,
    /// Box on each control component.
    pub control_box: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            pins: Pins::default(),
            delta: 1e-3,
            control_box: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinePiece {
    /// 1-based position `k`; the supervisor prefers higher values.
    pub index: usize,
    pub simplex: Simplex,
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub vertex_controls: Vec<DVector<f64>>,
}

impl AffinePiece {
    pub fn new(index: usize, simplex: Simplex, vertex_controls: Vec<DVector<f64>>) -> Result<Self> {
        let (gain, offset) = affine_from_vertex_controls(&simplex, &vertex_controls)?;
        Ok(AffinePiece {
            index,
            simplex,
            gain,
            offset,
            vertex_controls,
        })
    }

    pub fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x + &self.offset
    }

    /// `max_i ‖K v_i + g − u_i‖`
    pub fn interpolation_error(&self) -> f64 {
        self.simplex
            .vertices()
            .iter()
            .zip(&self.vertex_controls)
            .map(|(v, u)| (self.control(v) - u).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubdivisionStep {
    pub lambda: f64,
    pub point: DVector<f64>,
    /// `h'` from the normal formula (not normalized).
    pub normal: DVector<f64>,
    pub gamma: Vec<f64>,
    /// Original index of the vertex whose edge was split.
    pub lead_vertex: usize,
    pub pinned: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubdivisionRecord {
    pub steps: Vec<SubdivisionStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaController {
    /// Sorted by ascending index.
    pub pieces: Vec<AffinePiece>,
    pub record: SubdivisionRecord,
    /// Validation notes (filled when checks are skipped for pinned laws).
    pub diagnostics: Vec<String>,
}

impl PwaController {
    pub fn single(piece: AffinePiece) -> Self {
        PwaController {
            pieces: vec![piece],
            record: SubdivisionRecord::default(),
            diagnostics: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].simplex.dim()
    }

    pub fn inputs(&self) -> usize {
        self.pieces[0].offset.len()
    }

    pub fn piece(&self, index: usize) -> Option<&AffinePiece> {
        self.pieces.iter().find(|p| p.index == index)
    }

    /// The highest-index piece containing `x` and its control value.
    pub fn supervisor_select(&self, x: &DVector<f64>) -> Result<(usize, DVector<f64>)> {
        self.select_with_tol(x, MEMBERSHIP_TOL)
    }

    pub fn select_with_tol(&self, x: &DVector<f64>, tol: f64) -> Result<(usize, DVector<f64>)> {
        self.pieces
            .iter()
            .rev()
            .find(|p| p.simplex.contains(x, tol))
            .map(|p| (p.index, p.control(x)))
            .ok_or(ReachError::PointOutsideDomain)
    }

    pub fn total_volume(&self) -> f64 {
        self.pieces.iter().map(|p| p.simplex.volume()).sum()
    }
}

/// Builds the feedback for the instance according to its route.
pub fn synthesize(inst: &ProblemInstance, opts: &SynthesisOptions) -> Result<PwaController> {
    if let Some(controls) = &opts.pins.single {
        let piece = AffinePiece::new(1, inst.simplex.clone(), controls.clone())?;
        let mut ctrl = PwaController::single(piece);
        ctrl.diagnostics = controls::validate_piece(inst, &ctrl.pieces[0], None, None)
            .err()
            .map(|e| match e {
                ReachError::SynthesisFailed(msg) => vec![format!("pinned law rejected: {msg}")],
                other => vec![format!("pinned law rejected: {other}")],
            })
            .unwrap_or_default();
        return Ok(ctrl);
    }
    let pinned = |k: usize| opts.pins.pieces.get(&k).cloned();
    match &inst.route {
        Route::Infeasible(reason) => Err(ReachError::SynthesisFailed(reason.clone())),
        Route::GEmpty | Route::BConeNontrivial | Route::KappaLtMhat => {
            let mode = match inst.route {
                Route::BConeNontrivial => PieceMode::Cone {
                    b: inst.tangent_cone_point.clone().expect("route implies a cone point"),
                },
                Route::KappaLtMhat => {
                    let sel = inst.selection.as_ref().expect("route implies a selection");
                    PieceMode::Independent {
                        targets: sel.independent.clone(),
                    }
                }
                _ => PieceMode::Plain,
            };
            let controls = match pinned(1) {
                Some(c) => c,
                None => vertex_controls_for_piece(&inst.system, &inst.simplex, &mode, opts)?,
            };
            let piece = AffinePiece::new(1, inst.simplex.clone(), controls)?;
            controls::validate_piece(inst, &piece, Some(&mode), None)
                .map_err(|e| ReachError::SynthesisFailed(format!("affine route: {e}")))?;
            Ok(PwaController::single(piece))
        }
        Route::NeedsSubdivision => {
            let idx = reach_control_indices(inst)
                .map_err(|e| ReachError::SynthesisFailed(format!("reach control indices: {e}")))?;
            let (simplices, record) = subdivide(inst, &idx, &opts.pins.points)
                .map_err(|e| ReachError::SynthesisFailed(format!("subdivision: {e}")))?;
            let p = idx.p();
            let mut pieces = Vec::with_capacity(p + 1);
            for (k, s) in simplices.iter().enumerate() {
                let index = k + 1;
                let mode = if index <= p {
                    PieceMode::Cone {
                        b: idx.lead_vector(k).clone(),
                    }
                } else {
                    PieceMode::Independent {
                        targets: last_piece_targets(inst, &idx, s),
                    }
                };
                let controls = match pinned(index) {
                    Some(c) => c,
                    None => vertex_controls_for_piece(&inst.system, s, &mode, opts)
                        .map_err(|e| ReachError::SynthesisFailed(format!("piece {index}: {e}")))?,
                };
                let piece = AffinePiece::new(index, s.clone(), controls)?;
                let crossing = (index <= p).then(|| idx.lead_vertex(k));
                controls::validate_piece(inst, &piece, Some(&mode), crossing)
                    .map_err(|e| ReachError::SynthesisFailed(format!("piece {index}: {e}")))?;
                pieces.push(piece);
            }
            Ok(PwaController {
                pieces,
                record,
                diagnostics: Vec::new(),
            })
        }
    }
}

/// Vertices of the last piece that lie in `O`, paired with their vectors.
fn last_piece_targets(
    inst: &ProblemInstance,
    idx: &crate::analysis::ReachControlIndices,
    last: &Simplex,
) -> Vec<(usize, DVector<f64>)> {
    let mut out = Vec::new();
    for (pos, &v) in idx.permutation.iter().enumerate().skip(1) {
        if pos > idx.kappa + 1 {
            break;
        }
        let replaced = (0..idx.p()).any(|k| idx.lead_vertex(k) == v);
        if replaced {
            continue;
        }
        debug_assert!((last.vertex(v) - inst.simplex.vertex(v)).norm() == 0.0);
        out.push((v, idx.b_vectors[pos - 1].clone()));
    }
    out
}
