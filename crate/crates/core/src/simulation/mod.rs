//! Closed-loop integration under a piecewise affine controller.

mod verify;

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use crate::analysis::{AffineSystem, ProblemInstance};
use crate::error::{ReachError, Result};
use crate::geometry::{Simplex, MEMBERSHIP_TOL};
use crate::synthesis::{AffinePiece, PwaController};

pub use verify::{barycentric_grid, verify_rcp, TrajectoryOutcome, VerificationReport};

/// Barycentric coordinate below which a point counts as outside.
pub const EXIT_TOL: f64 = 1e-10;
/// Speed below which a step counts as stalled.
pub const STALL_SPEED: f64 = 1e-9;
pub const STALL_STEPS: usize = 10;
/// Steps integrated past an exit to confirm the state stays outside.
pub const POST_EXIT_STEPS: usize = 10;
const CHATTER_WINDOW: usize = 10;
const CHATTER_SWITCHES: usize = 3;
const BISECTION_STEPS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TraceStatus {
    ExitedF0,
    ExitedWrongFacet,
    TimedOut,
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    /// Fixed step; `None` picks `1e-3 · diam(S) / max ‖ẋ‖`.
    pub dt: Option<f64>,
    pub t_max: f64,
    /// Seed for sampled checks in verification.
    pub seed: u64,
    pub boundary_samples: usize,
    /// Step budget; a trace that uses it up is reported as timed out.
    pub max_steps: usize,
    /// Keep every sample; when false only the start is stored.
    pub record_samples: bool,
    /// Tolerance on `h_j · ẋ` for the sampled invariance check.
    pub invariance_tol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: None,
            t_max: 100.0,
            seed: 0,
            boundary_samples: 100_000,
            max_steps: 2_000_000,
            record_samples: true,
            invariance_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    /// Piece driving the step that starts here.
    pub piece: usize,
    pub u: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitEvent {
    pub time: f64,
    /// Facet of `S` that was crossed (0 is the exit facet).
    pub facet: usize,
    pub point: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub samples: Vec<Sample>,
    pub exit: Option<ExitEvent>,
    pub status: TraceStatus,
    pub dt: f64,
    /// Minimum `‖ẋ‖` over the samples.
    pub min_speed: f64,
    pub min_speed_at: DVector<f64>,
    pub chattering_events: usize,
    /// False once the active piece index increased.
    pub monotone: bool,
    /// `Some(true)` when the state stayed outside `S` after the exit.
    pub post_exit_ok: Option<bool>,
}

impl SimulationTrace {
    pub fn exit_time(&self) -> Option<f64> {
        self.exit.as_ref().map(|e| e.time)
    }

    /// CSV with header `t,x1..xn,piece,u1..um`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let m = self.samples.first().map_or(0, |s| s.u.len());
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",piece");
        for i in 1..=m {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{:.16e}", s.t);
            for v in s.x.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = write!(out, ",{}", s.piece);
            for v in s.u.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

fn closed_loop(sys: &AffineSystem, piece: &AffinePiece, x: &DVector<f64>) -> DVector<f64> {
    sys.field(x, &piece.control(x))
}

fn rk4(sys: &AffineSystem, piece: &AffinePiece, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = closed_loop(sys, piece, x);
    let k2 = closed_loop(sys, piece, &(x + &k1 * (0.5 * h)));
    let k3 = closed_loop(sys, piece, &(x + &k2 * (0.5 * h)));
    let k4 = closed_loop(sys, piece, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Largest closed-loop speed over all piece vertices.
pub fn max_field_speed(sys: &AffineSystem, ctrl: &PwaController) -> f64 {
    ctrl.pieces
        .iter()
        .flat_map(|p| p.simplex.vertices().iter().map(move |v| closed_loop(sys, p, v).norm()))
        .fold(0.0, f64::max)
}

pub fn default_dt(inst: &ProblemInstance, ctrl: &PwaController) -> f64 {
    let speed = max_field_speed(&inst.system, ctrl);
    let diam = inst.simplex.diameter();
    if speed > 0.0 {
        1e-3 * diam / speed
    } else {
        1e-3 * diam
    }
}

/// For each facet of `piece`, the facet of `s` containing it (if any).
fn facet_map(s: &Simplex, piece: &Simplex) -> Vec<Option<usize>> {
    let bary: Vec<Vec<f64>> = piece.vertices().iter().map(|v| s.barycentric(v)).collect();
    (0..bary.len())
        .map(|j| {
            (0..bary.len()).find(|&i| {
                bary.iter()
                    .enumerate()
                    .filter(|(l, _)| *l != j)
                    .all(|(_, b)| b[i].abs() <= 1e-12)
            })
        })
        .collect()
}

/// Piece used at `x`: the supervisor choice, or the piece with the largest
/// minimum barycentric coordinate when `x` sits in a numerical gap.
///
/// Right after leaving piece `left` through an internal facet, lower pieces
/// containing `x` are tried first; at faces shared by several pieces this
/// stops the state from bouncing back into a piece it cannot stay in.
fn select(ctrl: &PwaController, x: &DVector<f64>, left: Option<usize>) -> usize {
    if let Some(l) = left {
        if let Some((k, _)) = ctrl
            .pieces
            .iter()
            .enumerate()
            .rev()
            .find(|(_, p)| p.index < l && p.simplex.contains(x, MEMBERSHIP_TOL))
        {
            return k;
        }
    }
    let candidates = ctrl.pieces.iter().enumerate().filter(|(_, p)| Some(p.index) != left);
    if let Some((k, _)) = candidates
        .clone()
        .rev()
        .find(|(_, p)| p.simplex.contains(x, MEMBERSHIP_TOL))
    {
        return k;
    }
    candidates
        .map(|(k, p)| (k, p.simplex.min_barycentric(x)))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
        .0
}

struct Crossing {
    h: f64,
    facet: usize,
}

/// First `h ∈ (0, dt]` at which the RK4 step leaves `piece`, localized by
/// bisection.
fn locate_crossing(sys: &AffineSystem, piece: &AffinePiece, x: &DVector<f64>, dt: f64) -> Option<Crossing> {
    let end = piece.simplex.barycentric(&rk4(sys, piece, x, dt));
    let (mut facet, worst) = argmin(&end);
    if worst >= -EXIT_TOL {
        return None;
    }
    let mut hi = dt;
    loop {
        let mut lo = 0.0;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let b = piece.simplex.barycentric(&rk4(sys, piece, x, mid));
            if b[facet] < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // Another coordinate may have gone negative first.
        let b = piece.simplex.barycentric(&rk4(sys, piece, x, lo));
        let (j, w) = argmin(&b);
        if w < -EXIT_TOL && j != facet && lo > 0.0 {
            facet = j;
            hi = lo;
            continue;
        }
        return Some(Crossing { h: hi, facet });
    }
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

/// Integrates from `x0` until the state leaves `S`, stalls or `t_max` passes.
pub fn simulate(
    inst: &ProblemInstance,
    ctrl: &PwaController,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    let sys = &inst.system;
    let s = &inst.simplex;
    if x0.len() != s.dim() {
        return Err(ReachError::DimensionMismatch(format!(
            "start has length {}, expected {}",
            x0.len(),
            s.dim()
        )));
    }
    if !s.contains(x0, MEMBERSHIP_TOL) {
        return Err(ReachError::PointOutsideDomain);
    }
    let dt = opts.dt.unwrap_or_else(|| default_dt(inst, ctrl));
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ReachError::InvalidSystem(format!("step size {dt} is not positive")));
    }
    let maps: Vec<Vec<Option<usize>>> = ctrl.pieces.iter().map(|p| facet_map(s, &p.simplex)).collect();

    let mut x = x0.clone();
    let mut t = 0.0;
    let mut samples: Vec<Sample> = Vec::new();
    let mut exclude: Option<usize> = None;
    let mut slow = 0;
    let mut min_speed = f64::INFINITY;
    let mut min_speed_at = x0.clone();
    let mut switches: Vec<usize> = Vec::new();
    let mut step = 0usize;
    let mut chattering_events = 0;
    let mut last_piece: Option<usize> = None;
    let mut monotone = true;

    let (status, exit, active) = loop {
        let k = select(ctrl, &x, exclude);
        exclude = None;
        let piece = &ctrl.pieces[k];
        let y = closed_loop(sys, piece, &x);
        let speed = y.norm();
        if speed < min_speed {
            min_speed = speed;
            min_speed_at = x.clone();
        }
        if samples.is_empty() || (opts.record_samples && samples.last().is_some_and(|l| t > l.t)) {
            samples.push(Sample {
                t,
                x: x.clone(),
                piece: piece.index,
                u: piece.control(&x),
            });
        }
        if last_piece.is_some_and(|l| piece.index > l) {
            monotone = false;
        }
        if last_piece.is_some_and(|l| l != piece.index) {
            switches.push(step);
            switches.retain(|&s| s + CHATTER_WINDOW > step);
            if switches.len() >= CHATTER_SWITCHES {
                chattering_events += 1;
                switches.clear();
            }
        }
        last_piece = Some(piece.index);

        slow = if speed < STALL_SPEED { slow + 1 } else { 0 };
        if slow >= STALL_STEPS {
            break (TraceStatus::Stalled, None, k);
        }
        if t >= opts.t_max || step >= opts.max_steps {
            break (TraceStatus::TimedOut, None, k);
        }
        let h = dt.min(opts.t_max - t).max(f64::MIN_POSITIVE);
        step += 1;
        match locate_crossing(sys, piece, &x, h) {
            None => {
                x = rk4(sys, piece, &x, h);
                t += h;
            }
            Some(c) => {
                let point = rk4(sys, piece, &x, c.h);
                let time = t + c.h;
                match maps[k][c.facet] {
                    Some(facet) => {
                        let status = if facet == s.exit_index() {
                            TraceStatus::ExitedF0
                        } else {
                            TraceStatus::ExitedWrongFacet
                        };
                        break (status, Some(ExitEvent { time, facet, point }), k);
                    }
                    None => {
                        x = point;
                        t = time;
                        exclude = Some(piece.index);
                    }
                }
            }
        }
    };

    let post_exit_ok = match (&exit, status) {
        (Some(e), TraceStatus::ExitedF0) => {
            let piece = &ctrl.pieces[active];
            let mut z = e.point.clone();
            let mut ok = true;
            for _ in 0..POST_EXIT_STEPS {
                z = rk4(sys, piece, &z, dt);
                ok &= s.min_barycentric(&z) < 0.0;
            }
            Some(ok)
        }
        _ => None,
    };

    Ok(SimulationTrace {
        samples,
        exit,
        status,
        dt,
        min_speed,
        min_speed_at,
        chattering_events,
        monotone,
        post_exit_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::synthesis::{synthesize, AffinePiece, SynthesisOptions};
    use nalgebra::dvector;

    fn planar_pwa() -> (ProblemInstance, PwaController) {
        let inst = catalog::double_integrator();
        let opts = SynthesisOptions {
            pins: catalog::double_integrator_pins(),
            ..Default::default()
        };
        let ctrl = synthesize(&inst, &opts).unwrap();
        (inst, ctrl)
    }

    fn planar_affine() -> (ProblemInstance, PwaController) {
        let inst = catalog::double_integrator();
        let piece = AffinePiece::new(1, inst.simplex.clone(), catalog::double_integrator_affine_controls()).unwrap();
        (inst, PwaController::single(piece))
    }

    #[test]
    fn centroid_exits_through_f0() {
        let (inst, ctrl) = planar_pwa();
        let tr = simulate(&inst, &ctrl, &inst.simplex.centroid(), &SimOptions::default()).unwrap();
        assert_eq!(tr.status, TraceStatus::ExitedF0);
        let e = tr.exit.as_ref().unwrap();
        assert!(e.time > 0.0 && e.time.is_finite());
        assert!(inst.simplex.barycentric(&e.point)[0].abs() < 1e-10);
        assert_eq!(tr.post_exit_ok, Some(true));
        assert!(tr.monotone);
        assert!(tr.samples.windows(2).all(|w| w[1].piece <= w[0].piece));
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn single_law_stalls_at_equilibrium() {
        let (inst, ctrl) = planar_affine();
        let tr = simulate(&inst, &ctrl, &dvector![0.5, 0.0], &SimOptions::default()).unwrap();
        assert_eq!(tr.status, TraceStatus::Stalled);
        assert!(tr.min_speed < 1e-9);
    }

    #[test]
    fn start_on_exit_facet_leaves_immediately() {
        let (inst, ctrl) = planar_pwa();
        // Midpoint of F0 = co{v1, v2}; u = −1 there pushes x2 down.
        let tr = simulate(&inst, &ctrl, &dvector![0.5, 0.0], &SimOptions::default()).unwrap();
        assert_eq!(tr.status, TraceStatus::ExitedF0);
        assert!(tr.exit_time().unwrap() < 1e-12);
    }

    #[test]
    fn outside_start_rejected() {
        let (inst, ctrl) = planar_pwa();
        assert!(matches!(
            simulate(&inst, &ctrl, &dvector![2.0, 2.0], &SimOptions::default()),
            Err(ReachError::PointOutsideDomain)
        ));
    }

    #[test]
    fn time_limit_reported() {
        let (inst, ctrl) = planar_pwa();
        let opts = SimOptions {
            t_max: 1e-3,
            ..Default::default()
        };
        let tr = simulate(&inst, &ctrl, &inst.simplex.centroid(), &opts).unwrap();
        assert_eq!(tr.status, TraceStatus::TimedOut);
    }

    #[test]
    fn csv_header_and_rows() {
        let (inst, ctrl) = planar_pwa();
        let tr = simulate(&inst, &ctrl, &inst.simplex.centroid(), &SimOptions::default()).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,piece,u1"));
        assert_eq!(lines.count(), tr.samples.len());
    }

    #[test]
    fn facet_map_of_first_piece() {
        let (inst, ctrl) = planar_pwa();
        let map = facet_map(&inst.simplex, &ctrl.pieces[0].simplex);
        // S¹ = co{v', v1, v2}: facet 0 is F0, facet 1 is internal, facet 2 lies on F2.
        assert_eq!(map, vec![Some(0), None, Some(2)]);
    }

    #[test]
    fn corner_shared_by_three_pieces_does_not_bounce() {
        let inst = catalog::two_input_4d();
        let opts = SynthesisOptions {
            pins: catalog::two_input_4d_pins(),
            ..Default::default()
        };
        let ctrl = synthesize(&inst, &opts).unwrap();
        let sim = SimOptions {
            max_steps: 100_000,
            ..Default::default()
        };
        for x0 in [dvector![0.0, 0.6, 0.2, 0.0], dvector![0.2, 0.6, 0.0, 0.0]] {
            let tr = simulate(&inst, &ctrl, &x0, &sim).unwrap();
            assert_eq!(tr.status, TraceStatus::ExitedF0, "{x0}");
            assert!(tr.monotone);
            assert_eq!(tr.chattering_events, 0);
        }
    }
}
