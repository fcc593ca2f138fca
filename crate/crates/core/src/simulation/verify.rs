//! Grid verification of a synthesized controller.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{closed_loop, default_dt, simulate, SimOptions, TraceStatus};
use crate::analysis::ProblemInstance;
use crate::error::Result;
use crate::synthesis::PwaController;

/// Speed at or below which condition (ii) counts as violated.
const SPEED_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub start: Vec<f64>,
    pub status: TraceStatus,
    pub exit_time: Option<f64>,
    pub exit_point: Option<Vec<f64>>,
    pub min_speed: f64,
    pub chattering_events: usize,
    pub monotone: bool,
    pub post_exit_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub grid_density: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub outcomes: Vec<TrajectoryOutcome>,
    pub exited_f0: usize,
    pub exited_wrong_facet: usize,
    pub timed_out: usize,
    pub stalled: usize,
    pub chattering_events: usize,
    pub non_monotone: usize,
    pub post_exit_failures: usize,
    /// Minimum `‖ẋ‖` over all trace samples.
    pub eps_obs: f64,
    pub eps_obs_at: Vec<f64>,
    pub speed_violation: bool,
    pub invariance_samples: usize,
    pub invariance_violations: usize,
    pub worst_invariance_margin: f64,
    pub worst_invariance_at: Vec<f64>,
    pub exit_time_min: Option<f64>,
    pub exit_time_mean: Option<f64>,
    pub exit_time_max: Option<f64>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

/// All points `Σ (k_i / d) v_i` with nonnegative integers `k_i` summing to `d`.
pub fn barycentric_grid(inst: &ProblemInstance, density: usize) -> Vec<DVector<f64>> {
    let n = inst.simplex.dim();
    let mut out = Vec::new();
    if density == 0 {
        return out;
    }
    let mut k = vec![0usize; n + 1];
    fill(&mut k, 0, density, &mut |k| {
        let lambda: Vec<f64> = k.iter().map(|&c| c as f64 / density as f64).collect();
        out.push(inst.simplex.point_from_barycentric(&lambda));
    });
    out
}

fn fill(k: &mut Vec<usize>, pos: usize, left: usize, emit: &mut impl FnMut(&[usize])) {
    if pos + 1 == k.len() {
        k[pos] = left;
        emit(k);
        return;
    }
    for c in (0..=left).rev() {
        k[pos] = c;
        fill(k, pos + 1, left - c, emit);
    }
}

/// Samples the relative interior of facets `1..=n` and checks that the
/// closed-loop field does not point out of them.
fn invariance_check(inst: &ProblemInstance, ctrl: &PwaController, opts: &SimOptions) -> (usize, f64, Vec<f64>) {
    let s = &inst.simplex;
    let n = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = Vec::new();
    for _ in 0..opts.boundary_samples {
        let j = rng.gen_range(1..=n);
        let mut w: Vec<f64> = (0..=n)
            .map(|i| if i == j { 0.0 } else { -(1.0 - rng.gen::<f64>()).ln() })
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let x = s.point_from_barycentric(&w);
        let Ok((k, _)) = ctrl.supervisor_select(&x) else {
            violations += 1;
            continue;
        };
        let piece = ctrl.piece(k).expect("selected piece exists");
        let y = closed_loop(&inst.system, piece, &x);
        let margin = s.normal(j).dot(&y);
        if margin > worst {
            worst = margin;
            worst_at = x.iter().copied().collect();
        }
        if margin > opts.invariance_tol {
            violations += 1;
        }
    }
    (violations, worst, worst_at)
}

pub fn verify_rcp(
    inst: &ProblemInstance,
    ctrl: &PwaController,
    grid_density: usize,
    opts: &SimOptions,
) -> Result<VerificationReport> {
    let dt = opts.dt.unwrap_or_else(|| default_dt(inst, ctrl));
    let run = SimOptions {
        dt: Some(dt),
        record_samples: false,
        ..opts.clone()
    };
    let starts = barycentric_grid(inst, grid_density);
    let traces = starts
        .par_iter()
        .map(|x0| simulate(inst, ctrl, x0, &run))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    if starts.is_empty() {
        warnings.push("empty start grid; no trajectories simulated".to_string());
    }
    let count = |st: TraceStatus| traces.iter().filter(|t| t.status == st).count();
    let (mut eps_obs, mut eps_obs_at) = (f64::INFINITY, Vec::new());
    for t in &traces {
        if t.min_speed < eps_obs {
            eps_obs = t.min_speed;
            eps_obs_at = t.min_speed_at.iter().copied().collect();
        }
    }
    let times: Vec<f64> = traces.iter().filter_map(|t| t.exit_time()).collect();
    let (invariance_violations, worst, worst_at) = invariance_check(inst, ctrl, opts);

    let outcomes: Vec<TrajectoryOutcome> = starts
        .iter()
        .zip(&traces)
        .map(|(x0, t)| TrajectoryOutcome {
            start: x0.iter().copied().collect(),
            status: t.status,
            exit_time: t.exit_time(),
            exit_point: t.exit.as_ref().map(|e| e.point.iter().copied().collect()),
            min_speed: t.min_speed,
            chattering_events: t.chattering_events,
            monotone: t.monotone,
            post_exit_ok: t.post_exit_ok,
        })
        .collect();
    let exited_f0 = count(TraceStatus::ExitedF0);
    let speed_violation = !traces.is_empty() && eps_obs <= SPEED_FLOOR;
    let chattering_events = traces.iter().map(|t| t.chattering_events).sum();
    let non_monotone = traces.iter().filter(|t| !t.monotone).count();
    let post_exit_failures = traces.iter().filter(|t| t.post_exit_ok == Some(false)).count();
    let passed = exited_f0 == traces.len()
        && !speed_violation
        && invariance_violations == 0
        && chattering_events == 0
        && non_monotone == 0
        && post_exit_failures == 0;
    if speed_violation {
        warnings.push(format!(
            "closed-loop speed {eps_obs:.3e} near {eps_obs_at:?}: likely equilibrium in S"
        ));
    }

    Ok(VerificationReport {
        grid_density,
        dt,
        t_max: opts.t_max,
        seed: opts.seed,
        outcomes,
        exited_f0,
        exited_wrong_facet: count(TraceStatus::ExitedWrongFacet),
        timed_out: count(TraceStatus::TimedOut),
        stalled: count(TraceStatus::Stalled),
        chattering_events,
        non_monotone,
        post_exit_failures,
        eps_obs: if traces.is_empty() { 0.0 } else { eps_obs },
        eps_obs_at,
        speed_violation,
        invariance_samples: opts.boundary_samples,
        invariance_violations,
        worst_invariance_margin: if worst.is_finite() { worst } else { 0.0 },
        worst_invariance_at: worst_at,
        exit_time_min: times.iter().copied().reduce(f64::min),
        exit_time_mean: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
        exit_time_max: times.iter().copied().reduce(f64::max),
        warnings,
        passed,
    })
}
