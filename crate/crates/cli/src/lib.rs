//! Command implementations for the `reachctl` binary.

pub mod error;
pub mod plot;
pub mod problem;
pub mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use reachctl_core::synthesis::{parse_controller, synthesize, write_controller, Pins};
use reachctl_core::{simulate, verify_rcp, ProblemInstance, PwaController, SimOptions, SynthesisOptions};

pub use error::{CliError, Result};
pub use problem::{parse_pins, parse_problem, write_problem, ProblemFile};

pub const DEFAULT_GRID: usize = 10;

/// Flags shared by the commands; `None` falls back to the problem file,
/// then to library defaults.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub grid: Option<usize>,
    pub dt: Option<f64>,
    pub tmax: Option<f64>,
    pub tol: Option<f64>,
    pub pin_controls: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Text result of a command: what goes to stdout and what goes to `--out`.
#[derive(Debug, Default)]
pub struct Output {
    pub summary: String,
    pub document: Option<String>,
    /// Set when the command ran but its result is a failure; the summary and
    /// document are still emitted.
    pub failure: Option<CliError>,
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_problem(path: &Path) -> Result<(ProblemFile, ProblemInstance)> {
    let pf = parse_problem(&read(path)?, &path.display().to_string())?;
    let inst = pf.instance()?;
    Ok((pf, inst))
}

fn load_controller(path: &Path, inst: &ProblemInstance) -> Result<PwaController> {
    let ctrl = parse_controller(&read(path)?)?;
    if ctrl.dim() != inst.n() || ctrl.inputs() != inst.system.m() {
        return Err(reachctl_core::ReachError::DimensionMismatch(format!(
            "controller is for n = {}, m = {} but the problem has n = {}, m = {}",
            ctrl.dim(),
            ctrl.inputs(),
            inst.n(),
            inst.system.m()
        ))
        .into());
    }
    Ok(ctrl)
}

fn sim_options(pf: &ProblemFile, flags: &Flags) -> SimOptions {
    let mut opts = SimOptions {
        dt: flags.dt.or(pf.options.dt),
        seed: flags.seed.unwrap_or(0),
        ..Default::default()
    };
    if let Some(t) = flags.tmax.or(pf.options.tmax) {
        opts.t_max = t;
    }
    if let Some(tol) = flags.tol.or(pf.options.tol) {
        opts.invariance_tol = tol;
    }
    opts
}

fn pins(pf: &ProblemFile, flags: &Flags) -> Result<Pins> {
    match &flags.pin_controls {
        Some(path) => parse_pins(&read(path)?, &path.display().to_string()),
        None => Ok(pf.pins.clone()),
    }
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn cmd_analyze(path: &Path) -> Result<Output> {
    let (_, inst) = load_problem(path)?;
    let rep = report::analyze(&inst);
    let summary = report::render(&rep);
    let document = serde_json::to_string_pretty(&rep).expect("report serializes") + "\n";
    let failure = rep
        .blocked()
        .then(|| CliError::AssumptionFailed(format!("route {}", rep.route)));
    Ok(Output {
        summary,
        document: Some(document),
        failure,
    })
}

pub fn cmd_synthesize(path: &Path, flags: &Flags) -> Result<Output> {
    let (pf, inst) = load_problem(path)?;
    if let reachctl_core::Route::Infeasible(why) = &inst.route {
        return Err(CliError::AssumptionFailed(why.clone()));
    }
    let mut opts = SynthesisOptions {
        pins: pins(&pf, flags)?,
        ..Default::default()
    };
    if let Some(d) = pf.options.delta {
        opts.delta = d;
    }
    if let Some(c) = pf.options.control_box {
        opts.control_box = c;
    }
    let ctrl = synthesize(&inst, &opts)?;
    let mut summary = format!("route {}, {} piece(s)\n", inst.route.tag(), ctrl.pieces.len());
    for step in &ctrl.record.steps {
        let _ = writeln!(
            summary,
            "split at {} (lambda {:.6}{})",
            fmt_vec(step.point.iter().copied()),
            step.lambda,
            if step.pinned { ", pinned" } else { "" }
        );
    }
    for p in &ctrl.pieces {
        let _ = writeln!(summary, "piece {}:", p.index);
        for r in p.gain.row_iter() {
            let _ = writeln!(summary, "  K row {}", fmt_vec(r.iter().copied()));
        }
        let _ = writeln!(summary, "  g {}", fmt_vec(p.offset.iter().copied()));
    }
    for d in &ctrl.diagnostics {
        let _ = writeln!(summary, "note: {d}");
    }
    Ok(Output {
        summary,
        document: Some(write_controller(&ctrl)),
        failure: None,
    })
}

pub fn cmd_verify(path: &Path, controller: &Path, flags: &Flags) -> Result<Output> {
    let (pf, inst) = load_problem(path)?;
    let ctrl = load_controller(controller, &inst)?;
    let grid = flags.grid.or(pf.options.grid).unwrap_or(DEFAULT_GRID);
    let rep = verify_rcp(&inst, &ctrl, grid, &sim_options(&pf, flags))?;
    let mut summary = format!(
        "{} trajectories (grid {grid}, dt {:.3e}, tmax {}): {} exited F0, {} wrong facet, {} timed out, {} stalled\n",
        rep.outcomes.len(),
        rep.dt,
        rep.t_max,
        rep.exited_f0,
        rep.exited_wrong_facet,
        rep.timed_out,
        rep.stalled
    );
    let slowest = if rep.outcomes.is_empty() {
        "-".to_string()
    } else {
        format!("{:.3e} at {}", rep.eps_obs, fmt_vec(rep.eps_obs_at.iter().copied()))
    };
    let _ = writeln!(
        summary,
        "min speed {slowest}, chattering {}, non-monotone {}, post-exit failures {}",
        rep.chattering_events,
        rep.non_monotone,
        rep.post_exit_failures
    );
    let _ = writeln!(
        summary,
        "boundary samples {}, invariance violations {}, worst margin {:.3e}",
        rep.invariance_samples, rep.invariance_violations, rep.worst_invariance_margin
    );
    if let (Some(lo), Some(mean), Some(hi)) = (rep.exit_time_min, rep.exit_time_mean, rep.exit_time_max) {
        let _ = writeln!(summary, "exit time min {lo:.4} mean {mean:.4} max {hi:.4}");
    }
    for w in &rep.warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    let _ = writeln!(summary, "{}", if rep.passed { "PASS" } else { "FAIL" });
    let document = serde_json::to_string_pretty(&rep).expect("report serializes") + "\n";
    let failure = (!rep.passed).then(|| {
        CliError::VerificationFailed(format!("{} of {} trajectories exited through F0", rep.exited_f0, rep.outcomes.len()))
    });
    Ok(Output {
        summary,
        document: Some(document),
        failure,
    })
}

pub fn cmd_simulate(path: &Path, controller: &Path, x0: Option<&[f64]>, flags: &Flags) -> Result<Output> {
    let (pf, inst) = load_problem(path)?;
    let ctrl = load_controller(controller, &inst)?;
    let x0 = match x0 {
        Some(v) if v.len() != inst.n() => {
            return Err(reachctl_core::ReachError::DimensionMismatch(format!(
                "initial state has {} entries, expected {}",
                v.len(),
                inst.n()
            ))
            .into());
        }
        Some(v) => DVector::from_column_slice(v),
        None => inst.simplex.centroid(),
    };
    let trace = simulate(&inst, &ctrl, &x0, &sim_options(&pf, flags))?;
    let mut summary = format!("status {:?} after {} samples (dt {:.3e})\n", trace.status, trace.samples.len(), trace.dt);
    if let Some(e) = &trace.exit {
        let _ = writeln!(
            summary,
            "exit at t = {:.6} through facet {} at {}",
            e.time,
            e.facet,
            fmt_vec(e.point.iter().copied())
        );
    }
    let _ = writeln!(summary, "min speed {:.3e}, switches monotone: {}", trace.min_speed, trace.monotone);
    Ok(Output {
        summary,
        document: Some(trace.to_csv()),
        failure: None,
    })
}

pub fn cmd_plot(path: &Path, controller: &Path, trajectories: bool, flags: &Flags) -> Result<Output> {
    let (pf, inst) = load_problem(path)?;
    if inst.n() != 2 {
        return Err(CliError::UnsupportedDimension(inst.n()));
    }
    let ctrl = load_controller(controller, &inst)?;
    let svg = plot::render_svg(&inst, &ctrl, trajectories, &sim_options(&pf, flags))?;
    Ok(Output {
        summary: format!("{} piece(s) plotted\n", ctrl.pieces.len()),
        document: Some(svg),
        failure: None,
    })
}
