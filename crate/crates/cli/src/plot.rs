//! SVG rendering of planar closed loops.

use std::fmt::Write as _;

use nalgebra::DVector;
use reachctl_core::simulation::barycentric_grid;
use reachctl_core::{simulate, ProblemInstance, PwaController, SimOptions};

use crate::error::{CliError, Result};

const SIZE: f64 = 600.0;
const FIELD_DENSITY: usize = 14;
const TRAJECTORY_DENSITY: usize = 4;
const MAX_POLYLINE_POINTS: usize = 400;
const PIECE_COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

struct Frame {
    min: (f64, f64),
    scale: f64,
    pad: f64,
}

impl Frame {
    fn new(inst: &ProblemInstance) -> Self {
        let vs = inst.simplex.vertices();
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for v in vs {
            lo = (lo.0.min(v[0]), lo.1.min(v[1]));
            hi = (hi.0.max(v[0]), hi.1.max(v[1]));
        }
        let pad = 40.0;
        let span = (hi.0 - lo.0).max(hi.1 - lo.1);
        Frame {
            min: lo,
            scale: (SIZE - 2.0 * pad) / span,
            pad,
        }
    }

    fn map(&self, x: &DVector<f64>) -> (f64, f64) {
        (
            self.pad + (x[0] - self.min.0) * self.scale,
            SIZE - self.pad - (x[1] - self.min.1) * self.scale,
        )
    }
}

fn points(frame: &Frame, pts: &[DVector<f64>]) -> String {
    let parts: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = frame.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    parts.join(" ")
}

/// Renders the simplex, the pieces, the closed-loop field on a grid and,
/// when `trajectories` is set, sample trajectories from a coarse grid.
pub fn render_svg(inst: &ProblemInstance, ctrl: &PwaController, trajectories: bool, opts: &SimOptions) -> Result<String> {
    let n = inst.n();
    if n != 2 {
        return Err(CliError::UnsupportedDimension(n));
    }
    let frame = Frame::new(inst);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");

    for (k, piece) in ctrl.pieces.iter().enumerate() {
        let color = PIECE_COLORS[k % PIECE_COLORS.len()];
        let _ = writeln!(
            out,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.08\" stroke=\"{color}\" stroke-dasharray=\"4 3\" stroke-width=\"1\"/>",
            points(&frame, piece.simplex.vertices())
        );
    }
    let vs = inst.simplex.vertices();
    let _ = writeln!(
        out,
        "<polygon points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>",
        points(&frame, vs)
    );
    let _ = writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"3\"/>",
        points(&frame, &vs[1..])
    );
    for (i, v) in vs.iter().enumerate() {
        let (x, y) = frame.map(v);
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\">v{i}</text>", x + 6.0, y - 6.0);
    }

    let arrow = 0.035 * inst.simplex.diameter() * frame.scale;
    let _ = writeln!(out, "<g stroke=\"#444\" fill=\"#444\" stroke-width=\"1\">");
    for x in barycentric_grid(inst, FIELD_DENSITY) {
        let Ok((_, u)) = ctrl.supervisor_select(&x) else {
            continue;
        };
        let y = inst.system.field(&x, &u);
        let (px, py) = frame.map(&x);
        let norm = y.norm();
        if norm < 1e-12 {
            let _ = writeln!(out, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"#d62728\" stroke=\"none\"/>");
            continue;
        }
        let (dx, dy) = (y[0] / norm * arrow, -y[1] / norm * arrow);
        let (ex, ey) = (px + dx, py + dy);
        let (hx, hy) = (dx * 0.3, dy * 0.3);
        let _ = writeln!(out, "<line x1=\"{px:.2}\" y1=\"{py:.2}\" x2=\"{ex:.2}\" y2=\"{ey:.2}\"/>");
        let _ = writeln!(
            out,
            "<polygon points=\"{ex:.2},{ey:.2} {:.2},{:.2} {:.2},{:.2}\"/>",
            ex - hx - hy * 0.5,
            ey - hy + hx * 0.5,
            ex - hx + hy * 0.5,
            ey - hy - hx * 0.5
        );
    }
    let _ = writeln!(out, "</g>");

    if trajectories {
        let run = SimOptions {
            max_steps: opts.max_steps.min(200_000),
            ..opts.clone()
        };
        for x0 in barycentric_grid(inst, TRAJECTORY_DENSITY) {
            if inst.simplex.min_barycentric(&x0) < 1e-9 {
                continue;
            }
            let trace = simulate(inst, ctrl, &x0, &run)?;
            let stride = trace.samples.len().div_ceil(MAX_POLYLINE_POINTS).max(1);
            let mut pts: Vec<DVector<f64>> = trace.samples.iter().step_by(stride).map(|s| s.x.clone()).collect();
            if let Some(last) = trace.samples.last() {
                pts.push(last.x.clone());
            }
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"1.5\"/>",
                points(&frame, &pts)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
