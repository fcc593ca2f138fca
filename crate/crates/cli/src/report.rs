//! Analysis report: printed table plus a JSON document.

use std::fmt::Write as _;

use nalgebra::DVector;
use reachctl_core::analysis::{check_necessary, reach_control_indices};
use reachctl_core::{EquilibriumSet, ProblemInstance, Route};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub empty: bool,
    pub dim: Option<usize>,
    pub point: Option<Vec<f64>>,
    /// Rows `w` of `W x = d`.
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    /// `None` when the check does not apply.
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub m: usize,
    pub vertices: Vec<Vec<f64>>,
    pub equilibrium: EquilibriumReport,
    pub g_vertices: Vec<usize>,
    pub kappa: Option<usize>,
    pub m_hat: Option<usize>,
    pub p: Option<usize>,
    pub r: Vec<usize>,
    pub permutation: Vec<usize>,
    pub route: String,
    pub route_detail: Option<String>,
    pub index_error: Option<String>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// True when the route is infeasible or a necessary condition fails.
    pub fn blocked(&self) -> bool {
        self.route == "INFEASIBLE" || self.checks.iter().any(|c| c.name.starts_with("necessary") && c.passed == Some(false))
    }
}

fn vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn check(name: &str, passed: Option<bool>, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

pub fn analyze(inst: &ProblemInstance) -> AnalysisReport {
    let equilibrium = match &inst.equilibrium {
        EquilibriumSet::Empty => EquilibriumReport {
            empty: true,
            dim: None,
            point: None,
            normals: Vec::new(),
            offsets: Vec::new(),
        },
        EquilibriumSet::Affine {
            point,
            constraints,
            offsets,
        } => EquilibriumReport {
            empty: false,
            dim: inst.equilibrium.dim(),
            point: Some(vec(point)),
            normals: constraints.row_iter().map(|r| r.iter().copied().collect()).collect(),
            offsets: vec(offsets),
        },
    };

    let mut checks = Vec::new();
    let g = inst.g_vertices();
    let has_g = inst.g_face.is_some();
    checks.push(if !has_g {
        check("A1", None, "S ∩ O is empty")
    } else if g.contains(&0) {
        check("A1", Some(false), "v0 lies in G")
    } else {
        check("A1", Some(true), "G is a face of the exit facet")
    });
    checks.push(match &inst.tangent_cone_point {
        Some(b) => check("A2", Some(false), format!("B ∩ cone(S) contains {:?}", vec(b))),
        None => check("A2", Some(true), "B ∩ cone(S) = 0"),
    });
    match (&inst.selection, inst.kappa) {
        (Some(sel), Some(kappa)) => {
            checks.push(check(
                "A3",
                Some(sel.m_hat < kappa + 1),
                format!("m̂ = {}, κ + 1 = {}", sel.m_hat, kappa + 1),
            ));
            checks.push(if sel.zero_cones.is_empty() {
                check("A4", Some(true), "every vertex of G admits an input direction")
            } else {
                check("A4", Some(false), format!("B ∩ C(v_i) = 0 at {:?}", sel.zero_cones))
            });
        }
        _ => {
            checks.push(check("A3", None, "no selection"));
            checks.push(check("A4", None, "no selection"));
        }
    }
    let mut notes = Vec::new();
    match check_necessary(inst) {
        Ok(nec) => {
            checks.push(check("necessary: invariance", Some(nec.invariance_ok), ""));
            checks.push(check("necessary: cone directions", Some(nec.cone_ok), ""));
            checks.push(check(
                "necessary: exit direction",
                Some(nec.not_parallel_ok),
                if nec.not_parallel_refined { "per group" } else { "coarse" },
            ));
            notes = nec.detail;
        }
        Err(e) => checks.push(check("necessary", None, e.to_string())),
    }

    let (mut p, mut r, mut permutation, mut index_error) = (None, Vec::new(), Vec::new(), None);
    if inst.route == Route::NeedsSubdivision {
        match reach_control_indices(inst) {
            Ok(idx) => {
                p = Some(idx.p());
                r = idx.r.clone();
                permutation = idx.permutation.clone();
            }
            Err(e) => index_error = Some(e.to_string()),
        }
    }

    AnalysisReport {
        n: inst.n(),
        m: inst.system.m(),
        vertices: inst.simplex.vertices().iter().map(vec).collect(),
        equilibrium,
        g_vertices: g.to_vec(),
        kappa: inst.kappa,
        m_hat: inst.m_hat,
        p,
        r,
        permutation,
        route: inst.route.tag().to_string(),
        route_detail: match &inst.route {
            Route::Infeasible(d) => Some(d.clone()),
            _ => None,
        },
        index_error,
        checks,
        notes,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn fmt_row(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

pub fn render(rep: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}, m = {}", rep.n, rep.m);
    for (i, v) in rep.vertices.iter().enumerate() {
        let _ = writeln!(out, "v{i} = {}", fmt_row(v));
    }
    let eq = &rep.equilibrium;
    if eq.empty {
        let _ = writeln!(out, "O: empty");
    } else {
        let _ = writeln!(out, "O: affine, dim {}", opt(eq.dim));
        if let Some(p) = &eq.point {
            let _ = writeln!(out, "  through {}", fmt_row(p));
        }
        for (w, d) in eq.normals.iter().zip(&eq.offsets) {
            let _ = writeln!(out, "  {} · x = {d:.6}", fmt_row(w));
        }
    }
    if rep.g_vertices.is_empty() {
        let _ = writeln!(out, "G: empty");
    } else {
        let names: Vec<String> = rep.g_vertices.iter().map(|i| format!("v{i}")).collect();
        let _ = writeln!(out, "G: co{{{}}}", names.join(", "));
    }
    let _ = writeln!(out, "kappa = {}, m_hat = {}, p = {}", opt(rep.kappa), opt(rep.m_hat), opt(rep.p));
    if !rep.r.is_empty() {
        let r: Vec<String> = rep.r.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "r = ({})", r.join(", "));
    }
    if let Some(e) = &rep.index_error {
        let _ = writeln!(out, "indices: {e}");
    }
    let _ = write!(out, "route: {}", rep.route);
    if let Some(d) = &rep.route_detail {
        let _ = write!(out, " ({d})");
    }
    out.push('\n');
    let width = rep.checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(0);
    for c in &rep.checks {
        let status = match c.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "n/a",
        };
        let pad = width - c.name.chars().count();
        let line = format!("  {}{}  {status:<4}  {}", c.name, " ".repeat(pad), c.detail);
        let _ = writeln!(out, "{}", line.trim_end());
    }
    for n in &rep.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}
