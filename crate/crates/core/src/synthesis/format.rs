//! Plain-text controller documents.
//!
//! ```text
//! reachctl-controller 1
//! dim 2 inputs 1 pieces 2 steps 1
//! piece 1
//! vertex <x1> <x2>
//! ...
//! gain <row 1>
//! offset <g>
//! control <u at vertex 0>
//! ...
//! step 1
//! lambda <λ>
//! ...
//! diagnostic <free text>
//! ```
//!
//! Numbers are written with 17 significant digits so a document parses back
//! to bit-identical values.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{AffinePiece, PwaController, SubdivisionRecord, SubdivisionStep};
use crate::error::{ReachError, Result};
use crate::geometry::Simplex;

const HEADER: &str = "reachctl-controller 1";

fn push_row<'a>(out: &mut String, key: &str, values: impl IntoIterator<Item = &'a f64>) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v:.16e}");
    }
    out.push('\n');
}

pub fn write_controller(ctrl: &PwaController) -> String {
    let n = ctrl.dim();
    let m = ctrl.inputs();
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let _ = writeln!(
        out,
        "dim {n} inputs {m} pieces {} steps {}",
        ctrl.pieces.len(),
        ctrl.record.steps.len()
    );
    for p in &ctrl.pieces {
        let _ = writeln!(out, "piece {}", p.index);
        for v in p.simplex.vertices() {
            push_row(&mut out, "vertex", v.iter());
        }
        for r in 0..m {
            push_row(&mut out, "gain", p.gain.row(r).iter());
        }
        push_row(&mut out, "offset", p.offset.iter());
        for u in &p.vertex_controls {
            push_row(&mut out, "control", u.iter());
        }
    }
    for (i, s) in ctrl.record.steps.iter().enumerate() {
        let _ = writeln!(out, "step {}", i + 1);
        push_row(&mut out, "lambda", [s.lambda].iter());
        push_row(&mut out, "point", s.point.iter());
        push_row(&mut out, "normal", s.normal.iter());
        push_row(&mut out, "gamma", s.gamma.iter());
        let _ = writeln!(out, "lead {}", s.lead_vertex);
        let _ = writeln!(out, "pinned {}", s.pinned);
    }
    for d in &ctrl.diagnostics {
        let _ = writeln!(out, "diagnostic {}", d.replace('\n', " "));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    fn skip_blank(&mut self) {
        while let Some((_, l)) = self.inner.peek() {
            if l.trim().is_empty() || l.trim_start().starts_with('#') {
                self.inner.next();
            } else {
                break;
            }
        }
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        self.skip_blank();
        self.inner.peek().and_then(|(_, l)| l.split_whitespace().next())
    }

    fn err(&self, message: impl Into<String>) -> ReachError {
        ReachError::Format {
            line: self.last,
            message: message.into(),
        }
    }

    /// Next non-blank line, which must start with `key`; returns the rest.
    fn expect(&mut self, key: &str) -> Result<&'a str> {
        self.skip_blank();
        let (i, l) = self
            .inner
            .next()
            .ok_or_else(|| self.err(format!("unexpected end of document, expected `{key}`")))?;
        self.last = i + 1;
        let l = l.trim();
        match l.split_once(char::is_whitespace) {
            Some((k, rest)) if k == key => Ok(rest.trim()),
            None if l == key => Ok(""),
            _ => Err(self.err(format!("expected `{key}`, found `{l}`"))),
        }
    }

    fn numbers(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let rest = self.expect(key)?;
        let vals: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != len {
            return Err(self.err(format!("`{key}` needs {len} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn usize_field(&self, words: &[&str], key: &str) -> Result<usize> {
        let pos = words
            .iter()
            .position(|w| *w == key)
            .ok_or_else(|| self.err(format!("missing `{key}`")))?;
        words
            .get(pos + 1)
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| self.err(format!("bad value for `{key}`")))
    }
}

pub fn parse_controller(text: &str) -> Result<PwaController> {
    let mut lines = Lines::new(text);
    let head = lines.expect("reachctl-controller")?;
    if head != "1" {
        return Err(lines.err(format!("unsupported version `{head}`")));
    }
    let dims: Vec<&str> = lines.expect("dim")?.split_whitespace().collect();
    let mut words = vec!["dim"];
    words.extend(dims);
    let n = lines.usize_field(&words, "dim")?;
    let m = lines.usize_field(&words, "inputs")?;
    let count = lines.usize_field(&words, "pieces")?;
    let steps = lines.usize_field(&words, "steps")?;
    if n == 0 || m == 0 || count == 0 {
        return Err(lines.err("dimensions and piece count must be positive"));
    }

    let mut pieces = Vec::with_capacity(count);
    for _ in 0..count {
        let index: usize = lines
            .expect("piece")?
            .parse()
            .map_err(|_| lines.err("bad piece index"))?;
        let vertices = (0..=n)
            .map(|_| lines.numbers("vertex", n).map(DVector::from_vec))
            .collect::<Result<Vec<_>>>()?;
        let simplex = Simplex::new(vertices).map_err(|e| lines.err(e.to_string()))?;
        let mut gain = DMatrix::zeros(m, n);
        for r in 0..m {
            let row = lines.numbers("gain", n)?;
            for (c, v) in row.into_iter().enumerate() {
                gain[(r, c)] = v;
            }
        }
        let offset = DVector::from_vec(lines.numbers("offset", m)?);
        let vertex_controls = (0..=n)
            .map(|_| lines.numbers("control", m).map(DVector::from_vec))
            .collect::<Result<Vec<_>>>()?;
        pieces.push(AffinePiece {
            index,
            simplex,
            gain,
            offset,
            vertex_controls,
        });
    }
    if pieces.windows(2).any(|w| w[0].index >= w[1].index) {
        return Err(lines.err("piece indices must be strictly increasing"));
    }

    let mut record = SubdivisionRecord::default();
    for _ in 0..steps {
        lines.expect("step")?;
        let lambda = lines.numbers("lambda", 1)?[0];
        let point = DVector::from_vec(lines.numbers("point", n)?);
        let normal = DVector::from_vec(lines.numbers("normal", n)?);
        let gamma = lines.numbers("gamma", n)?;
        let lead_vertex = lines.expect("lead")?.parse().map_err(|_| lines.err("bad lead vertex"))?;
        let pinned = lines.expect("pinned")?.parse().map_err(|_| lines.err("bad pinned flag"))?;
        record.steps.push(SubdivisionStep {
            lambda,
            point,
            normal,
            gamma,
            lead_vertex,
            pinned,
        });
    }

    let mut diagnostics = Vec::new();
    while lines.peek_key() == Some("diagnostic") {
        diagnostics.push(lines.expect("diagnostic")?.to_string());
    }
    if let Some(k) = lines.peek_key() {
        lines.inner.next();
        lines.last += 1;
        return Err(lines.err(format!("unexpected `{k}` after controller")));
    }
    Ok(PwaController {
        pieces,
        record,
        diagnostics,
    })
}
