//! Line-oriented problem and pin files.
//!
//! ```text
//! [system]
//! A:
//!   0 1
//!   0 0
//! B:
//!   0
//!   1
//! a: 0 0
//!
//! [simplex]
//! vertices:
//!   -1 1
//!   1 0
//!   0 0
//! exit: 0
//!
//! [options]
//! grid: 10
//!
//! [subdivision]
//! point: 0.5 0.25
//!
//! [piece 1]
//! controls:
//!   -1
//!   -1
//!   -1
//! ```
//!
//! A key takes values on its own line, on the indented lines that follow,
//! or both. `#` starts a comment.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use reachctl_core::synthesis::Pins;
use reachctl_core::{AffineSystem, ProblemInstance, Simplex};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileOptions {
    pub tol: Option<f64>,
    pub grid: Option<usize>,
    pub dt: Option<f64>,
    pub tmax: Option<f64>,
    pub delta: Option<f64>,
    pub control_box: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFile {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// Vertices as written in the file.
    pub vertices: Vec<DVector<f64>>,
    /// Position of the vertex opposite the exit facet.
    pub exit: usize,
    pub options: FileOptions,
    pub pins: Pins,
}

impl ProblemFile {
    /// Vertices with the exit vertex moved to position 0.
    pub fn ordered_vertices(&self) -> Vec<DVector<f64>> {
        let mut v = self.vertices.clone();
        v.swap(0, self.exit);
        v
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        let sys = AffineSystem::new(self.a.clone(), self.b.clone(), self.offset.clone())?;
        let s = Simplex::new(self.ordered_vertices())?;
        Ok(ProblemInstance::new(sys, s)?)
    }
}

#[derive(Clone, Debug)]
struct Token {
    text: String,
    line: usize,
    column: usize,
}

#[derive(Debug)]
struct Entry {
    key: Token,
    rows: Vec<Vec<Token>>,
}

#[derive(Debug)]
struct Section {
    name: Token,
    arg: Option<Token>,
    entries: Vec<Entry>,
}

struct Parser<'a> {
    path: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.to_string(),
            line,
            column,
            message: message.into(),
        }
    }

    fn at(&self, t: &Token, message: impl Into<String>) -> CliError {
        self.err(t.line, t.column, message)
    }

    fn tokens(line: &str, lineno: usize, offset: usize) -> Vec<Token> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, c) in line.char_indices().chain(std::iter::once((line.len(), ' '))) {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    out.push(Token {
                        text: line[s..i].to_string(),
                        line: lineno,
                        column: offset + line[..s].chars().count() + 1,
                    });
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        out
    }

    fn sections(&self, text: &str) -> Result<Vec<Section>> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("");
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = line.chars().take_while(|c| c.is_whitespace()).count();
            if trimmed.starts_with('[') {
                let Some(inner) = trimmed.strip_prefix('[').and_then(|t| t.strip_suffix(']')) else {
                    return Err(self.err(lineno, indent + 1, "unterminated section header"));
                };
                let mut toks = Self::tokens(inner, lineno, indent + 1);
                if toks.is_empty() || toks.len() > 2 {
                    return Err(self.err(lineno, indent + 1, "section header needs a name and at most one argument"));
                }
                let arg = (toks.len() == 2).then(|| toks.pop().expect("two tokens"));
                let name = toks.pop().expect("one token");
                sections.push(Section {
                    name,
                    arg,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some(section) = sections.last_mut() else {
                return Err(self.err(lineno, indent + 1, "content before the first section header"));
            };
            if let Some(colon) = line.find(':') {
                let key_text = line[..colon].trim();
                if key_text.is_empty() || key_text.contains(char::is_whitespace) {
                    return Err(self.err(lineno, indent + 1, "malformed key"));
                }
                let key = Token {
                    text: key_text.to_string(),
                    line: lineno,
                    column: indent + 1,
                };
                let offset = line[..colon + 1].chars().count();
                let rest = Self::tokens(&line[colon + 1..], lineno, offset);
                let rows = if rest.is_empty() { Vec::new() } else { vec![rest] };
                section.entries.push(Entry { key, rows });
            } else {
                let Some(entry) = section.entries.last_mut() else {
                    return Err(self.err(lineno, indent + 1, "values before the first key of the section"));
                };
                entry.rows.push(Self::tokens(line, lineno, 0));
            }
        }
        Ok(sections)
    }

    fn number(&self, t: &Token) -> Result<f64> {
        let v: f64 = t
            .text
            .parse()
            .map_err(|_| self.at(t, format!("expected a number, found `{}`", t.text)))?;
        if !v.is_finite() {
            return Err(self.at(t, "number is not finite"));
        }
        Ok(v)
    }

    fn integer(&self, t: &Token) -> Result<usize> {
        t.text
            .parse()
            .map_err(|_| self.at(t, format!("expected a nonnegative integer, found `{}`", t.text)))
    }

    fn rows(&self, e: &Entry) -> Result<Vec<Vec<f64>>> {
        if e.rows.is_empty() {
            return Err(self.at(&e.key, format!("`{}` has no values", e.key.text)));
        }
        e.rows
            .iter()
            .map(|r| r.iter().map(|t| self.number(t)).collect())
            .collect()
    }

    fn matrix(&self, e: &Entry) -> Result<DMatrix<f64>> {
        let rows = self.rows(e)?;
        let width = rows[0].len();
        for (r, toks) in rows.iter().zip(&e.rows) {
            if r.len() != width {
                return Err(self.at(
                    &toks[0],
                    format!("row of `{}` has {} entries, expected {width}", e.key.text, r.len()),
                ));
            }
        }
        Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
    }

    /// One row, or one value per line.
    fn vector(&self, e: &Entry) -> Result<DVector<f64>> {
        let rows = self.rows(e)?;
        if rows.len() > 1 && rows.iter().any(|r| r.len() != 1) {
            return Err(self.at(&e.key, format!("`{}` must be a single row or a column", e.key.text)));
        }
        Ok(DVector::from_iterator(
            rows.iter().map(Vec::len).sum(),
            rows.into_iter().flatten(),
        ))
    }

    fn scalar_token<'e>(&self, e: &'e Entry) -> Result<&'e Token> {
        match e.rows.as_slice() {
            [row] if row.len() == 1 => Ok(&row[0]),
            _ => Err(self.at(&e.key, format!("`{}` takes a single value", e.key.text))),
        }
    }

    fn unknown_key(&self, e: &Entry, section: &str) -> CliError {
        self.at(&e.key, format!("unknown key `{}` in [{section}]", e.key.text))
    }

    fn pins_section(&self, sec: &Section, pins: &mut Pins) -> Result<bool> {
        match sec.name.text.as_str() {
            "subdivision" => {
                self.no_arg(sec)?;
                for e in &sec.entries {
                    if e.key.text != "point" {
                        return Err(self.unknown_key(e, "subdivision"));
                    }
                    for row in self.rows(e)? {
                        pins.points.push(DVector::from_vec(row));
                    }
                }
            }
            "piece" => {
                let Some(arg) = &sec.arg else {
                    return Err(self.at(&sec.name, "[piece] needs an index, e.g. [piece 1]"));
                };
                let k = self.integer(arg)?;
                if k == 0 {
                    return Err(self.at(arg, "piece indices start at 1"));
                }
                let controls = self.controls(sec)?;
                if pins.pieces.insert(k, controls).is_some() {
                    return Err(self.at(arg, format!("piece {k} pinned twice")));
                }
            }
            "single" => {
                self.no_arg(sec)?;
                pins.single = Some(self.controls(sec)?);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn controls(&self, sec: &Section) -> Result<Vec<DVector<f64>>> {
        let mut out = None;
        for e in &sec.entries {
            if e.key.text != "controls" {
                return Err(self.unknown_key(e, &sec.name.text));
            }
            let m = self.matrix(e)?;
            out = Some(m.row_iter().map(|r| r.transpose()).collect());
        }
        out.ok_or_else(|| self.at(&sec.name, "section needs `controls:`"))
    }

    fn no_arg(&self, sec: &Section) -> Result<()> {
        match &sec.arg {
            Some(a) => Err(self.at(a, format!("[{}] takes no argument", sec.name.text))),
            None => Ok(()),
        }
    }
}

/// Parses a problem file. `path` is only used in error messages.
pub fn parse_problem(text: &str, path: &str) -> Result<ProblemFile> {
    let p = Parser { path };
    let mut a = None;
    let mut b = None;
    let mut offset = None;
    let mut vertices: Option<(Vec<DVector<f64>>, Token)> = None;
    let mut exit: Option<(usize, Token)> = None;
    let mut options = FileOptions::default();
    let mut pins = Pins::default();

    for sec in p.sections(text)? {
        match sec.name.text.as_str() {
            "system" => {
                p.no_arg(&sec)?;
                for e in &sec.entries {
                    match e.key.text.as_str() {
                        "A" => a = Some((p.matrix(e)?, e.key.clone())),
                        "B" => b = Some((p.matrix(e)?, e.key.clone())),
                        "a" => offset = Some((p.vector(e)?, e.key.clone())),
                        _ => return Err(p.unknown_key(e, "system")),
                    }
                }
            }
            "simplex" => {
                p.no_arg(&sec)?;
                for e in &sec.entries {
                    match e.key.text.as_str() {
                        "vertices" => {
                            let m = p.matrix(e)?;
                            vertices = Some((m.row_iter().map(|r| r.transpose()).collect(), e.key.clone()));
                        }
                        "exit" => {
                            let t = p.scalar_token(e)?;
                            exit = Some((p.integer(t)?, t.clone()));
                        }
                        _ => return Err(p.unknown_key(e, "simplex")),
                    }
                }
            }
            "options" => {
                p.no_arg(&sec)?;
                for e in &sec.entries {
                    let t = p.scalar_token(e)?;
                    match e.key.text.as_str() {
                        "tol" => options.tol = Some(p.number(t)?),
                        "grid" => options.grid = Some(p.integer(t)?),
                        "dt" => options.dt = Some(p.number(t)?),
                        "tmax" => options.tmax = Some(p.number(t)?),
                        "delta" => options.delta = Some(p.number(t)?),
                        "control_box" => options.control_box = Some(p.number(t)?),
                        _ => return Err(p.unknown_key(e, "options")),
                    }
                }
            }
            _ => {
                if !p.pins_section(&sec, &mut pins)? {
                    return Err(p.at(&sec.name, format!("unknown section [{}]", sec.name.text)));
                }
            }
        }
    }

    let eof = text.lines().count().max(1);
    let (a, a_key) = a.ok_or_else(|| p.err(eof, 1, "missing `A:` in [system]"))?;
    let (b, b_key) = b.ok_or_else(|| p.err(eof, 1, "missing `B:` in [system]"))?;
    let (vertices, v_key) = vertices.ok_or_else(|| p.err(eof, 1, "missing `vertices:` in [simplex]"))?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(p.at(&a_key, format!("A is {}×{}, expected square", n, a.ncols())));
    }
    if b.nrows() != n {
        return Err(p.at(&b_key, format!("B has {} rows, expected {n}", b.nrows())));
    }
    let offset = match offset {
        Some((v, key)) if v.len() != n => {
            return Err(p.at(&key, format!("a has {} entries, expected {n}", v.len())));
        }
        Some((v, _)) => v,
        None => DVector::zeros(n),
    };
    if vertices.len() != n + 1 || vertices[0].len() != n {
        return Err(p.at(
            &v_key,
            format!(
                "expected {} vertices of length {n}, found {} of length {}",
                n + 1,
                vertices.len(),
                vertices[0].len()
            ),
        ));
    }
    let exit = match exit {
        Some((e, t)) if e > n => return Err(p.at(&t, format!("exit vertex {e} out of range 0..={n}"))),
        Some((e, _)) => e,
        None => 0,
    };
    Ok(ProblemFile {
        a,
        b,
        offset,
        vertices,
        exit,
        options,
        pins,
    })
}

/// Parses a file holding only `[subdivision]`, `[piece k]` and `[single]`
/// sections.
pub fn parse_pins(text: &str, path: &str) -> Result<Pins> {
    let p = Parser { path };
    let mut pins = Pins::default();
    for sec in p.sections(text)? {
        if !p.pins_section(&sec, &mut pins)? {
            return Err(p.at(&sec.name, format!("[{}] is not allowed in a pin file", sec.name.text)));
        }
    }
    Ok(pins)
}

fn write_row(out: &mut String, row: impl Iterator<Item = f64>) {
    let parts: Vec<String> = row.map(|v| format!("{v:?}")).collect();
    let _ = writeln!(out, "  {}", parts.join(" "));
}

fn write_matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{key}:");
    for r in m.row_iter() {
        write_row(out, r.iter().copied());
    }
}

fn write_controls(out: &mut String, controls: &[DVector<f64>]) {
    let _ = writeln!(out, "controls:");
    for u in controls {
        write_row(out, u.iter().copied());
    }
}

/// Serializes `pf`; numbers are written in shortest round-trip form.
pub fn write_problem(pf: &ProblemFile) -> String {
    let mut out = String::from("[system]\n");
    write_matrix(&mut out, "A", &pf.a);
    write_matrix(&mut out, "B", &pf.b);
    let parts: Vec<String> = pf.offset.iter().map(|v| format!("{v:?}")).collect();
    let _ = writeln!(out, "a: {}", parts.join(" "));
    out.push_str("\n[simplex]\nvertices:\n");
    for v in &pf.vertices {
        write_row(&mut out, v.iter().copied());
    }
    let _ = writeln!(out, "exit: {}", pf.exit);

    let o = &pf.options;
    let mut opts = String::new();
    for (key, val) in [("tol", o.tol), ("dt", o.dt), ("tmax", o.tmax), ("delta", o.delta), ("control_box", o.control_box)] {
        if let Some(v) = val {
            let _ = writeln!(opts, "{key}: {v:?}");
        }
    }
    if let Some(g) = o.grid {
        let _ = writeln!(opts, "grid: {g}");
    }
    if !opts.is_empty() {
        out.push_str("\n[options]\n");
        out.push_str(&opts);
    }
    out.push_str(&write_pins(&pf.pins));
    out
}

pub fn write_pins(pins: &Pins) -> String {
    let mut out = String::new();
    if !pins.points.is_empty() {
        out.push_str("\n[subdivision]\n");
        for p in &pins.points {
            let parts: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "point: {}", parts.join(" "));
        }
    }
    for (k, controls) in &pins.pieces {
        let _ = writeln!(out, "\n[piece {k}]");
        write_controls(&mut out, controls);
    }
    if let Some(controls) = &pins.single {
        out.push_str("\n[single]\n");
        write_controls(&mut out, controls);
    }
    out
}
