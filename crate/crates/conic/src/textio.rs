//! Plain-text problem format, for debugging and for handing instances to an
//! external solver.
//!
//! ```text
//! conicprogram v1
//! var <name> <lower> <upper> [binary]
//! min <expr>
//! eq <expr> = <rhs>
//! le <expr> <= <rhs>
//! soc <v-expr> ; <u-expr> ; <u-expr> ...
//! rsoc <z-expr> ; <x-expr> ; <y-expr> ...
//! ```
//!
//! An `<expr>` is `+`-joined terms `coef*name` with an optional trailing
//! constant, e.g. `2.5*r_g + -1*h + 0.25`. Bounds use `-inf`/`inf` when
//! unbounded. `soc` rows read `‖u‖ ≤ v`; `rsoc` rows read `2zx ≥ ‖y‖²`.
//! Coefficients are written with shortest round-trip formatting, so a
//! dump/load cycle reproduces the program exactly.

use std::collections::HashMap;

use crate::error::TextError;
use crate::program::{ConicProgram, LinExpr, Row, VarId};

pub const FORMAT_HEADER: &str = "conicprogram v1";

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn fmt_expr(e: &LinExpr, prog: &ConicProgram) -> String {
    let mut parts: Vec<String> = e
        .terms
        .iter()
        .map(|&(v, c)| format!("{}*{}", fmt_num(c), prog.var_name(v)))
        .collect();
    if e.constant != 0.0 || parts.is_empty() {
        parts.push(fmt_num(e.constant));
    }
    parts.join(" + ")
}

pub fn dump(prog: &ConicProgram) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    for i in 0..prog.num_vars() {
        let v = VarId(i);
        let (lo, hi) = prog.bounds(v);
        out.push_str(&format!("var {} {} {}", prog.var_name(v), fmt_num(lo), fmt_num(hi)));
        if prog.is_binary(v) {
            out.push_str(" binary");
        }
        out.push('\n');
    }
    out.push_str(&format!("min {}\n", fmt_expr(prog.objective(), prog)));
    for row in prog.rows() {
        match row {
            Row::Eq { expr, rhs } => {
                out.push_str(&format!("eq {} = {}\n", fmt_expr(expr, prog), fmt_num(*rhs)));
            }
            Row::Le { expr, rhs } => {
                out.push_str(&format!("le {} <= {}\n", fmt_expr(expr, prog), fmt_num(*rhs)));
            }
            Row::Soc { u, v } => {
                let mut parts = vec![fmt_expr(v, prog)];
                parts.extend(u.iter().map(|e| fmt_expr(e, prog)));
                out.push_str(&format!("soc {}\n", parts.join(" ; ")));
            }
            Row::RotatedSoc { z, x, y } => {
                let mut parts = vec![fmt_expr(z, prog), fmt_expr(x, prog)];
                parts.extend(y.iter().map(|e| fmt_expr(e, prog)));
                out.push_str(&format!("rsoc {}\n", parts.join(" ; ")));
            }
        }
    }
    out
}

struct Parser {
    vars: HashMap<String, VarId>,
    line: usize,
}

impl Parser {
    fn err(&self, msg: impl Into<String>) -> TextError {
        TextError::Parse { line: self.line, msg: msg.into() }
    }

    fn num(&self, tok: &str) -> Result<f64, TextError> {
        match tok {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => tok
                .parse::<f64>()
                .map_err(|_| self.err(format!("bad number {tok:?}"))),
        }
    }

    fn expr(&self, text: &str) -> Result<LinExpr, TextError> {
        let mut e = LinExpr::zero();
        for part in text.split(" + ") {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match part.split_once('*') {
                Some((coef, name)) => {
                    let v = *self
                        .vars
                        .get(name.trim())
                        .ok_or_else(|| self.err(format!("unknown variable {name:?}")))?;
                    e.terms.push((v, self.num(coef.trim())?));
                }
                None => e.constant += self.num(part)?,
            }
        }
        Ok(e)
    }
}

pub fn load(text: &str) -> Result<ConicProgram, TextError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim().to_string(),
            None => break String::new(),
        }
    };
    if header != FORMAT_HEADER {
        return Err(TextError::BadHeader(header));
    }

    let mut prog = ConicProgram::new();
    let mut parser = Parser { vars: HashMap::new(), line: 0 };

    for (idx, raw) in lines {
        parser.line = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (kind, rest) = line
            .split_once(' ')
            .ok_or_else(|| parser.err("missing row body"))?;
        match kind {
            "var" => {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() < 3 {
                    return Err(parser.err("var needs: name lower upper [binary]"));
                }
                let lo = parser.num(toks[1])?;
                let hi = parser.num(toks[2])?;
                let id = prog.add_var(toks[0], lo, hi);
                if toks.get(3) == Some(&"binary") {
                    prog.mark_binary(id);
                }
                parser.vars.insert(toks[0].to_string(), id);
            }
            "min" => {
                let e = parser.expr(rest)?;
                prog.set_objective(e);
            }
            "eq" | "le" => {
                let sep = if kind == "eq" { " = " } else { " <= " };
                let (lhs, rhs) = rest
                    .rsplit_once(sep)
                    .ok_or_else(|| parser.err(format!("expected {sep:?} separator")))?;
                let e = parser.expr(lhs)?;
                let r = parser.num(rhs.trim())?;
                if kind == "eq" {
                    prog.add_eq(e, r);
                } else {
                    prog.add_le(e, r);
                }
            }
            "soc" => {
                let mut parts = rest.split(" ; ").map(|p| parser.expr(p));
                let v = parts.next().ok_or_else(|| parser.err("soc needs v ; u..."))??;
                let u = parts.collect::<Result<Vec<_>, _>>()?;
                if u.is_empty() {
                    return Err(parser.err("soc needs at least one u expression"));
                }
                prog.add_soc(u, v);
            }
            "rsoc" => {
                let mut parts = rest.split(" ; ").map(|p| parser.expr(p));
                let z = parts.next().ok_or_else(|| parser.err("rsoc needs z ; x ; y..."))??;
                let x = parts.next().ok_or_else(|| parser.err("rsoc needs z ; x ; y..."))??;
                let y = parts.collect::<Result<Vec<_>, _>>()?;
                prog.add_rotated_soc(z, x, y);
            }
            other => return Err(parser.err(format!("unknown row kind {other:?}"))),
        }
    }
    Ok(prog)
}
