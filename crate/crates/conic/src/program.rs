//! Problem builder for mixed-integer second-order cone programs.
//!
//! A program holds continuous variables with box bounds (some of which may be
//! flagged binary), a linear objective to minimize, and four row kinds:
//! linear equalities, linear inequalities, second-order cone rows
//! `‖u‖₂ ≤ v`, and rotated cone rows `2zx ≥ ‖y‖², z,x ≥ 0`, where every slot
//! is an affine expression of the variables.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::ProgramError;

/// Handle to a decision variable.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a constraint row, used to look up duals after a solve.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RowId(pub(crate) usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Affine expression `Σ cᵢ·xᵢ + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: vec![], constant: c }
    }

    pub fn term(v: VarId, c: f64) -> Self {
        LinExpr { terms: vec![(v, c)], constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    /// Merges duplicate variable references and drops zero coefficients.
    pub fn compacted(mut self) -> Self {
        self.terms.sort_by_key(|&(v, _)| v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
        self
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|&(v, _)| v.0).max()
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        let rhs = rhs.into();
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl<T: Into<LinExpr>> AddAssign<T> for LinExpr {
    fn add_assign(&mut self, rhs: T) {
        let rhs = rhs.into();
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        self + rhs.into().neg()
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl Add<LinExpr> for VarId {
    type Output = LinExpr;
    fn add(self, rhs: LinExpr) -> LinExpr {
        LinExpr::from(self) + rhs
    }
}

impl Sub<LinExpr> for VarId {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        LinExpr::from(self) - rhs
    }
}

impl Mul<f64> for VarId {
    type Output = LinExpr;
    fn mul(self, k: f64) -> LinExpr {
        LinExpr::term(self, k)
    }
}

#[derive(Clone, Debug)]
pub enum Row {
    /// `expr == rhs`
    Eq { expr: LinExpr, rhs: f64 },
    /// `expr <= rhs`
    Le { expr: LinExpr, rhs: f64 },
    /// `‖u‖₂ ≤ v`
    Soc { u: Vec<LinExpr>, v: LinExpr },
    /// `2zx ≥ ‖y‖²` with `z, x ≥ 0`
    RotatedSoc { z: LinExpr, x: LinExpr, y: Vec<LinExpr> },
}

impl Row {
    pub fn is_linear(&self) -> bool {
        matches!(self, Row::Eq { .. } | Row::Le { .. })
    }

    fn exprs(&self) -> Vec<&LinExpr> {
        match self {
            Row::Eq { expr, .. } | Row::Le { expr, .. } => vec![expr],
            Row::Soc { u, v } => u.iter().chain(std::iter::once(v)).collect(),
            Row::RotatedSoc { z, x, y } => {
                y.iter().chain([z, x]).collect()
            }
        }
    }

    /// Signed violation of the row at point `x` (positive = infeasible by
    /// that amount).
    pub fn violation(&self, point: &[f64]) -> f64 {
        match self {
            Row::Eq { expr, rhs } => (expr.eval(point) - rhs).abs(),
            Row::Le { expr, rhs } => expr.eval(point) - rhs,
            Row::Soc { u, v } => {
                let norm = u.iter().map(|e| e.eval(point).powi(2)).sum::<f64>().sqrt();
                norm - v.eval(point)
            }
            Row::RotatedSoc { z, x, y } => {
                let zv = z.eval(point);
                let xv = x.eval(point);
                let ynorm2 = y.iter().map(|e| e.eval(point).powi(2)).sum::<f64>();
                (ynorm2 - 2.0 * zv * xv).max(-zv).max(-xv)
            }
        }
    }
}

/// A conic program under construction or awaiting a solve. Immutable once
/// handed to a solver; each solve works on its own lowered copy.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    binary: Vec<bool>,
    names: Vec<String>,
    objective: LinExpr,
    rows: Vec<Row>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        let id = VarId(self.lower.len());
        self.lower.push(lower);
        self.upper.push(upper);
        self.binary.push(false);
        self.names.push(name.into());
        id
    }

    /// Flags a variable binary; its bounds are clamped into [0, 1].
    pub fn mark_binary(&mut self, v: VarId) {
        self.binary[v.0] = true;
        self.lower[v.0] = self.lower[v.0].max(0.0);
        self.upper[v.0] = self.upper[v.0].min(1.0);
    }

    pub fn set_objective(&mut self, expr: impl Into<LinExpr>) {
        self.objective = expr.into().compacted();
    }

    pub fn add_eq(&mut self, expr: impl Into<LinExpr>, rhs: f64) -> RowId {
        self.push_row(Row::Eq { expr: expr.into().compacted(), rhs })
    }

    pub fn add_le(&mut self, expr: impl Into<LinExpr>, rhs: f64) -> RowId {
        self.push_row(Row::Le { expr: expr.into().compacted(), rhs })
    }

    pub fn add_ge(&mut self, expr: impl Into<LinExpr>, rhs: f64) -> RowId {
        self.push_row(Row::Le { expr: (expr.into() * -1.0).compacted(), rhs: -rhs })
    }

    /// `‖u‖₂ ≤ v`.
    pub fn add_soc(&mut self, u: Vec<LinExpr>, v: impl Into<LinExpr>) -> RowId {
        let u = u.into_iter().map(LinExpr::compacted).collect();
        self.push_row(Row::Soc { u, v: v.into().compacted() })
    }

    /// `2zx ≥ ‖y‖²` with `z, x ≥ 0`.
    pub fn add_rotated_soc(
        &mut self,
        z: impl Into<LinExpr>,
        x: impl Into<LinExpr>,
        y: Vec<LinExpr>,
    ) -> RowId {
        let y = y.into_iter().map(LinExpr::compacted).collect();
        self.push_row(Row::RotatedSoc {
            z: z.into().compacted(),
            x: x.into().compacted(),
            y,
        })
    }

    fn push_row(&mut self, row: Row) -> RowId {
        let id = RowId(self.rows.len());
        self.rows.push(row);
        id
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn bounds(&self, v: VarId) -> (f64, f64) {
        (self.lower[v.0], self.upper[v.0])
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        self.lower[v.0] = lower;
        self.upper[v.0] = upper;
    }

    pub fn is_binary(&self, v: VarId) -> bool {
        self.binary[v.0]
    }

    pub fn binary_vars(&self) -> Vec<VarId> {
        (0..self.num_vars()).filter(|&i| self.binary[i]).map(VarId).collect()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.names[v.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.names.iter().position(|n| n == name).map(VarId)
    }

    /// Structural checks run before any solve: consistent dimensions,
    /// ordered bounds, and no binary variable inside a cone row.
    pub fn validate(&self) -> Result<(), ProgramError> {
        for i in 0..self.num_vars() {
            if self.lower[i] > self.upper[i] {
                return Err(ProgramError::InvertedBounds {
                    var: self.names[i].clone(),
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        let check_expr = |e: &LinExpr| -> Result<(), ProgramError> {
            match e.max_var() {
                Some(m) if m >= self.num_vars() => Err(ProgramError::UnknownVariable(m)),
                _ => Ok(()),
            }
        };
        check_expr(&self.objective)?;
        for (i, row) in self.rows.iter().enumerate() {
            for e in row.exprs() {
                check_expr(e)?;
                if !row.is_linear() {
                    if let Some(&(v, _)) =
                        e.terms.iter().find(|&&(v, c)| c != 0.0 && self.binary[v.0])
                    {
                        return Err(ProgramError::BinaryInConeRow {
                            var: self.names[v.0].clone(),
                            row: i,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest row violation at `point`, together with the offending row.
    pub fn max_violation(&self, point: &[f64]) -> (f64, Option<RowId>) {
        let mut worst = 0.0_f64;
        let mut worst_row = None;
        for (i, row) in self.rows.iter().enumerate() {
            let v = row.violation(point);
            if v > worst {
                worst = v;
                worst_row = Some(RowId(i));
            }
        }
        for i in 0..self.num_vars() {
            worst = worst.max(self.lower[i] - point[i]).max(point[i] - self.upper[i]);
        }
        (worst, worst_row)
    }
}

impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::textio::dump(self))
    }
}
