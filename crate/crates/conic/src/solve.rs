//! Lowering to the interior-point backend.
//!
//! Programs are lowered to the standard form `min qᵀx s.t. Ax + s = b, s ∈ K`
//! with K a product of zero, nonnegative and second-order cones. Rotated cone
//! rows are rewritten as plain second-order cones via the transform
//! `(z, x, y) → (z + x, z − x, √2·y)` before lowering. Box bounds become
//! nonnegative-cone rows.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::SolveError;
use crate::program::{ConicProgram, LinExpr, Row, RowId};

pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Branch-and-bound stopped on its node limit; the incumbent is returned.
    GapLimit,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: Status,
    /// Primal point (or unbounded ray when `status == Unbounded`).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual values per row, in row order. Scalar rows carry one entry; cone
    /// rows carry their block. Rotated rows report the dual of the
    /// transformed plain cone. On infeasibility this holds the certificate.
    pub duals: Vec<Vec<f64>>,
    /// Relative duality gap of the final continuous solve, or the achieved
    /// branch-and-bound gap for mixed solves.
    pub gap: f64,
    /// Largest constraint violation of `x` measured on the original rows.
    pub residual: f64,
}

/// Scratch triplet builder for the constraint matrix.
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    nrows: usize,
}

impl Triplets {
    fn new() -> Self {
        Triplets { rows: vec![], cols: vec![], vals: vec![], b: vec![], nrows: 0 }
    }

    /// Appends the row `s = rhs_const − coeffs·x`, i.e. `s` takes the value
    /// of `expr` when `rhs_const = expr.constant` and `coeffs = −expr.terms`.
    fn push_value_row(&mut self, expr: &LinExpr) {
        for &(v, c) in &expr.terms {
            self.rows.push(self.nrows);
            self.cols.push(v.index());
            self.vals.push(-c);
        }
        self.b.push(expr.constant);
        self.nrows += 1;
    }

    /// Appends `coeffs·x + s = b` directly.
    fn push_raw_row(&mut self, terms: &[(usize, f64)], b: f64) {
        for &(col, val) in terms {
            self.rows.push(self.nrows);
            self.cols.push(col);
            self.vals.push(val);
        }
        self.b.push(b);
        self.nrows += 1;
    }

    fn into_csc(self, ncols: usize) -> (CscMatrix<f64>, Vec<f64>) {
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_by_key(|&i| (self.cols[i], self.rows[i]));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(order.len());
        let mut nzval = Vec::with_capacity(order.len());
        for &i in &order {
            colptr[self.cols[i] + 1] += 1;
            rowval.push(self.rows[i]);
            nzval.push(self.vals[i]);
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        (CscMatrix::new(self.nrows, ncols, colptr, rowval, nzval), self.b)
    }
}

/// Solves the continuous relaxation of `program` (binaries, if any, are
/// treated as boxed in [0,1] by their bounds).
pub fn solve_continuous(program: &ConicProgram, tol: f64) -> Result<ConicSolution, SolveError> {
    program.validate()?;
    let n = program.num_vars();

    let mut q = vec![0.0; n];
    for &(v, c) in &program.objective().terms {
        q[v.index()] += c;
    }
    let obj_const = program.objective().constant;

    let mut trip = Triplets::new();
    let mut cones: Vec<SupportedConeT<f64>> = vec![];
    // (row id, block start, block len) for dual extraction
    let mut spans: Vec<(RowId, usize, usize)> = Vec::with_capacity(program.num_rows());

    // zero cone: equalities
    let mut n_eq = 0;
    for (i, row) in program.rows().iter().enumerate() {
        if let Row::Eq { expr, rhs } = row {
            spans.push((RowId(i), trip.nrows, 1));
            let mut e = expr.clone();
            e.constant -= rhs;
            trip.push_value_row(&e); // s = expr − rhs, forced to 0
            n_eq += 1;
        }
    }
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }

    // nonnegative cone: inequalities as s = rhs − expr ≥ 0, then box bounds
    let mut n_pos = 0;
    for (i, row) in program.rows().iter().enumerate() {
        if let Row::Le { expr, rhs } = row {
            spans.push((RowId(i), trip.nrows, 1));
            let mut e = expr.clone() * -1.0;
            e.constant += rhs;
            trip.push_value_row(&e);
            n_pos += 1;
        }
    }
    for j in 0..n {
        let (lo, hi) = program.bounds(crate::program::VarId(j));
        if lo.is_finite() {
            trip.push_raw_row(&[(j, -1.0)], -lo); // s = x_j − lo ≥ 0
            n_pos += 1;
        }
        if hi.is_finite() {
            trip.push_raw_row(&[(j, 1.0)], hi); // s = hi − x_j ≥ 0
            n_pos += 1;
        }
    }
    if n_pos > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_pos));
    }

    // second-order cones, one block per row
    for (i, row) in program.rows().iter().enumerate() {
        match row {
            Row::Soc { u, v } => {
                spans.push((RowId(i), trip.nrows, u.len() + 1));
                trip.push_value_row(v);
                for e in u {
                    trip.push_value_row(e);
                }
                cones.push(SupportedConeT::SecondOrderConeT(u.len() + 1));
            }
            Row::RotatedSoc { z, x, y } => {
                spans.push((RowId(i), trip.nrows, y.len() + 2));
                trip.push_value_row(&(z.clone() + x.clone()));
                trip.push_value_row(&(z.clone() - x.clone()));
                let sqrt2 = std::f64::consts::SQRT_2;
                for e in y {
                    trip.push_value_row(&(e.clone() * sqrt2));
                }
                cones.push(SupportedConeT::SecondOrderConeT(y.len() + 2));
            }
            _ => {}
        }
    }

    let (a, b) = trip.into_csc(n);
    let p = CscMatrix::zeros((n, n));

    let mut settings = DefaultSettings::default();
    settings.verbose = false;
    settings.tol_feas = (tol * 0.1).max(1e-12);
    settings.tol_gap_abs = (tol * 0.1).max(1e-12);
    settings.tol_gap_rel = (tol * 0.1).max(1e-12);
    settings.max_iter = 200;

    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| SolveError::Numerical(format!("{e:?}")))?;
    solver.solve();

    let sol = &solver.solution;
    let info = &solver.info;
    let collect_duals = |src: &[f64]| -> Vec<Vec<f64>> {
        let mut duals = vec![vec![]; program.num_rows()];
        for &(row, start, len) in &spans {
            duals[row.index()] = src[start..start + len].to_vec();
        }
        duals
    };

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Status::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Ok(ConicSolution {
                status: Status::Infeasible,
                x: vec![],
                objective: f64::INFINITY,
                duals: collect_duals(&sol.z),
                gap: f64::NAN,
                residual: f64::NAN,
            })
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Ok(ConicSolution {
                status: Status::Unbounded,
                x: sol.x.clone(),
                objective: f64::NEG_INFINITY,
                duals: vec![vec![]; program.num_rows()],
                gap: f64::NAN,
                residual: f64::NAN,
            })
        }
        other => {
            return Err(SolveError::Numerical(format!(
                "backend stopped with status {other:?} after {} iterations",
                info.iterations
            )))
        }
    };

    let x = sol.x.clone();
    let (residual, _) = program.max_violation(&x);
    let objective = sol.obj_val + obj_const;
    let gap = (info.cost_primal - info.cost_dual).abs()
        / f64::max(1.0, info.cost_primal.abs());

    Ok(ConicSolution {
        status,
        x,
        objective,
        duals: collect_duals(&sol.z),
        gap,
        residual,
    })
}
