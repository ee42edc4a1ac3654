//! Best-first branch-and-bound over the binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::SolveError;
use crate::program::{ConicProgram, VarId};
use crate::solve::{solve_continuous, ConicSolution, Status, DEFAULT_TOL};

pub const DEFAULT_GAP: f64 = 1e-3;
pub const MAX_BINARIES: usize = 32;
const NODE_LIMIT: usize = 10_000;
const INT_TOL: f64 = 1e-6;

struct Node {
    bound: f64,
    /// FIFO tiebreak so equal-bound nodes pop in creation order.
    seq: usize,
    fixings: Vec<(VarId, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert to pop the lowest bound first.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn rel_gap(incumbent: f64, bound: f64) -> f64 {
    (incumbent - bound).max(0.0) / f64::max(1e-10, incumbent.abs())
}

fn apply_fixings(base: &ConicProgram, fixings: &[(VarId, f64)]) -> ConicProgram {
    let mut prog = base.clone();
    for &(v, val) in fixings {
        prog.set_bounds(v, val, val);
    }
    prog
}

fn most_fractional(x: &[f64], binaries: &[VarId]) -> Option<VarId> {
    let mut best: Option<(f64, VarId)> = None;
    for &v in binaries {
        let frac = (x[v.index()] - x[v.index()].round()).abs();
        if frac <= INT_TOL {
            continue;
        }
        // distance to 0.5 decides; lowest index wins ties via strict less-than
        let score = (x[v.index()] - 0.5).abs();
        if best.map_or(true, |(s, _)| score < s) {
            best = Some((score, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Snaps near-integral binaries to exact 0/1 in a solution point.
fn snap(mut sol: ConicSolution, binaries: &[VarId]) -> ConicSolution {
    for &v in binaries {
        let r = sol.x[v.index()].round();
        if (sol.x[v.index()] - r).abs() <= INT_TOL {
            sol.x[v.index()] = r;
        }
    }
    sol
}

/// Solves the mixed program to the requested relative gap (default 0.1%).
///
/// All-continuous programs fall through to [`solve_continuous`]. The search
/// is best-first on the relaxation bound; branching picks the most fractional
/// binary, lowest index on ties. A rounding dive at the root seeds the
/// incumbent so a node-limit stop can still report a feasible point with
/// `Status::GapLimit` and its achieved gap.
pub fn solve_mixed(program: &ConicProgram, gap: f64) -> Result<ConicSolution, SolveError> {
    program.validate()?;
    let binaries = program.binary_vars();
    if binaries.is_empty() {
        return solve_continuous(program, DEFAULT_TOL);
    }
    if binaries.len() > MAX_BINARIES {
        return Err(SolveError::TooManyBinaries(binaries.len(), MAX_BINARIES));
    }

    let root = solve_continuous(program, DEFAULT_TOL)?;
    match root.status {
        Status::Infeasible | Status::Unbounded => return Ok(root),
        _ => {}
    }

    let mut incumbent: Option<ConicSolution> = None;
    if most_fractional(&root.x, &binaries).is_none() {
        incumbent = Some(snap(root.clone(), &binaries));
    } else {
        // rounding dive: fix every binary to its rounded relaxation value,
        // then retry with the all-ones fallback
        for rounded in [true, false] {
            let fixings: Vec<(VarId, f64)> = binaries
                .iter()
                .map(|&v| {
                    let val = if rounded {
                        if root.x[v.index()] >= 0.5 { 1.0 } else { 0.0 }
                    } else {
                        1.0
                    };
                    (v, val)
                })
                .collect();
            let dive = solve_continuous(&apply_fixings(program, &fixings), DEFAULT_TOL)?;
            if dive.status == Status::Optimal {
                incumbent = Some(snap(dive, &binaries));
                break;
            }
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node { bound: root.objective, seq, fixings: vec![] });
    let mut nodes_evaluated = 0usize;
    let mut hit_node_limit = false;

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if rel_gap(inc.objective, node.bound) <= gap {
                // best-first: the lowest open bound already proves the gap
                let mut best = inc.clone();
                best.gap = rel_gap(best.objective, node.bound);
                best.status = Status::Optimal;
                return Ok(best);
            }
        }
        if nodes_evaluated >= NODE_LIMIT {
            hit_node_limit = true;
            break;
        }
        nodes_evaluated += 1;

        let relaxed = solve_continuous(&apply_fixings(program, &node.fixings), DEFAULT_TOL)?;
        match relaxed.status {
            Status::Infeasible => continue,
            Status::Unbounded => {
                // a bounded-below root cannot spawn unbounded children unless
                // the program itself is unbounded over the integer hull
                return Ok(relaxed);
            }
            _ => {}
        }
        if let Some(inc) = &incumbent {
            if relaxed.objective >= inc.objective - 1e-12 * inc.objective.abs().max(1.0) {
                continue; // dominated subtree
            }
        }
        match most_fractional(&relaxed.x, &binaries) {
            None => {
                let candidate = snap(relaxed, &binaries);
                let better = incumbent
                    .as_ref()
                    .map_or(true, |inc| candidate.objective < inc.objective - 1e-12 * inc.objective.abs().max(1.0));
                if better {
                    incumbent = Some(candidate);
                }
            }
            Some(branch_var) => {
                for val in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((branch_var, val));
                    seq += 1;
                    heap.push(Node { bound: relaxed.objective, seq, fixings });
                }
            }
        }
    }

    let mut best = incumbent.ok_or(SolveError::NoIncumbent)?;
    if hit_node_limit {
        best.status = Status::GapLimit;
        best.gap = heap
            .peek()
            .map(|n| rel_gap(best.objective, n.bound))
            .unwrap_or(0.0);
    } else {
        // heap exhausted: search was complete
        best.status = Status::Optimal;
        best.gap = 0.0;
    }
    Ok(best)
}
