//! Hartigan's dip statistic and a Monte-Carlo-calibrated unimodality test.
//!
//! The dip of an ECDF F is the smallest t such that some unimodal CDF G stays
//! within t of F everywhere. It suffices to place the mode at a distinct
//! sample value (G may carry an atom there; a mode strictly inside a gap is
//! dominated by one at an adjacent value). The fit then splits at the mode
//! into a convex branch through the tubes [hi_j - t, lo_j + t] around the
//! ECDF step corners and a concave branch after it, tied together only by
//! monotonicity at the junction: the convex branch must end no higher than
//! the concave branch starts.
//!
//! Each branch alone is feasible iff the greatest convex minorant of its
//! upper bounds clears its lower bounds, which yields a per-mode threshold
//! (`convex_side_devs`). The junction adds a coupled condition: the lowest
//! value the convex branch can reach at the mode, A_i(t), must not exceed
//! the highest value the concave branch can start from, D_i(t). Convexity
//! plus monotonicity force A_i(t) to be a max over two-point certificates
//! (a floor from an earlier lower bound, or a line pivoting on an earlier
//! upper bound through a later lower bound), so A_i(t) is computed for all
//! modes in one sweep with a tangent hull and a line envelope; D_i(t) is the
//! mirror image. Feasibility in t is monotone, so the dip is located by
//! bisection, with the uncoupled threshold as a lower bound that is returned
//! exactly whenever the junction does not bind there.

use super::StatsError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Sorted distinct values with ECDF left limits (`lo`) and values (`hi`).
struct Steps {
    v: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn collapse(sorted: &[f64]) -> Steps {
    let n = sorted.len() as f64;
    let mut v = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut seen = 0usize;
    let mut i = 0usize;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        v.push(sorted[i]);
        lo.push(seen as f64 / n);
        seen = j;
        hi.push(seen as f64 / n);
        i = j;
    }
    Steps { v, lo, hi }
}

/// Reflection through x -> -x, y -> 1 - y, which swaps the convex and
/// concave sides while keeping the [0, 1] range.
fn mirrored(s: &Steps) -> Steps {
    let m = s.v.len();
    let mut v = Vec::with_capacity(m);
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    for i in (0..m).rev() {
        v.push(-s.v[i]);
        lo.push(1.0 - s.hi[i]);
        hi.push(1.0 - s.lo[i]);
    }
    Steps { v, lo, hi }
}

/// For each i, half the max gap between step tops `hi[j]` (j < i) and the
/// lower convex hull of the step bottoms `(v[j], lo[j])`, j <= i. This is the
/// minimal sup-error of a convex CDF piece ending at value i's left limit.
fn convex_side_devs(v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m];
    let mut hull: Vec<usize> = Vec::with_capacity(m);
    let mut cur_max = 0.0f64;
    for i in 0..m {
        if i > 0 {
            // the previous point is now behind the fit; while it stays a
            // hull vertex its gap is its own jump
            cur_max = cur_max.max(hi[i - 1] - lo[i - 1]);
        }
        let mut popped = false;
        while hull.len() >= 2 {
            let b = hull[hull.len() - 1];
            let a = hull[hull.len() - 2];
            // pop b unless it lies strictly below chord a -> i
            if (lo[b] - lo[a]) * (v[i] - v[b]) < (lo[i] - lo[b]) * (v[b] - v[a]) {
                break;
            }
            hull.pop();
            popped = true;
        }
        if popped {
            // the new chord replaces hull segments over (a, i); gaps there
            // only grow, so rescan against the chord
            let a = *hull.last().unwrap();
            let slope = (lo[i] - lo[a]) / (v[i] - v[a]);
            for j in a + 1..i {
                let chord = lo[a] + slope * (v[j] - v[a]);
                cur_max = cur_max.max(hi[j] - chord);
            }
        }
        hull.push(i);
        out[i] = 0.5 * cur_max;
    }
    out
}

/// Max-of-lines tree over the fixed query grid `xs`.
struct LineEnvelope<'a> {
    xs: &'a [f64],
    lines: Vec<(f64, f64)>, // node -> (slope, intercept)
}

impl<'a> LineEnvelope<'a> {
    fn new(xs: &'a [f64]) -> Self {
        LineEnvelope {
            xs,
            lines: vec![(0.0, f64::NEG_INFINITY); 4 * xs.len().max(1)],
        }
    }

    fn insert(&mut self, slope: f64, intercept: f64) {
        self.node_insert(1, 0, self.xs.len(), (slope, intercept));
    }

    fn node_insert(&mut self, node: usize, l: usize, r: usize, mut ln: (f64, f64)) {
        let at = |ln: (f64, f64), x: f64| ln.0 * x + ln.1;
        let mid = (l + r) / 2;
        if at(ln, self.xs[mid]) > at(self.lines[node], self.xs[mid]) {
            std::mem::swap(&mut self.lines[node], &mut ln);
        }
        if r - l <= 1 {
            return;
        }
        // the displaced line can beat the kept one on at most one side
        if at(ln, self.xs[l]) > at(self.lines[node], self.xs[l]) {
            self.node_insert(2 * node, l, mid, ln);
        } else if at(ln, self.xs[r - 1]) > at(self.lines[node], self.xs[r - 1]) {
            self.node_insert(2 * node + 1, mid, r, ln);
        }
    }

    fn query(&self, idx: usize) -> f64 {
        let x = self.xs[idx];
        let (mut l, mut r, mut node) = (0usize, self.xs.len(), 1usize);
        let mut best = f64::NEG_INFINITY;
        loop {
            let ln = self.lines[node];
            best = best.max(ln.0 * x + ln.1);
            if r - l <= 1 {
                return best;
            }
            let mid = (l + r) / 2;
            if idx < mid {
                (r, node) = (mid, 2 * node);
            } else {
                (l, node) = (mid, 2 * node + 1);
            }
        }
    }
}

/// Steepest slope from a hull vertex up to the external point (px, py),
/// px right of every hull x. Slopes along the hull are unimodal in the
/// vertex index; comparisons are cross-multiplied to stay division-free.
fn tangent_slope(hull: &[(f64, f64)], px: f64, py: f64) -> f64 {
    let (mut a, mut b) = (0usize, hull.len() - 1);
    while a < b {
        let mid = (a + b) / 2;
        let (x0, y0) = hull[mid];
        let (x1, y1) = hull[mid + 1];
        if (py - y0) * (px - x1) < (py - y1) * (px - x0) {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    (py - hull[a].1) / (px - hull[a].0)
}

/// A_i(t) for every i: the lowest value a convex nondecreasing branch obeying
/// the tubes left of i can take at v[i]. Each binding certificate is either
/// an earlier lower bound alone (monotonicity) or a line pivoting on an
/// earlier upper bound through a later lower bound (convexity), so a sweep
/// with a hull of upper-bound points and an envelope of certificate lines
/// covers them all.
fn junction_mins(v: &[f64], lo: &[f64], hi: &[f64], t: f64) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m];
    let mut env = LineEnvelope::new(v);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(m);
    for i in 0..m {
        out[i] = env.query(i).max(0.0);
        let lb = hi[i] - t;
        let ub = lo[i] + t;
        let mut slope = 0.0;
        if !hull.is_empty() {
            slope = tangent_slope(&hull, v[i], lb).max(0.0);
        }
        env.insert(slope, lb - slope * v[i]);
        while hull.len() >= 2 {
            let (bx, by) = hull[hull.len() - 1];
            let (ax, ay) = hull[hull.len() - 2];
            if (by - ay) * (v[i] - bx) < (ub - by) * (bx - ax) {
                break;
            }
            hull.pop();
        }
        hull.push((v[i], ub));
    }
    out
}

/// Whether some mode admits a full unimodal fit at sup-error t: both branch
/// tubes feasible and the junction values compatible.
fn fits_at(s: &Steps, mir: &Steps, t_left: &[f64], t_right: &[f64], t: f64) -> bool {
    let m = s.v.len();
    let a = junction_mins(&s.v, &s.lo, &s.hi, t);
    let a_mir = junction_mins(&mir.v, &mir.lo, &mir.hi, t);
    for i in 0..m {
        if t_left[i] <= t && t_right[i] <= t && a[i] <= 1.0 - a_mir[m - 1 - i] {
            return true;
        }
    }
    false
}

fn dip_statistic_tol(samples: &[f64], tol: f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let s = collapse(&x);
    let m = s.v.len();
    if m <= 1 {
        return 0.0;
    }
    let mir = mirrored(&s);
    let t_left = convex_side_devs(&s.v, &s.lo, &s.hi);
    let mut t_right = convex_side_devs(&mir.v, &mir.lo, &mir.hi);
    t_right.reverse();

    let mut d0 = f64::INFINITY;
    for i in 0..m {
        d0 = d0.min(t_left[i].max(t_right[i]));
    }
    if fits_at(&s, &mir, &t_left, &t_right, d0) {
        return d0;
    }
    // the junction binds; its feasibility is monotone in t, so bisect
    let mut lo_t = d0;
    let mut hi_t = 0.26;
    while hi_t < 1.0 && !fits_at(&s, &mir, &t_left, &t_right, hi_t) {
        hi_t = (2.0 * hi_t).min(1.0);
    }
    while hi_t - lo_t > tol {
        let mid = 0.5 * (lo_t + hi_t);
        if fits_at(&s, &mir, &t_left, &t_right, mid) {
            hi_t = mid;
        } else {
            lo_t = mid;
        }
    }
    hi_t
}

/// Dip statistic of a sample (any order, ties allowed). Zero for degenerate
/// or single-point samples.
pub fn dip_statistic(samples: &[f64]) -> f64 {
    dip_statistic_tol(samples, 1e-13)
}

/// Null distribution of the dip for samples of size n from a continuous
/// distribution, estimated by seeded uniform resampling.
pub struct DipCalibration {
    n: usize,
    null_dips: Vec<f64>, // sorted ascending
}

impl DipCalibration {
    pub fn new(n: usize, resamples: usize, seed: u64) -> Self {
        // null dips only enter rank comparisons, so a looser bisection
        // tolerance than the headline statistic is safe
        let mut null_dips: Vec<f64> = (0..resamples)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                let draw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                dip_statistic_tol(&draw, 1e-8)
            })
            .collect();
        null_dips.sort_by(|a, b| a.total_cmp(b));
        DipCalibration { n, null_dips }
    }

    /// Process-wide memo: validation reruns and repeated tests at one sample
    /// size pay for the resampling once.
    pub fn cached(n: usize, resamples: usize, seed: u64) -> Arc<DipCalibration> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u64), Arc<DipCalibration>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(hit) = cache.lock().unwrap().get(&(n, resamples, seed)) {
            return Arc::clone(hit);
        }
        let built = Arc::new(DipCalibration::new(n, resamples, seed));
        cache
            .lock()
            .unwrap()
            .entry((n, resamples, seed))
            .or_insert(built)
            .clone()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Fraction of null dips at or above `dip`, with the +1 correction that
    /// keeps Monte Carlo p-values off exact zero.
    pub fn p_value(&self, dip: f64) -> f64 {
        let below = self.null_dips.partition_point(|d| *d < dip);
        let ge = self.null_dips.len() - below;
        (ge as f64 + 1.0) / (self.null_dips.len() as f64 + 1.0)
    }
}

/// Dip statistic plus Monte Carlo p-value against the uniform null
/// (`resamples` seeded draws of the same sample size).
pub fn dip_test(
    samples: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), StatsError> {
    let n = samples.len();
    if n < 4 {
        return Err(StatsError::TooFewSamples { needed: 4, got: n });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return Err(StatsError::Degenerate);
    }
    let dip = dip_statistic(samples);
    let cal = DipCalibration::cached(n, resamples, seed);
    Ok((dip, cal.p_value(dip)))
}
