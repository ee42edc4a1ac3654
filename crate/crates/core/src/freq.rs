//! Post-outage frequency dynamics for a single-machine system with ramped
//! frequency response and no load damping.
//!
//! After a loss of `pl_max` at t=0, three FR products ramp in linearly:
//! non-distributed fast FR over [0, t1], EV fast FR over [t_del, t_del+t1],
//! and slow FR over [0, t2]. The swing equation 2H/f0 * dΔf/dt = R(t) - PL
//! then makes Δf piecewise quadratic, so the security checks and the
//! trajectory itself have closed forms. The nadir is the first zero-RoCoF
//! instant, where cumulative response balances the loss.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FreqError {
    /// The zero-RoCoF instant falls before the fast products finish; the
    /// quadratic nadir expression does not apply.
    #[error("nadir-before-T1: fast FR covers the loss before t1")]
    NadirBeforeT1,
    /// Frequency is not arrested within the simulated horizon.
    #[error("no-arrest: response never balances the loss in the horizon")]
    NoArrest,
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

/// System-wide constants of the frequency-security model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyParams {
    pub f0: f64,
    pub delta_f_max: f64,
    pub rocof_max: f64,
    pub t1: f64,
    pub t2: f64,
    pub t_del: f64,
}

impl FrequencyParams {
    pub fn validate(&self) -> Result<(), FreqError> {
        let vals = [
            self.f0,
            self.delta_f_max,
            self.rocof_max,
            self.t1,
            self.t2,
            self.t_del,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FreqError::NonFinite);
        }
        if self.f0 <= 0.0 || self.delta_f_max <= 0.0 || self.rocof_max <= 0.0 {
            return Err(FreqError::InvalidParams("limits must be positive"));
        }
        if self.t1 <= 0.0 || self.t2 <= 0.0 || self.t1 >= self.t2 {
            return Err(FreqError::InvalidParams("need 0 < t1 < t2"));
        }
        if self.t_del < 0.0 {
            return Err(FreqError::InvalidParams("t_del must be nonnegative"));
        }
        Ok(())
    }
}

/// One post-outage snapshot: inertia, scheduled FR, largest loss. All GW
/// except h (GW s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyCase {
    pub h: f64,
    pub r_ev: f64,
    pub r_nd: f64,
    pub r_g: f64,
    pub pl_max: f64,
}

impl FrequencyCase {
    pub fn validate(&self) -> Result<(), FreqError> {
        let vals = [self.h, self.r_ev, self.r_nd, self.r_g, self.pl_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FreqError::NonFinite);
        }
        if vals.iter().any(|v| *v < 0.0) {
            return Err(FreqError::InvalidParams("case fields must be nonnegative"));
        }
        Ok(())
    }
}

/// Sampled Δf(t) with the analytically extracted nadir.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrajectory {
    pub samples: Vec<(f64, f64)>,
    pub nadir_value: f64,
    pub nadir_time: f64,
}

impl FrequencyTrajectory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_s,delta_f_hz")?;
        for (t, df) in &self.samples {
            writeln!(w, "{t},{df}")?;
        }
        Ok(())
    }
}

/// Inertia floor implied by the RoCoF limit at the instant of loss.
pub fn min_inertia_for_rocof(pl_max: f64, params: &FrequencyParams) -> Result<f64, FreqError> {
    params.validate()?;
    if !pl_max.is_finite() {
        return Err(FreqError::NonFinite);
    }
    Ok(pl_max * params.f0 / (2.0 * params.rocof_max))
}

pub fn rocof_limit_ok(case: &FrequencyCase, params: &FrequencyParams) -> Result<bool, FreqError> {
    case.validate()?;
    Ok(case.h >= min_inertia_for_rocof(case.pl_max, params)?)
}

/// Whether total response eventually covers the largest loss.
pub fn steady_state_ok(case: &FrequencyCase) -> bool {
    case.pl_max <= case.r_nd + case.r_ev + case.r_g
}

/// Zero-RoCoF instant assuming it falls in the slow-ramp window (t1, t2].
pub fn nadir_time(case: &FrequencyCase, params: &FrequencyParams) -> Result<f64, FreqError> {
    case.validate()?;
    params.validate()?;
    if !steady_state_ok(case) {
        return Err(FreqError::NoArrest);
    }
    let q = case.pl_max - case.r_nd - case.r_ev;
    if q <= 0.0 || case.r_g <= 0.0 {
        return Err(FreqError::NadirBeforeT1);
    }
    let t_star = q * params.t2 / case.r_g;
    if t_star < params.t1 {
        return Err(FreqError::NadirBeforeT1);
    }
    Ok(t_star)
}

/// Rotated-SOC decomposition of the nadir constraint: satisfied iff
/// z*x >= y². The t_del term charges the EV ramp shift as a pure energy
/// deficit, which is exact once the nadir falls after the delayed ramp and
/// conservative otherwise.
pub fn nadir_constraint_terms(case: &FrequencyCase, params: &FrequencyParams) -> (f64, f64, f64) {
    let four_df = 4.0 * params.delta_f_max;
    let z = case.h / params.f0
        - (case.r_nd + case.r_ev) * params.t1 / four_df
        - case.r_ev * 2.0 * params.t_del / four_df;
    let x = case.r_g / params.t2;
    let q = case.pl_max - case.r_nd - case.r_ev;
    let y_sq = q * q / four_df;
    (z, x, y_sq)
}

pub fn nadir_constraint_ok(case: &FrequencyCase, params: &FrequencyParams) -> bool {
    let (z, x, y_sq) = nadir_constraint_terms(case, params);
    z * x >= y_sq
}

/// Total response R(t) as breakpoints of a piecewise-linear ramp sum.
fn response_segments(params: &FrequencyParams) -> Vec<f64> {
    let mut brk = vec![
        0.0,
        params.t1,
        params.t_del,
        params.t_del + params.t1,
        params.t2,
    ];
    brk.sort_by(|a, b| a.total_cmp(b));
    brk.dedup();
    brk
}

fn response_at(case: &FrequencyCase, params: &FrequencyParams, t: f64) -> f64 {
    let ramp = |amount: f64, start: f64, width: f64| {
        if t <= start {
            0.0
        } else if t >= start + width {
            amount
        } else {
            amount * (t - start) / width
        }
    };
    ramp(case.r_nd, 0.0, params.t1)
        + ramp(case.r_ev, params.t_del, params.t1)
        + ramp(case.r_g, 0.0, params.t2)
}

/// Exact segment-wise integration of the swing equation. Samples every
/// `sample_dt`; the nadir sample is inserted at its analytic instant.
pub fn simulate_trajectory(
    case: &FrequencyCase,
    params: &FrequencyParams,
    horizon_s: f64,
    sample_dt: f64,
) -> Result<FrequencyTrajectory, FreqError> {
    case.validate()?;
    params.validate()?;
    if case.h <= 0.0 {
        return Err(FreqError::InvalidParams("h must be positive"));
    }
    if !(horizon_s > 0.0 && sample_dt > 0.0) || !horizon_s.is_finite() || !sample_dt.is_finite() {
        return Err(FreqError::InvalidParams("horizon and sample_dt must be positive"));
    }
    if !steady_state_ok(case) {
        return Err(FreqError::NoArrest);
    }

    if case.pl_max == 0.0 {
        // no event: response never activates
        let mut samples = Vec::new();
        let mut t = 0.0;
        while t <= horizon_s + 1e-12 {
            samples.push((t.min(horizon_s), 0.0));
            t += sample_dt;
        }
        return Ok(FrequencyTrajectory {
            samples,
            nadir_value: 0.0,
            nadir_time: 0.0,
        });
    }

    let brk = response_segments(params);
    let gain = params.f0 / (2.0 * case.h);

    // locate the first instant where R(t) reaches pl_max
    let mut t_star = None;
    for w in 0..brk.len() {
        let ta = brk[w];
        let tb = if w + 1 < brk.len() { brk[w + 1] } else { f64::INFINITY };
        let ra = response_at(case, params, ta);
        if ra >= case.pl_max {
            t_star = Some(ta);
            break;
        }
        if tb.is_finite() {
            let rb = response_at(case, params, tb);
            if rb >= case.pl_max {
                t_star = Some(ta + (case.pl_max - ra) / (rb - ra) * (tb - ta));
                break;
            }
        }
    }
    // steady_state_ok guarantees a crossing unless equality holds only in
    // the flat tail, where R has already reached its maximum
    let t_star = t_star.unwrap_or(*brk.last().unwrap());
    if t_star > horizon_s {
        return Err(FreqError::NoArrest);
    }

    // Δf at a time within the segment starting at brk[seg], given Δf there
    let step = |seg_start: f64, df_at_start: f64, t: f64| {
        let ra = response_at(case, params, seg_start);
        let rb = response_at(case, params, t);
        df_at_start + gain * ((ra + rb) / 2.0 - case.pl_max) * (t - seg_start)
    };

    // Δf at each breakpoint
    let mut df_brk = vec![0.0f64; brk.len()];
    for w in 1..brk.len() {
        df_brk[w] = step(brk[w - 1], df_brk[w - 1], brk[w]);
    }
    let eval = |t: f64| {
        let w = brk.partition_point(|b| *b <= t) - 1;
        step(brk[w], df_brk[w], t)
    };

    let nadir_value = eval(t_star);
    let mut samples = Vec::new();
    let mut k = 0usize;
    let mut pushed_nadir = false;
    loop {
        let t = k as f64 * sample_dt;
        if t > horizon_s + 1e-12 {
            break;
        }
        if !pushed_nadir && t > t_star {
            samples.push((t_star, nadir_value));
            pushed_nadir = true;
        }
        if (t - t_star).abs() > 1e-15 || !pushed_nadir {
            samples.push((t.min(horizon_s), eval(t.min(horizon_s))));
            if (t - t_star).abs() <= 1e-15 {
                pushed_nadir = true;
            }
        }
        k += 1;
    }
    if !pushed_nadir {
        samples.push((t_star, nadir_value));
    }

    Ok(FrequencyTrajectory {
        samples,
        nadir_value,
        nadir_time: t_star,
    })
}

/// Fixed-step trapezoid integrator, kept as a slow cross-check of the
/// closed-form trajectory.
pub fn integrate_numeric(
    case: &FrequencyCase,
    params: &FrequencyParams,
    horizon_s: f64,
    dt: f64,
) -> Result<FrequencyTrajectory, FreqError> {
    case.validate()?;
    params.validate()?;
    if case.h <= 0.0 || dt <= 0.0 || horizon_s <= 0.0 {
        return Err(FreqError::InvalidParams("need h, dt, horizon positive"));
    }
    if !steady_state_ok(case) {
        return Err(FreqError::NoArrest);
    }
    if case.pl_max == 0.0 {
        return simulate_trajectory(case, params, horizon_s, dt);
    }
    let gain = params.f0 / (2.0 * case.h);
    let n = (horizon_s / dt).ceil() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    let mut df = 0.0f64;
    samples.push((0.0, 0.0));
    let (mut nadir_value, mut nadir_time) = (0.0f64, 0.0f64);
    for k in 0..n {
        let ta = k as f64 * dt;
        let tb = ((k + 1) as f64 * dt).min(horizon_s);
        let ra = response_at(case, params, ta);
        let rb = response_at(case, params, tb);
        df += gain * ((ra + rb) / 2.0 - case.pl_max) * (tb - ta);
        samples.push((tb, df));
        if df < nadir_value {
            nadir_value = df;
            nadir_time = tb;
        }
        if tb >= horizon_s {
            break;
        }
    }
    let arrested = response_at(case, params, horizon_s) >= case.pl_max;
    if !arrested {
        return Err(FreqError::NoArrest);
    }
    Ok(FrequencyTrajectory {
        samples,
        nadir_value,
        nadir_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gb_params(t_del: f64) -> FrequencyParams {
        FrequencyParams {
            f0: 50.0,
            delta_f_max: 0.8,
            rocof_max: 1.0,
            t1: 1.0,
            t2: 10.0,
            t_del,
        }
    }

    fn table_case() -> FrequencyCase {
        FrequencyCase {
            h: 96.25,
            r_ev: 0.23,
            r_nd: 0.36,
            r_g: 2.27,
            pl_max: 1.73,
        }
    }

    fn tight_case() -> FrequencyCase {
        FrequencyCase {
            h: 119.53125,
            r_ev: 0.45,
            r_nd: 0.45,
            r_g: 1.2,
            pl_max: 1.8,
        }
    }

    /// h making z*x = y² hold exactly for the given response mix.
    fn tight_h(r_nd: f64, r_ev: f64, r_g: f64, pl: f64, p: &FrequencyParams) -> f64 {
        let q = pl - r_nd - r_ev;
        let four_df = 4.0 * p.delta_f_max;
        let y_sq = q * q / four_df;
        let x = r_g / p.t2;
        p.f0 * (y_sq / x + (r_nd + r_ev) * p.t1 / four_df + r_ev * 2.0 * p.t_del / four_df)
    }

    #[test]
    fn inertia_floor() {
        let p = gb_params(0.0);
        assert_eq!(min_inertia_for_rocof(1.8, &p).unwrap(), 45.0);
        assert_eq!(min_inertia_for_rocof(0.0, &p).unwrap(), 0.0);
        let floor = min_inertia_for_rocof(1.73, &p).unwrap();
        assert!((floor - 43.25).abs() < 1e-12);
        assert!(rocof_limit_ok(&table_case(), &p).unwrap());
        assert!(matches!(
            min_inertia_for_rocof(f64::NAN, &p),
            Err(FreqError::NonFinite)
        ));
    }

    #[test]
    fn steady_state_examples() {
        assert!(steady_state_ok(&table_case()));
        assert!(steady_state_ok(&FrequencyCase {
            h: 1.0,
            r_ev: 0.0,
            r_nd: 0.0,
            r_g: 0.0,
            pl_max: 0.0,
        }));
        assert!(!steady_state_ok(&FrequencyCase {
            h: 1.0,
            r_ev: 0.1,
            r_nd: 0.1,
            r_g: 0.1,
            pl_max: 1.0,
        }));
    }

    #[test]
    fn nadir_time_examples() {
        let p = gb_params(0.0);
        let t = nadir_time(&table_case(), &p).unwrap();
        assert!((t - 1.14 * 10.0 / 2.27).abs() < 1e-12);
        assert!((t - 5.022).abs() < 1e-3);
        assert!((nadir_time(&tight_case(), &p).unwrap() - 7.5).abs() < 1e-12);

        let covered = FrequencyCase {
            h: 50.0,
            r_ev: 0.5,
            r_nd: 0.5,
            r_g: 1.0,
            pl_max: 1.0,
        };
        assert_eq!(nadir_time(&covered, &p), Err(FreqError::NadirBeforeT1));
        let unserved = FrequencyCase {
            h: 50.0,
            r_ev: 0.1,
            r_nd: 0.1,
            r_g: 0.1,
            pl_max: 1.0,
        };
        assert_eq!(nadir_time(&unserved, &p), Err(FreqError::NoArrest));
        // boundary t* == t1 belongs to the later segment
        let boundary = FrequencyCase {
            h: 60.0,
            r_ev: 0.0,
            r_nd: 0.0,
            r_g: 2.0,
            pl_max: 0.2,
        };
        assert_eq!(nadir_time(&boundary, &p).unwrap(), 1.0);
    }

    #[test]
    fn constraint_terms_examples() {
        let p = gb_params(0.0);
        let (z, x, y_sq) = nadir_constraint_terms(&table_case(), &p);
        assert!((z - 1.740625).abs() < 1e-12);
        assert!((x - 0.227).abs() < 1e-12);
        assert!((y_sq - 0.406125).abs() < 1e-12);
        // published 2 d.p. inputs leave z*x about 2.7% short of y²
        assert!(((z * x - y_sq) / y_sq).abs() < 0.05);

        let (z, x, y_sq) = nadir_constraint_terms(&tight_case(), &p);
        assert!((z * x - y_sq).abs() < 1e-12);
        assert!((z * x - 0.253125).abs() < 1e-12);

        let zero_q = FrequencyCase {
            h: 20.0,
            r_ev: 0.4,
            r_nd: 0.6,
            r_g: 1.0,
            pl_max: 1.0,
        };
        let (z, _, y_sq) = nadir_constraint_terms(&zero_q, &p);
        assert_eq!(y_sq, 0.0);
        assert!(z > 0.0);
        assert!(nadir_constraint_ok(&zero_q, &p));
    }

    #[test]
    fn tight_case_trajectory() {
        let p = gb_params(0.0);
        let traj = simulate_trajectory(&tight_case(), &p, 20.0, 0.1).unwrap();
        assert!((traj.nadir_value + 0.800).abs() < 1e-9);
        assert!((traj.nadir_time - 7.5).abs() < 1e-9);
        assert_eq!(traj.samples[0], (0.0, 0.0));
        let min = traj
            .samples
            .iter()
            .map(|(_, df)| *df)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, traj.nadir_value);
    }

    #[test]
    fn flat_when_no_loss() {
        let p = gb_params(0.0);
        let case = FrequencyCase {
            h: 50.0,
            r_ev: 0.2,
            r_nd: 0.2,
            r_g: 1.0,
            pl_max: 0.0,
        };
        let traj = simulate_trajectory(&case, &p, 5.0, 0.5).unwrap();
        assert!(traj.samples.iter().all(|(_, df)| *df == 0.0));
        assert_eq!(traj.nadir_value, 0.0);
    }

    #[test]
    fn initial_rocof() {
        let p = gb_params(0.0);
        for case in [table_case(), tight_case()] {
            let traj = simulate_trajectory(&case, &p, 15.0, 1e-4).unwrap();
            let (t1, df1) = traj.samples[1];
            let expect = -case.pl_max * p.f0 / (2.0 * case.h);
            // one trapezoid step of the early quadratic
            assert!((df1 / t1 - expect).abs() < 1e-2 * expect.abs());
        }
    }

    #[test]
    fn numeric_oracle_agrees() {
        let p = gb_params(0.0);
        for case in [table_case(), tight_case()] {
            let exact = simulate_trajectory(&case, &p, 15.0, 0.01).unwrap();
            let numeric = integrate_numeric(&case, &p, 15.0, 1e-3).unwrap();
            assert!((exact.nadir_value - numeric.nadir_value).abs() < 1e-3);
            assert!((exact.nadir_time - numeric.nadir_time).abs() < 2e-3);
        }
    }

    #[test]
    fn tight_random_cases_touch_the_limit() {
        let p = gb_params(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r_nd = rng.random_range(0.0..0.5);
            let r_ev = rng.random_range(0.0..0.5);
            let r_g = rng.random_range(0.5..3.0);
            let q = r_g * rng.random_range(0.12..1.0);
            let pl = r_nd + r_ev + q;
            let case = FrequencyCase {
                h: tight_h(r_nd, r_ev, r_g, pl, &p),
                r_ev,
                r_nd,
                r_g,
                pl_max: pl,
            };
            let traj = simulate_trajectory(&case, &p, 25.0, 0.5).unwrap();
            assert!(
                (traj.nadir_value + p.delta_f_max).abs() < 1e-6,
                "nadir {} for {case:?}",
                traj.nadir_value
            );
            let t_pred = nadir_time(&case, &p).unwrap();
            assert!((traj.nadir_time - t_pred).abs() < 1e-9);
        }
    }

    #[test]
    fn more_response_or_inertia_never_deepens_nadir() {
        let p = gb_params(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let base = FrequencyCase {
                h: rng.random_range(30.0..200.0),
                r_ev: rng.random_range(0.0..0.6),
                r_nd: rng.random_range(0.0..0.6),
                r_g: rng.random_range(0.3..3.0),
                pl_max: 0.0,
            };
            let cap = base.r_ev + base.r_nd + base.r_g;
            let base = FrequencyCase {
                pl_max: rng.random_range(0.0..cap),
                ..base
            };
            let nadir0 = simulate_trajectory(&base, &p, 40.0, 1.0).unwrap().nadir_value;
            for bump in 0..4 {
                let mut c = base;
                match bump {
                    0 => c.h *= 1.1,
                    1 => c.r_ev += 0.05,
                    2 => c.r_nd += 0.05,
                    _ => c.r_g += 0.05,
                }
                let nadir1 = simulate_trajectory(&c, &p, 40.0, 1.0).unwrap().nadir_value;
                assert!(nadir1 >= nadir0 - 1e-12, "{bump}: {nadir1} < {nadir0}");
            }
        }
    }

    #[test]
    fn delay_term_is_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let p = gb_params(rng.random_range(0.2..1.0));
            let r_nd = rng.random_range(0.0..0.5);
            let r_ev = rng.random_range(0.05..0.5);
            let r_g = rng.random_range(0.5..3.0);
            let q = r_g * rng.random_range(0.05..1.0);
            let pl = r_nd + r_ev + q;
            let case = FrequencyCase {
                h: tight_h(r_nd, r_ev, r_g, pl, &p),
                r_ev,
                r_nd,
                r_g,
                pl_max: pl,
            };
            let (z, x, y_sq) = nadir_constraint_terms(&case, &p);
            assert!((z * x - y_sq).abs() <= 1e-9 * y_sq.max(1.0));
            let traj = simulate_trajectory(&case, &p, 30.0, 1.0).unwrap();
            assert!(
                traj.nadir_value >= -p.delta_f_max - 1e-9,
                "nadir {} with t_del {}",
                traj.nadir_value,
                p.t_del
            );
        }
    }

    #[test]
    fn csv_export_shape() {
        let p = gb_params(0.0);
        let traj = simulate_trajectory(&tight_case(), &p, 10.0, 5.0).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time_s,delta_f_hz"));
        assert_eq!(lines.next(), Some("0,0"));
    }

    #[test]
    fn unarrested_horizon_errors() {
        let p = gb_params(0.0);
        // arrest exists but falls beyond the simulated window
        let case = tight_case();
        assert_eq!(
            simulate_trajectory(&case, &p, 5.0, 1.0),
            Err(FreqError::NoArrest)
        );
    }
}
