//! Chance-constrained FR scheduling under moment ambiguity.
//!
//! The under-delivery risk bound P(shortfall) <= eps turns into a
//! second-order-cone restriction once the uncertain connected counts are
//! summarized by first and second moments: scheduled response plus a
//! quantile-factor multiple of the aggregate standard deviation must stay
//! below the expected capacity. The quantile factor depends on what the
//! distribution is assumed to be: exactly Gaussian, unimodal with known
//! moments, or only moment-matched (worst case). Scheduling the fleets
//! jointly pools their variances in quadrature rather than summing them,
//! which is where the joint mode earns its capacity gain.

use crate::stats::normal_quantile;
use fleetfr_conic::{ConicProgram, LinExpr, RowId, VarId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DrccError {
    #[error("risk level must lie strictly inside (0, 1), got {0}")]
    InvalidRisk(f64),
    #[error("invalid fleet: {0}")]
    InvalidFleet(&'static str),
    #[error("quantile factor {0} is not positive; cone form needs eps < 0.5")]
    NonpositiveQuantile(f64),
    #[error("operation requires scheduling mode {0:?}")]
    WrongMode(SchedulingMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguitySet {
    Gaussian,
    Unimodal,
    Dro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulingMode {
    Joint,
    Individual,
    Deterministic,
    Disabled,
}

/// Acceptable probability of FR under-delivery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel {
    epsilon: f64,
}

impl RiskLevel {
    pub fn new(epsilon: f64) -> Result<Self, DrccError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(DrccError::InvalidRisk(epsilon));
        }
        Ok(RiskLevel { epsilon })
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = DrccError;
    fn try_from(v: f64) -> Result<Self, DrccError> {
        RiskLevel::new(v)
    }
}

impl From<RiskLevel> for f64 {
    fn from(r: RiskLevel) -> f64 {
        r.epsilon
    }
}

/// One fleet's contribution to the uncertain FR capacity: per-EV headroom
/// times an uncertain connected count with moments (n0 + mu, sigma).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetUncertainty {
    pub g: f64,
    pub n0: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl FleetUncertainty {
    pub fn validate(&self) -> Result<(), DrccError> {
        let vals = [self.g, self.n0, self.mu, self.sigma];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(DrccError::InvalidFleet("non-finite field"));
        }
        if self.g < 0.0 || self.n0 < 0.0 || self.sigma < 0.0 {
            return Err(DrccError::InvalidFleet("negative capacity, count or spread"));
        }
        if self.n0 + self.mu < 0.0 {
            return Err(DrccError::InvalidFleet("expected connected count is negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrccConfig {
    pub ambiguity: AmbiguitySet,
    pub risk: RiskLevel,
    pub big_m1: f64,
    pub big_m2: f64,
    pub mode: SchedulingMode,
}

/// Quantile factor of the standardized shortfall under each ambiguity set.
/// Gaussian is the exact normal quantile; the other two are tight
/// distribution-free bounds (one-sided unimodal, and moment-only).
pub fn inverse_cdf_bound(ambiguity: AmbiguitySet, epsilon: f64) -> Result<f64, DrccError> {
    if !(epsilon > 0.0 && epsilon < 1.0) || !epsilon.is_finite() {
        return Err(DrccError::InvalidRisk(epsilon));
    }
    Ok(match ambiguity {
        AmbiguitySet::Gaussian => normal_quantile(1.0 - epsilon),
        AmbiguitySet::Unimodal => {
            if epsilon <= 1.0 / 6.0 {
                (4.0 / (9.0 * epsilon) - 1.0).sqrt()
            } else {
                (3.0 * (1.0 - epsilon) / (1.0 + 3.0 * epsilon)).sqrt()
            }
        }
        AmbiguitySet::Dro => ((1.0 - epsilon) / epsilon).sqrt(),
    })
}

/// Euclidean norm of the per-fleet spreads, scaled by the largest entry so
/// a single-term norm reproduces that term exactly.
fn spread_norm(fleets: &[FleetUncertainty]) -> f64 {
    let m = fleets
        .iter()
        .map(|f| f.g * f.sigma)
        .fold(0.0f64, |a, b| a.max(b.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = fleets
        .iter()
        .map(|f| (f.g * f.sigma / m).powi(2))
        .sum();
    m * s.sqrt()
}

/// Mean and standard deviation of the FR shortfall r_bar - sum g_i N_i,
/// with independent connection deviations across fleets.
pub fn delta_moments(fleets: &[FleetUncertainty], r_bar: f64) -> (f64, f64) {
    let mean: f64 = fleets.iter().map(|f| f.g * (f.n0 + f.mu)).sum();
    (r_bar - mean, spread_norm(fleets))
}

/// Largest schedulable joint FR for fixed charging decisions, clamped at
/// zero where the margin goes negative (the relaxed-binary semantics).
pub fn max_joint_schedulable(fleets: &[FleetUncertainty], config: &DrccConfig) -> f64 {
    let f_inv = inverse_cdf_bound(config.ambiguity, config.risk.epsilon())
        .expect("risk validated at construction");
    let (neg_mean, sd) = delta_moments(fleets, 0.0);
    (-neg_mean - f_inv * sd).max(0.0)
}

/// Per-fleet capacity when each fleet must cover its own risk margin.
pub fn individual_limit(fleet: &FleetUncertainty, config: &DrccConfig) -> f64 {
    let f_inv = inverse_cdf_bound(config.ambiguity, config.risk.epsilon())
        .expect("risk validated at construction");
    (fleet.g * (fleet.n0 + fleet.mu) - f_inv * fleet.g * fleet.sigma).max(0.0)
}

/// Capacity gained by pooling fleet variances instead of summing spreads.
/// Equals joint minus summed individual limits whenever neither side clamps.
pub fn joint_improvement(fleets: &[FleetUncertainty], config: &DrccConfig) -> f64 {
    let f_inv = inverse_cdf_bound(config.ambiguity, config.risk.epsilon())
        .expect("risk validated at construction");
    let lin: f64 = fleets.iter().map(|f| f.g * f.sigma).sum();
    f_inv * (lin - spread_norm(fleets))
}

/// Big-M constants sized from instance bounds: `m1` must dominate any slack
/// the relaxed margin row can need, `m2` any attainable schedule. `g_max`
/// is each fleet's largest per-EV headroom.
pub fn big_m_values(
    fleets: &[FleetUncertainty],
    g_max: &[f64],
    ambiguity: AmbiguitySet,
    risk: RiskLevel,
) -> (f64, f64) {
    let f_inv = inverse_cdf_bound(ambiguity, risk.epsilon()).expect("risk validated");
    let spread: f64 = fleets
        .iter()
        .zip(g_max)
        .map(|(f, gm)| gm * f.sigma)
        .sum();
    let m1 = f_inv.max(1.0) * spread;
    let m2 = fleets
        .iter()
        .zip(g_max)
        .map(|(f, gm)| gm * (f.n0 + f.mu + 6.0 * f.sigma))
        .sum();
    (m1, m2)
}

/// One fleet's entry in the scheduling constraint: its per-EV headroom as a
/// decision expression plus count moments.
#[derive(Debug, Clone)]
pub struct FleetTerm {
    pub g: LinExpr,
    pub n0: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl FleetTerm {
    pub fn fixed(f: &FleetUncertainty) -> Self {
        FleetTerm {
            g: LinExpr::constant(f.g),
            n0: f.n0,
            mu: f.mu,
            sigma: f.sigma,
        }
    }
}

/// Handles to the rows added by a joint or individual constraint build.
#[derive(Debug, Clone)]
pub struct ConstraintHandles {
    /// Relaxation binaries: one for Joint, one per fleet for Individual.
    pub relax: Vec<VarId>,
    pub rows: Vec<RowId>,
}

fn mean_expr(terms: &[FleetTerm]) -> LinExpr {
    let mut e = LinExpr::zero();
    for t in terms {
        e += t.g.clone() * (t.n0 + t.mu);
    }
    e
}

/// The relaxation binary exists so the solver can drop the schedule bound
/// entirely (forcing r_bar = 0) when no headroom choice satisfies it. When
/// every fleet's expected count dominates its risk-scaled spread, the bound
/// holds at r_bar = 0 for every headroom vector, so the binary (and its
/// big-M rows) can be omitted without changing the feasible set.
fn always_coverable(terms: &[FleetTerm], f_inv: f64) -> bool {
    terms.iter().all(|t| t.n0 + t.mu >= f_inv * t.sigma)
}

/// Largest coefficient magnitude in an expression, used to normalize the
/// pooled-variance cone: per-EV headrooms are microscopic in GW terms, and
/// an unnormalized cone mixes 1e-2-scale legs with unit-scale rows badly
/// enough to stall the interior-point backend.
fn expr_magnitude(e: &LinExpr) -> f64 {
    e.terms
        .iter()
        .map(|&(_, c)| c.abs())
        .fold(e.constant.abs(), f64::max)
}

/// Emits the pooled-variance schedule bound: either the cone
/// `||(g_i sigma_i)|| <= margin` through an auxiliary margin variable, or a
/// plain linear bound when every sigma is zero. A big-M relaxation binary
/// is added only when the bound could be unsatisfiable at r_bar = 0; it
/// appears only in linear rows.
pub fn joint_constraint_rows(
    prog: &mut ConicProgram,
    terms: &[FleetTerm],
    r_bar: VarId,
    config: &DrccConfig,
) -> Result<ConstraintHandles, DrccError> {
    if config.mode != SchedulingMode::Joint {
        return Err(DrccError::WrongMode(config.mode));
    }
    let f_inv = inverse_cdf_bound(config.ambiguity, config.risk.epsilon())?;
    if f_inv <= 0.0 {
        return Err(DrccError::NonpositiveQuantile(f_inv));
    }
    let mut relax = Vec::new();
    let mut slack = LinExpr::zero();
    if !always_coverable(terms, f_inv) {
        let b = prog.add_var("drcc_relax", 0.0, 1.0);
        prog.mark_binary(b);
        slack = LinExpr::term(b, config.big_m1);
        relax.push(b);
    }
    let mean = mean_expr(terms);
    let mut rows = Vec::new();

    if terms.iter().all(|t| t.sigma == 0.0) {
        rows.push(prog.add_le(
            LinExpr::from(r_bar) - mean - slack,
            0.0,
        ));
    } else {
        let unit = terms
            .iter()
            .map(|t| t.sigma * expr_magnitude(&t.g))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        // margin is measured in units of the largest sigma*g coefficient, so
        // the cone legs below are O(1) regardless of fleet scale.
        let margin = prog.add_var("drcc_margin", f64::NEG_INFINITY, f64::INFINITY);
        let scale = 1.0 / (f_inv * unit);
        rows.push(prog.add_eq(
            LinExpr::from(margin) - mean * scale + LinExpr::term(r_bar, scale) - slack * scale,
            0.0,
        ));
        let u: Vec<LinExpr> = terms
            .iter()
            .filter(|t| t.sigma != 0.0)
            .map(|t| t.g.clone() * (t.sigma / unit))
            .collect();
        rows.push(prog.add_soc(u, margin));
    }
    if let Some(&b) = relax.first() {
        rows.push(prog.add_le(
            LinExpr::from(r_bar) + LinExpr::term(b, config.big_m2),
            config.big_m2,
        ));
    }
    Ok(ConstraintHandles { relax, rows })
}

/// Emits per-fleet margin bounds and ties `r_bar` to the sum of the
/// per-fleet schedules.
///
/// Per-fleet relaxation binaries never survive to the solver: a fleet whose
/// spread exceeds its expected count has a nonpositive margin coefficient,
/// so its unrelaxed branch pins both the schedule and the headroom to zero
/// while the relaxed branch pins only the schedule. The relaxed branch
/// therefore dominates, and the fleet reduces to a fixed zero schedule.
pub fn individual_constraint_rows(
    prog: &mut ConicProgram,
    terms: &[FleetTerm],
    r_bar: VarId,
    config: &DrccConfig,
) -> Result<ConstraintHandles, DrccError> {
    if config.mode != SchedulingMode::Individual {
        return Err(DrccError::WrongMode(config.mode));
    }
    let f_inv = inverse_cdf_bound(config.ambiguity, config.risk.epsilon())?;
    if f_inv <= 0.0 {
        return Err(DrccError::NonpositiveQuantile(f_inv));
    }
    let mut rows = Vec::new();
    let mut total = LinExpr::term(r_bar, -1.0);
    for (i, t) in terms.iter().enumerate() {
        if t.n0 + t.mu < f_inv * t.sigma {
            continue;
        }
        let ri = prog.add_var(format!("r_fleet{i}"), 0.0, f64::INFINITY);
        rows.push(prog.add_le(
            LinExpr::from(ri) - t.g.clone() * (t.n0 + t.mu - f_inv * t.sigma),
            0.0,
        ));
        total += ri;
    }
    rows.push(prog.add_eq(total, 0.0));
    Ok(ConstraintHandles { relax: Vec::new(), rows })
}

/// Deterministic bound: schedule against the expected count, no margin.
pub fn deterministic_constraint_rows(
    prog: &mut ConicProgram,
    terms: &[FleetTerm],
    r_bar: VarId,
    config: &DrccConfig,
) -> Result<ConstraintHandles, DrccError> {
    if config.mode != SchedulingMode::Deterministic {
        return Err(DrccError::WrongMode(config.mode));
    }
    let row = prog.add_le(LinExpr::from(r_bar) - mean_expr(terms), 0.0);
    Ok(ConstraintHandles {
        relax: vec![],
        rows: vec![row],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fleetfr_conic::{solve_mixed, Status};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    fn two_symmetric() -> Vec<FleetUncertainty> {
        vec![
            FleetUncertainty {
                g: 1e-5,
                n0: 5000.0,
                mu: -500.0,
                sigma: 200.0,
            };
            2
        ]
    }

    fn config(ambiguity: AmbiguitySet, eps: f64, mode: SchedulingMode) -> DrccConfig {
        DrccConfig {
            ambiguity,
            risk: RiskLevel::new(eps).unwrap(),
            big_m1: 1.0,
            big_m2: 1.0,
            mode,
        }
    }

    #[test]
    fn quantile_factor_table() {
        assert_eq!(inverse_cdf_bound(AmbiguitySet::Dro, 0.5).unwrap(), 1.0);
        assert!(
            (inverse_cdf_bound(AmbiguitySet::Dro, 0.01).unwrap() - 9.94987).abs() < 1e-5
        );
        assert!(
            (inverse_cdf_bound(AmbiguitySet::Unimodal, 0.01).unwrap() - 6.59124).abs() < 1e-5
        );
        assert!(
            (inverse_cdf_bound(AmbiguitySet::Gaussian, 0.01).unwrap() - 2.32635).abs() < 1e-5
        );
        assert!(matches!(
            inverse_cdf_bound(AmbiguitySet::Dro, 0.0),
            Err(DrccError::InvalidRisk(_))
        ));
        assert!(matches!(
            inverse_cdf_bound(AmbiguitySet::Dro, 1.0),
            Err(DrccError::InvalidRisk(_))
        ));
    }

    #[test]
    fn unimodal_branches_meet() {
        let eps: f64 = 1.0 / 6.0;
        let low = (4.0 / (9.0 * eps) - 1.0).sqrt();
        let high = (3.0 * (1.0 - eps) / (1.0 + 3.0 * eps)).sqrt();
        assert!((low - high).abs() < 1e-12);
        let at = inverse_cdf_bound(AmbiguitySet::Unimodal, eps).unwrap();
        assert!((at - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn quantile_factor_orderings() {
        for k in 1..250 {
            let eps = k as f64 / 500.0;
            let g = inverse_cdf_bound(AmbiguitySet::Gaussian, eps).unwrap();
            let u = inverse_cdf_bound(AmbiguitySet::Unimodal, eps).unwrap();
            let d = inverse_cdf_bound(AmbiguitySet::Dro, eps).unwrap();
            assert!(d >= u && u >= g, "ordering fails at eps={eps}");
        }
        for set in [AmbiguitySet::Gaussian, AmbiguitySet::Unimodal, AmbiguitySet::Dro] {
            let mut prev = f64::INFINITY;
            for k in 1..100 {
                let eps = k as f64 / 100.0;
                let v = inverse_cdf_bound(set, eps).unwrap();
                assert!(v < prev, "{set:?} not decreasing at eps={eps}");
                prev = v;
            }
        }
    }

    #[test]
    fn moment_aggregation() {
        let fleets = two_symmetric();
        let (mu, sd) = delta_moments(&fleets, 0.09);
        assert!(mu.abs() < 1e-15);
        assert!((sd - 2.0f64.sqrt() * 0.002).abs() < 1e-12);
        assert!((sd - 0.0028284).abs() < 1e-7);

        let still = FleetUncertainty {
            sigma: 0.0,
            ..fleets[0]
        };
        assert_eq!(delta_moments(&[still, still], 0.09).1, 0.0);
        assert_eq!(delta_moments(&[fleets[0]], 0.0).1, 1e-5 * 200.0);
    }

    #[test]
    fn joint_capacity_examples() {
        let fleets = two_symmetric();
        let cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Joint);
        let cap = max_joint_schedulable(&fleets, &cfg);
        assert!((cap - 0.061858).abs() < 1e-6);

        let certain: Vec<_> = fleets
            .iter()
            .map(|f| FleetUncertainty { sigma: 0.0, ..*f })
            .collect();
        assert!((max_joint_schedulable(&certain, &cfg) - 0.09).abs() < 1e-15);

        let hopeless = FleetUncertainty {
            g: 1e-5,
            n0: 100.0,
            mu: 0.0,
            sigma: 5000.0,
        };
        assert_eq!(max_joint_schedulable(&[hopeless], &cfg), 0.0);
    }

    #[test]
    fn individual_examples() {
        let fleets = two_symmetric();
        let cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Individual);
        let one = individual_limit(&fleets[0], &cfg);
        assert!((one - 0.0251003).abs() < 1e-7);
        let total: f64 = fleets.iter().map(|f| individual_limit(f, &cfg)).sum();
        assert!((total - 0.0502006).abs() < 2e-7);
        let joint = max_joint_schedulable(&fleets, &cfg);
        assert!(total <= joint);

        let certain = FleetUncertainty {
            sigma: 0.0,
            ..fleets[0]
        };
        assert!((individual_limit(&certain, &cfg) - 0.045).abs() < 1e-15);
    }

    #[test]
    fn improvement_examples() {
        let fleets = two_symmetric();
        let cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Joint);
        let gain = joint_improvement(&fleets, &cfg);
        // quoted value carries rounded intermediates; exact is 0.0116570029
        assert!((gain - 0.0116573).abs() < 5e-7);
        let indiv_cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Individual);
        let indiv: f64 = fleets.iter().map(|f| individual_limit(f, &indiv_cfg)).sum();
        assert!((max_joint_schedulable(&fleets, &cfg) - indiv - gain).abs() < 1e-12);
        assert_eq!(joint_improvement(&fleets[..1], &cfg), 0.0);
        let certain: Vec<_> = fleets
            .iter()
            .map(|f| FleetUncertainty { sigma: 0.0, ..*f })
            .collect();
        assert_eq!(joint_improvement(&certain, &cfg), 0.0);
    }

    #[test]
    fn improvement_identity_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = config(AmbiguitySet::Unimodal, 0.05, SchedulingMode::Joint);
        for _ in 0..500 {
            let k = rng.random_range(1..=6);
            let fleets: Vec<FleetUncertainty> = (0..k)
                .map(|_| FleetUncertainty {
                    g: rng.random_range(0.0..2e-5),
                    n0: rng.random_range(0.0..20000.0),
                    mu: rng.random_range(-1000.0..1000.0),
                    sigma: rng.random_range(0.0..500.0),
                })
                .map(|f| FleetUncertainty {
                    mu: f.mu.max(-f.n0),
                    ..f
                })
                .collect();
            let gain = joint_improvement(&fleets, &cfg);
            assert!(gain >= -1e-12);
            let joint = max_joint_schedulable(&fleets, &cfg);
            let indiv: f64 = fleets.iter().map(|f| individual_limit(f, &cfg)).sum();
            let f_inv = inverse_cdf_bound(cfg.ambiguity, cfg.risk.epsilon()).unwrap();
            let unclamped = fleets
                .iter()
                .all(|f| f.g * (f.n0 + f.mu) - f_inv * f.g * f.sigma >= 0.0);
            let (neg_mean, sd) = delta_moments(&fleets, 0.0);
            if unclamped && -neg_mean - f_inv * sd >= 0.0 {
                assert!((joint - indiv - gain).abs() < 1e-9);
                assert!(joint + 1e-12 >= indiv);
            }
        }
    }

    #[test]
    fn joint_capacity_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = config(AmbiguitySet::Dro, 0.1, SchedulingMode::Joint);
        for _ in 0..200 {
            let fleets: Vec<FleetUncertainty> = (0..3)
                .map(|_| FleetUncertainty {
                    g: rng.random_range(0.0..2e-5),
                    n0: rng.random_range(100.0..20000.0),
                    mu: 0.0,
                    sigma: rng.random_range(0.0..500.0),
                })
                .collect();
            let base = max_joint_schedulable(&fleets, &cfg);
            let mut wider = fleets.clone();
            wider[1].sigma += 100.0;
            assert!(max_joint_schedulable(&wider, &cfg) <= base + 1e-15);
            let mut bigger = fleets.clone();
            bigger[2].n0 += 500.0;
            assert!(max_joint_schedulable(&bigger, &cfg) >= base - 1e-15);
        }
    }

    fn maximize_r_bar(
        build: impl FnOnce(&mut ConicProgram, VarId) -> ConstraintHandles,
    ) -> (f64, Vec<f64>) {
        let mut prog = ConicProgram::new();
        let r_bar = prog.add_var("r_bar", 0.0, f64::INFINITY);
        let handles = build(&mut prog, r_bar);
        prog.set_objective(LinExpr::term(r_bar, -1.0));
        let sol = solve_mixed(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let bs = handles.relax.iter().map(|b| sol.x[b.index()]).collect();
        (sol.x[r_bar.index()], bs)
    }

    #[test]
    fn joint_rows_reach_closed_form() {
        let fleets = two_symmetric();
        let mut cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Joint);
        let g_max = [2e-5, 2e-5];
        let (m1, m2) = big_m_values(&fleets, &g_max, cfg.ambiguity, cfg.risk);
        cfg.big_m1 = m1;
        cfg.big_m2 = m2;
        let terms: Vec<FleetTerm> = fleets.iter().map(FleetTerm::fixed).collect();
        let (r, bs) = maximize_r_bar(|prog, r_bar| {
            joint_constraint_rows(prog, &terms, r_bar, &cfg).unwrap()
        });
        assert!((r - 0.061858).abs() < 1e-6);
        // expected count dominates the spread, so no relaxation binary
        assert!(bs.is_empty());
    }

    #[test]
    fn joint_rows_degenerate_and_clamped() {
        let mut cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Joint);
        let certain: Vec<FleetUncertainty> = two_symmetric()
            .iter()
            .map(|f| FleetUncertainty { sigma: 0.0, ..*f })
            .collect();
        let (m1, m2) = big_m_values(&certain, &[2e-5, 2e-5], cfg.ambiguity, cfg.risk);
        cfg.big_m1 = m1.max(1e-6);
        cfg.big_m2 = m2;
        let terms: Vec<FleetTerm> = certain.iter().map(FleetTerm::fixed).collect();
        let (r, _) = maximize_r_bar(|prog, r_bar| {
            joint_constraint_rows(prog, &terms, r_bar, &cfg).unwrap()
        });
        assert!((r - 0.09).abs() < 1e-7);

        let hopeless = vec![FleetUncertainty {
            g: 1e-5,
            n0: 100.0,
            mu: 0.0,
            sigma: 5000.0,
        }];
        let (m1, m2) = big_m_values(&hopeless, &[2e-5], cfg.ambiguity, cfg.risk);
        cfg.big_m1 = m1;
        cfg.big_m2 = m2;
        let terms: Vec<FleetTerm> = hopeless.iter().map(FleetTerm::fixed).collect();
        let (r, bs) = maximize_r_bar(|prog, r_bar| {
            joint_constraint_rows(prog, &terms, r_bar, &cfg).unwrap()
        });
        assert!(r.abs() < 1e-7);
        assert!(bs[0] > 0.5);
    }

    #[test]
    fn individual_rows_match_limits() {
        let fleets = vec![
            FleetUncertainty {
                g: 1e-5,
                n0: 5000.0,
                mu: -500.0,
                sigma: 200.0,
            },
            FleetUncertainty {
                g: 1e-5,
                n0: 100.0,
                mu: 0.0,
                sigma: 5000.0,
            },
        ];
        let mut cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Individual);
        let (m1, m2) = big_m_values(&fleets, &[2e-5, 2e-5], cfg.ambiguity, cfg.risk);
        cfg.big_m1 = m1;
        cfg.big_m2 = m2;
        let expect: f64 = fleets.iter().map(|f| individual_limit(f, &cfg)).sum();
        let terms: Vec<FleetTerm> = fleets.iter().map(FleetTerm::fixed).collect();
        let (r, bs) = maximize_r_bar(|prog, r_bar| {
            individual_constraint_rows(prog, &terms, r_bar, &cfg).unwrap()
        });
        assert!((r - expect).abs() < 1e-7);
        // the wide-spread fleet reduces to a zero schedule, binary-free
        assert!(bs.is_empty());
        assert!(individual_limit(&fleets[1], &cfg) == 0.0);
    }

    #[test]
    fn single_fleet_joint_equals_individual() {
        let fleet = FleetUncertainty {
            g: 1e-5,
            n0: 5000.0,
            mu: -500.0,
            sigma: 200.0,
        };
        let joint_cfg = config(AmbiguitySet::Unimodal, 0.01, SchedulingMode::Joint);
        let indiv_cfg = config(AmbiguitySet::Unimodal, 0.01, SchedulingMode::Individual);
        assert!(
            (max_joint_schedulable(&[fleet], &joint_cfg)
                - individual_limit(&fleet, &indiv_cfg))
            .abs()
                < 1e-15
        );
    }

    #[test]
    fn mode_guards() {
        let cfg = config(AmbiguitySet::Dro, 0.01, SchedulingMode::Individual);
        let mut prog = ConicProgram::new();
        let r_bar = prog.add_var("r_bar", 0.0, 1.0);
        let terms = [FleetTerm::fixed(&two_symmetric()[0])];
        assert!(matches!(
            joint_constraint_rows(&mut prog, &terms, r_bar, &cfg),
            Err(DrccError::WrongMode(SchedulingMode::Individual))
        ));
        let cfg = config(AmbiguitySet::Gaussian, 0.7, SchedulingMode::Joint);
        assert!(matches!(
            joint_constraint_rows(&mut prog, &terms, r_bar, &cfg),
            Err(DrccError::NonpositiveQuantile(_))
        ));
    }

    /// Empirical violation frequency of the schedule r_bar against sampled
    /// connected counts.
    fn violation_rate(
        fleets: &[FleetUncertainty],
        r_bar: f64,
        n: usize,
        mut draw: impl FnMut(&FleetUncertainty, &mut ChaCha8Rng) -> f64,
    ) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut violations = 0usize;
        for _ in 0..n {
            let cap: f64 = fleets
                .iter()
                .map(|f| f.g * (f.n0 + draw(f, &mut rng)))
                .sum();
            if cap < r_bar {
                violations += 1;
            }
        }
        violations as f64 / n as f64
    }

    #[test]
    fn sampled_soundness_dro() {
        let fleets = two_symmetric();
        let eps = 0.05;
        let cfg = config(AmbiguitySet::Dro, eps, SchedulingMode::Joint);
        let r_bar = max_joint_schedulable(&fleets, &cfg);
        let n = 1_000_000;
        let slack = 3.0 * (eps * (1.0 - eps) / n as f64).sqrt();

        let gauss = |f: &FleetUncertainty, rng: &mut ChaCha8Rng| {
            f.mu + f.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        };
        let shifted_exp = |f: &FleetUncertainty, rng: &mut ChaCha8Rng| {
            f.mu - f.sigma + f.sigma * <Exp1 as Distribution<f64>>::sample(&Exp1, rng)
        };
        let two_point = |f: &FleetUncertainty, rng: &mut ChaCha8Rng| {
            if rng.random::<bool>() {
                f.mu + f.sigma
            } else {
                f.mu - f.sigma
            }
        };
        assert!(violation_rate(&fleets, r_bar, n, gauss) <= eps + slack);
        assert!(violation_rate(&fleets, r_bar, n, shifted_exp) <= eps + slack);
        assert!(violation_rate(&fleets, r_bar, n, two_point) <= eps + slack);
    }

    #[test]
    fn sampled_soundness_unimodal() {
        let fleets = two_symmetric();
        let eps = 0.05;
        let cfg = config(AmbiguitySet::Unimodal, eps, SchedulingMode::Joint);
        let r_bar = max_joint_schedulable(&fleets, &cfg);
        let n = 1_000_000;
        let slack = 3.0 * (eps * (1.0 - eps) / n as f64).sqrt();

        let gauss = |f: &FleetUncertainty, rng: &mut ChaCha8Rng| {
            f.mu + f.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        };
        let uniform = |f: &FleetUncertainty, rng: &mut ChaCha8Rng| {
            f.mu + f.sigma * 3.0f64.sqrt() * rng.random_range(-1.0..1.0)
        };
        assert!(violation_rate(&fleets, r_bar, n, gauss) <= eps + slack);
        assert!(violation_rate(&fleets, r_bar, n, uniform) <= eps + slack);
    }

    #[test]
    fn gaussian_tightness() {
        let fleets = two_symmetric();
        let eps = 0.01;
        let cfg = config(AmbiguitySet::Gaussian, eps, SchedulingMode::Joint);
        let r_bar = max_joint_schedulable(&fleets, &cfg);
        let n = 1_000_000;
        let gauss = |f: &FleetUncertainty, rng: &mut ChaCha8Rng| {
            f.mu + f.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        };
        let rate = violation_rate(&fleets, r_bar, n, gauss);
        let noise = 4.0 * (eps * (1.0 - eps) / n as f64).sqrt();
        assert!((rate - eps).abs() <= noise, "rate {rate} vs eps {eps}");
    }

    #[test]
    fn fleet_validation() {
        let bad = FleetUncertainty {
            g: 1e-5,
            n0: 100.0,
            mu: -200.0,
            sigma: 10.0,
        };
        assert!(bad.validate().is_err());
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.0).is_err());
        assert!(RiskLevel::new(0.5).is_ok());
    }
}
