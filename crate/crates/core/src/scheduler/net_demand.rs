//! Seeded synthetic net-demand process: an AR(1) wind load factor, a
//! clamped diurnal solar sinusoid, and a deterministic demand profile.
//! Forecast quantiles come from the conditional distribution of the AR
//! state, so they are exact for the process being simulated.

use super::tree::{Forecast, HourPoint};
use super::SchedError;
use crate::stats::normal_quantile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const WIND_MEAN_FACTOR: f64 = 0.35;
const WIND_FACTOR_CAP: f64 = 0.7;
/// Peak of the solar sinusoid; its daytime average is 11% of capacity.
const SOLAR_PEAK_FACTOR: f64 = 0.11 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetDemandParams {
    /// GW installed.
    pub wind_capacity: f64,
    /// GW installed.
    pub solar_capacity: f64,
    /// GW at the overnight trough.
    pub demand_base: f64,
    /// GW between trough and evening peak.
    pub demand_swing: f64,
    /// Hour-to-hour autocorrelation of the wind factor.
    pub phi: f64,
    /// Standard deviation of the hourly wind-factor innovation.
    pub noise: f64,
}

impl NetDemandParams {
    pub fn validate(&self) -> Result<(), SchedError> {
        let vals = [
            self.wind_capacity,
            self.solar_capacity,
            self.demand_base,
            self.demand_swing,
            self.phi,
            self.noise,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(SchedError::InvalidConfig("net_demand: non-finite field".into()));
        }
        if self.wind_capacity < 0.0 || self.solar_capacity < 0.0 {
            return Err(SchedError::InvalidConfig(
                "net_demand: capacities must be nonnegative".into(),
            ));
        }
        if self.demand_base < 0.0 || self.demand_swing < 0.0 {
            return Err(SchedError::InvalidConfig(
                "net_demand: demand must be nonnegative".into(),
            ));
        }
        if !(0.0 <= self.phi && self.phi < 1.0) {
            return Err(SchedError::InvalidConfig("net_demand: need 0 <= phi < 1".into()));
        }
        if self.noise < 0.0 {
            return Err(SchedError::InvalidConfig(
                "net_demand: noise must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// The process state: the current hour index and its realized wind-factor
/// deviation from the long-run mean.
#[derive(Debug, Clone)]
pub struct NetDemandModel {
    params: NetDemandParams,
    hour: usize,
    z: f64,
    rng: ChaCha8Rng,
}

impl NetDemandModel {
    pub fn new(params: NetDemandParams, seed: u64) -> Result<Self, SchedError> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stationary_sd = if params.noise == 0.0 {
            0.0
        } else {
            params.noise / (1.0 - params.phi * params.phi).sqrt()
        };
        let draw: f64 = StandardNormal.sample(&mut rng);
        Ok(NetDemandModel {
            params,
            hour: 0,
            z: stationary_sd * draw,
            rng,
        })
    }

    pub fn hour(&self) -> usize {
        self.hour
    }

    pub fn params(&self) -> &NetDemandParams {
        &self.params
    }

    fn wind_factor(z: f64) -> f64 {
        (WIND_MEAN_FACTOR + z).clamp(0.0, WIND_FACTOR_CAP)
    }

    fn solar_factor(hour: usize) -> f64 {
        let h = (hour % 24) as f64;
        SOLAR_PEAK_FACTOR * (PI * (h - 6.0) / 12.0).sin().max(0.0)
    }

    fn demand_at(&self, hour: usize) -> f64 {
        let h = (hour % 24) as f64;
        self.params.demand_base
            + self.params.demand_swing * 0.5 * (1.0 - (2.0 * PI * (h - 4.0) / 24.0).cos())
    }

    fn point(&self, hour: usize, z: f64) -> HourPoint {
        HourPoint {
            demand: self.demand_at(hour),
            wind: self.params.wind_capacity * Self::wind_factor(z),
            solar: self.params.solar_capacity * Self::solar_factor(hour),
        }
    }

    /// The realized values of the current hour.
    pub fn current_point(&self) -> HourPoint {
        self.point(self.hour, self.z)
    }

    /// Exact conditional quantiles of each of the next `horizon` hours,
    /// rooted at the current realization.
    pub fn forecast(&self, quantiles: &[f64], horizon: usize) -> Forecast {
        let phi = self.params.phi;
        let noise = self.params.noise;
        let mut branches = vec![Vec::with_capacity(horizon); quantiles.len()];
        let mut mean = self.z;
        let mut var = 0.0;
        for tau in 1..=horizon {
            mean *= phi;
            // var accumulates noise^2 * (1 + phi^2 + ... + phi^(2(tau-1)))
            var = var * phi * phi + noise * noise;
            let sd = var.sqrt();
            for (k, q) in quantiles.iter().enumerate() {
                let zq = mean + sd * normal_quantile(*q);
                branches[k].push(self.point(self.hour + tau, zq));
            }
        }
        Forecast {
            root: self.current_point(),
            branches,
        }
    }

    /// Step to the next hour, drawing its wind-factor deviation.
    pub fn advance(&mut self) {
        let draw: f64 = StandardNormal.sample(&mut self.rng);
        self.z = self.params.phi * self.z + self.params.noise * draw;
        self.hour += 1;
    }
}

/// Realized hourly series of a fresh model, for fixtures and reports.
pub fn synthetic_series(
    params: NetDemandParams,
    seed: u64,
    hours: usize,
) -> Result<Vec<HourPoint>, SchedError> {
    let mut model = NetDemandModel::new(params, seed)?;
    let mut out = Vec::with_capacity(hours);
    for _ in 0..hours {
        out.push(model.current_point());
        model.advance();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NetDemandParams {
        NetDemandParams {
            wind_capacity: 3.0,
            solar_capacity: 2.0,
            demand_base: 4.0,
            demand_swing: 2.0,
            phi: 0.97,
            noise: 0.05,
        }
    }

    #[test]
    fn long_run_load_factors() {
        let series = synthetic_series(params(), 7, 24_000).unwrap();
        let wind_mean =
            series.iter().map(|p| p.wind).sum::<f64>() / (series.len() as f64 * 3.0);
        let solar_mean =
            series.iter().map(|p| p.solar).sum::<f64>() / (series.len() as f64 * 2.0);
        assert!((wind_mean - 0.35).abs() < 0.02, "wind mean {wind_mean}");
        assert!((solar_mean - 0.11).abs() < 0.02, "solar mean {solar_mean}");
        for p in &series {
            assert!(p.wind >= 0.0 && p.wind <= 3.0 * 0.7 + 1e-12);
            assert!(p.solar >= 0.0);
        }
    }

    #[test]
    fn demand_profile_shape() {
        let model = NetDemandModel::new(params(), 0).unwrap();
        let demands: Vec<f64> = (0..24).map(|h| model.demand_at(h)).collect();
        let min = demands.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = demands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((demands[4] - min).abs() < 1e-12);
        assert!((demands[16] - max).abs() < 1e-12);
        assert!((min - 4.0).abs() < 1e-12);
        assert!((max - 6.0).abs() < 1e-12);
        // solar peaks at noon and is dark at night
        assert_eq!(NetDemandModel::solar_factor(0), 0.0);
        assert!((NetDemandModel::solar_factor(12) - 0.11 * PI).abs() < 1e-12);
    }

    #[test]
    fn quantile_branches_are_ordered() {
        let model = NetDemandModel::new(params(), 3).unwrap();
        let qs = [0.005, 0.1, 0.3, 0.5, 0.7, 0.9, 0.995];
        let fc = model.forecast(&qs, 24);
        assert_eq!(fc.branches.len(), 7);
        for tau in 0..24 {
            for k in 1..7 {
                assert!(fc.branches[k][tau].wind >= fc.branches[k - 1][tau].wind);
                assert_eq!(fc.branches[k][tau].demand, fc.branches[k - 1][tau].demand);
                assert_eq!(fc.branches[k][tau].solar, fc.branches[k - 1][tau].solar);
            }
        }
    }

    #[test]
    fn zero_noise_collapses_branches() {
        let mut p = params();
        p.noise = 0.0;
        let model = NetDemandModel::new(p, 9).unwrap();
        let fc = model.forecast(&[0.1, 0.5, 0.9], 6);
        for tau in 0..6 {
            assert_eq!(fc.branches[0][tau], fc.branches[1][tau]);
            assert_eq!(fc.branches[1][tau], fc.branches[2][tau]);
            assert!((fc.branches[0][tau].wind - 3.0 * 0.35).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_reproducibility() {
        let a = synthetic_series(params(), 42, 200).unwrap();
        let b = synthetic_series(params(), 42, 200).unwrap();
        let c = synthetic_series(params(), 43, 200).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_params_rejected() {
        let mut p = params();
        p.phi = 1.0;
        assert!(NetDemandModel::new(p, 0).is_err());
        let mut p = params();
        p.noise = -0.1;
        assert!(NetDemandModel::new(p, 0).is_err());
    }
}
