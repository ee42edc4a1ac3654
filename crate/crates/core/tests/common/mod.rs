//! Shared toy system: a small GB-flavored mix with three thermal classes,
//! two stores, and two EV fleets with diurnal connectivity.

use fleetfr_core::drcc::{AmbiguitySet, SchedulingMode};
use fleetfr_core::freq::FrequencyParams;
use fleetfr_core::scheduler::{
    DrccSettings, FleetHourData, FleetSpec, GeneratorClass, NetDemandParams, SchedulerState,
    StorageUnit, SystemConfig,
};
use std::f64::consts::PI;

pub fn toy_system() -> SystemConfig {
    SystemConfig {
        generators: vec![
            GeneratorClass {
                name: "nuclear".into(),
                count_available: 4.0,
                p_max: 0.9,
                p_min_stable: 0.72,
                no_load_cost: 900.0,
                marginal_cost: 10.0,
                startup_cost: 120_000.0,
                startup_time: 24.0,
                min_up_time: 24.0,
                inertia_constant: 5.0,
                max_slow_fr: 0.0,
            },
            GeneratorClass {
                name: "ccgt".into(),
                count_available: 10.0,
                p_max: 0.5,
                p_min_stable: 0.25,
                no_load_cost: 600.0,
                marginal_cost: 47.0,
                startup_cost: 15_000.0,
                startup_time: 4.0,
                min_up_time: 4.0,
                inertia_constant: 5.0,
                max_slow_fr: 0.05,
            },
            GeneratorClass {
                name: "ocgt".into(),
                count_available: 10.0,
                p_max: 0.12,
                p_min_stable: 0.03,
                no_load_cost: 80.0,
                marginal_cost: 140.0,
                startup_cost: 2_000.0,
                startup_time: 1.0,
                min_up_time: 1.0,
                inertia_constant: 4.0,
                max_slow_fr: 0.04,
            },
        ],
        storage: vec![
            StorageUnit {
                name: "battery".into(),
                capacity: 1.0,
                rate: 0.3,
                max_fast_fr: 0.3,
                max_slow_fr: 0.3,
                efficiency: 0.9,
            },
            StorageUnit {
                name: "pumped".into(),
                capacity: 6.0,
                rate: 1.0,
                max_fast_fr: 0.2,
                max_slow_fr: 0.8,
                efficiency: 0.75,
            },
        ],
        fleets: vec![
            FleetSpec {
                name: "home".into(),
                params: fleetfr_core::fleet::FleetParams {
                    charger_power_max: 7e-6,
                    eta: 0.95,
                    e_in: 3.5e-5,
                    e_out: 4.5e-5,
                    e_cap: 6e-5,
                },
            },
            FleetSpec {
                name: "commercial".into(),
                params: fleetfr_core::fleet::FleetParams {
                    charger_power_max: 1.1e-5,
                    eta: 0.95,
                    e_in: 3e-5,
                    e_out: 4e-5,
                    e_cap: 7e-5,
                },
            },
        ],
        frequency: FrequencyParams {
            f0: 50.0,
            delta_f_max: 0.8,
            rocof_max: 1.0,
            t1: 1.0,
            t2: 10.0,
            t_del: 0.5,
        },
        drcc: DrccSettings {
            ambiguity: AmbiguitySet::Dro,
            epsilon: 0.01,
            mode: SchedulingMode::Joint,
        },
        quantiles: vec![0.005, 0.1, 0.3, 0.5, 0.7, 0.9, 0.995],
        load_shed_cost: 30_000.0,
        net_demand: NetDemandParams {
            wind_capacity: 3.0,
            solar_capacity: 2.0,
            demand_base: 4.0,
            demand_swing: 2.0,
            phi: 0.97,
            noise: 0.05,
        },
        largest_loss_floor: 0.5,
    }
}

fn home_count(hour: usize) -> f64 {
    let h = (hour % 24) as f64;
    30_000.0 + 30_000.0 * (1.0 + (2.0 * PI * (h - 2.0) / 24.0).cos()) / 2.0
}

fn commercial_count(hour: usize) -> f64 {
    let h = (hour % 24) as f64;
    12_000.0 + 8_000.0 * (1.0 + (2.0 * PI * (h - 14.0) / 24.0).cos()) / 2.0
}

fn series_from_profile(
    profile: impl Fn(usize) -> f64,
    hours: usize,
    sigma_frac: f64,
) -> Vec<FleetHourData> {
    (0..hours)
        .map(|h| {
            let n0 = profile(h);
            let delta = profile(h + 1) - n0;
            FleetHourData {
                n0,
                mu: 0.5 * delta,
                sigma: sigma_frac * n0,
                n_in: delta.max(0.0),
                n_out: (-delta).max(0.0),
            }
        })
        .collect()
}

/// Diurnal connectivity for both fleets, chain-consistent hour to hour.
pub fn fleet_profiles(hours: usize) -> Vec<Vec<FleetHourData>> {
    vec![
        series_from_profile(home_count, hours, 0.02),
        series_from_profile(commercial_count, hours, 0.02),
    ]
}

/// The same profiles with the spread zeroed out.
pub fn certain_fleet_profiles(hours: usize) -> Vec<Vec<FleetHourData>> {
    vec![
        series_from_profile(home_count, hours, 0.0),
        series_from_profile(commercial_count, hours, 0.0),
    ]
}

pub fn initial_state(cfg: &SystemConfig, series: &[Vec<FleetHourData>]) -> SchedulerState {
    let n0: Vec<f64> = series.iter().map(|s| s[0].n0).collect();
    SchedulerState::steady(cfg, cfg.net_demand.demand_base + 0.5, &n0)
}
