//! Hourly rolling horizon: solve the tree, implement the root decisions
//! against the realized hour, correct any imbalance, carry the state.

use super::problem::{assemble_problem, recompute_objective, solve_horizon};
use super::tree::build_tree;
use super::{FleetHourData, NetDemandModel, SchedError, SchedulerState, SystemConfig};
use crate::drcc::{FleetUncertainty, SchedulingMode};
use crate::fleet::{soc_update, FleetDecision, FleetError, FleetState};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Imbalances below this (GW) are solver noise and are not acted on.
const REBALANCE_DEADBAND: f64 = 1e-7;
/// Bound overshoots below this (GWh) are clamped silently.
const STATE_SLACK: f64 = 1e-6;

/// One implemented hour, in the fixed log column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub hour: usize,
    pub cost: f64,
    pub load_shed_gwh: f64,
    pub wind_curt_gwh: f64,
    pub solar_curt_gwh: f64,
    pub inertia_gws: f64,
    pub r_ev_sched_gw: f64,
    pub mode: SchedulingMode,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperationLog {
    pub rows: Vec<LogRow>,
}

impl OperationLog {
    pub fn total_cost(&self) -> f64 {
        self.rows.iter().map(|r| r.cost).sum()
    }

    pub fn total_shed_gwh(&self) -> f64 {
        self.rows.iter().map(|r| r.load_shed_gwh).sum()
    }

    pub fn total_curtailed_gwh(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.wind_curt_gwh + r.solar_curt_gwh)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SchedError> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SchedError> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            rows.push(rec.map_err(csv_err)?);
        }
        Ok(OperationLog { rows })
    }
}

fn csv_err(e: csv::Error) -> SchedError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SchedError::Io(io),
        other => SchedError::InvalidConfig(format!("csv: {other:?}")),
    }
}

/// Everything the validator needs about one implemented hour beyond the
/// operation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourDetail {
    pub hour: usize,
    pub r_nd: f64,
    pub r_g: f64,
    pub r_ev: f64,
    pub pl: f64,
    pub inertia: f64,
    /// Implemented per-EV headroom and count moments, one per fleet.
    pub fleets: Vec<FleetUncertainty>,
    pub objective: f64,
    pub recomputed_objective: f64,
    pub gap: f64,
    pub balance_residual: f64,
    pub fallback: bool,
}

/// A finished rolling run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub log: OperationLog,
    pub details: Vec<HourDetail>,
    pub final_state: SchedulerState,
}

/// Imbalance corrections, cheapest lever first. Curtailment fields are
/// additional spill (positive) or released spill (negative); storage
/// entries are additional net charging power per unit; `shed` is extra
/// unserved load. `residual` is whatever no lever could absorb.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalance {
    pub wind_curt: f64,
    pub solar_curt: f64,
    pub storage: Vec<f64>,
    pub shed: f64,
    pub residual: f64,
}

/// Settle a realized surplus (positive) or deficit (negative) against the
/// merit order: renewables, then storage, then load shed.
pub fn rebalance(
    imbalance: f64,
    wind_headroom: f64,
    wind_release: f64,
    solar_headroom: f64,
    solar_release: f64,
    storage_charge_headroom: &[f64],
    storage_discharge_headroom: &[f64],
    shed_headroom: f64,
) -> Rebalance {
    let mut out = Rebalance {
        wind_curt: 0.0,
        solar_curt: 0.0,
        storage: vec![0.0; storage_charge_headroom.len()],
        shed: 0.0,
        residual: 0.0,
    };
    if imbalance > 0.0 {
        let mut left = imbalance;
        let w = left.min(wind_headroom.max(0.0));
        out.wind_curt = w;
        left -= w;
        let s = left.min(solar_headroom.max(0.0));
        out.solar_curt = s;
        left -= s;
        for (slot, head) in out.storage.iter_mut().zip(storage_charge_headroom) {
            let take = left.min(head.max(0.0));
            *slot = take;
            left -= take;
        }
        out.residual = left;
    } else if imbalance < 0.0 {
        let mut left = -imbalance;
        let w = left.min(wind_release.max(0.0));
        out.wind_curt = -w;
        left -= w;
        let s = left.min(solar_release.max(0.0));
        out.solar_curt = -s;
        left -= s;
        for (slot, head) in out.storage.iter_mut().zip(storage_discharge_headroom) {
            let take = left.min(head.max(0.0));
            *slot = -take;
            left -= take;
        }
        let shed = left.min(shed_headroom.max(0.0));
        out.shed = shed;
        left -= shed;
        out.residual = -left;
    }
    out
}

fn clamped_fleet_step(
    f: &crate::fleet::FleetParams,
    st: &FleetState,
    d: f64,
    c: f64,
    data: &FleetHourData,
) -> Result<FleetState, SchedError> {
    let rating = f.charger_power_max;
    let decision = FleetDecision {
        d: d.clamp(0.0, rating),
        c: c.clamp(0.0, rating),
    };
    match soc_update(st, &decision, data.mu, data.n_in, data.n_out, f) {
        Ok(next) => Ok(next),
        Err(FleetError::SocOutOfBounds { energy, lo, hi }) => {
            let breach = (lo - energy).max(energy - hi);
            if breach <= STATE_SLACK {
                Ok(FleetState {
                    n_connected: st.n_connected + data.n_in - data.n_out,
                    energy: energy.clamp(lo, hi),
                })
            } else {
                Err(FleetError::SocOutOfBounds { energy, lo, hi }.into())
            }
        }
        Err(e) => Err(e.into()),
    }
}

/// Roll the scheduler forward hour by hour. `fleet_series` is indexed by
/// absolute hour and must cover `hours + lookahead`; the model supplies
/// realizations and forecasts. A failed solve falls back to Disabled mode
/// for that hour and is flagged in the detail record.
pub fn rolling_simulate(
    config: &SystemConfig,
    hours: usize,
    lookahead: usize,
    model: &mut NetDemandModel,
    fleet_series: &[Vec<FleetHourData>],
    mut state: SchedulerState,
) -> Result<RunRecord, SchedError> {
    config.validate()?;
    state.validate(config)?;
    if hours == 0 || lookahead == 0 {
        return Err(SchedError::InvalidConfig("hours and lookahead must be positive".into()));
    }
    if fleet_series.len() != config.fleets.len()
        || fleet_series.iter().any(|s| s.len() < hours + lookahead)
    {
        return Err(SchedError::BadFleetData("series must cover hours + lookahead"));
    }

    let mut log = OperationLog::default();
    let mut details = Vec::with_capacity(hours);

    for h in 0..hours {
        let forecast = model.forecast(&config.quantiles, lookahead);
        let tree = build_tree(config, &forecast)?;
        let window: Vec<Vec<FleetHourData>> = fleet_series
            .iter()
            .map(|s| s[h..=h + lookahead].to_vec())
            .collect();

        let mut mode_used = config.drcc.mode;
        let mut fallback = false;
        let solved = assemble_problem(&tree, config, &state, &window)
            .and_then(|(prog, map)| solve_horizon(&prog).map(|sol| (prog, map, sol)));
        let (prog, map, sol) = match solved {
            Ok(v) => v,
            Err(_) if config.drcc.mode != SchedulingMode::Disabled => {
                let mut relaxed = config.clone();
                relaxed.drcc.mode = SchedulingMode::Disabled;
                mode_used = SchedulingMode::Disabled;
                fallback = true;
                let (prog, map) = assemble_problem(&tree, &relaxed, &state, &window)?;
                let sol = solve_horizon(&prog)?;
                (prog, map, sol)
            }
            Err(e) => return Err(e),
        };

        let root = map.root_decision(config, &sol.x);
        let balance_residual = map.max_balance_residual(&prog, &sol.x);
        let recomputed = recompute_objective(&tree, config, &map, &sol.x);
        let real = model.current_point();

        // implemented net supply against the realized hour
        let thermal: f64 = root.p_g.iter().sum();
        let storage_net: f64 = root
            .st_dis
            .iter()
            .zip(&root.st_ch)
            .map(|(d, c)| d - c)
            .sum();
        let ev_net: f64 = root.fl_d.iter().zip(&root.fl_c).map(|(d, c)| d - c).sum();
        let mut wind_curt = root.wind_curt;
        let mut solar_curt = root.solar_curt;
        let mut shed = root.shed;
        let supply = thermal + storage_net + ev_net + (real.wind - wind_curt)
            + (real.solar - solar_curt)
            + shed;
        let imbalance = supply - real.demand;

        let mut storage_adjust = vec![0.0; config.storage.len()];
        if imbalance.abs() > REBALANCE_DEADBAND {
            let charge_head: Vec<f64> = config
                .storage
                .iter()
                .enumerate()
                .map(|(si, s)| {
                    let next_e = state.storage_energy[si] + s.efficiency * root.st_ch[si]
                        - root.st_dis[si] / s.efficiency;
                    (s.rate - (root.st_ch[si] - root.st_dis[si]))
                        .min((s.capacity - next_e).max(0.0) / s.efficiency)
                })
                .collect();
            let discharge_head: Vec<f64> = config
                .storage
                .iter()
                .enumerate()
                .map(|(si, s)| {
                    let next_e = state.storage_energy[si] + s.efficiency * root.st_ch[si]
                        - root.st_dis[si] / s.efficiency;
                    (s.rate - (root.st_dis[si] - root.st_ch[si]))
                        .min(next_e.max(0.0) * s.efficiency)
                })
                .collect();
            let rb = rebalance(
                imbalance,
                real.wind - wind_curt,
                wind_curt,
                real.solar - solar_curt,
                solar_curt,
                &charge_head,
                &discharge_head,
                real.demand - shed,
            );
            wind_curt += rb.wind_curt;
            solar_curt += rb.solar_curt;
            shed += rb.shed;
            storage_adjust = rb.storage;
            // unplaceable deficit is involuntary shed; unplaceable surplus
            // is spilled as curtailment
            if rb.residual < 0.0 {
                shed -= rb.residual;
            } else {
                wind_curt += rb.residual;
            }
        }

        let startup_cost: f64 = root
            .s_g
            .iter()
            .zip(&config.generators)
            .map(|(s, g)| s * g.startup_cost)
            .sum();
        let running_cost: f64 = root
            .n_g
            .iter()
            .zip(root.p_g.iter())
            .zip(&config.generators)
            .map(|((n, p), g)| n * g.no_load_cost + p * g.marginal_cost * 1000.0)
            .sum();
        let cost = running_cost + startup_cost + shed * config.load_shed_cost * 1000.0;

        log.rows.push(LogRow {
            hour: h,
            cost,
            load_shed_gwh: shed,
            wind_curt_gwh: wind_curt,
            solar_curt_gwh: solar_curt,
            inertia_gws: root.inertia,
            r_ev_sched_gw: root.r_ev,
            mode: mode_used,
        });

        let fleets_detail: Vec<FleetUncertainty> = config
            .fleets
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let data = &fleet_series[fi][h];
                let n_t = data.expected_count();
                let (d, c) = if n_t > 0.0 {
                    (root.fl_d[fi] / n_t, root.fl_c[fi] / n_t)
                } else {
                    (0.0, 0.0)
                };
                FleetUncertainty {
                    g: f.params.charger_power_max - d + c,
                    n0: data.n0,
                    mu: data.mu,
                    sigma: data.sigma,
                }
            })
            .collect();
        details.push(HourDetail {
            hour: h,
            r_nd: root.r_nd,
            r_g: root.r_g,
            r_ev: root.r_ev,
            pl: root.pl,
            inertia: root.inertia,
            fleets: fleets_detail,
            objective: sol.objective,
            recomputed_objective: recomputed,
            gap: sol.gap,
            balance_residual,
            fallback,
        });

        state.commitment = root.n_g.clone();
        for (si, s) in config.storage.iter().enumerate() {
            let ch = root.st_ch[si] + storage_adjust[si].max(0.0);
            let dis = root.st_dis[si] - storage_adjust[si].min(0.0);
            let e = state.storage_energy[si] + s.efficiency * ch - dis / s.efficiency;
            if e < -STATE_SLACK || e > s.capacity + STATE_SLACK {
                return Err(SchedError::BadState("storage energy left its bounds"));
            }
            state.storage_energy[si] = e.clamp(0.0, s.capacity);
        }
        for (fi, f) in config.fleets.iter().enumerate() {
            let data = &fleet_series[fi][h];
            let n_t = data.expected_count();
            let (d, c) = if n_t > 0.0 {
                (root.fl_d[fi] / n_t, root.fl_c[fi] / n_t)
            } else {
                (0.0, 0.0)
            };
            state.fleet[fi] = clamped_fleet_step(&f.params, &state.fleet[fi], d, c, data)?;
        }

        model.advance();
    }

    Ok(RunRecord {
        log,
        details,
        final_state: state,
    })
}
