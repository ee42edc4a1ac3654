//! One scheduling solve: lower the scenario tree into a conic program,
//! hand it to the mixed solver at the standard gap, and map values back.
//!
//! All powers are GW, energies GWh, inertia GW·s, costs pounds. Fleet
//! charging is modeled fleet-level (D_i, C_i in GW); per-EV rates divide
//! out by the expected connected count where needed.

use super::tree::ScenarioTree;
use super::{FleetHourData, SchedError, SchedulerState, SystemConfig};
use crate::drcc::{
    big_m_values, deterministic_constraint_rows, individual_constraint_rows,
    joint_constraint_rows, DrccConfig, FleetTerm, FleetUncertainty, SchedulingMode,
};
use crate::freq;
use fleetfr_conic::{solve_mixed, ConicProgram, LinExpr, RowId, Status, VarId, DEFAULT_GAP};

/// Cost coefficients are quoted per MWh while the model works in GWh.
const MWH_PER_GWH: f64 = 1000.0;
/// A committed count above this threshold makes the class's unit size a
/// candidate largest loss.
const COMMIT_THRESHOLD: f64 = 0.5;

/// Decision variables of one tree node.
pub struct NodeVars {
    pub n_g: Vec<VarId>,
    pub p_g: Vec<VarId>,
    pub s_g: Vec<VarId>,
    pub st_dis: Vec<VarId>,
    pub st_ch: Vec<VarId>,
    pub st_e: Vec<VarId>,
    pub fl_d: Vec<VarId>,
    pub fl_c: Vec<VarId>,
    pub fl_e: Vec<VarId>,
    pub r_nd: VarId,
    pub r_g: VarId,
    pub r_ev: VarId,
    pub pl: VarId,
    pub shed: VarId,
    pub wind_curt: VarId,
    pub solar_curt: VarId,
}

/// Where everything landed in the program, for extraction and checks.
pub struct ProblemMap {
    pub nodes: Vec<NodeVars>,
    /// Shared per-class commitment indicator, present only for classes
    /// whose unit size can set the largest loss.
    pub commit_flags: Vec<Option<VarId>>,
    pub balance_rows: Vec<RowId>,
    pub nadir_rows: Vec<RowId>,
    /// Chance-constraint relaxation binaries that survived presolve.
    pub relax_binaries: usize,
}

fn expected_counts_match(state: &SchedulerState, fleet_hours: &[Vec<FleetHourData>]) -> bool {
    state
        .fleet
        .iter()
        .zip(fleet_hours)
        .all(|(st, hours)| (st.n_connected - hours[0].n0).abs() <= 1e-6 * st.n_connected.max(1.0))
}

fn check_fleet_hours(
    config: &SystemConfig,
    fleet_hours: &[Vec<FleetHourData>],
    horizon: usize,
) -> Result<(), SchedError> {
    if fleet_hours.len() != config.fleets.len() {
        return Err(SchedError::BadFleetData("one series per fleet required"));
    }
    for hours in fleet_hours {
        if hours.len() <= horizon {
            return Err(SchedError::BadFleetData("series shorter than the horizon"));
        }
        for h in hours {
            h.validate()?;
        }
        for w in hours.windows(2) {
            let carried = w[0].next_count();
            if (w[1].n0 - carried).abs() > 1e-6 * carried.max(1.0) {
                return Err(SchedError::BadFleetData("counts do not chain hour to hour"));
            }
        }
    }
    Ok(())
}

/// Lower the tree into a conic program over the given starting state and
/// per-fleet connectivity series (indexed by lead hour).
pub fn assemble_problem(
    tree: &ScenarioTree,
    config: &SystemConfig,
    state: &SchedulerState,
    fleet_hours: &[Vec<FleetHourData>],
) -> Result<(ConicProgram, ProblemMap), SchedError> {
    config.validate()?;
    state.validate(config)?;
    if tree.is_empty() {
        return Err(SchedError::BadForecast("empty tree"));
    }
    let horizon = tree.horizon();
    check_fleet_hours(config, fleet_hours, horizon)?;
    if !expected_counts_match(state, fleet_hours) {
        return Err(SchedError::BadFleetData("hour-zero count disagrees with state"));
    }

    let fp = &config.frequency;
    let risk = config.drcc.risk()?;
    let mode = config.drcc.mode;
    let quarter = 1.0 / (4.0 * fp.delta_f_max);
    let y_scale = 1.0 / (2.0 * fp.delta_f_max.sqrt());
    let rocof_coeff = fp.f0 / (2.0 * fp.rocof_max);
    let fast_storage: f64 = config.storage.iter().map(|s| s.max_fast_fr).sum();
    let slow_storage: f64 = config.storage.iter().map(|s| s.max_slow_fr).sum();
    let h_available: f64 = config
        .generators
        .iter()
        .map(|g| g.count_available * g.inertia_constant * g.p_max)
        .sum();
    let floor_inertia = freq::min_inertia_for_rocof(config.largest_loss_floor, fp)?;
    if floor_inertia > h_available + 1e-9 {
        return Err(SchedError::StaticInfeasible(format!(
            "RoCoF needs more inertia than the {h_available} GWs installed"
        )));
    }
    let pl_hi = config
        .generators
        .iter()
        .filter(|g| g.count_available > 0.0)
        .map(|g| g.p_max)
        .fold(config.largest_loss_floor, f64::max);

    let mut prog = ConicProgram::new();

    let commit_flags: Vec<Option<VarId>> = config
        .generators
        .iter()
        .map(|g| {
            if g.count_available > COMMIT_THRESHOLD && g.p_max > config.largest_loss_floor {
                let u = prog.add_var(format!("commit_{}", g.name), 0.0, 1.0);
                prog.mark_binary(u);
                Some(u)
            } else {
                None
            }
        })
        .collect();

    let mut nodes: Vec<NodeVars> = Vec::with_capacity(tree.len());
    let mut balance_rows = Vec::with_capacity(tree.len());
    let mut nadir_rows = Vec::with_capacity(tree.len());
    let mut relax_binaries = 0;
    let mut objective = LinExpr::zero();

    for node in &tree.nodes {
        let t = node.id;
        let dt = node.delta_tau;
        let lead = node.lead;

        let n_g: Vec<VarId> = config
            .generators
            .iter()
            .map(|g| prog.add_var(format!("n{t}_{}", g.name), 0.0, g.count_available))
            .collect();
        let p_g: Vec<VarId> = config
            .generators
            .iter()
            .map(|g| {
                prog.add_var(
                    format!("p{t}_{}", g.name),
                    0.0,
                    g.count_available * g.p_max,
                )
            })
            .collect();
        let s_g: Vec<VarId> = config
            .generators
            .iter()
            .map(|g| prog.add_var(format!("s{t}_{}", g.name), 0.0, g.count_available))
            .collect();
        let st_dis: Vec<VarId> = config
            .storage
            .iter()
            .map(|s| prog.add_var(format!("dis{t}_{}", s.name), 0.0, s.rate))
            .collect();
        let st_ch: Vec<VarId> = config
            .storage
            .iter()
            .map(|s| prog.add_var(format!("ch{t}_{}", s.name), 0.0, s.rate))
            .collect();
        let st_e: Vec<VarId> = config
            .storage
            .iter()
            .map(|s| prog.add_var(format!("e{t}_{}", s.name), 0.0, s.capacity))
            .collect();
        let fl_d: Vec<VarId> = config
            .fleets
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let cap = fleet_hours[i][lead].expected_count() * f.params.charger_power_max;
                prog.add_var(format!("evd{t}_{}", f.name), 0.0, cap)
            })
            .collect();
        let fl_c: Vec<VarId> = config
            .fleets
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let cap = fleet_hours[i][lead].expected_count() * f.params.charger_power_max;
                prog.add_var(format!("evc{t}_{}", f.name), 0.0, cap)
            })
            .collect();
        let fl_e: Vec<VarId> = config
            .fleets
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let cap = fleet_hours[i][lead].next_count().max(0.0) * f.params.e_cap;
                prog.add_var(format!("eve{t}_{}", f.name), 0.0, cap)
            })
            .collect();
        let r_nd = prog.add_var(format!("rnd{t}"), 0.0, fast_storage);
        let r_g = prog.add_var(format!("rg{t}"), 0.0, f64::INFINITY);
        let r_ev = prog.add_var(format!("rev{t}"), 0.0, f64::INFINITY);
        let pl = prog.add_var(format!("pl{t}"), config.largest_loss_floor, pl_hi);
        let shed = prog.add_var(format!("shed{t}"), 0.0, node.point.demand);
        let wind_curt = prog.add_var(format!("wcurt{t}"), 0.0, node.point.wind);
        let solar_curt = prog.add_var(format!("scurt{t}"), 0.0, node.point.solar);

        // power balance: thermal + storage + fleets + renewables + shed = demand
        let mut balance = LinExpr::from(shed) - wind_curt - solar_curt;
        for &p in &p_g {
            balance += p;
        }
        for (&d, &c) in st_dis.iter().zip(&st_ch) {
            balance += LinExpr::from(d) - c;
        }
        for (&d, &c) in fl_d.iter().zip(&fl_c) {
            balance += LinExpr::from(d) - c;
        }
        balance_rows.push(prog.add_eq(
            balance,
            node.point.demand - node.point.wind - node.point.solar,
        ));

        for (gi, g) in config.generators.iter().enumerate() {
            prog.add_le(p_g[gi] - LinExpr::term(n_g[gi], g.p_max), 0.0);
            prog.add_ge(p_g[gi] - LinExpr::term(n_g[gi], g.p_min_stable), 0.0);

            let parent_n: LinExpr = match node.parent {
                None => LinExpr::constant(state.commitment[gi]),
                Some(p) => nodes[p].n_g[gi].into(),
            };
            prog.add_ge(LinExpr::from(s_g[gi]) - n_g[gi] + parent_n.clone(), 0.0);
            let ramp = g.ramp_limit();
            if ramp.is_finite() {
                prog.add_le(n_g[gi] - parent_n.clone(), ramp * dt);
                prog.add_le(parent_n - LinExpr::from(n_g[gi]), ramp * dt);
            }
            if let Some(u) = commit_flags[gi] {
                prog.add_le(
                    n_g[gi] - LinExpr::term(u, g.count_available - COMMIT_THRESHOLD),
                    COMMIT_THRESHOLD,
                );
                prog.add_ge(pl - LinExpr::term(u, g.p_max), 0.0);
            }
        }

        for (si, s) in config.storage.iter().enumerate() {
            let parent_e: LinExpr = match node.parent {
                None => LinExpr::constant(state.storage_energy[si]),
                Some(p) => nodes[p].st_e[si].into(),
            };
            prog.add_eq(
                st_e[si] - parent_e
                    - LinExpr::term(st_ch[si], dt * s.efficiency)
                    + LinExpr::term(st_dis[si], dt / s.efficiency),
                0.0,
            );
            if lead == horizon {
                // windows end where they started so storage cannot be
                // silently drained across rolls
                prog.add_ge(LinExpr::from(st_e[si]), state.storage_energy[si]);
            }
        }

        for (fi, f) in config.fleets.iter().enumerate() {
            let data = &fleet_hours[fi][lead];
            let eta = f.params.eta;
            let parent_e: LinExpr = match node.parent {
                None => LinExpr::constant(state.fleet[fi].energy),
                Some(p) => nodes[p].fl_e[fi].into(),
            };
            prog.add_eq(
                fl_e[fi] - parent_e - LinExpr::term(fl_c[fi], dt * eta)
                    + LinExpr::term(fl_d[fi], dt / eta),
                data.n_in * f.params.e_in - data.n_out * f.params.e_out,
            );
            if lead == horizon {
                let churn: f64 = (0..horizon)
                    .map(|l| {
                        let d = &fleet_hours[fi][l];
                        d.n_in * f.params.e_in - d.n_out * f.params.e_out
                    })
                    .sum();
                let cap = data.next_count().max(0.0) * f.params.e_cap;
                let target = (state.fleet[fi].energy + churn).clamp(0.0, cap);
                prog.add_ge(LinExpr::from(fl_e[fi]), target);
            }
        }

        // slow FR limited by product capability and by spare headroom
        let mut cap_row = LinExpr::from(r_g);
        let mut headroom_row = LinExpr::from(r_g);
        for (gi, g) in config.generators.iter().enumerate() {
            cap_row += LinExpr::term(n_g[gi], -g.max_slow_fr);
            headroom_row += LinExpr::from(p_g[gi]) - LinExpr::term(n_g[gi], g.p_max);
        }
        prog.add_le(cap_row, slow_storage);
        prog.add_le(headroom_row, slow_storage);

        let mut h_expr = LinExpr::zero();
        for (gi, g) in config.generators.iter().enumerate() {
            h_expr += LinExpr::term(n_g[gi], g.inertia_constant * g.p_max);
        }
        prog.add_ge(h_expr.clone() - LinExpr::term(pl, rocof_coeff), 0.0);
        prog.add_le(LinExpr::from(pl) - r_nd - r_ev - r_g, 0.0);

        let z_expr = h_expr * (1.0 / fp.f0)
            - LinExpr::term(r_nd, fp.t1 * quarter)
            - LinExpr::term(r_ev, (fp.t1 + 2.0 * fp.t_del) * quarter);
        let x_expr = LinExpr::term(r_g, 1.0 / fp.t2);
        let y_expr = (LinExpr::from(pl) - r_nd - r_ev) * y_scale;
        nadir_rows.push(prog.add_rotated_soc(z_expr * 0.5, x_expr, vec![y_expr]));

        if mode == SchedulingMode::Disabled {
            prog.set_bounds(r_ev, 0.0, 0.0);
        } else {
            let mut terms = Vec::with_capacity(config.fleets.len());
            let mut moments = Vec::with_capacity(config.fleets.len());
            let mut g_max = Vec::with_capacity(config.fleets.len());
            for (fi, f) in config.fleets.iter().enumerate() {
                let data = &fleet_hours[fi][lead];
                let rating = f.params.charger_power_max;
                let n_t = data.expected_count();
                let g_expr = if n_t > 0.0 {
                    LinExpr::constant(rating) - LinExpr::term(fl_d[fi], 1.0 / n_t)
                        + LinExpr::term(fl_c[fi], 1.0 / n_t)
                } else {
                    LinExpr::constant(rating)
                };
                terms.push(FleetTerm {
                    g: g_expr,
                    n0: data.n0,
                    mu: data.mu,
                    sigma: data.sigma,
                });
                moments.push(FleetUncertainty {
                    g: 2.0 * rating,
                    n0: data.n0,
                    mu: data.mu,
                    sigma: data.sigma,
                });
                g_max.push(2.0 * rating);
            }
            let (m1, m2) = big_m_values(&moments, &g_max, config.drcc.ambiguity, risk);
            let cfg = DrccConfig {
                ambiguity: config.drcc.ambiguity,
                risk,
                big_m1: m1,
                big_m2: m2,
                mode,
            };
            let handles = match mode {
                SchedulingMode::Joint => joint_constraint_rows(&mut prog, &terms, r_ev, &cfg)?,
                SchedulingMode::Individual => {
                    individual_constraint_rows(&mut prog, &terms, r_ev, &cfg)?
                }
                SchedulingMode::Deterministic => {
                    deterministic_constraint_rows(&mut prog, &terms, r_ev, &cfg)?
                }
                SchedulingMode::Disabled => unreachable!(),
            };
            relax_binaries += handles.relax.len();
        }

        let pi = node.probability;
        for (gi, g) in config.generators.iter().enumerate() {
            objective += LinExpr::term(n_g[gi], pi * dt * g.no_load_cost);
            objective += LinExpr::term(p_g[gi], pi * dt * g.marginal_cost * MWH_PER_GWH);
            objective += LinExpr::term(s_g[gi], pi * g.startup_cost);
        }
        objective += LinExpr::term(shed, pi * dt * config.load_shed_cost * MWH_PER_GWH);

        nodes.push(NodeVars {
            n_g,
            p_g,
            s_g,
            st_dis,
            st_ch,
            st_e,
            fl_d,
            fl_c,
            fl_e,
            r_nd,
            r_g,
            r_ev,
            pl,
            shed,
            wind_curt,
            solar_curt,
        });
    }

    prog.set_objective(objective);
    prog.validate().map_err(fleetfr_conic::SolveError::from)?;
    Ok((
        prog,
        ProblemMap {
            nodes,
            commit_flags,
            balance_rows,
            nadir_rows,
            relax_binaries,
        },
    ))
}

/// Solver outcome with the primal point and row duals.
#[derive(Debug, Clone)]
pub struct ScheduleSolution {
    pub status: Status,
    pub objective: f64,
    pub gap: f64,
    pub residual: f64,
    pub x: Vec<f64>,
    pub duals: Vec<Vec<f64>>,
}

impl ScheduleSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.index()]
    }

    pub fn dual(&self, r: RowId) -> &[f64] {
        &self.duals[r.index()]
    }
}

/// One mixed solve at the standard 0.1% gap.
pub fn solve_horizon(prog: &ConicProgram) -> Result<ScheduleSolution, SchedError> {
    let sol = solve_mixed(prog, DEFAULT_GAP)?;
    match sol.status {
        Status::Optimal | Status::GapLimit => Ok(ScheduleSolution {
            status: sol.status,
            objective: sol.objective,
            gap: sol.gap,
            residual: sol.residual,
            x: sol.x,
            duals: sol.duals,
        }),
        other => Err(SchedError::NotOptimal(other)),
    }
}

/// The cost function evaluated from a solution point, for verifying the
/// solver's reported objective.
pub fn recompute_objective(
    tree: &ScenarioTree,
    config: &SystemConfig,
    map: &ProblemMap,
    x: &[f64],
) -> f64 {
    let mut total = 0.0;
    for node in &tree.nodes {
        let vars = &map.nodes[node.id];
        let pi = node.probability;
        let dt = node.delta_tau;
        for (gi, g) in config.generators.iter().enumerate() {
            total += pi * dt * g.no_load_cost * x[vars.n_g[gi].index()];
            total += pi * dt * g.marginal_cost * MWH_PER_GWH * x[vars.p_g[gi].index()];
            total += pi * g.startup_cost * x[vars.s_g[gi].index()];
        }
        total += pi * dt * config.load_shed_cost * MWH_PER_GWH * x[vars.shed.index()];
    }
    total
}

/// Root-node decisions pulled out of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RootDecision {
    pub n_g: Vec<f64>,
    pub p_g: Vec<f64>,
    pub s_g: Vec<f64>,
    pub st_dis: Vec<f64>,
    pub st_ch: Vec<f64>,
    pub fl_d: Vec<f64>,
    pub fl_c: Vec<f64>,
    pub r_nd: f64,
    pub r_g: f64,
    pub r_ev: f64,
    pub pl: f64,
    pub shed: f64,
    pub wind_curt: f64,
    pub solar_curt: f64,
    pub inertia: f64,
}

impl ProblemMap {
    /// Every extracted quantity is nonnegative by construction, so solver
    /// tolerance dust below zero is clipped here rather than leaking into
    /// logs and state updates.
    pub fn root_decision(&self, config: &SystemConfig, x: &[f64]) -> RootDecision {
        let v = &self.nodes[0];
        let one = |id: VarId| x[id.index()].max(0.0);
        let get = |ids: &[VarId]| ids.iter().map(|id| one(*id)).collect::<Vec<f64>>();
        let n_g = get(&v.n_g);
        let inertia = n_g
            .iter()
            .zip(&config.generators)
            .map(|(n, g)| n * g.inertia_constant * g.p_max)
            .sum();
        RootDecision {
            p_g: get(&v.p_g),
            s_g: get(&v.s_g),
            st_dis: get(&v.st_dis),
            st_ch: get(&v.st_ch),
            fl_d: get(&v.fl_d),
            fl_c: get(&v.fl_c),
            r_nd: one(v.r_nd),
            r_g: one(v.r_g),
            r_ev: one(v.r_ev),
            pl: one(v.pl),
            shed: one(v.shed),
            wind_curt: one(v.wind_curt),
            solar_curt: one(v.solar_curt),
            inertia,
            n_g,
        }
    }

    /// Largest power-balance violation across the tree.
    pub fn max_balance_residual(&self, prog: &ConicProgram, x: &[f64]) -> f64 {
        self.balance_rows
            .iter()
            .map(|r| prog.rows()[r.index()].violation(x))
            .fold(0.0, f64::max)
    }
}
