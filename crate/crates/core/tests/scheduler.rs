mod common;

use common::{certain_fleet_profiles, fleet_profiles, initial_state, toy_system};
use fleetfr_core::drcc::SchedulingMode;
use fleetfr_core::scheduler::{
    assemble_problem, build_tree, recompute_objective, rolling_simulate, solve_horizon,
    FleetHourData, NetDemandModel, SystemConfig,
};

/// Shrink the scenario tree so rolling runs stay quick.
fn fast(mut cfg: SystemConfig) -> SystemConfig {
    cfg.quantiles = vec![0.1, 0.5, 0.9];
    cfg
}

fn widen_spread(series: &mut [Vec<FleetHourData>], factor: f64) {
    for fleet in series.iter_mut() {
        for hour in fleet.iter_mut() {
            hour.sigma *= factor;
        }
    }
}

#[test]
fn full_tree_solve_is_secure_and_balanced() {
    let cfg = toy_system();
    let series = fleet_profiles(25);
    let state = initial_state(&cfg, &series);
    let mut model = NetDemandModel::new(cfg.net_demand, 11).unwrap();
    let forecast = model.forecast(&cfg.quantiles, 24);
    let tree = build_tree(&cfg, &forecast).unwrap();
    assert_eq!(tree.len(), 169);

    let (prog, map) = assemble_problem(&tree, &cfg, &state, &series).unwrap();
    let sol = solve_horizon(&prog).unwrap();

    assert!(map.max_balance_residual(&prog, &sol.x) <= 1e-6);

    let fp = &cfg.frequency;
    for nv in &map.nodes {
        let inertia: f64 = nv
            .n_g
            .iter()
            .zip(&cfg.generators)
            .map(|(v, g)| sol.value(*v) * g.inertia_constant * g.p_max)
            .sum();
        let pl = sol.value(nv.pl);
        assert!(
            inertia + 1e-6 >= pl * fp.f0 / (2.0 * fp.rocof_max),
            "inertia {inertia} too low for loss {pl}"
        );
        assert!(pl >= cfg.largest_loss_floor - 1e-9);
        let r_ev = sol.value(nv.r_ev);
        assert!(r_ev >= -1e-9);
        let fast_total = sol.value(nv.r_nd) + r_ev + sol.value(nv.r_g);
        assert!(fast_total + 1e-6 >= pl, "steady-state slack at loss {pl}");
    }

    let recomputed = recompute_objective(&tree, &cfg, &map, &sol.x);
    let scale = sol.objective.abs().max(1.0);
    assert!(
        (recomputed - sol.objective).abs() <= 1e-6 * scale,
        "objective {} vs recomputed {recomputed}",
        sol.objective
    );
}

#[test]
fn joint_schedules_at_least_individual() {
    let base = fast(toy_system());
    let mut series = fleet_profiles(25);
    widen_spread(&mut series, 4.0);
    let state = initial_state(&base, &series);
    let mut model = NetDemandModel::new(base.net_demand, 5).unwrap();
    let forecast = model.forecast(&base.quantiles, 24);
    let tree = build_tree(&base, &forecast).unwrap();

    let solve_mode = |mode: SchedulingMode| {
        let mut cfg = base.clone();
        cfg.drcc.mode = mode;
        let (prog, map) = assemble_problem(&tree, &cfg, &state, &series).unwrap();
        let sol = solve_horizon(&prog).unwrap();
        let root = map.root_decision(&cfg, &sol.x);
        (sol.objective, root.r_ev)
    };

    let (cost_joint, r_ev_joint) = solve_mode(SchedulingMode::Joint);
    let (cost_indiv, r_ev_indiv) = solve_mode(SchedulingMode::Individual);

    assert!(
        r_ev_joint >= r_ev_indiv - 1e-6,
        "joint {r_ev_joint} vs individual {r_ev_indiv}"
    );
    // With the spread inflated the chance constraint binds, so pooling
    // buys a strictly larger scheduled response.
    assert!(r_ev_joint >= r_ev_indiv + 0.01);
    assert!(cost_joint <= cost_indiv + 1e-6 * cost_indiv.abs().max(1.0));
}

#[test]
fn zero_spread_collapses_joint_to_deterministic() {
    let base = fast(toy_system());
    let series = certain_fleet_profiles(13);
    let state = initial_state(&base, &series);

    let run = |mode: SchedulingMode| {
        let mut cfg = base.clone();
        cfg.drcc.mode = mode;
        let mut model = NetDemandModel::new(cfg.net_demand, 42).unwrap();
        rolling_simulate(&cfg, 6, 6, &mut model, &series, state.clone()).unwrap()
    };

    let joint = run(SchedulingMode::Joint);
    let determ = run(SchedulingMode::Deterministic);

    for (j, d) in joint.log.rows.iter().zip(&determ.log.rows) {
        let scale = d.cost.abs().max(1.0);
        assert!(
            (j.cost - d.cost).abs() <= 1e-9 * scale,
            "hour {}: joint {} vs deterministic {}",
            j.hour,
            j.cost,
            d.cost
        );
        assert!((j.r_ev_sched_gw - d.r_ev_sched_gw).abs() <= 1e-9);
        assert!((j.inertia_gws - d.inertia_gws).abs() <= 1e-9);
    }
}

#[test]
fn looser_epsilon_is_never_dearer() {
    let base = fast(toy_system());
    let mut series = fleet_profiles(21);
    widen_spread(&mut series, 4.0);
    let state = initial_state(&base, &series);

    let run = |epsilon: f64| {
        let mut cfg = base.clone();
        cfg.drcc.epsilon = epsilon;
        let mut model = NetDemandModel::new(cfg.net_demand, 42).unwrap();
        rolling_simulate(&cfg, 8, 8, &mut model, &series, state.clone())
            .unwrap()
            .log
            .total_cost()
    };

    let tight = run(0.01);
    let loose = run(0.1);
    assert!(
        loose <= tight + 1e-6 * tight.abs().max(1.0),
        "eps 0.1 cost {loose} vs eps 0.01 cost {tight}"
    );
}

#[test]
fn v2g_cuts_overnight_wind_curtailment() {
    let mut cfg = fast(toy_system());
    cfg.net_demand.wind_capacity = 6.0;
    cfg.net_demand.demand_base = 3.2;
    cfg.net_demand.noise = 0.0;
    let series = fleet_profiles(17);
    let state = initial_state(&cfg, &series);

    let run = |mode: SchedulingMode| {
        let mut c = cfg.clone();
        c.drcc.mode = mode;
        let mut model = NetDemandModel::new(c.net_demand, 1).unwrap();
        rolling_simulate(&c, 8, 8, &mut model, &series, state.clone()).unwrap()
    };

    let joint = run(SchedulingMode::Joint);
    let disabled = run(SchedulingMode::Disabled);

    let curt = |r: &fleetfr_core::scheduler::RunRecord| {
        r.log.rows.iter().map(|row| row.wind_curt_gwh).sum::<f64>()
    };
    // Without EV response the nadir must be secured with part-loaded
    // plant, whose must-run output displaces wind overnight.
    assert!(
        curt(&disabled) >= curt(&joint) + 0.5,
        "disabled {} vs joint {}",
        curt(&disabled),
        curt(&joint)
    );
    assert!(disabled.log.total_cost() >= joint.log.total_cost());
}

#[test]
fn rolling_log_is_consistent() {
    let cfg = fast(toy_system());
    let series = fleet_profiles(21);
    let state = initial_state(&cfg, &series);
    let mut model = NetDemandModel::new(cfg.net_demand, 7).unwrap();
    let record = rolling_simulate(&cfg, 12, 8, &mut model, &series, state).unwrap();

    assert_eq!(record.log.rows.len(), 12);
    assert_eq!(record.details.len(), 12);
    record.final_state.validate(&cfg).unwrap();

    for (row, detail) in record.log.rows.iter().zip(&record.details) {
        assert_eq!(row.hour, detail.hour);
        assert!(!detail.fallback);
        assert!(detail.balance_residual <= 1e-6);
        let scale = detail.objective.abs().max(1.0);
        assert!((detail.objective - detail.recomputed_objective).abs() <= 1e-6 * scale);
        assert!(row.cost.is_finite());
        assert!(row.r_ev_sched_gw >= -1e-9);
        assert!(row.load_shed_gwh >= 0.0 && row.wind_curt_gwh >= 0.0);
    }

    let mut buf = Vec::new();
    record.log.write_csv(&mut buf).unwrap();
    let back = fleetfr_core::scheduler::OperationLog::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.rows.len(), record.log.rows.len());
    for (a, b) in back.rows.iter().zip(&record.log.rows) {
        assert_eq!(a.hour, b.hour);
        assert!((a.cost - b.cost).abs() <= 1e-9 * b.cost.abs().max(1.0));
    }
}
