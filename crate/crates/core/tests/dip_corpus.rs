//! Checks the dip statistic against 50 frozen cases whose dips were computed
//! by an exact LP formulation of the unimodal-fit problem (mode placement
//! enumerated, tube feasibility as linear constraints, t minimized).

use fleetfr_core::stats::dip_statistic;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    x: Vec<f64>,
    dip: f64,
}

#[test]
fn matches_lp_reference_values() {
    let raw = include_str!("data/dip_corpus.json");
    let cases: Vec<Case> = serde_json::from_str(raw).unwrap();
    assert_eq!(cases.len(), 50);
    for c in &cases {
        let got = dip_statistic(&c.x);
        assert!(
            (got - c.dip).abs() <= 1e-9,
            "{}: got {got}, want {}",
            c.name,
            c.dip
        );
    }
}

#[test]
fn bimodal_separates_from_unimodal() {
    let raw = include_str!("data/dip_corpus.json");
    let cases: Vec<Case> = serde_json::from_str(raw).unwrap();
    let max_gau = cases
        .iter()
        .filter(|c| c.name.starts_with("gau"))
        .map(|c| c.dip)
        .fold(0.0f64, f64::max);
    let min_bim = cases
        .iter()
        .filter(|c| c.name.starts_with("bim"))
        .map(|c| c.dip)
        .fold(f64::INFINITY, f64::min);
    assert!(
        min_bim > max_gau,
        "bimodal dips ({min_bim}) should exceed unimodal ones ({max_gau})"
    );
}
