//! Scenario tree over net demand: the realized current hour at the root,
//! then one chain per forecast quantile.

use super::{SchedError, SystemConfig};
use serde::{Deserialize, Serialize};

/// Net-demand inputs of one hour, all in GW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourPoint {
    pub demand: f64,
    pub wind: f64,
    pub solar: f64,
}

impl HourPoint {
    fn validate(&self) -> Result<(), SchedError> {
        let vals = [self.demand, self.wind, self.solar];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SchedError::BadForecast("values must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Root-hour realization plus one forecast chain per quantile; chain k holds
/// the quantile-k value for each lead hour 1..=horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub root: HourPoint,
    pub branches: Vec<Vec<HourPoint>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Absolute probability of reaching this node.
    pub probability: f64,
    /// Hours.
    pub delta_tau: f64,
    pub point: HourPoint,
    /// Hours ahead of the root (0 for the root itself).
    pub lead: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
}

impl ScenarioTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.nodes.iter().map(|n| n.lead).max().unwrap_or(0)
    }
}

/// Midpoint weight of each quantile, padded with 0 and 1 at the ends and
/// normalized to sum to one.
pub fn branch_weights(quantiles: &[f64]) -> Vec<f64> {
    let k = quantiles.len();
    let mut w = Vec::with_capacity(k);
    for i in 0..k {
        let lo = if i == 0 { 0.0 } else { quantiles[i - 1] };
        let hi = if i + 1 == k { 1.0 } else { quantiles[i + 1] };
        w.push((hi - lo) / 2.0);
    }
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
    }
    w
}

/// Root node carrying the realized hour, then one chain of hourly nodes per
/// quantile branch, every timestep one hour.
pub fn build_tree(config: &SystemConfig, forecast: &Forecast) -> Result<ScenarioTree, SchedError> {
    if forecast.branches.len() != config.quantiles.len() {
        return Err(SchedError::BadForecast("one branch per quantile required"));
    }
    let horizon = forecast.branches.first().map_or(0, Vec::len);
    if horizon == 0 {
        return Err(SchedError::BadForecast("empty forecast chain"));
    }
    if forecast.branches.iter().any(|b| b.len() != horizon) {
        return Err(SchedError::BadForecast("branches must share one horizon"));
    }
    forecast.root.validate()?;
    for b in &forecast.branches {
        for p in b {
            p.validate()?;
        }
    }

    let weights = branch_weights(&config.quantiles);
    let mut nodes = Vec::with_capacity(1 + config.quantiles.len() * horizon);
    nodes.push(TreeNode {
        id: 0,
        parent: None,
        probability: 1.0,
        delta_tau: 1.0,
        point: forecast.root,
        lead: 0,
    });
    for (chain, weight) in forecast.branches.iter().zip(&weights) {
        let mut parent = 0;
        for (tau, point) in chain.iter().enumerate() {
            let id = nodes.len();
            nodes.push(TreeNode {
                id,
                parent: Some(parent),
                probability: *weight,
                delta_tau: 1.0,
                point: *point,
                lead: tau + 1,
            });
            parent = id;
        }
    }
    Ok(ScenarioTree { nodes })
}
