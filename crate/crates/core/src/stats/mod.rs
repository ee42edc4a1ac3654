//! Statistical primitives: standard-normal CDF/quantile, the Shapiro-Wilk
//! normality test, and the dip test of unimodality.

mod dip;
mod normal;
mod shapiro;

pub use dip::{dip_statistic, dip_test, DipCalibration};
pub use normal::{normal_cdf, normal_quantile};
pub use shapiro::shapiro_wilk;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples are degenerate (zero range)")]
    Degenerate,
    #[error("sample contains a non-finite value")]
    NonFinite,
}
