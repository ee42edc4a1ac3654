//! Monte Carlo deliverability checks for scheduled EV response, plus
//! time-domain nadir cross-checks and run report files.
//!
//! The scheduler promises a response level; whether a fleet of uncertain
//! size can actually deliver it is an empirical question. Hourly nadir
//! security (hns) is the fraction of sampled connectivity outcomes whose
//! deliverable response meets the schedule. The nadir cross-check closes
//! the loop in the time domain: take a pessimistic delivery percentile,
//! replay the outage trajectory, and compare the dip against the limit.

use crate::drcc::FleetUncertainty;
use crate::freq::{self, FreqError, FrequencyCase, FrequencyParams};
use crate::scheduler::{HourDetail, RunRecord, SchedError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_HNS_SAMPLES: usize = 100_000;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("sample count must be positive")]
    NoSamples,
    #[error("percentile {0} outside (0, 1]")]
    BadPercentile(f64),
    #[error("empirical sampler needs one nonempty pool per fleet: {0}")]
    BadPools(&'static str),
    #[error("no records to summarize")]
    NoRecords,
    #[error("unknown sampler {0:?}")]
    UnknownSampler(String),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Serialize(String),
}

/// How ΔN is drawn for each fleet. The moment-based samplers match the
/// hour's (mu, sigma) exactly, which is what the distributionally robust
/// guarantee quantifies over; the empirical sampler resamples observed
/// count changes (all 12 intra-hour 5-minute offsets pooled equiprobably).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Empirical,
    Gaussian,
    ShiftedExp,
    TwoPoint,
    Uniform,
}

impl SamplerKind {
    pub fn id(self) -> &'static str {
        match self {
            SamplerKind::Empirical => "empirical",
            SamplerKind::Gaussian => "gaussian",
            SamplerKind::ShiftedExp => "shifted_exp",
            SamplerKind::TwoPoint => "two_point",
            SamplerKind::Uniform => "uniform",
        }
    }

    /// Two-point mass is the one deliberately non-unimodal sampler here.
    pub fn is_unimodal(self) -> bool {
        !matches!(self, SamplerKind::TwoPoint)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SamplerKind {
    type Err = ValidationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "empirical" => Ok(SamplerKind::Empirical),
            "gaussian" => Ok(SamplerKind::Gaussian),
            "shifted_exp" | "shifted-exp" => Ok(SamplerKind::ShiftedExp),
            "two_point" | "two-point" => Ok(SamplerKind::TwoPoint),
            "uniform" => Ok(SamplerKind::Uniform),
            other => Err(ValidationError::UnknownSampler(other.into())),
        }
    }
}

/// A sampler plus whatever data it resamples. Pools are per fleet, in the
/// same order as the hour's fleet list.
#[derive(Debug, Clone)]
pub enum Sampler<'a> {
    Empirical { pools: &'a [Vec<f64>] },
    Gaussian,
    ShiftedExp,
    TwoPoint,
    Uniform,
}

impl Sampler<'_> {
    pub fn kind(&self) -> SamplerKind {
        match self {
            Sampler::Empirical { .. } => SamplerKind::Empirical,
            Sampler::Gaussian => SamplerKind::Gaussian,
            Sampler::ShiftedExp => SamplerKind::ShiftedExp,
            Sampler::TwoPoint => SamplerKind::TwoPoint,
            Sampler::Uniform => SamplerKind::Uniform,
        }
    }

    fn check(&self, fleets: usize) -> Result<(), ValidationError> {
        if let Sampler::Empirical { pools } = self {
            if pools.len() != fleets {
                return Err(ValidationError::BadPools("pool count != fleet count"));
            }
            if pools.iter().any(|p| p.is_empty()) {
                return Err(ValidationError::BadPools("empty pool"));
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, fleet: usize, f: &FleetUncertainty) -> f64 {
        match self {
            Sampler::Empirical { pools } => {
                let pool = &pools[fleet];
                pool[rng.random_range(0..pool.len())]
            }
            Sampler::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                f.mu + f.sigma * z
            }
            Sampler::ShiftedExp => {
                let e: f64 = Exp1.sample(rng);
                f.mu - f.sigma + f.sigma * e
            }
            Sampler::TwoPoint => {
                if rng.random::<f64>() < 0.5 {
                    f.mu - f.sigma
                } else {
                    f.mu + f.sigma
                }
            }
            Sampler::Uniform => {
                let u: f64 = rng.random();
                f.mu + f.sigma * 3f64.sqrt() * (2.0 * u - 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnsRecord {
    pub hour: usize,
    pub r_ev_sched: f64,
    pub hns: f64,
    pub sampler: String,
    pub n_samples: usize,
}

/// Draws the deliverable response `R_j = sum_i g_i (n0_i + dN_{i,j})` n
/// times. Counts are left unclamped: the chance constraint bounds this
/// linear form, and negative-count draws are a sampler tail artifact the
/// guarantee already absorbs.
pub fn sample_deliveries(
    hour: &HourDetail,
    sampler: &Sampler,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, ValidationError> {
    if n == 0 {
        return Err(ValidationError::NoSamples);
    }
    sampler.check(hour.fleets.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut total = 0.0;
        for (i, f) in hour.fleets.iter().enumerate() {
            total += f.g * (f.n0 + sampler.draw(&mut rng, i, f));
        }
        out.push(total);
    }
    Ok(out)
}

/// Fraction of sampled outcomes that deliver the scheduled response. A
/// zero schedule is trivially delivered.
pub fn sample_hns(
    hour: &HourDetail,
    sampler: &Sampler,
    n: usize,
    seed: u64,
) -> Result<HnsRecord, ValidationError> {
    if n == 0 {
        return Err(ValidationError::NoSamples);
    }
    sampler.check(hour.fleets.len())?;
    let hns = if hour.r_ev <= 0.0 {
        1.0
    } else {
        let deliveries = sample_deliveries(hour, sampler, n, seed)?;
        deliveries.iter().filter(|&&r| r >= hour.r_ev).count() as f64 / n as f64
    };
    Ok(HnsRecord {
        hour: hour.hour,
        r_ev_sched: hour.r_ev,
        hns,
        sampler: sampler.kind().id().into(),
        n_samples: n,
    })
}

/// Lower empirical quantile: the ceil(p*n)-th order statistic.
pub fn lower_percentile(sorted: &[f64], p: f64) -> Result<f64, ValidationError> {
    if sorted.is_empty() {
        return Err(ValidationError::NoRecords);
    }
    if !(p > 0.0 && p <= 1.0) || !p.is_finite() {
        return Err(ValidationError::BadPercentile(p));
    }
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[k - 1])
}

/// Worst-credible-outage replay for one solved hour at a given delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NadirCheck {
    pub hour: usize,
    pub delivery_gw: f64,
    pub percentile: Option<f64>,
    pub nadir_hz: f64,
    pub nadir_time_s: f64,
    pub limit_hz: f64,
    pub margin_hz: f64,
    pub secure: bool,
}

pub fn crosscheck_nadir(
    hour: &HourDetail,
    params: &FrequencyParams,
    delivery: f64,
) -> Result<NadirCheck, ValidationError> {
    let case = FrequencyCase {
        h: hour.inertia,
        r_ev: delivery.max(0.0),
        r_nd: hour.r_nd,
        r_g: hour.r_g,
        pl_max: hour.pl,
    };
    let traj = freq::simulate_trajectory(&case, params, params.t2 + 1.0, 0.05)?;
    let limit_hz = params.f0 - params.delta_f_max;
    let nadir_hz = params.f0 + traj.nadir_value;
    Ok(NadirCheck {
        hour: hour.hour,
        delivery_gw: case.r_ev,
        percentile: None,
        nadir_hz,
        nadir_time_s: traj.nadir_time,
        limit_hz,
        margin_hz: nadir_hz - limit_hz,
        secure: nadir_hz >= limit_hz - 1e-9,
    })
}

/// Cross-check at a pessimistic delivery percentile (default use: 1st).
/// The delivery sample set is the same seeded construction as sample_hns.
pub fn crosscheck_at_percentile(
    hour: &HourDetail,
    params: &FrequencyParams,
    sampler: &Sampler,
    n: usize,
    seed: u64,
    p: f64,
) -> Result<NadirCheck, ValidationError> {
    let mut deliveries = sample_deliveries(hour, sampler, n, seed)?;
    deliveries.sort_by(f64::total_cmp);
    let delivery = lower_percentile(&deliveries, p)?;
    let mut check = crosscheck_nadir(hour, params, delivery)?;
    check.percentile = Some(p);
    Ok(check)
}

/// Box-plot statistics over a set of hns records, quartiles by the same
/// lower-order-statistic convention as the percentile computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnsSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn hns_summary(records: &[HnsRecord]) -> Result<HnsSummary, ValidationError> {
    if records.is_empty() {
        return Err(ValidationError::NoRecords);
    }
    let mut vals: Vec<f64> = records.iter().map(|r| r.hns).collect();
    vals.sort_by(f64::total_cmp);
    Ok(HnsSummary {
        count: vals.len(),
        min: vals[0],
        q1: lower_percentile(&vals, 0.25)?,
        median: lower_percentile(&vals, 0.5)?,
        q3: lower_percentile(&vals, 0.75)?,
        max: vals[vals.len() - 1],
        mean: vals.iter().sum::<f64>() / vals.len() as f64,
    })
}

/// Floor on an empirical pass rate when the true rate is `security`:
/// three binomial standard deviations below it.
pub fn binomial_floor(security: f64, n: usize) -> f64 {
    security - 3.0 * (security * (1.0 - security) / n as f64).sqrt()
}

#[derive(Debug, Serialize)]
struct SamplerSummary<'a> {
    sampler: &'a str,
    count: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
}

impl<'a> SamplerSummary<'a> {
    fn new(sampler: &'a str, s: HnsSummary) -> Self {
        SamplerSummary {
            sampler,
            count: s.count,
            min: s.min,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            max: s.max,
            mean: s.mean,
        }
    }
}

#[derive(Debug, Serialize)]
struct ReportSummary<'a> {
    format_version: u32,
    config_sha256: String,
    seed: u64,
    mode: String,
    hours: usize,
    total_cost: f64,
    total_shed_gwh: f64,
    total_curtailed_gwh: f64,
    fallback_hours: usize,
    hns: Vec<SamplerSummary<'a>>,
    nadir_worst_margin_hz: Option<f64>,
    nadir_all_secure: bool,
}

/// Everything emit_report needs about one finished run.
#[derive(Debug, Clone)]
pub struct RunReport<'a> {
    pub record: &'a RunRecord,
    pub hns: &'a [HnsRecord],
    pub nadir: &'a [NadirCheck],
    /// Exact config text the run was started from; hashed for provenance.
    pub config_text: &'a str,
    pub seed: u64,
}

fn write_csv_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ValidationError> {
    let mut w = csv::Writer::from_writer(fs::File::create(path)?);
    for r in rows {
        w.serialize(r)
            .map_err(|e| ValidationError::Serialize(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the run artifacts into `dir` (created if absent): operation log,
/// per-hour hns records, per-sampler summaries, nadir checks, and a JSON
/// summary keyed by the config hash. Returns the paths written. Existing
/// files are replaced; the caller owns any no-clobber policy.
pub fn emit_report(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>, ValidationError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let log_path = dir.join("operation_log.csv");
    let mut buf = Vec::new();
    report.record.log.write_csv(&mut buf)?;
    fs::write(&log_path, buf)?;
    written.push(log_path);

    let hns_path = dir.join("hns_records.csv");
    write_csv_records(&hns_path, report.hns)?;
    written.push(hns_path);

    let mut samplers: Vec<&str> = report.hns.iter().map(|r| r.sampler.as_str()).collect();
    samplers.sort_unstable();
    samplers.dedup();
    let mut grouped = Vec::new();
    for s in samplers {
        let subset: Vec<HnsRecord> = report
            .hns
            .iter()
            .filter(|r| r.sampler == s)
            .cloned()
            .collect();
        grouped.push(SamplerSummary::new(s, hns_summary(&subset)?));
    }
    let summary_path = dir.join("hns_summary.csv");
    write_csv_records(&summary_path, &grouped)?;
    written.push(summary_path);

    let nadir_path = dir.join("nadir_checks.csv");
    write_csv_records(&nadir_path, report.nadir)?;
    written.push(nadir_path);

    let log = &report.record.log;
    let summary = ReportSummary {
        format_version: REPORT_FORMAT_VERSION,
        config_sha256: sha256_hex(report.config_text),
        seed: report.seed,
        mode: log
            .rows
            .first()
            .map(|r| format!("{:?}", r.mode).to_lowercase())
            .unwrap_or_else(|| "unknown".into()),
        hours: log.rows.len(),
        total_cost: log.total_cost(),
        total_shed_gwh: log.total_shed_gwh(),
        total_curtailed_gwh: log.total_curtailed_gwh(),
        fallback_hours: report.record.details.iter().filter(|d| d.fallback).count(),
        hns: grouped,
        nadir_worst_margin_hz: report
            .nadir
            .iter()
            .map(|c| c.margin_hz)
            .min_by(f64::total_cmp),
        nadir_all_secure: report.nadir.iter().all(|c| c.secure),
    };
    let json_path = dir.join("summary.json");
    let mut f = fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, &summary)
        .map_err(|e| ValidationError::Serialize(e.to_string()))?;
    f.write_all(b"\n")?;
    written.push(json_path);

    Ok(written)
}

pub fn sha256_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
