//! Seeded replications, sweeps and the CSV result table.

use std::io::Write;

use cima_core::analysis::{compute_metrics_with_burn_in, no_trend_check};
use cima_core::{run_protocol, ProtocolKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{pattern_rates, ExperimentConfig};
use crate::error::SimError;

/// Column order of every result table.
pub const CSV_HEADER: [&str; 14] = [
    "protocol",
    "N",
    "lambda_tot",
    "pattern",
    "horizon",
    "seed",
    "replication",
    "q_avg",
    "delay",
    "collisions",
    "bound_violations",
    "arrival_checksum",
    "delay_se",
    "trend_stable",
];

/// `replication` value of aggregate rows.
pub const AGGREGATE: i64 = -1;

/// One line of the result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub protocol: ProtocolKind,
    pub users: usize,
    pub lambda_tot: f64,
    pub pattern: String,
    pub horizon: u64,
    pub seed: u64,
    pub replication: i64,
    pub q_avg: f64,
    /// `None` when the total load is zero.
    pub delay: Option<f64>,
    pub collisions: u64,
    /// Replica mismatches, dominance violations and local-view mismatches.
    pub bound_violations: u64,
    pub arrival_checksum: u64,
    /// Standard error of the delay over replications. Aggregate rows only.
    pub delay_se: Option<f64>,
    /// No-trend stability proxy. `None` for horizons shorter than 4 slots.
    pub trend_stable: Option<bool>,
}

impl ResultRow {
    pub fn is_aggregate(&self) -> bool {
        self.replication == AGGREGATE
    }

    /// Audit violations that make the run exit nonzero.
    pub fn violations(&self) -> u64 {
        let collisions = if self.protocol.collision_free() { self.collisions } else { 0 };
        collisions + self.bound_violations
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        vec![
            self.protocol.name().to_string(),
            self.users.to_string(),
            self.lambda_tot.to_string(),
            self.pattern.clone(),
            self.horizon.to_string(),
            self.seed.to_string(),
            self.replication.to_string(),
            self.q_avg.to_string(),
            opt(self.delay),
            self.collisions.to_string(),
            self.bound_violations.to_string(),
            format!("{:016x}", self.arrival_checksum),
            opt(self.delay_se),
            self.trend_stable.map_or_else(|| "NA".to_string(), |b| b.to_string()),
        ]
    }
}

/// Replication rows followed by their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub replications: Vec<ResultRow>,
    pub aggregate: ResultRow,
}

impl ExperimentResult {
    pub fn rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.replications.iter().chain(std::iter::once(&self.aggregate))
    }

    pub fn violations(&self) -> u64 {
        self.replications.iter().map(ResultRow::violations).sum()
    }
}

fn run_replication(config: &ExperimentConfig, replication: usize) -> Result<ResultRow, SimError> {
    let rates = config.arrival_rates()?;
    let seed = config.seed.wrapping_add(replication as u64);
    let outcome = run_protocol(config.protocol, &rates, config.horizon, seed)?;
    let metrics = compute_metrics_with_burn_in(&outcome.trajectory, &rates, config.burn_in)?;
    let trend = no_trend_check(&outcome.trajectory).ok().map(|t| t.stable);
    let audit = outcome.audit;
    Ok(ResultRow {
        protocol: config.protocol,
        users: config.users,
        lambda_tot: config.total_load()?,
        pattern: config.pattern_label().to_string(),
        horizon: config.horizon,
        seed,
        replication: replication as i64,
        q_avg: metrics.q_avg,
        delay: metrics.delay_estimate,
        collisions: audit.collisions,
        bound_violations: audit.bound_violations() + audit.local_view_mismatches,
        arrival_checksum: outcome.trajectory.arrival_checksum(),
        delay_se: None,
        trend_stable: trend,
    })
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn combine_checksums(rows: &[ResultRow]) -> u64 {
    rows.iter().fold(0xcbf2_9ce4_8422_2325u64, |acc, r| {
        (acc ^ r.arrival_checksum).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn aggregate(config: &ExperimentConfig, rows: &[ResultRow]) -> ResultRow {
    let first = &rows[0];
    let q: Vec<f64> = rows.iter().map(|r| r.q_avg).collect();
    let (q_mean, _) = mean_and_se(&q);
    let delays: Option<Vec<f64>> = rows.iter().map(|r| r.delay).collect();
    let (delay, delay_se) = match delays {
        Some(d) => {
            let (m, se) = mean_and_se(&d);
            (Some(m), Some(se))
        }
        None => (None, None),
    };
    let trend = rows.iter().map(|r| r.trend_stable).collect::<Option<Vec<_>>>().map(|v| v.iter().all(|s| *s));
    ResultRow {
        protocol: first.protocol,
        users: first.users,
        lambda_tot: first.lambda_tot,
        pattern: first.pattern.clone(),
        horizon: first.horizon,
        seed: config.seed,
        replication: AGGREGATE,
        q_avg: q_mean,
        delay,
        collisions: rows.iter().map(|r| r.collisions).sum(),
        bound_violations: rows.iter().map(|r| r.bound_violations).sum(),
        arrival_checksum: combine_checksums(rows),
        delay_se,
        trend_stable: trend,
    }
}

/// Runs `config.replications` replications with seeds `seed, seed+1, …`.
/// Replications run in parallel; rows come back in replication order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, SimError> {
    config.validate()?;
    let replications = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = aggregate(config, &replications);
    Ok(ExperimentResult { replications, aggregate })
}

/// Axis varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Users,
    Load,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "users" | "n" => Ok(SweepAxis::Users),
            "load" | "lambda" => Ok(SweepAxis::Load),
            other => Err(format!("unknown sweep axis '{other}' (expected users or load)")),
        }
    }
}

/// Configurations for every (value, protocol) pair, in table order.
pub fn sweep_configs(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    protocols: &[ProtocolKind],
) -> Result<Vec<ExperimentConfig>, SimError> {
    let mut configs = Vec::with_capacity(values.len() * protocols.len());
    for &value in values {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::Users => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(SimError::Config(format!("user count must be a positive integer, got {value}")));
                }
                cfg.users = value as usize;
            }
            SweepAxis::Load => {
                cfg.load = Some(value);
            }
        }
        if cfg.rates.is_some() {
            return Err(SimError::Config("sweeps need a load and pattern, not explicit rates".into()));
        }
        if let Some(load) = cfg.load {
            pattern_rates(cfg.pattern, cfg.users, load)?;
        }
        for &protocol in protocols {
            let mut c = cfg.clone();
            c.protocol = protocol;
            c.validate()?;
            configs.push(c);
        }
    }
    Ok(configs)
}

/// One aggregate row per (value, protocol). Every protocol at a given value
/// sees the same seeds, hence identical arrival sample paths.
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    protocols: &[ProtocolKind],
) -> Result<Vec<ExperimentResult>, SimError> {
    let configs = sweep_configs(base, axis, values, protocols)?;
    configs.par_iter().map(run_experiment).collect()
}

/// Writes the header and the given rows.
pub fn write_csv<'a, W: Write>(out: W, rows: impl IntoIterator<Item = &'a ResultRow>) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record(row.record())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn csv_string<'a>(rows: impl IntoIterator<Item = &'a ResultRow>) -> Result<String, SimError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
