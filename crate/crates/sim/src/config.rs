//! Experiment configuration: JSON file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cima_core::{ArrivalRates, ProtocolKind};
use serde::{Deserialize, Serialize};

use crate::error::SimError;

pub const DEFAULT_HORIZON: u64 = 100_000;
pub const DEFAULT_REPLICATIONS: usize = 5;

/// How a total load is split across users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    /// Users `1..=N/2` get `1.4 λ/N`, the rest `0.6 λ/N`. Needs even `N`.
    #[default]
    Asymmetric,
    Symmetric,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Pattern::Asymmetric => "asymmetric",
            Pattern::Symmetric => "symmetric",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asymmetric" => Ok(Pattern::Asymmetric),
            "symmetric" => Ok(Pattern::Symmetric),
            other => Err(format!("unknown pattern '{other}' (expected asymmetric or symmetric)")),
        }
    }
}

/// Per-user rates for `users` users at total load `total`.
pub fn pattern_rates(pattern: Pattern, users: usize, total: f64) -> Result<Vec<f64>, SimError> {
    if users == 0 {
        return Err(SimError::Config("users must be at least 1".into()));
    }
    if !(total >= 0.0 && total.is_finite()) {
        return Err(SimError::Config(format!("load must be a non-negative number, got {total}")));
    }
    let n = users as f64;
    let rates = match pattern {
        Pattern::Symmetric => vec![total / n; users],
        Pattern::Asymmetric => {
            if !users.is_multiple_of(2) {
                return Err(SimError::Config(format!("asymmetric pattern needs an even number of users, got {users}")));
            }
            let high = 1.4 * total / n;
            let low = 0.6 * total / n;
            (0..users).map(|u| if u < users / 2 { high } else { low }).collect()
        }
    };
    if let Some(bad) = rates.iter().find(|r| **r > 1.0) {
        return Err(SimError::Config(format!("derived rate {bad} exceeds 1")));
    }
    Ok(rates)
}

/// One experiment: a protocol, a user count, a load and a seed schedule.
///
/// JSON example:
/// `{"protocol": "cima", "users": 4, "load": 0.5, "pattern": "asymmetric",
///   "horizon": 100000, "seed": 1, "replications": 5}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_protocol")]
    pub protocol: ProtocolKind,
    pub users: usize,
    /// Total arrival rate, split by `pattern`. Exclusive with `rates`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
    #[serde(default)]
    pub pattern: Pattern,
    /// Explicit per-user rates. Exclusive with `load`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Slots discarded before averaging.
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_protocol() -> ProtocolKind {
    ProtocolKind::Cima
}
fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}
fn default_seed() -> u64 {
    1
}
fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

impl ExperimentConfig {
    pub fn new(protocol: ProtocolKind, users: usize, load: f64, pattern: Pattern) -> Self {
        Self {
            protocol,
            users,
            load: Some(load),
            pattern,
            rates: None,
            horizon: DEFAULT_HORIZON,
            seed: 1,
            replications: DEFAULT_REPLICATIONS,
            burn_in: 0,
            output: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    /// Label for the CSV `pattern` column.
    pub fn pattern_label(&self) -> &'static str {
        if self.rates.is_some() {
            "explicit"
        } else {
            self.pattern.name()
        }
    }

    /// Validated per-user arrival rates.
    pub fn arrival_rates(&self) -> Result<ArrivalRates, SimError> {
        let rates = match (&self.rates, self.load) {
            (Some(_), Some(_)) => return Err(SimError::Config("set either load or rates, not both".into())),
            (None, None) => return Err(SimError::Config("one of load or rates is required".into())),
            (Some(r), None) => {
                if r.len() != self.users {
                    return Err(SimError::Config(format!(
                        "{} rates given for {} users",
                        r.len(),
                        self.users
                    )));
                }
                r.clone()
            }
            (None, Some(load)) => pattern_rates(self.pattern, self.users, load)?,
        };
        ArrivalRates::new(rates).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Nominal total load.
    pub fn total_load(&self) -> Result<f64, SimError> {
        Ok(match self.load {
            Some(l) => l,
            None => self.arrival_rates()?.total(),
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.users == 0 {
            return Err(SimError::Config("users must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(SimError::Config("replications must be at least 1".into()));
        }
        if self.burn_in as u64 >= self.horizon {
            return Err(SimError::Config("burn_in must be shorter than the horizon".into()));
        }
        if self.protocol == ProtocolKind::Other {
            return Err(SimError::Config("protocol must be cima, tdma or backoff".into()));
        }
        self.arrival_rates().map(|_| ())
    }
}
