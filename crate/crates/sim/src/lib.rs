//! Experiment runner for the collision channel simulator: configuration,
//! seeded replications, parameter sweeps, CSV tables, SVG plots and the
//! verification battery.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod verify;

pub use config::{pattern_rates, ExperimentConfig, Pattern};
pub use error::SimError;
pub use experiment::{run_experiment, sweep, write_csv, ExperimentResult, ResultRow, SweepAxis, CSV_HEADER};
pub use plot::{render_plot, PlotKind, PlotOptions};
