//! The `tuner-lab` scenario runner.
//!
//! Scenarios are flat `key = value` text files; results are CSV tables with
//! 17-significant-digit floats and optional SVG line plots.

mod config;
mod csvout;
mod run;
pub mod svg;

pub use config::{parse_config, RunMode, ScenarioConfig, KNOWN_KEYS};
pub use csvout::{format_float, read_csv, trajectory_columns, write_csv, Table};
pub use run::{file_names, run, Check, CliError, Preset, RunOptions, RunReport, PRESET_DECAY_RATIO};
