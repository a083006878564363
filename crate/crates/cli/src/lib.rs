//! Declarative experiment runner on top of `ptraj-core`.
//!
//! A study is described by a plain-text `key = value` file (see
//! [`config`]). [`run_experiment`] executes it and writes an artifact
//! directory holding the echoed config, the study CSVs and `summary.json`;
//! [`plot::plot_emit`] turns the CSVs into SVG figures and
//! [`verify::verify`] re-checks a finished directory.
//!
//! Exit statuses: 0 all assertions pass, 1 an assertion failed, 2 config or
//! I/O error, 3 numerical blow-up (partial artifacts are kept).

pub mod config;
pub mod csv;
pub mod experiments;
pub mod plot;
pub mod summary;
pub mod verify;

pub use config::{ExperimentConfig, Kind};
pub use experiments::{output_root, run_experiment, CliError, Outcome, OUTPUT_ROOT_VAR};
pub use summary::{Assertion, Status, Summary};
