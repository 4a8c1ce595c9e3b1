//! IO, file formats and the experiment harness around `ssdkl-core`:
//! CSV dataset ingestion, strict TOML experiment configs, binary
//! parameter checkpoints, and the seeded multi-trial runner that emits
//! the percent-reduction tables.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod report;

pub use config::{parse_config, parse_config_str, ExperimentConfig, MethodName};
pub use dataset::{load_csv, load_dataset, LoadReport};
pub use experiment::{run_experiment, ExperimentResult, SummaryRow, TrialCell};
