//! Dataset ingestion, configuration files and run output.

pub mod config;
pub mod dataset;
pub mod report;

pub use config::{load_config, parse_config, render_config, set_config_value};
pub use dataset::{load_dataset, split_seed, write_dataset, DatasetBundle, InputFile, SplitOptions};
pub use report::{emit_report, load_run_state, prediction_rows, Manifest, PredictionRow, RowOrigin, RunState};
