//! File formats, the Monte-Carlo harness and the command-line front end for
//! [`jointloc_core`].
//!
//! - [`scenario_json`]: the textual scenario format.
//! - [`metrics_csv`]: one CSV row per recorded iteration.
//! - [`experiment`]: repeated seeded trials and their JSON summary.

pub mod error;
pub mod experiment;
pub mod metrics_csv;
pub mod scenario_json;

pub use error::Error;
pub use experiment::{run_experiment, Algorithm, ExperimentConfig, ScenarioSource, Summary};
pub use metrics_csv::{read_metrics, save_metrics, write_metrics};
pub use scenario_json::{load_scenario, parse_scenario, save_scenario, scenario_to_json};
