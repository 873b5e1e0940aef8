//! Scenario files, parallel replication, output files and the `banditq`
//! command line on top of `banditq-core`.

pub mod cli;
pub mod output;
pub mod run;
pub mod scenario;

pub use run::{run_scenario, Overrides, RunOutcome};
pub use scenario::{load_scenario, write_scenario, Scenario};
