//! Scenario files, snapshot I/O, checks and the verification driver.

pub mod checks;
pub mod config;
pub mod report;
pub mod run;
pub mod snapshot;

pub use config::{load_scenario, parse_scenario, ScenarioConfig};
pub use report::{CheckRecord, Summary, VerificationReport};
pub use run::{bundled, bundled_names, resolve_scenario, run_scenario, verify_all, RunOptions, ScenarioOutcome};
pub use snapshot::{decode_snapshot, encode_snapshot, read_snapshot, write_snapshot};
