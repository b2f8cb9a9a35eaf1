//! Scenario files, reconstruction runs and verification sweeps behind the
//! `phase-kalman` binary.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;
pub mod verify;

pub use commands::{cmd_gen, cmd_run, evaluate, execute, load_scenario, Evaluation, Overrides, RunOutcome};
pub use error::{CliError, Result};
pub use scenario::{builtin, Problem, ScenarioSpec, BUILTINS};
pub use verify::{cmd_verify, run_suites, SuiteResult, VerifyOptions};
