//! Property-based testing of the swap server.
//!
//! Random client [`Scenario`]s are run against a live server over TCP or
//! against the implementation model, and each observed client-side trace is
//! checked for membership in the linear specification's network behaviors.
//! Failures are shrunk greedily; mutation campaigns measure how quickly
//! injected bugs are found.

mod campaign;
mod model;
mod report;
mod scenario;
mod shrink;
mod tcp;

pub use campaign::{
    check, mutation_campaign, mutation_campaign_of, run_one, run_tests, Observation, Target, TestConfig,
};
pub use model::{run_scenario_model, run_scenario_model_with, ModelOutcome};
pub use report::{Counterexample, MutantResult, ScenarioVerdict, TestReport};
pub use scenario::{gen_scenario, Action, Limits, Scenario, Step};
pub use shrink::{reductions, shrink};
pub use tcp::{run_scenario_tcp, Launcher, ServerHandle, TcpConfig, TcpError, TcpRun};
