//! Machine-readable test results.
//!
//! Serialized with serde; key names are part of the command-line contract
//! and are listed in the README.

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;

/// The outcome of checking one scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ScenarioVerdict {
    Accepted,
    /// `prefix` is the shortest rejected prefix of the observation, in the
    /// trace file format.
    Rejected {
        prefix: String,
    },
    /// The membership search ran out of budget.
    Inconclusive,
    /// No reply byte was observed at all.
    Discarded,
    /// The scenario could not be run (e.g. connection refused).
    Error {
        message: String,
    },
}

/// A failing scenario, after shrinking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Regenerates the original scenario with the same limits.
    pub seed: u64,
    pub original_measure: usize,
    pub scenario: Scenario,
    /// The observation of the shrunk scenario, in the trace file format.
    pub trace: String,
    pub rejected_prefix: String,
    pub shrink_attempts: usize,
}

/// Kill statistics for one mutant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantResult {
    pub mutant: u8,
    pub description: String,
    pub killed: bool,
    /// Scenarios run up to and including the killing one.
    pub tests_to_kill: Option<usize>,
    pub scenarios_run: usize,
    pub discarded: usize,
    pub elapsed_ms: u64,
    pub killing_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub target: String,
    pub scenarios_run: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub inconclusive: usize,
    pub discarded: usize,
    pub errors: usize,
    pub elapsed_ms: u64,
    pub counterexample: Option<Counterexample>,
    /// Filled in by mutation campaigns only.
    pub mutants: Vec<MutantResult>,
}

impl TestReport {
    pub fn record(&mut self, v: &ScenarioVerdict) {
        self.scenarios_run += 1;
        match v {
            ScenarioVerdict::Accepted => self.accepted += 1,
            ScenarioVerdict::Rejected { .. } => self.rejected += 1,
            ScenarioVerdict::Inconclusive => self.inconclusive += 1,
            ScenarioVerdict::Discarded => self.discarded += 1,
            ScenarioVerdict::Error { .. } => self.errors += 1,
        }
    }

    pub fn killed(&self) -> usize {
        self.mutants.iter().filter(|m| m.killed).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
