//! Running many scenarios: plain test runs and mutation campaigns.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use super::model::run_scenario_model_with;
use super::report::{Counterexample, MutantResult, ScenarioVerdict, TestReport};
use super::scenario::{gen_scenario, Limits, Scenario};
use super::shrink::shrink;
use super::tcp::{run_scenario_tcp, Launcher, TcpConfig};
use crate::impl_model::ModelMutant;
use crate::network_model::{NetworkEvent, NetworkTrace};
use crate::refinement::{spec_behavior_member_with, SearchLimits, Verdict};
use crate::server::{Mutant, ALL_MUTANTS};
use crate::swap_spec::linear_spec;
use crate::trace_file::render;

/// What the scenarios run against.
#[derive(Debug, Clone)]
pub enum Target {
    /// A fresh server per scenario, so every run starts from the initial
    /// state and replays exactly.
    Fresh { launcher: Launcher, mutant: Option<Mutant> },
    /// A server that is already running. Before each scenario the stored
    /// message is reset by swapping in zeros on a throwaway connection.
    Shared(SocketAddr),
    /// The implementation model, simulated in-process.
    Model { mutant: ModelMutant, depth: usize },
}

impl Target {
    pub fn describe(&self) -> String {
        match self {
            Target::Fresh { mutant: Some(m), .. } => format!("tcp (mutant {m})"),
            Target::Fresh { mutant: None, .. } => "tcp".to_string(),
            Target::Shared(addr) => format!("tcp {addr}"),
            Target::Model { mutant, .. } => format!("model ({})", mutant.tag()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestConfig {
    pub first_seed: u64,
    pub max_scenarios: usize,
    pub time_budget: Duration,
    pub limits: Limits,
    pub tcp: TcpConfig,
    /// Budget of the membership search per scenario.
    pub check_budget: usize,
    pub shrink: bool,
    /// Stop at the first rejection.
    pub stop_on_failure: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            first_seed: 0,
            max_scenarios: 1000,
            time_budget: Duration::from_secs(300),
            limits: Limits::default(),
            tcp: TcpConfig::default(),
            check_budget: 2_000_000,
            shrink: true,
            stop_on_failure: true,
        }
    }
}

/// The outcome of one scenario together with what was observed.
#[derive(Debug, Clone)]
pub struct Observation {
    pub verdict: ScenarioVerdict,
    pub trace: NetworkTrace,
}

fn observe(target: &Target, sc: &Scenario, cfg: &TestConfig) -> Result<NetworkTrace, String> {
    match target {
        Target::Model { mutant, depth } => Ok(run_scenario_model_with(sc, *depth, *mutant).client_trace),
        Target::Fresh { launcher, mutant } => {
            let server = launcher.launch(sc.message_size, *mutant).map_err(|e| format!("launching server: {e}"))?;
            run_scenario_tcp(sc, server.addr, &cfg.tcp).map(|r| r.trace).map_err(|e| e.to_string())
        }
        Target::Shared(addr) => {
            reset_store(*addr, sc.message_size, cfg.tcp.reply_timeout).map_err(|e| format!("resetting server: {e}"))?;
            run_scenario_tcp(sc, *addr, &cfg.tcp).map(|r| r.trace).map_err(|e| e.to_string())
        }
    }
}

fn reset_store(addr: SocketAddr, message_size: usize, timeout: Duration) -> std::io::Result<()> {
    let mut s = TcpStream::connect(addr)?;
    s.set_read_timeout(Some(timeout))?;
    s.write_all(&vec![0; message_size])?;
    let mut buf = vec![0; message_size];
    s.read_exact(&mut buf)
}

/// Runs and checks one scenario.
pub fn run_one(target: &Target, sc: &Scenario, cfg: &TestConfig) -> Observation {
    let trace = match observe(target, sc, cfg) {
        Ok(t) => t,
        Err(message) => return Observation { verdict: ScenarioVerdict::Error { message }, trace: Vec::new() },
    };
    let verdict = check(&trace, sc.message_size, cfg.check_budget);
    Observation { verdict, trace }
}

/// Classifies an observation. Rejections win over discards: bytes that
/// cannot be explained are a failure even if no full reply arrived.
pub fn check(trace: &[NetworkEvent], message_size: usize, budget: usize) -> ScenarioVerdict {
    let limits = SearchLimits { budget, ..SearchLimits::default() };
    match spec_behavior_member_with(&linear_spec(message_size), trace, message_size, limits) {
        Verdict::Rejected { counterexample } => ScenarioVerdict::Rejected { prefix: render(&counterexample) },
        _ if !trace.iter().any(|e| matches!(e, NetworkEvent::FromServer(..))) => ScenarioVerdict::Discarded,
        Verdict::Accepted { .. } => ScenarioVerdict::Accepted,
        Verdict::BudgetExceeded => ScenarioVerdict::Inconclusive,
    }
}

fn minimize(
    target: &Target,
    seed: u64,
    sc: &Scenario,
    trace: NetworkTrace,
    prefix: String,
    cfg: &TestConfig,
) -> Counterexample {
    let original_measure = sc.measure();
    let mut last = (trace, prefix);
    let (scenario, shrink_attempts) = if cfg.shrink {
        shrink(sc, |cand| {
            let obs = run_one(target, cand, cfg);
            match obs.verdict {
                ScenarioVerdict::Rejected { prefix } => {
                    last = (obs.trace, prefix);
                    true
                }
                _ => false,
            }
        })
    } else {
        (sc.clone(), 0)
    };
    // `last` belongs to the most recent accepted reduction, which is the result.
    Counterexample {
        seed,
        original_measure,
        scenario,
        trace: render(&last.0),
        rejected_prefix: last.1,
        shrink_attempts,
    }
}

/// Generates and checks scenarios for seeds `first_seed..`, until the
/// scenario or time budget runs out, or (with `stop_on_failure`) the first
/// rejection, which is then shrunk.
pub fn run_tests(target: &Target, cfg: &TestConfig) -> TestReport {
    let start = Instant::now();
    let mut report = TestReport { target: target.describe(), ..TestReport::default() };
    for seed in cfg.first_seed..cfg.first_seed.saturating_add(cfg.max_scenarios as u64) {
        if start.elapsed() > cfg.time_budget {
            break;
        }
        let sc = gen_scenario(seed, &cfg.limits);
        let obs = run_one(target, &sc, cfg);
        report.record(&obs.verdict);
        if let ScenarioVerdict::Rejected { prefix } = obs.verdict {
            if report.counterexample.is_none() {
                report.counterexample = Some(minimize(target, seed, &sc, obs.trace, prefix, cfg));
            }
            if cfg.stop_on_failure {
                break;
            }
        }
    }
    report.elapsed_ms = start.elapsed().as_millis() as u64;
    report
}

/// Runs the tester against each registered server mutant in turn, with a
/// fresh server per scenario, and records how many scenarios it took to
/// kill each one. Unkilled mutants are reported, not raised.
pub fn mutation_campaign(launcher: &Launcher, cfg: &TestConfig) -> TestReport {
    mutation_campaign_of(launcher, &ALL_MUTANTS, cfg)
}

pub fn mutation_campaign_of(launcher: &Launcher, mutants: &[Mutant], cfg: &TestConfig) -> TestReport {
    let start = Instant::now();
    let mut report = TestReport { target: "tcp mutation campaign".to_string(), ..TestReport::default() };
    for &m in mutants {
        let target = Target::Fresh { launcher: launcher.clone(), mutant: Some(m) };
        let r = run_tests(&target, &TestConfig { stop_on_failure: true, shrink: false, ..cfg.clone() });
        let killing_seed = (r.rejected > 0).then(|| cfg.first_seed + r.scenarios_run as u64 - 1);
        report.scenarios_run += r.scenarios_run;
        report.accepted += r.accepted;
        report.rejected += r.rejected;
        report.inconclusive += r.inconclusive;
        report.discarded += r.discarded;
        report.errors += r.errors;
        report.mutants.push(MutantResult {
            mutant: m.id(),
            description: m.description().to_string(),
            killed: r.rejected > 0,
            tests_to_kill: (r.rejected > 0).then_some(r.scenarios_run),
            scenarios_run: r.scenarios_run,
            discarded: r.discarded,
            elapsed_ms: r.elapsed_ms,
            killing_seed,
        });
    }
    report.elapsed_ms = start.elapsed().as_millis() as u64;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(mutant: ModelMutant) -> Target {
        Target::Model { mutant, depth: 400 }
    }

    #[test]
    fn model_target_has_no_false_positives() {
        let cfg = TestConfig { max_scenarios: 60, ..TestConfig::default() };
        let r = run_tests(&model(ModelMutant::None), &cfg);
        assert_eq!(r.rejected, 0, "{:?}", r.counterexample);
        assert_eq!(r.scenarios_run, 60);
    }

    #[test]
    fn echo_model_is_caught_and_shrunk() {
        let r = run_tests(&model(ModelMutant::Echo), &TestConfig::default());
        let cx = r.counterexample.expect("echo model is rejected");
        assert!(cx.scenario.measure() <= cx.original_measure);
        assert_eq!(cx.scenario.connections.len(), 1);
        assert!(cx.scenario.connections[0].len() <= 2);
        // The shrunk scenario still fails.
        assert!(matches!(
            run_one(&model(ModelMutant::Echo), &cx.scenario, &TestConfig::default()).verdict,
            ScenarioVerdict::Rejected { .. }
        ));
    }

    #[test]
    fn zero_sends_observe_only_opens() {
        let sc = Scenario {
            seed: 0,
            message_size: 3,
            connections: vec![vec![], vec![]],
            schedule: vec![
                super::super::scenario::Step { conn: 0, action: super::super::scenario::Action::Open },
                super::super::scenario::Step { conn: 1, action: super::super::scenario::Action::Open },
            ],
        };
        sc.validate().unwrap();
        let obs = run_one(&model(ModelMutant::None), &sc, &TestConfig::default());
        assert_eq!(obs.trace.len(), 2);
        assert_eq!(obs.verdict, ScenarioVerdict::Discarded);
        assert!(crate::refinement::spec_behavior_member(&obs.trace, 3).is_accepted());
    }
}
