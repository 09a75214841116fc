//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed; exits nonzero if any
//! criterion fails.

mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use swapnet::fixtures::{disordered_observation, sequential_session, MESSAGE_SIZE};
use swapnet::impl_model::ModelMutant;
use swapnet::network_model::ConnId;
use swapnet::refinement::{network_refines_bounded, spec_behavior_member, RefineConfig, RefineOutcome};
use swapnet::server::ALL_MUTANTS;
use swapnet::swap_spec::flatten_to_network;
use swapnet::tester::{
    mutation_campaign, run_scenario_tcp, run_tests, Action, Launcher, Scenario, Step, Target, TcpConfig, TestConfig,
};
use swapnet::trace_file;

type Outcome = Result<String, String>;

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_swapnet"))
}

fn launcher() -> Launcher {
    Launcher::Process(binary())
}

// 1. The three-client sequential run against the live server, and the
//    disordered observation checked from a trace file.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let server = launcher().launch(MESSAGE_SIZE, None).map_err(|e| e.to_string())?;
    let mut replies = Vec::new();
    for request in [b"abc", b"def", b"ghi"] {
        let mut s = TcpStream::connect(server.addr).map_err(|e| e.to_string())?;
        s.set_read_timeout(Some(Duration::from_secs(2))).map_err(|e| e.to_string())?;
        s.write_all(request).map_err(|e| e.to_string())?;
        let mut buf = [0u8; 3];
        s.read_exact(&mut buf).map_err(|e| e.to_string())?;
        replies.push(buf.to_vec());
    }
    if replies != [vec![0, 0, 0], b"abc".to_vec(), b"def".to_vec()] {
        return Err(format!("replies {replies:?}"));
    }

    // The same session with chunked, interleaved sends, as a live run.
    let chunked = Scenario {
        seed: 0,
        message_size: 3,
        connections: vec![vec![b"abc".to_vec()], vec![b"def".to_vec()], vec![b"ghi".to_vec()]],
        schedule: vec![
            Step { conn: 0, action: Action::Open },
            Step { conn: 0, action: Action::Send { msg: 0, start: 0, end: 1 } },
            Step { conn: 1, action: Action::Open },
            Step { conn: 1, action: Action::Send { msg: 0, start: 0, end: 1 } },
            Step { conn: 0, action: Action::Send { msg: 0, start: 1, end: 3 } },
            Step { conn: 0, action: Action::Recv { max: 3 } },
            Step { conn: 1, action: Action::Send { msg: 0, start: 1, end: 3 } },
            Step { conn: 2, action: Action::Open },
            Step { conn: 2, action: Action::Send { msg: 0, start: 0, end: 3 } },
            Step { conn: 1, action: Action::Recv { max: 3 } },
            Step { conn: 2, action: Action::Recv { max: 3 } },
        ],
    };
    chunked.validate()?;
    let fresh = launcher().launch(MESSAGE_SIZE, None).map_err(|e| e.to_string())?;
    let live = run_scenario_tcp(&chunked, fresh.addr, &TcpConfig::default()).map_err(|e| e.to_string())?;
    if !spec_behavior_member(&live.trace, MESSAGE_SIZE).is_accepted() || live.reply_bytes != 9 {
        return Err(format!("chunked live run not accepted: {:?}", live.trace));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("disordered.trace");
    std::fs::write(&path, trace_file::render(&disordered_observation())).map_err(|e| e.to_string())?;
    let out = Command::new(binary()).arg("check").arg(&path).output().map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    if out.status.code() != Some(0) || !stdout.starts_with("accepted") {
        return Err(format!("check exited {:?}: {stdout}", out.status.code()));
    }
    let printed = trace_file::parse(stdout.trim_start_matches("accepted")).map_err(|e| e.to_string())?;
    let expected = flatten_to_network(&sequential_session(), MESSAGE_SIZE).map_err(|e| e.to_string())?;
    if printed != expected {
        return Err(format!("witness {printed:?} differs from the sequential session"));
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(5) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("replies 000/abc/def byte-exact, witness of {} events matches, {elapsed:.2?}", printed.len()))
}

// 2. Mutation campaigns: every mutant killed within budget, and at least 9
//    of 12 killed within two scenarios in each of 10 campaigns.
fn criterion_2() -> Outcome {
    let mut early_counts = Vec::new();
    let mut worst = 0;
    for round in 0..10u64 {
        let cfg = TestConfig {
            first_seed: round * 100_000 + 7,
            max_scenarios: 1000,
            time_budget: Duration::from_secs(300),
            tcp: TcpConfig { reply_timeout: Duration::from_millis(300), ..TcpConfig::default() },
            ..TestConfig::default()
        };
        let report = mutation_campaign(&launcher(), &cfg);
        if report.mutants.len() != ALL_MUTANTS.len() {
            return Err("campaign skipped mutants".into());
        }
        if let Some(m) = report.mutants.iter().find(|m| !m.killed) {
            return Err(format!("round {round}: mutant {} survived {} scenarios", m.mutant, m.scenarios_run));
        }
        let early = report.mutants.iter().filter(|m| m.tests_to_kill.is_some_and(|n| n <= 2)).count();
        worst = worst.max(report.mutants.iter().filter_map(|m| m.tests_to_kill).max().unwrap_or(0));
        early_counts.push(early);
    }
    let min_early = *early_counts.iter().min().unwrap();
    if min_early < 9 {
        return Err(format!("killed within 2 scenarios per round: {early_counts:?}"));
    }
    Ok(format!(
        "12/12 killed in all 10 rounds (worst {worst} scenarios); within 2 scenarios per round: {early_counts:?}"
    ))
}

// 3. No false positives over 1,000 seeds; discards below 1%.
fn criterion_3() -> Outcome {
    let cfg = TestConfig {
        first_seed: 0,
        max_scenarios: 1000,
        stop_on_failure: false,
        shrink: false,
        ..TestConfig::default()
    };
    let r = run_tests(&Target::Fresh { launcher: launcher(), mutant: None }, &cfg);
    if r.scenarios_run != 1000 || r.rejected != 0 || r.errors != 0 || r.discarded >= 10 {
        return Err(format!(
            "{} run, {} rejected, {} discarded, {} errors, {:?}",
            r.scenarios_run, r.rejected, r.discarded, r.errors, r.counterexample
        ));
    }
    Ok(format!(
        "1000 scenarios: {} accepted, 0 rejected, {} inconclusive, {} discarded, {} ms",
        r.accepted, r.inconclusive, r.discarded, r.elapsed_ms
    ))
}

// 4. Bounded refinement of the model at depth 8, alphabet 2, two ids,
//    message size 1; mutants yield counterexamples.
fn criterion_4() -> Outcome {
    let cfg = |mutant| RefineConfig {
        depth: 8,
        alphabet: vec![b'a', b'b'],
        conn_ids: vec![ConnId(1), ConnId(2)],
        message_size: 1,
        mutant,
        ..RefineConfig::default()
    };
    let start = Instant::now();
    let nodes = match network_refines_bounded(&cfg(ModelMutant::None)) {
        RefineOutcome::Holds { nodes } => nodes,
        other => return Err(format!("unmutated model: {other:?}")),
    };
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(120) {
        return Err(format!("took {elapsed:?}"));
    }
    let mut found = Vec::new();
    for m in [ModelMutant::Echo, ModelMutant::NoSwap] {
        match network_refines_bounded(&cfg(m)) {
            RefineOutcome::Counterexample { trace }
                if trace.len() <= 8 && spec_behavior_member(&trace, 1).is_rejected() =>
            {
                found.push(format!("{} at {} events", m.tag(), trace.len()))
            }
            other => return Err(format!("{}: {other:?}", m.tag())),
        }
    }
    let (visited, missing) = common::refinement_oracle(5, ModelMutant::None);
    if missing.is_some() {
        return Err(format!("per-trace oracle disagrees: {missing:?}"));
    }
    Ok(format!(
        "holds at depth 8 ({nodes} nodes, {elapsed:.2?}); {}; per-trace oracle agrees to depth 5 ({visited} traces)",
        found.join(", ")
    ))
}

// 5. Oracle equivalence for the reordering relation and for membership.
fn criterion_5() -> Outcome {
    let pairs = common::reorder_pairs(2024, 1000, 8);
    let mut holds = 0;
    for (ts, tc) in &pairs {
        holds += common::reorder_agree(ts, tc)? as usize;
    }
    let traces = common::observed_traces(7, 200, 10);
    let mut accepted = 0;
    for tc in &traces {
        if tc.len() > 10 {
            return Err("observed trace too long".into());
        }
        accepted += common::membership_agree(tc)? as usize;
    }
    Ok(format!("reordering: 1000/1000 agree ({holds} related); membership: 200/200 agree ({accepted} accepted)"))
}

// 6. ITree laws on 500 random finite trees, plus prefix closure and spin.
fn criterion_6() -> Outcome {
    let runner = || {
        TestRunner::new_with_rng(
            Config { cases: 500, failure_persistence: None, ..Config::default() },
            TestRng::deterministic_rng(RngAlgorithm::ChaCha),
        )
    };
    runner()
        .run(&common::law_case(), |c| common::check_laws(&c).map_err(proptest::test_runner::TestCaseError::fail))
        .map_err(|e| e.to_string())?;
    runner()
        .run(&common::shape(), |s| {
            common::check_trace_semantics(&s).map_err(proptest::test_runner::TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;
    runner()
        .run(&common::shape(), |s| common::check_spin(&s).map_err(proptest::test_runner::TestCaseError::fail))
        .map_err(|e| e.to_string())?;
    Ok("5 laws at fuel 50, prefix closure, enumeration/is_trace agreement and spin on 500 trees each".into())
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 6] = [
        ("live sequential session and disordered observation", criterion_1),
        ("mutation campaign", criterion_2),
        ("no false positives", criterion_3),
        ("bounded model refinement", criterion_4),
        ("oracle equivalence", criterion_5),
        ("interaction tree laws", criterion_6),
    ];
    let mut failures = 0;
    let mut substitutes_ok = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let outcome = check();
        let tag = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = outcome.as_ref().unwrap_or_else(|e| e);
        println!("{tag} criterion {n}: {name}: {detail} [{:.1?}]", start.elapsed());
        if outcome.is_err() {
            failures += 1;
            substitutes_ok &= !(4..=6).contains(&n);
        }
    }
    // Machine-checked proofs are out of scope; criteria 4 to 6 stand in.
    let tag = if substitutes_ok { "PASS" } else { "FAIL" };
    println!(
        "{tag} criterion 7: scope: mechanized proofs and verified C are not reproduced; \
         replaced by bounded refinement, oracle equivalence and law checks (criteria 4-6)"
    );
    if !substitutes_ok {
        failures += 1;
    }
    std::io::stdout().flush().ok();
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
