//! The `swapnet` command line.
//!
//! Exit codes are a stable contract: 0 pass, 1 counterexample found,
//! 2 usage or parse error, 3 search budget exceeded (inconclusive).
//! Every flag can also be set through a `SWAP_`-prefixed environment
//! variable; an explicit flag wins.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::impl_model::ModelMutant;
use crate::network_model::ConnId;
use crate::refinement::{
    network_refines_bounded, spec_behavior_member_with, RefineConfig, RefineOutcome, SearchLimits, Verdict,
};
use crate::server::{self, mutant_registry, Mutant, ServerConfig};
use crate::swap_spec::{linear_spec, DEFAULT_MESSAGE_SIZE};
use crate::tester::{mutation_campaign, run_tests, Launcher, Limits, Target, TcpConfig, TestConfig, TestReport};
use crate::trace_file::{self, render};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_COUNTEREXAMPLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "swapnet", version, about = "Swap server, specification checker and property-based tester")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the swap server. Prints `listening on ADDR` once bound.
    Serve(ServeArgs),
    /// Run randomized client scenarios and check every observation.
    Test(TestArgs),
    /// Check one client-side trace file against the linear specification.
    Check(CheckArgs),
    /// Bounded refinement of the implementation model.
    ModelRefine(RefineArgs),
    /// List the injectable server mutants.
    Mutants,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SWAP_HOST", default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// TCP port; 0 picks a free one.
    #[arg(long, env = "SWAP_PORT", default_value_t = 8421)]
    pub port: u16,
    #[arg(long, env = "SWAP_MESSAGE_SIZE", default_value_t = DEFAULT_MESSAGE_SIZE, value_parser = positive())]
    pub message_size: usize,
    #[arg(long, env = "SWAP_MAX_CONNS", default_value_t = 64)]
    pub max_conns: usize,
    /// Inject mutant 1 to 12 (see `swapnet mutants`).
    #[arg(long, env = "SWAP_MUTANT")]
    pub mutant: Option<Mutant>,
    /// Append every network event the server performs to this trace file.
    #[arg(long, env = "SWAP_LOG_EFFECTS")]
    pub log_effects: Option<PathBuf>,
    #[arg(long, env = "SWAP_POLL_TIMEOUT_MS", default_value_t = 50)]
    pub poll_timeout_ms: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TargetKind {
    Tcp,
    Model,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long, env = "SWAP_TARGET", value_enum, default_value_t = TargetKind::Tcp)]
    pub target: TargetKind,
    /// Test an already running server instead of starting a fresh one per
    /// scenario.
    #[arg(long, env = "SWAP_ADDR")]
    pub addr: Option<SocketAddr>,
    /// Inclusive seed range `A..B`, or a single seed.
    #[arg(long, env = "SWAP_SEEDS", default_value = "0..999", value_parser = parse_seeds)]
    pub seeds: RangeInclusive<u64>,
    /// Wall-clock budget in seconds.
    #[arg(long, env = "SWAP_BUDGET_SECS", default_value_t = 300)]
    pub budget_secs: u64,
    #[arg(long, env = "SWAP_MESSAGE_SIZE", default_value_t = DEFAULT_MESSAGE_SIZE, value_parser = positive())]
    pub message_size: usize,
    #[arg(long, env = "SWAP_MAX_CONNS", default_value_t = 5)]
    pub max_conns: usize,
    #[arg(long, env = "SWAP_MAX_MESSAGES", default_value_t = 4)]
    pub max_messages: usize,
    /// Start the servers under test with this mutant.
    #[arg(long, env = "SWAP_MUTANT")]
    pub mutant: Option<Mutant>,
    /// Model variant for `--target model`: none, echo or no-swap.
    #[arg(long, env = "SWAP_MODEL_MUTANT", default_value = "none")]
    pub model_mutant: ModelMutant,
    /// Server steps per scenario for `--target model`.
    #[arg(long, env = "SWAP_MODEL_DEPTH", default_value_t = 400)]
    pub model_depth: usize,
    #[arg(long, env = "SWAP_REPLY_TIMEOUT_MS", default_value_t = 2000)]
    pub reply_timeout_ms: u64,
    /// Run every registered mutant in turn and report tests-to-kill.
    #[arg(long)]
    pub campaign: bool,
    #[arg(long)]
    pub no_shrink: bool,
    /// Write the JSON report here.
    #[arg(long, env = "SWAP_REPORT")]
    pub report: Option<PathBuf>,
    /// Write the shrunk counterexample trace here.
    #[arg(long, env = "SWAP_COUNTEREXAMPLE", default_value = "swapnet-counterexample.trace")]
    pub counterexample: PathBuf,
    /// Server executable for fresh servers; defaults to this executable.
    #[arg(long, env = "SWAP_SERVER_BIN")]
    pub server_bin: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub trace: PathBuf,
    #[arg(long, env = "SWAP_MESSAGE_SIZE", default_value_t = DEFAULT_MESSAGE_SIZE, value_parser = positive())]
    pub message_size: usize,
    /// Search node budget.
    #[arg(long, env = "SWAP_CHECK_BUDGET", default_value_t = 5_000_000)]
    pub budget: usize,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Maximum number of client-observed events.
    #[arg(long, env = "SWAP_DEPTH", default_value_t = 8)]
    pub depth: usize,
    /// Bytes clients may send.
    #[arg(long, env = "SWAP_ALPHABET", default_value = "ab")]
    pub alphabet: String,
    /// Number of connection ids (1..=N).
    #[arg(long, env = "SWAP_CONN_IDS", default_value_t = 2)]
    pub conn_ids: u32,
    #[arg(long, env = "SWAP_MESSAGE_SIZE", default_value_t = 1, value_parser = positive())]
    pub message_size: usize,
    /// none, echo or no-swap.
    #[arg(long, env = "SWAP_MODEL_MUTANT", default_value = "none")]
    pub model_mutant: ModelMutant,
    #[arg(long, env = "SWAP_REFINE_BUDGET", default_value_t = 50_000_000)]
    pub budget: usize,
}

fn positive() -> clap::builder::RangedU64ValueParser<usize> {
    clap::builder::RangedU64ValueParser::new().range(1..)
}

fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}"));
    let range = match s.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.strip_prefix('=').unwrap_or(b))?,
        None => num(s)?..=num(s)?,
    };
    if range.is_empty() {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(range)
}

/// Parses the process arguments and runs the command.
pub fn main() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Serve(a) => cmd_serve(a),
        Command::Test(a) => cmd_test(a),
        Command::Check(a) => cmd_check(a),
        Command::ModelRefine(a) => cmd_model_refine(a),
        Command::Mutants => {
            for (id, desc) in mutant_registry() {
                println!("{id:>2}  {desc}");
            }
            EXIT_PASS
        }
    }
}

pub fn cmd_serve(a: ServeArgs) -> i32 {
    let cfg = ServerConfig {
        addr: SocketAddr::new(a.host, a.port),
        message_size: a.message_size,
        max_connections: a.max_conns.max(1),
        poll_timeout_ms: a.poll_timeout_ms,
        mutant: a.mutant,
        log_effects: a.log_effects,
    };
    let mut srv = match server::bind(cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("swapnet: cannot start server: {e}");
            return EXIT_USAGE;
        }
    };
    match srv.local_addr() {
        Ok(addr) => {
            println!("listening on {addr}");
            let _ = std::io::stdout().flush();
        }
        Err(e) => {
            eprintln!("swapnet: {e}");
            return EXIT_USAGE;
        }
    }
    match srv.serve() {
        Ok(()) => EXIT_PASS,
        Err(e) => {
            eprintln!("swapnet: server failed: {e}");
            EXIT_USAGE
        }
    }
}

fn print_report(r: &TestReport) {
    println!(
        "{}: {} scenarios, {} accepted, {} rejected, {} inconclusive, {} discarded, {} errors, {} ms",
        r.target, r.scenarios_run, r.accepted, r.rejected, r.inconclusive, r.discarded, r.errors, r.elapsed_ms
    );
    for m in &r.mutants {
        match m.tests_to_kill {
            Some(n) => println!("  mutant {:>2} killed after {n} scenario(s): {}", m.mutant, m.description),
            None => println!("  mutant {:>2} SURVIVED {} scenario(s): {}", m.mutant, m.scenarios_run, m.description),
        }
    }
}

pub fn cmd_test(a: TestArgs) -> i32 {
    let launcher = match a.server_bin.clone().map(Ok).unwrap_or_else(std::env::current_exe) {
        Ok(bin) => Launcher::Process(bin),
        Err(e) => {
            eprintln!("swapnet: cannot locate server executable: {e}");
            return EXIT_USAGE;
        }
    };
    let cfg = TestConfig {
        first_seed: *a.seeds.start(),
        max_scenarios: (a.seeds.end() - a.seeds.start()).saturating_add(1) as usize,
        time_budget: Duration::from_secs(a.budget_secs),
        limits: Limits { max_connections: a.max_conns, max_messages: a.max_messages, message_size: a.message_size },
        tcp: TcpConfig { reply_timeout: Duration::from_millis(a.reply_timeout_ms), ..TcpConfig::default() },
        shrink: !a.no_shrink,
        ..TestConfig::default()
    };

    let report = if a.campaign {
        mutation_campaign(&launcher, &cfg)
    } else {
        let target = match (a.target, a.addr) {
            (TargetKind::Model, _) => Target::Model { mutant: a.model_mutant, depth: a.model_depth },
            (TargetKind::Tcp, Some(addr)) => Target::Shared(addr),
            (TargetKind::Tcp, None) => Target::Fresh { launcher, mutant: a.mutant },
        };
        run_tests(&target, &cfg)
    };
    print_report(&report);
    if let Some(path) = &a.report {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            eprintln!("swapnet: writing {}: {e}", path.display());
        }
    }

    if a.campaign {
        return if report.mutants.iter().all(|m| m.killed) { EXIT_PASS } else { EXIT_BUDGET };
    }
    if let Some(cx) = &report.counterexample {
        println!(
            "counterexample: seed {}, shrunk from measure {} to {}",
            cx.seed,
            cx.original_measure,
            cx.scenario.measure()
        );
        print!("{}", cx.trace);
        let text = format!(
            "# seed {}\n# rejected prefix:\n{}# observation:\n{}",
            cx.seed,
            comment(&cx.rejected_prefix),
            cx.trace
        );
        match std::fs::write(&a.counterexample, text) {
            Ok(()) => println!("written to {}", a.counterexample.display()),
            Err(e) => eprintln!("swapnet: writing {}: {e}", a.counterexample.display()),
        }
    }
    if report.rejected > 0 {
        EXIT_COUNTEREXAMPLE
    } else if report.errors > 0 && report.errors == report.scenarios_run {
        EXIT_USAGE
    } else if report.inconclusive > 0 {
        EXIT_BUDGET
    } else {
        EXIT_PASS
    }
}

fn comment(text: &str) -> String {
    text.lines().map(|l| format!("#   {l}\n")).collect()
}

pub fn cmd_check(a: CheckArgs) -> i32 {
    let trace = match trace_file::read(&a.trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("swapnet: {e}");
            return EXIT_USAGE;
        }
    };
    let limits = SearchLimits { budget: a.budget, ..SearchLimits::default() };
    match spec_behavior_member_with(&linear_spec(a.message_size), &trace, a.message_size, limits) {
        Verdict::Accepted { witness } => {
            println!("accepted");
            println!("# witness: a server-side specification trace explaining the observation");
            print!("{}", render(&witness));
            EXIT_PASS
        }
        Verdict::Rejected { counterexample } => {
            println!("rejected");
            println!("# shortest prefix no specification trace explains");
            print!("{}", render(&counterexample));
            EXIT_COUNTEREXAMPLE
        }
        Verdict::BudgetExceeded => {
            println!("inconclusive: search budget of {} exceeded", a.budget);
            EXIT_BUDGET
        }
    }
}

pub fn cmd_model_refine(a: RefineArgs) -> i32 {
    let cfg = RefineConfig {
        depth: a.depth,
        alphabet: a.alphabet.into_bytes(),
        conn_ids: (1..=a.conn_ids).map(ConnId).collect(),
        message_size: a.message_size,
        mutant: a.model_mutant,
        budget: a.budget,
    };
    if cfg.alphabet.is_empty() || cfg.conn_ids.is_empty() {
        eprintln!("swapnet: alphabet and connection id pool must be non-empty");
        return EXIT_USAGE;
    }
    match network_refines_bounded(&cfg) {
        RefineOutcome::Holds { nodes } => {
            println!("holds up to depth {} ({} search nodes, model {})", cfg.depth, nodes, cfg.mutant.tag());
            EXIT_PASS
        }
        RefineOutcome::Counterexample { trace } => {
            println!("counterexample: a client trace of {} the linear specification cannot explain", cfg.mutant.tag());
            print!("{}", render(&trace));
            EXIT_COUNTEREXAMPLE
        }
        RefineOutcome::BudgetExceeded { nodes } => {
            println!("inconclusive: budget exceeded after {nodes} search nodes");
            EXIT_BUDGET
        }
    }
}
