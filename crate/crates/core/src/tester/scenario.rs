//! Randomized client scenarios.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generation limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_connections: usize,
    pub max_messages: usize,
    pub message_size: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_connections: 5, max_messages: 4, message_size: crate::swap_spec::DEFAULT_MESSAGE_SIZE }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Open,
    /// Send bytes `start..end` of message `msg` of this connection.
    Send {
        msg: usize,
        start: usize,
        end: usize,
    },
    /// Receive up to `max` bytes.
    Recv {
        max: usize,
    },
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub conn: usize,
    pub action: Action,
}

/// A client workload: the messages each connection sends and one global
/// interleaving of every connection's steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub message_size: usize,
    /// `connections[c]` lists the requests sent on connection `c`.
    pub connections: Vec<Vec<Vec<u8>>>,
    pub schedule: Vec<Step>,
}

impl Scenario {
    /// Total size used by the shrinker; every reduction decreases it.
    pub fn measure(&self) -> usize {
        self.connections.len() + self.connections.iter().map(Vec::len).sum::<usize>() + self.schedule.len()
    }

    /// Checks the structural invariants: every connection opens first and
    /// at most once, sends partition each message in order, and steps only
    /// name declared connections.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.connections.len();
        let mut opened = vec![false; n];
        let mut closed = vec![false; n];
        // Next (message, offset) expected on each connection.
        let mut cursor = vec![(0usize, 0usize); n];
        for (i, step) in self.schedule.iter().enumerate() {
            let c = step.conn;
            if c >= n {
                return Err(format!("step {i} names undeclared connection {c}"));
            }
            if closed[c] {
                return Err(format!("step {i} uses closed connection {c}"));
            }
            match &step.action {
                Action::Open => {
                    if opened[c] {
                        return Err(format!("step {i} reopens connection {c}"));
                    }
                    opened[c] = true;
                }
                _ if !opened[c] => return Err(format!("step {i} uses connection {c} before opening it")),
                Action::Send { msg, start, end } => {
                    let (m, off) = cursor[c];
                    if (*msg, *start) != (m, off) || end <= start || *end > self.message_size {
                        return Err(format!("step {i} sends {msg}[{start}..{end}] out of order"));
                    }
                    cursor[c] = if *end == self.message_size { (m + 1, 0) } else { (m, *end) };
                }
                Action::Recv { max } => {
                    if *max == 0 {
                        return Err(format!("step {i} receives zero bytes"));
                    }
                }
                Action::Close => closed[c] = true,
            }
        }
        for (c, msgs) in self.connections.iter().enumerate() {
            if msgs.iter().any(|m| m.len() != self.message_size) {
                return Err(format!("connection {c} has a message of the wrong size"));
            }
            // A connection may be closed before all its messages are sent;
            // otherwise every message must be sent in full.
            if !closed[c] && cursor[c] != (msgs.len(), 0) {
                return Err(format!("connection {c} does not send all its messages"));
            }
            if cursor[c].0 > msgs.len() {
                return Err(format!("connection {c} sends undeclared messages"));
            }
        }
        Ok(())
    }

    /// True when sends of two different connections interleave within one
    /// message, i.e. another connection sends between two chunks.
    pub fn has_cross_connection_interleaving(&self) -> bool {
        let mut mid_message: Vec<bool> = vec![false; self.connections.len()];
        for step in &self.schedule {
            if let Action::Send { end, .. } = step.action {
                if mid_message.iter().enumerate().any(|(c, &m)| m && c != step.conn) {
                    return true;
                }
                mid_message[step.conn] = end != self.message_size;
            }
        }
        false
    }
}

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

/// Generates a scenario, deterministically in `seed`.
///
/// Connection counts favor two to five connections. Requests are split
/// into random chunks, receives are sprinkled between chunks (so early
/// replies are observable), and some connections close after their last
/// request.
pub fn gen_scenario(seed: u64, limits: &Limits) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = limits.message_size.max(1);
    let weights = [1, 3, 3, 2, 2];
    let max_conns = limits.max_connections.clamp(1, weights.len());
    let total: u32 = weights[..max_conns].iter().sum();
    let mut pick = rng.gen_range(0..total);
    let mut n_conns = 1;
    for (i, w) in weights[..max_conns].iter().enumerate() {
        if pick < *w {
            n_conns = i + 1;
            break;
        }
        pick -= w;
    }

    let mut connections = Vec::with_capacity(n_conns);
    let mut programs: Vec<Vec<Step>> = Vec::with_capacity(n_conns);
    for conn in 0..n_conns {
        let n_msgs = rng.gen_range(1..=limits.max_messages.max(1));
        let msgs: Vec<Vec<u8>> =
            (0..n_msgs).map(|_| (0..ms).map(|_| *ALPHABET.choose(&mut rng).unwrap()).collect()).collect();
        let mut prog = vec![Step { conn, action: Action::Open }];
        for msg in 0..n_msgs {
            let mut start = 0;
            while start < ms {
                let end = (start + rng.gen_range(1..=ms)).min(ms);
                prog.push(Step { conn, action: Action::Send { msg, start, end } });
                if rng.gen_bool(0.35) {
                    prog.push(Step { conn, action: Action::Recv { max: rng.gen_range(1..=ms) } });
                }
                start = end;
            }
            if rng.gen_bool(0.8) {
                prog.push(Step { conn, action: Action::Recv { max: ms } });
            }
        }
        if rng.gen_bool(0.3) {
            prog.push(Step { conn, action: Action::Close });
        }
        connections.push(msgs);
        programs.push(prog);
    }

    // Random interleaving that keeps each connection's order.
    let mut schedule = Vec::new();
    let mut next = vec![0usize; n_conns];
    loop {
        let live: Vec<usize> = (0..n_conns).filter(|&c| next[c] < programs[c].len()).collect();
        let Some(&c) = live.choose(&mut rng) else { break };
        // Runs of steps on one connection keep many scenarios sequential.
        let run = rng.gen_range(1..=3);
        for _ in 0..run {
            if next[c] < programs[c].len() {
                schedule.push(programs[c][next[c]].clone());
                next[c] += 1;
            }
        }
    }
    Scenario { seed, message_size: ms, connections, schedule }
}
