//! Running scenarios against the implementation model instead of a socket.
//!
//! The network and the server are both simulated: client steps drive the
//! network, and between them the model takes a random number of its
//! enabled steps. A receive that finds nothing to read lets the model run
//! until it produces bytes for that connection or gets stuck.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Action, Scenario};
use crate::impl_model::{impl_model_with, Endpoint, ModelMutant};
use crate::itree::{settle, DEFAULT_FUEL};
use crate::network_model::{client_step, ConnId, NetworkEvent, NetworkState, NetworkTrace};
use crate::refinement::impl_moves;

/// Result of a simulated run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelOutcome {
    /// What the client observed.
    pub client_trace: NetworkTrace,
    /// What the model did, in order.
    pub server_trace: NetworkTrace,
    /// Whether the server-step budget ran out.
    pub exhausted: bool,
}

/// Runs `sc` on the model with at most `depth` server steps. The random
/// schedule of server steps derives from the scenario seed.
pub fn run_scenario_model(sc: &Scenario, depth: usize) -> ModelOutcome {
    run_scenario_model_with(sc, depth, ModelMutant::None)
}

pub fn run_scenario_model_with(sc: &Scenario, depth: usize, mutant: ModelMutant) -> ModelOutcome {
    let ms = sc.message_size;
    let mut sim = Sim {
        rng: ChaCha8Rng::seed_from_u64(sc.seed ^ 0x6d6f_6465_6c00),
        tree: settle(impl_model_with(Endpoint(0), ms, mutant), DEFAULT_FUEL),
        ns: NetworkState::new(),
        steps_left: depth,
        out: ModelOutcome { client_trace: Vec::new(), server_trace: Vec::new(), exhausted: false },
    };
    let id = |c: usize| ConnId(c as u32 + 1);
    let mut closed = vec![false; sc.connections.len()];

    for step in &sc.schedule {
        let burst = sim.rng.gen_range(0..=2);
        sim.server_steps(burst);
        let c = step.conn;
        match &step.action {
            Action::Open => sim.client(NetworkEvent::NewConnection(id(c))),
            Action::Send { msg, start, end } => {
                for &b in &sc.connections[c][*msg][*start..*end] {
                    sim.client(NetworkEvent::ToServer(id(c), b));
                }
            }
            Action::Recv { max } if !closed[c] => {
                sim.run_until_output(id(c));
                sim.read(id(c), *max);
            }
            Action::Recv { .. } => {}
            Action::Close => closed[c] = true,
        }
    }
    // Final drain, mirroring the socket runner.
    for (c, &is_closed) in closed.iter().enumerate() {
        if !is_closed {
            sim.run_until_output(id(c));
            sim.read(id(c), usize::MAX);
        }
    }
    sim.out
}

struct Sim {
    rng: ChaCha8Rng,
    tree: crate::impl_model::ImplTree<()>,
    ns: NetworkState,
    steps_left: usize,
    out: ModelOutcome,
}

impl Sim {
    fn client(&mut self, ev: NetworkEvent) {
        if client_step(&ev, &mut self.ns) {
            self.out.client_trace.push(ev);
        }
    }

    /// Takes one random enabled server step; false if none is enabled.
    fn server_step(&mut self) -> bool {
        if self.steps_left == 0 {
            self.out.exhausted = true;
            return false;
        }
        let mut moves = impl_moves(&self.tree, &self.ns, false);
        if moves.is_empty() {
            return false;
        }
        let m = moves.swap_remove(self.rng.gen_range(0..moves.len()));
        self.steps_left -= 1;
        self.out.server_trace.extend(m.events);
        self.tree = m.next;
        self.ns = m.ns;
        true
    }

    fn server_steps(&mut self, n: usize) {
        for _ in 0..n {
            if !self.server_step() {
                break;
            }
        }
    }

    fn pending_output(&self, c: ConnId) -> bool {
        self.ns.from_server(c).next().is_some()
    }

    fn run_until_output(&mut self, c: ConnId) {
        while !self.pending_output(c) && self.server_step() {}
    }

    fn read(&mut self, c: ConnId, max: usize) {
        let bytes: Vec<u8> = self.ns.from_server(c).take(max).collect();
        for b in bytes {
            self.client(NetworkEvent::FromServer(c, b));
        }
    }
}
