//! Bounded network refinement of the implementation model against the
//! specification.
//!
//! The search walks every client-observable trace of the model up to a
//! length bound. Both sides are determinized: a node holds the set of model
//! configurations and the set of specification configurations consistent
//! with the client trace so far. A trace is a counterexample exactly when
//! the model set is non-empty and the linear specification set becomes empty.
//! Nodes with equal sets are explored once.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::hash::{Hash, Hasher};

use super::member::tree_key;
use super::{impl_moves, spec_moves, MoveFn};
use crate::impl_model::{impl_model_with, Endpoint, ImplEffect, ModelMutant};
use crate::itree::{Effect, ITree};
use crate::network_model::{client_step, ConnId, NetworkEvent, NetworkState, NetworkTrace};
use crate::swap_spec::{linear_spec, SpecEffect};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefineConfig {
    /// Maximum number of client-observed network events.
    pub depth: usize,
    pub alphabet: Vec<u8>,
    pub conn_ids: Vec<ConnId>,
    pub message_size: usize,
    pub mutant: ModelMutant,
    /// Maximum number of search nodes.
    pub budget: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            depth: 8,
            alphabet: b"abcd".to_vec(),
            conn_ids: (1..=3).map(ConnId).collect(),
            message_size: 1,
            mutant: ModelMutant::None,
            budget: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefineOutcome {
    /// Every model trace up to the bound is explained by the linear specification.
    /// `nodes` counts distinct search nodes.
    Holds {
        nodes: usize,
    },
    /// A client trace of the model that the linear specification cannot produce.
    /// Every proper prefix ending in a receive is explained.
    Counterexample {
        trace: NetworkTrace,
    },
    BudgetExceeded {
        nodes: usize,
    },
}

type ConfigSet<E> = HashMap<(u64, NetworkState), ITree<E, ()>>;

fn singleton<E: Effect>(t: ITree<E, ()>) -> ConfigSet<E> {
    HashMap::from([((tree_key(&t), NetworkState::new()), t)])
}

fn digest<E: Effect>(set: &ConfigSet<E>) -> Vec<u64> {
    let mut hs: Vec<u64> = set
        .keys()
        .map(|k| {
            let mut h = DefaultHasher::new();
            k.hash(&mut h);
            h.finish()
        })
        .collect();
    hs.sort_unstable();
    hs
}

/// Applies a client event to every configuration; drops those where it is
/// disabled.
fn client_all<E: Effect>(set: &ConfigSet<E>, ev: &NetworkEvent) -> ConfigSet<E> {
    set.iter()
        .filter_map(|((label, ns), t)| {
            let mut ns = ns.clone();
            client_step(ev, &mut ns).then(|| ((*label, ns), t.clone()))
        })
        .collect()
}

/// Everything reachable by server steps alone.
fn closure<E: Effect>(set: &ConfigSet<E>, moves: MoveFn<'_, E>) -> ConfigSet<E> {
    let mut seen = set.clone();
    let mut queue: VecDeque<_> = set.iter().map(|(k, t)| (k.1.clone(), t.clone())).collect();
    while let Some((ns, t)) = queue.pop_front() {
        for m in moves(&t, &ns) {
            let key = (tree_key(&m.next), m.ns);
            if let std::collections::hash_map::Entry::Vacant(slot) = seen.entry(key) {
                queue.push_back((slot.key().1.clone(), m.next.clone()));
                slot.insert(m.next);
            }
        }
    }
    seen
}

/// Client receives available in a closed set, each with the configurations
/// after the receive.
fn receives<E: Effect>(closed: &ConfigSet<E>) -> Vec<(NetworkEvent, ConfigSet<E>)> {
    let mut heads: BTreeSet<NetworkEvent> = BTreeSet::new();
    for (_, ns) in closed.keys() {
        for (c, e) in ns.connections() {
            if let Some(&b) = e.from_server.front() {
                heads.insert(NetworkEvent::FromServer(c, b));
            }
        }
    }
    heads.into_iter().map(|ev| (ev, client_all(closed, &ev))).collect()
}

/// Digest of the model side, digest of the specification side, and the
/// connections the client has opened.
type NodeKey = (Vec<u64>, Vec<u64>, BTreeSet<ConnId>);

struct Search<'a> {
    cfg: &'a RefineConfig,
    impl_step: MoveFn<'a, ImplEffect>,
    spec_step: MoveFn<'a, SpecEffect>,
    /// Explored nodes with the most remaining depth they were explored at.
    seen: HashMap<NodeKey, usize>,
    nodes: usize,
}

enum Stop {
    Counterexample(NetworkTrace),
    Budget,
}

impl Search<'_> {
    fn run(
        &mut self,
        tc: &mut NetworkTrace,
        opened: &BTreeSet<ConnId>,
        imp: ConfigSet<ImplEffect>,
        spec: ConfigSet<SpecEffect>,
    ) -> Result<(), Stop> {
        let left = self.cfg.depth - tc.len();
        if left == 0 {
            return Ok(());
        }
        let key = (digest(&imp), digest(&spec), opened.clone());
        if self.seen.get(&key).is_some_and(|&d| d >= left) {
            return Ok(());
        }
        self.seen.insert(key, left);
        self.nodes += 1;
        if self.nodes > self.cfg.budget {
            return Err(Stop::Budget);
        }

        // Receives first, so short counterexamples are found early.
        let imp_closed = closure(&imp, self.impl_step);
        let imp_recvs = receives(&imp_closed);
        if !imp_recvs.is_empty() {
            let spec_closed = closure(&spec, self.spec_step);
            for (ev, imp_next) in imp_recvs {
                let spec_next = client_all(&spec_closed, &ev);
                tc.push(ev);
                if spec_next.is_empty() {
                    return Err(Stop::Counterexample(tc.clone()));
                }
                self.run(tc, opened, imp_next, spec_next)?;
                tc.pop();
            }
        }

        for &c in &self.cfg.conn_ids {
            let ev = if opened.contains(&c) { None } else { Some(NetworkEvent::NewConnection(c)) };
            let events: Vec<NetworkEvent> = match ev {
                Some(open) => vec![open],
                None => self.cfg.alphabet.iter().map(|&b| NetworkEvent::ToServer(c, b)).collect(),
            };
            for ev in events {
                let mut opened = opened.clone();
                opened.insert(c);
                tc.push(ev);
                self.run(tc, &opened, client_all(&imp, &ev), client_all(&spec, &ev))?;
                tc.pop();
            }
        }
        Ok(())
    }
}

/// Checks that every client-observable trace of the model with at most
/// `cfg.depth` events is a client-observable trace of the linear specification.
pub fn network_refines_bounded(cfg: &RefineConfig) -> RefineOutcome {
    let ms = cfg.message_size;
    let impl_step = |t: &ITree<ImplEffect, ()>, ns: &NetworkState| impl_moves(t, ns, true);
    let spec_step = move |t: &ITree<SpecEffect, ()>, ns: &NetworkState| spec_moves(t, ns, ms);
    let mut search = Search { cfg, impl_step: &impl_step, spec_step: &spec_step, seen: HashMap::new(), nodes: 0 };
    let imp = singleton(impl_model_with(Endpoint::default(), ms, cfg.mutant));
    let spec = singleton(linear_spec(ms));
    match search.run(&mut Vec::new(), &BTreeSet::new(), imp, spec) {
        Ok(()) => RefineOutcome::Holds { nodes: search.nodes },
        Err(Stop::Counterexample(trace)) => RefineOutcome::Counterexample { trace },
        Err(Stop::Budget) => RefineOutcome::BudgetExceeded { nodes: search.nodes },
    }
}
