//! Membership of one observed trace in the network behavior of the
//! specification or of the implementation model.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use super::{impl_moves, spec_moves, CheckState, MoveFn, Verdict};
use crate::impl_model::{impl_model_with, Endpoint, ModelMutant};
use crate::itree::{enumerate_traces, Effect, ITree};
use crate::network_model::{
    brute_force_reordered, client_step, network_reordered_with_budget, ConnId, NetworkEvent, NetworkState, SearchError,
    BRUTE_FORCE_LIMIT, DEFAULT_SEARCH_BUDGET,
};
use crate::swap_spec::{flatten_to_network, linear_spec, SpecTree, SpecUniverse};

/// Bounds on a membership search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    /// Maximum number of search nodes before giving up.
    pub budget: usize,
    /// Maximum number of server-side steps along one explanation.
    pub max_server_steps: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { budget: DEFAULT_SEARCH_BUDGET, max_server_steps: usize::MAX }
    }
}

/// A memo key for a tree: its label, or a fresh value if it has none (such
/// trees are then never shared).
pub(crate) fn tree_key<E: Effect>(t: &ITree<E, ()>) -> u64 {
    static FRESH: AtomicU64 = AtomicU64::new(0);
    t.label().unwrap_or_else(|| u64::MAX - FRESH.fetch_add(1, Ordering::Relaxed))
}

struct Cosim<'a, E: Effect> {
    tc: &'a [NetworkEvent],
    moves: MoveFn<'a, E>,
    limits: SearchLimits,
    nodes: usize,
    exceeded: bool,
    deepest: usize,
    /// Failed configurations, with the most server steps they were given.
    failed: HashMap<(usize, u64, NetworkState), usize>,
}

impl<E: Effect> Cosim<'_, E> {
    fn search(&mut self, mut i: usize, mut st: CheckState<E>, steps_left: usize) -> Option<CheckState<E>> {
        // Client events run eagerly until a receive finds its queue empty.
        while i < self.tc.len() {
            let ev = self.tc[i];
            if let NetworkEvent::FromServer(c, _) = ev {
                if st.ns.from_server(c).next().is_none() {
                    break;
                }
            }
            if !client_step(&ev, &mut st.ns) {
                self.deepest = self.deepest.max(i);
                return None;
            }
            i += 1;
        }
        if i == self.tc.len() {
            return Some(st);
        }
        self.deepest = self.deepest.max(i);
        let key = (i, tree_key(&st.spec_rest), st.ns.clone());
        if self.failed.get(&key).is_some_and(|&s| s >= steps_left) {
            return None;
        }
        self.nodes += 1;
        if self.nodes > self.limits.budget {
            self.exceeded = true;
            return None;
        }
        if steps_left > 0 {
            for m in (self.moves)(&st.spec_rest, &st.ns) {
                let mut witness = st.witness.clone();
                witness.extend_from_slice(&m.events);
                let next = CheckState { ns: m.ns, spec_rest: m.next, witness };
                if let Some(found) = self.search(i, next, steps_left - 1) {
                    return Some(found);
                }
                if self.exceeded {
                    return None;
                }
            }
        }
        self.failed.insert(key, steps_left);
        None
    }
}

fn cosim_member<E: Effect>(
    tree: ITree<E, ()>,
    tc: &[NetworkEvent],
    moves: MoveFn<'_, E>,
    limits: SearchLimits,
) -> Verdict {
    let mut search = Cosim { tc, moves, limits, nodes: 0, exceeded: false, deepest: 0, failed: HashMap::new() };
    let init = CheckState { ns: NetworkState::new(), spec_rest: tree, witness: Vec::new() };
    match search.search(0, init, limits.max_server_steps) {
        Some(st) => Verdict::Accepted { witness: st.witness },
        None if search.exceeded => Verdict::BudgetExceeded,
        None => Verdict::Rejected { counterexample: tc[..=search.deepest].to_vec() },
    }
}

/// Is `tc` a client-side observation of the linear specification?
pub fn spec_behavior_member(tc: &[NetworkEvent], message_size: usize) -> Verdict {
    spec_behavior_member_with(&linear_spec(message_size), tc, message_size, SearchLimits::default())
}

/// [`spec_behavior_member`] against an arbitrary specification tree.
pub fn spec_behavior_member_with(
    spec: &SpecTree,
    tc: &[NetworkEvent],
    message_size: usize,
    limits: SearchLimits,
) -> Verdict {
    let moves = move |t: &SpecTree, ns: &NetworkState| spec_moves(t, ns, message_size);
    cosim_member(spec.clone(), tc, &moves, limits)
}

/// Is `tc` a client-side observation of the implementation model, using at
/// most `depth` model steps? A trace needing more steps is rejected.
pub fn impl_behavior_member(tc: &[NetworkEvent], depth: usize, message_size: usize) -> Verdict {
    impl_behavior_member_with(tc, depth, message_size, ModelMutant::None, DEFAULT_SEARCH_BUDGET)
}

pub fn impl_behavior_member_with(
    tc: &[NetworkEvent],
    depth: usize,
    message_size: usize,
    mutant: ModelMutant,
    budget: usize,
) -> Verdict {
    let model = impl_model_with(Endpoint::default(), message_size, mutant);
    let moves = |t: &ITree<_, ()>, ns: &NetworkState| impl_moves(t, ns, false);
    cosim_member(model, tc, &moves, SearchLimits { budget, max_server_steps: depth })
}

/// Reference decision procedure: enumerates every specification trace that
/// could explain `tc` and tries each against the reordering relation.
/// Exponential; only for cross-checking small inputs.
pub fn spec_behavior_member_naive(tc: &[NetworkEvent], message_size: usize) -> Result<bool, SearchError> {
    let ids: BTreeSet<ConnId> = tc.iter().map(NetworkEvent::conn).collect();
    let mut bytes: BTreeSet<u8> = BTreeSet::new();
    let (mut opens, mut sends) = (0, 0);
    for ev in tc {
        match *ev {
            NetworkEvent::NewConnection(_) => opens += 1,
            NetworkEvent::ToServer(_, b) => {
                sends += 1;
                bytes.insert(b);
            }
            NetworkEvent::FromServer(..) => {}
        }
    }
    if bytes.is_empty() {
        bytes.insert(0);
    }
    let universe =
        SpecUniverse { bytes: bytes.into_iter().collect(), conn_ids: ids.into_iter().collect(), message_size };
    // Each accept needs an open and each exchange a full request, so no
    // explanation is longer than this.
    let depth = opens + 2 * (sends / message_size);
    let traces = enumerate_traces(&linear_spec(message_size), depth, &universe).expect("finite universe");
    let ns0 = NetworkState::new();
    for tr in traces {
        let ts = flatten_to_network(&tr.events, message_size).expect("spec traces are well formed");
        let found = if ts.len() + tc.len() <= BRUTE_FORCE_LIMIT {
            brute_force_reordered(&ts, tc, &ns0)?
        } else {
            network_reordered_with_budget(&ts, tc, &ns0, DEFAULT_SEARCH_BUDGET)?
        };
        if found {
            return Ok(true);
        }
    }
    Ok(false)
}
