//! Executable network refinement.
//!
//! A client observes the server through a network that delays and
//! interleaves bytes. An observed client-side trace is explained by a
//! server-side trace of the linear specification (or of the model) when the two are
//! related by [`network_reordered`](crate::network_model::network_reordered).
//!
//! All searches here co-simulate instead of enumerating reorderings. Two
//! facts make this sound and complete:
//!
//! - a client's opens and sends never depend on the server, and appending
//!   them keeps every server step enabled, so they can be applied eagerly;
//! - a server step only ever needs to happen before the client receive
//!   that observes its output, so server steps are postponed until a
//!   client receive finds its queue empty.

mod bounded;
mod linearization;
mod member;

pub use bounded::{network_refines_bounded, RefineConfig, RefineOutcome};
pub use linearization::{linearization_points_check, LinearizationReport, WitnessPolicy};
pub use member::{
    impl_behavior_member, impl_behavior_member_with, spec_behavior_member, spec_behavior_member_naive,
    spec_behavior_member_with, SearchLimits,
};

use crate::impl_model::{ImplEffect, ImplResponse};
use crate::itree::{frontier, settle, Effect, Frontier, ITree, DEFAULT_FUEL};
use crate::network_model::{server_step, ConnectionStatus, NetworkEvent, NetworkState, NetworkTrace};
use crate::swap_spec::{Message, SpecEffect, SpecResponse};

/// Outcome of a membership check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// The observation is explained by `witness`, a server-side trace.
    Accepted { witness: NetworkTrace },
    /// No explanation exists; `counterexample` is the shortest rejected
    /// prefix of the observation.
    Rejected { counterexample: NetworkTrace },
    /// The search gave up. Inconclusive, never a failure.
    BudgetExceeded,
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted { .. })
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Verdict::Rejected { .. })
    }
}

/// One configuration of a co-simulation: the network, what remains of the
/// server-side tree, and the server-side events chosen so far.
#[derive(Debug, Clone)]
pub struct CheckState<E: Effect> {
    pub ns: NetworkState,
    pub spec_rest: ITree<E, ()>,
    pub witness: NetworkTrace,
}

/// A server-side step: the network events it produces, applied to the
/// network, and the rest of the tree.
/// Enumerates the server steps enabled from a tree and network state.
pub(crate) type MoveFn<'a, E> = &'a dyn Fn(&ITree<E, ()>, &NetworkState) -> Vec<Move<E>>;

pub(crate) struct Move<E: Effect> {
    pub events: NetworkTrace,
    pub next: ITree<E, ()>,
    pub ns: NetworkState,
}

fn apply_server(ns: &NetworkState, events: &[NetworkEvent]) -> Option<NetworkState> {
    let mut ns = ns.clone();
    events.iter().all(|e| server_step(e, &mut ns)).then_some(ns)
}

fn settled<E: Effect>(t: ITree<E, ()>) -> ITree<E, ()> {
    settle(t, DEFAULT_FUEL)
}

/// Macro steps of the linear specification. A request on a connection is taken
/// only once a whole message is in flight, and is immediately followed by
/// the reply. Exchanges come before accepts; accepts go in id order.
pub(crate) fn spec_moves(t: &ITree<SpecEffect, ()>, ns: &NetworkState, message_size: usize) -> Vec<Move<SpecEffect>> {
    let mut exchanges = Vec::new();
    let mut accepts = Vec::new();
    for f in frontier(t, DEFAULT_FUEL) {
        let Frontier::Vis(effect, k) = f else { continue };
        match effect {
            SpecEffect::ObsMsgToServer(c) => {
                let request: Vec<u8> = ns.to_server(c).take(message_size).collect();
                if request.len() < message_size {
                    continue;
                }
                let events: NetworkTrace = request.iter().map(|&b| NetworkEvent::ToServer(c, b)).collect();
                let Some(ns1) = apply_server(ns, &events) else { continue };
                let after = k.call(SpecResponse::Msg(Message(request)));
                for g in frontier(&after, DEFAULT_FUEL) {
                    let Frontier::Vis(SpecEffect::ObsMsgFromServer(d, reply), k2) = g else { continue };
                    let reply_events: NetworkTrace =
                        reply.as_bytes().iter().map(|&b| NetworkEvent::FromServer(d, b)).collect();
                    let Some(ns2) = apply_server(&ns1, &reply_events) else { continue };
                    let mut all = events.clone();
                    all.extend(reply_events);
                    exchanges.push(Move { events: all, next: settled(k2.call(SpecResponse::Unit)), ns: ns2 });
                }
            }
            SpecEffect::ObsMsgFromServer(c, reply) => {
                let events: NetworkTrace = reply.as_bytes().iter().map(|&b| NetworkEvent::FromServer(c, b)).collect();
                if let Some(ns1) = apply_server(ns, &events) {
                    exchanges.push(Move { events, next: settled(k.call(SpecResponse::Unit)), ns: ns1 });
                }
            }
            SpecEffect::ObsConnect => {
                for c in ns.ids_with_status(ConnectionStatus::Pending) {
                    let events = vec![NetworkEvent::NewConnection(c)];
                    if let Some(ns1) = apply_server(ns, &events) {
                        accepts.push(Move { events, next: settled(k.call(SpecResponse::Conn(c))), ns: ns1 });
                    }
                }
            }
            SpecEffect::Or | SpecEffect::Choose(_) => unreachable!("frontier resolves choices"),
        }
    }
    exchanges.extend(accepts);
    exchanges
}

/// Steps of the implementation model that the network allows. With
/// `with_deletes`, receives of zero bytes and failed calls are included;
/// they produce no network events and only remove future behavior, so
/// existence searches skip them. Accepting nothing and sending zero bytes
/// leave everything unchanged and are always skipped.
pub(crate) fn impl_moves(t: &ITree<ImplEffect, ()>, ns: &NetworkState, with_deletes: bool) -> Vec<Move<ImplEffect>> {
    let mut out = Vec::new();
    for f in frontier(t, DEFAULT_FUEL) {
        let Frontier::Vis(effect, k) = f else { continue };
        let mut push = |response: ImplResponse, events: NetworkTrace| {
            if let Some(ns1) = apply_server(ns, &events) {
                out.push(Move { events, next: settled(k.call(response)), ns: ns1 });
            }
        };
        match &effect {
            ImplEffect::Accept(_) => {
                for c in ns.ids_with_status(ConnectionStatus::Pending) {
                    push(ImplResponse::Accepted(Some(c)), vec![NetworkEvent::NewConnection(c)]);
                }
            }
            ImplEffect::RecvBytes(c, max) => {
                let queued: Vec<u8> = ns.to_server(*c).take(*max).collect();
                for n in 1..=queued.len() {
                    let events = queued[..n].iter().map(|&b| NetworkEvent::ToServer(*c, b)).collect();
                    push(ImplResponse::Received(queued[..n].to_vec()), events);
                }
                if with_deletes {
                    push(ImplResponse::Received(Vec::new()), Vec::new());
                }
            }
            ImplEffect::SendBytes(c, bytes) => {
                for n in 1..=bytes.len() {
                    push(ImplResponse::Sent(n), bytes[..n].iter().map(|&b| NetworkEvent::FromServer(*c, b)).collect());
                }
                if with_deletes {
                    push(ImplResponse::Failure, Vec::new());
                }
            }
            ImplEffect::Or | ImplEffect::Choose(_) => unreachable!("frontier resolves choices"),
        }
    }
    out
}
