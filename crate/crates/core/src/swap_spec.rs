//! The linear specification: the server handles one swap at a time.
//!
//! The loop state is the list of open connections and the last stored
//! message (initially all zero bytes). Each iteration either observes a new
//! connection, or picks an open connection, observes a request on it and
//! replies with the stored message, which the request then replaces.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::itree::{frontier, state_label, Effect, Frontier, ITree, ItreeError, TraceEvent};
use crate::network_model::{ConnId, NetworkEvent, NetworkTrace};

/// Message size used when none is configured.
pub const DEFAULT_MESSAGE_SIZE: usize = 3;

/// Silent-step budget when co-simulating the linear specification.
const SPEC_FUEL: usize = 256;

/// A fixed-size swap payload.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Message(pub Vec<u8>);

impl Message {
    pub fn zeros(size: usize) -> Self {
        Message(vec![0; size])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&[u8]> for Message {
    fn from(b: &[u8]) -> Self {
        Message(b.to_vec())
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|b| b.is_ascii_graphic()) {
            write!(f, "{:?}", String::from_utf8_lossy(&self.0))
        } else {
            write!(f, "{:02x?}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecEffect {
    ObsConnect,
    ObsMsgToServer(ConnId),
    ObsMsgFromServer(ConnId, Message),
    Or,
    Choose(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecResponse {
    Conn(ConnId),
    Msg(Message),
    Unit,
    Branch(usize),
}

/// Finite response domains for enumerating specification traces.
#[derive(Debug, Clone)]
pub struct SpecUniverse {
    pub bytes: Vec<u8>,
    pub conn_ids: Vec<ConnId>,
    pub message_size: usize,
}

impl SpecUniverse {
    /// Every message of `message_size` bytes over `bytes`.
    pub fn messages(&self) -> Vec<Message> {
        let mut out = vec![Vec::new()];
        for _ in 0..self.message_size {
            out = out
                .into_iter()
                .flat_map(|m| {
                    self.bytes.iter().map(move |&b| {
                        let mut m = m.clone();
                        m.push(b);
                        m
                    })
                })
                .collect();
        }
        out.into_iter().map(Message).collect()
    }
}

impl Effect for SpecEffect {
    type Response = SpecResponse;
    type Universe = SpecUniverse;

    fn kind(&self) -> &'static str {
        match self {
            SpecEffect::ObsConnect => "obs_connect",
            SpecEffect::ObsMsgToServer(_) => "obs_msg_to_server",
            SpecEffect::ObsMsgFromServer(..) => "obs_msg_from_server",
            SpecEffect::Or => "or",
            SpecEffect::Choose(_) => "choose",
        }
    }

    fn or_effect() -> Self {
        SpecEffect::Or
    }

    fn choose_effect(n: usize) -> Self {
        SpecEffect::Choose(n)
    }

    fn branch(i: usize) -> SpecResponse {
        SpecResponse::Branch(i)
    }

    fn choice_arity(&self) -> Option<usize> {
        match self {
            SpecEffect::Or => Some(2),
            SpecEffect::Choose(n) => Some(*n),
            _ => None,
        }
    }

    fn admits(&self, response: &SpecResponse) -> bool {
        match (self, response) {
            (SpecEffect::ObsConnect, SpecResponse::Conn(_)) => true,
            (SpecEffect::ObsMsgToServer(_), SpecResponse::Msg(_)) => true,
            (SpecEffect::ObsMsgFromServer(..), SpecResponse::Unit) => true,
            (SpecEffect::Or, SpecResponse::Branch(i)) => *i < 2,
            (SpecEffect::Choose(n), SpecResponse::Branch(i)) => i < n,
            _ => false,
        }
    }

    fn responses(&self, u: &SpecUniverse) -> Result<Vec<SpecResponse>, ItreeError> {
        Ok(match self {
            SpecEffect::ObsConnect => u.conn_ids.iter().copied().map(SpecResponse::Conn).collect(),
            SpecEffect::ObsMsgToServer(_) => u.messages().into_iter().map(SpecResponse::Msg).collect(),
            SpecEffect::ObsMsgFromServer(..) => vec![SpecResponse::Unit],
            SpecEffect::Or => vec![SpecResponse::Branch(0), SpecResponse::Branch(1)],
            SpecEffect::Choose(n) => (0..*n).map(SpecResponse::Branch).collect(),
        })
    }
}

pub type SpecTree = ITree<SpecEffect, ()>;
pub type SpecEvent = TraceEvent<SpecEffect>;

/// Loop state of the linear specification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecState {
    /// Open connections, most recent first. No duplicates.
    pub conns: Vec<ConnId>,
    pub last_msg: Message,
}

impl SpecState {
    pub fn initial(message_size: usize) -> Self {
        SpecState { conns: Vec::new(), last_msg: Message::zeros(message_size) }
    }
}

/// The linear specification, starting with no connections and a stored
/// message of zero bytes.
pub fn linear_spec(message_size: usize) -> SpecTree {
    assert!(message_size >= 1, "message size must be positive");
    linear_spec_from(SpecState::initial(message_size))
}

/// The linear specification loop from an arbitrary state.
pub fn linear_spec_from(state: SpecState) -> SpecTree {
    let size = state.last_msg.len();
    // Behavior depends on the connection set, not on list order.
    let mut set = state.conns.clone();
    set.sort();
    let label = state_label("linear_spec", &(set, &state.last_msg));
    let state = Arc::new(state);
    ITree::new(move || spec_iteration(state.clone(), size).observe()).labelled(label)
}

fn spec_iteration(state: Arc<SpecState>, size: usize) -> SpecTree {
    let accept = {
        let state = state.clone();
        ITree::vis(SpecEffect::ObsConnect, move |resp| match resp {
            SpecResponse::Conn(c) if !state.conns.contains(&c) => {
                let mut conns = Vec::with_capacity(state.conns.len() + 1);
                conns.push(c);
                conns.extend_from_slice(&state.conns);
                linear_spec_from(SpecState { conns, last_msg: state.last_msg.clone() })
            }
            _ => ITree::stuck(),
        })
    };
    let exchange = ITree::choose(state.conns.clone()).bind(move |c| {
        let state = state.clone();
        ITree::vis(SpecEffect::ObsMsgToServer(c), move |resp| match resp {
            SpecResponse::Msg(msg) if msg.len() == size => {
                let conns = state.conns.clone();
                ITree::vis(SpecEffect::ObsMsgFromServer(c, state.last_msg.clone()), move |_| {
                    linear_spec_from(SpecState { conns: conns.clone(), last_msg: msg.clone() })
                })
            }
            _ => ITree::stuck(),
        })
    });
    ITree::or(accept, exchange)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("message of {got} bytes where {expected} were expected")]
    MalformedMessage { expected: usize, got: usize },
    #[error("response {1:?} does not answer effect {0:?}")]
    MismatchedResponse(SpecEffect, SpecResponse),
}

/// Flattens message-level specification events to byte-level network
/// events. Internal choice events, if present, are skipped.
pub fn flatten_to_network(trace: &[SpecEvent], message_size: usize) -> Result<NetworkTrace, SpecError> {
    let check = |m: &Message| {
        if m.len() == message_size {
            Ok(())
        } else {
            Err(SpecError::MalformedMessage { expected: message_size, got: m.len() })
        }
    };
    let mut out = Vec::new();
    for ev in trace {
        match (&ev.effect, &ev.response) {
            (SpecEffect::ObsConnect, SpecResponse::Conn(c)) => out.push(NetworkEvent::NewConnection(*c)),
            (SpecEffect::ObsMsgToServer(c), SpecResponse::Msg(m)) => {
                check(m)?;
                out.extend(m.0.iter().map(|&b| NetworkEvent::ToServer(*c, b)));
            }
            (SpecEffect::ObsMsgFromServer(c, m), SpecResponse::Unit) => {
                check(m)?;
                out.extend(m.0.iter().map(|&b| NetworkEvent::FromServer(*c, b)));
            }
            (e, _) if e.choice_arity().is_some() => {}
            (e, r) => return Err(SpecError::MismatchedResponse(e.clone(), r.clone())),
        }
    }
    Ok(out)
}

/// True iff `trace` is a prefix of the flattening of some trace of the
/// linear specification.
pub fn is_spec_trace(trace: &[NetworkEvent], message_size: usize) -> bool {
    is_spec_trace_of(&linear_spec(message_size), trace, message_size)
}

/// [`is_spec_trace`] against an arbitrary specification tree. Co-simulates
/// the tree against the byte stream, backtracking over internal choices.
pub fn is_spec_trace_of(spec: &SpecTree, trace: &[NetworkEvent], message_size: usize) -> bool {
    trace.is_empty() || cosim(spec, trace, message_size)
}

// Like `is_spec_trace_of`, but an exhausted trace must leave the tree live:
// a continuation with no visible behavior left (e.g. after a duplicate
// connection) does not count.
fn cosim(spec: &SpecTree, trace: &[NetworkEvent], message_size: usize) -> bool {
    let front = frontier(spec, SPEC_FUEL);
    if trace.is_empty() {
        return !front.is_empty();
    }
    front.into_iter().any(|f| {
        let Frontier::Vis(effect, k) = f else { return false };
        match (&effect, trace[0]) {
            (SpecEffect::ObsConnect, NetworkEvent::NewConnection(c)) => {
                cosim(&k.call(SpecResponse::Conn(c)), &trace[1..], message_size)
            }
            (SpecEffect::ObsMsgToServer(c), NetworkEvent::ToServer(..)) => {
                let n = message_size.min(trace.len());
                let mut msg = Vec::with_capacity(n);
                for ev in &trace[..n] {
                    match *ev {
                        NetworkEvent::ToServer(d, b) if d == *c => msg.push(b),
                        _ => return false,
                    }
                }
                if n < message_size {
                    // Partial request at the end of the trace.
                    return true;
                }
                cosim(&k.call(SpecResponse::Msg(Message(msg))), &trace[n..], message_size)
            }
            (SpecEffect::ObsMsgFromServer(c, m), NetworkEvent::FromServer(..)) => {
                let n = m.len().min(trace.len());
                let matches =
                    trace[..n].iter().zip(m.as_bytes()).all(|(ev, &b)| *ev == NetworkEvent::FromServer(*c, b));
                matches && (n < m.len() || cosim(&k.call(SpecResponse::Unit), &trace[n..], message_size))
            }
            _ => false,
        }
    })
}
