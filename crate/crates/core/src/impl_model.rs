//! Buffer-level model of the event-driven server.
//!
//! The model keeps a list of connection records, each a small state machine
//! that is either receiving a request, sending a reply, or deleted. One loop
//! iteration either accepts a new connection or services one live
//! connection with a single `recv` or `send`. Which of these happens, and
//! which connection is serviced, is internal nondeterminism: readiness is
//! not modeled.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::itree::{frontier, iterate, Effect, Frontier, ITree, ItreeError, TraceEvent, DEFAULT_FUEL};
use crate::network_model::{ConnId, NetworkEvent, NetworkTrace};
use crate::swap_spec::Message;

/// The listening address, abstracted to a port number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Endpoint(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConnState {
    Recving,
    Sending,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Connection {
    pub conn_id: ConnId,
    pub state: ConnState,
    /// Bytes of the current request received so far.
    pub request_buf: Vec<u8>,
    /// Bytes of the current reply not yet sent.
    pub response_buf: Vec<u8>,
}

impl Connection {
    pub fn fresh(conn_id: ConnId) -> Self {
        Connection { conn_id, state: ConnState::Recving, request_buf: Vec::new(), response_buf: Vec::new() }
    }

    fn deleted(mut self) -> Self {
        self.state = ConnState::Deleted;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServerState {
    /// Most recently accepted first.
    pub conns: Vec<Connection>,
    pub last_full_msg: Message,
}

impl ServerState {
    pub fn initial(buffer_size: usize) -> Self {
        ServerState { conns: Vec::new(), last_full_msg: Message::zeros(buffer_size) }
    }

    fn is_live(&self, c: ConnId) -> bool {
        self.conns.iter().any(|x| x.conn_id == c && x.state != ConnState::Deleted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImplEffect {
    Accept(Endpoint),
    RecvBytes(ConnId, usize),
    SendBytes(ConnId, Vec<u8>),
    Or,
    Choose(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImplResponse {
    Accepted(Option<ConnId>),
    /// Bytes received; empty means the peer closed the connection.
    Received(Vec<u8>),
    /// Number of bytes actually sent.
    Sent(usize),
    /// The socket call failed.
    Failure,
    Branch(usize),
}

/// Finite response domains for enumerating model traces.
#[derive(Debug, Clone)]
pub struct ImplUniverse {
    pub bytes: Vec<u8>,
    pub conn_ids: Vec<ConnId>,
    /// Whether `Failure` is a possible response to sends and receives.
    pub failures: bool,
}

impl Effect for ImplEffect {
    type Response = ImplResponse;
    type Universe = ImplUniverse;

    fn kind(&self) -> &'static str {
        match self {
            ImplEffect::Accept(_) => "accept",
            ImplEffect::RecvBytes(..) => "recv_bytes",
            ImplEffect::SendBytes(..) => "send_bytes",
            ImplEffect::Or => "or",
            ImplEffect::Choose(_) => "choose",
        }
    }

    fn or_effect() -> Self {
        ImplEffect::Or
    }

    fn choose_effect(n: usize) -> Self {
        ImplEffect::Choose(n)
    }

    fn branch(i: usize) -> ImplResponse {
        ImplResponse::Branch(i)
    }

    fn choice_arity(&self) -> Option<usize> {
        match self {
            ImplEffect::Or => Some(2),
            ImplEffect::Choose(n) => Some(*n),
            _ => None,
        }
    }

    fn admits(&self, response: &ImplResponse) -> bool {
        match (self, response) {
            (ImplEffect::Accept(_), ImplResponse::Accepted(_)) => true,
            (ImplEffect::RecvBytes(_, max), ImplResponse::Received(b)) => b.len() <= *max,
            (ImplEffect::SendBytes(_, bytes), ImplResponse::Sent(n)) => *n <= bytes.len(),
            (ImplEffect::RecvBytes(..) | ImplEffect::SendBytes(..), ImplResponse::Failure) => true,
            (ImplEffect::Or, ImplResponse::Branch(i)) => *i < 2,
            (ImplEffect::Choose(n), ImplResponse::Branch(i)) => i < n,
            _ => false,
        }
    }

    fn responses(&self, u: &ImplUniverse) -> Result<Vec<ImplResponse>, ItreeError> {
        let mut out = Vec::new();
        match self {
            ImplEffect::Accept(_) => {
                out.push(ImplResponse::Accepted(None));
                out.extend(u.conn_ids.iter().map(|&c| ImplResponse::Accepted(Some(c))));
            }
            ImplEffect::RecvBytes(_, max) => {
                let mut layer = vec![Vec::new()];
                for _ in 0..=*max {
                    out.extend(layer.iter().cloned().map(ImplResponse::Received));
                    layer = layer
                        .iter()
                        .flat_map(|p| {
                            u.bytes.iter().map(move |&b| {
                                let mut p = p.clone();
                                p.push(b);
                                p
                            })
                        })
                        .collect();
                }
            }
            ImplEffect::SendBytes(_, bytes) => out.extend((0..=bytes.len()).map(ImplResponse::Sent)),
            ImplEffect::Or => out.extend((0..2).map(ImplResponse::Branch)),
            ImplEffect::Choose(n) => out.extend((0..*n).map(ImplResponse::Branch)),
        }
        if u.failures && matches!(self, ImplEffect::RecvBytes(..) | ImplEffect::SendBytes(..)) {
            out.push(ImplResponse::Failure);
        }
        Ok(out)
    }
}

/// Deliberately broken model variants, used to check that the refinement
/// checker finds real bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ModelMutant {
    #[default]
    None,
    /// Reply with the request itself.
    Echo,
    /// Never replace the stored message.
    NoSwap,
}

impl ModelMutant {
    pub fn tag(self) -> &'static str {
        match self {
            ModelMutant::None => "impl_model",
            ModelMutant::Echo => "impl_model/echo",
            ModelMutant::NoSwap => "impl_model/no_swap",
        }
    }
}

impl std::str::FromStr for ModelMutant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(ModelMutant::None),
            "echo" => Ok(ModelMutant::Echo),
            "no-swap" | "noswap" => Ok(ModelMutant::NoSwap),
            other => Err(format!("unknown model mutant {other:?} (expected none, echo or no-swap)")),
        }
    }
}

pub type ImplTree<R> = ITree<ImplEffect, R>;

/// Accepts a connection. `None` means no connection was pending.
pub fn accept_connection(endpoint: Endpoint) -> ImplTree<Option<Connection>> {
    ITree::vis(ImplEffect::Accept(endpoint), |resp| match resp {
        ImplResponse::Accepted(c) => ITree::ret(c.map(Connection::fresh)),
        _ => ITree::stuck(),
    })
}

/// Services one live connection with a single `recv` or `send`. Returns the
/// updated connection and stored message.
pub fn process_conn(buffer_size: usize, c: Connection, last_full_msg: Message) -> ImplTree<(Connection, Message)> {
    process_conn_with(buffer_size, c, last_full_msg, ModelMutant::None)
}

fn process_conn_with(
    buffer_size: usize,
    c: Connection,
    last: Message,
    mutant: ModelMutant,
) -> ImplTree<(Connection, Message)> {
    match c.state {
        ConnState::Recving => {
            let maxlen = buffer_size - c.request_buf.len();
            ITree::vis(ImplEffect::RecvBytes(c.conn_id, maxlen), move |resp| {
                let mut c = c.clone();
                match resp {
                    ImplResponse::Received(bytes) if !bytes.is_empty() && bytes.len() <= maxlen => {
                        c.request_buf.extend_from_slice(&bytes);
                        if c.request_buf.len() < buffer_size {
                            return ITree::ret((c, last.clone()));
                        }
                        let request = Message(std::mem::take(&mut c.request_buf));
                        c.state = ConnState::Sending;
                        let (reply, stored) = match mutant {
                            ModelMutant::None => (last.clone(), request),
                            ModelMutant::Echo => (request.clone(), request),
                            ModelMutant::NoSwap => (last.clone(), last.clone()),
                        };
                        c.response_buf = reply.0;
                        ITree::ret((c, stored))
                    }
                    ImplResponse::Received(bytes) if bytes.is_empty() => ITree::ret((c.deleted(), last.clone())),
                    ImplResponse::Failure => ITree::ret((c.deleted(), last.clone())),
                    _ => ITree::stuck(),
                }
            })
        }
        ConnState::Sending => {
            let bytes = c.response_buf.clone();
            ITree::vis(ImplEffect::SendBytes(c.conn_id, bytes), move |resp| {
                let mut c = c.clone();
                match resp {
                    ImplResponse::Sent(n) if n <= c.response_buf.len() => {
                        c.response_buf.drain(..n);
                        if c.response_buf.is_empty() {
                            c.state = ConnState::Recving;
                        }
                        ITree::ret((c, last.clone()))
                    }
                    ImplResponse::Failure => ITree::ret((c.deleted(), last.clone())),
                    _ => ITree::stuck(),
                }
            })
        }
        ConnState::Deleted => panic!("deleted connection {} was serviced", c.conn_id),
    }
}

/// Replaces the live connection whose id matches `c`.
pub fn replace_when(conns: &[Connection], c: Connection) -> Vec<Connection> {
    conns
        .iter()
        .map(|x| if x.conn_id == c.conn_id && x.state != ConnState::Deleted { c.clone() } else { x.clone() })
        .collect()
}

/// One iteration of the server loop. The flag is always `true`: the server
/// never stops on its own.
pub fn select_loop_body(endpoint: Endpoint, buffer_size: usize, st: ServerState) -> ImplTree<(bool, ServerState)> {
    select_loop_body_with(endpoint, buffer_size, st, ModelMutant::None)
}

fn select_loop_body_with(
    endpoint: Endpoint,
    buffer_size: usize,
    st: ServerState,
    mutant: ModelMutant,
) -> ImplTree<(bool, ServerState)> {
    let st = Arc::new(st);
    let accept = {
        let st = st.clone();
        accept_connection(endpoint).bind(move |r| match r {
            Some(c) if st.is_live(c.conn_id) => ITree::stuck(),
            Some(c) => {
                let mut conns = Vec::with_capacity(st.conns.len() + 1);
                conns.push(c);
                conns.extend(st.conns.iter().cloned());
                ITree::ret((true, ServerState { conns, last_full_msg: st.last_full_msg.clone() }))
            }
            None => ITree::ret((true, (*st).clone())),
        })
    };
    let candidates: Vec<Connection> = [ConnState::Recving, ConnState::Sending]
        .iter()
        .flat_map(|s| st.conns.iter().filter(move |c| c.state == *s).cloned())
        .collect();
    let service = ITree::choose(candidates).bind(move |c| {
        let st = st.clone();
        process_conn_with(buffer_size, c, st.last_full_msg.clone(), mutant)
            .map(move |(c, last)| (true, ServerState { conns: replace_when(&st.conns, c), last_full_msg: last }))
    });
    ITree::or(accept, service)
}

/// The server model: the loop body repeated forever from no connections and
/// a zero-filled stored message.
pub fn impl_model(endpoint: Endpoint, buffer_size: usize) -> ImplTree<()> {
    impl_model_with(endpoint, buffer_size, ModelMutant::None)
}

pub fn impl_model_with(endpoint: Endpoint, buffer_size: usize, mutant: ModelMutant) -> ImplTree<()> {
    assert!(buffer_size >= 1, "buffer size must be positive");
    iterate(mutant.tag(), ServerState::initial(buffer_size), move |st| {
        select_loop_body_with(endpoint, buffer_size, st, mutant).map(|(_, st)| st)
    })
}

/// Network events produced by one model effect and its response.
pub fn network_events(effect: &ImplEffect, response: &ImplResponse) -> NetworkTrace {
    match (effect, response) {
        (ImplEffect::Accept(_), ImplResponse::Accepted(Some(c))) => vec![NetworkEvent::NewConnection(*c)],
        (ImplEffect::RecvBytes(c, _), ImplResponse::Received(bytes)) => {
            bytes.iter().map(|&b| NetworkEvent::ToServer(*c, b)).collect()
        }
        (ImplEffect::SendBytes(c, bytes), ImplResponse::Sent(n)) => {
            bytes[..(*n).min(bytes.len())].iter().map(|&b| NetworkEvent::FromServer(*c, b)).collect()
        }
        _ => Vec::new(),
    }
}

/// A recorded model execution: the visible effects with their responses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelRun {
    pub message_size: usize,
    pub steps: Vec<TraceEvent<ImplEffect>>,
}

impl ModelRun {
    /// The server-side network trace of the run.
    pub fn network_trace(&self) -> NetworkTrace {
        self.steps.iter().flat_map(|s| network_events(&s.effect, &s.response)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event {index} ({event:?}) cannot be produced by the model here")]
    NoMatchingStep { index: usize, event: NetworkEvent },
    #[error("event {index}: sent {got:?} where the model would send {expected:?}")]
    SendMismatch { index: usize, expected: Vec<u8>, got: Vec<u8> },
}

/// Drives the model deterministically from a server-side log.
///
/// Each `NewConnection` answers an accept; a run of consecutive `ToServer`
/// bytes on one connection answers one receive (split when it exceeds the
/// receive size); a run of `FromServer` bytes answers one send and must
/// match what the model wants to send.
pub fn replay_server_log(log: &[NetworkEvent], message_size: usize) -> Result<ModelRun, ReplayError> {
    replay_server_log_with(log, message_size, ModelMutant::None)
}

pub fn replay_server_log_with(
    log: &[NetworkEvent],
    message_size: usize,
    mutant: ModelMutant,
) -> Result<ModelRun, ReplayError> {
    let mut tree = impl_model_with(Endpoint::default(), message_size, mutant);
    let mut run = ModelRun { message_size, steps: Vec::new() };
    let mut i = 0;
    while i < log.len() {
        let event = log[i];
        let c = event.conn();
        // Length of the run of same-kind events on this connection.
        let same = |e: &NetworkEvent| std::mem::discriminant(e) == std::mem::discriminant(&event) && e.conn() == c;
        let run_len = log[i..].iter().take_while(|e| same(e)).count();
        let mut matched = None;
        for f in frontier(&tree, DEFAULT_FUEL) {
            let Frontier::Vis(effect, k) = f else { continue };
            let response = match (&effect, event) {
                (ImplEffect::Accept(_), NetworkEvent::NewConnection(id)) => ImplResponse::Accepted(Some(id)),
                (ImplEffect::RecvBytes(d, max), NetworkEvent::ToServer(..)) if *d == c => {
                    let n = run_len.min(*max);
                    ImplResponse::Received(log[i..i + n].iter().map(byte_of).collect())
                }
                (ImplEffect::SendBytes(d, want), NetworkEvent::FromServer(..)) if *d == c => {
                    let n = run_len.min(want.len());
                    let got: Vec<u8> = log[i..i + n].iter().map(byte_of).collect();
                    if got[..] != want[..n] {
                        return Err(ReplayError::SendMismatch { index: i, expected: want.clone(), got });
                    }
                    ImplResponse::Sent(n)
                }
                _ => continue,
            };
            matched = Some((effect, k, response));
            break;
        }
        let Some((effect, k, response)) = matched else {
            return Err(ReplayError::NoMatchingStep { index: i, event });
        };
        i += network_events(&effect, &response).len();
        tree = k.call(response.clone());
        run.steps.push(TraceEvent::new(effect, response));
    }
    Ok(run)
}

fn byte_of(e: &NetworkEvent) -> u8 {
    match *e {
        NetworkEvent::ToServer(_, b) | NetworkEvent::FromServer(_, b) => b,
        NetworkEvent::NewConnection(_) => unreachable!("runs only contain data events"),
    }
}

impl fmt::Display for ImplEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImplEffect::Accept(ep) => write!(f, "accept({})", ep.0),
            ImplEffect::RecvBytes(c, n) => write!(f, "recv({c}, {n})"),
            ImplEffect::SendBytes(c, b) => write!(f, "send({c}, {b:02x?})"),
            ImplEffect::Or => write!(f, "or"),
            ImplEffect::Choose(n) => write!(f, "choose({n})"),
        }
    }
}
