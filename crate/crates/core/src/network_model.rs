//! Byte-granular TCP network model.
//!
//! Each connection carries two FIFO queues of in-flight bytes. Server-side
//! and client-side events drive separate transition functions over the same
//! [`NetworkState`]; a client trace is a *disordering* of a server trace when
//! some interleaving of the two, each consumed in order, is executable.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Default node budget for the reordering search.
pub const DEFAULT_SEARCH_BUDGET: usize = 1_000_000;

/// Largest `|ts| + |tc|` accepted by [`brute_force_reordered`].
pub const BRUTE_FORCE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct ConnId(pub u32);

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NetworkEvent {
    NewConnection(ConnId),
    ToServer(ConnId, u8),
    FromServer(ConnId, u8),
}

impl NetworkEvent {
    pub fn conn(&self) -> ConnId {
        match *self {
            NetworkEvent::NewConnection(c) | NetworkEvent::ToServer(c, _) | NetworkEvent::FromServer(c, _) => c,
        }
    }
}

pub type NetworkTrace = Vec<NetworkEvent>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum ConnectionStatus {
    #[default]
    Closed,
    Pending,
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ConnectionEntry {
    pub status: ConnectionStatus,
    /// Sent by the client, not yet received by the server.
    pub to_server: VecDeque<u8>,
    /// Sent by the server, not yet received by the client.
    pub from_server: VecDeque<u8>,
}

/// Per-connection network state. Absent ids are closed with empty queues.
/// The map is ordered, so equal states hash equally.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NetworkState {
    conns: BTreeMap<ConnId, ConnectionEntry>,
}

impl NetworkState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn status(&self, c: ConnId) -> ConnectionStatus {
        self.conns.get(&c).map_or(ConnectionStatus::Closed, |e| e.status)
    }

    pub fn entry(&self, c: ConnId) -> Option<&ConnectionEntry> {
        self.conns.get(&c)
    }

    pub fn to_server(&self, c: ConnId) -> impl Iterator<Item = u8> + '_ {
        self.conns.get(&c).into_iter().flat_map(|e| e.to_server.iter().copied())
    }

    pub fn from_server(&self, c: ConnId) -> impl Iterator<Item = u8> + '_ {
        self.conns.get(&c).into_iter().flat_map(|e| e.from_server.iter().copied())
    }

    pub fn connections(&self) -> impl Iterator<Item = (ConnId, &ConnectionEntry)> {
        self.conns.iter().map(|(c, e)| (*c, e))
    }

    pub fn ids_with_status(&self, status: ConnectionStatus) -> Vec<ConnId> {
        self.conns.iter().filter(|(_, e)| e.status == status).map(|(c, _)| *c).collect()
    }

    fn entry_mut(&mut self, c: ConnId) -> &mut ConnectionEntry {
        self.conns.entry(c).or_default()
    }
}

fn open(status: ConnectionStatus) -> bool {
    matches!(status, ConnectionStatus::Pending | ConnectionStatus::Accepted)
}

/// Server-side transition. `None` means the transition is disabled.
///
/// - `NewConnection c`: the server accepts a pending connection.
/// - `FromServer c b`: the server sends `b` on an accepted connection.
/// - `ToServer c b`: the server receives `b`, which must be the oldest
///   in-flight client byte; the connection may still be pending.
pub fn server_transition(ev: &NetworkEvent, ns: &NetworkState) -> Option<NetworkState> {
    let mut next = ns.clone();
    server_step(ev, &mut next).then_some(next)
}

/// Client-side transition. `None` means the transition is disabled.
///
/// - `NewConnection c`: the client opens a closed connection.
/// - `ToServer c b`: the client sends `b` on an open connection.
/// - `FromServer c b`: the client receives `b`, the oldest in-flight server
///   byte on `c`.
pub fn client_transition(ev: &NetworkEvent, ns: &NetworkState) -> Option<NetworkState> {
    let mut next = ns.clone();
    client_step(ev, &mut next).then_some(next)
}

/// In-place [`server_transition`]; leaves `ns` untouched when disabled.
pub fn server_step(ev: &NetworkEvent, ns: &mut NetworkState) -> bool {
    match *ev {
        NetworkEvent::NewConnection(c) => {
            if ns.status(c) != ConnectionStatus::Pending {
                return false;
            }
            ns.entry_mut(c).status = ConnectionStatus::Accepted;
            true
        }
        NetworkEvent::FromServer(c, b) => {
            if ns.status(c) != ConnectionStatus::Accepted {
                return false;
            }
            ns.entry_mut(c).from_server.push_back(b);
            true
        }
        NetworkEvent::ToServer(c, b) => match ns.conns.get_mut(&c) {
            Some(e) if open(e.status) && e.to_server.front() == Some(&b) => {
                e.to_server.pop_front();
                true
            }
            _ => false,
        },
    }
}

/// In-place [`client_transition`]; leaves `ns` untouched when disabled.
pub fn client_step(ev: &NetworkEvent, ns: &mut NetworkState) -> bool {
    match *ev {
        NetworkEvent::NewConnection(c) => {
            if ns.status(c) != ConnectionStatus::Closed {
                return false;
            }
            ns.entry_mut(c).status = ConnectionStatus::Pending;
            true
        }
        NetworkEvent::ToServer(c, b) => {
            if !open(ns.status(c)) {
                return false;
            }
            ns.entry_mut(c).to_server.push_back(b);
            true
        }
        NetworkEvent::FromServer(c, b) => match ns.conns.get_mut(&c) {
            Some(e) if e.from_server.front() == Some(&b) => {
                e.from_server.pop_front();
                true
            }
            _ => false,
        },
    }
}

/// Applies a whole server-side trace.
pub fn server_transitions(ts: &[NetworkEvent], ns: &NetworkState) -> Option<NetworkState> {
    let mut next = ns.clone();
    ts.iter().all(|ev| server_step(ev, &mut next)).then_some(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search budget of {0} nodes exceeded")]
    BudgetExceeded(usize),
    #[error("brute force is limited to {limit} events, got {got}")]
    TooLarge { limit: usize, got: usize },
}

/// Decides whether `tc` is a disordering of `ts` from `ns0`, with the default
/// node budget. Bytes left in flight at the end are allowed.
pub fn network_reordered(ts: &[NetworkEvent], tc: &[NetworkEvent], ns0: &NetworkState) -> Result<bool, SearchError> {
    network_reordered_with_budget(ts, tc, ns0, DEFAULT_SEARCH_BUDGET)
}

/// Memoized search over `(index into ts, index into tc, network state)`.
pub fn network_reordered_with_budget(
    ts: &[NetworkEvent],
    tc: &[NetworkEvent],
    ns0: &NetworkState,
    budget: usize,
) -> Result<bool, SearchError> {
    let mut search = Reorder { ts, tc, failed: HashSet::new(), nodes: 0, budget };
    search.run(0, 0, ns0.clone())
}

struct Reorder<'a> {
    ts: &'a [NetworkEvent],
    tc: &'a [NetworkEvent],
    failed: HashSet<(usize, usize, NetworkState)>,
    nodes: usize,
    budget: usize,
}

impl Reorder<'_> {
    fn run(&mut self, i: usize, j: usize, ns: NetworkState) -> Result<bool, SearchError> {
        if i == self.ts.len() && j == self.tc.len() {
            return Ok(true);
        }
        let key = (i, j, ns);
        if self.failed.contains(&key) {
            return Ok(false);
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(SearchError::BudgetExceeded(self.budget));
        }
        let (i, j, ns) = key;
        if i < self.ts.len() {
            if let Some(next) = server_transition(&self.ts[i], &ns) {
                if self.run(i + 1, j, next)? {
                    return Ok(true);
                }
            }
        }
        if j < self.tc.len() {
            if let Some(next) = client_transition(&self.tc[j], &ns) {
                if self.run(i, j + 1, next)? {
                    return Ok(true);
                }
            }
        }
        self.failed.insert((i, j, ns));
        Ok(false)
    }
}

/// Reference implementation of [`network_reordered`]: tries every
/// interleaving of the two traces without sharing work.
pub fn brute_force_reordered(
    ts: &[NetworkEvent],
    tc: &[NetworkEvent],
    ns0: &NetworkState,
) -> Result<bool, SearchError> {
    let total = ts.len() + tc.len();
    if total > BRUTE_FORCE_LIMIT {
        return Err(SearchError::TooLarge { limit: BRUTE_FORCE_LIMIT, got: total });
    }
    // Each interleaving is a bitmask with |ts| ones: bit k set means the k-th
    // step is a server step.
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != ts.len() {
            continue;
        }
        let mut ns = ns0.clone();
        let (mut i, mut j) = (0, 0);
        let ok = (0..total).all(|k| {
            if mask & (1 << k) != 0 {
                i += 1;
                server_step(&ts[i - 1], &mut ns)
            } else {
                j += 1;
                client_step(&tc[j - 1], &mut ns)
            }
        });
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::NetworkEvent::*;
    use super::*;

    const C1: ConnId = ConnId(1);
    const C2: ConnId = ConnId(2);

    fn pending(c: ConnId) -> NetworkState {
        client_transition(&NewConnection(c), &NetworkState::new()).unwrap()
    }

    #[test]
    fn server_send_requires_accepted() {
        assert!(server_transition(&FromServer(C1, 7), &pending(C1)).is_none());
        assert!(server_transition(&FromServer(C1, 7), &NetworkState::new()).is_none());
        let acc = server_transition(&NewConnection(C1), &pending(C1)).unwrap();
        assert_eq!(acc.status(C1), ConnectionStatus::Accepted);
        let sent = server_transition(&FromServer(C1, 7), &acc).unwrap();
        assert_eq!(sent.from_server(C1).collect::<Vec<_>>(), vec![7]);
    }

    #[test]
    fn accept_needs_pending() {
        assert!(server_transition(&NewConnection(C1), &NetworkState::new()).is_none());
        let acc = server_transition(&NewConnection(C1), &pending(C1)).unwrap();
        assert!(server_transition(&NewConnection(C1), &acc).is_none());
    }

    #[test]
    fn server_receive_is_fifo() {
        let mut ns = pending(C1);
        assert!(client_step(&ToServer(C1, 1), &mut ns));
        assert!(client_step(&ToServer(C1, 2), &mut ns));
        assert!(server_transition(&ToServer(C1, 2), &ns).is_none());
        let ns = server_transition(&ToServer(C1, 1), &ns).unwrap();
        assert_eq!(ns.to_server(C1).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn client_may_send_while_pending() {
        let ns = client_transition(&ToServer(C1, 5), &pending(C1)).unwrap();
        assert_eq!(ns.status(C1), ConnectionStatus::Pending);
        assert!(client_transition(&ToServer(C2, 5), &ns).is_none());
        assert!(brute_force_reordered(&[], &[NewConnection(C1), ToServer(C1, 5)], &NetworkState::new()).unwrap());
    }

    #[test]
    fn client_open_needs_closed() {
        assert!(client_transition(&NewConnection(C1), &pending(C1)).is_none());
    }

    #[test]
    fn client_receive_head_mismatch() {
        let mut ns = server_transition(&NewConnection(C1), &pending(C1)).unwrap();
        assert!(server_step(&FromServer(C1, 9), &mut ns));
        assert!(client_transition(&FromServer(C1, 8), &ns).is_none());
        assert!(client_transition(&FromServer(C1, 9), &ns).is_some());
    }

    #[test]
    fn same_connection_order_is_preserved() {
        let ts = [NewConnection(C1), FromServer(C1, 1), FromServer(C1, 2)];
        let ok = [NewConnection(C1), FromServer(C1, 1), FromServer(C1, 2)];
        let swapped = [NewConnection(C1), FromServer(C1, 2), FromServer(C1, 1)];
        let ns = NetworkState::new();
        assert!(network_reordered(&ts, &ok, &ns).unwrap());
        assert!(!network_reordered(&ts, &swapped, &ns).unwrap());
        assert!(!brute_force_reordered(&ts, &swapped, &ns).unwrap());
    }

    #[test]
    fn undelivered_bytes_are_allowed() {
        let ts = [NewConnection(C1), FromServer(C1, 1), FromServer(C1, 2)];
        let tc = [NewConnection(C1), FromServer(C1, 1)];
        assert!(network_reordered(&ts, &tc, &NetworkState::new()).unwrap());
    }

    #[test]
    fn brute_force_edge_cases() {
        let ns = NetworkState::new();
        assert!(brute_force_reordered(&[], &[], &ns).unwrap());
        assert!(!brute_force_reordered(&[FromServer(C1, 0)], &[], &ns).unwrap());
        let big = vec![NewConnection(C1); 17];
        assert_eq!(brute_force_reordered(&big, &[], &ns).unwrap_err(), SearchError::TooLarge { limit: 16, got: 17 });
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let ts: Vec<_> = (0..6).map(|k| ToServer(C1, k)).collect();
        let tc: Vec<_> = std::iter::once(NewConnection(C1)).chain((0..6).map(|k| ToServer(C1, 5 - k))).collect();
        let err = network_reordered_with_budget(&ts, &tc, &NetworkState::new(), 3).unwrap_err();
        assert_eq!(err, SearchError::BudgetExceeded(3));
    }
}
