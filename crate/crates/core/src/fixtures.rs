//! Reference sessions with a message size of 3, shared by tests and the
//! command line.
//!
//! Three clients connect in turn and each swaps one message: the first
//! sends "abc" and gets the initial zero bytes back, the second sends "def"
//! and gets "abc", the third sends "ghi" and gets "def".

use crate::network_model::{ConnId, NetworkEvent, NetworkTrace};
use crate::swap_spec::{Message, SpecEffect, SpecEvent, SpecResponse};

pub const MESSAGE_SIZE: usize = 3;

/// The three-client session as specification events.
pub fn sequential_session() -> Vec<SpecEvent> {
    let ev = SpecEvent::new;
    let msg = |s: &str| Message(s.as_bytes().to_vec());
    let mut out = Vec::new();
    let mut stored = Message::zeros(MESSAGE_SIZE);
    for (c, req) in [(1, "abc"), (2, "def"), (3, "ghi")] {
        let c = ConnId(c);
        out.push(ev(SpecEffect::ObsConnect, SpecResponse::Conn(c)));
        out.push(ev(SpecEffect::ObsMsgToServer(c), SpecResponse::Msg(msg(req))));
        out.push(ev(SpecEffect::ObsMsgFromServer(c, stored), SpecResponse::Unit));
        stored = msg(req);
    }
    out
}

/// What a client might observe for the same session when requests are sent
/// in chunks, connections overlap, and one reply is never read: clients 1
/// and 2 interleave their requests byte by byte, client 3 connects late,
/// and the reply to client 2 stays in flight.
pub fn disordered_observation() -> NetworkTrace {
    use NetworkEvent::*;
    let (c1, c2, c3) = (ConnId(1), ConnId(2), ConnId(3));
    vec![
        NewConnection(c1),
        ToServer(c1, b'a'),
        NewConnection(c2),
        ToServer(c2, b'd'),
        ToServer(c1, b'b'),
        ToServer(c2, b'e'),
        ToServer(c1, b'c'),
        FromServer(c1, 0),
        ToServer(c2, b'f'),
        NewConnection(c3),
        ToServer(c3, b'g'),
        ToServer(c3, b'h'),
        ToServer(c3, b'i'),
        FromServer(c1, 0),
        FromServer(c1, 0),
        FromServer(c3, b'd'),
        FromServer(c3, b'e'),
        FromServer(c3, b'f'),
    ]
}
