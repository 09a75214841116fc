//! Checks that a model run is explained by extending a specification
//! witness at exactly two kinds of moments: right after an accept, and
//! right after a request message is complete.
//!
//! The model's own events drive the network from the client side (they are
//! what an observer would see); the witness drives it from the server side.
//! The run is explained when every model event is enabled.

use std::collections::HashMap;

use super::CheckState;
use crate::impl_model::{ImplEffect, ImplResponse, ModelRun};
use crate::itree::{frontier, Frontier, DEFAULT_FUEL};
use crate::network_model::{client_step, server_step, ConnId, NetworkEvent, NetworkState};
use crate::swap_spec::{linear_spec, Message, SpecEffect, SpecResponse};

/// When the witness is extended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessPolicy {
    /// At accept completion and message completion.
    AtCommitPoints,
    /// Also after every receive, complete or not. Wrong on purpose: it
    /// checks that the instrumentation notices a misplaced commit.
    EveryRecv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearizationReport {
    pub holds: bool,
    /// Witness extensions at accepts.
    pub accept_extensions: usize,
    /// Witness extensions at message completion: one for the request and
    /// one for the reply.
    pub exchange_extensions: usize,
    /// Index of the first model step that could not be explained.
    pub failed_at: Option<usize>,
    pub witness: Vec<NetworkEvent>,
}

pub fn linearization_points_check(run: &ModelRun, policy: WitnessPolicy) -> LinearizationReport {
    let ms = run.message_size;
    let mut st = CheckState { ns: NetworkState::new(), spec_rest: linear_spec(ms), witness: Vec::new() };
    let mut report = LinearizationReport {
        holds: true,
        accept_extensions: 0,
        exchange_extensions: 0,
        failed_at: None,
        witness: Vec::new(),
    };
    let mut partial: HashMap<ConnId, usize> = HashMap::new();
    for (idx, step) in run.steps.iter().enumerate() {
        let ok = match (&step.effect, &step.response) {
            (ImplEffect::Accept(_), ImplResponse::Accepted(Some(c))) => {
                report.accept_extensions += 1;
                partial.insert(*c, 0);
                client_step(&NetworkEvent::NewConnection(*c), &mut st.ns) && extend_accept(&mut st, *c)
            }
            (ImplEffect::RecvBytes(c, _), ImplResponse::Received(bytes)) if !bytes.is_empty() => {
                let sent = bytes.iter().all(|&b| client_step(&NetworkEvent::ToServer(*c, b), &mut st.ns));
                let got = partial.entry(*c).or_default();
                *got += bytes.len();
                let commit = *got >= ms || policy == WitnessPolicy::EveryRecv;
                if *got >= ms {
                    *got = 0;
                }
                if sent && commit {
                    report.exchange_extensions += 2;
                    extend_exchange(&mut st, *c, ms)
                } else {
                    sent
                }
            }
            (ImplEffect::SendBytes(c, bytes), ImplResponse::Sent(n)) => bytes
                .get(..*n)
                .is_some_and(|sent| sent.iter().all(|&b| client_step(&NetworkEvent::FromServer(*c, b), &mut st.ns))),
            _ => true,
        };
        if !ok {
            report.holds = false;
            report.failed_at = Some(idx);
            break;
        }
    }
    report.witness = st.witness;
    report
}

fn extend_accept(st: &mut CheckState<SpecEffect>, c: ConnId) -> bool {
    let ev = NetworkEvent::NewConnection(c);
    for f in frontier(&st.spec_rest, DEFAULT_FUEL) {
        if let Frontier::Vis(SpecEffect::ObsConnect, k) = f {
            if server_step(&ev, &mut st.ns) {
                st.spec_rest = k.call(SpecResponse::Conn(c));
                st.witness.push(ev);
                return true;
            }
        }
    }
    false
}

fn extend_exchange(st: &mut CheckState<SpecEffect>, c: ConnId, ms: usize) -> bool {
    let request: Vec<u8> = st.ns.to_server(c).take(ms).collect();
    if request.len() < ms {
        return false;
    }
    for f in frontier(&st.spec_rest, DEFAULT_FUEL) {
        let Frontier::Vis(SpecEffect::ObsMsgToServer(d), k) = f else { continue };
        if d != c {
            continue;
        }
        let after = k.call(SpecResponse::Msg(Message(request.clone())));
        for g in frontier(&after, DEFAULT_FUEL) {
            let Frontier::Vis(SpecEffect::ObsMsgFromServer(e, reply), k2) = g else { continue };
            let mut events: Vec<NetworkEvent> = request.iter().map(|&b| NetworkEvent::ToServer(c, b)).collect();
            events.extend(reply.as_bytes().iter().map(|&b| NetworkEvent::FromServer(e, b)));
            let mut ns = st.ns.clone();
            if events.iter().all(|ev| server_step(ev, &mut ns)) {
                st.ns = ns;
                st.spec_rest = k2.call(SpecResponse::Unit);
                st.witness.extend(events);
                return true;
            }
        }
    }
    false
}
