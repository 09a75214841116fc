//! A tiny console-style effect family: natural-number input and output.
//!
//! Used to exercise the interaction-tree machinery on small programs such
//! as `echo`, independently of the swap server.

use super::{Effect, ITree, ItreeError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Io {
    Input,
    Output(u64),
    Or,
    Choose(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IoResponse {
    Nat(u64),
    Unit,
    Branch(usize),
}

/// Response domain for `Input`; `None` means unbounded (no sampler).
#[derive(Debug, Clone, Default)]
pub struct IoUniverse {
    pub inputs: Option<Vec<u64>>,
}

impl IoUniverse {
    pub fn with_inputs<I: IntoIterator<Item = u64>>(inputs: I) -> Self {
        IoUniverse { inputs: Some(inputs.into_iter().collect()) }
    }
}

impl Effect for Io {
    type Response = IoResponse;
    type Universe = IoUniverse;

    fn kind(&self) -> &'static str {
        match self {
            Io::Input => "input",
            Io::Output(_) => "output",
            Io::Or => "or",
            Io::Choose(_) => "choose",
        }
    }

    fn or_effect() -> Self {
        Io::Or
    }

    fn choose_effect(n: usize) -> Self {
        Io::Choose(n)
    }

    fn branch(i: usize) -> IoResponse {
        IoResponse::Branch(i)
    }

    fn choice_arity(&self) -> Option<usize> {
        match self {
            Io::Or => Some(2),
            Io::Choose(n) => Some(*n),
            _ => None,
        }
    }

    fn admits(&self, response: &IoResponse) -> bool {
        match (self, response) {
            (Io::Input, IoResponse::Nat(_)) => true,
            (Io::Output(_), IoResponse::Unit) => true,
            (Io::Or, IoResponse::Branch(i)) => *i < 2,
            (Io::Choose(n), IoResponse::Branch(i)) => i < n,
            _ => false,
        }
    }

    fn responses(&self, universe: &IoUniverse) -> Result<Vec<IoResponse>, ItreeError> {
        match self {
            Io::Input => universe
                .inputs
                .as_ref()
                .map(|xs| xs.iter().copied().map(IoResponse::Nat).collect())
                .ok_or(ItreeError::UnboundedDomain("input")),
            Io::Output(_) => Ok(vec![IoResponse::Unit]),
            Io::Or => Ok(vec![IoResponse::Branch(0), IoResponse::Branch(1)]),
            Io::Choose(n) => Ok((0..*n).map(IoResponse::Branch).collect()),
        }
    }
}

pub fn input() -> ITree<Io, u64> {
    ITree::vis(Io::Input, |r| match r {
        IoResponse::Nat(x) => ITree::ret(x),
        _ => ITree::stuck(),
    })
}

pub fn output(x: u64) -> ITree<Io, ()> {
    ITree::vis(Io::Output(x), |_| ITree::ret(()))
}

/// `forever (x <- input ;; output x)`
pub fn echo() -> ITree<Io, ()> {
    ITree::forever(input().bind(output))
}

pub fn ev_input(x: u64) -> super::TraceEvent<Io> {
    super::TraceEvent { effect: Io::Input, response: IoResponse::Nat(x) }
}

pub fn ev_output(x: u64) -> super::TraceEvent<Io> {
    super::TraceEvent { effect: Io::Output(x), response: IoResponse::Unit }
}
