//! Finite traces of an interaction tree.
//!
//! A trace records each visible event with the environment's response.
//! Internal choice events are never recorded: the checkers branch over them
//! instead. A trace is either a prefix of some execution (`result: None`) or
//! a complete terminating execution (`result: Some(r)`).

use std::collections::HashSet;

use super::{Effect, ITree, ItreeError, Node};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceEvent<E: Effect> {
    pub effect: E,
    pub response: E::Response,
}

impl<E: Effect> TraceEvent<E> {
    pub fn new(effect: E, response: E::Response) -> Self {
        TraceEvent { effect, response }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trace<E: Effect, R> {
    pub events: Vec<TraceEvent<E>>,
    pub result: Option<R>,
}

impl<E: Effect, R> Trace<E, R> {
    pub fn prefix(events: Vec<TraceEvent<E>>) -> Self {
        Trace { events, result: None }
    }

    pub fn terminated(events: Vec<TraceEvent<E>>, result: R) -> Self {
        Trace { events, result: Some(result) }
    }
}

/// Outcome of [`is_trace`]. `accepted == false` together with
/// `fuel_exhausted` means "not found within the fuel", not "impossible".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceCheck {
    pub accepted: bool,
    pub fuel_exhausted: bool,
}

/// Decides whether `events` (ending in `result`, if given) is a trace of `t`,
/// unfolding at most `fuel` nodes along any single path.
pub fn is_trace<E, R>(t: &ITree<E, R>, events: &[TraceEvent<E>], result: Option<&R>, fuel: usize) -> TraceCheck
where
    E: Effect,
    R: Clone + PartialEq + Send + Sync + 'static,
{
    // The empty prefix belongs to every tree.
    if events.is_empty() && result.is_none() {
        return TraceCheck { accepted: true, fuel_exhausted: false };
    }
    let mut check = TraceCheck::default();
    check.accepted = matches_from(t.clone(), events, result, fuel, &mut check.fuel_exhausted);
    check
}

fn matches_from<E, R>(
    mut t: ITree<E, R>,
    mut rest: &[TraceEvent<E>],
    result: Option<&R>,
    mut fuel: usize,
    exhausted: &mut bool,
) -> bool
where
    E: Effect,
    R: Clone + PartialEq + Send + Sync + 'static,
{
    loop {
        if fuel == 0 {
            if rest.is_empty() && result.is_none() {
                return true;
            }
            *exhausted = true;
            return false;
        }
        fuel -= 1;
        match t.observe() {
            Node::Ret(v) => return rest.is_empty() && result.is_none_or(|r| *r == v),
            Node::Tau(next) => t = next,
            Node::Vis(e, k) => {
                if let Some(n) = e.choice_arity() {
                    return (0..n).any(|i| matches_from(k.call(E::branch(i)), rest, result, fuel, exhausted));
                }
                let Some((head, tail)) = rest.split_first() else {
                    // Everything consumed and the tree is still live.
                    return result.is_none();
                };
                if head.effect != e || !e.admits(&head.response) {
                    return false;
                }
                t = k.call(head.response.clone());
                rest = tail;
            }
        }
    }
}

/// Bounds for [`enumerate_traces_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumLimits {
    /// Maximum number of visible events per trace.
    pub depth: usize,
    /// Maximum number of consecutive silent unfoldings (`Tau` and internal
    /// choice) along a path before it is cut.
    pub silent_fuel: usize,
}

impl EnumLimits {
    pub fn depth(depth: usize) -> Self {
        EnumLimits { depth, silent_fuel: super::DEFAULT_FUEL }
    }
}

/// All traces of `t` with at most `depth` visible events.
///
/// The set is prefix closed in the following sense: a path that stops at a
/// live node (a visible effect, or a cut) contributes its events as a prefix
/// trace; a path that terminates contributes its events with the result.
pub fn enumerate_traces<E, R>(
    t: &ITree<E, R>,
    depth: usize,
    universe: &E::Universe,
) -> Result<HashSet<Trace<E, R>>, ItreeError>
where
    E: Effect,
    R: Clone + Eq + std::hash::Hash + Send + Sync + 'static,
{
    enumerate_traces_with(t, EnumLimits::depth(depth), universe)
}

pub fn enumerate_traces_with<E, R>(
    t: &ITree<E, R>,
    limits: EnumLimits,
    universe: &E::Universe,
) -> Result<HashSet<Trace<E, R>>, ItreeError>
where
    E: Effect,
    R: Clone + Eq + std::hash::Hash + Send + Sync + 'static,
{
    let mut out = HashSet::new();
    let mut prefix = Vec::new();
    enumerate_from(t.clone(), &mut prefix, limits, limits.silent_fuel, universe, &mut out)?;
    Ok(out)
}

fn enumerate_from<E, R>(
    mut t: ITree<E, R>,
    prefix: &mut Vec<TraceEvent<E>>,
    limits: EnumLimits,
    mut silent: usize,
    universe: &E::Universe,
    out: &mut HashSet<Trace<E, R>>,
) -> Result<(), ItreeError>
where
    E: Effect,
    R: Clone + Eq + std::hash::Hash + Send + Sync + 'static,
{
    loop {
        if silent == 0 {
            out.insert(Trace::prefix(prefix.clone()));
            return Ok(());
        }
        match t.observe() {
            Node::Ret(v) => {
                out.insert(Trace::terminated(prefix.clone(), v));
                return Ok(());
            }
            Node::Tau(next) => {
                silent -= 1;
                t = next;
            }
            Node::Vis(e, k) => {
                if let Some(n) = e.choice_arity() {
                    for i in 0..n {
                        enumerate_from(k.call(E::branch(i)), prefix, limits, silent - 1, universe, out)?;
                    }
                    return Ok(());
                }
                out.insert(Trace::prefix(prefix.clone()));
                if prefix.len() >= limits.depth {
                    return Ok(());
                }
                for response in e.responses(universe)? {
                    prefix.push(TraceEvent::new(e.clone(), response.clone()));
                    let r = enumerate_from(k.call(response), prefix, limits, limits.silent_fuel, universe, out);
                    prefix.pop();
                    r?;
                }
                return Ok(());
            }
        }
    }
}
