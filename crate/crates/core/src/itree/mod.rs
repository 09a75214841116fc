//! Interaction trees: lazily unfolded `Ret` / `Tau` / `Vis` trees describing
//! the allowed behaviors of an interactive computation.
//!
//! Every recursive position sits behind a zero-argument unfolding step, so
//! infinite trees (servers, `spin`, `forever`) are ordinary values. A single
//! [`ITree::observe`] call always terminates; non-termination only shows up as
//! unbounded depth, which the checkers in [`trace`] and [`equiv`] bound with
//! explicit fuel.
//!
//! Internal nondeterminism (`Or`, `Choose`) is an effect like any other, but
//! effect types flag it through [`Effect::choice_arity`]. Trace semantics
//! branch over those nodes and never emit them as events.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

pub mod equiv;
pub mod io;
pub mod trace;

pub use equiv::{eutt_bounded, refines_bounded, Eutt};
pub use trace::{enumerate_traces, is_trace, EnumLimits, Trace, TraceCheck, TraceEvent};

/// Default fuel for bounded equivalence checks.
pub const DEFAULT_FUEL: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ItreeError {
    #[error("effect kind `{0}` is not registered in the signature")]
    UnregisteredEffect(&'static str),
    #[error("choose over an empty list of alternatives")]
    EmptyChoice,
    #[error("response domain of `{0}` is infinite and no sampler was supplied")]
    UnboundedDomain(&'static str),
}

/// An effect family: the requests a tree may issue, and what the environment
/// may answer.
///
/// Every family carries the two internal choice effects; `or_effect` answers
/// with a branch index in `{0, 1}`, `choose_effect(n)` with one in `[0, n)`.
pub trait Effect: Clone + fmt::Debug + Eq + Hash + Send + Sync + 'static {
    type Response: Clone + fmt::Debug + Eq + Hash + Send + Sync + 'static;
    /// Finite description of the response domains used for enumeration.
    type Universe;

    fn kind(&self) -> &'static str;

    fn or_effect() -> Self;
    fn choose_effect(n: usize) -> Self;
    /// The response that selects branch `i` of a choice effect.
    fn branch(i: usize) -> Self::Response;

    /// `Some(n)` for internal choice effects with `n` branches.
    fn choice_arity(&self) -> Option<usize>;

    /// Domain membership for a response to this effect.
    fn admits(&self, response: &Self::Response) -> bool;

    /// Every response in this effect's domain, restricted to `universe`.
    fn responses(&self, universe: &Self::Universe) -> Result<Vec<Self::Response>, ItreeError>;
}

/// Registry of effect kinds a tree may use.
#[derive(Debug, Clone, Default)]
pub struct EffectSig {
    kinds: BTreeSet<&'static str>,
}

impl EffectSig {
    pub fn new<I: IntoIterator<Item = &'static str>>(kinds: I) -> Self {
        Self { kinds: kinds.into_iter().collect() }
    }

    pub fn register(&mut self, kind: &'static str) {
        self.kinds.insert(kind);
    }

    pub fn contains<E: Effect>(&self, effect: &E) -> bool {
        self.kinds.contains(effect.kind())
    }

    /// Checked `Vis` constructor.
    pub fn vis<E, R, F>(&self, effect: E, k: F) -> Result<ITree<E, R>, ItreeError>
    where
        E: Effect,
        R: Clone + Send + Sync + 'static,
        F: Fn(E::Response) -> ITree<E, R> + Send + Sync + 'static,
    {
        if !self.contains(&effect) {
            return Err(ItreeError::UnregisteredEffect(effect.kind()));
        }
        Ok(ITree::vis(effect, k))
    }
}

type Step<E, R> = Arc<dyn Fn() -> Node<E, R> + Send + Sync>;

/// A continuation: maps a response to the rest of the tree.
pub struct Cont<E: Effect, R>(Arc<dyn Fn(E::Response) -> ITree<E, R> + Send + Sync>);

impl<E: Effect, R> Cont<E, R> {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(E::Response) -> ITree<E, R> + Send + Sync + 'static,
    {
        Cont(Arc::new(f))
    }

    pub fn call(&self, response: E::Response) -> ITree<E, R> {
        (self.0)(response)
    }
}

impl<E: Effect, R> Clone for Cont<E, R> {
    fn clone(&self) -> Self {
        Cont(self.0.clone())
    }
}

/// One unfolded layer of a tree.
pub enum Node<E: Effect, R> {
    Ret(R),
    Tau(ITree<E, R>),
    Vis(E, Cont<E, R>),
}

impl<E: Effect, R: fmt::Debug> fmt::Debug for Node<E, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Ret(r) => write!(f, "Ret({r:?})"),
            Node::Tau(_) => write!(f, "Tau(..)"),
            Node::Vis(e, _) => write!(f, "Vis({e:?}, ..)"),
        }
    }
}

/// A lazily unfolded interaction tree.
///
/// A tree may carry a `label`: a digest promising that any two trees with the
/// same label have the same behavior. Loop combinators attach labels derived
/// from the loop state; the bounded searches use them as memoization keys.
pub struct ITree<E: Effect, R> {
    step: Step<E, R>,
    label: Option<u64>,
}

impl<E: Effect, R> Clone for ITree<E, R> {
    fn clone(&self) -> Self {
        ITree { step: self.step.clone(), label: self.label }
    }
}

impl<E: Effect, R> fmt::Debug for ITree<E, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            Some(l) => write!(f, "ITree(label={l:#x})"),
            None => write!(f, "ITree(..)"),
        }
    }
}

impl<E: Effect, R: Clone + Send + Sync + 'static> ITree<E, R> {
    /// Builds a tree from its unfolding step.
    pub fn new<F>(step: F) -> Self
    where
        F: Fn() -> Node<E, R> + Send + Sync + 'static,
    {
        ITree { step: Arc::new(step), label: None }
    }

    /// Unfolds one layer.
    pub fn observe(&self) -> Node<E, R> {
        (self.step)()
    }

    pub fn label(&self) -> Option<u64> {
        self.label
    }

    /// Same tree, tagged with a behavior digest.
    pub fn labelled(self, label: u64) -> Self {
        ITree { step: self.step, label: Some(label) }
    }

    /// True when both handles share the same unfolding step.
    pub fn ptr_eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.step, &other.step)
    }

    pub fn ret(value: R) -> Self {
        ITree::new(move || Node::Ret(value.clone()))
    }

    pub fn tau(t: ITree<E, R>) -> Self {
        ITree::new(move || Node::Tau(t.clone()))
    }

    /// A `Tau` whose subtree is built on demand.
    pub fn tau_lazy<F>(make: F) -> Self
    where
        F: Fn() -> ITree<E, R> + Send + Sync + 'static,
    {
        ITree::new(move || Node::Tau(make()))
    }

    pub fn vis<F>(effect: E, k: F) -> Self
    where
        F: Fn(E::Response) -> ITree<E, R> + Send + Sync + 'static,
    {
        let k = Cont::new(k);
        ITree::new(move || Node::Vis(effect.clone(), k.clone()))
    }

    /// The silent divergent computation.
    pub fn spin() -> Self {
        ITree::tau_lazy(ITree::spin)
    }

    /// Sequential composition.
    ///
    /// A `Ret` of `self` becomes a `Tau` into the continuation, so unfolding
    /// a bound tree never recurses through a chain of binds and labels on the
    /// continuation stay visible.
    pub fn bind<S, F>(self, k: F) -> ITree<E, S>
    where
        S: Clone + Send + Sync + 'static,
        F: Fn(R) -> ITree<E, S> + Send + Sync + 'static,
    {
        bind_shared(self, Arc::new(k))
    }

    pub fn map<S, F>(self, f: F) -> ITree<E, S>
    where
        S: Clone + Send + Sync + 'static,
        F: Fn(R) -> S + Send + Sync + 'static,
    {
        self.bind(move |r| ITree::ret(f(r)))
    }

    /// Internal binary choice.
    pub fn or(left: ITree<E, R>, right: ITree<E, R>) -> Self {
        ITree::vis(E::or_effect(), move |resp| if resp == E::branch(0) { left.clone() } else { right.clone() })
    }

    /// Repeats `body` forever, with a `Tau` before every iteration.
    pub fn forever<S>(body: ITree<E, S>) -> Self
    where
        S: Clone + Send + Sync + 'static,
    {
        ITree::tau_lazy(move || {
            let again = body.clone();
            body.clone().bind(move |_| ITree::forever(again.clone()))
        })
    }

    /// A tree with no continuation at all: a choice among zero branches.
    pub fn stuck() -> Self {
        ITree::vis(E::choose_effect(0), |_| ITree::spin())
    }
}

impl<E: Effect, T: Clone + Send + Sync + 'static> ITree<E, T> {
    /// Internal choice of one of `items`. An empty list yields a tree with no
    /// continuation; see [`ITree::try_choose`] for a checked variant.
    pub fn choose(items: Vec<T>) -> Self {
        let n = items.len();
        let items = Arc::new(items);
        ITree::vis(E::choose_effect(n), move |resp| {
            let picked = (0..items.len()).find(|&i| E::branch(i) == resp);
            match picked {
                Some(i) => ITree::ret(items[i].clone()),
                None => ITree::stuck(),
            }
        })
    }

    pub fn try_choose(items: Vec<T>) -> Result<Self, ItreeError> {
        if items.is_empty() {
            return Err(ItreeError::EmptyChoice);
        }
        Ok(ITree::choose(items))
    }
}

fn bind_shared<E, R, S>(t: ITree<E, R>, k: Arc<dyn Fn(R) -> ITree<E, S> + Send + Sync>) -> ITree<E, S>
where
    E: Effect,
    R: Clone + Send + Sync + 'static,
    S: Clone + Send + Sync + 'static,
{
    ITree::new(move || match t.observe() {
        Node::Ret(r) => Node::Tau(k(r)),
        Node::Tau(next) => Node::Tau(bind_shared(next, k.clone())),
        Node::Vis(e, c) => {
            let k = k.clone();
            Node::Vis(e, Cont::new(move |x| bind_shared(c.call(x), k.clone())))
        }
    })
}

/// State-passing loop: runs `body` on the current state, then continues with
/// the state it returns. Each iteration starts with a `Tau` labelled by a
/// digest of `(tag, state)`.
pub fn iterate<E, S, F>(tag: &'static str, init: S, body: F) -> ITree<E, ()>
where
    E: Effect,
    S: Clone + Hash + Send + Sync + 'static,
    F: Fn(S) -> ITree<E, S> + Send + Sync + 'static,
{
    iterate_shared(tag, init, Arc::new(body))
}

fn iterate_shared<E, S>(tag: &'static str, state: S, body: Arc<dyn Fn(S) -> ITree<E, S> + Send + Sync>) -> ITree<E, ()>
where
    E: Effect,
    S: Clone + Hash + Send + Sync + 'static,
{
    let label = state_label(tag, &state);
    ITree::tau_lazy(move || {
        let body2 = body.clone();
        body(state.clone()).bind(move |next| iterate_shared(tag, next, body2.clone()))
    })
    .labelled(label)
}

/// Digest of a tagged loop state.
pub fn state_label<S: Hash>(tag: &str, state: &S) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    tag.hash(&mut h);
    state.hash(&mut h);
    h.finish()
}

/// Resolves unlabelled `Tau` nodes until reaching a labelled tree or a
/// non-`Tau` node, spending at most `fuel` unfoldings.
pub fn settle<E: Effect, R: Clone + Send + Sync + 'static>(mut t: ITree<E, R>, fuel: usize) -> ITree<E, R> {
    for _ in 0..fuel {
        if t.label().is_some() {
            return t;
        }
        match t.observe() {
            Node::Tau(next) => t = next,
            _ => return t,
        }
    }
    t
}

/// A first visible step reachable through silent nodes.
pub enum Frontier<E: Effect, R> {
    Ret(R),
    Vis(E, Cont<E, R>),
}

/// Collects every `Ret` or non-choice `Vis` reachable from `t` through `Tau`
/// and internal choice nodes, in branch order. Paths longer than `fuel`
/// silent steps are dropped.
pub fn frontier<E: Effect, R: Clone + Send + Sync + 'static>(t: &ITree<E, R>, fuel: usize) -> Vec<Frontier<E, R>> {
    let mut out = Vec::new();
    collect_frontier(t.clone(), fuel, &mut out);
    out
}

fn collect_frontier<E: Effect, R: Clone + Send + Sync + 'static>(
    mut t: ITree<E, R>,
    mut fuel: usize,
    out: &mut Vec<Frontier<E, R>>,
) {
    loop {
        if fuel == 0 {
            return;
        }
        fuel -= 1;
        match t.observe() {
            Node::Ret(r) => return out.push(Frontier::Ret(r)),
            Node::Tau(next) => t = next,
            Node::Vis(e, k) => match e.choice_arity() {
                Some(n) => {
                    for i in 0..n {
                        collect_frontier(k.call(E::branch(i)), fuel, out);
                    }
                    return;
                }
                None => return out.push(Frontier::Vis(e, k)),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::io::{output, Io};
    use super::*;

    #[test]
    fn unregistered_effects_are_rejected() {
        let sig = EffectSig::new(["input"]);
        let err = sig.vis(Io::Output(1), |_| ITree::<Io, ()>::ret(())).unwrap_err();
        assert_eq!(err, ItreeError::UnregisteredEffect("output"));
        assert!(sig.vis(Io::Input, |_| ITree::<Io, ()>::ret(())).is_ok());
    }

    #[test]
    fn try_choose_rejects_empty() {
        assert_eq!(ITree::<Io, u8>::try_choose(vec![]).unwrap_err(), ItreeError::EmptyChoice);
        assert!(ITree::<Io, u8>::try_choose(vec![1]).is_ok());
    }

    #[test]
    fn bind_of_ret_steps_into_continuation() {
        let t = ITree::<Io, u64>::ret(3).bind(|x| ITree::ret(x + 1));
        let Node::Tau(next) = t.observe() else { panic!("expected tau") };
        assert!(matches!(next.observe(), Node::Ret(4)));
    }

    #[test]
    fn forever_unfolds_one_layer_at_a_time() {
        let t: ITree<Io, ()> = ITree::forever(output(1));
        // Tau, then the body's Vis.
        let Node::Tau(next) = t.observe() else { panic!() };
        assert!(matches!(next.observe(), Node::Vis(Io::Output(1), _)));
    }

    #[test]
    fn iterate_labels_loop_heads_by_state() {
        let a: ITree<Io, ()> = iterate("count", 0u8, |n| ITree::ret(n.wrapping_add(1)));
        let b: ITree<Io, ()> = iterate("count", 0u8, |n| ITree::ret(n.wrapping_add(1)));
        assert_eq!(a.label(), b.label());
        let c: ITree<Io, ()> = iterate("count", 1u8, |n| ITree::ret(n.wrapping_add(1)));
        assert_ne!(a.label(), c.label());
        // After one iteration the next head carries the successor's label.
        let Node::Tau(body) = a.observe() else { panic!() };
        let Node::Tau(head) = body.observe() else { panic!() };
        assert_eq!(head.label(), c.label());
    }
}
