//! Bounded equivalence up to `Tau` and bounded trace refinement.

use std::collections::HashSet;
use std::hash::Hash;

use super::trace::{enumerate_traces, Trace, TraceEvent};
use super::{Effect, ITree, ItreeError, Node};

/// Three-way answer of [`eutt_bounded`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eutt {
    Equivalent,
    Distinct,
    Unknown,
}

impl Eutt {
    fn and(self, other: Eutt) -> Eutt {
        match (self, other) {
            (Eutt::Distinct, _) | (_, Eutt::Distinct) => Eutt::Distinct,
            (Eutt::Unknown, _) | (_, Eutt::Unknown) => Eutt::Unknown,
            _ => Eutt::Equivalent,
        }
    }
}

/// Weak bisimulation check that ignores finite runs of `Tau`.
///
/// `fuel` bounds the number of `Tau` and `Vis` steps taken along any path.
/// `Distinct` is definitive; `Equivalent` means the bisimulation closed (all
/// paths ended in equal results, reached shared subtrees, or revisited a pair
/// of labelled loop states after a visible step); otherwise `Unknown`.
pub fn eutt_bounded<E, R>(t: &ITree<E, R>, u: &ITree<E, R>, fuel: usize, universe: &E::Universe) -> Eutt
where
    E: Effect,
    R: Clone + PartialEq + Send + Sync + 'static,
{
    let mut hyps = Vec::new();
    bisim(t.clone(), u.clone(), fuel, universe, &mut hyps)
}

fn bisim<E, R>(
    mut t: ITree<E, R>,
    mut u: ITree<E, R>,
    mut fuel: usize,
    universe: &E::Universe,
    hyps: &mut Vec<(u64, u64)>,
) -> Eutt
where
    E: Effect,
    R: Clone + PartialEq + Send + Sync + 'static,
{
    let (mut lt, mut lu) = (None, None);
    let (tn, un) = loop {
        if t.ptr_eq(&u) {
            return Eutt::Equivalent;
        }
        if let (Some(a), Some(b)) = (t.label(), u.label()) {
            if a == b {
                return Eutt::Equivalent;
            }
        }
        lt = t.label().or(lt);
        lu = u.label().or(lu);
        let tn = t.observe();
        let un = u.observe();
        if matches!(&un, Node::Tau(x) if x.ptr_eq(&t)) || matches!(&tn, Node::Tau(x) if x.ptr_eq(&u)) {
            return Eutt::Equivalent;
        }
        if fuel == 0 {
            return Eutt::Unknown;
        }
        match (tn, un) {
            (Node::Tau(x), _) => {
                t = x;
                fuel -= 1;
            }
            (_, Node::Tau(y)) => {
                u = y;
                fuel -= 1;
            }
            (tn, un) => break (tn, un),
        }
    };
    match (tn, un) {
        (Node::Ret(a), Node::Ret(b)) => {
            if a == b {
                Eutt::Equivalent
            } else {
                Eutt::Distinct
            }
        }
        (Node::Vis(e1, k1), Node::Vis(e2, k2)) => {
            if e1 != e2 {
                return Eutt::Distinct;
            }
            let pair = lt.zip(lu);
            if let Some(p) = pair {
                if hyps.contains(&p) {
                    return Eutt::Equivalent;
                }
                hyps.push(p);
            }
            let verdict = match e1.responses(universe) {
                Err(_) => Eutt::Unknown,
                Ok(responses) => {
                    let mut acc = Eutt::Equivalent;
                    for x in responses {
                        acc = acc.and(bisim(k1.call(x.clone()), k2.call(x), fuel - 1, universe, hyps));
                        if acc == Eutt::Distinct {
                            break;
                        }
                    }
                    acc
                }
            };
            if pair.is_some() {
                hyps.pop();
            }
            verdict
        }
        _ => Eutt::Distinct,
    }
}

/// Bounded trace inclusion: every trace of `t` with at most `depth` visible
/// events is a trace of `u`. Prefix traces of `t` only need to be prefixes
/// of some trace of `u`; terminated traces must terminate in `u` with the
/// same result.
pub fn refines_bounded<E, R>(
    t: &ITree<E, R>,
    u: &ITree<E, R>,
    depth: usize,
    universe: &E::Universe,
) -> Result<bool, ItreeError>
where
    E: Effect,
    R: Clone + Eq + Hash + Send + Sync + 'static,
{
    let lhs = enumerate_traces(t, depth, universe)?;
    let rhs = enumerate_traces(u, depth, universe)?;
    Ok(trace_set_included(&lhs, &rhs))
}

/// Inclusion between two enumerated trace sets, honoring prefix closure.
pub fn trace_set_included<E, R>(lhs: &HashSet<Trace<E, R>>, rhs: &HashSet<Trace<E, R>>) -> bool
where
    E: Effect,
    R: Clone + Eq + Hash,
{
    let mut prefixes: HashSet<&[TraceEvent<E>]> = HashSet::new();
    for tr in rhs {
        for n in 0..=tr.events.len() {
            prefixes.insert(&tr.events[..n]);
        }
    }
    lhs.iter().all(|tr| match &tr.result {
        Some(_) => rhs.contains(tr),
        None => prefixes.contains(tr.events.as_slice()),
    })
}

#[cfg(test)]
mod tests {
    use super::super::io::*;
    use super::*;

    fn uni() -> IoUniverse {
        IoUniverse::with_inputs([0, 1, 2])
    }

    #[test]
    fn tau_is_transparent() {
        let t = ITree::<Io, u64>::ret(1);
        assert_eq!(eutt_bounded(&ITree::tau(t.clone()), &t, 10, &uni()), Eutt::Equivalent);
        for fuel in 1..5 {
            let e = echo();
            assert_eq!(eutt_bounded(&e, &ITree::tau(e.clone()), fuel, &uni()), Eutt::Equivalent);
        }
    }

    #[test]
    fn differing_outputs_are_distinct() {
        assert_eq!(eutt_bounded(&output(1), &output(2), 1, &uni()), Eutt::Distinct);
        assert_eq!(eutt_bounded(&ITree::<Io, u64>::ret(1), &ITree::ret(2), 1, &uni()), Eutt::Distinct);
    }

    #[test]
    fn separately_built_infinite_trees_stay_unknown() {
        assert_eq!(eutt_bounded(&echo(), &ITree::tau(echo()), 20, &uni()), Eutt::Unknown);
    }

    #[test]
    fn spin_is_undecided_against_ret() {
        let spin = ITree::<Io, u64>::spin();
        assert_eq!(eutt_bounded(&spin, &ITree::ret(1), 50, &uni()), Eutt::Unknown);
    }

    #[test]
    fn refinement_of_or_branches() {
        let e1 = output(1);
        let e2 = output(2);
        let both = ITree::or(e1.clone(), e2.clone());
        assert!(refines_bounded(&e1, &both, 3, &uni()).unwrap());
        assert!(refines_bounded(&e2, &both, 3, &uni()).unwrap());
        assert!(refines_bounded(&e1, &e1, 3, &uni()).unwrap());
        assert!(!refines_bounded(&both, &e1, 1, &uni()).unwrap());
    }

    #[test]
    fn termination_is_observable_in_refinement() {
        let stop = output(1);
        let more = output(1).bind(|_| output(2));
        assert!(!refines_bounded(&stop, &more, 3, &uni()).unwrap());
        assert!(!refines_bounded(&more, &stop, 3, &uni()).unwrap());
        // A depth-cut prefix of `more` is still a prefix of `more`.
        assert!(refines_bounded(&more, &more, 1, &uni()).unwrap());
    }
}
