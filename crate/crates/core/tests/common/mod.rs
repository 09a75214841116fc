//! Generators and oracle checks shared by the property and acceptance suites.
#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swapnet::itree::io::{Io, IoResponse, IoUniverse};
use swapnet::itree::{enumerate_traces, eutt_bounded, is_trace, refines_bounded, Eutt, ITree, Trace, TraceEvent};
use swapnet::network_model::{brute_force_reordered, network_reordered, ConnId, NetworkEvent, NetworkState};
use swapnet::refinement::{spec_behavior_member, spec_behavior_member_naive, Verdict};
use swapnet::tester::{gen_scenario, run_scenario_model, Limits};

pub const LAW_FUEL: usize = 50;
pub const INPUTS: [u64; 3] = [0, 1, 2];

pub fn universe() -> IoUniverse {
    IoUniverse::with_inputs(INPUTS)
}

/// A finite tree over the console effects, as plain data.
#[derive(Debug, Clone)]
pub enum Shape {
    Ret(u64),
    Tau(Arc<Shape>),
    Output(u64, Arc<Shape>),
    /// The continuation is picked by the input value.
    Input(Vec<Shape>),
    Or(Arc<Shape>, Arc<Shape>),
    Bind(Arc<Shape>, Kont),
}

/// A continuation `x ↦ branches[x mod len]`.
#[derive(Debug, Clone)]
pub struct Kont(pub Vec<Shape>);

pub fn build(s: &Shape) -> ITree<Io, u64> {
    match s {
        Shape::Ret(v) => ITree::ret(*v),
        Shape::Tau(t) => ITree::tau(build(t)),
        Shape::Output(x, t) => {
            let t = t.clone();
            ITree::vis(Io::Output(*x), move |_| build(&t))
        }
        Shape::Input(ks) => {
            let ks = ks.clone();
            ITree::vis(Io::Input, move |r| match r {
                IoResponse::Nat(x) => build(&ks[x as usize % ks.len()]),
                _ => ITree::stuck(),
            })
        }
        Shape::Or(a, b) => ITree::or(build(a), build(b)),
        Shape::Bind(t, k) => build(t).bind(kont(k)),
    }
}

pub fn kont(k: &Kont) -> impl Fn(u64) -> ITree<Io, u64> + Send + Sync + Clone + 'static {
    let k = k.clone();
    move |x| build(&k.0[x as usize % k.0.len()])
}

pub fn shape() -> impl Strategy<Value = Shape> {
    let leaf = (0u64..3).prop_map(Shape::Ret);
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Shape::Tau(Arc::new(t))),
            (0u64..3, inner.clone()).prop_map(|(x, t)| Shape::Output(x, Arc::new(t))),
            proptest::collection::vec(inner.clone(), 1..3).prop_map(Shape::Input),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Shape::Or(Arc::new(a), Arc::new(b))),
            (inner.clone(), proptest::collection::vec(inner, 1..3))
                .prop_map(|(t, k)| Shape::Bind(Arc::new(t), Kont(k))),
        ]
    })
}

pub fn kont_strategy() -> impl Strategy<Value = Kont> {
    proptest::collection::vec(shape(), 1..3).prop_map(Kont)
}

/// Inputs for one round of the law suite.
#[derive(Debug, Clone)]
pub struct LawCase {
    pub t: Shape,
    pub u: Shape,
    pub f: Kont,
    pub g: Kont,
    pub v: u64,
}

pub fn law_case() -> impl Strategy<Value = LawCase> {
    (shape(), shape(), kont_strategy(), kont_strategy(), 0u64..3).prop_map(|(t, u, f, g, v)| LawCase { t, u, f, g, v })
}

fn equivalent(name: &str, a: &ITree<Io, u64>, b: &ITree<Io, u64>) -> Result<(), String> {
    let u = universe();
    match eutt_bounded(a, b, LAW_FUEL, &u) {
        Eutt::Equivalent => {}
        other => return Err(format!("{name}: eutt_bounded gave {other:?}")),
    }
    // Equivalence implies refinement both ways at any depth within the fuel.
    for (x, y) in [(a, b), (b, a)] {
        if refines_bounded(x, y, 6, &u) != Ok(true) {
            return Err(format!("{name}: equivalent trees do not refine each other"));
        }
    }
    Ok(())
}

/// The five laws: `Tau t ≈ t`, left and right identity, associativity of
/// bind, and `r <- e_i ;; k ⊑ r <- or e1 e2 ;; k`.
pub fn check_laws(c: &LawCase) -> Result<(), String> {
    let t = build(&c.t);
    let f = kont(&c.f);
    let g = kont(&c.g);

    equivalent("tau", &ITree::tau(t.clone()), &t)?;
    equivalent("left identity", &ITree::ret(c.v).bind(f.clone()), &f(c.v))?;
    equivalent("right identity", &t.clone().bind(ITree::ret), &t)?;
    let (f2, g2) = (f.clone(), g.clone());
    equivalent(
        "associativity",
        &t.clone().bind(f.clone()).bind(g.clone()),
        &t.clone().bind(move |x| f2(x).bind(g2.clone())),
    )?;

    let u = build(&c.u);
    let left = ITree::or(t.clone(), u.clone()).bind(f.clone());
    for (i, branch) in [t, u].into_iter().enumerate() {
        if refines_bounded(&branch.bind(f.clone()), &left, 6, &universe()) != Ok(true) {
            return Err(format!("or-refinement: branch {i} is not included"));
        }
    }
    Ok(())
}

fn all_events() -> Vec<TraceEvent<Io>> {
    let mut evs: Vec<TraceEvent<Io>> = INPUTS.iter().map(|&x| TraceEvent::new(Io::Input, IoResponse::Nat(x))).collect();
    evs.extend(INPUTS.iter().map(|&x| TraceEvent::new(Io::Output(x), IoResponse::Unit)));
    evs
}

/// Prefix closure, and agreement of `enumerate_traces` with `is_trace` on
/// every event sequence of length at most 3.
pub fn check_trace_semantics(s: &Shape) -> Result<(), String> {
    let t = build(s);
    let depth = 6;
    let traces: HashSet<Trace<Io, u64>> = enumerate_traces(&t, depth, &universe()).map_err(|e| e.to_string())?;
    let mut prefixes: HashSet<Vec<TraceEvent<Io>>> = HashSet::new();
    for tr in &traces {
        let full = is_trace(&t, &tr.events, tr.result.as_ref(), 4 * depth + 50);
        if !full.accepted {
            return Err(format!("enumerated trace {tr:?} rejected by is_trace"));
        }
        for n in 0..=tr.events.len() {
            if !is_trace(&t, &tr.events[..n], None, 4 * depth + 50).accepted {
                return Err(format!("prefix {n} of {tr:?} rejected"));
            }
            prefixes.insert(tr.events[..n].to_vec());
        }
    }
    let evs = all_events();
    let mut seqs: Vec<Vec<TraceEvent<Io>>> = vec![vec![]];
    for len in 1..=3 {
        let prev: Vec<_> = seqs.iter().filter(|s| s.len() == len - 1).cloned().collect();
        for p in prev {
            for e in &evs {
                let mut q = p.clone();
                q.push(e.clone());
                seqs.push(q);
            }
        }
    }
    for q in seqs {
        let accepted = is_trace(&t, &q, None, 4 * depth + 50).accepted;
        if accepted != prefixes.contains(&q) {
            return Err(format!("is_trace says {accepted} for {q:?}, enumeration disagrees"));
        }
    }
    Ok(())
}

/// `spin` has only the empty trace; so does anything bound after it; and
/// `Tau` never changes the trace set.
pub fn check_spin(s: &Shape) -> Result<(), String> {
    let t = build(s);
    let only_empty: HashSet<Trace<Io, u64>> = HashSet::from([Trace::prefix(vec![])]);
    for depth in 0..4 {
        if enumerate_traces(&ITree::<Io, u64>::spin(), depth, &universe()).ok() != Some(only_empty.clone()) {
            return Err(format!("spin has other traces at depth {depth}"));
        }
        let tt = t.clone();
        let after = ITree::<Io, u64>::spin().bind(move |_| tt.clone());
        if enumerate_traces(&after, depth, &universe()).ok() != Some(only_empty.clone()) {
            return Err(format!("spin ;; t has other traces at depth {depth}"));
        }
        if enumerate_traces(&ITree::tau(t.clone()), depth, &universe()) != enumerate_traces(&t, depth, &universe()) {
            return Err(format!("Tau changes the trace set at depth {depth}"));
        }
    }
    if !is_trace(&ITree::<Io, u64>::spin(), &[], None, 100).accepted {
        return Err("empty trace of spin rejected".into());
    }
    for e in all_events() {
        if is_trace(&ITree::<Io, u64>::spin(), &[e], None, 100).accepted {
            return Err("spin emitted an event".into());
        }
    }
    Ok(())
}

// ---- Network reordering oracle --------------------------------------------

const IDS: [ConnId; 2] = [ConnId(1), ConnId(2)];

/// A random execution of the network, split into its server side and its
/// client side, with at most `max_total` events overall.
pub fn simulated_pair(rng: &mut ChaCha8Rng, max_total: usize) -> (Vec<NetworkEvent>, Vec<NetworkEvent>) {
    use swapnet::network_model::{client_step, server_step};
    let mut ns = NetworkState::new();
    let (mut ts, mut tc) = (Vec::new(), Vec::new());
    let target = rng.gen_range(0..=max_total);
    let mut attempts = 0;
    while ts.len() + tc.len() < target && attempts < 200 {
        attempts += 1;
        let c = IDS[rng.gen_range(0..2)];
        let b = rng.gen_range(0..2u8);
        let (ev, server) = match rng.gen_range(0..6) {
            0 => (NetworkEvent::NewConnection(c), false),
            1 => (NetworkEvent::ToServer(c, b), false),
            2 => (NetworkEvent::FromServer(c, b), false),
            3 => (NetworkEvent::NewConnection(c), true),
            4 => (NetworkEvent::ToServer(c, b), true),
            _ => (NetworkEvent::FromServer(c, b), true),
        };
        let ok = if server { server_step(&ev, &mut ns) } else { client_step(&ev, &mut ns) };
        if ok {
            if server {
                ts.push(ev)
            } else {
                tc.push(ev)
            }
        }
    }
    (ts, tc)
}

/// Random event in the same small universe.
pub fn random_event(rng: &mut ChaCha8Rng) -> NetworkEvent {
    let c = IDS[rng.gen_range(0..2)];
    let b = rng.gen_range(0..2u8);
    match rng.gen_range(0..3) {
        0 => NetworkEvent::NewConnection(c),
        1 => NetworkEvent::ToServer(c, b),
        _ => NetworkEvent::FromServer(c, b),
    }
}

/// Perturbs one of the two traces: drop, swap, replace or insert an event.
pub fn perturb(rng: &mut ChaCha8Rng, ts: &mut Vec<NetworkEvent>, tc: &mut Vec<NetworkEvent>, max_total: usize) {
    let side = if rng.gen_bool(0.5) { ts } else { tc };
    match rng.gen_range(0..4) {
        0 if !side.is_empty() => {
            let i = rng.gen_range(0..side.len());
            side.remove(i);
        }
        1 if side.len() >= 2 => {
            let i = rng.gen_range(0..side.len() - 1);
            side.swap(i, i + 1);
        }
        2 if !side.is_empty() => {
            let i = rng.gen_range(0..side.len());
            side[i] = random_event(rng);
        }
        _ => {
            let i = rng.gen_range(0..=side.len());
            side.insert(i, random_event(rng));
            if side.len() > max_total {
                side.pop();
            }
        }
    }
}

/// The pair corpus: half genuine executions, half perturbed ones.
pub fn reorder_pairs(seed: u64, n: usize, max_total: usize) -> Vec<(Vec<NetworkEvent>, Vec<NetworkEvent>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (mut ts, mut tc) = simulated_pair(&mut rng, max_total);
            if i % 2 == 1 {
                perturb(&mut rng, &mut ts, &mut tc, max_total);
                while ts.len() + tc.len() > max_total {
                    if ts.len() > tc.len() {
                        ts.pop()
                    } else {
                        tc.pop()
                    };
                }
            }
            (ts, tc)
        })
        .collect()
}

/// Both deciders on one pair; `Err` describes a disagreement.
pub fn reorder_agree(ts: &[NetworkEvent], tc: &[NetworkEvent]) -> Result<bool, String> {
    let ns = NetworkState::new();
    let fast = network_reordered(ts, tc, &ns).map_err(|e| e.to_string())?;
    let slow = brute_force_reordered(ts, tc, &ns).map_err(|e| e.to_string())?;
    if fast != slow {
        return Err(format!("memoized {fast} vs brute force {slow} on ts={ts:?} tc={tc:?}"));
    }
    Ok(fast)
}

// ---- Membership oracle ------------------------------------------------------

/// Observed client traces of at most `max_len` events with message size 1:
/// prefixes of simulated model runs, some with one reply byte altered.
pub fn observed_traces(seed: u64, n: usize, max_len: usize) -> Vec<Vec<NetworkEvent>> {
    let limits = Limits { max_connections: 2, max_messages: 3, message_size: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut s = seed.wrapping_mul(1000);
    while out.len() < n {
        s += 1;
        let mut sc = gen_scenario(s, &limits);
        for msg in sc.connections.iter_mut().flatten() {
            msg[0] = rng.gen_range(1..3);
        }
        let mut tc = run_scenario_model(&sc, 200).client_trace;
        tc.truncate(rng.gen_range(0..=max_len));
        if out.len() % 2 == 1 {
            let replies: Vec<usize> =
                (0..tc.len()).filter(|&i| matches!(tc[i], NetworkEvent::FromServer(..))).collect();
            if let Some(&i) = replies.get(rng.gen_range(0..replies.len().max(1))) {
                if let NetworkEvent::FromServer(c, b) = tc[i] {
                    tc[i] = NetworkEvent::FromServer(c, (b + 1) % 3);
                }
            }
        }
        out.push(tc);
    }
    out
}

/// Co-simulation against naive enumeration on one trace.
pub fn membership_agree(tc: &[NetworkEvent]) -> Result<bool, String> {
    let naive = spec_behavior_member_naive(tc, 1).map_err(|e| e.to_string())?;
    let fast = spec_behavior_member(tc, 1);
    if matches!(fast, Verdict::BudgetExceeded) || fast.is_accepted() != naive {
        return Err(format!("co-simulation {fast:?} vs naive {naive} on {tc:?}"));
    }
    if let Verdict::Accepted { witness } = &fast {
        if !network_reordered(witness, tc, &NetworkState::new()).unwrap_or(false) {
            return Err(format!("witness {witness:?} does not explain {tc:?}"));
        }
    }
    Ok(naive)
}

// ---- Bounded refinement oracle ----------------------------------------------

/// Independent check of bounded refinement: breadth-first over client traces
/// of at most `depth` events (connection ids 1 and 2, bytes 0 and 1, message
/// size 1), asking per trace whether the model can produce it and whether
/// the linear specification can. Model behaviors are prefix closed, so only model
/// traces are extended. Returns the number of model traces visited and the
/// shortest trace the model has but the linear specification lacks.
pub fn refinement_oracle(depth: usize, mutant: swapnet::impl_model::ModelMutant) -> (usize, Option<Vec<NetworkEvent>>) {
    use swapnet::network_model::DEFAULT_SEARCH_BUDGET;
    use swapnet::refinement::impl_behavior_member_with;
    let mut universe = Vec::new();
    for c in IDS {
        universe.push(NetworkEvent::NewConnection(c));
        for b in 0..2u8 {
            universe.push(NetworkEvent::ToServer(c, b));
            universe.push(NetworkEvent::FromServer(c, b));
        }
    }
    let model_has = |tc: &[NetworkEvent]| {
        impl_behavior_member_with(tc, 4 * tc.len() + 4, 1, mutant, DEFAULT_SEARCH_BUDGET).is_accepted()
    };
    let mut frontier: Vec<Vec<NetworkEvent>> = vec![vec![]];
    let mut visited = 1;
    for _ in 0..depth {
        let mut next = Vec::new();
        for tc in &frontier {
            for ev in &universe {
                let mut ext = tc.clone();
                ext.push(*ev);
                if !model_has(&ext) {
                    continue;
                }
                visited += 1;
                if !spec_behavior_member(&ext, 1).is_accepted() {
                    return (visited, Some(ext));
                }
                next.push(ext);
            }
        }
        frontier = next;
    }
    (visited, None)
}
