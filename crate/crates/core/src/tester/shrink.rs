//! Greedy scenario shrinking.

use super::scenario::{Action, Scenario};

/// Every one-step reduction of `sc`, largest first. Each candidate has a
/// strictly smaller [`Scenario::measure`] and is structurally valid.
pub fn reductions(sc: &Scenario) -> Vec<Scenario> {
    let mut out = Vec::new();
    for c in 0..sc.connections.len() {
        out.push(drop_connection(sc, c));
    }
    for (c, msgs) in sc.connections.iter().enumerate() {
        for m in 0..msgs.len() {
            out.push(drop_message(sc, c, m));
        }
    }
    for i in 0..sc.schedule.len() {
        if let Some(merged) = merge_chunks(sc, i) {
            out.push(merged);
        }
    }
    for i in 0..sc.schedule.len() {
        if matches!(sc.schedule[i].action, Action::Recv { .. } | Action::Close) {
            let mut s = sc.clone();
            s.schedule.remove(i);
            out.push(s);
        }
    }
    out.retain(|s| s.validate().is_ok());
    out
}

fn drop_connection(sc: &Scenario, c: usize) -> Scenario {
    let mut s = sc.clone();
    s.connections.remove(c);
    s.schedule.retain(|st| st.conn != c);
    for st in &mut s.schedule {
        if st.conn > c {
            st.conn -= 1;
        }
    }
    s
}

fn drop_message(sc: &Scenario, c: usize, m: usize) -> Scenario {
    let mut s = sc.clone();
    s.connections[c].remove(m);
    s.schedule.retain(|st| !(st.conn == c && matches!(st.action, Action::Send { msg, .. } if msg == m)));
    for st in &mut s.schedule {
        if st.conn == c {
            if let Action::Send { msg, .. } = &mut st.action {
                if *msg > m {
                    *msg -= 1;
                }
            }
        }
    }
    s
}

/// Merges the send at `i` with the next send of the same message, keeping
/// the position of the first.
fn merge_chunks(sc: &Scenario, i: usize) -> Option<Scenario> {
    let Action::Send { msg, start, .. } = sc.schedule[i].action else { return None };
    let c = sc.schedule[i].conn;
    let j = (i + 1..sc.schedule.len())
        .find(|&j| sc.schedule[j].conn == c && matches!(sc.schedule[j].action, Action::Send { .. }))?;
    let Action::Send { msg: msg2, end: end2, .. } = sc.schedule[j].action else { return None };
    if msg2 != msg {
        return None;
    }
    let mut s = sc.clone();
    s.schedule[i].action = Action::Send { msg, start, end: end2 };
    s.schedule.remove(j);
    Some(s)
}

/// Shrinks `sc` while `still_fails` holds, to a local minimum: no single
/// reduction of the result still fails. Returns the result and the number
/// of candidates tried.
pub fn shrink<F: FnMut(&Scenario) -> bool>(sc: &Scenario, mut still_fails: F) -> (Scenario, usize) {
    let mut current = sc.clone();
    let mut tries = 0;
    'outer: loop {
        for cand in reductions(&current) {
            tries += 1;
            if still_fails(&cand) {
                current = cand;
                continue 'outer;
            }
        }
        return (current, tries);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tester::scenario::{gen_scenario, Limits};

    #[test]
    fn reductions_are_valid_and_smaller() {
        for seed in 0..100 {
            let sc = gen_scenario(seed, &Limits::default());
            for r in reductions(&sc) {
                assert!(r.measure() < sc.measure());
                r.validate().unwrap();
            }
        }
    }

    #[test]
    fn shrinks_to_a_single_byte_pattern() {
        // Fails whenever some connection sends a message containing 'q'.
        let has_q = |s: &Scenario| s.connections.iter().flatten().any(|m| m.contains(&b'q'));
        let sc =
            (0..).map(|s| gen_scenario(s, &Limits::default())).find(|s| has_q(s) && s.connections.len() > 2).unwrap();
        let (min, _) = shrink(&sc, has_q);
        assert_eq!(min.connections.len(), 1);
        assert_eq!(min.connections[0].len(), 1);
        // Open plus one whole-message send.
        assert_eq!(min.schedule.len(), 2);
        assert!(reductions(&min).iter().all(|r| !has_q(r)));
    }
}
