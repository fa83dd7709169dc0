//! Timing, constraint and sequencing results checked against independent
//! oracles and algebraic invariants.

mod common;

use std::collections::BTreeSet;

use actexec_core::automaton::Letter;
use actexec_core::model::validate_activity;
use actexec_core::sequencing::{behavior_activity, kth_emitter_by_order};
use actexec_core::{
    node_times, Activity, ActivityName, ComposedActivity, Constraint, EventName, Linking, Node,
    NodeId, NodeLabel, Peripheral, Resource, ResourceState, Rule, Time, Universe, Word,
};
use common::{random_activity, random_spec, timing_oracle, universe};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, u: &Universe) -> ResourceState {
    ResourceState(
        u.resources
            .iter()
            .map(|r| (r.clone(), Time::from_ratio(rng.gen_range(0..20), 4)))
            .collect(),
    )
}

fn completions_of_releases(a: &Activity, x: &ResourceState) -> ResourceState {
    let s = node_times(a, x).unwrap();
    ResourceState(
        a.release_nodes()
            .map(|(r, id)| (r.clone(), s[id].completion))
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn topological_timing_matches_memoized_recursion(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = universe(rng.gen_range(1..=3));
        let events = [EventName::new("e"), EventName::new("e")];
        let n_events = rng.gen_range(0..=2);
        let a = random_activity(&mut rng, "A", &u, 5, &events[..n_events]);
        let x = random_state(&mut rng, &u);
        let got = node_times(&a, &x).unwrap();
        let want = timing_oracle(&a, &x);
        prop_assert_eq!(got.len(), want.len());
        for (id, (s, c)) in want {
            prop_assert_eq!((got[&id].start, got[&id].completion), (s, c), "{}", id);
        }
    }

    #[test]
    fn shifting_resource_availability_shifts_every_node(seed in any::<u64>(), num in 0i64..40, den in 1i64..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = universe(rng.gen_range(1..=3));
        let a = random_activity(&mut rng, "A", &u, 5, &[EventName::new("e")]);
        let x = random_state(&mut rng, &u);
        let r = Time::from_ratio(num, den);
        let base = node_times(&a, &x).unwrap();
        let shifted = node_times(&a, &x.shifted(r)).unwrap();
        for (id, e) in &base {
            prop_assert_eq!(shifted[id].start, e.start + r);
            prop_assert_eq!(shifted[id].completion, e.completion + r);
        }
    }

    #[test]
    fn later_availability_never_starts_a_node_earlier(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = universe(rng.gen_range(1..=3));
        let a = random_activity(&mut rng, "A", &u, 5, &[]);
        let x = random_state(&mut rng, &u);
        let mut y = x.clone();
        for r in &u.resources {
            if rng.gen_bool(0.5) {
                y.set(r.clone(), x.get(r).unwrap() + Time::from_ratio(rng.gen_range(1..10), 3));
            }
        }
        let sx = node_times(&a, &x).unwrap();
        let sy = node_times(&a, &y).unwrap();
        for (id, e) in &sx {
            prop_assert!(sy[id].start >= e.start);
        }
    }

    /// Sequencing `A . B . C` times every surviving node of `B` as if `B` ran
    /// alone from the release times of `A`, and likewise for `C` after `B`.
    #[test]
    fn sequencing_composes_timing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = universe(rng.gen_range(1..=3));
        let parts: Vec<Activity> = ["A", "B", "C"]
            .iter()
            .map(|n| random_activity(&mut rng, n, &u, 4, &[]))
            .collect();
        let x = random_state(&mut rng, &u);
        let mut c = ComposedActivity::new(Linking::ResourceMatched);
        for p in &parts {
            c.append(p, None).unwrap();
        }
        let composed = node_times(c.activity(), &x).unwrap();
        let mut avail = x;
        for p in &parts {
            let alone = node_times(p, &avail).unwrap();
            for (id, e) in composed.iter().filter(|(id, _)| id.activity == *p.name()) {
                prop_assert_eq!(alone[&id.base()], *e, "{}", id);
            }
            avail = completions_of_releases(p, &avail);
        }
    }

    /// Sequencing well-formed activities along any accepted word yields a
    /// well-formed activity whose emissions of each event form a chain, and
    /// the k-th emission found by bookkeeping is the one found from the graph.
    #[test]
    fn behaviors_stay_well_formed_with_ordered_emissions(seed in any::<u64>(), loops in 0usize..5, stop in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        let mut letters = vec![Letter::silent("A"), Letter::silent("B")];
        for _ in 0..loops {
            letters.extend([Letter::event("e", "u1", "C"), Letter::silent("A"), Letter::silent("B")]);
        }
        if stop {
            letters.push(Letter::event("e", "u2", "D"));
        }
        let c = behavior_activity(&spec.activities, &Word::new(letters), Linking::ResourceMatched).unwrap();
        let report = validate_activity(c.activity(), &spec.universe).unwrap();
        prop_assert!(report.is_empty(), "{}", report.to_text());

        let e = EventName::new("e");
        prop_assert_eq!(c.emitted_count(&e) as usize, loops + 1);
        let reach = c.activity().reachability().unwrap();
        let emitters = c.emitters(&e);
        for (i, x) in emitters.iter().enumerate() {
            for y in &emitters[i + 1..] {
                prop_assert!(reach.comparable(x, y));
            }
        }
        for k in 1..=c.emitted_count(&e) {
            prop_assert_eq!(c.kth_emitter(&e, k).cloned(), kth_emitter_by_order(c.activity(), &e, k));
        }
    }

    /// A random labeled graph checked against the constraints evaluated over
    /// a Floyd–Warshall transitive closure.
    #[test]
    fn constraint_findings_match_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, u) = random_labeled_graph(&mut rng);
        let got: BTreeSet<(Rule, Vec<String>)> = validate_activity(&a, &u)
            .unwrap()
            .violations
            .into_iter()
            .map(|v| (v.rule, v.subjects))
            .collect();
        prop_assert_eq!(got, brute_force_findings(&a, &u));
    }
}

fn random_labeled_graph(rng: &mut ChaCha8Rng) -> (Activity, Universe) {
    let u = universe(2);
    let act = ActivityName::new("G");
    let n = rng.gen_range(1..=10);
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let label = match rng.gen_range(0..4) {
                0 => NodeLabel::Claim {
                    resource: Resource::new(format!("r{}", rng.gen_range(0..2))),
                },
                1 => NodeLabel::Release {
                    resource: Resource::new(format!("r{}", rng.gen_range(0..2))),
                },
                2 => NodeLabel::Action {
                    action: "x".into(),
                    peripheral: Peripheral::new(["p0a", "p0b", "p1a"][rng.gen_range(0..3)]),
                },
                _ => NodeLabel::Event {
                    event: EventName::new(["e0", "e1"][rng.gen_range(0..2)]),
                },
            };
            let d = if label.is_resource() {
                Time::ZERO
            } else {
                Time::from_integer(1)
            };
            Node::new(NodeId::new(act.clone(), format!("n{i}").as_str()), label, d)
        })
        .collect();
    let mut edges = Vec::new();
    let density = rng.gen_range(0.1..0.6);
    for j in 0..n {
        for i in 0..j {
            if rng.gen_bool(density) {
                edges.push((nodes[i].id.clone(), nodes[j].id.clone()));
            }
        }
    }
    // Occasionally close a cycle.
    if n > 1 && rng.gen_bool(0.1) {
        edges.push((nodes[n - 1].id.clone(), nodes[0].id.clone()));
    }
    (Activity::new(act, nodes, edges).unwrap(), u)
}

fn brute_force_findings(a: &Activity, u: &Universe) -> BTreeSet<(Rule, Vec<String>)> {
    let nodes: Vec<&Node> = a.nodes().collect();
    let n = nodes.len();
    let idx = |id: &NodeId| nodes.iter().position(|m| m.id == *id).unwrap();
    let mut r = vec![vec![false; n]; n];
    for (f, t) in a.edges() {
        r[idx(f)][idx(t)] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    let name = |i: usize| nodes[i].id.to_string();
    let pair = |i: usize, j: usize| {
        let mut v = vec![name(i), name(j)];
        v.sort();
        v
    };
    let mut out = BTreeSet::new();
    let rule = Rule::Activity;

    if (0..n).any(|i| r[i][i]) {
        for i in (0..n).filter(|&i| r[i][i]) {
            let mut comp: Vec<String> = (0..n).filter(|&j| r[i][j] && r[j][i]).map(name).collect();
            comp.sort();
            out.insert((rule(Constraint::Acyclic), comp));
        }
        return out;
    }

    let comparable = |i: usize, j: usize| r[i][j] || r[j][i];
    let peripheral = |i: usize| match &nodes[i].label {
        NodeLabel::Action { peripheral, .. } => Some(peripheral),
        _ => None,
    };
    for i in 0..n {
        for j in i + 1..n {
            if peripheral(i).is_some() && peripheral(i) == peripheral(j) && !comparable(i, j) {
                out.insert((rule(Constraint::I), pair(i, j)));
            }
            let (ei, ej) = (nodes[i].label.event(), nodes[j].label.event());
            if ei.is_some() && ei == ej && !comparable(i, j) {
                out.insert((rule(Constraint::XI), pair(i, j)));
            }
        }
    }
    for res in &u.resources {
        for (c, which) in [(Constraint::II, 0), (Constraint::III, 1)] {
            let mut members: Vec<String> = (0..n)
                .filter(|&i| {
                    let l = &nodes[i].label;
                    if which == 0 {
                        l.claimed() == Some(res)
                    } else {
                        l.released() == Some(res)
                    }
                })
                .map(name)
                .collect();
            if members.len() != 1 {
                members.sort();
                out.insert((rule(c), members));
            }
        }
    }
    let claim_of = |i: usize, res: &Resource| nodes[i].label.claimed() == Some(res);
    let release_of = |i: usize, res: &Resource| nodes[i].label.released() == Some(res);
    for i in 0..n {
        let single = vec![name(i)];
        let has_pred = (0..n).any(|j| r[j][i]);
        let has_succ = (0..n).any(|j| r[i][j]);
        match &nodes[i].label {
            NodeLabel::Action { peripheral, .. } => {
                let res = u.owner(peripheral).unwrap();
                if !(0..n).any(|j| claim_of(j, res) && r[j][i]) {
                    out.insert((rule(Constraint::IV), single.clone()));
                }
                if !(0..n).any(|j| release_of(j, res) && r[i][j]) {
                    out.insert((rule(Constraint::V), single));
                }
            }
            NodeLabel::Release { resource } => {
                if !(0..n).any(|j| claim_of(j, resource) && r[j][i]) {
                    out.insert((rule(Constraint::VI), single.clone()));
                }
                if has_succ {
                    out.insert((rule(Constraint::IX), single));
                }
            }
            NodeLabel::Claim { resource } => {
                if !(0..n).any(|j| release_of(j, resource) && r[i][j]) {
                    out.insert((rule(Constraint::VII), single.clone()));
                }
                if has_pred {
                    out.insert((rule(Constraint::VIII), single));
                }
            }
            NodeLabel::Event { .. } => {
                if !has_pred {
                    out.insert((rule(Constraint::X), single));
                }
            }
        }
    }
    out
}
