//! Random model generators and independent oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use actexec_core::automaton::{Input, IoAutomaton, Transition};
use actexec_core::engine::EngineConfig;
use actexec_core::plant::{ActionBound, DelayModel, EventBound, OutcomeSource, PlantConfig};
use actexec_core::trace::LayerCosts;
use actexec_core::{
    Activity, ActivityName, ActivitySpec, EventName, Node, NodeId, NodeLabel, OutcomeName,
    Peripheral, Resource, ResourceState, Time, Universe,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn t(v: i64) -> Time {
    Time::from_integer(v)
}

pub fn half(v: i64) -> Time {
    Time::from_ratio(v, 2)
}

/// Resources `r0..r{n-1}`, each owning peripherals `p{i}a` and `p{i}b`.
pub fn universe(n: usize) -> Universe {
    let mut u = Universe::default();
    for i in 0..n {
        let r = Resource::new(format!("r{i}"));
        u.resources.insert(r.clone());
        for s in ["a", "b"] {
            u.peripherals
                .insert(Peripheral::new(format!("p{i}{s}")), r.clone());
        }
    }
    u
}

fn id(act: &ActivityName, local: impl AsRef<str>) -> NodeId {
    NodeId::new(act.clone(), local.as_ref())
}

/// A random activity satisfying every structural constraint: actions in a
/// random order-respecting DAG, actions sharing a peripheral chained, every
/// action bracketed by its resource's claim and release, and one chained
/// node per entry of `events`, each placed after a random action.
pub fn random_activity(
    rng: &mut ChaCha8Rng,
    name: &str,
    u: &Universe,
    max_actions: usize,
    events: &[EventName],
) -> Activity {
    let act = ActivityName::new(name);
    let peripherals: Vec<&Peripheral> = u.peripherals.keys().collect();
    let k = rng.gen_range(1..=max_actions);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut action_peris = Vec::new();
    for i in 0..k {
        let p = (*peripherals.choose(rng).unwrap()).clone();
        nodes.push(Node::new(
            id(&act, format!("a{i}")),
            NodeLabel::Action {
                action: format!("{name}_a{i}").as_str().into(),
                peripheral: p.clone(),
            },
            half(rng.gen_range(2..=6)),
        ));
        action_peris.push(p);
    }
    for j in 0..k {
        for i in 0..j {
            if rng.gen_bool(0.3) || action_peris[i] == action_peris[j] {
                edges.push((id(&act, format!("a{i}")), id(&act, format!("a{j}"))));
            }
        }
    }
    for r in &u.resources {
        let cl = id(&act, format!("cl_{r}"));
        let rl = id(&act, format!("rl_{r}"));
        nodes.push(Node::new(
            cl.clone(),
            NodeLabel::Claim {
                resource: r.clone(),
            },
            Time::ZERO,
        ));
        nodes.push(Node::new(
            rl.clone(),
            NodeLabel::Release {
                resource: r.clone(),
            },
            Time::ZERO,
        ));
        let users: Vec<usize> = (0..k)
            .filter(|i| u.owner(&action_peris[*i]) == Some(r))
            .collect();
        if users.is_empty() {
            edges.push((cl, rl));
        } else {
            for i in users {
                edges.push((cl.clone(), id(&act, format!("a{i}"))));
                edges.push((id(&act, format!("a{i}")), rl.clone()));
            }
        }
    }
    let mut prev: BTreeMap<&EventName, NodeId> = BTreeMap::new();
    for (j, e) in events.iter().enumerate() {
        let ev = id(&act, format!("ev{j}"));
        nodes.push(Node::new(
            ev.clone(),
            NodeLabel::Event { event: e.clone() },
            half(rng.gen_range(2..=6)),
        ));
        let after = rng.gen_range(0..k);
        edges.push((id(&act, format!("a{after}")), ev.clone()));
        if let Some(p) = prev.insert(e, ev.clone()) {
            edges.push((p, ev));
        }
    }
    Activity::new(act, nodes, edges).expect("generated activity is structurally sound")
}

/// Memoized recursion over the predecessor relation, built from the edge list.
pub fn timing_oracle(a: &Activity, x: &ResourceState) -> BTreeMap<NodeId, (Time, Time)> {
    let mut preds: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for (f, to) in a.edges() {
        preds.entry(to).or_default().push(f);
    }
    fn visit<'a>(
        n: &'a NodeId,
        a: &'a Activity,
        x: &ResourceState,
        preds: &BTreeMap<&'a NodeId, Vec<&'a NodeId>>,
        memo: &mut BTreeMap<NodeId, (Time, Time)>,
    ) -> (Time, Time) {
        if let Some(v) = memo.get(n) {
            return *v;
        }
        let node = a.node(n).unwrap();
        let s = match &node.label {
            NodeLabel::Claim { resource } => x.get(resource).unwrap(),
            _ => preds[n]
                .iter()
                .map(|p| visit(p, a, x, preds, memo).1)
                .max()
                .expect("non-claim nodes have predecessors"),
        };
        let v = (s, s + node.duration);
        memo.insert(n.clone(), v);
        v
    }
    let mut memo = BTreeMap::new();
    for n in a.node_ids() {
        visit(n, a, x, &preds, &mut memo);
    }
    memo
}

/// A running-example-shaped model with random activities: `A . B` then, per
/// outcome of the event emitted once by `B`, either `C` and back or `D` and
/// stop.
pub fn random_spec(rng: &mut ChaCha8Rng) -> ActivitySpec {
    let u = universe(rng.gen_range(1..=3));
    let e = EventName::new("e");
    let mut activities = BTreeMap::new();
    for (name, evs) in [
        ("A", vec![]),
        ("B", vec![e.clone()]),
        ("C", vec![]),
        ("D", vec![]),
    ] {
        let a = random_activity(rng, name, &u, 3, &evs);
        activities.insert(ActivityName::new(name), a);
    }
    let (u1, u2) = (OutcomeName::new("u1"), OutcomeName::new("u2"));
    let tr = |from: &str, input: Input, out: &str, to: &str| Transition {
        from: from.into(),
        input,
        output: Some(out.into()),
        to: to.into(),
    };
    let automaton = IoAutomaton {
        states: ["q0", "q1", "q2", "q3"].map(Into::into).into(),
        initial: ["q0".into()].into(),
        finals: ["q3".into()].into(),
        transitions: vec![
            tr("q0", Input::Silent, "A", "q1"),
            tr("q1", Input::Silent, "B", "q2"),
            tr("q2", Input::Event(e.clone(), u1.clone()), "C", "q0"),
            tr("q2", Input::Event(e.clone(), u2.clone()), "D", "q3"),
        ],
    };
    ActivitySpec {
        universe: u,
        activities,
        events: [e.clone()].into(),
        outcomes: [u1.clone(), u2.clone()].into(),
        gamma: [(e.clone(), u1), (e, u2)].into(),
        automaton,
    }
}

/// Execution-delay bound 0.1, event-processing bound 0.2 with every layer
/// charged 0.05, `psi = 10`.
pub fn harness_engine() -> EngineConfig {
    let c = Time::from_ratio(1, 20);
    EngineConfig {
        psi: t(10),
        d_a: Time::from_ratio(1, 10),
        d_e: Time::from_ratio(1, 5),
        costs: LayerCosts {
            d_event: c,
            d_lc: c,
            d_ac: c,
            d_ac_prep: c,
        },
        ..EngineConfig::default()
    }
}

/// Plant bounds as loose as the conservativeness assumptions allow: every
/// action up to its duration minus `d_a`, every event up to its delay minus
/// `d_e + d_a`, delays splitting `d_a` 60/40.
pub fn conforming_plant_for(spec: &ActivitySpec, cfg: &EngineConfig, seed: u64) -> PlantConfig {
    let mut p = PlantConfig {
        seed,
        delays: DelayModel {
            start_min: Time::ZERO,
            start_max: cfg.d_a.scaled(Time::from_ratio(3, 5)),
            observe_min: Time::ZERO,
            observe_max: cfg.d_a.scaled(Time::from_ratio(2, 5)),
        },
        ..PlantConfig::default()
    };
    for a in spec.activities.values() {
        for n in a.nodes() {
            match &n.label {
                NodeLabel::Action { action, peripheral } => {
                    let worst = n.duration - cfg.d_a;
                    p.actions.push(ActionBound {
                        action: action.clone(),
                        peripheral: peripheral.clone(),
                        worst_case: worst,
                        jitter: Some((Time::ZERO, worst)),
                        overrun: Time::ZERO,
                        fail_start: false,
                    });
                }
                NodeLabel::Event { event } if p.event(event).is_none() => {
                    let min_delay = spec
                        .activities
                        .values()
                        .flat_map(|a| a.nodes())
                        .filter(|m| m.label.event() == Some(event))
                        .map(|m| m.duration)
                        .min()
                        .unwrap();
                    let res = min_delay - cfg.d_e - cfg.d_a;
                    p.events.push(EventBound {
                        event: event.clone(),
                        resolution: res,
                        jitter: Some((Time::ZERO, res)),
                        source: OutcomeSource::Script(vec![]),
                    });
                }
                _ => {}
            }
        }
    }
    p
}

/// `n` repetitions of `u1` then `u2`.
pub fn script(n: usize) -> Vec<OutcomeName> {
    std::iter::repeat_n(OutcomeName::new("u1"), n)
        .chain([OutcomeName::new("u2")])
        .collect()
}

pub fn executable_bases(a: &Activity) -> BTreeSet<String> {
    a.nodes()
        .filter(|n| n.label.is_executable())
        .map(|n| n.id.base().to_string())
        .collect()
}
