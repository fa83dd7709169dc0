//! Logistics I/O automata: structure, validation, acceptance and decision paths.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph;
use crate::ids::{ActivityName, EventName, OutcomeName, StateName};
use crate::model::{Activity, ActivitySpec};
use crate::report::{Rule, ValidationReport};

/// Default cap on the per-event emitted-but-unprocessed counter explored by
/// [`validate_consistent`].
pub const DEFAULT_COUNT_BOUND: u32 = 64;

/// Transition input: the silent label or an (event, outcome) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Input {
    Silent,
    Event(EventName, OutcomeName),
}

impl Input {
    pub fn event(&self) -> Option<&EventName> {
        match self {
            Input::Silent => None,
            Input::Event(e, _) => Some(e),
        }
    }

    pub fn pair(&self) -> Option<(&EventName, &OutcomeName)> {
        match self {
            Input::Silent => None,
            Input::Event(e, u) => Some((e, u)),
        }
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::Silent => f.write_str("λ"),
            Input::Event(e, u) => write!(f, "({e},{u})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateName,
    pub input: Input,
    /// `None` is the empty activity.
    pub output: Option<ActivityName>,
    pub to: StateName,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let out = self.output.as_ref().map(|a| a.as_str()).unwrap_or("ε");
        write!(f, "({},{},{},{})", self.from, self.input, out, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IoAutomaton {
    pub states: BTreeSet<StateName>,
    pub initial: BTreeSet<StateName>,
    pub finals: BTreeSet<StateName>,
    pub transitions: Vec<Transition>,
}

impl IoAutomaton {
    pub fn outgoing<'a>(&'a self, q: &'a StateName) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| &t.from == q)
    }

    pub fn out_degree(&self, q: &StateName) -> usize {
        self.outgoing(q).count()
    }

    pub fn is_decision(&self, q: &StateName) -> bool {
        self.out_degree(q) >= 2
    }

    pub fn is_final(&self, q: &StateName) -> bool {
        self.finals.contains(q)
    }

    /// The event whose outcome a state consumes, if any outgoing transition
    /// carries one.
    pub fn processed_event<'a>(&'a self, q: &'a StateName) -> Option<&'a EventName> {
        self.outgoing(q).find_map(|t| t.input.event())
    }

    /// The unique initial state, if there is exactly one.
    pub fn initial_state(&self) -> Option<&StateName> {
        if self.initial.len() == 1 {
            self.initial.iter().next()
        } else {
            None
        }
    }
}

/// A letter of a word: one transition label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub input: Input,
    pub output: Option<ActivityName>,
}

impl Letter {
    pub fn silent(activity: &str) -> Self {
        Letter {
            input: Input::Silent,
            output: Some(ActivityName::new(activity)),
        }
    }

    pub fn event(event: &str, outcome: &str, activity: &str) -> Self {
        Letter {
            input: Input::Event(EventName::new(event), OutcomeName::new(outcome)),
            output: Some(ActivityName::new(activity)),
        }
    }
}

/// A finite sequence of transition labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn new(letters: Vec<Letter>) -> Self {
        Word(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn push(&mut self, l: Letter) {
        self.0.push(l);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A maximal run between initial/decision states and decision/final states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub transitions: Vec<Transition>,
}

impl DecisionPath {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn activities(&self) -> Vec<Option<ActivityName>> {
        self.transitions.iter().map(|t| t.output.clone()).collect()
    }

    /// The (event, outcome) consumed by the first transition, if any.
    pub fn processing(&self) -> Option<(&EventName, &OutcomeName)> {
        self.transitions.first().and_then(|t| t.input.pair())
    }

    pub fn first_state(&self) -> Option<&StateName> {
        self.transitions.first().map(|t| &t.from)
    }

    pub fn last_state(&self) -> Option<&StateName> {
        self.transitions.last().map(|t| &t.to)
    }

    /// Total number of nodes over the path's activities.
    pub fn node_count(&self, spec: &ActivitySpec) -> usize {
        self.transitions
            .iter()
            .filter_map(|t| t.output.as_ref())
            .filter_map(|a| spec.activity(a))
            .map(Activity::len)
            .sum()
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        self.transitions.iter().map(|t| Letter {
            input: t.input.clone(),
            output: t.output.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStep {
    Path(DecisionPath),
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("unknown state {0}")]
    UnknownState(StateName),
    #[error("decision state {0} needs an event outcome")]
    MissingOutcome(StateName),
    #[error("no transition from {state} consumes ({event},{outcome})")]
    NoMatchingTransition {
        state: StateName,
        event: EventName,
        outcome: OutcomeName,
    },
    #[error("state {0} has no outgoing transition and is not final")]
    Blocked(StateName),
    #[error("non-decision state {0} consumes an event outcome")]
    EventAtNonDecision(StateName),
    #[error("silent cycle through {0} never reaches a decision or final state")]
    SilentCycle(StateName),
}

/// States with more than one outgoing transition.
pub fn decision_states(y: &IoAutomaton) -> BTreeSet<StateName> {
    y.states
        .iter()
        .filter(|q| y.is_decision(q))
        .cloned()
        .collect()
}

/// Follows the automaton from `from` until a decision or final state.
///
/// At a decision state `chosen` picks the branch; the chosen pair is consumed
/// only by the first transition, every later one must be silent.
pub fn next_decision_path(
    y: &IoAutomaton,
    from: &StateName,
    chosen: Option<(&EventName, &OutcomeName)>,
) -> Result<PathStep, PathError> {
    if !y.states.contains(from) {
        return Err(PathError::UnknownState(from.clone()));
    }
    if y.is_final(from) {
        return Ok(PathStep::Completed);
    }
    let out: Vec<&Transition> = y.outgoing(from).collect();
    let first = match (out.len(), chosen) {
        (0, _) => return Err(PathError::Blocked(from.clone())),
        (1, None) => {
            if out[0].input != Input::Silent {
                return Err(PathError::MissingOutcome(from.clone()));
            }
            out[0]
        }
        (_, None) => return Err(PathError::MissingOutcome(from.clone())),
        (_, Some((e, u))) => out
            .iter()
            .copied()
            .find(|t| t.input.pair() == Some((e, u)))
            .ok_or_else(|| PathError::NoMatchingTransition {
                state: from.clone(),
                event: e.clone(),
                outcome: u.clone(),
            })?,
    };
    let mut path = vec![first.clone()];
    let mut cur = first.to.clone();
    while !y.is_final(&cur) && !y.is_decision(&cur) {
        if path.len() > y.transitions.len() {
            return Err(PathError::SilentCycle(cur));
        }
        let next = y
            .outgoing(&cur)
            .next()
            .ok_or_else(|| PathError::Blocked(cur.clone()))?;
        if next.input != Input::Silent {
            return Err(PathError::EventAtNonDecision(cur));
        }
        path.push(next.clone());
        cur = next.to.clone();
    }
    Ok(PathStep::Path(DecisionPath { transitions: path }))
}

/// Acceptance per the word semantics; handles nondeterminism by tracking the
/// set of reachable states.
pub fn accepts(y: &IoAutomaton, w: &Word) -> bool {
    let mut cur: BTreeSet<&StateName> = y.initial.iter().collect();
    for letter in w.letters() {
        cur = y
            .transitions
            .iter()
            .filter(|t| {
                cur.contains(&t.from) && t.input == letter.input && t.output == letter.output
            })
            .map(|t| &t.to)
            .collect();
        if cur.is_empty() {
            return false;
        }
    }
    cur.iter().any(|q| y.is_final(q))
}

pub fn validate_deterministic(
    y: &IoAutomaton,
    gamma: &BTreeSet<(EventName, OutcomeName)>,
) -> ValidationReport {
    let mut report = ValidationReport::new();
    if y.initial.len() != 1 {
        report.push(
            Rule::SingleInitial,
            y.initial.iter().map(|q| q.to_string()).collect(),
            format!("{} initial states", y.initial.len()),
        );
    }
    for q in &y.finals {
        let n = y.out_degree(q);
        if n > 0 {
            report.push(
                Rule::FinalHasOutgoing,
                vec![q.to_string()],
                format!("final state has {n} outgoing transitions"),
            );
        }
    }
    for q in &y.states {
        let out: Vec<&Transition> = y.outgoing(q).collect();
        for (i, a) in out.iter().enumerate() {
            for b in &out[i + 1..] {
                let ok = match (&a.input, &b.input) {
                    (Input::Event(e1, u1), Input::Event(e2, u2)) => {
                        e1 == e2
                            && u1 != u2
                            && gamma.contains(&(e1.clone(), u1.clone()))
                            && gamma.contains(&(e2.clone(), u2.clone()))
                    }
                    _ => false,
                };
                if !ok {
                    report.push(
                        Rule::AmbiguousBranch,
                        vec![q.to_string()],
                        format!(
                            "branches {a} and {b} do not split on distinct outcomes of one event"
                        ),
                    );
                }
            }
        }
        if out.len() == 1 && out[0].input != Input::Silent && !y.is_final(q) {
            report.push(
                Rule::EventAtNonDecision,
                vec![q.to_string()],
                format!("single transition {} consumes an event outcome", out[0]),
            );
        }
    }
    report.finish()
}

pub fn validate_complete(
    y: &IoAutomaton,
    gamma: &BTreeSet<(EventName, OutcomeName)>,
) -> ValidationReport {
    let mut report = ValidationReport::new();
    for q in &y.states {
        let mut seen: BTreeMap<&EventName, Vec<&OutcomeName>> = BTreeMap::new();
        for t in y.outgoing(q) {
            if let Input::Event(e, u) = &t.input {
                seen.entry(e).or_default().push(u);
            }
        }
        for (e, outs) in seen {
            let declared: BTreeSet<&OutcomeName> = gamma
                .iter()
                .filter(|(ge, _)| ge == e)
                .map(|(_, u)| u)
                .collect();
            let present: BTreeSet<&OutcomeName> = outs.iter().copied().collect();
            let missing: Vec<String> = declared
                .difference(&present)
                .map(|u| u.to_string())
                .collect();
            if !missing.is_empty() {
                report.push(
                    Rule::Complete,
                    vec![q.to_string()],
                    format!(
                        "event {e}: no transition for outcome(s) {}",
                        missing.join(", ")
                    ),
                );
            }
            let duplicated: BTreeSet<String> = outs
                .iter()
                .filter(|u| outs.iter().filter(|v| v == u).count() > 1)
                .map(|u| u.to_string())
                .collect();
            if !duplicated.is_empty() {
                report.push(
                    Rule::Complete,
                    vec![q.to_string()],
                    format!(
                        "event {e}: several transitions for outcome(s) {}",
                        duplicated.into_iter().collect::<Vec<_>>().join(", ")
                    ),
                );
            }
        }
    }
    report.finish()
}

/// Lists every state with no path to a final state.
pub fn validate_nonblocking(y: &IoAutomaton) -> ValidationReport {
    let mut reached: BTreeSet<&StateName> = y.finals.iter().collect();
    let mut queue: VecDeque<&StateName> = y.finals.iter().collect();
    while let Some(q) = queue.pop_front() {
        for t in y.transitions.iter().filter(|t| &t.to == q) {
            if reached.insert(&t.from) {
                queue.push_back(&t.from);
            }
        }
    }
    let mut report = ValidationReport::new();
    for q in y.states.iter().filter(|q| !reached.contains(q)) {
        report.push(
            Rule::NonBlocking,
            vec![q.to_string()],
            "no path to a final state",
        );
    }
    report.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsistencyError {
    #[error("pending count of event {event} exceeded bound {bound} at state {state}")]
    BoundExceeded {
        event: EventName,
        state: StateName,
        bound: u32,
    },
}

/// Emitted-minus-processed accounting over all reachable (state, counts) pairs.
///
/// Flags processing of an event that has not been emitted, final states
/// reached with pending emissions, and cycles whose net emission count is
/// nonzero for some event.
pub fn validate_consistent(
    y: &IoAutomaton,
    acts: &BTreeMap<ActivityName, Activity>,
    bound: u32,
) -> Result<ValidationReport, ConsistencyError> {
    let mut events: BTreeSet<EventName> = BTreeSet::new();
    for a in acts.values() {
        events.extend(a.event_nodes().map(|(e, _)| e.clone()));
    }
    for t in &y.transitions {
        events.extend(t.input.event().cloned());
    }
    let events: Vec<EventName> = events.into_iter().collect();
    let ev_index: BTreeMap<&EventName, usize> =
        events.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let emissions = |t: &Transition| -> Vec<i64> {
        let mut v = vec![0i64; events.len()];
        if let Some(a) = t.output.as_ref().and_then(|o| acts.get(o)) {
            for (e, _) in a.event_nodes() {
                v[ev_index[e]] += 1;
            }
        }
        v
    };
    let consumed = |t: &Transition| -> Option<usize> { t.input.event().map(|e| ev_index[e]) };

    let mut report = ValidationReport::new();

    // Cycles: a potential per state must exist inside every strongly connected
    // component, otherwise some cycle has a nonzero net count.
    let states: Vec<&StateName> = y.states.iter().collect();
    let st_index: BTreeMap<&StateName, usize> =
        states.iter().enumerate().map(|(i, q)| (*q, i)).collect();
    let mut succ = vec![Vec::new(); states.len()];
    for t in &y.transitions {
        if let (Some(&a), Some(&b)) = (st_index.get(&t.from), st_index.get(&t.to)) {
            succ[a].push(b);
        }
    }
    let mut cyclic_violation = false;
    for comp in graph::sccs(&succ) {
        if !graph::is_cyclic(&comp, &succ) {
            continue;
        }
        let members: BTreeSet<usize> = comp.iter().copied().collect();
        let mut potential: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
        potential.insert(comp[0], vec![0; events.len()]);
        let mut queue = VecDeque::from([comp[0]]);
        let mut bad: BTreeSet<usize> = BTreeSet::new();
        while let Some(s) = queue.pop_front() {
            for t in y.outgoing(states[s]) {
                let d = st_index[&t.to];
                if !members.contains(&d) {
                    continue;
                }
                let mut delta = emissions(t);
                if let Some(i) = consumed(t) {
                    delta[i] -= 1;
                }
                let expect: Vec<i64> = potential[&s]
                    .iter()
                    .zip(&delta)
                    .map(|(a, b)| a + b)
                    .collect();
                match potential.get(&d) {
                    None => {
                        potential.insert(d, expect);
                        queue.push_back(d);
                    }
                    Some(p) => {
                        for (i, (have, want)) in p.iter().zip(&expect).enumerate() {
                            if have != want {
                                bad.insert(i);
                            }
                        }
                    }
                }
            }
        }
        for i in bad {
            cyclic_violation = true;
            report.push(
                Rule::ConsistentCycle,
                comp.iter().map(|&s| states[s].to_string()).collect(),
                format!("a cycle changes the pending count of event {}", events[i]),
            );
        }
    }

    let mut seen: BTreeSet<(&StateName, Vec<i64>)> = BTreeSet::new();
    let mut queue: VecDeque<(&StateName, Vec<i64>)> = VecDeque::new();
    for q in &y.initial {
        let start = (q, vec![0i64; events.len()]);
        if seen.insert(start.clone()) {
            queue.push_back(start);
        }
    }
    let mut underflow: BTreeSet<(&StateName, usize)> = BTreeSet::new();
    let mut leftover: BTreeSet<&StateName> = BTreeSet::new();
    while let Some((q, counts)) = queue.pop_front() {
        if y.is_final(q) && counts.iter().any(|c| *c != 0) {
            leftover.insert(q);
        }
        'next: for t in y.outgoing(q) {
            let mut c = counts.clone();
            if let Some(i) = consumed(t) {
                c[i] -= 1;
                if c[i] < 0 {
                    underflow.insert((q, i));
                    continue;
                }
            }
            for (slot, add) in c.iter_mut().zip(emissions(t)) {
                *slot += add;
            }
            for (i, v) in c.iter().enumerate() {
                if *v > bound as i64 {
                    if cyclic_violation {
                        continue 'next;
                    }
                    return Err(ConsistencyError::BoundExceeded {
                        event: events[i].clone(),
                        state: t.to.clone(),
                        bound,
                    });
                }
            }
            let key = (&t.to, c);
            if seen.insert(key.clone()) {
                queue.push_back(key);
            }
        }
    }
    for (q, i) in underflow {
        report.push(
            Rule::ConsistentUnderflow,
            vec![q.to_string()],
            format!("event {} processed before it is emitted", events[i]),
        );
    }
    for q in leftover {
        report.push(
            Rule::ConsistentLeftover,
            vec![q.to_string()],
            "final state reachable with emitted events left unprocessed",
        );
    }
    Ok(report.finish())
}
