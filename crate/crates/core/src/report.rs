//! Validation findings shared by the activity, automaton and plant checks.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Structural constraints every activity must satisfy, numbered the way the
/// activity framework numbers them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// The dependency relation has a cycle.
    Acyclic,
    /// Actions on one peripheral are totally ordered.
    I,
    /// Each resource is claimed exactly once.
    II,
    /// Each resource is released exactly once.
    III,
    /// Every action is preceded by a claim of its resource.
    IV,
    /// Every action is succeeded by a release of its resource.
    V,
    /// Every release is preceded by a claim of the same resource.
    VI,
    /// Every claim is succeeded by a release of the same resource.
    VII,
    /// Nothing precedes a claim.
    VIII,
    /// Nothing succeeds a release.
    IX,
    /// Every event node has a predecessor.
    X,
    /// Nodes emitting the same event are totally ordered.
    XI,
}

impl Constraint {
    pub const NUMBERED: [Constraint; 11] = [
        Constraint::I,
        Constraint::II,
        Constraint::III,
        Constraint::IV,
        Constraint::V,
        Constraint::VI,
        Constraint::VII,
        Constraint::VIII,
        Constraint::IX,
        Constraint::X,
        Constraint::XI,
    ];
}

/// What a finding is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Activity(Constraint),
    /// More or fewer than one initial state.
    SingleInitial,
    /// A final state has outgoing transitions.
    FinalHasOutgoing,
    /// Two transitions leave one state without branching on distinct outcomes
    /// of one event.
    AmbiguousBranch,
    /// A state that is not a decision state consumes an event outcome.
    EventAtNonDecision,
    /// A state processing an event lacks a transition for some outcome, or has
    /// several for the same one.
    Complete,
    /// A state cannot reach any final state.
    NonBlocking,
    /// An event is processed before it has been emitted.
    ConsistentUnderflow,
    /// A final state is reachable with emitted but unprocessed events.
    ConsistentLeftover,
    /// A cycle emits and processes an event a different number of times.
    ConsistentCycle,
    /// Plant start plus observation delay can exceed the execution delay bound.
    DelayBound,
    /// Specified action duration does not cover worst case plus delay bound.
    ConservativeDuration,
    /// Specified event delay does not cover resolution, processing and delay bounds.
    ConservativeEventDelay,
    /// The plant configuration itself is inconsistent.
    PlantConfig,
    /// A node started before its specified start plus `psi`.
    StartedEarly,
    /// A node started later than its specified start plus `psi` plus the delay bound.
    StartedLate,
    /// A node completed after its specified completion plus `psi`.
    LateCompletion,
    /// A node of the reconstructed behavior was never executed.
    MissingNode,
    /// An executed node is not part of the reconstructed behavior.
    ExtraNode,
    /// Processed outcomes disagree with the outcomes the event nodes produced.
    OutcomeMismatch,
    /// A node started before a node it depends on completed.
    DependencyOrder,
    /// The processed outcomes do not drive the automaton along an accepted word.
    NotAccepted,
    /// The run ended before a final state.
    IncompleteBehavior,
    /// An execution delay exceeds the time-criticality bound.
    Criticality,
    /// A decision path was ready only after its earliest node was due.
    ReadyAfterStart,
}

impl Rule {
    pub fn code(&self) -> String {
        match self {
            Rule::Activity(Constraint::Acyclic) => "activity.acyclic".into(),
            Rule::Activity(c) => format!("activity.{c:?}"),
            Rule::SingleInitial => "deterministic.single-initial".into(),
            Rule::FinalHasOutgoing => "deterministic.final-outgoing".into(),
            Rule::AmbiguousBranch => "deterministic.branching".into(),
            Rule::EventAtNonDecision => "deterministic.event-at-non-decision".into(),
            Rule::Complete => "complete".into(),
            Rule::NonBlocking => "nonblocking".into(),
            Rule::ConsistentUnderflow => "consistent.underflow".into(),
            Rule::ConsistentLeftover => "consistent.leftover".into(),
            Rule::ConsistentCycle => "consistent.cycle".into(),
            Rule::DelayBound => "plant.delay-bound".into(),
            Rule::ConservativeDuration => "plant.conservative-duration".into(),
            Rule::ConservativeEventDelay => "plant.conservative-event-delay".into(),
            Rule::PlantConfig => "plant.config".into(),
            Rule::StartedEarly => "timing.early-start".into(),
            Rule::StartedLate => "timing.late-start".into(),
            Rule::LateCompletion => "timing.late-completion".into(),
            Rule::MissingNode => "behavior.missing-node".into(),
            Rule::ExtraNode => "behavior.extra-node".into(),
            Rule::OutcomeMismatch => "behavior.outcomes".into(),
            Rule::DependencyOrder => "behavior.dependency".into(),
            Rule::NotAccepted => "behavior.not-accepted".into(),
            Rule::IncompleteBehavior => "behavior.incomplete".into(),
            Rule::Criticality => "criticality".into(),
            Rule::ReadyAfterStart => "engine.ready-after-start".into(),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    /// Offending nodes, states or other identifiers, sorted.
    pub subjects: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, rule: Rule, mut subjects: Vec<String>, message: impl Into<String>) {
        subjects.sort();
        self.violations.push(Violation {
            rule,
            subjects,
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    /// Sort by rule, then subjects; makes output independent of traversal order.
    pub fn finish(mut self) -> Self {
        self.violations.sort();
        self.violations.dedup();
        self
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn rules(&self) -> std::collections::BTreeSet<Rule> {
        self.violations.iter().map(|v| v.rule).collect()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.violations {
            out.push_str(&format!(
                "{}: {} [{}]\n",
                v.rule,
                v.message,
                v.subjects.join(", ")
            ));
        }
        out
    }
}
