//! Simulated plant: bounded action durations, bounded execution delays and
//! scripted or seeded event outcomes.
//!
//! The plant only responds to what the engine issues. An issued node starts
//! after a start delay, runs for a sampled duration, and its completion (or
//! outcome) becomes visible to the engine after an observation delay.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineConfig;
use crate::ids::{ActionName, EventName, NodeId, OutcomeName, Peripheral};
use crate::model::{ActivitySpec, NodeLabel};
use crate::report::{Rule, ValidationReport};
use crate::time::Time;

/// Resolution of sampled values inside a `[lo, hi]` range.
const GRID: i128 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBound {
    pub action: ActionName,
    pub peripheral: Peripheral,
    pub worst_case: Time,
    /// Range the actual duration is drawn from; `None` always takes the worst case.
    pub jitter: Option<(Time, Time)>,
    /// Added on top of the sampled duration; failure injection.
    #[serde(default)]
    pub overrun: Time,
    /// Refuse to start; failure injection.
    #[serde(default)]
    pub fail_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutcomeSource {
    /// Consumed one entry per emission, in order.
    Script(Vec<OutcomeName>),
    /// Independent draws with the given relative weights.
    Distribution {
        weights: BTreeMap<OutcomeName, f64>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBound {
    pub event: EventName,
    /// Bound on the time from trigger to resolved outcome.
    pub resolution: Time,
    pub jitter: Option<(Time, Time)>,
    pub source: OutcomeSource,
}

/// Start and observation delays; their maxima together must stay within the
/// execution-delay bound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub start_min: Time,
    pub start_max: Time,
    pub observe_min: Time,
    pub observe_max: Time,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub actions: Vec<ActionBound>,
    pub events: Vec<EventBound>,
    pub delays: DelayModel,
    pub seed: u64,
}

impl PlantConfig {
    pub fn action(&self, action: &ActionName, peripheral: &Peripheral) -> Option<&ActionBound> {
        self.actions
            .iter()
            .find(|b| &b.action == action && &b.peripheral == peripheral)
    }

    pub fn event(&self, event: &EventName) -> Option<&EventBound> {
        self.events.iter().find(|b| &b.event == event)
    }

    /// Replaces every event's outcome source with the same script.
    pub fn with_script(mut self, script: &[OutcomeName]) -> Self {
        for e in &mut self.events {
            e.source = OutcomeSource::Script(script.to_vec());
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlantError {
    #[error("no plant bounds for action {action} on {peripheral}")]
    UnconfiguredAction {
        action: ActionName,
        peripheral: Peripheral,
    },
    #[error("no plant bounds for event {0}")]
    UnconfiguredEvent(EventName),
    #[error("action node {0} failed to start")]
    StartFailure(NodeId),
    #[error("outcome script of event {event} exhausted after {used} emissions")]
    ScriptExhausted { event: EventName, used: usize },
    #[error("outcome distribution of event {0} has no positive weight")]
    BadDistribution(EventName),
}

/// What the plant reports back for an issued action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionReport {
    pub start: Time,
    pub completion: Time,
    /// When the engine learns of the completion.
    pub observed: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventReport {
    pub start: Time,
    pub completion: Time,
    pub observed: Time,
    pub outcome: OutcomeName,
}

/// The interface the engine drives.
pub trait Plant {
    fn start_action(
        &mut self,
        node: &NodeId,
        action: &ActionName,
        peripheral: &Peripheral,
        issue: Time,
    ) -> Result<ActionReport, PlantError>;

    fn sample_event(
        &mut self,
        node: &NodeId,
        event: &EventName,
        issue: Time,
    ) -> Result<EventReport, PlantError>;
}

enum Source {
    Script {
        outcomes: Vec<OutcomeName>,
        next: usize,
    },
    Dist {
        outcomes: Vec<OutcomeName>,
        index: WeightedIndex<f64>,
        rng: Box<ChaCha8Rng>,
    },
}

/// A [`Plant`] that samples durations and delays from a [`PlantConfig`].
pub struct SimPlant {
    config: PlantConfig,
    rng: ChaCha8Rng,
    sources: BTreeMap<EventName, Source>,
}

impl SimPlant {
    pub fn new(config: PlantConfig) -> Result<Self, PlantError> {
        let mut sources = BTreeMap::new();
        for e in &config.events {
            let src = match &e.source {
                OutcomeSource::Script(s) => Source::Script {
                    outcomes: s.clone(),
                    next: 0,
                },
                OutcomeSource::Distribution { weights, seed } => {
                    let outcomes: Vec<OutcomeName> = weights.keys().cloned().collect();
                    let index = WeightedIndex::new(weights.values().copied())
                        .map_err(|_| PlantError::BadDistribution(e.event.clone()))?;
                    Source::Dist {
                        outcomes,
                        index,
                        rng: Box::new(ChaCha8Rng::seed_from_u64(*seed)),
                    }
                }
            };
            sources.insert(e.event.clone(), src);
        }
        Ok(SimPlant {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            sources,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    fn sample(&mut self, lo: Time, hi: Time) -> Time {
        if hi <= lo {
            return lo;
        }
        let i = self.rng.gen_range(0..=GRID);
        lo + (hi - lo) * Ratio::new(i, GRID)
    }

    fn start_delay(&mut self) -> Time {
        let d = &self.config.delays;
        let (lo, hi) = (d.start_min, d.start_max);
        self.sample(lo, hi)
    }

    fn observe_delay(&mut self) -> Time {
        let d = &self.config.delays;
        let (lo, hi) = (d.observe_min, d.observe_max);
        self.sample(lo, hi)
    }
}

impl Plant for SimPlant {
    fn start_action(
        &mut self,
        node: &NodeId,
        action: &ActionName,
        peripheral: &Peripheral,
        issue: Time,
    ) -> Result<ActionReport, PlantError> {
        let bound = self
            .config
            .action(action, peripheral)
            .cloned()
            .ok_or_else(|| PlantError::UnconfiguredAction {
                action: action.clone(),
                peripheral: peripheral.clone(),
            })?;
        if bound.fail_start {
            return Err(PlantError::StartFailure(node.clone()));
        }
        let start = issue + self.start_delay();
        let (lo, hi) = bound.jitter.unwrap_or((bound.worst_case, bound.worst_case));
        let duration = self.sample(lo, hi) + bound.overrun;
        let completion = start + duration;
        Ok(ActionReport {
            start,
            completion,
            observed: completion + self.observe_delay(),
        })
    }

    fn sample_event(
        &mut self,
        _node: &NodeId,
        event: &EventName,
        issue: Time,
    ) -> Result<EventReport, PlantError> {
        let bound = self
            .config
            .event(event)
            .cloned()
            .ok_or_else(|| PlantError::UnconfiguredEvent(event.clone()))?;
        let start = issue + self.start_delay();
        let (lo, hi) = bound.jitter.unwrap_or((bound.resolution, bound.resolution));
        let completion = start + self.sample(lo, hi);
        let observed = completion + self.observe_delay();
        let outcome = match self.sources.get_mut(event) {
            Some(Source::Script { outcomes, next }) => {
                let u = outcomes
                    .get(*next)
                    .cloned()
                    .ok_or(PlantError::ScriptExhausted {
                        event: event.clone(),
                        used: *next,
                    })?;
                *next += 1;
                u
            }
            Some(Source::Dist {
                outcomes,
                index,
                rng,
            }) => outcomes[index.sample(rng)].clone(),
            None => return Err(PlantError::UnconfiguredEvent(event.clone())),
        };
        Ok(EventReport {
            start,
            completion,
            observed,
            outcome,
        })
    }
}

/// Pre-run check of the plant bounds and engine delay budget against the
/// specified durations.
pub fn check_plant_against_spec(
    plant: &PlantConfig,
    spec: &ActivitySpec,
    cfg: &EngineConfig,
) -> ValidationReport {
    let mut report = ValidationReport::new();
    let d = &plant.delays;
    for (name, lo, hi) in [
        ("start", d.start_min, d.start_max),
        ("observe", d.observe_min, d.observe_max),
    ] {
        if lo.is_negative() || hi < lo {
            report.push(
                Rule::PlantConfig,
                vec![format!("delays.{name}")],
                format!("{name} delay range [{lo}, {hi}] is invalid"),
            );
        }
    }
    if d.start_max + d.observe_max > cfg.d_a {
        report.push(
            Rule::DelayBound,
            vec!["delays".into()],
            format!(
                "start {} plus observation {} exceeds execution-delay bound {}",
                d.start_max, d.observe_max, cfg.d_a
            ),
        );
    }
    let costs = cfg.costs.total();
    if costs > cfg.d_e {
        report.push(
            Rule::DelayBound,
            vec!["componentCosts".into()],
            format!(
                "engine processing costs {costs} exceed event-processing bound {}",
                cfg.d_e
            ),
        );
    }

    for b in &plant.actions {
        if b.worst_case.is_negative() {
            report.push(
                Rule::PlantConfig,
                vec![format!("{}@{}", b.action, b.peripheral)],
                "negative worst-case duration",
            );
        }
        if let Some((lo, hi)) = b.jitter {
            if lo.is_negative() || hi < lo || hi > b.worst_case {
                report.push(
                    Rule::PlantConfig,
                    vec![format!("{}@{}", b.action, b.peripheral)],
                    format!("jitter [{lo}, {hi}] not within [0, {}]", b.worst_case),
                );
            }
        }
    }
    for b in &plant.events {
        if let Some((lo, hi)) = b.jitter {
            if lo.is_negative() || hi < lo || hi > b.resolution {
                report.push(
                    Rule::PlantConfig,
                    vec![b.event.to_string()],
                    format!("jitter [{lo}, {hi}] not within [0, {}]", b.resolution),
                );
            }
        }
        let declared: Vec<&OutcomeName> = spec.outcomes_of(&b.event).collect();
        let listed: Vec<&OutcomeName> = match &b.source {
            OutcomeSource::Script(s) => s.iter().collect(),
            OutcomeSource::Distribution { weights, .. } => {
                if weights.values().any(|w| !w.is_finite() || *w < 0.0)
                    || !weights.values().any(|w| *w > 0.0)
                {
                    report.push(
                        Rule::PlantConfig,
                        vec![b.event.to_string()],
                        "invalid outcome weights",
                    );
                }
                weights.keys().collect()
            }
        };
        for u in listed {
            if !declared.contains(&u) {
                report.push(
                    Rule::PlantConfig,
                    vec![b.event.to_string()],
                    format!("outcome {u} is not declared for event {}", b.event),
                );
            }
        }
    }

    for act in spec.activities.values() {
        for n in act.nodes() {
            match &n.label {
                NodeLabel::Action { action, peripheral } => {
                    match plant.action(action, peripheral) {
                        None => report.push(
                            Rule::PlantConfig,
                            vec![n.id.to_string()],
                            format!("no plant bounds for action {action} on {peripheral}"),
                        ),
                        Some(b) => {
                            let worst = b.worst_case + b.overrun;
                            if n.duration < worst + cfg.d_a {
                                report.push(
                                    Rule::ConservativeDuration,
                                    vec![n.id.to_string()],
                                    format!(
                                        "specified {} < worst case {} + delay bound {}",
                                        n.duration, worst, cfg.d_a
                                    ),
                                );
                            }
                        }
                    }
                }
                NodeLabel::Event { event } => match plant.event(event) {
                    None => report.push(
                        Rule::PlantConfig,
                        vec![n.id.to_string()],
                        format!("no plant bounds for event {event}"),
                    ),
                    Some(b) => {
                        if n.duration < b.resolution + cfg.d_e + cfg.d_a {
                            report.push(
                                Rule::ConservativeEventDelay,
                                vec![n.id.to_string()],
                                format!(
                                    "specified {} < resolution {} + processing bound {} + delay bound {}",
                                    n.duration, b.resolution, cfg.d_e, cfg.d_a
                                ),
                            );
                        }
                    }
                },
                _ => {}
            }
        }
    }
    report.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ms(s: &str) -> Time {
        Time::parse_plain(s).unwrap()
    }

    fn bound(worst: &str, jitter: Option<(&str, &str)>) -> ActionBound {
        ActionBound {
            action: "a".into(),
            peripheral: "p1".into(),
            worst_case: ms(worst),
            jitter: jitter.map(|(l, h)| (ms(l), ms(h))),
            overrun: Time::ZERO,
            fail_start: false,
        }
    }

    fn plant_with(actions: Vec<ActionBound>, delays: DelayModel, script: &[&str]) -> SimPlant {
        SimPlant::new(PlantConfig {
            actions,
            events: vec![EventBound {
                event: "e".into(),
                resolution: ms("0.5"),
                jitter: None,
                source: OutcomeSource::Script(script.iter().map(OutcomeName::new).collect()),
            }],
            delays,
            seed: 7,
        })
        .unwrap()
    }

    #[test]
    fn jittered_duration_stays_in_range() {
        let mut p = plant_with(
            vec![bound("0.9", Some(("0.5", "0.9")))],
            DelayModel::default(),
            &[],
        );
        let id = NodeId::new("Act1", "n1");
        for _ in 0..200 {
            let r = p
                .start_action(&id, &"a".into(), &"p1".into(), Time::ZERO)
                .unwrap();
            let d = r.completion - r.start;
            assert!(d >= ms("0.5") && d <= ms("0.9"), "{d}");
        }
    }

    #[test]
    fn fixed_delays_add_up() {
        let delays = DelayModel {
            start_min: ms("0.05"),
            start_max: ms("0.05"),
            observe_min: ms("0.03"),
            observe_max: ms("0.03"),
        };
        let mut p = plant_with(vec![bound("0.9", None)], delays, &[]);
        let r = p
            .start_action(
                &NodeId::new("Act1", "n1"),
                &"a".into(),
                &"p1".into(),
                ms("10"),
            )
            .unwrap();
        assert_eq!(r.start, ms("10.05"));
        assert_eq!(r.completion, ms("10.95"));
        assert_eq!(r.observed, ms("10.98"));
    }

    #[test]
    fn script_is_consumed_in_order() {
        let mut p = plant_with(vec![], DelayModel::default(), &["u1", "u2"]);
        let id = NodeId::new("Act2", "n5");
        let e = EventName::new("e");
        assert_eq!(
            p.sample_event(&id, &e, Time::ZERO).unwrap().outcome,
            OutcomeName::new("u1")
        );
        assert_eq!(
            p.sample_event(&id, &e, Time::ZERO).unwrap().outcome,
            OutcomeName::new("u2")
        );
        assert_eq!(
            p.sample_event(&id, &e, Time::ZERO).unwrap_err(),
            PlantError::ScriptExhausted { event: e, used: 2 }
        );
    }

    #[test]
    fn failure_injection() {
        let mut b = bound("0.9", None);
        b.fail_start = true;
        let mut p = plant_with(vec![b], DelayModel::default(), &[]);
        let id = NodeId::new("Act1", "n1");
        assert_eq!(
            p.start_action(&id, &"a".into(), &"p1".into(), Time::ZERO)
                .unwrap_err(),
            PlantError::StartFailure(id)
        );
    }

    #[test]
    fn conforming_plant_passes_and_tight_bound_fails() {
        let spec = fixtures::running_example();
        let cfg = fixtures::engine_config();
        let plant = fixtures::conforming_plant();
        let r = check_plant_against_spec(&plant, &spec, &cfg);
        assert!(r.is_empty(), "{}", r.to_text());

        let mut tight = plant.clone();
        for b in &mut tight.actions {
            if b.action.as_str() == "c" {
                b.worst_case = Time::from_integer(1);
                b.jitter = None;
            }
        }
        let r = check_plant_against_spec(&tight, &spec, &cfg);
        assert_eq!(r.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::ConservativeDuration);
        assert_eq!(r.violations[0].subjects, vec!["Act2.n3".to_string()]);
    }
}
