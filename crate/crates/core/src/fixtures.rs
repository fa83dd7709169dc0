//! The four-activity running example with a conforming engine and plant.
//!
//! Used throughout the tests and the command-line examples.

use crate::engine::EngineConfig;
use crate::model::{ActivitySpec, NodeLabel};
use crate::plant::{ActionBound, DelayModel, EventBound, OutcomeSource, PlantConfig};
use crate::spec_file::{parse_spec, SpecDocument};

pub const RUNNING_EXAMPLE_JSON: &str = include_str!("../data/running-example.json");

pub fn running_example_document() -> SpecDocument {
    parse_spec(RUNNING_EXAMPLE_JSON).expect("bundled example is valid")
}

pub fn running_example() -> ActivitySpec {
    running_example_document().spec
}

/// `psi = 10`, execution-delay bound 0.1, event-processing bound 0.2, each
/// engine layer charged 0.05.
pub fn engine_config() -> EngineConfig {
    running_example_document()
        .engine
        .expect("example has an engine section")
}

/// Durations jittered up to their node's duration minus 0.1, event
/// resolution up to 0.7, outcomes drawn 60/40.
pub fn conforming_plant() -> PlantConfig {
    running_example_document()
        .plant
        .expect("example has a plant section")
}

/// Every action takes exactly its specified duration, every event resolves in
/// exactly its specified delay, no delays. Outcomes default to an empty script.
pub fn exact_plant() -> PlantConfig {
    let spec = running_example();
    let mut cfg = PlantConfig::default();
    for a in spec.activities.values() {
        for n in a.nodes() {
            match &n.label {
                NodeLabel::Action { action, peripheral }
                    if cfg.action(action, peripheral).is_none() =>
                {
                    cfg.actions.push(ActionBound {
                        action: action.clone(),
                        peripheral: peripheral.clone(),
                        worst_case: n.duration,
                        jitter: None,
                        overrun: Default::default(),
                        fail_start: false,
                    })
                }
                NodeLabel::Event { event } if cfg.event(event).is_none() => {
                    cfg.events.push(EventBound {
                        event: event.clone(),
                        resolution: n.duration,
                        jitter: None,
                        source: OutcomeSource::Script(Vec::new()),
                    })
                }
                _ => {}
            }
        }
    }
    cfg.delays = DelayModel::default();
    cfg
}
