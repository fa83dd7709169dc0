//! Time- and behavior-preserving execution of activity-based supervisory
//! controllers.
//!
//! A controller is a set of activities (timed DAGs of actions, resource claims
//! and releases, and event emissions) plus an I/O automaton that chooses the
//! next activities from event outcomes observed at run time. This crate
//! validates such models, sequences activities into a growing behavior,
//! computes max-plus timing, executes the result against a simulated plant
//! and checks every recorded run for timing and behavior preservation.

pub mod automaton;
pub mod engine;
pub mod fixtures;
mod graph;
pub mod ids;
pub mod model;
pub mod plant;
pub mod report;
pub mod sequencing;
pub mod spec_file;
pub mod time;
pub mod timing;
pub mod trace;
pub mod verify;

pub use automaton::{DecisionPath, Input, IoAutomaton, Letter, Transition, Word};
pub use engine::{ac_run, EngineConfig, EngineError, Retention};
pub use ids::{
    ActionName, ActivityName, EventName, NodeId, OutcomeName, Peripheral, Resource, StateName,
};
pub use model::{Activity, ActivitySpec, Node, NodeLabel, Universe};
pub use plant::{check_plant_against_spec, Plant, PlantConfig, SimPlant};
pub use report::{Constraint, Rule, ValidationReport, Violation};
pub use sequencing::{ComposedActivity, Linking};
pub use spec_file::{parse_document, parse_spec, SpecDocument, SpecFileError};
pub use time::{Time, TimeUnit};
pub use timing::{node_times, ResourceState, Schedule, ScheduleEntry};
pub use trace::{ClockMode, ExecutionTrace, LayerCosts};
pub use verify::{check_behavior_preservation, check_timing_relation, verify_trace};
