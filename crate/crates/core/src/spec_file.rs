//! The JSON model file: model, optional engine section and optional
//! plant section.
//!
//! Times are strings. A bare number is in model units; a suffix (`s`, `ms`,
//! `us`, `ns`) converts through the file's `timeUnit`, which defaults to 1 ms.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::automaton::{Input, IoAutomaton, Transition};
use crate::engine::{EngineConfig, Retention};
use crate::ids::{
    ActivityName, EventName, LocalId, NodeId, OutcomeName, Peripheral, Resource, StateName,
};
use crate::model::{
    validate_activity, Activity, ActivitySpec, Node, NodeLabel, StructureError, Universe,
};
use crate::plant::{ActionBound, DelayModel, EventBound, OutcomeSource, PlantConfig};
use crate::report::ValidationReport;
use crate::sequencing::Linking;
use crate::time::{Time, TimeError, TimeUnit};
use crate::trace::{ClockMode, LayerCosts};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecFileError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("{field}: {source}")]
    Time { field: String, source: TimeError },
    #[error("activity {activity}: {source}")]
    Structure {
        activity: ActivityName,
        source: StructureError,
    },
    #[error("{0}")]
    Reference(String),
    #[error("activities violate structural constraints:\n{}", .0.to_text())]
    Invalid(ValidationReport),
}

/// A parsed file.
#[derive(Debug, Clone)]
pub struct SpecDocument {
    pub spec: ActivitySpec,
    pub unit: TimeUnit,
    pub engine: Option<EngineConfig>,
    pub plant: Option<PlantConfig>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawDoc {
    #[serde(default)]
    time_unit: Option<String>,
    resources: Vec<RawResource>,
    #[serde(default)]
    events: Vec<String>,
    #[serde(default)]
    outcomes: Vec<String>,
    #[serde(default)]
    gamma: Vec<(String, String)>,
    activities: Vec<RawActivity>,
    automaton: RawAutomaton,
    #[serde(default)]
    engine: Option<RawEngine>,
    #[serde(default)]
    plant: Option<RawPlant>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResource {
    name: String,
    #[serde(default)]
    peripherals: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActivity {
    name: String,
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<(String, String)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    kind: String,
    action: Option<String>,
    peripheral: Option<String>,
    resource: Option<String>,
    event: Option<String>,
    duration: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAutomaton {
    states: Vec<String>,
    initial: OneOrMany,
    finals: Vec<String>,
    transitions: Vec<RawTransition>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    from: String,
    input: Option<RawInput>,
    output: Option<String>,
    to: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    event: String,
    outcome: String,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawEngine {
    psi: Option<String>,
    #[serde(rename = "dA")]
    d_a: Option<String>,
    #[serde(rename = "dE")]
    d_e: Option<String>,
    clock: Option<ClockMode>,
    component_costs: Option<RawCosts>,
    retention: Option<Retention>,
    linking: Option<Linking>,
    max_paths: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCosts {
    #[serde(rename = "dEvent")]
    d_event: Option<String>,
    #[serde(rename = "dLC")]
    d_lc: Option<String>,
    #[serde(rename = "dAC")]
    d_ac: Option<String>,
    #[serde(rename = "daC")]
    d_ac_prep: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    #[serde(default)]
    actions: Vec<RawActionBound>,
    #[serde(default)]
    events: Vec<RawEventBound>,
    #[serde(default)]
    delays: RawDelays,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawActionBound {
    action: String,
    peripheral: String,
    worst_case: String,
    jitter: Option<(String, String)>,
    overrun: Option<String>,
    #[serde(default)]
    fail_start: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEventBound {
    event: String,
    resolution: String,
    jitter: Option<(String, String)>,
    source: RawSource,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSource {
    Script {
        script: Vec<String>,
    },
    Dist {
        dist: BTreeMap<String, f64>,
        seed: Option<u64>,
    },
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawDelays {
    start_min: Option<String>,
    start_max: Option<String>,
    observe_min: Option<String>,
    observe_max: Option<String>,
}

struct Ctx {
    unit: TimeUnit,
}

impl Ctx {
    fn time(&self, field: &str, s: &str) -> Result<Time, SpecFileError> {
        Time::parse_in(s, self.unit).map_err(|source| SpecFileError::Time {
            field: field.to_string(),
            source,
        })
    }

    fn opt(&self, field: &str, s: &Option<String>, default: Time) -> Result<Time, SpecFileError> {
        s.as_deref().map_or(Ok(default), |s| self.time(field, s))
    }
}

fn reference(msg: impl Into<String>) -> SpecFileError {
    SpecFileError::Reference(msg.into())
}

/// Parses the file and resolves every cross-reference. Activities are
/// normalized but not checked against the structural constraints.
pub fn parse_document(text: &str) -> Result<SpecDocument, SpecFileError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| SpecFileError::Json(e.to_string()))?;
    from_value(value)
}

/// [`parse_document`], then rejects activities that violate any structural
/// constraint.
pub fn parse_spec(text: &str) -> Result<SpecDocument, SpecFileError> {
    let doc = parse_document(text)?;
    let mut report = ValidationReport::new();
    for a in doc.spec.activities.values() {
        report.extend(validate_activity(a, &doc.spec.universe).map_err(|source| {
            SpecFileError::Structure {
                activity: a.name().clone(),
                source,
            }
        })?);
    }
    if !report.is_empty() {
        return Err(SpecFileError::Invalid(report.finish()));
    }
    Ok(doc)
}

/// Parses a document with separately supplied engine and plant sections. Keys
/// in an override replace the same keys of the embedded section.
pub fn parse_with_overrides(
    text: &str,
    engine: Option<&str>,
    plant: Option<&str>,
) -> Result<SpecDocument, SpecFileError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| SpecFileError::Json(e.to_string()))?;
    for (key, over) in [("engine", engine), ("plant", plant)] {
        let Some(over) = over else { continue };
        let over: Value = serde_json::from_str(over)
            .map_err(|e| SpecFileError::Json(format!("{key} file: {e}")))?;
        let Value::Object(root) = &mut value else {
            return Err(SpecFileError::Json("document is not an object".into()));
        };
        let slot = root
            .entry(key)
            .or_insert_with(|| Value::Object(Default::default()));
        merge(slot, over);
    }
    from_value(value)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                b.insert(k, v);
            }
        }
        (b, o) => *b = o,
    }
}

fn from_value(value: Value) -> Result<SpecDocument, SpecFileError> {
    let raw: RawDoc =
        serde_json::from_value(value).map_err(|e| SpecFileError::Json(e.to_string()))?;
    let unit = match &raw.time_unit {
        Some(s) => TimeUnit::parse(s).map_err(|source| SpecFileError::Time {
            field: "timeUnit".into(),
            source,
        })?,
        None => TimeUnit::default(),
    };
    let ctx = Ctx { unit };

    let mut universe = Universe::default();
    for r in &raw.resources {
        let res = Resource::new(&r.name);
        if !universe.resources.insert(res.clone()) {
            return Err(reference(format!("resource {} declared twice", r.name)));
        }
        for p in &r.peripherals {
            if universe
                .peripherals
                .insert(Peripheral::new(p), res.clone())
                .is_some()
            {
                return Err(reference(format!("peripheral {p} owned by two resources")));
            }
        }
    }

    let events: BTreeSet<EventName> = raw.events.iter().map(EventName::new).collect();
    let outcomes: BTreeSet<OutcomeName> = raw.outcomes.iter().map(OutcomeName::new).collect();
    let mut gamma = BTreeSet::new();
    for (e, u) in &raw.gamma {
        let (e, u) = (EventName::new(e), OutcomeName::new(u));
        if !events.contains(&e) {
            return Err(reference(format!("gamma references undeclared event {e}")));
        }
        if !outcomes.contains(&u) {
            return Err(reference(format!(
                "gamma references undeclared outcome {u}"
            )));
        }
        gamma.insert((e, u));
    }

    let mut activities = BTreeMap::new();
    for ra in &raw.activities {
        let name = ActivityName::new(&ra.name);
        if name.as_str() == "ε" || activities.contains_key(&name) {
            return Err(reference(format!(
                "activity name {} is reserved or repeated",
                ra.name
            )));
        }
        let a = build_activity(&ctx, &name, ra, &universe, &events)?;
        activities.insert(name, a.normalized(&universe));
    }

    let automaton = build_automaton(&raw.automaton, &activities, &gamma)?;
    let spec = ActivitySpec {
        universe,
        activities,
        events,
        outcomes,
        gamma,
        automaton,
    };
    let engine = raw
        .engine
        .as_ref()
        .map(|e| build_engine(&ctx, e))
        .transpose()?;
    let plant = raw
        .plant
        .as_ref()
        .map(|p| build_plant(&ctx, p))
        .transpose()?;
    Ok(SpecDocument {
        spec,
        unit,
        engine,
        plant,
    })
}

fn build_activity(
    ctx: &Ctx,
    name: &ActivityName,
    ra: &RawActivity,
    universe: &Universe,
    events: &BTreeSet<EventName>,
) -> Result<Activity, SpecFileError> {
    let structure = |source| SpecFileError::Structure {
        activity: name.clone(),
        source,
    };
    let mut nodes = Vec::new();
    for rn in &ra.nodes {
        let id = NodeId::new(name.clone(), LocalId::new(&rn.id));
        let field = |f: &Option<String>, what: &str| {
            f.clone()
                .ok_or_else(|| reference(format!("node {id} of kind {} needs `{what}`", rn.kind)))
        };
        let label = match rn.kind.as_str() {
            "action" => NodeLabel::Action {
                action: field(&rn.action, "action")?.into(),
                peripheral: field(&rn.peripheral, "peripheral")?.into(),
            },
            "claim" => NodeLabel::Claim {
                resource: field(&rn.resource, "resource")?.into(),
            },
            "release" => NodeLabel::Release {
                resource: field(&rn.resource, "resource")?.into(),
            },
            "event" => {
                let e = EventName::new(field(&rn.event, "event")?);
                if !events.contains(&e) {
                    return Err(structure(StructureError::UnknownIdentifier {
                        node: id,
                        kind: "event",
                        name: e.to_string(),
                    }));
                }
                NodeLabel::Event { event: e }
            }
            other => return Err(reference(format!("node {id} has unknown kind `{other}`"))),
        };
        let duration = ctx.opt(&format!("{id}.duration"), &rn.duration, Time::ZERO)?;
        nodes.push(Node::new(id, label, duration));
    }
    let edges = ra.edges.iter().map(|(f, t)| {
        (
            NodeId::new(name.clone(), LocalId::new(f)),
            NodeId::new(name.clone(), LocalId::new(t)),
        )
    });
    let a = Activity::new(name.clone(), nodes, edges).map_err(structure)?;
    // Label references are checked here so that parse errors name the activity.
    validate_activity(&a, universe).map_err(structure)?;
    Ok(a)
}

fn build_automaton(
    raw: &RawAutomaton,
    activities: &BTreeMap<ActivityName, Activity>,
    gamma: &BTreeSet<(EventName, OutcomeName)>,
) -> Result<IoAutomaton, SpecFileError> {
    let states: BTreeSet<StateName> = raw.states.iter().map(StateName::new).collect();
    let state = |s: &String| {
        let q = StateName::new(s);
        if states.contains(&q) {
            Ok(q)
        } else {
            Err(reference(format!("undeclared state {s}")))
        }
    };
    let initial = match &raw.initial {
        OneOrMany::One(s) => vec![state(s)?],
        OneOrMany::Many(v) => v.iter().map(state).collect::<Result<_, _>>()?,
    };
    let finals = raw.finals.iter().map(state).collect::<Result<_, _>>()?;
    let mut transitions = Vec::new();
    for t in &raw.transitions {
        let input = match &t.input {
            None => Input::Silent,
            Some(i) => {
                let pair = (EventName::new(&i.event), OutcomeName::new(&i.outcome));
                if !gamma.contains(&pair) {
                    return Err(reference(format!(
                        "transition input ({},{}) is not in gamma",
                        i.event, i.outcome
                    )));
                }
                Input::Event(pair.0, pair.1)
            }
        };
        let output = match &t.output {
            None => None,
            Some(a) => {
                let a = ActivityName::new(a);
                if !activities.contains_key(&a) {
                    return Err(reference(format!(
                        "transition outputs undeclared activity {a}"
                    )));
                }
                Some(a)
            }
        };
        transitions.push(Transition {
            from: state(&t.from)?,
            input,
            output,
            to: state(&t.to)?,
        });
    }
    Ok(IoAutomaton {
        states,
        initial: initial.into_iter().collect(),
        finals,
        transitions,
    })
}

fn build_engine(ctx: &Ctx, raw: &RawEngine) -> Result<EngineConfig, SpecFileError> {
    let d = EngineConfig {
        unit: ctx.unit,
        ..EngineConfig::default()
    };
    let costs = raw.component_costs.as_ref();
    let cost = |name: &str, f: Option<&Option<String>>| match f {
        Some(s) => ctx.opt(&format!("engine.componentCosts.{name}"), s, Time::ZERO),
        None => Ok(Time::ZERO),
    };
    Ok(EngineConfig {
        psi: ctx.opt("engine.psi", &raw.psi, d.psi)?,
        d_a: ctx.opt("engine.dA", &raw.d_a, d.d_a)?,
        d_e: ctx.opt("engine.dE", &raw.d_e, d.d_e)?,
        clock: raw.clock.unwrap_or(d.clock),
        costs: LayerCosts {
            d_event: cost("dEvent", costs.map(|c| &c.d_event))?,
            d_lc: cost("dLC", costs.map(|c| &c.d_lc))?,
            d_ac: cost("dAC", costs.map(|c| &c.d_ac))?,
            d_ac_prep: cost("daC", costs.map(|c| &c.d_ac_prep))?,
        },
        retention: raw.retention.unwrap_or(d.retention),
        linking: raw.linking.unwrap_or(d.linking),
        unit: ctx.unit,
        max_paths: raw.max_paths.unwrap_or(d.max_paths),
    })
}

fn build_plant(ctx: &Ctx, raw: &RawPlant) -> Result<PlantConfig, SpecFileError> {
    let range = |field: &str,
                 j: &Option<(String, String)>|
     -> Result<Option<(Time, Time)>, SpecFileError> {
        j.as_ref()
            .map(|(lo, hi)| Ok((ctx.time(field, lo)?, ctx.time(field, hi)?)))
            .transpose()
    };
    let mut actions = Vec::new();
    for a in &raw.actions {
        let at = format!("plant.actions.{}@{}", a.action, a.peripheral);
        actions.push(ActionBound {
            action: a.action.as_str().into(),
            peripheral: a.peripheral.as_str().into(),
            worst_case: ctx.time(&at, &a.worst_case)?,
            jitter: range(&at, &a.jitter)?,
            overrun: ctx.opt(&at, &a.overrun, Time::ZERO)?,
            fail_start: a.fail_start,
        });
    }
    let mut events = Vec::new();
    for (i, e) in raw.events.iter().enumerate() {
        let at = format!("plant.events.{}", e.event);
        let source = match &e.source {
            RawSource::Script { script } => {
                OutcomeSource::Script(script.iter().map(OutcomeName::new).collect())
            }
            RawSource::Dist { dist, seed } => OutcomeSource::Distribution {
                weights: dist
                    .iter()
                    .map(|(u, w)| (OutcomeName::new(u), *w))
                    .collect(),
                seed: seed.unwrap_or(raw.seed.wrapping_add(i as u64 + 1)),
            },
        };
        events.push(EventBound {
            event: e.event.as_str().into(),
            resolution: ctx.time(&at, &e.resolution)?,
            jitter: range(&at, &e.jitter)?,
            source,
        });
    }
    let d = &raw.delays;
    Ok(PlantConfig {
        actions,
        events,
        delays: DelayModel {
            start_min: ctx.opt("plant.delays.startMin", &d.start_min, Time::ZERO)?,
            start_max: ctx.opt("plant.delays.startMax", &d.start_max, Time::ZERO)?,
            observe_min: ctx.opt("plant.delays.observeMin", &d.observe_min, Time::ZERO)?,
            observe_max: ctx.opt("plant.delays.observeMax", &d.observe_max, Time::ZERO)?,
        },
        seed: raw.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::RUNNING_EXAMPLE_JSON;

    #[test]
    fn running_example_parses() {
        let doc = parse_spec(RUNNING_EXAMPLE_JSON).unwrap();
        assert_eq!(doc.spec.activities.len(), 4);
        assert_eq!(doc.spec.automaton.transitions.len(), 4);
        assert!(doc.engine.is_some() && doc.plant.is_some());
    }

    #[test]
    fn unit_suffixes_convert_through_time_unit() {
        let mut v: Value = serde_json::from_str(RUNNING_EXAMPLE_JSON).unwrap();
        v["timeUnit"] = "10ms".into();
        v["engine"]["dA"] = "1.6ms".into();
        let doc = from_value(v).unwrap();
        assert_eq!(doc.engine.unwrap().d_a, Time::from_ratio(4, 25));
    }

    #[test]
    fn overrides_replace_by_key() {
        let doc =
            parse_with_overrides(RUNNING_EXAMPLE_JSON, Some(r#"{"psi": "25"}"#), None).unwrap();
        let e = doc.engine.unwrap();
        assert_eq!(e.psi, Time::from_integer(25));
        let base = parse_document(RUNNING_EXAMPLE_JSON)
            .unwrap()
            .engine
            .unwrap();
        assert_eq!(e.d_a, base.d_a);
    }

    #[test]
    fn dangling_references_are_rejected() {
        let mut v: Value = serde_json::from_str(RUNNING_EXAMPLE_JSON).unwrap();
        v["automaton"]["transitions"][0]["output"] = "Act9".into();
        assert!(matches!(from_value(v), Err(SpecFileError::Reference(_))));

        let mut v: Value = serde_json::from_str(RUNNING_EXAMPLE_JSON).unwrap();
        v["activities"][0]["edges"][0][1] = "nx".into();
        assert!(matches!(
            from_value(v),
            Err(SpecFileError::Structure {
                source: StructureError::DanglingNode(_),
                ..
            })
        ));

        let mut v: Value = serde_json::from_str(RUNNING_EXAMPLE_JSON).unwrap();
        v["activities"][0]["nodes"][0]["peripheral"] = "p9".into();
        v["activities"][0]["nodes"][0]["kind"] = "action".into();
        v["activities"][0]["nodes"][0]["action"] = "a".into();
        assert!(from_value(v).is_err());
    }

    #[test]
    fn structural_violation_rejected_by_strict_parse() {
        let mut v: Value = serde_json::from_str(RUNNING_EXAMPLE_JSON).unwrap();
        let edges = v["activities"][0]["edges"].as_array_mut().unwrap();
        edges.push(serde_json::json!(["rl_r2", "rl_r3"]));
        let text = v.to_string();
        assert!(parse_document(&text).is_ok());
        assert!(matches!(parse_spec(&text), Err(SpecFileError::Invalid(_))));
    }
}
