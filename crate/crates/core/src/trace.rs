//! Execution traces: specified versus executed timing of every node, the
//! processed outcomes, and per-decision-path readiness.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ActivityName, EventName, NodeId, OutcomeName, StateName};
use crate::model::NodeLabel;
use crate::sequencing::Linking;
use crate::time::Time;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    Simulated,
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub psi: Time,
    pub d_a: Time,
    pub d_e: Time,
    pub clock: ClockMode,
    pub linking: Linking,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// One executed action or event node. Specified times are in model units
/// from the start of the schedule; executed times are wall times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub node: NodeId,
    pub label: NodeLabel,
    pub s: Time,
    pub c: Time,
    /// When the engine handed the node to the plant.
    pub issued: Time,
    pub s_exec: Time,
    pub c_exec: Time,
    /// When the engine learned of completion.
    pub observed: Time,
    /// `s_exec - s - psi`.
    pub delta: Time,
    /// 1-based index of the decision path that introduced the node.
    pub path: usize,
    pub deadline_violated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeName>,
}

/// Time spent in each engine layer while handling one decision path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCosts {
    /// Outcome delivery from the action controller up to the logistics controller.
    pub d_event: Time,
    pub d_lc: Time,
    pub d_ac: Time,
    /// Action-controller preparation (sorting the received nodes).
    pub d_ac_prep: Time,
}

impl LayerCosts {
    pub fn total(&self) -> Time {
        self.d_event + self.d_lc + self.d_ac + self.d_ac_prep
    }

    pub fn max(&self, o: &LayerCosts) -> LayerCosts {
        LayerCosts {
            d_event: self.d_event.max(o.d_event),
            d_lc: self.d_lc.max(o.d_lc),
            d_ac: self.d_ac.max(o.d_ac),
            d_ac_prep: self.d_ac_prep.max(o.d_ac_prep),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedEvent {
    pub event: EventName,
    pub outcome: OutcomeName,
    /// Which emission of the event this outcome belongs to (1-based).
    pub instance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub index: usize,
    pub from: StateName,
    pub to: StateName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing: Option<ProcessedEvent>,
    pub activities: Vec<Option<ActivityName>>,
    /// Number of executable nodes the path added.
    pub nodes: usize,
    /// When the action controller held every node of the path.
    pub ready: Time,
    /// Earliest specified start among the nodes the path added, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Time>,
    pub costs: LayerCosts,
    /// Nodes the activity controller held after sequencing the path.
    #[serde(default)]
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    /// Outcomes in the order the logistics controller processed them.
    pub outcomes: Vec<ProcessedEvent>,
    pub paths: Vec<PathRecord>,
    pub completed: bool,
    pub final_state: Option<StateName>,
    pub aborted: Option<String>,
}

impl ExecutionTrace {
    pub fn new(header: TraceHeader) -> Self {
        ExecutionTrace {
            header,
            records: Vec::new(),
            outcomes: Vec::new(),
            paths: Vec::new(),
            completed: false,
            final_state: None,
            aborted: None,
        }
    }

    pub fn deadline_violations(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.deadline_violated)
    }

    /// Completed without aborting and without deadline violations.
    pub fn conforming(&self) -> bool {
        self.completed && self.aborted.is_none() && self.deadline_violations().next().is_none()
    }

    pub fn record(&self, id: &NodeId) -> Option<&TraceRecord> {
        self.records.iter().find(|r| &r.node == id)
    }

    pub fn max_delta(&self) -> Option<Time> {
        self.records.iter().map(|r| r.delta).max()
    }

    pub fn processed_pairs(&self) -> Vec<(EventName, OutcomeName)> {
        self.outcomes
            .iter()
            .map(|p| (p.event.clone(), p.outcome.clone()))
            .collect()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut line = |l: &Line| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")
        };
        line(&Line::Header(self.header.clone()))?;
        for p in &self.paths {
            line(&Line::Path(p.clone()))?;
        }
        for r in &self.records {
            line(&Line::Node(r.clone()))?;
        }
        for o in &self.outcomes {
            line(&Line::Outcome(o.clone()))?;
        }
        line(&Line::Summary {
            completed: self.completed,
            final_state: self.final_state.clone(),
            aborted: self.aborted.clone(),
            conforming: self.conforming(),
        })
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, TraceError> {
        let mut trace: Option<ExecutionTrace> = None;
        let mut saw_summary = false;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            let t = match (&mut trace, parsed) {
                (None, Line::Header(h)) => {
                    trace = Some(ExecutionTrace::new(h));
                    continue;
                }
                (None, _) => return Err(TraceError::MissingHeader),
                (Some(_), Line::Header(_)) => {
                    return Err(TraceError::Malformed {
                        line: i + 1,
                        message: "second header".into(),
                    })
                }
                (Some(t), l) => (t, l),
            };
            match t.1 {
                Line::Node(r) => t.0.records.push(r),
                Line::Outcome(o) => t.0.outcomes.push(o),
                Line::Path(p) => t.0.paths.push(p),
                Line::Summary {
                    completed,
                    final_state,
                    aborted,
                    ..
                } => {
                    t.0.completed = completed;
                    t.0.final_state = final_state;
                    t.0.aborted = aborted;
                    saw_summary = true;
                }
                Line::Header(_) => unreachable!(),
            }
        }
        let trace = trace.ok_or(TraceError::MissingHeader)?;
        if !saw_summary {
            return Err(TraceError::MissingSummary);
        }
        Ok(trace)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(TraceHeader),
    Path(PathRecord),
    Node(TraceRecord),
    Outcome(ProcessedEvent),
    Summary {
        completed: bool,
        final_state: Option<StateName>,
        aborted: Option<String>,
        conforming: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace read failed: {0}")]
    Io(String),
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace has no header line")]
    MissingHeader,
    #[error("trace has no summary line")]
    MissingSummary,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut t = ExecutionTrace::new(TraceHeader {
            psi: Time::from_integer(10),
            d_a: Time::from_ratio(1, 10),
            d_e: Time::from_ratio(1, 2),
            clock: ClockMode::Simulated,
            linking: Linking::ResourceMatched,
            seed: Some(3),
        });
        t.records.push(TraceRecord {
            node: NodeId::new("Act2", "n5").with_instance(2),
            label: NodeLabel::Event { event: "e".into() },
            s: Time::from_integer(3),
            c: Time::from_integer(4),
            issued: Time::from_integer(13),
            s_exec: Time::from_integer(13),
            c_exec: Time::from_ratio(27, 2),
            observed: Time::from_ratio(27, 2),
            delta: Time::ZERO,
            path: 1,
            deadline_violated: false,
            outcome: Some("u2".into()),
        });
        t.outcomes.push(ProcessedEvent {
            event: "e".into(),
            outcome: "u2".into(),
            instance: 1,
        });
        t.completed = true;
        t.final_state = Some("q3".into());
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let back = ExecutionTrace::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_headerless_and_truncated() {
        assert_eq!(
            ExecutionTrace::read_jsonl("".as_bytes()).unwrap_err(),
            TraceError::MissingHeader
        );
        let header = r#"{"type":"header","psi":"1","d_a":"0","d_e":"0","clock":"simulated","linking":"resource-matched"}"#;
        assert_eq!(
            ExecutionTrace::read_jsonl(header.as_bytes()).unwrap_err(),
            TraceError::MissingSummary
        );
    }
}
