//! Max-plus specified timing of nodes, activities and decision paths.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::DecisionPath;
use crate::ids::{ActivityName, NodeId, Resource};
use crate::model::{Activity, NodeLabel};
use crate::sequencing::{ComposedActivity, SeqError};
use crate::time::Time;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimingError {
    #[error("activity has a dependency cycle")]
    Cyclic,
    #[error("node {0} has no predecessor and is not a claim")]
    NoPredecessor(NodeId),
    #[error("no availability time for resource {0}")]
    UnknownResource(Resource),
    #[error("predecessor {pred} of {node} has no computed time")]
    MissingPredecessor { node: NodeId, pred: NodeId },
    #[error(transparent)]
    Sequencing(#[from] SeqError),
}

/// Availability time of every resource.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceState(pub BTreeMap<Resource, Time>);

impl ResourceState {
    /// Every resource available at time zero.
    pub fn zero<'a>(resources: impl IntoIterator<Item = &'a Resource>) -> Self {
        Self::uniform(resources, Time::ZERO)
    }

    pub fn uniform<'a>(resources: impl IntoIterator<Item = &'a Resource>, t: Time) -> Self {
        ResourceState(resources.into_iter().map(|r| (r.clone(), t)).collect())
    }

    pub fn get(&self, r: &Resource) -> Option<Time> {
        self.0.get(r).copied()
    }

    pub fn set(&mut self, r: Resource, t: Time) {
        self.0.insert(r, t);
    }

    pub fn min(&self) -> Option<Time> {
        self.0.values().copied().min()
    }

    /// Every entry shifted by `r`.
    pub fn shifted(&self, r: Time) -> Self {
        ResourceState(self.0.iter().map(|(k, v)| (k.clone(), *v + r)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub start: Time,
    pub completion: Time,
}

pub type Schedule = BTreeMap<NodeId, ScheduleEntry>;

fn entry_for(
    a: &Activity,
    id: &NodeId,
    x: &ResourceState,
    known: &Schedule,
) -> Result<ScheduleEntry, TimingError> {
    let node = a.node(id).ok_or_else(|| TimingError::MissingPredecessor {
        node: id.clone(),
        pred: id.clone(),
    })?;
    let start = match &node.label {
        NodeLabel::Claim { resource } => x
            .get(resource)
            .ok_or_else(|| TimingError::UnknownResource(resource.clone()))?,
        _ => {
            let preds = a.predecessors(id).expect("node present");
            let mut start: Option<Time> = None;
            for p in preds {
                let c = known
                    .get(p)
                    .ok_or_else(|| TimingError::MissingPredecessor {
                        node: id.clone(),
                        pred: p.clone(),
                    })?
                    .completion;
                start = Some(start.map_or(c, |s| s.max(c)));
            }
            start.ok_or_else(|| TimingError::NoPredecessor(id.clone()))?
        }
    };
    Ok(ScheduleEntry {
        start,
        completion: start + node.duration,
    })
}

/// Start and completion time of every node, in one topological pass.
pub fn node_times(a: &Activity, x: &ResourceState) -> Result<Schedule, TimingError> {
    let order = a.topological_order().ok_or(TimingError::Cyclic)?;
    let mut out = Schedule::new();
    for id in order {
        let e = entry_for(a, &id, x, &out)?;
        out.insert(id, e);
    }
    Ok(out)
}

/// Computes times for `new` only, reading predecessors from `schedule` and
/// holding every existing entry fixed. Valid because sequencing never adds
/// edges into nodes that are already present.
pub fn extend_node_times(
    a: &Activity,
    x: &ResourceState,
    schedule: &mut Schedule,
    new: &[NodeId],
) -> Result<(), TimingError> {
    let fresh: BTreeSet<&NodeId> = new.iter().collect();
    let mut indeg: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for id in &fresh {
        let preds = a
            .predecessors(id)
            .map_err(|_| TimingError::NoPredecessor((*id).clone()))?;
        indeg.insert(id, preds.iter().filter(|p| fresh.contains(p)).count());
    }
    let mut ready: BTreeSet<&NodeId> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut done = 0;
    while let Some(id) = ready.pop_first() {
        let e = entry_for(a, id, x, schedule)?;
        schedule.insert(id.clone(), e);
        done += 1;
        for s in a.successors(id).expect("node present") {
            if let Some(d) = indeg.get_mut(s) {
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
    }
    if done != fresh.len() {
        return Err(TimingError::Cyclic);
    }
    Ok(())
}

/// Earliest specified start of any node, or the earliest availability when
/// the activity is empty.
pub fn activity_start(a: &Activity, x: &ResourceState) -> Result<Option<Time>, TimingError> {
    if a.is_empty() {
        return Ok(x.min());
    }
    Ok(node_times(a, x)?.values().map(|e| e.start).min())
}

/// Sequences the path's activities onto `prior` (processing the path's event
/// first, if any) and returns the earliest start among the added nodes.
/// A path that adds no nodes starts at the earliest availability.
pub fn decision_path_start(
    rho: &DecisionPath,
    x: &ResourceState,
    prior: &ComposedActivity,
    acts: &BTreeMap<ActivityName, Activity>,
) -> Result<Option<Time>, TimingError> {
    let mut c = prior.clone();
    let mut added = Vec::new();
    let empty = Activity::empty();
    for (i, t) in rho.transitions.iter().enumerate() {
        let a = match &t.output {
            None => &empty,
            Some(name) => acts
                .get(name)
                .ok_or_else(|| SeqError::UnknownActivity(name.clone()))?,
        };
        let event = if i == 0 { t.input.event() } else { None };
        added.extend(c.append(a, event)?);
    }
    added.retain(|id| c.activity().contains(id));
    if added.is_empty() {
        return Ok(x.min());
    }
    let times = node_times(c.activity(), x)?;
    Ok(added.iter().map(|id| times[id].start).min())
}
