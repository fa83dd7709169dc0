//! The sequencing operator and the behavior / processed-events functions.
//!
//! `A1 . A2` drops the release nodes of `A1` and the claim nodes of `A2` and
//! splices the two graphs together:
//!
//! * every predecessor of the release of `r` in `A1` gets an edge to every
//!   successor of the claim of `r` in `A2`;
//! * every `A1` node emitting `e'` gets an edge to every `A2` node emitting `e'`.
//!
//! `A1 ;(e,k) A2` additionally links the `k`-th emission of `e` in `A1` to every
//! successor of every claim of `A2`, so that nothing in `A2` starts before the
//! outcome that selected it is known.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{Input, Word};
use crate::ids::{ActivityName, EventName, NodeId, OutcomeName, Resource};
use crate::model::{Activity, Node};

/// How release/claim chains of consecutive activities are joined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linking {
    /// Only the release and claim of the same resource are joined.
    #[default]
    ResourceMatched,
    /// Every release predecessor is joined to every claim successor,
    /// regardless of resource.
    ResourceAgnostic,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeqError {
    #[error(
        "activity {activity} does not claim and release resource {resource}; normalize it first"
    )]
    NotNormalized {
        activity: ActivityName,
        resource: Resource,
    },
    #[error("event {event} processed for the {k}th time but emitted only {emitted} times")]
    EventUnderflow {
        event: EventName,
        k: u32,
        emitted: u32,
    },
    #[error("unknown activity {0}")]
    UnknownActivity(ActivityName),
}

/// A sequenced activity plus the bookkeeping the sequencing operator needs.
///
/// Nodes carry instance numbers starting at 1, assigned in sequencing order.
#[derive(Debug, Clone)]
pub struct ComposedActivity {
    activity: Activity,
    next_instance: u32,
    linking: Linking,
    /// Per event: emission index (1-based) to emitting node.
    emissions: BTreeMap<EventName, BTreeMap<u32, NodeId>>,
    emitted: BTreeMap<EventName, u32>,
    emission_of: BTreeMap<NodeId, (EventName, u32)>,
    processed: BTreeMap<EventName, u32>,
    names: Vec<ActivityName>,
}

impl Default for ComposedActivity {
    fn default() -> Self {
        Self::new(Linking::default())
    }
}

impl ComposedActivity {
    /// The empty composition.
    pub fn new(linking: Linking) -> Self {
        ComposedActivity {
            activity: Activity::empty(),
            next_instance: 1,
            linking,
            emissions: BTreeMap::new(),
            emitted: BTreeMap::new(),
            emission_of: BTreeMap::new(),
            processed: BTreeMap::new(),
            names: Vec::new(),
        }
    }

    /// A composition holding a single activity.
    pub fn from_activity(a: &Activity, linking: Linking) -> Self {
        let mut c = Self::new(linking);
        c.append(a, None)
            .expect("appending to the empty composition cannot fail");
        c
    }

    pub fn activity(&self) -> &Activity {
        &self.activity
    }

    pub fn into_activity(self) -> Activity {
        self.activity
    }

    pub fn linking(&self) -> Linking {
        self.linking
    }

    /// Names of the non-empty activities appended so far, in order.
    pub fn sequence(&self) -> &[ActivityName] {
        &self.names
    }

    /// Emitting nodes of `e` still present, in emission order.
    pub fn emitters(&self, e: &EventName) -> Vec<&NodeId> {
        self.emissions
            .get(e)
            .map(|m| m.values().collect())
            .unwrap_or_default()
    }

    pub fn emitted_count(&self, e: &EventName) -> u32 {
        self.emitted.get(e).copied().unwrap_or(0)
    }

    pub fn processed_count(&self, e: &EventName) -> u32 {
        self.processed.get(e).copied().unwrap_or(0)
    }

    /// The event and 1-based emission index of an event node.
    pub fn emission_of(&self, id: &NodeId) -> Option<(&EventName, u32)> {
        self.emission_of.get(id).map(|(e, k)| (e, *k))
    }

    /// The node recorded as the `k`-th emission of `e`.
    pub fn kth_emitter(&self, e: &EventName, k: u32) -> Option<&NodeId> {
        self.emissions.get(e).and_then(|m| m.get(&k))
    }

    /// Appends `a`, processing the next instance of `event` first when given.
    /// Returns the ids of the nodes that were added.
    pub fn append(
        &mut self,
        a: &Activity,
        event: Option<&EventName>,
    ) -> Result<Vec<NodeId>, SeqError> {
        let ek = event.map(|e| (e.clone(), self.processed_count(e) + 1));
        self.append_at(a, ek.as_ref().map(|(e, k)| (e, *k)))
    }

    /// Appends `a` with an explicit event instance.
    pub fn append_at(
        &mut self,
        a: &Activity,
        ek: Option<(&EventName, u32)>,
    ) -> Result<Vec<NodeId>, SeqError> {
        let emitter = match ek {
            Some((e, k)) => {
                let emitted = self.emitted_count(e);
                if k == 0 || k > emitted {
                    return Err(SeqError::EventUnderflow {
                        event: e.clone(),
                        k,
                        emitted,
                    });
                }
                self.kth_emitter(e, k).cloned()
            }
            None => None,
        };
        if a.is_empty() {
            self.mark_processed(ek);
            return Ok(Vec::new());
        }
        let instance = self.next_instance;
        let renamed = |id: &NodeId| id.with_instance(instance);

        if self.activity.is_empty() {
            let nodes: Vec<Node> = a
                .nodes()
                .map(|n| Node::new(renamed(&n.id), n.label.clone(), n.duration))
                .collect();
            let added: Vec<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
            for n in nodes {
                self.activity.insert_node(n);
            }
            for (f, t) in a.edges() {
                self.activity.link(&renamed(f), &renamed(t));
            }
            self.finish_append(a, instance, &added);
            self.mark_processed(ek);
            return Ok(added);
        }

        let released: BTreeMap<Resource, NodeId> = self
            .activity
            .release_nodes()
            .map(|(r, id)| (r.clone(), id.clone()))
            .collect();
        let claimed: BTreeMap<Resource, NodeId> = a
            .claim_nodes()
            .map(|(r, id)| (r.clone(), id.clone()))
            .collect();
        for r in released.keys() {
            if !claimed.contains_key(r) {
                return Err(SeqError::NotNormalized {
                    activity: a.name().clone(),
                    resource: r.clone(),
                });
            }
        }
        for r in claimed.keys() {
            if !released.contains_key(r) {
                return Err(SeqError::NotNormalized {
                    activity: self.activity.name().clone(),
                    resource: r.clone(),
                });
            }
        }

        // Resource-clause endpoints, taken before anything is removed.
        let mut release_preds: BTreeMap<&Resource, Vec<NodeId>> = BTreeMap::new();
        for (r, id) in &released {
            release_preds.insert(
                r,
                self.activity
                    .predecessors(id)
                    .expect("present")
                    .iter()
                    .cloned()
                    .collect(),
            );
        }
        let mut claim_succs: BTreeMap<&Resource, Vec<NodeId>> = BTreeMap::new();
        for (r, id) in &claimed {
            claim_succs.insert(
                r,
                a.successors(id)
                    .expect("present")
                    .iter()
                    .map(renamed)
                    .collect(),
            );
        }
        let old_emitters: Vec<(EventName, NodeId)> = self
            .emissions
            .iter()
            .flat_map(|(e, m)| m.values().map(move |id| (e.clone(), id.clone())))
            .filter(|(_, id)| self.activity.contains(id))
            .collect();

        for id in released.values() {
            self.activity.remove_node(id);
        }
        let claim_ids: BTreeSet<&NodeId> = claimed.values().collect();
        let mut added = Vec::new();
        for n in a.nodes().filter(|n| !claim_ids.contains(&n.id)) {
            let id = renamed(&n.id);
            added.push(id.clone());
            self.activity
                .insert_node(Node::new(id, n.label.clone(), n.duration));
        }
        for (f, t) in a.edges() {
            if !claim_ids.contains(f) {
                self.activity.link(&renamed(f), &renamed(t));
            }
        }

        match self.linking {
            Linking::ResourceMatched => {
                for (r, preds) in &release_preds {
                    for p in preds {
                        for s in &claim_succs[r] {
                            self.activity.link(p, s);
                        }
                    }
                }
            }
            Linking::ResourceAgnostic => {
                for p in release_preds.values().flatten() {
                    for s in claim_succs.values().flatten() {
                        self.activity.link(p, s);
                    }
                }
            }
        }

        for (e, old) in &old_emitters {
            for (e2, new) in a.event_nodes() {
                if e == e2 {
                    self.activity.link(old, &renamed(new));
                }
            }
        }

        if let Some(src) = emitter {
            for s in claim_succs.values().flatten() {
                self.activity.link(&src, s);
            }
        }

        self.finish_append(a, instance, &added);
        self.mark_processed(ek);
        Ok(added)
    }

    fn mark_processed(&mut self, ek: Option<(&EventName, u32)>) {
        if let Some((e, k)) = ek {
            let p = self.processed.entry(e.clone()).or_insert(0);
            *p = (*p).max(k);
        }
    }

    fn finish_append(&mut self, a: &Activity, instance: u32, added: &[NodeId]) {
        self.next_instance = instance + 1;
        self.names.push(a.name().clone());
        let name = if self.names.len() == 1 {
            a.name().to_string()
        } else {
            format!("{}.{}", self.activity.name(), a.name())
        };
        self.activity.set_name(ActivityName::new(name));

        // Emission order follows the chain the new emitters form in `a`.
        let order = a
            .topological_order()
            .expect("sequenced activities are acyclic");
        let added: BTreeSet<&NodeId> = added.iter().collect();
        for base in order {
            let Some(e) = a.node(&base).and_then(|n| n.label.event()) else {
                continue;
            };
            let id = base.with_instance(instance);
            if !added.contains(&id) {
                continue;
            }
            let count = self.emitted.entry(e.clone()).or_insert(0);
            *count += 1;
            self.emissions
                .entry(e.clone())
                .or_default()
                .insert(*count, id.clone());
            self.emission_of.insert(id, (e.clone(), *count));
        }
    }

    /// Drops nodes from the graph. Emission bookkeeping for dropped emitters
    /// is discarded; counters are kept.
    pub(crate) fn forget(&mut self, ids: &[NodeId]) {
        for id in ids {
            self.activity.remove_node(id);
            if let Some((e, k)) = self.emission_of.remove(id) {
                if let Some(m) = self.emissions.get_mut(&e) {
                    m.remove(&k);
                }
            }
        }
    }
}

/// `a1 . a2`.
pub fn seq_plain(
    a1: &Activity,
    a2: &Activity,
    linking: Linking,
) -> Result<ComposedActivity, SeqError> {
    let mut c = ComposedActivity::new(linking);
    c.append(a1, None)?;
    c.append(a2, None)?;
    Ok(c)
}

/// `a1 ;(e,k) a2`.
pub fn seq_event(
    a1: &ComposedActivity,
    a2: &Activity,
    e: &EventName,
    k: u32,
) -> Result<ComposedActivity, SeqError> {
    let mut c = a1.clone();
    c.append_at(a2, Some((e, k)))?;
    Ok(c)
}

/// The `k`-th emission of `e` located from the graph alone: the emitting node
/// with exactly `k - 1` emitting strict ancestors.
pub fn kth_emitter_by_order(a: &Activity, e: &EventName, k: u32) -> Option<NodeId> {
    let reach = a.reachability()?;
    let emitters: Vec<&NodeId> = a
        .event_nodes()
        .filter(|(x, _)| *x == e)
        .map(|(_, id)| id)
        .collect();
    emitters
        .iter()
        .find(|n| emitters.iter().filter(|m| reach.reaches(m, n)).count() as u32 == k - 1)
        .map(|n| (*n).clone())
}

/// Folds a word into one activity: silent inputs sequence plainly, an
/// (event, outcome) input sequences on the next unprocessed instance of the
/// event.
pub fn behavior_activity(
    acts: &BTreeMap<ActivityName, Activity>,
    w: &Word,
    linking: Linking,
) -> Result<ComposedActivity, SeqError> {
    let mut c = ComposedActivity::new(linking);
    let empty = Activity::empty();
    for letter in w.letters() {
        let a = match &letter.output {
            None => &empty,
            Some(name) => acts
                .get(name)
                .ok_or_else(|| SeqError::UnknownActivity(name.clone()))?,
        };
        c.append(a, letter.input.event())?;
    }
    Ok(c)
}

/// The (event, outcome) inputs of a word, silent inputs dropped.
pub fn processed_events(w: &Word) -> Vec<(EventName, OutcomeName)> {
    w.letters()
        .iter()
        .filter_map(|l| match &l.input {
            Input::Silent => None,
            Input::Event(e, u) => Some((e.clone(), u.clone())),
        })
        .collect()
}
