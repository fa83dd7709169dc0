//! Activities, activity models and structural validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{
    validate_complete, validate_consistent, validate_deterministic, validate_nonblocking,
    ConsistencyError, IoAutomaton,
};
use crate::graph;
use crate::ids::{
    ActionName, ActivityName, EventName, LocalId, NodeId, OutcomeName, Peripheral, Resource,
};
use crate::report::{Constraint, Rule, ValidationReport};
use crate::time::Time;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("dependency references unknown node {0}")]
    DanglingNode(NodeId),
    #[error("node {0} has a negative duration")]
    NegativeDuration(NodeId),
    #[error("resource node {0} must have zero duration")]
    ResourceNodeDuration(NodeId),
    #[error("node {node} references undeclared {kind} `{name}`")]
    UnknownIdentifier {
        node: NodeId,
        kind: &'static str,
        name: String,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeLabel {
    Action {
        action: ActionName,
        peripheral: Peripheral,
    },
    Claim {
        resource: Resource,
    },
    Release {
        resource: Resource,
    },
    Event {
        event: EventName,
    },
}

impl NodeLabel {
    pub fn is_resource(&self) -> bool {
        matches!(self, NodeLabel::Claim { .. } | NodeLabel::Release { .. })
    }

    /// Action and event nodes are the ones the plant executes.
    pub fn is_executable(&self) -> bool {
        !self.is_resource()
    }

    pub fn event(&self) -> Option<&EventName> {
        match self {
            NodeLabel::Event { event } => Some(event),
            _ => None,
        }
    }

    pub fn claimed(&self) -> Option<&Resource> {
        match self {
            NodeLabel::Claim { resource } => Some(resource),
            _ => None,
        }
    }

    pub fn released(&self) -> Option<&Resource> {
        match self {
            NodeLabel::Release { resource } => Some(resource),
            _ => None,
        }
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeLabel::Action { action, peripheral } => write!(f, "({action},{peripheral})"),
            NodeLabel::Claim { resource } => write!(f, "({resource},cl)"),
            NodeLabel::Release { resource } => write!(f, "({resource},rl)"),
            NodeLabel::Event { event } => write!(f, "{event}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: NodeLabel,
    pub duration: Time,
}

impl Node {
    pub fn new(id: NodeId, label: NodeLabel, duration: Time) -> Self {
        Node {
            id,
            label,
            duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    node: Node,
    preds: BTreeSet<NodeId>,
    succs: BTreeSet<NodeId>,
}

/// A DAG of labeled, timed nodes.
///
/// Adjacency is kept in both directions so that the sequencing operator can
/// splice activities together in place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activity {
    name: ActivityName,
    entries: BTreeMap<NodeId, Entry>,
}

impl Activity {
    /// The empty activity.
    pub fn empty() -> Self {
        Activity {
            name: ActivityName::new("ε"),
            entries: BTreeMap::new(),
        }
    }

    pub fn new(
        name: ActivityName,
        nodes: Vec<Node>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, StructureError> {
        let mut a = Activity {
            name,
            entries: BTreeMap::new(),
        };
        for node in nodes {
            if node.duration.is_negative() {
                return Err(StructureError::NegativeDuration(node.id));
            }
            if node.label.is_resource() && !node.duration.is_zero() {
                return Err(StructureError::ResourceNodeDuration(node.id));
            }
            if a.entries.contains_key(&node.id) {
                return Err(StructureError::DuplicateNode(node.id));
            }
            a.insert_node(node);
        }
        for (from, to) in edges {
            for id in [&from, &to] {
                if !a.entries.contains_key(id) {
                    return Err(StructureError::DanglingNode(id.clone()));
                }
            }
            a.link(&from, &to);
        }
        Ok(a)
    }

    pub fn name(&self) -> &ActivityName {
        &self.name
    }

    pub(crate) fn set_name(&mut self, name: ActivityName) {
        self.name = name;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.entries.values().map(|e| &e.node)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.entries.keys()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.entries.get(id).map(|e| &e.node)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.entries.contains_key(id)
    }

    /// Every dependency `(from, to)`, ordered by source then target.
    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> {
        self.entries
            .iter()
            .flat_map(|(id, e)| e.succs.iter().map(move |s| (id, s)))
    }

    pub fn edge_count(&self) -> usize {
        self.entries.values().map(|e| e.succs.len()).sum()
    }

    pub fn has_edge(&self, from: &NodeId, to: &NodeId) -> bool {
        self.entries.get(from).is_some_and(|e| e.succs.contains(to))
    }

    /// Direct predecessors of `id` (not the transitive closure).
    pub fn predecessors(&self, id: &NodeId) -> Result<&BTreeSet<NodeId>, StructureError> {
        self.entries
            .get(id)
            .map(|e| &e.preds)
            .ok_or_else(|| StructureError::UnknownNode(id.clone()))
    }

    pub fn successors(&self, id: &NodeId) -> Result<&BTreeSet<NodeId>, StructureError> {
        self.entries
            .get(id)
            .map(|e| &e.succs)
            .ok_or_else(|| StructureError::UnknownNode(id.clone()))
    }

    pub fn claim_nodes(&self) -> impl Iterator<Item = (&Resource, &NodeId)> {
        self.nodes()
            .filter_map(|n| n.label.claimed().map(|r| (r, &n.id)))
    }

    pub fn release_nodes(&self) -> impl Iterator<Item = (&Resource, &NodeId)> {
        self.nodes()
            .filter_map(|n| n.label.released().map(|r| (r, &n.id)))
    }

    pub fn event_nodes(&self) -> impl Iterator<Item = (&EventName, &NodeId)> {
        self.nodes()
            .filter_map(|n| n.label.event().map(|e| (e, &n.id)))
    }

    /// Inserts or replaces a node; existing dependencies of a replaced node are kept.
    pub fn insert_node(&mut self, node: Node) {
        if let Some(e) = self.entries.get_mut(&node.id) {
            e.node = node;
            return;
        }
        self.entries.insert(
            node.id.clone(),
            Entry {
                node,
                preds: BTreeSet::new(),
                succs: BTreeSet::new(),
            },
        );
    }

    pub fn remove_node(&mut self, id: &NodeId) -> Option<Node> {
        let entry = self.entries.remove(id)?;
        for p in &entry.preds {
            if let Some(e) = self.entries.get_mut(p) {
                e.succs.remove(id);
            }
        }
        for s in &entry.succs {
            if let Some(e) = self.entries.get_mut(s) {
                e.preds.remove(id);
            }
        }
        Some(entry.node)
    }

    /// Adds `from → to`. Duplicate edges collapse.
    pub fn add_edge(&mut self, from: &NodeId, to: &NodeId) -> Result<(), StructureError> {
        for id in [from, to] {
            if !self.entries.contains_key(id) {
                return Err(StructureError::DanglingNode(id.clone()));
            }
        }
        self.link(from, to);
        Ok(())
    }

    pub(crate) fn link(&mut self, from: &NodeId, to: &NodeId) {
        debug_assert!(self.entries.contains_key(from) && self.entries.contains_key(to));
        if let Some(e) = self.entries.get_mut(from) {
            e.succs.insert(to.clone());
        }
        if let Some(e) = self.entries.get_mut(to) {
            e.preds.insert(from.clone());
        }
    }

    pub fn remove_edge(&mut self, from: &NodeId, to: &NodeId) {
        if let Some(e) = self.entries.get_mut(from) {
            e.succs.remove(to);
        }
        if let Some(e) = self.entries.get_mut(to) {
            e.preds.remove(from);
        }
    }

    /// Kahn's algorithm with ties broken by node id. `None` when cyclic.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let mut indeg: BTreeMap<&NodeId, usize> = self
            .entries
            .iter()
            .map(|(id, e)| (id, e.preds.len()))
            .collect();
        let mut ready: BTreeSet<&NodeId> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.entries.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.clone());
            for s in &self.entries[id].succs {
                let d = indeg.get_mut(s).expect("successor present");
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        (order.len() == self.entries.len()).then_some(order)
    }

    /// Strongly connected components that contain a cycle.
    pub fn cycles(&self) -> Vec<BTreeSet<NodeId>> {
        let ids: Vec<&NodeId> = self.entries.keys().collect();
        let index: BTreeMap<&NodeId, usize> =
            ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let succ: Vec<Vec<usize>> = ids
            .iter()
            .map(|id| self.entries[*id].succs.iter().map(|s| index[s]).collect())
            .collect();
        let mut out: Vec<BTreeSet<NodeId>> = graph::sccs(&succ)
            .into_iter()
            .filter(|c| graph::is_cyclic(c, &succ))
            .map(|c| c.into_iter().map(|i| ids[i].clone()).collect())
            .collect();
        out.sort();
        out
    }

    /// Transitive closure; `None` when the graph is cyclic.
    pub fn reachability(&self) -> Option<Reachability> {
        let order = self.topological_order()?;
        let index: BTreeMap<NodeId, usize> = order
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect();
        let n = order.len();
        let words = n.div_ceil(64);
        let mut desc = vec![vec![0u64; words]; n];
        for i in (0..n).rev() {
            let succs = &self.entries[&order[i]].succs;
            let mut row = vec![0u64; words];
            for s in succs {
                let j = index[s];
                row[j / 64] |= 1 << (j % 64);
                for (w, bits) in row.iter_mut().zip(&desc[j]) {
                    *w |= *bits;
                }
            }
            desc[i] = row;
        }
        Some(Reachability { index, desc })
    }

    /// Adds a directly connected claim/release pair for every declared resource
    /// the activity does not use at all.
    pub fn normalized(mut self, universe: &Universe) -> Self {
        if self.is_empty() {
            return self;
        }
        let claimed: BTreeSet<Resource> = self.claim_nodes().map(|(r, _)| r.clone()).collect();
        let released: BTreeSet<Resource> = self.release_nodes().map(|(r, _)| r.clone()).collect();
        for r in &universe.resources {
            if claimed.contains(r) || released.contains(r) {
                continue;
            }
            let cl = self.fresh_id(&format!("cl_{r}"));
            self.insert_node(Node::new(
                cl.clone(),
                NodeLabel::Claim {
                    resource: r.clone(),
                },
                Time::ZERO,
            ));
            let rl = self.fresh_id(&format!("rl_{r}"));
            self.insert_node(Node::new(
                rl.clone(),
                NodeLabel::Release {
                    resource: r.clone(),
                },
                Time::ZERO,
            ));
            self.link(&cl, &rl);
        }
        self
    }

    fn fresh_id(&self, base: &str) -> NodeId {
        let mut candidate = NodeId::new(self.name.clone(), LocalId::new(base));
        let mut k = 1;
        while self.entries.contains_key(&candidate) {
            candidate = NodeId::new(self.name.clone(), LocalId::new(format!("{base}_{k}")));
            k += 1;
        }
        candidate
    }
}

/// Strict reachability (`→⁺`) over an acyclic activity.
pub struct Reachability {
    index: BTreeMap<NodeId, usize>,
    desc: Vec<Vec<u64>>,
}

impl Reachability {
    pub fn reaches(&self, from: &NodeId, to: &NodeId) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&i), Some(&j)) => self.desc[i][j / 64] & (1 << (j % 64)) != 0,
            _ => false,
        }
    }

    pub fn comparable(&self, a: &NodeId, b: &NodeId) -> bool {
        self.reaches(a, b) || self.reaches(b, a)
    }

    pub fn has_ancestor(&self, to: &NodeId) -> bool {
        self.index.keys().any(|from| self.reaches(from, to))
    }

    pub fn has_descendant(&self, from: &NodeId) -> bool {
        match self.index.get(from) {
            Some(&i) => self.desc[i].iter().any(|w| *w != 0),
            None => false,
        }
    }
}

/// Declared resources and the owning resource of every peripheral.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Universe {
    pub resources: BTreeSet<Resource>,
    pub peripherals: BTreeMap<Peripheral, Resource>,
}

impl Universe {
    pub fn owner(&self, p: &Peripheral) -> Option<&Resource> {
        self.peripherals.get(p)
    }

    fn check_label(&self, node: &Node) -> Result<(), StructureError> {
        let unknown = |kind: &'static str, name: &str| StructureError::UnknownIdentifier {
            node: node.id.clone(),
            kind,
            name: name.to_string(),
        };
        match &node.label {
            NodeLabel::Action { peripheral, .. } => {
                if !self.peripherals.contains_key(peripheral) {
                    return Err(unknown("peripheral", peripheral.as_str()));
                }
            }
            NodeLabel::Claim { resource } | NodeLabel::Release { resource } => {
                if !self.resources.contains(resource) {
                    return Err(unknown("resource", resource.as_str()));
                }
            }
            NodeLabel::Event { .. } => {}
        }
        Ok(())
    }
}

/// The complete model: activities, events, outcomes and the logistics automaton.
#[derive(Debug, Clone)]
pub struct ActivitySpec {
    pub universe: Universe,
    pub activities: BTreeMap<ActivityName, Activity>,
    pub events: BTreeSet<EventName>,
    pub outcomes: BTreeSet<OutcomeName>,
    pub gamma: BTreeSet<(EventName, OutcomeName)>,
    pub automaton: IoAutomaton,
}

impl ActivitySpec {
    pub fn activity(&self, name: &ActivityName) -> Option<&Activity> {
        self.activities.get(name)
    }

    pub fn outcomes_of<'a>(
        &'a self,
        event: &'a EventName,
    ) -> impl Iterator<Item = &'a OutcomeName> + 'a {
        self.gamma
            .iter()
            .filter(move |(e, _)| e == event)
            .map(|(_, u)| u)
    }

    /// Resource a node is drawn against: the peripheral owner for actions, and
    /// for events every resource whose claim precedes and whose release follows
    /// the node in its source activity.
    pub fn node_resources(&self, id: &NodeId) -> Vec<Resource> {
        let Some(act) = self.activities.get(&id.activity) else {
            return Vec::new();
        };
        let base = id.base();
        let Some(node) = act.node(&base) else {
            return Vec::new();
        };
        match &node.label {
            NodeLabel::Action { peripheral, .. } => self
                .universe
                .owner(peripheral)
                .cloned()
                .into_iter()
                .collect(),
            NodeLabel::Claim { resource } | NodeLabel::Release { resource } => {
                vec![resource.clone()]
            }
            NodeLabel::Event { .. } => {
                let Some(reach) = act.reachability() else {
                    return Vec::new();
                };
                let mut out = Vec::new();
                for r in &self.universe.resources {
                    let claimed_before = act
                        .claim_nodes()
                        .any(|(cr, cl)| cr == r && reach.reaches(cl, &base));
                    let released_after = act
                        .release_nodes()
                        .any(|(rr, rl)| rr == r && reach.reaches(&base, rl));
                    if claimed_before && released_after {
                        out.push(r.clone());
                    }
                }
                out
            }
        }
    }
}

/// Direct predecessors of `n`.
pub fn predecessors(a: &Activity, n: &NodeId) -> Result<BTreeSet<NodeId>, StructureError> {
    a.predecessors(n).cloned()
}

fn ids(v: &[&NodeId]) -> Vec<String> {
    v.iter().map(|id| id.to_string()).collect()
}

/// Checks acyclicity and constraints I–XI.
///
/// A cyclic activity yields only acyclicity findings, one per cyclic component;
/// the remaining constraints are defined over `→⁺` of a DAG. The empty
/// activity is well-formed.
pub fn validate_activity(
    a: &Activity,
    universe: &Universe,
) -> Result<ValidationReport, StructureError> {
    for node in a.nodes() {
        universe.check_label(node)?;
    }
    let mut report = ValidationReport::new();
    if a.is_empty() {
        return Ok(report);
    }
    let Some(reach) = a.reachability() else {
        for comp in a.cycles() {
            let names = comp.iter().map(|id| id.to_string()).collect();
            report.push(
                Rule::Activity(Constraint::Acyclic),
                names,
                "dependency cycle",
            );
        }
        return Ok(report.finish());
    };
    let nodes: Vec<&Node> = a.nodes().collect();

    // I: one peripheral, totally ordered actions.
    let mut by_peripheral: BTreeMap<&Peripheral, Vec<&NodeId>> = BTreeMap::new();
    for n in &nodes {
        if let NodeLabel::Action { peripheral, .. } = &n.label {
            by_peripheral.entry(peripheral).or_default().push(&n.id);
        }
    }
    for (p, members) in &by_peripheral {
        for (i, x) in members.iter().enumerate() {
            for y in &members[i + 1..] {
                if !reach.comparable(x, y) {
                    report.push(
                        Rule::Activity(Constraint::I),
                        ids(&[x, y]),
                        format!("unordered actions on peripheral {p}"),
                    );
                }
            }
        }
    }

    // II / III: claimed and released exactly once.
    for r in &universe.resources {
        let claims: Vec<&NodeId> = a
            .claim_nodes()
            .filter(|(cr, _)| *cr == r)
            .map(|(_, id)| id)
            .collect();
        let releases: Vec<&NodeId> = a
            .release_nodes()
            .filter(|(rr, _)| *rr == r)
            .map(|(_, id)| id)
            .collect();
        if claims.len() != 1 {
            report.push(
                Rule::Activity(Constraint::II),
                ids(&claims),
                format!("resource {r} claimed {} times", claims.len()),
            );
        }
        if releases.len() != 1 {
            report.push(
                Rule::Activity(Constraint::III),
                ids(&releases),
                format!("resource {r} released {} times", releases.len()),
            );
        }
    }

    for n in &nodes {
        match &n.label {
            NodeLabel::Action { peripheral, .. } => {
                let r = universe.owner(peripheral).expect("checked above");
                if !a
                    .claim_nodes()
                    .any(|(cr, cl)| cr == r && reach.reaches(cl, &n.id))
                {
                    report.push(
                        Rule::Activity(Constraint::IV),
                        ids(&[&n.id]),
                        format!("action not preceded by a claim of {r}"),
                    );
                }
                if !a
                    .release_nodes()
                    .any(|(rr, rl)| rr == r && reach.reaches(&n.id, rl))
                {
                    report.push(
                        Rule::Activity(Constraint::V),
                        ids(&[&n.id]),
                        format!("action not succeeded by a release of {r}"),
                    );
                }
            }
            NodeLabel::Release { resource } => {
                if !a
                    .claim_nodes()
                    .any(|(cr, cl)| cr == resource && reach.reaches(cl, &n.id))
                {
                    report.push(
                        Rule::Activity(Constraint::VI),
                        ids(&[&n.id]),
                        format!("release not preceded by a claim of {resource}"),
                    );
                }
                if reach.has_descendant(&n.id) {
                    report.push(
                        Rule::Activity(Constraint::IX),
                        ids(&[&n.id]),
                        "release has successors",
                    );
                }
            }
            NodeLabel::Claim { resource } => {
                if !a
                    .release_nodes()
                    .any(|(rr, rl)| rr == resource && reach.reaches(&n.id, rl))
                {
                    report.push(
                        Rule::Activity(Constraint::VII),
                        ids(&[&n.id]),
                        format!("claim not succeeded by a release of {resource}"),
                    );
                }
                if reach.has_ancestor(&n.id) {
                    report.push(
                        Rule::Activity(Constraint::VIII),
                        ids(&[&n.id]),
                        "claim has predecessors",
                    );
                }
            }
            NodeLabel::Event { .. } => {
                if !reach.has_ancestor(&n.id) {
                    report.push(
                        Rule::Activity(Constraint::X),
                        ids(&[&n.id]),
                        "event node has no predecessor",
                    );
                }
            }
        }
    }

    // XI: same-event nodes totally ordered.
    let mut by_event: BTreeMap<&EventName, Vec<&NodeId>> = BTreeMap::new();
    for (e, id) in a.event_nodes() {
        by_event.entry(e).or_default().push(id);
    }
    for (e, members) in &by_event {
        for (i, x) in members.iter().enumerate() {
            for y in &members[i + 1..] {
                if !reach.comparable(x, y) {
                    report.push(
                        Rule::Activity(Constraint::XI),
                        ids(&[x, y]),
                        format!("unordered emissions of event {e}"),
                    );
                }
            }
        }
    }

    let report = report.finish();
    if report.is_empty() {
        debug_assert!(a
            .nodes()
            .all(|n| n.label.claimed().is_some() || !a.entries[&n.id].preds.is_empty()));
    }
    Ok(report)
}

/// Why a model could not be validated at all.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("activity {activity}: {source}")]
    Structure {
        activity: ActivityName,
        source: StructureError,
    },
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
}

/// Every structural constraint of every activity, plus determinism,
/// completeness, non-blocking and event consistency of the automaton.
pub fn validate_spec(
    spec: &ActivitySpec,
    count_bound: u32,
) -> Result<ValidationReport, ValidationError> {
    let mut report = ValidationReport::new();
    for a in spec.activities.values() {
        report.extend(validate_activity(a, &spec.universe).map_err(|source| {
            ValidationError::Structure {
                activity: a.name().clone(),
                source,
            }
        })?);
    }
    let y = &spec.automaton;
    report.extend(validate_deterministic(y, &spec.gamma));
    report.extend(validate_complete(y, &spec.gamma));
    report.extend(validate_nonblocking(y));
    report.extend(validate_consistent(y, &spec.activities, count_bound)?);
    Ok(report.finish())
}
