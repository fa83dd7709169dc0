//! The three-layer execution engine.
//!
//! The logistics controller (LC) walks the automaton one decision path at a
//! time. The activity controller (AC) sequences the path's activities onto the
//! behavior so far and computes specified times for the new nodes. The action
//! controller (aC) dispatches every node to the plant when the clock reaches
//! its specified start plus `psi`, never earlier than the moment it received
//! the node.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{
    next_decision_path, DecisionPath, IoAutomaton, Letter, PathError, PathStep, Word,
};
use crate::ids::{ActivityName, EventName, NodeId, OutcomeName, StateName};
use crate::model::{Activity, ActivitySpec, NodeLabel};
use crate::plant::{Plant, PlantError};
use crate::sequencing::{ComposedActivity, Linking, SeqError};
use crate::time::{Time, TimeUnit};
use crate::timing::{extend_node_times, ResourceState, Schedule, ScheduleEntry, TimingError};
use crate::trace::{
    ClockMode, ExecutionTrace, LayerCosts, PathRecord, ProcessedEvent, TraceHeader, TraceRecord,
};

/// How much of the sequenced behavior the AC keeps in memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Retention {
    #[default]
    Full,
    /// Drop finished nodes nothing pending depends on.
    PruneCompleted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    /// Wall time at which execution starts, measured from engine launch.
    pub psi: Time,
    /// Bound on event-outcome processing.
    pub d_e: Time,
    /// Bound on execution delays.
    pub d_a: Time,
    pub clock: ClockMode,
    /// Per-layer processing costs charged in simulated mode.
    pub costs: LayerCosts,
    pub retention: Retention,
    pub linking: Linking,
    /// Wall length of one model unit, for the realtime clock.
    pub unit: TimeUnit,
    /// Runs that need more decision paths than this abort.
    pub max_paths: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            psi: Time::from_integer(10),
            d_e: Time::ZERO,
            d_a: Time::ZERO,
            clock: ClockMode::Simulated,
            costs: LayerCosts::default(),
            retention: Retention::Full,
            linking: Linking::ResourceMatched,
            unit: TimeUnit::default(),
            max_paths: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("execution start time must lie in the future, got {0}")]
    StartNotInFuture(Time),
    #[error("negative bound: {0}")]
    NegativeBound(&'static str),
    #[error("automaton needs exactly one initial state")]
    NoUniqueInitial,
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Sequencing(#[from] SeqError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("unknown activity {0}")]
    UnknownActivity(ActivityName),
    #[error("node {0} is not a dispatched event node")]
    NotAnEventNode(NodeId),
    #[error("outcome {outcome} is not declared for event {event}")]
    UndeclaredOutcome {
        event: EventName,
        outcome: OutcomeName,
    },
    #[error("initialization finished at {ready}, after the start time {psi}")]
    InitializationOverrun { ready: Time, psi: Time },
    #[error("stalled at state {state} waiting for an outcome of {event}")]
    Stalled { state: StateName, event: EventName },
    #[error("decision path limit {0} reached")]
    PathLimit(usize),
}

/// Logistics controller state.
#[derive(Debug, Clone)]
pub struct LcState {
    automaton: IoAutomaton,
    current: StateName,
    completed: bool,
    /// Outcomes received but not yet processed, by event and emission index.
    pending: BTreeMap<(EventName, u32), OutcomeName>,
    processed: BTreeMap<EventName, u32>,
}

/// What the LC hands to the AC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LcOutput {
    Path {
        path: DecisionPath,
        /// The event processed by the path's first transition and which
        /// instance of it.
        processing: Option<(EventName, u32)>,
    },
    Completed,
}

impl LcState {
    pub fn new(automaton: &IoAutomaton) -> Result<Self, EngineError> {
        let initial = automaton
            .initial_state()
            .ok_or(EngineError::NoUniqueInitial)?
            .clone();
        Ok(LcState {
            automaton: automaton.clone(),
            current: initial,
            completed: false,
            pending: BTreeMap::new(),
            processed: BTreeMap::new(),
        })
    }

    pub fn current(&self) -> &StateName {
        &self.current
    }

    pub fn is_completed(&self) -> bool {
        self.completed
    }

    pub fn processed_count(&self, e: &EventName) -> u32 {
        self.processed.get(e).copied().unwrap_or(0)
    }

    /// The event the current state branches on, if it is a decision state.
    pub fn awaited_event(&self) -> Option<&EventName> {
        if self.completed || !self.automaton.is_decision(&self.current) {
            return None;
        }
        self.automaton.processed_event(&self.current)
    }

    /// Buffers an outcome for later processing.
    pub fn offer(&mut self, event: EventName, instance: u32, outcome: OutcomeName) {
        self.pending.insert((event, instance), outcome);
    }

    /// The buffered outcome the current decision state needs, if it arrived.
    pub fn take_ready(&mut self) -> Option<(EventName, OutcomeName)> {
        let e = self.awaited_event()?.clone();
        let k = self.processed_count(&e) + 1;
        self.pending.remove(&(e.clone(), k)).map(|u| (e, u))
    }
}

/// Advances the LC by one decision path.
pub fn lc_advance(
    lc: &mut LcState,
    outcome: Option<(EventName, OutcomeName)>,
) -> Result<LcOutput, EngineError> {
    if lc.completed {
        return Ok(LcOutput::Completed);
    }
    let step = next_decision_path(
        &lc.automaton,
        &lc.current,
        outcome.as_ref().map(|(e, u)| (e, u)),
    )?;
    match step {
        PathStep::Completed => {
            lc.completed = true;
            Ok(LcOutput::Completed)
        }
        PathStep::Path(path) => {
            let processing = match path.processing() {
                Some((e, _)) => {
                    let k = lc.processed.entry(e.clone()).or_insert(0);
                    *k += 1;
                    Some((e.clone(), *k))
                }
                None => None,
            };
            lc.current = path.last_state().expect("paths are non-empty").clone();
            if lc.automaton.is_final(&lc.current) {
                lc.completed = true;
            }
            Ok(LcOutput::Path { path, processing })
        }
    }
}

/// Activity controller state.
#[derive(Debug, Clone)]
pub struct AcState {
    activities: BTreeMap<ActivityName, Activity>,
    gamma: BTreeSet<(EventName, OutcomeName)>,
    x0: ResourceState,
    behavior: ComposedActivity,
    word: Word,
    schedule: Schedule,
    dispatched: BTreeSet<NodeId>,
    received: Vec<(NodeId, EventName, OutcomeName)>,
}

/// Result of extending the behavior with one decision path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    /// New action and event nodes with their specified times, in dispatch order.
    pub entries: Vec<(NodeId, ScheduleEntry)>,
    /// Earliest specified start among all added nodes, resource nodes included.
    pub start: Option<Time>,
}

impl AcState {
    pub fn new(spec: &ActivitySpec, linking: Linking) -> Self {
        AcState {
            activities: spec.activities.clone(),
            gamma: spec.gamma.clone(),
            x0: ResourceState::zero(&spec.universe.resources),
            behavior: ComposedActivity::new(linking),
            word: Word::default(),
            schedule: Schedule::new(),
            dispatched: BTreeSet::new(),
            received: Vec::new(),
        }
    }

    pub fn behavior(&self) -> &ComposedActivity {
        &self.behavior
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn is_dispatched(&self, id: &NodeId) -> bool {
        self.dispatched.contains(id)
    }

    /// Outcomes received from the aC, in arrival order.
    pub fn received(&self) -> &[(NodeId, EventName, OutcomeName)] {
        &self.received
    }

    /// Drops finished nodes that nothing pending depends on. Release nodes
    /// form the resource frontier and are kept; so are emitters whose outcome
    /// is still to be processed and the latest emitter of every event.
    fn prune(&mut self, finished: &BTreeSet<NodeId>) {
        let a = self.behavior.activity();
        let mut drop = Vec::new();
        for n in a.nodes() {
            let done = match &n.label {
                NodeLabel::Release { .. } => false,
                NodeLabel::Claim { .. } => true,
                _ => finished.contains(&n.id),
            };
            if !done {
                continue;
            }
            let succs = a.successors(&n.id).expect("node present");
            let blocked = succs.iter().any(|s| {
                let label = &a.node(s).expect("successor present").label;
                label.is_resource() || !self.dispatched.contains(s)
            });
            if blocked {
                continue;
            }
            if let Some((e, k)) = self.behavior.emission_of(&n.id) {
                if k > self.behavior.processed_count(e) || k == self.behavior.emitted_count(e) {
                    continue;
                }
            }
            drop.push(n.id.clone());
        }
        for id in &drop {
            self.schedule.remove(id);
        }
        self.behavior.forget(&drop);
    }
}

/// Sequences the path's activities onto the behavior and computes specified
/// times for the new nodes only.
pub fn ac_extend(
    ac: &mut AcState,
    rho: &DecisionPath,
    ek: Option<(&EventName, u32)>,
) -> Result<Extension, EngineError> {
    let empty = Activity::empty();
    let mut added = Vec::new();
    for (i, t) in rho.transitions.iter().enumerate() {
        let a = match &t.output {
            None => &empty,
            Some(name) => ac
                .activities
                .get(name)
                .ok_or_else(|| EngineError::UnknownActivity(name.clone()))?,
        };
        let first = if i == 0 { ek } else { None };
        added.extend(ac.behavior.append_at(a, first)?);
        ac.word.push(Letter {
            input: t.input.clone(),
            output: t.output.clone(),
        });
    }
    // Release nodes of an earlier activity in the path are gone once the next
    // activity is appended.
    added.retain(|id| ac.behavior.activity().contains(id));
    extend_node_times(ac.behavior.activity(), &ac.x0, &mut ac.schedule, &added)?;
    let start = added.iter().map(|id| ac.schedule[id].start).min();
    let act = ac.behavior.activity();
    let mut entries: Vec<(NodeId, ScheduleEntry)> = added
        .into_iter()
        .filter(|id| act.node(id).is_some_and(|n| n.label.is_executable()))
        .map(|id| {
            let e = ac.schedule[&id];
            (id, e)
        })
        .collect();
    entries.sort_by(|a, b| (a.1.start, &a.0).cmp(&(b.1.start, &b.0)));
    for (id, _) in &entries {
        ac.dispatched.insert(id.clone());
    }
    Ok(Extension { entries, start })
}

/// Accepts an outcome from the aC and returns what to forward to the LC:
/// the event, the outcome and the emission index of the node.
pub fn ac_on_outcome(
    ac: &mut AcState,
    node: &NodeId,
    outcome: &OutcomeName,
) -> Result<(EventName, OutcomeName, u32), EngineError> {
    if !ac.dispatched.contains(node) {
        return Err(EngineError::NotAnEventNode(node.clone()));
    }
    let (e, k) = ac
        .behavior
        .emission_of(node)
        .ok_or_else(|| EngineError::NotAnEventNode(node.clone()))?;
    let e = e.clone();
    if !ac.gamma.contains(&(e.clone(), outcome.clone())) {
        return Err(EngineError::UndeclaredOutcome {
            event: e,
            outcome: outcome.clone(),
        });
    }
    ac.received.push((node.clone(), e.clone(), outcome.clone()));
    Ok((e, outcome.clone(), k))
}

/// Source of wall time for the dispatch loop.
pub trait Clock {
    fn now(&mut self) -> Time;
    /// Returns once the clock reads at least `t`.
    fn wait_until(&mut self, t: Time);
}

/// Jumps straight to the next instant of interest.
#[derive(Debug, Default)]
pub struct SimulatedClock {
    now: Time,
}

impl Clock for SimulatedClock {
    fn now(&mut self) -> Time {
        self.now
    }

    fn wait_until(&mut self, t: Time) {
        self.now = self.now.max(t);
    }
}

/// Host monotonic clock, measured from construction.
#[derive(Debug)]
pub struct RealtimeClock {
    epoch: Instant,
    unit: TimeUnit,
}

impl RealtimeClock {
    pub fn new(unit: TimeUnit) -> Self {
        RealtimeClock {
            epoch: Instant::now(),
            unit,
        }
    }
}

impl Clock for RealtimeClock {
    fn now(&mut self) -> Time {
        Time::from_duration(self.epoch.elapsed(), self.unit)
    }

    /// Sleeps until shortly before `t`, then spins; host sleeps overshoot by
    /// far more than typical execution-delay bounds.
    fn wait_until(&mut self, t: Time) {
        const SPIN: Duration = Duration::from_micros(300);
        let target = self.epoch + t.to_duration(self.unit);
        let now = Instant::now();
        if target > now + SPIN {
            std::thread::sleep(target - now - SPIN);
        }
        while Instant::now() < target {
            std::hint::spin_loop();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    /// Completion or outcome becomes visible. Ordered before dispatches at
    /// the same instant.
    Observe(NodeId),
    Dispatch(NodeId),
}

struct Runner<'a, C: Clock> {
    cfg: &'a EngineConfig,
    plant: &'a mut dyn Plant,
    clock: C,
    lc: LcState,
    ac: AcState,
    queue: BTreeSet<(Time, Pending)>,
    trace: ExecutionTrace,
    index: BTreeMap<NodeId, usize>,
    finished: BTreeSet<NodeId>,
    event_obs: BTreeMap<NodeId, OutcomeName>,
}

/// Runs the model against the plant until the automaton completes.
///
/// Configuration problems are errors. Failures during the run (plant errors,
/// automaton mismatches, initialization past `psi`) end the run early and are
/// reported in [`ExecutionTrace::aborted`] alongside everything recorded so far.
pub fn ac_run(
    spec: &ActivitySpec,
    plant: &mut dyn Plant,
    cfg: &EngineConfig,
) -> Result<ExecutionTrace, EngineError> {
    if cfg.psi <= Time::ZERO {
        return Err(EngineError::StartNotInFuture(cfg.psi));
    }
    for (name, v) in [("d_a", cfg.d_a), ("d_e", cfg.d_e)] {
        if v.is_negative() {
            return Err(EngineError::NegativeBound(name));
        }
    }
    let lc = LcState::new(&spec.automaton)?;
    match cfg.clock {
        ClockMode::Simulated => run_with(spec, plant, cfg, lc, SimulatedClock::default()),
        ClockMode::Realtime => run_with(spec, plant, cfg, lc, RealtimeClock::new(cfg.unit)),
    }
}

fn run_with<C: Clock>(
    spec: &ActivitySpec,
    plant: &mut dyn Plant,
    cfg: &EngineConfig,
    lc: LcState,
    clock: C,
) -> Result<ExecutionTrace, EngineError> {
    let trace = ExecutionTrace::new(TraceHeader {
        psi: cfg.psi,
        d_a: cfg.d_a,
        d_e: cfg.d_e,
        clock: cfg.clock,
        linking: cfg.linking,
        seed: None,
    });
    let mut r = Runner {
        cfg,
        plant,
        clock,
        lc,
        ac: AcState::new(spec, cfg.linking),
        queue: BTreeSet::new(),
        trace,
        index: BTreeMap::new(),
        finished: BTreeSet::new(),
        event_obs: BTreeMap::new(),
    };
    if let Err(e) = r.run() {
        r.trace.aborted = Some(e.to_string());
    }
    r.trace.final_state = Some(r.lc.current().clone());
    Ok(r.trace)
}

impl<C: Clock> Runner<'_, C> {
    fn simulated(&self) -> bool {
        self.cfg.clock == ClockMode::Simulated
    }

    fn run(&mut self) -> Result<(), EngineError> {
        let t0 = self.clock.now();
        let ready = self.advance(None, t0, Time::ZERO)?;
        if let Some(ready) = ready {
            if ready > self.cfg.psi {
                return Err(EngineError::InitializationOverrun {
                    ready,
                    psi: self.cfg.psi,
                });
            }
        }
        while let Some((t, item)) = self.queue.pop_first() {
            self.clock.wait_until(t);
            match item {
                Pending::Dispatch(id) => self.dispatch(&id)?,
                Pending::Observe(id) => self.observe(&id, t)?,
            }
        }
        if !self.lc.is_completed() {
            let event = self
                .lc
                .awaited_event()
                .cloned()
                .unwrap_or_else(|| EventName::new("?"));
            return Err(EngineError::Stalled {
                state: self.lc.current().clone(),
                event,
            });
        }
        self.trace.completed = true;
        Ok(())
    }

    /// Runs LC, AC and aC for one decision path. Returns the readiness time,
    /// or `None` when the automaton completed.
    fn advance(
        &mut self,
        outcome: Option<(EventName, OutcomeName, u32)>,
        observed: Time,
        d_event: Time,
    ) -> Result<Option<Time>, EngineError> {
        if self.trace.paths.len() >= self.cfg.max_paths {
            return Err(EngineError::PathLimit(self.cfg.max_paths));
        }
        let from = self.lc.current().clone();
        let lc_in = outcome.as_ref().map(|(e, u, _)| (e.clone(), u.clone()));

        let t_lc = Instant::now();
        let out = lc_advance(&mut self.lc, lc_in)?;
        let lc_cost = t_lc.elapsed();
        let LcOutput::Path { path, processing } = out else {
            return Ok(None);
        };

        let t_ac = Instant::now();
        let ext = ac_extend(
            &mut self.ac,
            &path,
            processing.as_ref().map(|(e, k)| (e, *k)),
        )?;
        let ac_cost = t_ac.elapsed();

        let t_prep = Instant::now();
        let nodes = ext.entries.len();
        let mut staged: Vec<(Time, NodeId)> = ext
            .entries
            .iter()
            .map(|(id, e)| (e.start + self.cfg.psi, id.clone()))
            .collect();
        staged.sort();
        let prep_cost = t_prep.elapsed();

        let costs = if self.simulated() {
            LayerCosts {
                d_event,
                ..self.cfg.costs
            }
        } else {
            let u = self.cfg.unit;
            LayerCosts {
                d_event,
                d_lc: Time::from_duration(lc_cost, u),
                d_ac: Time::from_duration(ac_cost, u),
                d_ac_prep: Time::from_duration(prep_cost, u),
            }
        };
        let ready = if self.simulated() {
            observed + costs.d_event + costs.d_lc + costs.d_ac + costs.d_ac_prep
        } else {
            self.clock.now()
        };

        let index = self.trace.paths.len() + 1;
        for (intended, id) in staged {
            let entry = ext
                .entries
                .iter()
                .find(|(n, _)| n == &id)
                .map(|(_, e)| *e)
                .expect("staged from entries");
            let label = self
                .ac
                .behavior()
                .activity()
                .node(&id)
                .expect("new node")
                .label
                .clone();
            self.index.insert(id.clone(), self.trace.records.len());
            self.trace.records.push(TraceRecord {
                node: id.clone(),
                label,
                s: entry.start,
                c: entry.completion,
                issued: Time::ZERO,
                s_exec: Time::ZERO,
                c_exec: Time::ZERO,
                observed: Time::ZERO,
                delta: Time::ZERO,
                path: index,
                deadline_violated: false,
                outcome: None,
            });
            self.queue
                .insert((intended.max(ready), Pending::Dispatch(id)));
        }
        let processing = match (&outcome, processing) {
            (Some((e, u, _)), Some((_, k))) => Some(ProcessedEvent {
                event: e.clone(),
                outcome: u.clone(),
                instance: k,
            }),
            _ => None,
        };
        if let Some(p) = &processing {
            self.trace.outcomes.push(p.clone());
        }
        self.trace.paths.push(PathRecord {
            index,
            from,
            to: self.lc.current().clone(),
            processing,
            activities: path.activities(),
            nodes,
            ready,
            start: ext.start,
            costs,
            retained: self.ac.behavior().activity().len(),
        });
        Ok(Some(ready))
    }

    fn dispatch(&mut self, id: &NodeId) -> Result<(), EngineError> {
        let issue = self.clock.now();
        let i = self.index[id];
        let label = self.trace.records[i].label.clone();
        let (start, completion, observed) = match &label {
            NodeLabel::Action { action, peripheral } => {
                let r = self.plant.start_action(id, action, peripheral, issue)?;
                (r.start, r.completion, r.observed)
            }
            NodeLabel::Event { event } => {
                let r = self.plant.sample_event(id, event, issue)?;
                self.event_obs.insert(id.clone(), r.outcome);
                (r.start, r.completion, r.observed)
            }
            _ => unreachable!("resource nodes are never dispatched"),
        };
        let psi = self.cfg.psi;
        let rec = &mut self.trace.records[i];
        rec.issued = issue;
        rec.s_exec = start;
        rec.c_exec = completion;
        rec.observed = observed;
        rec.delta = start - rec.s - psi;
        self.queue.insert((observed, Pending::Observe(id.clone())));
        Ok(())
    }

    fn observe(&mut self, id: &NodeId, now: Time) -> Result<(), EngineError> {
        let i = self.index[id];
        let psi = self.cfg.psi;
        {
            let rec = &mut self.trace.records[i];
            if rec.c_exec > rec.c + psi {
                rec.deadline_violated = true;
            }
        }
        self.finished.insert(id.clone());
        if let Some(u) = self.event_obs.remove(id) {
            self.trace.records[i].outcome = Some(u.clone());
            let (e, u, k) = ac_on_outcome(&mut self.ac, id, &u)?;
            self.lc.offer(e, k, u);
            let d_event = if self.simulated() {
                self.cfg.costs.d_event
            } else {
                self.clock.now() - now
            };
            while let Some((e, u)) = self.lc.take_ready() {
                let k = self.lc.processed_count(&e) + 1;
                self.advance(Some((e, u, k)), now, d_event)?;
            }
        }
        if self.cfg.retention == Retention::PruneCompleted {
            self.ac.prune(&self.finished);
            let present = self.ac.behavior().activity();
            self.finished.retain(|n| present.contains(n));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::plant::SimPlant;

    fn t(v: i64) -> Time {
        Time::from_integer(v)
    }

    #[test]
    fn lc_walks_the_running_example() {
        let spec = fixtures::running_example();
        let mut lc = LcState::new(&spec.automaton).unwrap();
        let LcOutput::Path { path, processing } = lc_advance(&mut lc, None).unwrap() else {
            panic!()
        };
        assert_eq!(path.len(), 2);
        assert_eq!(processing, None);
        assert_eq!(lc.current().as_str(), "q2");
        let LcOutput::Path { path, processing } =
            lc_advance(&mut lc, Some(("e".into(), "u1".into()))).unwrap()
        else {
            panic!()
        };
        assert_eq!(path.len(), 3);
        assert_eq!(processing, Some(("e".into(), 1)));
        let LcOutput::Path { processing, .. } =
            lc_advance(&mut lc, Some(("e".into(), "u2".into()))).unwrap()
        else {
            panic!()
        };
        assert_eq!(processing, Some(("e".into(), 2)));
        assert_eq!(lc_advance(&mut lc, None).unwrap(), LcOutput::Completed);
        assert!(matches!(
            LcState::new(&spec.automaton)
                .and_then(|mut lc| lc_advance(&mut lc, Some(("e".into(), "u9".into())))),
            Err(EngineError::Path(_))
        ));
    }

    #[test]
    fn ac_extends_with_new_nodes_only() {
        let spec = fixtures::running_example();
        let mut lc = LcState::new(&spec.automaton).unwrap();
        let mut ac = AcState::new(&spec, Linking::ResourceMatched);
        let LcOutput::Path { path, .. } = lc_advance(&mut lc, None).unwrap() else {
            panic!()
        };
        let ext = ac_extend(&mut ac, &path, None).unwrap();
        let got: Vec<(String, Time, Time)> = ext
            .entries
            .iter()
            .map(|(id, e)| (id.base().to_string(), e.start, e.completion))
            .collect();
        assert_eq!(
            got,
            vec![
                ("Act1.n2".into(), t(0), t(1)),
                ("Act2.n4".into(), t(0), t(2)),
                ("Act1.n1".into(), t(1), t(2)),
                ("Act2.n3".into(), t(2), t(3)),
                ("Act2.n5".into(), t(3), t(4)),
            ]
        );
        assert_eq!(ext.start, Some(t(0)));

        let n5 = ext.entries[4].0.clone();
        let fwd = ac_on_outcome(&mut ac, &n5, &"u2".into()).unwrap();
        assert_eq!(fwd, ("e".into(), "u2".into(), 1));
        let n1 = ext.entries[2].0.clone();
        assert_eq!(
            ac_on_outcome(&mut ac, &n1, &"u1".into()).unwrap_err(),
            EngineError::NotAnEventNode(n1)
        );

        let LcOutput::Path { path, processing } =
            lc_advance(&mut lc, Some(("e".into(), "u2".into()))).unwrap()
        else {
            panic!()
        };
        let ext = ac_extend(&mut ac, &path, processing.as_ref().map(|(e, k)| (e, *k))).unwrap();
        assert_eq!(ext.entries.len(), 1);
        assert_eq!(ext.entries[0].0.base().to_string(), "Act4.n7");
        assert_eq!(
            (ext.entries[0].1.start, ext.entries[0].1.completion),
            (t(4), t(6))
        );
        assert_eq!(ext.start, Some(t(4)));
    }

    #[test]
    fn zero_jitter_run_follows_schedule() {
        let spec = fixtures::running_example();
        let cfg = EngineConfig {
            psi: t(10),
            ..EngineConfig::default()
        };
        let mut plant = SimPlant::new(fixtures::exact_plant().with_script(&["u2".into()])).unwrap();
        let trace = ac_run(&spec, &mut plant, &cfg).unwrap();
        assert!(trace.conforming(), "{:?}", trace.aborted);
        let starts: BTreeMap<String, Time> = trace
            .records
            .iter()
            .map(|r| (r.node.base().to_string(), r.s_exec))
            .collect();
        let expect = [
            ("Act2.n4", 10),
            ("Act1.n2", 10),
            ("Act1.n1", 11),
            ("Act2.n3", 12),
            ("Act2.n5", 13),
            ("Act4.n7", 14),
        ];
        assert_eq!(starts.len(), expect.len());
        for (n, v) in expect {
            assert_eq!(starts[n], t(v), "{n}");
        }
        assert_eq!(trace.final_state.as_ref().map(|s| s.as_str()), Some("q3"));
    }

    #[test]
    fn empty_only_path_completes_immediately() {
        let mut spec = fixtures::running_example();
        spec.automaton = IoAutomaton {
            states: ["a".into(), "b".into()].into(),
            initial: ["a".into()].into(),
            finals: ["b".into()].into(),
            transitions: vec![crate::automaton::Transition {
                from: "a".into(),
                input: crate::automaton::Input::Silent,
                output: None,
                to: "b".into(),
            }],
        };
        let mut plant = SimPlant::new(fixtures::exact_plant()).unwrap();
        let trace = ac_run(&spec, &mut plant, &EngineConfig::default()).unwrap();
        assert!(trace.records.is_empty());
        assert!(trace.completed);
        assert_eq!(trace.paths.len(), 1);
    }

    #[test]
    fn start_must_be_in_future() {
        let spec = fixtures::running_example();
        let mut plant = SimPlant::new(fixtures::exact_plant()).unwrap();
        let cfg = EngineConfig {
            psi: Time::ZERO,
            ..EngineConfig::default()
        };
        assert_eq!(
            ac_run(&spec, &mut plant, &cfg).unwrap_err(),
            EngineError::StartNotInFuture(Time::ZERO)
        );
        let cfg = EngineConfig {
            psi: t(1),
            costs: LayerCosts {
                d_lc: t(1),
                d_ac: t(1),
                ..LayerCosts::default()
            },
            ..EngineConfig::default()
        };
        let trace = ac_run(&spec, &mut plant, &cfg).unwrap();
        assert!(trace.aborted.as_deref().unwrap().contains("initialization"));
        assert!(trace.records.is_empty() || !trace.completed);
    }

    #[test]
    fn pruning_keeps_results_and_bounds_memory() {
        let spec = fixtures::running_example();
        let script: Vec<OutcomeName> = std::iter::repeat_n("u1".into(), 30)
            .chain(["u2".into()])
            .collect();
        let full_cfg = fixtures::engine_config();
        let prune_cfg = EngineConfig {
            retention: Retention::PruneCompleted,
            ..full_cfg.clone()
        };
        let run = |cfg: &EngineConfig| {
            let mut p = SimPlant::new(fixtures::conforming_plant().with_script(&script)).unwrap();
            ac_run(&spec, &mut p, cfg).unwrap()
        };
        let a = run(&full_cfg);
        let b = run(&prune_cfg);
        assert!(a.conforming() && b.conforming());
        assert_eq!(a.records, b.records);
        assert_eq!(a.outcomes, b.outcomes);
        let peak = |t: &ExecutionTrace| t.paths.iter().map(|p| p.retained).max().unwrap();
        assert!(peak(&a) > 150, "{} {}", peak(&a), peak(&b));
        assert!(peak(&b) < 40, "{}", peak(&b));
    }
}
