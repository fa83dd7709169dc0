//! Post-hoc checks on recorded executions, and Gantt export.
//!
//! Everything here reads an [`ExecutionTrace`] and the model; nothing depends
//! on engine internals. The behavior check rebuilds the sequenced activity
//! from the processed outcomes alone, so it also catches engine bugs in
//! sequencing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::automaton::{accepts, next_decision_path, PathStep, Word};
use crate::ids::{EventName, NodeId, OutcomeName, Resource, StateName};
use crate::model::{Activity, ActivitySpec};
use crate::report::{Rule, ValidationReport};
use crate::sequencing::{behavior_activity, processed_events, ComposedActivity};
use crate::time::Time;
use crate::trace::{ExecutionTrace, TraceRecord};

/// Records the engine actually handed to the plant. An aborted run can leave
/// records that were scheduled but never issued; `psi > 0` means every real
/// issue time is positive.
fn executed(trace: &ExecutionTrace) -> impl Iterator<Item = &TraceRecord> {
    trace.records.iter().filter(|r| !r.issued.is_zero())
}

/// Every executed node started within `[S + psi, S + psi + d_a]` and
/// completed by `C + psi`.
pub fn check_timing_relation(trace: &ExecutionTrace, d_a: Time) -> ValidationReport {
    let psi = trace.header.psi;
    let mut report = ValidationReport::new();
    for r in executed(trace) {
        let lo = r.s + psi;
        if r.s_exec < lo {
            report.push(
                Rule::StartedEarly,
                vec![r.node.to_string()],
                format!("started at {}, {} before {lo}", r.s_exec, lo - r.s_exec),
            );
        }
        let hi = lo + d_a;
        if r.s_exec > hi {
            report.push(
                Rule::StartedLate,
                vec![r.node.to_string()],
                format!("started at {}, {} after {hi}", r.s_exec, r.s_exec - hi),
            );
        }
        let due = r.c + psi;
        if r.c_exec > due {
            report.push(
                Rule::LateCompletion,
                vec![r.node.to_string()],
                format!("completed at {}, {} after {due}", r.c_exec, r.c_exec - due),
            );
        }
    }
    report.finish()
}

/// The word the automaton produces when fed the processed outcomes in order.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub word: Word,
    pub state: StateName,
    /// A final state was reached.
    pub complete: bool,
    /// Why the walk stopped early, if it did.
    pub error: Option<String>,
    /// Outcomes left over after the walk stopped.
    pub unused: usize,
}

pub fn reconstruct_word(
    spec: &ActivitySpec,
    outcomes: &[(EventName, OutcomeName)],
) -> Reconstruction {
    let y = &spec.automaton;
    let Some(mut cur) = y.initial_state().cloned() else {
        return Reconstruction {
            word: Word::default(),
            state: StateName::new("?"),
            complete: false,
            error: Some("automaton has no unique initial state".into()),
            unused: outcomes.len(),
        };
    };
    let mut word = Word::default();
    let mut next = outcomes.iter();
    let mut error = None;
    loop {
        if y.is_final(&cur) {
            break;
        }
        let chosen = if y.is_decision(&cur) {
            match next.next() {
                Some((e, u)) => Some((e, u)),
                None => break,
            }
        } else {
            None
        };
        match next_decision_path(y, &cur, chosen) {
            Ok(PathStep::Path(p)) => {
                for l in p.letters() {
                    word.push(l);
                }
                cur = p.last_state().expect("paths are non-empty").clone();
            }
            Ok(PathStep::Completed) => break,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    Reconstruction {
        complete: y.is_final(&cur),
        word,
        state: cur,
        error,
        unused: next.len(),
    }
}

/// Rebuilds the behavior from the processed outcomes and compares it with
/// what was executed: node sets, outcome order, dependency order and
/// acceptance.
pub fn check_behavior_preservation(
    trace: &ExecutionTrace,
    spec: &ActivitySpec,
) -> ValidationReport {
    let mut report = ValidationReport::new();
    let pairs = trace.processed_pairs();
    let rec = reconstruct_word(spec, &pairs);
    if let Some(err) = &rec.error {
        report.push(Rule::NotAccepted, vec![rec.state.to_string()], err.clone());
    }
    if rec.unused > 0 {
        report.push(
            Rule::NotAccepted,
            vec![rec.state.to_string()],
            format!(
                "{} processed outcomes left after the automaton stopped",
                rec.unused
            ),
        );
    }
    if !rec.complete {
        report.push(
            Rule::IncompleteBehavior,
            vec![rec.state.to_string()],
            "execution ended before a final state",
        );
    } else if !accepts(&spec.automaton, &rec.word) {
        report.push(
            Rule::NotAccepted,
            vec![],
            "reconstructed word is not accepted",
        );
    }

    let behavior = match behavior_activity(&spec.activities, &rec.word, trace.header.linking) {
        Ok(b) => b,
        Err(e) => {
            report.push(
                Rule::NotAccepted,
                vec![],
                format!("behavior cannot be sequenced: {e}"),
            );
            return report.finish();
        }
    };
    let act = behavior.activity();

    // Node sets.
    let mut seen: BTreeMap<&NodeId, &TraceRecord> = BTreeMap::new();
    for r in executed(trace) {
        if seen.insert(&r.node, r).is_some() {
            report.push(
                Rule::ExtraNode,
                vec![r.node.to_string()],
                "executed more than once",
            );
        }
        match act.node(&r.node) {
            Some(n) if n.label == r.label => {}
            Some(_) => report.push(
                Rule::ExtraNode,
                vec![r.node.to_string()],
                "label differs from the behavior",
            ),
            None => report.push(
                Rule::ExtraNode,
                vec![r.node.to_string()],
                "not part of the behavior",
            ),
        }
    }
    if rec.complete {
        for n in act.nodes().filter(|n| n.label.is_executable()) {
            if !seen.contains_key(&n.id) {
                report.push(
                    Rule::MissingNode,
                    vec![n.id.to_string()],
                    format!("{} never executed", n.label),
                );
            }
        }
    }

    // Processed outcomes against the outcomes the emitting nodes produced.
    let expected = processed_events(&rec.word);
    if expected != pairs[..expected.len().min(pairs.len())] {
        report.push(
            Rule::OutcomeMismatch,
            vec![],
            "processed outcomes differ from the word's inputs",
        );
    }
    check_outcome_sources(trace, &behavior, &seen, &mut report);

    // Dependency order through resource-node chains.
    for (id, r1) in &seen {
        if !act.contains(id) {
            continue;
        }
        for succ in executable_successors(act, id) {
            if let Some(r2) = seen.get(&succ) {
                if r1.c_exec > r2.s_exec {
                    report.push(
                        Rule::DependencyOrder,
                        vec![id.to_string(), succ.to_string()],
                        format!(
                            "{succ} started at {} before {id} completed at {}",
                            r2.s_exec, r1.c_exec
                        ),
                    );
                }
            }
        }
    }
    report.finish()
}

fn check_outcome_sources(
    trace: &ExecutionTrace,
    behavior: &ComposedActivity,
    seen: &BTreeMap<&NodeId, &TraceRecord>,
    report: &mut ValidationReport,
) {
    let mut count: BTreeMap<&EventName, u32> = BTreeMap::new();
    for p in &trace.outcomes {
        let k = count.entry(&p.event).or_insert(0);
        *k += 1;
        if p.instance != *k {
            report.push(
                Rule::OutcomeMismatch,
                vec![p.event.to_string()],
                format!(
                    "outcome processed as instance {} but expected {}",
                    p.instance, k
                ),
            );
        }
        let Some(emitter) = behavior.kth_emitter(&p.event, p.instance) else {
            report.push(
                Rule::OutcomeMismatch,
                vec![p.event.to_string()],
                format!("instance {} of {} was never emitted", p.instance, p.event),
            );
            continue;
        };
        match seen.get(emitter).and_then(|r| r.outcome.as_ref()) {
            Some(u) if u == &p.outcome => {}
            other => report.push(
                Rule::OutcomeMismatch,
                vec![emitter.to_string()],
                format!(
                    "processed {} but the node produced {}",
                    p.outcome,
                    other.map(|u| u.as_str()).unwrap_or("nothing")
                ),
            ),
        }
    }
}

/// Action and event nodes reachable from `id` through resource nodes only.
fn executable_successors(a: &Activity, id: &NodeId) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack: Vec<&NodeId> = a
        .successors(id)
        .map(|s| s.iter().collect())
        .unwrap_or_default();
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        let node = a.node(n).expect("successor present");
        if node.label.is_executable() {
            out.insert(n.clone());
        } else {
            stack.extend(a.successors(n).expect("node present"));
        }
    }
    out
}

/// Every decision path after the first was in the action controller's hands
/// no later than its earliest node was due.
pub fn check_ready_before_start(trace: &ExecutionTrace) -> ValidationReport {
    let psi = trace.header.psi;
    let mut report = ValidationReport::new();
    for p in trace.paths.iter().skip(1) {
        let Some(start) = p.start else { continue };
        if p.ready > start + psi {
            report.push(
                Rule::ReadyAfterStart,
                vec![format!("path{}", p.index)],
                format!("ready at {} but first node due at {}", p.ready, start + psi),
            );
        }
    }
    report.finish()
}

/// Timing relation, behavior preservation and path readiness together.
pub fn verify_trace(trace: &ExecutionTrace, spec: &ActivitySpec) -> ValidationReport {
    let mut r = check_timing_relation(trace, trace.header.d_a);
    r.extend(check_behavior_preservation(trace, spec));
    r.extend(check_ready_before_start(trace));
    r.finish()
}

/// Distribution of execution delays over one or more runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub runs: usize,
    pub nodes: usize,
    pub min: Option<Time>,
    pub max: Option<Time>,
    pub mean: f64,
    pub p50: Option<Time>,
    pub p99: Option<Time>,
}

impl DelaySummary {
    pub fn of<'a>(traces: impl IntoIterator<Item = &'a ExecutionTrace>) -> Self {
        let mut runs = 0;
        let mut deltas: Vec<Time> = Vec::new();
        for t in traces {
            runs += 1;
            deltas.extend(executed(t).map(|r| r.delta));
        }
        deltas.sort();
        let n = deltas.len();
        let pick =
            |q: f64| (n > 0).then(|| deltas[((q * (n - 1) as f64).round() as usize).min(n - 1)]);
        DelaySummary {
            runs,
            nodes: n,
            min: deltas.first().copied(),
            max: deltas.last().copied(),
            mean: if n == 0 {
                0.0
            } else {
                deltas.iter().map(Time::to_f64).sum::<f64>() / n as f64
            },
            p50: pick(0.5),
            p99: pick(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub bound: Time,
    pub summary: DelaySummary,
    pub report: ValidationReport,
}

/// Every execution delay stays within the time-criticality bound `b`.
pub fn check_criticality<'a>(
    traces: impl IntoIterator<Item = &'a ExecutionTrace>,
    b: Time,
) -> CriticalityReport {
    let traces: Vec<&ExecutionTrace> = traces.into_iter().collect();
    let mut report = ValidationReport::new();
    for t in &traces {
        for r in executed(t).filter(|r| r.delta > b) {
            report.push(
                Rule::Criticality,
                vec![r.node.to_string()],
                format!("delay {} exceeds bound {b}", r.delta),
            );
        }
    }
    CriticalityReport {
        bound: b,
        summary: DelaySummary::of(traces.iter().copied()),
        report: report.finish(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanttBar {
    pub node: NodeId,
    pub label: String,
    /// `[S + psi, C + psi]`.
    pub specified: (Time, Time),
    /// `[S', C']`.
    pub executed: (Time, Time),
    pub deadline_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanttRow {
    pub resource: Resource,
    pub bars: Vec<GanttBar>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanttDocument {
    pub psi: Time,
    pub rows: Vec<GanttRow>,
}

/// One row per resource in use, bars ordered by specified start then node id.
/// Event nodes appear on every resource held across them.
pub fn export_gantt(trace: &ExecutionTrace, spec: &ActivitySpec) -> GanttDocument {
    let psi = trace.header.psi;
    let mut rows: BTreeMap<Resource, Vec<GanttBar>> = BTreeMap::new();
    for r in executed(trace) {
        for res in spec.node_resources(&r.node) {
            rows.entry(res).or_default().push(GanttBar {
                node: r.node.clone(),
                label: r.label.to_string(),
                specified: (r.s + psi, r.c + psi),
                executed: (r.s_exec, r.c_exec),
                deadline_violated: r.deadline_violated,
            });
        }
    }
    GanttDocument {
        psi,
        rows: rows
            .into_iter()
            .map(|(resource, mut bars)| {
                bars.sort_by(|a, b| (a.specified.0, &a.node).cmp(&(b.specified.0, &b.node)));
                GanttRow { resource, bars }
            })
            .collect(),
    }
}

impl GanttDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gantt document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Specified intervals drawn solid in the upper half of each row, executed
    /// intervals hatched in the lower half.
    pub fn to_svg(&self) -> String {
        const ROW: f64 = 40.0;
        const LEFT: f64 = 60.0;
        const WIDTH: f64 = 900.0;
        let end = self
            .rows
            .iter()
            .flat_map(|r| &r.bars)
            .map(|b| b.specified.1.max(b.executed.1))
            .max()
            .unwrap_or(self.psi);
        let span = (end.to_f64()).max(1e-9);
        let x = |t: Time| LEFT + t.to_f64() / span * WIDTH;
        let height = ROW * self.rows.len() as f64 + 30.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="monospace" font-size="10">"#,
            LEFT + WIDTH + 20.0
        );
        s.push_str(
            r##"<defs><pattern id="hatch" width="4" height="4" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="4" stroke="#555" stroke-width="1.5"/></pattern></defs>"##,
        );
        s.push('\n');
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="0" x2="{0:.2}" y2="{1}" stroke="#c00" stroke-dasharray="3,3"/>"##,
            x(self.psi),
            height - 20.0
        );
        for (i, row) in self.rows.iter().enumerate() {
            let y = i as f64 * ROW + 5.0;
            let _ = writeln!(
                s,
                r#"<text x="4" y="{:.2}">{}</text>"#,
                y + ROW / 2.0,
                row.resource
            );
            for b in &row.bars {
                let (s0, s1) = (x(b.specified.0), x(b.specified.1));
                let (e0, e1) = (x(b.executed.0), x(b.executed.1));
                let stroke = if b.deadline_violated { "#c00" } else { "#000" };
                let _ = writeln!(
                    s,
                    r##"<rect x="{s0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#8ab" stroke="{stroke}"><title>{} {}</title></rect>"##,
                    (s1 - s0).max(0.5),
                    ROW / 2.0 - 3.0,
                    b.node,
                    b.label
                );
                let _ = writeln!(
                    s,
                    r##"<rect x="{e0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="url(#hatch)" stroke="{stroke}"/>"##,
                    y + ROW / 2.0 - 2.0,
                    (e1 - e0).max(0.5),
                    ROW / 2.0 - 3.0
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="{:.2}">0</text><text x="{:.2}" y="{:.2}" text-anchor="end">{end}</text>"#,
            height - 5.0,
            LEFT + WIDTH,
            height - 5.0
        );
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ac_run, EngineConfig};
    use crate::fixtures;
    use crate::plant::{ActionBound, SimPlant};

    fn run(
        script: &[&str],
        cfg: &EngineConfig,
        plant: crate::plant::PlantConfig,
    ) -> ExecutionTrace {
        let spec = fixtures::running_example();
        let script: Vec<OutcomeName> = script.iter().map(OutcomeName::new).collect();
        let mut p = SimPlant::new(plant.with_script(&script)).unwrap();
        ac_run(&spec, &mut p, cfg).unwrap()
    }

    #[test]
    fn exact_run_passes_everything() {
        let spec = fixtures::running_example();
        let cfg = EngineConfig::default();
        let t = run(&["u2"], &cfg, fixtures::exact_plant());
        assert!(
            verify_trace(&t, &spec).is_empty(),
            "{}",
            verify_trace(&t, &spec).to_text()
        );
        let rec = reconstruct_word(&spec, &t.processed_pairs());
        assert!(rec.complete);
        assert_eq!(rec.word.len(), 3);
    }

    #[test]
    fn six_letter_word_for_two_outcomes() {
        let spec = fixtures::running_example();
        let t = run(
            &["u1", "u2"],
            &fixtures::engine_config(),
            fixtures::conforming_plant(),
        );
        assert!(
            verify_trace(&t, &spec).is_empty(),
            "{}",
            verify_trace(&t, &spec).to_text()
        );
        let rec = reconstruct_word(&spec, &t.processed_pairs());
        let acts: Vec<&str> = rec
            .word
            .letters()
            .iter()
            .map(|l| l.output.as_ref().unwrap().as_str())
            .collect();
        assert_eq!(acts, ["Act1", "Act2", "Act3", "Act1", "Act2", "Act4"]);
        assert_eq!(
            t.processed_pairs(),
            vec![("e".into(), "u1".into()), ("e".into(), "u2".into())]
        );
    }

    #[test]
    fn overrun_is_flagged_at_that_node_only() {
        let mut plant = fixtures::exact_plant();
        let c: &mut ActionBound = plant
            .actions
            .iter_mut()
            .find(|b| b.action.as_str() == "c")
            .unwrap();
        c.overrun = Time::from_ratio(1, 2);
        let t = run(&["u2"], &EngineConfig::default(), plant);
        let r = check_timing_relation(&t, t.header.d_a);
        assert_eq!(r.len(), 1, "{}", r.to_text());
        assert_eq!(r.violations[0].rule, Rule::LateCompletion);
        assert_eq!(r.violations[0].subjects, vec!["Act2.n3#2".to_string()]);
    }

    #[test]
    fn deleted_record_is_missing() {
        let spec = fixtures::running_example();
        let mut t = run(&["u2"], &EngineConfig::default(), fixtures::exact_plant());
        let gone = t.records.remove(2).node;
        let r = check_behavior_preservation(&t, &spec);
        assert_eq!(r.len(), 1, "{}", r.to_text());
        assert_eq!(r.violations[0].rule, Rule::MissingNode);
        assert_eq!(r.violations[0].subjects, vec![gone.to_string()]);
    }

    #[test]
    fn swapped_outcome_and_truncation() {
        let spec = fixtures::running_example();
        let mut t = run(&["u2"], &EngineConfig::default(), fixtures::exact_plant());
        t.outcomes[0].outcome = "u1".into();
        let r = check_behavior_preservation(&t, &spec);
        assert!(r.has(Rule::OutcomeMismatch));
        assert!(r.has(Rule::IncompleteBehavior));

        let mut t = run(&["u2"], &EngineConfig::default(), fixtures::exact_plant());
        t.outcomes.clear();
        let r = check_behavior_preservation(&t, &spec);
        assert!(r.has(Rule::IncompleteBehavior));
        assert!(r.has(Rule::ExtraNode));
    }

    #[test]
    fn criticality_bound() {
        let mut cfg = fixtures::engine_config();
        cfg.d_a = Time::from_ratio(16, 100);
        let a = run(
            &["u1", "u2"],
            &cfg,
            fixtures::conforming_plant().with_seed(1),
        );
        let b = run(&["u2"], &cfg, fixtures::conforming_plant().with_seed(2));
        let ok = check_criticality([&a, &b], Time::from_integer(2));
        assert!(ok.report.is_empty());
        let max = a.max_delta().max(b.max_delta());
        assert_eq!(ok.summary.max, max);
        assert_eq!(ok.summary.nodes, a.records.len() + b.records.len());
        assert!(max.unwrap() > Time::ZERO);
        assert!(!check_criticality([&a], Time::ZERO).report.is_empty());
    }

    #[test]
    fn gantt_rows_and_round_trip() {
        let spec = fixtures::running_example();
        let t = run(
            &["u2"],
            &fixtures::engine_config(),
            fixtures::conforming_plant(),
        );
        let doc = export_gantt(&t, &spec);
        let rows: Vec<&str> = doc.rows.iter().map(|r| r.resource.as_str()).collect();
        assert_eq!(rows, ["r1", "r2", "r3"]);
        let r1: BTreeSet<String> = doc.rows[0]
            .bars
            .iter()
            .map(|b| b.node.base().to_string())
            .collect();
        assert_eq!(
            r1,
            ["Act1.n1", "Act2.n3", "Act2.n5"].map(String::from).into()
        );

        let back = GanttDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        for row in &back.rows {
            for bar in &row.bars {
                let r = t.record(&bar.node).unwrap();
                assert_eq!(bar.specified, (r.s + t.header.psi, r.c + t.header.psi));
                assert_eq!(bar.executed, (r.s_exec, r.c_exec));
            }
        }
        assert!(doc.to_svg().starts_with("<svg"));

        let empty = ExecutionTrace::new(t.header.clone());
        assert!(export_gantt(&empty, &spec).rows.is_empty());
    }
}
