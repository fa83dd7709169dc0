//! `actexec`: validate activity models, execute them against the
//! simulated plant, verify the recorded traces and export Gantt charts.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actexec_core::automaton::DEFAULT_COUNT_BOUND;
use actexec_core::model::validate_spec;
use actexec_core::plant::OutcomeSource;
use actexec_core::spec_file::parse_with_overrides;
use actexec_core::verify::{check_criticality, export_gantt, DelaySummary};
use actexec_core::{
    ac_run, check_plant_against_spec, verify_trace, ClockMode, EngineConfig, ExecutionTrace,
    LayerCosts, OutcomeName, PlantConfig, SimPlant, SpecDocument, Time, ValidationReport,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "actexec", version, about)]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check activities, automaton and (when present) plant bounds.
    Validate(Inputs),
    /// Execute the model, write traces and verify every run.
    Run(RunArgs),
    /// Export a recorded trace as Gantt data and an SVG drawing.
    Gantt(GanttArgs),
    /// Measure engine-layer costs and execution delays, and suggest bounds.
    Measure(MeasureArgs),
}

#[derive(Args, Clone)]
struct Inputs {
    /// Model file.
    #[arg(long)]
    spec: PathBuf,
    /// Plant section override file.
    #[arg(long)]
    plant: Option<PathBuf>,
    /// Engine section override file.
    #[arg(long)]
    engine: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Simulated,
    Realtime,
}

#[derive(Args, Clone)]
struct Campaign {
    #[command(flatten)]
    inputs: Inputs,
    /// Seed of the first repetition; repetition `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, value_enum)]
    clock: Option<ClockArg>,
    /// Execution start, e.g. `10` (model units) or `25ms`.
    #[arg(long)]
    psi: Option<String>,
    /// Comma-separated outcomes used for every event instead of the plant's sources.
    #[arg(long)]
    script: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    campaign: Campaign,
    /// Directory for per-run traces and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time-criticality bound on every execution delay.
    #[arg(long)]
    bound: Option<String>,
}

#[derive(Args)]
struct GanttArgs {
    /// Recorded trace (JSON lines).
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Skip the SVG drawing.
    #[arg(long)]
    no_svg: bool,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    campaign: Campaign,
    /// Relative safety margin added to the measured maxima.
    #[arg(long, default_value = "0.2")]
    margin: String,
}

/// Operational failure: bad input, I/O, configuration.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a, cli.format),
        Command::Run(a) => cmd_run(a, cli.format),
        Command::Gantt(a) => cmd_gantt(a, cli.format),
        Command::Measure(a) => cmd_measure(a, cli.format),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load(inputs: &Inputs) -> Result<SpecDocument, Failure> {
    let spec = read(&inputs.spec)?;
    let engine = inputs.engine.as_deref().map(read).transpose()?;
    let plant = inputs.plant.as_deref().map(read).transpose()?;
    Ok(parse_with_overrides(
        &spec,
        engine.as_deref(),
        plant.as_deref(),
    )?)
}

fn emit<T: Serialize>(format: Format, value: &T, text: impl FnOnce() -> String) {
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(value).expect("report serializes")
        ),
        Format::Text => print!("{}", text()),
    }
}

#[derive(Serialize)]
struct ValidateOutput<'a> {
    valid: bool,
    model: &'a ValidationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    plant: Option<&'a ValidationReport>,
}

fn cmd_validate(inputs: &Inputs, format: Format) -> Result<bool, Failure> {
    let doc = load(inputs)?;
    let model = validate_spec(&doc.spec, DEFAULT_COUNT_BOUND)?;
    let plant = doc
        .plant
        .as_ref()
        .map(|p| check_plant_against_spec(p, &doc.spec, &engine_config(&doc)));
    let valid = model.is_empty() && plant.as_ref().is_none_or(|p| p.is_empty());
    emit(
        format,
        &ValidateOutput {
            valid,
            model: &model,
            plant: plant.as_ref(),
        },
        || {
            let mut s = model.to_text();
            if let Some(p) = &plant {
                s.push_str(&p.to_text());
            }
            s.push_str(if valid { "valid\n" } else { "invalid\n" });
            s
        },
    );
    Ok(valid)
}

fn engine_config(doc: &SpecDocument) -> EngineConfig {
    doc.engine.clone().unwrap_or(EngineConfig {
        unit: doc.unit,
        ..EngineConfig::default()
    })
}

struct Prepared {
    doc: SpecDocument,
    cfg: EngineConfig,
    plant: PlantConfig,
    script: Option<Vec<OutcomeName>>,
}

fn prepare(c: &Campaign) -> Result<Prepared, Failure> {
    let doc = load(&c.inputs)?;
    let mut cfg = engine_config(&doc);
    if let Some(clock) = c.clock {
        cfg.clock = match clock {
            ClockArg::Simulated => ClockMode::Simulated,
            ClockArg::Realtime => ClockMode::Realtime,
        };
    }
    if let Some(psi) = &c.psi {
        cfg.psi = Time::parse_in(psi, doc.unit).map_err(|e| Failure(format!("--psi: {e}")))?;
    }
    let plant = doc
        .plant
        .clone()
        .ok_or_else(|| Failure("no plant section; embed one or pass --plant".into()))?;
    let script = c.script.as_ref().map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|u| !u.is_empty())
            .map(OutcomeName::new)
            .collect()
    });
    Ok(Prepared {
        doc,
        cfg,
        plant,
        script,
    })
}

impl Prepared {
    /// Plant for repetition seed `seed`: jitter reseeded, outcome
    /// distributions reseeded unless a script replaces them.
    fn plant_for(&self, seed: u64) -> PlantConfig {
        let mut p = self.plant.clone().with_seed(seed);
        match &self.script {
            Some(s) => p = p.with_script(s),
            None => {
                for e in &mut p.events {
                    if let OutcomeSource::Distribution { seed: s, .. } = &mut e.source {
                        *s = s.wrapping_add(seed);
                    }
                }
            }
        }
        p
    }

    fn execute(&self, seed: u64) -> Result<ExecutionTrace, Failure> {
        let mut plant = SimPlant::new(self.plant_for(seed))?;
        let mut trace = ac_run(&self.doc.spec, &mut plant, &self.cfg)?;
        trace.header.seed = Some(seed);
        Ok(trace)
    }

    fn preflight(&self) -> Result<ValidationReport, Failure> {
        let mut r = validate_spec(&self.doc.spec, DEFAULT_COUNT_BOUND)?;
        r.extend(check_plant_against_spec(
            &self.plant,
            &self.doc.spec,
            &self.cfg,
        ));
        Ok(r.finish())
    }
}

#[derive(Serialize)]
struct RunOutcome {
    seed: u64,
    completed: bool,
    conforming: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
    final_state: Option<String>,
    nodes: usize,
    outcomes: Vec<String>,
    max_delta: Option<Time>,
    findings: ValidationReport,
}

#[derive(Serialize)]
struct RunSummary {
    runs: usize,
    passed: usize,
    aborted: usize,
    findings: usize,
    preflight: ValidationReport,
    delays: DelaySummary,
    max_costs: LayerCosts,
    results: Vec<RunOutcome>,
}

fn cmd_run(args: &RunArgs, format: Format) -> Result<bool, Failure> {
    let prep = prepare(&args.campaign)?;
    let bound = args
        .bound
        .as_deref()
        .map(|b| Time::parse_in(b, prep.doc.unit).map_err(|e| Failure(format!("--bound: {e}"))))
        .transpose()?;
    let preflight = prep.preflight()?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    }

    let mut traces = Vec::new();
    let mut results = Vec::new();
    let mut max_costs = LayerCosts::default();
    for i in 0..args.campaign.reps {
        let seed = args.campaign.seed.wrapping_add(i as u64);
        let trace = prep.execute(seed)?;
        let mut findings = verify_trace(&trace, &prep.doc.spec);
        if let Some(b) = bound {
            findings.extend(check_criticality([&trace], b).report);
        }
        let findings = findings.finish();
        if let Some(dir) = &args.out {
            let f = fs::File::create(dir.join(format!("trace-{seed}.jsonl")))?;
            trace.write_jsonl(std::io::BufWriter::new(f))?;
            fs::write(
                dir.join(format!("report-{seed}.json")),
                serde_json::to_string_pretty(&findings).expect("report serializes"),
            )?;
        }
        for p in &trace.paths {
            max_costs = max_costs.max(&p.costs);
        }
        results.push(RunOutcome {
            seed,
            completed: trace.completed,
            conforming: trace.conforming(),
            aborted: trace.aborted.clone(),
            final_state: trace.final_state.as_ref().map(|s| s.to_string()),
            nodes: trace.records.len(),
            outcomes: trace
                .outcomes
                .iter()
                .map(|o| o.outcome.to_string())
                .collect(),
            max_delta: trace.max_delta(),
            findings,
        });
        traces.push(trace);
    }

    let summary = RunSummary {
        runs: results.len(),
        passed: results
            .iter()
            .filter(|r| r.conforming && r.findings.is_empty())
            .count(),
        aborted: results.iter().filter(|r| r.aborted.is_some()).count(),
        findings: results.iter().map(|r| r.findings.len()).sum::<usize>(),
        delays: DelaySummary::of(&traces),
        max_costs,
        preflight,
        results,
    };
    let ok = summary.preflight.is_empty() && summary.passed == summary.runs;
    emit(format, &summary, || run_text(&summary));
    Ok(ok)
}

fn opt(t: Option<Time>) -> String {
    t.map_or("-".into(), |t| t.to_string())
}

fn run_text(s: &RunSummary) -> String {
    let mut out = String::new();
    if !s.preflight.is_empty() {
        out.push_str("preflight findings:\n");
        out.push_str(&s.preflight.to_text());
    }
    for r in &s.results {
        let status = if let Some(a) = &r.aborted {
            format!("ABORTED ({a})")
        } else if r.conforming && r.findings.is_empty() {
            "ok".into()
        } else {
            format!("{} findings", r.findings.len())
        };
        out.push_str(&format!(
            "seed {}: {status}; {} nodes, outcomes [{}], max delay {}, final {}\n",
            r.seed,
            r.nodes,
            r.outcomes.join(","),
            opt(r.max_delta),
            r.final_state.as_deref().unwrap_or("-"),
        ));
        out.push_str(&r.findings.to_text());
    }
    let c = &s.max_costs;
    out.push_str(&format!(
        "{} runs, {} passed, {} aborted, {} findings; max delay {}; layer costs event {} lc {} ac {} prep {}\n",
        s.runs,
        s.passed,
        s.aborted,
        s.findings,
        opt(s.delays.max),
        c.d_event,
        c.d_lc,
        c.d_ac,
        c.d_ac_prep
    ));
    out
}

#[derive(Serialize)]
struct GanttOutput {
    json: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    svg: Option<PathBuf>,
    rows: usize,
    bars: usize,
}

fn cmd_gantt(args: &GanttArgs, format: Format) -> Result<bool, Failure> {
    let doc = parse_with_overrides(&read(&args.spec)?, None, None)?;
    let file = fs::File::open(&args.trace)
        .map_err(|e| Failure(format!("{}: {e}", args.trace.display())))?;
    let trace = ExecutionTrace::read_jsonl(BufReader::new(file))?;
    let gantt = export_gantt(&trace, &doc.spec);
    fs::create_dir_all(&args.out)?;
    let json = args.out.join("gantt.json");
    fs::write(&json, gantt.to_json())?;
    let svg = if args.no_svg {
        None
    } else {
        let p = args.out.join("gantt.svg");
        fs::write(&p, gantt.to_svg())?;
        Some(p)
    };
    let out = GanttOutput {
        json,
        svg,
        rows: gantt.rows.len(),
        bars: gantt.rows.iter().map(|r| r.bars.len()).sum(),
    };
    emit(format, &out, || {
        let mut s = format!(
            "{} rows, {} bars -> {}\n",
            out.rows,
            out.bars,
            out.json.display()
        );
        if let Some(p) = &out.svg {
            s.push_str(&format!("drawing -> {}\n", p.display()));
        }
        s
    });
    Ok(true)
}

#[derive(Serialize)]
struct LargestPath {
    seed: u64,
    index: usize,
    nodes: usize,
    activities: Vec<String>,
}

#[derive(Serialize)]
struct MeasureReport {
    runs: usize,
    clock: ClockMode,
    margin: Time,
    largest_path: Option<LargestPath>,
    /// Per-layer maxima over all decision paths of all runs.
    components: LayerCosts,
    measured_d_e: Time,
    suggested_d_e: Time,
    configured_d_e: Time,
    measured_d_a: Time,
    suggested_d_a: Time,
    configured_d_a: Time,
    findings: ValidationReport,
}

fn cmd_measure(args: &MeasureArgs, format: Format) -> Result<bool, Failure> {
    let prep = prepare(&args.campaign)?;
    let margin = Time::parse_plain(&args.margin).map_err(|e| Failure(format!("--margin: {e}")))?;
    if margin.is_negative() {
        return Err(Failure("--margin must not be negative".into()));
    }
    let factor = Time::from_integer(1) + margin;

    let mut components = LayerCosts::default();
    let mut largest: Option<LargestPath> = None;
    let mut traces = Vec::new();
    for i in 0..args.campaign.reps {
        let seed = args.campaign.seed.wrapping_add(i as u64);
        let trace = prep.execute(seed)?;
        for p in &trace.paths {
            components = components.max(&p.costs);
            if largest.as_ref().is_none_or(|l| p.nodes > l.nodes) {
                largest = Some(LargestPath {
                    seed,
                    index: p.index,
                    nodes: p.nodes,
                    activities: p
                        .activities
                        .iter()
                        .map(|a| a.as_ref().map_or("ε".into(), |a| a.to_string()))
                        .collect(),
                });
            }
        }
        traces.push(trace);
    }
    let delays = DelaySummary::of(&traces);
    let measured_d_e = components.total();
    let measured_d_a = delays.max.unwrap_or(Time::ZERO).max(Time::ZERO);
    let report = MeasureReport {
        runs: traces.len(),
        clock: prep.cfg.clock,
        margin,
        largest_path: largest,
        components,
        measured_d_e,
        suggested_d_e: measured_d_e.scaled(factor),
        configured_d_e: prep.cfg.d_e,
        measured_d_a,
        suggested_d_a: measured_d_a.scaled(factor),
        configured_d_a: prep.cfg.d_a,
        findings: {
            let mut f = ValidationReport::new();
            if measured_d_e.scaled(factor) > prep.cfg.d_e {
                f.push(
                    actexec_core::Rule::DelayBound,
                    vec!["dE".into()],
                    format!(
                        "suggested {} exceeds configured {}",
                        measured_d_e.scaled(factor),
                        prep.cfg.d_e
                    ),
                );
            }
            if measured_d_a.scaled(factor) > prep.cfg.d_a {
                f.push(
                    actexec_core::Rule::DelayBound,
                    vec!["dA".into()],
                    format!(
                        "suggested {} exceeds configured {}",
                        measured_d_a.scaled(factor),
                        prep.cfg.d_a
                    ),
                );
            }
            f.finish()
        },
    };
    emit(format, &report, || measure_text(&report));
    Ok(report.findings.is_empty())
}

fn measure_text(r: &MeasureReport) -> String {
    let mut s = format!("{} runs, margin {}\n", r.runs, r.margin);
    if let Some(l) = &r.largest_path {
        s.push_str(&format!(
            "largest decision path: seed {} path {} with {} nodes [{}]\n",
            l.seed,
            l.index,
            l.nodes,
            l.activities.join(", ")
        ));
    }
    let c = &r.components;
    s.push_str("component   max\n");
    for (name, v) in [
        ("dEvent", c.d_event),
        ("dLC", c.d_lc),
        ("dAC", c.d_ac),
        ("daC", c.d_ac_prep),
    ] {
        s.push_str(&format!("{name:<11} {v}\n"));
    }
    s.push_str(&format!(
        "dE measured {} suggested {} configured {}\n",
        r.measured_d_e, r.suggested_d_e, r.configured_d_e
    ));
    s.push_str(&format!(
        "dA measured {} suggested {} configured {}\n",
        r.measured_d_a, r.suggested_d_a, r.configured_d_a
    ));
    s.push_str(&r.findings.to_text());
    s
}
