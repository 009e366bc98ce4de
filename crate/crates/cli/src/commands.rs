use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use defcomp_core::catalog::{builtin_catalog, parse_catalog, serialize_catalog, DefenseDescriptor};
use defcomp_core::engine::{
    enumerate_pairs, predict_naive, predict_set, viability_advisory, EngineError, SetTrace, Step, Verdict,
};
use defcomp_core::eval::{evaluate_technique, CohortSelector, EvalError, EvaluationReport, Technique};
use defcomp_core::groundtruth::{builtin_groundtruth, parse_groundtruth, GroundTruthRecord, BUILTIN_GROUNDTRUTH_TEXT};
use defcomp_core::planner::{
    plan_for_goals, plan_ordering, stage_monotone_orderings, GoalPlans, GoalQuery, Plan, PlannerError,
    DEFAULT_MAX_DEFENSES,
};
use defcomp_core::{Catalog, Diagnostic, ParseMode, Parsed, PredictionTrace};
use serde_json::{json, Value};
use thiserror::Error;

use crate::args::{CatalogCommand, Cli, CohortArg, Command, Format, PlanArgs, TechniqueArg};

/// Exit status for a strict-mode gate that tripped.
pub const EXIT_STRICT: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{source_name}: {first}{}", more_suffix(*.more))]
    Parse {
        source_name: String,
        first: Diagnostic,
        more: usize,
    },
    #[error("unknown defense id `{0}`")]
    UnknownId(String),
    #[error("unknown defense id `{0}` (not in the catalog)")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn more_suffix(more: usize) -> String {
    match more {
        0 => String::new(),
        n => format!(" (and {n} more)"),
    }
}

/// What a successful command produced.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub warnings: Vec<String>,
    pub exit: u8,
}

impl Output {
    fn new(stdout: String) -> Self {
        Output {
            stdout,
            ..Default::default()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn diagnostics_error(source_name: String, diags: Vec<Diagnostic>) -> CliError {
    let mut errors = diags.into_iter().filter(Diagnostic::is_error);
    let first = errors
        .next()
        .unwrap_or_else(|| Diagnostic::error(0, "document rejected"));
    CliError::Parse {
        source_name,
        first,
        more: errors.count(),
    }
}

fn load_catalog_file(path: &Path, mode: ParseMode) -> Result<Parsed<Catalog>, CliError> {
    let text = read(path)?;
    parse_catalog(&text, mode).map_err(|d| diagnostics_error(path.display().to_string(), d))
}

struct Context {
    catalog: Catalog,
    custom_catalog: bool,
    warnings: Vec<String>,
    format: Format,
    mode: ParseMode,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let mode = if cli.global.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        };
        let (catalog, custom_catalog, warnings) = match &cli.global.catalog {
            Some(path) => {
                let parsed = load_catalog_file(path, mode)?;
                let w = parsed
                    .warnings
                    .iter()
                    .map(|d| format!("{}: {d}", path.display()))
                    .collect();
                (parsed.value, true, w)
            }
            None => (builtin_catalog(), false, Vec::new()),
        };
        Ok(Context {
            catalog,
            custom_catalog,
            warnings,
            format: cli.global.format,
            mode,
        })
    }

    fn resolve<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<&DefenseDescriptor>, CliError> {
        self.catalog.resolve(ids).map_err(CliError::UnknownId)
    }

    fn groundtruth(&self, path: Option<&Path>) -> Result<Vec<GroundTruthRecord>, CliError> {
        match path {
            Some(p) => {
                let text = read(p)?;
                parse_groundtruth(&text, &self.catalog)
                    .map(|parsed| parsed.value)
                    .map_err(|d| diagnostics_error(p.display().to_string(), d))
            }
            None if self.custom_catalog => parse_groundtruth(BUILTIN_GROUNDTRUTH_TEXT, &self.catalog)
                .map(|parsed| parsed.value)
                .map_err(|d| diagnostics_error("built-in ground truth".into(), d)),
            None => Ok(builtin_groundtruth()),
        }
    }

    fn emit(&self, text: String, value: Value) -> String {
        match self.format {
            Format::Text => text,
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&value).expect("values serialize");
                s.push('\n');
                s
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let ctx = Context::load(cli)?;
    let mut out = match &cli.command {
        Command::Predict { ids, strict } => predict(&ctx, ids, *strict)?,
        Command::Plan(args) => plan(&ctx, args)?,
        Command::Evaluate {
            technique,
            cohort,
            groundtruth,
        } => evaluate(&ctx, *technique, *cohort, groundtruth.as_deref())?,
        Command::Enumerate { include_context } => enumerate(&ctx, *include_context),
        Command::Catalog(cmd) => catalog(&ctx, cmd)?,
        Command::Explain { step } => explain(&ctx, step)?,
    };
    let mut warnings = ctx.warnings;
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}

fn write_pairs(out: &mut String, traces: &[PredictionTrace]) {
    write_pair_lines(out, traces, true);
}

fn write_pair_lines(out: &mut String, traces: &[PredictionTrace], rationale: bool) {
    for t in traces {
        let _ = write!(out, "  {} -> {}  {}  {}", t.d1_id, t.d2_id, t.verdict, t.fired_step);
        if !t.conflicting_risks.is_empty() {
            let risks: Vec<String> = t.conflicting_risks.iter().map(ToString::to_string).collect();
            let _ = write!(out, "  risks: {}", risks.join(", "));
        }
        if rationale {
            let _ = write!(out, "\n    {}", t.rationale);
        }
        out.push('\n');
    }
}

fn trace_json(trace: &SetTrace) -> Value {
    json!({
        "verdict": trace.verdict,
        "ids": trace.ids,
        "summary_step": trace.summary_step(),
        "pair_traces": trace.pair_traces,
    })
}

fn predict(ctx: &Context, ids: &[String], strict: bool) -> Result<Output, CliError> {
    let ds = ctx.resolve(ids)?;
    let trace = predict_set(&ds)?;
    let advisory = viability_advisory(&ds)?;

    let mut text = String::new();
    let _ = writeln!(text, "verdict:  {}", trace.verdict);
    let _ = writeln!(text, "order:    {}", trace.ids.join(" -> "));
    let _ = writeln!(text, "step:     {}", trace.summary_step().map_or("-", Step::as_str));
    let _ = writeln!(text, "advisory: {advisory}");
    let _ = writeln!(text, "pairs:");
    write_pairs(&mut text, &trace.pair_traces);

    let mut value = trace_json(&trace);
    value["advisory"] = json!(advisory);
    let exit = if strict && trace.verdict == Verdict::Conflict {
        EXIT_STRICT
    } else {
        0
    };
    Ok(Output {
        stdout: ctx.emit(text, value),
        exit,
        ..Default::default()
    })
}

fn plan_text(out: &mut String, plan: &Plan) {
    let _ = writeln!(out, "plan:     {}", plan.ordering().join(" -> "));
    let _ = writeln!(out, "advisory: {}", plan.advisory());
}

fn plan(ctx: &Context, args: &PlanArgs) -> Result<Output, CliError> {
    if !args.goals.is_empty() {
        return plan_goals(ctx, args);
    }
    let ds = ctx.resolve(&args.defenses)?;
    let found = plan_ordering(&ds)?;
    let mut text = String::new();
    let value = match &found {
        Some(p) => {
            plan_text(&mut text, p);
            let _ = writeln!(text, "pairs:");
            write_pairs(&mut text, &p.trace().pair_traces);
            json!({ "found": true, "plan": p, "blocking": [] })
        }
        None => {
            let first = stage_monotone_orderings(&ds).next().expect("at least two defenses");
            let trace = predict_set(&first)?;
            let blocking: Vec<PredictionTrace> = trace.blocking().cloned().collect();
            let _ = writeln!(text, "no effective ordering");
            let _ = writeln!(text, "blocking pairs in {}:", trace.ids.join(" -> "));
            write_pairs(&mut text, &blocking);
            json!({ "found": false, "plan": null, "blocking": blocking })
        }
    };
    let exit = if args.strict && found.is_none() { EXIT_STRICT } else { 0 };
    Ok(Output {
        stdout: ctx.emit(text, value),
        exit,
        ..Default::default()
    })
}

fn plan_goals(ctx: &Context, args: &PlanArgs) -> Result<Output, CliError> {
    let query = GoalQuery::parse(&args.goals, args.max.unwrap_or(DEFAULT_MAX_DEFENSES), &ctx.catalog)?;
    let GoalPlans { plans, blocked, notes } = plan_for_goals(&query, &ctx.catalog)?;

    let mut text = String::new();
    let goals: Vec<String> = query.goals.iter().map(ToString::to_string).collect();
    let _ = writeln!(text, "goals: {}  (max {})", goals.join(", "), query.max_defenses);
    if plans.is_empty() {
        let _ = writeln!(text, "no effective ordering");
    }
    for (i, p) in plans.iter().enumerate() {
        let _ = writeln!(text, "{:>3}. {}  [{}]", i + 1, p.ordering().join(" -> "), p.advisory());
    }
    for b in &blocked {
        let _ = writeln!(text, "blocked {{{}}}:", b.ids.join(", "));
        write_pair_lines(&mut text, &b.blocking, false);
    }
    for n in &notes {
        let _ = writeln!(text, "note: {n}");
    }

    let value = json!({
        "goals": query.goals,
        "max_defenses": query.max_defenses,
        "plans": plans,
        "blocked": blocked,
        "notes": notes,
    });
    let exit = if args.strict && plans.is_empty() {
        EXIT_STRICT
    } else {
        0
    };
    Ok(Output {
        stdout: ctx.emit(text, value),
        exit,
        ..Default::default()
    })
}

fn evaluate(
    ctx: &Context,
    technique: TechniqueArg,
    cohort: CohortArg,
    groundtruth: Option<&Path>,
) -> Result<Output, CliError> {
    let records = ctx.groundtruth(groundtruth)?;
    let techniques = match technique {
        TechniqueArg::Defcon => vec![Technique::Defcon],
        TechniqueArg::Naive => vec![Technique::Naive],
        TechniqueArg::Both => vec![Technique::Defcon, Technique::Naive],
    };
    let selector = match cohort {
        CohortArg::Prior => CohortSelector::Prior,
        CohortArg::Empirical => CohortSelector::Empirical,
        CohortArg::Scaling => CohortSelector::Scaling,
        CohortArg::Argued => CohortSelector::Argued,
        CohortArg::All => CohortSelector::All,
    };
    // "all" reports each cohort that has records; a named cohort must exist.
    let cohorts: Vec<CohortSelector> = match selector {
        CohortSelector::All => {
            let present: Vec<_> = selector
                .expand()
                .into_iter()
                .filter(|s| records.iter().any(|r| s.matches(r.cohort)))
                .collect();
            if present.is_empty() {
                return Err(EvalError::Empty.into());
            }
            present
        }
        one => vec![one],
    };

    let mut reports: Vec<EvaluationReport> = Vec::new();
    for &t in &techniques {
        for &c in &cohorts {
            reports.push(evaluate_technique(t, c, &ctx.catalog, &records)?);
        }
    }
    let text = reports
        .iter()
        .map(EvaluationReport::to_text)
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output::new(ctx.emit(text, json!({ "reports": reports }))))
}

fn enumerate(ctx: &Context, include_context: bool) -> Output {
    let catalog = if include_context {
        ctx.catalog.clone()
    } else {
        ctx.catalog.without_context()
    };
    let pairs = enumerate_pairs(&catalog);
    let mut rows = Vec::new();
    let mut text = String::new();
    let w = pairs
        .iter()
        .map(|(a, b)| a.id.len() + b.id.len() + 4)
        .max()
        .unwrap_or(0);
    for (a, b) in &pairs {
        let trace = predict_set(&[a, b]).expect("enumerated pairs are ordered and distinct");
        let naive = predict_naive(&[a, b]).expect("two defenses");
        let step = trace.pair_traces[0].fired_step;
        let _ = writeln!(
            text,
            "{:<w$}  defcon: {:<8} {:<21}  naive: {}",
            format!("{} -> {}", a.id, b.id),
            trace.verdict.as_str(),
            step.as_str(),
            naive
        );
        rows.push(json!({ "first": a.id, "second": b.id, "defcon": trace.verdict, "step": step, "naive": naive }));
    }
    let _ = writeln!(text, "{} pairs", pairs.len());
    Output::new(ctx.emit(text, json!({ "count": pairs.len(), "pairs": rows })))
}

fn describe(d: &DefenseDescriptor) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "id:        {}", d.id);
    if !d.display_name.is_empty() {
        let _ = writeln!(s, "name:      {}", d.display_name);
    }
    let _ = writeln!(s, "family:    {}", d.family);
    let _ = writeln!(s, "stage:     {}", d.stage);
    let _ = writeln!(s, "change:    {}", d.change);
    let uses: Vec<&str> = d.uses_risks.iter().map(|r| r.as_str()).collect();
    let _ = writeln!(
        s,
        "uses:      {}",
        if uses.is_empty() {
            "-".to_string()
        } else {
            uses.join(", ")
        }
    );
    let prot: Vec<String> = d.protections().map(|p| p.to_string()).collect();
    let _ = writeln!(
        s,
        "protects:  {}",
        if prot.is_empty() {
            "-".to_string()
        } else {
            prot.join(", ")
        }
    );
    let _ = writeln!(s, "utility:   {}", d.utility);
    let _ = writeln!(s, "objective: {}", d.objective);
    if let Some(m) = &d.metric {
        let _ = writeln!(s, "metric:    {} ({})", m.name, m.direction);
    }
    s
}

fn catalog(ctx: &Context, cmd: &CatalogCommand) -> Result<Output, CliError> {
    match cmd {
        CatalogCommand::List => {
            let c = &ctx.catalog;
            let w = c.iter().map(|d| d.id.len()).max().unwrap_or(2).max(2);
            let mut text = String::new();
            let _ = writeln!(
                text,
                "{:<w$}  {:<5} {:<7} {:<8} {:<19} name",
                "id", "stage", "change", "utility", "objective"
            );
            for d in c {
                let _ = writeln!(
                    text,
                    "{:<w$}  {:<5} {:<7} {:<8} {:<19} {}",
                    d.id,
                    d.stage.as_str(),
                    d.change.as_str(),
                    d.utility.as_str(),
                    d.objective,
                    d.display_name
                );
            }
            Ok(Output::new(ctx.emit(text, json!(c))))
        }
        CatalogCommand::Show { id } => {
            let d = ctx.catalog.get(id).ok_or_else(|| CliError::NotFound(id.clone()))?;
            Ok(Output::new(ctx.emit(describe(d), json!(d))))
        }
        CatalogCommand::Validate { file, export } => {
            let parsed = load_catalog_file(file, ctx.mode)?;
            let warnings: Vec<String> = parsed
                .warnings
                .iter()
                .map(|d| format!("{}: {d}", file.display()))
                .collect();
            let c = &parsed.value;
            let text = if *export {
                serialize_catalog(c)
            } else {
                format!(
                    "{}: ok ({} descriptors, {} warnings)\n",
                    file.display(),
                    c.len(),
                    warnings.len()
                )
            };
            let value = if *export {
                json!(c)
            } else {
                json!({ "file": file.display().to_string(), "descriptors": c.len(), "warnings": parsed.warnings })
            };
            Ok(Output {
                stdout: ctx.emit(text, value),
                warnings,
                exit: 0,
            })
        }
    }
}

fn explain(ctx: &Context, token: &str) -> Result<Output, CliError> {
    let step: Step = token.parse().map_err(|_| {
        let known: Vec<&str> = Step::ALL.iter().map(|s| s.as_str()).collect();
        CliError::Invalid(format!("unknown step `{token}` (expected one of {})", known.join(", ")))
    })?;
    let text = format!("{step} => {}\n{}\n", step.verdict(), step.rationale());
    let value = json!({ "step": step, "verdict": step.verdict(), "rationale": step.rationale() });
    Ok(Output::new(ctx.emit(text, value)))
}
