//! Combinations with known outcomes and the GTRUTH format.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::text::{self, Diagnostic, Parsed, PROVENANCE_PREFIX};

macro_rules! token_enum {
    ($(#[$meta:meta])* $ty:ident, $what:literal, { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $ty { $($variant),+ }

        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $tok),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($tok => Ok($ty::$variant),)+
                    _ => Err(format!(concat!("unknown ", $what, " `{}`"), s)),
                }
            }
        }
    };
}

token_enum!(
    /// How a defense metric held up inside a combination compared with the
    /// defense alone.
    OutcomeColor, "color", { Green => "green", Orange => "orange", Red => "red" }
);
token_enum!(Dataset, "dataset", { Fmnist => "fmnist", Utkface => "utkface" });
token_enum!(Metric, "metric", {
    Robacc => "robacc",
    Asr => "asr",
    Wmacc => "wmacc",
    Pval => "pval",
    Rsd => "rsd",
    Dp => "dp",
    Eqodds => "eqodds",
    Err => "err",
});
token_enum!(Cohort, "cohort", {
    Prior => "prior",
    Empirical => "empirical",
    Scaling => "scaling",
    Argued => "argued",
});
token_enum!(Label, "label", { Effective => "effective", Ineffective => "ineffective" });

impl Cohort {
    /// Whether records in this cohort carry metric outcomes rather than a
    /// direct label.
    pub fn has_outcomes(self) -> bool {
        matches!(self, Cohort::Empirical | Cohort::Scaling)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetricOutcome {
    pub dataset: Dataset,
    pub metric: Metric,
    pub color: OutcomeColor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    Outcomes(Vec<MetricOutcome>),
    DirectLabel(Label),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundTruthRecord {
    pub id: String,
    pub defenses: Vec<String>,
    pub cohort: Cohort,
    pub evidence: Evidence,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("record `{0}` has no outcomes")]
    NoEvidence(String),
}

/// A combination counts as ineffective as soon as any metric on any dataset
/// is orange or red.
pub fn derive_label(record: &GroundTruthRecord) -> Result<Label, LabelError> {
    match &record.evidence {
        Evidence::DirectLabel(l) => Ok(*l),
        Evidence::Outcomes(o) if o.is_empty() => Err(LabelError::NoEvidence(record.id.clone())),
        Evidence::Outcomes(o) => Ok(if o.iter().all(|m| m.color == OutcomeColor::Green) {
            Label::Effective
        } else {
            Label::Ineffective
        }),
    }
}

/// Sort key ordering `C2` before `C10` and all `C` ids before `T` ids.
pub fn record_order_key(id: &str) -> (String, u64, String) {
    let split = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
    let (prefix, rest) = id.split_at(split);
    let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let number = rest[..digits_end].parse().unwrap_or(0);
    (prefix.to_string(), number, rest[digits_end..].to_string())
}

const KNOWN_KEYS: [&str; 5] = ["id", "cohort", "defenses", "source", "label"];
const OUTCOME_PREFIX: &str = "outcome.";

/// Parses a GTRUTH document, resolving defense ids against `catalog`.
pub fn parse_groundtruth(text: &str, catalog: &Catalog) -> Result<Parsed<Vec<GroundTruthRecord>>, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let lexed = text::lex(text, "combination", &mut diags);
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for block in &lexed.blocks {
        let start = diags.len();
        for e in &block.entries {
            if !KNOWN_KEYS.contains(&e.key.as_str()) && !e.key.starts_with(OUTCOME_PREFIX) {
                diags.push(Diagnostic::error(e.line, format!("unknown key `{}`", e.key)));
            }
        }
        let missing: Vec<&str> = ["id", "cohort", "defenses", "source"]
            .into_iter()
            .filter(|k| block.get(k).is_none())
            .collect();
        if !missing.is_empty() {
            diags.push(Diagnostic::error(
                block.line,
                format!("missing required key(s): {}", missing.join(", ")),
            ));
            continue;
        }
        let entry = |k: &str| block.get(k).expect("checked");

        let id_e = entry("id");
        if !text::is_token(&id_e.value) {
            diags.push(Diagnostic::error(
                id_e.line,
                format!("malformed record id `{}`", id_e.value),
            ));
        } else if let Some(first) = seen.get(&id_e.value) {
            diags.push(Diagnostic::error(
                id_e.line,
                format!("duplicate record id `{}` (first defined on line {first})", id_e.value),
            ));
        } else {
            seen.insert(id_e.value.clone(), id_e.line);
        }

        let cohort_e = entry("cohort");
        let cohort = cohort_e
            .value
            .parse::<Cohort>()
            .map_err(|e| diags.push(Diagnostic::error(cohort_e.line, e)))
            .ok();

        let src_e = entry("source");
        let source = match text::unquote(&src_e.value) {
            Ok(s) => s.to_string(),
            Err(e) => {
                diags.push(Diagnostic::error(src_e.line, e));
                String::new()
            }
        };

        let def_e = entry("defenses");
        let mut defenses = Vec::new();
        match text::split_list(&def_e.value) {
            Ok(items) if items.len() < 2 => {
                diags.push(Diagnostic::error(
                    def_e.line,
                    "a combination needs at least two defenses",
                ));
            }
            Ok(items) => {
                let mut prev = None;
                for id in items {
                    if defenses.iter().any(|d| d == id) {
                        diags.push(Diagnostic::error(def_e.line, format!("duplicate defense `{id}`")));
                        continue;
                    }
                    match catalog.get(id) {
                        None => diags.push(Diagnostic::error(def_e.line, format!("unknown defense id `{id}`"))),
                        Some(d) => {
                            if let Some((pid, pstage)) = prev {
                                if pstage > d.stage {
                                    diags.push(Diagnostic::error(
                                        def_e.line,
                                        format!(
                                            "stage order violation: `{pid}` ({pstage}) listed before `{id}` ({})",
                                            d.stage
                                        ),
                                    ));
                                }
                            }
                            prev = Some((id, d.stage));
                        }
                    }
                    defenses.push(id.to_string());
                }
            }
            Err(e) => diags.push(Diagnostic::error(def_e.line, e)),
        }

        let mut outcomes = Vec::new();
        for e in block.entries.iter().filter(|e| e.key.starts_with(OUTCOME_PREFIX)) {
            let parts: Vec<&str> = e.key[OUTCOME_PREFIX.len()..].split('.').collect();
            let [ds, metric] = parts.as_slice() else {
                diags.push(Diagnostic::error(
                    e.line,
                    format!("malformed outcome key `{}`, expected outcome.<dataset>.<metric>", e.key),
                ));
                continue;
            };
            let parsed = (
                ds.parse::<Dataset>(),
                metric.parse::<Metric>(),
                e.value.parse::<OutcomeColor>(),
            );
            match parsed {
                (Ok(dataset), Ok(metric), Ok(color)) => outcomes.push(MetricOutcome { dataset, metric, color }),
                (d, m, c) => {
                    for err in [d.err(), m.err(), c.err()].into_iter().flatten() {
                        diags.push(Diagnostic::error(e.line, err));
                    }
                }
            }
        }
        let label = block.get("label").and_then(|e| {
            e.value
                .parse::<Label>()
                .map_err(|err| diags.push(Diagnostic::error(e.line, err)))
                .ok()
        });

        let evidence = match cohort {
            Some(c) if c.has_outcomes() => {
                if let Some(e) = block.get("label") {
                    diags.push(Diagnostic::error(
                        e.line,
                        format!("cohort `{c}` takes outcome lines, not a label"),
                    ));
                }
                if outcomes.is_empty() && !block.entries.iter().any(|e| e.key.starts_with(OUTCOME_PREFIX)) {
                    diags.push(Diagnostic::error(
                        block.line,
                        format!("cohort `{c}` requires at least one outcome line"),
                    ));
                }
                Some(Evidence::Outcomes(outcomes))
            }
            Some(c) => {
                if let Some(e) = block.entries.iter().find(|e| e.key.starts_with(OUTCOME_PREFIX)) {
                    diags.push(Diagnostic::error(
                        e.line,
                        format!("cohort `{c}` takes a label, not outcome lines"),
                    ));
                }
                if block.get("label").is_none() {
                    diags.push(Diagnostic::error(block.line, format!("cohort `{c}` requires a label")));
                }
                label.map(Evidence::DirectLabel)
            }
            None => None,
        };

        if diags.len() == start {
            if let (Some(cohort), Some(evidence)) = (cohort, evidence) {
                records.push(GroundTruthRecord {
                    id: id_e.value.clone(),
                    defenses,
                    cohort,
                    evidence,
                    source,
                });
            }
        }
    }

    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(Parsed {
        value: records,
        warnings: Vec::new(),
    })
}

/// Canonical GTRUTH rendering; outcome lines keep their stored order.
pub fn serialize_groundtruth(records: &[GroundTruthRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {PROVENANCE_PREFIX} ground truth");
    for r in records {
        out.push_str("\n[combination]\n");
        let _ = writeln!(out, "id = {}", r.id);
        let _ = writeln!(out, "cohort = {}", r.cohort);
        let _ = writeln!(out, "defenses = {}", r.defenses.join(", "));
        let _ = writeln!(out, "source = \"{}\"", r.source);
        match &r.evidence {
            Evidence::DirectLabel(l) => {
                let _ = writeln!(out, "label = {l}");
            }
            Evidence::Outcomes(os) => {
                for o in os {
                    let _ = writeln!(out, "outcome.{}.{} = {}", o.dataset, o.metric, o.color);
                }
            }
        }
    }
    out
}

pub const BUILTIN_GROUNDTRUTH_TEXT: &str = include_str!("../data/builtin.gtruth");

/// The 54 reference combinations, resolved against the built-in catalog.
pub fn builtin_groundtruth() -> Vec<GroundTruthRecord> {
    parse_groundtruth(BUILTIN_GROUNDTRUTH_TEXT, &crate::catalog::builtin_catalog())
        .expect("built-in ground truth is valid")
        .value
}
