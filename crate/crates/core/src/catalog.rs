//! Defense descriptors and the DEFCAT catalog format.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::text::{self, Diagnostic, ParseMode, Parsed, PROVENANCE_PREFIX};

/// Position of a defense in the training pipeline. Ordered `Pre < In < Post`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pre,
    In,
    Post,
}

/// Reach of the modifications a defense makes to the model or training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeScope {
    Global,
    Local,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityImpact {
    Down,
    Same,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricDirection {
    Up,
    Down,
}

/// How a defense comes to protect against a risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskQualifier {
    Explicit,
    Unintended,
}

/// A risk from the closed vocabulary. `Other` holds tokens outside the
/// vocabulary so that hand-built descriptors can be validated; the parser
/// never produces it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Risk {
    Backdoor,
    AdvExample,
    Evasion,
    Poisoning,
    Extraction,
    MembershipInference,
    DataReconstruction,
    UnauthorizedDataUse,
    Discrimination,
    Opacity,
    Other(String),
}

macro_rules! token_enum {
    ($ty:ident, $what:literal, { $($variant:path => $tok:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($variant => $tok),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($tok => Ok($variant),)+
                    _ => Err(format!(concat!("unknown ", $what, " `{}`"), s)),
                }
            }
        }
    };
}

token_enum!(Stage, "stage", { Stage::Pre => "pre", Stage::In => "in", Stage::Post => "post" });
token_enum!(ChangeScope, "change scope", {
    ChangeScope::Global => "global",
    ChangeScope::Local => "local",
    ChangeScope::None => "none",
});
token_enum!(UtilityImpact, "utility impact", {
    UtilityImpact::Down => "down",
    UtilityImpact::Same => "same",
    UtilityImpact::Up => "up",
});
token_enum!(MetricDirection, "metric direction", {
    MetricDirection::Up => "up",
    MetricDirection::Down => "down",
});
token_enum!(RiskQualifier, "risk qualifier", {
    RiskQualifier::Explicit => "explicit",
    RiskQualifier::Unintended => "unintended",
});

impl Risk {
    pub const VOCABULARY: [Risk; 10] = [
        Risk::Backdoor,
        Risk::AdvExample,
        Risk::Evasion,
        Risk::Poisoning,
        Risk::Extraction,
        Risk::MembershipInference,
        Risk::DataReconstruction,
        Risk::UnauthorizedDataUse,
        Risk::Discrimination,
        Risk::Opacity,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            Risk::Backdoor => "backdoor",
            Risk::AdvExample => "adv_example",
            Risk::Evasion => "evasion",
            Risk::Poisoning => "poisoning",
            Risk::Extraction => "extraction",
            Risk::MembershipInference => "membership_inference",
            Risk::DataReconstruction => "data_reconstruction",
            Risk::UnauthorizedDataUse => "unauthorized_data_use",
            Risk::Discrimination => "discrimination",
            Risk::Opacity => "opacity",
            Risk::Other(s) => s,
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, Risk::Other(_))
    }

    /// Maps a token onto the vocabulary; unknown tokens become `Other`.
    pub fn from_token(token: &str) -> Risk {
        Risk::VOCABULARY
            .iter()
            .find(|r| r.as_str() == token)
            .cloned()
            .unwrap_or_else(|| Risk::Other(token.to_string()))
    }
}

impl fmt::Display for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Risk {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// A protected risk together with how it is protected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtectedRisk {
    pub risk: Risk,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<RiskQualifier>,
}

impl fmt::Display for ProtectedRisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qualifier {
            Some(q) => write!(f, "{}:{}", self.risk, q),
            None => write!(f, "{}", self.risk),
        }
    }
}

/// Effectiveness metric used when measuring a defense.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricSpec {
    pub name: String,
    pub direction: MetricDirection,
}

/// One defense variant at one pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DefenseDescriptor {
    pub id: String,
    pub family: String,
    pub display_name: String,
    pub stage: Stage,
    pub change: ChangeScope,
    pub uses_risks: BTreeSet<Risk>,
    #[serde(serialize_with = "ser_protects")]
    pub protects_risks: BTreeMap<Risk, Option<RiskQualifier>>,
    pub utility: UtilityImpact,
    pub objective: String,
    pub metric: Option<MetricSpec>,
}

fn ser_protects<S: Serializer>(map: &BTreeMap<Risk, Option<RiskQualifier>>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(map.iter().map(|(r, q)| ProtectedRisk {
        risk: r.clone(),
        qualifier: *q,
    }))
}

impl DefenseDescriptor {
    /// Protected risks with their qualifiers, in vocabulary order.
    pub fn protections(&self) -> impl Iterator<Item = ProtectedRisk> + '_ {
        self.protects_risks.iter().map(|(r, q)| ProtectedRisk {
            risk: r.clone(),
            qualifier: *q,
        })
    }

    pub fn protects(&self, risk: &Risk) -> bool {
        self.protects_risks.contains_key(risk)
    }

    /// The optional third id segment, e.g. `pate` in `dp.pre.pate`.
    pub fn context(&self) -> Option<&str> {
        self.id.split('.').nth(2)
    }
}

/// A single rule broken by a descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("malformed id `{0}`, expected family.stage[.context]")]
    MalformedId(String),
    #[error("family `{family}` does not match id `{id}`")]
    FamilyMismatch { id: String, family: String },
    #[error("stage/id mismatch: id `{id}` but stage `{stage}`")]
    StageIdMismatch { id: String, stage: Stage },
    #[error("malformed family token `{0}`")]
    MalformedFamily(String),
    #[error("malformed objective token `{0}`")]
    MalformedObjective(String),
    #[error("unknown risk token `{0}`")]
    UnknownRisk(String),
    #[error("malformed metric name `{0}`")]
    MalformedMetric(String),
    #[error("display name may not contain `\"` or line breaks")]
    MalformedDisplayName,
}

/// Checks every descriptor invariant and reports all violations.
pub fn validate_descriptor(d: &DefenseDescriptor) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let parts: Vec<&str> = d.id.split('.').collect();
    if !(2..=3).contains(&parts.len()) || !parts.iter().all(|p| text::is_token(p)) {
        out.push(Violation::MalformedId(d.id.clone()));
    } else {
        if parts[0] != d.family {
            out.push(Violation::FamilyMismatch {
                id: d.id.clone(),
                family: d.family.clone(),
            });
        }
        if parts[1] != d.stage.as_str() {
            out.push(Violation::StageIdMismatch {
                id: d.id.clone(),
                stage: d.stage,
            });
        }
    }
    if !text::is_token(&d.family) {
        out.push(Violation::MalformedFamily(d.family.clone()));
    }
    if !text::is_token(&d.objective) {
        out.push(Violation::MalformedObjective(d.objective.clone()));
    }
    for r in d.uses_risks.iter().chain(d.protects_risks.keys()) {
        if !r.is_known() {
            out.push(Violation::UnknownRisk(r.as_str().to_string()));
        }
    }
    if let Some(m) = &d.metric {
        if !text::is_token(&m.name) {
            out.push(Violation::MalformedMetric(m.name.clone()));
        }
    }
    if d.display_name.contains(['"', '\n', '\r']) {
        out.push(Violation::MalformedDisplayName);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("descriptor `{id}`: {violation}")]
    Invalid { id: String, violation: Violation },
}

/// An ordered, duplicate-free collection of descriptors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Catalog {
    provenance: String,
    descriptors: Vec<DefenseDescriptor>,
}

impl Catalog {
    pub fn new(provenance: impl Into<String>, descriptors: Vec<DefenseDescriptor>) -> Result<Self, CatalogError> {
        let mut seen = BTreeSet::new();
        for d in &descriptors {
            if let Err(v) = validate_descriptor(d) {
                return Err(CatalogError::Invalid {
                    id: d.id.clone(),
                    violation: v[0].clone(),
                });
            }
            if !seen.insert(d.id.as_str()) {
                return Err(CatalogError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Self {
            provenance: provenance.into(),
            descriptors,
        })
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn descriptors(&self) -> &[DefenseDescriptor] {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DefenseDescriptor> {
        self.descriptors.iter()
    }

    pub fn get(&self, id: &str) -> Option<&DefenseDescriptor> {
        self.descriptors.iter().find(|d| d.id == id)
    }

    /// Looks up each id in turn, failing on the first unknown one.
    pub fn resolve<'a, S: AsRef<str>>(&'a self, ids: &[S]) -> Result<Vec<&'a DefenseDescriptor>, String> {
        ids.iter()
            .map(|id| self.get(id.as_ref()).ok_or_else(|| id.as_ref().to_string()))
            .collect()
    }

    /// Copy of the catalog without contextual (three-segment id) entries.
    pub fn without_context(&self) -> Catalog {
        Catalog {
            provenance: self.provenance.clone(),
            descriptors: self
                .descriptors
                .iter()
                .filter(|d| d.context().is_none())
                .cloned()
                .collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Catalog {
    type Item = &'a DefenseDescriptor;
    type IntoIter = std::slice::Iter<'a, DefenseDescriptor>;

    fn into_iter(self) -> Self::IntoIter {
        self.descriptors.iter()
    }
}

const REQUIRED_KEYS: [&str; 6] = ["id", "family", "stage", "change", "utility", "objective"];
const KNOWN_KEYS: [&str; 10] = [
    "id",
    "family",
    "name",
    "stage",
    "change",
    "uses_risks",
    "protects_risks",
    "utility",
    "objective",
    "metric",
];

/// Parses a DEFCAT document. On failure every error diagnostic is returned.
pub fn parse_catalog(text: &str, mode: ParseMode) -> Result<Parsed<Catalog>, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let lexed = text::lex(text, "defense", &mut diags);
    let mut descriptors = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();

    for block in &lexed.blocks {
        let before = diags.iter().filter(|d| d.is_error()).count();
        for e in &block.entries {
            if !KNOWN_KEYS.contains(&e.key.as_str()) {
                let msg = format!("unknown key `{}`", e.key);
                diags.push(match mode {
                    ParseMode::Strict => Diagnostic::error(e.line, msg),
                    ParseMode::Lenient => Diagnostic::warning(e.line, msg),
                });
            }
        }
        let missing: Vec<&str> = REQUIRED_KEYS
            .iter()
            .copied()
            .filter(|k| block.get(k).is_none())
            .collect();
        if !missing.is_empty() {
            diags.push(Diagnostic::error(
                block.line,
                format!("missing required key(s): {}", missing.join(", ")),
            ));
            continue;
        }
        let Some(d) = descriptor_from_block(block, mode, &mut diags) else {
            continue;
        };
        let id_line = block.get("id").map(|e| e.line).unwrap_or(block.line);
        if let Some(first) = ids.get(&d.id) {
            diags.push(Diagnostic::error(
                id_line,
                format!("duplicate id `{}` (first defined on line {first})", d.id),
            ));
            continue;
        }
        ids.insert(d.id.clone(), id_line);
        if let Err(violations) = validate_descriptor(&d) {
            for v in violations {
                let line = match v {
                    Violation::StageIdMismatch { .. } => block.get("stage").map_or(id_line, |e| e.line),
                    Violation::MalformedFamily(_) | Violation::FamilyMismatch { .. } => {
                        block.get("family").map_or(id_line, |e| e.line)
                    }
                    Violation::MalformedObjective(_) => block.get("objective").map_or(id_line, |e| e.line),
                    Violation::MalformedMetric(_) => block.get("metric").map_or(id_line, |e| e.line),
                    _ => id_line,
                };
                diags.push(Diagnostic::error(line, v.to_string()));
            }
        }
        if diags.iter().filter(|d| d.is_error()).count() == before {
            descriptors.push(d);
        }
    }

    let (errors, warnings): (Vec<_>, Vec<_>) = diags.into_iter().partition(Diagnostic::is_error);
    if !errors.is_empty() {
        return Err(errors);
    }
    let catalog = Catalog {
        provenance: lexed.provenance.unwrap_or_default(),
        descriptors,
    };
    Ok(Parsed {
        value: catalog,
        warnings,
    })
}

fn descriptor_from_block(
    block: &text::Block,
    mode: ParseMode,
    diags: &mut Vec<Diagnostic>,
) -> Option<DefenseDescriptor> {
    let start = diags.len();
    let raw = |k: &str| block.get(k).map(|e| (e.line, e.value.as_str()));
    let mut token = |k: &str| -> String {
        let (line, v) = raw(k).expect("required key checked");
        if v.is_empty() {
            diags.push(Diagnostic::error(line, format!("empty value for `{k}`")));
        }
        v.to_string()
    };
    let id = token("id");
    let family = token("family");
    let objective = token("objective");

    fn typed<T: FromStr<Err = String>>(entry: (usize, &str), diags: &mut Vec<Diagnostic>) -> Option<T> {
        entry
            .1
            .parse()
            .map_err(|e| diags.push(Diagnostic::error(entry.0, e)))
            .ok()
    }
    let stage = typed::<Stage>(raw("stage")?, diags);
    let change = typed::<ChangeScope>(raw("change")?, diags);
    let utility = typed::<UtilityImpact>(raw("utility")?, diags);

    let display_name = match raw("name") {
        Some((line, v)) => match text::unquote(v) {
            Ok(s) => s.to_string(),
            Err(e) => {
                diags.push(Diagnostic::error(line, e));
                String::new()
            }
        },
        None => String::new(),
    };

    let unknown_risk = |line: usize, tok: &str, diags: &mut Vec<Diagnostic>| {
        let msg = format!("unknown risk token `{tok}`");
        match mode {
            ParseMode::Strict => diags.push(Diagnostic::error(line, msg)),
            ParseMode::Lenient => diags.push(Diagnostic::warning(line, format!("{msg} (dropped)"))),
        }
    };

    let mut uses_risks = BTreeSet::new();
    if let Some((line, v)) = raw("uses_risks") {
        match text::split_list(v) {
            Ok(items) => {
                for tok in items {
                    if tok.contains(':') {
                        diags.push(Diagnostic::error(
                            line,
                            format!("qualifier not allowed in uses_risks: `{tok}`"),
                        ));
                        continue;
                    }
                    let r = Risk::from_token(tok);
                    if !r.is_known() {
                        unknown_risk(line, tok, diags);
                    } else if !uses_risks.insert(r) {
                        diags.push(Diagnostic::error(line, format!("duplicate risk `{tok}`")));
                    }
                }
            }
            Err(e) => diags.push(Diagnostic::error(line, e)),
        }
    }

    let mut protects_risks = BTreeMap::new();
    if let Some((line, v)) = raw("protects_risks") {
        match text::split_list(v) {
            Ok(items) => {
                for item in items {
                    let (tok, qual) = match item.split_once(':') {
                        Some((t, q)) => (t.trim(), Some(q.trim())),
                        None => (item, None),
                    };
                    let qualifier = match qual.map(RiskQualifier::from_str).transpose() {
                        Ok(q) => q,
                        Err(e) => {
                            diags.push(Diagnostic::error(line, e));
                            continue;
                        }
                    };
                    let r = Risk::from_token(tok);
                    if !r.is_known() {
                        unknown_risk(line, tok, diags);
                    } else if protects_risks.insert(r, qualifier).is_some() {
                        diags.push(Diagnostic::error(line, format!("duplicate risk `{tok}`")));
                    }
                }
            }
            Err(e) => diags.push(Diagnostic::error(line, e)),
        }
    }

    let metric = match raw("metric") {
        Some((line, v)) => match v.split(',').map(str::trim).collect::<Vec<_>>().as_slice() {
            [name, dir] => match dir.parse::<MetricDirection>() {
                Ok(direction) => Some(MetricSpec {
                    name: name.to_string(),
                    direction,
                }),
                Err(e) => {
                    diags.push(Diagnostic::error(line, e));
                    None
                }
            },
            _ => {
                diags.push(Diagnostic::error(line, "metric must be `name,up` or `name,down`"));
                None
            }
        },
        None => None,
    };

    if diags[start..].iter().any(Diagnostic::is_error) {
        return None;
    }
    Some(DefenseDescriptor {
        id,
        family,
        display_name,
        stage: stage?,
        change: change?,
        uses_risks,
        protects_risks,
        utility: utility?,
        objective,
        metric,
    })
}

/// Renders the canonical DEFCAT form of a catalog.
pub fn serialize_catalog(catalog: &Catalog) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {PROVENANCE_PREFIX} {}", catalog.provenance);
    for d in catalog {
        out.push_str("\n[defense]\n");
        let _ = writeln!(out, "id = {}", d.id);
        let _ = writeln!(out, "family = {}", d.family);
        if !d.display_name.is_empty() {
            let _ = writeln!(out, "name = \"{}\"", d.display_name);
        }
        let _ = writeln!(out, "stage = {}", d.stage);
        let _ = writeln!(out, "change = {}", d.change);
        if !d.uses_risks.is_empty() {
            let uses: Vec<&str> = d.uses_risks.iter().map(Risk::as_str).collect();
            let _ = writeln!(out, "uses_risks = {}", uses.join(", "));
        }
        if !d.protects_risks.is_empty() {
            let prot: Vec<String> = d.protections().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "protects_risks = {}", prot.join(", "));
        }
        let _ = writeln!(out, "utility = {}", d.utility);
        let _ = writeln!(out, "objective = {}", d.objective);
        if let Some(m) = &d.metric {
            let _ = writeln!(out, "metric = {},{}", m.name, m.direction);
        }
    }
    out
}

pub const BUILTIN_CATALOG_TEXT: &str = include_str!("../data/builtin.defcat");

/// The eleven evaluated defenses plus two pre-training entries used only to
/// replay the PATE-based fairness/privacy combination.
pub fn builtin_catalog() -> Catalog {
    parse_catalog(BUILTIN_CATALOG_TEXT, ParseMode::Strict)
        .expect("built-in catalog is valid")
        .value
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<Diagnostic> {
        parse_catalog(text, ParseMode::Strict).unwrap_err()
    }

    #[test]
    fn one_block_maps_fields_directly() {
        let doc = "[defense]\nid = evs.in\nfamily = evs\nstage = in\nchange = global\n\
                   protects_risks = evasion:explicit, backdoor:unintended\nutility = down\n\
                   objective = evasion_robustness\n";
        let c = parse_catalog(doc, ParseMode::Strict).unwrap().value;
        assert_eq!(c.len(), 1);
        let d = &c.descriptors()[0];
        assert_eq!(d.id, "evs.in");
        assert_eq!(d.stage, Stage::In);
        assert_eq!(d.change, ChangeScope::Global);
        assert!(d.uses_risks.is_empty());
        assert_eq!(
            d.protects_risks.get(&Risk::Evasion),
            Some(&Some(RiskQualifier::Explicit))
        );
        assert_eq!(
            d.protects_risks.get(&Risk::Backdoor),
            Some(&Some(RiskQualifier::Unintended))
        );
        assert_eq!(d.utility, UtilityImpact::Down);
    }

    #[test]
    fn duplicate_id_names_the_line() {
        let block =
            "[defense]\nid = wmM.pre\nfamily = wmM\nstage = pre\nchange = local\nutility = same\nobjective = o\n";
        let errs = errors(&format!("{block}{block}"));
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 9);
        assert!(errs[0].message.contains("duplicate id"), "{}", errs[0]);
    }

    #[test]
    fn missing_required_key_points_at_block() {
        let errs = errors("# c\n[defense]\nid = a.pre\nfamily = a\n");
        assert_eq!(errs[0].line, 2);
        assert!(errs[0].message.contains("stage"));
    }

    #[test]
    fn stage_id_mismatch_is_rejected() {
        let errs = errors(
            "[defense]\nid = wmM.pre\nfamily = wmM\nstage = in\nchange = local\nutility = same\nobjective = o\n",
        );
        assert_eq!(errs[0].line, 4);
        assert!(errs[0].message.contains("stage/id mismatch"));
    }

    #[test]
    fn lenient_mode_downgrades_unknown_keys_and_risks() {
        let doc = "[defense]\nid = a.pre\nfamily = a\nstage = pre\nchange = local\nutility = same\n\
                   objective = o\ncolour = blue\nuses_risks = backdoor, gremlins\n";
        let errs = errors(doc);
        assert_eq!(errs.len(), 2);
        let parsed = parse_catalog(doc, ParseMode::Lenient).unwrap();
        assert_eq!(parsed.warnings.len(), 2);
        let d = &parsed.value.descriptors()[0];
        assert_eq!(d.uses_risks, BTreeSet::from([Risk::Backdoor]));
    }

    #[test]
    fn bad_enum_tokens_are_errors_in_both_modes() {
        let doc = "[defense]\nid = a.pre\nfamily = a\nstage = pre\nchange = partial\nutility = same\nobjective = o\n";
        assert!(parse_catalog(doc, ParseMode::Lenient).is_err());
    }

    #[test]
    fn empty_catalog_serializes_to_provenance_only() {
        let c = Catalog::new("nothing here", vec![]).unwrap();
        let s = serialize_catalog(&c);
        assert_eq!(s, "# provenance: nothing here\n");
        assert_eq!(parse_catalog(&s, ParseMode::Strict).unwrap().value, c);
    }

    #[test]
    fn single_descriptor_uses_canonical_key_order() {
        let c = builtin_catalog();
        let one = Catalog::new("x", vec![c.get("evs.in").unwrap().clone()]).unwrap();
        let s = serialize_catalog(&one);
        let keys: Vec<&str> = s.lines().filter_map(|l| l.split_once(" = ").map(|(k, _)| k)).collect();
        assert_eq!(
            keys,
            [
                "id",
                "family",
                "name",
                "stage",
                "change",
                "protects_risks",
                "utility",
                "objective",
                "metric"
            ]
        );
        assert_eq!(s.matches("[defense]").count(), 1);
    }

    #[test]
    fn validate_reports_every_violation() {
        let mut d = builtin_catalog().get("wmM.pre").unwrap().clone();
        assert!(validate_descriptor(&d).is_ok());
        d.stage = Stage::In;
        d.uses_risks.insert(Risk::Other("gremlins".into()));
        d.objective = "two words".into();
        let v = validate_descriptor(&d).unwrap_err();
        assert_eq!(v.len(), 3);
        assert!(v.iter().any(|v| v.to_string().contains("stage/id mismatch")));
        assert!(v.iter().any(|v| v.to_string().contains("unknown risk token")));
    }

    #[test]
    fn catalog_new_rejects_duplicates() {
        let d = builtin_catalog().get("fng.post").unwrap().clone();
        assert_eq!(
            Catalog::new("", vec![d.clone(), d]).unwrap_err(),
            CatalogError::DuplicateId("fng.post".into())
        );
    }
}
