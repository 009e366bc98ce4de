//! Conflict prediction for ordered defense combinations.
//!
//! [`predict_pair`] walks a four-step decision procedure over two descriptors
//! where `d2` is applied after `d1`:
//!
//! 1. same stage? go to 2, otherwise go to 3;
//! 2. `d2` makes global changes: conflict; local or no changes: aligned;
//! 3. `d1` relies on no risk: aligned, otherwise go to 4;
//! 4. `d2` protects against a risk `d1` relies on: conflict, otherwise aligned.
//!
//! [`predict_set`] extends this to any number of defenses by checking every
//! ordered pair, and [`predict_naive`] is the baseline that flags any two
//! defenses sharing a stage.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{Catalog, ChangeScope, DefenseDescriptor, ProtectedRisk, Stage, UtilityImpact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Aligned,
    Conflict,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Aligned => "aligned",
            Verdict::Conflict => "conflict",
        }
    }

    pub fn is_conflict(self) -> bool {
        self == Verdict::Conflict
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The branch of the decision procedure that produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Step {
    #[serde(rename = "S1_S2_local_or_none")]
    SameStageLocalOrNone,
    #[serde(rename = "S1_S2_global_override")]
    SameStageGlobalOverride,
    #[serde(rename = "S3_no_risk_used")]
    NoRiskUsed,
    #[serde(rename = "S4_risk_protected")]
    RiskProtected,
    #[serde(rename = "S4_risk_not_protected")]
    RiskNotProtected,
    #[serde(rename = "EXT_pair_conflict")]
    ExtensionPairConflict,
}

impl Step {
    pub const ALL: [Step; 6] = [
        Step::SameStageLocalOrNone,
        Step::SameStageGlobalOverride,
        Step::NoRiskUsed,
        Step::RiskProtected,
        Step::RiskNotProtected,
        Step::ExtensionPairConflict,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::SameStageLocalOrNone => "S1_S2_local_or_none",
            Step::SameStageGlobalOverride => "S1_S2_global_override",
            Step::NoRiskUsed => "S3_no_risk_used",
            Step::RiskProtected => "S4_risk_protected",
            Step::RiskNotProtected => "S4_risk_not_protected",
            Step::ExtensionPairConflict => "EXT_pair_conflict",
        }
    }

    pub fn verdict(self) -> Verdict {
        match self {
            Step::SameStageGlobalOverride | Step::RiskProtected | Step::ExtensionPairConflict => Verdict::Conflict,
            _ => Verdict::Aligned,
        }
    }

    /// Fixed explanation text for this branch.
    pub fn rationale(self) -> &'static str {
        match self {
            Step::SameStageLocalOrNone => {
                "Both defenses act in the same stage and the later one makes only local \
                 or no changes, so it leaves the earlier defense's changes intact."
            }
            Step::SameStageGlobalOverride => {
                "Both defenses act in the same stage and the later one makes global changes \
                 that overwrite the earlier defense's changes (catastrophic forgetting)."
            }
            Step::NoRiskUsed => {
                "The defenses act in different stages and the earlier one does not rely on \
                 any risk, so the later defense cannot weaken it."
            }
            Step::RiskProtected => {
                "The defenses act in different stages and the later one protects against a \
                 risk the earlier one relies on, which makes the earlier defense less effective."
            }
            Step::RiskNotProtected => {
                "The defenses act in different stages and the later one does not protect \
                 against any risk the earlier one relies on, so they do not interfere."
            }
            Step::ExtensionPairConflict => {
                "At least one pair of defenses in the combination conflicts, so the whole \
                 combination conflicts."
            }
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Step::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown step `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionTrace {
    pub verdict: Verdict,
    pub fired_step: Step,
    pub d1_id: String,
    pub d2_id: String,
    /// Risks `d1` relies on that `d2` protects against, with `d2`'s qualifier.
    pub conflicting_risks: Vec<ProtectedRisk>,
    pub rationale: &'static str,
}

impl PredictionTrace {
    fn new(step: Step, d1: &DefenseDescriptor, d2: &DefenseDescriptor, risks: Vec<ProtectedRisk>) -> Self {
        Self {
            verdict: step.verdict(),
            fired_step: step,
            d1_id: d1.id.clone(),
            d2_id: d2.id.clone(),
            conflicting_risks: risks,
            rationale: step.rationale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SetTrace {
    pub verdict: Verdict,
    pub ids: Vec<String>,
    pub pair_traces: Vec<PredictionTrace>,
}

impl SetTrace {
    /// Pair traces that caused a conflict.
    pub fn blocking(&self) -> impl Iterator<Item = &PredictionTrace> {
        self.pair_traces.iter().filter(|t| t.verdict.is_conflict())
    }

    /// The step summarising the set: the pair's own step for two defenses,
    /// the extension rule for larger conflicting sets, `None` otherwise.
    pub fn summary_step(&self) -> Option<Step> {
        match (self.pair_traces.as_slice(), self.verdict) {
            ([only], _) => Some(only.fired_step),
            (_, Verdict::Conflict) => Some(Step::ExtensionPairConflict),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("a defense cannot be combined with itself (`{0}`)")]
    IdenticalIds(String),
    #[error("invalid pipeline order: `{first}` ({first_stage}) is listed before `{second}` ({second_stage})")]
    InvalidPipelineOrder {
        first: String,
        first_stage: Stage,
        second: String,
        second_stage: Stage,
    },
    #[error("need at least two defenses, got {0}")]
    TooFew(usize),
    #[error("duplicate defense `{0}`")]
    DuplicateId(String),
}

/// Predicts whether applying `d2` after `d1` conflicts.
pub fn predict_pair(d1: &DefenseDescriptor, d2: &DefenseDescriptor) -> Result<PredictionTrace, EngineError> {
    if d1.id == d2.id {
        return Err(EngineError::IdenticalIds(d1.id.clone()));
    }
    if d1.stage > d2.stage {
        return Err(EngineError::InvalidPipelineOrder {
            first: d1.id.clone(),
            first_stage: d1.stage,
            second: d2.id.clone(),
            second_stage: d2.stage,
        });
    }
    let step = if d1.stage == d2.stage {
        match d2.change {
            ChangeScope::Global => Step::SameStageGlobalOverride,
            ChangeScope::Local | ChangeScope::None => Step::SameStageLocalOrNone,
        }
    } else if d1.uses_risks.is_empty() {
        Step::NoRiskUsed
    } else {
        let hit: Vec<ProtectedRisk> = d2.protections().filter(|p| d1.uses_risks.contains(&p.risk)).collect();
        if !hit.is_empty() {
            return Ok(PredictionTrace::new(Step::RiskProtected, d1, d2, hit));
        }
        Step::RiskNotProtected
    };
    Ok(PredictionTrace::new(step, d1, d2, Vec::new()))
}

fn check_distinct(defenses: &[&DefenseDescriptor]) -> Result<(), EngineError> {
    if defenses.len() < 2 {
        return Err(EngineError::TooFew(defenses.len()));
    }
    let mut seen = BTreeSet::new();
    for d in defenses {
        if !seen.insert(d.id.as_str()) {
            return Err(EngineError::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}

/// Baseline: any two defenses in the same stage conflict. Order is irrelevant.
pub fn predict_naive(defenses: &[&DefenseDescriptor]) -> Result<Verdict, EngineError> {
    check_distinct(defenses)?;
    let mut stages = BTreeSet::new();
    let repeated = defenses.iter().any(|d| !stages.insert(d.stage));
    Ok(if repeated { Verdict::Conflict } else { Verdict::Aligned })
}

/// Checks every ordered pair `(i, j)` with `i < j` of a stage-monotone list.
pub fn predict_set(ordered: &[&DefenseDescriptor]) -> Result<SetTrace, EngineError> {
    check_distinct(ordered)?;
    for w in ordered.windows(2) {
        if w[0].stage > w[1].stage {
            return Err(EngineError::InvalidPipelineOrder {
                first: w[0].id.clone(),
                first_stage: w[0].stage,
                second: w[1].id.clone(),
                second_stage: w[1].stage,
            });
        }
    }
    let mut pair_traces = Vec::with_capacity(ordered.len() * (ordered.len() - 1) / 2);
    for (i, d1) in ordered.iter().enumerate() {
        for d2 in &ordered[i + 1..] {
            pair_traces.push(predict_pair(d1, d2)?);
        }
    }
    let verdict = if pair_traces.iter().any(|t| t.verdict.is_conflict()) {
        Verdict::Conflict
    } else {
        Verdict::Aligned
    };
    Ok(SetTrace {
        verdict,
        ids: ordered.iter().map(|d| d.id.clone()).collect(),
        pair_traces,
    })
}

/// All pairs of descriptors with different objectives, each in application
/// order: lower stage first, catalog order within a stage.
pub fn enumerate_pairs(catalog: &Catalog) -> Vec<(&DefenseDescriptor, &DefenseDescriptor)> {
    let ds = catalog.descriptors();
    let mut out = Vec::new();
    for (i, a) in ds.iter().enumerate() {
        for b in &ds[i + 1..] {
            if a.objective == b.objective {
                continue;
            }
            out.push(if b.stage < a.stage { (b, a) } else { (a, b) });
        }
    }
    out
}

/// Non-binding hint about the combined utility of a set of defenses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Viability {
    LikelyAcceptable,
    LikelyDegraded,
    Indeterminate,
}

impl Viability {
    pub fn as_str(self) -> &'static str {
        match self {
            Viability::LikelyAcceptable => "likely_acceptable",
            Viability::LikelyDegraded => "likely_degraded",
            Viability::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Viability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn viability_advisory(defenses: &[&DefenseDescriptor]) -> Result<Viability, EngineError> {
    if defenses.len() < 2 {
        return Err(EngineError::TooFew(defenses.len()));
    }
    let degrades = defenses.iter().filter(|d| d.utility == UtilityImpact::Down).count();
    Ok(match degrades {
        0 => Viability::LikelyAcceptable,
        n if n == defenses.len() => Viability::LikelyDegraded,
        _ => Viability::Indeterminate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{builtin_catalog, Risk};

    fn ids<'a>(c: &'a Catalog, ids: &[&str]) -> Vec<&'a DefenseDescriptor> {
        c.resolve(ids).unwrap()
    }

    fn pair(c: &Catalog, a: &str, b: &str) -> PredictionTrace {
        predict_pair(c.get(a).unwrap(), c.get(b).unwrap()).unwrap()
    }

    #[test]
    fn pair_examples() {
        let c = builtin_catalog();
        let t = pair(&c, "wmM.pre", "evs.in");
        assert_eq!((t.verdict, t.fired_step), (Verdict::Conflict, Step::RiskProtected));
        assert_eq!(t.conflicting_risks.len(), 1);
        assert_eq!(t.conflicting_risks[0].risk, Risk::Backdoor);

        let t = pair(&c, "out.post", "fng.post");
        assert_eq!(
            (t.verdict, t.fired_step),
            (Verdict::Aligned, Step::SameStageLocalOrNone)
        );

        let t = pair(&c, "wmD.pre", "dp.in");
        assert_eq!((t.verdict, t.fired_step), (Verdict::Conflict, Step::RiskProtected));

        let t = pair(&c, "evs.in", "expl.post");
        assert_eq!((t.verdict, t.fired_step), (Verdict::Aligned, Step::NoRiskUsed));

        let t = pair(&c, "wmD.pre", "fair.in");
        assert_eq!((t.verdict, t.fired_step), (Verdict::Aligned, Step::RiskNotProtected));
        assert!(t.conflicting_risks.is_empty());
    }

    #[test]
    fn pair_precondition_errors() {
        let c = builtin_catalog();
        let w = c.get("wmM.pre").unwrap();
        assert_eq!(predict_pair(w, w), Err(EngineError::IdenticalIds("wmM.pre".into())));
        let e = predict_pair(c.get("expl.post").unwrap(), w).unwrap_err();
        assert!(matches!(e, EngineError::InvalidPipelineOrder { .. }));
    }

    #[test]
    fn naive_examples() {
        let c = builtin_catalog();
        assert_eq!(
            predict_naive(&ids(&c, &["fair.pre.pate", "dp.pre.pate"])),
            Ok(Verdict::Conflict)
        );
        assert_eq!(predict_naive(&ids(&c, &["wmM.pre", "evs.in"])), Ok(Verdict::Aligned));
        assert_eq!(
            predict_naive(&ids(&c, &["evs.in", "wmM.post", "expl.post"])),
            Ok(Verdict::Conflict)
        );
        assert_eq!(predict_naive(&ids(&c, &["evs.in"])), Err(EngineError::TooFew(1)));
        assert!(matches!(
            predict_naive(&ids(&c, &["evs.in", "evs.in"])),
            Err(EngineError::DuplicateId(_))
        ));
    }

    #[test]
    fn set_examples() {
        let c = builtin_catalog();
        let t = predict_set(&ids(&c, &["out.post", "expl.post", "wmM.post"])).unwrap();
        assert_eq!(t.verdict, Verdict::Aligned);
        assert_eq!(t.pair_traces.len(), 3);
        assert!(t.pair_traces.iter().all(|p| p.verdict == Verdict::Aligned));
        assert_eq!(t.summary_step(), None);

        let t = predict_set(&ids(&c, &["wmD.pre", "fair.in", "expl.post"])).unwrap();
        assert_eq!(t.verdict, Verdict::Aligned);

        let t = predict_set(&ids(&c, &["wmM.pre", "out.in", "expl.post"])).unwrap();
        assert_eq!(t.verdict, Verdict::Conflict);
        let blocking: Vec<_> = t.blocking().map(|p| (p.d1_id.as_str(), p.d2_id.as_str())).collect();
        assert_eq!(blocking, vec![("wmM.pre", "out.in")]);
        assert_eq!(t.summary_step(), Some(Step::ExtensionPairConflict));

        assert!(predict_set(&ids(&c, &["expl.post", "evs.in"])).is_err());
    }

    #[test]
    fn enumeration_on_evaluated_defenses() {
        let c = builtin_catalog().without_context();
        assert_eq!(c.len(), 11);
        let pairs = enumerate_pairs(&c);
        assert_eq!(pairs.len(), 48);
        assert!(!pairs.iter().any(|(a, b)| a.id == "wmM.pre" && b.id == "fng.post"));
        assert!(pairs.iter().all(|(a, b)| a.stage <= b.stage));

        let two = Catalog::new("", ids(&c, &["evs.in", "expl.post"]).into_iter().cloned().collect()).unwrap();
        assert_eq!(enumerate_pairs(&two).len(), 1);
    }

    #[test]
    fn viability_examples() {
        let c = builtin_catalog();
        assert_eq!(
            viability_advisory(&ids(&c, &["evs.in", "dp.in"])),
            Ok(Viability::LikelyDegraded)
        );
        assert_eq!(
            viability_advisory(&ids(&c, &["wmM.pre", "fng.post"])),
            Ok(Viability::LikelyAcceptable)
        );
        assert_eq!(
            viability_advisory(&ids(&c, &["evs.in", "expl.post"])),
            Ok(Viability::Indeterminate)
        );
        assert!(viability_advisory(&ids(&c, &["evs.in"])).is_err());
    }

    #[test]
    fn step_tokens_round_trip() {
        for s in Step::ALL {
            assert_eq!(s.as_str().parse::<Step>(), Ok(s));
            assert_eq!(serde_json::to_value(s).unwrap(), s.as_str());
        }
    }
}
