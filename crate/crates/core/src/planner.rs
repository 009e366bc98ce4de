//! Exhaustive search for conflict-free orderings and goal-covering plans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use itertools::Itertools;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{Catalog, DefenseDescriptor, Risk, Stage};
use crate::engine::{self, EngineError, PredictionTrace, SetTrace, Verdict, Viability};

pub const MIN_DEFENSES: usize = 2;
pub const MAX_DEFENSES: usize = 8;
pub const DEFAULT_MAX_DEFENSES: usize = 4;

/// A stage-monotone ordering that is predicted conflict-free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Plan {
    ordering: Vec<String>,
    trace: SetTrace,
    advisory: Viability,
}

impl Plan {
    /// Re-checks the ordering; fails unless it is stage-monotone and aligned.
    pub fn new(ordered: &[&DefenseDescriptor]) -> Result<Plan, PlannerError> {
        let trace = engine::predict_set(ordered)?;
        if trace.verdict != Verdict::Aligned {
            return Err(PlannerError::NotAligned(trace.ids));
        }
        Ok(Plan {
            ordering: trace.ids.clone(),
            advisory: engine::viability_advisory(ordered)?,
            trace,
        })
    }

    pub fn ordering(&self) -> &[String] {
        &self.ordering
    }

    pub fn trace(&self) -> &SetTrace {
        &self.trace
    }

    pub fn advisory(&self) -> Viability {
        self.advisory
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("plan ordering needs {MIN_DEFENSES} to {MAX_DEFENSES} defenses, got {0}")]
    SetSize(usize),
    #[error("max_defenses must be between 1 and {MAX_DEFENSES}, got {0}")]
    MaxDefenses(usize),
    #[error("no goals given")]
    NoGoals,
    #[error("unknown goal `{0}` (not a risk token or catalog objective)")]
    UnknownGoal(String),
    #[error("no catalog defense covers goal(s): {}", .0.join(", "))]
    Uncovered(Vec<String>),
    #[error("ordering {0:?} is not conflict-free")]
    NotAligned(Vec<String>),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Every stage-monotone ordering of `defenses`, in lexicographic order of
/// their id sequences.
pub fn stage_monotone_orderings<'a>(
    defenses: &[&'a DefenseDescriptor],
) -> impl Iterator<Item = Vec<&'a DefenseDescriptor>> {
    let mut by_stage: BTreeMap<Stage, Vec<&'a DefenseDescriptor>> = BTreeMap::new();
    for d in defenses {
        by_stage.entry(d.stage).or_default().push(d);
    }
    // Stages occupy fixed positions, so lexicographic order over whole
    // sequences is the product of per-stage lexicographic permutations with
    // the earliest stage varying slowest.
    let groups: Vec<Vec<Vec<&'a DefenseDescriptor>>> = by_stage
        .into_values()
        .map(|mut g| {
            g.sort_by(|a, b| a.id.cmp(&b.id));
            let k = g.len();
            g.into_iter().permutations(k).collect()
        })
        .collect();
    groups.into_iter().multi_cartesian_product().map(|parts| parts.concat())
}

/// Returns the first conflict-free stage-monotone ordering, if any.
pub fn plan_ordering(defenses: &[&DefenseDescriptor]) -> Result<Option<Plan>, PlannerError> {
    if !(MIN_DEFENSES..=MAX_DEFENSES).contains(&defenses.len()) {
        return Err(PlannerError::SetSize(defenses.len()));
    }
    let mut seen = BTreeSet::new();
    for d in defenses {
        if !seen.insert(d.id.as_str()) {
            return Err(EngineError::DuplicateId(d.id.clone()).into());
        }
    }
    for ordering in stage_monotone_orderings(defenses) {
        if engine::predict_set(&ordering)?.verdict == Verdict::Aligned {
            return Plan::new(&ordering).map(Some);
        }
    }
    Ok(None)
}

/// A protection goal: a risk to defend against or an objective group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "token", rename_all = "lowercase")]
pub enum Goal {
    Risk(Risk),
    Objective(String),
}

impl Goal {
    /// Risk tokens take precedence over objective names.
    pub fn parse(token: &str, catalog: &Catalog) -> Result<Goal, PlannerError> {
        let risk = Risk::from_token(token);
        if risk.is_known() {
            return Ok(Goal::Risk(risk));
        }
        if catalog.iter().any(|d| d.objective == token) {
            return Ok(Goal::Objective(token.to_string()));
        }
        Err(PlannerError::UnknownGoal(token.to_string()))
    }

    pub fn covered_by(&self, d: &DefenseDescriptor) -> bool {
        match self {
            Goal::Risk(r) => d.protects(r),
            Goal::Objective(o) => &d.objective == o,
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::Risk(r) => write!(f, "{r}"),
            Goal::Objective(o) => write!(f, "{o}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GoalQuery {
    pub goals: BTreeSet<Goal>,
    pub max_defenses: usize,
}

impl GoalQuery {
    pub fn parse<S: AsRef<str>>(tokens: &[S], max_defenses: usize, catalog: &Catalog) -> Result<Self, PlannerError> {
        let goals = tokens
            .iter()
            .map(|t| Goal::parse(t.as_ref(), catalog))
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(GoalQuery { goals, max_defenses })
    }
}

/// A covering subset for which every ordering conflicts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockedSubset {
    pub ids: Vec<String>,
    /// Conflicting pairs of the first canonical ordering.
    pub blocking: Vec<PredictionTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoalPlans {
    pub plans: Vec<Plan>,
    pub blocked: Vec<BlockedSubset>,
    pub notes: Vec<String>,
}

/// Enumerates every covering subset of candidate defenses (at most one per
/// objective group, between two and `max_defenses` members) and plans each.
pub fn plan_for_goals(query: &GoalQuery, catalog: &Catalog) -> Result<GoalPlans, PlannerError> {
    if query.goals.is_empty() {
        return Err(PlannerError::NoGoals);
    }
    if !(1..=MAX_DEFENSES).contains(&query.max_defenses) {
        return Err(PlannerError::MaxDefenses(query.max_defenses));
    }
    let uncovered: Vec<String> = query
        .goals
        .iter()
        .filter(|g| !catalog.iter().any(|d| g.covered_by(d)))
        .map(|g| g.to_string())
        .collect();
    if !uncovered.is_empty() {
        return Err(PlannerError::Uncovered(uncovered));
    }

    let candidates: Vec<&DefenseDescriptor> = catalog
        .iter()
        .filter(|d| query.goals.iter().any(|g| g.covered_by(d)))
        .collect();

    let mut out = GoalPlans {
        plans: Vec::new(),
        blocked: Vec::new(),
        notes: Vec::new(),
    };
    let mut covering = 0usize;
    let upper = query.max_defenses.min(candidates.len());
    for size in MIN_DEFENSES..=upper {
        for subset in candidates.iter().copied().combinations(size) {
            let objectives: BTreeSet<&str> = subset.iter().map(|d| d.objective.as_str()).collect();
            if objectives.len() != subset.len() {
                continue;
            }
            if !query.goals.iter().all(|g| subset.iter().any(|d| g.covered_by(d))) {
                continue;
            }
            covering += 1;
            match plan_ordering(&subset)? {
                Some(plan) => out.plans.push(plan),
                None => {
                    let first = stage_monotone_orderings(&subset).next().expect("non-empty set");
                    let trace = engine::predict_set(&first)?;
                    let mut ids: Vec<String> = subset.iter().map(|d| d.id.clone()).collect();
                    ids.sort();
                    out.blocked.push(BlockedSubset {
                        ids,
                        blocking: trace.blocking().cloned().collect(),
                    });
                }
            }
        }
    }

    let key = |ids: &[String]| {
        let mut s = ids.to_vec();
        s.sort();
        (s.len(), s)
    };
    out.plans.sort_by_key(|p| key(&p.ordering));
    out.blocked.sort_by_key(|b| key(&b.ids));

    if covering == 0 {
        if query.max_defenses < MIN_DEFENSES {
            out.notes.push(format!(
                "need at least {MIN_DEFENSES} defenses; single-defense plans are not combinations"
            ));
        } else {
            out.notes.push(format!(
                "need at least {MIN_DEFENSES} defenses from distinct objective groups covering the goals within max {}",
                query.max_defenses
            ));
        }
    } else if out.plans.is_empty() {
        out.notes.push(format!(
            "no effective ordering: all {covering} covering subsets conflict"
        ));
    }
    Ok(out)
}
