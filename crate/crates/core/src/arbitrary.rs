//! proptest strategies for descriptors, catalogs and ground-truth records.

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::{btree_map, btree_set, vec};
use proptest::prelude::*;
use proptest::sample::select;

use crate::catalog::{
    Catalog, ChangeScope, DefenseDescriptor, MetricDirection, MetricSpec, Risk, RiskQualifier, Stage, UtilityImpact,
};
use crate::groundtruth::{Cohort, Dataset, Evidence, GroundTruthRecord, Label, Metric, MetricOutcome, OutcomeColor};

pub fn stage() -> impl Strategy<Value = Stage> {
    select(vec![Stage::Pre, Stage::In, Stage::Post])
}

pub fn change() -> impl Strategy<Value = ChangeScope> {
    select(vec![ChangeScope::Global, ChangeScope::Local, ChangeScope::None])
}

pub fn risk() -> impl Strategy<Value = Risk> {
    select(Risk::VOCABULARY.to_vec())
}

pub fn risk_set() -> impl Strategy<Value = BTreeSet<Risk>> {
    btree_set(risk(), 0..4)
}

pub fn protections() -> impl Strategy<Value = BTreeMap<Risk, Option<RiskQualifier>>> {
    btree_map(
        risk(),
        prop_oneof![
            Just(None),
            Just(Some(RiskQualifier::Explicit)),
            Just(Some(RiskQualifier::Unintended))
        ],
        0..4,
    )
}

/// A valid descriptor whose id is `{family}.{stage}` with the given family.
pub fn descriptor_for(family: String) -> impl Strategy<Value = DefenseDescriptor> {
    (
        stage(),
        change(),
        risk_set(),
        protections(),
        select(vec![UtilityImpact::Down, UtilityImpact::Same, UtilityImpact::Up]),
        select(vec!["a", "b", "c", "d", "e"]),
        prop::option::of((
            "[a-z]{1,6}",
            prop_oneof![Just(MetricDirection::Up), Just(MetricDirection::Down)],
        )),
        "[A-Za-z0-9 ()#-]{0,20}",
    )
        .prop_map(
            move |(stage, change, uses, prot, utility, objective, metric, name)| DefenseDescriptor {
                id: format!("{family}.{stage}"),
                family: family.clone(),
                display_name: name,
                stage,
                change,
                uses_risks: uses,
                protects_risks: prot,
                utility,
                objective: objective.to_string(),
                metric: metric.map(|(name, direction)| MetricSpec { name, direction }),
            },
        )
}

pub fn descriptor() -> impl Strategy<Value = DefenseDescriptor> {
    "[a-z][a-zA-Z]{0,4}".prop_flat_map(descriptor_for)
}

/// `n` descriptors with distinct ids, in arbitrary stage order.
pub fn descriptors(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<DefenseDescriptor>> {
    n.prop_flat_map(|n| (0..n).map(|i| descriptor_for(format!("d{i}"))).collect::<Vec<_>>())
}

/// `n` distinct descriptors sorted into stage-monotone order.
pub fn stage_monotone(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<DefenseDescriptor>> {
    descriptors(n).prop_map(|mut v| {
        v.sort_by_key(|d| d.stage);
        v
    })
}

pub fn catalog() -> impl Strategy<Value = Catalog> {
    (descriptors(0..=6), "[A-Za-z0-9 ,.()-]{0,30}")
        .prop_map(|(ds, prov)| Catalog::new(prov.trim().to_string(), ds).expect("valid by construction"))
}

pub fn color() -> impl Strategy<Value = OutcomeColor> {
    select(OutcomeColor::ALL.to_vec())
}

pub fn outcome() -> impl Strategy<Value = MetricOutcome> {
    (select(Dataset::ALL.to_vec()), select(Metric::ALL.to_vec()), color())
        .prop_map(|(dataset, metric, color)| MetricOutcome { dataset, metric, color })
}

/// Records over the ids of `catalog`, which must hold at least two
/// descriptors. Defense lists are stage-monotone.
pub fn records(catalog: Catalog) -> impl Strategy<Value = Vec<GroundTruthRecord>> {
    let ds: Vec<DefenseDescriptor> = catalog.descriptors().to_vec();
    let n = ds.len();
    let one = (
        proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 2..=n.min(4)),
        select(Cohort::ALL.to_vec()),
        btree_map(
            (select(Dataset::ALL.to_vec()), select(Metric::ALL.to_vec())),
            color(),
            1..5,
        ),
        select(Label::ALL.to_vec()),
        "[A-Za-z0-9 ,.()-]{0,30}",
    )
        .prop_map(move |(idx, cohort, outcomes, label, source)| {
            let mut picked: Vec<&DefenseDescriptor> = idx.iter().map(|&i| &ds[i]).collect();
            picked.sort_by_key(|d| d.stage);
            GroundTruthRecord {
                id: String::new(),
                defenses: picked.iter().map(|d| d.id.clone()).collect(),
                cohort,
                evidence: if cohort.has_outcomes() {
                    Evidence::Outcomes(
                        outcomes
                            .into_iter()
                            .map(|((dataset, metric), color)| MetricOutcome { dataset, metric, color })
                            .collect(),
                    )
                } else {
                    Evidence::DirectLabel(label)
                },
                source,
            }
        });
    vec(one, 0..8).prop_map(|mut rs| {
        for (i, r) in rs.iter_mut().enumerate() {
            r.id = format!("R{}", i + 1);
        }
        rs
    })
}
