use std::collections::BTreeSet;

use defcomp_core::arbitrary;
use defcomp_core::catalog::{builtin_catalog, DefenseDescriptor};
use defcomp_core::engine::{predict_set, Verdict};
use defcomp_core::planner::plan_ordering;
use defcomp_core::reference;
use itertools::Itertools;
use proptest::prelude::*;

fn distinct_objectives(s: &[&DefenseDescriptor]) -> bool {
    s.iter().map(|d| d.objective.as_str()).collect::<BTreeSet<_>>().len() == s.len()
}

#[test]
fn planner_matches_brute_force_on_builtin_subsets() {
    let c = builtin_catalog();
    let all: Vec<&DefenseDescriptor> = c.iter().collect();
    let mut checked = 0;
    for size in 2..=4 {
        for subset in all.iter().copied().combinations(size) {
            if !distinct_objectives(&subset) {
                continue;
            }
            let got = plan_ordering(&subset).unwrap().map(|p| p.ordering().to_vec());
            assert_eq!(
                got,
                reference::brute_force_plan(&subset),
                "{:?}",
                subset.iter().map(|d| &d.id).collect::<Vec<_>>()
            );
            checked += 1;
        }
    }
    assert!(checked > 300, "only {checked} subsets");
}

#[test]
fn engine_matches_reference_rule_on_builtin_pairs() {
    let c = builtin_catalog();
    for a in c.iter() {
        for b in c.iter() {
            if a.id != b.id && a.stage <= b.stage {
                let v = predict_set(&[a, b]).unwrap().verdict;
                assert_eq!(
                    v == Verdict::Conflict,
                    reference::pair_conflicts(a, b),
                    "{} {}",
                    a.id,
                    b.id
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn planner_matches_brute_force_on_random_sets(v in arbitrary::descriptors(2..=5)) {
        let r: Vec<&DefenseDescriptor> = v.iter().collect();
        let got = plan_ordering(&r).unwrap().map(|p| p.ordering().to_vec());
        prop_assert_eq!(got, reference::brute_force_plan(&r));
    }
}
