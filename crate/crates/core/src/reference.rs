//! Slow, independent reference implementations used to cross-check the
//! engine and planner in tests.

use crate::catalog::{ChangeScope, DefenseDescriptor};
use crate::engine::{predict_set, Verdict};

/// Pair rule written directly from the decision table, without traces.
pub fn pair_conflicts(d1: &DefenseDescriptor, d2: &DefenseDescriptor) -> bool {
    if d1.stage == d2.stage {
        return d2.change == ChangeScope::Global;
    }
    d1.uses_risks.iter().any(|r| d2.protects_risks.contains_key(r))
}

pub fn set_conflicts(ordered: &[&DefenseDescriptor]) -> bool {
    (0..ordered.len()).any(|i| (i + 1..ordered.len()).any(|j| pair_conflicts(ordered[i], ordered[j])))
}

/// All `n!` orderings of `items`, generated with Heap's algorithm.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn heap<T: Clone>(k: usize, a: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut out = Vec::new();
    heap(items.len(), &mut items.to_vec(), &mut out);
    out
}

/// Lexicographically smallest conflict-free stage-monotone ordering, found
/// by trying every permutation. Verdicts come from the engine so the search
/// itself is what gets compared against the planner.
pub fn brute_force_plan(defenses: &[&DefenseDescriptor]) -> Option<Vec<String>> {
    permutations(defenses)
        .into_iter()
        .filter(|o| o.windows(2).all(|w| w[0].stage <= w[1].stage))
        .filter(|o| predict_set(o).map(|t| t.verdict == Verdict::Aligned).unwrap_or(false))
        .map(|o| o.iter().map(|d| d.id.clone()).collect::<Vec<_>>())
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_agrees_with_reference_rule() {
        let c = crate::catalog::builtin_catalog();
        let ds: Vec<&DefenseDescriptor> = c.resolve(&["wmM.post", "expl.post", "out.post"]).unwrap();
        let want = permutations(&ds)
            .into_iter()
            .filter(|o| o.windows(2).all(|w| w[0].stage <= w[1].stage) && !set_conflicts(o))
            .map(|o| o.iter().map(|d| d.id.clone()).collect::<Vec<_>>())
            .min();
        assert_eq!(brute_force_plan(&ds), want);
    }

    #[test]
    fn heap_yields_all_distinct_permutations() {
        let mut p = permutations(&[1, 2, 3, 4]);
        assert_eq!(p.len(), 24);
        p.sort();
        p.dedup();
        assert_eq!(p.len(), 24);
    }
}
