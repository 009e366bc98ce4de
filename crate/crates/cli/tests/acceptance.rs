//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use defcomp_core::arbitrary;
use defcomp_core::catalog::{builtin_catalog, parse_catalog, serialize_catalog, ChangeScope, DefenseDescriptor};
use defcomp_core::engine::{enumerate_pairs, predict_naive, predict_pair, predict_set, Step, Verdict};
use defcomp_core::groundtruth::{
    builtin_groundtruth, derive_label, parse_groundtruth, serialize_groundtruth, Cohort, Evidence, Label, OutcomeColor,
};
use defcomp_core::planner::plan_ordering;
use defcomp_core::reference;
use defcomp_core::ParseMode;
use itertools::Itertools;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

const CASES: u32 = 1000;

fn defcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defcomp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

/// Runs `evaluate` through the binary and returns (tp, tn, fp, fn, num, den)
/// per technique for one cohort.
fn evaluate_json(cohort: &str) -> Result<Vec<(String, [u64; 6])>, String> {
    let out = defcomp(&[
        "evaluate",
        "--technique",
        "both",
        "--cohort",
        cohort,
        "--format",
        "json",
    ]);
    check(
        out.status.code() == Some(0),
        format!("evaluate exited with {:?}", out.status.code()),
    )?;
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let reports = v["reports"].as_array().ok_or("no reports array")?;
    Ok(reports
        .iter()
        .map(|r| {
            let m = &r["matrix"];
            let ba = &r["balanced_accuracy"];
            let n = |x: &Value| x.as_u64().unwrap_or(u64::MAX);
            (
                r["technique"].as_str().unwrap_or("?").to_string(),
                [
                    n(&m["tp"]),
                    n(&m["tn"]),
                    n(&m["fp"]),
                    n(&m["fn"]),
                    n(&ba["numerator"]),
                    n(&ba["denominator"]),
                ],
            )
        })
        .collect())
}

fn golden_cohort(cohort: &str, defcon: [u64; 6], naive: [u64; 6]) -> Result<(), String> {
    let got = evaluate_json(cohort)?;
    let want = vec![("defcon".to_string(), defcon), ("naive".to_string(), naive)];
    check(got == want, format!("got {got:?}, want {want:?}"))
}

fn criterion_prior() -> Result<(), String> {
    golden_cohort("prior", [4, 3, 0, 1, 9, 10], [4, 0, 3, 1, 2, 5])
}

fn criterion_empirical() -> Result<(), String> {
    golden_cohort("empirical", [22, 5, 3, 0, 13, 16], [16, 0, 8, 6, 4, 11])?;
    let out = defcomp(&["evaluate", "--technique", "defcon", "--cohort", "empirical"]);
    let text = String::from_utf8_lossy(&out.stdout);
    check(
        text.contains("81.25%"),
        "DefCon empirical accuracy does not render as 81.25%",
    )
}

fn criterion_per_combination() -> Result<(), String> {
    const DEFCON: [&str; 9] = ["C4", "C5", "C6", "C7", "C21", "C23", "C36", "C37", "C38"];
    const NAIVE: [&str; 7] = ["C1", "C11", "C20", "C28", "C29", "C33", "C34"];
    let c = builtin_catalog();
    let mut mismatches = Vec::new();
    let mut n = 0;
    for r in builtin_groundtruth()
        .iter()
        .filter(|r| matches!(r.cohort, Cohort::Prior | Cohort::Empirical))
    {
        n += 1;
        let ds = c.resolve(&r.defenses)?;
        let defcon = predict_set(&ds).map_err(|e| e.to_string())?.verdict == Verdict::Conflict;
        let naive = predict_naive(&ds).map_err(|e| e.to_string())? == Verdict::Conflict;
        if defcon != DEFCON.contains(&r.id.as_str()) {
            mismatches.push(format!("defcon {}", r.id));
        }
        if naive != NAIVE.contains(&r.id.as_str()) {
            mismatches.push(format!("naive {}", r.id));
        }
    }
    check(n == 38, format!("expected 38 pairwise combinations, found {n}"))?;
    check(mismatches.is_empty(), format!("mismatches: {mismatches:?}"))
}

fn criterion_scaling() -> Result<(), String> {
    let c = builtin_catalog();
    let gt = builtin_groundtruth();
    let mut scaling = 0;
    let mut argued = 0;
    for r in &gt {
        let ds = c.resolve(&r.defenses)?;
        let t = predict_set(&ds).map_err(|e| e.to_string())?;
        match r.cohort {
            Cohort::Scaling => {
                scaling += 1;
                check(
                    ds.len() == 3 && t.verdict == Verdict::Aligned,
                    format!("{} not an aligned triple", r.id),
                )?;
            }
            Cohort::Argued => {
                argued += 1;
                check(
                    t.verdict == Verdict::Conflict && t.summary_step() == Some(Step::SameStageGlobalOverride),
                    format!("{} is not a global-override conflict", r.id),
                )?;
            }
            _ => {}
        }
    }
    check(
        scaling == 6 && argued == 10,
        format!("found {scaling} scaling and {argued} argued records"),
    )
}

fn criterion_enumeration() -> Result<(), String> {
    let c = builtin_catalog().without_context();
    check(c.len() == 11, format!("{} evaluated descriptors", c.len()))?;
    let pairs = enumerate_pairs(&c);
    check(pairs.len() == 48, format!("{} pairs", pairs.len()))?;
    let kept: BTreeSet<BTreeSet<&str>> = pairs
        .iter()
        .map(|(a, b)| [a.id.as_str(), b.id.as_str()].into_iter().collect())
        .collect();
    let excluded: Vec<(&str, &str)> = c
        .iter()
        .tuple_combinations()
        .filter(|(a, b)| !kept.contains(&[a.id.as_str(), b.id.as_str()].into_iter().collect()))
        .map(|(a, b)| (a.id.as_str(), b.id.as_str()))
        .collect();
    check(excluded.len() == 7, format!("excluded {excluded:?}"))?;
    check(
        c.iter()
            .tuple_combinations()
            .all(|(a, b): (&DefenseDescriptor, &DefenseDescriptor)| {
                (a.objective == b.objective) != kept.contains(&[a.id.as_str(), b.id.as_str()].into_iter().collect())
            }),
        "exclusion does not coincide with shared objectives",
    )?;
    let out = defcomp(&["enumerate", "--format", "json"]);
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    check(v["count"] == 48, "CLI enumerate does not report 48 pairs")
}

fn run_property<S, F>(name: &str, strategy: S, test: F) -> Result<(), String>
where
    S: Strategy,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn criterion_properties() -> Result<(), String> {
    run_property(
        "same stage local/none is aligned",
        arbitrary::descriptors(2..=2),
        |mut v| {
            v[1].stage = v[0].stage;
            v[1].change = if v[1].change == ChangeScope::Global {
                ChangeScope::Local
            } else {
                v[1].change
            };
            prop_assert_eq!(predict_pair(&v[0], &v[1]).unwrap().verdict, Verdict::Aligned);
            Ok(())
        },
    )?;
    run_property(
        "same stage global is conflict",
        arbitrary::descriptors(2..=2),
        |mut v| {
            v[1].stage = v[0].stage;
            v[1].change = ChangeScope::Global;
            prop_assert_eq!(predict_pair(&v[0], &v[1]).unwrap().verdict, Verdict::Conflict);
            Ok(())
        },
    )?;
    let cross = arbitrary::stage_monotone(2..=2).prop_filter("distinct stages", |v| v[0].stage < v[1].stage);
    run_property("cross-stage conflict iff risk overlap", cross, |v| {
        let overlap = v[0].uses_risks.iter().any(|r| v[1].protects_risks.contains_key(r));
        prop_assert_eq!(
            predict_pair(&v[0], &v[1]).unwrap().verdict == Verdict::Conflict,
            overlap
        );
        Ok(())
    })?;
    run_property("naive iff repeated stage", arbitrary::descriptors(2..=6), |v| {
        let stages: BTreeSet<_> = v.iter().map(|d| d.stage).collect();
        let r: Vec<&DefenseDescriptor> = v.iter().collect();
        prop_assert_eq!(predict_naive(&r).unwrap() == Verdict::Conflict, stages.len() < v.len());
        Ok(())
    })?;
    run_property("extension monotonicity", arbitrary::stage_monotone(3..=6), |v| {
        let r: Vec<&DefenseDescriptor> = v.iter().collect();
        let full = predict_set(&r).unwrap().verdict;
        for k in 2..r.len() {
            if predict_set(&r[..k]).unwrap().verdict == Verdict::Conflict {
                prop_assert_eq!(full, Verdict::Conflict);
            }
        }
        Ok(())
    })?;
    run_property("set/pair agreement", arbitrary::stage_monotone(2..=2), |v| {
        let pair = predict_pair(&v[0], &v[1]).unwrap();
        let set = predict_set(&[&v[0], &v[1]]).unwrap();
        prop_assert_eq!(set.verdict, pair.verdict);
        prop_assert_eq!(&set.pair_traces[0], &pair);
        Ok(())
    })?;
    run_property("DEFCAT round trip", arbitrary::catalog(), |c| {
        let parsed = parse_catalog(&serialize_catalog(&c), ParseMode::Strict).unwrap().value;
        prop_assert_eq!(parsed, c);
        Ok(())
    })?;
    let with_records = arbitrary::catalog()
        .prop_filter("two or more defenses", |c| c.len() >= 2)
        .prop_flat_map(|c| (Just(c.clone()), arbitrary::records(c)));
    run_property("GTRUTH round trip", with_records, |(c, rs)| {
        let parsed = parse_groundtruth(&serialize_groundtruth(&rs), &c).unwrap().value;
        prop_assert_eq!(parsed, rs);
        Ok(())
    })?;
    let worsen = (arbitrary::records(builtin_catalog()), any::<usize>());
    run_property("label colour monotonicity", worsen, |(rs, pick)| {
        for mut r in rs {
            let before = derive_label(&r).unwrap();
            if let Evidence::Outcomes(os) = &mut r.evidence {
                let i = pick % os.len();
                os[i].color = match os[i].color {
                    OutcomeColor::Green => OutcomeColor::Orange,
                    _ => OutcomeColor::Red,
                };
                let after = derive_label(&r).unwrap();
                prop_assert_eq!(after, Label::Ineffective);
                prop_assert!(before == Label::Effective || after == Label::Ineffective);
            }
        }
        Ok(())
    })
}

fn criterion_planner_oracle() -> Result<(), String> {
    let c = builtin_catalog();
    let all: Vec<&DefenseDescriptor> = c.iter().collect();
    let mut checked = 0;
    for size in 2..=4 {
        for subset in all.iter().copied().combinations(size) {
            let objectives: BTreeSet<&str> = subset.iter().map(|d| d.objective.as_str()).collect();
            if objectives.len() != subset.len() {
                continue;
            }
            let got = plan_ordering(&subset)
                .map_err(|e| e.to_string())?
                .map(|p| p.ordering().to_vec());
            let want = reference::brute_force_plan(&subset);
            check(
                got == want,
                format!(
                    "{:?}: planner {got:?}, brute force {want:?}",
                    subset.iter().map(|d| &d.id).collect::<Vec<_>>()
                ),
            )?;
            checked += 1;
        }
    }
    check(checked > 0, "no subsets checked")
}

fn corpus() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .expect("corpus dir")
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
}

fn criterion_robustness() -> Result<(), String> {
    let files = corpus();
    check(files.len() >= 20, format!("corpus has only {} documents", files.len()))?;
    let mut failures = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| e.to_string())?;
        let want_line: usize = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# expect-line: "))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| format!("{} lacks an expect-line header", f.display()))?;
        let path = f.to_str().unwrap();
        let out = match f.extension().and_then(|e| e.to_str()) {
            Some("defcat") => defcomp(&["catalog", "validate", path]),
            _ => defcomp(&["evaluate", "--groundtruth", path]),
        };
        let stderr = String::from_utf8_lossy(&out.stderr);
        let lines: Vec<&str> = stderr.lines().collect();
        let ok = out.status.code() == Some(1)
            && lines.len() == 1
            && lines[0].contains(&format!(": line {want_line}: error: "));
        if !ok {
            failures.push(format!(
                "{}: exit {:?}, stderr {stderr:?}",
                f.display(),
                out.status.code()
            ));
        }
    }
    check(failures.is_empty(), failures.join("; "))
}

#[test]
fn acceptance() {
    type Criterion = fn() -> Result<(), String>;
    let criteria: [(&str, Criterion); 8] = [
        ("prior-cohort golden", criterion_prior),
        ("empirical-cohort golden", criterion_empirical),
        ("per-combination golden", criterion_per_combination),
        ("scaling and argued golden", criterion_scaling),
        ("enumeration golden", criterion_enumeration),
        ("property suites", criterion_properties),
        ("planner oracle", criterion_planner_oracle),
        ("robustness corpus", criterion_robustness),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(()) => println!("[PASS] {}. {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {why}", i + 1);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
