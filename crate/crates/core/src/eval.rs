//! Scoring prediction techniques against ground truth.
//!
//! The positive class is an effective (aligned) combination. Balanced
//! accuracy is kept as an exact rational.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::engine::{self, EngineError, Step, Verdict};
use crate::groundtruth::{self, Cohort, GroundTruthRecord, Label, LabelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    Defcon,
    Naive,
}

impl Technique {
    pub fn as_str(self) -> &'static str {
        match self {
            Technique::Defcon => "defcon",
            Technique::Naive => "naive",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "defcon" => Ok(Technique::Defcon),
            "naive" => Ok(Technique::Naive),
            _ => Err(format!("unknown technique `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, prediction: Verdict, label: Label) {
        match (prediction, label) {
            (Verdict::Aligned, Label::Effective) => self.tp += 1,
            (Verdict::Conflict, Label::Ineffective) => self.tn += 1,
            (Verdict::Aligned, Label::Ineffective) => self.fp += 1,
            (Verdict::Conflict, Label::Effective) => self.fn_ += 1,
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TP={} TN={} FP={} FN={}", self.tp, self.tn, self.fp, self.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("nothing to score")]
    Empty,
    #[error("confusion matrix is all zero")]
    ZeroMatrix,
    #[error("record `{record}` references unknown defense `{defense}`")]
    UnresolvedDefense { record: String, defense: String },
    #[error("record `{record}`: {source}")]
    Engine { record: String, source: EngineError },
    #[error(transparent)]
    Label(#[from] LabelError),
}

pub fn confusion<I>(pairs: I) -> Result<ConfusionMatrix, EvalError>
where
    I: IntoIterator<Item = (Verdict, Label)>,
{
    let mut m = ConfusionMatrix::default();
    for (p, l) in pairs {
        m.record(p, l);
    }
    if m.total() == 0 {
        return Err(EvalError::Empty);
    }
    Ok(m)
}

/// Balanced accuracy. When one class is absent the defined rate is used on
/// its own and `degenerate` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalancedAccuracy {
    pub value: Ratio<u64>,
    pub tpr: Option<Ratio<u64>>,
    pub tnr: Option<Ratio<u64>>,
}

impl BalancedAccuracy {
    pub fn is_degenerate(&self) -> bool {
        self.tpr.is_none() || self.tnr.is_none()
    }

    /// Decimal rendering, rounded half-up.
    pub fn decimal(&self, places: u32) -> String {
        render_decimal(self.value, places)
    }
}

fn render_decimal(r: Ratio<u64>, places: u32) -> String {
    let scale = 10u64.pow(places);
    let (n, d) = (*r.numer() as u128, *r.denom() as u128);
    let scaled = (2 * n * scale as u128 + d) / (2 * d);
    let (int, frac) = (scaled / scale as u128, scaled % scale as u128);
    if places == 0 {
        int.to_string()
    } else {
        format!("{int}.{frac:0width$}", width = places as usize)
    }
}

impl Serialize for BalancedAccuracy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("BalancedAccuracy", 7)?;
        st.serialize_field("numerator", self.value.numer())?;
        st.serialize_field("denominator", self.value.denom())?;
        st.serialize_field("decimal", &self.decimal(4))?;
        st.serialize_field("percent", &render_decimal(self.value * 100, 2))?;
        st.serialize_field("degenerate", &self.is_degenerate())?;
        st.serialize_field("tpr", &self.tpr.map(|r| render_decimal(r, 4)))?;
        st.serialize_field("tnr", &self.tnr.map(|r| render_decimal(r, 4)))?;
        st.end()
    }
}

pub fn balanced_accuracy(m: &ConfusionMatrix) -> Result<BalancedAccuracy, EvalError> {
    let pos = m.tp + m.fn_;
    let neg = m.tn + m.fp;
    let tpr = (pos > 0).then(|| Ratio::new(m.tp, pos));
    let tnr = (neg > 0).then(|| Ratio::new(m.tn, neg));
    let value = match (tpr, tnr) {
        (Some(a), Some(b)) => (a + b) / 2,
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(EvalError::ZeroMatrix),
    };
    Ok(BalancedAccuracy { value, tpr, tnr })
}

/// Which ground-truth cohorts to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortSelector {
    Prior,
    Empirical,
    Scaling,
    Argued,
    All,
}

impl CohortSelector {
    pub fn matches(self, c: Cohort) -> bool {
        match self {
            CohortSelector::Prior => c == Cohort::Prior,
            CohortSelector::Empirical => c == Cohort::Empirical,
            CohortSelector::Scaling => c == Cohort::Scaling,
            CohortSelector::Argued => c == Cohort::Argued,
            CohortSelector::All => true,
        }
    }

    /// The single-cohort selectors covered by this one.
    pub fn expand(self) -> Vec<CohortSelector> {
        match self {
            CohortSelector::All => vec![
                CohortSelector::Prior,
                CohortSelector::Empirical,
                CohortSelector::Scaling,
                CohortSelector::Argued,
            ],
            one => vec![one],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CohortSelector::Prior => "prior",
            CohortSelector::Empirical => "empirical",
            CohortSelector::Scaling => "scaling",
            CohortSelector::Argued => "argued",
            CohortSelector::All => "all",
        }
    }
}

impl FromStr for CohortSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            CohortSelector::Prior,
            CohortSelector::Empirical,
            CohortSelector::Scaling,
            CohortSelector::Argued,
            CohortSelector::All,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| format!("unknown cohort `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub defenses: Vec<String>,
    pub prediction: Verdict,
    pub label: Label,
    pub fired_step: Option<Step>,
    #[serde(rename = "match")]
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvaluationReport {
    pub technique: Technique,
    pub cohort: CohortSelector,
    pub matrix: ConfusionMatrix,
    pub balanced_accuracy: BalancedAccuracy,
    pub rows: Vec<ReportRow>,
}

/// Predicts one record. DefCon walks every ordered pair; the naive
/// technique only looks at stages.
fn predict_record(
    technique: Technique,
    record: &GroundTruthRecord,
    catalog: &Catalog,
) -> Result<(Verdict, Option<Step>), EvalError> {
    let defenses = catalog
        .resolve(&record.defenses)
        .map_err(|defense| EvalError::UnresolvedDefense {
            record: record.id.clone(),
            defense,
        })?;
    let wrap = |source| EvalError::Engine {
        record: record.id.clone(),
        source,
    };
    match technique {
        Technique::Defcon => {
            let trace = engine::predict_set(&defenses).map_err(wrap)?;
            Ok((trace.verdict, trace.summary_step()))
        }
        Technique::Naive => Ok((engine::predict_naive(&defenses).map_err(wrap)?, None)),
    }
}

pub fn evaluate_technique(
    technique: Technique,
    cohort: CohortSelector,
    catalog: &Catalog,
    records: &[GroundTruthRecord],
) -> Result<EvaluationReport, EvalError> {
    let mut selected: Vec<&GroundTruthRecord> = records.iter().filter(|r| cohort.matches(r.cohort)).collect();
    if selected.is_empty() {
        return Err(EvalError::Empty);
    }
    selected.sort_by_key(|r| groundtruth::record_order_key(&r.id));

    let rows = selected
        .into_iter()
        .map(|r| {
            let (prediction, fired_step) = predict_record(technique, r, catalog)?;
            let label = groundtruth::derive_label(r)?;
            let matches = matches!(
                (prediction, label),
                (Verdict::Aligned, Label::Effective) | (Verdict::Conflict, Label::Ineffective)
            );
            Ok(ReportRow {
                id: r.id.clone(),
                defenses: r.defenses.clone(),
                prediction,
                label,
                fired_step,
                matches,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let matrix = confusion(rows.iter().map(|r| (r.prediction, r.label)))?;
    let balanced_accuracy = balanced_accuracy(&matrix)?;
    Ok(EvaluationReport {
        technique,
        cohort,
        matrix,
        balanced_accuracy,
        rows,
    })
}

impl EvaluationReport {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let ba = &self.balanced_accuracy;
        let _ = writeln!(out, "technique: {}  cohort: {}", self.technique, self.cohort.as_str());
        let _ = writeln!(out, "matrix:    {}", self.matrix);
        let _ = writeln!(
            out,
            "balanced accuracy: {} = {} ({}%){}",
            ba.value,
            ba.decimal(4),
            render_decimal(ba.value * 100, 2),
            if ba.is_degenerate() {
                "  [degenerate: only one class present]"
            } else {
                ""
            }
        );
        let w_id = self.rows.iter().map(|r| r.id.len()).max().unwrap_or(2).max(2);
        let defs: Vec<String> = self.rows.iter().map(|r| r.defenses.join(" -> ")).collect();
        let w_def = defs.iter().map(String::len).max().unwrap_or(8).max(8);
        let _ = writeln!(
            out,
            "{:<w_id$}  {:<w_def$}  {:<10}  {:<11}  {:<21}  match",
            "id", "defenses", "prediction", "label", "step"
        );
        for (r, d) in self.rows.iter().zip(&defs) {
            let _ = writeln!(
                out,
                "{:<w_id$}  {:<w_def$}  {:<10}  {:<11}  {:<21}  {}",
                r.id,
                d,
                r.prediction.as_str(),
                r.label.as_str(),
                r.fired_step.map_or("-", Step::as_str),
                if r.matches { "yes" } else { "NO" }
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ba(tp: u64, tn: u64, fp: u64, fn_: u64) -> BalancedAccuracy {
        balanced_accuracy(&ConfusionMatrix::new(tp, tn, fp, fn_)).unwrap()
    }

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(ba(4, 3, 0, 1).value, Ratio::new(9, 10));
        assert_eq!(ba(4, 3, 0, 1).decimal(4), "0.9000");
        assert_eq!(ba(22, 5, 3, 0).value, Ratio::new(13, 16));
        assert_eq!(ba(22, 5, 3, 0).decimal(4), "0.8125");
        assert_eq!(ba(16, 0, 8, 6).value, Ratio::new(4, 11));
        assert_eq!(ba(16, 0, 8, 6).decimal(4), "0.3636");
        for k in 1..20 {
            assert_eq!(ba(k, k, 0, 0).value, Ratio::from_integer(1));
        }
    }

    #[test]
    fn degenerate_and_zero() {
        let b = ba(0, 10, 0, 0);
        assert!(b.is_degenerate());
        assert_eq!(b.value, Ratio::from_integer(1));
        assert_eq!(
            balanced_accuracy(&ConfusionMatrix::default()),
            Err(EvalError::ZeroMatrix)
        );
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(render_decimal(Ratio::new(1, 8), 2), "0.13");
        assert_eq!(render_decimal(Ratio::new(2, 3), 4), "0.6667");
        assert_eq!(render_decimal(Ratio::new(1, 1), 4), "1.0000");
        assert_eq!(render_decimal(Ratio::new(1300, 16), 2), "81.25");
    }

    #[test]
    fn confusion_counts() {
        use Label::*;
        use Verdict::*;
        assert_eq!(
            confusion([(Aligned, Effective), (Conflict, Ineffective)]),
            Ok(ConfusionMatrix::new(1, 1, 0, 0))
        );
        assert_eq!(
            confusion([(Aligned, Ineffective), (Conflict, Effective)]),
            Ok(ConfusionMatrix::new(0, 0, 1, 1))
        );
        assert_eq!(confusion(Vec::new()), Err(EvalError::Empty));
    }

    #[test]
    fn json_key_order_is_stable() {
        let gt = groundtruth::builtin_groundtruth();
        let cat = crate::catalog::builtin_catalog();
        let r = evaluate_technique(Technique::Defcon, CohortSelector::Prior, &cat, &gt).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let pos: Vec<usize> = [
            "\"technique\"",
            "\"cohort\"",
            "\"matrix\"",
            "\"balanced_accuracy\"",
            "\"rows\"",
        ]
        .iter()
        .map(|k| s.find(k).unwrap())
        .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(s.contains("\"matrix\":{\"tp\":4,\"tn\":3,\"fp\":0,\"fn\":1}"));
        assert!(s.contains("\"numerator\":9,\"denominator\":10,\"decimal\":\"0.9000\""));
    }
}
