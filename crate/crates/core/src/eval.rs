//! Precision/recall evaluation with per-market, per-language and
//! per-publisher-segment slices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Segment};
use crate::model::{ScoreError, Scorer};
use crate::scalar::Scalar;
use crate::text::sha256_hex;

pub const DEFAULT_CUTOFF: f64 = 0.5;
pub const NATIONAL_CUTOFF: f64 = 0.7;
pub const UNDEFINED: &str = "–";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("cutoff must lie in (0, 1), got {0}")]
    InvalidCutoff(f64),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("reports cover different test sets ({0} vs {1})")]
    TestSetMismatch(String, String),
    #[error("unknown slice kind {0:?} (expected market, language or publisher_segment)")]
    UnknownSlice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    Market,
    Language,
    PublisherSegment,
}

impl FromStr for SliceKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "market" => Ok(SliceKind::Market),
            "language" => Ok(SliceKind::Language),
            "publisher_segment" => Ok(SliceKind::PublisherSegment),
            other => Err(EvalError::UnknownSlice(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SliceKey {
    Aggregate,
    Market(String),
    Language(String),
    PublisherSegment(String),
}

impl SliceKey {
    pub fn label(&self) -> String {
        match self {
            SliceKey::Aggregate => "all".to_string(),
            SliceKey::Market(v) => format!("market={v}"),
            SliceKey::Language(v) => format!("language={v}"),
            SliceKey::PublisherSegment(v) => format!("segment={v}"),
        }
    }
}

const NO_SEGMENT: &str = "Unknown";

/// A gold-labeled test item with the text its scorer should see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub market: String,
    pub language: String,
    pub publisher_segment: Option<Segment>,
    pub gold: Label,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub id: String,
    pub market: String,
    pub language: String,
    pub publisher_segment: Option<Segment>,
    pub gold: Label,
    pub score: f64,
}

impl ScoredExample {
    fn slice_key(&self, kind: SliceKind) -> SliceKey {
        match kind {
            SliceKind::Market => SliceKey::Market(self.market.clone()),
            SliceKind::Language => SliceKey::Language(self.language.clone()),
            SliceKind::PublisherSegment => SliceKey::PublisherSegment(
                self.publisher_segment.map_or(NO_SEGMENT, Segment::as_str).to_string(),
            ),
        }
    }
}

/// Confusion counts. `merge` is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn record(&mut self, gold: Label, predicted: Label) {
        match (gold, predicted) {
            (Label::Local, Label::Local) => self.tp += 1,
            (Label::NonLocal, Label::Local) => self.fp += 1,
            (Label::Local, Label::NonLocal) => self.fn_ += 1,
            (Label::NonLocal, Label::NonLocal) => self.tn += 1,
        }
    }

    pub fn merge(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }

    pub fn support(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn gold_local(&self) -> u64 {
        self.tp + self.fn_
    }

    /// `None` when nothing was predicted local.
    pub fn precision<T: Scalar>(&self) -> Option<T> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `None` when nothing is gold local.
    pub fn recall<T: Scalar>(&self) -> Option<T> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio<T: Scalar>(num: u64, den: u64) -> Option<T> {
    (den > 0).then(|| T::of_u64(num) / T::of_u64(den))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics<T> {
    pub key: SliceKey,
    pub cutoff: T,
    #[serde(flatten)]
    pub counts: Counts,
    pub support: u64,
    pub gold_local: u64,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub local_share: Option<T>,
}

impl<T: Scalar> SliceMetrics<T> {
    fn new(key: SliceKey, cutoff: T, counts: Counts) -> SliceMetrics<T> {
        SliceMetrics {
            key,
            cutoff,
            support: counts.support(),
            gold_local: counts.gold_local(),
            precision: counts.precision(),
            recall: counts.recall(),
            local_share: ratio(counts.gold_local(), counts.support()),
            counts,
        }
    }
}

/// `report.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub scorer: String,
    pub test_set_hash: String,
    pub test_size: usize,
    pub cutoffs: Vec<T>,
    pub slices: Vec<SliceMetrics<T>>,
}

impl<T: Scalar> EvalReport<T> {
    pub fn get(&self, key: &SliceKey, cutoff: T) -> Option<&SliceMetrics<T>> {
        self.slices.iter().find(|s| &s.key == key && s.cutoff == cutoff)
    }

    pub fn aggregate(&self, cutoff: T) -> Option<&SliceMetrics<T>> {
        self.get(&SliceKey::Aggregate, cutoff)
    }
}

/// Content hash of a test set's identity (ids, gold labels, slice keys),
/// independent of order and of the text view each scorer receives.
pub fn test_set_hash<'a>(items: impl IntoIterator<Item = (&'a str, Label, &'a str, &'a str, Option<Segment>)>) -> String {
    let mut lines: Vec<String> = items
        .into_iter()
        .map(|(id, gold, market, language, seg)| {
            format!("{id}\t{}\t{market}\t{language}\t{}", gold.as_int(), seg.map_or(NO_SEGMENT, Segment::as_str))
        })
        .collect();
    lines.sort();
    sha256_hex(lines.join("\n").as_bytes())
}

/// Scores every example and evaluates at one cutoff.
pub fn evaluate<T: Scalar, S: Scorer + ?Sized>(
    test: &[EvalExample],
    scorer: &S,
    cutoff: T,
    slices: &[SliceKind],
) -> Result<EvalReport<T>, EvalError> {
    let scored = score_all(test, scorer)?;
    evaluate_scored(&scored, scorer.name(), &[cutoff], slices)
}

pub fn score_all<S: Scorer + ?Sized>(test: &[EvalExample], scorer: &S) -> Result<Vec<ScoredExample>, EvalError> {
    test.iter()
        .map(|e| {
            Ok(ScoredExample {
                id: e.id.clone(),
                market: e.market.clone(),
                language: e.language.clone(),
                publisher_segment: e.publisher_segment,
                gold: e.gold,
                score: scorer.score(&e.text)?,
            })
        })
        .collect()
}

/// Metrics for already-scored examples. Predicted local ⇔ score ≥ cutoff.
pub fn evaluate_scored<T: Scalar>(
    scored: &[ScoredExample],
    scorer_name: &str,
    cutoffs: &[T],
    slices: &[SliceKind],
) -> Result<EvalReport<T>, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    for &c in cutoffs {
        if !(c > T::zero() && c < T::one()) {
            return Err(EvalError::InvalidCutoff(c.as_f64()));
        }
    }
    let mut kinds: Vec<SliceKind> = slices.to_vec();
    kinds.sort();
    kinds.dedup();

    let mut out = Vec::new();
    for &cutoff in cutoffs {
        let mut per_key: BTreeMap<SliceKey, Counts> = BTreeMap::new();
        if kinds.contains(&SliceKind::PublisherSegment) {
            for s in Segment::ALL {
                per_key.insert(SliceKey::PublisherSegment(s.as_str().to_string()), Counts::default());
            }
        }
        let mut total = Counts::default();
        for e in scored {
            let predicted = if T::of(e.score) >= cutoff { Label::Local } else { Label::NonLocal };
            total.record(e.gold, predicted);
            for &k in &kinds {
                per_key.entry(e.slice_key(k)).or_default().record(e.gold, predicted);
            }
        }
        out.push(SliceMetrics::new(SliceKey::Aggregate, cutoff, total));
        out.extend(per_key.into_iter().map(|(k, c)| SliceMetrics::new(k, cutoff, c)));
    }
    Ok(EvalReport {
        scorer: scorer_name.to_string(),
        test_set_hash: test_set_hash(
            scored
                .iter()
                .map(|e| (e.id.as_str(), e.gold, e.market.as_str(), e.language.as_str(), e.publisher_segment)),
        ),
        test_size: scored.len(),
        cutoffs: cutoffs.to_vec(),
        slices: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow<T> {
    pub key: SliceKey,
    pub cutoff: T,
    pub precision_a: Option<T>,
    pub precision_b: Option<T>,
    pub delta_precision: Option<T>,
    pub recall_a: Option<T>,
    pub recall_b: Option<T>,
    pub delta_recall: Option<T>,
}

/// `compare.json`: per-slice `a - b` deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable<T> {
    pub scorer_a: String,
    pub scorer_b: String,
    pub test_set_hash: String,
    pub rows: Vec<DeltaRow<T>>,
}

fn delta<T: Scalar>(a: Option<T>, b: Option<T>) -> Option<T> {
    Some(a? - b?)
}

pub fn compare<T: Scalar>(a: &EvalReport<T>, b: &EvalReport<T>) -> Result<DeltaTable<T>, EvalError> {
    if a.test_set_hash != b.test_set_hash {
        return Err(EvalError::TestSetMismatch(a.test_set_hash.clone(), b.test_set_hash.clone()));
    }
    let rows = a
        .slices
        .iter()
        .filter_map(|sa| {
            let sb = b.get(&sa.key, sa.cutoff)?;
            Some(DeltaRow {
                key: sa.key.clone(),
                cutoff: sa.cutoff,
                precision_a: sa.precision,
                precision_b: sb.precision,
                delta_precision: delta(sa.precision, sb.precision),
                recall_a: sa.recall,
                recall_b: sb.recall,
                delta_recall: delta(sa.recall, sb.recall),
            })
        })
        .collect();
    Ok(DeltaTable {
        scorer_a: a.scorer.clone(),
        scorer_b: b.scorer.clone(),
        test_set_hash: a.test_set_hash.clone(),
        rows,
    })
}

fn cell<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{:.3}", x.as_f64()))
}

fn signed<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{:+.3}", x.as_f64()))
}

/// `report.md`
pub fn render_report<T: Scalar>(r: &EvalReport<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Evaluation: {}\n", r.scorer);
    let _ = writeln!(s, "test set: {} examples, sha256 `{}`\n", r.test_size, r.test_set_hash);
    let _ = writeln!(s, "| slice | cutoff | support | local share | TP | FP | FN | precision | recall |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
    for m in &r.slices {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {} | {} | {} | {} | {} | {} | {} |",
            m.key.label(),
            m.cutoff.as_f64(),
            m.support,
            cell(m.local_share),
            m.counts.tp,
            m.counts.fp,
            m.counts.fn_,
            cell(m.precision),
            cell(m.recall)
        );
    }
    s
}

/// `compare.md`
pub fn render_compare<T: Scalar>(t: &DeltaTable<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} vs {}\n", t.scorer_a, t.scorer_b);
    let _ = writeln!(s, "| slice | cutoff | P ({}) | P ({}) | ΔP | R ({}) | R ({}) | ΔR |", t.scorer_a, t.scorer_b, t.scorer_a, t.scorer_b);
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {} | {} | {} | {} | {} | {} |",
            r.key.label(),
            r.cutoff.as_f64(),
            cell(r.precision_a),
            cell(r.precision_b),
            signed(r.delta_precision),
            cell(r.recall_a),
            cell(r.recall_b),
            signed(r.delta_recall)
        );
    }
    s
}
