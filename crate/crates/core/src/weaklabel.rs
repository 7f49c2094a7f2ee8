//! Weak labels from publisher marks, click affinity, distant supervision and
//! bootstrap correction, each carrying the chain of rules that produced it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::ArticleAffinity;
use crate::corpus::{Article, Label, LabeledExample, RuleTag, Segment};
use crate::text::normalize;

pub const DEFAULT_FLIP_LOW: f64 = 0.2;
pub const DEFAULT_FLIP_HIGH: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("p_local must lie in [0, 1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("flip band must satisfy 0 <= low < high <= 1, got low={low} high={high}")]
    InvalidBand { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDecision {
    pub article_id: String,
    pub label: Label,
    pub source: RuleTag,
    #[serde(default)]
    pub prior_label: Option<Label>,
    #[serde(default)]
    pub flip_score: Option<f64>,
    /// Lower-precedence rules that voted for the other label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overridden: Vec<RuleTag>,
}

/// Highest-precedence available verdict: article affinity, then publisher
/// segment, then the publisher's own mark. `None` excludes the article.
pub fn base_label(article: &Article, segment: Option<Segment>, article_aff: &ArticleAffinity) -> Option<LabelDecision> {
    let mut votes: Vec<(RuleTag, Label)> = Vec::with_capacity(3);
    match article_aff {
        ArticleAffinity::Local { .. } => votes.push((RuleTag::ArticleAffinity, Label::Local)),
        ArticleAffinity::NonLocal => votes.push((RuleTag::ArticleAffinity, Label::NonLocal)),
        ArticleAffinity::Unknown => {}
    }
    match segment {
        Some(Segment::StrongLocal) => votes.push((RuleTag::StrongLocalPublisher, Label::Local)),
        Some(Segment::StrongNonLocal) => votes.push((RuleTag::StrongNonLocalPublisher, Label::NonLocal)),
        Some(Segment::Ambiguous) | None => {}
    }
    if let Some(mark) = article.publisher_label {
        votes.push((RuleTag::PublisherMarked, mark));
    }
    let (&(source, label), rest) = votes.split_first()?;
    Some(LabelDecision {
        article_id: article.id.clone(),
        label,
        source,
        prior_label: None,
        flip_score: None,
        overridden: rest.iter().filter(|(_, l)| *l != label).map(|(t, _)| *t).collect(),
    })
}

/// URL key for record matching: host without `www.`, path without trailing
/// slash, no scheme, query or fragment.
pub fn normalize_url(raw: &str) -> Option<String> {
    let u = url::Url::parse(raw.trim()).ok()?;
    let host = u.host_str()?.to_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    let path = u.path().trim_end_matches('/').to_lowercase();
    Some(format!("{host}{path}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConflict {
    pub article_id: String,
    pub licensed_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistantSupervision {
    pub decisions: Vec<LabelDecision>,
    pub conflicts: Vec<MatchConflict>,
}

/// Read-only index over licensed articles by normalized URL and title.
#[derive(Debug, Default)]
pub struct MatchIndex<'a> {
    by_url: HashMap<String, Vec<(&'a str, Label)>>,
    by_title: HashMap<String, Vec<(&'a str, Label)>>,
}

impl<'a> MatchIndex<'a> {
    pub fn build(licensed: &'a [(&'a Article, Label)]) -> MatchIndex<'a> {
        let mut idx = MatchIndex::default();
        for (a, label) in licensed {
            let link = a.canonical_url.as_deref().unwrap_or(&a.url);
            if let Some(k) = normalize_url(link) {
                idx.by_url.entry(k).or_default().push((&a.id, *label));
            }
            let t = normalize(&a.title);
            if !t.is_empty() {
                idx.by_title.entry(t).or_default().push((&a.id, *label));
            }
        }
        idx
    }

    /// Licensed matches of one article, as (licensed id → label).
    pub fn matches(&self, article: &Article) -> BTreeMap<&'a str, Label> {
        let mut hits = BTreeMap::new();
        if let Some(v) = normalize_url(&article.url).and_then(|k| self.by_url.get(&k)) {
            hits.extend(v.iter().copied());
        }
        if let Some(v) = self.by_title.get(&normalize(&article.title)) {
            hits.extend(v.iter().copied());
        }
        hits
    }
}

/// Propagates labels from licensed articles to unlicensed ones whose
/// normalized URL or title matches exactly. Conflicting matches propagate
/// nothing and are reported.
pub fn distant_supervision(licensed: &[(&Article, Label)], unlicensed: &[&Article]) -> DistantSupervision {
    let index = MatchIndex::build(licensed);
    let mut out = DistantSupervision::default();
    for a in unlicensed {
        let hits = index.matches(a);
        let labels: BTreeSet<Label> = hits.values().copied().collect();
        match labels.len() {
            0 => {}
            1 => out.decisions.push(LabelDecision {
                article_id: a.id.clone(),
                label: *labels.iter().next().expect("one label"),
                source: RuleTag::DistantSupervision,
                prior_label: None,
                flip_score: None,
                overridden: Vec::new(),
            }),
            _ => {
                log::warn!("distant supervision conflict for {}: {:?}", a.id, hits);
                out.conflicts.push(MatchConflict {
                    article_id: a.id.clone(),
                    licensed_ids: hits.keys().map(|s| s.to_string()).collect(),
                });
            }
        }
    }
    out
}

/// Rule-based labels for a corpus. Affinity-derived decisions win; distant
/// supervision only fills articles the rules left unlabeled, using licensed
/// articles' rule labels as its source.
pub fn label_corpus(
    articles: &[Article],
    segment_of: impl Fn(&str) -> Option<Segment>,
    affinity_of: impl Fn(&str) -> ArticleAffinity,
) -> (Vec<LabelDecision>, Vec<MatchConflict>) {
    let mut decisions: BTreeMap<&str, LabelDecision> = BTreeMap::new();
    for a in articles {
        if let Some(d) = base_label(a, segment_of(&a.publisher), &affinity_of(&a.id)) {
            decisions.insert(&a.id, d);
        }
    }
    let licensed: Vec<(&Article, Label)> = articles
        .iter()
        .filter(|a| a.licensed)
        .filter_map(|a| decisions.get(a.id.as_str()).map(|d| (a, d.label)))
        .collect();
    let unlabeled: Vec<&Article> = articles
        .iter()
        .filter(|a| !a.licensed && !decisions.contains_key(a.id.as_str()))
        .collect();
    let ds = distant_supervision(&licensed, &unlabeled);
    let mut by_id: HashMap<String, LabelDecision> = decisions.into_values().map(|d| (d.article_id.clone(), d)).collect();
    for d in ds.decisions {
        by_id.entry(d.article_id.clone()).or_insert(d);
    }
    let ordered = articles.iter().filter_map(|a| by_id.remove(&a.id)).collect();
    (ordered, ds.conflicts)
}

/// Flips `Local` below `low` and `NonLocal` above `high`. An example that was
/// already flipped is returned unchanged, so at most one flip is ever
/// recorded.
pub fn bootstrap_correct(example: &LabeledExample, p_local: f64, low: f64, high: f64) -> Result<LabeledExample, LabelError> {
    if !(0.0..=1.0).contains(&p_local) {
        return Err(LabelError::ProbabilityOutOfRange(p_local));
    }
    if !(0.0 <= low && low < high && high <= 1.0) {
        return Err(LabelError::InvalidBand { low, high });
    }
    let flip = match example.label {
        Label::Local => p_local < low,
        Label::NonLocal => p_local > high,
    };
    let mut out = example.clone();
    if flip && !example.was_flipped() {
        out.label = example.label.flipped();
        out.provenance.push(RuleTag::BootstrapFlip);
        out.flip_score = Some(p_local);
    }
    Ok(out)
}

/// Turns a decision plus assembled features into a training example.
pub fn to_example(article: &Article, decision: &LabelDecision, segment: Option<Segment>, features: String) -> LabeledExample {
    LabeledExample {
        article_id: article.id.clone(),
        market: article.market.clone(),
        language: article.language.clone(),
        publisher: article.publisher.clone(),
        publisher_segment: segment,
        features,
        label: decision.label,
        provenance: vec![decision.source],
        weight: 1.0,
        flip_score: decision.flip_score,
        overridden: decision.overridden.clone(),
    }
}
