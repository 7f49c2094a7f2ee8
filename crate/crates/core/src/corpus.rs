//! Domain data model plus ingestion, validation and persistence of articles,
//! click logs, gazetteers and labeled datasets.
//!
//! Loaders never drop records silently: every malformed record lands in the
//! [`LoadReport`] reject list with a machine-readable reason, and a file in
//! which more than half of the records are malformed is refused outright.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::io::{read_jsonl, write_atomic, write_jsonl};
use crate::text::{fnv1a64_extend, normalize, tokenize};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.9;
pub const DEFAULT_WINDOW_DAYS: i64 = 28;
pub const TRAIN_FILE: &str = "dataset.train.jsonl";
pub const VALID_FILE: &str = "dataset.valid.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("failed to write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}: {rejected} of {total} records are malformed; refusing to continue")]
    Format {
        path: PathBuf,
        rejected: usize,
        total: usize,
    },
    #[error("{path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split ratio must lie in (0, 1), got {0}")]
    SplitRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NonLocal,
    Local,
}

impl Label {
    /// Local = 1, NonLocal = 0.
    pub fn as_int(self) -> u8 {
        match self {
            Label::Local => 1,
            Label::NonLocal => 0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Local => Label::NonLocal,
            Label::NonLocal => Label::Local,
        }
    }

    fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" | "1" => Some(Label::Local),
            "nonlocal" | "non_local" | "non-local" | "0" => Some(Label::NonLocal),
            _ => None,
        }
    }
}

/// Publisher class assigned by click-affinity analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Segment {
    StrongLocal,
    StrongNonLocal,
    Ambiguous,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::StrongLocal, Segment::StrongNonLocal, Segment::Ambiguous];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::StrongLocal => "StrongLocal",
            Segment::StrongNonLocal => "StrongNonLocal",
            Segment::Ambiguous => "Ambiguous",
        }
    }
}

/// Rule that produced or changed a weak label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleTag {
    PublisherMarked,
    StrongLocalPublisher,
    StrongNonLocalPublisher,
    ArticleAffinity,
    DistantSupervision,
    BootstrapFlip,
    FrontTranslation,
    BackTranslation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub market: String,
    pub language: String,
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub url: String,
    pub publisher: String,
    #[serde(default)]
    pub publisher_label: Option<Label>,
    #[serde(default)]
    pub canonical_url: Option<String>,
    #[serde(default)]
    pub licensed: bool,
}

impl Article {
    /// Checks the per-record invariants. Id uniqueness is a corpus-level
    /// property checked by the loader.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        let parsed = url::Url::parse(&self.url).map_err(|e| format!("invalid url: {e}"))?;
        if parsed.host_str().is_none() {
            return Err("invalid url: no host".into());
        }
        if let Some(c) = &self.canonical_url {
            url::Url::parse(c).map_err(|e| format!("invalid canonical_url: {e}"))?;
        }
        if market_language(&self.market) != self.language.trim().to_ascii_lowercase() {
            return Err("market/language mismatch".into());
        }
        Ok(())
    }

    fn from_fields(f: &Fields<'_>) -> Result<Article, String> {
        let publisher_label = match f.opt_str("publisher_label")? {
            None => None,
            Some(s) if s.trim().is_empty() => None,
            Some(s) => Some(Label::parse(&s).ok_or_else(|| format!("invalid field publisher_label: {s}"))?),
        };
        let canonical_url = f.opt_str("canonical_url")?.filter(|s| !s.trim().is_empty());
        let article = Article {
            id: f.req_str("id")?,
            market: f.req_str("market")?,
            language: f.req_str("language")?,
            title: f.req_str("title")?,
            body: f.opt_str("body")?.unwrap_or_default(),
            url: f.req_str("url")?,
            publisher: f.req_str("publisher")?,
            publisher_label,
            canonical_url,
            licensed: f.opt_bool("licensed")?.unwrap_or(false),
        };
        article.validate()?;
        Ok(article)
    }
}

/// Lower-cased language part of a market code (`"EN-US"` → `"en"`).
pub fn market_language(market: &str) -> String {
    market
        .split(['-', '_'])
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase()
}

/// Test-set record: an article with a human gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldArticle {
    #[serde(flatten)]
    pub article: Article,
    pub gold_label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "subject_type", content = "subject_id", rename_all = "lowercase")]
pub enum Subject {
    Publisher(String),
    Article(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// Aggregated clicks for one subject in one city during `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    #[serde(flatten)]
    pub subject: Subject,
    pub city: String,
    pub state: String,
    pub clicks: u64,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
}

impl ClickRecord {
    pub fn window(&self) -> Window {
        Window {
            start: self.window_start,
            end: self.window_end,
        }
    }

    fn from_fields(f: &Fields<'_>, default_window: Duration) -> Result<ClickRecord, String> {
        let subject_type = f.req_str("subject_type")?;
        let subject_id = f.req_str("subject_id")?;
        let subject = match subject_type.trim().to_ascii_lowercase().as_str() {
            "publisher" => Subject::Publisher(subject_id),
            "article" => Subject::Article(subject_id),
            other => return Err(format!("invalid field subject_type: {other}")),
        };
        let city = normalize(&f.req_str("city")?);
        if city.is_empty() {
            return Err("empty city".into());
        }
        let state = f.req_str("state")?.trim().to_ascii_uppercase();
        let clicks = f.req_int("clicks")?;
        if clicks < 0 {
            return Err(format!("negative clicks: {clicks}"));
        }
        let window_start = f.req_time("window_start")?;
        let window_end = match f.opt_time("window_end")? {
            Some(t) => t,
            None => window_start + default_window,
        };
        if window_start >= window_end {
            return Err("window start must precede window end".into());
        }
        Ok(ClickRecord {
            subject,
            city,
            state,
            clicks: clicks as u64,
            window_start,
            window_end,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct ClickKey {
    subject: Subject,
    city: String,
    state: String,
    window: Window,
}

/// Mergeable click aggregate. Merging is associative and commutative, so
/// independently parsed shards can be combined in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClickTable {
    counts: BTreeMap<ClickKey, u64>,
}

impl ClickTable {
    pub fn add(&mut self, record: ClickRecord) {
        let window = record.window();
        let key = ClickKey {
            subject: record.subject,
            city: record.city,
            state: record.state,
            window,
        };
        let slot = self.counts.entry(key).or_insert(0);
        *slot = slot.saturating_add(record.clicks);
    }

    pub fn merge(mut self, other: ClickTable) -> ClickTable {
        for (k, v) in other.counts {
            let slot = self.counts.entry(k).or_insert(0);
            *slot = slot.saturating_add(v);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Records in key order (subject, city, state, window).
    pub fn records(&self) -> Vec<ClickRecord> {
        self.counts
            .iter()
            .map(|(k, &clicks)| ClickRecord {
                subject: k.subject.clone(),
                city: k.city.clone(),
                state: k.state.clone(),
                clicks,
                window_start: k.window.start,
                window_end: k.window.end,
            })
            .collect()
    }
}

impl FromIterator<ClickRecord> for ClickTable {
    fn from_iter<I: IntoIterator<Item = ClickRecord>>(iter: I) -> Self {
        let mut t = ClickTable::default();
        for r in iter {
            t.add(r);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub city: String,
    pub state: String,
    pub country: String,
}

/// Location-name dictionary with whole-token, case-insensitive lookup.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    // first token -> (name tokens, entry index)
    index: HashMap<String, Vec<(Vec<String>, usize)>>,
}

impl Gazetteer {
    pub fn new<I: IntoIterator<Item = GazetteerEntry>>(entries: I) -> Gazetteer {
        let mut unique: BTreeSet<GazetteerEntry> = BTreeSet::new();
        for mut e in entries {
            e.name = normalize(&e.name);
            if !tokenize(&e.name).is_empty() {
                unique.insert(e);
            }
        }
        let entries: Vec<_> = unique.into_iter().collect();
        let mut index: HashMap<String, Vec<(Vec<String>, usize)>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            let toks = tokenize(&e.name);
            index.entry(toks[0].clone()).or_default().push((toks, i));
        }
        Gazetteer { entries, index }
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries whose name occurs in `text` as a contiguous run of whole
    /// tokens. Sorted and deduplicated.
    pub fn find_matches(&self, text: &str) -> Vec<&GazetteerEntry> {
        let toks = tokenize(text);
        let mut hits = BTreeSet::new();
        for start in 0..toks.len() {
            if let Some(cands) = self.index.get(&toks[start]) {
                for (name, idx) in cands {
                    if toks.len() - start >= name.len() && toks[start..start + name.len()] == name[..] {
                        hits.insert(*idx);
                    }
                }
            }
        }
        hits.into_iter().map(|i| &self.entries[i]).collect()
    }

    pub fn contains_location(&self, text: &str) -> bool {
        !self.find_matches(text).is_empty()
    }
}

pub fn load_gazetteer(path: &Path) -> Result<LoadReport<GazetteerEntry>, CorpusError> {
    load_records(path, InputFormat::Tsv, |f| {
        Ok(GazetteerEntry {
            name: f.req_str("name")?,
            city: f.req_str("city")?,
            state: f.req_str("state")?,
            country: f.req_str("country")?,
        })
        .and_then(|e| {
            if tokenize(&e.name).is_empty() {
                Err("empty name".to_string())
            } else {
                Ok(e)
            }
        })
    })
    .map(|(report, _)| report)
}

/// One weakly labeled training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub article_id: String,
    pub market: String,
    pub language: String,
    #[serde(default)]
    pub publisher: String,
    #[serde(default)]
    pub publisher_segment: Option<Segment>,
    pub features: String,
    pub label: Label,
    pub provenance: Vec<RuleTag>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_score: Option<f64>,
    /// Lower-precedence rules whose verdict disagreed with the winner.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overridden: Vec<RuleTag>,
}

fn default_weight() -> f64 {
    1.0
}

impl LabeledExample {
    pub fn validate(&self) -> Result<(), String> {
        if self.provenance.is_empty() {
            return Err("empty provenance".into());
        }
        let flips = self.provenance.iter().filter(|t| **t == RuleTag::BootstrapFlip).count();
        if flips > 1 {
            return Err("more than one BootstrapFlip".into());
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(format!("weight must be positive, got {}", self.weight));
        }
        Ok(())
    }

    pub fn was_flipped(&self) -> bool {
        self.provenance.contains(&RuleTag::BootstrapFlip)
    }

    pub fn is_augmented(&self) -> bool {
        self.provenance
            .iter()
            .any(|t| matches!(t, RuleTag::FrontTranslation | RuleTag::BackTranslation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Tsv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> InputFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => InputFormat::Tsv,
            _ => InputFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<String>,
}

impl<T> LoadReport<T> {
    pub fn write_rejects(&self, path: &Path) -> Result<(), CorpusError> {
        write_jsonl(path, &self.rejects).map_err(|source| CorpusError::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `<input>.rejects.jsonl`
pub fn rejects_path(input: &Path) -> PathBuf {
    let mut name = input.file_name().unwrap_or_default().to_os_string();
    name.push(".rejects.jsonl");
    input.with_file_name(name)
}

struct Fields<'a>(&'a Map<String, Value>);

impl Fields<'_> {
    fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name).filter(|v| !v.is_null())
    }

    fn req_str(&self, name: &str) -> Result<String, String> {
        self.opt_str(name)?.ok_or_else(|| format!("missing field {name}"))
    }

    fn opt_str(&self, name: &str) -> Result<Option<String>, String> {
        match self.get(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(format!("invalid field {name}: expected string, found {other}")),
        }
    }

    fn opt_bool(&self, name: &str) -> Result<Option<bool>, String> {
        match self.get(name) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
                "" => Ok(None),
                "true" | "1" => Ok(Some(true)),
                "false" | "0" => Ok(Some(false)),
                _ => Err(format!("invalid field {name}: {s}")),
            },
            Some(other) => Err(format!("invalid field {name}: {other}")),
        }
    }

    fn req_int(&self, name: &str) -> Result<i64, String> {
        match self.get(name) {
            None => Err(format!("missing field {name}")),
            Some(Value::Number(n)) => n.as_i64().ok_or_else(|| format!("invalid field {name}: {n}")),
            Some(Value::String(s)) => s.trim().parse().map_err(|_| format!("invalid field {name}: {s}")),
            Some(other) => Err(format!("invalid field {name}: {other}")),
        }
    }

    fn req_time(&self, name: &str) -> Result<DateTime<Utc>, String> {
        self.opt_time(name)?.ok_or_else(|| format!("missing field {name}"))
    }

    fn opt_time(&self, name: &str) -> Result<Option<DateTime<Utc>>, String> {
        match self.opt_str(name)? {
            None => Ok(None),
            Some(s) if s.trim().is_empty() => Ok(None),
            Some(s) => DateTime::parse_from_rfc3339(s.trim())
                .map(|t| Some(t.with_timezone(&Utc)))
                .map_err(|e| format!("invalid field {name}: {e}")),
        }
    }
}

/// Parses every nonblank record; returns the report plus the source line of
/// each accepted record.
fn load_records<T>(
    path: &Path,
    format: InputFormat,
    parse: impl Fn(&Fields<'_>) -> Result<T, String>,
) -> Result<(LoadReport<T>, Vec<usize>), CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Option<Vec<String>> = match format {
        InputFormat::Jsonl => None,
        InputFormat::Tsv => match lines.next() {
            None => None,
            Some((_, h)) => Some(h.split('\t').map(|c| c.trim().to_string()).collect()),
        },
    };
    if format == InputFormat::Tsv && header.is_none() {
        let report = LoadReport {
            records: Vec::new(),
            rejects: Vec::new(),
            warnings: vec![format!("{}: empty input", path.display())],
        };
        return Ok((report, Vec::new()));
    }

    let mut records = Vec::new();
    let mut accepted_lines = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0usize;
    for (i, line) in lines {
        total += 1;
        let object = match &header {
            None => match serde_json::from_str::<Value>(line) {
                Ok(Value::Object(m)) => Ok(m),
                Ok(_) => Err("record is not a JSON object".to_string()),
                Err(e) => Err(format!("invalid JSON: {e}")),
            },
            Some(cols) => {
                let cells: Vec<&str> = line.split('\t').collect();
                if cells.len() != cols.len() {
                    Err(format!("expected {} fields, found {}", cols.len(), cells.len()))
                } else {
                    Ok(cols
                        .iter()
                        .zip(cells)
                        .filter(|(_, c)| !c.is_empty())
                        .map(|(k, c)| (k.clone(), Value::String(c.to_string())))
                        .collect())
                }
            }
        };
        match object.and_then(|m| parse(&Fields(&m))) {
            Ok(r) => {
                records.push(r);
                accepted_lines.push(i + 1);
            }
            Err(reason) => rejects.push(Reject {
                line: i + 1,
                reason,
                raw: line.to_string(),
            }),
        }
    }
    if rejects.len() * 2 > total {
        return Err(CorpusError::Format {
            path: path.to_path_buf(),
            rejected: rejects.len(),
            total,
        });
    }
    let mut warnings = Vec::new();
    if total == 0 {
        warnings.push(format!("{}: empty input", path.display()));
    }
    let report = LoadReport {
        records,
        rejects,
        warnings,
    };
    Ok((report, accepted_lines))
}

fn reject_duplicate_ids<T>(report: &mut LoadReport<T>, lines: &[usize], id_of: impl Fn(&T) -> &str) {
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(report.records.len());
    for (r, &line) in std::mem::take(&mut report.records).into_iter().zip(lines) {
        if seen.insert(id_of(&r).to_string()) {
            kept.push(r);
        } else {
            report.rejects.push(Reject {
                line,
                reason: format!("duplicate id {}", id_of(&r)),
                raw: String::new(),
            });
        }
    }
    report.records = kept;
    report.rejects.sort_by_key(|r| r.line);
}

/// Loads and validates articles. Malformed records are collected as rejects.
pub fn load_articles(path: &Path, format: InputFormat) -> Result<LoadReport<Article>, CorpusError> {
    load_with_ids(path, format, Article::from_fields, |a| &a.id)
}

/// Loads a gold-labeled test set (`articles.jsonl` schema plus `gold_label`).
pub fn load_gold_articles(path: &Path, format: InputFormat) -> Result<LoadReport<GoldArticle>, CorpusError> {
    load_with_ids(
        path,
        format,
        |f| {
            let article = Article::from_fields(f)?;
            let raw = f.req_str("gold_label")?;
            let gold_label = Label::parse(&raw).ok_or_else(|| format!("invalid field gold_label: {raw}"))?;
            Ok(GoldArticle { article, gold_label })
        },
        |g| &g.article.id,
    )
}

fn load_with_ids<T>(
    path: &Path,
    format: InputFormat,
    parse: impl Fn(&Fields<'_>) -> Result<T, String>,
    id_of: impl Fn(&T) -> &str,
) -> Result<LoadReport<T>, CorpusError> {
    let (mut report, lines) = load_records(path, format, parse)?;
    reject_duplicate_ids(&mut report, &lines, id_of);
    Ok(report)
}

/// Loads click records, rejecting invalid rows and summing duplicates that
/// share (subject, city, state, window).
pub fn load_clicks(path: &Path) -> Result<LoadReport<ClickRecord>, CorpusError> {
    load_clicks_with_window(path, Duration::days(DEFAULT_WINDOW_DAYS))
}

/// As [`load_clicks`]; rows without `window_end` get `window_start + default_window`.
pub fn load_clicks_with_window(path: &Path, default_window: Duration) -> Result<LoadReport<ClickRecord>, CorpusError> {
    let format = InputFormat::from_path(path);
    if format == InputFormat::Tsv {
        check_click_header(path)?;
    }
    let (report, _) = load_records(path, format, |f| ClickRecord::from_fields(f, default_window))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let table: ClickTable = report.records.into_iter().collect();
    Ok(LoadReport {
        records: table.records(),
        rejects: report.rejects,
        warnings: report.warnings,
    })
}

const CLICK_TSV_HEADER: [&str; 7] = [
    "subject_type",
    "subject_id",
    "city",
    "state",
    "clicks",
    "window_start",
    "window_end",
];

fn check_click_header(path: &Path) -> Result<(), CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(h) = text.lines().find(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = h.split('\t').map(str::trim).collect();
        if cols != CLICK_TSV_HEADER {
            return Err(CorpusError::Header {
                path: path.to_path_buf(),
                reason: format!("expected header {}", CLICK_TSV_HEADER.join("\\t")),
            });
        }
    }
    Ok(())
}

/// Stable position of an example within its stratum.
fn split_rank(seed: u64, id: &str) -> u64 {
    let state = fnv1a64_extend(crate::text::fnv1a64(&seed.to_le_bytes()), id.as_bytes());
    fnv1a64_extend(state, b"split")
}

/// Stratified (market, label) split. Returns (train, validation), each in
/// input order. Membership depends only on the seed and article ids.
pub fn split_dataset(
    examples: &[LabeledExample],
    split_ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>), CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(CorpusError::SplitRatio(split_ratio));
    }
    const EPS: f64 = 1e-9;
    let mut strata: BTreeMap<(String, Label), Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        strata.entry((e.market.clone(), e.label)).or_default().push(i);
    }
    let target = (examples.len() as f64 * split_ratio + EPS).round() as usize;

    // Largest-remainder allocation of the train quota across strata.
    let mut quotas: Vec<usize> = Vec::with_capacity(strata.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(strata.len());
    for (g, members) in strata.values().enumerate() {
        let exact = members.len() as f64 * split_ratio;
        let floor = (exact + EPS).floor() as usize;
        quotas.push(floor.min(members.len()));
        remainders.push((exact - floor as f64, g));
    }
    let assigned: usize = quotas.iter().sum();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut missing = target.saturating_sub(assigned);
    for &(_, g) in &remainders {
        if missing == 0 {
            break;
        }
        let size = strata.values().nth(g).map_or(0, Vec::len);
        if quotas[g] < size {
            quotas[g] += 1;
            missing -= 1;
        }
    }

    let mut in_train = vec![false; examples.len()];
    for (members, &quota) in strata.values().zip(&quotas) {
        let mut ranked = members.clone();
        ranked.sort_by_key(|&i| (split_rank(seed, &examples[i].article_id), i));
        for &i in ranked.iter().take(quota) {
            in_train[i] = true;
        }
    }
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for (e, t) in examples.iter().zip(in_train) {
        if t {
            train.push(e.clone());
        } else {
            valid.push(e.clone());
        }
    }
    Ok((train, valid))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub validation: PathBuf,
}

/// Splits and writes `dataset.train.jsonl` / `dataset.valid.jsonl` into `dir`.
pub fn write_dataset(
    examples: &[LabeledExample],
    dir: &Path,
    split_ratio: f64,
    seed: u64,
) -> Result<DatasetPaths, CorpusError> {
    let (train, valid) = split_dataset(examples, split_ratio, seed)?;
    let paths = DatasetPaths {
        train: dir.join(TRAIN_FILE),
        validation: dir.join(VALID_FILE),
    };
    for (path, items) in [(&paths.train, &train), (&paths.validation, &valid)] {
        write_jsonl(path, items.iter()).map_err(|source| CorpusError::Write {
            path: path.clone(),
            source,
        })?;
    }
    Ok(paths)
}

/// Strict dataset loader: any malformed line fails the whole load.
pub fn load_dataset(path: &Path) -> Result<Vec<LabeledExample>, CorpusError> {
    let examples: Vec<LabeledExample> = read_jsonl(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    for e in &examples {
        e.validate().map_err(|reason| CorpusError::Read {
            path: path.to_path_buf(),
            source: io::Error::new(io::ErrorKind::InvalidData, format!("{}: {reason}", e.article_id)),
        })?;
    }
    Ok(examples)
}

pub fn write_articles(path: &Path, articles: &[Article]) -> Result<(), CorpusError> {
    write_jsonl(path, articles).map_err(|source| CorpusError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_clicks(path: &Path, clicks: &[ClickRecord]) -> Result<(), CorpusError> {
    write_jsonl(path, clicks).map_err(|source| CorpusError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    write_atomic(path, bytes).map_err(|source| CorpusError::Write {
        path: path.to_path_buf(),
        source,
    })
}
