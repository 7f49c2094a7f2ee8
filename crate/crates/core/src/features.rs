//! Classifier input text: topic keywords, tag-line, title and filtered URL
//! tokens, concatenated behind fixed section markers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, CorpusError};
use crate::text::{is_numeric_token, sanitize_line, tokenize};

pub const DEFAULT_TOPICS: usize = 10;
pub const TOPICS_MARKER: &str = "[TOPICS]";
pub const TAGLINE_MARKER: &str = "[TAGLINE]";
pub const TITLE_MARKER: &str = "[TITLE]";
pub const URL_MARKER: &str = "[URL]";
pub const WARN_UNPARSABLE_URL: &str = "unparsable-url";

/// Fitted document frequencies (`tfidf.model.json`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub total_docs: u64,
    pub doc_freq: BTreeMap<String, u64>,
}

impl TfIdfModel {
    pub fn fit<'a, I: IntoIterator<Item = &'a str>>(docs: I) -> TfIdfModel {
        let mut model = TfIdfModel::default();
        for doc in docs {
            model.total_docs += 1;
            let terms: HashSet<String> = tokenize(doc).into_iter().collect();
            for t in terms {
                *model.doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        model
    }

    /// Smoothed inverse document frequency: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((1.0 + self.total_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    /// Raw term count times idf, for every distinct term of `text`.
    pub fn term_scores(&self, text: &str) -> HashMap<String, f64> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in tokenize(text) {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .map(|(t, c)| {
                let s = c as f64 * self.idf(&t);
                (t, s)
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let bytes = serde_json::to_vec_pretty(self).expect("tf-idf state serializes");
        crate::corpus::write_bytes(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<TfIdfModel, CorpusError> {
        let read_err = |source| CorpusError::Read {
            path: path.to_path_buf(),
            source,
        };
        let bytes = std::fs::read(path).map_err(read_err)?;
        serde_json::from_slice(&bytes).map_err(|e| read_err(std::io::Error::other(e)))
    }
}

/// Top-`k` terms by TF-IDF, ties broken lexicographically.
pub fn extract_topics(body: &str, k: usize, tfidf: &TfIdfModel) -> Vec<String> {
    let mut scored: Vec<(String, f64)> = tfidf.term_scores(body).into_iter().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(t, _)| t).collect()
}

/// Splits on sentence-final punctuation followed by whitespace, and on line
/// breaks.
pub fn split_sentences(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = body.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let end = match c {
            '\n' | '\r' => Some(i),
            '.' | '!' | '?' => match chars.peek() {
                None => Some(i + c.len_utf8()),
                Some(&(_, n)) if n.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = end {
            let s = body[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = body[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// The sentence whose distinct terms carry the largest summed document
/// TF-IDF score. Earliest sentence wins ties.
pub fn extract_tagline(body: &str, tfidf: &TfIdfModel) -> String {
    let doc_scores = tfidf.term_scores(body);
    let mut best: Option<(&str, f64)> = None;
    for sentence in split_sentences(body) {
        let terms: HashSet<String> = tokenize(sentence).into_iter().collect();
        let score: f64 = terms.iter().filter_map(|t| doc_scores.get(t)).sum();
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((sentence, score));
        }
    }
    best.map(|(s, _)| s.to_string()).unwrap_or_default()
}

const TWO_LEVEL_SUFFIXES: &[&str] = &[
    "co.uk", "org.uk", "ac.uk", "gov.uk", "com.au", "net.au", "org.au", "co.nz", "co.in", "co.jp", "com.br", "com.mx",
    "co.za", "com.cn", "com.tr", "co.kr",
];

/// The label a publisher registers under (`www.cbsnews.com` → `cbsnews`,
/// `metro.co.uk` → `metro`).
pub fn registrable_label(host: &str) -> Option<String> {
    let host = host.trim().trim_end_matches('.').to_lowercase();
    let labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
    match labels.len() {
        0 => None,
        1 => Some(labels[0].to_string()),
        n => {
            let suffix = format!("{}.{}", labels[n - 2], labels[n - 1]);
            let idx = if n >= 3 && TWO_LEVEL_SUFFIXES.contains(&suffix.as_str()) {
                n - 3
            } else {
                n - 2
            };
            Some(labels[idx].to_string())
        }
    }
}

fn publisher_host(publisher_domain: &str) -> &str {
    let s = publisher_domain.trim();
    let s = s.split_once("://").map_or(s, |(_, rest)| rest);
    s.split(['/', '?', '#']).next().unwrap_or("")
}

/// `|segment tokens found in title| / |segment tokens| >= 0.8`, evaluated
/// exactly on integers.
pub fn title_overlap_reaches_threshold(segment: &[String], title_tokens: &HashSet<String>) -> bool {
    if segment.is_empty() {
        return false;
    }
    let hits = segment.iter().filter(|t| title_tokens.contains(*t)).count();
    5 * hits >= 4 * segment.len()
}

/// URL tokens with scheme, host, query, fragment, numbers, publisher name and
/// a title-duplicating last segment removed. `None` if the URL does not parse.
pub fn extract_url_tokens(url: &str, title: &str, publisher_domain: &str) -> Option<Vec<String>> {
    let parsed = url::Url::parse(url).ok()?;
    let host = parsed.host_str()?;

    let mut excluded: HashSet<String> = HashSet::new();
    for h in [host, publisher_host(publisher_domain)] {
        if let Some(label) = registrable_label(h) {
            excluded.extend(tokenize(&label));
            excluded.insert(label);
        }
    }

    let segments: Vec<Vec<String>> = parsed
        .path()
        .split('/')
        .filter(|s| !s.is_empty())
        .map(|s| {
            let decoded = percent_decode_str(s).decode_utf8_lossy();
            tokenize(&decoded)
                .into_iter()
                .filter(|t| !is_numeric_token(t) && !excluded.contains(t))
                .collect()
        })
        .collect();

    let title_tokens: HashSet<String> = tokenize(title).into_iter().collect();
    let keep = segments.len().saturating_sub(
        usize::from(segments.last().is_some_and(|last| title_overlap_reaches_threshold(last, &title_tokens))),
    );
    Some(segments.into_iter().take(keep).flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub topics: Vec<String>,
    pub tagline: String,
    pub title: String,
    pub url_tokens: Vec<String>,
    pub assembled: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FeatureBundle {
    pub fn new(topics: Vec<String>, tagline: &str, title: &str, url_tokens: Vec<String>) -> FeatureBundle {
        let topics: Vec<String> = topics.iter().map(|t| sanitize_line(t)).filter(|t| !t.is_empty()).collect();
        let tagline = sanitize_line(tagline);
        let title = sanitize_line(title);
        let url_tokens: Vec<String> = url_tokens.iter().map(|t| sanitize_line(t)).filter(|t| !t.is_empty()).collect();
        let section = |marker: &str, content: String| {
            if content.is_empty() {
                marker.to_string()
            } else {
                format!("{marker} {content}")
            }
        };
        let assembled = [
            section(TOPICS_MARKER, topics.join(" ")),
            section(TAGLINE_MARKER, tagline.clone()),
            section(TITLE_MARKER, title.clone()),
            section(URL_MARKER, url_tokens.join(" ")),
        ]
        .join(" ");
        FeatureBundle {
            topics,
            tagline,
            title,
            url_tokens,
            assembled,
            warnings: Vec::new(),
        }
    }

    /// Recovers the sections of an assembled feature string.
    pub fn parse(assembled: &str) -> Option<FeatureBundle> {
        let t = assembled.find(TOPICS_MARKER)?;
        let g = assembled.find(TAGLINE_MARKER)?;
        let i = assembled.find(TITLE_MARKER)?;
        let u = assembled.find(URL_MARKER)?;
        if !(t < g && g < i && i < u) {
            return None;
        }
        let topics = assembled[t + TOPICS_MARKER.len()..g].split_whitespace().map(String::from).collect();
        let tagline = assembled[g + TAGLINE_MARKER.len()..i].trim();
        let title = assembled[i + TITLE_MARKER.len()..u].trim();
        let url_tokens = assembled[u + URL_MARKER.len()..].split_whitespace().map(String::from).collect();
        let bundle = FeatureBundle::new(topics, tagline, title, url_tokens);
        (bundle.assembled == assembled).then_some(bundle)
    }
}

/// Builds the feature bundle for one article. Pure in (article, tfidf, k).
pub fn assemble(article: &Article, tfidf: &TfIdfModel, k: usize) -> FeatureBundle {
    let topics = extract_topics(&article.body, k, tfidf);
    let tagline = extract_tagline(&article.body, tfidf);
    let (url_tokens, warning) = match extract_url_tokens(&article.url, &article.title, &article.publisher) {
        Some(t) => (t, None),
        None => (Vec::new(), Some(WARN_UNPARSABLE_URL.to_string())),
    };
    let mut bundle = FeatureBundle::new(topics, &tagline, &article.title, url_tokens);
    bundle.warnings.extend(warning);
    bundle
}
