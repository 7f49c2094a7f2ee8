//! Front and back translation of labeled examples through a pluggable
//! [`TranslationProvider`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{market_language, CorpusError, LabeledExample, RuleTag};
use crate::features::FeatureBundle;

pub const PIVOT_LANGUAGE: &str = "en";
pub const MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("unsupported language pair {0} -> {1}")]
    UnsupportedPair(String, String),
    #[error("provider returned empty output")]
    EmptyOutput,
    #[error("provider request failed: {0}")]
    Request(String),
}

impl ProviderError {
    fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Request(_))
    }
}

/// Deterministic per (text, language pair) within a run.
pub trait TranslationProvider: Sync {
    fn name(&self) -> &str;
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError>;
}

/// Enforces the nonempty-output contract on any provider.
pub fn translate_checked<P: TranslationProvider + ?Sized>(
    provider: &P,
    text: &str,
    source: &str,
    target: &str,
) -> Result<String, ProviderError> {
    if text.trim().is_empty() {
        return Ok(String::new());
    }
    let out = provider.translate(text, source, target)?;
    if out.trim().is_empty() {
        return Err(ProviderError::EmptyOutput);
    }
    Ok(out)
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl TranslationProvider for IdentityProvider {
    fn name(&self) -> &str {
        "identity"
    }

    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, ProviderError> {
        Ok(text.to_string())
    }
}

/// Word-for-word substitution from a bilingual dictionary. Unknown words pass
/// through; punctuation and spacing are preserved.
#[derive(Debug, Clone, Default)]
pub struct DictionaryProvider {
    pairs: BTreeMap<(String, String), HashMap<String, String>>,
}

impl DictionaryProvider {
    pub fn new() -> DictionaryProvider {
        DictionaryProvider::default()
    }

    pub fn insert(&mut self, source: &str, target: &str, from: &str, to: &str) {
        self.pairs
            .entry((source.to_ascii_lowercase(), target.to_ascii_lowercase()))
            .or_default()
            .insert(from.to_lowercase(), to.to_string());
    }

    /// Reads `source\ttarget\tfrom\tto` rows (header optional).
    pub fn load(path: &Path) -> Result<DictionaryProvider, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut dict = DictionaryProvider::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || (i == 0 && line.starts_with("source\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(CorpusError::Header {
                    path: path.to_path_buf(),
                    reason: format!("line {}: expected 4 columns", i + 1),
                });
            }
            dict.insert(cols[0].trim(), cols[1].trim(), cols[2].trim(), cols[3].trim());
        }
        Ok(dict)
    }

    pub fn supports(&self, source: &str, target: &str) -> bool {
        source.eq_ignore_ascii_case(target)
            || self
                .pairs
                .contains_key(&(source.to_ascii_lowercase(), target.to_ascii_lowercase()))
    }
}

impl TranslationProvider for DictionaryProvider {
    fn name(&self) -> &str {
        "dictionary"
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        if source.eq_ignore_ascii_case(target) {
            return Ok(text.to_string());
        }
        let table = self
            .pairs
            .get(&(source.to_ascii_lowercase(), target.to_ascii_lowercase()))
            .ok_or_else(|| ProviderError::UnsupportedPair(source.into(), target.into()))?;
        let mut out = String::with_capacity(text.len());
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut String| {
            if word.is_empty() {
                return;
            }
            match table.get(&word.to_lowercase()) {
                Some(rep) if word.chars().next().is_some_and(char::is_uppercase) => {
                    let mut c = rep.chars();
                    if let Some(first) = c.next() {
                        out.extend(first.to_uppercase());
                        out.push_str(c.as_str());
                    }
                }
                Some(rep) => out.push_str(rep),
                None => out.push_str(word),
            }
            word.clear();
        };
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                word.push(ch);
            } else {
                flush(&mut word, &mut out);
                out.push(ch);
            }
        }
        flush(&mut word, &mut out);
        Ok(out)
    }
}

/// Retries transient failures with exponential backoff
/// (`base_delay`, `2 * base_delay`, `4 * base_delay`).
pub struct RetryingProvider<P> {
    inner: P,
    max_retries: u32,
    base_delay: Duration,
}

impl<P: TranslationProvider> RetryingProvider<P> {
    pub fn new(inner: P, max_retries: u32, base_delay: Duration) -> RetryingProvider<P> {
        RetryingProvider {
            inner,
            max_retries: max_retries.min(MAX_RETRIES),
            base_delay,
        }
    }
}

impl<P: TranslationProvider> TranslationProvider for RetryingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.inner.translate(text, source, target) {
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    std::thread::sleep(self.base_delay * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// HTTP translation service: `POST {endpoint}` with
/// `{"text", "source", "target"}`, expecting `{"translation": "..."}`.
pub struct RemoteProvider {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct RemoteResponse {
    translation: String,
}

impl RemoteProvider {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> RemoteProvider {
        RemoteProvider {
            endpoint: endpoint.to_string(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the key from `env_var` when set.
    pub fn from_env(endpoint: &str, env_var: &str, timeout: Duration) -> RemoteProvider {
        RemoteProvider::new(endpoint, std::env::var(env_var).ok(), timeout)
    }
}

impl TranslationProvider for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(RemoteRequest { text, source, target })
            .map_err(|e| ProviderError::Request(e.to_string()))?;
        let body: RemoteResponse = resp.into_json().map_err(|e| ProviderError::Request(e.to_string()))?;
        Ok(body.translation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "source_id")]
pub enum Origin {
    FrontTranslation(String),
    BackTranslation(String),
}

/// One `augment.jsonl` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedExample {
    #[serde(flatten)]
    pub example: LabeledExample,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub article_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentOutcome {
    pub outputs: Vec<AugmentedExample>,
    pub skipped: Vec<Skip>,
}

/// Applies `f` to every item with at most `in_flight` concurrent calls and
/// returns results in input order.
pub fn map_ordered<I, R, F>(items: &[I], in_flight: usize, f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Sync,
{
    let workers = in_flight.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

fn translate_bundle<P: TranslationProvider + ?Sized>(
    bundle: &FeatureBundle,
    provider: &P,
    source: &str,
    target: &str,
) -> Result<FeatureBundle, ProviderError> {
    let topics = translate_checked(provider, &bundle.topics.join(" "), source, target)?;
    let tagline = translate_checked(provider, &bundle.tagline, source, target)?;
    let title = translate_checked(provider, &bundle.title, source, target)?;
    let topics = topics.split_whitespace().map(String::from).collect();
    Ok(FeatureBundle::new(topics, &tagline, &title, bundle.url_tokens.clone()))
}

/// Translates an assembled feature string section by section. Text that is
/// not an assembled bundle is translated whole.
pub fn translate_features<P: TranslationProvider + ?Sized>(
    features: &str,
    provider: &P,
    source: &str,
    target: &str,
) -> Result<String, ProviderError> {
    match FeatureBundle::parse(features) {
        Some(bundle) => Ok(translate_bundle(&bundle, provider, source, target)?.assembled),
        None => translate_checked(provider, features, source, target),
    }
}

fn augmented(source: &LabeledExample, bundle: FeatureBundle, id_suffix: &str, market: &str, tag: RuleTag, origin: Origin) -> AugmentedExample {
    let mut example = source.clone();
    example.article_id = format!("{}~{id_suffix}", source.article_id);
    example.market = market.to_string();
    example.language = market_language(market);
    example.features = bundle.assembled;
    example.provenance.push(tag);
    AugmentedExample { example, origin }
}

fn collect(results: Vec<Result<AugmentedExample, Skip>>) -> AugmentOutcome {
    let mut out = AugmentOutcome::default();
    for r in results {
        match r {
            Ok(a) => out.outputs.push(a),
            Err(s) => {
                log::warn!("augment skip {}: {}", s.article_id, s.reason);
                out.skipped.push(s);
            }
        }
    }
    out
}

fn skip(e: &LabeledExample, reason: impl Into<String>) -> Skip {
    Skip {
        article_id: e.article_id.clone(),
        reason: reason.into(),
    }
}

/// Translates English local examples into `target_market`'s language. URL
/// tokens are carried over untranslated.
pub fn front_translate<P: TranslationProvider + ?Sized>(
    english_local: &[LabeledExample],
    target_market: &str,
    provider: &P,
    in_flight: usize,
) -> AugmentOutcome {
    let target = market_language(target_market);
    let results = map_ordered(english_local, in_flight, |e| {
        if e.language != PIVOT_LANGUAGE {
            return Err(skip(e, format!("source language {} is not English", e.language)));
        }
        if e.label != crate::corpus::Label::Local {
            return Err(skip(e, "source is not labeled Local"));
        }
        if e.is_augmented() {
            return Err(skip(e, "source is already augmented"));
        }
        let bundle = FeatureBundle::parse(&e.features).ok_or_else(|| skip(e, "features are not an assembled bundle"))?;
        let translated = translate_bundle(&bundle, provider, PIVOT_LANGUAGE, &target).map_err(|err| skip(e, err.to_string()))?;
        Ok(augmented(
            e,
            translated,
            &format!("ft-{target}"),
            target_market,
            RuleTag::FrontTranslation,
            Origin::FrontTranslation(e.article_id.clone()),
        ))
    });
    collect(results)
}

/// Round-trips non-English examples through English. Outputs identical to
/// their source are dropped (`unchanged` skips).
pub fn back_translate<P: TranslationProvider + ?Sized>(examples: &[LabeledExample], provider: &P, in_flight: usize) -> AugmentOutcome {
    let results = map_ordered(examples, in_flight, |e| {
        if e.language == PIVOT_LANGUAGE {
            return Err(skip(e, "source is already English"));
        }
        if e.is_augmented() {
            return Err(skip(e, "source is already augmented"));
        }
        let bundle = FeatureBundle::parse(&e.features).ok_or_else(|| skip(e, "features are not an assembled bundle"))?;
        let english = translate_bundle(&bundle, provider, &e.language, PIVOT_LANGUAGE).map_err(|err| skip(e, err.to_string()))?;
        let back = translate_bundle(&english, provider, PIVOT_LANGUAGE, &e.language).map_err(|err| skip(e, err.to_string()))?;
        if back.assembled == e.features {
            return Err(skip(e, "unchanged"));
        }
        Ok(augmented(
            e,
            back,
            "bt",
            &e.market,
            RuleTag::BackTranslation,
            Origin::BackTranslation(e.article_id.clone()),
        ))
    });
    collect(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::AtomicU32;

    fn ex(id: &str, lang: &str, market: &str, label: Label, title: &str) -> LabeledExample {
        LabeledExample {
            article_id: id.into(),
            market: market.into(),
            language: lang.into(),
            publisher: "p".into(),
            publisher_segment: None,
            features: FeatureBundle::new(vec!["council".into(), "police".into()], "The council met.", title, vec!["news".into()]).assembled,
            label,
            provenance: vec![RuleTag::StrongLocalPublisher],
            weight: 1.0,
            flip_score: None,
            overridden: vec![],
        }
    }

    fn en_de() -> DictionaryProvider {
        let mut d = DictionaryProvider::new();
        for (a, b) in [("council", "rat"), ("police", "polizei"), ("the", "der"), ("met", "tagte")] {
            d.insert("en", "de", a, b);
        }
        d
    }

    /// Maps "gross" to "big" into English but "big" back to "groß".
    struct SynonymProvider;

    impl TranslationProvider for SynonymProvider {
        fn name(&self) -> &str {
            "synonym"
        }

        fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
            Ok(match (source, target) {
                (_, "en") => text.replace("gross", "big"),
                ("en", _) => text.replace("big", "groß"),
                _ => text.to_string(),
            })
        }
    }

    struct FailOn(&'static str);

    impl TranslationProvider for FailOn {
        fn name(&self) -> &str {
            "failing"
        }

        fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, ProviderError> {
            if text.contains(self.0) {
                Err(ProviderError::Request("boom".into()))
            } else {
                Ok(text.to_string())
            }
        }
    }

    #[test]
    fn dictionary_preserves_case_and_punctuation() {
        let d = en_de();
        assert_eq!(d.translate("The council, police!", "en", "de").unwrap(), "Der rat, polizei!");
        assert_eq!(
            d.translate("x", "en", "fr"),
            Err(ProviderError::UnsupportedPair("en".into(), "fr".into()))
        );
        assert_eq!(d.translate("same", "de", "de").unwrap(), "same");
    }

    #[test]
    fn front_translation_keeps_labels_and_urls() {
        let inputs: Vec<_> = (0..100).map(|i| ex(&format!("a{i}"), "en", "EN-US", Label::Local, "Council votes")).collect();
        let out = front_translate(&inputs, "DE-DE", &en_de(), 4);
        assert_eq!(out.outputs.len(), 100);
        assert!(out.skipped.is_empty());
        for (a, src) in out.outputs.iter().zip(&inputs) {
            assert_eq!(a.example.label, Label::Local);
            assert_eq!(a.example.language, "de");
            assert_eq!(a.example.market, "DE-DE");
            assert_eq!(a.origin, Origin::FrontTranslation(src.article_id.clone()));
            assert_eq!(a.example.provenance.last(), Some(&RuleTag::FrontTranslation));
            let b = FeatureBundle::parse(&a.example.features).unwrap();
            assert_eq!(b.topics, vec!["rat", "polizei"]);
            assert_eq!(b.url_tokens, vec!["news"]);
        }
    }

    #[test]
    fn front_translation_edge_cases() {
        assert_eq!(front_translate(&[], "DE-DE", &en_de(), 2), AugmentOutcome::default());
        let inputs: Vec<_> = (0..10)
            .map(|i| ex(&format!("a{i}"), "en", "EN-US", Label::Local, if i == 3 { "poison" } else { "fine" }))
            .collect();
        let out = front_translate(&inputs, "DE-DE", &FailOn("poison"), 3);
        assert_eq!(out.outputs.len(), 9);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].article_id, "a3");
        // output order follows input order
        let ids: Vec<_> = out.outputs.iter().map(|a| a.example.article_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort_by_key(|s| s[1..].split('~').next().unwrap().parse::<u32>().unwrap());
        assert_eq!(ids, sorted);

        let wrong = [
            ex("n", "en", "EN-US", Label::NonLocal, "t"),
            ex("d", "de", "DE-DE", Label::Local, "t"),
        ];
        assert_eq!(front_translate(&wrong, "DE-DE", &en_de(), 1).skipped.len(), 2);
    }

    #[test]
    fn back_translation_filters_unchanged() {
        let inputs = [ex("d1", "de", "DE-DE", Label::Local, "gross Rat"), ex("f1", "fr", "FR-FR", Label::NonLocal, "gross")];
        let out = back_translate(&inputs, &IdentityProvider, 2);
        assert!(out.outputs.is_empty());
        assert!(out.skipped.iter().all(|s| s.reason == "unchanged"));

        let out = back_translate(&inputs, &SynonymProvider, 2);
        assert_eq!(out.outputs.len(), 2);
        for (a, src) in out.outputs.iter().zip(&inputs) {
            assert_eq!(a.example.label, src.label);
            assert_eq!(a.example.language, src.language);
            assert!(a.example.features.contains("groß"));
            assert_eq!(a.origin, Origin::BackTranslation(src.article_id.clone()));
        }
    }

    #[test]
    fn no_chained_augmentation() {
        let inputs = [ex("d1", "de", "DE-DE", Label::Local, "gross")];
        let first = back_translate(&inputs, &SynonymProvider, 1);
        let again: Vec<_> = first.outputs.iter().map(|a| a.example.clone()).collect();
        let second = back_translate(&again, &SynonymProvider, 1);
        assert!(second.outputs.is_empty());
        assert_eq!(second.skipped[0].reason, "source is already augmented");
    }

    #[test]
    fn retry_gives_up_after_three_retries() {
        struct Flaky(AtomicU32, u32);
        impl TranslationProvider for Flaky {
            fn name(&self) -> &str {
                "flaky"
            }
            fn translate(&self, t: &str, _: &str, _: &str) -> Result<String, ProviderError> {
                if self.0.fetch_add(1, Ordering::SeqCst) < self.1 {
                    Err(ProviderError::Request("transient".into()))
                } else {
                    Ok(t.into())
                }
            }
        }
        let ok = RetryingProvider::new(Flaky(AtomicU32::new(0), 3), 3, Duration::from_millis(1));
        assert_eq!(ok.translate("x", "en", "de").unwrap(), "x");
        assert_eq!(ok.inner.0.load(Ordering::SeqCst), 4);
        let fail = RetryingProvider::new(Flaky(AtomicU32::new(0), 4), 10, Duration::from_millis(1));
        assert!(fail.translate("x", "en", "de").is_err());
        assert_eq!(fail.inner.0.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn remote_provider_speaks_json() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end().to_ascii_lowercase();
                if l.is_empty() {
                    break;
                }
                if let Some(v) = l.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if l.starts_with("authorization:") {
                    auth = line.trim_end().to_string();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let reply = format!(r#"{{"translation":"{}-{}"}}"#, req["text"].as_str().unwrap(), req["target"].as_str().unwrap());
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}", reply.len()).unwrap();
            auth
        });
        let p = RemoteProvider::new(&format!("http://{addr}/translate"), Some("k".into()), Duration::from_secs(5));
        assert_eq!(p.translate("hallo", "de", "en").unwrap(), "hallo-en");
        assert_eq!(server.join().unwrap(), "Authorization: Bearer k");
    }

    #[test]
    fn map_ordered_preserves_order() {
        let items: Vec<u32> = (0..57).collect();
        assert_eq!(map_ordered(&items, 8, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
