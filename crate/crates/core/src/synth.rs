//! Deterministic synthetic corpora: the toy pipeline corpus, the separable
//! training corpus and the directional classifier-vs-gazetteer test set.
//! The generated files are checked in under `crates/core/data/`.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Article, ClickRecord, GazetteerEntry, GoldArticle, Label, LabeledExample, RuleTag, Subject};
use crate::features::FeatureBundle;
use crate::io::{to_jsonl, write_atomic};

pub const TOY_SEED: u64 = 7;
pub const SEPARABLE_SEED: u64 = 11;
pub const SEPARABLE_SIZE: usize = 2000;
pub const DIRECTIONAL_SEED: u64 = 13;
pub const DIRECTIONAL_TEST_SIZE: usize = 200;
pub const DIRECTIONAL_TRAIN_SIZE: usize = 1000;

const US_CITIES: [(&str, &str); 16] = [
    ("Seattle", "WA"),
    ("Bellevue", "WA"),
    ("Tacoma", "WA"),
    ("Bellingham", "WA"),
    ("Spokane", "WA"),
    ("Irvine", "CA"),
    ("San Jose", "CA"),
    ("Oakland", "CA"),
    ("Fresno", "CA"),
    ("Austin", "TX"),
    ("Dallas", "TX"),
    ("Denver", "CO"),
    ("Boulder", "CO"),
    ("Portland", "OR"),
    ("Eugene", "OR"),
    ("Boise", "ID"),
];

const DE_CITIES: [(&str, &str); 5] = [
    ("Berlin", "BE"),
    ("Potsdam", "BB"),
    ("Hamburg", "HH"),
    ("Dresden", "SN"),
    ("Leipzig", "SN"),
];

const LOCAL_PHRASES: [&str; 12] = [
    "city council approves zoning change",
    "school board weighs district budget cuts",
    "library branch reopens after renovation",
    "firefighters respond to warehouse blaze",
    "neighborhood residents oppose transit plan",
    "parks department expands summer programs",
    "county commissioners debate property levy",
    "police investigate downtown burglary",
    "mayor unveils plan for crosswalk safety",
    "farmers market returns to the waterfront",
    "sheriff deputies search for missing hiker",
    "local high school wins robotics title",
];

const NATIONAL_PHRASES: [&str; 12] = [
    "congress passes federal spending bill",
    "senate confirms supreme court nominee",
    "inflation slows as treasury yields fall",
    "automaker recalls electric vehicles nationwide",
    "startup opens preorders for electric bike",
    "streaming service raises subscription prices",
    "tech giant reports quarterly earnings",
    "tariffs weigh on manufacturers and shareholders",
    "pentagon announces new defense contract",
    "government economy report worries consumers",
    "airline cancels flights amid nationwide storm",
    "smartphone maker unveils flagship device",
];

const GENERIC_PHRASES: [&str; 8] = [
    "officials said on tuesday",
    "according to a statement released this week",
    "the plan takes effect next year",
    "more details are expected soon",
    "people shared their views online",
    "the announcement drew mixed reactions",
    "a spokesperson declined to comment",
    "the decision follows months of discussion",
];

const ACRONYMS: [&str; 8] = ["SPD", "WWU", "UCI", "KCSO", "PPS", "APD", "SFUSD", "CDOT"];
const ACRONYM_ROLES: [&str; 8] = [
    "officers", "students", "researchers", "deputies", "teachers", "detectives", "trustees", "crews",
];

/// German/English word pairs. German text is built from the left column so
/// the dictionary provider maps it onto English training vocabulary.
const DE_LOCAL: [(&str, &str); 10] = [
    ("stadtrat", "council"),
    ("schule", "school"),
    ("bezirk", "district"),
    ("polizei", "police"),
    ("bürgermeister", "mayor"),
    ("bibliothek", "library"),
    ("feuerwehr", "firefighters"),
    ("anwohner", "residents"),
    ("nachbarschaft", "neighborhood"),
    ("innenstadt", "downtown"),
];

const DE_NATIONAL: [(&str, &str); 10] = [
    ("bundestag", "congress"),
    ("bundesregierung", "government"),
    ("wirtschaft", "economy"),
    ("teuerung", "inflation"),
    ("autobauer", "automaker"),
    ("aktionäre", "shareholders"),
    ("zölle", "tariffs"),
    ("bundesweit", "nationwide"),
    ("gewinne", "earnings"),
    ("verbraucher", "consumers"),
];

const DE_GENERIC: [(&str, &str); 8] = [
    ("sagte", "said"),
    ("woche", "week"),
    ("heute", "today"),
    ("neue", "new"),
    ("plan", "plan"),
    ("jahr", "year"),
    ("bericht", "report"),
    ("menschen", "people"),
];

/// German synonyms translated one way only, so a round trip through English
/// comes back with the primary word.
const DE_SYNONYMS_LOCAL: [(&str, &str); 2] = [("gemeinderat", "council"), ("ortsteil", "district")];
const DE_SYNONYMS_NATIONAL: [(&str, &str); 1] = [("konjunktur", "economy")];

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len() as u32) as usize]
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn slug(title: &str) -> String {
    crate::text::tokenize(title).join("-")
}

fn url(domain: &str, section: &str, title: &str, n: usize) -> String {
    format!("https://www.{domain}/{section}/2023/05/{:02}/{}-{n}", n % 28 + 1, slug(title))
}

fn body(sentences: &[String]) -> String {
    sentences.iter().map(|s| format!("{}.", capitalize(s))).collect::<Vec<_>>().join(" ")
}

/// Shape of a generated English article.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Local story naming its city.
    CityLocal,
    /// Local story that only uses institution acronyms.
    AcronymLocal,
    /// Local angle on a national topic, naming the city.
    LocalAngle,
    /// National story mentioning a company's home city.
    HeadquartersNational,
    /// National story without place names.
    PlainNational,
}

impl Kind {
    pub fn label(self) -> Label {
        match self {
            Kind::CityLocal | Kind::AcronymLocal | Kind::LocalAngle => Label::Local,
            Kind::HeadquartersNational | Kind::PlainNational => Label::NonLocal,
        }
    }
}

/// (title, body) for one English article of `kind`.
fn english_text(rng: &mut ChaCha8Rng, kind: Kind, cities: &[(&str, &str)]) -> (String, String) {
    let city = pick(rng, cities).0;
    let local = || LOCAL_PHRASES.to_vec();
    let mut sentences: Vec<String> = Vec::new();
    let title = match kind {
        Kind::CityLocal => {
            let p = *pick(rng, &local());
            sentences.push(format!("in {city} {p}"));
            sentences.push(pick(rng, &LOCAL_PHRASES).to_string());
            format!("{city} {p}")
        }
        Kind::AcronymLocal => {
            let i = rng.gen_range(0..ACRONYMS.len() as u32) as usize;
            let p = *pick(rng, &local());
            sentences.push(format!("{} {} said {p}", ACRONYMS[i], ACRONYM_ROLES[i]));
            sentences.push(pick(rng, &LOCAL_PHRASES).to_string());
            format!("{} {}: {p}", ACRONYMS[i], ACRONYM_ROLES[i])
        }
        Kind::LocalAngle => {
            let p = *pick(rng, &NATIONAL_PHRASES);
            sentences.push(format!("{p} in {city}"));
            sentences.push(pick(rng, &NATIONAL_PHRASES).to_string());
            format!("{city} {p}")
        }
        Kind::HeadquartersNational => {
            let p = *pick(rng, &NATIONAL_PHRASES);
            sentences.push(format!("the {city}-based company said {p}"));
            sentences.push(pick(rng, &NATIONAL_PHRASES).to_string());
            capitalize(p)
        }
        Kind::PlainNational => {
            let p = *pick(rng, &NATIONAL_PHRASES);
            sentences.push(p.to_string());
            sentences.push(pick(rng, &NATIONAL_PHRASES).to_string());
            capitalize(p)
        }
    };
    for _ in 0..rng.gen_range(1..3u32) {
        sentences.push(pick(rng, &GENERIC_PHRASES).to_string());
    }
    sentences.shuffle(rng);
    (capitalize(&title), body(&sentences))
}

fn german_words(rng: &mut ChaCha8Rng, pool: &[(&str, &str)], n: usize) -> Vec<String> {
    let mut w: Vec<String> = (0..n).map(|_| pick(rng, pool).0.to_string()).collect();
    w.push(pick(rng, &DE_GENERIC).0.to_string());
    w
}

/// (title, body) for a German article. `local` picks the vocabulary.
fn german_text(rng: &mut ChaCha8Rng, local: bool, city: Option<&str>) -> (String, String) {
    let pool: Vec<(&str, &str)> = if local {
        DE_LOCAL.iter().chain(&DE_SYNONYMS_LOCAL).copied().collect()
    } else {
        DE_NATIONAL.iter().chain(&DE_SYNONYMS_NATIONAL).copied().collect()
    };
    let pool = pool.as_slice();
    let mut title = german_words(rng, pool, 3).join(" ");
    if let Some(c) = city {
        title = format!("{c} {title}");
    }
    let sentences: Vec<String> = (0..3).map(|_| german_words(rng, pool, 4).join(" ")).collect();
    (capitalize(&title), body(&sentences))
}

/// Every (source language, target language, word, translation) dictionary
/// row, both directions.
pub fn dictionary_rows() -> Vec<(String, String, String, String)> {
    let mut rows = Vec::new();
    for (de, en) in DE_LOCAL.iter().chain(&DE_NATIONAL).chain(&DE_GENERIC) {
        rows.push(("de".to_string(), "en".to_string(), de.to_string(), en.to_string()));
        rows.push(("en".to_string(), "de".to_string(), en.to_string(), de.to_string()));
    }
    for (de, en) in DE_SYNONYMS_LOCAL.iter().chain(&DE_SYNONYMS_NATIONAL) {
        rows.push(("de".to_string(), "en".to_string(), de.to_string(), en.to_string()));
    }
    rows.sort();
    rows
}

fn us_gazetteer() -> Vec<GazetteerEntry> {
    US_CITIES
        .iter()
        .map(|(c, s)| (c, s, "US"))
        .chain(DE_CITIES.iter().map(|(c, s)| (c, s, "DE")))
        .map(|(c, s, country)| GazetteerEntry {
            name: c.to_string(),
            city: c.to_string(),
            state: s.to_string(),
            country: country.to_string(),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn article(
    id: String,
    market: &str,
    domain: &str,
    title: String,
    body: String,
    n: usize,
    publisher_label: Option<Label>,
    licensed: bool,
) -> Article {
    Article {
        url: url(domain, "news", &title, n),
        id,
        market: market.to_string(),
        language: crate::corpus::market_language(market),
        title,
        body,
        publisher: domain.to_string(),
        publisher_label,
        canonical_url: None,
        licensed,
    }
}

pub struct ToyCorpus {
    pub articles: Vec<Article>,
    pub clicks: Vec<ClickRecord>,
    pub gazetteer: Vec<GazetteerEntry>,
    pub test: Vec<GoldArticle>,
    pub dictionary: Vec<(String, String, String, String)>,
}

fn window_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap()
}

fn click(subject: Subject, city: &str, state: &str, clicks: u64) -> ClickRecord {
    ClickRecord {
        subject,
        city: city.to_string(),
        state: state.to_string(),
        clicks,
        window_start: window_start(),
        window_end: window_start() + chrono::Duration::days(28),
    }
}

const WA: [(&str, &str); 5] = [
    ("Seattle", "WA"),
    ("Bellevue", "WA"),
    ("Tacoma", "WA"),
    ("Bellingham", "WA"),
    ("Spokane", "WA"),
];
const OC: [(&str, &str); 1] = [("Irvine", "CA")];

/// Small mixed-market corpus that exercises every labeling rule: strong
/// local and non-local publishers, an ambiguous publisher with marks, article
/// affinity overrides, syndicated copies for distant supervision including
/// one conflict, and German articles for augmentation and bootstrapping.
pub fn toy_corpus(seed: u64) -> ToyCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::new();
    let mut clicks = Vec::new();
    let mut n = 0usize;
    let mut next = |prefix: &str| {
        n += 1;
        (format!("{prefix}-{n:03}"), n)
    };
    let pubc = |p: &str, rows: &[(&str, &str, u64)]| -> Vec<ClickRecord> {
        rows.iter()
            .map(|(c, s, k)| click(Subject::Publisher(p.to_string()), c, s, *k))
            .collect()
    };
    clicks.extend(pubc(
        "seattletimes.com",
        &[("Seattle", "WA", 900), ("Bellevue", "WA", 820), ("Tacoma", "WA", 760), ("Boise", "ID", 40)],
    ));
    clicks.extend(pubc("ocregister.com", &[("Irvine", "CA", 700), ("Santa Ana", "CA", 650), ("Denver", "CO", 90)]));
    clicks.extend(pubc(
        "nationalwire.com",
        &[("New York", "NY", 500), ("Los Angeles", "CA", 490), ("Chicago", "IL", 470), ("Houston", "TX", 455)],
    ));
    clicks.extend(pubc("rideapart.com", &[("Irvine", "CA", 300), ("New York", "NY", 290), ("Austin", "TX", 280)]));
    clicks.extend(pubc("cascadedaily.com", &[("Portland", "OR", 500), ("Vancouver", "WA", 480)]));
    clicks.extend(pubc("tinygazette.com", &[("Boise", "ID", 30)]));
    clicks.extend(pubc("berliner-zeitung.de", &[("Berlin", "BE", 900), ("Potsdam", "BB", 100)]));
    clicks.extend(pubc("bundnews.de", &[("Berlin", "BE", 400), ("Hamburg", "HH", 390), ("München", "BY", 380)]));

    let mut seattle_titles = Vec::new();
    for i in 0..12 {
        let kind = match i {
            0..=7 => Kind::CityLocal,
            8..=9 => Kind::AcronymLocal,
            _ => Kind::PlainNational,
        };
        let (title, body) = english_text(&mut rng, kind, &WA);
        let (id, k) = next("st");
        seattle_titles.push(title.clone());
        articles.push(article(id, "EN-US", "seattletimes.com", title, body, k, None, true));
    }
    for i in 0..8 {
        let kind = if i < 6 { Kind::CityLocal } else { Kind::AcronymLocal };
        let (title, body) = english_text(&mut rng, kind, &OC);
        let (id, k) = next("oc");
        articles.push(article(id, "EN-US", "ocregister.com", title, body, k, Some(Label::Local), true));
    }
    let mut wire_ids = Vec::new();
    for i in 0..12 {
        let kind = if i < 7 { Kind::PlainNational } else { Kind::HeadquartersNational };
        let (title, body) = english_text(&mut rng, kind, &US_CITIES);
        let (id, k) = next("nw");
        wire_ids.push(id.clone());
        articles.push(article(id, "EN-US", "nationalwire.com", title, body, k, Some(Label::NonLocal), true));
    }
    // A wire story read only around Seattle: article affinity says local.
    for (c, s, k) in [("Seattle", "WA", 400), ("Tacoma", "WA", 350), ("Bellevue", "WA", 330)] {
        clicks.push(click(Subject::Article(wire_ids[0].clone()), c, s, k));
    }
    for _ in 0..6 {
        let (title, body) = english_text(&mut rng, Kind::HeadquartersNational, &OC);
        let (id, k) = next("ra");
        articles.push(article(id, "EN-US", "rideapart.com", title, body, k, None, true));
    }
    let mut cascade_ids = Vec::new();
    for i in 0..8 {
        let (kind, mark) = if i < 5 {
            (Kind::CityLocal, Label::Local)
        } else {
            (Kind::PlainNational, Label::NonLocal)
        };
        let cities = [("Portland", "OR"), ("Eugene", "OR")];
        let (title, body) = english_text(&mut rng, kind, &cities);
        let (id, k) = next("cd");
        cascade_ids.push(id.clone());
        articles.push(article(id, "EN-US", "cascadedaily.com", title, body, k, Some(mark), false));
    }
    // Marked local, read across four states: article affinity overrides.
    for (c, s, k) in [("Portland", "OR", 200), ("Boise", "ID", 190), ("Denver", "CO", 185), ("Austin", "TX", 180)] {
        clicks.push(click(Subject::Article(cascade_ids[0].clone()), c, s, k));
    }
    // Syndicated copies: three inherit a label, one matches conflicting
    // licensed articles, one has no match and stays unlabeled.
    let shared = "Officials said more details are expected soon".to_string();
    let (id, k) = next("st");
    articles.push(article(id, "EN-US", "seattletimes.com", shared.clone(), body(&[shared.clone()]), k, None, true));
    let (id, k) = next("nw");
    articles.push(article(id, "EN-US", "nationalwire.com", shared.clone(), body(&[shared.clone()]), k, None, true));
    for t in seattle_titles.iter().take(3).chain([&shared]) {
        let (id, k) = next("tg");
        articles.push(article(id, "EN-US", "tinygazette.com", t.clone(), String::new(), k, None, false));
    }
    let (title, b) = english_text(&mut rng, Kind::CityLocal, &[("Boise", "ID")]);
    let (id, k) = next("tg");
    articles.push(article(id, "EN-US", "tinygazette.com", title, b, k, None, false));

    for i in 0..10 {
        let city = (i % 2 == 0).then(|| pick(&mut rng, &DE_CITIES[..2]).0);
        let (title, body) = german_text(&mut rng, i < 8, city);
        let (id, k) = next("bz");
        articles.push(article(id, "DE-DE", "berliner-zeitung.de", title, body, k, None, true));
    }
    for _ in 0..8 {
        let (title, body) = german_text(&mut rng, false, None);
        let (id, k) = next("bn");
        articles.push(article(id, "DE-DE", "bundnews.de", title, body, k, None, true));
    }

    let domains = ["seattletimes.com", "nationalwire.com", "cascadedaily.com", "rideapart.com", "ocregister.com"];
    let mut test = Vec::new();
    for i in 0..30 {
        let kind = [
            Kind::CityLocal,
            Kind::PlainNational,
            Kind::AcronymLocal,
            Kind::HeadquartersNational,
            Kind::CityLocal,
            Kind::LocalAngle,
        ][i % 6];
        let (title, body) = english_text(&mut rng, kind, &US_CITIES);
        let domain = domains[i % domains.len()];
        let a = article(format!("test-en-{i:03}"), "EN-US", domain, title, body, 500 + i, None, false);
        test.push(GoldArticle {
            article: a,
            gold_label: kind.label(),
        });
    }
    for i in 0..10 {
        let local = i % 2 == 0;
        let city = (i % 3 == 0).then(|| pick(&mut rng, &DE_CITIES).0);
        let (title, body) = german_text(&mut rng, local, city);
        let domain = if local { "berliner-zeitung.de" } else { "bundnews.de" };
        let a = article(format!("test-de-{i:03}"), "DE-DE", domain, title, body, 600 + i, None, false);
        test.push(GoldArticle {
            article: a,
            gold_label: if local { Label::Local } else { Label::NonLocal },
        });
    }

    ToyCorpus {
        articles,
        clicks,
        gazetteer: us_gazetteer(),
        test,
        dictionary: dictionary_rows(),
    }
}

pub const TOY_CONFIG: &str = r#"# Toy pipeline configuration. Paths are relative to this file.
seed = 7

[inputs]
articles = "articles.jsonl"
clicks = "clicks.tsv"
gazetteer = "gazetteer.tsv"
test = "test.jsonl"
dictionary = "dictionary.tsv"

[affinity]
min_clicks = 50
gap_threshold = 0.25
max_local_cities = 10
window_days = 28

[bootstrap]
low = 0.2
high = 0.8

[split]
ratio = 0.9

[train]
dim = 262144
epochs = 10

[eval]
cutoffs = [0.5, 0.7]
slices = ["market", "language", "publisher_segment"]

[provider]
kind = "dictionary"
targets = ["DE-DE"]
back_translate = true
in_flight = 4
"#;

fn clicks_tsv(clicks: &[ClickRecord]) -> String {
    let mut s = String::from("subject_type\tsubject_id\tcity\tstate\tclicks\twindow_start\twindow_end\n");
    for r in clicks {
        let (t, id) = match &r.subject {
            Subject::Publisher(p) => ("publisher", p),
            Subject::Article(a) => ("article", a),
        };
        let _ = writeln!(
            s,
            "{t}\t{id}\t{}\t{}\t{}\t{}\t{}",
            r.city,
            r.state,
            r.clicks,
            r.window_start.to_rfc3339(),
            r.window_end.to_rfc3339()
        );
    }
    s
}

fn gazetteer_tsv(entries: &[GazetteerEntry]) -> String {
    let mut s = String::from("name\tcity\tstate\tcountry\n");
    for e in entries {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", e.name, e.city, e.state, e.country);
    }
    s
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> io::Result<Vec<u8>> {
    to_jsonl(items).map_err(io::Error::from)
}

/// Writes the toy corpus and its `pipeline.toml` into `dir`.
pub fn write_toy(dir: &Path, seed: u64) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let t = toy_corpus(seed);
    write_atomic(&dir.join("articles.jsonl"), &jsonl(&t.articles)?)?;
    write_atomic(&dir.join("clicks.tsv"), clicks_tsv(&t.clicks).as_bytes())?;
    write_atomic(&dir.join("gazetteer.tsv"), gazetteer_tsv(&t.gazetteer).as_bytes())?;
    write_atomic(&dir.join("test.jsonl"), &jsonl(&t.test)?)?;
    let mut dict = String::from("source\ttarget\tfrom\tto\n");
    for (a, b, f, to) in &t.dictionary {
        let _ = writeln!(dict, "{a}\t{b}\t{f}\t{to}");
    }
    write_atomic(&dir.join("dictionary.tsv"), dict.as_bytes())?;
    write_atomic(&dir.join("pipeline.toml"), TOY_CONFIG.replace("seed = 7", &format!("seed = {seed}")).as_bytes())
}

const LOCAL_TERMS: [&str; 24] = [
    "council", "zoning", "school", "board", "library", "firefighters", "neighborhood", "residents", "parks",
    "county", "levy", "police", "downtown", "mayor", "crosswalk", "farmers", "waterfront", "sheriff", "deputies",
    "district", "transit", "burglary", "renovation", "robotics",
];

const NATIONAL_TERMS: [&str; 24] = [
    "congress", "federal", "senate", "supreme", "inflation", "treasury", "automaker", "nationwide", "preorders",
    "streaming", "subscription", "earnings", "tariffs", "manufacturers", "shareholders", "pentagon", "defense",
    "government", "economy", "consumers", "airline", "smartphone", "flagship", "quarterly",
];

const SHARED_TERMS: [&str; 12] = [
    "said", "new", "week", "officials", "plan", "year", "report", "people", "update", "statement", "today", "news",
];

/// Linearly separable labeled examples: each class draws its content terms
/// from a disjoint vocabulary, mixed with shared filler terms.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if rng.gen_bool(0.5) { Label::Local } else { Label::NonLocal };
            let vocab: &[&str] = match label {
                Label::Local => &LOCAL_TERMS,
                Label::NonLocal => &NATIONAL_TERMS,
            };
            let mut draw = |k: usize, shared: usize| {
                let mut w: Vec<String> = (0..k).map(|_| pick(&mut rng, vocab).to_string()).collect();
                w.extend((0..shared).map(|_| pick(&mut rng, &SHARED_TERMS).to_string()));
                w.shuffle(&mut rng);
                w
            };
            let topics = draw(3, 2);
            let tagline = draw(4, 3).join(" ");
            let title = draw(3, 2).join(" ");
            let bundle = FeatureBundle::new(topics, &tagline, &title, vec!["news".into()]);
            let market = if i % 3 == 0 { "EN-GB" } else { "EN-US" };
            LabeledExample {
                article_id: format!("sep-{i:05}"),
                market: market.to_string(),
                language: "en".to_string(),
                publisher: "synthetic".to_string(),
                publisher_segment: None,
                features: bundle.assembled,
                label,
                provenance: vec![RuleTag::PublisherMarked],
                weight: 1.0,
                flip_score: None,
                overridden: Vec::new(),
            }
        })
        .collect()
}

pub struct DirectionalCorpus {
    pub train: Vec<GoldArticle>,
    pub test: Vec<GoldArticle>,
    pub gazetteer: Vec<GazetteerEntry>,
}

/// Mixture of article kinds, as counts per 100 articles.
pub const DIRECTIONAL_TEST_MIX: [(Kind, usize); 5] = [
    (Kind::CityLocal, 35),
    (Kind::AcronymLocal, 8),
    (Kind::LocalAngle, 7),
    (Kind::HeadquartersNational, 20),
    (Kind::PlainNational, 30),
];

/// Local-angle stories never occur in training.
pub const DIRECTIONAL_TRAIN_MIX: [(Kind, usize); 4] = [
    (Kind::CityLocal, 42),
    (Kind::AcronymLocal, 8),
    (Kind::HeadquartersNational, 20),
    (Kind::PlainNational, 30),
];

fn directional_articles(rng: &mut ChaCha8Rng, prefix: &str, n: usize, mix: &[(Kind, usize)]) -> Vec<GoldArticle> {
    let mut kinds: Vec<Kind> = mix
        .iter()
        .flat_map(|&(k, per100)| std::iter::repeat(k).take(per100 * n / 100))
        .collect();
    kinds.shuffle(rng);
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let (title, body) = english_text(rng, kind, &US_CITIES);
            let domain = if kind.label() == Label::Local { "localdesk.com" } else { "nationaldesk.com" };
            GoldArticle {
                article: article(format!("{prefix}-{i:04}"), "EN-US", domain, title, body, i, None, false),
                gold_label: kind.label(),
            }
        })
        .collect()
}

/// Training articles plus the 200-article test set. Local stories that name
/// no gazetteer place (acronyms) and national stories that name a company's
/// home city are both present.
pub fn directional_corpus(seed: u64) -> DirectionalCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = directional_articles(&mut rng, "dir-train", DIRECTIONAL_TRAIN_SIZE, &DIRECTIONAL_TRAIN_MIX);
    let test = directional_articles(&mut rng, "dir-test", DIRECTIONAL_TEST_SIZE, &DIRECTIONAL_TEST_MIX);
    DirectionalCorpus {
        train,
        test,
        gazetteer: us_gazetteer(),
    }
}

/// Regenerates everything under `crates/core/data/`.
pub fn write_bundled(dir: &Path) -> io::Result<()> {
    write_toy(&dir.join("toy"), TOY_SEED)?;
    write_atomic(&dir.join("separable.jsonl"), &jsonl(&separable_corpus(SEPARABLE_SIZE, SEPARABLE_SEED))?)?;
    let d = directional_corpus(DIRECTIONAL_SEED);
    let sub = dir.join("directional");
    std::fs::create_dir_all(&sub)?;
    write_atomic(&sub.join("train.jsonl"), &jsonl(&d.train)?)?;
    write_atomic(&sub.join("test.jsonl"), &jsonl(&d.test)?)?;
    write_atomic(&sub.join("gazetteer.tsv"), gazetteer_tsv(&d.gazetteer).as_bytes())
}
