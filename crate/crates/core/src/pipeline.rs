//! Stage driver: configuration, artifact layout, locking and the manifest.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{all_publisher_affinities, article_affinity, AffinityParams, ArticleAffinity, PublisherAffinity};
use crate::augment::{
    back_translate, front_translate, translate_features, AugmentedExample, DictionaryProvider, IdentityProvider,
    RemoteProvider, RetryingProvider, Skip, TranslationProvider, MAX_RETRIES, PIVOT_LANGUAGE,
};
use crate::corpus::{
    load_articles, load_clicks, load_clicks_with_window, load_dataset, load_gazetteer, load_gold_articles,
    market_language, rejects_path, write_articles, write_clicks, write_dataset, Article, ClickRecord, CorpusError,
    Gazetteer, GazetteerEntry, GoldArticle, InputFormat, Label, LabeledExample, RuleTag, Segment, Subject,
    TRAIN_FILE, VALID_FILE,
};
use crate::eval::{compare, evaluate_scored, render_compare, render_report, EvalError, EvalReport, ScoredExample, SliceKind};
use crate::features::{assemble, TfIdfModel};
use crate::io::{read_jsonl, write_atomic, write_jsonl};
use crate::model::{ner_predict, train, ExternalScorer, ModelError, ModelMeta, NgramLinearModel, Scorer, TrainConfig};
use crate::text::sha256_hex;
use crate::weaklabel::{bootstrap_correct, label_corpus, to_example, LabelDecision, LabelError, MatchConflict};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".localweak.lock";

pub const ARTICLES_FILE: &str = "articles.jsonl";
pub const CLICKS_FILE: &str = "clicks.jsonl";
pub const GAZETTEER_FILE: &str = "gazetteer.tsv";
pub const TEST_FILE: &str = "test.jsonl";
pub const TFIDF_FILE: &str = "tfidf.model.json";
pub const AFFINITY_FILE: &str = "affinity.jsonl";
pub const ARTICLE_AFFINITY_FILE: &str = "article_affinity.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const CONFLICTS_FILE: &str = "label_conflicts.jsonl";
pub const AUGMENT_FILE: &str = "augment.jsonl";
pub const AUGMENT_SKIPS_FILE: &str = "augment.skips.jsonl";
pub const BOOTSTRAP_FILE: &str = "bootstrap.jsonl";
pub const MODEL_FILE: &str = "model.bin";
pub const MODEL_META_FILE: &str = "model.meta.json";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const NER_SCORES_FILE: &str = "scores.ner.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_MD_FILE: &str = "report.md";
pub const NER_REPORT_FILE: &str = "report.ner.json";
pub const NER_REPORT_MD_FILE: &str = "report.ner.md";
pub const COMPARE_FILE: &str = "compare.json";
pub const COMPARE_MD_FILE: &str = "compare.md";

pub const CLASSIFIER_NAME: &str = "classifier";
pub const NER_NAME: &str = "ner-baseline";
pub const API_KEY_ENV: &str = "LOCALWEAK_TRANSLATE_KEY";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing input artifact {}", .0.display())]
    MissingInput(PathBuf),
    #[error("working directory is locked by another run ({})", .0.display())]
    Locked(PathBuf),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("{0}")]
    Stage(String),
}

impl PipelineError {
    /// 2 for usage errors and missing inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingInput(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Affinity,
    Label,
    Augment,
    Train,
    Score,
    Evaluate,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Affinity,
        Stage::Label,
        Stage::Augment,
        Stage::Train,
        Stage::Score,
        Stage::Evaluate,
        Stage::Compare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Affinity => "affinity",
            Stage::Label => "label",
            Stage::Augment => "augment",
            Stage::Train => "train",
            Stage::Score => "score",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
        }
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub articles: PathBuf,
    pub clicks: PathBuf,
    pub gazetteer: PathBuf,
    pub test: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffinitySection {
    pub min_clicks: u64,
    pub gap_threshold: f64,
    pub max_local_cities: usize,
    pub window_days: i64,
}

impl Default for AffinitySection {
    fn default() -> Self {
        let p = AffinityParams::<f64>::default();
        AffinitySection {
            min_clicks: p.min_clicks,
            gap_threshold: p.gap_threshold,
            max_local_cities: p.max_local_cities,
            window_days: crate::corpus::DEFAULT_WINDOW_DAYS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub topics: usize,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            topics: crate::features::DEFAULT_TOPICS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub enabled: bool,
    pub low: f64,
    pub high: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            enabled: true,
            low: crate::weaklabel::DEFAULT_FLIP_LOW,
            high: crate::weaklabel::DEFAULT_FLIP_HIGH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratio: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratio: crate::corpus::DEFAULT_SPLIT_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dim: usize,
    pub orders: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::with_seed(0);
        TrainSection {
            dim: c.dim,
            orders: c.orders,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            orders: self.orders.clone(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub cutoffs: Vec<f64>,
    pub slices: Vec<SliceKind>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            cutoffs: vec![crate::eval::DEFAULT_CUTOFF, crate::eval::NATIONAL_CUTOFF],
            slices: vec![SliceKind::Market, SliceKind::Language, SliceKind::PublisherSegment],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Identity,
    Dictionary,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    /// Markets that receive front translations of English local examples.
    pub targets: Vec<String>,
    pub back_translate: bool,
    pub in_flight: usize,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub retry_base_ms: u64,
}

impl Default for ProviderSection {
    fn default() -> Self {
        ProviderSection {
            kind: ProviderKind::Identity,
            targets: Vec::new(),
            back_translate: true,
            in_flight: 4,
            endpoint: None,
            api_key_env: API_KEY_ENV.to_string(),
            timeout_secs: 30,
            max_retries: MAX_RETRIES,
            retry_base_ms: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    /// Program and arguments of an external line-protocol scorer used by the
    /// score stage instead of `model.bin`.
    pub command: Option<Vec<String>>,
}

/// `pipeline.toml`. Relative input paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub workdir: Option<PathBuf>,
    pub inputs: Inputs,
    #[serde(default)]
    pub affinity: AffinitySection,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub scorer: ScorerSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        if !path.is_file() {
            return Err(PipelineError::MissingInput(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = PipelineConfig::parse(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies command-line overrides on top of the file.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(w) = &o.workdir {
            self.workdir = Some(w.clone());
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if !o.cutoffs.is_empty() {
            self.eval.cutoffs = o.cutoffs.clone();
        }
        if !o.slices.is_empty() {
            self.eval.slices = o.slices.clone();
        }
        if let Some(v) = o.min_clicks {
            self.affinity.min_clicks = v;
        }
        if let Some(v) = o.gap_threshold {
            self.affinity.gap_threshold = v;
        }
        if let Some(v) = o.split_ratio {
            self.split.ratio = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let a = &self.affinity;
        if !(a.gap_threshold > 0.0 && a.gap_threshold <= 1.0) {
            return bad(format!("affinity.gap_threshold must lie in (0, 1], got {}", a.gap_threshold));
        }
        if a.max_local_cities == 0 {
            return bad("affinity.max_local_cities must be positive".into());
        }
        if a.window_days <= 0 {
            return bad("affinity.window_days must be positive".into());
        }
        if self.features.topics == 0 {
            return bad("features.topics must be positive".into());
        }
        let b = &self.bootstrap;
        if !(0.0 <= b.low && b.low < b.high && b.high <= 1.0) {
            return bad(format!("bootstrap band must satisfy 0 <= low < high <= 1, got {} / {}", b.low, b.high));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad(format!("split.ratio must lie in (0, 1), got {}", self.split.ratio));
        }
        self.train
            .to_config(self.seed)
            .validate()
            .map_err(|e| PipelineError::Config(format!("train: {e}")))?;
        if self.eval.cutoffs.is_empty() {
            return bad("eval.cutoffs must not be empty".into());
        }
        if let Some(c) = self.eval.cutoffs.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return bad(format!("eval.cutoffs must lie in (0, 1), got {c}"));
        }
        let p = &self.provider;
        if p.in_flight == 0 {
            return bad("provider.in_flight must be positive".into());
        }
        if p.max_retries > MAX_RETRIES {
            return bad(format!("provider.max_retries must be at most {MAX_RETRIES}"));
        }
        if let Some(t) = p.targets.iter().find(|t| !valid_market(t)) {
            return bad(format!("provider.targets: invalid market {t:?}"));
        }
        match p.kind {
            ProviderKind::Dictionary if self.inputs.dictionary.is_none() => {
                return bad("provider.kind = \"dictionary\" requires inputs.dictionary".into())
            }
            ProviderKind::Remote if p.endpoint.as_deref().map_or(true, |e| e.trim().is_empty()) => {
                return bad("provider.kind = \"remote\" requires provider.endpoint".into())
            }
            _ => {}
        }
        if let Some(cmd) = &self.scorer.command {
            if cmd.is_empty() || cmd[0].trim().is_empty() {
                return bad("scorer.command must name a program".into());
            }
        }
        Ok(())
    }

    /// Hash of the effective configuration. The working directory is not part
    /// of it.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn affinity_params(&self) -> AffinityParams<f64> {
        AffinityParams {
            min_clicks: self.affinity.min_clicks,
            gap_threshold: self.affinity.gap_threshold,
            max_local_cities: self.affinity.max_local_cities,
        }
    }

    fn default_workdir(&self) -> PathBuf {
        match &self.workdir {
            Some(w) => self.resolve(w),
            None => self.base_dir.join("work"),
        }
    }
}

fn valid_market(m: &str) -> bool {
    let parts: Vec<&str> = m.split('-').collect();
    parts.len() == 2 && parts.iter().all(|p| p.len() == 2 && p.chars().all(|c| c.is_ascii_alphabetic()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub workdir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub cutoffs: Vec<f64>,
    pub slices: Vec<SliceKind>,
    pub min_clicks: Option<u64>,
    pub gap_threshold: Option<f64>,
    pub split_ratio: Option<f64>,
    pub epochs: Option<usize>,
}

/// Per-stage entry in `manifest.json`. Keys are artifact file names for
/// workdir artifacts and `input:<name>` for external inputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(workdir: &Path) -> Result<Manifest> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Stage(format!("{}: {e}", path.display())))
    }

    fn save(&self, workdir: &Path) -> Result<()> {
        write_json(&workdir.join(MANIFEST_FILE), self)
    }
}

/// Checks every recorded output against the file on disk and every workdir
/// input against the output hash of the stage that produced it. Returns the
/// list of problems; empty means the chain verifies.
pub fn verify_manifest(workdir: &Path, config: Option<&PipelineConfig>) -> Result<Vec<String>> {
    let manifest = Manifest::load(workdir)?;
    let mut problems = Vec::new();
    if manifest.stages.is_empty() {
        problems.push("manifest records no stages".to_string());
    }
    let mut produced: HashMap<&str, (&str, &str)> = HashMap::new();
    for (stage, rec) in &manifest.stages {
        for (name, hash) in &rec.outputs {
            produced.insert(name, (stage, hash));
        }
    }
    for (stage, rec) in &manifest.stages {
        if let Some(c) = config {
            if rec.config_hash != c.hash() {
                problems.push(format!("{stage}: config hash differs from the current config"));
            }
        }
        for (name, hash) in &rec.outputs {
            match file_hash(&workdir.join(name)) {
                Ok(h) if &h == hash => {}
                Ok(_) => problems.push(format!("{stage}: output {name} changed since it was written")),
                Err(_) => problems.push(format!("{stage}: output {name} is missing")),
            }
        }
        for (name, hash) in &rec.inputs {
            if let Some(ext) = name.strip_prefix("input:") {
                if let Some(c) = config {
                    if let Some(path) = external_input(c, ext) {
                        if file_hash(&path).ok().as_deref() != Some(hash.as_str()) {
                            problems.push(format!("{stage}: input {} changed", path.display()));
                        }
                    }
                }
                continue;
            }
            match produced.get(name.as_str()) {
                Some((_, h)) if h == hash => {}
                Some((producer, _)) => {
                    problems.push(format!("{stage}: input {name} does not match the output of {producer}"))
                }
                None => problems.push(format!("{stage}: input {name} has no producing stage")),
            }
        }
    }
    Ok(problems)
}

fn external_input(c: &PipelineConfig, key: &str) -> Option<PathBuf> {
    let p = match key {
        "articles" => &c.inputs.articles,
        "clicks" => &c.inputs.clicks,
        "gazetteer" => &c.inputs.gazetteer,
        "test" => &c.inputs.test,
        "dictionary" => c.inputs.dictionary.as_ref()?,
        _ => return None,
    };
    Some(c.resolve(p))
}

pub fn file_hash(path: &Path) -> io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

struct WorkdirLock(PathBuf);

impl WorkdirLock {
    fn acquire(workdir: &Path) -> Result<WorkdirLock> {
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkdirLock(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleAffinityRecord {
    pub article_id: String,
    pub affinity: ArticleAffinity,
}

/// A validated configuration bound to a working directory.
pub struct Pipeline {
    config: PipelineConfig,
    workdir: PathBuf,
}

enum Input {
    External(&'static str, PathBuf),
    Work(&'static str),
}

impl Pipeline {
    /// Applies overrides and validates. Nothing is written.
    pub fn new(mut config: PipelineConfig, overrides: &Overrides) -> Result<Pipeline> {
        config.apply(overrides);
        config.validate()?;
        let workdir = config.default_workdir();
        Ok(Pipeline { config, workdir })
    }

    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Pipeline> {
        Pipeline::new(PipelineConfig::load(path)?, overrides)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }

    fn inputs(&self, stage: Stage) -> Vec<Input> {
        let c = &self.config;
        let ext = |key: &'static str, p: &Path| Input::External(key, c.resolve(p));
        let dictionary = || match (&c.inputs.dictionary, c.provider.kind) {
            (Some(d), ProviderKind::Dictionary) => vec![ext("dictionary", d)],
            _ => vec![],
        };
        match stage {
            Stage::Ingest => vec![
                ext("articles", &c.inputs.articles),
                ext("clicks", &c.inputs.clicks),
                ext("gazetteer", &c.inputs.gazetteer),
                ext("test", &c.inputs.test),
            ],
            Stage::Affinity => vec![Input::Work(CLICKS_FILE), Input::Work(ARTICLES_FILE)],
            Stage::Label => vec![
                Input::Work(ARTICLES_FILE),
                Input::Work(AFFINITY_FILE),
                Input::Work(ARTICLE_AFFINITY_FILE),
                Input::Work(TFIDF_FILE),
            ],
            Stage::Augment => {
                let mut v = vec![Input::Work(LABELS_FILE)];
                v.extend(dictionary());
                v
            }
            Stage::Train => {
                let mut v = vec![Input::Work(LABELS_FILE), Input::Work(AUGMENT_FILE)];
                if c.bootstrap.enabled {
                    v.extend(dictionary());
                }
                v
            }
            Stage::Score => {
                let mut v = vec![
                    Input::Work(TEST_FILE),
                    Input::Work(TFIDF_FILE),
                    Input::Work(AFFINITY_FILE),
                    Input::Work(GAZETTEER_FILE),
                ];
                if c.scorer.command.is_none() {
                    v.push(Input::Work(MODEL_FILE));
                }
                v
            }
            Stage::Evaluate => vec![Input::Work(SCORES_FILE), Input::Work(NER_SCORES_FILE)],
            Stage::Compare => vec![Input::Work(REPORT_FILE), Input::Work(NER_REPORT_FILE)],
        }
    }

    fn input_path(&self, input: &Input) -> PathBuf {
        match input {
            Input::External(_, p) => p.clone(),
            Input::Work(name) => self.path(name),
        }
    }

    /// Runs one stage under the workdir lock and records it in the manifest.
    pub fn run(&self, stage: Stage) -> Result<StageSummary> {
        let inputs = self.inputs(stage);
        for i in &inputs {
            let p = self.input_path(i);
            if !p.is_file() {
                return Err(PipelineError::MissingInput(p));
            }
        }
        fs::create_dir_all(&self.workdir).map_err(io_err(&self.workdir))?;
        let _lock = WorkdirLock::acquire(&self.workdir)?;

        let mut record = StageRecord {
            config_hash: self.config.hash(),
            ..StageRecord::default()
        };
        for i in &inputs {
            let key = match i {
                Input::External(k, _) => format!("input:{k}"),
                Input::Work(name) => name.to_string(),
            };
            let p = self.input_path(i);
            record.inputs.insert(key, file_hash(&p).map_err(io_err(&p))?);
        }

        log::info!("stage {} starting in {}", stage.as_str(), self.workdir.display());
        let (outputs, notes) = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Affinity => self.affinity()?,
            Stage::Label => self.label()?,
            Stage::Augment => self.augment()?,
            Stage::Train => self.train()?,
            Stage::Score => self.score()?,
            Stage::Evaluate => self.evaluate()?,
            Stage::Compare => self.compare()?,
        };
        for name in &outputs {
            let p = self.path(name);
            record.outputs.insert(name.clone(), file_hash(&p).map_err(io_err(&p))?);
        }
        let mut manifest = Manifest::load(&self.workdir)?;
        manifest.stages.insert(stage.as_str().to_string(), record);
        manifest.save(&self.workdir)?;
        for n in &notes {
            log::info!("{}: {n}", stage.as_str());
        }
        Ok(StageSummary {
            stage,
            outputs: outputs.iter().map(|n| self.path(n)).collect(),
            notes,
        })
    }

    pub fn run_all(&self) -> Result<Vec<StageSummary>> {
        Stage::ALL.into_iter().map(|s| self.run(s)).collect()
    }

    fn ingest(&self) -> Result<(Vec<String>, Vec<String>)> {
        let c = &self.config;
        let mut outputs = Vec::new();
        let mut notes = Vec::new();
        let mut rejects = |input: &Path, report_rejects: usize, write: &dyn Fn(&Path) -> std::result::Result<(), CorpusError>| -> Result<()> {
            let name = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let path = rejects_path(&self.path(&name));
            write(&path)?;
            notes.push(format!("{}: {report_rejects} rejected", input.display()));
            outputs.push(path.file_name().unwrap().to_string_lossy().into_owned());
            Ok(())
        };

        let articles_in = c.resolve(&c.inputs.articles);
        let articles = load_articles(&articles_in, InputFormat::from_path(&articles_in))?;
        rejects(&articles_in, articles.rejects.len(), &|p| articles.write_rejects(p))?;

        let clicks_in = c.resolve(&c.inputs.clicks);
        let clicks = load_clicks_with_window(&clicks_in, chrono::Duration::days(c.affinity.window_days))?;
        rejects(&clicks_in, clicks.rejects.len(), &|p| clicks.write_rejects(p))?;

        let gaz_in = c.resolve(&c.inputs.gazetteer);
        let gazetteer = load_gazetteer(&gaz_in)?;
        rejects(&gaz_in, gazetteer.rejects.len(), &|p| gazetteer.write_rejects(p))?;

        let test_in = c.resolve(&c.inputs.test);
        let test = load_gold_articles(&test_in, InputFormat::from_path(&test_in))?;
        rejects(&test_in, test.rejects.len(), &|p| test.write_rejects(p))?;

        write_articles(&self.path(ARTICLES_FILE), &articles.records)?;
        write_clicks(&self.path(CLICKS_FILE), &clicks.records)?;
        write_gazetteer(&self.path(GAZETTEER_FILE), Gazetteer::new(gazetteer.records).entries())?;
        self.write_jsonl(TEST_FILE, &test.records)?;
        let tfidf = TfIdfModel::fit(articles.records.iter().map(|a| a.body.as_str()));
        tfidf.save(&self.path(TFIDF_FILE))?;

        notes.push(format!(
            "{} articles, {} click records, {} test articles",
            articles.records.len(),
            clicks.records.len(),
            test.records.len()
        ));
        outputs.extend([ARTICLES_FILE, CLICKS_FILE, GAZETTEER_FILE, TEST_FILE, TFIDF_FILE].map(String::from));
        Ok((outputs, notes))
    }

    fn load_articles(&self) -> Result<Vec<Article>> {
        Ok(load_articles(&self.path(ARTICLES_FILE), InputFormat::Jsonl)?.records)
    }

    fn affinity(&self) -> Result<(Vec<String>, Vec<String>)> {
        let clicks = load_clicks(&self.path(CLICKS_FILE))?.records;
        let articles = self.load_articles()?;
        let params = self.config.affinity_params();

        let publishers = all_publisher_affinities(&clicks, articles.iter().map(|a| a.publisher.as_str()), &params);
        let mut by_article: HashMap<&str, Vec<ClickRecord>> = HashMap::new();
        for r in &clicks {
            if let Subject::Article(id) = &r.subject {
                by_article.entry(id).or_default().push(r.clone());
            }
        }
        let article_records: Vec<ArticleAffinityRecord> = articles
            .iter()
            .map(|a| ArticleAffinityRecord {
                article_id: a.id.clone(),
                affinity: article_affinity(by_article.get(a.id.as_str()).map_or(&[][..], Vec::as_slice), &a.id, &params),
            })
            .collect();

        self.write_jsonl(AFFINITY_FILE, &publishers)?;
        self.write_jsonl(ARTICLE_AFFINITY_FILE, &article_records)?;
        let count = |s: Segment| publishers.iter().filter(|p| p.segment == s).count();
        let notes = vec![format!(
            "{} publishers: {} strong-local, {} strong-non-local, {} ambiguous",
            publishers.len(),
            count(Segment::StrongLocal),
            count(Segment::StrongNonLocal),
            count(Segment::Ambiguous)
        )];
        Ok((vec![AFFINITY_FILE.into(), ARTICLE_AFFINITY_FILE.into()], notes))
    }

    fn segments(&self) -> Result<HashMap<String, Segment>> {
        let rows: Vec<PublisherAffinity<f64>> = self.read_jsonl(AFFINITY_FILE)?;
        Ok(rows.into_iter().map(|p| (p.publisher, p.segment)).collect())
    }

    fn label(&self) -> Result<(Vec<String>, Vec<String>)> {
        let articles = self.load_articles()?;
        let segments = self.segments()?;
        let affinities: HashMap<String, ArticleAffinity> = self
            .read_jsonl::<ArticleAffinityRecord>(ARTICLE_AFFINITY_FILE)?
            .into_iter()
            .map(|r| (r.article_id, r.affinity))
            .collect();
        let tfidf = TfIdfModel::load(&self.path(TFIDF_FILE))?;

        let (decisions, conflicts): (Vec<LabelDecision>, Vec<MatchConflict>) = label_corpus(
            &articles,
            |p| segments.get(p).copied(),
            |id| affinities.get(id).cloned().unwrap_or(ArticleAffinity::Unknown),
        );
        let by_id: HashMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
        let examples: Vec<LabeledExample> = decisions
            .iter()
            .map(|d| {
                let a = by_id[d.article_id.as_str()];
                let bundle = assemble(a, &tfidf, self.config.features.topics);
                for w in &bundle.warnings {
                    log::warn!("{}: {w}", a.id);
                }
                to_example(a, d, segments.get(&a.publisher).copied(), bundle.assembled)
            })
            .collect();
        self.write_jsonl(LABELS_FILE, &examples)?;
        self.write_jsonl(CONFLICTS_FILE, &conflicts)?;
        let local = examples.iter().filter(|e| e.label == Label::Local).count();
        let notes = vec![format!(
            "{} of {} articles labeled ({local} local), {} distant-supervision conflicts",
            examples.len(),
            articles.len(),
            conflicts.len()
        )];
        Ok((vec![LABELS_FILE.into(), CONFLICTS_FILE.into()], notes))
    }

    fn provider(&self) -> Result<Box<dyn TranslationProvider>> {
        let p = &self.config.provider;
        Ok(match p.kind {
            ProviderKind::Identity => Box::new(IdentityProvider),
            ProviderKind::Dictionary => {
                let path = self.config.resolve(self.config.inputs.dictionary.as_ref().expect("validated"));
                Box::new(DictionaryProvider::load(&path)?)
            }
            ProviderKind::Remote => {
                let endpoint = p.endpoint.as_deref().expect("validated");
                let remote = RemoteProvider::from_env(endpoint, &p.api_key_env, Duration::from_secs(p.timeout_secs));
                Box::new(RetryingProvider::new(remote, p.max_retries, Duration::from_millis(p.retry_base_ms)))
            }
        })
    }

    fn augment(&self) -> Result<(Vec<String>, Vec<String>)> {
        let labels = load_dataset(&self.path(LABELS_FILE))?;
        let provider = self.provider()?;
        let p = &self.config.provider;
        let english_local: Vec<LabeledExample> = labels
            .iter()
            .filter(|e| e.language == PIVOT_LANGUAGE && e.label == Label::Local && !e.is_augmented())
            .cloned()
            .collect();
        let mut outputs: Vec<AugmentedExample> = Vec::new();
        let mut skipped: Vec<Skip> = Vec::new();
        let mut notes = Vec::new();
        for target in &p.targets {
            if market_language(target) == PIVOT_LANGUAGE {
                continue;
            }
            let out = front_translate(&english_local, target, provider.as_ref(), p.in_flight);
            notes.push(format!("front {target}: {} outputs, {} skipped", out.outputs.len(), out.skipped.len()));
            outputs.extend(out.outputs);
            skipped.extend(out.skipped);
        }
        if p.back_translate {
            let foreign: Vec<LabeledExample> = labels.iter().filter(|e| e.language != PIVOT_LANGUAGE).cloned().collect();
            let out = back_translate(&foreign, provider.as_ref(), p.in_flight);
            notes.push(format!("back: {} outputs, {} skipped", out.outputs.len(), out.skipped.len()));
            outputs.extend(out.outputs);
            skipped.extend(out.skipped);
        }
        self.write_jsonl(AUGMENT_FILE, &outputs)?;
        self.write_jsonl(AUGMENT_SKIPS_FILE, &skipped)?;
        notes.push(format!("dataset {} -> {}", labels.len(), labels.len() + outputs.len()));
        Ok((vec![AUGMENT_FILE.into(), AUGMENT_SKIPS_FILE.into()], notes))
    }

    /// Bootstrap-corrects non-English examples with an English-only model,
    /// splits the corrected pool and trains the final model.
    fn train(&self) -> Result<(Vec<String>, Vec<String>)> {
        let c = &self.config;
        let mut pool = load_dataset(&self.path(LABELS_FILE))?;
        let augmented: Vec<AugmentedExample> = self.read_jsonl(AUGMENT_FILE)?;
        pool.extend(augmented.into_iter().map(|a| a.example));
        let train_config = c.train.to_config(c.seed);
        let mut notes = Vec::new();

        let mut flips: Vec<LabelDecision> = Vec::new();
        if c.bootstrap.enabled {
            let english: Vec<LabeledExample> = pool.iter().filter(|e| e.language == PIVOT_LANGUAGE).cloned().collect();
            match train::<f64>(&english, &[], &train_config) {
                Ok((english_model, _)) => {
                    let provider = self.provider()?;
                    let foreign: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].language != PIVOT_LANGUAGE).collect();
                    let translated = crate::augment::map_ordered(&foreign, c.provider.in_flight, |&i| {
                        translate_features(&pool[i].features, provider.as_ref(), &pool[i].language, PIVOT_LANGUAGE)
                    });
                    let mut untranslated = 0;
                    for (&i, text) in foreign.iter().zip(translated) {
                        let Ok(text) = text else {
                            untranslated += 1;
                            continue;
                        };
                        let p_local = english_model.predict(&text);
                        let corrected = bootstrap_correct(&pool[i], p_local, c.bootstrap.low, c.bootstrap.high)?;
                        if corrected.label != pool[i].label {
                            flips.push(LabelDecision {
                                article_id: corrected.article_id.clone(),
                                label: corrected.label,
                                source: RuleTag::BootstrapFlip,
                                prior_label: Some(pool[i].label),
                                flip_score: corrected.flip_score,
                                overridden: Vec::new(),
                            });
                            pool[i] = corrected;
                        }
                    }
                    notes.push(format!(
                        "bootstrap: {} non-English examples checked, {} flipped, {untranslated} untranslatable",
                        foreign.len(),
                        flips.len()
                    ));
                }
                Err(e @ (ModelError::EmptyTrainingSet | ModelError::DegenerateLabels)) => {
                    notes.push(format!("bootstrap skipped: English model unavailable ({e})"));
                }
                Err(e) => return Err(e.into()),
            }
        }
        self.write_jsonl(BOOTSTRAP_FILE, &flips)?;

        write_dataset(&pool, &self.workdir, c.split.ratio, c.seed)?;
        let train_set = load_dataset(&self.path(TRAIN_FILE))?;
        let valid_set = load_dataset(&self.path(VALID_FILE))?;
        let (model, report) = train::<f64>(&train_set, &valid_set, &train_config)?;
        let bytes = model.to_bytes();
        write_atomic(&self.path(MODEL_FILE), &bytes).map_err(io_err(&self.path(MODEL_FILE)))?;
        let meta = ModelMeta {
            format: "localweak-ngram".into(),
            version: crate::model::MODEL_VERSION,
            hash: sha256_hex(&bytes),
            scalar: "f64".into(),
            config: train_config,
            report,
            train_examples: train_set.len(),
            valid_examples: valid_set.len(),
        };
        write_json(&self.path(MODEL_META_FILE), &meta)?;
        if let Some(last) = meta.report.epochs.last() {
            notes.push(format!(
                "{} train / {} valid, final train loss {:.4}",
                meta.train_examples, meta.valid_examples, last.train_loss
            ));
        }
        let outputs = [BOOTSTRAP_FILE, TRAIN_FILE, VALID_FILE, MODEL_FILE, MODEL_META_FILE];
        Ok((outputs.map(String::from).to_vec(), notes))
    }

    fn score(&self) -> Result<(Vec<String>, Vec<String>)> {
        let test: Vec<GoldArticle> = self.read_jsonl(TEST_FILE)?;
        let tfidf = TfIdfModel::load(&self.path(TFIDF_FILE))?;
        let segments = self.segments()?;
        let gazetteer = Gazetteer::new(load_gazetteer(&self.path(GAZETTEER_FILE))?.records);

        let scorer: Box<dyn Scorer> = match &self.config.scorer.command {
            Some(cmd) => Box::new(
                ExternalScorer::spawn(&cmd[0], &cmd[1..])
                    .map_err(|e| PipelineError::Stage(format!("cannot start external scorer {}: {e}", cmd[0])))?,
            ),
            None => Box::new(NgramLinearModel::<f64>::load(&self.path(MODEL_FILE))?),
        };
        let base = |g: &GoldArticle, score: f64| ScoredExample {
            id: g.article.id.clone(),
            market: g.article.market.clone(),
            language: g.article.language.clone(),
            publisher_segment: segments.get(&g.article.publisher).copied(),
            gold: g.gold_label,
            score,
        };
        let mut model_scores = Vec::with_capacity(test.len());
        let mut ner_scores = Vec::with_capacity(test.len());
        for g in &test {
            let features = assemble(&g.article, &tfidf, self.config.features.topics).assembled;
            let p = scorer.score(&features).map_err(|e| PipelineError::Stage(format!("{}: {e}", g.article.id)))?;
            model_scores.push(base(g, p));
            let ner = match ner_predict(&g.article, &gazetteer) {
                Label::Local => 1.0,
                Label::NonLocal => 0.0,
            };
            ner_scores.push(base(g, ner));
        }
        self.write_jsonl(SCORES_FILE, &model_scores)?;
        self.write_jsonl(NER_SCORES_FILE, &ner_scores)?;
        let notes = vec![format!("{} test articles scored with {} and {NER_NAME}", test.len(), scorer.name())];
        Ok((vec![SCORES_FILE.into(), NER_SCORES_FILE.into()], notes))
    }

    fn evaluate(&self) -> Result<(Vec<String>, Vec<String>)> {
        let e = &self.config.eval;
        let mut notes = Vec::new();
        for (scores, name, json, md) in [
            (SCORES_FILE, CLASSIFIER_NAME, REPORT_FILE, REPORT_MD_FILE),
            (NER_SCORES_FILE, NER_NAME, NER_REPORT_FILE, NER_REPORT_MD_FILE),
        ] {
            let scored: Vec<ScoredExample> = self.read_jsonl(scores)?;
            let report = evaluate_scored::<f64>(&scored, name, &e.cutoffs, &e.slices)?;
            write_json(&self.path(json), &report)?;
            self.write_text(md, &render_report(&report))?;
            if let Some(a) = report.aggregate(e.cutoffs[0]) {
                notes.push(format!(
                    "{name} @ {}: P={} R={}",
                    e.cutoffs[0],
                    a.precision.map_or("undefined".into(), |v| format!("{v:.3}")),
                    a.recall.map_or("undefined".into(), |v| format!("{v:.3}"))
                ));
            }
        }
        let outputs = [REPORT_FILE, REPORT_MD_FILE, NER_REPORT_FILE, NER_REPORT_MD_FILE];
        Ok((outputs.map(String::from).to_vec(), notes))
    }

    fn compare(&self) -> Result<(Vec<String>, Vec<String>)> {
        let a: EvalReport<f64> = self.read_json(REPORT_FILE)?;
        let b: EvalReport<f64> = self.read_json(NER_REPORT_FILE)?;
        let table = compare(&a, &b)?;
        write_json(&self.path(COMPARE_FILE), &table)?;
        self.write_text(COMPARE_MD_FILE, &render_compare(&table))?;
        let notes = table
            .rows
            .iter()
            .filter(|r| r.key == crate::eval::SliceKey::Aggregate)
            .map(|r| {
                format!(
                    "aggregate @ {}: dP={} dR={}",
                    r.cutoff,
                    r.delta_precision.map_or("undefined".into(), |v| format!("{v:+.3}")),
                    r.delta_recall.map_or("undefined".into(), |v| format!("{v:+.3}"))
                )
            })
            .collect();
        Ok((vec![COMPARE_FILE.into(), COMPARE_MD_FILE.into()], notes))
    }

    fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<()> {
        let path = self.path(name);
        write_jsonl(&path, items).map_err(io_err(&path))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        write_atomic(&path, text.as_bytes()).map_err(io_err(&path))
    }

    fn read_jsonl<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<Vec<T>> {
        let path = self.path(name);
        read_jsonl(&path).map_err(io_err(&path))
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Stage(format!("{}: {e}", path.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(io_err(path))
}

fn write_gazetteer(path: &Path, entries: &[GazetteerEntry]) -> Result<()> {
    let mut s = String::from("name\tcity\tstate\tcountry\n");
    for e in entries {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", e.name, e.city, e.state, e.country));
    }
    write_atomic(path, s.as_bytes()).map_err(io_err(path))
}
