//! Scoring layer: the [`Scorer`] plug point, a hashed word n-gram logistic
//! model trained with adaptive-moment updates, the gazetteer baseline, and a
//! line-protocol bridge for external scorers.
//!
//! Featurization: the text is tokenized (case-folded, split on
//! non-alphanumerics), every word n-gram of the configured orders is joined
//! with single spaces, hashed with 64-bit FNV-1a and reduced modulo the hash
//! dimension. Feature values are raw n-gram counts.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, Gazetteer, Label, LabeledExample};
use crate::scalar::{logistic, Scalar};
use crate::text::{fnv1a64, tokenize};

pub const DEFAULT_DIM: usize = 1 << 20;
pub const DEFAULT_ORDERS: [usize; 4] = [1, 2, 3, 4];
pub const MODEL_MAGIC: [u8; 8] = *b"LWNGRAM\0";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("degenerate labels: training set contains a single class")]
    DegenerateLabels,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error("model io error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("external scorer failed: {0}")]
    External(String),
    #[error("scorer returned {0}, outside [0, 1]")]
    OutOfRange(f64),
}

/// Anything that maps feature text to a probability of being local news.
pub trait Scorer {
    fn name(&self) -> &str;
    fn score(&self, text: &str) -> Result<f64, ScoreError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedFeaturizer {
    pub dim: usize,
    pub orders: Vec<usize>,
}

impl HashedFeaturizer {
    pub fn new(dim: usize, orders: Vec<usize>) -> HashedFeaturizer {
        HashedFeaturizer { dim, orders }
    }

    pub fn bucket(&self, ngram: &str) -> usize {
        (fnv1a64(ngram.as_bytes()) % self.dim as u64) as usize
    }

    /// Sparse n-gram counts, sorted by bucket.
    pub fn featurize<T: Scalar>(&self, text: &str) -> Vec<(usize, T)> {
        let toks = tokenize(text);
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        for &n in &self.orders {
            if n == 0 || toks.len() < n {
                continue;
            }
            for w in toks.windows(n) {
                *counts.entry(self.bucket(&w.join(" "))).or_insert(0) += 1;
            }
        }
        counts.into_iter().map(|(i, c)| (i, T::of_u64(c))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub orders: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults with an explicit seed; there is no default seed.
    pub fn with_seed(seed: u64) -> TrainConfig {
        TrainConfig {
            dim: DEFAULT_DIM,
            orders: DEFAULT_ORDERS.to_vec(),
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.orders.is_empty() || self.orders.iter().any(|&n| n == 0) {
            return bad("orders must be nonempty and positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("decay rates must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

/// Featurized example ready for training or loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseExample<T> {
    pub features: Vec<(usize, T)>,
    pub target: T,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramLinearModel<T> {
    pub featurizer: HashedFeaturizer,
    pub weights: Vec<T>,
    pub bias: T,
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

impl<T: Scalar> NgramLinearModel<T> {
    pub fn zeros(featurizer: HashedFeaturizer) -> NgramLinearModel<T> {
        NgramLinearModel {
            weights: vec![T::zero(); featurizer.dim],
            featurizer,
            bias: T::zero(),
        }
    }

    pub fn logit(&self, features: &[(usize, T)]) -> T {
        features.iter().fold(self.bias, |acc, &(i, x)| acc + self.weights[i] * x)
    }

    pub fn predict(&self, text: &str) -> T {
        logistic(self.logit(&self.featurizer.featurize(text)))
    }

    pub fn prepare(&self, examples: &[LabeledExample]) -> Vec<SparseExample<T>> {
        examples
            .iter()
            .map(|e| SparseExample {
                features: self.featurizer.featurize(&e.features),
                target: T::of_u64(u64::from(e.label.as_int())),
                weight: T::of(e.weight),
            })
            .collect()
    }

    /// Weighted mean cross-entropy.
    pub fn loss(&self, batch: &[SparseExample<T>]) -> T {
        let mut total = T::zero();
        let mut weight = T::zero();
        for e in batch {
            let z = self.logit(&e.features);
            total = total + e.weight * (softplus(z) - e.target * z);
            weight = weight + e.weight;
        }
        if weight > T::zero() {
            total / weight
        } else {
            T::zero()
        }
    }

    /// Analytic gradient of [`Self::loss`]: sparse weight gradient (sorted by
    /// bucket) and bias gradient.
    pub fn gradient(&self, batch: &[SparseExample<T>]) -> (Vec<(usize, T)>, T) {
        let weight: T = batch.iter().map(|e| e.weight).sum();
        let mut grad: BTreeMap<usize, T> = BTreeMap::new();
        let mut bias = T::zero();
        if weight <= T::zero() {
            return (Vec::new(), bias);
        }
        for e in batch {
            let residual = e.weight * (logistic(self.logit(&e.features)) - e.target) / weight;
            bias = bias + residual;
            for &(i, x) in &e.features {
                let g = grad.entry(i).or_insert(T::zero());
                *g = *g + residual * x;
            }
        }
        (grad.into_iter().collect(), bias)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let width = std::mem::size_of::<T>();
        let mut out = Vec::with_capacity(40 + width * (self.weights.len() + 1));
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(width as u32).to_le_bytes());
        out.extend_from_slice(&(self.featurizer.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.featurizer.orders.len() as u32).to_le_bytes());
        for &n in &self.featurizer.orders {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        let mut put = |v: T| match width {
            4 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
            _ => out.extend_from_slice(&v.as_f64().to_le_bytes()),
        };
        put(self.bias);
        for &w in &self.weights {
            put(w);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<NgramLinearModel<T>, ModelError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(ModelError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(ModelError::Format(format!("unsupported version {version}")));
        }
        let width = r.u32()?;
        if width != 4 && width != 8 {
            return Err(ModelError::Format(format!("unsupported scalar width {width}")));
        }
        let dim = usize::try_from(r.u64()?).map_err(|_| ModelError::Format("dim overflow".into()))?;
        let n_orders = r.u32()? as usize;
        let orders = (0..n_orders).map(|_| r.u32().map(|n| n as usize)).collect::<Result<Vec<_>, _>>()?;
        let mut get = || -> Result<T, ModelError> {
            Ok(T::of(if width == 4 {
                f64::from(f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")))
            } else {
                f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"))
            }))
        };
        let bias = get()?;
        let weights = (0..dim).map(|_| get()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != bytes.len() {
            return Err(ModelError::Format("trailing bytes".into()));
        }
        Ok(NgramLinearModel {
            featurizer: HashedFeaturizer::new(dim, orders),
            weights,
            bias,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        crate::io::write_atomic(path, &self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<NgramLinearModel<T>, ModelError> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        NgramLinearModel::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Format("truncated model".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl<T: Scalar> Scorer for NgramLinearModel<T> {
    fn name(&self) -> &str {
        "ngram"
    }

    fn score(&self, text: &str) -> Result<f64, ScoreError> {
        Ok(self.predict(text).as_f64())
    }
}

/// `model.meta.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub version: u32,
    pub hash: String,
    pub scalar: String,
    pub config: TrainConfig,
    pub report: TrainReport,
    pub train_examples: usize,
    pub valid_examples: usize,
}

/// Trains with mini-batch adaptive-moment updates on the weighted mean
/// cross-entropy. Moments are kept per bucket and only buckets active in the
/// current batch are updated. Identical inputs and seed give bit-identical
/// weights.
pub fn train<T: Scalar>(
    train_set: &[LabeledExample],
    valid_set: &[LabeledExample],
    config: &TrainConfig,
) -> Result<(NgramLinearModel<T>, TrainReport), ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let has = |l: Label| train_set.iter().any(|e| e.label == l);
    if !(has(Label::Local) && has(Label::NonLocal)) {
        return Err(ModelError::DegenerateLabels);
    }

    let mut model = NgramLinearModel::<T>::zeros(HashedFeaturizer::new(config.dim, config.orders.clone()));
    let train_data = model.prepare(train_set);
    let valid_data = model.prepare(valid_set);

    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.epsilon);
    let mut m = vec![T::zero(); config.dim];
    let mut v = vec![T::zero(); config.dim];
    let (mut m_bias, mut v_bias) = (T::zero(), T::zero());
    let mut step: i32 = 0;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<SparseExample<T>> = chunk.iter().map(|&i| train_data[i].clone()).collect();
            let (grad, grad_bias) = model.gradient(&batch);
            step += 1;
            let c1 = T::one() - b1.powi(step);
            let c2 = T::one() - b2.powi(step);
            let adam = |param: &mut T, m: &mut T, v: &mut T, g: T| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *param = *param - lr * m_hat / (v_hat.sqrt() + eps);
            };
            for (i, g) in grad {
                adam(&mut model.weights[i], &mut m[i], &mut v[i], g);
            }
            adam(&mut model.bias, &mut m_bias, &mut v_bias, grad_bias);
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: model.loss(&train_data).as_f64(),
            valid_loss: (!valid_data.is_empty()).then(|| model.loss(&valid_data).as_f64()),
        };
        log::info!(
            "epoch {} train_loss={:.6} valid_loss={}",
            stats.epoch,
            stats.train_loss,
            stats.valid_loss.map_or("-".to_string(), |l| format!("{l:.6}"))
        );
        report.epochs.push(stats);
    }
    Ok((model, report))
}

/// Gazetteer baseline: local iff a location name occurs as whole tokens.
#[derive(Debug, Clone)]
pub struct NerBaseline {
    pub gazetteer: Gazetteer,
}

impl NerBaseline {
    pub fn new(gazetteer: Gazetteer) -> NerBaseline {
        NerBaseline { gazetteer }
    }
}

impl Scorer for NerBaseline {
    fn name(&self) -> &str {
        "ner-baseline"
    }

    fn score(&self, text: &str) -> Result<f64, ScoreError> {
        Ok(if self.gazetteer.contains_location(text) { 1.0 } else { 0.0 })
    }
}

/// Title and body are matched separately so a name cannot straddle them.
pub fn ner_predict(article: &Article, gazetteer: &Gazetteer) -> Label {
    if gazetteer.contains_location(&article.title) || gazetteer.contains_location(&article.body) {
        Label::Local
    } else {
        Label::NonLocal
    }
}

/// Scorer backed by a child process speaking the line protocol: one feature
/// text per input line, one decimal probability per output line.
pub struct ExternalScorer {
    name: String,
    child: Child,
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
}

impl ExternalScorer {
    pub fn spawn(program: &str, args: &[String]) -> io::Result<ExternalScorer> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| io::Error::other("no stdin"))?;
        let stdout = child.stdout.take().ok_or_else(|| io::Error::other("no stdout"))?;
        Ok(ExternalScorer {
            name: format!("external:{program}"),
            child,
            io: Mutex::new((stdin, BufReader::new(stdout))),
        })
    }
}

impl Scorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, text: &str) -> Result<f64, ScoreError> {
        let line = text.replace(['\n', '\r'], " ");
        let mut guard = self.io.lock().map_err(|_| ScoreError::External("poisoned".into()))?;
        let (stdin, stdout) = &mut *guard;
        writeln!(stdin, "{line}").and_then(|_| stdin.flush()).map_err(|e| ScoreError::External(e.to_string()))?;
        let mut reply = String::new();
        let n = stdout.read_line(&mut reply).map_err(|e| ScoreError::External(e.to_string()))?;
        if n == 0 {
            return Err(ScoreError::External("scorer closed its output".into()));
        }
        let p: f64 = reply
            .trim()
            .parse()
            .map_err(|_| ScoreError::External(format!("not a probability: {:?}", reply.trim())))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(ScoreError::OutOfRange(p));
        }
        Ok(p)
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serves `scorer` over the line protocol until `input` is exhausted.
pub fn serve_lines<S: Scorer + ?Sized>(scorer: &S, input: impl BufRead, mut output: impl Write) -> io::Result<usize> {
    let mut n = 0;
    for line in input.lines() {
        let p = scorer.score(&line?).map_err(io::Error::other)?;
        writeln!(output, "{p}")?;
        output.flush()?;
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GazetteerEntry, RuleTag};
    use rand::Rng;

    fn ex(id: usize, text: &str, label: Label) -> LabeledExample {
        LabeledExample {
            article_id: format!("e{id}"),
            market: "EN-US".into(),
            language: "en".into(),
            publisher: "p".into(),
            publisher_segment: None,
            features: text.into(),
            label,
            provenance: vec![RuleTag::PublisherMarked],
            weight: 1.0,
            flip_score: None,
            overridden: vec![],
        }
    }

    const FILLER: [&str; 12] = [
        "report", "today", "update", "people", "week", "officials", "said", "new", "plan", "story", "residents", "time",
    ];

    fn toy_set(n: usize, seed: u64) -> Vec<LabeledExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let local = i % 2 == 0;
                let mut words: Vec<&str> = (0..6).map(|_| FILLER[rng.gen_range(0..FILLER.len())]).collect();
                let pos = rng.gen_range(0..words.len());
                let signal = if local { "city council" } else { "nationwide" };
                words.insert(pos, signal);
                ex(i, &words.join(" "), if local { Label::Local } else { Label::NonLocal })
            })
            .collect()
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            dim: 1 << 12,
            epochs: 5,
            ..TrainConfig::with_seed(seed)
        }
    }

    #[test]
    fn separable_toy_set_reaches_high_accuracy() {
        let train_set = toy_set(200, 1);
        let valid = toy_set(60, 2);
        let (model, report) = train::<f64>(&train_set, &valid, &small_config(7)).unwrap();
        let correct = valid
            .iter()
            .filter(|e| (model.predict(&e.features) >= 0.5) == (e.label == Label::Local))
            .count();
        assert!(correct as f64 / valid.len() as f64 >= 0.95);
        assert_eq!(report.epochs.len(), 5);
        assert!(report.epochs.iter().all(|e| e.valid_loss.is_some()));
    }

    #[test]
    fn training_loss_does_not_increase() {
        let (_, report) = train::<f64>(&toy_set(200, 3), &[], &small_config(11)).unwrap();
        for w in report.epochs.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss + 1e-3, "{:?}", report.epochs);
        }
    }

    #[test]
    fn training_rejects_bad_sets() {
        assert!(matches!(train::<f64>(&[], &[], &small_config(1)), Err(ModelError::EmptyTrainingSet)));
        let one_class: Vec<_> = (0..4).map(|i| ex(i, "x", Label::Local)).collect();
        assert!(matches!(train::<f64>(&one_class, &[], &small_config(1)), Err(ModelError::DegenerateLabels)));
        let bad = TrainConfig { epochs: 0, ..small_config(1) };
        assert!(matches!(train::<f64>(&toy_set(4, 1), &[], &bad), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn same_seed_same_weights() {
        let data = toy_set(100, 5);
        let (a, _) = train::<f64>(&data, &[], &small_config(42)).unwrap();
        let (b, _) = train::<f64>(&data, &[], &small_config(42)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let (c, _) = train::<f64>(&data, &[], &small_config(43)).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn zero_model_scores_logistic_of_bias() {
        let mut m = NgramLinearModel::<f64>::zeros(HashedFeaturizer::new(64, vec![1, 2]));
        assert_eq!(m.score("anything at all").unwrap(), 0.5);
        m.bias = 1.5;
        assert_eq!(m.score("").unwrap(), logistic(1.5));
        assert_eq!(m.score("words").unwrap(), logistic(1.5));
    }

    #[test]
    fn featurizer_counts_all_orders() {
        let f = HashedFeaturizer::new(1 << 20, vec![1, 2, 3, 4]);
        let feats: Vec<(usize, f64)> = f.featurize("a b c d");
        let total: f64 = feats.iter().map(|p| p.1).sum();
        assert_eq!(total, 4.0 + 3.0 + 2.0 + 1.0);
        assert_eq!(f.bucket("a b"), (fnv1a64(b"a b") % (1 << 20)) as usize);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let data = toy_set(40, 9);
        let (mut model, _) = train::<f64>(&data, &[], &TrainConfig { epochs: 1, ..small_config(3) }).unwrap();
        model.bias = 0.3;
        let batch = model.prepare(&data);
        let (grad, grad_bias) = model.gradient(&batch);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
        for _ in 0..20 {
            let (i, g) = grad[rng.gen_range(0..grad.len())];
            let orig = model.weights[i];
            model.weights[i] = orig + h;
            let up = model.loss(&batch);
            model.weights[i] = orig - h;
            let down = model.loss(&batch);
            model.weights[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!(rel(g, numeric) < 1e-5, "bucket {i}: analytic {g} numeric {numeric}");
        }
        let b = model.bias;
        model.bias = b + h;
        let up = model.loss(&batch);
        model.bias = b - h;
        let down = model.loss(&batch);
        assert!(rel(grad_bias, (up - down) / (2.0 * h)) < 1e-5);
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let (model, _) = train::<f64>(&toy_set(30, 1), &[], &small_config(1)).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..8], b"LWNGRAM\0");
        let back = NgramLinearModel::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert!(NgramLinearModel::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(NgramLinearModel::<f64>::from_bytes(&bad).is_err());

        let single: NgramLinearModel<f32> = NgramLinearModel::from_bytes(&bytes).unwrap();
        assert_eq!(single.to_bytes().len(), 8 + 4 + 4 + 8 + 4 + 4 * 4 + 4 * (1 + single.weights.len()));
    }

    #[test]
    fn single_precision_training_works() {
        let (model, _) = train::<f32>(&toy_set(100, 1), &[], &small_config(1)).unwrap();
        assert!(model.predict("the city council met") > 0.5);
        assert!(model.predict("nationwide recall") < 0.5);
    }

    fn gaz(names: &[&str]) -> Gazetteer {
        Gazetteer::new(names.iter().map(|n| GazetteerEntry {
            name: n.to_string(),
            city: n.to_string(),
            state: "CA".into(),
            country: "US".into(),
        }))
    }

    fn article(title: &str, body: &str) -> Article {
        Article {
            id: "a".into(),
            market: "EN-US".into(),
            language: "en".into(),
            title: title.into(),
            body: body.into(),
            url: "https://x.com/a".into(),
            publisher: "x.com".into(),
            publisher_label: None,
            canonical_url: None,
            licensed: false,
        }
    }

    #[test]
    fn ner_examples() {
        let g = gaz(&["San Jose", "Irvine", "Seattle"]);
        assert_eq!(
            ner_predict(&article("San Jose Police arrest 74-year-old Fresno man in connection to homicide", ""), &g),
            Label::Local
        );
        assert_eq!(
            ner_predict(
                &article("Ryvid Anthem Launch Edition Electric Bike Preorders Are Now Open", "The Irvine, CA startup opened preorders."),
                &g
            ),
            Label::Local
        );
        assert_eq!(
            ner_predict(&article("SPD updates employee policies on tattoos, jewelry, hair styles, gender language", ""), &g),
            Label::NonLocal
        );
        let b = NerBaseline::new(g);
        assert_eq!(b.score("in seattle today").unwrap(), 1.0);
        assert_eq!(b.score("in seattles today").unwrap(), 0.0);
    }

    #[test]
    fn ner_is_monotone_in_gazetteer() {
        let texts = ["SPD updates policies", "Irvine startup", "nothing here", "WWU students"];
        let small = gaz(&["Irvine"]);
        let big = gaz(&["Irvine", "SPD", "WWU"]);
        for t in texts {
            let a = ner_predict(&article(t, ""), &small);
            let b = ner_predict(&article(t, ""), &big);
            assert!(!(a == Label::Local && b == Label::NonLocal));
        }
    }

    #[test]
    fn line_protocol_round_trip() {
        let mut m = NgramLinearModel::<f64>::zeros(HashedFeaturizer::new(8, vec![1]));
        m.bias = -1.0;
        let mut out = Vec::new();
        let n = serve_lines(&m, "a\nb c\n".as_bytes(), &mut out).unwrap();
        assert_eq!(n, 2);
        let expected = format!("{}\n{}\n", logistic(-1.0f64), logistic(-1.0f64));
        assert_eq!(String::from_utf8(out).unwrap(), expected);
    }

    #[test]
    fn external_scorer_over_shell() {
        let s = ExternalScorer::spawn("sh", &["-c".into(), "while read l; do echo 0.25; done".into()]).unwrap();
        assert_eq!(s.score("some text\nwith newline").unwrap(), 0.25);
        assert_eq!(s.score("again").unwrap(), 0.25);
        let bad = ExternalScorer::spawn("sh", &["-c".into(), "while read l; do echo 3; done".into()]).unwrap();
        assert!(matches!(bad.score("x"), Err(ScoreError::OutOfRange(_))));
    }
}
