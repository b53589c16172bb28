//! Target classifiers: a native linear bag-of-words baseline (squared-hinge
//! SVM trained by dual coordinate descent, tuned via nested stratified
//! cross-validation) and a fine-tunable classifier contract with the
//! incremental augmentation training scheme, plus a small frozen-encoder
//! classifier that makes the whole pipeline runnable at desk scale.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::corpus::{DataSplit, Document};
use crate::error::{Error, Result};
use crate::text::{derive_seed, fnv1a64, mix64, word_tokens_lower};
use crate::Scalar;

/// One scored document.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct Prediction<F: Scalar> {
    pub doc_id: String,
    /// 0 or 1, thresholded at the model's fixed operating point.
    pub label: u8,
    /// Positive-class decision value (sign rule for the linear model,
    /// logit difference for backend classifiers).
    pub score: F,
}

/// Anything that scores documents into binary predictions.
pub trait Classifier<F: Scalar> {
    fn id(&self) -> String;
    fn predict(&mut self, docs: &[Document]) -> Result<Vec<Prediction<F>>>;
}

// ---------------------------------------------------------------------------
// linear bag-of-words model
// ---------------------------------------------------------------------------

/// Hyperparameters of one linear training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct LinearConfig<F: Scalar> {
    /// Regularization strength (larger C fits the data harder).
    pub c: F,
    /// Inverse-frequency class weighting (n / (2 * n_class)).
    pub balanced: bool,
    /// Convergence threshold on the maximum projected gradient.
    pub tol: F,
    /// Maximum coordinate-descent passes.
    pub max_iter: usize,
    /// Shuffling seed for the coordinate order.
    pub seed: u64,
}

impl<F: Scalar> LinearConfig<F> {
    pub fn with_c(c: F, balanced: bool) -> Self {
        LinearConfig {
            c,
            balanced,
            tol: F::from_f64(1e-10).unwrap(),
            max_iter: 2000,
            seed: 42,
        }
    }
}

/// Candidate settings for grid search: the cross product of `c_values` and
/// `balanced` choices.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct HyperGrid<F: Scalar> {
    pub c_values: Vec<F>,
    pub balanced: Vec<bool>,
}

impl<F: Scalar> Default for HyperGrid<F> {
    fn default() -> Self {
        HyperGrid {
            c_values: [0.01, 0.1, 1.0]
                .iter()
                .map(|&c| F::from_f64(c).unwrap())
                .collect(),
            balanced: vec![true, false],
        }
    }
}

impl<F: Scalar> HyperGrid<F> {
    pub fn settings(&self, seed: u64) -> Vec<LinearConfig<F>> {
        let mut out = Vec::new();
        for &c in &self.c_values {
            for &b in &self.balanced {
                let mut cfg = LinearConfig::with_c(c, b);
                cfg.seed = seed;
                out.push(cfg);
            }
        }
        out
    }
}

/// Linear bag-of-words classifier over binary 1–3-gram presence features.
/// The decision rule is sign(w·x + b); the bias is the last weight.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct LinearModel<F: Scalar> {
    pub version: u32,
    /// n-gram → column, in lexicographic order.
    pub vocab: BTreeMap<String, u32>,
    /// One weight per n-gram plus a trailing bias weight.
    pub weights: Vec<F>,
    /// The setting the model was (re)fit with.
    pub config: LinearConfig<F>,
    /// Mean cross-validation score per candidate setting (empty when the
    /// grid had a single setting and search was skipped).
    pub cv_scores: Vec<(LinearConfig<F>, F)>,
}

/// Word 1-, 2-, and 3-grams of a text, space-joined, lowercased.
fn ngrams(text: &str) -> Vec<String> {
    let tokens = word_tokens_lower(text);
    let mut out = Vec::new();
    for n in 1..=3usize {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            out.push(window.join(" "));
        }
    }
    out
}

/// Sorted, deduplicated active columns of a text under a fixed vocabulary.
fn featurize(vocab: &BTreeMap<String, u32>, text: &str) -> Vec<u32> {
    let mut cols: Vec<u32> = ngrams(text)
        .into_iter()
        .filter_map(|g| vocab.get(&g).copied())
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

fn build_vocab(docs: &[&Document]) -> BTreeMap<String, u32> {
    let mut vocab = BTreeMap::new();
    for doc in docs {
        for gram in ngrams(&doc.text) {
            let next = vocab.len() as u32;
            vocab.entry(gram).or_insert(next);
        }
    }
    // re-number in key order so columns are lexicographic and reproducible
    let keys: Vec<String> = vocab.keys().cloned().collect();
    for (i, k) in keys.iter().enumerate() {
        vocab.insert(k.clone(), i as u32);
    }
    vocab
}

/// Dual coordinate descent for the L2-regularized squared-hinge objective
///   min_w 0.5·‖w‖² + Σ_i C_i · max(0, 1 − y_i·w·x_i)²
/// over binary rows with an implicit all-ones bias feature (regularized like
/// any other weight). Returns the weight vector with the bias last.
fn solve_squared_hinge<F: Scalar>(
    rows: &[Vec<u32>],
    y: &[i8],
    n_features: usize,
    cfg: &LinearConfig<F>,
) -> Vec<F> {
    let n = rows.len();
    let total = F::from_usize(n).unwrap();
    let n_pos = y.iter().filter(|&&v| v > 0).count();
    let n_neg = n - n_pos;
    let two = F::from_f64(2.0).unwrap();
    let class_c = |label: i8| -> F {
        if !cfg.balanced {
            return cfg.c;
        }
        let count = F::from_usize(if label > 0 { n_pos } else { n_neg }).unwrap();
        cfg.c * total / (two * count)
    };
    let d: Vec<F> = y.iter().map(|&v| F::one() / (two * class_c(v))).collect();
    let qbar: Vec<F> = rows
        .iter()
        .zip(&d)
        .map(|(row, &di)| F::from_usize(row.len() + 1).unwrap() + di)
        .collect();

    let mut w = vec![F::zero(); n_features + 1];
    let mut alpha = vec![F::zero(); n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, "svm/shuffle"));

    for _ in 0..cfg.max_iter {
        for k in 0..n {
            let j = rng.gen_range(k..n);
            order.swap(k, j);
        }
        let mut worst = F::zero();
        for &i in &order {
            let yi = F::from_i8(y[i]).unwrap();
            let mut wx = w[n_features];
            for &col in &rows[i] {
                wx += w[col as usize];
            }
            let g = yi * wx - F::one() + d[i] * alpha[i];
            let pg = if alpha[i] == F::zero() { g.min(F::zero()) } else { g };
            if pg.abs() > worst {
                worst = pg.abs();
            }
            if pg != F::zero() {
                let next = (alpha[i] - g / qbar[i]).max(F::zero());
                let delta = next - alpha[i];
                if delta != F::zero() {
                    let step = delta * yi;
                    for &col in &rows[i] {
                        w[col as usize] += step;
                    }
                    w[n_features] += step;
                    alpha[i] = next;
                }
            }
        }
        if worst < cfg.tol {
            break;
        }
    }
    w
}

impl<F: Scalar> LinearModel<F> {
    /// Fits one setting directly on the given documents.
    pub fn fit(docs: &[&Document], config: LinearConfig<F>) -> Result<Self> {
        let labels = binary_labels(docs)?;
        let vocab = build_vocab(docs);
        let rows: Vec<Vec<u32>> = docs.iter().map(|d| featurize(&vocab, &d.text)).collect();
        let y: Vec<i8> = labels.iter().map(|&l| if l == 1 { 1 } else { -1 }).collect();
        let weights = solve_squared_hinge(&rows, &y, vocab.len(), &config);
        Ok(LinearModel {
            version: 1,
            vocab,
            weights,
            config,
            cv_scores: Vec::new(),
        })
    }

    /// w·x + b for one text.
    pub fn decision(&self, text: &str) -> F {
        let mut score = self.weights[self.weights.len() - 1];
        for col in featurize(&self.vocab, text) {
            score += self.weights[col as usize];
        }
        score
    }

    pub fn predict_docs(&self, docs: &[Document]) -> Vec<Prediction<F>> {
        docs.par_iter()
            .map(|doc| {
                let score = self.decision(&doc.text);
                Prediction {
                    doc_id: doc.id.clone(),
                    label: u8::from(score > F::zero()),
                    score,
                }
            })
            .collect()
    }

    /// Serializes the model as a versioned JSON bundle.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("linear model serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::Schema {
            path: "<linear model bundle>".into(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

impl<F: Scalar> Classifier<F> for LinearModel<F> {
    fn id(&self) -> String {
        "linear".to_string()
    }

    fn predict(&mut self, docs: &[Document]) -> Result<Vec<Prediction<F>>> {
        Ok(self.predict_docs(docs))
    }
}

fn binary_labels(docs: &[&Document]) -> Result<Vec<u8>> {
    let mut labels = Vec::with_capacity(docs.len());
    for doc in docs {
        match doc.label.is_positive() {
            true => labels.push(1),
            false => labels.push(0),
        }
        if !doc.label.is_binary() {
            return Err(Error::Training(format!(
                "document {:?} carries an unbinarized label",
                doc.id
            )));
        }
    }
    Ok(labels)
}

/// Stratified fold assignment without shuffling: each class's occurrences are
/// split into k contiguous chunks in data order, the first `n mod k` chunks
/// one element larger, and fold t collects chunk t of every class.
pub fn stratified_folds(labels: &[u8], k: usize) -> Vec<Vec<usize>> {
    let mut folds = vec![Vec::new(); k];
    let classes: BTreeSet<u8> = labels.iter().copied().collect();
    for class in classes {
        let idxs: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        let base = idxs.len() / k;
        let extra = idxs.len() % k;
        let mut cursor = 0;
        for (f, fold) in folds.iter_mut().enumerate() {
            let take = base + usize::from(f < extra);
            fold.extend(&idxs[cursor..cursor + take]);
            cursor += take;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    folds
}

fn fold_f1<F: Scalar>(pred_pos: &[bool], gold_pos: &[bool]) -> F {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &g) in pred_pos.iter().zip(gold_pos) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        F::zero()
    } else {
        F::from_usize(2 * tp).unwrap() / F::from_usize(denom).unwrap()
    }
}

/// Scores one candidate setting by nested stratified cross-validation:
/// 3 outer folds, up to 10 inner folds inside each outer-training portion
/// (capped by the smallest class count), no shuffling, mean F1 over every
/// inner validation fold.
fn nested_cv_score<F: Scalar>(
    docs: &[&Document],
    labels: &[u8],
    setting: &LinearConfig<F>,
) -> Result<F> {
    let outer = stratified_folds(labels, 3);
    let mut scores = Vec::new();
    for (o, held_out) in outer.iter().enumerate() {
        let held: BTreeSet<usize> = held_out.iter().copied().collect();
        let pool: Vec<usize> = (0..docs.len()).filter(|i| !held.contains(i)).collect();
        let pool_labels: Vec<u8> = pool.iter().map(|&i| labels[i]).collect();
        let n_pos = pool_labels.iter().filter(|&&l| l == 1).count();
        let n_neg = pool_labels.len() - n_pos;
        let smallest = n_pos.min(n_neg);
        if smallest == 0 {
            return Err(Error::CvFold {
                fold: format!("outer-{o}"),
                reason: "outer training portion holds a single class".to_string(),
            });
        }
        let inner_k = smallest.min(10);
        if inner_k < 2 {
            return Err(Error::CvFold {
                fold: format!("outer-{o}"),
                reason: "too few instances of the rarer class for inner folds".to_string(),
            });
        }
        let inner = stratified_folds(&pool_labels, inner_k);
        for val in &inner {
            let val_set: BTreeSet<usize> = val.iter().copied().collect();
            let train_docs: Vec<&Document> = pool
                .iter()
                .enumerate()
                .filter(|(pi, _)| !val_set.contains(pi))
                .map(|(_, &i)| docs[i])
                .collect();
            let model = LinearModel::fit(&train_docs, setting.clone())?;
            let pred_pos: Vec<bool> = val
                .iter()
                .map(|&pi| model.decision(&docs[pool[pi]].text) > F::zero())
                .collect();
            let gold_pos: Vec<bool> = val.iter().map(|&pi| pool_labels[pi] == 1).collect();
            scores.push(fold_f1::<F>(&pred_pos, &gold_pos));
        }
    }
    let n = F::from_usize(scores.len()).unwrap();
    Ok(scores.into_iter().sum::<F>() / n)
}

/// Grid search via nested stratified cross-validation, then a refit of the
/// winning setting (first in grid order on ties) on the full training side.
/// A single-setting grid skips the search.
pub fn train_linear<F: Scalar>(
    split: &DataSplit,
    grid: &HyperGrid<F>,
    seed: u64,
) -> Result<LinearModel<F>> {
    let docs: Vec<&Document> = split.train.iter().collect();
    let labels = binary_labels(&docs)?;
    if !labels.contains(&1) || !labels.contains(&0) {
        return Err(Error::Training(
            "training side must contain both classes".to_string(),
        ));
    }
    let settings = grid.settings(seed);
    if settings.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".to_string()));
    }
    if settings.len() == 1 {
        return LinearModel::fit(&docs, settings.into_iter().next().unwrap());
    }
    let mut scored = Vec::with_capacity(settings.len());
    for setting in &settings {
        let score = nested_cv_score(&docs, &labels, setting)?;
        scored.push((setting.clone(), score));
    }
    let mut best = 0;
    for (i, (_, score)) in scored.iter().enumerate() {
        if *score > scored[best].1 {
            best = i;
        }
    }
    let mut model = LinearModel::fit(&docs, scored[best].0.clone())?;
    model.cv_scores = scored;
    Ok(model)
}

// ---------------------------------------------------------------------------
// fine-tunable classifier contract
// ---------------------------------------------------------------------------

/// Training schedule for backend classifiers.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_sequence_length: usize,
    /// Brief second stage on the augmented training set.
    pub augmentation_epochs: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 2e-5,
            max_sequence_length: 128,
            augmentation_epochs: 2,
        }
    }
}

impl FinetuneConfig {
    /// Short content hash recorded in run metadata.
    pub fn digest(&self) -> String {
        use sha2::Digest;
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = sha2::Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// A classifier whose parameters can be trained in place.
pub trait TrainableClassifier<F: Scalar>: Send {
    fn name(&self) -> &str;
    fn supports_training(&self) -> bool;
    /// Runs `epochs` passes over `docs`.
    fn train_epochs(
        &mut self,
        docs: &[Document],
        cfg: &FinetuneConfig,
        epochs: usize,
        seed: u64,
    ) -> Result<()>;
    /// Per-class logits, positive class last.
    fn logits(&mut self, doc: &Document) -> Result<Vec<F>>;
    fn box_clone(&self) -> Box<dyn TrainableClassifier<F>>;
}

impl<F: Scalar> Clone for Box<dyn TrainableClassifier<F>> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Provenance of a trained handle.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Lineage {
    pub base: String,
    pub augmentation_generator: Option<String>,
}

/// A trained classifier plus the bookkeeping needed for incremental
/// augmentation training.
pub struct FinetunedHandle<F: Scalar> {
    pub classifier: Box<dyn TrainableClassifier<F>>,
    pub trained_ids: BTreeSet<String>,
    pub lineage: Lineage,
    pub config_digest: String,
    pub seed: u64,
}

impl<F: Scalar> Clone for FinetunedHandle<F> {
    fn clone(&self) -> Self {
        FinetunedHandle {
            classifier: self.classifier.clone(),
            trained_ids: self.trained_ids.clone(),
            lineage: self.lineage.clone(),
            config_digest: self.config_digest.clone(),
            seed: self.seed,
        }
    }
}

impl<F: Scalar> Classifier<F> for FinetunedHandle<F> {
    fn id(&self) -> String {
        match &self.lineage.augmentation_generator {
            Some(generator) => format!("{}+{}", self.lineage.base, generator),
            None => self.lineage.base.clone(),
        }
    }

    fn predict(&mut self, docs: &[Document]) -> Result<Vec<Prediction<F>>> {
        let mut out = Vec::with_capacity(docs.len());
        for doc in docs {
            let logits = self.classifier.logits(doc)?;
            if logits.len() < 2 {
                return Err(Error::Training(format!(
                    "classifier {:?} produced {} logits, need 2",
                    self.classifier.name(),
                    logits.len()
                )));
            }
            let score = logits[1] - logits[0];
            out.push(Prediction {
                doc_id: doc.id.clone(),
                label: u8::from(logits[1] > logits[0]),
                score,
            });
        }
        Ok(out)
    }
}

/// Trains a fresh handle on the training side of the split.
pub fn finetune<F: Scalar>(
    split: &DataSplit,
    cfg: &FinetuneConfig,
    backend: &dyn TrainableClassifier<F>,
    seed: u64,
) -> Result<FinetunedHandle<F>> {
    if !backend.supports_training() {
        return Err(Error::Capability {
            backend: backend.name().to_string(),
            op: "train".to_string(),
        });
    }
    if split.train.is_empty() {
        return Err(Error::Training("training side is empty".to_string()));
    }
    let mut classifier = backend.box_clone();
    if cfg.epochs > 0 {
        classifier.train_epochs(&split.train, cfg, cfg.epochs, seed)?;
    }
    Ok(FinetunedHandle {
        classifier,
        trained_ids: split.train.iter().map(|d| d.id.clone()).collect(),
        lineage: Lineage {
            base: backend.name().to_string(),
            augmentation_generator: None,
        },
        config_digest: cfg.digest(),
        seed,
    })
}

/// Derives an augmented classifier: a brief second training stage on the
/// augmented training side, which must still contain every instance the base
/// handle was trained on. The input handle is left untouched.
pub fn finetune_incremental<F: Scalar>(
    handle: &FinetunedHandle<F>,
    augmented: &DataSplit,
    generator: &str,
    cfg: &FinetuneConfig,
) -> Result<FinetunedHandle<F>> {
    let aug_ids: BTreeSet<&str> = augmented.train.iter().map(|d| d.id.as_str()).collect();
    for id in &handle.trained_ids {
        if !aug_ids.contains(id.as_str()) {
            return Err(Error::Composition(format!(
                "augmented training side is missing original instance {id:?}"
            )));
        }
    }
    let mut derived = handle.clone();
    derived.classifier.train_epochs(
        &augmented.train,
        cfg,
        cfg.augmentation_epochs,
        derive_seed(handle.seed, &format!("incremental/{generator}")),
    )?;
    derived.lineage.augmentation_generator = Some(generator.to_string());
    derived.trained_ids = augmented.train.iter().map(|d| d.id.clone()).collect();
    Ok(derived)
}

// ---------------------------------------------------------------------------
// desk-scale trainable classifier
// ---------------------------------------------------------------------------

const TOY_SALT: u64 = 0x7f4a_2d11_9c83_55e7;
const TOY_DIM: usize = 16;

/// Hash-derived unit vector for one word (frozen toy encoder).
fn toy_word_vector<F: Scalar>(word: &str) -> Vec<F> {
    let seed = mix64(TOY_SALT ^ fnv1a64(word.as_bytes()));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..TOY_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v.into_iter().map(|x| F::from_f64(x).unwrap()).collect()
}

/// Logistic head over a frozen hash-vector encoder: document embedding is the
/// L2-normalized mean of word vectors, trained by full-batch gradient descent.
/// The schedule's tiny transformer learning rate would barely move this head,
/// so it keeps its own step size; the schedule still controls epoch counts
/// and is recorded in run metadata.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct ToyEncoderClassifier<F: Scalar> {
    pub weights: Vec<F>,
    pub bias: F,
    pub step_size: F,
    pub trained_epochs: usize,
}

impl<F: Scalar> Default for ToyEncoderClassifier<F> {
    fn default() -> Self {
        ToyEncoderClassifier {
            weights: vec![F::zero(); TOY_DIM],
            bias: F::zero(),
            step_size: F::from_f64(0.5).unwrap(),
            trained_epochs: 0,
        }
    }
}

impl<F: Scalar> ToyEncoderClassifier<F> {
    pub fn new() -> Self {
        Self::default()
    }

    /// L2-normalized mean word vector of a text (zero vector when empty).
    pub fn embed(&self, text: &str) -> Vec<F> {
        let tokens = word_tokens_lower(text);
        let mut mean = vec![F::zero(); TOY_DIM];
        if tokens.is_empty() {
            return mean;
        }
        for token in &tokens {
            for (m, v) in mean.iter_mut().zip(toy_word_vector::<F>(token)) {
                *m += v;
            }
        }
        let n = F::from_usize(tokens.len()).unwrap();
        for m in &mut mean {
            *m = *m / n;
        }
        let norm = mean.iter().map(|&x| x * x).sum::<F>().sqrt();
        if norm > F::zero() {
            for m in &mut mean {
                *m = *m / norm;
            }
        }
        mean
    }

    fn raw_score(&self, text: &str) -> F {
        let e = self.embed(text);
        let mut z = self.bias;
        for (w, x) in self.weights.iter().zip(&e) {
            z += *w * *x;
        }
        z
    }

    /// Mean logistic loss over documents under the current parameters.
    pub fn mean_log_loss(&self, docs: &[Document]) -> F {
        let mut total = F::zero();
        for doc in docs {
            let z = self.raw_score(&doc.text);
            let y = if doc.label.is_positive() { F::one() } else { F::zero() };
            // log(1 + e^{-z}) + (1-y)·z, the numerically stable split
            let loss = if z > F::zero() {
                (F::one() + (-z).exp()).ln() + (F::one() - y) * z
            } else {
                (F::one() + z.exp()).ln() - y * z
            };
            total += loss;
        }
        total / F::from_usize(docs.len().max(1)).unwrap()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("toy classifier serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::Schema {
            path: "<toy classifier bundle>".into(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

impl<F: Scalar> TrainableClassifier<F> for ToyEncoderClassifier<F> {
    fn name(&self) -> &str {
        "toy-encoder"
    }

    fn supports_training(&self) -> bool {
        true
    }

    fn train_epochs(
        &mut self,
        docs: &[Document],
        _cfg: &FinetuneConfig,
        epochs: usize,
        _seed: u64,
    ) -> Result<()> {
        if docs.is_empty() {
            return Err(Error::Training("no documents to train on".to_string()));
        }
        let embeddings: Vec<Vec<F>> = docs.iter().map(|d| self.embed(&d.text)).collect();
        let targets: Vec<F> = docs
            .iter()
            .map(|d| if d.label.is_positive() { F::one() } else { F::zero() })
            .collect();
        let n = F::from_usize(docs.len()).unwrap();
        for _ in 0..epochs {
            let mut grad_w = vec![F::zero(); TOY_DIM];
            let mut grad_b = F::zero();
            for (e, &y) in embeddings.iter().zip(&targets) {
                let mut z = self.bias;
                for (w, x) in self.weights.iter().zip(e) {
                    z += *w * *x;
                }
                let p = F::one() / (F::one() + (-z).exp());
                let err = p - y;
                for (g, x) in grad_w.iter_mut().zip(e) {
                    *g += err * *x;
                }
                grad_b += err;
            }
            for (w, g) in self.weights.iter_mut().zip(&grad_w) {
                *w = *w - self.step_size * *g / n;
            }
            self.bias = self.bias - self.step_size * grad_b / n;
            self.trained_epochs += 1;
        }
        Ok(())
    }

    fn logits(&mut self, doc: &Document) -> Result<Vec<F>> {
        let z = self.raw_score(&doc.text);
        let half = F::from_f64(0.5).unwrap();
        Ok(vec![-z * half, z * half])
    }

    fn box_clone(&self) -> Box<dyn TrainableClassifier<F>> {
        Box::new(self.clone())
    }
}

/// Wraps a classifier as inference-only, for exercising capability errors.
#[derive(Debug, Clone)]
pub struct InferenceOnly<F: Scalar>(pub ToyEncoderClassifier<F>);

impl<F: Scalar> TrainableClassifier<F> for InferenceOnly<F> {
    fn name(&self) -> &str {
        "toy-encoder-frozen"
    }

    fn supports_training(&self) -> bool {
        false
    }

    fn train_epochs(
        &mut self,
        _docs: &[Document],
        _cfg: &FinetuneConfig,
        _epochs: usize,
        _seed: u64,
    ) -> Result<()> {
        Err(Error::Capability {
            backend: self.name().to_string(),
            op: "train".to_string(),
        })
    }

    fn logits(&mut self, doc: &Document) -> Result<Vec<F>> {
        self.0.logits(doc)
    }

    fn box_clone(&self) -> Box<dyn TrainableClassifier<F>> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split, Corpus, CorpusRole, Label};

    fn doc(id: &str, text: &str, label: u8) -> Document {
        Document::new(id, text, Label::Binary(label), "toy")
    }

    fn separable_corpus() -> Corpus {
        let mut docs = Vec::new();
        for i in 0..12 {
            docs.push(doc(
                &format!("p{i}"),
                &format!("you are a stupid fool number {i}"),
                1,
            ));
            docs.push(doc(
                &format!("n{i}"),
                &format!("have a lovely day friend number {i}"),
                0,
            ));
        }
        Corpus::new("toy", CorpusRole::Experiment, docs).unwrap()
    }

    fn as_split(corpus: Corpus) -> DataSplit {
        split(&corpus, 0.25, 7).unwrap()
    }

    #[test]
    fn separable_data_reaches_perfect_training_accuracy() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let grid = HyperGrid {
            c_values: vec![1.0f64],
            balanced: vec![true],
        };
        let model = train_linear(&data, &grid, 1).unwrap();
        for d in &data.train {
            let want = u8::from(d.label.is_positive());
            let got = u8::from(model.decision(&d.text) > 0.0);
            assert_eq!(got, want, "doc {:?}", d.id);
        }
    }

    #[test]
    fn decision_matches_sparse_dot_product_oracle() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let grid = HyperGrid {
            c_values: vec![0.5f64],
            balanced: vec![false],
        };
        let model = train_linear(&data, &grid, 1).unwrap();
        for d in data.train.iter().chain(&data.test) {
            // independent recomputation: binary presence over 1-3 grams
            let tokens = word_tokens_lower(&d.text);
            let mut grams = std::collections::BTreeSet::new();
            for n in 1..=3usize {
                if tokens.len() >= n {
                    for w in tokens.windows(n) {
                        grams.insert(w.join(" "));
                    }
                }
            }
            let mut expected = model.weights[model.weights.len() - 1];
            for g in grams {
                if let Some(&col) = model.vocab.get(&g) {
                    expected += model.weights[col as usize];
                }
            }
            let got = model.decision(&d.text);
            assert!((got - expected).abs() < 1e-12, "{}: {got} vs {expected}", d.id);
        }
    }

    #[test]
    fn predictions_preserve_order_and_are_deterministic() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let grid = HyperGrid {
            c_values: vec![1.0f64],
            balanced: vec![true],
        };
        let mut model = train_linear(&data, &grid, 1).unwrap();
        let a = model.predict(&data.test).unwrap();
        let b = model.predict(&data.test).unwrap();
        assert_eq!(a, b);
        let ids: Vec<&str> = a.iter().map(|p| p.doc_id.as_str()).collect();
        let want: Vec<&str> = data.test.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, want);
        assert!(model.predict(&[]).unwrap().is_empty());
    }

    #[test]
    fn stratified_folds_are_contiguous_per_class_and_partition() {
        let labels = vec![1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1];
        let folds = stratified_folds(&labels, 3);
        let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
        // 4 positives over 3 folds → 2/1/1; 8 negatives → 3/3/2
        let pos_counts: Vec<usize> = folds
            .iter()
            .map(|f| f.iter().filter(|&&i| labels[i] == 1).count())
            .collect();
        assert_eq!(pos_counts, vec![2, 1, 1]);
        let neg_counts: Vec<usize> = folds
            .iter()
            .map(|f| f.iter().filter(|&&i| labels[i] == 0).count())
            .collect();
        assert_eq!(neg_counts, vec![3, 3, 2]);
        // class occurrences assigned in data order
        assert!(folds[0].contains(&0) && folds[0].contains(&3));
        assert!(folds[1].contains(&7) && folds[2].contains(&11));
    }

    #[test]
    fn grid_winner_matches_exhaustive_re_evaluation() {
        // noisy, overlapping data so the two settings genuinely differ
        let mut docs = Vec::new();
        let insults = ["stupid", "fool", "loser", "dumb"];
        let neutral = ["friend", "sunny", "lovely", "kind"];
        for i in 0..20 {
            let ins = insults[i % insults.len()];
            let neu = neutral[(i * 7) % neutral.len()];
            // a few contradictory instances inject label noise
            let (pos_text, pos_label) = if i % 7 == 0 {
                (format!("you are {neu} number {i}"), 1)
            } else {
                (format!("you are {ins} number {i}"), 1)
            };
            docs.push(doc(&format!("p{i}"), &pos_text, pos_label));
            let neg_text = if i % 5 == 0 {
                format!("what a {ins} day number {i}")
            } else {
                format!("what a {neu} day number {i}")
            };
            docs.push(doc(&format!("n{i}"), &neg_text, 0));
        }
        let corpus = Corpus::new("noisy", CorpusRole::Experiment, docs).unwrap();
        let data = split(&corpus, 0.2, 3).unwrap();
        let grid = HyperGrid {
            c_values: vec![0.01f64, 100.0],
            balanced: vec![true],
        };
        let model = train_linear(&data, &grid, 5).unwrap();
        assert_eq!(model.cv_scores.len(), 2);

        // independent exhaustive re-evaluation of both settings
        let docs_ref: Vec<&Document> = data.train.iter().collect();
        let labels: Vec<u8> = docs_ref
            .iter()
            .map(|d| u8::from(d.label.is_positive()))
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (gi, setting) in grid.settings(5).iter().enumerate() {
            let mut fold_scores = Vec::new();
            for (_, held_out) in stratified_folds(&labels, 3).iter().enumerate() {
                let held: BTreeSet<usize> = held_out.iter().copied().collect();
                let pool: Vec<usize> =
                    (0..docs_ref.len()).filter(|i| !held.contains(i)).collect();
                let pool_labels: Vec<u8> = pool.iter().map(|&i| labels[i]).collect();
                let n_pos = pool_labels.iter().filter(|&&l| l == 1).count();
                let k = n_pos.min(pool_labels.len() - n_pos).min(10);
                for val in stratified_folds(&pool_labels, k) {
                    let val_set: BTreeSet<usize> = val.iter().copied().collect();
                    let train: Vec<&Document> = pool
                        .iter()
                        .enumerate()
                        .filter(|(pi, _)| !val_set.contains(pi))
                        .map(|(_, &i)| docs_ref[i])
                        .collect();
                    let m = LinearModel::fit(&train, setting.clone()).unwrap();
                    let pred: Vec<bool> = val
                        .iter()
                        .map(|&pi| m.decision(&docs_ref[pool[pi]].text) > 0.0)
                        .collect();
                    let gold: Vec<bool> = val.iter().map(|&pi| pool_labels[pi] == 1).collect();
                    fold_scores.push(fold_f1::<f64>(&pred, &gold));
                }
            }
            let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            assert!(
                (mean - model.cv_scores[gi].1).abs() < 1e-12,
                "setting {gi}: {mean} vs {}",
                model.cv_scores[gi].1
            );
            if best.map_or(true, |(_, b)| mean > b) {
                best = Some((gi, mean));
            }
        }
        let (winner, _) = best.unwrap();
        assert_eq!(model.config, grid.settings(5)[winner]);
    }

    #[test]
    fn balanced_weighting_lifts_minority_recall() {
        // 9:1 imbalance, separable
        let mut docs = Vec::new();
        for i in 0..45 {
            docs.push(doc(
                &format!("n{i}"),
                &format!("pleasant chat about gardens number {i}"),
                0,
            ));
        }
        for i in 0..5 {
            docs.push(doc(&format!("p{i}"), &format!("you utter fool number {i}"), 1));
        }
        let corpus = Corpus::new("imb", CorpusRole::Experiment, docs).unwrap();
        let data = split(&corpus, 0.2, 11).unwrap();
        let recall = |balanced: bool| -> f64 {
            let grid = HyperGrid {
                c_values: vec![0.01f64],
                balanced: vec![balanced],
            };
            let model = train_linear(&data, &grid, 1).unwrap();
            let pos: Vec<&Document> = data
                .train
                .iter()
                .filter(|d| d.label.is_positive())
                .collect();
            let hit = pos
                .iter()
                .filter(|d| model.decision(&d.text) > 0.0)
                .count();
            hit as f64 / pos.len() as f64
        };
        assert!(recall(true) >= recall(false));
    }

    #[test]
    fn single_class_training_is_rejected() {
        let docs = vec![doc("a", "x", 1), doc("b", "y", 1), doc("c", "z", 1), doc("d", "w", 1)];
        let corpus = Corpus::new("onecls", CorpusRole::Experiment, docs).unwrap();
        let data = split(&corpus, 0.25, 1).unwrap();
        assert!(matches!(
            train_linear::<f64>(&data, &HyperGrid::default(), 1),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn linear_bundle_roundtrips() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let grid = HyperGrid {
            c_values: vec![1.0f64],
            balanced: vec![true],
        };
        let model = train_linear(&data, &grid, 1).unwrap();
        let back = LinearModel::<f64>::from_json(&model.to_json()).unwrap();
        assert_eq!(model, back);
        assert_eq!(back.version, 1);
        assert!(LinearModel::<f64>::from_json("{broken").is_err());
    }

    #[test]
    fn finetune_defaults_and_digest() {
        let cfg = FinetuneConfig::default();
        assert_eq!(
            (cfg.epochs, cfg.batch_size, cfg.max_sequence_length, cfg.augmentation_epochs),
            (10, 32, 128, 2)
        );
        assert!((cfg.learning_rate - 2e-5).abs() < 1e-18);
        assert_eq!(cfg.digest().len(), 16);
        assert_eq!(cfg.digest(), FinetuneConfig::default().digest());
    }

    #[test]
    fn zero_epochs_is_the_identity() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let backend = ToyEncoderClassifier::<f64>::new();
        let cfg = FinetuneConfig {
            epochs: 0,
            ..FinetuneConfig::default()
        };
        let mut handle = finetune(&data, &cfg, &backend, 9).unwrap();
        let mut untrained = ToyEncoderClassifier::<f64>::new();
        for d in &data.test {
            assert_eq!(
                handle.classifier.logits(d).unwrap(),
                untrained.logits(d).unwrap()
            );
        }
        assert_eq!(handle.config_digest, cfg.digest());
    }

    #[test]
    fn toy_training_loss_is_non_increasing() {
        let corpus = separable_corpus();
        let docs: Vec<Document> = corpus.documents.iter().take(20).cloned().collect();
        let mut clf = ToyEncoderClassifier::<f64>::new();
        let cfg = FinetuneConfig::default();
        let mut losses = vec![clf.mean_log_loss(&docs)];
        for _ in 0..10 {
            clf.train_epochs(&docs, &cfg, 1, 0).unwrap();
            losses.push(clf.mean_log_loss(&docs));
        }
        for pair in losses.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "loss increased: {losses:?}"
            );
        }
        assert!(losses[10] < losses[0], "training made no progress");
    }

    #[test]
    fn incremental_training_leaves_the_base_handle_intact() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let cfg = FinetuneConfig {
            epochs: 3,
            ..FinetuneConfig::default()
        };
        let backend = ToyEncoderClassifier::<f64>::new();
        let mut base = finetune(&data, &cfg, &backend, 9).unwrap();
        let before = base.predict(&data.test).unwrap();

        // augmented split: originals plus a few extra positives
        let mut aug_docs = data.train.clone();
        for i in 0..4 {
            aug_docs.push(doc(&format!("aug{i}"), "you are a total fool", 1));
        }
        let augmented = DataSplit {
            train: aug_docs,
            test: data.test.clone(),
            provenance: data.provenance,
        };
        let mut derived = finetune_incremental(&base, &augmented, "eda", &cfg).unwrap();
        assert_eq!(derived.id(), "toy-encoder+eda");
        assert_eq!(base.id(), "toy-encoder");
        let after = base.predict(&data.test).unwrap();
        assert_eq!(before, after, "base handle must not change");
        // derived handle genuinely retrained
        assert!(derived.predict(&data.test).unwrap() != before || cfg.augmentation_epochs == 0);
    }

    #[test]
    fn incremental_training_requires_the_originals() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let cfg = FinetuneConfig::default();
        let backend = ToyEncoderClassifier::<f64>::new();
        let base = finetune(&data, &cfg, &backend, 9).unwrap();
        let partial = DataSplit {
            train: vec![doc("only-new", "brand new sample", 1), doc("other", "more text", 0)],
            test: data.test.clone(),
            provenance: data.provenance,
        };
        assert!(matches!(
            finetune_incremental(&base, &partial, "eda", &cfg),
            Err(Error::Composition(_))
        ));
    }

    #[test]
    fn inference_only_backends_are_rejected() {
        let corpus = separable_corpus();
        let data = as_split(corpus);
        let frozen = InferenceOnly(ToyEncoderClassifier::<f64>::new());
        assert!(matches!(
            finetune(&data, &FinetuneConfig::default(), &frozen, 1),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn toy_bundle_roundtrips() {
        let mut clf = ToyEncoderClassifier::<f64>::new();
        clf.train_epochs(
            &[doc("a", "you fool", 1), doc("b", "nice day", 0)],
            &FinetuneConfig::default(),
            3,
            0,
        )
        .unwrap();
        let back = ToyEncoderClassifier::<f64>::from_json(&clf.to_json()).unwrap();
        assert_eq!(clf, back);
    }
}
