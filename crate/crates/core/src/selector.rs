//! Target-word selection: the substitute classifier and omission scores.
//!
//! The substitute classifier is a Gaussian Naive Bayes model over
//! tf·idf-weighted word vectors, trained on a corpus that never enters the
//! experiments. A word's omission score is the drop in the positive-class
//! score when that word is deleted; words above a cut-off become
//! substitution targets. Because the selector is independent of every
//! evaluated classifier, the perturbations remain model-agnostic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::corpus::{Corpus, CorpusRole, Document};
use crate::error::{Error, Result};
use crate::text::word_tokens_lower;
use crate::Scalar;

/// tf·idf featurizer: lowercased word tokens, raw term frequency,
/// smoothed idf, L2-normalized document vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TfIdf<F: Scalar> {
    vocab: BTreeMap<String, usize>,
    idf: Vec<F>,
}

impl<F: Scalar> TfIdf<F> {
    pub fn fit(texts: &[&str]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let mut seen = std::collections::BTreeSet::new();
            for tok in word_tokens_lower(text) {
                if seen.insert(tok.clone()) {
                    *df.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let n = texts.len();
        let mut vocab = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (idx, (term, d)) in df.into_iter().enumerate() {
            vocab.insert(term, idx);
            let val = (((1 + n) as f64) / ((1 + d) as f64)).ln() + 1.0;
            idf.push(F::from_f64(val).unwrap());
        }
        TfIdf { vocab, idf }
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.vocab.get(term).copied()
    }

    /// Sparse tf·idf vector of a text: (column, weight) pairs sorted by
    /// column, L2-normalized.
    pub fn transform(&self, text: &str) -> Vec<(usize, F)> {
        let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
        for tok in word_tokens_lower(text) {
            if let Some(&col) = self.vocab.get(&tok) {
                *tf.entry(col).or_insert(0) += 1;
            }
        }
        let mut vec: Vec<(usize, F)> = tf
            .into_iter()
            .map(|(col, count)| (col, F::from_usize(count).unwrap() * self.idf[col]))
            .collect();
        let norm = vec
            .iter()
            .map(|(_, w)| *w * *w)
            .sum::<F>()
            .sqrt();
        if norm > F::zero() {
            for (_, w) in &mut vec {
                *w = *w / norm;
            }
        }
        vec
    }
}

/// Anything that yields a positive-class score o_y over texts. Mutable
/// because remote backends are stateful handles.
pub trait PositiveScorer<F: Scalar> {
    fn o_y(&mut self, text: &str) -> Result<F>;
}

/// Gaussian Naive Bayes over tf·idf vectors; o_y is the positive-class
/// log joint (log prior plus log likelihood).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SubstituteClassifier<F: Scalar> {
    pub version: u32,
    featurizer: TfIdf<F>,
    /// Per class (0 = negative, 1 = positive): feature means.
    means: [Vec<F>; 2],
    /// Per class: smoothed feature variances.
    variances: [Vec<F>; 2],
    log_priors: [F; 2],
    /// Per class: score of the all-zeros vector, precomputed so sparse
    /// documents need only their non-zero columns.
    zero_scores: [F; 2],
}

/// Relative variance smoothing: epsilon is this factor times the largest
/// overall feature variance.
const VAR_SMOOTHING: f64 = 1e-9;

/// Trains the substitute classifier. The corpus must carry the
/// substitute-training role and contain both classes.
pub fn train_substitute<F: Scalar>(corpus: &Corpus) -> Result<SubstituteClassifier<F>> {
    if corpus.role != CorpusRole::SubstituteTraining {
        return Err(Error::RoleViolation {
            corpus: corpus.name.clone(),
        });
    }
    if !corpus.is_binarized() {
        return Err(Error::Training(format!(
            "corpus {:?} is not binarized",
            corpus.name
        )));
    }
    let texts: Vec<&str> = corpus.documents.iter().map(|d| d.text.as_str()).collect();
    let featurizer = TfIdf::<F>::fit(&texts);
    let dim = featurizer.vocab_len();
    let n = corpus.len();

    // accumulate per-class and overall sums/squares per feature
    let mut count = [0usize; 2];
    let mut sum = [vec![F::zero(); dim], vec![F::zero(); dim]];
    let mut sumsq = [vec![F::zero(); dim], vec![F::zero(); dim]];
    let mut all_sum = vec![F::zero(); dim];
    let mut all_sumsq = vec![F::zero(); dim];
    for doc in &corpus.documents {
        let class = usize::from(doc.label.is_positive());
        count[class] += 1;
        for (col, w) in featurizer.transform(&doc.text) {
            sum[class][col] += w;
            sumsq[class][col] += w * w;
            all_sum[col] += w;
            all_sumsq[col] += w * w;
        }
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::Training(format!(
            "corpus {:?} holds a single class ({} negative, {} positive)",
            corpus.name, count[0], count[1]
        )));
    }

    // epsilon from the largest overall (population) feature variance
    let n_f = F::from_usize(n).unwrap();
    let mut max_var = F::zero();
    for col in 0..dim {
        let mean = all_sum[col] / n_f;
        let var = all_sumsq[col] / n_f - mean * mean;
        if var > max_var {
            max_var = var;
        }
    }
    let epsilon = F::from_f64(VAR_SMOOTHING).unwrap() * max_var;

    let mut means = [vec![F::zero(); dim], vec![F::zero(); dim]];
    let mut variances = [vec![F::zero(); dim], vec![F::zero(); dim]];
    for class in 0..2 {
        let nc = F::from_usize(count[class]).unwrap();
        for col in 0..dim {
            let mean = sum[class][col] / nc;
            let var = sumsq[class][col] / nc - mean * mean;
            means[class][col] = mean;
            variances[class][col] = var.max(F::zero()) + epsilon;
        }
    }
    let log_priors = [
        (F::from_usize(count[0]).unwrap() / n_f).ln(),
        (F::from_usize(count[1]).unwrap() / n_f).ln(),
    ];
    let zero_scores = [
        zero_score(&means[0], &variances[0]),
        zero_score(&means[1], &variances[1]),
    ];
    Ok(SubstituteClassifier {
        version: 1,
        featurizer,
        means,
        variances,
        log_priors,
        zero_scores,
    })
}

/// Log likelihood of the all-zeros vector under one class's Gaussians.
fn zero_score<F: Scalar>(means: &[F], variances: &[F]) -> F {
    let two_pi = F::from_f64(2.0 * std::f64::consts::PI).unwrap();
    let half = F::from_f64(0.5).unwrap();
    means
        .iter()
        .zip(variances)
        .map(|(m, v)| -half * ((two_pi * *v).ln() + *m * *m / *v))
        .sum()
}

impl<F: Scalar> SubstituteClassifier<F> {
    pub fn featurizer(&self) -> &TfIdf<F> {
        &self.featurizer
    }

    /// Log joint of one class for a text.
    pub fn class_score(&self, text: &str, class: usize) -> F {
        let half = F::from_f64(0.5).unwrap();
        let mut score = self.log_priors[class] + self.zero_scores[class];
        for (col, x) in self.featurizer.transform(text) {
            let m = self.means[class][col];
            let v = self.variances[class][col];
            // replace the precomputed x=0 term with the real one
            score += half * (m * m) / v - half * (x - m) * (x - m) / v;
        }
        score
    }

    /// Positive-class log joint; the omission-score reference point.
    pub fn positive_score(&self, text: &str) -> F {
        self.class_score(text, 1)
    }

    /// Serializes the model bundle as JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(data: &str) -> Result<Self> {
        serde_json::from_str(data).map_err(|e| Error::Schema {
            path: "<model>".into(),
            line: 1,
            reason: e.to_string(),
        })
    }
}

impl<F: Scalar> PositiveScorer<F> for SubstituteClassifier<F> {
    fn o_y(&mut self, text: &str) -> Result<F> {
        Ok(self.positive_score(text))
    }
}

/// The "+" selector: a toxicity-scoring backend as o_y, using the logit
/// of one class (the toxic class by default).
pub struct ToxicitySelector<'a, F: Scalar> {
    backend: &'a mut dyn Backend<F>,
    class: usize,
}

impl<'a, F: Scalar> ToxicitySelector<'a, F> {
    pub fn new(backend: &'a mut dyn Backend<F>) -> Self {
        ToxicitySelector { backend, class: 1 }
    }

    pub fn with_class(backend: &'a mut dyn Backend<F>, class: usize) -> Self {
        ToxicitySelector { backend, class }
    }
}

impl<F: Scalar> PositiveScorer<F> for ToxicitySelector<'_, F> {
    fn o_y(&mut self, text: &str) -> Result<F> {
        let logits = self.backend.score_toxicity(text)?;
        logits.get(self.class).copied().ok_or_else(|| {
            Error::Domain(format!(
                "toxicity backend returned {} logits, class {} requested",
                logits.len(),
                self.class
            ))
        })
    }
}

/// One selected target word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TargetEntry<F: Scalar> {
    pub position: usize,
    pub word: String,
    pub score: F,
}

/// Ranked targets of one document, all scoring at or above the cut-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TargetSelection<F: Scalar> {
    pub doc_id: String,
    pub entries: Vec<TargetEntry<F>>,
}

/// Omission score per token position: o_y(D) − o_y(D with the token
/// deleted). One entry per position, in position order.
pub fn omission_scores<F: Scalar>(
    doc: &Document,
    scorer: &mut dyn PositiveScorer<F>,
) -> Result<Vec<(usize, F)>> {
    let tokens = doc.tokenized();
    if tokens.is_empty() {
        return Err(Error::Domain(format!("document {:?} has no tokens", doc.id)));
    }
    let base = scorer.o_y(&doc.text)?;
    let mut scores = Vec::with_capacity(tokens.len());
    for position in 0..tokens.len() {
        let deleted = tokens.delete(position);
        scores.push((position, base - scorer.o_y(&deleted)?));
    }
    Ok(scores)
}

/// Keeps positions scoring at or above the cut-off, sorted by score
/// descending with ties broken by leftmost position.
pub fn select_targets<F: Scalar>(
    doc: &Document,
    scores: &[(usize, F)],
    cutoff: F,
) -> Result<TargetSelection<F>> {
    if cutoff < F::zero() {
        return Err(Error::Domain(format!("negative cut-off {cutoff}")));
    }
    let tokens = doc.tokenized();
    let mut entries = Vec::new();
    for &(position, score) in scores {
        if position >= tokens.len() {
            return Err(Error::Index {
                position,
                len: tokens.len(),
            });
        }
        if score >= cutoff {
            entries.push(TargetEntry {
                position,
                word: tokens.token(position).to_string(),
                score,
            });
        }
    }
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.position.cmp(&b.position))
    });
    Ok(TargetSelection {
        doc_id: doc.id.clone(),
        entries,
    })
}

/// Dumps selections as TSV: doc id, position, word, score.
pub fn selections_tsv<F: Scalar>(selections: &[TargetSelection<F>]) -> String {
    let mut out = String::from("doc_id\tposition\tword\tscore\n");
    for sel in selections {
        for e in &sel.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\n",
                sel.doc_id, e.position, e.word, e.score
            ));
        }
    }
    out
}
