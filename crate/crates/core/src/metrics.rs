//! Classification, robustness, and semantic-consistency metrics plus the
//! report tables built from them: F1/TPR over aligned predictions, the
//! cross-generator ΔTPR matrix, a flexible unigram-overlap score with
//! exact/stem/synonym matching stages, per-generator consistency
//! distributions, and the per-classifier TPR-drop table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::classify::{Classifier, Prediction};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::linalg::cosine;
use crate::stem::stem;
use crate::substitution::AugmentedSample;
use crate::text::word_tokens_lower;
use crate::wordnet::WordNet;
use crate::Scalar;

/// Binary confusion counts over one aligned prediction/gold pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tallies confusion counts; predictions and gold documents must be aligned
/// one-to-one by id, in the same order.
pub fn confusion<F: Scalar>(preds: &[Prediction<F>], gold: &[Document]) -> Result<ConfusionCounts> {
    if preds.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "{} predictions against {} gold documents",
            preds.len(),
            gold.len()
        )));
    }
    let mut counts = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (p, g) in preds.iter().zip(gold) {
        if p.doc_id != g.id {
            return Err(Error::Alignment(format!(
                "prediction for {:?} paired with gold document {:?}",
                p.doc_id, g.id
            )));
        }
        if !g.label.is_binary() {
            return Err(Error::Domain(format!(
                "gold document {:?} carries an unbinarized label",
                g.id
            )));
        }
        match (p.label == 1, g.label.is_positive()) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(counts)
}

/// F1 of the positive class: 2·P·R/(P+R), defined as 0 when P+R = 0.
pub fn f1<F: Scalar>(preds: &[Prediction<F>], gold: &[Document]) -> Result<F> {
    let c = confusion(preds, gold)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return Ok(F::zero());
    }
    Ok(F::from_usize(2 * c.tp).unwrap() / F::from_usize(denom).unwrap())
}

/// True-positive ratio tp/(tp+fn). Requires at least one positive gold
/// instance.
pub fn tpr<F: Scalar>(preds: &[Prediction<F>], gold: &[Document]) -> Result<F> {
    let c = confusion(preds, gold)?;
    let positives = c.tp + c.fn_;
    if positives == 0 {
        return Err(Error::Domain(
            "TPR needs at least one positive gold instance".to_string(),
        ));
    }
    Ok(F::from_usize(c.tp).unwrap() / F::from_usize(positives).unwrap())
}

fn tpr_of<F: Scalar>(clf: &mut dyn Classifier<F>, docs: &[Document]) -> Result<F> {
    let preds = clf.predict(docs)?;
    tpr(&preds, docs)
}

/// Cross-generator robustness matrix: rows are test-perturbation generators,
/// columns are the augmenters the retrained classifiers were built with, and
/// each cell is the retrained classifier's TPR gain over the plain classifier
/// on that row's perturbed test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DeltaTprMatrix<F: Scalar> {
    /// Row and column labels, in sorted order.
    pub generators: Vec<String>,
    /// Plain classifier's TPR per row (side column).
    pub initial_tpr: Vec<F>,
    /// cells[r][c] = TPR(f_aug_c on X′_r) − TPR(f on X′_r).
    pub cells: Vec<Vec<F>>,
    /// Per-column mean over rows r ≠ c; absent when a column has no
    /// off-diagonal cells (single-generator matrix).
    pub column_means: Vec<Option<F>>,
}

impl<F: Scalar> DeltaTprMatrix<F> {
    /// Tab-separated table: one row per test perturbation with the plain
    /// classifier's TPR as a side column, plus the cross-generator mean
    /// footer (same-generator cell excluded).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("test-perturbation\tinitial-tpr");
        for g in &self.generators {
            out.push('\t');
            out.push_str(g);
        }
        out.push('\n');
        for (r, g) in self.generators.iter().enumerate() {
            out.push_str(g);
            out.push_str(&format!("\t{:.6}", self.initial_tpr[r].to_f64().unwrap()));
            for c in 0..self.generators.len() {
                out.push_str(&format!("\t{:+.6}", self.cells[r][c].to_f64().unwrap()));
            }
            out.push('\n');
        }
        out.push_str("mean-excluding-same\t");
        for mean in &self.column_means {
            out.push('\t');
            match mean {
                Some(m) => out.push_str(&format!("{:+.6}", m.to_f64().unwrap())),
                None => out.push('-'),
            }
        }
        out.push('\n');
        out
    }
}

/// Builds the ΔTPR matrix from a plain classifier, one retrained classifier
/// per generator, and one perturbed test set per generator. Every generator
/// named in either map must appear in both.
pub fn delta_tpr_matrix<F: Scalar>(
    base: &mut dyn Classifier<F>,
    augmented: &mut BTreeMap<String, Box<dyn Classifier<F>>>,
    test_sets: &BTreeMap<String, Vec<Document>>,
) -> Result<DeltaTprMatrix<F>> {
    let generators: BTreeSet<String> = augmented
        .keys()
        .chain(test_sets.keys())
        .cloned()
        .collect();
    for g in &generators {
        if !augmented.contains_key(g) {
            return Err(Error::Completeness {
                generator: g.clone(),
                missing: "classifier".to_string(),
            });
        }
        if !test_sets.contains_key(g) {
            return Err(Error::Completeness {
                generator: g.clone(),
                missing: "test set".to_string(),
            });
        }
    }
    let generators: Vec<String> = generators.into_iter().collect();
    let mut initial_tpr = Vec::with_capacity(generators.len());
    let mut cells = Vec::with_capacity(generators.len());
    for row_gen in &generators {
        let docs = &test_sets[row_gen];
        let base_tpr = tpr_of(base, docs)?;
        let mut row = Vec::with_capacity(generators.len());
        for col_gen in &generators {
            let aug = augmented.get_mut(col_gen).expect("checked above");
            row.push(tpr_of(aug.as_mut(), docs)? - base_tpr);
        }
        initial_tpr.push(base_tpr);
        cells.push(row);
    }
    let mut column_means = Vec::with_capacity(generators.len());
    for c in 0..generators.len() {
        let off_diagonal: Vec<F> = (0..generators.len())
            .filter(|&r| r != c)
            .map(|r| cells[r][c])
            .collect();
        if off_diagonal.is_empty() {
            column_means.push(None);
        } else {
            let n = F::from_usize(off_diagonal.len()).unwrap();
            column_means.push(Some(off_diagonal.into_iter().sum::<F>() / n));
        }
    }
    Ok(DeltaTprMatrix {
        generators,
        initial_tpr,
        cells,
        column_means,
    })
}

// ---------------------------------------------------------------------------
// flexible unigram overlap
// ---------------------------------------------------------------------------

/// Parameters of the unigram-overlap score: F-mean weight and fragmentation
/// penalty exponent/weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MeteorParams<F: Scalar> {
    pub alpha: F,
    pub beta: F,
    pub gamma: F,
}

impl<F: Scalar> Default for MeteorParams<F> {
    fn default() -> Self {
        MeteorParams {
            alpha: F::from_f64(0.9).unwrap(),
            beta: F::from_f64(3.0).unwrap(),
            gamma: F::from_f64(0.5).unwrap(),
        }
    }
}

type Enumerated = Vec<(usize, String)>;

/// One matching stage: scan candidate indices high→low, and for each try
/// reference indices high→low; the first hit removes both entries. The
/// scan order and in-place removal reproduce the reference tool exactly.
fn match_stage(
    hyp: &mut Enumerated,
    reference: &mut Enumerated,
    hit: impl Fn(&str, &str) -> bool,
) -> Vec<(usize, usize)> {
    let mut matches = Vec::new();
    let mut i = hyp.len();
    while i > 0 {
        i -= 1;
        let mut j = reference.len();
        while j > 0 {
            j -= 1;
            if hit(&hyp[i].1, &reference[j].1) {
                matches.push((hyp[i].0, reference[j].0));
                hyp.remove(i);
                reference.remove(j);
                break;
            }
        }
    }
    matches
}

fn count_chunks(matches: &[(usize, usize)]) -> usize {
    let mut chunks = 1;
    for pair in matches.windows(2) {
        if !(pair[1].0 == pair[0].0 + 1 && pair[1].1 == pair[0].1 + 1) {
            chunks += 1;
        }
    }
    chunks
}

/// Unigram alignment score between a candidate and a single reference.
/// Tokens are matched in three stages — exact surface, shared stem, then
/// synonym-set membership over the stemmed remainders — and scored by a
/// precision-weighted harmonic mean discounted by a fragmentation penalty.
pub fn meteor<F: Scalar>(
    candidate: &str,
    reference: &str,
    wordnet: &WordNet,
    params: &MeteorParams<F>,
) -> Result<F> {
    let mut hyp: Enumerated = word_tokens_lower(candidate).into_iter().enumerate().collect();
    let mut reference: Enumerated = word_tokens_lower(reference)
        .into_iter()
        .enumerate()
        .collect();
    if hyp.is_empty() || reference.is_empty() {
        return Err(Error::Domain(
            "unigram overlap needs non-empty candidate and reference".to_string(),
        ));
    }
    let hyp_len = F::from_usize(hyp.len()).unwrap();
    let ref_len = F::from_usize(reference.len()).unwrap();

    let mut matches = match_stage(&mut hyp, &mut reference, |h, r| h == r);
    // the stem stage hands its *stemmed* remainders on to the synonym stage
    let mut hyp: Enumerated = hyp.into_iter().map(|(i, w)| (i, stem(&w))).collect();
    let mut reference: Enumerated = reference
        .into_iter()
        .map(|(j, w)| (j, stem(&w)))
        .collect();
    matches.extend(match_stage(&mut hyp, &mut reference, |h, r| h == r));
    matches.extend(match_stage(&mut hyp, &mut reference, |h, r| {
        wordnet.all_synonyms(h).contains(r)
    }));
    matches.sort_unstable();

    if matches.is_empty() {
        return Ok(F::zero());
    }
    let m = F::from_usize(matches.len()).unwrap();
    let precision = m / hyp_len;
    let recall = m / ref_len;
    let fmean = (precision * recall)
        / (params.alpha * precision + (F::one() - params.alpha) * recall);
    let fragmentation = F::from_usize(count_chunks(&matches)).unwrap() / m;
    let penalty = params.gamma * fragmentation.powf(params.beta);
    Ok((F::one() - penalty) * fmean)
}

// ---------------------------------------------------------------------------
// consistency report
// ---------------------------------------------------------------------------

/// Scores a sentence pair for semantic similarity in [0, 1].
pub trait PairScorer<F: Scalar> {
    fn name(&self) -> String;
    fn score_pair(&mut self, a: &str, b: &str) -> Result<F>;
}

/// Encoder-similarity scorer: mean-pooled backend encodings compared by
/// cosine, clamped at zero.
pub struct EncoderScorer<'a, F: Scalar> {
    pub backend: &'a mut dyn Backend<F>,
}

impl<F: Scalar> EncoderScorer<'_, F> {
    fn pooled(&mut self, text: &str) -> Result<Vec<F>> {
        let (_, encoding) = self.backend.encode(text, &[], None)?;
        let dim = encoding.vectors.first().map_or(0, Vec::len);
        let mut mean = vec![F::zero(); dim];
        if encoding.vectors.is_empty() {
            return Ok(mean);
        }
        for v in &encoding.vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += *x;
            }
        }
        let n = F::from_usize(encoding.vectors.len()).unwrap();
        for m in &mut mean {
            *m = *m / n;
        }
        Ok(mean)
    }
}

impl<F: Scalar> PairScorer<F> for EncoderScorer<'_, F> {
    fn name(&self) -> String {
        format!("encoder-cosine:{}", self.backend.name())
    }

    fn score_pair(&mut self, a: &str, b: &str) -> Result<F> {
        let va = self.pooled(a)?;
        let vb = self.pooled(b)?;
        Ok(cosine::<F>(&va, &vb).max(F::zero()))
    }
}

/// Returns a fixed score for every pair; an oracle for report plumbing.
#[derive(Debug, Clone, Copy)]
pub struct FixedScorer<F: Scalar>(pub F);

impl<F: Scalar> PairScorer<F> for FixedScorer<F> {
    fn name(&self) -> String {
        "fixed".to_string()
    }

    fn score_pair(&mut self, _a: &str, _b: &str) -> Result<F> {
        Ok(self.0)
    }
}

/// Five-number summary plus mean and Tukey whiskers, as drawn in a box plot.
/// Quartiles use linear interpolation at p·(n−1); whiskers are the extreme
/// observations within 1.5·IQR of the quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DistributionSummary<F: Scalar> {
    pub n: usize,
    pub min: F,
    pub q1: F,
    pub median: F,
    pub q3: F,
    pub max: F,
    pub mean: F,
    pub whisker_low: F,
    pub whisker_high: F,
}

fn quantile<F: Scalar>(sorted: &[F], p: f64) -> F {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = F::from_f64(pos - lo as f64).unwrap();
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

impl<F: Scalar> DistributionSummary<F> {
    pub fn from_values(values: &[F]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain(
                "cannot summarize an empty distribution".to_string(),
            ));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are ordered"));
        let n = sorted.len();
        let q1 = quantile(&sorted, 0.25);
        let median = quantile(&sorted, 0.5);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let fence_mul = F::from_f64(1.5).unwrap();
        let low_fence = q1 - fence_mul * iqr;
        let high_fence = q3 + fence_mul * iqr;
        let whisker_low = *sorted
            .iter()
            .find(|&&v| v >= low_fence)
            .expect("min is within the low fence or above");
        let whisker_high = *sorted
            .iter()
            .rev()
            .find(|&&v| v <= high_fence)
            .expect("max is within the high fence or below");
        let mean = sorted.iter().copied().sum::<F>() / F::from_usize(n).unwrap();
        Ok(DistributionSummary {
            n,
            min: sorted[0],
            q1,
            median,
            q3,
            max: sorted[n - 1],
            mean,
            whisker_low,
            whisker_high,
        })
    }
}

/// Consistency distributions for one generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConsistencyEntry<F: Scalar> {
    pub token_overlap: DistributionSummary<F>,
    pub encoder_similarity: DistributionSummary<F>,
}

/// Per-generator semantic-consistency distributions between augmented
/// samples and their source documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConsistencyReport<F: Scalar> {
    pub scorer: String,
    pub per_generator: BTreeMap<String, ConsistencyEntry<F>>,
}

/// Scores every sample against its source document — token overlap via the
/// unigram-alignment score, semantic similarity via the given scorer — and
/// summarizes both per generator. Degenerate (empty) sample texts score 0 on
/// both metrics rather than failing the whole report.
pub fn consistency_report<F: Scalar>(
    samples: &[AugmentedSample],
    sources: &Corpus,
    scorer: &mut dyn PairScorer<F>,
    wordnet: &WordNet,
    params: &MeteorParams<F>,
) -> Result<ConsistencyReport<F>> {
    let by_id: BTreeMap<&str, &Document> = sources
        .documents
        .iter()
        .map(|d| (d.id.as_str(), d))
        .collect();
    let mut overlap: BTreeMap<&str, Vec<F>> = BTreeMap::new();
    let mut encoder: BTreeMap<&str, Vec<F>> = BTreeMap::new();
    for sample in samples {
        let source = by_id.get(sample.source_id.as_str()).ok_or(Error::Lineage {
            source_id: sample.source_id.clone(),
        })?;
        let degenerate = sample.text.trim().is_empty();
        let token_score = if degenerate {
            F::zero()
        } else {
            meteor(&sample.text, &source.text, wordnet, params)?
        };
        let encoder_score = if degenerate {
            F::zero()
        } else {
            scorer.score_pair(&sample.text, &source.text)?
        };
        overlap
            .entry(sample.generator.as_str())
            .or_default()
            .push(token_score);
        encoder
            .entry(sample.generator.as_str())
            .or_default()
            .push(encoder_score);
    }
    let mut per_generator = BTreeMap::new();
    for (generator, token_scores) in overlap {
        let entry = ConsistencyEntry {
            token_overlap: DistributionSummary::from_values(&token_scores)?,
            encoder_similarity: DistributionSummary::from_values(&encoder[generator])?,
        };
        per_generator.insert(generator.to_string(), entry);
    }
    Ok(ConsistencyReport {
        scorer: scorer.name(),
        per_generator,
    })
}

// ---------------------------------------------------------------------------
// TPR-drop table
// ---------------------------------------------------------------------------

/// One row of the adversarial-effectiveness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TprDropRow<F: Scalar> {
    pub classifier: String,
    pub generator: String,
    pub initial_tpr: F,
    pub perturbed_tpr: F,
    /// initial − perturbed; positive means the perturbation fooled the model.
    pub drop: F,
}

/// TPR before/after perturbation, per classifier and generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TprDecreaseReport<F: Scalar> {
    pub rows: Vec<TprDropRow<F>>,
}

impl<F: Scalar> TprDecreaseReport<F> {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("classifier\tgenerator\tinitial-tpr\tperturbed-tpr\tdrop\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:+.6}\n",
                row.classifier,
                row.generator,
                row.initial_tpr.to_f64().unwrap(),
                row.perturbed_tpr.to_f64().unwrap(),
                row.drop.to_f64().unwrap()
            ));
        }
        out
    }
}

/// Measures each classifier's TPR on the original test documents and on
/// every perturbed variant. All perturbed sets must have exactly as many
/// documents as the original (equalized test sets).
pub fn tpr_decrease_report<F: Scalar>(
    classifiers: &mut [&mut dyn Classifier<F>],
    original: &[Document],
    perturbed_sets: &BTreeMap<String, Vec<Document>>,
) -> Result<TprDecreaseReport<F>> {
    for (generator, docs) in perturbed_sets {
        if docs.len() != original.len() {
            return Err(Error::Equalization(format!(
                "perturbed set {:?} has {} documents, original has {}",
                generator,
                docs.len(),
                original.len()
            )));
        }
    }
    let mut rows = Vec::new();
    for clf in classifiers.iter_mut() {
        let initial = tpr_of(*clf, original)?;
        for (generator, docs) in perturbed_sets {
            let perturbed = tpr_of(*clf, docs)?;
            rows.push(TprDropRow {
                classifier: clf.id(),
                generator: generator.clone(),
                initial_tpr: initial,
                perturbed_tpr: perturbed,
                drop: initial - perturbed,
            });
        }
    }
    Ok(TprDecreaseReport { rows })
}
