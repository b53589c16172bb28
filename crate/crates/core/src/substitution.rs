//! Substitution candidates: sanitization, similarity ranking, and rollout
//! of augmented samples.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, ContextualEncoding};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::linalg::cosine;
use crate::selector::TargetSelection;
use crate::text::{apply_casing, derive_seed, normalize_whitespace};
use crate::Scalar;

/// One ranked substitution candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Candidate<F: Scalar> {
    pub surface: String,
    pub score: F,
}

/// Sanitized, similarity-ranked candidates for one target position.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CandidateSet<F: Scalar> {
    pub position: usize,
    pub original: String,
    /// Sorted by score descending; ties broken by surface.
    pub candidates: Vec<Candidate<F>>,
}

/// Everything needed to roll out samples for one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SubstitutionPlan<F: Scalar> {
    pub doc_id: String,
    pub targets: Vec<CandidateSet<F>>,
    pub config: GenerationConfig,
}

/// Knobs for candidate generation; the defaults are the tuned settings
/// used throughout the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Probability of zeroing each embedding dimension of the target word.
    pub dropout_p: f64,
    /// Raw candidates requested from the backend before sanitization.
    pub k: usize,
    /// Minimum omission score for a word to become a target.
    pub cutoff: f64,
    /// Upper bound on rolled-out samples per document.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            dropout_p: 0.2,
            k: 15,
            cutoff: 0.005,
            max_samples: 5,
            seed: 42,
        }
    }
}

/// The word chosen for one slot of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotChoice {
    pub position: usize,
    pub original: String,
    pub chosen: String,
}

/// A perturbed or generated text tied to its source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub source_id: String,
    /// 1-based sample index; for substitution generators, sample i uses
    /// every slot's rank-i candidate.
    pub rank: usize,
    pub text: String,
    pub slots: Vec<SlotChoice>,
    pub generator: String,
}

/// Marker prefix on continuation word-pieces from the backend tokenizer.
pub const PIECE_PREFIX: &str = "##";

/// Filters raw candidate surfaces against one original word: drops single
/// characters, case-insensitive copies of the original, ±s/es plural pairs
/// with the original, continuation pieces, and in-list duplicates. Order
/// is otherwise preserved. Idempotent.
pub fn sanitize(candidates: &[String], original: &str) -> Vec<String> {
    let original_lower = original.to_lowercase();
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for cand in candidates {
        if cand.chars().count() <= 1 {
            continue;
        }
        if cand.starts_with(PIECE_PREFIX) {
            continue;
        }
        let lower = cand.to_lowercase();
        if lower == original_lower {
            continue;
        }
        if is_plural_pair(&lower, &original_lower) {
            continue;
        }
        if !seen.insert(cand.clone()) {
            continue;
        }
        out.push(cand.clone());
    }
    out
}

/// True when one word is the other plus an "s" or "es" suffix.
fn is_plural_pair(a: &str, b: &str) -> bool {
    let extends = |long: &str, short: &str| {
        long.strip_suffix('s')
            .map(|stem| stem == short || stem.strip_suffix('e') == Some(short))
            .unwrap_or(false)
    };
    extends(a, b) || extends(b, a)
}

/// Attention-weighted token similarity between a document and one
/// perturbed variant: Σᵢ α_{i,t} · cos(h(Dᵢ), h(D′ᵢ)), with the attention
/// profile toward position t taken from the original document only.
pub fn contextual_similarity<F: Scalar>(
    enc_d: &ContextualEncoding<F>,
    enc_d_prime: &ContextualEncoding<F>,
    t: usize,
) -> Result<F> {
    if enc_d.len() != enc_d_prime.len() || enc_d.window_start != enc_d_prime.window_start {
        return Err(Error::Alignment(format!(
            "encodings cover different token ranges: {} tokens @ {} vs {} tokens @ {}",
            enc_d.len(),
            enc_d.window_start,
            enc_d_prime.len(),
            enc_d_prime.window_start
        )));
    }
    let alpha = enc_d.attention.get(&t).ok_or_else(|| {
        Error::Alignment(format!("original encoding has no attention profile for {t}"))
    })?;
    let mut score = F::zero();
    for (i, a) in alpha.iter().enumerate() {
        score += *a * cosine(&enc_d.vectors[i], &enc_d_prime.vectors[i]);
    }
    Ok(score)
}

/// Builds the per-target candidate sets for one document: propose raw
/// candidates under the dropout surrogate mask, sanitize them, substitute
/// each survivor into the text, and rank by contextual similarity against
/// the original. One encoder window is pinned per source document and
/// reused for every candidate text.
pub fn build_plan<F: Scalar>(
    doc: &Document,
    selection: &TargetSelection<F>,
    backend: &mut dyn Backend<F>,
    cfg: &GenerationConfig,
) -> Result<SubstitutionPlan<F>> {
    if selection.doc_id != doc.id {
        return Err(Error::Domain(format!(
            "selection for {:?} applied to document {:?}",
            selection.doc_id, doc.id
        )));
    }
    let mut targets = Vec::with_capacity(selection.entries.len());
    if selection.entries.is_empty() {
        return Ok(SubstitutionPlan {
            doc_id: doc.id.clone(),
            targets,
            config: cfg.clone(),
        });
    }
    let positions: Vec<usize> = selection.entries.iter().map(|e| e.position).collect();
    let (_, enc_d) = backend
        .encode(&doc.text, &positions, None)
        .map_err(|e| with_doc_context(e, &doc.id))?;
    let window = (enc_d.window_start, enc_d.window_start + enc_d.len());
    let tokens = doc.tokenized();
    for entry in &selection.entries {
        let seed = derive_seed(cfg.seed, &format!("{}/{}", doc.id, entry.position));
        let raw = backend
            .propose(&doc.text, entry.position, cfg.dropout_p, cfg.k, seed)
            .map_err(|e| with_target_context(e, &doc.id, entry.position))?;
        let surfaces: Vec<String> = raw.candidates.iter().map(|c| c.surface.clone()).collect();
        let mut scored = Vec::new();
        for surface in sanitize(&surfaces, &entry.word) {
            let cased = apply_casing(&entry.word, &surface);
            let candidate_text = tokens.replace(entry.position, &cased);
            let (_, enc_prime) = backend
                .encode(&candidate_text, &[], Some(window))
                .map_err(|e| with_target_context(e, &doc.id, entry.position))?;
            let sim = contextual_similarity(&enc_d, &enc_prime, entry.position)?;
            scored.push(Candidate {
                surface,
                score: sim,
            });
        }
        scored.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.surface.cmp(&b.surface))
        });
        targets.push(CandidateSet {
            position: entry.position,
            original: entry.word.clone(),
            candidates: scored,
        });
    }
    Ok(SubstitutionPlan {
        doc_id: doc.id.clone(),
        targets,
        config: cfg.clone(),
    })
}

fn with_doc_context(err: Error, doc_id: &str) -> Error {
    match err {
        Error::Transport(m) => Error::Transport(format!("document {doc_id}: {m}")),
        Error::Domain(m) => Error::Domain(format!("document {doc_id}: {m}")),
        other => other,
    }
}

fn with_target_context(err: Error, doc_id: &str, position: usize) -> Error {
    match err {
        Error::Transport(m) => {
            Error::Transport(format!("document {doc_id} target {position}: {m}"))
        }
        Error::Domain(m) => Error::Domain(format!("document {doc_id} target {position}: {m}")),
        other => other,
    }
}

/// Rolls a plan out into samples: sample i substitutes every slot with its
/// rank-i candidate simultaneously, stopping once any slot runs out of
/// candidates or `max_samples` is reached. Duplicate sample texts are
/// dropped. Substituted words copy the original word's casing pattern.
pub fn rollout<F: Scalar>(
    doc: &Document,
    plan: &SubstitutionPlan<F>,
    max_samples: usize,
    generator: &str,
) -> Vec<AugmentedSample> {
    if plan.targets.is_empty() || max_samples == 0 {
        return Vec::new();
    }
    let min_cardinality = plan
        .targets
        .iter()
        .map(|t| t.candidates.len())
        .min()
        .unwrap_or(0);
    let n_samples = max_samples.min(min_cardinality);
    let tokens = doc.tokenized();
    let mut seen_texts = std::collections::BTreeSet::new();
    seen_texts.insert(normalize_whitespace(&doc.text));
    let mut out = Vec::new();
    for rank in 1..=n_samples {
        let mut slots = Vec::with_capacity(plan.targets.len());
        let mut replacements = Vec::with_capacity(plan.targets.len());
        for target in &plan.targets {
            let cased = apply_casing(&target.original, &target.candidates[rank - 1].surface);
            slots.push(SlotChoice {
                position: target.position,
                original: target.original.clone(),
                chosen: cased.clone(),
            });
            replacements.push((target.position, cased));
        }
        let pairs: Vec<(usize, &str)> = replacements
            .iter()
            .map(|(p, s)| (*p, s.as_str()))
            .collect();
        let text = tokens.replace_many(&pairs);
        if !seen_texts.insert(normalize_whitespace(&text)) {
            continue;
        }
        out.push(AugmentedSample {
            source_id: doc.id.clone(),
            rank,
            text,
            slots,
            generator: generator.to_string(),
        });
    }
    out
}

/// Serializes samples as JSON-lines (one object per line).
pub fn samples_to_jsonl(samples: &[AugmentedSample]) -> String {
    let mut out = String::new();
    for sample in samples {
        out.push_str(&serde_json::to_string(sample).expect("sample serializes"));
        out.push('\n');
    }
    out
}

/// Parses samples from JSON-lines.
pub fn samples_from_jsonl(data: &str) -> crate::Result<Vec<AugmentedSample>> {
    let mut out = Vec::new();
    for (idx, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(line).map_err(|e| crate::Error::Schema {
            path: "<samples>".into(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}
