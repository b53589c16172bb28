//! Reference augmenters: the classic four-operation synonym/noise recipe
//! (synonym replacement, random insertion, random swap, random deletion) and
//! unsupervised generative prompting through a text-generation backend.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::backend::Backend;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::substitution::AugmentedSample;
use crate::text::{apply_casing, derive_seed, normalize_whitespace};
use crate::wordnet::WordNet;
use crate::Scalar;

/// Words never chosen for synonym replacement or insertion.
const STOP_WORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
    "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
    "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
    "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such",
    "no", "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can",
    "will", "just", "don", "should", "now",
];

fn is_stop_word(word: &str) -> bool {
    let lower = word.to_lowercase();
    STOP_WORDS.contains(&lower.as_str())
}

/// Configuration for the four-operation augmenter.
///
/// Each operation runs at its own rate; a rate of zero disables it, and with
/// every rate at zero the augmenter is the identity on text. The per-sample
/// operation count is the rate times the token count, rounded to nearest (no
/// minimum-one floor, so small rates leave short texts alone).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EdaConfig {
    /// Synonym-replacement rate.
    pub sr_rate: f64,
    /// Random-insertion rate.
    pub ri_rate: f64,
    /// Random-swap rate.
    pub rs_rate: f64,
    /// Random-deletion probability per token.
    pub rd_rate: f64,
    /// Samples generated per document.
    pub n_aug: usize,
    /// Base seed; each (document, sample) pair derives its own stream.
    pub seed: u64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        EdaConfig {
            sr_rate: 0.1,
            ri_rate: 0.1,
            rs_rate: 0.1,
            rd_rate: 0.1,
            n_aug: 5,
            seed: 42,
        }
    }
}

impl EdaConfig {
    fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("synonym-replacement", self.sr_rate),
            ("random-insertion", self.ri_rate),
            ("random-swap", self.rs_rate),
            ("random-deletion", self.rd_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
                return Err(Error::Domain(format!(
                    "{name} rate must lie in [0, 1], got {rate}"
                )));
            }
        }
        Ok(())
    }
}

/// Positions whose token is eligible for synonym operations: alphabetic (or
/// hyphenated), not a stop word, and having at least one first-sense synonym.
fn synonym_eligible(tokens: &[String], wordnet: &WordNet) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            t.chars().count() > 1
                && t.chars().all(|c| c.is_alphabetic() || c == '-')
                && !is_stop_word(t)
                && !wordnet.first_sense_synonyms(t).is_empty()
        })
        .map(|(i, _)| i)
        .collect()
}

fn rounded_count(rate: f64, len: usize) -> usize {
    (rate * len as f64).round() as usize
}

/// Applies synonym replacement, random insertion, random swap, and random
/// deletion (in that order) to one token list, in place. Returns true when
/// anything changed.
fn apply_operations(
    tokens: &mut Vec<String>,
    wordnet: &WordNet,
    cfg: &EdaConfig,
    rng: &mut ChaCha20Rng,
) -> bool {
    let original_len = tokens.len();
    let mut changed = false;

    // synonym replacement: n distinct eligible positions
    let n_sr = rounded_count(cfg.sr_rate, original_len);
    if n_sr > 0 {
        let mut eligible = synonym_eligible(tokens, wordnet);
        let picks = n_sr.min(eligible.len());
        for k in 0..picks {
            let j = rng.gen_range(k..eligible.len());
            eligible.swap(k, j);
        }
        for &pos in eligible.iter().take(picks) {
            let synonyms = wordnet.first_sense_synonyms(&tokens[pos]);
            let choice = &synonyms[rng.gen_range(0..synonyms.len())];
            tokens[pos] = apply_casing(&tokens[pos], choice);
            changed = true;
        }
    }

    // random insertion: a synonym of a random eligible word, anywhere
    let n_ri = rounded_count(cfg.ri_rate, original_len);
    for _ in 0..n_ri {
        let eligible = synonym_eligible(tokens, wordnet);
        if eligible.is_empty() {
            break;
        }
        let pos = eligible[rng.gen_range(0..eligible.len())];
        let synonyms = wordnet.first_sense_synonyms(&tokens[pos]);
        let choice = synonyms[rng.gen_range(0..synonyms.len())].to_lowercase();
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, choice);
        changed = true;
    }

    // random swap: up to three retries to find a distinct partner
    let n_rs = rounded_count(cfg.rs_rate, original_len);
    if tokens.len() >= 2 {
        for _ in 0..n_rs {
            let i = rng.gen_range(0..tokens.len());
            let mut j = rng.gen_range(0..tokens.len());
            let mut retries = 0;
            while j == i && retries < 3 {
                j = rng.gen_range(0..tokens.len());
                retries += 1;
            }
            if i != j {
                tokens.swap(i, j);
                changed = true;
            }
        }
    }

    // random deletion: per-token coin flips, never emptying the text
    if cfg.rd_rate > 0.0 {
        let keep: Vec<bool> = (0..tokens.len())
            .map(|_| rng.gen::<f64>() >= cfg.rd_rate)
            .collect();
        if keep.iter().any(|&k| !k) {
            if keep.iter().any(|&k| k) {
                let mut idx = 0;
                tokens.retain(|_| {
                    let kept = keep[idx];
                    idx += 1;
                    kept
                });
            } else {
                let survivor = rng.gen_range(0..tokens.len());
                let word = tokens[survivor].clone();
                tokens.clear();
                tokens.push(word);
            }
            changed = true;
        }
    }

    changed
}

/// Generates `cfg.n_aug` samples from one document, each applying the four
/// operations at their configured rates. Deterministic under `cfg.seed`.
pub fn eda_augment(
    doc: &Document,
    wordnet: &WordNet,
    cfg: &EdaConfig,
) -> Result<Vec<AugmentedSample>> {
    cfg.validate()?;
    let source_tokens = doc.tokenized();
    if source_tokens.is_empty() {
        return Err(Error::Domain(format!(
            "document {:?} has no tokens to augment",
            doc.id
        )));
    }
    if (cfg.sr_rate > 0.0 || cfg.ri_rate > 0.0) && wordnet.is_empty() {
        return Err(Error::Resource(
            "synonym database is empty; synonym operations cannot run".to_string(),
        ));
    }
    let mut samples = Vec::with_capacity(cfg.n_aug);
    for k in 0..cfg.n_aug {
        let seed = derive_seed(cfg.seed, &format!("eda/{}/{}", doc.id, k));
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut tokens: Vec<String> =
            source_tokens.tokens().iter().map(|t| t.to_string()).collect();
        let changed = apply_operations(&mut tokens, wordnet, cfg, &mut rng);
        let text = if changed {
            tokens.join(" ")
        } else {
            doc.text.clone()
        };
        samples.push(AugmentedSample {
            source_id: doc.id.clone(),
            rank: k + 1,
            text,
            slots: Vec::new(),
            generator: "eda".to_string(),
        });
    }
    Ok(samples)
}

/// Configuration for generative prompting.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PromptConfig {
    /// Prompt truncation budget, in backend tokens.
    pub max_prompt_tokens: usize,
    /// Continuation budget, in backend tokens.
    pub max_new_tokens: usize,
    /// Base seed; each document derives its own stream.
    pub seed: u64,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            max_prompt_tokens: 30,
            max_new_tokens: 70,
            seed: 42,
        }
    }
}

/// A generated sample plus a degeneracy flag (empty continuation).
#[derive(Debug, Clone, PartialEq)]
pub struct PromptOutcome {
    pub sample: AugmentedSample,
    pub degenerate: bool,
}

/// Prompts the backend with one positive document's (truncated) text and
/// wraps the continuation as an augmented sample. The sample keeps the
/// positive label downstream; evaluation, not re-annotation, judges drift.
pub fn prompt_augment<F: Scalar>(
    doc: &Document,
    backend: &mut dyn Backend<F>,
    cfg: &PromptConfig,
) -> Result<PromptOutcome> {
    if !doc.label.is_positive() {
        return Err(Error::Domain(format!(
            "document {:?} is not a positive instance; only positives are prompted",
            doc.id
        )));
    }
    let seed = derive_seed(cfg.seed, &format!("gen/{}", doc.id));
    let text = backend.generate(&doc.text, cfg.max_prompt_tokens, cfg.max_new_tokens, seed)?;
    let text = normalize_whitespace(&text);
    let degenerate = text.is_empty();
    Ok(PromptOutcome {
        sample: AugmentedSample {
            source_id: doc.id.clone(),
            rank: 1,
            text,
            slots: Vec::new(),
            generator: format!("prompt:{}", backend.name()),
        },
        degenerate,
    })
}
