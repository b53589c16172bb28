//! Bundled deterministic stub backend.
//!
//! Everything is derived from stable hashes of the inputs (plus a flavor
//! salt), so runs reproduce bit-for-bit with no model files installed.
//! Distinct flavors ("stub:hate", "stub:s2s", …) produce distinct tensors
//! and proposals and therefore act as distinct models in experiments.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::backend::{
    Backend, ContextualEncoding, PieceSpan, RawCandidateList, TokenAlignment, Window,
};
use crate::error::{Error, Result};
use crate::substitution::{Candidate, PIECE_PREFIX};
use crate::text::{derive_seed, fnv1a64, mix64, word_tokens_lower, TokenizedText};
use crate::Scalar;

/// Dimensionality of the stub's per-token vectors.
pub const DIM: usize = 16;

/// Default encoder window in word tokens.
pub const MAX_WINDOW: usize = 512;

/// The proposer's closed vocabulary.
pub const VOCAB: &[&str] = &[
    "you", "are", "a", "an", "and", "the", "is", "to", "me", "my", "go", "so", "af", "not", "he",
    "she", "we", "they", "yourself", "really", "very", "please", "thanks", "friend", "love",
    "school", "day", "nice", "good", "fine", "happy", "smart", "kind", "stupid", "silly", "dumb",
    "foolish", "useless", "ignorant", "idiot", "fool", "jerk", "loser", "moron", "clown", "baby",
    "teenager", "dog", "pig", "bitch", "screw", "shit", "damn", "piss", "dick", "fuck", "hate",
    "trash", "garbage", "ugly", "nasty", "sick", "crazy", "weird", "lame", "sad", "freak",
    "creep", "dork", "twit",
];

/// Extra multi-character pieces the wordpiece tokenizer knows beyond the
/// vocabulary words and single characters.
const SUBWORD_PIECES: &[&str] = &[
    "re", "tar", "ded", "dw", "eeb", "ing", "er", "ly", "ness", "un", "ta", "ed",
];

/// Raw proposals also surface a few pieces and fragments, exercising the
/// downstream sanitization rules the way a real masked LM would.
const PROPOSAL_EXTRAS: &[&str] = &["##s", "##ing", "a", "s"];

/// Words the toxicity scorer counts as toxic.
const TOXIC_LEXICON: &[&str] = &[
    "stupid", "dumb", "idiot", "fool", "foolish", "moron", "jerk", "loser", "clown", "bitch",
    "screw", "shit", "damn", "piss", "dick", "fuck", "hate", "trash", "garbage", "ugly", "nasty",
    "sick", "useless", "ignorant", "retarded", "dweeb", "freak", "creep", "dork", "twit", "lame",
    "pig",
];

/// Deterministic hash-tensor backend. Cloning is cheap (configuration
/// only); clones behave identically.
#[derive(Debug, Clone)]
pub struct StubBackend {
    name: String,
    salt: u64,
    max_window: usize,
    can_generate: bool,
}

impl StubBackend {
    pub fn new() -> Self {
        StubBackend::with_flavor(None)
    }

    /// A stub variant. The flavor string salts every derived tensor; the
    /// special flavor "nogen" additionally disables the generation
    /// capability (for exercising capability errors).
    pub fn with_flavor(flavor: Option<&str>) -> Self {
        let name = match flavor {
            Some(f) => format!("stub:{f}"),
            None => "stub".to_string(),
        };
        StubBackend {
            salt: fnv1a64(name.as_bytes()),
            can_generate: flavor != Some("nogen"),
            max_window: MAX_WINDOW,
            name,
        }
    }

    #[cfg(test)]
    pub(crate) fn with_max_window(mut self, max_window: usize) -> Self {
        self.max_window = max_window;
        self
    }

    pub fn in_vocab(word: &str) -> bool {
        VOCAB.contains(&word.to_lowercase().as_str())
    }

    /// Uniform value in [0,1) derived from a scoped hash.
    fn unit01(&self, scope: &str) -> f64 {
        (mix64(self.salt ^ fnv1a64(scope.as_bytes())) >> 11) as f64 / (1u64 << 53) as f64
    }

    /// The stub's embedding for any surface string: a unit vector drawn
    /// from a ChaCha stream seeded by the (salted) string hash.
    pub fn word_vector<F: Scalar>(&self, surface: &str) -> Vec<F> {
        let seed = mix64(self.salt ^ fnv1a64(surface.to_lowercase().as_bytes()));
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        } else {
            v[0] = 1.0;
        }
        v.into_iter().map(|x| F::from_f64(x).unwrap()).collect()
    }

    /// Greedy longest-match wordpiece split of one lowercased word.
    fn pieces_of(&self, word: &str) -> Vec<String> {
        let lower = word.to_lowercase();
        if VOCAB.contains(&lower.as_str()) {
            return vec![lower];
        }
        let chars: Vec<char> = lower.chars().collect();
        let mut pieces = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let mut best_len = 1;
            for len in (1..=chars.len() - i).rev() {
                let cand: String = chars[i..i + len].iter().collect();
                if len > 1
                    && (VOCAB.contains(&cand.as_str()) || SUBWORD_PIECES.contains(&cand.as_str()))
                {
                    best_len = len;
                    break;
                }
            }
            let piece: String = chars[i..i + best_len].iter().collect();
            if i == 0 {
                pieces.push(piece);
            } else {
                pieces.push(format!("{PIECE_PREFIX}{piece}"));
            }
            i += best_len;
        }
        pieces
    }

    fn alignment(&self, words: &[&str]) -> TokenAlignment {
        let mut pieces = Vec::new();
        let mut spans = Vec::with_capacity(words.len());
        let mut continuation = Vec::new();
        for word in words {
            let word_pieces = self.pieces_of(word);
            let start = pieces.len();
            for (j, p) in word_pieces.iter().enumerate() {
                continuation.push(j > 0);
                pieces.push(p.clone());
            }
            spans.push(PieceSpan {
                start,
                end: pieces.len(),
            });
        }
        TokenAlignment {
            pieces,
            spans,
            continuation,
        }
    }

    /// Window actually encoded: an explicit request wins; otherwise the
    /// full text, or a window of `max_window` centered on the targets.
    fn effective_window(&self, n: usize, targets: &[usize], window: Option<Window>) -> Window {
        if let Some((start, end)) = window {
            return (start.min(n), end.min(n));
        }
        if n <= self.max_window {
            return (0, n);
        }
        let center = if targets.is_empty() {
            n / 2
        } else {
            (targets.iter().copied().min().unwrap() + targets.iter().copied().max().unwrap()) / 2
        };
        let half = self.max_window / 2;
        let start = center.saturating_sub(half).min(n - self.max_window);
        (start, start + self.max_window)
    }

    fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
        let dot = a.iter().zip(b).map(|(x, y)| *x * *y).sum::<F>();
        let na = a.iter().map(|x| *x * *x).sum::<F>().sqrt();
        let nb = b.iter().map(|x| *x * *x).sum::<F>().sqrt();
        if na == F::zero() || nb == F::zero() {
            F::zero()
        } else {
            dot / (na * nb)
        }
    }
}

impl Default for StubBackend {
    fn default() -> Self {
        StubBackend::new()
    }
}

impl<F: Scalar> Backend<F> for StubBackend {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn encode(
        &mut self,
        text: &str,
        targets: &[usize],
        window: Option<Window>,
    ) -> Result<(TokenAlignment, ContextualEncoding<F>)> {
        if text.trim().is_empty() {
            return Err(Error::Domain("encode of empty text".to_string()));
        }
        let tokens = TokenizedText::new(text);
        let n = tokens.len();
        for &t in targets {
            if t >= n {
                return Err(Error::Index {
                    position: t,
                    len: n,
                });
            }
        }
        let (start, end) = self.effective_window(n, targets, window);
        let words: Vec<&str> = (start..end).map(|i| tokens.token(i)).collect();
        let alignment = self.alignment(&words);
        let vectors: Vec<Vec<F>> = words.iter().map(|w| self.word_vector(w)).collect();
        let mut attention = BTreeMap::new();
        for &t in targets {
            if t < start || t >= end {
                return Err(Error::Alignment(format!(
                    "target {t} outside encoded window [{start}, {end})"
                )));
            }
            let mut profile: Vec<F> = (start..end)
                .map(|i| {
                    let scope = format!("alpha/{}/{}/{}", i, t, words[i - start].to_lowercase());
                    F::from_f64(self.unit01(&scope)).unwrap()
                })
                .collect();
            let total = profile.iter().copied().sum::<F>();
            if total > F::zero() {
                for a in &mut profile {
                    *a = *a / total;
                }
            }
            attention.insert(t, profile);
        }
        Ok((
            alignment,
            ContextualEncoding {
                vectors,
                attention,
                window_start: start,
                truncated: (start, end) != (0, n),
            },
        ))
    }

    fn propose(
        &mut self,
        text: &str,
        target: usize,
        dropout_p: f64,
        k: usize,
        seed: u64,
    ) -> Result<RawCandidateList<F>> {
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::Domain(format!(
                "dropout_p {dropout_p} outside [0, 1)"
            )));
        }
        if k == 0 {
            return Err(Error::Domain("k must be at least 1".to_string()));
        }
        let tokens = TokenizedText::new(text);
        if target >= tokens.len() {
            return Err(Error::Index {
                position: target,
                len: tokens.len(),
            });
        }
        let word = tokens.token(target).to_lowercase();
        let backed_off = !VOCAB.contains(&word.as_str());
        let mut emb: Vec<f64> = self
            .word_vector::<f64>(&word)
            .iter()
            .copied()
            .collect();
        if backed_off {
            // out-of-vocabulary back-off: pieces collapse into one slot
            // whose embedding is zeroed entirely
            emb = vec![0.0; DIM];
        } else if dropout_p > 0.0 {
            let mut rng = ChaCha20Rng::seed_from_u64(mix64(seed ^ self.salt));
            for x in &mut emb {
                if rng.gen::<f64>() < dropout_p {
                    *x = 0.0;
                }
            }
        }
        let context_hash = fnv1a64(text.to_lowercase().as_bytes());
        let mut pool: Vec<&str> = VOCAB.to_vec();
        pool.extend_from_slice(PROPOSAL_EXTRAS);
        pool.sort_unstable();
        pool.dedup();
        let mut scored: Vec<(String, f64)> = pool
            .into_iter()
            .map(|cand| {
                let cos = StubBackend::cosine(&emb, &self.word_vector::<f64>(cand));
                let ctx = self.unit01(&format!("ctx/{context_hash}/{target}/{cand}"));
                (cand.to_string(), cos + 0.01 * ctx)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(RawCandidateList {
            position: target,
            candidates: scored
                .into_iter()
                .map(|(surface, score)| Candidate {
                    surface,
                    score: F::from_f64(score).unwrap(),
                })
                .collect(),
            backed_off,
        })
    }

    fn generate(
        &mut self,
        prompt: &str,
        max_prompt_tokens: usize,
        max_new_tokens: usize,
        seed: u64,
    ) -> Result<String> {
        if !self.can_generate {
            return Err(Error::Capability {
                backend: self.name.clone(),
                op: "generate".to_string(),
            });
        }
        if prompt.trim().is_empty() {
            return Err(Error::Domain("generate with empty prompt".to_string()));
        }
        let _ = derive_seed(seed, &self.name); // reserved for non-echo flavors
        let words = word_tokens_lower(prompt);
        let truncated: Vec<String> = words.into_iter().take(max_prompt_tokens).collect();
        // echo model: the continuation replays the prompt's trailing tokens
        let keep = truncated.len().min(max_new_tokens);
        Ok(truncated[truncated.len() - keep..].join(" "))
    }

    fn score_toxicity(&mut self, text: &str) -> Result<Vec<F>> {
        if text.trim().is_empty() {
            return Err(Error::Domain("toxicity score of empty text".to_string()));
        }
        let hits = word_tokens_lower(text)
            .iter()
            .filter(|w| TOXIC_LEXICON.contains(&w.as_str()))
            .count() as f64;
        let neutral = 1.0 - hits;
        let toxic = 2.0 * hits - 1.0;
        Ok(vec![
            F::from_f64(neutral).unwrap(),
            F::from_f64(toxic).unwrap(),
        ])
    }
}
