//! Contracts over external neural models: masked-LM candidate proposal,
//! contextual encoding, text generation, and toxicity scoring.
//!
//! Real models run out of process behind the newline-delimited JSON wire
//! protocol in [`wire`]; a deterministic in-process stub in [`stub`] makes
//! the whole pipeline runnable with nothing installed.

pub mod stub;
pub mod wire;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::substitution::Candidate;
use crate::Scalar;

/// Range of piece indices [start, end) belonging to one word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceSpan {
    pub start: usize,
    pub end: usize,
}

/// How word-level tokens map onto the backend tokenizer's word-pieces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlignment {
    /// All pieces of the encoded text, in order.
    pub pieces: Vec<String>,
    /// One piece span per word, contiguous and covering all pieces.
    pub spans: Vec<PieceSpan>,
    /// One flag per piece: true for continuation pieces.
    pub continuation: Vec<bool>,
}

impl TokenAlignment {
    /// Checks the structural invariants: spans contiguous, non-overlapping,
    /// covering all pieces, each word mapped to at least one piece.
    pub fn validate(&self) -> Result<()> {
        let mut cursor = 0usize;
        for (w, span) in self.spans.iter().enumerate() {
            if span.start != cursor || span.end <= span.start {
                return Err(Error::Alignment(format!(
                    "word {w} has span {span:?}, expected to start at {cursor}"
                )));
            }
            cursor = span.end;
        }
        if cursor != self.pieces.len() || self.continuation.len() != self.pieces.len() {
            return Err(Error::Alignment(format!(
                "spans cover {cursor} of {} pieces",
                self.pieces.len()
            )));
        }
        Ok(())
    }

    /// Rebuilds the word for one span by joining its pieces (continuation
    /// markers stripped). Backends may normalize casing.
    pub fn word(&self, word_idx: usize) -> String {
        let span = self.spans[word_idx];
        let mut out = String::new();
        for piece in &self.pieces[span.start..span.end] {
            out.push_str(piece.strip_prefix(crate::substitution::PIECE_PREFIX).unwrap_or(piece));
        }
        out
    }
}

/// Per-token contextual vectors and attention profiles toward requested
/// target positions. Token indices are word-level and relative to
/// `window_start` (nonzero only when the text was truncated to fit the
/// backend window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ContextualEncoding<F: Scalar> {
    /// One vector per encoded word token; all the same dimensionality.
    pub vectors: Vec<Vec<F>>,
    /// target position t (absolute) → attention weight from each encoded
    /// token toward t; entries are non-negative.
    pub attention: BTreeMap<usize, Vec<F>>,
    /// First word index covered by the encoding.
    pub window_start: usize,
    /// True when the text exceeded the backend window and was truncated.
    pub truncated: bool,
}

impl<F: Scalar> ContextualEncoding<F> {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Raw candidate proposals for one target position, ordered by model
/// score descending, before any sanitization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RawCandidateList<F: Scalar> {
    pub position: usize,
    pub candidates: Vec<Candidate<F>>,
    /// True when the target word was out of vocabulary and its pieces were
    /// collapsed into one zeroed slot.
    pub backed_off: bool,
}

/// Word range [start, end) to encode; lets callers pin one window per
/// source document so candidate texts are truncated identically.
pub type Window = (usize, usize);

/// The four operations every model backend provides. Handles are stateful
/// (sockets, child processes) and are driven by one worker at a time.
pub trait Backend<F: Scalar>: Send {
    /// Stable identity for manifests and error messages.
    fn name(&self) -> String;

    /// Encodes a text: per-token vectors plus attention profiles toward
    /// each requested target position.
    fn encode(
        &mut self,
        text: &str,
        targets: &[usize],
        window: Option<Window>,
    ) -> Result<(TokenAlignment, ContextualEncoding<F>)>;

    /// Proposes up to k in-context replacements for the word at `target`,
    /// with the target's own embedding partially zeroed (dropout) instead
    /// of mask-token replacement. Out-of-vocabulary targets back off to a
    /// single fully-zeroed slot.
    fn propose(
        &mut self,
        text: &str,
        target: usize,
        dropout_p: f64,
        k: usize,
        seed: u64,
    ) -> Result<RawCandidateList<F>>;

    /// Continues a prompt; the prompt is truncated to `max_prompt_tokens`
    /// words and the continuation holds at most `max_new_tokens` tokens.
    fn generate(
        &mut self,
        prompt: &str,
        max_prompt_tokens: usize,
        max_new_tokens: usize,
        seed: u64,
    ) -> Result<String>;

    /// Per-class logits [neutral, toxic] for a text.
    fn score_toxicity(&mut self, text: &str) -> Result<Vec<F>>;
}

/// Where a backend lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Bundled deterministic stub; the flavor salts its tensors so
    /// distinct flavors behave as distinct models.
    Stub { flavor: Option<String> },
    /// Unix-domain socket speaking the wire protocol.
    Unix(std::path::PathBuf),
    /// Child process speaking the wire protocol on stdin/stdout.
    Exec(String),
}

impl std::str::FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "stub" {
            return Ok(Endpoint::Stub { flavor: None });
        }
        if let Some(flavor) = s.strip_prefix("stub:") {
            return Ok(Endpoint::Stub {
                flavor: Some(flavor.to_string()),
            });
        }
        if let Some(path) = s.strip_prefix("unix:") {
            return Ok(Endpoint::Unix(path.into()));
        }
        if let Some(cmd) = s.strip_prefix("exec:") {
            return Ok(Endpoint::Exec(cmd.to_string()));
        }
        Err(Error::Config(format!(
            "unknown backend endpoint {s:?}; expected stub[:flavor], unix:<path>, or exec:<command>"
        )))
    }
}

/// Opens a backend handle for an endpoint string.
pub fn connect<F: Scalar>(endpoint: &str) -> Result<Box<dyn Backend<F>>> {
    match endpoint.parse::<Endpoint>()? {
        Endpoint::Stub { flavor } => Ok(Box::new(stub::StubBackend::with_flavor(
            flavor.as_deref(),
        ))),
        Endpoint::Unix(path) => Ok(Box::new(wire::RemoteBackend::connect_unix(&path)?)),
        Endpoint::Exec(cmd) => Ok(Box::new(wire::RemoteBackend::spawn(&cmd)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_grammar() {
        assert_eq!(
            "stub".parse::<Endpoint>().unwrap(),
            Endpoint::Stub { flavor: None }
        );
        assert_eq!(
            "stub:hate".parse::<Endpoint>().unwrap(),
            Endpoint::Stub {
                flavor: Some("hate".to_string())
            }
        );
        assert_eq!(
            "unix:/tmp/b.sock".parse::<Endpoint>().unwrap(),
            Endpoint::Unix("/tmp/b.sock".into())
        );
        assert_eq!(
            "exec:lexsub serve".parse::<Endpoint>().unwrap(),
            Endpoint::Exec("lexsub serve".to_string())
        );
        assert!("http://x".parse::<Endpoint>().is_err());
    }

    #[test]
    fn alignment_validation_catches_gaps() {
        let ok = TokenAlignment {
            pieces: vec!["he".into(), "is".into(), "dw".into(), "##eeb".into()],
            spans: vec![
                PieceSpan { start: 0, end: 1 },
                PieceSpan { start: 1, end: 2 },
                PieceSpan { start: 2, end: 4 },
            ],
            continuation: vec![false, false, false, true],
        };
        ok.validate().unwrap();
        assert_eq!(ok.word(2), "dweeb");
        let gap = TokenAlignment {
            pieces: vec!["a".into(), "b".into()],
            spans: vec![PieceSpan { start: 0, end: 1 }],
            continuation: vec![false, false],
        };
        assert!(gap.validate().is_err());
    }
}
