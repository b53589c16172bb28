//! Word-level tokenization and small text utilities.
//!
//! The tokenizer is intentionally simple and reversible: it records byte
//! spans into the original string, so replacing or deleting a token is a
//! matter of splicing the string around its span. Punctuation marks become
//! their own tokens unless they sit between two alphanumeric characters
//! (so `don't` and `f*ck` stay whole while `af .` splits).

/// Byte span of a token in its source string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// A tokenized view over a string that can splice tokens back.
#[derive(Debug, Clone)]
pub struct TokenizedText {
    text: String,
    spans: Vec<Span>,
}

impl TokenizedText {
    pub fn new(text: &str) -> Self {
        let spans = token_spans(text);
        TokenizedText {
            text: text.to_string(),
            spans,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn token(&self, idx: usize) -> &str {
        let s = self.spans[idx];
        &self.text[s.start..s.end]
    }

    pub fn tokens(&self) -> Vec<&str> {
        (0..self.len()).map(|i| self.token(i)).collect()
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    /// Returns a new string with the token at `idx` replaced.
    pub fn replace(&self, idx: usize, replacement: &str) -> String {
        let s = self.spans[idx];
        let mut out = String::with_capacity(self.text.len() + replacement.len());
        out.push_str(&self.text[..s.start]);
        out.push_str(replacement);
        out.push_str(&self.text[s.end..]);
        out
    }

    /// Returns a new string with several tokens replaced at once.
    /// Replacements are applied right-to-left so earlier spans stay valid.
    pub fn replace_many(&self, replacements: &[(usize, &str)]) -> String {
        let mut pairs: Vec<(usize, &str)> = replacements.to_vec();
        pairs.sort_by_key(|(i, _)| *i);
        let mut out = self.text.clone();
        for (idx, rep) in pairs.iter().rev() {
            let s = self.spans[*idx];
            out.replace_range(s.start..s.end, rep);
        }
        out
    }

    /// Returns a new string with the token at `idx` removed, collapsing
    /// the whitespace left behind.
    pub fn delete(&self, idx: usize) -> String {
        let s = self.spans[idx];
        let before = &self.text[..s.start];
        let after = &self.text[s.end..];
        let joined = if before.ends_with(char::is_whitespace) && after.starts_with(char::is_whitespace)
        {
            format!("{}{}", before, after.trim_start())
        } else {
            format!("{}{}", before, after)
        };
        joined.trim().to_string()
    }
}

/// Computes token spans for a string. Tokens are maximal runs of
/// alphanumeric characters, possibly joined by a single intervening
/// non-whitespace mark with alphanumerics on both sides; every other
/// non-whitespace character is a one-character token.
pub fn token_spans(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i + 1;
            loop {
                if j < n && chars[j].1.is_alphanumeric() {
                    j += 1;
                } else if j + 1 < n
                    && !chars[j].1.is_whitespace()
                    && !chars[j].1.is_alphanumeric()
                    && chars[j + 1].1.is_alphanumeric()
                {
                    // internal mark like the apostrophe in don't
                    j += 2;
                } else {
                    break;
                }
            }
            let end = if j < n { chars[j].0 } else { text.len() };
            spans.push(Span { start, end });
            i = j;
        } else {
            let end = if i + 1 < n { chars[i + 1].0 } else { text.len() };
            spans.push(Span { start, end });
            i += 1;
        }
    }
    spans
}

/// Lowercased word tokens of a string (punctuation-only tokens included).
pub fn word_tokens_lower(text: &str) -> Vec<String> {
    TokenizedText::new(text)
        .tokens()
        .iter()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Collapses all whitespace runs to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Copies the casing pattern of `original` onto `replacement`:
/// all-caps stays all-caps, leading capital stays a leading capital,
/// anything else is lowercased.
pub fn apply_casing(original: &str, replacement: &str) -> String {
    let has_alpha = original.chars().any(|c| c.is_alphabetic());
    if !has_alpha {
        return replacement.to_string();
    }
    let all_upper = original
        .chars()
        .filter(|c| c.is_alphabetic())
        .all(|c| c.is_uppercase());
    let alpha_count = original.chars().filter(|c| c.is_alphabetic()).count();
    if all_upper && alpha_count > 1 {
        return replacement.to_uppercase();
    }
    let first_upper = original
        .chars()
        .find(|c| c.is_alphabetic())
        .map(|c| c.is_uppercase())
        .unwrap_or(false);
    if first_upper {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
            None => String::new(),
        }
    } else {
        replacement.to_lowercase()
    }
}

/// 64-bit FNV-1a hash; the stable workhorse for seeds and deterministic
/// pseudo-embeddings.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// SplitMix64 finalizer; spreads entropy when combining hashes and seeds.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives a child seed from a base seed and a string scope, so that
/// per-document or per-position randomness is stable across runs.
pub fn derive_seed(base: u64, scope: &str) -> u64 {
    mix64(base ^ fnv1a64(scope.as_bytes()))
}
