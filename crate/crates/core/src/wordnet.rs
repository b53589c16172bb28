//! Parser and synonym lookup for lexical databases in the classic WordNet
//! `index.*`/`data.*` file layout.
//!
//! Only the structure needed for synonym lookup is read: each index line maps
//! a lemma to its synset byte offsets in sense order, and each data line maps
//! an offset to the synset's member words. Pointers, frames, and glosses are
//! ignored. Two lookup policies are exposed: first-sense synonyms (used by
//! the synonym-replacement augmenter) and the all-senses union (used by the
//! token-overlap metric's synonym stage).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Parts of speech, in the fixed lookup order used by `first_sense_synonyms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Adverb,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adjective, Pos::Adverb];

    /// File suffix used by the on-disk layout (`index.noun`, `data.noun`, …).
    pub fn file_suffix(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adjective => "adj",
            Pos::Adverb => "adv",
        }
    }

    /// One-letter tag used inside the files (`n`, `v`, `a`, `r`).
    pub fn tag(self) -> &'static str {
        match self {
            Pos::Noun => "n",
            Pos::Verb => "v",
            Pos::Adjective => "a",
            Pos::Adverb => "r",
        }
    }
}

/// In-memory synonym database.
#[derive(Debug, Clone, Default)]
pub struct WordNet {
    /// (pos, lemma) → synset offsets in sense order.
    index: BTreeMap<(Pos, String), Vec<u64>>,
    /// (pos, offset) → member words as stored (underscores join multi-word
    /// lemmas; syntactic markers like `(p)` already stripped).
    synsets: BTreeMap<(Pos, u64), Vec<String>>,
}

/// Strips a trailing parenthesized syntactic marker, e.g. `galore(p)`.
fn strip_marker(word: &str) -> &str {
    if word.ends_with(')') {
        if let Some(open) = word.rfind('(') {
            return &word[..open];
        }
    }
    word
}

fn is_header(line: &str) -> bool {
    line.starts_with("  ") || line.trim().is_empty()
}

fn schema(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

impl WordNet {
    /// Loads `index.{noun,verb,adj,adv}` and `data.{...}` from a directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::Resource(format!(
                "synonym database directory not found: {}",
                dir.display()
            )));
        }
        let mut db = WordNet::default();
        for pos in Pos::ALL {
            let index_path = dir.join(format!("index.{}", pos.file_suffix()));
            let data_path = dir.join(format!("data.{}", pos.file_suffix()));
            for p in [&index_path, &data_path] {
                if !p.is_file() {
                    return Err(Error::Resource(format!(
                        "synonym database file missing: {}",
                        p.display()
                    )));
                }
            }
            db.load_data(pos, &data_path)?;
            db.load_index(pos, &index_path)?;
        }
        Ok(db)
    }

    fn load_data(&mut self, pos: Pos, path: &Path) -> Result<()> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (idx, line) in body.lines().enumerate() {
            if is_header(line) {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 6 {
                return Err(schema(path, lineno, "truncated synset line"));
            }
            let offset: u64 = fields[0]
                .parse()
                .map_err(|_| schema(path, lineno, "synset offset is not a number"))?;
            if fields[2] != pos.tag() && !(pos == Pos::Adjective && fields[2] == "s") {
                return Err(schema(
                    path,
                    lineno,
                    format!("synset type {:?} does not match file", fields[2]),
                ));
            }
            let w_cnt = usize::from_str_radix(fields[3], 16)
                .map_err(|_| schema(path, lineno, "word count is not hexadecimal"))?;
            if w_cnt == 0 || fields.len() < 4 + 2 * w_cnt {
                return Err(schema(path, lineno, "word count exceeds line fields"));
            }
            let words: Vec<String> = (0..w_cnt)
                .map(|k| strip_marker(fields[4 + 2 * k]).to_string())
                .collect();
            self.synsets.insert((pos, offset), words);
        }
        Ok(())
    }

    fn load_index(&mut self, pos: Pos, path: &Path) -> Result<()> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (idx, line) in body.lines().enumerate() {
            if is_header(line) {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 6 {
                return Err(schema(path, lineno, "truncated index line"));
            }
            let lemma = fields[0].to_lowercase();
            let synset_cnt: usize = fields[2]
                .parse()
                .map_err(|_| schema(path, lineno, "synset count is not a number"))?;
            let p_cnt: usize = fields[3]
                .parse()
                .map_err(|_| schema(path, lineno, "pointer count is not a number"))?;
            let rest = fields
                .get(4 + p_cnt..)
                .ok_or_else(|| schema(path, lineno, "pointer symbols exceed line fields"))?;
            // rest = sense_cnt tagsense_cnt offsets…
            if rest.len() != 2 + synset_cnt {
                return Err(schema(path, lineno, "offset count disagrees with synset count"));
            }
            let mut offsets = Vec::with_capacity(synset_cnt);
            for raw in &rest[2..] {
                let off: u64 = raw
                    .parse()
                    .map_err(|_| schema(path, lineno, "synset offset is not a number"))?;
                if !self.synsets.contains_key(&(pos, off)) {
                    return Err(schema(
                        path,
                        lineno,
                        format!("offset {off} has no synset in the data file"),
                    ));
                }
                offsets.push(off);
            }
            self.index.insert((pos, lemma), offsets);
        }
        Ok(())
    }

    /// True when no synsets were loaded.
    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    /// Number of synsets across all parts of speech.
    pub fn synset_count(&self) -> usize {
        self.synsets.len()
    }

    /// Single-word synonyms from the word's first sense, searching parts of
    /// speech in the fixed order noun, verb, adjective, adverb and keeping the
    /// first part of speech that lists the lemma. The word itself and
    /// multi-word lemmas (underscore-joined) are excluded; data-file order is
    /// preserved.
    pub fn first_sense_synonyms(&self, word: &str) -> Vec<String> {
        let lemma = word.to_lowercase();
        for pos in Pos::ALL {
            if let Some(offsets) = self.index.get(&(pos, lemma.clone())) {
                let Some(first) = offsets.first() else {
                    return Vec::new();
                };
                let members = &self.synsets[&(pos, *first)];
                return members
                    .iter()
                    .filter(|w| !w.contains('_') && w.to_lowercase() != lemma)
                    .cloned()
                    .collect();
            }
        }
        Vec::new()
    }

    /// Lowercased single-word members of every sense of the word, across all
    /// parts of speech (the word itself included when it names any synset).
    pub fn all_synonyms(&self, word: &str) -> BTreeSet<String> {
        let lemma = word.to_lowercase();
        let mut out = BTreeSet::new();
        for pos in Pos::ALL {
            if let Some(offsets) = self.index.get(&(pos, lemma.clone())) {
                for off in offsets {
                    for w in &self.synsets[&(pos, *off)] {
                        if !w.contains('_') {
                            out.insert(w.to_lowercase());
                        }
                    }
                }
            }
        }
        out
    }
}
