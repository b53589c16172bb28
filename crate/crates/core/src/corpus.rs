//! Corpus ingestion, label binarization, merging, statistics, and splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::substitution::AugmentedSample;
use crate::text::{derive_seed, TokenizedText};
use crate::Scalar;

/// A document label: binary after binarization, raw as ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Binary(u8),
    Raw(String),
}

impl Label {
    pub fn is_binary(&self) -> bool {
        matches!(self, Label::Binary(0) | Label::Binary(1))
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Label::Binary(1))
    }

    fn key(&self) -> String {
        match self {
            Label::Binary(b) => b.to_string(),
            Label::Raw(s) => s.clone(),
        }
    }
}

/// A single labeled message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub source: String,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        label: Label,
        source: impl Into<String>,
    ) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label,
            source: source.into(),
        }
    }

    /// Word-level tokens with spans back into `text`.
    pub fn tokenized(&self) -> TokenizedText {
        TokenizedText::new(&self.text)
    }

    pub fn token_count(&self) -> usize {
        self.tokenized().len()
    }
}

/// What a corpus may be used for. Substitute-training corpora never enter
/// the experiment pool, which keeps the target-word selector independent
/// of every evaluated classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusRole {
    SubstituteTraining,
    Experiment,
}

/// True for corpus names that are reserved for substitute training.
pub fn is_substitute_reserved(name: &str) -> bool {
    name.to_lowercase().contains("formspring")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub role: CorpusRole,
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus, enforcing id uniqueness and the reserved-name rule.
    pub fn new(
        name: impl Into<String>,
        role: CorpusRole,
        documents: Vec<Document>,
    ) -> Result<Self> {
        let name = name.into();
        if is_substitute_reserved(&name) && role != CorpusRole::SubstituteTraining {
            return Err(Error::RoleViolation { corpus: name });
        }
        let mut seen = BTreeSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.clone()) {
                return Err(Error::Domain(format!(
                    "duplicate document id {:?} in corpus {:?}",
                    doc.id, name
                )));
            }
        }
        Ok(Corpus {
            name,
            role,
            documents,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| d.label.is_positive())
    }

    pub fn is_binarized(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_binary())
    }
}

/// Supported on-disk corpus formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line: {id?, text, label, source?}.
    JsonLines,
    /// Headered CSV with columns text,label and optional id,source.
    Csv,
}

impl CorpusFormat {
    /// Picks a format from the file extension (.jsonl/.json vs .csv).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => Ok(CorpusFormat::JsonLines),
            Some("csv") => Ok(CorpusFormat::Csv),
            other => Err(Error::Config(format!(
                "cannot infer corpus format from extension {:?} of {}",
                other,
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    text: Option<String>,
    label: Option<Label>,
    source: Option<String>,
}

/// Loads a corpus file. The corpus name is the file stem; records without
/// an id get synthetic ids line-0, line-1, …; records without a source
/// inherit the corpus name. Corpora whose name marks them as reserved for
/// substitute training are loaded with that role automatically.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "corpus".to_string());
    let role = if is_substitute_reserved(&name) {
        CorpusRole::SubstituteTraining
    } else {
        CorpusRole::Experiment
    };
    let documents = match format {
        CorpusFormat::JsonLines => load_jsonl(path, &name)?,
        CorpusFormat::Csv => load_csv(path, &name)?,
    };
    Corpus::new(name, role, documents)
}

fn load_jsonl(path: &Path, corpus_name: &str) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut docs = Vec::new();
    let mut record_idx = 0usize;
    for (line_idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: line_idx + 1,
            reason: e.to_string(),
        })?;
        docs.push(record_to_document(raw, record_idx, corpus_name, path, line_idx + 1)?);
        record_idx += 1;
    }
    Ok(docs)
}

fn load_csv(path: &Path, corpus_name: &str) -> Result<Vec<Document>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, text_col, label_col, source_col) =
        (col("id"), col("text"), col("label"), col("source"));
    let mut docs = Vec::new();
    for (record_idx, row) in reader.records().enumerate() {
        let line = record_idx + 2; // header occupies line 1
        let row = row.map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        let field = |idx: Option<usize>| idx.and_then(|i| row.get(i)).map(|s| s.to_string());
        let label = field(label_col).map(|s| match s.as_str() {
            "0" => Label::Binary(0),
            "1" => Label::Binary(1),
            _ => Label::Raw(s),
        });
        let raw = RawRecord {
            id: field(id_col),
            text: field(text_col),
            label,
            source: field(source_col),
        };
        docs.push(record_to_document(raw, record_idx, corpus_name, path, line)?);
    }
    Ok(docs)
}

fn record_to_document(
    raw: RawRecord,
    record_idx: usize,
    corpus_name: &str,
    path: &Path,
    line: usize,
) -> Result<Document> {
    let text = raw.text.ok_or_else(|| Error::Schema {
        path: path.to_path_buf(),
        line,
        reason: "missing field `text`".to_string(),
    })?;
    let label = raw.label.ok_or_else(|| Error::Schema {
        path: path.to_path_buf(),
        line,
        reason: "missing field `label`".to_string(),
    })?;
    Ok(Document {
        id: raw.id.unwrap_or_else(|| format!("line-{record_idx}")),
        text: crate::text::normalize_whitespace(&text),
        label,
        source: raw.source.unwrap_or_else(|| corpus_name.to_string()),
    })
}

/// Mapping from raw label values to binary classes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelRule {
    map: BTreeMap<String, u8>,
}

impl LabelRule {
    /// Passes binary labels through and maps nothing else.
    pub fn identity() -> Self {
        LabelRule::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u8)>,
        S: Into<String>,
    {
        LabelRule {
            map: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn apply(&self, label: &Label) -> Result<u8> {
        if let Label::Binary(b) = label {
            if *b <= 1 {
                return Ok(*b);
            }
        }
        let key = label.key();
        self.map
            .get(&key)
            .copied()
            .ok_or(Error::Mapping { label: key })
    }
}

/// Maps every label to {0,1} using the rule; any unmapped value is an error.
pub fn binarize_labels(corpus: &Corpus, rule: &LabelRule) -> Result<Corpus> {
    let mut documents = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let mut doc = doc.clone();
        doc.label = Label::Binary(rule.apply(&doc.label)?);
        documents.push(doc);
    }
    Corpus::new(corpus.name.clone(), corpus.role, documents)
}

/// Concatenates binarized experiment corpora, namespacing ids by source.
/// A single corpus is returned unchanged. Substitute-training corpora
/// (by role or by reserved name) are rejected so they can never leak into
/// the experiment pool.
pub fn merge_corpora(corpora: &[Corpus]) -> Result<Corpus> {
    if corpora.is_empty() {
        return Err(Error::Domain("merge of zero corpora".to_string()));
    }
    for corpus in corpora {
        if corpus.role == CorpusRole::SubstituteTraining || is_substitute_reserved(&corpus.name) {
            return Err(Error::RoleViolation {
                corpus: corpus.name.clone(),
            });
        }
        if !corpus.is_binarized() {
            return Err(Error::Domain(format!(
                "corpus {:?} is not binarized",
                corpus.name
            )));
        }
    }
    if corpora.len() == 1 {
        return Ok(corpora[0].clone());
    }
    let mut documents = Vec::new();
    for corpus in corpora {
        for doc in &corpus.documents {
            let mut doc = doc.clone();
            let prefix = format!("{}/", doc.source);
            if !doc.id.starts_with(&prefix) {
                doc.id = format!("{}{}", prefix, doc.id);
            }
            documents.push(doc);
        }
    }
    Corpus::new("merged", CorpusRole::Experiment, documents)
}

/// Descriptive statistics over one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CorpusStats<F: Scalar> {
    pub n_pos: usize,
    pub n_neg: usize,
    pub ttr: F,
    pub avg_tokens: F,
    pub sd_tokens: F,
}

/// Computes class counts, type-token ratio over the whole token stream,
/// and mean / population standard deviation of per-document token counts.
pub fn compute_stats<F: Scalar>(corpus: &Corpus) -> Result<CorpusStats<F>> {
    if corpus.is_empty() {
        return Err(Error::Domain(format!(
            "stats of empty corpus {:?}",
            corpus.name
        )));
    }
    let mut n_pos = 0usize;
    let mut types = BTreeSet::new();
    let mut counts = Vec::with_capacity(corpus.len());
    let mut total_tokens = 0usize;
    for doc in &corpus.documents {
        if doc.label.is_positive() {
            n_pos += 1;
        }
        let toks = doc.tokenized();
        total_tokens += toks.len();
        counts.push(toks.len());
        for tok in toks.tokens() {
            types.insert(tok.to_string());
        }
    }
    let n = F::from_usize(corpus.len()).unwrap();
    let avg = F::from_usize(counts.iter().sum::<usize>()).unwrap() / n;
    let var = counts
        .iter()
        .map(|&c| {
            let d = F::from_usize(c).unwrap() - avg;
            d * d
        })
        .sum::<F>()
        / n;
    let ttr = if total_tokens == 0 {
        F::zero()
    } else {
        F::from_usize(types.len()).unwrap() / F::from_usize(total_tokens).unwrap()
    };
    Ok(CorpusStats {
        n_pos,
        n_neg: corpus.len() - n_pos,
        ttr,
        avg_tokens: avg,
        sd_tokens: var.sqrt(),
    })
}

/// Renders per-corpus stats as TSV: corpus, positives, negatives, ttr,
/// average tokens per message, standard deviation.
pub fn stats_tsv<F: Scalar>(rows: &[(String, CorpusStats<F>)]) -> String {
    let mut out = String::from("corpus\tn_pos\tn_neg\tttr\tavg_tok_msg\tsd_tok_msg\n");
    for (name, s) in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.3}\t{:.1}\t{:.1}\n",
            name, s.n_pos, s.n_neg, s.ttr, s.avg_tokens, s.sd_tokens
        ));
    }
    out
}

/// Which side of a split a set of samples joins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Train => write!(f, "train"),
            Side::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub seed: u64,
    pub test_ratio: f64,
}

/// A train/test partition of one corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub provenance: SplitProvenance,
}

impl DataSplit {
    pub fn side(&self, side: Side) -> &[Document] {
        match side {
            Side::Train => &self.train,
            Side::Test => &self.test,
        }
    }
}

/// Deterministic stratified split: per class, a seeded shuffle marks
/// round(ratio × class size) documents for the test side; document order
/// within each side follows the corpus.
pub fn split(corpus: &Corpus, test_ratio: f64, seed: u64) -> Result<DataSplit> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::Domain(format!(
            "test_ratio {test_ratio} outside (0, 1)"
        )));
    }
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, doc) in corpus.documents.iter().enumerate() {
        by_class.entry(doc.label.key()).or_default().push(idx);
    }
    let mut in_test = vec![false; corpus.len()];
    for (class, indices) in &by_class {
        let mut shuffled = indices.clone();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(derive_seed(
            seed,
            &format!("split/{class}"),
        ));
        shuffled.shuffle(&mut rng);
        let n_test = (test_ratio * indices.len() as f64).round() as usize;
        for &idx in shuffled.iter().take(n_test) {
            in_test[idx] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (idx, doc) in corpus.documents.iter().enumerate() {
        if in_test[idx] {
            test.push(doc.clone());
        } else {
            train.push(doc.clone());
        }
    }
    Ok(DataSplit {
        train,
        test,
        provenance: SplitProvenance { seed, test_ratio },
    })
}

/// Appends augmented samples to one side of a split as positive documents.
/// Every sample must stem from a document on that side (no leakage across
/// the partition). When `aug_token` is set, each sample text is prefixed
/// with the marker plus a space; the marker is data, not vocabulary.
pub fn mix_augmented(
    split: &DataSplit,
    samples: &[AugmentedSample],
    side: Side,
    aug_token: Option<&str>,
) -> Result<DataSplit> {
    let chosen: BTreeMap<&str, &Document> = split
        .side(side)
        .iter()
        .map(|d| (d.id.as_str(), d))
        .collect();
    let other_side = match side {
        Side::Train => Side::Test,
        Side::Test => Side::Train,
    };
    let other: BTreeSet<&str> = split
        .side(other_side)
        .iter()
        .map(|d| d.id.as_str())
        .collect();
    let mut appended = Vec::with_capacity(samples.len());
    for sample in samples {
        let source = match chosen.get(sample.source_id.as_str()) {
            Some(doc) => doc,
            None if other.contains(sample.source_id.as_str()) => {
                return Err(Error::Leakage {
                    source_id: sample.source_id.clone(),
                    side: side.to_string(),
                })
            }
            None => {
                return Err(Error::Lineage {
                    source_id: sample.source_id.clone(),
                })
            }
        };
        let text = match aug_token {
            Some(marker) => format!("{} {}", marker, sample.text),
            None => sample.text.clone(),
        };
        appended.push(Document {
            id: format!(
                "{}/aug/{}/{}",
                sample.source_id, sample.generator, sample.rank
            ),
            text,
            label: Label::Binary(1),
            source: source.source.clone(),
        });
    }
    let mut out = split.clone();
    match side {
        Side::Train => out.train.extend(appended),
        Side::Test => out.test.extend(appended),
    }
    let mut ids = BTreeSet::new();
    for doc in out.train.iter().chain(out.test.iter()) {
        if !ids.insert(doc.id.as_str()) {
            return Err(Error::Domain(format!(
                "duplicate document id {:?} after mixing",
                doc.id
            )));
        }
    }
    Ok(out)
}
