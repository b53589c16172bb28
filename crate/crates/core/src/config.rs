//! Declarative experiment configuration.
//!
//! Experiments are described by a TOML file with five sections: `[experiment]`
//! (run identity, seeds, output directory), `[substitute]` (the reserved
//! corpus and selector used to score token toxicity), `[[corpora]]` (the
//! evaluation corpora), `[[generators]]` (the augmentation roster), and
//! optional `[classifiers]` / `[finetune]` tuning blocks.  Parsing is strict:
//! unknown keys are rejected so typos fail loudly instead of silently falling
//! back to defaults.
//!
//! A parsed [`ExperimentConfig`] is validated structurally up front
//! ([`ExperimentConfig::validate`]) and hashed ([`ExperimentConfig::hash`])
//! so result files can be tied back to the exact configuration that produced
//! them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::FinetuneConfig;
use crate::corpus::is_substitute_reserved;
use crate::error::{Error, Result};

/// Top-level experiment description, normally loaded from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub substitute: SubstituteSection,
    #[serde(default)]
    pub corpora: Vec<CorpusEntry>,
    #[serde(default)]
    pub generators: Vec<GeneratorEntry>,
    #[serde(default)]
    pub classifiers: ClassifierSection,
    #[serde(default)]
    pub finetune: FinetuneConfig,
}

/// Run identity and global knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Human-readable run name; appears in manifests and reports.
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Base seed for single-seed commands and the root of derived seeds.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Number of repetitions for the multi-seed robustness run.
    #[serde(default = "default_seed_count")]
    pub seeds: usize,
    #[serde(default = "default_test_ratio")]
    pub test_ratio: f64,
    /// Optional marker token prefixed onto augmented training texts.
    #[serde(default)]
    pub aug_token: Option<String>,
    /// Backend used for encoder-similarity scoring in consistency reports.
    #[serde(default = "default_scorer_backend")]
    pub scorer_backend: String,
    /// Directory of synonym-dictionary fixture files, if available.
    #[serde(default)]
    pub wordnet_dir: Option<PathBuf>,
}

/// Substitute-classifier training source and target-selection knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstituteSection {
    /// Path to the reserved corpus used only for substitute training.
    pub corpus: PathBuf,
    #[serde(default)]
    pub selector: SelectorKind,
    /// Backend specification, required when `selector = "toxicity"`.
    #[serde(default)]
    pub backend: Option<String>,
    /// Omission-score threshold for target selection.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

/// Which scorer drives omission-based target selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    /// Gaussian naive-Bayes substitute classifier over tf·idf vectors.
    #[default]
    Nb,
    /// Backend toxicity scores.
    Toxicity,
}

/// One evaluation corpus.  The corpus name is the file stem.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub path: PathBuf,
    /// Raw-label binarization rules, e.g. `{ "yes" = 1, "no" = 0 }`.
    /// Absent means labels are already 0/1.
    #[serde(default)]
    pub labels: Option<BTreeMap<String, u8>>,
}

/// One augmentation generator in the roster.
///
/// Only the knobs that apply to the entry's `kind` may be set; anything else
/// is rejected during validation so a misplaced option cannot be silently
/// ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    /// Unique roster identifier; used in filenames and report columns.
    pub id: String,
    pub kind: GeneratorKind,
    /// Backend specification (masked-lm and prompt-gen only).
    #[serde(default)]
    pub backend: Option<String>,
    /// Candidates requested per target position (masked-lm).
    #[serde(default)]
    pub k: Option<usize>,
    /// Embedding-dropout probability (masked-lm).
    #[serde(default)]
    pub dropout: Option<f64>,
    /// Cap on samples per document, at most 5 (masked-lm).
    #[serde(default)]
    pub max_samples: Option<usize>,
    /// Synonym-replacement rate (eda).
    #[serde(default)]
    pub sr_rate: Option<f64>,
    /// Random-insertion rate (eda).
    #[serde(default)]
    pub ri_rate: Option<f64>,
    /// Random-swap rate (eda).
    #[serde(default)]
    pub rs_rate: Option<f64>,
    /// Random-deletion probability (eda).
    #[serde(default)]
    pub rd_rate: Option<f64>,
    /// Samples generated per document, at most 5 (eda).
    #[serde(default)]
    pub n_aug: Option<usize>,
    /// Prompt truncation budget in backend tokens (prompt-gen).
    #[serde(default)]
    pub max_prompt_tokens: Option<usize>,
    /// Continuation budget in backend tokens (prompt-gen).
    #[serde(default)]
    pub max_new_tokens: Option<usize>,
}

/// Augmentation families supported by the roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Word-level lexical substitution driven by a masked language model.
    MaskedLm,
    /// Easy-data-augmentation edit operations.
    Eda,
    /// Free-form paraphrase continuation from a generative backend.
    PromptGen,
}

impl GeneratorKind {
    fn label(self) -> &'static str {
        match self {
            GeneratorKind::MaskedLm => "masked-lm",
            GeneratorKind::Eda => "eda",
            GeneratorKind::PromptGen => "prompt-gen",
        }
    }
}

/// Classifier families to evaluate, plus the linear hyperparameter grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub linear: bool,
    pub toy_encoder: bool,
    /// Regularization grid; absent means the built-in default grid.
    pub c_values: Option<Vec<f64>>,
    /// Class-weighting grid; absent means both settings.
    pub balanced: Option<Vec<bool>>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            linear: true,
            toy_encoder: true,
            c_values: None,
            balanced: None,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    42
}

fn default_seed_count() -> usize {
    5
}

fn default_test_ratio() -> f64 {
    0.1
}

fn default_scorer_backend() -> String {
    "stub".to_string()
}

fn default_cutoff() -> f64 {
    0.005
}

/// Parsed form of a backend specification string.
///
/// Accepted spellings: `"stub"`, `"stub:FLAVOR"`, and `"exec:COMMAND..."`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    /// Built-in deterministic stub, with an optional vocabulary flavor.
    Stub(Option<String>),
    /// External process speaking the line protocol over stdio.
    Exec(String),
}

impl BackendSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        if spec == "stub" {
            return Ok(BackendSpec::Stub(None));
        }
        if let Some(flavor) = spec.strip_prefix("stub:") {
            if flavor.is_empty() {
                return Err(Error::Config(format!(
                    "backend spec {spec:?}: empty stub flavor"
                )));
            }
            return Ok(BackendSpec::Stub(Some(flavor.to_string())));
        }
        if let Some(command) = spec.strip_prefix("exec:") {
            if command.trim().is_empty() {
                return Err(Error::Config(format!(
                    "backend spec {spec:?}: empty command"
                )));
            }
            return Ok(BackendSpec::Exec(command.to_string()));
        }
        Err(Error::Config(format!(
            "backend spec {spec:?}: expected \"stub\", \"stub:FLAVOR\", or \"exec:COMMAND\""
        )))
    }
}

/// Corpus name derived from a path, mirroring how loading names corpora.
pub fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl ExperimentConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("failed to parse config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Read, parse, and validate a TOML file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// First 16 hex characters of the SHA-256 of the canonical JSON form.
    /// Digest of every field that influences results.  The output directory
    /// is excluded: redirecting artifacts must not invalidate caches or
    /// change report identity.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.experiment.out_dir = PathBuf::new();
        let json = serde_json::to_string(&keyed).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Apply command-line overrides.  `backend` replaces every backend
    /// specification in the config: generator backends, the substitute
    /// selector backend (when one is configured), and the scorer backend.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        out_dir: Option<PathBuf>,
        backend: Option<&str>,
    ) {
        if let Some(seed) = seed {
            self.experiment.seed = seed;
        }
        if let Some(out_dir) = out_dir {
            self.experiment.out_dir = out_dir;
        }
        if let Some(spec) = backend {
            self.experiment.scorer_backend = spec.to_string();
            if self.substitute.backend.is_some() {
                self.substitute.backend = Some(spec.to_string());
            }
            for entry in &mut self.generators {
                if entry.backend.is_some() || entry.kind != GeneratorKind::Eda {
                    entry.backend = Some(spec.to_string());
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let exp = &self.experiment;
        if exp.name.trim().is_empty() {
            return Err(Error::Config("experiment name must be non-empty".into()));
        }
        if exp.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if !exp.test_ratio.is_finite() || exp.test_ratio <= 0.0 || exp.test_ratio >= 1.0 {
            return Err(Error::Config(format!(
                "test_ratio must lie strictly between 0 and 1, got {}",
                exp.test_ratio
            )));
        }
        BackendSpec::parse(&exp.scorer_backend)?;

        let sub = &self.substitute;
        if !sub.cutoff.is_finite() || sub.cutoff < 0.0 {
            return Err(Error::Config(format!(
                "cutoff must be a non-negative finite number, got {}",
                sub.cutoff
            )));
        }
        match (&sub.selector, &sub.backend) {
            (SelectorKind::Toxicity, None) => {
                return Err(Error::Config(
                    "selector \"toxicity\" requires a substitute backend".into(),
                ));
            }
            (_, Some(spec)) => {
                BackendSpec::parse(spec)?;
            }
            _ => {}
        }

        if self.corpora.is_empty() {
            return Err(Error::Config("at least one corpus is required".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for entry in &self.corpora {
            let name = corpus_name(&entry.path);
            if name.is_empty() {
                return Err(Error::Config(format!(
                    "corpus path {:?} has no file stem",
                    entry.path
                )));
            }
            if is_substitute_reserved(&name) {
                return Err(Error::Config(format!(
                    "corpus {name:?} is reserved for substitute training; list it under [substitute]"
                )));
            }
            if entry.path == sub.corpus {
                return Err(Error::Config(format!(
                    "corpus {name:?} is also the substitute corpus"
                )));
            }
            if !names.insert(name.clone()) {
                return Err(Error::Config(format!("duplicate corpus name {name:?}")));
            }
            if let Some(rules) = &entry.labels {
                for (raw, bit) in rules {
                    if *bit > 1 {
                        return Err(Error::Config(format!(
                            "corpus {name:?}: label rule {raw:?} maps to {bit}, expected 0 or 1"
                        )));
                    }
                }
            }
        }

        let mut ids = std::collections::BTreeSet::new();
        for entry in &self.generators {
            entry.validate()?;
            if !ids.insert(entry.id.clone()) {
                return Err(Error::Config(format!(
                    "duplicate generator id {:?}",
                    entry.id
                )));
            }
        }

        let cls = &self.classifiers;
        if !cls.linear && !cls.toy_encoder {
            return Err(Error::Config(
                "at least one classifier family must be enabled".into(),
            ));
        }
        if let Some(c_values) = &cls.c_values {
            if c_values.is_empty() {
                return Err(Error::Config("c_values must be non-empty".into()));
            }
            for &c in c_values {
                if !c.is_finite() || c <= 0.0 {
                    return Err(Error::Config(format!(
                        "c_values entries must be positive and finite, got {c}"
                    )));
                }
            }
        }
        if let Some(balanced) = &cls.balanced {
            if balanced.is_empty() {
                return Err(Error::Config("balanced grid must be non-empty".into()));
            }
        }

        let ft = &self.finetune;
        if ft.batch_size == 0 {
            return Err(Error::Config("finetune batch_size must be at least 1".into()));
        }
        if !ft.learning_rate.is_finite() || ft.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "finetune learning_rate must be positive, got {}",
                ft.learning_rate
            )));
        }
        if ft.max_sequence_length == 0 {
            return Err(Error::Config(
                "finetune max_sequence_length must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl GeneratorEntry {
    fn validate(&self) -> Result<()> {
        let id = self.id.trim();
        if id.is_empty() {
            return Err(Error::Config("generator id must be non-empty".into()));
        }
        if id != self.id
            || !id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(Error::Config(format!(
                "generator id {:?} may only contain ascii letters, digits, '-', '_', '.'",
                self.id
            )));
        }
        if id == "plain" {
            return Err(Error::Config(
                "generator id \"plain\" is reserved for the unaugmented baseline".into(),
            ));
        }

        // Reject knobs that do not apply to this kind; a misplaced option is
        // almost always a configuration mistake.
        let knobs: [(&str, bool, &[GeneratorKind]); 10] = [
            ("backend", self.backend.is_some(), &[GeneratorKind::MaskedLm, GeneratorKind::PromptGen]),
            ("k", self.k.is_some(), &[GeneratorKind::MaskedLm]),
            ("dropout", self.dropout.is_some(), &[GeneratorKind::MaskedLm]),
            ("max_samples", self.max_samples.is_some(), &[GeneratorKind::MaskedLm]),
            ("sr_rate", self.sr_rate.is_some(), &[GeneratorKind::Eda]),
            ("ri_rate", self.ri_rate.is_some(), &[GeneratorKind::Eda]),
            ("rs_rate", self.rs_rate.is_some(), &[GeneratorKind::Eda]),
            ("rd_rate", self.rd_rate.is_some(), &[GeneratorKind::Eda]),
            ("n_aug", self.n_aug.is_some(), &[GeneratorKind::Eda]),
            (
                "max_prompt_tokens",
                self.max_prompt_tokens.is_some(),
                &[GeneratorKind::PromptGen],
            ),
        ];
        for (name, set, kinds) in knobs {
            if set && !kinds.contains(&self.kind) {
                return Err(Error::Config(format!(
                    "generator {:?}: option {name:?} does not apply to kind {:?}",
                    self.id,
                    self.kind.label()
                )));
            }
        }
        if self.max_new_tokens.is_some() && self.kind != GeneratorKind::PromptGen {
            return Err(Error::Config(format!(
                "generator {:?}: option \"max_new_tokens\" does not apply to kind {:?}",
                self.id,
                self.kind.label()
            )));
        }

        match self.kind {
            GeneratorKind::MaskedLm | GeneratorKind::PromptGen => {
                let spec = self.backend.as_deref().ok_or_else(|| {
                    Error::Config(format!(
                        "generator {:?}: kind {:?} requires a backend",
                        self.id,
                        self.kind.label()
                    ))
                })?;
                BackendSpec::parse(spec)?;
            }
            GeneratorKind::Eda => {}
        }

        if let Some(k) = self.k {
            if k == 0 {
                return Err(Error::Config(format!(
                    "generator {:?}: k must be at least 1",
                    self.id
                )));
            }
        }
        if let Some(p) = self.dropout {
            if !p.is_finite() || !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "generator {:?}: dropout must lie in [0, 1), got {p}",
                    self.id
                )));
            }
        }
        for (name, value) in [("max_samples", self.max_samples), ("n_aug", self.n_aug)] {
            if let Some(n) = value {
                if n == 0 || n > 5 {
                    return Err(Error::Config(format!(
                        "generator {:?}: {name} must lie in 1..=5, got {n}",
                        self.id
                    )));
                }
            }
        }
        for (name, value) in [
            ("sr_rate", self.sr_rate),
            ("ri_rate", self.ri_rate),
            ("rs_rate", self.rs_rate),
            ("rd_rate", self.rd_rate),
        ] {
            if let Some(rate) = value {
                if !rate.is_finite() || !(0.0..=1.0).contains(&rate) {
                    return Err(Error::Config(format!(
                        "generator {:?}: {name} must lie in [0, 1], got {rate}",
                        self.id
                    )));
                }
            }
        }
        for (name, value) in [
            ("max_prompt_tokens", self.max_prompt_tokens),
            ("max_new_tokens", self.max_new_tokens),
        ] {
            if let Some(n) = value {
                if n == 0 {
                    return Err(Error::Config(format!(
                        "generator {:?}: {name} must be at least 1",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}
