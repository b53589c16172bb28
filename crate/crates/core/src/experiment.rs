//! Experiment orchestration.
//!
//! Turns an [`ExperimentConfig`](crate::config::ExperimentConfig) into
//! artifacts: corpus statistics, augmentation sample files, persisted model
//! bundles, and the three robustness reports (lexical-variation, augmented
//! retraining, and the transfer matrix).
//!
//! Every command writes a `manifest-<command>.json` into the output directory
//! *before* any result file, recording the config hash, backend roster, seed
//! list, and per-stage timings.  Reports embed the same config hash so a
//! result file can always be tied back to its manifest.  Manifests carry
//! wall-clock timings and are therefore not byte-reproducible; every other
//! artifact is, given the same config and seed.
//!
//! Intermediate artifacts (samples, linear model bundles) are cached under
//! `<out_dir>/cache/<config-hash>/`, so later commands reuse earlier work:
//! the augmented-retraining and transfer runs pick up the sample files the
//! lexical-variation run generated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::stub::StubBackend;
use crate::backend::wire::RemoteBackend;
use crate::backend::Backend;
use crate::baselines::{eda_augment, prompt_augment, EdaConfig, PromptConfig};
use crate::classify::{
    finetune, finetune_incremental, train_linear, Classifier, HyperGrid, LinearModel,
    ToyEncoderClassifier,
};
use crate::config::{
    BackendSpec, ClassifierSection, ExperimentConfig, GeneratorEntry, GeneratorKind, SelectorKind,
};
use crate::corpus::{
    compute_stats, load_corpus, merge_corpora, mix_augmented, split, stats_tsv, Corpus,
    CorpusFormat, CorpusRole, DataSplit, Document, LabelRule, Side,
};
use crate::error::{Error, Result};
use crate::metrics::{
    consistency_report, delta_tpr_matrix, f1, tpr, ConsistencyReport, DeltaTprMatrix,
    EncoderScorer, MeteorParams,
};
use crate::selector::{
    omission_scores, select_targets, train_substitute, SubstituteClassifier,
    ToxicitySelector,
};
use crate::substitution::{
    build_plan, rollout, samples_from_jsonl, samples_to_jsonl, AugmentedSample, GenerationConfig,
};
use crate::text::derive_seed;
use crate::wordnet::WordNet;
use crate::Scalar;

/// Instantiates a backend from its specification string.
pub fn make_backend<F: Scalar>(spec: &str) -> Result<Box<dyn Backend<F>>> {
    Ok(match BackendSpec::parse(spec)? {
        BackendSpec::Stub(None) => Box::new(StubBackend::new()),
        BackendSpec::Stub(Some(flavor)) => Box::new(StubBackend::with_flavor(Some(&flavor))),
        BackendSpec::Exec(command) => Box::new(RemoteBackend::spawn(&command)?),
    })
}

/// Provenance record written before a command's results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub experiment: String,
    pub config_hash: String,
    pub toolkit_version: String,
    /// Seeds the command actually used, in use order.
    pub seeds: Vec<u64>,
    /// Backend specification per role: `scorer`, `substitute`, and one
    /// `generator/<id>` entry per roster member (`-` when none applies).
    pub backends: BTreeMap<String, String>,
    /// Wall-clock seconds per completed stage.
    pub stage_seconds: BTreeMap<String, f64>,
}

/// One evaluation corpus with its deterministic train/test split.
#[derive(Debug, Clone)]
pub struct Unit {
    pub name: String,
    pub corpus: Corpus,
    pub data: DataSplit,
}

/// Shared state behind all experiment commands: loaded corpora and splits,
/// the trained substitute scorer, the synonym dictionary, and stage timings.
pub struct Workspace<F: Scalar> {
    pub cfg: ExperimentConfig,
    pub hash: String,
    /// Per-corpus units in config order, followed by the merged unit when
    /// more than one corpus is configured.
    pub units: Vec<Unit>,
    pub substitute_corpus: Corpus,
    pub substitute: Option<SubstituteClassifier<F>>,
    pub wordnet: WordNet,
    stage_seconds: BTreeMap<String, f64>,
}

impl<F: Scalar> Workspace<F> {
    /// Loads corpora, builds splits, and (when the roster or `force_substitute`
    /// demands it) trains the substitute classifier.
    pub fn build(cfg: &ExperimentConfig, force_substitute: bool) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let hash = cfg.hash();
        let mut stage_seconds = BTreeMap::new();

        let started = Instant::now();
        let mut corpora = Vec::new();
        for entry in &cfg.corpora {
            let format = CorpusFormat::from_path(&entry.path)?;
            let corpus = load_corpus(&entry.path, format)?;
            let rule = match &entry.labels {
                Some(pairs) => {
                    LabelRule::from_pairs(pairs.iter().map(|(k, v)| (k.clone(), *v)))
                }
                None => LabelRule::identity(),
            };
            corpora.push(crate::corpus::binarize_labels(&corpus, &rule)?);
        }
        let seed = cfg.experiment.seed;
        let ratio = cfg.experiment.test_ratio;
        let mut units = Vec::new();
        for corpus in &corpora {
            units.push(Unit {
                name: corpus.name.clone(),
                data: split(corpus, ratio, seed)?,
                corpus: corpus.clone(),
            });
        }
        if corpora.len() > 1 {
            let merged = merge_corpora(&corpora)?;
            units.push(Unit {
                name: merged.name.clone(),
                data: split(&merged, ratio, seed)?,
                corpus: merged,
            });
        }
        let format = CorpusFormat::from_path(&cfg.substitute.corpus)?;
        let loaded = load_corpus(&cfg.substitute.corpus, format)?;
        let substitute_corpus = if loaded.role == CorpusRole::SubstituteTraining {
            loaded
        } else {
            // Listing a corpus under [substitute] reserves it regardless of
            // its file name.
            Corpus::new(
                loaded.name.clone(),
                CorpusRole::SubstituteTraining,
                loaded.documents,
            )?
        };
        stage_seconds.insert(
            "load-corpora".to_string(),
            started.elapsed().as_secs_f64(),
        );

        let needs_masked_lm = cfg
            .generators
            .iter()
            .any(|g| g.kind == GeneratorKind::MaskedLm);
        let substitute = if cfg.substitute.selector == SelectorKind::Nb
            && (needs_masked_lm || force_substitute)
        {
            let started = Instant::now();
            let binarized =
                crate::corpus::binarize_labels(&substitute_corpus, &LabelRule::identity())?;
            let trained = train_substitute::<F>(&binarized)?;
            stage_seconds.insert(
                "train-substitute".to_string(),
                started.elapsed().as_secs_f64(),
            );
            Some(trained)
        } else {
            None
        };

        let wordnet = match &cfg.experiment.wordnet_dir {
            Some(dir) => WordNet::load(dir)?,
            None => WordNet::default(),
        };

        Ok(Workspace {
            cfg,
            hash,
            units,
            substitute_corpus,
            substitute,
            wordnet,
            stage_seconds,
        })
    }

    fn record_stage(&mut self, name: &str, started: Instant) {
        self.stage_seconds
            .insert(name.to_string(), started.elapsed().as_secs_f64());
    }

    fn cache_dir(&self) -> PathBuf {
        self.cfg.experiment.out_dir.join("cache").join(&self.hash)
    }

    fn sample_path(&self, unit: &str, side: Side, generator: &str) -> PathBuf {
        self.cache_dir()
            .join(format!("samples-{unit}-{side}-{generator}.jsonl"))
    }

    /// Samples for one (unit, side, generator) cell: read from the cache
    /// when present, generated and cached otherwise.  `force` regenerates
    /// unconditionally (the augment command's path), which must produce
    /// byte-identical files under a fixed seed.
    pub fn samples(
        &mut self,
        unit_idx: usize,
        side: Side,
        entry: &GeneratorEntry,
        force: bool,
    ) -> Result<Vec<AugmentedSample>> {
        let path = self.sample_path(&self.units[unit_idx].name, side, &entry.id);
        if !force && path.exists() {
            let data = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            return samples_from_jsonl(&data);
        }
        let scope = format!(
            "samples/{}/{}/{}",
            self.units[unit_idx].name, side, entry.id
        );
        let seed = derive_seed(self.cfg.experiment.seed, &scope);
        let positives: Vec<Document> = self.units[unit_idx]
            .data
            .side(side)
            .iter()
            .filter(|d| d.label.is_positive())
            .cloned()
            .collect();
        let refs: Vec<&Document> = positives.iter().collect();
        let samples = generate_for_entry(
            entry,
            &refs,
            &self.cfg,
            self.substitute.as_mut(),
            &self.wordnet,
            seed,
        )?;
        write_text(&path, &samples_to_jsonl(&samples))?;
        Ok(samples)
    }

    /// Linear model for one (unit, seed, augmenter) cell, cached as a JSON
    /// bundle.  `augmenter = None` is the plain model; otherwise training
    /// data is the split with that generator's samples mixed into the train
    /// side.
    pub fn linear_model(
        &mut self,
        unit_idx: usize,
        seed: u64,
        augmenter: Option<&GeneratorEntry>,
    ) -> Result<LinearModel<F>> {
        let unit_name = self.units[unit_idx].name.clone();
        let file = match augmenter {
            None => format!("linear-{unit_name}-{seed}.json"),
            Some(entry) => format!("linear-{unit_name}-{seed}-aug-{}.json", entry.id),
        };
        let path = self.cache_dir().join(file);
        if path.exists() {
            let data = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            return LinearModel::from_json(&data);
        }
        let data = match augmenter {
            None => self.units[unit_idx].data.clone(),
            Some(entry) => {
                let samples = self.samples(unit_idx, Side::Train, entry, false)?;
                mix_augmented(
                    &self.units[unit_idx].data,
                    &samples,
                    Side::Train,
                    self.cfg.experiment.aug_token.as_deref(),
                )?
            }
        };
        let grid = hyper_grid::<F>(&self.cfg.classifiers);
        let model = train_linear(&data, &grid, seed)?;
        write_text(&path, &model.to_json())?;
        Ok(model)
    }

    /// Writes `manifest-<command>.json` into the output directory.  Called
    /// after computation but before any result file.
    pub fn write_manifest(&self, command: &str, seeds: &[u64]) -> Result<PathBuf> {
        let mut backends = BTreeMap::new();
        backends.insert(
            "scorer".to_string(),
            self.cfg.experiment.scorer_backend.clone(),
        );
        backends.insert(
            "substitute".to_string(),
            self.cfg
                .substitute
                .backend
                .clone()
                .unwrap_or_else(|| "nb".to_string()),
        );
        for entry in &self.cfg.generators {
            backends.insert(
                format!("generator/{}", entry.id),
                entry.backend.clone().unwrap_or_else(|| "-".to_string()),
            );
        }
        let manifest = RunManifest {
            command: command.to_string(),
            experiment: self.cfg.experiment.name.clone(),
            config_hash: self.hash.clone(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: seeds.to_vec(),
            backends,
            stage_seconds: self.stage_seconds.clone(),
        };
        let path = self
            .cfg
            .experiment
            .out_dir
            .join(format!("manifest-{command}.json"));
        write_text(&path, &to_pretty_json(&manifest))?;
        Ok(path)
    }
}

/// Omission scorer behind masked-LM generation: either the trained
/// substitute classifier or backend toxicity scores.
enum Scorer<'a, F: Scalar> {
    Nb(&'a mut SubstituteClassifier<F>),
    Toxicity(Box<dyn Backend<F>>),
}

impl<F: Scalar> Scorer<'_, F> {
    fn omission(&mut self, doc: &Document) -> Result<Vec<(usize, F)>> {
        match self {
            Scorer::Nb(nb) => omission_scores(doc, &mut **nb),
            Scorer::Toxicity(backend) => {
                let mut selector = ToxicitySelector::new(backend.as_mut());
                omission_scores(doc, &mut selector)
            }
        }
    }
}

fn stage_err(stage: &str, doc: &str, source: Error) -> Error {
    Error::Stage {
        stage: stage.to_string(),
        doc: doc.to_string(),
        source: Box::new(source),
    }
}

/// Runs one roster entry over the given positive documents.  Samples come
/// back tagged with the roster id, regardless of which engine produced them.
fn generate_for_entry<F: Scalar>(
    entry: &GeneratorEntry,
    positives: &[&Document],
    cfg: &ExperimentConfig,
    nb: Option<&mut SubstituteClassifier<F>>,
    wordnet: &WordNet,
    seed: u64,
) -> Result<Vec<AugmentedSample>> {
    let mut samples = Vec::new();
    match entry.kind {
        GeneratorKind::MaskedLm => {
            let spec = entry
                .backend
                .as_deref()
                .ok_or_else(|| Error::Config(format!("generator {:?} has no backend", entry.id)))?;
            let mut backend = make_backend::<F>(spec)?;
            let mut scorer = match cfg.substitute.selector {
                SelectorKind::Nb => Scorer::Nb(nb.ok_or_else(|| {
                    Error::Config("substitute classifier unavailable for masked-lm generation".into())
                })?),
                SelectorKind::Toxicity => {
                    let spec = cfg.substitute.backend.as_deref().ok_or_else(|| {
                        Error::Config("toxicity selector requires a substitute backend".into())
                    })?;
                    Scorer::Toxicity(make_backend::<F>(spec)?)
                }
            };
            let defaults = GenerationConfig::default();
            let gen_cfg = GenerationConfig {
                dropout_p: entry.dropout.unwrap_or(defaults.dropout_p),
                k: entry.k.unwrap_or(defaults.k),
                cutoff: cfg.substitute.cutoff,
                max_samples: entry.max_samples.unwrap_or(defaults.max_samples),
                seed,
            };
            let cutoff = F::from_f64(cfg.substitute.cutoff).unwrap();
            for doc in positives {
                let scores = scorer
                    .omission(doc)
                    .map_err(|e| stage_err("omission-scores", &doc.id, e))?;
                let selection = select_targets(doc, &scores, cutoff)
                    .map_err(|e| stage_err("target-selection", &doc.id, e))?;
                if selection.entries.is_empty() {
                    continue;
                }
                let plan = build_plan(doc, &selection, backend.as_mut(), &gen_cfg)
                    .map_err(|e| stage_err("candidate-generation", &doc.id, e))?;
                samples.extend(rollout(doc, &plan, gen_cfg.max_samples, &entry.id));
            }
        }
        GeneratorKind::Eda => {
            let defaults = EdaConfig::default();
            let eda_cfg = EdaConfig {
                sr_rate: entry.sr_rate.unwrap_or(defaults.sr_rate),
                ri_rate: entry.ri_rate.unwrap_or(defaults.ri_rate),
                rs_rate: entry.rs_rate.unwrap_or(defaults.rs_rate),
                rd_rate: entry.rd_rate.unwrap_or(defaults.rd_rate),
                n_aug: entry.n_aug.unwrap_or(defaults.n_aug),
                seed,
            };
            for doc in positives {
                let out = eda_augment(doc, wordnet, &eda_cfg)
                    .map_err(|e| stage_err("eda", &doc.id, e))?;
                samples.extend(out);
            }
        }
        GeneratorKind::PromptGen => {
            let spec = entry
                .backend
                .as_deref()
                .ok_or_else(|| Error::Config(format!("generator {:?} has no backend", entry.id)))?;
            let mut backend = make_backend::<F>(spec)?;
            let defaults = PromptConfig::default();
            let prompt_cfg = PromptConfig {
                max_prompt_tokens: entry.max_prompt_tokens.unwrap_or(defaults.max_prompt_tokens),
                max_new_tokens: entry.max_new_tokens.unwrap_or(defaults.max_new_tokens),
                seed,
            };
            for doc in positives {
                let outcome = prompt_augment(doc, backend.as_mut(), &prompt_cfg)
                    .map_err(|e| stage_err("prompt-generation", &doc.id, e))?;
                samples.push(outcome.sample);
            }
        }
    }
    for sample in &mut samples {
        sample.generator = entry.id.clone();
    }
    Ok(samples)
}

/// Replaces each document's text with its best-ranked sample from the given
/// generator.  Documents without a usable sample (none generated, or the
/// sample text is empty) pass through unchanged; ids and labels are always
/// preserved so downstream alignment by id keeps working.
pub fn perturbed_docs(
    original: &[Document],
    samples: &[AugmentedSample],
    generator: &str,
) -> Vec<Document> {
    let mut best: BTreeMap<&str, &AugmentedSample> = BTreeMap::new();
    for sample in samples {
        best.entry(sample.source_id.as_str())
            .and_modify(|held| {
                if sample.rank < held.rank {
                    *held = sample;
                }
            })
            .or_insert(sample);
    }
    original
        .iter()
        .map(|doc| match best.get(doc.id.as_str()) {
            Some(sample) if !sample.text.trim().is_empty() => Document {
                id: doc.id.clone(),
                text: sample.text.clone(),
                label: doc.label.clone(),
                source: format!("aug/{generator}"),
            },
            _ => doc.clone(),
        })
        .collect()
}

fn hyper_grid<F: Scalar>(cls: &ClassifierSection) -> HyperGrid<F> {
    let mut grid = HyperGrid::default();
    if let Some(c_values) = &cls.c_values {
        grid.c_values = c_values
            .iter()
            .map(|&c| F::from_f64(c).unwrap())
            .collect();
    }
    if let Some(balanced) = &cls.balanced {
        grid.balanced = balanced.clone();
    }
    grid
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report serializes");
    out.push('\n');
    out
}

fn mean_sd<F: Scalar>(values: &[F]) -> (F, F) {
    let n = F::from_usize(values.len()).unwrap();
    let mean = values.iter().copied().sum::<F>() / n;
    let var = values
        .iter()
        .map(|v| (*v - mean) * (*v - mean))
        .sum::<F>()
        / n;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One corpus × generator cell of the lexical-variation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct E1Row<F: Scalar> {
    pub corpus: String,
    /// `"plain"` for the unperturbed baseline, else the roster id.
    pub generator: String,
    pub n_samples: usize,
    pub f1: F,
    pub tpr: F,
    pub tpr_drop: F,
}

/// Lexical-variation report: the plain classifier evaluated on each
/// generator's perturbed test set, plus semantic-consistency distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct E1Report<F: Scalar> {
    pub config_hash: String,
    pub rows: Vec<E1Row<F>>,
    pub consistency: ConsistencyReport<F>,
}

impl<F: Scalar> E1Report<F> {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("corpus\tgenerator\tn_samples\tf1\ttpr\ttpr_drop\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:+.6}\n",
                row.corpus, row.generator, row.n_samples, row.f1, row.tpr, row.tpr_drop
            ));
        }
        out
    }

    /// Consistency distributions as a flat table, two rows per generator.
    pub fn consistency_tsv(&self) -> String {
        let mut out = String::from(
            "generator\tmetric\tn\tmin\tq1\tmedian\tq3\tmax\tmean\n",
        );
        for (generator, entry) in &self.consistency.per_generator {
            for (metric, d) in [
                ("token-overlap", &entry.token_overlap),
                ("encoder-similarity", &entry.encoder_similarity),
            ] {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                    generator, metric, d.n, d.min, d.q1, d.median, d.q3, d.max, d.mean
                ));
            }
        }
        out
    }
}

/// One corpus × classifier × augmenter cell of the retraining report,
/// aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct E2Row<F: Scalar> {
    pub corpus: String,
    pub classifier: String,
    /// `"plain"` for no augmentation, else the roster id.
    pub augmenter: String,
    pub f1_mean: F,
    pub f1_sd: F,
    pub f1_per_seed: Vec<F>,
}

/// Augmented-retraining report: test F1 of each classifier family retrained
/// with each generator's samples, mean and standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct E2Report<F: Scalar> {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<E2Row<F>>,
}

impl<F: Scalar> E2Report<F> {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("corpus\tclassifier\taugmenter\tf1_mean\tf1_sd\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\n",
                row.corpus, row.classifier, row.augmenter, row.f1_mean, row.f1_sd
            ));
        }
        out
    }
}

/// Transfer report: the ΔTPR matrix over the last (merged) unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct E3Report<F: Scalar> {
    pub config_hash: String,
    pub corpus: String,
    pub matrix: DeltaTprMatrix<F>,
}

/// Result of the augment command: one sample file per (unit, side,
/// generator) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub files: Vec<AugmentFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentFile {
    pub path: PathBuf,
    pub unit: String,
    pub side: String,
    pub generator: String,
    pub samples: usize,
}

/// Result of the train command: persisted model bundles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub models: Vec<PathBuf>,
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Corpus statistics for every configured corpus, the merged corpus, and the
/// substitute corpus.  Returns the table and writes it to `stats.tsv`.
pub fn run_stats<F: Scalar>(cfg: &ExperimentConfig) -> Result<String> {
    let ws: Workspace<F> = Workspace::build(cfg, false)?;
    let mut rows = Vec::new();
    for unit in &ws.units {
        rows.push((unit.name.clone(), compute_stats::<F>(&unit.corpus)?));
    }
    rows.push((
        ws.substitute_corpus.name.clone(),
        compute_stats::<F>(&ws.substitute_corpus)?,
    ));
    let table = stats_tsv(&rows);
    ws.write_manifest("stats", &[cfg.experiment.seed])?;
    write_text(&cfg.experiment.out_dir.join("stats.tsv"), &table)?;
    Ok(table)
}

/// Generates (or regenerates) sample files for every unit and side, filtered
/// to one generator when `only` is given.  Each file is fully buffered before
/// it is written, so a backend failure aborts before any partial write.
pub fn run_augment<F: Scalar>(
    cfg: &ExperimentConfig,
    only: Option<&str>,
) -> Result<AugmentSummary> {
    let mut ws: Workspace<F> = Workspace::build(cfg, false)?;
    let roster: Vec<GeneratorEntry> = match only {
        Some(id) => {
            let entry = cfg
                .generators
                .iter()
                .find(|g| g.id == id)
                .ok_or_else(|| Error::Config(format!("unknown generator {id:?}")))?;
            vec![entry.clone()]
        }
        None => cfg.generators.clone(),
    };
    let started = Instant::now();
    let mut files = Vec::new();
    for unit_idx in 0..ws.units.len() {
        for side in [Side::Train, Side::Test] {
            for entry in &roster {
                let samples = ws.samples(unit_idx, side, entry, true)?;
                files.push(AugmentFile {
                    path: ws.sample_path(&ws.units[unit_idx].name, side, &entry.id),
                    unit: ws.units[unit_idx].name.clone(),
                    side: side.to_string(),
                    generator: entry.id.clone(),
                    samples: samples.len(),
                });
            }
        }
    }
    ws.record_stage("generate-samples", started);
    ws.write_manifest("augment", &[cfg.experiment.seed])?;
    Ok(AugmentSummary { files })
}

/// Trains and persists the substitute classifier (when the selector uses
/// one) and the plain linear model for every unit.
pub fn run_train<F: Scalar>(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let mut ws: Workspace<F> = Workspace::build(cfg, true)?;
    let started = Instant::now();
    let models_dir = cfg.experiment.out_dir.join("models");
    let mut pending: Vec<(PathBuf, String)> = Vec::new();
    if let Some(nb) = &ws.substitute {
        pending.push((models_dir.join("substitute.json"), nb.to_json()));
    }
    for unit_idx in 0..ws.units.len() {
        let model = ws.linear_model(unit_idx, cfg.experiment.seed, None)?;
        let name = &ws.units[unit_idx].name;
        pending.push((models_dir.join(format!("linear-{name}.json")), model.to_json()));
    }
    ws.record_stage("train-models", started);
    ws.write_manifest("train", &[cfg.experiment.seed])?;
    let mut models = Vec::new();
    for (path, bundle) in pending {
        write_text(&path, &bundle)?;
        models.push(path);
    }
    Ok(TrainSummary { models })
}

/// Lexical-variation run: evaluates the plain linear classifier of each unit
/// on every generator's perturbed test set and reports F1, TPR, and the TPR
/// drop against the unperturbed baseline, plus sample-consistency
/// distributions over the last (merged) unit.
pub fn run_e1<F: Scalar>(cfg: &ExperimentConfig) -> Result<E1Report<F>> {
    let mut ws: Workspace<F> = Workspace::build(cfg, false)?;
    let roster = cfg.generators.clone();
    let seed = cfg.experiment.seed;
    let started = Instant::now();
    let mut rows = Vec::new();
    for unit_idx in 0..ws.units.len() {
        let unit_name = ws.units[unit_idx].name.clone();
        let test = ws.units[unit_idx].data.test.clone();
        let model = ws.linear_model(unit_idx, seed, None)?;
        let base_preds = model.predict_docs(&test);
        let base_f1 = f1(&base_preds, &test)?;
        let base_tpr = tpr(&base_preds, &test)?;
        rows.push(E1Row {
            corpus: unit_name.clone(),
            generator: "plain".to_string(),
            n_samples: 0,
            f1: base_f1,
            tpr: base_tpr,
            tpr_drop: F::zero(),
        });
        for entry in &roster {
            let samples = ws.samples(unit_idx, Side::Test, entry, false)?;
            let perturbed = perturbed_docs(&test, &samples, &entry.id);
            let preds = model.predict_docs(&perturbed);
            let perturbed_f1 = f1(&preds, &perturbed)?;
            let perturbed_tpr = tpr(&preds, &perturbed)?;
            rows.push(E1Row {
                corpus: unit_name.clone(),
                generator: entry.id.clone(),
                n_samples: samples.len(),
                f1: perturbed_f1,
                tpr: perturbed_tpr,
                tpr_drop: base_tpr - perturbed_tpr,
            });
        }
    }
    ws.record_stage("evaluate-perturbations", started);

    let started = Instant::now();
    let last = ws.units.len() - 1;
    let mut all_samples = Vec::new();
    for entry in &roster {
        all_samples.extend(ws.samples(last, Side::Test, entry, false)?);
    }
    let sources = ws.units[last].corpus.clone();
    let mut scorer_backend = make_backend::<F>(&cfg.experiment.scorer_backend)?;
    let mut scorer = EncoderScorer {
        backend: scorer_backend.as_mut(),
    };
    let consistency = consistency_report(
        &all_samples,
        &sources,
        &mut scorer,
        &ws.wordnet,
        &MeteorParams::default(),
    )?;
    ws.record_stage("consistency", started);

    ws.write_manifest("e1", &[seed])?;
    let report = E1Report {
        config_hash: ws.hash.clone(),
        rows,
        consistency,
    };
    let out = &cfg.experiment.out_dir;
    write_text(&out.join("e1-report.json"), &to_pretty_json(&report))?;
    write_text(&out.join("e1-report.tsv"), &report.to_tsv())?;
    write_text(&out.join("e1-consistency.tsv"), &report.consistency_tsv())?;
    Ok(report)
}

/// Augmented-retraining run: for every unit and classifier family, retrains
/// with each generator's train-side samples mixed in and reports test F1
/// aggregated over seeds.  The plain backbone of the incremental family is
/// fine-tuned once per (unit, seed) and every augmented variant derives from
/// that same handle.
pub fn run_e2<F: Scalar>(cfg: &ExperimentConfig) -> Result<E2Report<F>> {
    let mut ws: Workspace<F> = Workspace::build(cfg, false)?;
    let seeds: Vec<u64> = (0..cfg.experiment.seeds)
        .map(|i| derive_seed(cfg.experiment.seed, &format!("e2/{i}")))
        .collect();
    let roster = cfg.generators.clone();
    let mut labels: Vec<String> = vec!["plain".to_string()];
    labels.extend(roster.iter().map(|g| g.id.clone()));

    let started = Instant::now();
    let mut rows = Vec::new();
    for unit_idx in 0..ws.units.len() {
        let unit_name = ws.units[unit_idx].name.clone();
        let test = ws.units[unit_idx].data.test.clone();
        let base_split = ws.units[unit_idx].data.clone();
        // A generator with no train-side samples is a no-op augmenter: its
        // column reuses the plain cell instead of retraining on an
        // unchanged split.
        let mut mixed: Vec<(String, DataSplit, bool)> = Vec::new();
        for entry in &roster {
            let samples = ws.samples(unit_idx, Side::Train, entry, false)?;
            let noop = samples.is_empty();
            mixed.push((
                entry.id.clone(),
                mix_augmented(
                    &base_split,
                    &samples,
                    Side::Train,
                    cfg.experiment.aug_token.as_deref(),
                )?,
                noop,
            ));
        }

        if cfg.classifiers.linear {
            let mut per_label: Vec<Vec<F>> = vec![Vec::new(); labels.len()];
            for &seed in &seeds {
                let plain = ws.linear_model(unit_idx, seed, None)?;
                let plain_f1 = f1(&plain.predict_docs(&test), &test)?;
                per_label[0].push(plain_f1);
                for (g, entry) in roster.iter().enumerate() {
                    if mixed[g].2 {
                        per_label[g + 1].push(plain_f1);
                        continue;
                    }
                    let model = ws.linear_model(unit_idx, seed, Some(entry))?;
                    per_label[g + 1].push(f1(&model.predict_docs(&test), &test)?);
                }
            }
            for (label, values) in labels.iter().zip(&per_label) {
                let (f1_mean, f1_sd) = mean_sd(values);
                rows.push(E2Row {
                    corpus: unit_name.clone(),
                    classifier: "linear".to_string(),
                    augmenter: label.clone(),
                    f1_mean,
                    f1_sd,
                    f1_per_seed: values.clone(),
                });
            }
        }

        if cfg.classifiers.toy_encoder {
            let mut per_label: Vec<Vec<F>> = vec![Vec::new(); labels.len()];
            for &seed in &seeds {
                let mut handle =
                    finetune(&base_split, &cfg.finetune, &ToyEncoderClassifier::<F>::new(), seed)?;
                let plain_f1 = f1(&handle.predict(&test)?, &test)?;
                per_label[0].push(plain_f1);
                for (g, (id, data, noop)) in mixed.iter().enumerate() {
                    if *noop {
                        per_label[g + 1].push(plain_f1);
                        continue;
                    }
                    let mut derived = finetune_incremental(&handle, data, id, &cfg.finetune)?;
                    per_label[g + 1].push(f1(&derived.predict(&test)?, &test)?);
                }
            }
            for (label, values) in labels.iter().zip(&per_label) {
                let (f1_mean, f1_sd) = mean_sd(values);
                rows.push(E2Row {
                    corpus: unit_name.clone(),
                    classifier: "toy-encoder".to_string(),
                    augmenter: label.clone(),
                    f1_mean,
                    f1_sd,
                    f1_per_seed: values.clone(),
                });
            }
        }
    }
    ws.record_stage("retrain-evaluate", started);

    ws.write_manifest("e2", &seeds)?;
    let report = E2Report {
        config_hash: ws.hash.clone(),
        seeds,
        rows,
    };
    let out = &cfg.experiment.out_dir;
    write_text(&out.join("e2-report.json"), &to_pretty_json(&report))?;
    write_text(&out.join("e2-report.tsv"), &report.to_tsv())?;
    Ok(report)
}

/// Transfer run: the ΔTPR matrix of every augmented linear classifier
/// against every generator's perturbed positive test set, over the last
/// (merged) unit.
pub fn run_e3<F: Scalar>(cfg: &ExperimentConfig) -> Result<E3Report<F>> {
    if cfg.generators.is_empty() {
        return Err(Error::Config(
            "the transfer matrix requires at least one generator".into(),
        ));
    }
    let mut ws: Workspace<F> = Workspace::build(cfg, false)?;
    let roster = cfg.generators.clone();
    let seed = cfg.experiment.seed;
    let unit_idx = ws.units.len() - 1;
    let unit_name = ws.units[unit_idx].name.clone();

    let started = Instant::now();
    let positives: Vec<Document> = ws.units[unit_idx]
        .data
        .test
        .iter()
        .filter(|d| d.label.is_positive())
        .cloned()
        .collect();
    let mut test_sets: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    let mut augmented: BTreeMap<String, Box<dyn Classifier<F>>> = BTreeMap::new();
    for entry in &roster {
        let samples = ws.samples(unit_idx, Side::Test, entry, false)?;
        test_sets.insert(
            entry.id.clone(),
            perturbed_docs(&positives, &samples, &entry.id),
        );
        let model = ws.linear_model(unit_idx, seed, Some(entry))?;
        augmented.insert(entry.id.clone(), Box::new(model));
    }
    let mut base = ws.linear_model(unit_idx, seed, None)?;
    let matrix = delta_tpr_matrix(&mut base, &mut augmented, &test_sets)?;
    ws.record_stage("transfer-matrix", started);

    ws.write_manifest("e3", &[seed])?;
    let report = E3Report {
        config_hash: ws.hash.clone(),
        corpus: unit_name,
        matrix,
    };
    let out = &cfg.experiment.out_dir;
    write_text(&out.join("e3-matrix.json"), &to_pretty_json(&report))?;
    write_text(&out.join("e3-matrix.tsv"), &report.matrix.to_tsv())?;
    Ok(report)
}
