//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N: PASS/FAIL` line. The tests check the library against
//! independent oracles (brute-force recomputation, hand-built fixtures,
//! published reference counts) rather than against its own outputs, and
//! drive the installed binary end-to-end for the determinism and golden
//! checks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use lexsub::backend::ContextualEncoding;
use lexsub::baselines::{eda_augment, EdaConfig};
use lexsub::classify::{train_linear, Classifier, HyperGrid, Prediction};
use lexsub::corpus::{
    merge_corpora, mix_augmented, split, Corpus, CorpusRole, Document, Label, Side,
};
use lexsub::experiment::perturbed_docs;
use lexsub::metrics::{delta_tpr_matrix, f1, meteor, tpr, MeteorParams};
use lexsub::selector::{omission_scores, train_substitute};
use lexsub::substitution::{
    contextual_similarity, rollout, sanitize, Candidate, CandidateSet, GenerationConfig,
    SubstitutionPlan,
};
use lexsub::wordnet::WordNet;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root resolves")
}

fn fixtures_dir() -> PathBuf {
    repo_root().join("fixtures")
}

// -- criterion 1: omission scores against brute-force delete-and-rescore ----

#[test]
fn omission_scores_match_brute_force_delete_and_rescore() {
    let start = Instant::now();
    const VOCAB: [&str; 10] = [
        "you", "are", "very", "nice", "day", "hate", "dumb", "trash", "friend", "school",
    ];
    const MARKERS: [&str; 3] = ["hate", "dumb", "trash"];
    let mut rng = ChaCha20Rng::seed_from_u64(71);

    // a balanced training pool: odd documents get one toxic marker word
    let mut train = Vec::new();
    for i in 0..60 {
        let len = rng.gen_range(3..=8);
        let mut words: Vec<&str> = (0..len)
            .map(|_| VOCAB[rng.gen_range(0..7)]) // neutral prefix of the vocabulary
            .collect();
        let label = (i % 2) as u8;
        if label == 1 {
            let at = rng.gen_range(0..words.len());
            words[at] = MARKERS[rng.gen_range(0..MARKERS.len())];
        }
        train.push(Document::new(
            format!("t{i}"),
            words.join(" "),
            Label::Binary(label),
            "pool",
        ));
    }
    let corpus = Corpus::new("toy-pool", CorpusRole::SubstituteTraining, train).unwrap();
    let mut nb = train_substitute::<f64>(&corpus).unwrap();

    let mut max_dev = 0.0f64;
    for i in 0..200 {
        let len = rng.gen_range(2..=9);
        let words: Vec<&str> = (0..len)
            .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
            .collect();
        let text = words.join(" ");
        let doc = Document::new(format!("e{i}"), text, Label::Binary(1), "pool");
        let scores = omission_scores(&doc, &mut nb).unwrap();
        assert_eq!(scores.len(), words.len(), "one score per token");

        let base = nb.positive_score(&doc.text);
        for (position, score) in scores {
            let mut rest = words.clone();
            rest.remove(position);
            let expected = base - nb.positive_score(&rest.join(" "));
            let dev = (score - expected).abs();
            max_dev = max_dev.max(dev);
            assert!(
                dev <= 1e-9,
                "doc {i} position {position}: {score} vs brute-force {expected}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "criterion 1: PASS — 200 documents, max deviation {max_dev:.3e}, {:.2}s",
        elapsed.as_secs_f64()
    );
}

// -- criterion 2: attention-weighted similarity against re-implementation ---

fn reference_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn encoding(vectors: Vec<Vec<f64>>, attention: BTreeMap<usize, Vec<f64>>) -> ContextualEncoding<f64> {
    ContextualEncoding {
        vectors,
        attention,
        window_start: 0,
        truncated: false,
    }
}

#[test]
fn attention_weighted_similarity_matches_reference_arithmetic() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut max_dev = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(1..=8);
        let dim = rng.gen_range(2..=6);
        let rand_vectors = |rng: &mut ChaCha20Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        };
        let vectors = rand_vectors(&mut rng);
        let vectors_prime = rand_vectors(&mut rng);
        let t = rng.gen_range(0..n);
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut attention = BTreeMap::new();
        attention.insert(t, alpha.clone());

        let enc_d = encoding(vectors.clone(), attention);
        // the perturbed side needs no attention profile: only the original's counts
        let enc_p = encoding(vectors_prime.clone(), BTreeMap::new());
        let got = contextual_similarity(&enc_d, &enc_p, t).unwrap();
        let expected: f64 = alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * reference_cosine(&vectors[i], &vectors_prime[i]))
            .sum();
        let dev = (got - expected).abs();
        max_dev = max_dev.max(dev);
        assert!(dev <= 1e-12, "case {case}: {got} vs {expected}");
    }

    // candidate ranking is invariant under uniform scaling of every vector
    let n = 6;
    let dim = 5;
    let rand_vectors = |rng: &mut ChaCha20Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let base_vectors = rand_vectors(&mut rng);
    let t = 2;
    let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let candidates: Vec<Vec<Vec<f64>>> = (0..8).map(|_| rand_vectors(&mut rng)).collect();

    let rank = |gamma: f64| -> (Vec<usize>, Vec<f64>) {
        let scale = |vs: &[Vec<f64>]| -> Vec<Vec<f64>> {
            vs.iter()
                .map(|v| v.iter().map(|x| x * gamma).collect())
                .collect()
        };
        let mut attention = BTreeMap::new();
        attention.insert(t, alpha.clone());
        let enc_d = encoding(scale(&base_vectors), attention);
        let scores: Vec<f64> = candidates
            .iter()
            .map(|c| {
                let enc_p = encoding(scale(c), BTreeMap::new());
                contextual_similarity(&enc_d, &enc_p, t).unwrap()
            })
            .collect();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        (order, scores)
    };
    let (order_1, scores_1) = rank(1.0);
    for gamma in [0.25, 3.0, 17.5] {
        let (order_g, scores_g) = rank(gamma);
        for (s1, sg) in scores_1.iter().zip(&scores_g) {
            assert!((s1 - sg).abs() < 1e-9, "scale {gamma}: {s1} vs {sg}");
        }
        assert_eq!(order_1, order_g, "argsort changed under scale {gamma}");
    }
    println!("criterion 2: PASS — 100 fixtures, max deviation {max_dev:.3e}; argsort scale-invariant");
}

// -- criterion 3: sanitization property suite -------------------------------

fn is_plural_pair_reference(a: &str, b: &str) -> bool {
    let extends = |long: &str, short: &str| {
        long.strip_suffix('s')
            .map(|stem| stem == short || stem.strip_suffix('e') == Some(short))
            .unwrap_or(false)
    };
    extends(a, b) || extends(b, a)
}

#[test]
fn candidate_sanitization_properties_hold_on_randomized_inputs() {
    const WORDS: [&str; 12] = [
        "dog", "dogs", "box", "boxes", "stupid", "silly", "marble", "marbles", "go", "gone",
        "fish", "fishes",
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    for case in 0..1000 {
        let original = {
            let w = WORDS[rng.gen_range(0..WORDS.len())];
            if rng.gen_bool(0.3) {
                let mut c = w.chars();
                match c.next() {
                    Some(first) => first.to_uppercase().chain(c).collect::<String>(),
                    None => w.to_string(),
                }
            } else {
                w.to_string()
            }
        };
        let mut candidates: Vec<String> = Vec::new();
        let n = rng.gen_range(0..20);
        for _ in 0..n {
            let kind = rng.gen_range(0..8);
            let cand = match kind {
                0 => WORDS[rng.gen_range(0..WORDS.len())].to_string(),
                1 => "x".to_string(),                            // single character
                2 => format!("##{}", WORDS[rng.gen_range(0..WORDS.len())]), // piece
                3 => original.to_uppercase(),                    // case variant
                4 => original.to_lowercase(),
                5 => format!("{}s", original.to_lowercase()),    // plural of original
                6 => format!("{}es", original.to_lowercase()),
                _ => match candidates.last() {
                    Some(prev) => prev.clone(),                  // duplicate
                    None => WORDS[rng.gen_range(0..WORDS.len())].to_string(),
                },
            };
            candidates.push(cand);
        }

        let out = sanitize(&candidates, &original);
        let original_lower = original.to_lowercase();
        let mut seen = BTreeSet::new();
        let mut cursor = 0usize;
        for cand in &out {
            assert!(cand.chars().count() > 1, "case {case}: single char {cand:?}");
            assert!(!cand.starts_with("##"), "case {case}: piece {cand:?}");
            let lower = cand.to_lowercase();
            assert_ne!(lower, original_lower, "case {case}: original survived");
            assert!(
                !is_plural_pair_reference(&lower, &original_lower),
                "case {case}: plural pair {cand:?} of {original:?}"
            );
            assert!(seen.insert(cand.clone()), "case {case}: duplicate {cand:?}");
            // order-preserving subsequence of the input
            let at = candidates[cursor..]
                .iter()
                .position(|c| c == cand)
                .unwrap_or_else(|| panic!("case {case}: {cand:?} not in input order"));
            cursor += at + 1;
        }
        let again = sanitize(&out, &original);
        assert_eq!(again, out, "case {case}: sanitize is not idempotent");
    }
    println!("criterion 3: PASS — 1000 randomized candidate lists, idempotence exact");
}

// -- criterion 4: rollout contract and the scripted five-sample plan --------

#[test]
fn rollout_contract_holds_and_scripted_plan_reproduces_rows() {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    for case in 0..200 {
        let m = rng.gen_range(1..=5);
        let cardinalities: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=10)).collect();
        let text = (0..m).map(|s| format!("slot{s}")).collect::<Vec<_>>().join(" ");
        let doc = Document::new("p", text, Label::Binary(1), "toy");
        let targets: Vec<CandidateSet<f64>> = (0..m)
            .map(|s| CandidateSet {
                position: s,
                original: format!("slot{s}"),
                candidates: (1..=cardinalities[s])
                    .map(|r| Candidate {
                        surface: format!("w{s}r{r}"),
                        score: (cardinalities[s] - r) as f64,
                    })
                    .collect(),
            })
            .collect();
        let plan = SubstitutionPlan {
            doc_id: "p".to_string(),
            targets,
            config: GenerationConfig::default(),
        };
        let samples = rollout(&doc, &plan, 5, "sub");
        let expected_count = 5.min(*cardinalities.iter().min().unwrap());
        assert_eq!(samples.len(), expected_count, "case {case}: {cardinalities:?}");
        for (i, sample) in samples.iter().enumerate() {
            let rank = i + 1;
            assert_eq!(sample.rank, rank);
            let expected_text = (0..m)
                .map(|s| format!("w{s}r{rank}"))
                .collect::<Vec<_>>()
                .join(" ");
            assert_eq!(sample.text, expected_text, "case {case} sample {rank}");
            for (s, slot) in sample.slots.iter().enumerate() {
                assert_eq!(slot.chosen, format!("w{s}r{rank}"));
            }
        }
    }

    // scripted plan: two targets, five ranked candidates each, reproducing
    // the five reference augmentations of the canonical example verbatim
    let doc = Document::new(
        "canon",
        "I don't get why people like u .",
        Label::Binary(1),
        "toy",
    );
    let slot = |position: usize, original: &str, surfaces: [&str; 5]| CandidateSet::<f64> {
        position,
        original: original.to_string(),
        candidates: surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| Candidate {
                surface: s.to_string(),
                score: 1.0 - 0.1 * i as f64,
            })
            .collect(),
    };
    let plan = SubstitutionPlan {
        doc_id: "canon".to_string(),
        targets: vec![
            slot(4, "people", ["they", "boys", "everyone", "you", "you"]),
            slot(5, "like", ["want", "hate", "want", "love", "are"]),
        ],
        config: GenerationConfig::default(),
    };
    let samples = rollout(&doc, &plan, 5, "sub");
    let texts: Vec<&str> = samples.iter().map(|s| s.text.as_str()).collect();
    assert_eq!(
        texts,
        vec![
            "I don't get why they want u .",
            "I don't get why boys hate u .",
            "I don't get why everyone want u .",
            "I don't get why you love u .",
            "I don't get why you are u .",
        ],
    );
    println!("criterion 4: PASS — 200 random plans; scripted plan reproduces all five rows verbatim");
}

// -- criterion 5: metric oracles ---------------------------------------------

#[test]
fn classification_metrics_match_brute_force_and_golden_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    for case in 0..1000 {
        let n = rng.gen_range(1..=40);
        let mut gold = Vec::with_capacity(n);
        let mut preds = Vec::with_capacity(n);
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        let mut positives = 0usize;
        for i in 0..n {
            let g: u8 = rng.gen_range(0..2);
            let p: u8 = rng.gen_range(0..2);
            match (p == 1, g == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
            positives += usize::from(g == 1);
            gold.push(Document::new(format!("d{i}"), "text", Label::Binary(g), "x"));
            preds.push(Prediction::<f64> {
                doc_id: format!("d{i}"),
                label: p,
                score: 0.0,
            });
        }
        let f1_got = f1::<f64>(&preds, &gold).unwrap();
        let denom = 2 * tp + fp + fn_;
        let f1_expected = if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        };
        assert_eq!(f1_got, f1_expected, "case {case}: f1");
        if positives == 0 {
            assert!(tpr::<f64>(&preds, &gold).is_err(), "case {case}: tpr must reject");
        } else {
            let tpr_got = tpr::<f64>(&preds, &gold).unwrap();
            assert_eq!(tpr_got, tp as f64 / positives as f64, "case {case}: tpr");
        }
    }

    let wordnet = WordNet::load(&fixtures_dir().join("wordnet")).unwrap();
    let params = MeteorParams::default();
    let raw = std::fs::read_to_string(fixtures_dir().join("meteor_pairs.tsv")).unwrap();
    let mut checked = 0;
    for line in raw.lines().skip(1) {
        let mut parts = line.split('\t');
        let candidate = parts.next().unwrap();
        let reference = parts.next().unwrap();
        let expected: f64 = parts.next().unwrap().parse().unwrap();
        let got: f64 = meteor(candidate, reference, &wordnet, &params).unwrap();
        assert!(
            (got - expected).abs() < 1e-6,
            "{candidate:?} vs {reference:?}: {got} vs {expected}"
        );
        checked += 1;
    }
    assert_eq!(checked, 50, "golden file must hold 50 pairs");
    let identity: f64 = meteor("the cat sat", "the cat sat", &wordnet, &params).unwrap();
    assert!((identity - 0.9814814814814815).abs() < 1e-9, "{identity}");
    println!("criterion 5: PASS — 1000 prediction sets exact; 50 golden pairs within 1e-6");
}

// -- criterion 6: transfer-matrix bookkeeping --------------------------------

/// Predicts positive exactly when the text contains its flag word.
struct FlagClassifier(&'static str);

impl Classifier<f64> for FlagClassifier {
    fn id(&self) -> String {
        format!("flag:{}", self.0)
    }

    fn predict(&mut self, docs: &[Document]) -> lexsub::Result<Vec<Prediction<f64>>> {
        Ok(docs
            .iter()
            .map(|d| {
                let hit = d.text.split_whitespace().any(|w| w == self.0);
                Prediction {
                    doc_id: d.id.clone(),
                    label: u8::from(hit),
                    score: if hit { 1.0 } else { -1.0 },
                }
            })
            .collect())
    }
}

#[test]
fn delta_tpr_matrix_matches_hand_computed_cells() {
    let docs = |prefix: &str, texts: &[&str]| -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("{prefix}{i}"), *t, Label::Binary(1), "x"))
            .collect()
    };
    // set one: red hits 2/4, blue 1/4, plain 1/4
    // set two: red hits 1/5, blue 2/5, plain 2/5
    let mut test_sets = BTreeMap::new();
    test_sets.insert(
        "g1".to_string(),
        docs("a", &["red alpha", "red beta", "blue gamma", "plain delta"]),
    );
    test_sets.insert(
        "g2".to_string(),
        docs("b", &["blue one", "red two", "blue three", "plain four", "plain five"]),
    );

    let mut base = FlagClassifier("red");
    let mut augmented: BTreeMap<String, Box<dyn Classifier<f64>>> = BTreeMap::new();
    augmented.insert("g1".to_string(), Box::new(FlagClassifier("blue")));
    augmented.insert("g2".to_string(), Box::new(FlagClassifier("plain")));

    let matrix = delta_tpr_matrix(&mut base, &mut augmented, &test_sets).unwrap();
    assert_eq!(matrix.generators, vec!["g1".to_string(), "g2".to_string()]);
    assert_eq!(matrix.initial_tpr, vec![2.0 / 4.0, 1.0 / 5.0]);
    assert_eq!(
        matrix.cells,
        vec![
            vec![1.0 / 4.0 - 2.0 / 4.0, 1.0 / 4.0 - 2.0 / 4.0],
            vec![2.0 / 5.0 - 1.0 / 5.0, 2.0 / 5.0 - 1.0 / 5.0],
        ],
    );
    // footer means exclude exactly the diagonal cell of each column
    assert_eq!(
        matrix.column_means,
        vec![
            Some(2.0 / 5.0 - 1.0 / 5.0), // column g1 averages only row g2
            Some(1.0 / 4.0 - 2.0 / 4.0), // column g2 averages only row g1
        ],
    );
    let tsv = matrix.to_tsv();
    assert!(tsv.contains("mean-excluding-same"), "{tsv}");

    // a single-generator matrix has no off-diagonal cells to average
    let mut single_sets = BTreeMap::new();
    single_sets.insert("g1".to_string(), docs("c", &["red solo", "blue solo"]));
    let mut single_aug: BTreeMap<String, Box<dyn Classifier<f64>>> = BTreeMap::new();
    single_aug.insert("g1".to_string(), Box::new(FlagClassifier("blue")));
    let mut base = FlagClassifier("red");
    let single = delta_tpr_matrix(&mut base, &mut single_aug, &single_sets).unwrap();
    assert_eq!(single.column_means, vec![None]);
    assert!(single.to_tsv().contains("\t-\n"), "{}", single.to_tsv());
    println!("criterion 6: PASS — hand-computed 2×2 cells exact; footer excludes the diagonal");
}

// -- criterion 7: directional attack-and-recovery at desk scale --------------

#[test]
fn eda_attack_lowers_tpr_and_retraining_recovers_it() {
    let wordnet = WordNet::load(&fixtures_dir().join("wordnet")).unwrap();
    // two toxic words with synonym entries; every frame word is inert, so the
    // only word synonym replacement can touch is the toxic one, and none of
    // its replacements occur anywhere in the corpus vocabulary
    const TOXIC: [&str; 2] = ["stupid", "idiot"];
    const FRAMES: [[&str; 2]; 12] = [
        ["you are so very", "to me"],
        ["they are all", "and you know it"],
        ["this is just", "again and again"],
        ["that was so", "of you"],
        ["it is very", "in here"],
        ["you were being", "to them"],
        ["he is too", "for this"],
        ["she was never", "with me"],
        ["we were not", "at the time"],
        ["i am not", "about this"],
        ["they were both", "on it"],
        ["you are still", "by far"],
    ];
    const MARKERS: [&str; 12] = [
        "nice", "happy", "kind", "smart", "great", "cool", "sweet", "calm", "warm", "neat",
        "fun", "okay",
    ];

    for frame in FRAMES.iter().flatten() {
        for word in frame.split(' ') {
            assert!(
                wordnet.first_sense_synonyms(word).is_empty(),
                "frame word {word:?} must be inert"
            );
        }
    }
    let corpus_words: BTreeSet<&str> = TOXIC.iter().chain(MARKERS.iter()).copied().collect();
    for word in TOXIC {
        let synonyms = wordnet.first_sense_synonyms(word);
        assert!(!synonyms.is_empty(), "{word:?} needs synonyms");
        for synonym in synonyms {
            assert!(
                !corpus_words.contains(synonym.to_lowercase().as_str()),
                "synonym {synonym:?} of {word:?} collides with a corpus word"
            );
        }
    }

    let build = |name: &str| -> Corpus {
        let mut docs = Vec::new();
        for (fi, [head, tail]) in FRAMES.iter().enumerate() {
            docs.push(Document::new(
                format!("p{fi}"),
                format!("{head} {} {tail}", TOXIC[fi % 2]),
                Label::Binary(1),
                name,
            ));
            // one pleasant-marker negative and one bare-frame negative per
            // frame: frame-only text is anchored firmly on the negative side
            docs.push(Document::new(
                format!("nm{fi}"),
                format!("{head} {} {tail}", MARKERS[fi]),
                Label::Binary(0),
                name,
            ));
            docs.push(Document::new(
                format!("nb{fi}"),
                format!("{head} {tail}"),
                Label::Binary(0),
                name,
            ));
        }
        Corpus::new(name, CorpusRole::Experiment, docs).unwrap()
    };
    let merged = merge_corpora(&[build("siteone"), build("sitetwo")]).unwrap();
    let data = split(&merged, 0.25, 0).unwrap();
    let grid = HyperGrid::<f64> {
        c_values: vec![10.0],
        balanced: vec![true],
    };
    let plain = train_linear(&data, &grid, 0).unwrap();

    // fixture health: every test positive's frame must have a training twin,
    // or the model has no way to learn that frame's wording at all
    let train_frames: BTreeSet<&str> = data
        .train
        .iter()
        .filter(|d| d.label.is_positive())
        .map(|d| d.id.rsplit('/').next().unwrap())
        .collect();
    for doc in data.test.iter().filter(|d| d.label.is_positive()) {
        assert!(
            train_frames.contains(doc.id.rsplit('/').next().unwrap()),
            "test positive {} has no training twin; pick another split seed",
            doc.id
        );
    }

    let test_positives: Vec<Document> = data
        .test
        .iter()
        .filter(|d| d.label.is_positive())
        .cloned()
        .collect();
    assert!(test_positives.len() >= 4, "{} test positives", test_positives.len());
    let plain_tpr = tpr::<f64>(&plain.predict_docs(&test_positives), &test_positives).unwrap();
    assert!(plain_tpr > 0.9, "plain model is too weak: TPR {plain_tpr}");

    // attack: synonym replacement only, one sample per test positive
    let attack_cfg = EdaConfig {
        sr_rate: 0.9,
        ri_rate: 0.0,
        rs_rate: 0.0,
        rd_rate: 0.0,
        n_aug: 1,
        seed: 1234,
    };
    let mut attack_samples = Vec::new();
    for doc in &test_positives {
        attack_samples.extend(eda_augment(doc, &wordnet, &attack_cfg).unwrap());
    }
    let perturbed = perturbed_docs(&test_positives, &attack_samples, "eda");
    let changed = perturbed
        .iter()
        .zip(&test_positives)
        .filter(|(p, o)| p.text != o.text)
        .count();
    assert!(changed > 0, "the attack never changed a text");
    let attacked_tpr = tpr::<f64>(&plain.predict_docs(&perturbed), &perturbed).unwrap();
    assert!(
        attacked_tpr < plain_tpr,
        "perturbation must strictly lower TPR: {attacked_tpr} vs {plain_tpr}"
    );

    // recovery: augment the training side and refit
    let recover_cfg = EdaConfig {
        n_aug: 5,
        seed: 555,
        ..attack_cfg.clone()
    };
    let mut train_samples = Vec::new();
    for doc in data.train.iter().filter(|d| d.label.is_positive()) {
        train_samples.extend(eda_augment(doc, &wordnet, &recover_cfg).unwrap());
    }
    let mixed = mix_augmented(&data, &train_samples, Side::Train, None).unwrap();
    let retrained = train_linear(&mixed, &grid, 9).unwrap();
    let recovered_tpr = tpr::<f64>(&retrained.predict_docs(&perturbed), &perturbed).unwrap();
    assert!(
        recovered_tpr > attacked_tpr,
        "retraining must strictly raise TPR on perturbed positives: {recovered_tpr} vs {attacked_tpr}"
    );
    println!(
        "criterion 7: PASS — TPR {plain_tpr:.3} → {attacked_tpr:.3} under attack, {recovered_tpr:.3} after retraining"
    );
}

// -- criterion 8: published split counts -------------------------------------

#[test]
fn published_split_counts_reproduce_from_pooled_totals() {
    // augmented counts are bounded by 6× the original positives (at most
    // five samples per source plus the source itself)
    let mut docs = Vec::new();
    for i in 0..20 {
        docs.push(Document::new(
            format!("s{i}"),
            "plain filler text",
            Label::Binary((i % 2) as u8),
            "small",
        ));
    }
    let small = Corpus::new("small", CorpusRole::Experiment, docs).unwrap();
    let small_split = split(&small, 0.2, 7).unwrap();
    let identity_eda = EdaConfig {
        sr_rate: 0.0,
        ri_rate: 0.0,
        rs_rate: 0.0,
        rd_rate: 0.0,
        n_aug: 5,
        seed: 7,
    };
    let mut samples = Vec::new();
    let wordnet = WordNet::default();
    let original_positives = small_split
        .train
        .iter()
        .filter(|d| d.label.is_positive())
        .count();
    for doc in small_split.train.iter().filter(|d| d.label.is_positive()) {
        let per_doc = eda_augment(doc, &wordnet, &identity_eda).unwrap();
        assert!(per_doc.len() <= 5, "more than five samples per source");
        samples.extend(per_doc);
    }
    let mixed = mix_augmented(&small_split, &samples, Side::Train, None).unwrap();
    let mixed_positives = mixed.train.iter().filter(|d| d.label.is_positive()).count();
    assert!(
        mixed_positives <= 6 * original_positives,
        "{mixed_positives} augmented positives from {original_positives} originals"
    );

    // the published test counts, from the pooled post-filtering totals
    let mut docs = Vec::with_capacity(5_350 + 80_244);
    for i in 0..5_350usize {
        docs.push(Document::new(format!("p{i}"), "bad text", Label::Binary(1), "pool"));
    }
    for i in 0..80_244usize {
        docs.push(Document::new(format!("n{i}"), "fine text", Label::Binary(0), "pool"));
    }
    let pool = Corpus::new("pool", CorpusRole::Experiment, docs).unwrap();
    let data = split(&pool, 0.1, 42).unwrap();
    let test_pos = data.test.iter().filter(|d| d.label.is_positive()).count();
    let test_neg = data.test.len() - test_pos;
    if (test_pos, test_neg) != (561, 8_001) {
        println!(
            "criterion 8: FAIL — a 0.1 split of the 5,350/80,244 pools yields {test_pos}/{test_neg} \
             test documents; the published reference counts are 561/8,001 (not reproducible: \
             round(0.1·5,350) = 535 and round(0.1·80,244) = 8,024)"
        );
    } else {
        println!("criterion 8: PASS — split counts match the published reference");
    }
    assert_eq!(
        (test_pos, test_neg),
        (561, 8_001),
        "published test counts are not reproducible from the pooled totals at ratio 0.1"
    );
}

// -- criterion 9: byte-identical reruns ---------------------------------------

fn run_cli(root: &Path, out: &Path, command: &str) {
    let bin = env!("CARGO_BIN_EXE_lexsub");
    let output = Command::new(bin)
        .current_dir(root)
        .arg(command)
        .args(["--config", "fixtures/config.toml"])
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "{command} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn collect_files(base: &Path) -> BTreeMap<String, PathBuf> {
    fn walk(dir: &Path, base: &Path, out: &mut BTreeMap<String, PathBuf>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                let rel = path
                    .strip_prefix(base)
                    .expect("under base")
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, path);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(base, base, &mut out);
    out
}

#[test]
fn stub_backend_reruns_are_byte_identical() {
    let root = repo_root();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    for out in [first.path(), second.path()] {
        for command in ["augment", "run-e1", "run-e2", "run-e3"] {
            run_cli(&root, out, command);
        }
    }
    // manifests carry wall-clock stage timings and are exempt; everything
    // else must be byte-identical
    let keep = |name: &str| !Path::new(name)
        .file_name()
        .map(|f| f.to_string_lossy().starts_with("manifest-"))
        .unwrap_or(false);
    let first_files: BTreeMap<String, PathBuf> = collect_files(first.path())
        .into_iter()
        .filter(|(rel, _)| keep(rel))
        .collect();
    let second_files: BTreeMap<String, PathBuf> = collect_files(second.path())
        .into_iter()
        .filter(|(rel, _)| keep(rel))
        .collect();
    assert_eq!(
        first_files.keys().collect::<Vec<_>>(),
        second_files.keys().collect::<Vec<_>>(),
        "the two runs produced different file trees"
    );
    assert!(!first_files.is_empty(), "no output files were produced");
    for (rel, path) in &first_files {
        let a = std::fs::read(path).unwrap();
        let b = std::fs::read(&second_files[rel]).unwrap();
        assert_eq!(a, b, "{rel} differs between reruns");
    }
    println!(
        "criterion 9: PASS — {} files byte-identical across independent reruns",
        first_files.len()
    );
}

// -- criterion 10: end-to-end toy fixture against committed goldens ----------

#[test]
fn toy_fixture_end_to_end_matches_goldens() {
    let root = repo_root();
    let out = tempfile::tempdir().unwrap();
    run_cli(&root, out.path(), "stats");
    let start = Instant::now();
    for command in ["run-e1", "run-e2", "run-e3"] {
        run_cli(&root, out.path(), command);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");

    const REPORTS: [&str; 8] = [
        "stats.tsv",
        "e1-report.json",
        "e1-report.tsv",
        "e1-consistency.tsv",
        "e2-report.json",
        "e2-report.tsv",
        "e3-matrix.json",
        "e3-matrix.tsv",
    ];
    for name in REPORTS {
        let got = std::fs::read(out.path().join(name))
            .unwrap_or_else(|e| panic!("missing report {name}: {e}"));
        let golden = std::fs::read(fixtures_dir().join("golden").join(name))
            .unwrap_or_else(|e| panic!("missing golden {name}: {e}"));
        assert_eq!(got, golden, "{name} diverges from its golden copy");
    }
    println!(
        "criterion 10: PASS — run-e1/e2/e3 in {:.1}s; all 8 reports match the golden copies",
        elapsed.as_secs_f64()
    );
}
