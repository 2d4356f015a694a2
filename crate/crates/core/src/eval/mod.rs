//! Review-level and lexicon-level sentiment evaluation.
//!
//! Reviews are represented as the unweighted mean of their words' composed
//! vectors and classified with the built-in linear classifier. Lexicon terms
//! are classified from their domain-common vectors under stratified k-fold
//! cross-validation. Reports carry accuracy, macro-F1 and per-class metrics,
//! and serialize to JSON with fixed key names.

mod classifier;

pub use classifier::{train_linear_classifier, ClassifierConfig, LinearClassifier};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{tokenize, PreparedReview, PreprocessConfig};
use crate::error::{DseError, Result};
use crate::model::{format_sig6, CompositionVariant, DseModel, SkipgramModel};

/// Word-vector provider used to build review features. Lookup is by surface
/// form so providers with different vocabularies (e.g. the concatenation
/// baseline) share one interface; `None` marks an out-of-vocabulary word.
pub trait WordVectors {
    fn dim(&self) -> usize;
    fn vector_of(&self, word: &str, domain: usize) -> Option<Vec<f64>>;
}

fn l2_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Composed vectors of a trained model under one variant.
pub struct DseVectors<'a> {
    pub model: &'a DseModel,
    pub variant: CompositionVariant,
    pub normalize: bool,
}

impl WordVectors for DseVectors<'_> {
    fn dim(&self) -> usize {
        self.variant.composed_dim(self.model.dim)
    }

    fn vector_of(&self, word: &str, domain: usize) -> Option<Vec<f64>> {
        let id = self.model.vocab.id(word)?;
        let v = self.model.compose(id, domain, self.variant).ok()?;
        Some(if self.normalize { l2_normalize(v) } else { v })
    }
}

/// Input vectors of a skip-gram baseline model.
pub struct SkipgramVectors<'a> {
    pub model: &'a SkipgramModel,
    pub normalize: bool,
}

impl WordVectors for SkipgramVectors<'_> {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn vector_of(&self, word: &str, _domain: usize) -> Option<Vec<f64>> {
        let id = self.model.vocab.id(word)?;
        let v = self.model.input.row(id).to_vec();
        Some(if self.normalize { l2_normalize(v) } else { v })
    }
}

/// Concatenation of two per-domain baselines. A word missing from one side
/// contributes zeros there; a word missing from both is out-of-vocabulary.
pub struct CatVectors<'a> {
    pub first: &'a SkipgramModel,
    pub second: &'a SkipgramModel,
}

impl WordVectors for CatVectors<'_> {
    fn dim(&self) -> usize {
        self.first.dim + self.second.dim
    }

    fn vector_of(&self, word: &str, _domain: usize) -> Option<Vec<f64>> {
        let a = self.first.vocab.id(word);
        let b = self.second.vocab.id(word);
        if a.is_none() && b.is_none() {
            return None;
        }
        let mut v = Vec::with_capacity(self.dim());
        match a {
            Some(id) => v.extend_from_slice(self.first.input.row(id)),
            None => v.extend(std::iter::repeat(0.0).take(self.first.dim)),
        }
        match b {
            Some(id) => v.extend_from_slice(self.second.input.row(id)),
            None => v.extend(std::iter::repeat(0.0).take(self.second.dim)),
        }
        Some(v)
    }
}

/// Mean composed vector over the review's in-vocabulary tokens. Returns the
/// feature vector and the number of skipped tokens; an all-OOV review gives
/// the zero vector.
pub fn review_features(
    review: &PreparedReview,
    vectors: &impl WordVectors,
) -> (Vec<f64>, usize) {
    let dim = vectors.dim();
    let mut sum = vec![0.0; dim];
    let mut hits = 0usize;
    let mut oov = 0usize;
    for token in &review.tokens {
        match vectors.vector_of(token, review.domain) {
            Some(v) => {
                for i in 0..dim {
                    sum[i] += v[i];
                }
                hits += 1;
            }
            None => oov += 1,
        }
    }
    if hits > 0 {
        for x in &mut sum {
            *x /= hits as f64;
        }
    }
    (sum, oov)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub folds: Option<Vec<FoldReport>>,
    pub oov_dropped: usize,
    pub all_oov_reviews: usize,
    pub split_seed: u64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("accuracy   {:.4}\n", self.accuracy));
        out.push_str(&format!("macro-F1   {:.4}\n", self.macro_f1));
        for (name, m) in &self.per_class {
            out.push_str(&format!(
                "{:<9}  precision {:.4}  recall {:.4}  F1 {:.4}  support {}\n",
                name, m.precision, m.recall, m.f1, m.support
            ));
        }
        if let Some(folds) = &self.folds {
            for f in folds {
                out.push_str(&format!(
                    "fold {}     accuracy {:.4}  macro-F1 {:.4}\n",
                    f.fold, f.accuracy, f.macro_f1
                ));
            }
        }
        if self.oov_dropped > 0 || self.all_oov_reviews > 0 {
            out.push_str(&format!(
                "oov        dropped {}  all-oov reviews {}\n",
                self.oov_dropped, self.all_oov_reviews
            ));
        }
        out
    }
}

/// Accuracy, macro-F1 and per-class metrics from parallel label/prediction
/// slices. Empty-denominator rates are 0 by convention.
pub fn metrics_from_predictions(truth: &[u8], predicted: &[u8]) -> (f64, f64, BTreeMap<String, ClassMetrics>) {
    assert_eq!(truth.len(), predicted.len());
    let n = truth.len();
    let mut correct = 0usize;
    // confusion[t][p]
    let mut confusion = [[0usize; 2]; 2];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t as usize][p as usize] += 1;
        if t == p {
            correct += 1;
        }
    }
    let accuracy = if n > 0 { correct as f64 / n as f64 } else { 0.0 };
    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for class in 0..2usize {
        let tp = confusion[class][class];
        let predicted_count = confusion[0][class] + confusion[1][class];
        let actual = confusion[class][0] + confusion[class][1];
        let precision = if predicted_count > 0 {
            tp as f64 / predicted_count as f64
        } else {
            0.0
        };
        let recall = if actual > 0 { tp as f64 / actual as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        f1_sum += f1;
        let name = if class == 1 { "positive" } else { "negative" };
        per_class.insert(
            name.to_string(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support: actual,
            },
        );
    }
    (accuracy, f1_sum / 2.0, per_class)
}

/// Fit the classifier on the training reviews and report on the test set.
pub fn evaluate_reviews(
    train: &[PreparedReview],
    test: &[PreparedReview],
    vectors: &impl WordVectors,
    clf_cfg: &ClassifierConfig,
    split_seed: u64,
) -> Result<EvalReport> {
    let mut oov_dropped = 0usize;
    let mut all_oov = 0usize;
    let mut featurize = |reviews: &[PreparedReview]| -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut features = Vec::with_capacity(reviews.len());
        let mut labels = Vec::with_capacity(reviews.len());
        for r in reviews {
            let (f, oov) = review_features(r, vectors);
            oov_dropped += oov;
            if oov == r.tokens.len() {
                all_oov += 1;
            }
            features.push(f);
            labels.push(r.label);
        }
        (features, labels)
    };
    let (train_x, train_y) = featurize(train);
    let (test_x, test_y) = featurize(test);

    let clf = train_linear_classifier(&train_x, &train_y, clf_cfg)?;
    let predicted: Vec<u8> = test_x.iter().map(|x| clf.predict(x)).collect();
    let (accuracy, macro_f1, per_class) = metrics_from_predictions(&test_y, &predicted);
    Ok(EvalReport {
        accuracy,
        macro_f1,
        per_class,
        folds: None,
        oov_dropped,
        all_oov_reviews: all_oov,
        split_seed,
    })
}

/// Load a lexicon file: one `word<TAB>label` per line, label `positive` or
/// `negative`. Anything else (including `neutral`) is rejected.
pub fn load_lexicon(path: &Path) -> Result<Vec<(String, u8)>> {
    let text = std::fs::read_to_string(path).map_err(|e| DseError::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let (word, label) = match (parts.next(), parts.next()) {
            (Some(w), Some(l)) => (w.trim(), l.trim()),
            _ => {
                return Err(DseError::Parse {
                    line: i + 1,
                    msg: "expected `word<TAB>label`".into(),
                })
            }
        };
        let y = match label {
            "positive" => 1,
            "negative" => 0,
            other => {
                return Err(DseError::BadLexiconLabel {
                    line: i + 1,
                    label: other.to_string(),
                })
            }
        };
        entries.push((word.to_string(), y));
    }
    Ok(entries)
}

/// Statistics of a loaded lexicon after preprocessing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconStats {
    pub positive: usize,
    pub negative: usize,
    pub oov_dropped: usize,
    /// Entries that did not survive preprocessing as a single token
    /// (stopwords, punctuation-only, phrases).
    pub unusable: usize,
}

/// Stratified k-fold cross-validation of lexicon term classification on the
/// model's domain-common vectors.
pub fn evaluate_lexicon(
    entries: &[(String, u8)],
    model: &DseModel,
    folds: usize,
    split_seed: u64,
    clf_cfg: &ClassifierConfig,
    preprocess: &PreprocessConfig,
) -> Result<(EvalReport, LexiconStats)> {
    if folds < 2 {
        return Err(DseError::InvalidConfig("folds must be >= 2".into()));
    }
    let mut stats = LexiconStats::default();
    // Preprocess terms with the corpus pipeline and keep in-vocabulary ones.
    let mut kept: Vec<(Vec<f64>, u8)> = Vec::new();
    for (word, label) in entries {
        let tokens = tokenize(word, preprocess);
        if tokens.len() != 1 {
            stats.unusable += 1;
            continue;
        }
        match model.vocab.id(&tokens[0]) {
            Some(id) => {
                let v = model.compose(id, 0, CompositionVariant::CommonOnly)?;
                if *label == 1 {
                    stats.positive += 1;
                } else {
                    stats.negative += 1;
                }
                kept.push((v, *label));
            }
            None => stats.oov_dropped += 1,
        }
    }

    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, (_, y)) in kept.iter().enumerate() {
        by_class[*y as usize].push(i);
    }
    for (class, indices) in by_class.iter().enumerate() {
        if indices.len() < folds {
            return Err(DseError::TooFewExamples {
                class: if class == 1 { "positive" } else { "negative" }.into(),
                have: indices.len(),
                need: folds,
            });
        }
    }

    // Deterministic stratified assignment: shuffle within each class, then
    // deal round-robin, so per-fold class counts differ by at most one.
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut fold_of = vec![0usize; kept.len()];
    for indices in by_class.iter_mut() {
        indices.shuffle(&mut rng);
        for (pos, &item) in indices.iter().enumerate() {
            fold_of[item] = pos % folds;
        }
    }

    let mut fold_reports = Vec::with_capacity(folds);
    let mut pooled_truth = Vec::with_capacity(kept.len());
    let mut pooled_pred = Vec::with_capacity(kept.len());
    let run_fold = |fold: usize| -> Result<(FoldReport, Vec<u8>, Vec<u8>)> {
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        let mut test_x = Vec::new();
        let mut test_y = Vec::new();
        for (i, (v, y)) in kept.iter().enumerate() {
            if fold_of[i] == fold {
                test_x.push(v.clone());
                test_y.push(*y);
            } else {
                train_x.push(v.clone());
                train_y.push(*y);
            }
        }
        let clf = train_linear_classifier(&train_x, &train_y, clf_cfg)?;
        let predicted: Vec<u8> = test_x.iter().map(|x| clf.predict(x)).collect();
        let (accuracy, macro_f1, _) = metrics_from_predictions(&test_y, &predicted);
        Ok((
            FoldReport {
                fold,
                accuracy,
                macro_f1,
            },
            test_y,
            predicted,
        ))
    };

    #[cfg(feature = "parallel")]
    let fold_results: Vec<(FoldReport, Vec<u8>, Vec<u8>)> = {
        use rayon::prelude::*;
        (0..folds)
            .into_par_iter()
            .map(run_fold)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let fold_results: Vec<(FoldReport, Vec<u8>, Vec<u8>)> =
        (0..folds).map(run_fold).collect::<Result<_>>()?;

    for (report, truth, pred) in fold_results {
        pooled_truth.extend(truth);
        pooled_pred.extend(pred);
        fold_reports.push(report);
    }
    fold_reports.sort_by_key(|f| f.fold);

    let (_, _, per_class) = metrics_from_predictions(&pooled_truth, &pooled_pred);
    let accuracy = fold_reports.iter().map(|f| f.accuracy).sum::<f64>() / folds as f64;
    let macro_f1 = fold_reports.iter().map(|f| f.macro_f1).sum::<f64>() / folds as f64;
    Ok((
        EvalReport {
            accuracy,
            macro_f1,
            per_class,
            folds: Some(fold_reports),
            oov_dropped: stats.oov_dropped,
            all_oov_reviews: 0,
            split_seed,
        },
        stats,
    ))
}

/// Top-k nearest words by cosine similarity of composed vectors, excluding
/// the query itself.
pub fn nearest_neighbors(
    model: &DseModel,
    word: &str,
    domain: usize,
    variant: CompositionVariant,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let query_id = model
        .vocab
        .id(word)
        .ok_or_else(|| DseError::UnknownWord(word.to_string()))?;
    let query = model.compose(query_id, domain, variant)?;
    let mut scored: Vec<(String, f64)> = (0..model.vocab.len())
        .filter(|&w| w != query_id)
        .map(|w| {
            let v = model.compose(w, domain, variant)?;
            Ok((model.vocab.word(w).to_string(), cosine(&query, &v)))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(k);
    Ok(scored)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Write features in sparse `label index:value` text form (1-based indices,
/// zeros skipped) so an external linear classifier can reproduce the
/// protocol.
pub fn write_sparse_features<W: Write>(
    mut out: W,
    features: &[Vec<f64>],
    labels: &[u8],
) -> std::io::Result<()> {
    for (x, y) in features.iter().zip(labels) {
        write!(out, "{y}")?;
        for (i, v) in x.iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{}", i + 1, format_sig6(*v))?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Deterministic per-class train/test split of labeled reviews: up to
/// `train_per_class` and `test_per_class` reviews per (domain, class) cell,
/// falling back to an 80/20 proportional split when a cell is smaller than
/// the requested total.
pub fn split_reviews(
    reviews: &[PreparedReview],
    train_per_class: usize,
    test_per_class: usize,
    split_seed: u64,
) -> (Vec<PreparedReview>, Vec<PreparedReview>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut fell_back = false;
    for domain in 0..2 {
        for class in 0..2u8 {
            let mut cell: Vec<&PreparedReview> = reviews
                .iter()
                .filter(|r| r.domain == domain && r.label == class)
                .collect();
            if cell.is_empty() {
                continue;
            }
            cell.shuffle(&mut rng);
            let (n_train, n_test) = if cell.len() >= train_per_class + test_per_class {
                (train_per_class, test_per_class)
            } else {
                fell_back = true;
                let n_test = (cell.len() / 5).max(1);
                (cell.len() - n_test, n_test)
            };
            for r in cell.iter().take(n_train) {
                train.push((*r).clone());
            }
            for r in cell.iter().skip(n_train).take(n_test) {
                test.push((*r).clone());
            }
        }
    }
    (train, test, fell_back)
}
