//! Empirical IND-CPA game.
//!
//! The challenger encrypts two equal-length messages many times under one
//! key; the adversary trains classifiers to tell the resulting ciphertexts
//! apart, either from the full vectors or from six summary features. A
//! classifier wins when its held-out accuracy beats coin flipping under a
//! one-sided exact binomial test at level 0.05.

pub mod data;
pub mod ffnn;
pub mod knn;
pub mod lda;
pub mod stats;

use alloc::string::String;
use alloc::vec::Vec;

use crate::cipher::{encrypt, BaseModel, SecretKey};
use crate::error::{Error, Result};
use crate::model::tokenize;
use crate::rng::{child_seed, seeded_stream};
use crate::training::TrainConfig;

pub use data::{extract_features, Samples, Standardizer, FEATURE_NAMES};
pub use ffnn::{ffnn_classify, FfnnConfig};
pub use knn::{knn_classify, DEFAULT_KS};
pub use lda::lda_classify;
pub use stats::{binomial_test, mutual_information, MI_BINS, SIGNIFICANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    Knn,
    Lda,
    Ffnn,
    /// Reserved column; never evaluated.
    Svm,
    /// Reserved column; never evaluated.
    GradBoost,
}

impl Classifier {
    pub const ALL: [Classifier; 5] =
        [Classifier::Knn, Classifier::Lda, Classifier::Ffnn, Classifier::Svm, Classifier::GradBoost];
    pub const IMPLEMENTED: [Classifier; 3] = [Classifier::Knn, Classifier::Lda, Classifier::Ffnn];

    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Knn => "knn",
            Classifier::Lda => "lda",
            Classifier::Ffnn => "ffnn",
            Classifier::Svm => "svm",
            Classifier::GradBoost => "gradboost",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn is_implemented(&self) -> bool {
        Self::IMPLEMENTED.contains(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// The whole ciphertext vector.
    Full,
    /// The six summary features.
    Features,
}

impl InputMode {
    pub const ALL: [InputMode; 2] = [InputMode::Full, InputMode::Features];

    pub fn name(&self) -> &'static str {
        match self {
            InputMode::Full => "full",
            InputMode::Features => "features",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// One labeled ciphertext.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub label: u8,
    pub theta: Vec<f32>,
}

/// Labeled ciphertexts and their train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct CiphertextDataset {
    pub d: usize,
    pub records: Vec<Record>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub regularizer_tag: u8,
}

impl CiphertextDataset {
    /// Checks labels and lengths, then splits each class so that its first
    /// `round(n_class · train_frac)` records (in file order) train.
    pub fn new(d: usize, records: Vec<Record>, train_frac: f64, regularizer_tag: u8) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_frac) {
            return Err(Error::Config("train_frac must lie in [0, 1]".into()));
        }
        for r in &records {
            if r.label > 1 {
                return Err(Error::Precondition("labels must be 0 or 1".into()));
            }
            if r.theta.len() != d {
                return Err(Error::Dimension { expected: d, actual: r.theta.len() });
            }
        }
        let mut quota = [0usize; 2];
        for (label, q) in quota.iter_mut().enumerate() {
            let n = records.iter().filter(|r| r.label as usize == label).count();
            *q = libm::round(n as f64 * train_frac) as usize;
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        let mut seen = [0usize; 2];
        for (i, r) in records.iter().enumerate() {
            let l = r.label as usize;
            if seen[l] < quota[l] {
                train.push(i);
            } else {
                test.push(i);
            }
            seen[l] += 1;
        }
        Ok(Self { d, records, train, test, regularizer_tag })
    }

    pub fn samples(&self, idx: &[usize], mode: InputMode) -> Result<Samples> {
        let dim = match mode {
            InputMode::Full => self.d,
            InputMode::Features => 6,
        };
        let mut out = Samples::new(dim);
        for &i in idx {
            let r = &self.records[i];
            let theta: Vec<f64> = r.theta.iter().map(|&t| t as f64).collect();
            match mode {
                InputMode::Full => out.push(&theta, r.label)?,
                InputMode::Features => out.push(&extract_features(&theta)?, r.label)?,
            }
        }
        Ok(out)
    }
}

/// Corpus generation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    pub n_per_class: usize,
    pub train_frac: f64,
    pub master_seed: u64,
    /// Extra attempts, each with a fresh nonce, after a failed encryption.
    pub max_retries: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { n_per_class: 500, train_frac: 0.8, master_seed: 0, max_retries: 3 }
    }
}

/// A single encryption of the corpus: message `label`, repetition `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub label: u8,
    pub index: usize,
}

/// Jobs in record order: both labels for repetition 0, then repetition 1, …
pub fn corpus_jobs(n_per_class: usize) -> Vec<Job> {
    (0..n_per_class).flat_map(|index| [0u8, 1].map(|label| Job { label, index })).collect()
}

/// Encrypts one job with seeds derived from `(master_seed, job, attempt)`.
/// Returns the ciphertext vector and the number of failed attempts.
pub fn run_job(
    key: &SecretKey,
    message: &[u8],
    job: Job,
    model: &BaseModel<'_>,
    train_config: &TrainConfig,
    corpus: &CorpusConfig,
) -> Result<(Vec<f32>, usize)> {
    let item_seed = child_seed(corpus.master_seed, 0x4a4f_4200 + job.label as u64, job.index as u64);
    let mut failures = 0;
    loop {
        let mut rng = seeded_stream(child_seed(item_seed, 0x5245_5452, failures as u64));
        match encrypt(key, message, model, train_config, &mut rng) {
            Ok(ct) => return Ok((ct.theta, failures)),
            Err(Error::BudgetExceeded { epochs }) if failures < corpus.max_retries => {
                log::warn!("label {} item {}: not memorized in {epochs} epochs, retrying", job.label, job.index);
                failures += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Checks that the pair is a valid challenge: distinct, nonempty and of equal token length.
pub fn check_pair(m0: &[u8], m1: &[u8]) -> Result<()> {
    if m0.is_empty() || m1.is_empty() {
        return Err(Error::EmptyInput("challenge messages must be nonempty".into()));
    }
    if m0 == m1 {
        return Err(Error::Precondition("challenge messages must differ".into()));
    }
    let (l0, l1) = (tokenize(m0).len(), tokenize(m1).len());
    if l0 != l1 {
        return Err(Error::Dimension { expected: l0, actual: l1 });
    }
    Ok(())
}

/// Assembles job results (in [`corpus_jobs`] order) into a dataset.
pub fn assemble(jobs: &[Job], thetas: Vec<Vec<f32>>, d: usize, corpus: &CorpusConfig, tag: u8) -> Result<CiphertextDataset> {
    let records = jobs.iter().zip(thetas).map(|(j, theta)| Record { label: j.label, theta }).collect();
    CiphertextDataset::new(d, records, corpus.train_frac, tag)
}

/// Sequential corpus generation; the result depends only on the inputs.
pub fn generate_corpus(
    key: &SecretKey,
    m0: &[u8],
    m1: &[u8],
    model: &BaseModel<'_>,
    train_config: &TrainConfig,
    corpus: &CorpusConfig,
) -> Result<CiphertextDataset> {
    check_pair(m0, m1)?;
    let jobs = corpus_jobs(corpus.n_per_class);
    let mut thetas = Vec::with_capacity(jobs.len());
    for &job in &jobs {
        let msg = if job.label == 0 { m0 } else { m1 };
        thetas.push(run_job(key, msg, job, model, train_config, corpus)?.0);
    }
    assemble(&jobs, thetas, train_config.d, corpus, train_config.regularizer.tag())
}

/// Result of one classifier on one input mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub correct: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub p_value: f64,
    pub reject_null: bool,
    /// k picked by cross-validation (KNN only).
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub classifier: Classifier,
    pub mode: InputMode,
    /// `None` for reserved classifiers.
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub name: String,
    pub regularizer_tag: u8,
    pub n_train: usize,
    pub n_test: usize,
    /// Per-feature mutual information with the label on the training set (nats).
    pub mutual_information: [f64; 6],
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub pairs: Vec<PairReport>,
}

/// Evaluates one classifier on one dataset view.
pub fn evaluate_cell(
    dataset: &CiphertextDataset,
    classifier: Classifier,
    mode: InputMode,
    seed: u64,
) -> Result<Option<Outcome>> {
    if !classifier.is_implemented() {
        return Ok(None);
    }
    let train = dataset.samples(&dataset.train, mode)?;
    let test = dataset.samples(&dataset.test, mode)?;
    if test.is_empty() {
        return Err(Error::EmptyInput("test split is empty".into()));
    }
    let (pred, k) = match classifier {
        Classifier::Knn => {
            let (k, pred) = knn_classify(&train, &test, &DEFAULT_KS)?;
            (pred, Some(k))
        }
        Classifier::Lda => (lda_classify(&train, &test)?, None),
        Classifier::Ffnn => {
            let base = match mode {
                InputMode::Full => FfnnConfig::full(),
                InputMode::Features => FfnnConfig::features(),
            };
            (ffnn_classify(&train, &test, &FfnnConfig { seed, ..base })?, None)
        }
        Classifier::Svm | Classifier::GradBoost => unreachable!("reserved classifiers return early"),
    };
    let correct = pred.iter().zip(&test.y).filter(|(p, y)| p == y).count();
    let n_test = test.len();
    let p_value = binomial_test(correct as u64, n_test as u64, 0.5)?;
    Ok(Some(Outcome {
        correct,
        n_test,
        accuracy: correct as f64 / n_test as f64,
        p_value,
        reject_null: p_value < SIGNIFICANCE,
        k,
    }))
}

/// Per-feature mutual information with the label over the training split.
pub fn feature_mutual_information(dataset: &CiphertextDataset) -> Result<[f64; 6]> {
    let train = dataset.samples(&dataset.train, InputMode::Features)?;
    if train.class_count(0) == 0 || train.class_count(1) == 0 {
        return Err(Error::Precondition("both labels must appear in the training split".into()));
    }
    let mut out = [0.0; 6];
    for (f, slot) in out.iter_mut().enumerate() {
        let column: Vec<f64> = (0..train.len()).map(|i| train.row(i)[f]).collect();
        *slot = mutual_information(&column, &train.y, MI_BINS)?;
    }
    Ok(out)
}

/// Runs every classifier × mode cell on every named dataset.
pub fn run_game(
    pairs: &[(String, &CiphertextDataset)],
    classifiers: &[Classifier],
    modes: &[InputMode],
    seed: u64,
) -> Result<AttackReport> {
    let mut reports = Vec::with_capacity(pairs.len());
    for (p, (name, dataset)) in pairs.iter().enumerate() {
        let mut cells = Vec::new();
        for (c, &classifier) in classifiers.iter().enumerate() {
            for (m, &mode) in modes.iter().enumerate() {
                let cell_seed = child_seed(seed, p as u64, (c * modes.len() + m) as u64);
                let outcome = evaluate_cell(dataset, classifier, mode, cell_seed)?;
                if let Some(o) = &outcome {
                    log::info!("{name} {} {}: accuracy {:.3} p {:.3e}", classifier.name(), mode.name(), o.accuracy, o.p_value);
                }
                cells.push(Cell { classifier, mode, outcome });
            }
        }
        reports.push(PairReport {
            name: name.clone(),
            regularizer_tag: dataset.regularizer_tag,
            n_train: dataset.train.len(),
            n_test: dataset.test.len(),
            mutual_information: feature_mutual_information(dataset)?,
            cells,
        });
    }
    Ok(AttackReport { pairs: reports })
}
