//! Files, entropy and the `selm` command line for the subspace-memorization
//! cipher implemented in `selm-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;

use std::sync::Mutex;

use selm_core::attack::{assemble, check_pair, corpus_jobs, run_job, CiphertextDataset, CorpusConfig};
use selm_core::cipher::{BaseModel, SecretKey};
use selm_core::training::TrainConfig;

/// Bundled public-domain English sample text.
pub const SAMPLE_CORPUS: &str = include_str!("../data/sample_corpus.txt");

/// Corpus generation spread over `threads` workers; the output equals the
/// sequential `selm_core::attack::generate_corpus` for the same inputs.
pub fn generate_corpus_parallel(
    key: &SecretKey,
    m0: &[u8],
    m1: &[u8],
    model: &BaseModel<'_>,
    train_config: &TrainConfig,
    corpus: &CorpusConfig,
    threads: usize,
) -> selm_core::Result<CiphertextDataset> {
    check_pair(m0, m1)?;
    let jobs = corpus_jobs(corpus.n_per_class);
    let results: Mutex<Vec<Option<selm_core::Result<Vec<f32>>>>> = Mutex::new(vec![None; jobs.len()]);
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..threads.max(1).min(jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("job counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&job) = jobs.get(i) else { break };
                let msg = if job.label == 0 { m0 } else { m1 };
                let out = run_job(key, msg, job, model, train_config, corpus).map(|(theta, failures)| {
                    if failures > 0 {
                        log::info!("label {} item {}: {failures} failed attempts", job.label, job.index);
                    }
                    theta
                });
                let failed = out.is_err();
                results.lock().expect("results")[i] = Some(out);
                if failed {
                    // stop handing out work; the error is reported below
                    *next.lock().expect("job counter") = jobs.len();
                }
            });
        }
    });
    let mut thetas = Vec::with_capacity(jobs.len());
    for r in results.into_inner().expect("results") {
        match r {
            Some(Ok(theta)) => thetas.push(theta),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    if thetas.len() != jobs.len() {
        return Err(selm_core::Error::Precondition("corpus generation stopped early".into()));
    }
    assemble(&jobs, thetas, train_config.d, corpus, train_config.regularizer.tag())
}
