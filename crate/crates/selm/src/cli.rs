//! The `selm` command line.
//!
//! Every failure prints a single `error[<class>]: <message>` line on stderr
//! and exits with the class's code from [`CliError::exit_code`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand_core::{OsRng, RngCore};
use selm_core::attack::{run_game, Classifier, CorpusConfig, InputMode};
use selm_core::cipher::{self, BaseModel, SecretKey};
use selm_core::corpus::{parse_wordlist, sample_message, wordlist_from_text, MessageSource};
use selm_core::math::{l2_norm, median};
use selm_core::model::{pretrain, ModelConfig};
use selm_core::rng::{child_seed, seeded_stream};
use selm_core::training::{Regularizer, TrainConfig};

use crate::config::{self, ConfigFile, TrainOverrides};
use crate::error::{CliError, Result};
use crate::formats::{self, Checkpoint};
use crate::io;

const KEY_TAG: u64 = 0x4b45_5953;
const MASTER_TAG: u64 = 0x4d41_5354;
const MESSAGE_TAG: u64 = 0x4d53_4753;

#[derive(Debug, Parser)]
#[command(name = "selm", version, about = "Symmetric encryption by memorization in a key-derived subspace")]
pub struct Cli {
    /// More log output; repeat for per-epoch training detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// `key = value` configuration file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random draw except keys and nonces.
    #[arg(long, global = true, env = "SELM_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a fresh 32-byte key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Derive the key from this seed instead of OS entropy. Testing only.
        #[arg(long)]
        insecure_seed: Option<u64>,
    },
    /// Initialize a base model and pre-train it on a byte corpus.
    Pretrain {
        /// Training text; defaults to the bundled sample corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        arch: ArchArgs,
    },
    /// Memorize a file under a key.
    Encrypt {
        #[command(flatten)]
        io: CipherIo,
        #[command(flatten)]
        train: TrainArgs,
        /// Draw the nonce and prompts from this seed instead of OS entropy. Testing only.
        #[arg(long)]
        insecure_seed: Option<u64>,
    },
    /// Recover a file from a ciphertext.
    Decrypt {
        #[command(flatten)]
        io: CipherIo,
    },
    /// Write one message sampled from a domain.
    GenCorpus {
        #[arg(long, value_parser = ["text_file", "random_words", "random_bytes"])]
        domain: String,
        /// Text corpus or newline-separated wordlist; defaults to the bundled sample corpus.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        tokens: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the distinguishing game described by the configuration file.
    Attack {
        /// Machine-readable `key=value` report.
        #[arg(long)]
        out: PathBuf,
        /// Parallel encryptions during corpus generation.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also save the ciphertext dataset.
        #[arg(long)]
        dataset_out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Estimate regularizer targets from unregularized ciphertext norms.
    Calibrate {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Write the `alpha`/`sigma` lines here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Debug, Args)]
pub struct ArchArgs {
    #[arg(long)]
    pub context_len: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CipherIo {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long, value_parser = ["none", "l2_target", "wasserstein"])]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
}

impl TrainArgs {
    fn overrides(&self, seed: Option<u64>) -> TrainOverrides {
        TrainOverrides {
            d: self.d,
            lr0: self.lr0,
            max_epochs: self.max_epochs,
            regularizer: self.regularizer.clone(),
            alpha: self.alpha,
            sigma: self.sigma,
            lambda_max: self.lambda_max,
            warmup_epochs: self.warmup_epochs,
            seed,
        }
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

pub fn run(cli: &Cli) -> Result<()> {
    let file = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Keygen { out, insecure_seed } => cmd_keygen(out, *insecure_seed),
        Command::Pretrain { corpus, steps, out, arch } => {
            cmd_pretrain(corpus.as_deref(), *steps, out, arch, cli.seed.unwrap_or(0))
        }
        Command::Encrypt { io, train, insecure_seed } => {
            let tc = config::train_config(&file, &train.overrides(cli.seed))?;
            cmd_encrypt(&file, io, &tc, *insecure_seed)
        }
        Command::Decrypt { io } => cmd_decrypt(&file, io),
        Command::GenCorpus { domain, source, tokens, out } => {
            cmd_gen_corpus(domain, source.as_deref(), *tokens, out, cli.seed)
        }
        Command::Attack { out, jobs, model, dataset_out, train } => {
            let tc = config::train_config(&file, &train.overrides(cli.seed))?;
            let opts = AttackOptions {
                out: out.clone(),
                jobs: jobs.or(file.get("jobs")?).unwrap_or(1),
                model: model.clone().or_else(|| file.path("model")),
                dataset_out: dataset_out.clone().or_else(|| file.path("dataset_out")),
                seed: cli.seed.or(file.get("seed")?),
            };
            cmd_attack(&file, &tc, &opts)
        }
        Command::Calibrate { model, out, train } => {
            let tc = config::train_config(&file, &train.overrides(cli.seed))?;
            let model = model.clone().or_else(|| file.path("model"));
            let seed = cli.seed.or(file.get("seed")?).unwrap_or(0);
            let text = cmd_calibrate(&file, &tc, model.as_deref(), seed)?;
            print!("{text}");
            if let Some(out) = out {
                io::write_atomic(out, text.as_bytes())?;
            }
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let bytes = io::read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Config(config::ConfigError::Invalid(format!("{}: not UTF-8", path.display()))))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(ConfigFile::parse(&text, base)?)
}

fn load_model(path: Option<&Path>) -> Result<Checkpoint> {
    let path = path.ok_or_else(|| CliError::Usage("no model checkpoint given (--model or `model` key)".into()))?;
    let ckpt = io::read_checkpoint(path)?;
    log::info!("model {} ({} parameters)", formats::model_id_hex(&ckpt.id), ckpt.params.len());
    Ok(ckpt)
}

fn base_model(ckpt: &Checkpoint) -> BaseModel<'_> {
    BaseModel { config: &ckpt.config, params: &ckpt.params, id: ckpt.id }
}

fn os_seed() -> Result<u64> {
    let mut b = [0u8; 8];
    OsRng.try_fill_bytes(&mut b).map_err(|e| CliError::Entropy(e.to_string()))?;
    Ok(u64::from_le_bytes(b))
}

fn cmd_keygen(out: &Path, insecure_seed: Option<u64>) -> Result<()> {
    let key = match insecure_seed {
        Some(seed) => {
            log::warn!("deriving the key from a seed; do not use it for real data");
            SecretKey::generate(&mut seeded_stream(child_seed(seed, KEY_TAG, 0)))
        }
        None => io::os_key()?,
    };
    io::write_key(out, &key)
}

fn cmd_pretrain(corpus: Option<&Path>, steps: usize, out: &Path, arch: &ArchArgs, seed: u64) -> Result<()> {
    let def = ModelConfig::default();
    let config = ModelConfig {
        context_len: arch.context_len.unwrap_or(def.context_len),
        n_layers: arch.layers.unwrap_or(def.n_layers),
        n_heads: arch.heads.unwrap_or(def.n_heads),
        d_model: arch.d_model.unwrap_or(def.d_model),
        d_ff: arch.d_ff.unwrap_or(def.d_ff),
        ..def
    };
    let text = match corpus {
        Some(p) => io::read(p)?,
        None => crate::SAMPLE_CORPUS.as_bytes().to_vec(),
    };
    log::info!("pre-training {} parameters for {steps} steps", config.param_count());
    let params = pretrain(&config, &text, steps, seed)?;
    let bytes = formats::write_checkpoint(&config, &params).map_err(|e| CliError::format(out, e))?;
    io::write_atomic(out, &bytes)?;
    println!("{}", formats::model_id_hex(&formats::model_id(&bytes)));
    Ok(())
}

fn cmd_encrypt(file: &ConfigFile, args: &CipherIo, tc: &TrainConfig, insecure_seed: Option<u64>) -> Result<()> {
    let key = io::read_key(&args.key)?;
    let ckpt = load_model(args.model.clone().or_else(|| file.path("model")).as_deref())?;
    let message = io::read(&args.input)?;
    let ct = match insecure_seed {
        Some(seed) => {
            log::warn!("nonce and prompts drawn from a seed; do not use for real data");
            cipher::encrypt(&key, &message, &base_model(&ckpt), tc, &mut seeded_stream(seed))?
        }
        None => {
            // probe the entropy source so a failure surfaces as an error, not a panic
            os_seed()?;
            cipher::encrypt(&key, &message, &base_model(&ckpt), tc, &mut OsRng)?
        }
    };
    let bytes = formats::write_ciphertext(&ct).map_err(|e| CliError::format(&args.out, e))?;
    io::write_atomic(&args.out, &bytes)?;
    log::info!("{} tokens in {} chunk(s), d = {}", ct.token_count(), ct.chunks.len(), ct.d());
    Ok(())
}

fn cmd_decrypt(file: &ConfigFile, args: &CipherIo) -> Result<()> {
    eprintln!("warning: ciphertexts are not authenticated; a wrong key or altered ciphertext decrypts to unrelated bytes without error");
    let key = io::read_key(&args.key)?;
    let ckpt = load_model(args.model.clone().or_else(|| file.path("model")).as_deref())?;
    let bytes = io::read(&args.input)?;
    let ct = formats::read_ciphertext(&bytes).map_err(|e| CliError::format(&args.input, e))?;
    let plain = cipher::decrypt(&key, &ct, &base_model(&ckpt))?;
    io::write_atomic(&args.out, &plain)
}

/// Owned message source: a text corpus or a wordlist.
enum SourceData {
    Text(Vec<u8>),
    Words(Vec<String>),
    Bytes,
}

impl SourceData {
    fn load(domain: &str, path: Option<&Path>) -> Result<Self> {
        match domain {
            "random_bytes" => Ok(SourceData::Bytes),
            "text_file" => Ok(SourceData::Text(match path {
                Some(p) => io::read(p)?,
                None => crate::SAMPLE_CORPUS.as_bytes().to_vec(),
            })),
            "random_words" => Ok(SourceData::Words(match path {
                Some(p) => parse_wordlist(&String::from_utf8_lossy(&io::read(p)?)),
                None => wordlist_from_text(crate::SAMPLE_CORPUS),
            })),
            other => Err(CliError::Usage(format!("unknown domain `{other}`"))),
        }
    }

    fn source(&self) -> MessageSource<'_> {
        match self {
            SourceData::Text(t) => MessageSource::Text(t),
            SourceData::Words(w) => MessageSource::Words(w),
            SourceData::Bytes => MessageSource::RandomBytes,
        }
    }
}

fn cmd_gen_corpus(domain: &str, source: Option<&Path>, tokens: usize, out: &Path, seed: Option<u64>) -> Result<()> {
    let seed = match seed {
        Some(s) => s,
        None => os_seed()?,
    };
    let data = SourceData::load(domain, source)?;
    let msg = sample_message(&data.source(), tokens, seed)?;
    io::write_atomic(out, &msg)
}

/// One challenge message as described by the `m0.*` or `m1.*` keys.
fn challenge_message(file: &ConfigFile, prefix: &str, master: u64, index: u64) -> Result<Vec<u8>> {
    let domain: String = file
        .get(&format!("{prefix}.domain"))?
        .ok_or_else(|| CliError::Usage(format!("configuration needs `{prefix}.domain`")))?;
    let limit = file.get(&format!("{prefix}.token_limit"))?.unwrap_or(100);
    let seed = file.get(&format!("{prefix}.seed"))?.unwrap_or(child_seed(master, MESSAGE_TAG, index));
    let data = SourceData::load(&domain, file.path(&format!("{prefix}.source")).as_deref())?;
    Ok(sample_message(&data.source(), limit, seed)?)
}

/// Both challenge messages cut to their common length.
fn challenge_pair(file: &ConfigFile, master: u64) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut m0 = challenge_message(file, "m0", master, 0)?;
    let mut m1 = challenge_message(file, "m1", master, 1)?;
    let n = m0.len().min(m1.len());
    if m0.len() != m1.len() {
        log::info!("truncating challenge messages to {n} tokens");
        m0.truncate(n);
        m1.truncate(n);
    }
    Ok((m0, m1))
}

struct AttackOptions {
    out: PathBuf,
    jobs: usize,
    model: Option<PathBuf>,
    dataset_out: Option<PathBuf>,
    seed: Option<u64>,
}

fn cmd_attack(file: &ConfigFile, tc: &TrainConfig, opts: &AttackOptions) -> Result<()> {
    let seed = match opts.seed {
        Some(s) => s,
        None => os_seed()?,
    };
    let ckpt = load_model(opts.model.as_deref())?;
    let (m0, m1) = challenge_pair(file, seed)?;
    // the challenger's key comes from the seed so that the whole report is reproducible
    let key = SecretKey::generate(&mut seeded_stream(child_seed(seed, KEY_TAG, 1)));
    let def = CorpusConfig::default();
    let corpus = CorpusConfig {
        n_per_class: file.get("n_per_class")?.unwrap_or(def.n_per_class),
        train_frac: file.get("train_frac")?.unwrap_or(def.train_frac),
        master_seed: child_seed(seed, MASTER_TAG, 0),
        max_retries: file.get("max_retries")?.unwrap_or(def.max_retries),
    };
    let classifiers = file.list("classifiers", config::parse_classifier)?.unwrap_or(Classifier::ALL.to_vec());
    let modes = file.list("modes", config::parse_mode)?.unwrap_or(InputMode::ALL.to_vec());
    let name: String = file.get("pair_name")?.unwrap_or_else(|| "m0_m1".into());

    log::info!("generating {} ciphertexts per class with {} worker(s)", corpus.n_per_class, opts.jobs);
    let ds = crate::generate_corpus_parallel(&key, &m0, &m1, &base_model(&ckpt), tc, &corpus, opts.jobs)?;
    if let Some(path) = &opts.dataset_out {
        let bytes = formats::write_dataset(&ds).map_err(|e| CliError::format(path, e))?;
        io::write_atomic(path, &bytes)?;
    }
    let report = run_game(&[(name, &ds)], &classifiers, &modes, child_seed(seed, MASTER_TAG, 1))?;
    io::write_atomic(&opts.out, formats::report_key_values(&report).as_bytes())?;
    print!("{}", formats::report_table(&report));
    Ok(())
}

/// Encrypts `calibration_messages` messages per challenge domain without a
/// regularizer and returns `alpha` (median θ^d norm) and `sigma = alpha/√d`
/// as configuration lines.
fn cmd_calibrate(file: &ConfigFile, tc: &TrainConfig, model: Option<&Path>, seed: u64) -> Result<String> {
    let ckpt = load_model(model)?;
    let n: u64 = file.get("calibration_messages")?.unwrap_or(5);
    if n == 0 {
        return Err(CliError::Usage("calibration_messages must be >= 1".into()));
    }
    let key = SecretKey::generate(&mut seeded_stream(child_seed(seed, KEY_TAG, 2)));
    let tc = TrainConfig { regularizer: Regularizer::None, ..*tc };
    let mut norms = Vec::new();
    for i in 0..n {
        let (m0, m1) = challenge_pair(file, child_seed(seed, MESSAGE_TAG, i))?;
        for (j, msg) in [m0, m1].iter().enumerate() {
            let mut rng = seeded_stream(child_seed(seed, MASTER_TAG + 1, 2 * i + j as u64));
            let ct = cipher::encrypt(&key, msg, &base_model(&ckpt), &tc, &mut rng)?;
            let theta: Vec<f64> = ct.theta.iter().map(|&t| t as f64).collect();
            norms.push(l2_norm(&theta));
        }
    }
    let alpha = median(&norms).ok_or_else(|| CliError::Usage("no calibration messages".into()))?;
    let sigma = alpha / (tc.d as f64).sqrt();
    log::info!("{} norms, median {alpha:.6e}", norms.len());
    Ok(format!("alpha = {alpha:.6e}\nsigma = {sigma:.6e}\n"))
}
