//! Little-endian binary formats: model checkpoints, ciphertexts and
//! ciphertext datasets, plus the attack report text formats.
//!
//! | file        | layout                                                                 |
//! |-------------|------------------------------------------------------------------------|
//! | checkpoint  | `"SLMW"` · ver u8 · 6 × u32 config · D × f32                           |
//! | ciphertext  | `"SELM"` · ver u8 · flags u8 · model_id 32 B · d u32 · nonce u64 ·      |
//! |             | chunk_count u16 · per chunk (prompt_len u16, prompt, token_count u32) · |
//! |             | d × f32                                                                |
//! | dataset     | `"SLDS"` · ver u8 · d u32 · n u32 · n × (label u8, d × f32)            |
//!
//! A model's id is the SHA-256 of its checkpoint bytes.

use std::fmt::Write as _;

use selm_core::attack::{AttackReport, CiphertextDataset, Record, FEATURE_NAMES};
use selm_core::cipher::{ChunkHeader, Ciphertext};
use selm_core::model::{ModelConfig, ModelParams};
use sha2::{Digest, Sha256};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SLMW";
pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"SELM";
pub const DATASET_MAGIC: &[u8; 4] = b"SLDS";
pub const VERSION: u8 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    Magic { expected: &'static str },
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("truncated input: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid field: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, FormatError>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let rest = self.buf.len() - self.pos;
        if n > rest {
            return Err(FormatError::Truncated { offset: self.pos, needed: n - rest });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| FormatError::Invalid("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect())
    }

    fn header(&mut self, magic: &'static [u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(FormatError::Magic { expected: std::str::from_utf8(magic).expect("ascii magic") });
        }
        match self.u8()? {
            VERSION => Ok(()),
            v => Err(FormatError::Version(v)),
        }
    }

    fn finish(self) -> Result<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::Trailing(n)),
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| FormatError::Invalid(format!("{what} exceeds u32")))
}

/// Serializes a checkpoint; parameters must be exactly representable as `f32`.
pub fn write_checkpoint(config: &ModelConfig, params: &ModelParams) -> Result<Vec<u8>> {
    if params.len() != config.param_count() {
        return Err(FormatError::Invalid("parameter count does not match config".into()));
    }
    if params.flat.iter().any(|&v| v as f32 as f64 != v) {
        return Err(FormatError::Invalid("parameters are not f32-exact".into()));
    }
    let mut out = Vec::with_capacity(29 + 4 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(VERSION);
    for v in [config.vocab_size, config.context_len, config.n_layers, config.n_heads, config.d_model, config.d_ff] {
        out.extend_from_slice(&to_u32(v, "config field")?.to_le_bytes());
    }
    put_f32s(&mut out, params.flat.iter().map(|&v| v as f32));
    Ok(out)
}

/// A loaded checkpoint with its id.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub id: [u8; 32],
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.header(CHECKPOINT_MAGIC)?;
    let mut f = [0usize; 6];
    for slot in &mut f {
        *slot = r.u32()? as usize;
    }
    let config = ModelConfig {
        vocab_size: f[0],
        context_len: f[1],
        n_layers: f[2],
        n_heads: f[3],
        d_model: f[4],
        d_ff: f[5],
    };
    config.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    let flat = r.f32s(config.param_count())?.into_iter().map(f64::from).collect();
    r.finish()?;
    Ok(Checkpoint { config, params: ModelParams { flat }, id: model_id(bytes) })
}

pub fn model_id(checkpoint_bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(checkpoint_bytes).into()
}

pub fn write_ciphertext(ct: &Ciphertext) -> Result<Vec<u8>> {
    ct.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(CIPHERTEXT_MAGIC);
    out.push(VERSION);
    out.push(ct.flags);
    out.extend_from_slice(&ct.model_id);
    out.extend_from_slice(&to_u32(ct.d(), "d")?.to_le_bytes());
    out.extend_from_slice(&ct.nonce.to_le_bytes());
    out.extend_from_slice(&(ct.chunks.len() as u16).to_le_bytes());
    for c in &ct.chunks {
        out.extend_from_slice(&(c.prompt.len() as u16).to_le_bytes());
        out.extend_from_slice(&c.prompt);
        out.extend_from_slice(&c.token_count.to_le_bytes());
    }
    put_f32s(&mut out, ct.theta.iter().copied());
    Ok(out)
}

pub fn read_ciphertext(bytes: &[u8]) -> Result<Ciphertext> {
    let mut r = Reader::new(bytes);
    r.header(CIPHERTEXT_MAGIC)?;
    let flags = r.u8()?;
    if flags > 2 {
        return Err(FormatError::Invalid(format!("unknown regularizer flag {flags}")));
    }
    let model_id = r.array::<32>()?;
    let d = r.u32()? as usize;
    let nonce = r.u64()?;
    let n_chunks = r.u16()? as usize;
    let mut chunks = Vec::with_capacity(n_chunks);
    for _ in 0..n_chunks {
        let len = r.u16()? as usize;
        let prompt = r.take(len)?.to_vec();
        let token_count = r.u32()?;
        chunks.push(ChunkHeader { prompt, token_count });
    }
    let theta = r.f32s(d)?;
    r.finish()?;
    let ct = Ciphertext { model_id, flags, nonce, chunks, theta };
    ct.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(ct)
}

pub fn write_dataset(ds: &CiphertextDataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + ds.records.len() * (1 + 4 * ds.d));
    out.extend_from_slice(DATASET_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&to_u32(ds.d, "d")?.to_le_bytes());
    out.extend_from_slice(&to_u32(ds.records.len(), "record count")?.to_le_bytes());
    for rec in &ds.records {
        if rec.theta.len() != ds.d {
            return Err(FormatError::Invalid("record length differs from d".into()));
        }
        out.push(rec.label);
        put_f32s(&mut out, rec.theta.iter().copied());
    }
    Ok(out)
}

/// Parses records; the split is recomputed from `train_frac`.
pub fn read_dataset(bytes: &[u8], train_frac: f64, regularizer_tag: u8) -> Result<CiphertextDataset> {
    let mut r = Reader::new(bytes);
    r.header(DATASET_MAGIC)?;
    let d = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut records = Vec::with_capacity(n.min(bytes.len()));
    for _ in 0..n {
        let label = r.u8()?;
        let theta = r.f32s(d)?;
        records.push(Record { label, theta });
    }
    r.finish()?;
    CiphertextDataset::new(d, records, train_frac, regularizer_tag).map_err(|e| FormatError::Invalid(e.to_string()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn model_id_hex(id: &[u8; 32]) -> String {
    hex(id)
}

fn regularizer_name(tag: u8) -> &'static str {
    match tag {
        0 => "none",
        1 => "l2_target",
        2 => "wasserstein",
        _ => "unknown",
    }
}

/// Machine-readable report: one `key=value` line per fact, keyed
/// `pair.<name>.<classifier>.<mode>.<field>` and `pair.<name>.mi.<feature>`.
/// Reserved classifiers appear with `status=absent`.
pub fn report_key_values(report: &AttackReport) -> String {
    let mut s = String::from("# selm attack report v1\n");
    for p in &report.pairs {
        let base = format!("pair.{}", p.name);
        let _ = writeln!(s, "{base}.regularizer={}", regularizer_name(p.regularizer_tag));
        let _ = writeln!(s, "{base}.n_train={}", p.n_train);
        let _ = writeln!(s, "{base}.n_test={}", p.n_test);
        for (name, mi) in FEATURE_NAMES.iter().zip(&p.mutual_information) {
            let _ = writeln!(s, "{base}.mi.{name}={mi:.6}");
        }
        for c in &p.cells {
            let key = format!("{base}.{}.{}", c.classifier.name(), c.mode.name());
            match &c.outcome {
                None => {
                    let _ = writeln!(s, "{key}.status=absent");
                }
                Some(o) => {
                    let _ = writeln!(s, "{key}.status=ok");
                    let _ = writeln!(s, "{key}.correct={}", o.correct);
                    let _ = writeln!(s, "{key}.n_test={}", o.n_test);
                    let _ = writeln!(s, "{key}.accuracy={:.6}", o.accuracy);
                    let _ = writeln!(s, "{key}.p_value={:.6e}", o.p_value);
                    let _ = writeln!(s, "{key}.reject_null={}", o.reject_null);
                    if let Some(k) = o.k {
                        let _ = writeln!(s, "{key}.k={k}");
                    }
                }
            }
        }
    }
    s
}

/// Human-readable table: one row per pair and input mode, one column per classifier.
pub fn report_table(report: &AttackReport) -> String {
    let mut s = String::new();
    for p in &report.pairs {
        let _ = writeln!(
            s,
            "pair {} (regularizer {}, {} train / {} test)",
            p.name,
            regularizer_name(p.regularizer_tag),
            p.n_train,
            p.n_test
        );
        let mut classifiers = Vec::new();
        let mut modes = Vec::new();
        for c in &p.cells {
            if !classifiers.contains(&c.classifier) {
                classifiers.push(c.classifier);
            }
            if !modes.contains(&c.mode) {
                modes.push(c.mode);
            }
        }
        let _ = write!(s, "  {:<10}", "input");
        for c in &classifiers {
            let _ = write!(s, " {:>12}", c.name());
        }
        s.push('\n');
        for m in &modes {
            let _ = write!(s, "  {:<10}", m.name());
            for c in &classifiers {
                let cell = p.cells.iter().find(|x| x.classifier == *c && x.mode == *m);
                let text = match cell.and_then(|x| x.outcome.as_ref()) {
                    None => "-".to_string(),
                    Some(o) => format!("{:.2}{}", o.accuracy, if o.reject_null { "*" } else { "" }),
                };
                let _ = write!(s, " {text:>12}");
            }
            s.push('\n');
        }
        let _ = write!(s, "  mutual information (nats):");
        for (name, mi) in FEATURE_NAMES.iter().zip(&p.mutual_information) {
            let _ = write!(s, " {name}={mi:.3}");
        }
        s.push('\n');
    }
    s.push_str("* rejects the random-guessing null at p < 0.05; - not evaluated\n");
    s
}
