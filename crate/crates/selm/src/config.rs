//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; a `#` after a value
//! starts a comment. Keys are unique. Relative paths are resolved against
//! the directory holding the file. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use selm_core::attack::{Classifier, InputMode};
use selm_core::training::{Regularizer, TrainConfig};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Every key a configuration file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "d",
    "lr0",
    "lr_decay_epochs",
    "grad_clip_l2",
    "max_epochs",
    "verify_every",
    "seed",
    "regularizer",
    "alpha",
    "sigma",
    "lambda_max",
    "warmup_epochs",
    "m0.domain",
    "m0.source",
    "m0.token_limit",
    "m0.seed",
    "m1.domain",
    "m1.source",
    "m1.token_limit",
    "m1.seed",
    "pair_name",
    "n_per_class",
    "train_frac",
    "max_retries",
    "classifiers",
    "modes",
    "jobs",
    "dataset_out",
    "calibration_messages",
];

/// Keys whose values are file paths.
const PATH_KEYS: &[&str] = &["model", "m0.source", "m1.source", "dataset_out"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl ConfigFile {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: n + 1, msg: "expected `key = value`".into() })?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey(key.into()));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Syntax { line: n + 1, msg: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { values, base_dir: base_dir.to_path_buf() })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::Value { key: key.into(), value: v.clone() }),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        debug_assert!(PATH_KEYS.contains(&key), "{key}");
        self.values.get(key).map(|v| self.base_dir.join(v))
    }

    pub fn list<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>> {
        let Some(raw) = self.values.get(key) else { return Ok(None) };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse(s).ok_or_else(|| ConfigError::Value { key: key.into(), value: s.into() }))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

/// Training overrides from the command line; `None` defers to the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOverrides {
    pub d: Option<usize>,
    pub lr0: Option<f64>,
    pub max_epochs: Option<usize>,
    pub regularizer: Option<String>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda_max: Option<f64>,
    pub warmup_epochs: Option<usize>,
    pub seed: Option<u64>,
}

/// Resolves a [`TrainConfig`]: flag, then file, then built-in default.
pub fn train_config(file: &ConfigFile, flags: &TrainOverrides) -> Result<TrainConfig> {
    let def = TrainConfig::default();
    let pick = |flag: Option<f64>, key: &str| -> Result<Option<f64>> { Ok(flag.or(file.get(key)?)) };
    let kind = match &flags.regularizer {
        Some(k) => Some(k.clone()),
        None => file.get::<String>("regularizer")?,
    };
    let lambda_max = pick(flags.lambda_max, "lambda_max")?;
    let warmup = flags.warmup_epochs.or(file.get("warmup_epochs")?).unwrap_or(500);
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| ConfigError::Invalid(format!("regularizer needs `{name}`")));
    let regularizer = match kind.as_deref().unwrap_or("none") {
        "none" => Regularizer::None,
        "l2_target" => Regularizer::L2Target {
            alpha: need(pick(flags.alpha, "alpha")?, "alpha")?,
            lambda_max: need(lambda_max, "lambda_max")?,
            warmup_epochs: warmup,
        },
        "wasserstein" => Regularizer::Wasserstein {
            sigma: need(pick(flags.sigma, "sigma")?, "sigma")?,
            lambda_max: need(lambda_max, "lambda_max")?,
            warmup_epochs: warmup,
        },
        other => return Err(ConfigError::Value { key: "regularizer".into(), value: other.into() }),
    };
    let cfg = TrainConfig {
        d: flags.d.or(file.get("d")?).unwrap_or(def.d),
        lr0: pick(flags.lr0, "lr0")?.unwrap_or(def.lr0),
        lr_decay_epochs: file.get("lr_decay_epochs")?.unwrap_or(def.lr_decay_epochs),
        grad_clip_l2: file.get("grad_clip_l2")?.unwrap_or(def.grad_clip_l2),
        max_epochs: flags.max_epochs.or(file.get("max_epochs")?).unwrap_or(def.max_epochs),
        verify_every: file.get("verify_every")?.unwrap_or(def.verify_every),
        regularizer,
        seed: flags.seed.or(file.get("seed")?).unwrap_or(def.seed),
    };
    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn parse_classifier(s: &str) -> Option<Classifier> {
    Classifier::from_name(s)
}

pub fn parse_mode(s: &str) -> Option<InputMode> {
    InputMode::from_name(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ConfigFile> {
        ConfigFile::parse(text, Path::new("/base"))
    }

    #[test]
    fn parses_comments_and_values() {
        let f = parse("# header\nd = 512  # trailing\n\nmodel=m.slmw\n").unwrap();
        assert_eq!(f.get::<usize>("d").unwrap(), Some(512));
        assert_eq!(f.get::<usize>("max_epochs").unwrap(), None);
        assert_eq!(f.path("model"), Some(PathBuf::from("/base/m.slmw")));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(parse("d 5"), Err(ConfigError::Syntax { line: 1, .. })));
        assert_eq!(parse("dd = 5"), Err(ConfigError::UnknownKey("dd".into())));
        assert!(matches!(parse("d = 1\nd = 2"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(parse("d = x").unwrap().get::<usize>("d"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn flags_override_file_and_defaults_fill_in() {
        let f = parse("d = 256\nmax_epochs = 50\nregularizer = wasserstein\nsigma = 0.1\nlambda_max = 10").unwrap();
        let flags = TrainOverrides { d: Some(128), ..Default::default() };
        let cfg = train_config(&f, &flags).unwrap();
        assert_eq!(cfg.d, 128);
        assert_eq!(cfg.max_epochs, 50);
        assert_eq!(cfg.lr0, TrainConfig::default().lr0);
        assert_eq!(cfg.regularizer, Regularizer::Wasserstein { sigma: 0.1, lambda_max: 10.0, warmup_epochs: 500 });
        let none = TrainOverrides { regularizer: Some("none".into()), ..Default::default() };
        assert_eq!(train_config(&f, &none).unwrap().regularizer, Regularizer::None);
    }

    #[test]
    fn regularizer_parameters_are_required() {
        let f = parse("regularizer = l2_target\nalpha = 1").unwrap();
        assert!(matches!(train_config(&f, &TrainOverrides::default()), Err(ConfigError::Invalid(_))));
        let f = parse("regularizer = bogus").unwrap();
        assert!(train_config(&f, &TrainOverrides::default()).is_err());
    }

    #[test]
    fn lists() {
        let f = parse("classifiers = knn, lda,svm\nmodes = features").unwrap();
        let c = f.list("classifiers", parse_classifier).unwrap().unwrap();
        assert_eq!(c, vec![Classifier::Knn, Classifier::Lda, Classifier::Svm]);
        assert_eq!(f.list("modes", parse_mode).unwrap().unwrap(), vec![InputMode::Features]);
        let bad = parse("modes = sideways").unwrap();
        assert!(bad.list("modes", parse_mode).is_err());
    }
}
