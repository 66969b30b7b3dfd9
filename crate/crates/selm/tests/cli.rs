use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MICRO_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/micro.conf");

fn selm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selm"))
        .current_dir(dir)
        .env_remove("SELM_SEED")
        .args(args)
        .output()
        .expect("spawn selm")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = selm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A temp dir holding a small model, two keys and a message.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let p = dir.path();
        ok(p, &["--seed", "4", "pretrain", "--steps", "0", "--context-len", "48", "--layers", "1", "--heads", "2", "--d-model", "16", "--d-ff", "32", "--out", "m.slmw"]);
        ok(p, &["keygen", "--out", "k.key"]);
        ok(p, &["keygen", "--out", "k2.key", "--insecure-seed", "9"]);
        std::fs::write(p.join("msg.txt"), b"meet at the old mill").unwrap();
        Self { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn encrypt(&self, key: &str, out: &str, extra: &[&str]) -> Output {
        let mut args = vec!["encrypt", "--key", key, "--model", "m.slmw", "--in", "msg.txt", "--out", out];
        args.extend_from_slice(&["--d", "256", "--lr0", "1e-4"]);
        if !extra.contains(&"--max-epochs") {
            args.extend_from_slice(&["--max-epochs", "3000"]);
        }
        args.extend_from_slice(extra);
        selm(self.path(), &args)
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path().join(name)).unwrap()
    }
}

#[test]
fn encrypt_decrypt_roundtrip() {
    let f = Fixture::new();
    assert!(f.encrypt("k.key", "c.selm", &[]).status.success());
    let out = ok(f.path(), &["decrypt", "--key", "k.key", "--model", "m.slmw", "--in", "c.selm", "--out", "back.txt"]);
    assert_eq!(f.read("back.txt"), f.read("msg.txt"));
    assert!(stderr(&out).contains("not authenticated"));
}

#[test]
fn insecure_seed_makes_encryption_reproducible() {
    let f = Fixture::new();
    assert!(f.encrypt("k.key", "a.selm", &["--insecure-seed", "5"]).status.success());
    assert!(f.encrypt("k.key", "b.selm", &["--insecure-seed", "5"]).status.success());
    assert!(f.encrypt("k.key", "c.selm", &[]).status.success());
    assert_eq!(f.read("a.selm"), f.read("b.selm"));
    assert_ne!(f.read("a.selm"), f.read("c.selm"));
}

#[test]
fn wrong_key_decrypts_to_other_bytes_with_warning() {
    let f = Fixture::new();
    assert!(f.encrypt("k.key", "c.selm", &[]).status.success());
    let out = ok(f.path(), &["decrypt", "--key", "k2.key", "--model", "m.slmw", "--in", "c.selm", "--out", "x.txt"]);
    assert_ne!(f.read("x.txt"), f.read("msg.txt"));
    assert!(stderr(&out).starts_with("warning:"));
}

#[test]
fn error_classes_and_exit_codes() {
    let f = Fixture::new();
    let p = f.path();
    assert!(f.encrypt("k.key", "c.selm", &[]).status.success());

    let out = f.encrypt("k.key", "never.selm", &["--max-epochs", "1"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).starts_with("error[budget]:"));
    assert!(!p.join("never.selm").exists());

    ok(p, &["--seed", "5", "pretrain", "--steps", "0", "--context-len", "48", "--layers", "1", "--heads", "2", "--d-model", "16", "--d-ff", "32", "--out", "other.slmw"]);
    let out = selm(p, &["decrypt", "--key", "k.key", "--model", "other.slmw", "--in", "c.selm", "--out", "x"]);
    assert_eq!(out.status.code(), Some(6));
    assert!(stderr(&out).contains("error[model-mismatch]:"));

    let out = selm(p, &["decrypt", "--key", "k.key", "--model", "m.slmw", "--in", "missing", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("error[io]:"));

    std::fs::write(p.join("bad.selm"), b"SELM\x01").unwrap();
    let out = selm(p, &["decrypt", "--key", "k.key", "--model", "m.slmw", "--in", "bad.selm", "--out", "x"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("error[format]:"));

    std::fs::write(p.join("bad.conf"), "nonsense = 1\n").unwrap();
    let out = selm(p, &["--config", "bad.conf", "decrypt", "--key", "k.key", "--model", "m.slmw", "--in", "c.selm", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[config]:"));

    std::fs::write(p.join("empty.txt"), b"").unwrap();
    let out = selm(p, &["encrypt", "--key", "k.key", "--model", "m.slmw", "--in", "empty.txt", "--out", "x"]);
    assert_eq!(out.status.code(), Some(8));
    assert!(stderr(&out).contains("error[input]:"));

    assert_eq!(selm(p, &["frobnicate"]).status.code(), Some(2));
    // every error report is a single line
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);
}

#[test]
fn keygen_writes_private_32_byte_keys() {
    let f = Fixture::new();
    assert_eq!(f.read("k.key").len(), 32);
    assert_ne!(f.read("k.key"), f.read("k2.key"));
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(f.path().join("k.key")).unwrap().permissions().mode();
        assert_eq!(mode & 0o777, 0o600);
    }
    ok(f.path(), &["keygen", "--out", "k3.key", "--insecure-seed", "9"]);
    assert_eq!(f.read("k3.key"), f.read("k2.key"));
}

#[test]
fn gen_corpus_is_seeded() {
    let f = Fixture::new();
    let p = f.path();
    ok(p, &["--seed", "3", "gen-corpus", "--domain", "random_bytes", "--tokens", "50", "--out", "a.bin"]);
    ok(p, &["--seed", "3", "gen-corpus", "--domain", "random_bytes", "--tokens", "50", "--out", "b.bin"]);
    assert_eq!(f.read("a.bin").len(), 50);
    assert_eq!(f.read("a.bin"), f.read("b.bin"));

    ok(p, &["--seed", "3", "gen-corpus", "--domain", "text_file", "--tokens", "40", "--out", "t.txt"]);
    let text = f.read("t.txt");
    assert_eq!(text.len(), 40);
    assert!(selm::SAMPLE_CORPUS.as_bytes().windows(40).any(|w| w == text));

    std::fs::write(p.join("words.txt"), "alpha\nbeta\ngamma\n").unwrap();
    ok(p, &["--seed", "3", "gen-corpus", "--domain", "random_words", "--source", "words.txt", "--tokens", "30", "--out", "w.txt"]);
    let words = String::from_utf8(f.read("w.txt")).unwrap();
    assert!(words.len() <= 30);
    assert!(words.split(' ').all(|w| ["alpha", "beta", "gamma"].contains(&w)));
}

fn micro_attack(p: &Path, out: &str, jobs: &str) -> Output {
    ok(p, &["--config", MICRO_CONFIG, "--seed", "1", "attack", "--model", "m.slmw", "--out", out, "--jobs", jobs, "--dataset-out", "ds.slds"])
}

#[test]
fn attack_micro_config_reports_every_cell() {
    let f = Fixture::new();
    let p = f.path();
    let out = micro_attack(p, "r1.txt", "2");
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("text_vs_bytes"));
    let report = String::from_utf8(f.read("r1.txt")).unwrap();
    for clf in ["knn", "lda", "ffnn", "svm", "gradboost"] {
        for mode in ["full", "features"] {
            let key = format!("pair.text_vs_bytes.{clf}.{mode}.status=");
            assert!(report.contains(&key), "missing {key}");
        }
    }
    assert!(report.contains("pair.text_vs_bytes.svm.full.status=absent"));
    assert!(report.contains("pair.text_vs_bytes.lda.features.p_value="));
    assert!(report.contains("pair.text_vs_bytes.mi.std="));

    let ds = selm::formats::read_dataset(&f.read("ds.slds"), 0.75, 0).unwrap();
    assert_eq!(ds.records.len(), 24);
    assert_eq!(ds.d, 128);

    micro_attack(p, "r2.txt", "1");
    assert_eq!(f.read("r1.txt"), f.read("r2.txt"));
}

#[test]
fn calibrate_prints_alpha_and_sigma() {
    let f = Fixture::new();
    let out = ok(f.path(), &["--config", MICRO_CONFIG, "--seed", "1", "calibrate", "--model", "m.slmw", "--out", "cal.conf"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    let (alpha, sigma) = (value("alpha"), value("sigma"));
    assert!(alpha > 0.0);
    assert!((sigma - alpha / 128f64.sqrt()).abs() <= 1e-6 * sigma);
    assert_eq!(f.read("cal.conf"), text.as_bytes());
    // the written lines are valid configuration
    selm::config::ConfigFile::parse(&text, &PathBuf::from(".")).unwrap();
}
