use super::*;
use crate::rng::seeded_stream;
use std::collections::HashSet;
use std::vec;

fn hex(bytes: &[u8]) -> std::string::String {
    bytes.iter().map(|b| std::format!("{b:02x}")).collect()
}

#[test]
fn hmac_matches_rfc4231() {
    let tc1 = hmac_sha256(&[0x0b; 20], b"Hi There");
    assert_eq!(hex(&tc1), "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
    let tc2 = hmac_sha256(b"Jefe", b"what do ya want for nothing?");
    assert_eq!(hex(&tc2), "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

#[test]
fn derive_key_is_deterministic_and_nonce_sensitive() {
    let k = SecretKey::from_bytes([7; 32]);
    assert_eq!(derive_key(&k, 42), derive_key(&k, 42));
    assert_ne!(derive_key(&k, 42), derive_key(&k, 43));
    assert_ne!(derive_key(&k, 42), derive_key(&SecretKey::from_bytes([8; 32]), 42));
    assert_eq!(derive_key(&k, 5), hmac_sha256(&[7; 32], &[5, 0, 0, 0, 0, 0, 0, 0]));
}

#[test]
fn keygen_yields_distinct_keys() {
    let mut rng = seeded_stream(1);
    let keys: HashSet<[u8; 32]> = (0..1000).map(|_| *SecretKey::generate(&mut rng).as_bytes()).collect();
    assert_eq!(keys.len(), 1000);
    assert!(SecretKey::from_slice(&[0; 31]).is_err());
    assert_eq!(std::format!("{:?}", SecretKey::from_bytes([1; 32])), "SecretKey(..)");
}

#[test]
fn prompts_are_canonical_v4_uuids() {
    let mut rng = seeded_stream(2);
    for _ in 0..200 {
        let p = make_prompt(&mut rng);
        assert_eq!(p.len(), 36);
        for (i, &c) in p.iter().enumerate() {
            if matches!(i, 8 | 13 | 18 | 23) {
                assert_eq!(c, b'-');
            } else {
                assert!(c.is_ascii_digit() || (b'a'..=b'f').contains(&c));
            }
        }
        assert_eq!(p[14], b'4');
        assert!(b"89ab".contains(&p[19]));
    }
    let ps = make_prompts(3, &mut rng).unwrap();
    assert_eq!(ps.len(), 3);
    assert!(ps[0] != ps[1] && ps[1] != ps[2] && ps[0] != ps[2]);
    assert!(make_prompts(0, &mut rng).is_err());
}

#[test]
fn chunking() {
    let tokens = [6, 4, 0, 8, 9, 3, 0];
    let chunks = chunk(&tokens, 6, 2).unwrap();
    assert_eq!(chunks, vec![vec![6, 4, 0, 8], vec![9, 3, 0]]);
    assert_eq!(chunk(&[1, 2], 6, 2).unwrap(), vec![vec![1, 2]]);
    assert!(chunk(&[1], 2, 2).is_err());
    let mut rng = seeded_stream(3);
    for _ in 0..100 {
        let n = rng.next_u32() as usize % 300;
        let t: Vec<Token> = (0..n).map(|_| rng.next_u32() % 256).collect();
        let ctx = 2 + rng.next_u32() as usize % 50;
        let pl = 1 + rng.next_u32() as usize % (ctx - 1);
        let parts = chunk(&t, ctx, pl).unwrap();
        assert!(parts.iter().all(|c| !c.is_empty() && c.len() <= ctx - pl));
        assert_eq!(parts.concat(), t);
    }
}

struct Fixture {
    config: ModelConfig,
    params: ModelParams,
}

impl Fixture {
    fn new() -> Self {
        let config = ModelConfig { vocab_size: 256, context_len: 48, n_layers: 1, n_heads: 2, d_model: 16, d_ff: 32 };
        let params = ModelParams::init(&config, 21);
        Self { config, params }
    }

    fn model(&self) -> BaseModel<'_> {
        BaseModel { config: &self.config, params: &self.params, id: [0xaa; 32] }
    }
}

fn train_config() -> TrainConfig {
    TrainConfig { d: 256, lr0: 1e-4, max_epochs: 3000, lr_decay_epochs: 3000, ..Default::default() }
}

#[test]
fn roundtrip_across_chunks() {
    let f = Fixture::new();
    let key = SecretKey::from_bytes([1; 32]);
    let mut rng = seeded_stream(4);
    // capacity is 12 tokens per chunk, so this needs two chunks
    let msg = b"attack at dawn!";
    let ct = encrypt(&key, msg, &f.model(), &train_config(), &mut rng).unwrap();
    assert_eq!(ct.chunks.len(), 2);
    assert_eq!(ct.token_count(), msg.len());
    assert_eq!(ct.d(), 256);
    assert_eq!(ct.flags, 0);
    assert_eq!(decrypt(&key, &ct, &f.model()).unwrap(), msg.to_vec());
}

#[test]
fn encryption_is_probabilistic_and_size_is_fixed() {
    let f = Fixture::new();
    let key = SecretKey::from_bytes([2; 32]);
    let mut rng = seeded_stream(5);
    let a = encrypt(&key, b"hello", &f.model(), &train_config(), &mut rng).unwrap();
    let b = encrypt(&key, b"hello", &f.model(), &train_config(), &mut rng).unwrap();
    assert_ne!(a.nonce, b.nonce);
    assert_ne!(a.theta, b.theta);
    let c = encrypt(&key, b"hi", &f.model(), &train_config(), &mut rng).unwrap();
    assert_eq!(a.d(), c.d());
}

#[test]
fn encrypt_with_is_deterministic() {
    let f = Fixture::new();
    let key = SecretKey::from_bytes([3; 32]);
    let prompts = vec![b"0f8a5c2e-3b1d-4e7f-9a6c-5d4e3f2a1b0c".to_vec()];
    let a = encrypt_with(&key, 9, &prompts, b"same", &f.model(), &train_config()).unwrap();
    let b = encrypt_with(&key, 9, &prompts, b"same", &f.model(), &train_config()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn wrong_key_and_tampering_do_not_recover_the_message() {
    let f = Fixture::new();
    let key = SecretKey::from_bytes([4; 32]);
    let mut rng = seeded_stream(6);
    let msg = b"secret msg".to_vec();
    for trial in 0..10 {
        let ct = encrypt(&key, &msg, &f.model(), &train_config(), &mut rng).unwrap();
        let other = SecretKey::generate(&mut rng);
        assert_ne!(decrypt(&other, &ct, &f.model()).unwrap(), msg, "trial {trial}");
        let mut tampered = ct.clone();
        let i = rng.next_u32() as usize % tampered.d();
        tampered.theta[i] += 0.05;
        assert_ne!(decrypt(&key, &tampered, &f.model()).unwrap(), msg, "trial {trial}");
    }
}

#[test]
fn model_mismatch_and_bad_inputs() {
    let f = Fixture::new();
    let key = SecretKey::from_bytes([5; 32]);
    let mut rng = seeded_stream(7);
    let ct = encrypt(&key, b"x", &f.model(), &train_config(), &mut rng).unwrap();
    let other = BaseModel { id: [0xbb; 32], ..f.model() };
    assert_eq!(decrypt(&key, &ct, &other), Err(Error::ModelMismatch));
    assert!(matches!(
        encrypt(&key, b"", &f.model(), &train_config(), &mut rng),
        Err(Error::EmptyInput(_))
    ));
    let mut broken = ct.clone();
    broken.chunks[0].token_count = 0;
    assert!(decrypt(&key, &broken, &f.model()).is_err());
}

#[test]
fn budget_exhaustion_is_reported() {
    let f = Fixture::new();
    let key = SecretKey::from_bytes([6; 32]);
    let mut rng = seeded_stream(8);
    let cfg = TrainConfig { max_epochs: 1, ..train_config() };
    assert_eq!(
        encrypt(&key, b"not memorized in one step", &f.model(), &cfg, &mut rng),
        Err(Error::BudgetExceeded { epochs: 1 })
    );
}

#[test]
fn nonces_stay_fresh_over_many_encryptions() {
    let f = Fixture::new();
    let key = SecretKey::from_bytes([8; 32]);
    let mut rng = seeded_stream(8);
    let mut nonces = HashSet::new();
    for _ in 0..1000 {
        let ct = encrypt(&key, b"x", &f.model(), &train_config(), &mut rng).unwrap();
        assert!(nonces.insert(ct.nonce));
    }
}
