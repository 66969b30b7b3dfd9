use proptest::prelude::*;
use selm::formats::*;
use selm_core::attack::{CiphertextDataset, Record};
use selm_core::cipher::{ChunkHeader, Ciphertext};
use selm_core::model::{ModelConfig, ModelParams};

const GOLDEN_CT: &[u8] = include_bytes!("golden/ciphertext.selm");
const GOLDEN_DS: &[u8] = include_bytes!("golden/dataset.slds");

fn golden_ciphertext() -> Ciphertext {
    Ciphertext {
        model_id: core::array::from_fn(|i| i as u8),
        flags: 2,
        nonce: 0x0123_4567_89ab_cdef,
        chunks: vec![
            ChunkHeader { prompt: b"123e4567-e89b-42d3-a456-426614174000".to_vec(), token_count: 92 },
            ChunkHeader { prompt: b"00000000-0000-4000-8000-000000000000".to_vec(), token_count: 7 },
        ],
        theta: vec![0.5, -1.25, 3.0517578125e-5, 1.0e30, -0.0],
    }
}

#[test]
fn golden_ciphertext_matches() {
    let expected = golden_ciphertext();
    assert_eq!(write_ciphertext(&expected).unwrap(), GOLDEN_CT);
    let parsed = read_ciphertext(GOLDEN_CT).unwrap();
    assert_eq!(parsed, expected);
    assert!(parsed.theta[4].is_sign_negative());
}

#[test]
fn golden_dataset_matches() {
    let ds = read_dataset(GOLDEN_DS, 0.5, 0).unwrap();
    assert_eq!(ds.d, 3);
    let labels: Vec<u8> = ds.records.iter().map(|r| r.label).collect();
    assert_eq!(labels, [0, 1, 0, 1]);
    assert_eq!(ds.records[1].theta, [-1.0, 0.25, 1.0e-3]);
    assert_eq!(ds.records[3].theta[2], 1.0e-20);
    assert_eq!(write_dataset(&ds).unwrap(), GOLDEN_DS);
}

#[test]
fn corrupt_files_are_rejected() {
    let mut bad = GOLDEN_CT.to_vec();
    bad[0] = b'X';
    assert!(matches!(read_ciphertext(&bad), Err(FormatError::Magic { .. })));
    let mut bad = GOLDEN_CT.to_vec();
    bad[4] = 9;
    assert_eq!(read_ciphertext(&bad), Err(FormatError::Version(9)));
    assert!(matches!(read_ciphertext(&GOLDEN_CT[..GOLDEN_CT.len() - 1]), Err(FormatError::Truncated { .. })));
    let mut long = GOLDEN_CT.to_vec();
    long.push(0);
    assert_eq!(read_ciphertext(&long), Err(FormatError::Trailing(1)));
    let mut bad = GOLDEN_CT.to_vec();
    bad[5] = 3;
    assert!(matches!(read_ciphertext(&bad), Err(FormatError::Invalid(_))));
    assert!(matches!(read_dataset(&GOLDEN_DS[..20], 0.5, 0), Err(FormatError::Truncated { .. })));
    assert!(read_dataset(GOLDEN_CT, 0.5, 0).is_err());
}

#[test]
fn checkpoint_roundtrip_and_id() {
    let config = ModelConfig { context_len: 16, n_layers: 1, n_heads: 2, d_model: 8, d_ff: 16, ..Default::default() };
    let mut params = ModelParams::init(&config, 3);
    params.round_to_f32();
    let bytes = write_checkpoint(&config, &params).unwrap();
    let ckpt = read_checkpoint(&bytes).unwrap();
    assert_eq!(ckpt.config, config);
    assert_eq!(ckpt.params, params);
    assert_eq!(ckpt.id, model_id(&bytes));
    let mut other = bytes.clone();
    *other.last_mut().unwrap() ^= 1;
    assert_ne!(model_id(&other), ckpt.id);

    let mut inexact = params.clone();
    inexact.flat[0] += 1e-12;
    assert!(write_checkpoint(&config, &inexact).is_err());
}

fn arb_ciphertext() -> impl Strategy<Value = Ciphertext> {
    (
        any::<[u8; 32]>(),
        0u8..=2,
        any::<u64>(),
        prop::collection::vec((prop::collection::vec(any::<u8>(), 1..40), 1u32..1000), 1..4),
        prop::collection::vec(any::<u32>().prop_map(f32::from_bits), 1..64),
    )
        .prop_map(|(model_id, flags, nonce, chunks, theta)| Ciphertext {
            model_id,
            flags,
            nonce,
            chunks: chunks.into_iter().map(|(prompt, token_count)| ChunkHeader { prompt, token_count }).collect(),
            theta,
        })
}

proptest! {
    #[test]
    fn ciphertext_roundtrip_is_bitwise(ct in arb_ciphertext()) {
        let bytes = write_ciphertext(&ct).unwrap();
        let back = read_ciphertext(&bytes).unwrap();
        prop_assert_eq!(write_ciphertext(&back).unwrap(), bytes);
        let a: Vec<u32> = ct.theta.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.theta.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(back.chunks, ct.chunks);
        prop_assert_eq!(back.nonce, ct.nonce);
    }

    #[test]
    fn ciphertext_size_is_header_plus_framing_plus_theta(ct in arb_ciphertext()) {
        let framing: usize = ct.chunks.iter().map(|c| 2 + c.prompt.len() + 4).sum();
        prop_assert_eq!(write_ciphertext(&ct).unwrap().len(), 52 + framing + 4 * ct.d());
    }

    #[test]
    fn distinct_ciphertexts_serialize_differently(a in arb_ciphertext(), b in arb_ciphertext()) {
        let (x, y) = (write_ciphertext(&a).unwrap(), write_ciphertext(&b).unwrap());
        let same_bits = a.theta.iter().map(|v| v.to_bits()).eq(b.theta.iter().map(|v| v.to_bits()));
        let equal = a.model_id == b.model_id && a.flags == b.flags && a.nonce == b.nonce && a.chunks == b.chunks && same_bits;
        prop_assert_eq!(x == y, equal);
    }

    #[test]
    fn dataset_roundtrip_is_bitwise(
        d in 1usize..16,
        n in 1usize..10,
        bits in prop::collection::vec(any::<u32>(), 16 * 20),
    ) {
        let mut records = Vec::new();
        for i in 0..2 * n {
            let theta = (0..d).map(|j| f32::from_bits(bits[(i * d + j) % bits.len()])).collect();
            records.push(Record { label: (i % 2) as u8, theta });
        }
        let ds = CiphertextDataset::new(d, records, 0.5, 1).unwrap();
        let bytes = write_dataset(&ds).unwrap();
        let back = read_dataset(&bytes, 0.5, 1).unwrap();
        prop_assert_eq!(write_dataset(&back).unwrap(), bytes);
        prop_assert_eq!(back.train, ds.train);
        prop_assert_eq!(back.test, ds.test);
    }
}
