use alloc::vec::Vec;
use core::ops::Range;

use super::ModelConfig;

/// Offsets of one transformer block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_gain: Range<usize>,
    pub ln1_bias: Range<usize>,
    pub w_qkv: Range<usize>,
    pub b_qkv: Range<usize>,
    pub w_attn_out: Range<usize>,
    pub b_attn_out: Range<usize>,
    pub ln2_gain: Range<usize>,
    pub ln2_bias: Range<usize>,
    pub w_fc: Range<usize>,
    pub b_fc: Range<usize>,
    pub w_mlp_out: Range<usize>,
    pub b_mlp_out: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub wte: Range<usize>,
    pub wpe: Range<usize>,
    pub layers: Vec<LayerOffsets>,
    pub lnf_gain: Range<usize>,
    pub lnf_bias: Range<usize>,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let c = config.d_model;
        let f = config.d_ff;
        let mut cur = Cursor(0);
        let wte = cur.take(config.vocab_size * c);
        let wpe = cur.take(config.context_len * c);
        let layers = (0..config.n_layers)
            .map(|_| LayerOffsets {
                ln1_gain: cur.take(c),
                ln1_bias: cur.take(c),
                w_qkv: cur.take(c * 3 * c),
                b_qkv: cur.take(3 * c),
                w_attn_out: cur.take(c * c),
                b_attn_out: cur.take(c),
                ln2_gain: cur.take(c),
                ln2_bias: cur.take(c),
                w_fc: cur.take(c * f),
                b_fc: cur.take(f),
                w_mlp_out: cur.take(f * c),
                b_mlp_out: cur.take(c),
            })
            .collect();
        let lnf_gain = cur.take(c);
        let lnf_bias = cur.take(c);
        Self { wte, wpe, layers, lnf_gain, lnf_bias, total: cur.0 }
    }
}
