//! The encoder/attention/decoder model: hierarchical record encoder,
//! reference encoder, record/word co-attention with a fusion LSTM, and an
//! LSTM decoder with joint attention and a record-copy mechanism.

pub mod attention;
pub mod decoder;
pub mod encoders;

pub use attention::{compute_affinity, coattend, fuse_bank, interactive_attention, FusionBank};
pub use decoder::{
    beam_search, decode_step, greedy_decode, init_decoder_state, Banks, DecodeCtx, DecoderState,
    GenOptions, GenerationResult, StepDistribution, StepNodes,
};
pub use encoders::{encode_reference, encode_table, RecordBank, ReferenceBank};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamState, BoundParams, LstmGates, ParamStore, Scalar, Tensor};

/// Architecture knobs. `d` is both the embedding and the hidden size. With
/// `no_inter_att` the decoder attends over the record and reference banks
/// separately instead of the fused bank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub no_inter_att: bool,
}

impl ModelConfig {
    /// Context width the decoder sees: `2d` fused, `2d + 2d` split.
    pub fn ctx_width(&self) -> usize {
        if self.no_inter_att {
            4 * self.d
        } else {
            2 * self.d
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: Scalar) -> Scalar {
    // Box-Muller; one draw per call keeps the stream simple and seedable.
    let u1: Scalar = rng.gen_range(Scalar::EPSILON..1.0);
    let u2: Scalar = rng.gen();
    std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI as Scalar * u2).cos()
}

fn gaussian_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: Scalar) -> Tensor {
    let data = (0..rows * cols).map(|_| gaussian(rng, std)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn insert_lstm(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d: usize, d_in: usize) {
    for gate in ["i", "f", "o", "g"] {
        store.insert(
            &format!("{prefix}.w_{gate}"),
            gaussian_tensor(rng, d, d_in + d, INIT_STD),
        );
        store.insert(&format!("{prefix}.b_{gate}"), Tensor::zeros(d, 1));
    }
}

const INIT_STD: Scalar = 0.1;

/// Initialize every trainable tensor: zero-mean Gaussian weights (std 0.1),
/// zero biases. The single embedding table is shared by summary tokens,
/// entities, types, values and the feature markers.
pub fn init_params(cfg: &ModelConfig, vocab_len: usize, seed: u64, adam: AdamState) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new(adam);
    let d = cfg.d;

    store.insert("embed", gaussian_tensor(&mut rng, d, vocab_len, INIT_STD));

    for dir in ["fwd", "bwd"] {
        insert_lstm(&mut store, &mut rng, &format!("enc_rec.{dir}"), d, 4 * d);
        insert_lstm(&mut store, &mut rng, &format!("enc_row.{dir}"), d, 2 * d);
        insert_lstm(&mut store, &mut rng, &format!("enc_ref.{dir}"), d, d);
        if !cfg.no_inter_att {
            insert_lstm(&mut store, &mut rng, &format!("fusion.{dir}"), d, 4 * d);
        }
    }
    insert_lstm(&mut store, &mut rng, "dec", d, d);

    store.insert("dec_init.w", gaussian_tensor(&mut rng, d, 2 * d, INIT_STD));
    store.insert("dec_init.b", Tensor::zeros(d, 1));

    if cfg.no_inter_att {
        store.insert("attn_rec.w", gaussian_tensor(&mut rng, d, 2 * d, INIT_STD));
        store.insert("attn_ref.w", gaussian_tensor(&mut rng, d, 2 * d, INIT_STD));
    } else {
        store.insert("attn.w", gaussian_tensor(&mut rng, d, 2 * d, INIT_STD));
    }

    let gate_in = d + cfg.ctx_width() + d;
    store.insert("gate.w", gaussian_tensor(&mut rng, 1, gate_in, INIT_STD));
    store.insert("gate.b", Tensor::zeros(1, 1));

    let out_in = d + cfg.ctx_width();
    store.insert(
        "out.w",
        gaussian_tensor(&mut rng, vocab_len, out_in, INIT_STD),
    );
    store.insert("out.b", Tensor::zeros(vocab_len, 1));

    store
}

/// Fetch the bound gate handles of one LSTM direction by prefix, e.g.
/// `enc_rec.fwd` or `dec`.
pub fn lstm_gates(bound: &BoundParams, prefix: &str) -> LstmGates {
    LstmGates {
        w_i: bound.node(&format!("{prefix}.w_i")),
        w_f: bound.node(&format!("{prefix}.w_f")),
        w_o: bound.node(&format!("{prefix}.w_o")),
        w_g: bound.node(&format!("{prefix}.w_g")),
        b_i: bound.node(&format!("{prefix}.b_i")),
        b_f: bound.node(&format!("{prefix}.b_f")),
        b_o: bound.node(&format!("{prefix}.b_o")),
        b_g: bound.node(&format!("{prefix}.b_g")),
    }
}
