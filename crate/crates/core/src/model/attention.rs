use serde::Serialize;

use crate::autodiff::{bilstm_encode, Axis, BoundParams, NodeId, Tape};
use crate::error::{Error, Result};

use super::lstm_gates;

/// Record/word co-attention products, shapes fixed by construction:
/// `affinity` is `L_x x K`, `attn_words` (weights over records per word)
/// `L_x x K`, `attn_records` (weights over words per record) `K x L_x`,
/// `ctx_words` `2d x K`, `ctx_records` `4d x L_x`, and `fused` `2d x L_x`.
pub struct FusionBank {
    pub affinity: NodeId,
    pub attn_words: NodeId,
    pub attn_records: NodeId,
    pub ctx_words: NodeId,
    pub ctx_records: NodeId,
    pub fused: NodeId,
}

/// Affinity scores for every record/word pair: `R^T W`.
pub fn compute_affinity(tape: &mut Tape, r: NodeId, w: NodeId) -> Result<NodeId> {
    let (r_rows, _) = tape.value(r).shape();
    let (w_rows, _) = tape.value(w).shape();
    if r_rows != w_rows {
        return Err(Error::ShapeMismatch {
            context: "compute_affinity".into(),
            expected: format!("record bank height {r_rows}"),
            got: format!("reference bank height {w_rows}"),
        });
    }
    let rt = tape.transpose(r);
    Ok(tape.matmul(rt, w))
}

/// Both attention directions and their context banks. Each word's weights
/// over records sum to 1 (columns of `attn_words`); each record's weights
/// over words sum to 1 (columns of `attn_records`). The record contexts
/// stack the reference bank on top of the word contexts before weighting, so
/// reference-level attention rides on the record-level attention.
pub fn coattend(
    tape: &mut Tape,
    r: NodeId,
    w: NodeId,
    affinity: NodeId,
) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
    let attn_words = tape.softmax_axis(affinity, Axis::Cols)?;
    let affinity_t = tape.transpose(affinity);
    let attn_records = tape.softmax_axis(affinity_t, Axis::Cols)?;
    let ctx_words = tape.matmul(r, attn_words);
    let stacked = tape.concat_rows(&[w, ctx_words]);
    let ctx_records = tape.matmul(stacked, attn_records);
    Ok((attn_words, attn_records, ctx_words, ctx_records))
}

/// Smooth the fused per-record contexts with a bi-LSTM over record order.
pub fn fuse_bank(tape: &mut Tape, bound: &BoundParams, ctx_records: NodeId) -> Result<NodeId> {
    let n = tape.value(ctx_records).cols();
    let columns: Vec<NodeId> = (0..n).map(|j| tape.select_col(ctx_records, j)).collect();
    let fwd = lstm_gates(bound, "fusion.fwd");
    let bwd = lstm_gates(bound, "fusion.bwd");
    let out = bilstm_encode(tape, &fwd, &bwd, &columns)?;
    Ok(tape.concat_cols(&out.states))
}

/// The full chain: affinity, bidirectional attention, context banks, fusion.
pub fn interactive_attention(
    tape: &mut Tape,
    bound: &BoundParams,
    r: NodeId,
    w: NodeId,
) -> Result<FusionBank> {
    let affinity = compute_affinity(tape, r, w)?;
    let (attn_words, attn_records, ctx_words, ctx_records) = coattend(tape, r, w, affinity)?;
    let fused = fuse_bank(tape, bound, ctx_records)?;
    Ok(FusionBank {
        affinity,
        attn_words,
        attn_records,
        ctx_words,
        ctx_records,
        fused,
    })
}

/// Attention matrices as plain values, for the per-instance diagnostics dump.
#[derive(Clone, Debug, Serialize)]
pub struct AttentionDump {
    pub affinity: Vec<Vec<f64>>,
    pub attn_words: Vec<Vec<f64>>,
    pub attn_records: Vec<Vec<f64>>,
}

impl FusionBank {
    pub fn dump(&self, tape: &Tape) -> AttentionDump {
        let to_rows = |id: NodeId| {
            let t = tape.value(id);
            (0..t.rows())
                .map(|i| (0..t.cols()).map(|j| t.get(i, j) as f64).collect())
                .collect()
        };
        AttentionDump {
            affinity: to_rows(self.affinity),
            attn_words: to_rows(self.attn_words),
            attn_records: to_rows(self.attn_records),
        }
    }
}

/// Run the encoders and attention for one instance and dump the matrices.
/// Returns `None` for models built without interactive attention.
pub fn instance_attention_dump(
    params: &crate::autodiff::ParamStore,
    cfg: &super::ModelConfig,
    vocab: &crate::data::Vocab,
    x: &crate::data::Table,
    y_prime: &[String],
) -> Result<Option<AttentionDump>> {
    if cfg.no_inter_att {
        return Ok(None);
    }
    let mut tape = Tape::eval();
    let bound = BoundParams::bind(&mut tape, params);
    let ext = crate::data::ExtendedVocab::new(vocab, x);
    let ref_ids: Vec<usize> = y_prime.iter().map(|t| vocab.id(t)).collect();
    let enc =
        super::decoder::encode_instance(&mut tape, &bound, cfg, vocab, &ext, x, &ref_ids)?;
    Ok(enc.fusion.as_ref().map(|f| f.dump(&tape)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{AdamState, BoundParams, Scalar, Tensor};
    use crate::model::{init_params, ModelConfig};

    #[test]
    fn identity_banks_give_identity_affinity() {
        let mut tape = Tape::eval();
        let eye = Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = tape.constant(eye.clone());
        let w = tape.constant(eye.clone());
        let l = compute_affinity(&mut tape, r, w).unwrap();
        assert_eq!(tape.value(l), &eye);
    }

    #[test]
    fn orthogonal_vectors_have_zero_affinity() {
        let mut tape = Tape::eval();
        let r = tape.constant(Tensor::new(2, 1, vec![1.0, 0.0]).unwrap());
        let w = tape.constant(Tensor::new(2, 1, vec![0.0, 1.0]).unwrap());
        let l = compute_affinity(&mut tape, r, w).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn affinity_matches_double_loop_oracle() {
        // 3 records, 2 words in a 4-dim space vs naive dot products.
        let r_data = vec![
            0.3, -1.0, 0.5, //
            0.2, 0.7, -0.4, //
            -0.1, 0.0, 0.9, //
            1.2, 0.4, -0.6,
        ];
        let w_data = vec![
            0.5, -0.2, //
            -0.3, 0.8, //
            0.0, 0.4, //
            0.7, -0.5,
        ];
        let mut tape = Tape::eval();
        let r = tape.constant(Tensor::new(4, 3, r_data.clone()).unwrap());
        let w = tape.constant(Tensor::new(4, 2, w_data.clone()).unwrap());
        let l = compute_affinity(&mut tape, r, w).unwrap();
        assert_eq!(tape.value(l).shape(), (3, 2));
        for o in 0..3 {
            for k in 0..2 {
                let mut dot = 0.0;
                for i in 0..4 {
                    dot += r_data[i * 3 + o] * w_data[i * 2 + k];
                }
                assert!(
                    (tape.value(l).get(o, k) - dot).abs() < 1e-12,
                    "entry ({o},{k})"
                );
            }
        }
    }

    #[test]
    fn affinity_rejects_height_mismatch() {
        let mut tape = Tape::eval();
        let r = tape.constant(Tensor::zeros(4, 3));
        let w = tape.constant(Tensor::zeros(6, 2));
        assert!(compute_affinity(&mut tape, r, w).is_err());
    }

    #[test]
    fn coattend_shapes_and_normalization() {
        let mut tape = Tape::eval();
        let d2 = 4; // 2d
        let (l_x, k) = (3, 5);
        let r = tape.constant(Tensor::new(d2, l_x, (0..12).map(|v| v as Scalar * 0.1).collect()).unwrap());
        let w = tape.constant(Tensor::new(d2, k, (0..20).map(|v| (v as Scalar * 0.07).sin()).collect()).unwrap());
        let l = compute_affinity(&mut tape, r, w).unwrap();
        let (a_w, a_r, c_w, c_r) = coattend(&mut tape, r, w, l).unwrap();
        assert_eq!(tape.value(a_w).shape(), (l_x, k));
        assert_eq!(tape.value(a_r).shape(), (k, l_x));
        assert_eq!(tape.value(c_w).shape(), (d2, k));
        assert_eq!(tape.value(c_r).shape(), (2 * d2, l_x));
        let aw = tape.value(a_w);
        for j in 0..k {
            let s: Scalar = (0..l_x).map(|i| aw.get(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        let ar = tape.value(a_r);
        for j in 0..l_x {
            let s: Scalar = (0..k).map(|i| ar.get(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_affinity_averages_records() {
        let mut tape = Tape::eval();
        let r = tape.constant(Tensor::new(2, 2, vec![1.0, 3.0, 2.0, 4.0]).unwrap());
        let w = tape.constant(Tensor::zeros(2, 3));
        let l = tape.constant(Tensor::zeros(2, 3)); // all-equal affinity
        let (a_w, _, c_w, _) = coattend(&mut tape, r, w, l).unwrap();
        let aw = tape.value(a_w);
        for i in 0..2 {
            for j in 0..3 {
                assert!((aw.get(i, j) - 0.5).abs() < 1e-12);
            }
        }
        // Every word context is the mean record vector [2, 3].
        let cw = tape.value(c_w);
        for j in 0..3 {
            assert!((cw.get(0, j) - 2.0).abs() < 1e-12);
            assert!((cw.get(1, j) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_word_context_is_hand_weighted_sum() {
        // K = 1 with two records weighted [0.25, 0.75]: the lone word context
        // must equal 0.25*rc1 + 0.75*rc2. ln(3) in the affinity gives those
        // exact weights after the softmax.
        let mut tape = Tape::eval();
        let rc1 = [1.0, -2.0];
        let rc2 = [3.0, 5.0];
        let r = tape.constant(Tensor::new(2, 2, vec![rc1[0], rc2[0], rc1[1], rc2[1]]).unwrap());
        let w = tape.constant(Tensor::zeros(2, 1));
        let l = tape.constant(Tensor::new(2, 1, vec![0.0, (3.0 as Scalar).ln()]).unwrap());
        let (_, _, c_w, _) = coattend(&mut tape, r, w, l).unwrap();
        let cw = tape.value(c_w);
        for i in 0..2 {
            let expect = 0.25 * rc1[i] + 0.75 * rc2[i];
            assert!((cw.get(i, 0) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_bank_shape_and_composition() {
        let cfg = ModelConfig {
            d: 3,
            no_inter_att: false,
        };
        let params = init_params(&cfg, 10, 2, AdamState::new(0.001, 0.97));
        let mut tape = Tape::eval();
        let bound = BoundParams::bind(&mut tape, &params);
        let c_r = tape.constant(Tensor::new(
            12,
            4,
            (0..48).map(|v| (v as Scalar * 0.11).cos()).collect(),
        )
        .unwrap());
        let f = fuse_bank(&mut tape, &bound, c_r).unwrap();
        assert_eq!(tape.value(f).shape(), (6, 4)); // 2d x L_x

        // Equals a generic bi-LSTM pass over the same columns.
        let cols: Vec<NodeId> = (0..4).map(|j| tape.select_col(c_r, j)).collect();
        let fwd = lstm_gates(&bound, "fusion.fwd");
        let bwd = lstm_gates(&bound, "fusion.bwd");
        let raw = bilstm_encode(&mut tape, &fwd, &bwd, &cols).unwrap();
        let raw_f = tape.concat_cols(&raw.states);
        assert_eq!(tape.value(f), tape.value(raw_f));

        // Single-record edge case.
        let c_r1 = tape.constant(Tensor::new(12, 1, (0..12).map(|v| v as Scalar).collect()).unwrap());
        let f1 = fuse_bank(&mut tape, &bound, c_r1).unwrap();
        assert_eq!(tape.value(f1).shape(), (6, 1));
    }

    #[test]
    fn scaling_reference_bank_keeps_argmax_positions() {
        // Positive scaling of W scales affinity entries per-column, which
        // preserves each column's argmax, hence the pre-softmax ranking.
        let mut tape = Tape::eval();
        let r_data: Vec<Scalar> = (0..8).map(|v| ((v * 7 % 5) as Scalar - 2.0) * 0.3).collect();
        let w_data: Vec<Scalar> = (0..12).map(|v| ((v * 3 % 7) as Scalar - 3.0) * 0.2).collect();
        let r = tape.constant(Tensor::new(2, 4, r_data).unwrap());
        let w = tape.constant(Tensor::new(2, 6, w_data.clone()).unwrap());
        let w_scaled = {
            let scaled: Vec<Scalar> = w_data.iter().map(|v| v * 3.7).collect();
            tape.constant(Tensor::new(2, 6, scaled).unwrap())
        };
        let l1 = compute_affinity(&mut tape, r, w).unwrap();
        let l2 = compute_affinity(&mut tape, r, w_scaled).unwrap();
        let (v1, v2) = (tape.value(l1), tape.value(l2));
        for j in 0..6 {
            let argmax = |t: &Tensor| -> usize {
                (0..4)
                    .max_by(|&a, &b| t.get(a, j).partial_cmp(&t.get(b, j)).unwrap())
                    .unwrap()
            };
            assert_eq!(argmax(v1), argmax(v2), "column {j}");
        }
    }
}
