use serde::Serialize;

use crate::autodiff::{lstm_cell, Axis, BoundParams, NodeId, ParamStore, Tape, Tensor};
use crate::data::vocab::{BOS, EOS};
use crate::data::{ExtendedVocab, Table, Vocab};
use crate::error::{Error, Result};

use super::encoders::{encode_reference, encode_table, RecordBank, ReferenceBank};
use super::{interactive_attention, lstm_gates, FusionBank, ModelConfig};

/// What the decoder attends over: the fusion feature bank, or (without
/// interactive attention) the record and reference banks separately.
pub enum Banks {
    Fused { f: NodeId },
    Split { r: NodeId, w: NodeId },
}

/// Per-instance decoding context: the banks, the constant copy map that
/// scatters record attention onto value tokens (`(V+E) x L_x`, one 1 per
/// record), and the extended vocabulary split.
pub struct DecodeCtx {
    pub banks: Banks,
    pub copy_map: NodeId,
    pub base_len: usize,
    pub extra_len: usize,
}

/// Recurrent decoder state. `prev_token` is an extended-vocabulary id; ids
/// beyond the base vocabulary embed as UNK.
#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub h: NodeId,
    pub c: NodeId,
    pub step: usize,
    pub prev_token: usize,
}

impl DecoderState {
    pub fn with_prev(mut self, token: usize) -> Self {
        self.prev_token = token;
        self
    }
}

/// Graph handles produced by one decoding step: record attention `alpha`
/// (`1 x L_x`), the copy gate (`1 x 1`), the generation distribution padded
/// to the extended vocabulary, and the mixed distribution `p`.
pub struct StepNodes {
    pub alpha: NodeId,
    pub gate: NodeId,
    pub beta: NodeId,
    pub p: NodeId,
}

/// Plain-value view of a step's distributions.
#[derive(Clone, Debug)]
pub struct StepDistribution {
    pub alpha: Vec<f64>,
    pub gate: f64,
    pub beta: Vec<f64>,
    pub p: Vec<f64>,
}

impl StepNodes {
    pub fn values(&self, tape: &Tape) -> StepDistribution {
        StepDistribution {
            alpha: tape.value(self.alpha).data().iter().map(|&v| v as f64).collect(),
            gate: tape.value(self.gate).item() as f64,
            beta: tape.value(self.beta).data().iter().map(|&v| v as f64).collect(),
            p: tape.value(self.p).data().iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Decoder start state: `h = tanh(W table_rep + b)`, zero cell, BOS as the
/// previous token.
pub fn init_decoder_state(tape: &mut Tape, bound: &BoundParams, table_rep: NodeId) -> DecoderState {
    let w = bound.node("dec_init.w");
    let b = bound.node("dec_init.b");
    let wx = tape.matmul(w, table_rep);
    let z = tape.add(wx, b);
    let h = tape.tanh(z);
    let d = tape.value(h).rows();
    let c = tape.constant(Tensor::zeros(d, 1));
    DecoderState {
        h,
        c,
        step: 0,
        prev_token: BOS,
    }
}

/// Constant scatter matrix mapping record offsets to their value tokens in
/// the extended vocabulary. Records sharing a value share a row, so copy
/// mass aggregates over them.
pub fn build_copy_map(tape: &mut Tape, ext: &ExtendedVocab, table: &Table) -> NodeId {
    let mut m = Tensor::zeros(ext.total(), table.len());
    for (o, rec) in table.linearize().iter().enumerate() {
        m.set(ext.id(&rec.value), o, 1.0);
    }
    tape.constant(m)
}

/// Mix the copy and generation distributions with the gate:
/// `p = g * copy + (1 - g) * beta`.
pub fn mix_copy_generate(
    tape: &mut Tape,
    gate: NodeId,
    copy_dist: NodeId,
    beta_ext: NodeId,
) -> NodeId {
    let g_copy = tape.scale_by(gate, copy_dist);
    let one_minus = tape.affine(gate, -1.0, 1.0);
    let g_gen = tape.scale_by(one_minus, beta_ext);
    tape.add(g_copy, g_gen)
}

/// One decoding step: advance the LSTM on the previous token's embedding,
/// attend over the banks from the new hidden state, gate a copy distribution
/// over record values against the vocabulary softmax, and mix them.
///
/// The caller fixes the next input with [`DecoderState::with_prev`] (gold
/// token under teacher forcing, sampled/argmax token during search).
pub fn decode_step(
    tape: &mut Tape,
    bound: &BoundParams,
    ctx: &DecodeCtx,
    ext: &ExtendedVocab,
    state: &DecoderState,
) -> Result<(StepNodes, DecoderState)> {
    let embed = bound.node("embed");
    let emb = tape.embed(embed, &[ext.embeddable(state.prev_token)]);
    let dec = lstm_gates(bound, "dec");
    let (h, c) = lstm_cell(tape, &dec, emb, state.h, state.c)?;
    let ht = tape.transpose(h);

    let attend = |tape: &mut Tape, wa: NodeId, bank: NodeId| -> Result<(NodeId, NodeId)> {
        let hw = tape.matmul(ht, wa);
        let scores = tape.matmul(hw, bank);
        let alpha = tape.softmax_axis(scores, Axis::Rows)?;
        let alpha_col = tape.transpose(alpha);
        let context = tape.matmul(bank, alpha_col);
        Ok((alpha, context))
    };

    let (alpha, context) = match &ctx.banks {
        Banks::Fused { f } => attend(tape, bound.node("attn.w"), *f)?,
        Banks::Split { r, w } => {
            let (alpha_r, ctx_r) = attend(tape, bound.node("attn_rec.w"), *r)?;
            let (_alpha_w, ctx_w) = attend(tape, bound.node("attn_ref.w"), *w)?;
            let context = tape.concat_rows(&[ctx_r, ctx_w]);
            (alpha_r, context)
        }
    };

    let gate_in = tape.concat_rows(&[h, context, emb]);
    let gw = bound.node("gate.w");
    let gb = bound.node("gate.b");
    let g_lin = tape.matmul(gw, gate_in);
    let g_z = tape.add(g_lin, gb);
    let gate = tape.sigmoid(g_z);

    let pre = tape.concat_rows(&[h, context]);
    let pre = tape.dropout(pre);
    let ow = bound.node("out.w");
    let ob = bound.node("out.b");
    let logits_lin = tape.matmul(ow, pre);
    let logits = tape.add(logits_lin, ob);
    let beta = tape.softmax_axis(logits, Axis::Cols)?;
    let beta_ext = if ctx.extra_len > 0 {
        let zeros = tape.constant(Tensor::zeros(ctx.extra_len, 1));
        tape.concat_rows(&[beta, zeros])
    } else {
        beta
    };

    let alpha_col = tape.transpose(alpha);
    let copy_dist = tape.matmul(ctx.copy_map, alpha_col);
    let p = mix_copy_generate(tape, gate, copy_dist, beta_ext);

    Ok((
        StepNodes {
            alpha,
            gate,
            beta: beta_ext,
            p,
        },
        DecoderState {
            h,
            c,
            step: state.step + 1,
            prev_token: state.prev_token,
        },
    ))
}

/// Everything the decoder needs for one instance, encoded on the tape.
pub struct EncodedInstance {
    pub record_bank: RecordBank,
    pub reference_bank: ReferenceBank,
    pub fusion: Option<FusionBank>,
    pub ctx: DecodeCtx,
    pub init_state: DecoderState,
}

pub fn encode_instance(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    ext: &ExtendedVocab,
    table: &Table,
    reference_ids: &[usize],
) -> Result<EncodedInstance> {
    let record_bank = encode_table(tape, bound, vocab, table)?;
    let reference_bank = encode_reference(tape, bound, reference_ids)?;
    let (banks, fusion) = if cfg.no_inter_att {
        (
            Banks::Split {
                r: record_bank.r,
                w: reference_bank.w,
            },
            None,
        )
    } else {
        let fb = interactive_attention(tape, bound, record_bank.r, reference_bank.w)?;
        (Banks::Fused { f: fb.fused }, Some(fb))
    };
    let copy_map = build_copy_map(tape, ext, table);
    let init_state = init_decoder_state(tape, bound, record_bank.table_rep);
    Ok(EncodedInstance {
        record_bank,
        reference_bank,
        fusion,
        ctx: DecodeCtx {
            banks,
            copy_map,
            base_len: ext.base_len(),
            extra_len: ext.total() - ext.base_len(),
        },
        init_state,
    })
}

/// Search settings. Defaults match the document-scale decoding setup:
/// beam 5, minimum length 150, maximum length 850.
#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    pub beam: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            beam: 5,
            min_len: 150,
            max_len: 850,
        }
    }
}

/// Copy/attention trace of one emission step.
#[derive(Clone, Debug, Serialize)]
pub struct StepTrace {
    pub alpha: Vec<f64>,
    pub gate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankedHypothesis {
    pub tokens: Vec<String>,
    pub score: f64,
}

/// Best decoded sequence plus its traces and the ranked beam.
#[derive(Clone, Debug)]
pub struct GenerationResult {
    /// Content tokens of the best hypothesis (terminator excluded).
    pub tokens: Vec<String>,
    pub token_ids: Vec<usize>,
    /// Length-normalized log-probability (token count includes the
    /// terminator emission).
    pub score: f64,
    /// One trace per emission, terminator included, so
    /// `steps.len() == tokens.len() + 1`.
    pub steps: Vec<StepTrace>,
    /// All finished hypotheses, best first; scores are non-increasing.
    pub beam: Vec<RankedHypothesis>,
}

struct Hypothesis {
    state: DecoderState,
    logprob: f64,
    tokens: Vec<usize>,
    traces: Vec<StepTrace>,
}

fn normalized(logprob: f64, content_len: usize) -> f64 {
    logprob / (content_len + 1) as f64
}

/// Length-normalized beam search. The terminator is forbidden while the
/// hypothesis is shorter than `min_len` and forced once it reaches
/// `max_len`; finished hypotheses are ranked by normalized score.
pub fn beam_search(
    params: &ParamStore,
    cfg: &ModelConfig,
    vocab: &Vocab,
    x: &Table,
    y_prime: &[String],
    opts: &GenOptions,
) -> Result<GenerationResult> {
    if opts.beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    if opts.max_len == 0 || opts.min_len > opts.max_len {
        return Err(Error::Config(format!(
            "invalid decode lengths: min {} max {}",
            opts.min_len, opts.max_len
        )));
    }

    let mut tape = Tape::eval();
    let bound = BoundParams::bind(&mut tape, params);
    let ext = ExtendedVocab::new(vocab, x);
    let ref_ids: Vec<usize> = y_prime.iter().map(|t| vocab.id(t)).collect();
    let enc = encode_instance(&mut tape, &bound, cfg, vocab, &ext, x, &ref_ids)?;

    let mut live = vec![Hypothesis {
        state: enc.init_state,
        logprob: 0.0,
        tokens: Vec::new(),
        traces: Vec::new(),
    }];
    // Finished pool entries: (hypothesis, normalized score).
    let mut done: Vec<(Hypothesis, f64)> = Vec::new();

    while !live.is_empty() {
        // One step per parent; expansions share the parent's new state.
        let mut steps = Vec::with_capacity(live.len());
        for hyp in &live {
            let (nodes, next) = decode_step(&mut tape, &bound, &enc.ctx, &ext, &hyp.state)?;
            let dist = nodes.values(&tape);
            steps.push((dist, next));
        }

        // (parent, token, cumulative logprob); token == EOS finishes.
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        for (pi, (hyp, (dist, _))) in live.iter().zip(&steps).enumerate() {
            if hyp.tokens.len() == opts.max_len {
                candidates.push((pi, EOS, hyp.logprob + dist.p[EOS].ln()));
                continue;
            }
            for (tok, &prob) in dist.p.iter().enumerate() {
                if tok == EOS && hyp.tokens.len() < opts.min_len {
                    continue;
                }
                candidates.push((pi, tok, hyp.logprob + prob.ln()));
            }
        }
        candidates.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.0.cmp(&b.0))
        });

        let mut next_live: Vec<Hypothesis> = Vec::with_capacity(opts.beam);
        for &(pi, tok, logprob) in &candidates {
            let parent = &live[pi];
            let (dist, next_state) = &steps[pi];
            let trace = StepTrace {
                alpha: dist.alpha.clone(),
                gate: dist.gate,
            };
            if tok == EOS {
                let mut traces = parent.traces.clone();
                traces.push(trace);
                let score = normalized(logprob, parent.tokens.len());
                done.push((
                    Hypothesis {
                        state: *next_state,
                        logprob,
                        tokens: parent.tokens.clone(),
                        traces,
                    },
                    score,
                ));
            } else if next_live.len() < opts.beam {
                let mut tokens = parent.tokens.clone();
                tokens.push(tok);
                let mut traces = parent.traces.clone();
                traces.push(trace);
                next_live.push(Hypothesis {
                    state: next_state.with_prev(tok),
                    logprob,
                    tokens,
                    traces,
                });
            }
        }
        done.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.tokens.cmp(&b.0.tokens)));
        done.truncate(opts.beam.max(1));
        live = next_live;
    }

    let beam: Vec<RankedHypothesis> = done
        .iter()
        .map(|(hyp, score)| RankedHypothesis {
            tokens: hyp.tokens.iter().map(|&t| ext.token(t).to_string()).collect(),
            score: *score,
        })
        .collect();
    let (best, score) = done.into_iter().next().expect("finished pool is non-empty");
    Ok(GenerationResult {
        tokens: best.tokens.iter().map(|&t| ext.token(t).to_string()).collect(),
        token_ids: best.tokens,
        score,
        steps: best.traces,
        beam,
    })
}

/// Greedy decoding is beam search with a single beam.
pub fn greedy_decode(
    params: &ParamStore,
    cfg: &ModelConfig,
    vocab: &Vocab,
    x: &Table,
    y_prime: &[String],
    min_len: usize,
    max_len: usize,
) -> Result<GenerationResult> {
    beam_search(
        params,
        cfg,
        vocab,
        x,
        y_prime,
        &GenOptions {
            beam: 1,
            min_len,
            max_len,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{AdamState, Scalar};
    use crate::data::{build_vocab, tokenize, Feature, Instance};
    use crate::model::init_params;

    fn fixture(no_inter_att: bool) -> (ParamStore, Vocab, Table, Vec<String>, ModelConfig) {
        let x = Table::new(vec![
            ("smith".into(), "pts".into(), "25".into(), Feature::Home),
            ("smith".into(), "reb".into(), "7".into(), Feature::Home),
            ("jones".into(), "pts".into(), "11".into(), Feature::Visiting),
            ("jones".into(), "reb".into(), "7".into(), Feature::Visiting),
        ])
        .unwrap();
        let y_prime = tokenize("walker posted 3 points and 4 rebounds .");
        let inst = Instance {
            id: "f".into(),
            x: x.clone(),
            x_prime: None,
            y_prime: y_prime.clone(),
            y_aux: Some(tokenize("smith scored 25 points .")),
        };
        let vocab = build_vocab(&[inst], 1);
        let cfg = ModelConfig {
            d: 4,
            no_inter_att,
        };
        let params = init_params(&cfg, vocab.len(), 77, AdamState::new(0.001, 0.97));
        (params, vocab, x, y_prime, cfg)
    }

    #[test]
    fn init_state_is_deterministic_and_zero_maps_to_zero() {
        let (params, vocab, x, y_prime, cfg) = fixture(false);
        let run = || {
            let mut tape = Tape::eval();
            let bound = BoundParams::bind(&mut tape, &params);
            let ext = ExtendedVocab::new(&vocab, &x);
            let ids: Vec<usize> = y_prime.iter().map(|t| vocab.id(t)).collect();
            let enc = encode_instance(&mut tape, &bound, &cfg, &vocab, &ext, &x, &ids).unwrap();
            tape.value(enc.init_state.h).data().to_vec()
        };
        assert_eq!(run(), run());

        // Zero table representation and zero bias give h = tanh(0) = 0.
        let mut tape = Tape::eval();
        let bound = BoundParams::bind(&mut tape, &params);
        let zero_rep = tape.constant(Tensor::zeros(8, 1));
        let st = init_decoder_state(&mut tape, &bound, zero_rep);
        assert!(tape.value(st.h).data().iter().all(|&v| v == 0.0));
        assert_eq!(st.prev_token, BOS);
    }

    #[test]
    fn first_step_loss_reaches_table_representation() {
        let (params, vocab, x, y_prime, cfg) = fixture(false);
        let mut tape = Tape::eval();
        let bound = BoundParams::bind(&mut tape, &params);
        let ext = ExtendedVocab::new(&vocab, &x);
        let ids: Vec<usize> = y_prime.iter().map(|t| vocab.id(t)).collect();
        let enc = encode_instance(&mut tape, &bound, &cfg, &vocab, &ext, &x, &ids).unwrap();
        let (nodes, _) = decode_step(&mut tape, &bound, &enc.ctx, &ext, &enc.init_state).unwrap();
        let loss = tape.nll_pick(nodes.p, vocab.id("smith"));
        tape.backward(loss).unwrap();
        // dec_init.w only touches the loss through table_rep.
        let g = tape.grad(bound.node("dec_init.w")).unwrap();
        assert!(g.data().iter().any(|&v| v != 0.0));
    }

    fn mix_with(gate: Scalar) -> (Vec<Scalar>, usize, usize) {
        // Two records with values "3" (offset 0) and "4" (offset 1);
        // alpha = [0.6, 0.4]; beta(3) = 0.3, beta(4) = 0.7.
        let x = Table::new(vec![
            ("kay".into(), "pts".into(), "3".into(), Feature::Home),
            ("kay".into(), "reb".into(), "4".into(), Feature::Home),
        ])
        .unwrap();
        let inst = Instance {
            id: "m".into(),
            x: x.clone(),
            x_prime: None,
            y_prime: tokenize("kay had 3 points and 4 rebounds ."),
            y_aux: None,
        };
        let vocab = build_vocab(&[inst], 1);
        let (id3, id4) = (vocab.id("3"), vocab.id("4"));
        let mut tape = Tape::eval();
        let ext = ExtendedVocab::new(&vocab, &x);
        let copy_map = build_copy_map(&mut tape, &ext, &x);
        let alpha = tape.constant(Tensor::new(1, 2, vec![0.6, 0.4]).unwrap());
        let alpha_col = tape.transpose(alpha);
        let copy_dist = tape.matmul(copy_map, alpha_col);
        let mut beta_data = vec![0.0; ext.total()];
        beta_data[id3] = 0.3;
        beta_data[id4] = 0.7;
        let beta = tape.constant(Tensor::column(&beta_data));
        let g = tape.constant(Tensor::scalar(gate));
        let p = mix_copy_generate(&mut tape, g, copy_dist, beta);
        (tape.value(p).data().to_vec(), id3, id4)
    }

    #[test]
    fn gate_zero_is_generation_only() {
        let (p, id3, id4) = mix_with(0.0);
        assert!((p[id3] - 0.3).abs() < 1e-12);
        assert!((p[id4] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn gate_one_is_copy_only() {
        let (p, id3, id4) = mix_with(1.0);
        assert!((p[id3] - 0.6).abs() < 1e-12);
        assert!((p[id4] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn half_gate_mixes_by_hand_arithmetic() {
        // P(3) = 0.5*0.6 + 0.5*0.3 = 0.45; P(4) = 0.5*0.4 + 0.5*0.7 = 0.55.
        let (p, id3, id4) = mix_with(0.5);
        assert!((p[id3] - 0.45).abs() < 1e-12);
        assert!((p[id4] - 0.55).abs() < 1e-12);
        let total: Scalar = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_distribution_is_monotone_in_gate_by_mass_sign() {
        // dP(z)/dg = copy(z) - beta(z): raising the gate helps tokens whose
        // copy mass exceeds their generation mass and hurts the others.
        let (p_lo, id3, id4) = mix_with(0.3);
        let (p_hi, _, _) = mix_with(0.4);
        // copy(3)=0.6 > beta(3)=0.3; copy(4)=0.4 < beta(4)=0.7.
        assert!(p_hi[id3] > p_lo[id3]);
        assert!(p_hi[id4] < p_lo[id4]);
    }

    #[test]
    fn step_distributions_sum_to_one_both_variants() {
        for no_inter in [false, true] {
            let (params, vocab, x, y_prime, cfg) = fixture(no_inter);
            let mut tape = Tape::eval();
            let bound = BoundParams::bind(&mut tape, &params);
            let ext = ExtendedVocab::new(&vocab, &x);
            let ids: Vec<usize> = y_prime.iter().map(|t| vocab.id(t)).collect();
            let enc = encode_instance(&mut tape, &bound, &cfg, &vocab, &ext, &x, &ids).unwrap();
            let mut state = enc.init_state;
            for _ in 0..3 {
                let (nodes, next) = decode_step(&mut tape, &bound, &enc.ctx, &ext, &state).unwrap();
                let dist = nodes.values(&tape);
                for (name, v) in [("alpha", &dist.alpha), ("beta", &dist.beta), ("p", &dist.p)] {
                    let s: f64 = v.iter().sum();
                    assert!((s - 1.0).abs() < 1e-9, "{name} sums to {s}");
                }
                let argmax = dist
                    .p
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                state = next.with_prev(argmax);
            }
        }
    }

    #[test]
    fn beam_one_equals_greedy_argmax() {
        let (params, vocab, x, y_prime, cfg) = fixture(false);
        let opts = GenOptions {
            beam: 1,
            min_len: 1,
            max_len: 6,
        };
        let result = beam_search(&params, &cfg, &vocab, &x, &y_prime, &opts).unwrap();

        // Manual greedy loop over the same model.
        let mut tape = Tape::eval();
        let bound = BoundParams::bind(&mut tape, &params);
        let ext = ExtendedVocab::new(&vocab, &x);
        let ids: Vec<usize> = y_prime.iter().map(|t| vocab.id(t)).collect();
        let enc = encode_instance(&mut tape, &bound, &cfg, &vocab, &ext, &x, &ids).unwrap();
        let mut state = enc.init_state;
        let mut tokens = Vec::new();
        loop {
            let (nodes, next) = decode_step(&mut tape, &bound, &enc.ctx, &ext, &state).unwrap();
            let dist = nodes.values(&tape);
            let pick = dist
                .p
                .iter()
                .enumerate()
                .filter(|&(t, _)| t != EOS || tokens.len() >= opts.min_len)
                .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(&a.0)))
                .unwrap()
                .0;
            if pick == EOS || tokens.len() == opts.max_len {
                break;
            }
            tokens.push(pick);
            state = next.with_prev(pick);
        }
        assert_eq!(result.token_ids, tokens);
    }

    #[test]
    fn beam_scores_are_non_increasing() {
        let (params, vocab, x, y_prime, cfg) = fixture(false);
        let opts = GenOptions {
            beam: 4,
            min_len: 1,
            max_len: 5,
        };
        let result = beam_search(&params, &cfg, &vocab, &x, &y_prime, &opts).unwrap();
        for pair in result.beam.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        assert_eq!(result.steps.len(), result.tokens.len() + 1);
    }

    #[test]
    fn default_options_match_documented_decode_setup() {
        let opts = GenOptions::default();
        assert_eq!(opts.beam, 5);
        assert_eq!(opts.min_len, 150);
        assert_eq!(opts.max_len, 850);
    }
}
