use crate::autodiff::{BoundParams, NodeId, ParamStore, Tape};
use crate::data::vocab::EOS;
use crate::data::{ExtendedVocab, Table, Vocab};
use crate::error::{Error, Result};
use crate::model::decoder::encode_instance;
use crate::model::{decode_step, greedy_decode, ModelConfig};

/// Target token ids in the extended vocabulary, terminator appended. Tokens
/// outside both the vocabulary and the table's copyable values become UNK.
pub fn target_ids(ext: &ExtendedVocab, target: &[String]) -> Vec<usize> {
    let mut ids: Vec<usize> = target.iter().map(|t| ext.id(t)).collect();
    ids.push(EOS);
    ids
}

/// Teacher-forced mean per-token negative log-likelihood of `target` given
/// the table and reference text. The content objective is
/// `nll_loss(x, y', y_aux)`; the style objective is `nll_loss(x', y', y')`.
pub fn nll_loss(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    x: &Table,
    reference: &[String],
    target: &[String],
) -> Result<NodeId> {
    if target.is_empty() {
        return Err(Error::EmptySequence("nll_loss target"));
    }
    let ext = ExtendedVocab::new(vocab, x);
    let ref_ids: Vec<usize> = reference.iter().map(|t| vocab.id(t)).collect();
    let enc = encode_instance(tape, bound, cfg, vocab, &ext, x, &ref_ids)?;

    let mut state = enc.init_state;
    let mut step_losses = Vec::new();
    for &tgt in &target_ids(&ext, target) {
        let (nodes, next) = decode_step(tape, bound, &enc.ctx, &ext, &state)?;
        step_losses.push(tape.nll_pick(nodes.p, tgt));
        state = next.with_prev(tgt);
    }
    let stacked = tape.concat_cols(&step_losses);
    Ok(tape.mean_all(stacked))
}

/// Argmax token per teacher-forced step (terminator step included), as
/// extended-vocabulary ids. Used for token accuracy and teacher-forced BLEU.
pub fn teacher_forced_argmax(
    params: &ParamStore,
    cfg: &ModelConfig,
    vocab: &Vocab,
    x: &Table,
    reference: &[String],
    target: &[String],
) -> Result<Vec<usize>> {
    let mut tape = Tape::eval();
    let bound = BoundParams::bind(&mut tape, params);
    let ext = ExtendedVocab::new(vocab, x);
    let ref_ids: Vec<usize> = reference.iter().map(|t| vocab.id(t)).collect();
    let enc = encode_instance(&mut tape, &bound, cfg, vocab, &ext, x, &ref_ids)?;

    let mut state = enc.init_state;
    let mut picks = Vec::new();
    for &tgt in &target_ids(&ext, target) {
        let (nodes, next) = decode_step(&mut tape, &bound, &enc.ctx, &ext, &state)?;
        let p = tape.value(nodes.p);
        let argmax = (0..p.rows())
            .max_by(|&a, &b| p.get(a, 0).total_cmp(&p.get(b, 0)))
            .unwrap();
        picks.push(argmax);
        state = next.with_prev(tgt);
    }
    Ok(picks)
}

/// Back-translation objective: greedily decode `z` from `(x, y')` with the
/// current parameters, freeze it, and score the reconstruction of `y'` from
/// `(x', z)`. No gradient flows through the generation of `z`. Returns
/// `None` when the decoded `z` is empty (skipped, zero contribution).
#[allow(clippy::too_many_arguments)]
pub fn back_translation_loss(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &ParamStore,
    cfg: &ModelConfig,
    vocab: &Vocab,
    x_prime: Option<&Table>,
    y_prime: &[String],
    x: &Table,
    min_len: usize,
    max_len: usize,
) -> Result<Option<(NodeId, Vec<String>)>> {
    let x_prime = x_prime.ok_or_else(|| {
        Error::Config("back-translation requires the reference-side table x'".into())
    })?;
    let gen = greedy_decode(params, cfg, vocab, x, y_prime, min_len, max_len)?;
    if gen.tokens.is_empty() {
        return Ok(None);
    }
    let loss = back_translation_loss_with_z(tape, bound, cfg, vocab, x_prime, &gen.tokens, y_prime)?;
    Ok(Some((loss, gen.tokens)))
}

/// Back-translation loss with an injected pseudo reference `z`; identical to
/// `nll_loss(x', z, y')`, which is also why substituting `z := y'` recovers
/// the style objective exactly.
pub fn back_translation_loss_with_z(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    x_prime: &Table,
    z: &[String],
    y_prime: &[String],
) -> Result<NodeId> {
    nll_loss(tape, bound, cfg, vocab, x_prime, z, y_prime)
}

/// Weighted sum of the three objectives:
/// `lambda1 * record + lambda2 * style + (1 - lambda1 - lambda2) * back`.
/// A missing back-translation term contributes zero (skipped instance); the
/// other two are required whenever their weight is positive.
pub fn joint_objective(
    tape: &mut Tape,
    l_record: Option<NodeId>,
    l_style: Option<NodeId>,
    l_back: Option<NodeId>,
    lambda1: f64,
    lambda2: f64,
) -> Result<NodeId> {
    if lambda1 < 0.0 || lambda2 < 0.0 || lambda1 + lambda2 > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "invalid objective weights {lambda1}/{lambda2}"
        )));
    }
    let w3 = (1.0 - lambda1 - lambda2).max(0.0);
    let mut acc: Option<NodeId> = None;
    for (term, weight, name) in [
        (l_record, lambda1, "record"),
        (l_style, lambda2, "style"),
        (l_back, w3, "back-translation"),
    ] {
        if weight == 0.0 {
            continue;
        }
        let term = match (term, name) {
            (Some(t), _) => t,
            (None, "back-translation") => continue,
            (None, name) => {
                return Err(Error::Config(format!(
                    "{name} objective has weight {weight} but no loss term"
                )))
            }
        };
        let scaled = tape.affine(term, weight as crate::autodiff::Scalar, 0.0);
        acc = Some(match acc {
            Some(a) => tape.add(a, scaled),
            None => scaled,
        });
    }
    acc.ok_or_else(|| Error::Config("all objective weights are zero".into()))
}
