use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    adam_step, clip_global_norm, AdamState, BoundParams, NodeId, ParamStore, Tape,
};
use crate::data::{build_vocab, Instance, Vocab};
use crate::error::{Error, Result};
use crate::model::init_params;
use crate::train::losses::{back_translation_loss, joint_objective, nll_loss};
use crate::train::TrainConfig;

/// One training-log line (written out as CSV).
#[derive(Clone, Debug)]
pub struct TrainLogRow {
    pub step: u64,
    pub epoch: usize,
    pub stage: usize,
    pub loss_record: f64,
    pub loss_style: f64,
    pub loss_back: f64,
    pub loss_total: f64,
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub vocab: Vocab,
    pub log: Vec<TrainLogRow>,
    /// Back-translation instances skipped because the decoded pseudo
    /// reference came out empty.
    pub skipped_back_translations: usize,
}

/// Staged training over shuffled mini-batches: style-only pretraining, then
/// the joint objectives per the configured schedule, Adam updates under a
/// global-norm clip, learning-rate decay once per epoch. `on_epoch` runs
/// after every epoch (checkpointing hook). Deterministic for a fixed seed.
pub fn train<F>(corpus: &[Instance], cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &ParamStore, &Vocab) -> Result<()>,
{
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    for inst in corpus {
        if inst.y_aux.is_none() {
            return Err(Error::Config(format!(
                "instance `{}` lacks the auxiliary summary required for training",
                inst.id
            )));
        }
        if inst.x_prime.is_none() {
            return Err(Error::Config(format!(
                "instance `{}` lacks the reference-side table required for training",
                inst.id
            )));
        }
    }

    let vocab = build_vocab(corpus, cfg.min_freq);
    let model = cfg.model();
    let mut params = init_params(
        &model,
        vocab.len(),
        cfg.seed,
        AdamState::new(cfg.lr, cfg.lr_decay),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut log = Vec::new();
    let mut skipped = 0usize;
    let mut step: u64 = 0;
    let mut global_epoch = 0usize;

    for stage in 0..3 {
        let (w1, w2, w3) = cfg.stage_weights(stage);
        for _ in 0..cfg.stage_epochs[stage] {
            let mut order: Vec<usize> = (0..corpus.len()).collect();
            order.shuffle(&mut rng);

            for batch in order.chunks(cfg.batch_size) {
                let dropout_rng = ChaCha8Rng::seed_from_u64(rng.gen());
                let mut tape = Tape::train(dropout_rng, cfg.dropout);
                let bound = BoundParams::bind(&mut tape, &params);

                let mut joints: Vec<NodeId> = Vec::with_capacity(batch.len());
                let (mut sum_rec, mut sum_sty, mut sum_bt) = (0.0f64, 0.0f64, 0.0f64);
                for &idx in batch {
                    let inst = &corpus[idx];
                    let y_aux = inst.y_aux.as_ref().unwrap();
                    let x_prime = inst.x_prime.as_ref().unwrap();

                    let l_record = if w1 > 0.0 {
                        Some(nll_loss(
                            &mut tape,
                            &bound,
                            &model,
                            &vocab,
                            &inst.x,
                            &inst.y_prime,
                            y_aux,
                        )?)
                    } else {
                        None
                    };
                    let l_style = if w2 > 0.0 {
                        Some(nll_loss(
                            &mut tape,
                            &bound,
                            &model,
                            &vocab,
                            x_prime,
                            &inst.y_prime,
                            &inst.y_prime,
                        )?)
                    } else {
                        None
                    };
                    let l_back = if w3 > 0.0 {
                        match back_translation_loss(
                            &mut tape,
                            &bound,
                            &params,
                            &model,
                            &vocab,
                            Some(x_prime),
                            &inst.y_prime,
                            &inst.x,
                            cfg.min_len.min(inst.y_prime.len()),
                            cfg.max_len,
                        )? {
                            Some((node, _z)) => Some(node),
                            None => {
                                skipped += 1;
                                eprintln!(
                                    "warning: empty pseudo reference for `{}`; back-translation skipped",
                                    inst.id
                                );
                                None
                            }
                        }
                    } else {
                        None
                    };

                    if let Some(n) = l_record {
                        sum_rec += tape.value(n).item() as f64;
                    }
                    if let Some(n) = l_style {
                        sum_sty += tape.value(n).item() as f64;
                    }
                    if let Some(n) = l_back {
                        sum_bt += tape.value(n).item() as f64;
                    }

                    joints.push(joint_objective(
                        &mut tape, l_record, l_style, l_back, w1, w2,
                    )?);
                }

                let stacked = tape.concat_cols(&joints);
                let batch_loss = tape.mean_all(stacked);
                let total = tape.value(batch_loss).item();
                if !total.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss {total} at step {step} (stage {stage}, epoch {global_epoch}); \
                         record={sum_rec} style={sum_sty} back={sum_bt}"
                    )));
                }

                tape.backward(batch_loss)?;
                let mut grads = bound.collect_grads(&tape, &params);
                crate::autodiff::check_finite_grads(&grads)?;
                clip_global_norm(&mut grads, cfg.grad_clip);
                adam_step(&mut params, &grads)?;

                let n = batch.len() as f64;
                log.push(TrainLogRow {
                    step,
                    epoch: global_epoch,
                    stage,
                    loss_record: sum_rec / n,
                    loss_style: sum_sty / n,
                    loss_back: sum_bt / n,
                    loss_total: total as f64,
                    lr: params.adam.lr as f64,
                });
                step += 1;
            }

            params.adam.decay_lr();
            global_epoch += 1;
            on_epoch(global_epoch, &params, &vocab)?;
        }
    }

    Ok(TrainOutcome {
        params,
        vocab,
        log,
        skipped_back_translations: skipped,
    })
}
