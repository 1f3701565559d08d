//! The three training objectives, their staged weighting, and the training
//! loop.

pub mod losses;
pub mod trainer;

pub use losses::{
    back_translation_loss, back_translation_loss_with_z, joint_objective, nll_loss,
    teacher_forced_argmax,
};
pub use trainer::{train, TrainLogRow, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Full training configuration. Defaults follow the document-scale setup:
/// hidden/embedding size 600, dropout 0.3, Adam at 0.001 with 0.97 per-epoch
/// decay, beam 5 with decode lengths 150..850, and the three-stage objective
/// schedule (style-only pretraining, then equal weighting, then 0.4/0.5 with
/// the remainder on back-translation).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding and hidden size.
    pub d: usize,
    pub dropout: Scalar,
    pub lr: Scalar,
    /// Learning-rate multiplier applied once per epoch.
    pub lr_decay: Scalar,
    pub batch_size: usize,
    /// Global gradient-norm clip.
    pub grad_clip: Scalar,
    /// Vocabulary frequency cutoff.
    pub min_freq: usize,
    /// Epochs per stage.
    pub stage_epochs: [usize; 3],
    /// Per-stage `[lambda1, lambda2]`; the back-translation weight is the
    /// residual `1 - lambda1 - lambda2`.
    pub lambdas: [[f64; 2]; 3],
    pub seed: u64,
    pub beam: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Ablation: attend over record and reference banks separately instead
    /// of the fused bank.
    pub no_inter_att: bool,
    /// Ablation: drop the back-translation term and renormalize the stage
    /// weights to sum to 1.
    pub no_back_trans: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 600,
            dropout: 0.3,
            lr: 0.001,
            lr_decay: 0.97,
            batch_size: 4,
            grad_clip: 5.0,
            min_freq: 1,
            stage_epochs: [10, 5, 5],
            lambdas: [[0.0, 1.0], [0.5, 0.5], [0.4, 0.5]],
            seed: 0,
            beam: 5,
            min_len: 150,
            max_len: 850,
            no_inter_att: false,
            no_back_trans: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.min_len > self.max_len || self.max_len == 0 {
            return Err(Error::Config("decode lengths: need 0 < max and min <= max".into()));
        }
        for (stage, [l1, l2]) in self.lambdas.iter().enumerate() {
            if *l1 < 0.0 || *l2 < 0.0 || l1 + l2 > 1.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "stage {stage}: need lambda1, lambda2 >= 0 and lambda1 + lambda2 <= 1, got {l1}/{l2}"
                )));
            }
            if l1 + l2 == 0.0 {
                return Err(Error::Config(format!(
                    "stage {stage}: lambda1 + lambda2 must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            no_inter_att: self.no_inter_att,
        }
    }

    /// Objective weights for a stage: `(record, style, back-translation)`.
    /// With `no_back_trans` the first two renormalize to sum to 1.
    pub fn stage_weights(&self, stage: usize) -> (f64, f64, f64) {
        let [l1, l2] = self.lambdas[stage];
        if self.no_back_trans {
            let sum = l1 + l2;
            (l1 / sum, l2 / sum, 0.0)
        } else {
            (l1, l2, 1.0 - l1 - l2)
        }
    }
}
