//! SGD training loop with gradient clipping, KL annealing, per-step
//! logging, and deterministic resume.
//!
//! All randomness is derived from counters: batch order from
//! (seed, epoch), per-example noise from (seed, step, index). A checkpoint
//! therefore only needs to store the seed and counters to reproduce the
//! exact trajectory it interrupted.

pub mod checkpoint;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{batch_iter, Batch, Dataset};
use crate::exec::Strategy;
use crate::model::{DecodeSetting, Model, ModelConfig, ModelError, Variant};
use crate::nn::GradStore;
use crate::objectives::{anneal_weight, AnnealSchedule, ElboOptions, LossBreakdown};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn default_lr() -> f64 {
    0.0005
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    10
}
fn default_dropout() -> f64 {
    0.4
}
fn default_cap() -> f64 {
    0.8
}
fn default_rate() -> f64 {
    0.5
}
fn default_clip() -> f64 {
    5.0
}
fn default_embed() -> usize {
    300
}
fn default_hidden() -> usize {
    600
}
fn default_latent() -> usize {
    150
}
fn default_prior_hidden() -> usize {
    400
}
fn default_max_sent() -> usize {
    150
}
fn default_max_tree() -> usize {
    300
}
fn default_variant() -> Variant {
    Variant::Independent
}
fn default_setting() -> DecodeSetting {
    DecodeSetting::Standard
}

/// Flat training configuration; the config file mirrors these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub setting: DecodeSetting,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub word_dropout: f64,
    pub anneal_cap: f64,
    pub anneal_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Write `step-<N>.ckpt` every this many steps; 0 disables cadence
    /// checkpoints.
    pub checkpoint_every: u64,
    /// Stop after this many optimizer steps regardless of epochs.
    pub max_steps: Option<u64>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub prior_hidden_dim: usize,
    pub max_sent_tokens: usize,
    pub max_tree_tokens: usize,
    /// Train the tree stream on depth-2 templates instead of full trees.
    pub use_templates: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: default_variant(),
            setting: default_setting(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            word_dropout: default_dropout(),
            anneal_cap: default_cap(),
            anneal_rate: default_rate(),
            clip_norm: default_clip(),
            seed: 0,
            checkpoint_every: 0,
            max_steps: None,
            embed_dim: default_embed(),
            hidden_dim: default_hidden(),
            latent_dim: default_latent(),
            prior_hidden_dim: default_prior_hidden(),
            max_sent_tokens: default_max_sent(),
            max_tree_tokens: default_max_tree(),
            use_templates: false,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, sent_vocab_size: usize, tree_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            sent_vocab_size,
            tree_vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            prior_hidden_dim: self.prior_hidden_dim,
        }
    }

    pub fn length_limits(&self) -> crate::corpus::LengthLimits {
        crate::corpus::LengthLimits {
            max_sent_tokens: self.max_sent_tokens,
            max_tree_tokens: self.max_tree_tokens,
        }
    }
}

/// Mutable training-run state; everything a resume needs.
pub struct TrainState {
    pub model: Model,
    pub step: u64,
    pub epoch: usize,
    pub best_val_elbo: Option<f64>,
    /// Base seed all randomness streams are derived from.
    pub seed: u64,
}

impl TrainState {
    pub fn init(config: &TrainConfig, sent_vocab_size: usize, tree_vocab_size: usize) -> TrainState {
        let model_cfg = config.model_config(sent_vocab_size, tree_vocab_size);
        TrainState {
            model: Model::new(model_cfg, config.seed),
            step: 0,
            epoch: 0,
            best_val_elbo: None,
            seed: config.seed,
        }
    }
}

/// Deterministic per-epoch shuffle seed.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut x = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^ (x >> 31)
}

/// Scale gradients so the global norm does not exceed `clip`.
fn clip_grads(grads: &mut GradStore, clip: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip && norm > 0.0 {
        grads.scale(clip / norm);
    }
    norm
}

/// One SGD ascent step on the batch-mean ELBO with the annealed KL weight.
pub fn train_step(
    state: &mut TrainState,
    batch: &Batch,
    config: &TrainConfig,
    schedule: &AnnealSchedule,
) -> Result<LossBreakdown, TrainError> {
    let opts = ElboOptions {
        kl_weight: anneal_weight(state.step, schedule),
        word_dropout: config.word_dropout,
        setting: config.setting,
        seed: state.seed,
        step: state.step,
        strategy: Strategy::default(),
    };
    let mut grads = GradStore::zeros_like(&state.model.params);
    let loss = crate::objectives::elbo_with_grads(&state.model, batch, &opts, &mut grads)?;
    if !grads.all_finite() {
        return Err(TrainError::NonFiniteGradient { step: state.step });
    }
    clip_grads(&mut grads, config.clip_norm);
    grads.apply_ascent(&mut state.model.params, config.learning_rate);
    state.step += 1;
    Ok(loss)
}

/// Validation ELBO at kl_weight = 1 with no word dropout. The noise stream
/// is keyed away from training steps so scoring never perturbs them.
pub fn validate(model: &Model, valid: &Dataset, config: &TrainConfig, seed: u64) -> LossBreakdown {
    let mut total: Option<LossBreakdown> = None;
    for (bi, batch) in batch_iter(valid, config.batch_size, false, 0).enumerate() {
        let opts = ElboOptions {
            kl_weight: 1.0,
            word_dropout: 0.0,
            setting: config.setting,
            seed,
            step: u64::MAX - bi as u64,
            strategy: Strategy::default(),
        };
        let part = crate::objectives::elbo(model, &batch, &opts)
            .expect("validation batches are well-formed");
        match &mut total {
            Some(t) => t.merge(&part),
            None => total = Some(part),
        }
    }
    total.unwrap_or(LossBreakdown {
        rec_x: 0.0,
        rec_y: 0.0,
        kl_x: 0.0,
        kl_y: 0.0,
        kl_weight: 1.0,
        elbo: 0.0,
        examples: 0,
        sent_tokens: 0,
        tree_tokens: 0,
    })
}

/// Why a checkpoint is being requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    /// Periodic `step-<N>.ckpt`.
    Cadence,
    /// New best validation ELBO: `best.ckpt`.
    Best,
    /// End of the run: `last.ckpt`.
    Final,
}

/// Callback events emitted by [`fit`].
pub enum FitEvent<'a> {
    Step { step: u64, loss: &'a LossBreakdown },
    EpochEnd { epoch: usize, val: Option<&'a LossBreakdown> },
    CheckpointDue { state: &'a TrainState, kind: CheckpointKind },
}

/// Run the configured number of epochs (continuing from `state`'s
/// counters), returning one validation breakdown per completed epoch.
pub fn fit<F: FnMut(FitEvent)>(
    state: &mut TrainState,
    train: &Dataset,
    valid: &Dataset,
    config: &TrainConfig,
    mut hook: F,
) -> Result<Vec<LossBreakdown>, TrainError> {
    let bpe = train.len().div_ceil(config.batch_size.max(1)) as u64;
    let schedule =
        AnnealSchedule::new(config.anneal_cap, config.anneal_rate, (config.epochs as u64 * bpe).max(1));
    let mut per_epoch = Vec::new();

    'outer: while state.epoch < config.epochs {
        // Steps already taken inside the current epoch (non-zero on resume).
        let done_in_epoch = state.step - state.epoch as u64 * bpe;
        let order_seed = epoch_seed(state.seed, state.epoch);
        for (bi, batch) in batch_iter(train, config.batch_size, true, order_seed).enumerate() {
            if (bi as u64) < done_in_epoch {
                continue;
            }
            if let Some(max) = config.max_steps {
                if state.step >= max {
                    break 'outer;
                }
            }
            let loss = train_step(state, &batch, config, &schedule)?;
            hook(FitEvent::Step { step: state.step - 1, loss: &loss });
            if config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 {
                hook(FitEvent::CheckpointDue { state: &*state, kind: CheckpointKind::Cadence });
            }
        }
        state.epoch += 1;

        if valid.is_empty() {
            hook(FitEvent::EpochEnd { epoch: state.epoch - 1, val: None });
        } else {
            let val = validate(&state.model, valid, config, state.seed);
            hook(FitEvent::EpochEnd { epoch: state.epoch - 1, val: Some(&val) });
            if state.best_val_elbo.map_or(true, |best| val.elbo > best) {
                state.best_val_elbo = Some(val.elbo);
                hook(FitEvent::CheckpointDue { state: &*state, kind: CheckpointKind::Best });
            }
            per_epoch.push(val);
        }
    }
    hook(FitEvent::CheckpointDue { state: &*state, kind: CheckpointKind::Final });
    Ok(per_epoch)
}
