//! Joint variational autoencoding of sentences and their linearized
//! constituency trees.
//!
//! The toolkit couples two latent spaces, one for sentence content and one
//! for syntactic structure, behind a shared evidence-lower-bound objective.
//! Two variants are provided: a conditional model whose syntax prior is
//! predicted from the sentence latent, and an independent model that allows
//! the syntax latent to be swapped freely for template-controlled
//! paraphrasing.
//!
//! Module map:
//! - [`treebank`]: bracketed-tree parsing, leaf stripping, linearization and
//!   template simplification.
//! - [`corpus`]: vocabularies, numericalization, batching, dataset stats.
//! - [`nn`]: parameter store and the reverse-mode tape the models run on.
//! - [`model`]: encoders, conditional prior, and the chained decoders.
//! - [`objectives`]: closed-form KL terms, both ELBOs, KL annealing, word
//!   dropout.
//! - [`trainer`]: SGD loop, gradient clipping, checkpointing.
//! - [`evaluation`]: reconstruction metrics and targeted syntactic
//!   evaluation.
//! - [`generation`]: free sampling, paraphrasing, latent interpolation.

pub mod corpus;
pub mod evaluation;
pub mod exec;
pub mod generation;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod trainer;
pub mod treebank;

pub use model::{DiagGaussian, Model, ModelConfig, Variant};
pub use objectives::{AnnealSchedule, ElboOptions, LossBreakdown};
pub use trainer::{TrainConfig, TrainState};
