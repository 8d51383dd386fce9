//! Free generation, template-controlled paraphrasing, conditional-prior
//! paraphrasing with temperature, and latent interpolation.
//!
//! Trees are decoded autoregressively until EOS, until the running bracket
//! depth returns to zero, or until the length cap; malformed sequences are
//! emitted with a validity flag rather than repaired. The final tree
//! decoder state always consumes the last emitted token so it matches the
//! teacher-forced alignment used in training.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{sentence_to_ids, tree_line_tokens, Vocabulary, BOS, EOS};
use crate::model::{
    reparameterize, softmax, DecodeSetting, DecoderState, Model, ModelError, Variant,
};
use crate::nn::Tape;
use crate::objectives::stream_rng;
use crate::treebank::{self, validate_sequence};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("malformed template: {0}")]
    MalformedTemplate(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    /// Logit divisor in sample mode; must be positive.
    pub temperature: f64,
    pub max_tree_len: usize,
    pub max_sent_len: usize,
    pub seed: u64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            mode: DecodeMode::Greedy,
            temperature: 1.0,
            max_tree_len: 300,
            max_sent_len: 150,
            seed: 0,
        }
    }
}

/// One generated (tree, sentence) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub tree_tokens: Vec<String>,
    pub sentence: Vec<String>,
    pub tree_valid: bool,
}

/// Result of one free tree decode, including the exact teacher inputs the
/// decoder consumed (used to verify autoregressive consistency).
#[derive(Debug, Clone)]
pub struct TreeDecode {
    pub ids: Vec<usize>,
    pub state: DecoderState,
    pub consumed: Vec<usize>,
}

/// Generation front-end bundling a model with its vocabularies.
pub struct Generator<'a> {
    pub model: &'a Model,
    pub sent_vocab: &'a Vocabulary,
    pub tree_vocab: &'a Vocabulary,
    pub setting: DecodeSetting,
}

impl<'a> Generator<'a> {
    pub fn new(model: &'a Model, sent_vocab: &'a Vocabulary, tree_vocab: &'a Vocabulary) -> Self {
        Generator { model, sent_vocab, tree_vocab, setting: DecodeSetting::Standard }
    }

    fn choose(
        &self,
        values: &Array1<f64>,
        opts: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        match opts.mode {
            DecodeMode::Greedy => argmax(values),
            DecodeMode::Sample => {
                assert!(opts.temperature > 0.0, "temperature must be positive");
                let probs = softmax(&values.mapv(|x| x / opts.temperature));
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                probs.len() - 1
            }
        }
    }

    /// Decode a tree sequence from `z_y`. Stops at EOS, at bracket
    /// closure, or at `max_tree_len` tokens.
    pub fn free_decode_tree(
        &self,
        z_y: &Array1<f64>,
        opts: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> TreeDecode {
        let mut tape = Tape::new(&self.model.params);
        let z = tape.constant(z_y.clone());
        let mut state = self.model.tape_decoder_start(&mut tape, true);
        let mut prev = BOS;
        let mut consumed = Vec::new();
        let mut ids = Vec::new();
        let mut depth: i64 = 0;
        loop {
            consumed.push(prev);
            let (logits, next) =
                self.model.tape_tree_dec_step(&mut tape, z, prev, state, self.setting);
            state = next;
            let tok = self.choose(tape.value(logits), opts, rng);
            if tok == EOS {
                break;
            }
            ids.push(tok);
            let token_str = self.tree_vocab.token(tok);
            if token_str == treebank::CLOSE {
                depth -= 1;
            } else if treebank::open_tag(token_str).is_some() {
                depth += 1;
            }
            let closed = depth <= 0 && token_str == treebank::CLOSE;
            if closed || ids.len() >= opts.max_tree_len {
                // Consume the final token so the state matches the
                // teacher-forced alignment h_{|y|}.
                consumed.push(tok);
                let (_, last) =
                    self.model.tape_tree_dec_step(&mut tape, z, tok, state, self.setting);
                state = last;
                break;
            }
            prev = tok;
        }
        TreeDecode {
            ids,
            state: DecoderState {
                h: tape.value(state.0).clone(),
                c: tape.value(state.1).clone(),
            },
            consumed,
        }
    }

    /// Decode a sentence from `z_x` and the tree decoder's final state.
    pub fn free_decode_sentence(
        &self,
        z_x: &Array1<f64>,
        tree_state: &DecoderState,
        opts: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Vec<usize> {
        let mut tape = Tape::new(&self.model.params);
        let z = tape.constant(z_x.clone());
        let th = tape.constant(tree_state.h.clone());
        let mut state = self.model.tape_decoder_start(&mut tape, false);
        let mut prev = BOS;
        let mut ids = Vec::new();
        while ids.len() < opts.max_sent_len {
            let (logits, next) =
                self.model
                    .tape_sent_dec_step(&mut tape, z, th, prev, state, self.setting);
            state = next;
            let tok = self.choose(tape.value(logits), opts, rng);
            if tok == EOS {
                break;
            }
            ids.push(tok);
            prev = tok;
        }
        ids
    }

    fn record_from(&self, tree_ids: &[usize], sent_ids: &[usize]) -> GenRecord {
        let tree_tokens: Vec<String> =
            tree_ids.iter().map(|&id| self.tree_vocab.token(id).to_string()).collect();
        let tree_valid = validate_sequence(&tree_tokens).is_ok();
        GenRecord {
            tree_tokens,
            sentence: sent_ids.iter().map(|&id| self.sent_vocab.token(id).to_string()).collect(),
            tree_valid,
        }
    }

    fn decode_pair(
        &self,
        z_x: &Array1<f64>,
        z_y: &Array1<f64>,
        opts: &DecodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> GenRecord {
        let tree = self.free_decode_tree(z_y, opts, rng);
        let sent = self.free_decode_sentence(z_x, &tree.state, opts, rng);
        self.record_from(&tree.ids, &sent)
    }

    /// Sample `n` (tree, sentence) pairs from the priors. The conditional
    /// variant draws z_y from the prior network; the independent variant
    /// draws both latents from N(0, I).
    pub fn generate(&self, n: usize, opts: &DecodeOptions) -> Result<Vec<GenRecord>, GenError> {
        let d = self.model.latent_dim();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = stream_rng(opts.seed, i as u64, 0x6e6);
            let z_x = standard_noise(&mut rng, d);
            let eps_y = standard_noise(&mut rng, d);
            let z_y = match self.model.variant() {
                Variant::Conditional => {
                    let prior = self.model.conditional_prior(&z_x)?;
                    reparameterize(&prior, &eps_y).expect("dims match")
                }
                Variant::Independent => eps_y,
            };
            out.push(self.decode_pair(&z_x, &z_y, opts, &mut rng));
        }
        Ok(out)
    }

    /// Template-controlled paraphrase (independent variant): encode the
    /// sentence and the template, rebuild the tree sequence from z_y, then
    /// decode the sentence conditioned on z_x and the rebuilt tree.
    pub fn paraphrase_template(
        &self,
        sentence: &str,
        template: &str,
        opts: &DecodeOptions,
    ) -> Result<GenRecord, GenError> {
        if self.model.variant() != Variant::Independent {
            return Err(GenError::Model(ModelError::ModeMismatch(
                "template paraphrasing requires an independent-variant model".into(),
            )));
        }
        let template_tokens =
            tree_line_tokens(0, template).map_err(|e| GenError::MalformedTemplate(e.to_string()))?;
        let mut template_ids = vec![BOS];
        template_ids.extend(template_tokens.iter().map(|t| self.tree_vocab.id_or_unk(t)));
        template_ids.push(EOS);
        let sent_ids = sentence_to_ids(sentence, self.sent_vocab);

        let mut rng = stream_rng(opts.seed, 0, 0x9a7a);
        let q_x = self.model.encode_sentence(&sent_ids)?;
        let q_y = self.model.encode_tree(&template_ids, None)?;
        let (z_x, z_y) = match opts.mode {
            DecodeMode::Greedy => (q_x.mean.clone(), q_y.mean.clone()),
            DecodeMode::Sample => {
                let d = self.model.latent_dim();
                let ex = standard_noise(&mut rng, d);
                let ey = standard_noise(&mut rng, d);
                (
                    reparameterize(&q_x, &ex).expect("dims match"),
                    reparameterize(&q_y, &ey).expect("dims match"),
                )
            }
        };
        Ok(self.decode_pair(&z_x, &z_y, opts, &mut rng))
    }

    /// Conditional-variant paraphrasing: z_x from the posterior mean, then
    /// `n` prior draws with the standard deviation scaled by `temperature`.
    pub fn paraphrase_conditional(
        &self,
        sentence: &str,
        temperature: f64,
        n: usize,
        seed: u64,
    ) -> Result<Vec<GenRecord>, GenError> {
        if self.model.variant() != Variant::Conditional {
            return Err(GenError::Model(ModelError::ModeMismatch(
                "temperature paraphrasing requires a conditional-variant model".into(),
            )));
        }
        if temperature < 0.0 {
            return Err(GenError::BadRequest("temperature must be non-negative".into()));
        }
        let sent_ids = sentence_to_ids(sentence, self.sent_vocab);
        let q_x = self.model.encode_sentence(&sent_ids)?;
        let z_x = q_x.mean.clone();
        let prior = self.model.conditional_prior(&z_x)?;
        let sd = prior.log_var.mapv(|lv| (0.5 * lv).exp());

        let opts = DecodeOptions { seed, ..DecodeOptions::default() };
        let mut out = Vec::with_capacity(n);
        for kth in 0..n {
            let mut rng = stream_rng(seed, kth as u64, 0x7e47);
            let eps = standard_noise(&mut rng, self.model.latent_dim());
            let z_y = &prior.mean + &(&sd * temperature * &eps);
            out.push(self.decode_pair(&z_x, &z_y, &opts, &mut rng));
        }
        Ok(out)
    }

    /// Greedy decodes along the segment between the posterior means of two
    /// sentences; endpoints decode z_A and z_B exactly.
    pub fn interpolate(
        &self,
        sentence_a: &str,
        sentence_b: &str,
        steps: usize,
    ) -> Result<Vec<GenRecord>, GenError> {
        if self.model.variant() != Variant::Conditional {
            return Err(GenError::Model(ModelError::ModeMismatch(
                "interpolation draws trees from the conditional prior".into(),
            )));
        }
        if steps < 2 {
            return Err(GenError::BadRequest("need at least 2 interpolation steps".into()));
        }
        let z_a = self.model.encode_sentence(&sentence_to_ids(sentence_a, self.sent_vocab))?.mean;
        let z_b = self.model.encode_sentence(&sentence_to_ids(sentence_b, self.sent_vocab))?.mean;

        let opts = DecodeOptions::default();
        let mut out = Vec::with_capacity(steps);
        for i in 0..steps {
            let z_x = if i == 0 {
                z_a.clone()
            } else if i == steps - 1 {
                z_b.clone()
            } else {
                let t = i as f64 / (steps - 1) as f64;
                &z_a * (1.0 - t) + &z_b * t
            };
            let z_y = self.model.conditional_prior(&z_x)?.mean;
            let mut rng = stream_rng(0, i as u64, 0x1e70);
            out.push(self.decode_pair(&z_x, &z_y, &opts, &mut rng));
        }
        Ok(out)
    }
}

fn argmax(values: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn standard_noise(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(dim, || rng.sample(rand_distr::StandardNormal))
}
