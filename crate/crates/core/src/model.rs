//! The two-latent-space architecture: bidirectional LSTM recognition
//! encoders for sentences and tree sequences, a conditional prior network,
//! an LSTM tree decoder, and an LSTM sentence decoder that consumes the
//! tree decoder's final hidden state.
//!
//! Every forward pass runs on the reverse-mode [`Tape`], so the same
//! definitions serve training, scoring, and generation. The `tape_*`
//! methods are the graph-building primitives; the plain methods wrap them
//! for callers that only need values.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Init, ParamId, ParamStore, Tape, Var};

/// Which prior couples the two latent spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Syntax prior predicted from the sentence latent (`c`).
    #[serde(alias = "c")]
    Conditional,
    /// Independent standard-normal priors (`i`).
    #[serde(alias = "i")]
    Independent,
}

impl Variant {
    pub fn short(&self) -> &'static str {
        match self {
            Variant::Conditional => "c",
            Variant::Independent => "i",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c" | "conditional" => Ok(Variant::Conditional),
            "i" | "independent" => Ok(Variant::Independent),
            other => Err(format!("unknown variant `{other}` (expected c or i)")),
        }
    }
}

/// Whether decoders see previous ground-truth words or only latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeSetting {
    Standard,
    Inputless,
}

impl std::str::FromStr for DecodeSetting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(DecodeSetting::Standard),
            "inputless" => Ok(DecodeSetting::Inputless),
            other => Err(format!("unknown setting `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub sent_vocab_size: usize,
    pub tree_vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub prior_hidden_dim: usize,
}

impl ModelConfig {
    /// Full-scale defaults: embeddings 300, LSTM hidden 600, latents 150,
    /// prior MLP hidden 400.
    pub fn new(variant: Variant, sent_vocab_size: usize, tree_vocab_size: usize) -> Self {
        ModelConfig {
            variant,
            sent_vocab_size,
            tree_vocab_size,
            embed_dim: 300,
            hidden_dim: 600,
            latent_dim: 150,
            prior_hidden_dim: 400,
        }
    }

    /// Small configuration for tests and smoke runs.
    pub fn tiny(variant: Variant, sent_vocab_size: usize, tree_vocab_size: usize) -> Self {
        ModelConfig {
            variant,
            sent_vocab_size,
            tree_vocab_size,
            embed_dim: 8,
            hidden_dim: 8,
            latent_dim: 4,
            prior_hidden_dim: 8,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("empty input sequence")]
    EmptySequence,
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
}

/// Mean and per-dimension log-variance of a diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Array1<f64>,
    pub log_var: Array1<f64>,
}

impl DiagGaussian {
    pub fn standard(dim: usize) -> Self {
        DiagGaussian { mean: Array1::zeros(dim), log_var: Array1::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(self.log_var.iter()).all(|x| x.is_finite())
    }

    /// log N(z; mean, diag(exp(log_var))).
    pub fn log_density(&self, z: &Array1<f64>) -> f64 {
        const LN_2PI: f64 = 1.8378770664093453;
        let mut acc = 0.0;
        for i in 0..self.dim() {
            let lv = self.log_var[i];
            let d = z[i] - self.mean[i];
            acc += lv + d * d * (-lv).exp() + LN_2PI;
        }
        -0.5 * acc
    }
}

/// z = mean + exp(log_var / 2) ⊙ noise.
pub fn reparameterize(g: &DiagGaussian, noise: &Array1<f64>) -> Result<Array1<f64>, ModelError> {
    if noise.len() != g.dim() {
        return Err(ModelError::DimensionMismatch { expected: g.dim(), got: noise.len() });
    }
    Ok(&g.mean + &(g.log_var.mapv(|lv| (0.5 * lv).exp()) * noise))
}

/// Recurrent memory pair (h, c).
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmIds {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadIds {
    pub w_mu: ParamId,
    pub b_mu: ParamId,
    pub w_lv: ParamId,
    pub b_lv: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PriorIds {
    pub w_hidden: ParamId,
    pub b_hidden: ParamId,
    pub head: HeadIds,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub sent_enc_embed: ParamId,
    pub sent_enc_fwd: LstmIds,
    pub sent_enc_bwd: LstmIds,
    pub sent_head: HeadIds,
    pub tree_enc_embed: ParamId,
    pub tree_enc_fwd: LstmIds,
    pub tree_enc_bwd: LstmIds,
    pub tree_head: HeadIds,
    pub prior: Option<PriorIds>,
    pub tree_dec_embed: ParamId,
    pub tree_dec: LstmIds,
    pub tree_out_w: ParamId,
    pub tree_out_b: ParamId,
    pub sent_dec_embed: ParamId,
    pub sent_dec: LstmIds,
    pub sent_out_w: ParamId,
    pub sent_out_b: ParamId,
}

pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub(crate) layout: Layout,
}

const INIT_RANGE: f64 = 0.08;

impl Model {
    /// Build a model with parameters drawn uniformly from
    /// [-0.08, 0.08]; Gaussian-head biases start at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let e = config.embed_dim;
        let h = config.hidden_dim;
        let d = config.latent_dim;
        let u = Init::Uniform(INIT_RANGE);

        let lstm = |ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize| {
            LstmIds {
                w_ih: ps.add_matrix(&format!("{name}.w_ih"), 4 * h, input, u, rng),
                w_hh: ps.add_matrix(&format!("{name}.w_hh"), 4 * h, h, u, rng),
                b: ps.add_vector(&format!("{name}.b"), 4 * h, u, rng),
                hidden: h,
            }
        };
        let head = |ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize| {
            HeadIds {
                w_mu: ps.add_matrix(&format!("{name}.mu.w"), d, input, u, rng),
                b_mu: ps.add_vector(&format!("{name}.mu.b"), d, Init::Zero, rng),
                w_lv: ps.add_matrix(&format!("{name}.lv.w"), d, input, u, rng),
                b_lv: ps.add_vector(&format!("{name}.lv.b"), d, Init::Zero, rng),
            }
        };

        let sent_enc_embed =
            ps.add_matrix("phi.sent_enc.embed", config.sent_vocab_size, e, u, &mut rng);
        let sent_enc_fwd = lstm(&mut ps, &mut rng, "phi.sent_enc.fwd", e);
        let sent_enc_bwd = lstm(&mut ps, &mut rng, "phi.sent_enc.bwd", e);
        let sent_head = head(&mut ps, &mut rng, "phi.sent_head", 2 * h);

        let tree_enc_embed =
            ps.add_matrix("phi.tree_enc.embed", config.tree_vocab_size, e, u, &mut rng);
        let tree_enc_fwd = lstm(&mut ps, &mut rng, "phi.tree_enc.fwd", e);
        let tree_enc_bwd = lstm(&mut ps, &mut rng, "phi.tree_enc.bwd", e);
        let tree_head_input = match config.variant {
            Variant::Conditional => 2 * h + d,
            Variant::Independent => 2 * h,
        };
        let tree_head = head(&mut ps, &mut rng, "phi.tree_head", tree_head_input);

        let prior = match config.variant {
            Variant::Conditional => Some(PriorIds {
                w_hidden: ps.add_matrix(
                    "psi.prior.hidden.w",
                    config.prior_hidden_dim,
                    d,
                    u,
                    &mut rng,
                ),
                b_hidden: ps.add_vector("psi.prior.hidden.b", config.prior_hidden_dim, u, &mut rng),
                head: head(&mut ps, &mut rng, "psi.prior", config.prior_hidden_dim),
            }),
            Variant::Independent => None,
        };

        let tree_dec_embed =
            ps.add_matrix("theta.tree_dec.embed", config.tree_vocab_size, e, u, &mut rng);
        let tree_dec = lstm(&mut ps, &mut rng, "theta.tree_dec", d + e);
        let tree_out_w =
            ps.add_matrix("theta.tree_out.w", config.tree_vocab_size, h, u, &mut rng);
        let tree_out_b = ps.add_vector("theta.tree_out.b", config.tree_vocab_size, u, &mut rng);

        let sent_dec_embed =
            ps.add_matrix("theta.sent_dec.embed", config.sent_vocab_size, e, u, &mut rng);
        let sent_dec = lstm(&mut ps, &mut rng, "theta.sent_dec", d + e + h);
        let sent_out_w =
            ps.add_matrix("theta.sent_out.w", config.sent_vocab_size, h, u, &mut rng);
        let sent_out_b = ps.add_vector("theta.sent_out.b", config.sent_vocab_size, u, &mut rng);

        let layout = Layout {
            sent_enc_embed,
            sent_enc_fwd,
            sent_enc_bwd,
            sent_head,
            tree_enc_embed,
            tree_enc_fwd,
            tree_enc_bwd,
            tree_head,
            prior,
            tree_dec_embed,
            tree_dec,
            tree_out_w,
            tree_out_b,
            sent_dec_embed,
            sent_dec,
            sent_out_w,
            sent_out_b,
        };
        Model { config, params: ps, layout }
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    // ---- tape-level graph builders ----

    pub(crate) fn lstm_step(
        &self,
        t: &mut Tape,
        ids: &LstmIds,
        input: Var,
        state: (Var, Var),
    ) -> (Var, Var) {
        let hdim = ids.hidden;
        let gi = t.matvec(ids.w_ih, input);
        let gh = t.matvec(ids.w_hh, state.0);
        let gsum = t.add(gi, gh);
        let gates = t.add_bias(ids.b, gsum);
        let i_lin = t.slice(gates, 0, hdim);
        let f_lin = t.slice(gates, hdim, hdim);
        let g_lin = t.slice(gates, 2 * hdim, hdim);
        let o_lin = t.slice(gates, 3 * hdim, hdim);
        let i = t.sigmoid(i_lin);
        let f = t.sigmoid(f_lin);
        let g = t.tanh(g_lin);
        let o = t.sigmoid(o_lin);
        let fc = t.mul(f, state.1);
        let ig = t.mul(i, g);
        let c = t.add(fc, ig);
        let tc = t.tanh(c);
        let hv = t.mul(o, tc);
        (hv, c)
    }

    fn zero_state(&self, t: &mut Tape, ids: &LstmIds) -> (Var, Var) {
        (t.zeros(ids.hidden), t.zeros(ids.hidden))
    }

    /// Run a unidirectional LSTM over embedded tokens; returns the final h.
    fn run_encoder_direction(
        &self,
        t: &mut Tape,
        embed: ParamId,
        ids: &LstmIds,
        tokens: impl Iterator<Item = usize>,
    ) -> Var {
        let mut state = self.zero_state(t, ids);
        for tok in tokens {
            let x = t.embed(embed, tok);
            state = self.lstm_step(t, ids, x, state);
        }
        state.0
    }

    /// Bidirectional encoding: concatenation of both directions' final
    /// hidden states (2H).
    fn encode_bi(
        &self,
        t: &mut Tape,
        embed: ParamId,
        fwd: &LstmIds,
        bwd: &LstmIds,
        tokens: &[usize],
    ) -> Var {
        let hf = self.run_encoder_direction(t, embed, fwd, tokens.iter().copied());
        let hb = self.run_encoder_direction(t, embed, bwd, tokens.iter().rev().copied());
        t.concat(&[hf, hb])
    }

    fn apply_head(&self, t: &mut Tape, head: &HeadIds, input: Var) -> (Var, Var) {
        let mu_lin = t.matvec(head.w_mu, input);
        let mu = t.add_bias(head.b_mu, mu_lin);
        let lv_lin = t.matvec(head.w_lv, input);
        let lv = t.add_bias(head.b_lv, lv_lin);
        (mu, lv)
    }

    /// q(z_x | x) as (mean, log-variance) tape vars.
    pub(crate) fn tape_encode_sentence(
        &self,
        t: &mut Tape,
        x: &[usize],
    ) -> Result<(Var, Var), ModelError> {
        if x.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let l = &self.layout;
        let enc = self.encode_bi(t, l.sent_enc_embed, &l.sent_enc_fwd, &l.sent_enc_bwd, x);
        Ok(self.apply_head(t, &l.sent_head, enc))
    }

    /// q(z_y | y) or q(z_y | y, z_x) depending on the variant.
    pub(crate) fn tape_encode_tree(
        &self,
        t: &mut Tape,
        y: &[usize],
        z_x: Option<Var>,
    ) -> Result<(Var, Var), ModelError> {
        if y.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let l = &self.layout;
        match (self.config.variant, z_x) {
            (Variant::Conditional, None) => {
                return Err(ModelError::ModeMismatch(
                    "conditional tree encoder requires z_x".into(),
                ))
            }
            (Variant::Independent, Some(_)) => {
                return Err(ModelError::ModeMismatch(
                    "independent tree encoder takes no z_x".into(),
                ))
            }
            _ => {}
        }
        let enc = self.encode_bi(t, l.tree_enc_embed, &l.tree_enc_fwd, &l.tree_enc_bwd, y);
        let head_in = match z_x {
            Some(z) => t.concat(&[enc, z]),
            None => enc,
        };
        Ok(self.apply_head(t, &l.tree_head, head_in))
    }

    /// p(z_y | z_x) from the conditional prior network.
    pub(crate) fn tape_conditional_prior(
        &self,
        t: &mut Tape,
        z_x: Var,
    ) -> Result<(Var, Var), ModelError> {
        let prior = self.layout.prior.as_ref().ok_or_else(|| {
            ModelError::ModeMismatch("independent variant has no conditional prior".into())
        })?;
        let lin = t.matvec(prior.w_hidden, z_x);
        let lin = t.add_bias(prior.b_hidden, lin);
        let hidden = t.tanh(lin);
        Ok(self.apply_head(t, &prior.head, hidden))
    }

    /// z = mu + exp(lv / 2) ⊙ noise with constant noise.
    pub(crate) fn tape_reparameterize(
        &self,
        t: &mut Tape,
        mu: Var,
        lv: Var,
        noise: &Array1<f64>,
    ) -> Var {
        let half = t.scale(lv, 0.5);
        let sd = t.exp(half);
        let scaled = t.mul_const(sd, noise.clone());
        t.add(mu, scaled)
    }

    fn decoder_input(
        &self,
        t: &mut Tape,
        embed: ParamId,
        token: usize,
        setting: DecodeSetting,
        extra_front: Var,
        extra_back: Option<Var>,
    ) -> Var {
        let word = match setting {
            DecodeSetting::Standard => t.embed(embed, token),
            DecodeSetting::Inputless => t.zeros(self.config.embed_dim),
        };
        match extra_back {
            Some(back) => t.concat(&[extra_front, word, back]),
            None => t.concat(&[extra_front, word]),
        }
    }

    /// One tree-decoder step: consumes `prev` and returns (logits, state).
    pub(crate) fn tape_tree_dec_step(
        &self,
        t: &mut Tape,
        z_y: Var,
        prev: usize,
        state: (Var, Var),
        setting: DecodeSetting,
    ) -> (Var, (Var, Var)) {
        let l = &self.layout;
        let input = self.decoder_input(t, l.tree_dec_embed, prev, setting, z_y, None);
        let state = self.lstm_step(t, &l.tree_dec, input, state);
        let lin = t.matvec(l.tree_out_w, state.0);
        let logits = t.add_bias(l.tree_out_b, lin);
        (logits, state)
    }

    /// One sentence-decoder step; `tree_h` is the tree decoder's final h.
    pub(crate) fn tape_sent_dec_step(
        &self,
        t: &mut Tape,
        z_x: Var,
        tree_h: Var,
        prev: usize,
        state: (Var, Var),
        setting: DecodeSetting,
    ) -> (Var, (Var, Var)) {
        let l = &self.layout;
        let input = self.decoder_input(t, l.sent_dec_embed, prev, setting, z_x, Some(tree_h));
        let state = self.lstm_step(t, &l.sent_dec, input, state);
        let lin = t.matvec(l.sent_out_w, state.0);
        let logits = t.add_bias(l.sent_out_b, lin);
        (logits, state)
    }

    pub(crate) fn tape_decoder_start(&self, t: &mut Tape, tree: bool) -> (Var, Var) {
        let ids = if tree { &self.layout.tree_dec } else { &self.layout.sent_dec };
        self.zero_state(t, ids)
    }

    /// Teacher-forced tree decoding: one logits vector per input position,
    /// plus the final recurrent state handed to the sentence decoder.
    pub(crate) fn tape_decode_tree(
        &self,
        t: &mut Tape,
        z_y: Var,
        y_in: &[usize],
        setting: DecodeSetting,
    ) -> (Vec<Var>, (Var, Var)) {
        let mut state = self.tape_decoder_start(t, true);
        let mut logits = Vec::with_capacity(y_in.len());
        for &tok in y_in {
            let (step_logits, next) = self.tape_tree_dec_step(t, z_y, tok, state, setting);
            logits.push(step_logits);
            state = next;
        }
        (logits, state)
    }

    /// Teacher-forced sentence decoding conditioned on z_x and the tree
    /// decoder's final hidden state.
    pub(crate) fn tape_decode_sentence(
        &self,
        t: &mut Tape,
        z_x: Var,
        tree_h: Var,
        x_in: &[usize],
        setting: DecodeSetting,
    ) -> Vec<Var> {
        let mut state = self.tape_decoder_start(t, false);
        let mut logits = Vec::with_capacity(x_in.len());
        for &tok in x_in {
            let (step_logits, next) =
                self.tape_sent_dec_step(t, z_x, tree_h, tok, state, setting);
            logits.push(step_logits);
            state = next;
        }
        logits
    }

    // ---- plain-value wrappers ----

    /// q(z_x | x) as a [`DiagGaussian`].
    pub fn encode_sentence(&self, x: &[usize]) -> Result<DiagGaussian, ModelError> {
        let mut t = Tape::new(&self.params);
        let (mu, lv) = self.tape_encode_sentence(&mut t, x)?;
        Ok(DiagGaussian { mean: t.value(mu).clone(), log_var: t.value(lv).clone() })
    }

    /// q(z_y | y[, z_x]) as a [`DiagGaussian`]. `z_x` must be present
    /// exactly when the variant is conditional.
    pub fn encode_tree(
        &self,
        y: &[usize],
        z_x: Option<&Array1<f64>>,
    ) -> Result<DiagGaussian, ModelError> {
        let mut t = Tape::new(&self.params);
        let z_var = z_x.map(|z| t.constant(z.clone()));
        let (mu, lv) = self.tape_encode_tree(&mut t, y, z_var)?;
        Ok(DiagGaussian { mean: t.value(mu).clone(), log_var: t.value(lv).clone() })
    }

    /// p(z_y | z_x) as a [`DiagGaussian`] (conditional variant only).
    pub fn conditional_prior(&self, z_x: &Array1<f64>) -> Result<DiagGaussian, ModelError> {
        if z_x.len() != self.config.latent_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.latent_dim,
                got: z_x.len(),
            });
        }
        let mut t = Tape::new(&self.params);
        let z = t.constant(z_x.clone());
        let (mu, lv) = self.tape_conditional_prior(&mut t, z)?;
        Ok(DiagGaussian { mean: t.value(mu).clone(), log_var: t.value(lv).clone() })
    }

    /// Teacher-forced tree decoding; returns per-step logits and the final
    /// decoder state.
    pub fn decode_tree(
        &self,
        z_y: &Array1<f64>,
        y_in: &[usize],
        setting: DecodeSetting,
    ) -> (Vec<Array1<f64>>, DecoderState) {
        let mut t = Tape::new(&self.params);
        let z = t.constant(z_y.clone());
        let (logits, state) = self.tape_decode_tree(&mut t, z, y_in, setting);
        let out = logits.into_iter().map(|v| t.value(v).clone()).collect();
        (out, DecoderState { h: t.value(state.0).clone(), c: t.value(state.1).clone() })
    }

    /// Teacher-forced sentence decoding; `tree_final` comes from
    /// [`Model::decode_tree`].
    pub fn decode_sentence(
        &self,
        z_x: &Array1<f64>,
        tree_final: &DecoderState,
        x_in: &[usize],
        setting: DecodeSetting,
    ) -> Vec<Array1<f64>> {
        let mut t = Tape::new(&self.params);
        let z = t.constant(z_x.clone());
        let th = t.constant(tree_final.h.clone());
        let logits = self.tape_decode_sentence(&mut t, z, th, x_in, setting);
        logits.into_iter().map(|v| t.value(v).clone()).collect()
    }
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps = logits.mapv(|x| (x - max).exp());
    let z = exps.sum();
    exps / z
}
