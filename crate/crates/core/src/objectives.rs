//! Training objectives: closed-form KL divergences, the two evidence lower
//! bounds, the KL annealing schedule, and word dropout.
//!
//! Reconstruction terms are log-likelihoods summed over tokens and batch
//! examples; the gradients handed back to the trainer are already those of
//! the batch-mean ELBO. All per-example randomness (dropout decisions,
//! reparameterization noise) is drawn from a counter-based stream keyed by
//! (seed, step, example index), so results do not depend on execution
//! order or thread count.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Batch, BOS, UNK};
use crate::exec::{self, Strategy};
use crate::model::{DecodeSetting, DiagGaussian, Model, ModelError, Variant};
use crate::nn::{GradStore, Tape, Var};

/// KL(q ‖ N(0, I)) = ½ [−log|Σ| − d + tr(Σ) + μᵀμ] for diagonal Σ.
pub fn kl_standard_normal(g: &DiagGaussian) -> Result<f64, ModelError> {
    if !g.is_finite() {
        return Err(ModelError::NonFiniteInput);
    }
    let mut acc = 0.0;
    for i in 0..g.dim() {
        let lv = g.log_var[i];
        acc += lv.exp() + g.mean[i] * g.mean[i] - 1.0 - lv;
    }
    Ok(0.5 * acc)
}

/// KL(q ‖ p) = ½ [log|Σ_p| − log|Σ_q| − d + tr(Σ_q/Σ_p) + (μ_p−μ_q)ᵀ Σ_p⁻¹ (μ_p−μ_q)]
/// elementwise over the diagonals.
pub fn kl_diag_gaussians(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64, ModelError> {
    if q.dim() != p.dim() {
        return Err(ModelError::DimensionMismatch { expected: q.dim(), got: p.dim() });
    }
    if !q.is_finite() || !p.is_finite() {
        return Err(ModelError::NonFiniteInput);
    }
    let mut acc = 0.0;
    for i in 0..q.dim() {
        let (lq, lp) = (q.log_var[i], p.log_var[i]);
        let dm = p.mean[i] - q.mean[i];
        acc += lp - lq - 1.0 + (lq - lp).exp() + dm * dm * (-lp).exp();
    }
    Ok(0.5 * acc)
}

/// Linear KL-weight ramp: 0 at step 0, reaching `cap` after
/// `rate × total_batches` steps, clamped at `cap` thereafter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub cap: f64,
    pub rate: f64,
    pub total_batches: u64,
}

impl AnnealSchedule {
    pub fn new(cap: f64, rate: f64, total_batches: u64) -> AnnealSchedule {
        assert!(cap > 0.0 && cap <= 1.0, "cap must be in (0, 1]");
        assert!(rate > 0.0 && rate <= 1.0, "rate must be in (0, 1]");
        AnnealSchedule { cap, rate, total_batches }
    }

    pub fn weight(&self, step: u64) -> f64 {
        let ramp = self.rate * self.total_batches as f64;
        if ramp <= 0.0 {
            return self.cap;
        }
        (self.cap * step as f64 / ramp).min(self.cap)
    }
}

/// Annealed KL weight at `step` under `schedule`.
pub fn anneal_weight(step: u64, schedule: &AnnealSchedule) -> f64 {
    schedule.weight(step)
}

/// Replace each non-BOS teacher token by `unk` with probability `rate`.
pub fn word_dropout<R: Rng>(tokens: &[usize], rate: f64, unk: usize, rng: &mut R) -> Vec<usize> {
    assert!((0.0..=1.0).contains(&rate), "dropout rate must be in [0, 1]");
    if rate == 0.0 {
        return tokens.to_vec();
    }
    tokens
        .iter()
        .map(|&t| {
            if t != BOS && rng.gen::<f64>() < rate {
                unk
            } else {
                t
            }
        })
        .collect()
}

/// Loss terms for one batch. Reconstruction terms are log-likelihoods
/// (≤ 0) summed over tokens and examples; KL terms are sums over examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rec_x: f64,
    pub rec_y: f64,
    pub kl_x: f64,
    pub kl_y: f64,
    pub kl_weight: f64,
    pub elbo: f64,
    pub examples: usize,
    pub sent_tokens: usize,
    pub tree_tokens: usize,
}

impl LossBreakdown {
    fn zero(kl_weight: f64) -> LossBreakdown {
        LossBreakdown {
            rec_x: 0.0,
            rec_y: 0.0,
            kl_x: 0.0,
            kl_y: 0.0,
            kl_weight,
            elbo: 0.0,
            examples: 0,
            sent_tokens: 0,
            tree_tokens: 0,
        }
    }

    /// Accumulate another batch's terms (same kl_weight) into this one.
    pub fn merge(&mut self, other: &LossBreakdown) {
        self.rec_x += other.rec_x;
        self.rec_y += other.rec_y;
        self.kl_x += other.kl_x;
        self.kl_y += other.kl_y;
        self.elbo += other.elbo;
        self.examples += other.examples;
        self.sent_tokens += other.sent_tokens;
        self.tree_tokens += other.tree_tokens;
    }

    /// Flat line-delimited training-log record.
    pub fn log_line(&self, step: u64) -> String {
        serde_json::json!({
            "step": step,
            "rec_x": self.rec_x,
            "rec_y": self.rec_y,
            "kl_x": self.kl_x,
            "kl_y": self.kl_y,
            "kl_weight": self.kl_weight,
            "elbo": self.elbo,
        })
        .to_string()
    }
}

/// Knobs for one ELBO evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ElboOptions {
    pub kl_weight: f64,
    pub word_dropout: f64,
    pub setting: DecodeSetting,
    /// Base seed for the per-example noise/dropout streams.
    pub seed: u64,
    /// Training step, mixed into the streams so epochs differ.
    pub step: u64,
    pub strategy: Strategy,
}

impl ElboOptions {
    pub fn deterministic(seed: u64) -> ElboOptions {
        ElboOptions {
            kl_weight: 1.0,
            word_dropout: 0.0,
            setting: DecodeSetting::Standard,
            seed,
            step: 0,
            strategy: Strategy::default(),
        }
    }
}

/// Counter-based per-example RNG stream (SplitMix64-mixed key).
pub(crate) fn stream_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut x = seed
        .wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}

fn standard_noise<R: Rng>(rng: &mut R, dim: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(dim, || rng.sample(StandardNormal))
}

/// Tape composition of KL(q ‖ N(0, I)).
fn tape_kl_standard(t: &mut Tape, mu: Var, lv: Var) -> Var {
    let dim = t.value(mu).len();
    let e = t.exp(lv);
    let m2 = t.mul(mu, mu);
    let a = t.add(e, m2);
    let b = t.sub(a, lv);
    let ones = t.constant(Array1::ones(dim));
    let inner = t.sub(b, ones);
    let s = t.sum(inner);
    t.scale(s, 0.5)
}

/// Tape composition of KL(q ‖ p) for diagonal Gaussians.
fn tape_kl_diag(t: &mut Tape, mu_q: Var, lv_q: Var, mu_p: Var, lv_p: Var) -> Var {
    let dim = t.value(mu_q).len();
    let diff_lv = t.sub(lv_p, lv_q);
    let lv_ratio = t.sub(lv_q, lv_p);
    let ratio = t.exp(lv_ratio);
    let dmu = t.sub(mu_p, mu_q);
    let dmu2 = t.mul(dmu, dmu);
    let neg_lv_p = t.scale(lv_p, -1.0);
    let inv_p = t.exp(neg_lv_p);
    let mah = t.mul(dmu2, inv_p);
    let a = t.add(diff_lv, ratio);
    let b = t.add(a, mah);
    let ones = t.constant(Array1::ones(dim));
    let inner = t.sub(b, ones);
    let s = t.sum(inner);
    t.scale(s, 0.5)
}

fn sum_nll(t: &mut Tape, logits: &[Var], targets: &[usize]) -> Var {
    debug_assert_eq!(logits.len(), targets.len());
    let mut total = t.scalar_const(0.0);
    for (l, &tok) in logits.iter().zip(targets) {
        let nll = t.nll_loss(*l, tok);
        total = t.add(total, nll);
    }
    total
}

/// Scalar tape vars for one example's loss terms (all ≥ 0 except via
/// numerics; reconstruction terms are negative log-likelihoods here).
struct ExampleVars {
    nll_x: Var,
    nll_y: Var,
    kl_x: Var,
    kl_y: Var,
}

/// Build the full per-example ELBO graph. Draw order from `rng`: sentence
/// dropout, tree dropout, z_x noise, z_y noise.
fn example_graph<'m>(
    model: &'m Model,
    t: &mut Tape<'m>,
    sentence: &[usize],
    tree: &[usize],
    opts: &ElboOptions,
    rng: &mut ChaCha8Rng,
) -> Result<ExampleVars, ModelError> {
    if sentence.len() < 2 || tree.len() < 2 {
        return Err(ModelError::EmptySequence);
    }
    let d = model.latent_dim();

    let x_in = word_dropout(&sentence[..sentence.len() - 1], opts.word_dropout, UNK, rng);
    let y_in = word_dropout(&tree[..tree.len() - 1], opts.word_dropout, UNK, rng);
    let eps_x = standard_noise(rng, d);
    let eps_y = standard_noise(rng, d);

    let (mu_x, lv_x) = model.tape_encode_sentence(t, sentence)?;
    let z_x = model.tape_reparameterize(t, mu_x, lv_x, &eps_x);
    let kl_x = tape_kl_standard(t, mu_x, lv_x);

    let (mu_y, lv_y, kl_y) = match model.variant() {
        Variant::Conditional => {
            let (mu_y, lv_y) = model.tape_encode_tree(t, tree, Some(z_x))?;
            let (mu_p, lv_p) = model.tape_conditional_prior(t, z_x)?;
            let kl_y = tape_kl_diag(t, mu_y, lv_y, mu_p, lv_p);
            (mu_y, lv_y, kl_y)
        }
        Variant::Independent => {
            let (mu_y, lv_y) = model.tape_encode_tree(t, tree, None)?;
            let kl_y = tape_kl_standard(t, mu_y, lv_y);
            (mu_y, lv_y, kl_y)
        }
    };
    let z_y = model.tape_reparameterize(t, mu_y, lv_y, &eps_y);

    let (tree_logits, (tree_h, _)) = model.tape_decode_tree(t, z_y, &y_in, opts.setting);
    let nll_y = sum_nll(t, &tree_logits, &tree[1..]);

    let sent_logits = model.tape_decode_sentence(t, z_x, tree_h, &x_in, opts.setting);
    let nll_x = sum_nll(t, &sent_logits, &sentence[1..]);

    Ok(ExampleVars { nll_x, nll_y, kl_x, kl_y })
}

fn example_contribution(
    model: &Model,
    sentence: &[usize],
    tree: &[usize],
    opts: &ElboOptions,
    index: u64,
    grads: Option<&mut GradStore>,
) -> Result<LossBreakdown, ModelError> {
    let mut rng = stream_rng(opts.seed, opts.step, index);
    let mut t = Tape::new(&model.params);
    let vars = example_graph(model, &mut t, sentence, tree, opts, &mut rng)?;

    let out = LossBreakdown {
        rec_x: -t.scalar(vars.nll_x),
        rec_y: -t.scalar(vars.nll_y),
        kl_x: t.scalar(vars.kl_x),
        kl_y: t.scalar(vars.kl_y),
        kl_weight: opts.kl_weight,
        elbo: -t.scalar(vars.nll_x) - t.scalar(vars.nll_y)
            - opts.kl_weight * (t.scalar(vars.kl_x) + t.scalar(vars.kl_y)),
        examples: 1,
        sent_tokens: sentence.len() - 1,
        tree_tokens: tree.len() - 1,
    };

    if let Some(grads) = grads {
        // Backward from the negated ELBO; callers flip the sign once per
        // batch rather than per node.
        let kl = t.add(vars.kl_x, vars.kl_y);
        let wkl = t.scale(kl, opts.kl_weight);
        let rec = t.add(vars.nll_x, vars.nll_y);
        let neg_elbo = t.add(rec, wkl);
        t.backward(neg_elbo, grads);
    }
    Ok(out)
}

/// ELBO terms for a batch (values only).
pub fn elbo(model: &Model, batch: &Batch, opts: &ElboOptions) -> Result<LossBreakdown, ModelError> {
    batch_elbo(model, batch, opts, None)
}

/// Conditional-variant ELBO; rejects models of the other variant.
pub fn elbo_c(model: &Model, batch: &Batch, opts: &ElboOptions) -> Result<LossBreakdown, ModelError> {
    if model.variant() != Variant::Conditional {
        return Err(ModelError::ModeMismatch("elbo_c requires a conditional model".into()));
    }
    elbo(model, batch, opts)
}

/// Independent-variant ELBO; rejects models of the other variant.
pub fn elbo_i(model: &Model, batch: &Batch, opts: &ElboOptions) -> Result<LossBreakdown, ModelError> {
    if model.variant() != Variant::Independent {
        return Err(ModelError::ModeMismatch("elbo_i requires an independent model".into()));
    }
    elbo(model, batch, opts)
}

/// ELBO terms plus d(batch-mean ELBO)/dθ accumulated into `grads`.
pub fn elbo_with_grads(
    model: &Model,
    batch: &Batch,
    opts: &ElboOptions,
    grads: &mut GradStore,
) -> Result<LossBreakdown, ModelError> {
    batch_elbo(model, batch, opts, Some(grads))
}

fn batch_elbo(
    model: &Model,
    batch: &Batch,
    opts: &ElboOptions,
    grads: Option<&mut GradStore>,
) -> Result<LossBreakdown, ModelError> {
    let indices: Vec<usize> = (0..batch.size()).collect();
    let want_grads = grads.is_some();

    type Acc = (LossBreakdown, Option<GradStore>, Option<ModelError>);
    let (totals, batch_grads, err) = exec::map_accumulate(
        opts.strategy,
        &indices,
        || -> Acc {
            (
                LossBreakdown::zero(opts.kl_weight),
                want_grads.then(|| GradStore::zeros_like(&model.params)),
                None,
            )
        },
        |acc, _, &i| {
            if acc.2.is_some() {
                return;
            }
            match example_contribution(
                model,
                batch.sentence(i),
                batch.tree(i),
                opts,
                i as u64,
                acc.1.as_mut(),
            ) {
                Ok(part) => acc.0.merge(&part),
                Err(e) => acc.2 = Some(e),
            }
        },
        |acc, part| {
            acc.0.merge(&part.0);
            if let (Some(g), Some(pg)) = (acc.1.as_mut(), part.1.as_ref()) {
                g.add_assign(pg);
            }
            if acc.2.is_none() {
                acc.2 = part.2;
            }
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(grads) = grads {
        let mut bg = batch_grads.expect("gradients requested");
        // Sign flip (backward ran on −ELBO) and batch mean in one pass.
        bg.scale(-1.0 / batch.size().max(1) as f64);
        grads.add_assign(&bg);
    }
    Ok(totals)
}
