//! Reconstruction metrics (PPL / NLL / KL for both streams, standard and
//! inputless), importance-weighted sentence scoring, and targeted
//! syntactic evaluation over grammatical minimal pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array1;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{batch_iter, tree_line_tokens, Dataset, Vocabulary, BOS};
use crate::exec::{self, Strategy};
use crate::model::{reparameterize, DecodeSetting, DiagGaussian, Model, ModelError, Variant};
use crate::objectives::{self, ElboOptions};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed grammar pair on line {line}: {reason}")]
    MalformedPair { line: usize, reason: String },
}

/// Token-level reconstruction totals for one dataset and setting.
/// `*_nll` fields are total nats over the split; per-token and
/// per-example views are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub setting: DecodeSetting,
    pub examples: usize,
    pub sent_tokens: usize,
    pub tree_tokens: usize,
    pub sent_nll: f64,
    pub tree_nll: f64,
    pub kl_x: f64,
    pub kl_y: f64,
}

impl ReconstructionReport {
    pub fn sent_ppl(&self) -> f64 {
        (self.sent_nll / self.sent_tokens.max(1) as f64).exp()
    }

    pub fn tree_ppl(&self) -> f64 {
        (self.tree_nll / self.tree_tokens.max(1) as f64).exp()
    }

    pub fn sent_nll_per_example(&self) -> f64 {
        self.sent_nll / self.examples.max(1) as f64
    }

    pub fn tree_nll_per_example(&self) -> f64 {
        self.tree_nll / self.examples.max(1) as f64
    }

    pub fn kl_x_per_example(&self) -> f64 {
        self.kl_x / self.examples.max(1) as f64
    }

    pub fn kl_y_per_example(&self) -> f64 {
        self.kl_y / self.examples.max(1) as f64
    }

    /// One row in the language-modeling report layout: PPL, NLL, and KL
    /// columns with the tree-stream scores in parentheses.
    pub fn to_table(&self, label: &str) -> String {
        let mut out = String::new();
        writeln!(out, "Model\tSetting\tPPL\tNLL\tKL").unwrap();
        writeln!(
            out,
            "{}\t{}\t{:.1}({:.1})\t{:.1}({:.1})\t{:.1}({:.1})",
            label,
            match self.setting {
                DecodeSetting::Standard => "standard",
                DecodeSetting::Inputless => "inputless",
            },
            self.sent_ppl(),
            self.tree_ppl(),
            self.sent_nll_per_example(),
            self.tree_nll_per_example(),
            self.kl_x_per_example(),
            self.kl_y_per_example(),
        )
        .unwrap();
        out
    }
}

/// Teacher-forced reconstruction metrics with the kl_weight = 1 bound
/// decomposition: one posterior sample per example, no word dropout.
pub fn reconstruction_metrics(
    model: &Model,
    dataset: &Dataset,
    setting: DecodeSetting,
    batch_size: usize,
    seed: u64,
) -> ReconstructionReport {
    let mut report = ReconstructionReport {
        setting,
        examples: 0,
        sent_tokens: 0,
        tree_tokens: 0,
        sent_nll: 0.0,
        tree_nll: 0.0,
        kl_x: 0.0,
        kl_y: 0.0,
    };
    for (bi, batch) in batch_iter(dataset, batch_size, false, 0).enumerate() {
        let opts = ElboOptions {
            kl_weight: 1.0,
            word_dropout: 0.0,
            setting,
            seed,
            step: bi as u64,
            strategy: Strategy::default(),
        };
        let lb = objectives::elbo(model, &batch, &opts).expect("eval batches are well-formed");
        report.examples += lb.examples;
        report.sent_tokens += lb.sent_tokens;
        report.tree_tokens += lb.tree_tokens;
        report.sent_nll += -lb.rec_x;
        report.tree_nll += -lb.rec_y;
        report.kl_x += lb.kl_x;
        report.kl_y += lb.kl_y;
    }
    report
}

/// Importance-weighted log-likelihood estimate of one (sentence, tree)
/// pair: log (1/K) Σ_k p(x, y, z_k) / q(z_k), with z drawn from the
/// recognition posteriors. Deterministic for a fixed seed.
pub fn score_sentence(
    model: &Model,
    sentence: &[usize],
    tree: &[usize],
    k: usize,
    seed: u64,
    setting: DecodeSetting,
) -> Result<f64, EvalError> {
    assert!(k >= 1, "need at least one importance sample");
    if sentence.len() < 2 || tree.len() < 2 {
        return Err(EvalError::Model(ModelError::EmptySequence));
    }
    let d = model.latent_dim();
    let q_x = model.encode_sentence(sentence)?;
    let std_normal = DiagGaussian::standard(d);

    let samples: Vec<usize> = (0..k).collect();
    let log_ws = exec::map_indexed(Strategy::default(), &samples, |_, &ks| -> Result<f64, EvalError> {
        let mut rng = objectives::stream_rng(seed, ks as u64, 0x5c03e);
        let eps_x = Array1::from_shape_simple_fn(d, || {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let eps_y = Array1::from_shape_simple_fn(d, || {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let z_x = reparameterize(&q_x, &eps_x).expect("dims match");

        let (q_y, prior_y) = match model.variant() {
            Variant::Conditional => {
                (model.encode_tree(tree, Some(&z_x))?, model.conditional_prior(&z_x)?)
            }
            Variant::Independent => (model.encode_tree(tree, None)?, std_normal.clone()),
        };
        let z_y = reparameterize(&q_y, &eps_y).expect("dims match");

        let (tree_logits, state) = model.decode_tree(&z_y, &tree[..tree.len() - 1], setting);
        let mut rec = 0.0;
        for (l, &tok) in tree_logits.iter().zip(&tree[1..]) {
            rec += log_softmax_at(l, tok);
        }
        let sent_logits =
            model.decode_sentence(&z_x, &state, &sentence[..sentence.len() - 1], setting);
        for (l, &tok) in sent_logits.iter().zip(&sentence[1..]) {
            rec += log_softmax_at(l, tok);
        }

        Ok(rec + std_normal.log_density(&z_x) + prior_y.log_density(&z_y)
            - q_x.log_density(&z_x)
            - q_y.log_density(&z_y))
    });

    let mut ws = Vec::with_capacity(k);
    for w in log_ws {
        ws.push(w?);
    }
    Ok(log_sum_exp(&ws) - (k as f64).ln())
}

fn log_softmax_at(logits: &Array1<f64>, target: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let z: f64 = logits.iter().map(|&x| (x - max).exp()).sum();
    logits[target] - max - z.ln()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Grammar phenomenon of a minimal pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phenomenon {
    Sva,
    Ra,
    Npi,
}

impl Phenomenon {
    pub fn label(&self) -> &'static str {
        match self {
            Phenomenon::Sva => "SVA",
            Phenomenon::Ra => "RA",
            Phenomenon::Npi => "NPI",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Complexity {
    Simple,
    Complex,
}

impl Complexity {
    pub fn label(&self) -> &'static str {
        match self {
            Complexity::Simple => "S",
            Complexity::Complex => "C",
        }
    }
}

/// One minimal pair: same meaning, one grammatical and one ungrammatical
/// sentence, each with its tree.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarPair {
    pub phenomenon: Phenomenon,
    pub complexity: Complexity,
    pub grammatical: String,
    pub ungrammatical: String,
    pub grammatical_tree: String,
    pub ungrammatical_tree: String,
}

impl GrammarPair {
    /// Parse one tab-separated record:
    /// `label \t good \t bad \t good_tree \t bad_tree`, where label is
    /// e.g. `SVA-S`, `RA-complex`, `NPI-simple`.
    pub fn parse_line(line_no: usize, line: &str) -> Result<GrammarPair, EvalError> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(EvalError::MalformedPair {
                line: line_no,
                reason: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let (phenomenon, complexity) = parse_case_label(line_no, fields[0])?;
        if fields[1].trim() == fields[2].trim() {
            return Err(EvalError::MalformedPair {
                line: line_no,
                reason: "the two sentences must differ".into(),
            });
        }
        Ok(GrammarPair {
            phenomenon,
            complexity,
            grammatical: fields[1].trim().to_string(),
            ungrammatical: fields[2].trim().to_string(),
            grammatical_tree: fields[3].trim().to_string(),
            ungrammatical_tree: fields[4].trim().to_string(),
        })
    }
}

fn parse_case_label(line_no: usize, label: &str) -> Result<(Phenomenon, Complexity), EvalError> {
    let err = |reason: String| EvalError::MalformedPair { line: line_no, reason };
    let (ph, cx) = label
        .split_once('-')
        .ok_or_else(|| err(format!("case label `{label}` must look like SVA-S")))?;
    let phenomenon = match ph.to_ascii_uppercase().as_str() {
        "SVA" => Phenomenon::Sva,
        "RA" => Phenomenon::Ra,
        "NPI" => Phenomenon::Npi,
        other => return Err(err(format!("unknown phenomenon `{other}`"))),
    };
    let complexity = match cx.to_ascii_lowercase().as_str() {
        "s" | "simple" => Complexity::Simple,
        "c" | "complex" => Complexity::Complex,
        other => return Err(err(format!("unknown complexity `{other}`"))),
    };
    Ok((phenomenon, complexity))
}

/// Accuracy per (phenomenon, complexity) cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyntaxEvalReport {
    cells: BTreeMap<(Phenomenon, Complexity), (usize, usize)>,
}

impl SyntaxEvalReport {
    pub fn record(&mut self, phenomenon: Phenomenon, complexity: Complexity, correct: bool) {
        let cell = self.cells.entry((phenomenon, complexity)).or_insert((0, 0));
        cell.1 += 1;
        if correct {
            cell.0 += 1;
        }
    }

    pub fn accuracy(&self, phenomenon: Phenomenon, complexity: Complexity) -> Option<f64> {
        self.cells
            .get(&(phenomenon, complexity))
            .map(|(correct, total)| *correct as f64 / (*total).max(1) as f64)
    }

    /// Two-header table in the (phenomenon × S/C) layout.
    pub fn to_table(&self, label: &str) -> String {
        let phenomena = [Phenomenon::Sva, Phenomenon::Ra, Phenomenon::Npi];
        let mut out = String::new();
        write!(out, "Model").unwrap();
        for ph in phenomena {
            write!(out, "\t{}\t", ph.label()).unwrap();
        }
        out.push('\n');
        write!(out, "").unwrap();
        for _ in phenomena {
            write!(out, "\tS\tC").unwrap();
        }
        out.push('\n');
        write!(out, "{label}").unwrap();
        for ph in phenomena {
            for cx in [Complexity::Simple, Complexity::Complex] {
                match self.accuracy(ph, cx) {
                    Some(a) => write!(out, "\t{a:.2}").unwrap(),
                    None => write!(out, "\t-").unwrap(),
                }
            }
        }
        out.push('\n');
        out
    }
}

/// Score every pair with `scorer(sentence, tree)`; a pair counts as correct
/// only when the grammatical member scores strictly higher.
pub fn targeted_syntactic_eval<F>(
    mut scorer: F,
    pairs: &[GrammarPair],
) -> Result<SyntaxEvalReport, EvalError>
where
    F: FnMut(&str, &str) -> Result<f64, EvalError>,
{
    let mut report = SyntaxEvalReport::default();
    for pair in pairs {
        let good = scorer(&pair.grammatical, &pair.grammatical_tree)?;
        let bad = scorer(&pair.ungrammatical, &pair.ungrammatical_tree)?;
        report.record(pair.phenomenon, pair.complexity, good > bad);
    }
    Ok(report)
}

/// Model-backed scorer over raw text: numericalizes with the run's
/// vocabularies and applies [`score_sentence`].
pub struct ModelScorer<'a> {
    pub model: &'a Model,
    pub sent_vocab: &'a Vocabulary,
    pub tree_vocab: &'a Vocabulary,
    pub k: usize,
    pub seed: u64,
    pub setting: DecodeSetting,
}

impl ModelScorer<'_> {
    pub fn score_text(&self, sentence: &str, tree: &str) -> Result<f64, EvalError> {
        let sent_ids = crate::corpus::sentence_to_ids(sentence, self.sent_vocab);
        let toks = tree_line_tokens(0, tree).map_err(|e| EvalError::MalformedPair {
            line: 0,
            reason: e.to_string(),
        })?;
        let mut tree_ids = vec![BOS];
        tree_ids.extend(toks.iter().map(|t| self.tree_vocab.id_or_unk(t)));
        tree_ids.push(crate::corpus::EOS);
        score_sentence(self.model, &sent_ids, &tree_ids, self.k, self.seed, self.setting)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Batch, PairedExample};
    use crate::model::{softmax, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_dataset() -> Dataset {
        let mut ds = Dataset::default();
        ds.examples.push(PairedExample { sentence: vec![1, 5, 6, 2], tree: vec![1, 4, 5, 2] });
        ds.examples.push(PairedExample { sentence: vec![1, 7, 2], tree: vec![1, 6, 7, 4, 2] });
        ds
    }

    #[test]
    fn uniform_model_ppl_equals_vocab_size() {
        let mut model = Model::new(ModelConfig::tiny(Variant::Independent, 15, 11), 4);
        model.params.zero_prefix("theta.");
        let ds = toy_dataset();
        let r = reconstruction_metrics(&model, &ds, DecodeSetting::Standard, 2, 0);
        assert!((r.sent_ppl() - 15.0).abs() < 1e-9, "sentence ppl {}", r.sent_ppl());
        assert!((r.tree_ppl() - 11.0).abs() < 1e-9);
    }

    #[test]
    fn ppl_nll_consistency() {
        let model = Model::new(ModelConfig::tiny(Variant::Conditional, 15, 11), 4);
        let ds = toy_dataset();
        let r = reconstruction_metrics(&model, &ds, DecodeSetting::Standard, 2, 3);
        let direct = (r.sent_nll / r.sent_tokens as f64).exp();
        assert!((direct - r.sent_ppl()).abs() / direct < 1e-9);
        assert_eq!(r.sent_tokens, 3 + 2); // EOS counted, BOS not
        assert_eq!(r.examples, 2);
    }

    #[test]
    fn single_example_ppl_matches_hand_computation() {
        let model = Model::new(ModelConfig::tiny(Variant::Independent, 15, 11), 4);
        let mut ds = Dataset::default();
        ds.examples.push(PairedExample { sentence: vec![1, 5, 2], tree: vec![1, 4, 2] });
        let seed = 9;
        let r = reconstruction_metrics(&model, &ds, DecodeSetting::Standard, 8, seed);

        // Recompose with the same per-example noise stream (step = batch 0,
        // example index 0): dropout draws are skipped at rate 0.
        let mut rng = objectives::stream_rng(seed, 0, 0);
        let d = model.latent_dim();
        let eps_x = Array1::from_shape_simple_fn(d, || {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let eps_y = Array1::from_shape_simple_fn(d, || {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let q_x = model.encode_sentence(&[1, 5, 2]).unwrap();
        let z_x = reparameterize(&q_x, &eps_x).unwrap();
        let q_y = model.encode_tree(&[1, 4, 2], None).unwrap();
        let z_y = reparameterize(&q_y, &eps_y).unwrap();
        let (tl, state) = model.decode_tree(&z_y, &[1, 4], DecodeSetting::Standard);
        let tree_nll: f64 = -tl
            .iter()
            .zip([4usize, 2])
            .map(|(l, t)| softmax(l)[t].ln())
            .sum::<f64>();
        let sl = model.decode_sentence(&z_x, &state, &[1, 5], DecodeSetting::Standard);
        let sent_nll: f64 = -sl
            .iter()
            .zip([5usize, 2])
            .map(|(l, t)| softmax(l)[t].ln())
            .sum::<f64>();
        assert!((r.sent_nll - sent_nll).abs() < 1e-9);
        assert!((r.tree_nll - tree_nll).abs() < 1e-9);
        assert!((r.sent_ppl() - (sent_nll / 2.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn report_table_shape() {
        let r = ReconstructionReport {
            setting: DecodeSetting::Inputless,
            examples: 10,
            sent_tokens: 100,
            tree_tokens: 200,
            sent_nll: 460.5,
            tree_nll: 190.2,
            kl_x: 50.0,
            kl_y: 5.0,
        };
        let t = r.to_table("cond");
        assert!(t.starts_with("Model\tSetting\tPPL\tNLL\tKL\n"));
        assert!(t.contains("cond\tinputless\t"));
        assert!(t.contains("("), "tree scores belong in parentheses: {t}");
    }

    #[test]
    fn score_sentence_k1_equals_single_sample_bound() {
        let model = Model::new(ModelConfig::tiny(Variant::Conditional, 15, 11), 4);
        let (sent, tree) = (vec![1, 5, 6, 2], vec![1, 4, 5, 2]);
        let a = score_sentence(&model, &sent, &tree, 1, 77, DecodeSetting::Standard).unwrap();
        let b = score_sentence(&model, &sent, &tree, 1, 77, DecodeSetting::Standard).unwrap();
        assert_eq!(a, b, "fixed seed must be deterministic");
        // K = 1: log mean over one weight is that log weight itself.
        assert!(a.is_finite());
    }

    #[test]
    fn score_sentence_is_padding_invariant() {
        let model = Model::new(ModelConfig::tiny(Variant::Independent, 15, 11), 4);
        let ds = toy_dataset();
        let batch_small = batch_iter(&ds, 1, false, 0).next().unwrap();
        // Same example padded to a longer width inside a bigger batch.
        let batch_big = batch_iter(&ds, 2, false, 0).next().unwrap();
        let a = score_sentence(
            &model,
            batch_small.sentence(0),
            batch_small.tree(0),
            4,
            5,
            DecodeSetting::Standard,
        )
        .unwrap();
        let b = score_sentence(
            &model,
            batch_big.sentence(0),
            batch_big.tree(0),
            4,
            5,
            DecodeSetting::Standard,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iwae_estimate_grows_with_k_on_average() {
        let model = Model::new(ModelConfig::tiny(Variant::Independent, 15, 11), 4);
        let (sent, tree) = (vec![1, 5, 6, 2], vec![1, 4, 5, 2]);
        let seeds = 0..20u64;
        let mean = |k: usize| -> f64 {
            seeds
                .clone()
                .map(|s| {
                    score_sentence(&model, &sent, &tree, k, s, DecodeSetting::Standard).unwrap()
                })
                .sum::<f64>()
                / 20.0
        };
        let m1 = mean(1);
        let m10 = mean(10);
        assert!(m10 >= m1 - 1e-6, "K=10 mean {m10} should not fall below K=1 mean {m1}");
    }

    #[test]
    fn grammar_pair_parsing() {
        let line = "SVA-S\tThe author laughs .\tThe author laugh .\t(S(NP(DT)(NN))(VP(VBZ))(.))\t(S(NP(DT)(NN))(VP(VBP))(.))";
        let pair = GrammarPair::parse_line(1, line).unwrap();
        assert_eq!(pair.phenomenon, Phenomenon::Sva);
        assert_eq!(pair.complexity, Complexity::Simple);
        assert_eq!(pair.grammatical, "The author laughs .");

        assert!(GrammarPair::parse_line(2, "SVA-S\tsame\tsame\t(S)\t(S)").is_err());
        assert!(GrammarPair::parse_line(3, "XX-S\ta\tb\t(S)\t(S)").is_err());
        assert!(GrammarPair::parse_line(4, "only\ttwo").is_err());
        let alias = GrammarPair::parse_line(5, "npi-complex\ta\tb\t(S)\t(S)").unwrap();
        assert_eq!(alias.phenomenon, Phenomenon::Npi);
        assert_eq!(alias.complexity, Complexity::Complex);
    }

    fn synthetic_pairs(n: usize) -> Vec<GrammarPair> {
        let cases = [
            (Phenomenon::Sva, Complexity::Simple),
            (Phenomenon::Sva, Complexity::Complex),
            (Phenomenon::Ra, Complexity::Simple),
            (Phenomenon::Ra, Complexity::Complex),
            (Phenomenon::Npi, Complexity::Simple),
            (Phenomenon::Npi, Complexity::Complex),
        ];
        (0..n)
            .map(|i| {
                let (phenomenon, complexity) = cases[i % cases.len()];
                GrammarPair {
                    phenomenon,
                    complexity,
                    grammatical: format!("good {i}"),
                    ungrammatical: format!("bad {i}"),
                    grammatical_tree: "(S(NP)(VP))".into(),
                    ungrammatical_tree: "(S(NP)(VP))".into(),
                }
            })
            .collect()
    }

    #[test]
    fn oracle_scorers_bound_accuracy() {
        let pairs = synthetic_pairs(60);
        let oracle = |s: &str, _t: &str| Ok(if s.starts_with("good") { 1.0 } else { 0.0 });
        let report = targeted_syntactic_eval(oracle, &pairs).unwrap();
        for ph in [Phenomenon::Sva, Phenomenon::Ra, Phenomenon::Npi] {
            for cx in [Complexity::Simple, Complexity::Complex] {
                assert_eq!(report.accuracy(ph, cx), Some(1.0));
            }
        }
        let inverted = |s: &str, _t: &str| Ok(if s.starts_with("good") { 0.0 } else { 1.0 });
        let report = targeted_syntactic_eval(inverted, &pairs).unwrap();
        assert_eq!(report.accuracy(Phenomenon::Sva, Complexity::Simple), Some(0.0));

        // Ties count as failures.
        let constant = |_: &str, _: &str| Ok(0.5);
        let report = targeted_syntactic_eval(constant, &pairs).unwrap();
        assert_eq!(report.accuracy(Phenomenon::Npi, Complexity::Complex), Some(0.0));
    }

    #[test]
    fn random_scorer_is_near_chance() {
        let pairs = synthetic_pairs(10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let random = move |_: &str, _: &str| Ok(rng.gen::<f64>());
        let report = targeted_syntactic_eval(random, &pairs).unwrap();
        let mut correct = 0.0;
        let mut total = 0.0;
        for ph in [Phenomenon::Sva, Phenomenon::Ra, Phenomenon::Npi] {
            for cx in [Complexity::Simple, Complexity::Complex] {
                let acc = report.accuracy(ph, cx).unwrap();
                correct += acc * (10_000.0 / 6.0);
                total += 10_000.0 / 6.0;
            }
        }
        let overall = correct / total;
        assert!((0.47..=0.53).contains(&overall), "overall accuracy {overall}");
    }

    #[test]
    fn syntax_table_layout() {
        let pairs = synthetic_pairs(12);
        let oracle = |s: &str, _t: &str| Ok(if s.starts_with("good") { 1.0 } else { 0.0 });
        let report = targeted_syntactic_eval(oracle, &pairs).unwrap();
        let table = report.to_table("tiny");
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("SVA") && lines[0].contains("RA") && lines[0].contains("NPI"));
        assert_eq!(lines[1].matches("\tS\tC").count(), 3);
        assert!(lines[2].starts_with("tiny\t1.00\t1.00\t1.00"));
    }
}
