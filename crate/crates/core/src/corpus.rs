//! Vocabularies, numericalized paired examples, batching, and dataset
//! statistics.
//!
//! Sentences and tree sequences arrive as aligned text files, one example
//! per line: `<split>.sent` holds whitespace-tokenized sentences and
//! `<split>.tree` holds bracketed trees (or already-linearized sequences).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::{self, ConstituencyTree};

/// Reserved ids shared by every vocabulary.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed tree on line {line}: {reason}")]
    MalformedTree { line: usize, reason: String },
    #[error("sentence/tree files differ in length ({sents} vs {trees})")]
    UnalignedFiles { sents: usize, trees: usize },
    #[error("empty example on line {0}")]
    EmptyExample(usize),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Token table with fixed reserved ids 0..3 (PAD, BOS, EOS, UNK).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, usize>,
}

impl Vocabulary {
    /// Count tokens over the given streams and keep those seen at least
    /// `min_count` times, ordered by descending count then token text.
    pub fn build<'a, I, S>(streams: I, min_count: usize) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for stream in streams {
            for tok in stream {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !RESERVED.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(kept.into_iter().map(|(t, _)| t.to_string()));
        Vocabulary::from_tokens(id_to_token)
    }

    fn from_tokens(id_to_token: Vec<String>) -> Vocabulary {
        let token_to_id =
            id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { id_to_token, token_to_id }
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.id_to_token[id]
    }

    /// Total size including the four reserved entries.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Size excluding reserved entries (the count reported in stats).
    pub fn content_len(&self) -> usize {
        self.id_to_token.len() - RESERVED.len()
    }

    /// One token per line, line number = id.
    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.id_to_token.join("\n") + "\n")
    }

    pub fn read_from(path: &Path) -> io::Result<Vocabulary> {
        let text = fs::read_to_string(path)?;
        let toks: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if toks.len() < RESERVED.len() || toks[..4] != RESERVED.map(String::from) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "vocab file must start with the four reserved tokens",
            ));
        }
        Ok(Vocabulary::from_tokens(toks))
    }

    /// SHA-256 of the token list, used to pin checkpoints to vocabularies.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.id_to_token {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        format!("{:x}", h.finalize())
    }
}

/// One numericalized (sentence, tree-sequence) pair, both wrapped in
/// BOS/EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedExample {
    pub sentence: Vec<usize>,
    pub tree: Vec<usize>,
}

/// Numericalize one raw example. The tree line may be bracketed text or an
/// already-linearized token sequence; it is validated either way.
pub fn numericalize(
    line_no: usize,
    sent_line: &str,
    tree_line: &str,
    sent_vocab: &Vocabulary,
    tree_vocab: &Vocabulary,
) -> Result<PairedExample, CorpusError> {
    let words: Vec<&str> = sent_line.split_whitespace().collect();
    if words.is_empty() {
        return Err(CorpusError::EmptyExample(line_no));
    }
    let tree_tokens = tree_line_tokens(line_no, tree_line)?;

    let mut sentence = Vec::with_capacity(words.len() + 2);
    sentence.push(BOS);
    sentence.extend(words.iter().map(|w| sent_vocab.id_or_unk(w)));
    sentence.push(EOS);

    let mut tree = Vec::with_capacity(tree_tokens.len() + 2);
    tree.push(BOS);
    tree.extend(tree_tokens.iter().map(|t| tree_vocab.id_or_unk(t)));
    tree.push(EOS);

    Ok(PairedExample { sentence, tree })
}

/// Tokenize and validate a tree line. Bracketed trees with words are
/// stripped and linearized; pre-linearized lines are validated as-is.
pub fn tree_line_tokens(line_no: usize, tree_line: &str) -> Result<Vec<String>, CorpusError> {
    let tokens: Vec<String> = if tree_line.split_whitespace().all(|t| {
        t == treebank::CLOSE || treebank::open_tag(t).map_or(false, |tag| !tag.is_empty())
    }) && !tree_line.trim().is_empty()
    {
        tree_line.split_whitespace().map(str::to_string).collect()
    } else {
        let tree = ConstituencyTree::parse(tree_line)
            .map_err(|e| CorpusError::MalformedTree { line: line_no, reason: e.to_string() })?;
        tree.strip_leaves().linearize()
    };
    treebank::validate_sequence(&tokens).map_err(|idx| CorpusError::MalformedTree {
        line: line_no,
        reason: format!("unbalanced at token {idx}"),
    })?;
    Ok(tokens)
}

/// A numericalized split plus the raw token lengths used for statistics.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub examples: Vec<PairedExample>,
    /// Examples dropped for exceeding the length limits.
    pub skipped_too_long: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Length limits applied when loading training data; oversize examples are
/// skipped and counted.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LengthLimits {
    pub max_sent_tokens: usize,
    pub max_tree_tokens: usize,
}

impl Default for LengthLimits {
    fn default() -> Self {
        LengthLimits { max_sent_tokens: 150, max_tree_tokens: 300 }
    }
}

/// Build a dataset from already-numericalized id lines (`.ids` files) or
/// from raw aligned lines.
pub fn dataset_from_lines(
    sent_lines: &[String],
    tree_lines: &[String],
    sent_vocab: &Vocabulary,
    tree_vocab: &Vocabulary,
    limits: Option<LengthLimits>,
) -> Result<Dataset, CorpusError> {
    if sent_lines.len() != tree_lines.len() {
        return Err(CorpusError::UnalignedFiles {
            sents: sent_lines.len(),
            trees: tree_lines.len(),
        });
    }
    let mut ds = Dataset::default();
    for (i, (s, t)) in sent_lines.iter().zip(tree_lines).enumerate() {
        let ex = numericalize(i + 1, s, t, sent_vocab, tree_vocab)?;
        if let Some(lim) = limits {
            // BOS/EOS excluded from the limit check.
            if ex.sentence.len() - 2 > lim.max_sent_tokens
                || ex.tree.len() - 2 > lim.max_tree_tokens
            {
                ds.skipped_too_long += 1;
                continue;
            }
        }
        ds.examples.push(ex);
    }
    if ds.skipped_too_long > 0 {
        log::info!("skipped {} over-length examples", ds.skipped_too_long);
    }
    Ok(ds)
}

pub fn read_lines(path: &Path) -> io::Result<Vec<String>> {
    let f = fs::File::open(path)?;
    io::BufReader::new(f).lines().collect()
}

/// Whitespace-tokenize raw text and wrap it in BOS/EOS; unseen words map
/// to UNK.
pub fn sentence_to_ids(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    let mut ids = vec![BOS];
    ids.extend(text.split_whitespace().map(|w| vocab.id_or_unk(w)));
    ids.push(EOS);
    ids
}

/// Render ids back to tokens, dropping PAD/BOS/EOS markers.
pub fn ids_to_tokens(ids: &[usize], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .filter(|&&id| id != PAD && id != BOS && id != EOS)
        .map(|&id| vocab.token(id).to_string())
        .collect()
}

/// A padded minibatch. Rows are padded with [`PAD`] after each sequence's
/// length; `lens` record the true lengths.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sentences: Vec<Vec<usize>>,
    pub sent_lens: Vec<usize>,
    pub trees: Vec<Vec<usize>>,
    pub tree_lens: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.sentences.len()
    }

    /// The unpadded sentence of example `i`.
    pub fn sentence(&self, i: usize) -> &[usize] {
        &self.sentences[i][..self.sent_lens[i]]
    }

    pub fn tree(&self, i: usize) -> &[usize] {
        &self.trees[i][..self.tree_lens[i]]
    }

    fn from_examples(examples: &[&PairedExample]) -> Batch {
        let sw = examples.iter().map(|e| e.sentence.len()).max().unwrap_or(0);
        let tw = examples.iter().map(|e| e.tree.len()).max().unwrap_or(0);
        let mut b = Batch {
            sentences: Vec::with_capacity(examples.len()),
            sent_lens: Vec::with_capacity(examples.len()),
            trees: Vec::with_capacity(examples.len()),
            tree_lens: Vec::with_capacity(examples.len()),
        };
        for e in examples {
            let mut s = e.sentence.clone();
            s.resize(sw, PAD);
            let mut t = e.tree.clone();
            t.resize(tw, PAD);
            b.sentences.push(s);
            b.sent_lens.push(e.sentence.len());
            b.trees.push(t);
            b.tree_lens.push(e.tree.len());
        }
        b
    }
}

/// Deterministic batch order for an epoch: every example exactly once,
/// shuffled by `seed` when requested.
pub fn batch_iter<'a>(
    dataset: &'a Dataset,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> impl Iterator<Item = Batch> + 'a {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    (0..order.len().div_ceil(batch_size)).map(move |b| {
        let ids = &order[b * batch_size..((b + 1) * batch_size).min(order.len())];
        let refs: Vec<&PairedExample> = ids.iter().map(|&i| &dataset.examples[i]).collect();
        Batch::from_examples(&refs)
    })
}

/// Per-split corpus statistics in the report's column layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train: usize,
    pub test: usize,
    pub valid: usize,
    pub ave_s: f64,
    pub max_s: usize,
    pub voc_s: usize,
    pub ave_t: f64,
    pub max_t: usize,
    pub voc_t: usize,
}

/// Compute statistics over raw (pre-BOS/EOS) token lengths of all splits.
/// Lengths are measured over every split; vocabulary sizes exclude the
/// reserved tokens.
pub fn dataset_stats(
    splits: &[(&str, &Dataset)],
    sent_vocab: &Vocabulary,
    tree_vocab: &Vocabulary,
) -> CorpusStats {
    let count = |name: &str| {
        splits.iter().find(|(n, _)| *n == name).map(|(_, d)| d.len()).unwrap_or(0)
    };
    let (train, test, valid) = (count("train"), count("test"), count("valid"));
    let mut s_total = 0usize;
    let mut s_max = 0usize;
    let mut t_total = 0usize;
    let mut t_max = 0usize;
    let mut n = 0usize;
    for (_, ds) in splits {
        for e in &ds.examples {
            let sl = e.sentence.len() - 2;
            let tl = e.tree.len() - 2;
            s_total += sl;
            t_total += tl;
            s_max = s_max.max(sl);
            t_max = t_max.max(tl);
            n += 1;
        }
    }
    let denom = n.max(1) as f64;
    CorpusStats {
        train,
        test,
        valid,
        ave_s: s_total as f64 / denom,
        max_s: s_max,
        voc_s: sent_vocab.content_len(),
        ave_t: t_total as f64 / denom,
        max_t: t_max,
        voc_t: tree_vocab.content_len(),
    }
}

impl CorpusStats {
    /// Tab-separated table with the standard column order.
    pub fn to_table(&self, dataset_name: &str) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "Dataset\tTrain\tTest\tValid\tAve_s\tMax_s\tVoc_s\tAve_t\tMax_t\tVoc_t"
        )
        .unwrap();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            dataset_name,
            self.train,
            self.test,
            self.valid,
            self.ave_s.round() as i64,
            self.max_s,
            self.voc_s,
            self.ave_t.round() as i64,
            self.max_t,
            self.voc_t
        )
        .unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_vocabs() -> (Vocabulary, Vocabulary) {
        let sv = Vocabulary::build([vec!["the", "the", "cat", "cat", "runs", "runs", "."]], 1);
        let tv = Vocabulary::build(
            [vec!["(S", "(NP", "(DT", "(NN", "(VP", "(VBZ", "(.", ")"]],
            1,
        );
        (sv, tv)
    }

    #[test]
    fn build_vocab_applies_min_count() {
        let v = Vocabulary::build([vec!["a", "a", "b"]], 2);
        assert!(v.id("a").is_some());
        assert_eq!(v.id("b"), None);
        assert_eq!(v.id_or_unk("b"), UNK);
        assert_eq!(v.content_len(), 1);
    }

    #[test]
    fn empty_stream_gives_reserved_only() {
        let v = Vocabulary::build(Vec::<Vec<&str>>::new(), 2);
        assert_eq!(v.len(), 4);
        assert_eq!(v.content_len(), 0);
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(UNK), "<unk>");
    }

    #[test]
    fn vocab_ids_are_bijective_and_ordered() {
        let v = Vocabulary::build([vec!["b", "a", "a", "c", "c"]], 1);
        // counts: a=2, c=2, b=1 → ties broken by token text
        assert_eq!(v.token(4), "a");
        assert_eq!(v.token(5), "c");
        assert_eq!(v.token(6), "b");
        for id in 0..v.len() {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
    }

    #[test]
    fn numericalize_wraps_and_unks() {
        let (sv, tv) = toy_vocabs();
        let ex = numericalize(1, "the dog runs .", "(S(NP(DT the)(NN dog))(VP(VBZ runs))(. .))", &sv, &tv)
            .unwrap();
        assert_eq!(ex.sentence[0], BOS);
        assert_eq!(*ex.sentence.last().unwrap(), EOS);
        assert_eq!(ex.sentence[2], UNK); // "dog" unseen
        assert_eq!(ex.sentence[1], sv.id("the").unwrap());
        assert_eq!(ex.tree[0], BOS);
        assert_eq!(*ex.tree.last().unwrap(), EOS);
    }

    #[test]
    fn numericalize_rejects_malformed_tree() {
        let (sv, tv) = toy_vocabs();
        let err = numericalize(3, "the cat", "(S))", &sv, &tv).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedTree { line: 3, .. }));
    }

    #[test]
    fn prelinearized_tree_lines_accepted() {
        let (sv, tv) = toy_vocabs();
        let ex = numericalize(1, "the cat", "(S (NP ) (VP ) )", &sv, &tv).unwrap();
        // BOS (S (NP ) (VP ) ) EOS
        assert_eq!(ex.tree.len(), 8);
    }

    #[test]
    fn batches_cover_every_example_once() {
        let (sv, tv) = toy_vocabs();
        let lines: Vec<String> = (0..65).map(|i| format!("the cat runs{i}")).collect();
        let trees: Vec<String> = (0..65).map(|_| "(S(NP)(VP))".to_string()).collect();
        let ds = dataset_from_lines(&lines, &trees, &sv, &tv, None).unwrap();
        let batches: Vec<Batch> = batch_iter(&ds, 32, true, 9).collect();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[2].size(), 1);
        let total: usize = batches.iter().map(|b| b.size()).sum();
        assert_eq!(total, 65);

        let b64: Vec<Batch> = batch_iter(&ds, 32, false, 0).take(2).collect();
        assert_eq!(b64[0].size(), 32);
        assert_eq!(b64[1].size(), 32);
    }

    #[test]
    fn batch_order_is_seed_deterministic() {
        let (_, tv) = toy_vocabs();
        let lines: Vec<String> = (0..40).map(|i| format!("w{i} the cat")).collect();
        let sv = Vocabulary::build(lines.iter().map(|l| l.split_whitespace()), 1);
        let trees: Vec<String> = (0..40).map(|_| "(S(NP)(VP))".to_string()).collect();
        let ds = dataset_from_lines(&lines, &trees, &sv, &tv, None).unwrap();
        let a: Vec<Vec<usize>> =
            batch_iter(&ds, 7, true, 123).map(|b| b.sentences.concat()).collect();
        let b: Vec<Vec<usize>> =
            batch_iter(&ds, 7, true, 123).map(|b| b.sentences.concat()).collect();
        let c: Vec<Vec<usize>> =
            batch_iter(&ds, 7, true, 124).map(|b| b.sentences.concat()).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn padding_only_after_length() {
        let (sv, tv) = toy_vocabs();
        let lines = vec!["the cat runs .".to_string(), "the cat".to_string()];
        let trees = vec!["(S(NP)(VP))".to_string(), "(S)".to_string()];
        let ds = dataset_from_lines(&lines, &trees, &sv, &tv, None).unwrap();
        let b: Vec<Batch> = batch_iter(&ds, 2, false, 0).collect();
        let batch = &b[0];
        for i in 0..2 {
            for (j, &id) in batch.sentences[i].iter().enumerate() {
                if j >= batch.sent_lens[i] {
                    assert_eq!(id, PAD);
                } else if j + 1 == batch.sent_lens[i] {
                    assert_eq!(id, EOS);
                }
            }
        }
    }

    #[test]
    fn length_limits_skip_and_count() {
        let (sv, tv) = toy_vocabs();
        let lines = vec!["the cat".to_string(), "the cat runs runs runs .".to_string()];
        let trees = vec!["(S(NP)(VP))".to_string(), "(S(NP)(VP))".to_string()];
        let lim = LengthLimits { max_sent_tokens: 3, max_tree_tokens: 300 };
        let ds = dataset_from_lines(&lines, &trees, &sv, &tv, Some(lim)).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.skipped_too_long, 1);
    }

    #[test]
    fn stats_single_example() {
        let (sv, tv) = toy_vocabs();
        let lines = vec!["the cat runs .".to_string()];
        let trees = vec!["(S(NP(DT the)(NN cat))(VP(VBZ runs))(. .))".to_string()];
        let ds = dataset_from_lines(&lines, &trees, &sv, &tv, None).unwrap();
        let stats = dataset_stats(&[("train", &ds)], &sv, &tv);
        assert_eq!(stats.train, 1);
        assert_eq!(stats.ave_s, 4.0);
        assert_eq!(stats.max_s, 4);
        assert!(stats.ave_s <= stats.max_s as f64);
        assert_eq!(stats.ave_t, stats.max_t as f64);
        let table = stats.to_table("toy");
        assert!(table.starts_with("Dataset\tTrain\tTest\tValid\tAve_s"));
        assert!(table.contains("toy\t1\t0\t0\t4"));
    }

    #[test]
    fn vocab_file_roundtrip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let (sv, _) = toy_vocabs();
        let path = dir.path().join("vocab.txt");
        sv.write_to(&path).unwrap();
        let rv = Vocabulary::read_from(&path).unwrap();
        assert_eq!(sv, rv);
        assert_eq!(sv.hash(), rv.hash());
    }
}
