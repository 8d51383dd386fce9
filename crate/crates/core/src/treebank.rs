//! Bracketed constituency trees: parsing, leaf stripping, linearization,
//! delinearization, template simplification, and sequence validation.
//!
//! A linearized tree is a flat token sequence in which every node emits one
//! atomic open token `"(TAG"` followed by its children and one close token
//! `")"`. Leaf words never appear in linearized form; they are stripped
//! first so part-of-speech tags become the deepest nodes.

use thiserror::Error;

/// Token closing a node in linearized form.
pub const CLOSE: &str = ")";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("unbalanced brackets at position {0}")]
    UnbalancedBrackets(usize),
    #[error("empty label at position {0}")]
    EmptyLabel(usize),
    #[error("node at position {0} mixes terminal words and child nodes")]
    MixedContent(usize),
    #[error("trailing input after the root tree at position {0}")]
    TrailingInput(usize),
    #[error("empty input")]
    EmptyInput,
}

/// A labeled ordered tree. `word` is non-empty only on preterminal leaves
/// parsed from bracketed text that still carries surface tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituencyTree {
    pub label: String,
    pub children: Vec<ConstituencyTree>,
    pub word: Option<String>,
}

impl ConstituencyTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        ConstituencyTree { label: label.into(), children: Vec::new(), word: None }
    }

    pub fn node(label: impl Into<String>, children: Vec<ConstituencyTree>) -> Self {
        ConstituencyTree { label: label.into(), children, word: None }
    }

    /// Parse a bracketed tree such as `(S(NP(DT The)(NN book))(VP(VBZ is)))`.
    /// Whitespace between tokens is ignored, so the spaced template form
    /// `( S ( NP ) ( VP ) )` parses identically.
    pub fn parse(text: &str) -> Result<Self, TreeError> {
        let toks = lex(text);
        if toks.is_empty() {
            return Err(TreeError::EmptyInput);
        }
        let mut pos = 0;
        let tree = parse_node(&toks, &mut pos)?;
        if pos != toks.len() {
            return Err(TreeError::TrailingInput(toks[pos].1));
        }
        Ok(tree)
    }

    /// Clear every terminal-word slot, leaving POS tags as the deepest nodes.
    pub fn strip_leaves(&self) -> ConstituencyTree {
        ConstituencyTree {
            label: self.label.clone(),
            children: self.children.iter().map(|c| c.strip_leaves()).collect(),
            word: None,
        }
    }

    /// Depth-first emission: `"(TAG"` per node, then children, then `")"`.
    /// Terminal words are not emitted; linearizing an unstripped tree yields
    /// the linearization of its stripped form.
    pub fn linearize(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(2 * self.node_count());
        self.emit(&mut out);
        out
    }

    fn emit(&self, out: &mut Vec<String>) {
        out.push(format!("({}", self.label));
        for c in &self.children {
            c.emit(out);
        }
        out.push(CLOSE.to_string());
    }

    /// Truncate to nodes at depth ≤ `depth` (root = depth 1), then linearize.
    pub fn simplify_template(&self, depth: usize) -> Vec<String> {
        let mut out = Vec::new();
        self.emit_truncated(depth, &mut out);
        out
    }

    fn emit_truncated(&self, remaining: usize, out: &mut Vec<String>) {
        out.push(format!("({}", self.label));
        if remaining > 1 {
            for c in &self.children {
                c.emit_truncated(remaining - 1, out);
            }
        }
        out.push(CLOSE.to_string());
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Surface tokens in order (the sentence under the tree).
    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words(&self, out: &mut Vec<String>) {
        if let Some(w) = &self.word {
            out.push(w.clone());
        }
        for c in &self.children {
            c.collect_words(out);
        }
    }
}

/// Rebuild the unique tree whose linearization equals `seq`.
pub fn delinearize<S: AsRef<str>>(seq: &[S]) -> Result<ConstituencyTree, TreeError> {
    let mut stack: Vec<ConstituencyTree> = Vec::new();
    let mut root: Option<ConstituencyTree> = None;
    for (i, tok) in seq.iter().enumerate() {
        let tok = tok.as_ref();
        if tok == CLOSE {
            let node = stack.pop().ok_or(TreeError::UnbalancedBrackets(i))?;
            match stack.last_mut() {
                Some(parent) => parent.children.push(node),
                None => {
                    if root.is_some() {
                        return Err(TreeError::TrailingInput(i));
                    }
                    root = Some(node);
                }
            }
        } else if let Some(tag) = open_tag(tok) {
            if tag.is_empty() {
                return Err(TreeError::EmptyLabel(i));
            }
            if root.is_some() {
                return Err(TreeError::TrailingInput(i));
            }
            stack.push(ConstituencyTree::leaf(tag));
        } else {
            return Err(TreeError::UnbalancedBrackets(i));
        }
    }
    if !stack.is_empty() {
        return Err(TreeError::UnbalancedBrackets(seq.len()));
    }
    root.ok_or(TreeError::EmptyInput)
}

/// Check bracket balance, token shape, and single-rootedness.
/// Returns `Err(i)` with the first violating index; an unclosed sequence
/// reports index `seq.len()` and an empty sequence reports index 0.
pub fn validate_sequence<S: AsRef<str>>(seq: &[S]) -> Result<(), usize> {
    if seq.is_empty() {
        return Err(0);
    }
    let mut depth = 0usize;
    let mut closed_root = false;
    for (i, tok) in seq.iter().enumerate() {
        let tok = tok.as_ref();
        if tok == CLOSE {
            if depth == 0 {
                return Err(i);
            }
            depth -= 1;
            if depth == 0 {
                closed_root = true;
            }
        } else if let Some(tag) = open_tag(tok) {
            if tag.is_empty() || closed_root {
                return Err(i);
            }
            depth += 1;
        } else {
            return Err(i);
        }
    }
    if depth != 0 {
        return Err(seq.len());
    }
    Ok(())
}

/// Tag of an open token: `"(NP"` → `Some("NP")`, anything else → `None`.
pub fn open_tag(tok: &str) -> Option<&str> {
    tok.strip_prefix('(').filter(|rest| !rest.contains('(') && !rest.contains(')'))
}

/// Join tokens for the one-sequence-per-line file format.
pub fn join_tokens<S: AsRef<str>>(seq: &[S]) -> String {
    seq.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join(" ")
}

/// Compact single-string rendering, e.g. `(S(NP)(VP))`.
pub fn compact<S: AsRef<str>>(seq: &[S]) -> String {
    seq.iter().map(|t| t.as_ref()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Lexeme {
    Open,
    Close,
    Word(String),
}

fn lex(text: &str) -> Vec<(Lexeme, usize)> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        match ch {
            '(' => toks.push((Lexeme::Open, i)),
            ')' => toks.push((Lexeme::Close, i)),
            c if c.is_whitespace() => {}
            _ => {
                let mut word = String::new();
                word.push(ch);
                while let Some(&(_, c)) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    word.push(c);
                    chars.next();
                }
                toks.push((Lexeme::Word(word), i));
            }
        }
    }
    toks
}

fn parse_node(toks: &[(Lexeme, usize)], pos: &mut usize) -> Result<ConstituencyTree, TreeError> {
    let (open, open_at) = &toks[*pos];
    if *open != Lexeme::Open {
        return Err(TreeError::UnbalancedBrackets(*open_at));
    }
    *pos += 1;
    let label = match toks.get(*pos) {
        Some((Lexeme::Word(w), _)) => {
            *pos += 1;
            w.clone()
        }
        Some((_, at)) => return Err(TreeError::EmptyLabel(*at)),
        None => return Err(TreeError::UnbalancedBrackets(*open_at)),
    };
    let mut node = ConstituencyTree::leaf(label);
    let mut words: Vec<String> = Vec::new();
    loop {
        match toks.get(*pos) {
            Some((Lexeme::Close, at)) => {
                if !words.is_empty() {
                    if !node.children.is_empty() {
                        return Err(TreeError::MixedContent(*at));
                    }
                    node.word = Some(words.join(" "));
                }
                *pos += 1;
                return Ok(node);
            }
            Some((Lexeme::Open, at)) => {
                if !words.is_empty() {
                    return Err(TreeError::MixedContent(*at));
                }
                node.children.push(parse_node(toks, pos)?);
            }
            Some((Lexeme::Word(w), _)) => {
                words.push(w.clone());
                *pos += 1;
            }
            None => return Err(TreeError::UnbalancedBrackets(*open_at)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1_WORDED: &str = "(S(NP(NP(DT The)(NN book))(SBAR(WHNP(IN that))(S(NP(PRP you))(VP(VBP love)))))(VP(VBZ is)(ADJP(JJ good)))(. .))";
    const FIG1_STRIPPED: &str =
        "(S(NP(NP(DT)(NN))(SBAR(WHNP(IN))(S(NP(PRP))(VP(VBP)))))(VP(VBZ)(ADJP(JJ)))(.))";

    #[test]
    fn parses_nested_tree_with_words() {
        let t = ConstituencyTree::parse("(S(NP(DT The)(NN book))(VP(VBZ is))(. .))").unwrap();
        assert_eq!(t.label, "S");
        assert_eq!(t.children.len(), 3);
        assert_eq!(t.children[0].label, "NP");
        assert_eq!(t.children[0].children[0].word.as_deref(), Some("The"));
        assert_eq!(t.words(), vec!["The", "book", "is", "."]);
    }

    #[test]
    fn parses_single_node() {
        let t = ConstituencyTree::parse("(X)").unwrap();
        assert_eq!(t, ConstituencyTree::leaf("X"));
    }

    #[test]
    fn rejects_unbalanced_input() {
        assert!(matches!(
            ConstituencyTree::parse("((S)"),
            Err(TreeError::EmptyLabel(_)) | Err(TreeError::UnbalancedBrackets(_))
        ));
        assert!(ConstituencyTree::parse("(S").is_err());
        assert!(ConstituencyTree::parse("(S))").is_err());
    }

    #[test]
    fn rejects_empty_label() {
        assert_eq!(ConstituencyTree::parse("(()"), Err(TreeError::EmptyLabel(1)));
    }

    #[test]
    fn rejects_two_roots() {
        assert!(matches!(
            ConstituencyTree::parse("(S)(NP)"),
            Err(TreeError::TrailingInput(_))
        ));
    }

    #[test]
    fn whitespace_is_ignored() {
        let spaced = ConstituencyTree::parse("( S ( NP ) ( VP ) )").unwrap();
        let tight = ConstituencyTree::parse("(S(NP)(VP))").unwrap();
        assert_eq!(spaced, tight);
    }

    #[test]
    fn functional_tags_kept_verbatim() {
        let t = ConstituencyTree::parse("(S(NP-SBJ(NN trade)))").unwrap();
        assert_eq!(t.children[0].label, "NP-SBJ");
        assert_eq!(compact(&t.strip_leaves().linearize()), "(S(NP-SBJ(NN)))");
    }

    #[test]
    fn strip_clears_words_and_is_idempotent() {
        let t = ConstituencyTree::parse("(NN book)").unwrap();
        let s = t.strip_leaves();
        assert_eq!(compact(&s.linearize()), "(NN)");
        assert_eq!(s.strip_leaves(), s);
    }

    #[test]
    fn figure1_strip_and_linearize() {
        let t = ConstituencyTree::parse(FIG1_WORDED).unwrap();
        assert_eq!(t.words().join(" "), "The book that you love is good .");
        let seq = t.strip_leaves().linearize();
        assert_eq!(compact(&seq), FIG1_STRIPPED);
        assert_eq!(seq.len(), 2 * t.node_count());
    }

    #[test]
    fn linearize_single_node() {
        assert_eq!(ConstituencyTree::leaf("S").linearize(), vec!["(S", ")"]);
    }

    #[test]
    fn delinearize_inverts_linearize() {
        let t = ConstituencyTree::parse(FIG1_WORDED).unwrap().strip_leaves();
        let seq = t.linearize();
        assert_eq!(delinearize(&seq).unwrap(), t);
        assert_eq!(delinearize(&["(S", ")"]).unwrap(), ConstituencyTree::leaf("S"));
    }

    #[test]
    fn delinearize_rejects_unbalanced() {
        assert_eq!(delinearize(&["(S", "(NP", ")"]), Err(TreeError::UnbalancedBrackets(3)));
        assert_eq!(delinearize(&["(S", ")", ")"]), Err(TreeError::UnbalancedBrackets(2)));
    }

    #[test]
    fn figure1_depth2_template() {
        let t = ConstituencyTree::parse(FIG1_WORDED).unwrap();
        assert_eq!(compact(&t.simplify_template(2)), "(S(NP)(VP)(.))");
    }

    #[test]
    fn table4_style_template() {
        let t = ConstituencyTree::parse(
            "(S (PP (IN in)(NP (CD 1987))) (PP (IN at)(NP (NN council))) (NP (DT a)(NN fountain)) (VP (VBD was)(VP (VBN erected))) (. .))",
        )
        .unwrap();
        assert_eq!(join_tokens(&t.simplify_template(2)), "(S (PP ) (PP ) (NP ) (VP ) (. ) )");
    }

    #[test]
    fn template_depth_one_and_deep() {
        let t = ConstituencyTree::parse("(S(NP)(VP))").unwrap();
        assert_eq!(t.simplify_template(1), vec!["(S", ")"]);
        // Beyond the tree depth the template equals the full linearization.
        assert_eq!(t.simplify_template(99), t.linearize());
        assert_eq!(ConstituencyTree::leaf("X").simplify_template(5), vec!["(X", ")"]);
    }

    #[test]
    fn template_idempotent_under_reparse() {
        let t = ConstituencyTree::parse(FIG1_WORDED).unwrap();
        let tmpl = t.simplify_template(2);
        let reparsed = delinearize(&tmpl).unwrap();
        assert_eq!(reparsed.simplify_template(2), tmpl);
    }

    #[test]
    fn validate_accepts_balanced() {
        assert_eq!(validate_sequence(&["(S", "(NP", ")", "(VP", ")", ")"]), Ok(()));
    }

    #[test]
    fn validate_reports_first_violation() {
        assert_eq!(validate_sequence(&["(S", ")", ")"]), Err(2));
        assert_eq!(validate_sequence::<&str>(&[]), Err(0));
        assert_eq!(validate_sequence(&["(S", "(NP", ")"]), Err(3));
        assert_eq!(validate_sequence(&["(S", ")", "(NP", ")"]), Err(2));
        assert_eq!(validate_sequence(&["(S", "x", ")"]), Err(1));
    }
}
