//! Substitute scores for one sentence position.
//!
//! Replacing the word at position `t` by a candidate `x` changes only the
//! conditionals whose n-gram window covers `t`. For an order-N model those
//! are the predictions of positions `t .. t + N - 1` (clipped at `</s>`),
//! and each one unfolds by back-off into a list of alternatives. The
//! [`TermTree`] stores that structure once per query; [`substitute_logp`]
//! evaluates it for a given candidate.

use std::cmp::Ordering;

use crate::lm::{LogProb, NgramLm, Vocab, WordId, ABSENT, BOS_ID, EOS_ID, UNK_ID};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("K must be at least 1")]
    ZeroK,
    #[error("padded sentence must start with <s>, end with </s> and hold at least one word")]
    BadPadding,
    #[error("target index {0} is a boundary token or out of range")]
    BadTarget(usize),
}

/// Which words may be returned as substitutes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CandidatePolicy {
    pub include_unk: bool,
    pub exclude_target: bool,
}

/// A padded sentence with one position opened up for substitution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    words: Vec<WordId>,
    target: usize,
    k: usize,
    policy: CandidatePolicy,
}

impl Query {
    /// `words` must be `<s> ... </s>`; `target` indexes into it.
    pub fn new(words: Vec<WordId>, target: usize, k: usize) -> Result<Self, QueryError> {
        if k == 0 {
            return Err(QueryError::ZeroK);
        }
        let n = words.len();
        if n < 3 || words[0] != BOS_ID || words[n - 1] != EOS_ID {
            return Err(QueryError::BadPadding);
        }
        if target == 0 || target >= n - 1 {
            return Err(QueryError::BadTarget(target));
        }
        Ok(Query {
            words,
            target,
            k,
            policy: CandidatePolicy::default(),
        })
    }

    /// Pads `tokens` with sentence markers and targets `tokens[position]`.
    /// Unknown tokens become `<unk>`.
    pub fn from_tokens<S: AsRef<str>>(
        vocab: &Vocab,
        tokens: &[S],
        position: usize,
        k: usize,
    ) -> Result<Self, QueryError> {
        Self::new(pad(vocab, tokens), position + 1, k)
    }

    pub fn with_policy(mut self, policy: CandidatePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_k(mut self, k: usize) -> Result<Self, QueryError> {
        if k == 0 {
            return Err(QueryError::ZeroK);
        }
        self.k = k;
        Ok(self)
    }

    pub fn words(&self) -> &[WordId] {
        &self.words
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn policy(&self) -> CandidatePolicy {
        self.policy
    }

    /// The word currently at the target position.
    pub fn original(&self) -> WordId {
        self.words[self.target]
    }

    /// Whether `w` may appear in a substitute list for this query.
    pub fn is_eligible(&self, lm: &NgramLm, w: WordId) -> bool {
        if w == BOS_ID || w == EOS_ID {
            return false;
        }
        if w == UNK_ID && !self.policy.include_unk {
            return false;
        }
        if self.policy.exclude_target && w == self.original() {
            return false;
        }
        lm.alpha(&[w]) != ABSENT
    }

    pub fn eligible_count(&self, lm: &NgramLm) -> usize {
        (0..lm.vocab().len() as WordId)
            .filter(|&w| self.is_eligible(lm, w))
            .count()
    }
}

/// Maps tokens to ids (OOV to `<unk>`) and wraps them in `<s> ... </s>`.
pub fn pad<S: AsRef<str>>(vocab: &Vocab, tokens: &[S]) -> Vec<WordId> {
    let mut words = Vec::with_capacity(tokens.len() + 2);
    words.push(BOS_ID);
    words.extend(tokens.iter().map(|t| vocab.id_or_unk(t.as_ref())));
    words.push(EOS_ID);
    words
}

/// An n-gram argument of α or β. `gram[hole]` holds the original word and
/// is overwritten by the candidate when scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arg {
    pub gram: Vec<WordId>,
    pub hole: Option<usize>,
}

impl Arg {
    fn span(words: &[WordId], start: usize, end: usize, target: usize) -> Self {
        Arg {
            gram: words[start..end].to_vec(),
            hole: (start..end).contains(&target).then(|| target - start),
        }
    }

    /// Writes the argument with `x` in the hole into `buf`.
    pub fn fill_into<'b>(&self, x: WordId, buf: &'b mut Vec<WordId>) -> &'b [WordId] {
        buf.clear();
        buf.extend_from_slice(&self.gram);
        if let Some(h) = self.hole {
            buf[h] = x;
        }
        buf
    }
}

/// One back-off alternative: `Σ β(betas) + α(alpha)`, taken when `alpha`
/// is observed and every earlier branch's is not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub betas: Vec<Arg>,
    pub alpha: Arg,
}

/// The prediction of padded position `predicted` from its history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub predicted: usize,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermTree {
    pub blocks: Vec<Block>,
}

impl TermTree {
    pub fn build(lm: &NgramLm, q: &Query) -> Self {
        let words = q.words();
        let t = q.target();
        let last = words.len() - 1;
        let n = lm.order();
        let mut blocks = Vec::with_capacity(n);
        for j in 0..n {
            let i = t + j;
            if i > last {
                break;
            }
            let hist = (n - 1).min(i);
            let branches = (0..=hist)
                .map(|m| Branch {
                    betas: (0..m)
                        .map(|b| Arg::span(words, i - hist + b, i, t))
                        .collect(),
                    alpha: Arg::span(words, i - hist + m, i + 1, t),
                })
                .collect();
            blocks.push(Block {
                predicted: i,
                branches,
            });
        }
        TermTree { blocks }
    }
}

/// Unnormalized `log p(x | context)`: the sum over blocks of the first
/// branch whose α is observed. β terms are added left to right before α.
pub fn substitute_logp(lm: &NgramLm, tree: &TermTree, x: WordId) -> LogProb {
    let mut buf = Vec::with_capacity(lm.order());
    let mut total = 0.0;
    for block in &tree.blocks {
        let mut value = ABSENT;
        let mut backoff = 0.0;
        for (m, branch) in block.branches.iter().enumerate() {
            let alpha = lm.alpha(branch.alpha.fill_into(x, &mut buf));
            if alpha != ABSENT {
                value = backoff + alpha;
                break;
            }
            // the next branch carries one more β: the history suffix this
            // branch conditioned on
            if let Some(next) = block.branches.get(m + 1) {
                backoff += lm.beta(next.betas[m].fill_into(x, &mut buf));
            }
        }
        total += value;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Substitute {
    pub word: WordId,
    pub score: LogProb,
}

/// Descending score, ascending id.
pub fn rank_order(a: &Substitute, b: &Substitute) -> Ordering {
    b.score.total_cmp(&a.score).then(a.word.cmp(&b.word))
}

/// Ranked substitutes, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubstituteList(Vec<Substitute>);

impl SubstituteList {
    /// Sorts `items` into rank order and keeps the first `k`.
    pub fn from_candidates(mut items: Vec<Substitute>, k: usize) -> Self {
        items.sort_unstable_by(rank_order);
        items.truncate(k);
        SubstituteList(items)
    }

    pub fn as_slice(&self) -> &[Substitute] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scores(&self) -> Vec<LogProb> {
        self.0.iter().map(|s| s.score).collect()
    }

    pub fn words(&self) -> Vec<WordId> {
        self.0.iter().map(|s| s.word).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Substitute> {
        self.0.iter()
    }
}

impl<'a> IntoIterator for &'a SubstituteList {
    type Item = &'a Substitute;
    type IntoIter = std::slice::Iter<'a, Substitute>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Scores every eligible word and returns the best `K`.
pub fn oracle_topk(lm: &NgramLm, q: &Query) -> SubstituteList {
    let tree = TermTree::build(lm, q);
    let items = (0..lm.vocab().len() as WordId)
        .filter(|&w| q.is_eligible(lm, w))
        .map(|w| Substitute {
            word: w,
            score: substitute_logp(lm, &tree, w),
        })
        .collect();
    SubstituteList::from_candidates(items, q.k())
}

#[cfg(test)]
#[allow(clippy::approx_constant)] // ARPA literals such as -0.30103
mod tests {
    use super::*;
    use crate::lm::parse_arpa_str;

    fn toy() -> NgramLm {
        parse_arpa_str(include_str!("../tests/data/toy.arpa")).unwrap()
    }

    /// A trigram model over `a b d e x y` with nothing but unigrams and
    /// enough higher-order entries to be parsed; only the tree shape is
    /// under test.
    fn trigram() -> NgramLm {
        let text = "\\data\\\nngram 1=9\nngram 2=1\nngram 3=1\n\n\\1-grams:\n\
            -99\t<s>\n-1\t</s>\n-1\t<unk>\n-1\ta\n-1\tb\n-1\td\n-1\te\n-1\tx\n-1\ty\n\n\
            \\2-grams:\n-0.5\ta b\n\n\\3-grams:\n-0.2\ta b x\n\n\\end\\\n";
        parse_arpa_str(text).unwrap()
    }

    #[test]
    fn trigram_tree_has_three_blocks() {
        let lm = trigram();
        let q = Query::from_tokens(lm.vocab(), &["a", "b", "x", "d", "e"], 2, 1).unwrap();
        let tree = TermTree::build(&lm, &q);
        assert_eq!(tree.blocks.len(), 3);
        let v = |w: &str| lm.vocab().get(w).unwrap();
        let (a, b, x, d, e) = (v("a"), v("b"), v("x"), v("d"), v("e"));

        // α(abx) | β(ab)+α(bx) | β(ab)+β(b)+α(x)
        let b0 = &tree.blocks[0];
        assert_eq!(b0.predicted, 3);
        assert_eq!(b0.branches.len(), 3);
        assert_eq!(
            b0.branches[0].alpha,
            Arg {
                gram: vec![a, b, x],
                hole: Some(2)
            }
        );
        assert_eq!(
            b0.branches[1].betas,
            vec![Arg {
                gram: vec![a, b],
                hole: None
            }]
        );
        assert_eq!(
            b0.branches[1].alpha,
            Arg {
                gram: vec![b, x],
                hole: Some(1)
            }
        );
        assert_eq!(
            b0.branches[2].betas[1],
            Arg {
                gram: vec![b],
                hole: None
            }
        );
        assert_eq!(
            b0.branches[2].alpha,
            Arg {
                gram: vec![x],
                hole: Some(0)
            }
        );

        // α(bxd) | β(bx)+α(xd) | β(bx)+β(x)+α(d)
        let b1 = &tree.blocks[1];
        assert_eq!(
            b1.branches[0].alpha,
            Arg {
                gram: vec![b, x, d],
                hole: Some(1)
            }
        );
        assert_eq!(
            b1.branches[1].betas,
            vec![Arg {
                gram: vec![b, x],
                hole: Some(1)
            }]
        );
        assert_eq!(
            b1.branches[2].betas[1],
            Arg {
                gram: vec![x],
                hole: Some(0)
            }
        );
        assert_eq!(
            b1.branches[2].alpha,
            Arg {
                gram: vec![d],
                hole: None
            }
        );

        // α(xde) | β(xd)+α(de) | β(xd)+β(d)+α(e)
        let b2 = &tree.blocks[2];
        assert_eq!(
            b2.branches[0].alpha,
            Arg {
                gram: vec![x, d, e],
                hole: Some(0)
            }
        );
        assert_eq!(
            b2.branches[1].alpha,
            Arg {
                gram: vec![d, e],
                hole: None
            }
        );
        assert_eq!(
            b2.branches[2].betas,
            vec![
                Arg {
                    gram: vec![x, d],
                    hole: Some(0)
                },
                Arg {
                    gram: vec![d],
                    hole: None
                },
            ]
        );
    }

    #[test]
    fn right_edge_drops_blocks() {
        let lm = trigram();
        let q = Query::from_tokens(lm.vocab(), &["a", "b", "x", "d", "e"], 4, 1).unwrap();
        let tree = TermTree::build(&lm, &q);
        assert_eq!(tree.blocks.len(), 2);
        assert_eq!(tree.blocks[1].predicted, q.words().len() - 1);
    }

    #[test]
    fn sentence_start_truncates_history() {
        let lm = trigram();
        let q = Query::from_tokens(lm.vocab(), &["a", "b"], 0, 1).unwrap();
        let tree = TermTree::build(&lm, &q);
        // predicting position 1 sees only <s>
        assert_eq!(tree.blocks[0].branches.len(), 2);
        assert_eq!(
            tree.blocks[0].branches[0].alpha.gram,
            vec![BOS_ID, q.original()]
        );
    }

    #[test]
    fn unigram_model_single_branch() {
        let text = "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.3\ta\n-0.3\t</s>\n-0.5\t<unk>\n\\end\\\n";
        let lm = parse_arpa_str(text).unwrap();
        let q = Query::from_tokens(lm.vocab(), &["a", "a"], 0, 1).unwrap();
        let tree = TermTree::build(&lm, &q);
        assert_eq!(tree.blocks.len(), 1);
        assert_eq!(tree.blocks[0].branches.len(), 1);
        assert!(tree.blocks[0].branches[0].betas.is_empty());
    }

    #[test]
    fn toy_substitute_score() {
        let lm = toy();
        let q = Query::from_tokens(lm.vocab(), &["a", "c", "b"], 1, 2).unwrap();
        let tree = TermTree::build(&lm, &q);
        let c = lm.vocab().get("c").unwrap();
        let a = lm.vocab().get("a").unwrap();
        let b = lm.vocab().get("b").unwrap();
        // cond(c | a) + cond(b | c) = α(a c) + α(c b)
        assert_eq!(substitute_logp(&lm, &tree, c), 0.0 + -0.39794 + -0.30103);
        assert_eq!(
            substitute_logp(&lm, &tree, c),
            0.0 + lm.cond_logp(c, &[a]) + lm.cond_logp(b, &[c])
        );
        // x = b: a b and b b unseen, β(a)+α(b) then β(b)+α(b)
        let expected = 0.0 + (-0.30103 + -0.69897) + (-0.243038 + -0.69897);
        assert_eq!(substitute_logp(&lm, &tree, b), expected);
    }

    #[test]
    fn toy_oracle_top_two() {
        let lm = toy();
        let q = Query::from_tokens(lm.vocab(), &["a", "c", "b"], 1, 2).unwrap();
        let got = oracle_topk(&lm, &q);
        let words: Vec<&str> = got.words().iter().map(|&w| lm.vocab().word(w)).collect();
        // brute force over {a, b, c}: c = -0.69897, a = -1.8239087, b = -1.942008
        assert_eq!(words, ["c", "a"]);
        assert_eq!(got.scores()[0], 0.0 + -0.39794 + -0.30103);
        assert_eq!(
            got.scores()[1],
            0.0 + (-0.30103 + -0.5228787) + (-0.30103 + -0.69897)
        );
    }

    #[test]
    fn oracle_clamps_k_and_breaks_ties_by_id() {
        let lm = toy();
        let q = Query::from_tokens(lm.vocab(), &["c"], 0, 50).unwrap();
        let got = oracle_topk(&lm, &q);
        // context <s> _ </s>: eligible a, b, c
        assert_eq!(got.len(), 3);
        let q = q.with_policy(CandidatePolicy {
            include_unk: true,
            exclude_target: false,
        });
        assert_eq!(oracle_topk(&lm, &q).len(), 4);
        let q = q.with_policy(CandidatePolicy {
            include_unk: false,
            exclude_target: true,
        });
        assert!(!oracle_topk(&lm, &q).words().contains(&q.original()));

        let items = vec![
            Substitute {
                word: 9,
                score: -1.0,
            },
            Substitute {
                word: 4,
                score: -1.0,
            },
            Substitute {
                word: 7,
                score: -0.5,
            },
        ];
        let list = SubstituteList::from_candidates(items, 3);
        assert_eq!(list.words(), vec![7, 4, 9]);
    }

    #[test]
    fn query_validation() {
        assert_eq!(
            Query::new(vec![BOS_ID, 5, EOS_ID], 1, 0),
            Err(QueryError::ZeroK)
        );
        assert_eq!(
            Query::new(vec![BOS_ID, EOS_ID], 1, 1),
            Err(QueryError::BadPadding)
        );
        assert_eq!(
            Query::new(vec![BOS_ID, 5, EOS_ID], 2, 1),
            Err(QueryError::BadTarget(2))
        );
        assert_eq!(
            Query::new(vec![BOS_ID, 5, EOS_ID], 0, 1),
            Err(QueryError::BadTarget(0))
        );
        assert!(Query::new(vec![5, 5, EOS_ID], 1, 1).is_err());
    }
}
