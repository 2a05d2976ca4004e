//! Upper bound queues.
//!
//! Each queue yields candidate words in some order and keeps an upper bound
//! (`sup`) on the score of every word it has not yet yielded. The bound never
//! increases. Composite queues mirror the shape of a [`TermTree`]:
//!
//! * a sorted α list is an exact priority queue over the words observed in
//!   its pattern, with bound `-inf` once drained;
//! * constants have their own value as bound and hold no words;
//! * β terms over the candidate are bounded by `max(0, largest stored β)`;
//! * a sum is bounded by the sum of its parts and yields from its α part;
//! * a back-off choice is bounded by the max over its branches;
//! * the root sums its blocks and suppresses repeated or ineligible words.
//!
//! Per-query queues only hold cursors into the shared [`AlphaIndex`].

use std::collections::HashSet;

use crate::index::{AlphaEntry, AlphaIndex, HoleContext};
use crate::lm::{LogProb, NgramLm, WordId, ABSENT};
use crate::scorer::{Arg, TermTree};

pub trait UpperBoundQueue {
    /// Bound on the value of every element not yet popped.
    fn sup(&self) -> LogProb;
    /// The element `pop` would return, not necessarily the best.
    fn top(&self) -> Option<WordId>;
    fn pop(&mut self) -> Option<WordId>;
}

/// Read position in a shared α list.
#[derive(Debug, Clone)]
pub struct AlphaCursor<'a> {
    list: &'a [AlphaEntry],
    pos: usize,
}

impl<'a> AlphaCursor<'a> {
    pub fn new(list: &'a [AlphaEntry]) -> Self {
        AlphaCursor { list, pos: 0 }
    }

    pub fn popped(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.list.len() - self.pos
    }
}

impl UpperBoundQueue for AlphaCursor<'_> {
    fn sup(&self) -> LogProb {
        self.list.get(self.pos).map_or(ABSENT, |e| e.alpha)
    }

    fn top(&self) -> Option<WordId> {
        self.list.get(self.pos).map(|e| e.word)
    }

    fn pop(&mut self) -> Option<WordId> {
        let w = self.top()?;
        self.pos += 1;
        Some(w)
    }
}

#[derive(Debug, Clone)]
pub struct SumNode<'a> {
    children: Vec<UbNode<'a>>,
    alpha_child: Option<usize>,
    sup: LogProb,
}

impl<'a> SumNode<'a> {
    /// `alpha_child` names the one child that yields words, if any.
    pub fn new(children: Vec<UbNode<'a>>, alpha_child: Option<usize>) -> Self {
        let mut node = SumNode {
            children,
            alpha_child,
            sup: 0.0,
        };
        node.sup = node.sum_of_children();
        node
    }

    fn sum_of_children(&self) -> LogProb {
        self.children.iter().fold(0.0, |acc, c| acc + c.sup())
    }
}

#[derive(Debug, Clone)]
pub struct CondNode<'a> {
    children: Vec<UbNode<'a>>,
    sup: LogProb,
}

/// Index of the highest-bound child that can still yield, ties to the
/// lowest index.
fn best_yielding(children: &[UbNode<'_>]) -> Option<usize> {
    let mut best: Option<(usize, LogProb)> = None;
    for (i, c) in children.iter().enumerate() {
        if c.top().is_none() {
            continue;
        }
        let s = c.sup();
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn max_sup(children: &[UbNode<'_>]) -> LogProb {
    children.iter().map(UbNode::sup).fold(ABSENT, f64::max)
}

impl<'a> CondNode<'a> {
    pub fn new(children: Vec<UbNode<'a>>) -> Self {
        let sup = max_sup(&children);
        CondNode { children, sup }
    }
}

/// A node of a per-query queue tree.
#[derive(Debug, Clone)]
pub enum UbNode<'a> {
    Alpha(AlphaCursor<'a>),
    Constant(LogProb),
    BetaHole(LogProb),
    Sum(SumNode<'a>),
    Cond(CondNode<'a>),
}

impl UbNode<'_> {
    /// The bound recomputed from the leaves, ignoring cached values.
    pub fn fresh_sup(&self) -> LogProb {
        match self {
            UbNode::Sum(s) => s.children.iter().fold(0.0, |acc, c| acc + c.fresh_sup()),
            UbNode::Cond(c) => c
                .children
                .iter()
                .map(UbNode::fresh_sup)
                .fold(ABSENT, f64::max),
            leaf => leaf.sup(),
        }
    }

    fn collect_sups(&self, out: &mut Vec<LogProb>) {
        out.push(self.sup());
        match self {
            UbNode::Sum(s) => s.children.iter().for_each(|c| c.collect_sups(out)),
            UbNode::Cond(c) => c.children.iter().for_each(|c| c.collect_sups(out)),
            _ => {}
        }
    }

    fn count_alpha_elements(&self) -> usize {
        match self {
            UbNode::Alpha(a) => a.list.len(),
            UbNode::Sum(s) => s.children.iter().map(Self::count_alpha_elements).sum(),
            UbNode::Cond(c) => c.children.iter().map(Self::count_alpha_elements).sum(),
            _ => 0,
        }
    }
}

impl UpperBoundQueue for UbNode<'_> {
    fn sup(&self) -> LogProb {
        match self {
            UbNode::Alpha(a) => a.sup(),
            UbNode::Constant(v) => *v,
            UbNode::BetaHole(b) => *b,
            UbNode::Sum(s) => s.sup,
            UbNode::Cond(c) => c.sup,
        }
    }

    fn top(&self) -> Option<WordId> {
        match self {
            UbNode::Alpha(a) => a.top(),
            UbNode::Constant(_) | UbNode::BetaHole(_) => None,
            UbNode::Sum(s) => s.alpha_child.and_then(|i| s.children[i].top()),
            UbNode::Cond(c) => best_yielding(&c.children).and_then(|i| c.children[i].top()),
        }
    }

    fn pop(&mut self) -> Option<WordId> {
        match self {
            UbNode::Alpha(a) => a.pop(),
            UbNode::Constant(_) | UbNode::BetaHole(_) => None,
            UbNode::Sum(s) => {
                let i = s.alpha_child?;
                let w = s.children[i].pop()?;
                s.sup = s.sum_of_children();
                Some(w)
            }
            UbNode::Cond(c) => {
                let i = best_yielding(&c.children)?;
                let w = c.children[i].pop()?;
                c.sup = max_sup(&c.children);
                Some(w)
            }
        }
    }
}

/// How the root chooses which block to pop from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Selection {
    /// Highest-bound block that can still yield; ties to the lowest index.
    MaxSup,
    /// Cycle through blocks that can still yield. Blocks after the hole
    /// surface words that fit the right context early, which raises the K-th
    /// score sooner than draining the highest bound does.
    #[default]
    RoundRobin,
}

/// The per-query top-level queue.
pub struct RootNode<'a> {
    blocks: Vec<UbNode<'a>>,
    sup: LogProb,
    emitted: HashSet<WordId>,
    eligible: Box<dyn Fn(WordId) -> bool + 'a>,
    selection: Selection,
    next_block: usize,
    pops: usize,
}

impl<'a> RootNode<'a> {
    pub fn new(
        blocks: Vec<UbNode<'a>>,
        eligible: impl Fn(WordId) -> bool + 'a,
        selection: Selection,
    ) -> Self {
        let mut root = RootNode {
            blocks,
            sup: 0.0,
            emitted: HashSet::new(),
            eligible: Box::new(eligible),
            selection,
            next_block: 0,
            pops: 0,
        };
        root.sup = root.sum_of_blocks();
        root
    }

    /// Builds the queue tree for `tree`. Words rejected by `eligible` are
    /// popped internally but never returned.
    pub fn build(
        lm: &'a NgramLm,
        index: &'a AlphaIndex,
        tree: &TermTree,
        eligible: impl Fn(WordId) -> bool + 'a,
        selection: Selection,
    ) -> Self {
        let blocks = tree
            .blocks
            .iter()
            .map(|block| {
                let branches = block
                    .branches
                    .iter()
                    .map(|branch| {
                        let mut children: Vec<UbNode<'a>> = branch
                            .betas
                            .iter()
                            .map(|arg| beta_node(lm, index, arg))
                            .collect();
                        let (alpha, yields) = alpha_node(lm, index, &branch.alpha);
                        let alpha_child = yields.then_some(children.len());
                        children.push(alpha);
                        UbNode::Sum(SumNode::new(children, alpha_child))
                    })
                    .collect();
                UbNode::Cond(CondNode::new(branches))
            })
            .collect();
        RootNode::new(blocks, eligible, selection)
    }

    fn sum_of_blocks(&self) -> LogProb {
        self.blocks.iter().fold(0.0, |acc, b| acc + b.sup())
    }

    fn select(&mut self) -> Option<usize> {
        match self.selection {
            Selection::MaxSup => best_yielding(&self.blocks),
            Selection::RoundRobin => self.next_round_robin(),
        }
    }

    fn next_round_robin(&mut self) -> Option<usize> {
        let n = self.blocks.len();
        let i = (0..n)
            .map(|d| (self.next_block + d) % n)
            .find(|&i| self.blocks[i].top().is_some())?;
        self.next_block = (i + 1) % n;
        Some(i)
    }

    /// Primitive pops so far, counting repeats and ineligible words.
    pub fn pops(&self) -> usize {
        self.pops
    }

    pub fn emitted(&self) -> usize {
        self.emitted.len()
    }

    pub fn fresh_sup(&self) -> LogProb {
        self.blocks.iter().fold(0.0, |acc, b| acc + b.fresh_sup())
    }

    /// Bounds of every node, root first, in a fixed traversal order.
    pub fn sup_snapshot(&self) -> Vec<LogProb> {
        let mut out = vec![self.sup];
        for b in &self.blocks {
            b.collect_sups(&mut out);
        }
        out
    }

    /// Upper limit on the number of primitive pops.
    pub fn total_elements(&self) -> usize {
        self.blocks.iter().map(UbNode::count_alpha_elements).sum()
    }
}

impl UpperBoundQueue for RootNode<'_> {
    fn sup(&self) -> LogProb {
        self.sup
    }

    fn top(&self) -> Option<WordId> {
        match self.selection {
            Selection::MaxSup => best_yielding(&self.blocks).and_then(|i| self.blocks[i].top()),
            Selection::RoundRobin => {
                let n = self.blocks.len();
                (0..n).find_map(|d| self.blocks[(self.next_block + d) % n].top())
            }
        }
    }

    /// Pops until a word that is eligible and not yet returned comes out.
    fn pop(&mut self) -> Option<WordId> {
        loop {
            let i = self.select()?;
            let w = self.blocks[i].pop()?;
            self.pops += 1;
            self.sup = self.sum_of_blocks();
            if (self.eligible)(w) && self.emitted.insert(w) {
                return Some(w);
            }
        }
    }
}

fn beta_node<'a>(lm: &NgramLm, index: &AlphaIndex, arg: &Arg) -> UbNode<'a> {
    match arg.hole {
        Some(h) => UbNode::BetaHole(index.beta_bound(&HoleContext::from_ngram(&arg.gram, h))),
        None => UbNode::Constant(lm.beta(&arg.gram)),
    }
}

fn alpha_node<'a>(lm: &NgramLm, index: &'a AlphaIndex, arg: &Arg) -> (UbNode<'a>, bool) {
    match arg.hole {
        Some(h) => {
            let list = index.alpha_list(&HoleContext::from_ngram(&arg.gram, h));
            (UbNode::Alpha(AlphaCursor::new(list)), true)
        }
        None => (UbNode::Constant(lm.alpha(&arg.gram)), false),
    }
}

#[cfg(test)]
#[allow(clippy::approx_constant)] // ARPA literals such as -0.30103
mod tests {
    use super::*;
    use crate::lm::parse_arpa_str;
    use crate::scorer::{substitute_logp, Query};

    fn entries(v: &[(WordId, f64)]) -> Vec<AlphaEntry> {
        v.iter()
            .map(|&(word, alpha)| AlphaEntry { word, alpha })
            .collect()
    }

    #[test]
    fn alpha_cursor_pops_in_order() {
        let list = entries(&[(1, -1.0), (2, -2.0)]);
        let mut q = AlphaCursor::new(&list);
        assert_eq!(q.sup(), -1.0);
        assert_eq!(q.pop(), Some(1));
        assert_eq!(q.sup(), -2.0);
        assert_eq!(q.pop(), Some(2));
        assert_eq!(q.sup(), ABSENT);
        assert_eq!(q.top(), None);
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn sum_adds_bounds() {
        let list = entries(&[(7, -1.0), (8, -3.0)]);
        let node = UbNode::Sum(SumNode::new(
            vec![
                UbNode::Constant(-0.5),
                UbNode::Alpha(AlphaCursor::new(&list)),
                UbNode::BetaHole(0.0),
            ],
            Some(1),
        ));
        assert_eq!(node.sup(), -1.5);
        assert_eq!(node.top(), Some(7));
    }

    #[test]
    fn sum_with_absent_part_is_absent() {
        let list = entries(&[(7, -1.0)]);
        let mut node = UbNode::Sum(SumNode::new(
            vec![
                UbNode::Constant(-0.5),
                UbNode::Alpha(AlphaCursor::new(&list)),
            ],
            Some(1),
        ));
        assert_eq!(node.pop(), Some(7));
        assert_eq!(node.sup(), ABSENT);
        assert_eq!(node.top(), None);
        let constant = UbNode::Sum(SumNode::new(vec![UbNode::Constant(ABSENT)], None));
        assert_eq!(constant.sup(), ABSENT);
    }

    #[test]
    fn cond_takes_max_and_skips_non_yielding() {
        let l1 = entries(&[(1, -1.5)]);
        let l3 = entries(&[(3, -2.0)]);
        let node = UbNode::Cond(CondNode::new(vec![
            UbNode::Alpha(AlphaCursor::new(&l1)),
            UbNode::Constant(-0.8),
            UbNode::Alpha(AlphaCursor::new(&l3)),
        ]));
        assert_eq!(node.sup(), -0.8);
        // the constant branch has the best bound but no words
        assert_eq!(node.top(), Some(1));

        let mut node = node;
        assert_eq!(node.pop(), Some(1));
        assert_eq!(node.sup(), -0.8);
        assert_eq!(node.pop(), Some(3));
        assert_eq!(node.pop(), None);
        assert_eq!(node.sup(), -0.8);
        let empty = UbNode::Cond(CondNode::new(vec![UbNode::Constant(ABSENT)]));
        assert_eq!(empty.sup(), ABSENT);
    }

    #[test]
    fn cond_ties_go_to_lowest_index() {
        let l1 = entries(&[(1, -1.0)]);
        let l2 = entries(&[(2, -1.0)]);
        let node = UbNode::Cond(CondNode::new(vec![
            UbNode::Alpha(AlphaCursor::new(&l1)),
            UbNode::Alpha(AlphaCursor::new(&l2)),
        ]));
        assert_eq!(node.top(), Some(1));
    }

    fn toy() -> NgramLm {
        parse_arpa_str(include_str!("../tests/data/toy.arpa")).unwrap()
    }

    #[test]
    fn toy_root_cycles_through_vocabulary() {
        let lm = toy();
        let index = AlphaIndex::build(&lm);
        let q = Query::from_tokens(lm.vocab(), &["a", "c", "b"], 1, 1).unwrap();
        let tree = TermTree::build(&lm, &q);
        let mut root = RootNode::build(
            &lm,
            &index,
            &tree,
            |w| q.is_eligible(&lm, w),
            Selection::MaxSup,
        );
        let mut seen = Vec::new();
        while let Some(w) = root.pop() {
            seen.push(lm.vocab().word(w).to_owned());
        }
        seen.sort();
        assert_eq!(seen, ["a", "b", "c"]);
        assert_eq!(root.sup(), ABSENT);
        assert_eq!(root.pop(), None);
        assert!(root.pops() <= root.total_elements());
    }

    #[test]
    fn toy_root_fresh_top() {
        let lm = toy();
        let index = AlphaIndex::build(&lm);
        let q = Query::from_tokens(lm.vocab(), &["a", "c", "b"], 1, 1).unwrap();
        let tree = TermTree::build(&lm, &q);
        let root = RootNode::build(
            &lm,
            &index,
            &tree,
            |w| q.is_eligible(&lm, w),
            Selection::MaxSup,
        );
        // block 1 (predicting b after the hole) has the larger bound: its
        // first branch α(_ b) starts at c with -0.30103
        let c = lm.vocab().get("c").unwrap();
        assert_eq!(root.top(), Some(c));
    }

    #[test]
    fn toy_root_is_admissible() {
        let lm = toy();
        let index = AlphaIndex::build(&lm);
        for selection in [Selection::MaxSup, Selection::RoundRobin] {
            for pos in 0..3 {
                let q = Query::from_tokens(lm.vocab(), &["a", "c", "b"], pos, 1)
                    .unwrap()
                    .with_policy(crate::scorer::CandidatePolicy {
                        include_unk: true,
                        exclude_target: false,
                    });
                let tree = TermTree::build(&lm, &q);
                let mut root =
                    RootNode::build(&lm, &index, &tree, |w| q.is_eligible(&lm, w), selection);
                let mut before = root.sup_snapshot();
                let mut count = 0;
                while let Some(w) = {
                    let s = root.sup();
                    root.pop().inspect(|&w| {
                        assert!(substitute_logp(&lm, &tree, w) <= s + 1e-9);
                    })
                } {
                    let _ = w;
                    count += 1;
                    let after = root.sup_snapshot();
                    for (a, b) in after.iter().zip(&before) {
                        assert!(a <= b);
                    }
                    assert_eq!(root.sup(), root.fresh_sup());
                    before = after;
                }
                assert_eq!(count, q.eligible_count(&lm));
            }
        }
    }

    #[test]
    fn positive_beta_bound_used_for_holes() {
        let lm = toy();
        let index = AlphaIndex::build(&lm);
        let arg = Arg {
            gram: vec![3],
            hole: Some(0),
        };
        assert!(matches!(beta_node(&lm, &index, &arg), UbNode::BetaHole(b) if b == 0.0));
        let arg = Arg {
            gram: vec![3],
            hole: None,
        };
        assert!(matches!(beta_node(&lm, &index, &arg), UbNode::Constant(b) if b == -0.30103));
    }
}
