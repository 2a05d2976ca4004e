//! Exact top-K substitute search.
//!
//! Words are drawn from the root upper bound queue and scored exactly until
//! K of them score at least the bound on everything still in the queue.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::index::AlphaIndex;
use crate::lm::{LogProb, NgramLm};
use crate::scorer::{substitute_logp, Query, Substitute, SubstituteList, TermTree};
use crate::ubqueue::{RootNode, Selection, UpperBoundQueue};

/// Slack granted when comparing exact scores against the queue bound, which
/// is summed in a different order.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// When the search may stop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum StopRule {
    /// Stop once K scores are `>=` the bound. Words tied with the K-th score
    /// may still be in the queue, so ids inside a boundary tie group can
    /// differ from the exhaustive ranking; scores cannot.
    #[default]
    Inclusive,
    /// Stop once the K-th score is strictly above the bound, which also
    /// settles boundary ties by id.
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOptions {
    pub stop: StopRule,
    pub selection: Selection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStats {
    /// Primitive queue pops, including repeats and ineligible words.
    pub pops: usize,
    pub final_sup: LogProb,
    pub candidates: usize,
    pub nanos: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score(LogProb);

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub fn fastsubs_topk(lm: &NgramLm, index: &AlphaIndex, q: &Query) -> (SubstituteList, SearchStats) {
    fastsubs_topk_with(lm, index, q, SearchOptions::default())
}

pub fn fastsubs_topk_with(
    lm: &NgramLm,
    index: &AlphaIndex,
    q: &Query,
    opts: SearchOptions,
) -> (SubstituteList, SearchStats) {
    let start = Instant::now();
    let k = q.k();
    let tree = TermTree::build(lm, q);
    let mut root = RootNode::build(lm, index, &tree, |w| q.is_eligible(lm, w), opts.selection);

    let mut candidates = Vec::new();
    // the K best scores so far, smallest on top
    let mut best: BinaryHeap<Reverse<Score>> = BinaryHeap::with_capacity(k + 1);
    loop {
        if best.len() == k {
            let kth = best.peek().expect("k >= 1").0 .0;
            let sup = root.sup();
            let done = match opts.stop {
                StopRule::Inclusive => kth + BOUND_TOLERANCE >= sup,
                StopRule::Strict => kth > sup + BOUND_TOLERANCE,
            };
            if done {
                break;
            }
        }
        let Some(word) = root.pop() else { break };
        let score = substitute_logp(lm, &tree, word);
        candidates.push(Substitute { word, score });
        best.push(Reverse(Score(score)));
        if best.len() > k {
            best.pop();
        }
    }

    let stats = SearchStats {
        pops: root.pops(),
        final_sup: root.sup(),
        candidates: candidates.len(),
        nanos: start.elapsed().as_nanos() as u64,
    };
    (SubstituteList::from_candidates(candidates, k), stats)
}
