//! Pre-sorted α lists for every n-gram pattern with one open slot.
//!
//! For each stored k-gram `g` with finite α and each position `p < k`, the
//! list keyed by `g` with position `p` removed receives `(g[p], α(g))`.
//! Lists are sorted by α descending, then word id ascending, and are shared
//! read-only by every query.
//!
//! The index also records, per pattern, the largest positive β among the
//! stored n-grams matching it. Unstored sequences have β = 0, so
//! `max(0, that)` bounds β over any filler word.

use std::cmp::Ordering;

use crate::lm::{LogProb, NgramLm, WordId};

/// A k-gram pattern with the candidate slot at `hole`; `context` holds the
/// other `k - 1` words in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HoleContext {
    pub hole: usize,
    pub context: Vec<WordId>,
}

impl HoleContext {
    pub fn new(hole: usize, context: Vec<WordId>) -> Self {
        assert!(hole <= context.len(), "hole position out of range");
        HoleContext { hole, context }
    }

    /// Splits a full n-gram at `hole`.
    pub fn from_ngram(ngram: &[WordId], hole: usize) -> Self {
        let mut context = ngram.to_vec();
        context.remove(hole);
        HoleContext { hole, context }
    }

    pub fn len(&self) -> usize {
        self.context.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The n-gram obtained by putting `word` into the hole.
    pub fn fill(&self, word: WordId) -> Vec<WordId> {
        let mut g = Vec::with_capacity(self.len());
        g.extend_from_slice(&self.context[..self.hole]);
        g.push(word);
        g.extend_from_slice(&self.context[self.hole..]);
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEntry {
    pub word: WordId,
    pub alpha: LogProb,
}

/// Groups of values keyed by a fixed-length context, contexts sorted.
#[derive(Debug, Clone, Default)]
struct Grouped<T> {
    ctx_len: usize,
    contexts: Vec<WordId>,
    offsets: Vec<u32>,
    values: Vec<T>,
}

impl<T> Grouped<T> {
    fn groups(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    fn context(&self, g: usize) -> &[WordId] {
        &self.contexts[g * self.ctx_len..(g + 1) * self.ctx_len]
    }

    fn get(&self, ctx: &[WordId]) -> &[T] {
        debug_assert_eq!(ctx.len(), self.ctx_len);
        let (mut lo, mut hi) = (0, self.groups());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.context(mid).cmp(ctx) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => {
                    let (a, b) = (self.offsets[mid] as usize, self.offsets[mid + 1] as usize);
                    return &self.values[a..b];
                }
            }
        }
        &[]
    }
}

fn cmp_without(a: &[WordId], b: &[WordId], hole: usize) -> Ordering {
    let a = a[..hole].iter().chain(&a[hole + 1..]);
    let b = b[..hole].iter().chain(&b[hole + 1..]);
    a.cmp(b)
}

/// Builds one grouped table from `(row, value)` items sorted by context.
fn group_rows<T, F>(rows: &[&[WordId]], hole: usize, mut value: F) -> Grouped<T>
where
    F: FnMut(usize) -> T,
{
    let ctx_len = rows.first().map_or(0, |r| r.len() - 1);
    let mut out = Grouped {
        ctx_len,
        contexts: Vec::new(),
        offsets: Vec::new(),
        values: Vec::with_capacity(rows.len()),
    };
    for (i, row) in rows.iter().enumerate() {
        if i == 0 || cmp_without(rows[i - 1], row, hole) != Ordering::Equal {
            out.offsets.push(out.values.len() as u32);
            out.contexts.extend_from_slice(&row[..hole]);
            out.contexts.extend_from_slice(&row[hole + 1..]);
        }
        out.values.push(value(i));
    }
    out.offsets.push(out.values.len() as u32);
    out
}

/// The shared α lists plus per-pattern β maxima.
#[derive(Debug, Clone)]
pub struct AlphaIndex {
    /// `alpha[k - 1][p]`
    alpha: Vec<Vec<Grouped<AlphaEntry>>>,
    /// `beta[k - 1][p]`, one value per group, only for β > 0
    beta: Vec<Vec<Grouped<LogProb>>>,
}

impl AlphaIndex {
    pub fn build(lm: &NgramLm) -> Self {
        let mut alpha = Vec::with_capacity(lm.order());
        let mut beta = Vec::with_capacity(lm.order());
        for k in 1..=lm.order() {
            let grams: Vec<(&[WordId], LogProb, LogProb)> = lm
                .iter_order(k)
                .map(|(g, e)| (g, e.alpha, e.beta))
                .collect();
            let mut alpha_k = Vec::with_capacity(k);
            let mut beta_k = Vec::with_capacity(k);
            for hole in 0..k {
                let mut observed: Vec<&(&[WordId], LogProb, LogProb)> =
                    grams.iter().filter(|g| g.1.is_finite()).collect();
                observed.sort_unstable_by(|a, b| {
                    cmp_without(a.0, b.0, hole)
                        .then(b.1.total_cmp(&a.1))
                        .then(a.0[hole].cmp(&b.0[hole]))
                });
                let rows: Vec<&[WordId]> = observed.iter().map(|g| g.0).collect();
                alpha_k.push(group_rows(&rows, hole, |i| AlphaEntry {
                    word: observed[i].0[hole],
                    alpha: observed[i].1,
                }));

                let mut positive: Vec<&(&[WordId], LogProb, LogProb)> =
                    grams.iter().filter(|g| g.2 > 0.0).collect();
                positive
                    .sort_unstable_by(|a, b| cmp_without(a.0, b.0, hole).then(b.2.total_cmp(&a.2)));
                // keep the first (largest) β of each context
                positive.dedup_by(|b, a| cmp_without(a.0, b.0, hole) == Ordering::Equal);
                let rows: Vec<&[WordId]> = positive.iter().map(|g| g.0).collect();
                beta_k.push(group_rows(&rows, hole, |i| positive[i].2));
            }
            alpha.push(alpha_k);
            beta.push(beta_k);
        }
        AlphaIndex { alpha, beta }
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    /// The sorted α list for `ctx`, empty if the pattern was never observed.
    pub fn alpha_list(&self, ctx: &HoleContext) -> &[AlphaEntry] {
        match self.alpha.get(ctx.len() - 1) {
            Some(tables) => tables[ctx.hole].get(&ctx.context),
            None => &[],
        }
    }

    /// An upper bound on β over every filling of `ctx`; 0 unless some
    /// stored filling has a positive β.
    pub fn beta_bound(&self, ctx: &HoleContext) -> LogProb {
        match self.beta.get(ctx.len() - 1) {
            Some(tables) => tables[ctx.hole]
                .get(&ctx.context)
                .first()
                .map_or(0.0, |&b| b.max(0.0)),
            None => 0.0,
        }
    }

    /// Total `(word, α)` pairs across all lists.
    pub fn total_pairs(&self) -> usize {
        self.alpha.iter().flatten().map(|t| t.values.len()).sum()
    }

    /// Every non-empty list with its key, for verification.
    pub fn iter_lists(&self) -> impl Iterator<Item = (HoleContext, &[AlphaEntry])> {
        self.alpha.iter().flat_map(|tables| {
            tables.iter().enumerate().flat_map(|(hole, t)| {
                (0..t.groups()).map(move |g| {
                    let (a, b) = (t.offsets[g] as usize, t.offsets[g + 1] as usize);
                    (
                        HoleContext::new(hole, t.context(g).to_vec()),
                        &t.values[a..b],
                    )
                })
            })
        })
    }

    /// Shifts every stored α down by one; only for exercising mismatch
    /// detection.
    #[doc(hidden)]
    pub fn inject_fault(&mut self) {
        for t in self.alpha.iter_mut().flatten() {
            for e in &mut t.values {
                e.alpha -= 1.0;
            }
        }
    }
}
