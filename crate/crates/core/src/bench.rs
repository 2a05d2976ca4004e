//! Pop-count measurements and differential checks over sampled positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::index::AlphaIndex;
use crate::lm::{NgramLm, WordId};
use crate::scorer::{oracle_topk, pad, CandidatePolicy, Query, SubstituteList};
use crate::search::{fastsubs_topk_with, SearchOptions, StopRule};

/// A token position in a tokenized corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub sentence: usize,
    pub token: usize,
}

/// Padded id sequences for whitespace-tokenized lines; blank lines are
/// dropped.
pub fn encode_corpus<S: AsRef<str>>(lm: &NgramLm, lines: &[S]) -> Vec<Vec<WordId>> {
    lines
        .iter()
        .map(|l| l.as_ref().split_whitespace().collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .map(|t| pad(lm.vocab(), &t))
        .collect()
}

/// `n` positions drawn uniformly with replacement.
pub fn sample_positions(sentences: &[Vec<WordId>], n: usize, seed: u64) -> Vec<Position> {
    let mut starts = Vec::with_capacity(sentences.len());
    let mut total = 0;
    for s in sentences {
        starts.push(total);
        total += s.len() - 2;
    }
    if total == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let flat = rng.random_range(0..total);
            let sentence = starts.partition_point(|&s| s <= flat) - 1;
            Position {
                sentence,
                token: flat - starts[sentence],
            }
        })
        .collect()
}

/// Every position of every sentence, in order.
pub fn all_positions(sentences: &[Vec<WordId>]) -> Vec<Position> {
    sentences
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            (0..s.len() - 2).map(move |t| Position {
                sentence: i,
                token: t,
            })
        })
        .collect()
}

pub fn query_at(
    sentences: &[Vec<WordId>],
    pos: Position,
    k: usize,
    policy: CandidatePolicy,
) -> Query {
    Query::new(sentences[pos.sentence].clone(), pos.token + 1, k)
        .expect("positions come from padded sentences and k >= 1")
        .with_policy(policy)
}

/// One measured query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchRecord {
    pub vocab: usize,
    pub k: usize,
    pub query: usize,
    pub pops: usize,
    pub nanos: u64,
}

pub const CSV_HEADER: &str = "V,K,query,pops,nanos";

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.vocab, self.k, self.query, self.pops, self.nanos
        )
    }
}

/// Runs every `(K, position)` pair, K-major.
pub fn run_bench(
    lm: &NgramLm,
    index: &AlphaIndex,
    sentences: &[Vec<WordId>],
    positions: &[Position],
    ks: &[usize],
    policy: CandidatePolicy,
    opts: SearchOptions,
) -> Vec<BenchRecord> {
    let mut out = Vec::with_capacity(ks.len() * positions.len());
    for &k in ks {
        for (i, &pos) in positions.iter().enumerate() {
            let q = query_at(sentences, pos, k, policy);
            let (_, stats) = fastsubs_topk_with(lm, index, &q, opts);
            out.push(BenchRecord {
                vocab: q.eligible_count(lm),
                k,
                query: i,
                pops: stats.pops,
                nanos: stats.nanos,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSummary {
    pub k: usize,
    pub queries: usize,
    pub mean_pops: f64,
    pub mean_nanos: f64,
}

/// Mean pops and time per K, in order of first appearance.
pub fn summarize(records: &[BenchRecord]) -> Vec<KSummary> {
    let mut out: Vec<KSummary> = Vec::new();
    for r in records {
        let i = match out.iter().position(|s| s.k == r.k) {
            Some(i) => i,
            None => {
                out.push(KSummary {
                    k: r.k,
                    queries: 0,
                    mean_pops: 0.0,
                    mean_nanos: 0.0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[i];
        s.queries += 1;
        s.mean_pops += r.pops as f64;
        s.mean_nanos += r.nanos as f64;
    }
    for s in &mut out {
        s.mean_pops /= s.queries as f64;
        s.mean_nanos /= s.queries as f64;
    }
    out
}

/// Least-squares slope of `log y` against `log x`. `None` with fewer than
/// two distinct x values.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Disagreement between the search and the exhaustive oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub position: Position,
    pub k: usize,
    pub stop: StopRule,
    pub query: Query,
    pub fast: SubstituteList,
    pub oracle: SubstituteList,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub queries: usize,
    pub comparisons: usize,
    pub mismatch: Option<Mismatch>,
}

/// Compares search and oracle on every position and K. Both stop rules are
/// run: the inclusive rule must reproduce the oracle's scores, the strict
/// rule its full `(word, score)` list. Stops at the first disagreement.
pub fn check(
    lm: &NgramLm,
    index: &AlphaIndex,
    sentences: &[Vec<WordId>],
    positions: &[Position],
    ks: &[usize],
    policy: CandidatePolicy,
) -> CheckReport {
    let mut report = CheckReport::default();
    for &pos in positions {
        report.queries += 1;
        for &k in ks {
            let q = query_at(sentences, pos, k, policy);
            let oracle = oracle_topk(lm, &q);
            for stop in [StopRule::Inclusive, StopRule::Strict] {
                let opts = SearchOptions {
                    stop,
                    ..Default::default()
                };
                let (fast, _) = fastsubs_topk_with(lm, index, &q, opts);
                report.comparisons += 1;
                let agree = match stop {
                    StopRule::Inclusive => fast.scores() == oracle.scores(),
                    StopRule::Strict => fast == oracle,
                };
                if !agree {
                    report.mismatch = Some(Mismatch {
                        position: pos,
                        k,
                        stop,
                        query: q,
                        fast,
                        oracle,
                    });
                    return report;
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 4.0, 16.0, 64.0]
            .iter()
            .map(|&k: &f64| (k, 3.0 * k.powf(0.6)))
            .collect();
        assert!((loglog_slope(&pts).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(2.0, 1.0)]), None);
        assert_eq!(loglog_slope(&[(2.0, 1.0), (2.0, 5.0)]), None);
    }

    #[test]
    fn positions_cover_sentences() {
        let s = vec![vec![0, 5, 6, 1], vec![0, 7, 1]];
        assert_eq!(all_positions(&s).len(), 3);
        let sampled = sample_positions(&s, 50, 3);
        assert_eq!(sampled.len(), 50);
        assert!(sampled.iter().all(|p| p.token < s[p.sentence].len() - 2));
        assert_eq!(sampled, sample_positions(&s, 50, 3));
        assert!(sample_positions(&[], 5, 0).is_empty());
    }

    #[test]
    fn summary_means() {
        let r = |k, pops| BenchRecord {
            vocab: 10,
            k,
            query: 0,
            pops,
            nanos: 100,
        };
        let s = summarize(&[r(1, 2), r(1, 4), r(8, 10)]);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].k, s[0].mean_pops, s[0].queries), (1, 3.0, 2));
        assert_eq!((s[1].k, s[1].mean_pops), (8, 10.0));
        assert_eq!(r(1, 2).csv_row(), "10,1,0,2,100");
    }
}
