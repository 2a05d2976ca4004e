//! Synthetic corpora and toy back-off models.
//!
//! [`gen_corpus`] draws i.i.d. Zipf tokens into sentences of geometric
//! length. [`estimate_model`] fits an absolute-discounting back-off model:
//! every observed n-gram keeps `(c - d) / c(h)` and the freed mass of each
//! history is handed to the back-off distribution through β. At the unigram
//! level the freed mass goes to `<unk>`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Zipf};

use crate::lm::{
    Entry, LogProb, NgramLm, NgramLmBuilder, Vocab, WordId, ABSENT, BOS_ID, EOS_ID, UNK_ID,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("vocabulary size must be at least 4, got {0}")]
    VocabTooSmall(usize),
    #[error("discount must lie strictly between 0 and 1, got {0}")]
    BadDiscount(f64),
    #[error("zipf exponent must be finite and non-negative, got {0}")]
    BadExponent(f64),
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("mean sentence length must be at least 1, got {0}")]
    BadSentenceLength(f64),
    #[error("corpus has no sentences")]
    EmptyCorpus,
    #[error("order {order} with {vocab} words does not fit the 128-bit n-gram key")]
    KeyOverflow { order: usize, vocab: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Model vocabulary size including `<s>`, `</s>` and `<unk>`.
    pub vocab_size: usize,
    pub tokens: usize,
    pub zipf_exponent: f64,
    pub order: usize,
    pub discount: f64,
    pub seed: u64,
    pub mean_sentence_len: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 1000,
            tokens: 20_000,
            zipf_exponent: 1.0,
            order: 3,
            discount: 0.7,
            seed: 0,
            mean_sentence_len: 20.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.vocab_size < 4 {
            return Err(SynthError::VocabTooSmall(self.vocab_size));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(SynthError::BadDiscount(self.discount));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(SynthError::BadExponent(self.zipf_exponent));
        }
        if self.order == 0 {
            return Err(SynthError::ZeroOrder);
        }
        if self.mean_sentence_len.is_nan() || self.mean_sentence_len < 1.0 {
            return Err(SynthError::BadSentenceLength(self.mean_sentence_len));
        }
        Ok(())
    }

    /// Number of ordinary words the corpus draws from.
    pub fn content_words(&self) -> usize {
        self.vocab_size - 3
    }
}

/// Surface form of the word with Zipf rank `rank` (0 is most frequent).
pub fn word_name(rank: usize) -> String {
    format!("w{}", rank)
}

/// Zipf-distributed tokens, one space-separated sentence per element.
pub fn gen_corpus(cfg: &SynthConfig) -> Result<Vec<String>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zipf = Zipf::new(cfg.content_words() as f64, cfg.zipf_exponent)
        .map_err(|_| SynthError::BadExponent(cfg.zipf_exponent))?;
    let lengths = Geometric::new(1.0 / cfg.mean_sentence_len)
        .map_err(|_| SynthError::BadSentenceLength(cfg.mean_sentence_len))?;
    let names: Vec<String> = (0..cfg.content_words()).map(word_name).collect();

    let mut sentences = Vec::new();
    let mut remaining = cfg.tokens;
    while remaining > 0 {
        let len = (1 + lengths.sample(&mut rng) as usize).min(remaining);
        let mut line = String::new();
        for i in 0..len {
            if i > 0 {
                line.push(' ');
            }
            let rank = zipf.sample(&mut rng) as usize - 1;
            line.push_str(&names[rank]);
        }
        sentences.push(line);
        remaining -= len;
    }
    Ok(sentences)
}

/// Packs n-grams into a single integer, first word most significant, so
/// numeric order is lexicographic order and a key's history is `key >> bits`.
#[derive(Debug, Clone, Copy)]
struct Packer {
    bits: u32,
}

impl Packer {
    fn mask(&self, words: usize) -> u128 {
        let width = self.bits as usize * words;
        if width >= 128 {
            u128::MAX
        } else {
            (1u128 << width) - 1
        }
    }

    fn pack(&self, ids: &[WordId]) -> u128 {
        ids.iter().fold(0, |acc, &w| (acc << self.bits) | w as u128)
    }

    fn unpack(&self, key: u128, len: usize) -> Vec<WordId> {
        (0..len)
            .rev()
            .map(|i| ((key >> (self.bits as usize * i)) & self.mask(1)) as WordId)
            .collect()
    }
}

/// Model tables under construction, one sorted vector per order.
struct Tables {
    packer: Packer,
    orders: Vec<Vec<(u128, Entry)>>,
}

impl Tables {
    fn find(&self, len: usize, key: u128) -> Option<usize> {
        self.orders[len - 1]
            .binary_search_by_key(&key, |e| e.0)
            .ok()
    }

    fn entry(&self, len: usize, key: u128) -> Option<Entry> {
        self.find(len, key).map(|i| self.orders[len - 1][i].1)
    }

    /// Back-off conditional of `word` after the packed `history` of `len`
    /// words, using whatever orders are finished.
    fn cond(&self, word: WordId, history: u128, len: usize) -> LogProb {
        let bits = self.packer.bits as usize;
        let mut backoff = 0.0;
        for start in 0..=len {
            let keep = len - start;
            let suffix = history & self.packer.mask(keep);
            let gram = (suffix << bits) | word as u128;
            if let Some(e) = self.entry(keep + 1, gram) {
                if e.alpha != ABSENT {
                    return backoff + e.alpha;
                }
            }
            if keep > 0 {
                backoff += self.entry(keep, suffix).map_or(0.0, |e| e.beta);
            }
        }
        ABSENT
    }
}

fn run_lengths(mut keys: Vec<u128>) -> Vec<(u128, u32)> {
    keys.sort_unstable();
    let mut out: Vec<(u128, u32)> = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some((last, c)) if *last == k => *c += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

/// Fits an absolute-discounting back-off model of the given order.
pub fn estimate_model<S: AsRef<str>>(
    corpus: &[S],
    order: usize,
    discount: f64,
) -> Result<NgramLm, SynthError> {
    if order == 0 {
        return Err(SynthError::ZeroOrder);
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(SynthError::BadDiscount(discount));
    }
    let mut vocab = Vocab::new();
    let sentences: Vec<Vec<WordId>> = corpus
        .iter()
        .map(|line| line.as_ref().split_whitespace().collect::<Vec<_>>())
        .filter(|tokens| !tokens.is_empty())
        .map(|tokens| {
            let mut s = Vec::with_capacity(tokens.len() + 2);
            s.push(BOS_ID);
            s.extend(tokens.iter().map(|t| vocab.intern(t)));
            s.push(EOS_ID);
            s
        })
        .collect();
    if sentences.is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    let v = vocab.len();
    let bits = (usize::BITS - (v - 1).leading_zeros()).max(1);
    if bits as usize * order > 128 {
        return Err(SynthError::KeyOverflow { order, vocab: v });
    }
    let packer = Packer { bits };

    // unigrams: every predicted token, so <s> is never counted
    let unigram_counts = run_lengths(
        sentences
            .iter()
            .flat_map(|s| s[1..].iter().map(|&w| w as u128))
            .collect(),
    );
    let total: f64 = unigram_counts.iter().map(|&(_, c)| c as f64).sum();
    let types = unigram_counts.len() as f64;
    let mut counts = vec![0u32; v];
    for &(w, c) in &unigram_counts {
        counts[w as usize] = c;
    }
    let unigrams = (0..v)
        .map(|w| {
            let c = counts[w] as f64;
            let alpha = match w as WordId {
                BOS_ID => ABSENT,
                UNK_ID => (((c - discount).max(0.0) + discount * types) / total).log10(),
                _ => ((c - discount) / total).log10(),
            };
            (w as u128, Entry { alpha, beta: 0.0 })
        })
        .collect();
    let mut tables = Tables {
        packer,
        orders: vec![unigrams],
    };

    for k in 2..=order {
        let grams = run_lengths(
            sentences
                .iter()
                .flat_map(|s| s.windows(k).map(|w| packer.pack(w)))
                .collect(),
        );
        let mut entries = Vec::with_capacity(grams.len());
        let mut betas = Vec::new();
        let mut start = 0;
        while start < grams.len() {
            let history = grams[start].0 >> bits;
            let end = start + grams[start..].partition_point(|g| g.0 >> bits == history);
            let group = &grams[start..end];
            let context_total: f64 = group.iter().map(|&(_, c)| c as f64).sum();
            let lower_history = history & packer.mask(k - 2);
            let mut lower_mass = 0.0;
            for &(key, c) in group {
                let word = (key & packer.mask(1)) as WordId;
                lower_mass += 10f64.powf(tables.cond(word, lower_history, k - 2));
                let alpha = ((c as f64 - discount) / context_total).log10();
                entries.push((key, Entry { alpha, beta: 0.0 }));
            }
            let freed = discount * group.len() as f64 / context_total;
            let unseen = 1.0 - lower_mass;
            // <unk> never continues a history, so `unseen` stays positive
            // for corpora without literal <unk> tokens
            if unseen > 0.0 {
                betas.push((history, freed.log10() - unseen.log10()));
            }
            start = end;
        }
        for (history, beta) in betas {
            let i = tables
                .find(k - 1, history)
                .expect("history is a counted n-gram");
            tables.orders[k - 2][i].1.beta = beta;
        }
        tables.orders.push(entries);
    }

    let mut builder = NgramLmBuilder::new();
    *builder.vocab_mut() = vocab;
    for (k0, table) in tables.orders.iter().enumerate() {
        for &(key, e) in table {
            builder.insert(&packer.unpack(key, k0 + 1), e.alpha, e.beta);
        }
    }
    Ok(builder.build().expect("estimated tables are consistent"))
}

/// [`estimate_model`] rendered as ARPA text.
pub fn estimate_arpa<S: AsRef<str>>(
    corpus: &[S],
    order: usize,
    discount: f64,
) -> Result<String, SynthError> {
    Ok(estimate_model(corpus, order, discount)?.to_arpa_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::parse_arpa_str;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            vocab_size: 60,
            tokens: 3000,
            order: 3,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let a = gen_corpus(&small(5)).unwrap();
        let b = gen_corpus(&small(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_corpus(&small(6)).unwrap());
        let n: usize = a.iter().map(|s| s.split(' ').count()).sum();
        assert_eq!(n, 3000);
    }

    #[test]
    fn config_validation() {
        let bad = |f: fn(&mut SynthConfig)| {
            let mut c = SynthConfig::default();
            f(&mut c);
            c.validate().unwrap_err()
        };
        assert_eq!(bad(|c| c.vocab_size = 3), SynthError::VocabTooSmall(3));
        assert_eq!(bad(|c| c.discount = 1.0), SynthError::BadDiscount(1.0));
        assert_eq!(bad(|c| c.discount = 0.0), SynthError::BadDiscount(0.0));
        assert_eq!(
            bad(|c| c.zipf_exponent = -1.0),
            SynthError::BadExponent(-1.0)
        );
        assert_eq!(bad(|c| c.order = 0), SynthError::ZeroOrder);
    }

    #[test]
    fn repeated_sentence_uses_direct_formula() {
        let corpus = vec!["x y"; 10];
        let lm = estimate_model(&corpus, 2, 0.5).unwrap();
        let x = lm.vocab().get("x").unwrap();
        let y = lm.vocab().get("y").unwrap();
        let want = ((10.0 - 0.5) / 10.0f64).log10();
        assert_eq!(lm.alpha(&[BOS_ID, x]), want);
        assert_eq!(lm.alpha(&[x, y]), want);
        assert_eq!(lm.alpha(&[y, EOS_ID]), want);
        assert_eq!(lm.alpha(&[BOS_ID]), ABSENT);
        // 30 predicted tokens over 3 types
        assert_eq!(lm.alpha(&[x]), (9.5f64 / 30.0).log10());
        assert_eq!(lm.alpha(&[UNK_ID]), (1.5f64 / 30.0).log10());
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus: Vec<&str> = vec!["", "  "];
        assert_eq!(
            estimate_model(&corpus, 2, 0.5).unwrap_err(),
            SynthError::EmptyCorpus
        );
    }

    #[test]
    fn emitted_text_round_trips() {
        let corpus = gen_corpus(&small(1)).unwrap();
        let lm = estimate_model(&corpus, 3, 0.7).unwrap();
        let text = estimate_arpa(&corpus, 3, 0.7).unwrap();
        let parsed = parse_arpa_str(&text).unwrap();
        for k in 1..=3 {
            assert_eq!(parsed.count(k), lm.count(k));
            let a: Vec<_> = lm.iter_order(k).map(|(g, e)| (g.to_vec(), e)).collect();
            let b: Vec<_> = parsed.iter_order(k).map(|(g, e)| (g.to_vec(), e)).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn conditionals_sum_to_one() {
        for seed in 0..3 {
            let corpus = gen_corpus(&small(seed)).unwrap();
            let lm = estimate_model(&corpus, 3, 0.7).unwrap();
            let v = lm.vocab().len() as WordId;
            let mut histories: Vec<Vec<WordId>> = vec![vec![], vec![BOS_ID]];
            histories.extend(lm.iter_order(2).take(40).map(|(g, _)| g.to_vec()));
            histories.extend(lm.iter_order(1).map(|(g, _)| g.to_vec()));
            // an unseen history backs off all the way
            histories.push(vec![EOS_ID, EOS_ID]);
            for h in histories {
                let total: f64 = (0..v).map(|c| 10f64.powf(lm.cond_logp(c, &h))).sum();
                assert!((total - 1.0).abs() < 1e-6, "history {:?}: {}", h, total);
            }
        }
    }

    #[test]
    fn every_word_has_a_finite_unigram() {
        let corpus = gen_corpus(&small(2)).unwrap();
        let lm = estimate_model(&corpus, 2, 0.7).unwrap();
        for (w, _) in lm.vocab().iter().skip(1) {
            assert!(lm.alpha(&[w]).is_finite());
        }
    }

    #[test]
    fn packer_round_trip() {
        let p = Packer { bits: 11 };
        let g = [5, 2047, 0, 9];
        assert_eq!(p.unpack(p.pack(&g), 4), g);
        assert_eq!(p.pack(&g) >> 11, p.pack(&g[..3]));
    }
}
