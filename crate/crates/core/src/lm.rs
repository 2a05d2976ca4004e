//! Back-off n-gram language model store and ARPA reader/writer.
//!
//! All scores are base-10 logs, as stored in ARPA files. A missing α is
//! represented by [`ABSENT`] (negative infinity), which orders below every
//! finite value and absorbs finite summands.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

/// Dense word identifier.
pub type WordId = u32;

/// Base-10 log probability or log back-off weight.
pub type LogProb = f64;

/// Marker for an n-gram with no α entry: `f(g) = 0`.
pub const ABSENT: LogProb = f64::NEG_INFINITY;

/// SRILM's stand-in for `log 0` in the logprob column.
pub const LOG_ZERO_SENTINEL: f64 = -99.0;

/// α assigned to `<unk>` when the model file does not list it.
pub const UNK_FLOOR: LogProb = -100.0;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const BOS_ID: WordId = 0;
pub const EOS_ID: WordId = 1;
pub const UNK_ID: WordId = 2;

/// Word to id bijection. Ids 0, 1 and 2 are always `<s>`, `</s>`, `<unk>`.
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, WordId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut vocab = Vocab {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        for w in [BOS, EOS, UNK] {
            vocab.intern(w);
        }
        vocab
    }

    /// Returns the id of `word`, adding it if needed.
    pub fn intern(&mut self, word: &str) -> WordId {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as WordId;
        self.words.push(word.to_owned());
        self.ids.insert(word.to_owned(), id);
        id
    }

    pub fn get(&self, word: &str) -> Option<WordId> {
        self.ids.get(word).copied()
    }

    /// Maps out-of-vocabulary words to `<unk>`.
    pub fn id_or_unk(&self, word: &str) -> WordId {
        self.get(word).unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (WordId, &str)> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (i as WordId, w.as_str()))
    }
}

/// The two numbers stored per n-gram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub alpha: LogProb,
    pub beta: LogProb,
}

/// All n-grams of one order, sorted lexicographically, with an offset table
/// on the first word.
#[derive(Debug, Clone)]
struct OrderTable {
    order: usize,
    words: Vec<WordId>,
    entries: Vec<Entry>,
    first: Vec<u32>,
}

impl OrderTable {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn row(&self, r: usize) -> &[WordId] {
        &self.words[r * self.order..(r + 1) * self.order]
    }

    fn find(&self, ngram: &[WordId]) -> Option<usize> {
        debug_assert_eq!(ngram.len(), self.order);
        let w0 = ngram[0] as usize;
        if w0 + 1 >= self.first.len() {
            return None;
        }
        let (mut lo, mut hi) = (self.first[w0] as usize, self.first[w0 + 1] as usize);
        let rest = &ngram[1..];
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.row(mid)[1..].cmp(rest) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

/// Immutable back-off language model.
#[derive(Debug, Clone)]
pub struct NgramLm {
    vocab: Vocab,
    tables: Vec<OrderTable>,
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.tables.len()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Number of stored n-grams of length `k`.
    pub fn count(&self, k: usize) -> usize {
        self.tables
            .get(k.wrapping_sub(1))
            .map_or(0, OrderTable::len)
    }

    pub fn lookup(&self, ngram: &[WordId]) -> Option<Entry> {
        let table = self.tables.get(ngram.len().checked_sub(1)?)?;
        table.find(ngram).map(|r| table.entries[r])
    }

    /// α of `ngram`, or [`ABSENT`] if unobserved.
    pub fn alpha(&self, ngram: &[WordId]) -> LogProb {
        self.lookup(ngram).map_or(ABSENT, |e| e.alpha)
    }

    /// β of `ngram`; 0 if the sequence is not in the model.
    pub fn beta(&self, ngram: &[WordId]) -> LogProb {
        self.lookup(ngram).map_or(0.0, |e| e.beta)
    }

    /// All stored n-grams of length `k` in lexicographic order.
    pub fn iter_order(&self, k: usize) -> impl Iterator<Item = (&[WordId], Entry)> {
        let table = &self.tables[k - 1];
        (0..table.len()).map(move |r| (table.row(r), table.entries[r]))
    }

    /// Back-off conditional `log p(word | history)`.
    ///
    /// Histories longer than `order - 1` are truncated to their suffix. The
    /// β terms are accumulated left to right starting from 0.0 and the α is
    /// added last, which is the summation order the substitute scorer uses.
    pub fn cond_logp(&self, word: WordId, history: &[WordId]) -> LogProb {
        let keep = history.len().min(self.order() - 1);
        let history = &history[history.len() - keep..];
        let mut gram = Vec::with_capacity(keep + 1);
        let mut backoff = 0.0;
        for start in 0..=keep {
            gram.clear();
            gram.extend_from_slice(&history[start..]);
            gram.push(word);
            let alpha = self.alpha(&gram);
            if alpha != ABSENT {
                return backoff + alpha;
            }
            if start < keep {
                backoff += self.beta(&history[start..]);
            }
        }
        ABSENT
    }

    /// `log p(words)` as the sum of per-position conditionals. A leading
    /// `<s>` is context only and is not itself predicted.
    pub fn seq_logp(&self, words: &[WordId]) -> LogProb {
        let start = usize::from(words.len() > 1 && words[0] == BOS_ID);
        let ctx = self.order() - 1;
        let mut total = 0.0;
        for i in start..words.len() {
            let h = &words[i.saturating_sub(ctx)..i];
            total += self.cond_logp(words[i], h);
        }
        total
    }

    /// Serializes the model in ARPA format. β is written only when nonzero;
    /// [`ABSENT`] α is written as `-99`.
    pub fn write_arpa<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "\\data\\")?;
        for k in 1..=self.order() {
            writeln!(out, "ngram {}={}", k, self.count(k))?;
        }
        for k in 1..=self.order() {
            writeln!(out)?;
            writeln!(out, "\\{}-grams:", k)?;
            for (gram, e) in self.iter_order(k) {
                let alpha = if e.alpha == ABSENT {
                    LOG_ZERO_SENTINEL
                } else {
                    e.alpha
                };
                write!(out, "{}\t", alpha)?;
                for (i, &w) in gram.iter().enumerate() {
                    if i > 0 {
                        write!(out, " ")?;
                    }
                    write!(out, "{}", self.vocab.word(w))?;
                }
                if e.beta != 0.0 {
                    write!(out, "\t{}", e.beta)?;
                }
                writeln!(out)?;
            }
        }
        writeln!(out)?;
        writeln!(out, "\\end\\")
    }

    pub fn to_arpa_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_arpa(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("vocabulary is utf-8")
    }
}

/// Collects n-grams and produces an [`NgramLm`].
#[derive(Debug, Default)]
pub struct NgramLmBuilder {
    vocab: Vocab,
    raw: Vec<(Vec<WordId>, Vec<Entry>)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("duplicate {0}-gram `{1}`")]
    Duplicate(usize, String),
    #[error("`{0}` appears in a higher-order n-gram but has no unigram entry")]
    MissingUnigram(String),
    #[error("model has no unigrams")]
    Empty,
}

impl NgramLmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vocab_mut(&mut self) -> &mut Vocab {
        &mut self.vocab
    }

    pub fn insert(&mut self, ngram: &[WordId], alpha: LogProb, beta: LogProb) {
        let k = ngram.len();
        assert!(k >= 1, "empty n-gram");
        while self.raw.len() < k {
            self.raw.push((Vec::new(), Vec::new()));
        }
        let (words, entries) = &mut self.raw[k - 1];
        words.extend_from_slice(ngram);
        entries.push(Entry { alpha, beta });
    }

    pub fn build(mut self) -> Result<NgramLm, BuildError> {
        if self.raw.first().is_none_or(|(_, e)| e.is_empty()) {
            return Err(BuildError::Empty);
        }
        if self.vocab.get(UNK).is_some() && !self.raw[0].0.contains(&UNK_ID) {
            self.insert(&[UNK_ID], UNK_FLOOR, 0.0);
        }
        let v = self.vocab.len();
        let mut has_unigram = vec![false; v];
        for &w in &self.raw[0].0 {
            has_unigram[w as usize] = true;
        }
        let mut tables = Vec::with_capacity(self.raw.len());
        for (k0, (words, entries)) in self.raw.into_iter().enumerate() {
            let k = k0 + 1;
            if let Some(&w) = words.iter().find(|&&w| !has_unigram[w as usize]) {
                return Err(BuildError::MissingUnigram(self.vocab.word(w).to_owned()));
            }
            let n = entries.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let row = |r: usize| &words[r * k..(r + 1) * k];
            perm.sort_unstable_by(|&a, &b| row(a).cmp(row(b)));
            let mut sorted_words = Vec::with_capacity(words.len());
            let mut sorted_entries = Vec::with_capacity(n);
            for (i, &r) in perm.iter().enumerate() {
                if i > 0 && row(perm[i - 1]) == row(r) {
                    let text: Vec<&str> = row(r).iter().map(|&w| self.vocab.word(w)).collect();
                    return Err(BuildError::Duplicate(k, text.join(" ")));
                }
                sorted_words.extend_from_slice(row(r));
                sorted_entries.push(entries[r]);
            }
            let mut first = vec![0u32; v + 1];
            for r in 0..n {
                first[sorted_words[r * k] as usize + 1] += 1;
            }
            for i in 0..v {
                first[i + 1] += first[i];
            }
            tables.push(OrderTable {
                order: k,
                words: sorted_words,
                entries: sorted_entries,
                first,
            });
        }
        Ok(NgramLm {
            vocab: self.vocab,
            tables,
        })
    }
}

/// Problems found while reading an ARPA file.
#[derive(Debug, Clone, PartialEq)]
pub enum ArpaErrorKind {
    MissingData,
    BadCountLine(String),
    NoCounts,
    NonContiguousOrders,
    BadSectionHeader(String),
    UnknownSection(usize),
    CountMismatch {
        order: usize,
        declared: usize,
        found: usize,
    },
    NonNumeric(String),
    WrongLength {
        order: usize,
        fields: usize,
    },
    OutsideSection,
    MissingEnd,
    Build(BuildError),
}

impl fmt::Display for ArpaErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ArpaErrorKind::*;
        match self {
            MissingData => write!(f, "missing \\data\\ header"),
            BadCountLine(s) => write!(f, "malformed header line `{}`", s),
            NoCounts => write!(f, "no `ngram k=count` declarations in header"),
            NonContiguousOrders => write!(f, "malformed header: orders must be 1..N"),
            BadSectionHeader(s) => write!(f, "malformed section header `{}`", s),
            UnknownSection(k) => write!(f, "section for undeclared order {}", k),
            CountMismatch {
                order,
                declared,
                found,
            } => write!(
                f,
                "count mismatch for {}-grams: declared {}, found {}",
                order, declared, found
            ),
            NonNumeric(s) => write!(f, "non-numeric field `{}`", s),
            WrongLength { order, fields } => write!(
                f,
                "{} fields on a line in the {}-grams section",
                fields, order
            ),
            OutsideSection => write!(f, "n-gram line outside of any section"),
            MissingEnd => write!(f, "missing \\end\\ marker"),
            Build(e) => write!(f, "{}", e),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArpaError {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ArpaErrorKind },
    #[error("reading ARPA model: {0}")]
    Io(#[from] io::Error),
}

impl ArpaError {
    fn at(line: usize, kind: ArpaErrorKind) -> Self {
        ArpaError::Parse { line, kind }
    }
}

enum State {
    Preamble,
    Header,
    Section(usize),
    Done,
}

fn parse_section_header(line: &str) -> Option<usize> {
    line.strip_prefix('\\')?
        .strip_suffix("-grams:")?
        .parse()
        .ok()
}

fn parse_float(field: &str, line: usize) -> Result<f64, ArpaError> {
    field
        .parse::<f64>()
        .map_err(|_| ArpaError::at(line, ArpaErrorKind::NonNumeric(field.to_owned())))
}

/// Reads an ARPA back-off model.
pub fn parse_arpa<R: BufRead>(reader: R) -> Result<NgramLm, ArpaError> {
    use ArpaErrorKind::*;
    let mut state = State::Preamble;
    let mut declared: Vec<usize> = Vec::new();
    let mut found: Vec<usize> = Vec::new();
    let mut builder = NgramLmBuilder::new();
    let mut ids = Vec::new();
    let mut lineno = 0;

    let close_section = |k: usize, found: &[usize], declared: &[usize], line: usize| {
        if found[k - 1] != declared[k - 1] {
            return Err(ArpaError::at(
                line,
                CountMismatch {
                    order: k,
                    declared: declared[k - 1],
                    found: found[k - 1],
                },
            ));
        }
        Ok(())
    };

    for line in reader.lines() {
        let line = line?;
        lineno += 1;
        let text = line.trim();
        match state {
            State::Preamble => {
                if text == "\\data\\" {
                    state = State::Header;
                }
            }
            State::Header => {
                if text.is_empty() {
                    continue;
                }
                if let Some(decl) = text.strip_prefix("ngram ") {
                    let (k, n) = decl
                        .split_once('=')
                        .and_then(|(k, n)| {
                            Some((
                                k.trim().parse::<usize>().ok()?,
                                n.trim().parse::<usize>().ok()?,
                            ))
                        })
                        .ok_or_else(|| ArpaError::at(lineno, BadCountLine(text.to_owned())))?;
                    if k != declared.len() + 1 {
                        return Err(ArpaError::at(lineno, NonContiguousOrders));
                    }
                    declared.push(n);
                } else if let Some(k) = parse_section_header(text) {
                    if declared.is_empty() {
                        return Err(ArpaError::at(lineno, NoCounts));
                    }
                    if k == 0 || k > declared.len() {
                        return Err(ArpaError::at(lineno, UnknownSection(k)));
                    }
                    found = vec![0; declared.len()];
                    state = State::Section(k);
                } else {
                    return Err(ArpaError::at(lineno, BadCountLine(text.to_owned())));
                }
            }
            State::Section(k) => {
                if text.is_empty() {
                    continue;
                }
                if text == "\\end\\" {
                    close_section(k, &found, &declared, lineno)?;
                    state = State::Done;
                    continue;
                }
                if text.starts_with('\\') {
                    close_section(k, &found, &declared, lineno)?;
                    let next = parse_section_header(text)
                        .ok_or_else(|| ArpaError::at(lineno, BadSectionHeader(text.to_owned())))?;
                    if next == 0 || next > declared.len() {
                        return Err(ArpaError::at(lineno, UnknownSection(next)));
                    }
                    state = State::Section(next);
                    continue;
                }
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != k + 1 && fields.len() != k + 2 {
                    return Err(ArpaError::at(
                        lineno,
                        WrongLength {
                            order: k,
                            fields: fields.len(),
                        },
                    ));
                }
                let logprob = parse_float(fields[0], lineno)?;
                let beta = match fields.get(k + 1) {
                    Some(f) => parse_float(f, lineno)?,
                    None => 0.0,
                };
                let alpha = if logprob == LOG_ZERO_SENTINEL {
                    ABSENT
                } else {
                    logprob
                };
                ids.clear();
                let vocab = builder.vocab_mut();
                ids.extend(fields[1..=k].iter().map(|w| vocab.intern(w)));
                builder.insert(&ids, alpha, beta);
                found[k - 1] += 1;
            }
            State::Done => {
                if !text.is_empty() {
                    return Err(ArpaError::at(lineno, OutsideSection));
                }
            }
        }
    }

    match state {
        State::Done => {}
        State::Preamble => return Err(ArpaError::at(lineno, MissingData)),
        State::Header if declared.is_empty() => return Err(ArpaError::at(lineno, NoCounts)),
        _ => return Err(ArpaError::at(lineno, MissingEnd)),
    }
    if let Some(k) = (1..=declared.len()).find(|&k| found[k - 1] != declared[k - 1]) {
        return Err(ArpaError::at(
            lineno,
            CountMismatch {
                order: k,
                declared: declared[k - 1],
                found: found[k - 1],
            },
        ));
    }
    builder.build().map_err(|e| ArpaError::at(lineno, Build(e)))
}

pub fn parse_arpa_str(text: &str) -> Result<NgramLm, ArpaError> {
    parse_arpa(text.as_bytes())
}
