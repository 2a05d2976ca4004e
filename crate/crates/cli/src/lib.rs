//! Subcommands of the `fastsubs` binary.
//!
//! Every command writes its results to `out` and warnings to `diag`, so the
//! binary and the tests drive the same code.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fastsubs::bench::{
    all_positions, check, encode_corpus, loglog_slope, run_bench, sample_positions, summarize,
    Mismatch, Position, CSV_HEADER,
};
use fastsubs::scorer::{pad, CandidatePolicy};
use fastsubs::synth::{estimate_model, gen_corpus, SynthConfig};
use fastsubs::ubqueue::Selection;
use fastsubs::{
    fastsubs_topk_with, oracle_topk, parse_arpa, AlphaIndex, NgramLm, Query, SearchOptions,
    StopRule, SubstituteList,
};

/// Sentences handed to the worker pool at a time.
const CHUNK: usize = 512;

#[derive(Debug, Parser)]
#[command(
    name = "fastsubs",
    version,
    about = "Exact top-K lexical substitutes under a back-off n-gram model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Top-K substitutes for every token of every input sentence.
    Subs(SubsArgs),
    /// Compare the search against the exhaustive oracle.
    Check(CheckArgs),
    /// Queue pops per query as CSV, with per-K means.
    Bench(BenchArgs),
    /// Generate a Zipfian corpus and fit a back-off model to it.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct PolicyArgs {
    /// Allow <unk> as a substitute.
    #[arg(long)]
    pub include_unk: bool,
    /// Never return the original word.
    #[arg(long)]
    pub exclude_target: bool,
}

impl From<PolicyArgs> for CandidatePolicy {
    fn from(p: PolicyArgs) -> Self {
        CandidatePolicy {
            include_unk: p.include_unk,
            exclude_target: p.exclude_target,
        }
    }
}

#[derive(Debug, Args)]
pub struct SubsArgs {
    /// ARPA model file.
    #[arg(long)]
    pub model: PathBuf,
    /// One whitespace-tokenized sentence per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(short = 'k', long = "k", default_value_t = 10, value_parser = parse_positive)]
    pub k: usize,
    /// Score every word instead of searching.
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Warn if the model has no right context to use.
    #[arg(long)]
    pub order_check: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sentences to draw query positions from.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated K values; `all` means every eligible word.
    #[arg(long = "k", value_delimiter = ',', default_value = "1,5,20,all", value_parser = parse_k_spec)]
    pub ks: Vec<KSpec>,
    /// Number of positions to sample, or `all`.
    #[arg(long, default_value = "1000", value_parser = parse_sample)]
    pub sample: Sample,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Corrupt the α index before checking.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long = "k", value_delimiter = ',', default_value = "1,4,16,64,256,1024,4096", value_parser = parse_k_spec)]
    pub ks: Vec<KSpec>,
    #[arg(long, default_value = "200", value_parser = parse_sample)]
    pub sample: Sample,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Block selection at the root queue.
    #[arg(long, value_enum, default_value_t = SelectionArg::RoundRobin)]
    pub selection: SelectionArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Vocabulary size including <s>, </s> and <unk>.
    #[arg(long, default_value_t = 1000)]
    pub vocab: usize,
    #[arg(long, default_value_t = 20_000)]
    pub tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    pub zipf: f64,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.7)]
    pub discount: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0)]
    pub mean_len: f64,
    #[arg(long)]
    pub corpus_out: PathBuf,
    #[arg(long)]
    pub model_out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    RoundRobin,
    MaxSup,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::RoundRobin => Selection::RoundRobin,
            SelectionArg::MaxSup => Selection::MaxSup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSpec {
    Fixed(usize),
    All,
}

impl KSpec {
    /// `All` becomes the vocabulary size, which no eligible set exceeds.
    pub fn resolve(self, lm: &NgramLm) -> usize {
        match self {
            KSpec::Fixed(k) => k,
            KSpec::All => lm.vocab().len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sample {
    All,
    Count(usize),
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("K must be at least 1".into()),
        Ok(k) => Ok(k),
        Err(e) => Err(e.to_string()),
    }
}

pub fn parse_k_spec(s: &str) -> Result<KSpec, String> {
    if s == "all" {
        Ok(KSpec::All)
    } else {
        parse_positive(s).map(KSpec::Fixed)
    }
}

pub fn parse_sample(s: &str) -> Result<Sample, String> {
    if s == "all" {
        Ok(Sample::All)
    } else {
        s.parse().map(Sample::Count).map_err(|e| format!("{}", e))
    }
}

/// Why a command failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(anyhow::Error),
    /// The search disagreed with the oracle. The report is already written.
    Mismatch,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Mismatch => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{}", m),
            Failure::Io(e) => write!(f, "{:#}", e),
            Failure::Mismatch => write!(f, "search and oracle disagree"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, diag: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Subs(a) => cmd_subs(a, out, diag),
        Command::Check(a) => cmd_check(a, out, diag),
        Command::Bench(a) => cmd_bench(a, out, diag),
        Command::Synth(a) => cmd_synth(a, out, diag),
    }
}

pub fn load_model(path: &Path) -> Result<NgramLm, Failure> {
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open model {}", path.display()))
        .map_err(Failure::Io)?;
    parse_arpa(BufReader::new(file))
        .with_context(|| format!("cannot read model {}", path.display()))
        .map_err(Failure::Io)
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Io)?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Output lines for one sentence, one per token:
/// `sentence<TAB>token<TAB>original<TAB>sub score<TAB>...`.
pub fn render_sentence(
    lm: &NgramLm,
    index: Option<&AlphaIndex>,
    sentence: usize,
    tokens: &[&str],
    k: usize,
    policy: CandidatePolicy,
) -> String {
    let padded = pad(lm.vocab(), tokens);
    let mut out = String::new();
    for (t, tok) in tokens.iter().enumerate() {
        let q = Query::new(padded.clone(), t + 1, k)
            .expect("padded sentence and k >= 1")
            .with_policy(policy);
        let subs = match index {
            Some(index) => {
                let opts = SearchOptions {
                    stop: StopRule::Strict,
                    ..Default::default()
                };
                fastsubs_topk_with(lm, index, &q, opts).0
            }
            None => oracle_topk(lm, &q),
        };
        out.push_str(&format!("{}\t{}\t{}", sentence, t, tok));
        push_pairs(&mut out, lm, &subs);
        out.push('\n');
    }
    out
}

fn push_pairs(out: &mut String, lm: &NgramLm, subs: &SubstituteList) {
    for s in subs.iter() {
        out.push_str(&format!("\t{} {:.6}", lm.vocab().word(s.word), s.score));
    }
}

pub fn cmd_subs(args: &SubsArgs, out: &mut dyn Write, diag: &mut dyn Write) -> Result<(), Failure> {
    let start = Instant::now();
    let lm = load_model(&args.model)?;
    if args.order_check && lm.order() < 2 {
        writeln!(
            diag,
            "warning: model order is {}, substitutes ignore the context",
            lm.order()
        )?;
    }
    let lines = read_lines(&args.input)?;
    let mut sentences = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            writeln!(diag, "warning: input line {} is empty, skipped", i + 1)?;
            continue;
        }
        sentences.push((i, tokens));
    }
    let index = (!args.oracle).then(|| AlphaIndex::build(&lm));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {} threads: {}", args.threads, e)))?;
    let policy = args.policy.into();
    let mut queries = 0;
    for chunk in sentences.chunks(CHUNK) {
        let rendered: Vec<String> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(i, tokens)| render_sentence(&lm, index.as_ref(), *i, tokens, args.k, policy))
                .collect()
        });
        for r in rendered {
            out.write_all(r.as_bytes())?;
        }
        queries += chunk.iter().map(|(_, t)| t.len()).sum::<usize>();
    }
    writeln!(
        diag,
        "{} sentences, {} queries in {:.3}s",
        sentences.len(),
        queries,
        start.elapsed().as_secs_f64()
    )?;
    Ok(())
}

fn positions_for(sentences: &[Vec<fastsubs::WordId>], sample: Sample, seed: u64) -> Vec<Position> {
    match sample {
        Sample::All => all_positions(sentences),
        Sample::Count(n) => sample_positions(sentences, n, seed),
    }
}

pub fn cmd_check(
    args: &CheckArgs,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> Result<(), Failure> {
    let start = Instant::now();
    let lm = load_model(&args.model)?;
    let mut index = AlphaIndex::build(&lm);
    if args.inject_fault {
        index.inject_fault();
    }
    let sentences = encode_corpus(&lm, &read_lines(&args.corpus)?);
    let positions = positions_for(&sentences, args.sample, args.seed);
    let ks: Vec<usize> = args.ks.iter().map(|k| k.resolve(&lm)).collect();
    let report = check(&lm, &index, &sentences, &positions, &ks, args.policy.into());
    writeln!(out, "queries {}", report.queries)?;
    writeln!(out, "comparisons {}", report.comparisons)?;
    writeln!(diag, "checked in {:.3}s", start.elapsed().as_secs_f64())?;
    match report.mismatch {
        None => {
            writeln!(out, "mismatches 0")?;
            Ok(())
        }
        Some(m) => {
            writeln!(out, "mismatches 1")?;
            out.write_all(dump_mismatch(&lm, &m).as_bytes())?;
            Err(Failure::Mismatch)
        }
    }
}

/// The query and both rankings side by side.
pub fn dump_mismatch(lm: &NgramLm, m: &Mismatch) -> String {
    let v = lm.vocab();
    let words: Vec<&str> = m.query.words().iter().map(|&w| v.word(w)).collect();
    let mut s = format!(
        "sentence {} token {} k {} stop {:?}\nquery {}\ntarget {}\n",
        m.position.sentence,
        m.position.token,
        m.k,
        m.stop,
        words.join(" "),
        v.word(m.query.original())
    );
    s.push_str("rank\tsearch\toracle\n");
    let n = m.fast.len().max(m.oracle.len());
    let cell = |l: &SubstituteList, i: usize| {
        l.as_slice().get(i).map_or("-".to_owned(), |x| {
            format!("{} {:.17}", v.word(x.word), x.score)
        })
    };
    for i in 0..n {
        let mark = if m.fast.as_slice().get(i) != m.oracle.as_slice().get(i) {
            "\t*"
        } else {
            ""
        };
        s.push_str(&format!(
            "{}\t{}\t{}{}\n",
            i + 1,
            cell(&m.fast, i),
            cell(&m.oracle, i),
            mark
        ));
    }
    s
}

pub fn cmd_bench(
    args: &BenchArgs,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> Result<(), Failure> {
    let start = Instant::now();
    let lm = load_model(&args.model)?;
    let index = AlphaIndex::build(&lm);
    writeln!(
        diag,
        "model and index ready in {:.3}s, {} α pairs",
        start.elapsed().as_secs_f64(),
        index.total_pairs()
    )?;
    let sentences = encode_corpus(&lm, &read_lines(&args.corpus)?);
    let positions = positions_for(&sentences, args.sample, args.seed);
    let ks: Vec<usize> = args.ks.iter().map(|k| k.resolve(&lm)).collect();
    let opts = SearchOptions {
        selection: args.selection.into(),
        ..Default::default()
    };
    let records = run_bench(
        &lm,
        &index,
        &sentences,
        &positions,
        &ks,
        args.policy.into(),
        opts,
    );
    writeln!(out, "{}", CSV_HEADER)?;
    for r in &records {
        writeln!(out, "{}", r.csv_row())?;
    }
    let summary = summarize(&records);
    writeln!(out, "# K,mean_pops,mean_nanos")?;
    for s in &summary {
        writeln!(out, "# {},{:.3},{:.1}", s.k, s.mean_pops, s.mean_nanos)?;
    }
    let points: Vec<(f64, f64)> = summary.iter().map(|s| (s.k as f64, s.mean_pops)).collect();
    match loglog_slope(&points) {
        Some(slope) => writeln!(out, "# slope {:.4}", slope)?,
        None => writeln!(out, "# slope NA")?,
    }
    Ok(())
}

pub fn cmd_synth(
    args: &SynthArgs,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> Result<(), Failure> {
    let cfg = SynthConfig {
        vocab_size: args.vocab,
        tokens: args.tokens,
        zipf_exponent: args.zipf,
        order: args.order,
        discount: args.discount,
        seed: args.seed,
        mean_sentence_len: args.mean_len,
    };
    let usage = |e: fastsubs::synth::SynthError| Failure::Usage(e.to_string());
    let corpus = gen_corpus(&cfg).map_err(usage)?;
    let lm = estimate_model(&corpus, cfg.order, cfg.discount).map_err(usage)?;

    let mut text = corpus.join("\n");
    text.push('\n');
    fs::write(&args.corpus_out, text)
        .with_context(|| format!("cannot write {}", args.corpus_out.display()))
        .map_err(Failure::Io)?;
    let file = fs::File::create(&args.model_out)
        .with_context(|| format!("cannot write {}", args.model_out.display()))
        .map_err(Failure::Io)?;
    let mut w = std::io::BufWriter::new(file);
    lm.write_arpa(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", args.model_out.display()))
        .map_err(Failure::Io)?;

    let counts: Vec<String> = (1..=lm.order()).map(|k| lm.count(k).to_string()).collect();
    writeln!(out, "sentences {}", corpus.len())?;
    writeln!(out, "ngrams {}", counts.join(" "))?;
    writeln!(
        diag,
        "wrote {} and {}",
        args.corpus_out.display(),
        args.model_out.display()
    )?;
    Ok(())
}
