//! Exact top-K lexical substitutes under a back-off n-gram language model.
//!
//! A query opens one position of a sentence; the engine returns the K words
//! that maximize the model's score of the sentence with that position
//! filled in. Candidates are drawn best-first from upper bound queues built
//! over pre-sorted α lists ([`index::AlphaIndex`]) and scored exactly until
//! the remaining bound cannot beat the K-th score, so most of the vocabulary
//! is never touched. [`scorer::oracle_topk`] is the exhaustive baseline.
//!
//! ```
//! use fastsubs::{lm::parse_arpa_str, index::AlphaIndex, scorer::{oracle_topk, Query}, search::fastsubs_topk};
//!
//! let text = "\\data\\\nngram 1=4\n\n\\1-grams:\n-99\t<s>\n-0.5\t</s>\n-0.3\tcat\n-0.6\tdog\n\\end\\\n";
//! let lm = parse_arpa_str(text).unwrap();
//! let index = AlphaIndex::build(&lm);
//! let q = Query::from_tokens(lm.vocab(), &["dog"], 0, 1).unwrap();
//! let (subs, _stats) = fastsubs_topk(&lm, &index, &q);
//! assert_eq!(lm.vocab().word(subs.words()[0]), "cat");
//! assert_eq!(subs, oracle_topk(&lm, &q));
//! ```

pub mod bench;
pub mod index;
pub mod lm;
pub mod scorer;
pub mod search;
pub mod synth;
pub mod ubqueue;

pub use index::AlphaIndex;
pub use lm::{parse_arpa, NgramLm, WordId};
pub use scorer::{oracle_topk, Query, SubstituteList};
pub use search::{fastsubs_topk, fastsubs_topk_with, SearchOptions, SearchStats, StopRule};
