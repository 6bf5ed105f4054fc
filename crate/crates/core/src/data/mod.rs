//! Corpus model: events of time-stamped, author-attributed tweets, the
//! tokenizer and vocabulary, and interval splitting.

mod corpus;
mod interval;
mod tokenize;
mod vocab;

pub use corpus::{
    corpus_stats, load_corpus, parse_corpus, save_corpus, write_corpus, Event, Label, StatsReport,
    Tweet,
};
pub use interval::{chunk_ranges, split_into_intervals, Interval, IntervalizedEvent, MIN_ROWS};
pub use tokenize::{tokenize, MENTION_TOKEN, URL_TOKEN};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
