use std::collections::HashMap;

use super::corpus::Event;
use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map with `PAD = 0` and `UNK = 1` reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Counts tokens over every tweet in `corpus` and keeps those seen at
    /// least `min_count` times, most frequent first, ties broken
    /// lexicographically.
    pub fn build(corpus: &[Event], min_count: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for tweet in corpus.iter().flat_map(|e| &e.tweets) {
            for tok in tokenize(&tweet.text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t))
    }

    /// Builds a vocabulary from corpus tokens in index order, starting at 2.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut vocab = Self {
            index: HashMap::new(),
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
        };
        vocab.index.insert(PAD_TOKEN.to_string(), PAD);
        vocab.index.insert(UNK_TOKEN.to_string(), UNK);
        for tok in tokens {
            if vocab.index.contains_key(&tok) {
                return Err(Error::Data(format!("duplicate vocabulary token {tok:?}")));
            }
            vocab.index.insert(tok.clone(), vocab.tokens.len());
            vocab.tokens.push(tok);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Index of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) if i != PAD => i,
            _ => UNK,
        }
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    /// Corpus tokens in index order, excluding the reserved entries.
    pub fn corpus_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Fills every tweet's `tokens` from its text.
    pub fn index_events(&self, events: &mut [Event]) {
        for tweet in events.iter_mut().flat_map(|e| e.tweets.iter_mut()) {
            tweet.tokens = self.encode(&tweet.text);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::{Label, Tweet};

    fn event(id: &str, texts: &[&str]) -> Event {
        Event {
            event_id: id.into(),
            label: Label::Rumor,
            tweets: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Tweet::new(format!("{id}-{i}"), i as i64, "u", *t))
                .collect(),
        }
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let corpus = vec![
            event("e1", &["b a b a c", "a b"]),
            event("e2", &["b a a b"]),
        ];
        // a:5, b:5, c:1
        let v = Vocabulary::build(&corpus, 2).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.get("b"), Some(3));
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.id("never"), UNK);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let v = Vocabulary::build(&[event("e", &["x x"])], 1).unwrap();
        assert_eq!(v.corpus_tokens(), ["x"]);
        assert_eq!(v.token(PAD), Some(PAD_TOKEN));
        assert_eq!(v.token(UNK), Some(UNK_TOKEN));
    }

    #[test]
    fn rebuild_is_identical() {
        let corpus = vec![event("e", &["z y x w v u t z y x"])];
        assert_eq!(
            Vocabulary::build(&corpus, 1).unwrap(),
            Vocabulary::build(&corpus, 1).unwrap()
        );
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(Vocabulary::build(&[], 1).is_err());
    }

    #[test]
    fn pad_token_text_maps_to_unk() {
        let v = Vocabulary::from_tokens(["a".to_string()]).unwrap();
        assert_eq!(v.id(PAD_TOKEN), UNK);
        assert!(Vocabulary::from_tokens([UNK_TOKEN.to_string()]).is_err());
    }
}
