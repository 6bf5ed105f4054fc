use std::ops::Range;

use super::corpus::{Event, Label};
use super::vocab::PAD;
use crate::error::{Error, Result};

/// Smallest number of tweet rows per interval matrix; a 3×3 filter needs
/// at least three.
pub const MIN_ROWS: usize = 3;

/// The words and authors of one chronological chunk of an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    /// Exactly `p` vocabulary indices, PAD-filled after the real tokens.
    pub word_indices: Vec<usize>,
    /// `true` for real tokens; always a prefix.
    pub word_mask: Vec<bool>,
    /// Authors of the chunk's tweets in order, padded with `None` to `q`.
    pub tweet_user_ids: Vec<Option<String>>,
}

impl Interval {
    pub fn real_tokens(&self) -> usize {
        self.word_mask.iter().take_while(|&&m| m).count()
    }

    pub fn real_tweets(&self) -> usize {
        self.tweet_user_ids.iter().take_while(|u| u.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.real_tokens() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalizedEvent {
    pub event_id: String,
    pub label: Label,
    pub intervals: Vec<Interval>,
    /// Tweet rows per interval matrix.
    pub q: usize,
}

/// Contiguous ranges partitioning `n` items into `k` chunks whose sizes
/// differ by at most one; the first `n % k` chunks are the larger ones.
pub fn chunk_ranges(n: usize, k: usize) -> Vec<Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Splits `event` (tweets already sorted and tokenized) into `k`
/// chronological intervals of exactly `p` word slots each.
pub fn split_into_intervals(event: &Event, k: usize, p: usize) -> Result<IntervalizedEvent> {
    if k == 0 || p == 0 {
        return Err(Error::Config(format!(
            "interval count and length must be positive, got k={k}, p={p}"
        )));
    }
    let n = event.tweets.len();
    let q = MIN_ROWS.max(n.div_ceil(k));
    let intervals = chunk_ranges(n, k)
        .into_iter()
        .map(|range| {
            let tweets = &event.tweets[range];
            let mut words: Vec<usize> = tweets
                .iter()
                .flat_map(|t| t.tokens.iter().copied())
                .take(p)
                .collect();
            let real = words.len();
            words.resize(p, PAD);
            let mut authors: Vec<Option<String>> =
                tweets.iter().map(|t| Some(t.user_id.clone())).collect();
            authors.resize(q, None);
            Interval {
                word_indices: words,
                word_mask: (0..p).map(|i| i < real).collect(),
                tweet_user_ids: authors,
            }
        })
        .collect();
    Ok(IntervalizedEvent {
        event_id: event.event_id.clone(),
        label: event.label,
        intervals,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::Tweet;

    fn sizes(n: usize, k: usize) -> Vec<usize> {
        chunk_ranges(n, k).iter().map(|r| r.len()).collect()
    }

    #[test]
    fn chunk_sizes_examples() {
        assert_eq!(sizes(6, 3), [2, 2, 2]);
        assert_eq!(sizes(7, 3), [3, 2, 2]);
        assert_eq!(sizes(1, 3), [1, 0, 0]);
    }

    #[test]
    fn sparse_event_pads_everything() {
        let mut tweet = Tweet::new("t", 0, "alice", "ignored");
        tweet.tokens = vec![5, 6];
        let event = Event {
            event_id: "e".into(),
            label: Label::Rumor,
            tweets: vec![tweet],
        };
        let ie = split_into_intervals(&event, 3, 4).unwrap();
        assert_eq!(ie.q, 3);
        assert_eq!(ie.intervals[0].word_indices, [5, 6, 0, 0]);
        assert_eq!(ie.intervals[0].word_mask, [true, true, false, false]);
        assert_eq!(
            ie.intervals[0].tweet_user_ids,
            [Some("alice".to_string()), None, None]
        );
        for iv in &ie.intervals[1..] {
            assert_eq!(iv.word_indices, [0; 4]);
            assert!(iv.word_mask.iter().all(|m| !m));
            assert!(iv.tweet_user_ids.iter().all(|u| u.is_none()));
        }
    }

    #[test]
    fn truncation_keeps_earliest_tokens() {
        let tweets = (0..2)
            .map(|i| {
                let mut t = Tweet::new(format!("{i}"), i, "u", "");
                t.tokens = vec![10 + i as usize; 3];
                t
            })
            .collect();
        let event = Event {
            event_id: "e".into(),
            label: Label::NonRumor,
            tweets,
        };
        let ie = split_into_intervals(&event, 1, 4).unwrap();
        assert_eq!(ie.intervals[0].word_indices, [10, 10, 10, 11]);
        assert!(ie.intervals[0].word_mask.iter().all(|&m| m));
    }

    #[test]
    fn zero_sizes_are_config_errors() {
        let event = Event {
            event_id: "e".into(),
            label: Label::Rumor,
            tweets: vec![Tweet::new("t", 0, "u", "")],
        };
        assert!(split_into_intervals(&event, 0, 4).is_err());
        assert!(split_into_intervals(&event, 2, 0).is_err());
    }
}
