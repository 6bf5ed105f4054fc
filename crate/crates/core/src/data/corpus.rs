use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NonRumor,
    Rumor,
}

impl Label {
    /// Training target: 1 for rumor, 0 otherwise.
    pub fn target(self) -> f64 {
        match self {
            Label::Rumor => 1.0,
            Label::NonRumor => 0.0,
        }
    }

    /// Decision at threshold 0.5; exactly 0.5 is non-rumor.
    pub fn from_probability(p: f64) -> Self {
        if p > 0.5 {
            Label::Rumor
        } else {
            Label::NonRumor
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::NonRumor => 0,
            Label::Rumor => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::NonRumor),
            1 => Ok(Label::Rumor),
            _ => Err("label must be 0 or 1".to_string()),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Rumor => "rumor",
            Label::NonRumor => "non-rumor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub tweet_id: String,
    pub timestamp: i64,
    pub user_id: String,
    pub text: String,
    /// Vocabulary indices, filled by [`Vocabulary::index_events`](super::Vocabulary::index_events).
    #[serde(skip)]
    pub tokens: Vec<usize>,
}

impl Tweet {
    pub fn new(
        tweet_id: impl Into<String>,
        timestamp: i64,
        user_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            tweet_id: tweet_id.into(),
            timestamp,
            user_id: user_id.into(),
            text: text.into(),
            tokens: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: String,
    pub label: Label,
    pub tweets: Vec<Tweet>,
}

impl Event {
    /// Sorts tweets by timestamp, then tweet id.
    pub fn normalize(&mut self) {
        self.tweets.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.tweet_id.cmp(&b.tweet_id))
        });
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.tweets.is_empty() {
            return Err(format!("event {} has no tweets", self.event_id));
        }
        if let Some(t) = self.tweets.iter().find(|t| t.timestamp < 0) {
            return Err(format!("tweet {} has a negative timestamp", t.tweet_id));
        }
        Ok(())
    }
}

/// Parses a JSON-lines corpus: one event per non-blank line.
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Line {
            line: line_no,
            message,
        };
        let mut event: Event = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        event.validate().map_err(bad)?;
        if !seen.insert(event.event_id.clone()) {
            return Err(bad(format!("duplicate event_id {}", event.event_id)));
        }
        event.normalize();
        events.push(event);
    }
    Ok(events)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let file = File::open(path.as_ref()).map_err(Error::at(path.as_ref()))?;
    parse_corpus(BufReader::new(file))
}

pub fn write_corpus(events: &[Event], mut out: impl Write) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(events: &[Event], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref()).map_err(Error::at(path.as_ref()))?);
    write_corpus(events, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Dataset summary with one field per row of the usual statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(rename = "No. of unique users")]
    pub unique_users: usize,
    #[serde(rename = "No. of tweets")]
    pub tweets: usize,
    #[serde(rename = "No. of events")]
    pub events: usize,
    #[serde(rename = "No. of rumor events")]
    pub rumor_events: usize,
    #[serde(rename = "No. of non-rumor events")]
    pub non_rumor_events: usize,
    #[serde(rename = "Avg no. of posts/event")]
    pub avg_posts: f64,
    #[serde(rename = "Max no. of posts/event")]
    pub max_posts: usize,
    #[serde(rename = "Min no. of posts/event")]
    pub min_posts: usize,
}

pub fn corpus_stats(corpus: &[Event]) -> StatsReport {
    let users: HashSet<&str> = corpus
        .iter()
        .flat_map(|e| e.tweets.iter().map(|t| t.user_id.as_str()))
        .collect();
    let tweets: usize = corpus.iter().map(|e| e.tweets.len()).sum();
    let rumor_events = corpus.iter().filter(|e| e.label == Label::Rumor).count();
    let sizes = corpus.iter().map(|e| e.tweets.len());
    StatsReport {
        unique_users: users.len(),
        tweets,
        events: corpus.len(),
        rumor_events,
        non_rumor_events: corpus.len() - rumor_events,
        avg_posts: if corpus.is_empty() {
            0.0
        } else {
            tweets as f64 / corpus.len() as f64
        },
        max_posts: sizes.clone().max().unwrap_or(0),
        min_posts: sizes.min().unwrap_or(0),
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("No. of unique users", self.unique_users.to_string()),
            ("No. of tweets", self.tweets.to_string()),
            ("No. of events", self.events.to_string()),
            ("No. of rumor events", self.rumor_events.to_string()),
            ("No. of non-rumor events", self.non_rumor_events.to_string()),
            ("Avg no. of posts/event", format!("{:.0}", self.avg_posts)),
            ("Max no. of posts/event", self.max_posts.to_string()),
            ("Min no. of posts/event", self.min_posts.to_string()),
        ];
        for (name, value) in rows {
            writeln!(f, "{name:<25}{value:>12}")?;
        }
        Ok(())
    }
}
