//! Labeled synthetic corpora with a planted lexical and/or authorship
//! signal.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use serde::{Deserialize, Serialize};

use crate::data::{Event, Label, Tweet};
use crate::error::{Error, Result};
use crate::tensor::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalMode {
    Lexical,
    Author,
    Mixed,
    None,
}

impl SignalMode {
    fn lexical(self) -> bool {
        matches!(self, SignalMode::Lexical | SignalMode::Mixed)
    }

    fn author(self) -> bool {
        matches!(self, SignalMode::Author | SignalMode::Mixed)
    }
}

impl FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexical" => Ok(SignalMode::Lexical),
            "author" => Ok(SignalMode::Author),
            "mixed" => Ok(SignalMode::Mixed),
            "none" => Ok(SignalMode::None),
            _ => Err(Error::Config(format!(
                "unknown signal mode {s:?} (expected lexical, author, mixed or none)"
            ))),
        }
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalMode::Lexical => "lexical",
            SignalMode::Author => "author",
            SignalMode::Mixed => "mixed",
            SignalMode::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub events: usize,
    pub min_tweets: usize,
    pub max_tweets: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Total distinct words, signal tokens included.
    pub vocab_size: usize,
    pub signal_tokens: usize,
    /// Background word `r` (1-based rank) is drawn with weight `r^-s`;
    /// 0 gives a uniform background.
    pub zipf_exponent: f64,
    /// Authors shared by both classes.
    pub authors: usize,
    /// Authors who only ever post in rumor events.
    pub rumor_authors: usize,
    pub mode: SignalMode,
    /// Probability that a rumor-event tweet carries the planted signal.
    pub strength: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            events: 200,
            min_tweets: 10,
            max_tweets: 30,
            min_words: 25,
            max_words: 40,
            vocab_size: 200,
            signal_tokens: 1,
            zipf_exponent: 0.0,
            authors: 30,
            rumor_authors: 20,
            mode: SignalMode::Lexical,
            strength: 0.8,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("events", self.events),
            ("min_tweets", self.min_tweets),
            ("min_words", self.min_words),
            ("vocab_size", self.vocab_size),
            ("signal_tokens", self.signal_tokens),
            ("authors", self.authors),
            ("rumor_authors", self.rumor_authors),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.min_tweets > self.max_tweets || self.min_words > self.max_words {
            return Err(Error::Config("minimum exceeds maximum in a count range".into()));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::Config(format!(
                "zipf exponent must be finite and non-negative, got {}",
                self.zipf_exponent
            )));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::Config(format!(
                "signal strength must be in [0, 1], got {}",
                self.strength
            )));
        }
        if self.vocab_size <= self.signal_tokens {
            return Err(Error::Config(format!(
                "vocabulary of {} words cannot hold {} signal tokens plus background words",
                self.vocab_size, self.signal_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: SignalMode,
    pub strength: f64,
    pub seed: u64,
    pub signal_tokens: Vec<String>,
    pub rumor_authors: Vec<String>,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path.as_ref(), json + "\n").map_err(Error::at(path.as_ref()))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(Error::at(path.as_ref()))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path.as_ref(), e.to_string()))
    }
}

fn word(i: usize) -> String {
    format!("w{i:04}")
}

/// Builds the corpus. Text, authorship and event structure each draw from
/// their own RNG stream, so in author mode both classes see exactly the
/// same text sampler.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<Event>, Manifest)> {
    spec.validate()?;
    let base = SeededRng::new(spec.seed);
    let mut structure = base.fork(1);
    let mut text_rng = base.fork(2);
    let mut author_rng = base.fork(3);
    let mut signal_rng = base.fork(4);

    let mut ids: Vec<usize> = (0..spec.vocab_size).collect();
    structure.shuffle(&mut ids);
    let mut signal: Vec<usize> = ids[..spec.signal_tokens].to_vec();
    signal.sort_unstable();
    let mut background: Vec<usize> = ids[spec.signal_tokens..].to_vec();
    background.sort_unstable();
    let zipf = WeightedIndex::new((1..=background.len()).map(|r| (r as f64).powf(-spec.zipf_exponent)))
        .map_err(|e| Error::Config(e.to_string()))?;

    let general: Vec<String> = (0..spec.authors).map(|i| format!("u{i:04}")).collect();
    let rumor_pool: Vec<String> = (0..spec.rumor_authors).map(|i| format!("r{i:03}")).collect();

    let mut labels: Vec<Label> = (0..spec.events)
        .map(|i| if i < spec.events.div_ceil(2) { Label::Rumor } else { Label::NonRumor })
        .collect();
    structure.shuffle(&mut labels);

    let mut events = Vec::with_capacity(spec.events);
    for (e, &label) in labels.iter().enumerate() {
        let n = structure.range(spec.min_tweets, spec.max_tweets + 1);
        let mut clock = structure.range(0, 1_000_000) as i64;
        let mut tweets = Vec::with_capacity(n);
        for t in 0..n {
            clock += 1 + structure.range(0, 600) as i64;
            let len = text_rng.range(spec.min_words, spec.max_words + 1);
            let mut words: Vec<String> = (0..len)
                .map(|_| word(background[text_rng.weighted(&zipf)]))
                .collect();
            // signal draws happen for every tweet so the stream does not
            // depend on the label
            let plant_word = signal_rng.bernoulli(spec.strength);
            let slot = signal_rng.range(0, len);
            let which = signal[signal_rng.range(0, signal.len())];
            let plant_author = author_rng.bernoulli(spec.strength);
            let rumor_author = &rumor_pool[author_rng.range(0, rumor_pool.len())];
            let general_author = &general[author_rng.range(0, general.len())];
            let is_rumor = label == Label::Rumor;
            if is_rumor && spec.mode.lexical() && plant_word {
                words[slot] = word(which);
            }
            let author = if is_rumor && spec.mode.author() && plant_author {
                rumor_author
            } else {
                general_author
            };
            tweets.push(Tweet::new(
                format!("e{e:04}-t{t:03}"),
                clock,
                author.clone(),
                words.join(" "),
            ));
        }
        events.push(Event {
            event_id: format!("e{e:04}"),
            label,
            tweets,
        });
    }
    let manifest = Manifest {
        mode: spec.mode,
        strength: spec.strength,
        seed: spec.seed,
        signal_tokens: signal.into_iter().map(word).collect(),
        rumor_authors: if spec.mode.author() { rumor_pool } else { Vec::new() },
    };
    Ok((events, manifest))
}
