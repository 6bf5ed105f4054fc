//! Central finite-difference check of every analytic parameter gradient.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Event, Label, Tweet};
use crate::error::Result;
use crate::model::{Mode, Model, ModelConfig, ParamId};
use crate::tensor::{SeededRng, Tape};

use super::build_model;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub model: ModelConfig,
    pub seed: u64,
    /// Distinct corpus words in the random event.
    pub words: usize,
    pub authors: usize,
    pub tweets: usize,
    pub words_per_tweet: usize,
    pub step: f64,
    /// Half-width of the uniform re-initialisation applied to every
    /// parameter; larger than the training init so gradients are not tiny.
    pub init_scale: f64,
    pub zero_params: bool,
    pub corrupt_conv: bool,
}

impl GradcheckConfig {
    pub fn tiny(seed: u64) -> Self {
        let mut model = ModelConfig::tiny();
        model.dropout = 0.0;
        model.seed = seed;
        Self {
            model,
            seed,
            words: 28,
            authors: 6,
            tweets: 13,
            words_per_tweet: 4,
            step: 1e-5,
            init_scale: 0.5,
            zero_params: false,
            corrupt_conv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub loss: f64,
    pub groups: Vec<GroupError>,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn group(&self, name: &str) -> Option<&GroupError> {
        self.groups.iter().find(|g| g.group == name)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "loss {:.10}", self.loss)?;
        for g in &self.groups {
            writeln!(f, "{:<10} {:>10.3e}  ({} entries)", g.group, g.max_rel_error, g.checked)?;
        }
        Ok(())
    }
}

/// `|a - n| / max(|a|, |n|)` with the denominator floored at 1e-6, so
/// matching zeros give 0 and round-off on vanishing gradients stays small.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let den = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / den
}

fn random_event(cfg: &GradcheckConfig, rng: &mut SeededRng) -> Event {
    let tweets = (0..cfg.tweets)
        .map(|i| {
            let text: Vec<String> = (0..cfg.words_per_tweet)
                .map(|_| format!("w{}", rng.range(0, cfg.words)))
                .collect();
            Tweet::new(
                format!("t{i}"),
                i as i64,
                format!("u{}", rng.range(0, cfg.authors)),
                text.join(" "),
            )
        })
        .collect();
    Event {
        event_id: "gradcheck".into(),
        label: if rng.bernoulli(0.5) {
            Label::Rumor
        } else {
            Label::NonRumor
        },
        tweets,
    }
}

fn loss_of(model: &Model, event: &crate::data::IntervalizedEvent) -> Result<f64> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, event, Mode::Infer)?;
    let loss = tape.bce(out.prob, event.label.target())?;
    Ok(tape.value(loss).data()[0])
}

pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = SeededRng::new(cfg.seed);
    let event = random_event(cfg, &mut rng);
    let mut model = build_model(&cfg.model, std::slice::from_ref(&event), None)?;
    for id in ParamId::ALL {
        let frozen = id.frozen_row();
        let t = model.tensor_mut(id);
        let cols = t.shape().last().copied().unwrap_or(1);
        for (i, x) in t.data_mut().iter_mut().enumerate() {
            let in_frozen = t_row_is(frozen, i, cols);
            *x = if cfg.zero_params || in_frozen {
                0.0
            } else {
                rng.uniform(-cfg.init_scale, cfg.init_scale)
            };
        }
    }
    let prepared = model.prepare(&event)?;

    let mut tape = Tape::new();
    if cfg.corrupt_conv {
        tape.corrupt_conv_backward();
    }
    let out = model.forward(&mut tape, &prepared, Mode::Infer)?;
    let loss = tape.bce(out.prob, prepared.label.target())?;
    let loss_value = tape.value(loss).data()[0];
    let grads = tape.backward(loss)?;

    let mut groups: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
    for id in ParamId::ALL {
        let mut analytic = model.tensor(id).clone();
        analytic.zero_grad();
        grads.accumulate_into(id.key(), &mut analytic)?;
        let analytic = analytic.grad().expect("grad buffer").to_vec();
        let cols = model.tensor(id).shape().last().copied().unwrap_or(1);
        let frozen = id.frozen_row();
        let coords: Vec<usize> = (0..analytic.len())
            .filter(|&i| !t_row_is(frozen, i, cols))
            .collect();
        let worst = coords
            .par_iter()
            .map_init(
                || model.clone(),
                |m, &i| -> Result<f64> {
                    let orig = m.tensor(id).data()[i];
                    m.tensor_mut(id).data_mut()[i] = orig + cfg.step;
                    let plus = loss_of(m, &prepared)?;
                    m.tensor_mut(id).data_mut()[i] = orig - cfg.step;
                    let minus = loss_of(m, &prepared)?;
                    m.tensor_mut(id).data_mut()[i] = orig;
                    let numeric = (plus - minus) / (2.0 * cfg.step);
                    Ok(relative_error(analytic[i], numeric))
                },
            )
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let entry = groups.entry(id.group()).or_insert((0.0, 0));
        entry.0 = entry.0.max(worst);
        entry.1 += coords.len();
    }
    Ok(GradcheckReport {
        loss: loss_value,
        groups: groups
            .into_iter()
            .map(|(group, (max_rel_error, checked))| GroupError {
                group: group.to_string(),
                max_rel_error,
                checked,
            })
            .collect(),
    })
}

fn t_row_is(frozen: Option<usize>, flat: usize, cols: usize) -> bool {
    frozen.is_some_and(|r| flat / cols == r)
}
