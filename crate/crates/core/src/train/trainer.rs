use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Event, IntervalizedEvent, Label, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Mode, Model, ModelConfig, ParamId};
use crate::tensor::{AdadeltaState, SeededRng, Tape};
use crate::users::UserTable;

use super::MetricsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub shuffle_seed: u64,
    /// Training stops after this many consecutive epochs whose mean loss
    /// fell by less than `min_delta` from the epoch before.
    pub patience: usize,
    pub min_delta: f64,
    /// Share of events held out when a single split is requested.
    pub holdout: f64,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(ModelConfig::default())
    }
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            shuffle_seed: model.seed,
            model,
            patience: 10,
            min_delta: 1e-5,
            holdout: 0.1,
            folds: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::Config(format!(
                "holdout fraction must be in (0, 1), got {}",
                self.holdout
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.patience == 0 || !(self.min_delta >= 0.0) {
            return Err(Error::Config("patience must be positive and min_delta non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    EpochCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    pub stop: StopReason,
}

/// Fresh model whose vocabulary and author table cover `train_events`.
/// Rows of `pretrained` are copied in for every author it knows.
pub fn build_model(
    config: &ModelConfig,
    train_events: &[Event],
    pretrained: Option<&UserTable>,
) -> Result<Model> {
    config.validate()?;
    let vocab = Vocabulary::build(train_events, 1)?;
    let authors: BTreeSet<&str> = train_events
        .iter()
        .flat_map(|e| e.tweets.iter().map(|t| t.user_id.as_str()))
        .collect();
    let authors: Vec<&str> = authors.into_iter().collect();
    let mut rng = SeededRng::new(config.seed);
    let mut users = UserTable::init(&authors, config.user_dim, &mut rng.fork(0x5553))?;
    if let Some(pre) = pretrained {
        users.copy_rows_from(pre)?;
        users.trainable = pre.trainable;
    }
    Model::new(config.clone(), vocab, users, &mut rng)
}

struct Optimizer {
    states: Vec<(ParamId, AdadeltaState)>,
}

impl Optimizer {
    fn new(model: &Model) -> Result<Self> {
        let (rho, eps) = (model.config.rho, model.config.eps);
        let states = ParamId::ALL
            .iter()
            .map(|&id| Ok((id, AdadeltaState::for_param(model.tensor(id), rho, eps)?)))
            .collect::<Result<_>>()?;
        Ok(Self { states })
    }

    fn step(&mut self, model: &mut Model) -> Result<()> {
        for (id, state) in &mut self.states {
            if *id == ParamId::Users && !model.users.trainable {
                model.users.matrix_mut().zero_grad();
                continue;
            }
            state.step(model.tensor_mut(*id))?;
        }
        Ok(())
    }
}

/// One forward/backward pass in training mode. Gradients are accumulated
/// into the model's tensors; returns the loss and the probability.
pub fn train_step(
    model: &mut Model,
    event: &IntervalizedEvent,
    dropout_rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, event, Mode::Train(dropout_rng))?;
    let loss = tape.bce(out.prob, event.label.target())?;
    let value = tape.value(loss).data()[0];
    let prob = tape.value(out.prob).data()[0];
    if !value.is_finite() || !prob.is_finite() {
        return Err(Error::NonFinite {
            event_id: event.event_id.clone(),
        });
    }
    let grads = tape.backward(loss)?;
    for id in ParamId::ALL {
        grads.accumulate_into(id.key(), model.tensor_mut(id))?;
    }
    Ok((value, prob))
}

/// Trains with batch size one until the loss stops improving or the epoch
/// cap is reached. `on_epoch` sees each curve point as it is produced.
pub fn train(
    model: &mut Model,
    events: &[IntervalizedEvent],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    if events.is_empty() {
        return Err(Error::Data("cannot train on an empty corpus".into()));
    }
    let mut optimizer = Optimizer::new(model)?;
    let base = SeededRng::new(cfg.shuffle_seed);
    let mut shuffle_rng = base.fork(1);
    let mut dropout_rng = base.fork(2);
    let mut order: Vec<usize> = (0..events.len()).collect();
    let mut curve = Vec::new();
    let mut previous = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=model.config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut correct = 0;
        for &i in &order {
            let event = &events[i];
            let (loss, prob) = train_step(model, event, &mut dropout_rng)?;
            optimizer.step(model)?;
            total += loss;
            correct += usize::from(Label::from_probability(prob) == event.label);
        }
        let point = CurvePoint {
            epoch,
            train_loss: total / events.len() as f64,
            train_accuracy: correct as f64 / events.len() as f64,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} accuracy {:.4}",
            point.train_loss,
            point.train_accuracy
        );
        on_epoch(&point);
        curve.push(point);
        if previous - point.train_loss >= cfg.min_delta {
            stale = 0;
        } else {
            stale += 1;
        }
        previous = point.train_loss;
        if stale >= cfg.patience {
            return Ok(TrainOutcome {
                curve,
                stop: StopReason::Converged,
            });
        }
    }
    Ok(TrainOutcome {
        curve,
        stop: StopReason::EpochCap,
    })
}

/// Inference-mode probabilities, computed in parallel.
pub fn predict_all(model: &Model, events: &[IntervalizedEvent]) -> Result<Vec<f64>> {
    events.par_iter().map(|e| model.predict(e)).collect()
}

pub fn evaluate(model: &Model, events: &[IntervalizedEvent]) -> Result<MetricsReport> {
    if events.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty corpus".into()));
    }
    let probs = predict_all(model, events)?;
    let labels: Vec<Label> = events.iter().map(|e| e.label).collect();
    Ok(MetricsReport::from_probabilities(&probs, &labels))
}

pub fn write_curve(curve: &[CurvePoint], mut out: impl Write) -> Result<()> {
    writeln!(out, "epoch,train_loss,train_accuracy")?;
    for p in curve {
        writeln!(
            out,
            "{},{},{}",
            p.epoch,
            sig17(p.train_loss),
            sig17(p.train_accuracy)
        )?;
    }
    Ok(())
}

pub fn save_curve(curve: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_curve(curve, &mut buf)?;
    std::fs::write(path.as_ref(), buf).map_err(Error::at(path.as_ref()))?;
    Ok(())
}

/// Seventeen significant digits, enough to round-trip any `f64`.
fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_round_trips() {
        for x in [0.1, 1.0 / 3.0, 0.6931471805599453, 1e-300, 0.0] {
            let s = sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(ModelConfig::tiny());
        c.validate().unwrap();
        c.folds = 1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(ModelConfig::tiny());
        c.holdout = 1.0;
        assert!(c.validate().is_err());
    }
}
