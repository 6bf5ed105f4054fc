//! The full event model: encoder, author context and convolutional head.

pub mod classifier;
mod config;
pub mod encoder;
mod params;

pub use config::{Ablation, ModelConfig};
pub use params::{LstmParams, ParamId, Params};

use crate::data::{split_into_intervals, Event, IntervalizedEvent, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tape, Tensor, Var};
use crate::users::UserTable;

use encoder::{AttentionVars, LstmVars};

/// Forward-pass mode. Training draws dropout masks from the given RNG.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut SeededRng),
}

impl Mode<'_> {
    fn rng(&mut self) -> Option<&mut SeededRng> {
        match self {
            Mode::Infer => None,
            Mode::Train(rng) => Some(rng),
        }
    }
}

/// Values recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Rumor probability, shape `[1]`.
    pub prob: Var,
    /// `k × q × 2D` event cube.
    pub cube: Var,
    /// Attention weights over each interval's real tokens; `None` for empty
    /// intervals and in the no-attention variant.
    pub attention: Vec<Option<Var>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Params,
    pub users: UserTable,
}

impl Model {
    pub fn new(
        config: ModelConfig,
        vocab: Vocabulary,
        users: UserTable,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        if users.dim() != config.user_dim {
            return Err(Error::Config(format!(
                "user table width {} does not match model width {}",
                users.dim(),
                config.user_dim
            )));
        }
        let params = Params::init(&config, vocab.len(), rng);
        Ok(Self {
            config,
            vocab,
            params,
            users,
        })
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        match id {
            ParamId::Users => self.users.matrix(),
            _ => self.params.get(id),
        }
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        match id {
            ParamId::Users => self.users.matrix_mut(),
            _ => self.params.get_mut(id),
        }
    }

    /// Tokenizes against the model vocabulary and splits into intervals.
    pub fn prepare(&self, event: &Event) -> Result<IntervalizedEvent> {
        let mut event = event.clone();
        self.vocab.index_events(std::slice::from_mut(&mut event));
        split_into_intervals(&event, self.config.intervals, self.config.interval_len)
    }

    pub fn prepare_all(&self, events: &[Event]) -> Result<Vec<IntervalizedEvent>> {
        events.iter().map(|e| self.prepare(e)).collect()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        event: &IntervalizedEvent,
        mode: Mode<'_>,
    ) -> Result<ForwardOutput> {
        self.forward_with(tape, event, self.config.ablation, mode)
    }

    /// Forward pass with explicit ablation flags, overriding the config.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        event: &IntervalizedEvent,
        ablation: Ablation,
        mut mode: Mode<'_>,
    ) -> Result<ForwardOutput> {
        if event.intervals.len() < 3 || event.q < 3 {
            return Err(Error::Config(format!(
                "event {} has {} intervals of {} rows; both must be at least 3",
                event.event_id,
                event.intervals.len(),
                event.q
            )));
        }
        if ablation.no_attention && self.config.word_dim != self.config.user_dim {
            return Err(Error::Config(
                "the no-attention variant needs word_dim equal to user_dim".into(),
            ));
        }
        let p = &self.params;
        let mut param = |id: ParamId| tape.param(id.key(), p.get(id));
        let fwd = LstmVars {
            input: param(ParamId::FwdInput),
            recurrent: param(ParamId::FwdRecurrent),
            bias: param(ParamId::FwdBias),
        };
        let bwd = LstmVars {
            input: param(ParamId::BwdInput),
            recurrent: param(ParamId::BwdRecurrent),
            bias: param(ParamId::BwdBias),
        };
        let attn = AttentionVars {
            weight: param(ParamId::AttnWeight),
            bias: param(ParamId::AttnBias),
            context: param(ParamId::AttnContext),
        };
        let filters = param(ParamId::Filters);
        let filter_bias = param(ParamId::FilterBias);
        let dense_w = param(ParamId::DenseWeight);
        let dense_b = param(ParamId::DenseBias);

        let width = self.config.user_dim;
        let mut matrices = Vec::with_capacity(event.intervals.len());
        let mut attention = Vec::with_capacity(event.intervals.len());
        for interval in &event.intervals {
            let (vector, alpha) = if interval.is_empty() {
                (tape.leaf(Tensor::zeros(&[width])), None)
            } else if ablation.no_attention {
                let x = encoder::embed_words(tape, &p.words, interval)?;
                (tape.masked_mean_rows(x, &interval.word_mask)?, None)
            } else {
                let (alpha, v) =
                    encoder::encode_interval(tape, &p.words, interval, &fwd, &bwd, &attn)?;
                (v, Some(alpha))
            };
            let vector = tape.dropout(vector, self.config.dropout, mode.rng())?;
            matrices.push(encoder::build_interval_matrix(
                tape,
                vector,
                interval,
                &self.users,
                !ablation.no_user_context,
            )?);
            attention.push(alpha);
        }
        let cube = tape.stack(&matrices)?;
        let maps = tape.conv_valid(cube, filters, filter_bias)?;
        let pooled = classifier::pool_and_concat(tape, maps)?;
        let prob = classifier::classify(
            tape,
            pooled,
            dense_w,
            dense_b,
            self.config.dropout,
            mode.rng(),
        )?;
        Ok(ForwardOutput {
            prob,
            cube,
            attention,
        })
    }

    /// Rumor probability in inference mode.
    pub fn predict(&self, event: &IntervalizedEvent) -> Result<f64> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, event, Mode::Infer)?;
        Ok(tape.value(out.prob).data()[0])
    }

    /// Inference-mode attention weights, one `p`-vector per interval (all
    /// zero for empty intervals).
    pub fn attention_weights(&self, event: &IntervalizedEvent) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, event, Mode::Infer)?;
        Ok(out
            .attention
            .iter()
            .zip(&event.intervals)
            .map(|(a, iv)| match a {
                Some(a) => {
                    let mut w = tape.value(*a).data().to_vec();
                    w.resize(iv.word_indices.len(), 0.0);
                    w
                }
                None => vec![0.0; iv.word_indices.len()],
            })
            .collect())
    }
}
