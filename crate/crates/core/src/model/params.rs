use crate::data::PAD;
use crate::tensor::{SeededRng, Tensor, INIT_SCALE};

use super::ModelConfig;

/// Identifies one trainable tensor of the model. The discriminant doubles
/// as the key under which the tensor is recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    Words,
    FwdInput,
    FwdRecurrent,
    FwdBias,
    BwdInput,
    BwdRecurrent,
    BwdBias,
    AttnWeight,
    AttnBias,
    AttnContext,
    Filters,
    FilterBias,
    DenseWeight,
    DenseBias,
    Users,
}

impl ParamId {
    pub const ALL: [ParamId; 15] = [
        ParamId::Words,
        ParamId::FwdInput,
        ParamId::FwdRecurrent,
        ParamId::FwdBias,
        ParamId::BwdInput,
        ParamId::BwdRecurrent,
        ParamId::BwdBias,
        ParamId::AttnWeight,
        ParamId::AttnBias,
        ParamId::AttnContext,
        ParamId::Filters,
        ParamId::FilterBias,
        ParamId::DenseWeight,
        ParamId::DenseBias,
        ParamId::Users,
    ];

    pub fn key(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::Words => "words",
            ParamId::FwdInput => "lstm_fwd.input",
            ParamId::FwdRecurrent => "lstm_fwd.recurrent",
            ParamId::FwdBias => "lstm_fwd.bias",
            ParamId::BwdInput => "lstm_bwd.input",
            ParamId::BwdRecurrent => "lstm_bwd.recurrent",
            ParamId::BwdBias => "lstm_bwd.bias",
            ParamId::AttnWeight => "attention.weight",
            ParamId::AttnBias => "attention.bias",
            ParamId::AttnContext => "attention.context",
            ParamId::Filters => "conv.filters",
            ParamId::FilterBias => "conv.bias",
            ParamId::DenseWeight => "dense.weight",
            ParamId::DenseBias => "dense.bias",
            ParamId::Users => "users",
        }
    }

    /// Coarse grouping used when reporting gradient checks.
    pub fn group(self) -> &'static str {
        match self {
            ParamId::Words => "word_table",
            ParamId::FwdInput | ParamId::FwdRecurrent | ParamId::FwdBias => "lstm_fwd",
            ParamId::BwdInput | ParamId::BwdRecurrent | ParamId::BwdBias => "lstm_bwd",
            ParamId::AttnWeight | ParamId::AttnBias | ParamId::AttnContext => "attention",
            ParamId::Filters | ParamId::FilterBias => "filters",
            ParamId::DenseWeight | ParamId::DenseBias => "dense",
            ParamId::Users => "user_rows",
        }
    }

    /// Row that is pinned to zero and never trained, if any.
    pub fn frozen_row(self) -> Option<usize> {
        match self {
            ParamId::Words => Some(PAD),
            ParamId::Users => Some(crate::users::NULL_ROW),
            _ => None,
        }
    }
}

/// Weights of one LSTM direction with gates stacked as input, forget,
/// output, candidate along the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

impl LstmParams {
    fn init(input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Self {
            input: Tensor::uniform(&[input_dim, 4 * hidden], INIT_SCALE, rng).with_grad(),
            recurrent: Tensor::uniform(&[hidden, 4 * hidden], INIT_SCALE, rng).with_grad(),
            bias: Tensor::uniform(&[4 * hidden], INIT_SCALE, rng).with_grad(),
        }
    }
}

/// Every trainable tensor except the author table.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub words: Tensor,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub attn_weight: Tensor,
    pub attn_bias: Tensor,
    pub attn_context: Tensor,
    pub filters: Tensor,
    pub filter_bias: Tensor,
    pub dense_weight: Tensor,
    pub dense_bias: Tensor,
}

impl Params {
    pub fn init(config: &ModelConfig, vocab_size: usize, rng: &mut SeededRng) -> Self {
        let (dw, h, d, m) = (config.word_dim, config.hidden, config.user_dim, config.filters);
        let mut words = Tensor::uniform(&[vocab_size, dw], INIT_SCALE, rng);
        words.row_mut(PAD).iter_mut().for_each(|x| *x = 0.0);
        let fwd = LstmParams::init(dw, h, rng);
        let bwd = LstmParams::init(dw, h, rng);
        let two_h = 2 * h;
        Self {
            words: words.with_grad(),
            fwd,
            bwd,
            attn_weight: Tensor::uniform(&[two_h, two_h], INIT_SCALE, rng).with_grad(),
            attn_bias: Tensor::uniform(&[two_h], INIT_SCALE, rng).with_grad(),
            attn_context: Tensor::uniform(&[two_h], INIT_SCALE, rng).with_grad(),
            filters: Tensor::uniform(&[m, 3, 3, 2 * d], INIT_SCALE, rng).with_grad(),
            filter_bias: Tensor::uniform(&[m], INIT_SCALE, rng).with_grad(),
            dense_weight: Tensor::uniform(&[m], INIT_SCALE, rng).with_grad(),
            dense_bias: Tensor::uniform(&[1], INIT_SCALE, rng).with_grad(),
        }
    }

    /// Panics on [`ParamId::Users`], which lives in the author table.
    pub fn get(&self, id: ParamId) -> &Tensor {
        match id {
            ParamId::Words => &self.words,
            ParamId::FwdInput => &self.fwd.input,
            ParamId::FwdRecurrent => &self.fwd.recurrent,
            ParamId::FwdBias => &self.fwd.bias,
            ParamId::BwdInput => &self.bwd.input,
            ParamId::BwdRecurrent => &self.bwd.recurrent,
            ParamId::BwdBias => &self.bwd.bias,
            ParamId::AttnWeight => &self.attn_weight,
            ParamId::AttnBias => &self.attn_bias,
            ParamId::AttnContext => &self.attn_context,
            ParamId::Filters => &self.filters,
            ParamId::FilterBias => &self.filter_bias,
            ParamId::DenseWeight => &self.dense_weight,
            ParamId::DenseBias => &self.dense_bias,
            ParamId::Users => panic!("user rows are stored in the UserTable"),
        }
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        match id {
            ParamId::Words => &mut self.words,
            ParamId::FwdInput => &mut self.fwd.input,
            ParamId::FwdRecurrent => &mut self.fwd.recurrent,
            ParamId::FwdBias => &mut self.fwd.bias,
            ParamId::BwdInput => &mut self.bwd.input,
            ParamId::BwdRecurrent => &mut self.bwd.recurrent,
            ParamId::BwdBias => &mut self.bwd.bias,
            ParamId::AttnWeight => &mut self.attn_weight,
            ParamId::AttnBias => &mut self.attn_bias,
            ParamId::AttnContext => &mut self.attn_context,
            ParamId::Filters => &mut self.filters,
            ParamId::FilterBias => &mut self.filter_bias,
            ParamId::DenseWeight => &mut self.dense_weight,
            ParamId::DenseBias => &mut self.dense_bias,
            ParamId::Users => panic!("user rows are stored in the UserTable"),
        }
    }
}
