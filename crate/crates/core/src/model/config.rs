use serde::{Deserialize, Serialize};

use crate::data::MIN_ROWS;
use crate::error::{Error, Result};
use crate::tensor::{DEFAULT_EPS, DEFAULT_RHO};

/// Which parts of the architecture to switch off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Replace the BiLSTM + attention interval vector by the masked mean of
    /// the interval's word embeddings.
    pub no_attention: bool,
    /// Zero the author-embedding half of every interval matrix.
    pub no_user_context: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Intervals per event (k).
    pub intervals: usize,
    /// Word slots per interval (p).
    pub interval_len: usize,
    /// Floor on tweet rows per interval matrix (q).
    pub min_rows: usize,
    pub word_dim: usize,
    /// LSTM hidden size per direction (H).
    pub hidden: usize,
    /// Interval-vector and author-embedding width (D); always `2 * hidden`.
    pub user_dim: usize,
    /// Convolution filters (M).
    pub filters: usize,
    pub dropout: f64,
    pub rho: f64,
    pub eps: f64,
    pub ablation: Ablation,
    pub seed: u64,
    pub max_epochs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            intervals: 50,
            interval_len: 2500,
            min_rows: MIN_ROWS,
            word_dim: 100,
            hidden: 50,
            user_dim: 100,
            filters: 32,
            dropout: 0.3,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            ablation: Ablation::default(),
            seed: 0,
            max_epochs: 250,
        }
    }
}

impl ModelConfig {
    /// Desk-scale sizes for quick experiments and tests.
    pub fn tiny() -> Self {
        Self {
            intervals: 5,
            interval_len: 60,
            word_dim: 16,
            hidden: 8,
            user_dim: 16,
            filters: 8,
            ..Self::default()
        }
    }

    /// Sets the hidden size and the widths derived from it.
    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self.user_dim = 2 * hidden;
        self
    }

    /// Width of each interval-matrix row: interval vector plus author.
    pub fn cube_depth(&self) -> usize {
        2 * self.user_dim
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("intervals", self.intervals),
            ("interval_len", self.interval_len),
            ("word_dim", self.word_dim),
            ("hidden", self.hidden),
            ("user_dim", self.user_dim),
            ("filters", self.filters),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.user_dim != 2 * self.hidden {
            return Err(Error::Config(format!(
                "user_dim ({}) must equal 2 * hidden ({})",
                self.user_dim,
                2 * self.hidden
            )));
        }
        if self.intervals < 3 {
            return Err(Error::Config(format!(
                "need at least 3 intervals for a 3×3 convolution, got {}",
                self.intervals
            )));
        }
        if self.min_rows < MIN_ROWS {
            return Err(Error::Config(format!("min_rows must be at least {MIN_ROWS}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) || !(self.eps > 0.0) {
            return Err(Error::Config(format!(
                "optimizer constants out of range: rho={}, eps={}",
                self.rho, self.eps
            )));
        }
        if self.ablation.no_attention && self.word_dim != self.user_dim {
            return Err(Error::Config(format!(
                "the no-attention variant needs word_dim ({}) equal to user_dim ({})",
                self.word_dim, self.user_dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!((c.intervals, c.interval_len, c.hidden, c.user_dim), (50, 2500, 50, 100));
        assert_eq!((c.word_dim, c.filters, c.dropout), (100, 32, 0.3));
        ModelConfig::tiny().validate().unwrap();
    }

    #[test]
    fn hidden_drives_user_dim() {
        let c = ModelConfig::default().with_hidden(75);
        assert_eq!(c.user_dim, 150);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::tiny();
        c.user_dim = 15;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.intervals = 2;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny().with_hidden(4);
        c.ablation.no_attention = true;
        assert!(c.validate().is_err());
    }
}
