//! Author embeddings: a trainable table with a frozen all-zero row for
//! unknown or padded authors, optional pretraining from author histories,
//! and a binary file format.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use rand::distributions::WeightedIndex;
use serde::{Deserialize, Serialize};

use crate::binfmt::{self, Decoder};
use crate::data::{PAD, UNK};
use crate::error::{Error, Result};
use crate::tensor::{kernels, AdadeltaState, SeededRng, Tensor, INIT_SCALE};

/// Row reserved for unknown and padding authors. Always zero.
pub const NULL_ROW: usize = 0;

const MAGIC: &[u8; 8] = b"USRTBL01";

#[derive(Debug, Clone, PartialEq)]
pub struct UserTable {
    index: HashMap<String, usize>,
    ids: Vec<String>,
    matrix: Tensor,
    pub trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    d: usize,
    user_ids: Vec<String>,
}

impl UserTable {
    /// Rows `1..=N` uniform in `[-0.08, 0.08]`, row 0 zero.
    pub fn init<S: AsRef<str>>(user_ids: &[S], dim: usize, rng: &mut SeededRng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("user embedding width must be positive".into()));
        }
        let mut matrix = Tensor::uniform(&[user_ids.len() + 1, dim], INIT_SCALE, rng);
        matrix.row_mut(NULL_ROW).iter_mut().for_each(|x| *x = 0.0);
        Self::from_parts(user_ids.iter().map(|s| s.as_ref().to_string()).collect(), matrix)
    }

    pub(crate) fn from_parts(ids: Vec<String>, matrix: Tensor) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i + 1).is_some() {
                return Err(Error::Data(format!("duplicate user_id {id}")));
            }
        }
        Ok(Self {
            index,
            ids,
            matrix: matrix.with_grad(),
            trainable: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    /// Number of known users (excluding the null row).
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Tensor {
        &mut self.matrix
    }

    /// Row index for `user_id`; unknown ids resolve to [`NULL_ROW`].
    pub fn row_of(&self, user_id: &str) -> usize {
        self.index.get(user_id).copied().unwrap_or(NULL_ROW)
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.index.contains_key(user_id)
    }

    /// Embedding for an author; `None` and unknown ids give the zero row.
    pub fn lookup(&self, user_id: Option<&str>) -> &[f64] {
        self.matrix.row(user_id.map_or(NULL_ROW, |u| self.row_of(u)))
    }

    /// Copies rows of `other` into this table for every shared user id.
    /// Returns the number of rows copied.
    pub fn copy_rows_from(&mut self, other: &UserTable) -> Result<usize> {
        if other.dim() != self.dim() {
            return Err(Error::Config(format!(
                "user table width {} does not match expected {}",
                other.dim(),
                self.dim()
            )));
        }
        let mut copied = 0;
        for (i, id) in other.ids.iter().enumerate() {
            if let Some(&row) = self.index.get(id) {
                self.matrix.row_mut(row).copy_from_slice(other.matrix.row(i + 1));
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            n: self.ids.len() + 1,
            d: self.dim(),
            user_ids: self.ids.clone(),
        };
        binfmt::encode(MAGIC, &header, &[self.matrix.data()])
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut dec = Decoder::open(bytes, path, MAGIC, "user-table")?;
        let header: Header = dec.header()?;
        if header.d == 0 || header.n != header.user_ids.len() + 1 {
            return Err(dec.err(format!(
                "inconsistent header: n={}, d={}, {} user ids",
                header.n,
                header.d,
                header.user_ids.len()
            )));
        }
        let data = dec.floats(header.n * header.d)?;
        dec.finish()?;
        let matrix = Tensor::new(&[header.n, header.d], data)?;
        if matrix.row(NULL_ROW).iter().any(|&x| x != 0.0) {
            return Err(Error::format(path, "null row is not zero"));
        }
        Self::from_parts(header.user_ids, matrix)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes()?).map_err(Error::at(path.as_ref()))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(Error::at(path.as_ref()))?;
        Self::from_bytes(&bytes, path.as_ref())
    }
}

/// An author's compiled posts as token-index lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: String,
    pub documents: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub negatives: usize,
    pub rho: f64,
    pub eps: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            negatives: 5,
            rho: crate::tensor::DEFAULT_RHO,
            eps: crate::tensor::DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainReport {
    /// Mean per-pair loss of each epoch, evaluated before that epoch's update.
    pub epoch_losses: Vec<f64>,
    pub skipped_users: Vec<String>,
}

/// Negative-sampling loss of one (user, word) pair:
/// `-ln σ(u·v) - Σ ln σ(-u·n)`.
pub fn pair_loss(user: &[f64], word: &[f64], negatives: &[&[f64]]) -> f64 {
    let pos = -ln_sigmoid(kernels::dot(user, word));
    let neg: f64 = negatives
        .iter()
        .map(|n| -ln_sigmoid(-kernels::dot(user, n)))
        .sum();
    pos + neg
}

fn ln_sigmoid(x: f64) -> f64 {
    // ln σ(x) = -ln(1 + e^{-x}), written to avoid overflow for large |x|
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Fits user rows (and co-trains `word_vecs`) so that each user's vector
/// predicts the words of their history against unigram^0.75 negatives.
/// Each epoch takes one full-batch Adadelta step on both tensors.
pub fn pretrain(
    table: &mut UserTable,
    histories: &[UserHistory],
    word_vecs: &mut Tensor,
    cfg: &PretrainConfig,
    rng: &mut SeededRng,
) -> Result<PretrainReport> {
    let dim = table.dim();
    if word_vecs.shape().len() != 2 || word_vecs.shape()[1] != dim {
        return Err(Error::dim("pretrain", word_vecs.shape(), table.matrix.shape()));
    }
    let vocab_size = word_vecs.shape()[0];
    let mut report = PretrainReport::default();

    // (row, word) pairs plus unigram counts for the noise distribution
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut counts = vec![0.0f64; vocab_size];
    for h in histories {
        let row = table
            .index
            .get(&h.user_id)
            .copied()
            .ok_or_else(|| Error::Data(format!("user {} is not in the table", h.user_id)))?;
        let words: Vec<usize> = h
            .documents
            .iter()
            .flatten()
            .copied()
            .filter(|&w| w != PAD && w != UNK)
            .collect();
        if words.is_empty() {
            warn!("user {} has an empty history; skipped", h.user_id);
            report.skipped_users.push(h.user_id.clone());
            continue;
        }
        for w in words {
            if w >= vocab_size {
                return Err(Error::Data(format!(
                    "word index {w} outside word table of {vocab_size} rows"
                )));
            }
            counts[w] += 1.0;
            pairs.push((row, w));
        }
    }
    if pairs.is_empty() || cfg.epochs == 0 {
        return Ok(report);
    }
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75)))
        .map_err(|e| Error::Data(format!("noise distribution: {e}")))?;
    let distinct_words = counts.iter().filter(|&&c| c > 0.0).count();

    let mut user_state = AdadeltaState::for_param(&table.matrix, cfg.rho, cfg.eps)?;
    let mut word_state = AdadeltaState::for_param(word_vecs, cfg.rho, cfg.eps)?;
    let scale = 1.0 / pairs.len() as f64;
    let mut negs = Vec::with_capacity(cfg.negatives);

    for _ in 0..cfg.epochs {
        let mut g_user = vec![0.0; table.matrix.len()];
        let mut g_word = vec![0.0; word_vecs.len()];
        let mut total = 0.0;
        for &(row, w) in &pairs {
            negs.clear();
            for _ in 0..cfg.negatives {
                if distinct_words < 2 {
                    break;
                }
                // redraw collisions with the positive word
                let mut n = rng.weighted(&noise);
                while n == w {
                    n = rng.weighted(&noise);
                }
                negs.push(n);
            }
            let u = table.matrix.row(row);
            let v = word_vecs.row(w);
            let neg_rows: Vec<&[f64]> = negs.iter().map(|&n| word_vecs.row(n)).collect();
            total += pair_loss(u, v, &neg_rows);

            let pos_coef = kernels::sigmoid(kernels::dot(u, v)) - 1.0;
            let gu = &mut g_user[row * dim..(row + 1) * dim];
            for j in 0..dim {
                gu[j] += scale * pos_coef * v[j];
                g_word[w * dim + j] += scale * pos_coef * u[j];
            }
            for &n in &negs {
                let vn = word_vecs.row(n);
                let coef = kernels::sigmoid(kernels::dot(u, vn));
                for j in 0..dim {
                    gu[j] += scale * coef * vn[j];
                    g_word[n * dim + j] += scale * coef * u[j];
                }
            }
        }
        report.epoch_losses.push(total * scale);
        g_user[NULL_ROW * dim..(NULL_ROW + 1) * dim]
            .iter_mut()
            .for_each(|g| *g = 0.0);
        table.matrix.accumulate_grad(&g_user)?;
        word_vecs.accumulate_grad(&g_word)?;
        user_state.step(&mut table.matrix)?;
        word_state.step(word_vecs)?;
    }
    Ok(report)
}
