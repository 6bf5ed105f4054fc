//! Interval representation: word lookup, bidirectional LSTM, word-level
//! attention and the interval matrix that pairs the interval vector with
//! each tweet's author embedding.

use crate::data::{Interval, PAD};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use crate::users::{UserTable, NULL_ROW};

use super::ParamId;

/// Tape handles for one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub input: Var,
    pub recurrent: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub weight: Var,
    pub bias: Var,
    pub context: Var,
}

/// `p × Dw` matrix of the interval's word embeddings. PAD rows are zero
/// and never receive gradient.
pub fn embed_words(tape: &mut Tape, words: &Tensor, interval: &Interval) -> Result<Var> {
    let vocab = words.shape()[0];
    if let Some(&bad) = interval.word_indices.iter().find(|&&w| w >= vocab) {
        return Err(Error::Data(format!(
            "word index {bad} out of range for vocabulary of {vocab}"
        )));
    }
    tape.gather(ParamId::Words.key(), words, &interval.word_indices, Some(PAD))
}

/// Runs one LSTM direction over the rows of `x[p×Dw]` from zero state and
/// returns the hidden state at every position, in position order.
pub fn lstm_pass(tape: &mut Tape, x: Var, lstm: &LstmVars, reverse: bool) -> Result<Vec<Var>> {
    let steps = tape.shape(x)[0];
    let hidden = tape.shape(lstm.recurrent)[0];
    let projected = tape.matmul(x, lstm.input)?;
    let pre_all = tape.add_row(projected, lstm.bias)?;

    let mut out = vec![None; steps];
    let (mut h, mut c): (Option<Var>, Option<Var>) = (None, None);
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let row = tape.row(pre_all, t)?;
        let pre = match h {
            Some(h) => {
                let rec = tape.matmul(h, lstm.recurrent)?;
                tape.add(row, rec)?
            }
            None => row,
        };
        let hc = tape.lstm_cell(pre, c)?;
        let h_t = tape.slice(hc, 0, &[hidden])?;
        c = Some(tape.slice(hc, hidden, &[hidden])?);
        h = Some(h_t);
        out[t] = Some(h_t);
    }
    Ok(out.into_iter().map(|v| v.expect("every step visited")).collect())
}

/// `[→h_p ⊕ ←h_p]` for every position: a `p × 2H` matrix.
pub fn bilstm_encode(tape: &mut Tape, x: Var, fwd: &LstmVars, bwd: &LstmVars) -> Result<Var> {
    if tape.shape(x).len() != 2 {
        return Err(Error::Shape(format!(
            "bilstm input must be p×Dw, got {:?}",
            tape.shape(x)
        )));
    }
    let forward = lstm_pass(tape, x, fwd, false)?;
    let backward = lstm_pass(tape, x, bwd, true)?;
    let forward = tape.stack(&forward)?;
    let backward = tape.stack(&backward)?;
    tape.concat_cols(forward, backward)
}

/// Attention weights over the rows of `h[p×2H]` and their weighted sum.
///
/// Scores are `tanh(h_p W + b) · u` for the trainable context vector `u`,
/// normalized over unmasked positions only.
pub fn word_attention(
    tape: &mut Tape,
    h: Var,
    mask: &[bool],
    attn: &AttentionVars,
) -> Result<(Var, Var)> {
    let shape = tape.shape(h).to_vec();
    if shape.len() != 2 || shape[0] != mask.len() {
        return Err(Error::dim("word_attention", &shape, &[mask.len()]));
    }
    let projected = tape.matmul(h, attn.weight)?;
    let shifted = tape.add_row(projected, attn.bias)?;
    let u = tape.tanh(shifted);
    let scores = tape.matmul(u, attn.context)?;
    let alpha = tape.masked_softmax(scores, mask)?;
    let vector = tape.matmul(alpha, h)?;
    Ok((alpha, vector))
}

/// Encodes an interval's real tokens only: the bidirectional pass starts
/// and ends at the last real word, so trailing padding never feeds the
/// backward direction. Returns attention over the real prefix and the
/// interval vector. The interval must contain at least one real token.
pub fn encode_interval(
    tape: &mut Tape,
    words: &Tensor,
    interval: &Interval,
    fwd: &LstmVars,
    bwd: &LstmVars,
    attn: &AttentionVars,
) -> Result<(Var, Var)> {
    let real = interval.real_tokens();
    if real == 0 {
        return Err(Error::Contract("encode_interval needs at least one real token".into()));
    }
    let prefix = Interval {
        word_indices: interval.word_indices[..real].to_vec(),
        word_mask: vec![true; real],
        tweet_user_ids: Vec::new(),
    };
    let x = embed_words(tape, words, &prefix)?;
    let h = bilstm_encode(tape, x, fwd, bwd)?;
    word_attention(tape, h, &prefix.word_mask, attn)
}

/// `q × 2D` interval matrix: row `x` is the interval vector followed by the
/// embedding of tweet `x`'s author. Padding rows are zero on both halves.
/// With `use_context` off the author half is zero throughout.
pub fn build_interval_matrix(
    tape: &mut Tape,
    interval_vec: Var,
    interval: &Interval,
    users: &UserTable,
    use_context: bool,
) -> Result<Var> {
    let width = tape.shape(interval_vec).to_vec();
    if width != [users.dim()] {
        return Err(Error::Config(format!(
            "interval vector width {width:?} does not match user embedding width {}",
            users.dim()
        )));
    }
    let rows = interval.tweet_user_ids.len();
    let left = tape.repeat_rows(interval_vec, rows, interval.real_tweets())?;
    let right = if use_context {
        let idx: Vec<usize> = interval
            .tweet_user_ids
            .iter()
            .map(|u| u.as_deref().map_or(NULL_ROW, |u| users.row_of(u)))
            .collect();
        tape.gather(ParamId::Users.key(), users.matrix(), &idx, Some(NULL_ROW))?
    } else {
        tape.leaf(Tensor::zeros(&[rows, users.dim()]))
    };
    tape.concat_cols(left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    fn scalar_lstm(tape: &mut Tape) -> LstmVars {
        // one unit: W, R are 1×4 all ones, b zero
        LstmVars {
            input: tape.leaf(Tensor::full(&[1, 4], 1.0)),
            recurrent: tape.leaf(Tensor::full(&[1, 4], 1.0)),
            bias: tape.leaf(Tensor::zeros(&[4])),
        }
    }

    #[test]
    fn scalar_lstm_single_step() {
        let mut tape = Tape::new();
        let lstm = scalar_lstm(&mut tape);
        let x = tape.leaf(Tensor::full(&[1, 1], 1.0));
        let hs = lstm_pass(&mut tape, x, &lstm, false).unwrap();
        // σ(1)·tanh(σ(1)·tanh(1)), evaluated with mpmath
        let h = tape.value(hs[0]).data()[0];
        assert!((h - 0.3696064).abs() < 1e-6, "{h}");
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let mut tape = Tape::new();
        let zero = |tape: &mut Tape| LstmVars {
            input: tape.leaf(Tensor::zeros(&[3, 8])),
            recurrent: tape.leaf(Tensor::zeros(&[2, 8])),
            bias: tape.leaf(Tensor::zeros(&[8])),
        };
        let (f, b) = (zero(&mut tape), zero(&mut tape));
        let x = tape.leaf(Tensor::uniform(&[5, 3], 1.0, &mut SeededRng::new(1)));
        let h = bilstm_encode(&mut tape, x, &f, &b).unwrap();
        assert_eq!(tape.shape(h), &[5, 4]);
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
    }

    fn attention_vars(tape: &mut Tape, dim: usize, context: Vec<f64>) -> AttentionVars {
        let mut eye = Tensor::zeros(&[dim, dim]);
        for i in 0..dim {
            eye.data_mut()[i * dim + i] = 1.0;
        }
        AttentionVars {
            weight: tape.leaf(eye),
            bias: tape.leaf(Tensor::zeros(&[dim])),
            context: tape.leaf(Tensor::vector(context)),
        }
    }

    #[test]
    fn single_word_takes_all_attention() {
        let mut tape = Tape::new();
        let attn = attention_vars(&mut tape, 2, vec![0.3, -0.4]);
        let h = tape.leaf(Tensor::new(&[1, 2], vec![0.5, 0.7]).unwrap());
        let (alpha, v) = word_attention(&mut tape, h, &[true], &attn).unwrap();
        assert_eq!(tape.value(alpha).data(), &[1.0]);
        assert_eq!(tape.value(v).data(), &[0.5, 0.7]);
    }

    #[test]
    fn identical_rows_get_uniform_weights() {
        let mut tape = Tape::new();
        let attn = attention_vars(&mut tape, 2, vec![1.3, 0.2]);
        let h = tape.leaf(Tensor::new(&[4, 2], [0.1, 0.9].repeat(4)).unwrap());
        let (alpha, _) = word_attention(&mut tape, h, &[true, true, true, false], &attn).unwrap();
        let a = tape.value(alpha).data();
        for w in &a[..3] {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(a[3], 0.0);
    }

    #[test]
    fn chosen_context_gives_three_to_one_split() {
        // rows e1, e2 with W = I, b = 0: scores are u_w · tanh(e_i).
        // u_w = (ln 3 / tanh 1) e1 makes the scores [ln 3, 0].
        let mut tape = Tape::new();
        let ctx = 3f64.ln() / 1f64.tanh();
        let attn = attention_vars(&mut tape, 2, vec![ctx, 0.0]);
        let h = tape.leaf(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let (alpha, v) = word_attention(&mut tape, h, &[true, true], &attn).unwrap();
        let a = tape.value(alpha).data();
        assert!((a[0] - 0.75).abs() < 1e-12 && (a[1] - 0.25).abs() < 1e-12);
        let v = tape.value(v).data();
        assert!((v[0] - 0.75).abs() < 1e-12 && (v[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn all_padding_gives_zero_vector() {
        let mut tape = Tape::new();
        let attn = attention_vars(&mut tape, 2, vec![0.5, 0.5]);
        let h = tape.leaf(Tensor::full(&[3, 2], 0.4));
        let (alpha, v) = word_attention(&mut tape, h, &[false; 3], &attn).unwrap();
        assert!(tape.value(alpha).data().iter().all(|&x| x == 0.0));
        assert!(tape.value(v).data().iter().all(|&x| x == 0.0));
    }

    fn interval(authors: &[Option<&str>]) -> Interval {
        Interval {
            word_indices: vec![2, 0],
            word_mask: vec![true, false],
            tweet_user_ids: authors.iter().map(|a| a.map(String::from)).collect(),
        }
    }

    #[test]
    fn interval_matrix_layout() {
        let users = UserTable::init(&["a", "b"], 2, &mut SeededRng::new(4)).unwrap();
        let mut tape = Tape::new();
        let ik = tape.leaf(Tensor::vector(vec![0.5, -0.5]));
        let iv = interval(&[Some("a"), Some("b"), None]);
        let m = build_interval_matrix(&mut tape, ik, &iv, &users, true).unwrap();
        assert_eq!(tape.shape(m), &[3, 4]);
        let d = tape.value(m).data();
        let (ua, ub) = (users.lookup(Some("a")), users.lookup(Some("b")));
        assert_eq!(&d[0..4], &[0.5, -0.5, ua[0], ua[1]]);
        assert_eq!(&d[4..8], &[0.5, -0.5, ub[0], ub[1]]);
        assert_eq!(&d[8..12], &[0.0; 4]);
    }

    #[test]
    fn shared_author_rows_share_one_gradient() {
        let users = UserTable::init(&["a"], 2, &mut SeededRng::new(4)).unwrap();
        let mut tape = Tape::new();
        let ik = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let iv = interval(&[Some("a"), Some("a"), Some("a")]);
        let m = build_interval_matrix(&mut tape, ik, &iv, &users, true).unwrap();
        let s = tape.sum(m);
        let g = tape.backward(s).unwrap();
        let rows = g.param_rows(ParamId::Users.key()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[&1], vec![3.0, 3.0]);
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let users = UserTable::init(&["a"], 3, &mut SeededRng::new(4)).unwrap();
        let mut tape = Tape::new();
        let ik = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let r = build_interval_matrix(&mut tape, ik, &interval(&[None; 3]), &users, true);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn embedding_gradient_lands_on_looked_up_rows() {
        let words = Tensor::uniform(&[5, 3], 0.5, &mut SeededRng::new(2));
        let iv = Interval {
            word_indices: vec![4, 2, 2, 0],
            word_mask: vec![true, true, true, false],
            tweet_user_ids: vec![None; 3],
        };
        let mut tape = Tape::new();
        let x = embed_words(&mut tape, &words, &iv).unwrap();
        assert_eq!(tape.value(x).row(3), &[0.0; 3]);
        assert_eq!(tape.value(x).row(1), tape.value(x).row(2));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        let rows = g.param_rows(ParamId::Words.key()).unwrap();
        assert_eq!(rows.keys().copied().collect::<Vec<_>>(), [2, 4]);
        assert_eq!(rows[&2], vec![2.0; 3]);
        assert_eq!(rows[&4], vec![1.0; 3]);
    }

    #[test]
    fn out_of_range_word_is_rejected() {
        let words = Tensor::zeros(&[3, 2]);
        let iv = Interval {
            word_indices: vec![7],
            word_mask: vec![true],
            tweet_user_ids: vec![None; 3],
        };
        assert!(embed_words(&mut Tape::new(), &words, &iv).is_err());
    }
}
