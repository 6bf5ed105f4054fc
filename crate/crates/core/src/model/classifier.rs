//! Convolutional decision head over the event cube.

use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tape, Var};

/// One global maximum per feature map, giving the length-M vector `c`.
pub fn pool_and_concat(tape: &mut Tape, maps: Var) -> Result<Var> {
    tape.global_max_pool(maps)
}

/// `σ(w · dropout(c) + b)`.
pub fn classify(
    tape: &mut Tape,
    pooled: Var,
    weight: Var,
    bias: Var,
    dropout: f64,
    rng: Option<&mut SeededRng>,
) -> Result<Var> {
    if tape.shape(pooled) != tape.shape(weight) {
        return Err(Error::dim("classify", tape.shape(pooled), tape.shape(weight)));
    }
    let dropped = tape.dropout(pooled, dropout, rng)?;
    let logit = tape.dot(weight, dropped)?;
    let shifted = tape.add(logit, bias)?;
    Ok(tape.sigmoid(shifted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn prob(c: Vec<f64>, w: Vec<f64>, b: f64) -> f64 {
        let mut tape = Tape::new();
        let c = tape.leaf(Tensor::vector(c));
        let w = tape.leaf(Tensor::vector(w));
        let b = tape.leaf(Tensor::scalar(b));
        let y = classify(&mut tape, c, w, b, 0.3, None).unwrap();
        tape.value(y).data()[0]
    }

    #[test]
    fn zero_weights_give_one_half() {
        assert_eq!(prob(vec![3.0, -7.0, 1e6], vec![0.0; 3], 0.0), 0.5);
    }

    #[test]
    fn logit_ln3_gives_three_quarters() {
        let y = prob(vec![1.0, 2.0], vec![3f64.ln() / 2.0, 0.0], 3f64.ln() / 2.0);
        assert!((y - 0.75).abs() < 1e-15);
    }

    #[test]
    fn output_is_a_probability() {
        for &(c, w) in &[(30.0, 1.0), (-30.0, 1.0), (0.5, -0.5)] {
            let y = prob(vec![c], vec![w], 0.0);
            assert!(y > 0.0 && y < 1.0, "{y}");
        }
    }

    #[test]
    fn pooling_keeps_raw_maxima() {
        let mut tape = Tape::new();
        let maps = tape.leaf(Tensor::new(&[2, 1, 2], vec![4.0, 4.0, -1.0, -1.0]).unwrap());
        let c = pool_and_concat(&mut tape, maps).unwrap();
        assert_eq!(tape.value(c).data(), &[4.0, -1.0]);
        let zeros = tape.leaf(Tensor::zeros(&[3, 2, 2]));
        let c = pool_and_concat(&mut tape, zeros).unwrap();
        assert_eq!(tape.value(c).data(), &[0.0; 3]);
    }
}
