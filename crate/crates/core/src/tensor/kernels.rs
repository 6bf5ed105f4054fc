//! Slice-level numeric kernels shared by the tape's forward and backward
//! passes. Layouts are row-major throughout.

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[t * n..(t + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Softmax restricted to `mask`; masked positions are exactly zero and an
/// all-false mask yields the zero vector.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; logits.len()];
    if max == f64::NEG_INFINITY {
        return out;
    }
    let mut total = 0.0;
    for ((o, &x), &m) in out.iter_mut().zip(logits).zip(mask) {
        if m {
            *o = (x - max).exp();
            total += *o;
        }
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

/// Dimensions of a valid 3×3 convolution over a `rows × cols × depth` cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
    pub filters: usize,
}

impl ConvDims {
    pub fn new(cube: &[usize], filters: &[usize], biases: &[usize]) -> Result<Self> {
        if cube.len() != 3 || filters.len() != 4 || biases.len() != 1 {
            return Err(Error::Shape(format!(
                "conv_valid expects cube A×B×C, filters M×3×3×C and biases M; got {cube:?}, {filters:?}, {biases:?}"
            )));
        }
        if filters[1] != 3 || filters[2] != 3 {
            return Err(Error::Shape(format!("filters must be 3×3 spatially, got {filters:?}")));
        }
        if filters[3] != cube[2] {
            return Err(Error::dim("conv_valid", cube, filters));
        }
        if biases[0] != filters[0] {
            return Err(Error::dim("conv_valid", filters, biases));
        }
        if cube[0] < 3 || cube[1] < 3 {
            return Err(Error::Shape(format!(
                "conv_valid needs at least 3×3 spatial extent, got {cube:?}"
            )));
        }
        Ok(Self {
            rows: cube[0],
            cols: cube[1],
            depth: cube[2],
            filters: filters[0],
        })
    }

    pub fn out_rows(&self) -> usize {
        self.rows - 2
    }

    pub fn out_cols(&self) -> usize {
        self.cols - 2
    }

    pub fn out_shape(&self) -> [usize; 3] {
        [self.filters, self.out_rows(), self.out_cols()]
    }
}

/// ReLU(filter · sub-cube + bias) for every filter and valid position.
pub fn conv_valid(cube: &[f64], filters: &[f64], biases: &[f64], d: ConvDims) -> Vec<f64> {
    let (oh, ow) = (d.out_rows(), d.out_cols());
    let span = 3 * d.depth;
    let fsize = 9 * d.depth;
    let mut out = vec![0.0; d.filters * oh * ow];
    for m in 0..d.filters {
        let filt = &filters[m * fsize..(m + 1) * fsize];
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = biases[m];
                for di in 0..3 {
                    let c0 = ((i + di) * d.cols + j) * d.depth;
                    let f0 = di * span;
                    acc += dot(&cube[c0..c0 + span], &filt[f0..f0 + span]);
                }
                out[(m * oh + i) * ow + j] = acc.max(0.0);
            }
        }
    }
    out
}

/// Gradients of [`conv_valid`] given its output and the output gradient.
/// Returns `(d_cube, d_filters, d_biases)`.
pub fn conv_valid_backward(
    cube: &[f64],
    filters: &[f64],
    out: &[f64],
    grad_out: &[f64],
    d: ConvDims,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (oh, ow) = (d.out_rows(), d.out_cols());
    let span = 3 * d.depth;
    let fsize = 9 * d.depth;
    let mut g_cube = vec![0.0; cube.len()];
    let mut g_filt = vec![0.0; filters.len()];
    let mut g_bias = vec![0.0; d.filters];
    for m in 0..d.filters {
        for i in 0..oh {
            for j in 0..ow {
                let o = (m * oh + i) * ow + j;
                if out[o] <= 0.0 || grad_out[o] == 0.0 {
                    continue;
                }
                let g = grad_out[o];
                g_bias[m] += g;
                for di in 0..3 {
                    let c0 = ((i + di) * d.cols + j) * d.depth;
                    let f0 = m * fsize + di * span;
                    for t in 0..span {
                        g_filt[f0 + t] += g * cube[c0 + t];
                        g_cube[c0 + t] += g * filters[f0 + t];
                    }
                }
            }
        }
    }
    (g_cube, g_filt, g_bias)
}

/// Per-map maximum over `maps[count × cells]` with the first row-major
/// argmax for ties. Returns `(values, argmax)`.
pub fn global_max_pool(maps: &[f64], count: usize, cells: usize) -> (Vec<f64>, Vec<usize>) {
    let mut values = Vec::with_capacity(count);
    let mut arg = Vec::with_capacity(count);
    for m in 0..count {
        let map = &maps[m * cells..(m + 1) * cells];
        let mut best = 0;
        for (idx, &v) in map.iter().enumerate() {
            if v > map[best] {
                best = idx;
            }
        }
        values.push(map[best]);
        arg.push(best);
    }
    (values, arg)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
