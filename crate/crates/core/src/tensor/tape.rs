use std::collections::BTreeMap;

use super::kernels::{self, ConvDims};
use super::{SeededRng, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => kernels::sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    Gather {
        key: usize,
        rows: Vec<usize>,
        frozen: Option<usize>,
    },
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Slice {
        src: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    ConcatCols {
        a: Var,
        b: Var,
        rows: usize,
        left: usize,
        right: usize,
    },
    RepeatRows {
        src: Var,
        filled: usize,
    },
    MaskedSoftmax {
        src: Var,
        mask: Vec<bool>,
    },
    MaskedMeanRows {
        src: Var,
        mask: Vec<bool>,
    },
    Dot(Var, Var),
    Sum(Var),
    LstmCell {
        pre: Var,
        prev_cell: Option<Var>,
    },
    Conv {
        cube: Var,
        filters: Var,
        biases: Var,
        dims: ConvDims,
    },
    MaxPool {
        src: Var,
        argmax: Vec<usize>,
        cells: usize,
    },
    Dropout {
        src: Var,
        scale: Vec<f64>,
    },
    Bce {
        prob: Var,
        target: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation in execution order so that
/// [`Tape::backward`] can replay it in reverse.
///
/// Parameters enter the tape by copy, tagged with a caller-chosen key; the
/// gradients that reach them are returned keyed the same way.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    corrupt_conv_backward: bool,
}

/// Probability clamp applied inside the binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Scales the filter gradient of every convolution by 1.5. Only exists so
    /// gradient checking can be shown to catch a broken backward rule.
    #[doc(hidden)]
    pub fn corrupt_conv_backward(&mut self) {
        self.corrupt_conv_backward = true;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn push(&mut self, shape: &[usize], data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let value = Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; gradients reaching it are reported but not routed
    /// to any parameter.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Tensor { grad: None, ..t },
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, key: usize, t: &Tensor) -> Var {
        self.push(t.shape(), t.data().to_vec(), Op::Param(key))
    }

    /// Selects rows of a 2-D parameter table. Repeated indices share the
    /// same gradient row; `frozen` names a row that reads as zero and never
    /// receives gradient.
    pub fn gather(
        &mut self,
        key: usize,
        table: &Tensor,
        rows: &[usize],
        frozen: Option<usize>,
    ) -> Result<Var> {
        let shape = table.shape();
        if shape.len() != 2 {
            return Err(Error::Shape(format!("gather needs a matrix, got {shape:?}")));
        }
        if rows.is_empty() {
            return Err(Error::Shape("gather with no rows".into()));
        }
        let cols = shape[1];
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= shape[0] {
                return Err(Error::Shape(format!(
                    "row index {r} out of range for table with {} rows",
                    shape[0]
                )));
            }
            if Some(r) == frozen {
                data.extend(std::iter::repeat(0.0).take(cols));
            } else {
                data.extend_from_slice(table.row(r));
            }
        }
        Ok(self.push(
            &[rows.len(), cols],
            data,
            Op::Gather {
                key,
                rows: rows.to_vec(),
                frozen,
            },
        ))
    }

    /// Matrix product. A 1-D left operand is a row vector and a 1-D right
    /// operand a column vector; the matching output axis is dropped.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, a_vec) = match sa.as_slice() {
            [k] => (1, *k, true),
            [m, k] => (*m, *k, false),
            _ => return Err(Error::dim("matmul", &sa, &sb)),
        };
        let (k2, n, b_vec) = match sb.as_slice() {
            [k] => (*k, 1, true),
            [k, n] => (*k, *n, false),
            _ => return Err(Error::dim("matmul", &sa, &sb)),
        };
        if k != k2 || (a_vec && b_vec) {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        let data = kernels::matmul(self.data(a), self.data(b), m, k, n);
        let shape = match (a_vec, b_vec) {
            (true, _) => vec![n],
            (_, true) => vec![m],
            _ => vec![m, n],
        };
        Ok(self.push(&shape, data, Op::MatMul { a, b, m, k, n }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.zip(a, b, |x, y| x + y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(&shape, data, Op::Add(a, b)))
    }

    /// Adds vector `b[n]` to every row of `a[m×n]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(Error::dim("add_row", &sa, &sb));
        }
        let bias = self.data(b);
        let data: Vec<f64> = self
            .data(a)
            .chunks(sa[1])
            .flat_map(|row| row.iter().zip(bias).map(|(x, y)| x + y))
            .collect();
        Ok(self.push(&sa, data, Op::AddRow(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.zip(a, b, |x, y| x * y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(&shape, data, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let data = self.data(a).iter().map(|x| x * s).collect();
        let shape = self.shape(a).to_vec();
        self.push(&shape, data, Op::Scale(a, s))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let data = self.data(a).iter().map(|&x| kind.apply(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(&shape, data, Op::Act(a, kind))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    /// A contiguous run of the row-major data, reshaped to `shape`.
    pub fn slice(&mut self, src: Var, start: usize, shape: &[usize]) -> Result<Var> {
        let len: usize = shape.iter().product();
        let total = self.value(src).len();
        if start + len > total || len == 0 {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) out of range for {total} values",
                start + len
            )));
        }
        let data = self.data(src)[start..start + len].to_vec();
        Ok(self.push(shape, data, Op::Slice { src, start }))
    }

    /// Row `i` of a tensor whose leading axis indexes rows.
    pub fn row(&mut self, src: Var, i: usize) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        if shape.len() < 2 || i >= shape[0] {
            return Err(Error::Shape(format!("row {i} of shape {shape:?}")));
        }
        let width: usize = shape[1..].iter().product();
        self.slice(src, i * width, &shape[1..])
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("stack of zero tensors".into()))?;
        let inner = self.shape(*first).to_vec();
        let mut data = Vec::with_capacity(parts.len() * self.value(*first).len());
        for &p in parts {
            if self.shape(p) != inner.as_slice() {
                return Err(Error::dim("stack", &inner, self.shape(p)));
            }
            data.extend_from_slice(self.data(p));
        }
        let mut shape = vec![parts.len()];
        shape.extend(inner);
        Ok(self.push(&shape, data, Op::Concat(parts.to_vec())))
    }

    /// Joins `a[m×p]` and `b[m×r]` side by side into `[m×(p+r)]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::dim("concat_cols", &sa, &sb));
        }
        let (rows, left, right) = (sa[0], sa[1], sb[1]);
        let mut data = Vec::with_capacity(rows * (left + right));
        for r in 0..rows {
            data.extend_from_slice(&self.data(a)[r * left..(r + 1) * left]);
            data.extend_from_slice(&self.data(b)[r * right..(r + 1) * right]);
        }
        Ok(self.push(
            &[rows, left + right],
            data,
            Op::ConcatCols {
                a,
                b,
                rows,
                left,
                right,
            },
        ))
    }

    /// `rows × n` matrix whose first `filled` rows copy vector `src[n]` and
    /// whose remaining rows are zero.
    pub fn repeat_rows(&mut self, src: Var, rows: usize, filled: usize) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        if shape.len() != 1 || filled > rows || rows == 0 {
            return Err(Error::Shape(format!(
                "repeat_rows({shape:?}, rows={rows}, filled={filled})"
            )));
        }
        let n = shape[0];
        let mut data = vec![0.0; rows * n];
        for r in 0..filled {
            data[r * n..(r + 1) * n].copy_from_slice(self.data(src));
        }
        Ok(self.push(&[rows, n], data, Op::RepeatRows { src, filled }))
    }

    pub fn masked_softmax(&mut self, src: Var, mask: &[bool]) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        if shape.len() != 1 || shape[0] != mask.len() {
            return Err(Error::dim("masked_softmax", &shape, &[mask.len()]));
        }
        let data = kernels::masked_softmax(self.data(src), mask);
        Ok(self.push(
            &shape,
            data,
            Op::MaskedSoftmax {
                src,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Mean of the rows of `src[p×n]` selected by `mask`; zero when none are.
    pub fn masked_mean_rows(&mut self, src: Var, mask: &[bool]) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        if shape.len() != 2 || shape[0] != mask.len() {
            return Err(Error::dim("masked_mean_rows", &shape, &[mask.len()]));
        }
        let n = shape[1];
        let count = mask.iter().filter(|&&m| m).count();
        let mut data = vec![0.0; n];
        if count > 0 {
            for (row, _) in self.data(src).chunks(n).zip(mask).filter(|(_, &m)| m) {
                for (d, x) in data.iter_mut().zip(row) {
                    *d += x;
                }
            }
            data.iter_mut().for_each(|d| *d /= count as f64);
        }
        Ok(self.push(
            &[n],
            data,
            Op::MaskedMeanRows {
                src,
                mask: mask.to_vec(),
            },
        ))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::dim("dot", self.shape(a), self.shape(b)));
        }
        let v = kernels::dot(self.data(a), self.data(b));
        Ok(self.push(&[1], vec![v], Op::Dot(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.data(a).iter().sum();
        self.push(&[1], vec![v], Op::Sum(a))
    }

    /// One LSTM cell update from gate pre-activations `pre[4H]`, ordered
    /// input, forget, output, candidate. Returns `[h ⊕ c]` of length 2H;
    /// a missing previous cell state is zero.
    pub fn lstm_cell(&mut self, pre: Var, prev_cell: Option<Var>) -> Result<Var> {
        let shape = self.shape(pre).to_vec();
        if shape.len() != 1 || shape[0] % 4 != 0 || shape[0] == 0 {
            return Err(Error::Shape(format!(
                "lstm_cell pre-activations must be 1-D with length 4H, got {shape:?}"
            )));
        }
        let h = shape[0] / 4;
        if let Some(c) = prev_cell {
            if self.shape(c) != [h] {
                return Err(Error::dim("lstm_cell", &shape, self.shape(c)));
            }
        }
        let p = self.data(pre);
        let mut out = vec![0.0; 2 * h];
        for j in 0..h {
            let i_g = kernels::sigmoid(p[j]);
            let f_g = kernels::sigmoid(p[h + j]);
            let o_g = kernels::sigmoid(p[2 * h + j]);
            let cand = p[3 * h + j].tanh();
            let c_prev = prev_cell.map_or(0.0, |c| self.data(c)[j]);
            let c = f_g * c_prev + i_g * cand;
            out[j] = o_g * c.tanh();
            out[h + j] = c;
        }
        Ok(self.push(&[2 * h], out, Op::LstmCell { pre, prev_cell }))
    }

    /// Valid (unpadded, stride 1) 3×3 convolution followed by ReLU.
    pub fn conv_valid(&mut self, cube: Var, filters: Var, biases: Var) -> Result<Var> {
        let dims = ConvDims::new(self.shape(cube), self.shape(filters), self.shape(biases))?;
        let data = kernels::conv_valid(
            self.data(cube),
            self.data(filters),
            self.data(biases),
            dims,
        );
        Ok(self.push(
            &dims.out_shape(),
            data,
            Op::Conv {
                cube,
                filters,
                biases,
                dims,
            },
        ))
    }

    /// Maximum of each map of `src[M×H×W]`.
    pub fn global_max_pool(&mut self, src: Var) -> Result<Var> {
        let shape = self.shape(src).to_vec();
        if shape.len() < 2 || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("global_max_pool of shape {shape:?}")));
        }
        let count = shape[0];
        let cells: usize = shape[1..].iter().product();
        let (values, argmax) = kernels::global_max_pool(self.data(src), count, cells);
        Ok(self.push(&[count], values, Op::MaxPool { src, argmax, cells }))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors scaled by `1/(1-rate)`; otherwise
    /// the input is returned unchanged.
    pub fn dropout(
        &mut self,
        src: Var,
        rate: f64,
        rng: Option<&mut SeededRng>,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0,1), got {rate}")));
        }
        let rng = match rng {
            Some(rng) if rate > 0.0 => rng,
            _ => return Ok(src),
        };
        let keep = 1.0 / (1.0 - rate);
        let scale: Vec<f64> = (0..self.value(src).len())
            .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
            .collect();
        let data = self.data(src).iter().zip(&scale).map(|(x, s)| x * s).collect();
        let shape = self.shape(src).to_vec();
        Ok(self.push(&shape, data, Op::Dropout { src, scale }))
    }

    /// Binary cross-entropy of a probability against a 0/1 target, with the
    /// probability clamped to `[1e-12, 1 - 1e-12]`.
    pub fn bce(&mut self, prob: Var, target: f64) -> Result<Var> {
        if self.value(prob).len() != 1 {
            return Err(Error::Contract(format!(
                "bce expects a scalar probability, got shape {:?}",
                self.shape(prob)
            )));
        }
        let y = self.data(prob)[0].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let loss = -(target * y.ln() + (1.0 - target) * (1.0 - y).ln());
        Ok(self.push(&[1], vec![loss], Op::Bce { prob, target }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    /// Propagates d`loss`/d(node) to every recorded node in reverse order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss.0] = vec![1.0];
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            let node = &self.nodes[idx];
            self.backward_node(node, &g, &mut grads, &mut out)?;
            grads[idx] = g;
        }
        out.nodes = grads;
        Ok(out)
    }

    fn backward_node(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Vec<f64>],
        out: &mut Gradients,
    ) -> Result<()> {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Param(key) => {
                let slot = out.dense.entry(*key).or_insert_with(|| vec![0.0; g.len()]);
                axpy(slot, g, 1.0);
            }
            Op::Gather { key, rows, frozen } => {
                let cols = node.value.shape()[1];
                let table = out.rows.entry(*key).or_default();
                for (i, &r) in rows.iter().enumerate() {
                    if Some(r) == *frozen {
                        continue;
                    }
                    let slot = table.entry(r).or_insert_with(|| vec![0.0; cols]);
                    axpy(slot, &g[i * cols..(i + 1) * cols], 1.0);
                }
            }
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (av, bv) = (self.data(*a), self.data(*b));
                // dA = dC · Bᵀ
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    let gi = &g[i * n..(i + 1) * n];
                    for t in 0..k {
                        ga[i * k + t] = kernels::dot(gi, &bv[t * n..(t + 1) * n]);
                    }
                }
                // dB = Aᵀ · dC
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    let gi = &g[i * n..(i + 1) * n];
                    for t in 0..k {
                        let av = av[i * k + t];
                        if av != 0.0 {
                            axpy(&mut gb[t * n..(t + 1) * n], gi, av);
                        }
                    }
                }
                add_grad(grads, *a, &ga);
                add_grad(grads, *b, &gb);
            }
            Op::Add(a, b) => {
                add_grad(grads, *a, g);
                add_grad(grads, *b, g);
            }
            Op::AddRow(a, b) => {
                add_grad(grads, *a, g);
                let n = self.value(*b).len();
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    axpy(&mut gb, row, 1.0);
                }
                add_grad(grads, *b, &gb);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.data(*a), self.data(*b));
                let ga: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                let gb: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                add_grad(grads, *a, &ga);
                add_grad(grads, *b, &gb);
            }
            Op::Scale(a, s) => {
                let ga: Vec<f64> = g.iter().map(|g| g * s).collect();
                add_grad(grads, *a, &ga);
            }
            Op::Act(a, kind) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(y)
                    .map(|(g, &y)| g * kind.derivative(y))
                    .collect();
                add_grad(grads, *a, &ga);
            }
            Op::Slice { src, start } => {
                let slot = grad_slot(grads, *src, self.value(*src).len());
                axpy(&mut slot[*start..*start + g.len()], g, 1.0);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    add_grad(grads, p, &g[offset..offset + len]);
                    offset += len;
                }
            }
            Op::ConcatCols {
                a,
                b,
                rows,
                left,
                right,
            } => {
                let width = left + right;
                let mut ga = Vec::with_capacity(rows * left);
                let mut gb = Vec::with_capacity(rows * right);
                for r in 0..*rows {
                    ga.extend_from_slice(&g[r * width..r * width + left]);
                    gb.extend_from_slice(&g[r * width + left..(r + 1) * width]);
                }
                add_grad(grads, *a, &ga);
                add_grad(grads, *b, &gb);
            }
            Op::RepeatRows { src, filled } => {
                let n = self.value(*src).len();
                let mut gs = vec![0.0; n];
                for row in g.chunks(n).take(*filled) {
                    axpy(&mut gs, row, 1.0);
                }
                add_grad(grads, *src, &gs);
            }
            Op::MaskedSoftmax { src, mask } => {
                // dz_i = y_i (g_i - Σ_j y_j g_j) on unmasked positions.
                let inner: f64 = kernels::dot(y, g);
                let gs: Vec<f64> = y
                    .iter()
                    .zip(g)
                    .zip(mask)
                    .map(|((&y, &g), &m)| if m { y * (g - inner) } else { 0.0 })
                    .collect();
                add_grad(grads, *src, &gs);
            }
            Op::MaskedMeanRows { src, mask } => {
                let count = mask.iter().filter(|&&m| m).count();
                let n = g.len();
                let mut gs = vec![0.0; mask.len() * n];
                if count > 0 {
                    let w = 1.0 / count as f64;
                    for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                        axpy(&mut gs[r * n..(r + 1) * n], g, w);
                    }
                }
                add_grad(grads, *src, &gs);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.data(*a), self.data(*b));
                let ga: Vec<f64> = bv.iter().map(|b| g[0] * b).collect();
                let gb: Vec<f64> = av.iter().map(|a| g[0] * a).collect();
                add_grad(grads, *a, &ga);
                add_grad(grads, *b, &gb);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; self.value(*a).len()];
                add_grad(grads, *a, &ga);
            }
            Op::LstmCell { pre, prev_cell } => {
                let p = self.data(*pre);
                let h = y.len() / 2;
                let mut gpre = vec![0.0; 4 * h];
                let mut gprev = vec![0.0; h];
                for j in 0..h {
                    let i_g = kernels::sigmoid(p[j]);
                    let f_g = kernels::sigmoid(p[h + j]);
                    let o_g = kernels::sigmoid(p[2 * h + j]);
                    let cand = p[3 * h + j].tanh();
                    let c = y[h + j];
                    let c_prev = prev_cell.map_or(0.0, |cv| self.data(cv)[j]);
                    let tc = c.tanh();
                    let dh = g[j];
                    let dc = g[h + j] + dh * o_g * (1.0 - tc * tc);
                    gpre[j] = dc * cand * i_g * (1.0 - i_g);
                    gpre[h + j] = dc * c_prev * f_g * (1.0 - f_g);
                    gpre[2 * h + j] = dh * tc * o_g * (1.0 - o_g);
                    gpre[3 * h + j] = dc * i_g * (1.0 - cand * cand);
                    gprev[j] = dc * f_g;
                }
                add_grad(grads, *pre, &gpre);
                if let Some(cv) = prev_cell {
                    add_grad(grads, *cv, &gprev);
                }
            }
            Op::Conv {
                cube,
                filters,
                biases,
                dims,
            } => {
                let (gc, mut gf, gb) = kernels::conv_valid_backward(
                    self.data(*cube),
                    self.data(*filters),
                    y,
                    g,
                    *dims,
                );
                if self.corrupt_conv_backward {
                    gf.iter_mut().for_each(|x| *x *= 1.5);
                }
                add_grad(grads, *cube, &gc);
                add_grad(grads, *filters, &gf);
                add_grad(grads, *biases, &gb);
            }
            Op::MaxPool { src, argmax, cells } => {
                let slot = grad_slot(grads, *src, self.value(*src).len());
                for (m, &a) in argmax.iter().enumerate() {
                    slot[m * cells + a] += g[m];
                }
            }
            Op::Dropout { src, scale } => {
                let gs: Vec<f64> = g.iter().zip(scale).map(|(g, s)| g * s).collect();
                add_grad(grads, *src, &gs);
            }
            Op::Bce { prob, target } => {
                let y = self.data(*prob)[0].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                let d = -target / y + (1.0 - target) / (1.0 - y);
                add_grad(grads, *prob, &[g[0] * d]);
            }
        }
        Ok(())
    }
}

fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

fn grad_slot(grads: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let slot = &mut grads[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; len];
    }
    slot
}

fn add_grad(grads: &mut [Vec<f64>], v: Var, g: &[f64]) {
    let slot = grad_slot(grads, v, g.len());
    axpy(slot, g, 1.0);
}

/// Result of [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    nodes: Vec<Vec<f64>>,
    dense: BTreeMap<usize, Vec<f64>>,
    rows: BTreeMap<usize, BTreeMap<usize, Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to any recorded value; `None` if the loss does
    /// not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes
            .get(v.0)
            .filter(|g| !g.is_empty())
            .map(|g| g.as_slice())
    }

    pub fn param(&self, key: usize) -> Option<&[f64]> {
        self.dense.get(&key).map(|g| g.as_slice())
    }

    pub fn param_rows(&self, key: usize) -> Option<&BTreeMap<usize, Vec<f64>>> {
        self.rows.get(&key)
    }

    /// Adds every gradient recorded under `key` into `target.grad`.
    pub fn accumulate_into(&self, key: usize, target: &mut Tensor) -> Result<()> {
        if let Some(g) = self.dense.get(&key) {
            target.accumulate_grad(g)?;
        }
        if let Some(rows) = self.rows.get(&key) {
            for (&r, g) in rows {
                target.accumulate_row_grad(r, g)?;
            }
        }
        Ok(())
    }
}
