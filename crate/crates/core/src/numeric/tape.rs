//! Reverse-mode differentiation over a linear record of primitive applications.
//!
//! Every op appends one node holding its forward value and whatever it needs for
//! the backward pass. [`Tape::backward`] walks nodes in exact reverse order and
//! accumulates parameter gradients additively, so a parameter referenced from
//! several sites receives the sum of all contributions.

use rand::Rng;

use super::kernels::{self, gemm_acc, gemm_at_acc, gemm_bt_acc};
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Centered window; the kernel width must be odd.
    Symmetric,
    /// Left-only padding, so output `t` never sees inputs after `t`.
    Causal,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Embedding { table: Var, ids: Vec<usize> },
    ConcatRows { a: Var, b: Var },
    MatMul { a: Var, b: Var },
    MatMulBt { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddRow { x: Var, bias: Var },
    Scale { x: Var, factor: Real },
    Glu { x: Var },
    Conv1d { x: Var, kernel: Var, padding: Padding },
    Attention { q: Var, k: Var, v: Var, weights: Vec<Real> },
    LogSoftmax { x: Var },
    Dropout { x: Var, mask: Vec<Real> },
    Nll { logp: Var, targets: Vec<usize> },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    /// Empty for parameter leaves, whose values live in the store.
    value: Vec<Real>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Output of [`Tape::attention`]: the differentiable context and a copy of the weights.
pub struct AttentionOutput {
    pub context: Var,
    pub weights: Tensor,
}

fn dims2(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::shape(op, format!("expected a matrix, got shape {shape:?}"))),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[Real] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.value(id).data(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let shape = self.shape(v).to_vec();
        let data = self.value(v).to_vec();
        if shape.is_empty() {
            Tensor::scalar(data[0])
        } else {
            Tensor::new(shape, data).expect("node shapes are validated on construction")
        }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<Real>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let shape = self.params.value(id).shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Vec::new(),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Gathers rows of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, dim) = dims2("embedding", self.shape(table))?;
        if ids.is_empty() {
            return Err(Error::shape("embedding", "empty id list"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(
                "embedding",
                format!("id {bad} outside table of {rows} rows"),
            ));
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        Ok(self.push(
            vec![ids.len(), dim],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Stacks `a` on top of `b` along the row axis.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = dims2("concat_rows", self.shape(a))?;
        let (rb, cb) = dims2("concat_rows", self.shape(b))?;
        if ca != cb {
            return Err(Error::shape("concat_rows", format!("widths {ca} and {cb} differ")));
        }
        let mut out = self.value(a).to_vec();
        out.extend_from_slice(self.value(b));
        Ok(self.push(vec![ra + rb, ca], out, Op::ConcatRows { a, b }))
    }

    /// `a[m,k] · b[k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul", self.shape(a))?;
        let (k2, n) = dims2("matmul", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("inner dims {k} and {k2} differ")));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(m, k, n, self.value(a), self.value(b), &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b }))
    }

    /// `a[m,k] · b[n,k]ᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul_bt", self.shape(a))?;
        let (n, k2) = dims2("matmul_bt", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul_bt", format!("inner dims {k} and {k2} differ")));
        }
        let mut out = vec![0.0; m * n];
        gemm_bt_acc(m, k, n, self.value(a), self.value(b), &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMulBt { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<Real> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add { a, b }))
    }

    /// Adds a `[n]` bias to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims2("add_row", self.shape(x))?;
        if self.shape(bias) != [n] {
            return Err(Error::shape(
                "add_row",
                format!("bias {:?} for width {n}", self.shape(bias)),
            ));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for r in 0..m {
            for (o, bv) in out[r * n..(r + 1) * n].iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(self.push(vec![m, n], out, Op::AddRow { x, bias }))
    }

    pub fn scale(&mut self, x: Var, factor: Real) -> Var {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Scale { x, factor })
    }

    /// Gated linear unit over the last axis: first half times sigmoid of second half.
    pub fn glu(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let Some(&last) = shape.last() else {
            return Err(Error::shape("glu", "scalar input"));
        };
        if last % 2 != 0 {
            return Err(Error::shape("glu", format!("odd channel count {last}")));
        }
        let half = last / 2;
        let rows = shape[..shape.len() - 1].iter().product::<usize>();
        let src = self.value(x);
        let mut out = Vec::with_capacity(rows * half);
        for r in 0..rows {
            let row = &src[r * last..(r + 1) * last];
            for i in 0..half {
                out.push(row[i] * kernels::sigmoid(row[half + i]));
            }
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = half;
        Ok(self.push(out_shape, out, Op::Glu { x }))
    }

    /// Zero-padded cross-correlation of `x[time, c_in]` with `kernel[width, c_in, c_out]`,
    /// preserving the time length.
    pub fn conv1d(&mut self, x: Var, kernel: Var, padding: Padding) -> Result<Var> {
        let (time, c_in) = dims2("conv1d", self.shape(x))?;
        let (width, k_in, c_out) = match *self.shape(kernel) {
            [w, i, o] => (w, i, o),
            ref s => return Err(Error::shape("conv1d", format!("kernel shape {s:?}"))),
        };
        if k_in != c_in {
            return Err(Error::shape(
                "conv1d",
                format!("input has {c_in} channels, kernel expects {k_in}"),
            ));
        }
        let pad_left = conv_pad_left(width, padding)?;
        let xv = self.value(x);
        let kv = self.value(kernel);
        let mut out = vec![0.0; time * c_out];
        for w in 0..width {
            if let Some((start, rows, src)) = conv_window(time, w, pad_left) {
                gemm_acc(
                    rows,
                    c_in,
                    c_out,
                    &xv[src * c_in..],
                    &kv[w * c_in * c_out..(w + 1) * c_in * c_out],
                    &mut out[start * c_out..],
                );
            }
        }
        Ok(self.push(vec![time, c_out], out, Op::Conv1d { x, kernel, padding }))
    }

    /// Dot-product attention. `mask[i * tk + j]` true means query `i` may attend to key `j`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: Option<&[bool]>) -> Result<AttentionOutput> {
        let (tq, d) = dims2("attention", self.shape(q))?;
        let (tk, dk) = dims2("attention", self.shape(k))?;
        let (tv, dv) = dims2("attention", self.shape(v))?;
        if d != dk || tk != tv {
            return Err(Error::shape(
                "attention",
                format!("q [{tq},{d}], k [{tk},{dk}], v [{tv},{dv}]"),
            ));
        }
        if let Some(m) = mask {
            if m.len() != tq * tk {
                return Err(Error::shape("attention", "mask size differs from [tq, tk]"));
            }
        }
        let mut weights = vec![0.0; tq * tk];
        gemm_bt_acc(tq, d, tk, self.value(q), self.value(k), &mut weights);
        for i in 0..tq {
            let allowed = mask.map(|m| &m[i * tk..(i + 1) * tk]);
            if !kernels::masked_softmax_in_place(&mut weights[i * tk..(i + 1) * tk], allowed) {
                return Err(Error::Contract(format!("attention query row {i} has every key masked")));
            }
        }
        let mut ctx = vec![0.0; tq * dv];
        gemm_acc(tq, tk, dv, &weights, self.value(v), &mut ctx);
        let weights_t = Tensor::new(vec![tq, tk], weights.clone())?;
        let context = self.push(vec![tq, dv], ctx, Op::Attention { q, k, v, weights });
        Ok(AttentionOutput {
            context,
            weights: weights_t,
        })
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (m, n) = dims2("log_softmax", self.shape(x))?;
        let mut out = self.value(x).to_vec();
        for r in 0..m {
            kernels::log_softmax_in_place(&mut out[r * n..(r + 1) * n]);
        }
        Ok(self.push(vec![m, n], out, Op::LogSoftmax { x }))
    }

    /// Inverted dropout: each value is zeroed with probability `rate`, survivors are
    /// scaled by `1/(1-rate)`. Pass `None` as the generator in eval mode.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: Real, rng: Option<&mut R>) -> Var {
        let Some(rng) = rng else { return x };
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let n = self.value(x).len();
        let mask: Vec<Real> = (0..n)
            .map(|_| if rng.random::<Real>() < keep { scale } else { 0.0 })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Dropout { x, mask })
    }

    /// Summed negative log-likelihood of `targets[t]` under row `t` of `logp`.
    pub fn nll(&mut self, logp: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = dims2("nll", self.shape(logp))?;
        if targets.len() != m {
            return Err(Error::shape("nll", format!("{} targets for {m} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::shape("nll", format!("target {bad} outside vocabulary of {n}")));
        }
        let lp = self.value(logp);
        let total: Real = targets.iter().enumerate().map(|(t, &y)| -lp[t * n + y]).sum();
        Ok(self.push(
            Vec::new(),
            vec![total],
            Op::Nll {
                logp,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        self.push(Vec::new(), vec![total], Op::Sum { x })
    }

    /// Propagates d(loss)/d(node) back through the tape. Parameters that the loss
    /// does not reach get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<Real>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (acc, gv) in out.get_mut(*id).data_mut().iter_mut().zip(&g) {
                        *acc += gv;
                    }
                }
                Op::Embedding { table, ids } => {
                    let dim = node.shape[1];
                    let dt = self.grad_slot(&mut grads, *table);
                    for (r, &i) in ids.iter().enumerate() {
                        for (a, b) in dt[i * dim..(i + 1) * dim].iter_mut().zip(&g[r * dim..]) {
                            *a += b;
                        }
                    }
                }
                Op::ConcatRows { a, b } => {
                    let na = self.value(*a).len();
                    add_into(self.grad_slot(&mut grads, *a), &g[..na]);
                    add_into(self.grad_slot(&mut grads, *b), &g[na..]);
                }
                Op::MatMul { a, b } => {
                    let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let n = node.shape[1];
                    gemm_bt_acc(m, n, k, &g, self.value(*b), self.grad_slot(&mut grads, *a));
                    gemm_at_acc(m, k, n, self.value(*a), &g, self.grad_slot(&mut grads, *b));
                }
                Op::MatMulBt { a, b } => {
                    let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let n = node.shape[1];
                    gemm_acc(m, n, k, &g, self.value(*b), self.grad_slot(&mut grads, *a));
                    gemm_at_acc(m, n, k, &g, self.value(*a), self.grad_slot(&mut grads, *b));
                }
                Op::Add { a, b } => {
                    add_into(self.grad_slot(&mut grads, *a), &g);
                    add_into(self.grad_slot(&mut grads, *b), &g);
                }
                Op::AddRow { x, bias } => {
                    let n = node.shape[1];
                    add_into(self.grad_slot(&mut grads, *x), &g);
                    let db = self.grad_slot(&mut grads, *bias);
                    for row in g.chunks(n) {
                        add_into(db, row);
                    }
                }
                Op::Scale { x, factor } => {
                    let dx = self.grad_slot(&mut grads, *x);
                    for (a, b) in dx.iter_mut().zip(&g) {
                        *a += b * factor;
                    }
                }
                Op::Glu { x } => {
                    let half = *node.shape.last().unwrap();
                    let last = half * 2;
                    let xv = self.value(*x);
                    let mut local = vec![0.0; xv.len()];
                    for (r, gr) in g.chunks(half).enumerate() {
                        let row = &xv[r * last..(r + 1) * last];
                        let dst = &mut local[r * last..(r + 1) * last];
                        for i in 0..half {
                            let s = kernels::sigmoid(row[half + i]);
                            dst[i] = gr[i] * s;
                            dst[half + i] = gr[i] * row[i] * s * (1.0 - s);
                        }
                    }
                    add_into(self.grad_slot(&mut grads, *x), &local);
                }
                Op::Conv1d { x, kernel, padding } => {
                    let (time, c_in) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let width = self.shape(*kernel)[0];
                    let c_out = node.shape[1];
                    let pad_left = conv_pad_left(width, *padding)?;
                    let kv = self.value(*kernel);
                    let xv = self.value(*x);
                    let mut dx = vec![0.0; time * c_in];
                    let mut dk = vec![0.0; width * c_in * c_out];
                    for w in 0..width {
                        if let Some((start, rows, src)) = conv_window(time, w, pad_left) {
                            let kw = &kv[w * c_in * c_out..(w + 1) * c_in * c_out];
                            gemm_bt_acc(rows, c_out, c_in, &g[start * c_out..], kw, &mut dx[src * c_in..]);
                            gemm_at_acc(
                                rows,
                                c_in,
                                c_out,
                                &xv[src * c_in..],
                                &g[start * c_out..],
                                &mut dk[w * c_in * c_out..(w + 1) * c_in * c_out],
                            );
                        }
                    }
                    add_into(self.grad_slot(&mut grads, *x), &dx);
                    add_into(self.grad_slot(&mut grads, *kernel), &dk);
                }
                Op::Attention { q, k, v, weights } => {
                    let (tq, d) = (self.shape(*q)[0], self.shape(*q)[1]);
                    let tk = self.shape(*k)[0];
                    let dv = self.shape(*v)[1];
                    // d(weights) = d(ctx) · vᵀ
                    let mut dw = vec![0.0; tq * tk];
                    gemm_bt_acc(tq, dv, tk, &g, self.value(*v), &mut dw);
                    let mut d_v = vec![0.0; tk * dv];
                    gemm_at_acc(tq, tk, dv, weights, &g, &mut d_v);
                    // softmax backward, row by row
                    for i in 0..tq {
                        let w = &weights[i * tk..(i + 1) * tk];
                        let row = &mut dw[i * tk..(i + 1) * tk];
                        let dot: Real = w.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                        for (r, wj) in row.iter_mut().zip(w) {
                            *r = wj * (*r - dot);
                        }
                    }
                    let mut dq = vec![0.0; tq * d];
                    gemm_acc(tq, tk, d, &dw, self.value(*k), &mut dq);
                    let mut dk = vec![0.0; tk * d];
                    gemm_at_acc(tq, tk, d, &dw, self.value(*q), &mut dk);
                    add_into(self.grad_slot(&mut grads, *q), &dq);
                    add_into(self.grad_slot(&mut grads, *k), &dk);
                    add_into(self.grad_slot(&mut grads, *v), &d_v);
                }
                Op::LogSoftmax { x } => {
                    let n = node.shape[1];
                    let mut local = vec![0.0; g.len()];
                    for ((gr, yr), dst) in g.chunks(n).zip(node.value.chunks(n)).zip(local.chunks_mut(n)) {
                        let total: Real = gr.iter().sum();
                        for j in 0..n {
                            dst[j] = gr[j] - yr[j].exp() * total;
                        }
                    }
                    add_into(self.grad_slot(&mut grads, *x), &local);
                }
                Op::Dropout { x, mask } => {
                    let dx = self.grad_slot(&mut grads, *x);
                    for ((a, b), m) in dx.iter_mut().zip(&g).zip(mask) {
                        *a += b * m;
                    }
                }
                Op::Nll { logp, targets } => {
                    let n = self.shape(*logp)[1];
                    let dl = self.grad_slot(&mut grads, *logp);
                    for (t, &y) in targets.iter().enumerate() {
                        dl[t * n + y] -= g[0];
                    }
                }
                Op::Sum { x } => {
                    let dx = self.grad_slot(&mut grads, *x);
                    for a in dx.iter_mut() {
                        *a += g[0];
                    }
                }
            }
        }
        Ok(out)
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<Real>>], v: Var) -> &'g mut Vec<Real> {
        let n = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }
}

fn add_into(dst: &mut [Real], src: &[Real]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

pub(crate) fn conv_pad_left(width: usize, padding: Padding) -> Result<usize> {
    if width == 0 {
        return Err(Error::shape("conv1d", "zero kernel width"));
    }
    match padding {
        Padding::Symmetric if width.is_multiple_of(2) => Err(Error::shape(
            "conv1d",
            format!("symmetric padding needs an odd width, got {width}"),
        )),
        Padding::Symmetric => Ok((width - 1) / 2),
        Padding::Causal => Ok(width - 1),
    }
}

/// For kernel tap `w`, the output rows `[start, start + rows)` read input rows
/// `[src, src + rows)`. None when the tap falls entirely in the padding.
fn conv_window(time: usize, w: usize, pad_left: usize) -> Option<(usize, usize, usize)> {
    let offset = w as isize - pad_left as isize;
    let start = (-offset).max(0) as usize;
    let end = (time as isize - offset).min(time as isize);
    if end <= start as isize {
        return None;
    }
    let rows = end as usize - start;
    Some((start, rows, (start as isize + offset) as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[Real]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn glu_examples() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[2, 2], &[0.0, 5.0, 3.0, 0.0]));
        let y = tape.glu(x).unwrap();
        assert_eq!(tape.value(y), &[0.0, 1.5]);

        let odd = tape.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        assert!(matches!(tape.glu(odd), Err(Error::Shape { .. })));
    }

    #[test]
    fn glu_gradient_at_reference_point() {
        let mut store = ParamStore::new();
        let p = store.add("x", t(&[2], &[3.0, 0.0])).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.param(p);
        let y = tape.glu(x).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert!((g.get(p).data()[0] - 0.5).abs() < 1e-15);
        assert!((g.get(p).data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn conv1d_identity_and_average() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let ident = tape.constant(t(&[1, 2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let y = tape.conv1d(x, ident, Padding::Symmetric).unwrap();
        assert_eq!(tape.value(y), tape.value(x));

        let x1 = tape.constant(t(&[3, 1], &[1.0, 2.0, 3.0]));
        let avg = tape.constant(t(&[3, 1, 1], &[1.0 / 3.0; 3]));
        let y1 = tape.conv1d(x1, avg, Padding::Symmetric).unwrap();
        let want = [1.0, 2.0, 5.0 / 3.0];
        for (a, b) in tape.value(y1).iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn conv1d_rejects_bad_shapes() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[3, 2], &[0.0; 6]));
        let k = tape.constant(t(&[3, 3, 1], &[0.0; 9]));
        assert!(tape.conv1d(x, k, Padding::Causal).is_err());
        let even = tape.constant(t(&[2, 2, 1], &[0.0; 4]));
        assert!(tape.conv1d(x, even, Padding::Symmetric).is_err());
        assert!(tape.conv1d(x, even, Padding::Causal).is_ok());
    }

    #[test]
    fn causal_conv_never_looks_ahead() {
        let store = ParamStore::new();
        let kdata: Vec<Real> = (0..3 * 2 * 2).map(|i| (i as Real).sin()).collect();
        let base: Vec<Real> = (0..6 * 2).map(|i| (i as Real * 0.3).cos()).collect();
        for t0 in 0..6 {
            let mut tape = Tape::new(&store);
            let k = tape.constant(t(&[3, 2, 2], &kdata));
            let x = tape.constant(t(&[6, 2], &base));
            let y = tape.conv1d(x, k, Padding::Causal).unwrap();
            let mut perturbed = base.clone();
            perturbed[t0 * 2] += 1.0;
            let x2 = tape.constant(t(&[6, 2], &perturbed));
            let y2 = tape.conv1d(x2, k, Padding::Causal).unwrap();
            let (a, b) = (tape.value(y), tape.value(y2));
            assert_eq!(&a[..t0 * 2], &b[..t0 * 2]);
            assert_ne!(&a[t0 * 2..t0 * 2 + 2], &b[t0 * 2..t0 * 2 + 2]);
        }
    }

    #[test]
    fn attention_examples() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        // single key
        let q = tape.constant(t(&[1, 2], &[0.3, -0.2]));
        let k = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let v = tape.constant(t(&[1, 2], &[7.0, -1.0]));
        let out = tape.attention(q, k, v, None).unwrap();
        assert_eq!(out.weights.data(), &[1.0]);
        assert_eq!(tape.value(out.context), &[7.0, -1.0]);

        // equal scores → mean of values
        let k2 = tape.constant(t(&[2, 2], &[1.0, 0.0, 1.0, 0.0]));
        let v2 = tape.constant(t(&[2, 2], &[2.0, 4.0, 6.0, 0.0]));
        let out = tape.attention(q, k2, v2, None).unwrap();
        let ctx = tape.value(out.context);
        assert!((ctx[0] - 4.0).abs() < 1e-12 && (ctx[1] - 2.0).abs() < 1e-12);

        // scores (0, ln 3)
        let q1 = tape.constant(t(&[1, 1], &[1.0]));
        let k3 = tape.constant(t(&[2, 1], &[0.0, 3.0_f64.ln()]));
        let v3 = tape.constant(t(&[2, 1], &[1.0, 2.0]));
        let out = tape.attention(q1, k3, v3, None).unwrap();
        assert!((out.weights.data()[0] - 0.25).abs() < 1e-12);
        assert!((out.weights.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fully_masked_row_is_a_contract_error() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let q = tape.constant(t(&[2, 1], &[1.0, 1.0]));
        let k = tape.constant(t(&[2, 1], &[1.0, 2.0]));
        let mask = [true, false, false, false];
        assert!(matches!(tape.attention(q, k, k, Some(&mask)), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_on_simple_losses() {
        let mut store = ParamStore::new();
        let p = store.add("p", t(&[3], &[1.0, -2.0, 0.5])).unwrap();
        let unused = store.add("unused", t(&[2], &[9.0, 9.0])).unwrap();
        let tape_store = store.clone();

        let mut tape = Tape::new(&tape_store);
        let x = tape.param(p);
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(p).data(), &[1.0, 1.0, 1.0]);
        assert_eq!(g.get(unused).data(), &[0.0, 0.0]);

        // sum(p²)/2 via a row-vector self product
        let mut store = ParamStore::new();
        let row = store.add("row", t(&[1, 3], &[1.0, -2.0, 0.5])).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.param(row);
        let sq = tape.matmul_bt(x, x).unwrap();
        let half = tape.scale(sq, 0.5);
        let loss = tape.sum(half);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(row).data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn dropout_is_identity_without_generator_and_scales_survivors() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::filled(&[100, 10], 1.0));
        let same = tape.dropout::<ChaCha8Rng>(x, 0.2, None);
        assert_eq!(same, x);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = tape.dropout(x, 0.2, Some(&mut rng));
        let vals = tape.value(y);
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        assert!((700..900).contains(&kept), "kept {kept}");
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, -50.0, 0.0, 50.0]));
        let y = tape.log_softmax(x).unwrap();
        for row in tape.value(y).chunks(3) {
            let total: Real = row.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
