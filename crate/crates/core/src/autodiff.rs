//! Reverse-mode automatic differentiation over f64 tensors.
//!
//! A [`Graph`] records every operation eagerly (values are computed on
//! insertion) and can replay the chain rule backwards from any scalar
//! node. The op set is exactly what the denoiser, the attention-loss
//! gradient and the autocorrelation regularizer need; convolution and
//! matrix products are routed through `ndarray::dot` (GEMM) so the hot
//! path stays fast on a single core.
//!
//! Gradients are checked against central finite differences in the
//! tests below; the denoiser module repeats that check through the
//! whole network.

use ndarray::{Array1, Array2, Array3, ArrayD, Axis, Ix1, Ix2, Ix3};
use std::sync::Arc;

/// Node handle within a [`Graph`].
pub type Id = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Id, Id),
    Sub(Id, Id),
    Mul(Id, Id),
    Scale(Id, f64),
    AddScalar(Id),
    Square(Id),
    Silu(Id),
    /// `a.dot(b)` for 2-D operands.
    Matmul(Id, Id),
    /// `a.dot(b.t())` for 2-D operands.
    MatmulNt(Id, Id),
    /// Broadcast-add a length-N vector to every row of an MxN matrix.
    AddRowVec(Id, Id),
    Conv2d {
        x: Id,
        w: Id,
        b: Id,
        stride: usize,
        pad: usize,
    },
    Upsample2x(Id),
    SliceCols(Id, usize, usize),
    ConcatRows(Id, Id),
    ConcatCols(Id, Id),
    LayerNormRows {
        x: Id,
        gamma: Id,
        beta: Id,
    },
    SoftmaxRowsMasked(Id, Arc<Vec<bool>>),
    /// [C,H,W] -> [H*W, C]
    ToTokens(Id),
    /// [N,C] -> [C,H,W]
    FromTokens(Id, usize, usize),
    /// Add a per-channel bias vector to a [C,H,W] tensor.
    AddChannelBias(Id, Id),
    SumAll(Id),
    MeanAll(Id),
    /// Elementwise dot product of two same-shape tensors -> [1].
    DotAll(Id, Id),
    /// a / b for two [1] scalars.
    DivScalars(Id, Id),
    /// x - s broadcast, s is a [1] scalar node.
    SubScalarNode(Id, Id),
    /// sqrt of a [1] scalar; gradient defined as 0 at 0.
    SqrtScalar(Id),
    /// Circular shift along `axis` of a rank-3 tensor.
    Roll {
        x: Id,
        axis: usize,
        shift: usize,
    },
}

struct Node {
    value: Arc<ArrayD<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node id.
pub struct Grads {
    slots: Vec<Option<ArrayD<f64>>>,
}

impl Grads {
    /// Gradient of the root with respect to node `id`, if it was reached.
    pub fn get(&self, id: Id) -> Option<&ArrayD<f64>> {
        self.slots.get(id).and_then(|s| s.as_ref())
    }

    pub fn take(&mut self, id: Id) -> Option<ArrayD<f64>> {
        self.slots.get_mut(id).and_then(|s| s.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, id: Id) -> &ArrayD<f64> {
        &self.nodes[id].value
    }

    pub fn value_arc(&self, id: Id) -> Arc<ArrayD<f64>> {
        Arc::clone(&self.nodes[id].value)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op, needs_grad: bool) -> Id {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: Id) -> bool {
        self.nodes[id].needs_grad
    }

    /// Insert a leaf holding `value`. `needs_grad` marks it as a
    /// differentiation target (weights, the latent being optimized).
    pub fn leaf(&mut self, value: ArrayD<f64>, needs_grad: bool) -> Id {
        self.push(value, Op::Leaf, needs_grad)
    }

    /// Insert a leaf sharing storage with an existing array.
    pub fn leaf_shared(&mut self, value: Arc<ArrayD<f64>>, needs_grad: bool) -> Id {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: ArrayD<f64>) -> Id {
        self.leaf(value, false)
    }

    pub fn add(&mut self, a: Id, b: Id) -> Id {
        let v = &*self.nodes[a].value + &*self.nodes[b].value;
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Id, b: Id) -> Id {
        let v = &*self.nodes[a].value - &*self.nodes[b].value;
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Id, b: Id) -> Id {
        let v = &*self.nodes[a].value * &*self.nodes[b].value;
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), g)
    }

    pub fn scale(&mut self, a: Id, c: f64) -> Id {
        let v = self.nodes[a].value.mapv(|x| x * c);
        let g = self.needs(a);
        self.push(v, Op::Scale(a, c), g)
    }

    pub fn add_scalar(&mut self, a: Id, c: f64) -> Id {
        let v = self.nodes[a].value.mapv(|x| x + c);
        let g = self.needs(a);
        self.push(v, Op::AddScalar(a), g)
    }

    pub fn square(&mut self, a: Id) -> Id {
        let v = self.nodes[a].value.mapv(|x| x * x);
        let g = self.needs(a);
        self.push(v, Op::Square(a), g)
    }

    pub fn silu(&mut self, a: Id) -> Id {
        let v = self.nodes[a].value.mapv(silu);
        let g = self.needs(a);
        self.push(v, Op::Silu(a), g)
    }

    pub fn matmul(&mut self, a: Id, b: Id) -> Id {
        let av = as2(&self.nodes[a].value);
        let bv = as2(&self.nodes[b].value);
        let v = av.dot(&bv).into_dyn();
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Matmul(a, b), g)
    }

    pub fn matmul_nt(&mut self, a: Id, b: Id) -> Id {
        let av = as2(&self.nodes[a].value);
        let bv = as2(&self.nodes[b].value);
        let v = av.dot(&bv.t()).into_dyn();
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatmulNt(a, b), g)
    }

    pub fn add_row_vec(&mut self, a: Id, v: Id) -> Id {
        let av = as2(&self.nodes[a].value);
        let vv = as1(&self.nodes[v].value);
        let out = (&av + &vv).into_dyn();
        let g = self.needs(a) || self.needs(v);
        self.push(out, Op::AddRowVec(a, v), g)
    }

    /// 2-D convolution of `x: [C,H,W]` with `w: [O,C,kh,kw]` plus bias
    /// `b: [O]`, via im2col + GEMM.
    pub fn conv2d(&mut self, x: Id, w: Id, b: Id, stride: usize, pad: usize) -> Id {
        let xv = as3(&self.nodes[x].value);
        let wv = &self.nodes[w].value;
        let bv = as1(&self.nodes[b].value);
        let (o, c, kh, kw) = (
            wv.shape()[0],
            wv.shape()[1],
            wv.shape()[2],
            wv.shape()[3],
        );
        assert_eq!(c, xv.shape()[0], "conv2d channel mismatch");
        let (h, wd) = (xv.shape()[1], xv.shape()[2]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let cols = im2col(&xv, kh, kw, stride, pad, oh, ow);
        let w2 = wv
            .view()
            .into_shape_with_order((o, c * kh * kw))
            .expect("conv kernel layout");
        let mut out2 = w2.dot(&cols); // [O, OH*OW]
        for (mut row, bias) in out2.outer_iter_mut().zip(bv.iter()) {
            row.mapv_inplace(|v| v + bias);
        }
        let out = out2
            .into_shape_with_order((o, oh, ow))
            .expect("conv output reshape")
            .into_dyn();
        let g = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, g)
    }

    /// Nearest-neighbour 2x spatial upsampling of a [C,H,W] tensor.
    pub fn upsample2x(&mut self, a: Id) -> Id {
        let xv = as3(&self.nodes[a].value);
        let (c, h, w) = xv.dim();
        let mut out = Array3::<f64>::zeros((c, 2 * h, 2 * w));
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = xv[[ci, y, x]];
                    out[[ci, 2 * y, 2 * x]] = v;
                    out[[ci, 2 * y + 1, 2 * x]] = v;
                    out[[ci, 2 * y, 2 * x + 1]] = v;
                    out[[ci, 2 * y + 1, 2 * x + 1]] = v;
                }
            }
        }
        let g = self.needs(a);
        self.push(out.into_dyn(), Op::Upsample2x(a), g)
    }

    pub fn slice_cols(&mut self, a: Id, start: usize, len: usize) -> Id {
        let av = as2(&self.nodes[a].value);
        let v = av.slice(ndarray::s![.., start..start + len]).to_owned();
        let g = self.needs(a);
        self.push(v.into_dyn(), Op::SliceCols(a, start, len), g)
    }

    pub fn concat_rows(&mut self, a: Id, b: Id) -> Id {
        let av = as2(&self.nodes[a].value);
        let bv = as2(&self.nodes[b].value);
        let v = ndarray::concatenate(Axis(0), &[av.view(), bv.view()]).expect("concat rows");
        let g = self.needs(a) || self.needs(b);
        self.push(v.into_dyn(), Op::ConcatRows(a, b), g)
    }

    pub fn concat_cols(&mut self, a: Id, b: Id) -> Id {
        let av = as2(&self.nodes[a].value);
        let bv = as2(&self.nodes[b].value);
        let v = ndarray::concatenate(Axis(1), &[av.view(), bv.view()]).expect("concat cols");
        let g = self.needs(a) || self.needs(b);
        self.push(v.into_dyn(), Op::ConcatCols(a, b), g)
    }

    /// Row-wise layer normalization of an MxN matrix with per-column
    /// scale and shift.
    pub fn layer_norm_rows(&mut self, x: Id, gamma: Id, beta: Id) -> Id {
        let xv = as2(&self.nodes[x].value);
        let gv = as1(&self.nodes[gamma].value);
        let bv = as1(&self.nodes[beta].value);
        let n = xv.ncols() as f64;
        let mut out = Array2::<f64>::zeros(xv.raw_dim());
        for (i, row) in xv.outer_iter().enumerate() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..xv.ncols() {
                out[[i, j]] = (row[j] - mean) * inv * gv[j] + bv[j];
            }
        }
        let g = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(out.into_dyn(), Op::LayerNormRows { x, gamma, beta }, g)
    }

    /// Row softmax with a column validity mask: masked columns are
    /// excluded from the softmax and emit exactly 0. Rows with no valid
    /// column emit all zeros.
    pub fn softmax_rows_masked(&mut self, x: Id, mask: Arc<Vec<bool>>) -> Id {
        let xv = as2(&self.nodes[x].value);
        assert_eq!(xv.ncols(), mask.len(), "softmax mask length");
        let mut out = Array2::<f64>::zeros(xv.raw_dim());
        for (i, row) in xv.outer_iter().enumerate() {
            let mut mx = f64::NEG_INFINITY;
            for (j, &m) in mask.iter().enumerate() {
                if m && row[j] > mx {
                    mx = row[j];
                }
            }
            if !mx.is_finite() {
                continue; // fully masked row
            }
            let mut denom = 0.0;
            for (j, &m) in mask.iter().enumerate() {
                if m {
                    let e = (row[j] - mx).exp();
                    out[[i, j]] = e;
                    denom += e;
                }
            }
            for (j, &m) in mask.iter().enumerate() {
                if m {
                    out[[i, j]] /= denom;
                }
            }
        }
        let g = self.needs(x);
        self.push(out.into_dyn(), Op::SoftmaxRowsMasked(x, mask), g)
    }

    /// [C,H,W] -> [H*W, C] token layout for attention.
    pub fn to_tokens(&mut self, a: Id) -> Id {
        let xv = as3(&self.nodes[a].value);
        let (c, h, w) = xv.dim();
        let mut out = Array2::<f64>::zeros((h * w, c));
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[[y * w + x, ci]] = xv[[ci, y, x]];
                }
            }
        }
        let g = self.needs(a);
        self.push(out.into_dyn(), Op::ToTokens(a), g)
    }

    /// [H*W, C] -> [C,H,W]; inverse of [`Graph::to_tokens`].
    pub fn from_tokens(&mut self, a: Id, h: usize, w: usize) -> Id {
        let xv = as2(&self.nodes[a].value);
        let c = xv.ncols();
        assert_eq!(xv.nrows(), h * w, "from_tokens row count");
        let mut out = Array3::<f64>::zeros((c, h, w));
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[[ci, y, x]] = xv[[y * w + x, ci]];
                }
            }
        }
        let g = self.needs(a);
        self.push(out.into_dyn(), Op::FromTokens(a, h, w), g)
    }

    /// Add a per-channel bias to a [C,H,W] tensor. The bias node may
    /// be any shape with exactly C elements (a [C] vector or a [1,C]
    /// matmul row).
    pub fn add_channel_bias(&mut self, a: Id, b: Id) -> Id {
        let xv = as3(&self.nodes[a].value);
        let bv = &self.nodes[b].value;
        assert_eq!(bv.len(), xv.dim().0, "channel bias length");
        let bias: Vec<f64> = bv.iter().copied().collect();
        let mut out = xv.to_owned();
        for (ci, mut plane) in out.outer_iter_mut().enumerate() {
            plane.mapv_inplace(|v| v + bias[ci]);
        }
        let g = self.needs(a) || self.needs(b);
        self.push(out.into_dyn(), Op::AddChannelBias(a, b), g)
    }

    pub fn sum_all(&mut self, a: Id) -> Id {
        let s = self.nodes[a].value.sum();
        let g = self.needs(a);
        self.push(scalar(s), Op::SumAll(a), g)
    }

    pub fn mean_all(&mut self, a: Id) -> Id {
        let v = &self.nodes[a].value;
        let s = v.sum() / v.len() as f64;
        let g = self.needs(a);
        self.push(scalar(s), Op::MeanAll(a), g)
    }

    pub fn dot_all(&mut self, a: Id, b: Id) -> Id {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        let s = av.iter().zip(bv.iter()).map(|(x, y)| x * y).sum();
        let g = self.needs(a) || self.needs(b);
        self.push(scalar(s), Op::DotAll(a, b), g)
    }

    pub fn div_scalars(&mut self, a: Id, b: Id) -> Id {
        let s = self.nodes[a].value[[0]] / self.nodes[b].value[[0]];
        let g = self.needs(a) || self.needs(b);
        self.push(scalar(s), Op::DivScalars(a, b), g)
    }

    pub fn sub_scalar_node(&mut self, x: Id, s: Id) -> Id {
        let sv = self.nodes[s].value[[0]];
        let v = self.nodes[x].value.mapv(|e| e - sv);
        let g = self.needs(x) || self.needs(s);
        self.push(v, Op::SubScalarNode(x, s), g)
    }

    pub fn sqrt_scalar(&mut self, a: Id) -> Id {
        let s = self.nodes[a].value[[0]].sqrt();
        let g = self.needs(a);
        self.push(scalar(s), Op::SqrtScalar(a), g)
    }

    pub fn roll(&mut self, x: Id, axis: usize, shift: usize) -> Id {
        let xv = as3(&self.nodes[x].value);
        let v = roll3(&xv, axis, shift);
        let g = self.needs(x);
        self.push(v.into_dyn(), Op::Roll { x, axis, shift }, g)
    }

    /// Backpropagate from a scalar node (shape `[1]`), returning
    /// gradients for every node that influences it and needs them.
    pub fn backward(&self, root: Id) -> Grads {
        assert_eq!(self.nodes[root].value.len(), 1, "backward root must be scalar");
        let mut slots: Vec<Option<ArrayD<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[root] = Some(scalar(1.0));
        for id in (0..=root).rev() {
            if !self.nodes[id].needs_grad {
                slots[id] = None;
                continue;
            }
            let Some(grad) = slots[id].take() else {
                continue;
            };
            self.accumulate_parents(id, &grad, &mut slots);
            slots[id] = Some(grad);
        }
        Grads { slots }
    }

    fn accumulate_parents(&self, id: Id, g: &ArrayD<f64>, slots: &mut [Option<ArrayD<f64>>]) {
        let acc = |slots: &mut [Option<ArrayD<f64>>], pid: Id, delta: ArrayD<f64>| {
            if !self.nodes[pid].needs_grad {
                return;
            }
            match &mut slots[pid] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.mapv(|v| -v));
            }
            Op::Mul(a, b) => {
                let av = self.nodes[*a].value.clone();
                let bv = self.nodes[*b].value.clone();
                acc(slots, *a, g * &*bv);
                acc(slots, *b, g * &*av);
            }
            Op::Scale(a, c) => acc(slots, *a, g.mapv(|v| v * c)),
            Op::AddScalar(a) => acc(slots, *a, g.clone()),
            Op::Square(a) => {
                let av = &self.nodes[*a].value;
                acc(slots, *a, g * &av.mapv(|v| 2.0 * v));
            }
            Op::Silu(a) => {
                let av = &self.nodes[*a].value;
                acc(slots, *a, g * &av.mapv(silu_grad));
            }
            Op::Matmul(a, b) => {
                let gv = as2(g);
                let av = as2(&self.nodes[*a].value);
                let bv = as2(&self.nodes[*b].value);
                acc(slots, *a, gv.dot(&bv.t()).into_dyn());
                acc(slots, *b, av.t().dot(&gv).into_dyn());
            }
            Op::MatmulNt(a, b) => {
                let gv = as2(g);
                let av = as2(&self.nodes[*a].value);
                let bv = as2(&self.nodes[*b].value);
                acc(slots, *a, gv.dot(&bv).into_dyn());
                acc(slots, *b, gv.t().dot(&av).into_dyn());
            }
            Op::AddRowVec(a, v) => {
                let gv = as2(g);
                acc(slots, *a, g.clone());
                acc(slots, *v, gv.sum_axis(Axis(0)).into_dyn());
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                self.conv2d_backward(*x, *w, *b, *stride, *pad, g, slots, &acc);
            }
            Op::Upsample2x(a) => {
                let gv = as3(g);
                let (c, h2, w2) = gv.dim();
                let (h, w) = (h2 / 2, w2 / 2);
                let mut gx = Array3::<f64>::zeros((c, h, w));
                for ci in 0..c {
                    for y in 0..h2 {
                        for x in 0..w2 {
                            gx[[ci, y / 2, x / 2]] += gv[[ci, y, x]];
                        }
                    }
                }
                acc(slots, *a, gx.into_dyn());
            }
            Op::SliceCols(a, start, len) => {
                let gv = as2(g);
                let full = as2(&self.nodes[*a].value);
                let mut gx = Array2::<f64>::zeros(full.raw_dim());
                gx.slice_mut(ndarray::s![.., *start..*start + *len])
                    .assign(&gv);
                acc(slots, *a, gx.into_dyn());
            }
            Op::ConcatRows(a, b) => {
                let gv = as2(g);
                let ra = as2(&self.nodes[*a].value).nrows();
                acc(slots, *a, gv.slice(ndarray::s![..ra, ..]).to_owned().into_dyn());
                acc(slots, *b, gv.slice(ndarray::s![ra.., ..]).to_owned().into_dyn());
            }
            Op::ConcatCols(a, b) => {
                let gv = as2(g);
                let ca = as2(&self.nodes[*a].value).ncols();
                acc(slots, *a, gv.slice(ndarray::s![.., ..ca]).to_owned().into_dyn());
                acc(slots, *b, gv.slice(ndarray::s![.., ca..]).to_owned().into_dyn());
            }
            Op::LayerNormRows { x, gamma, beta } => {
                let gv = as2(g);
                let xv = as2(&self.nodes[*x].value);
                let gav = as1(&self.nodes[*gamma].value);
                let n = xv.ncols();
                let nf = n as f64;
                let mut gx = Array2::<f64>::zeros(xv.raw_dim());
                let mut ggamma = Array1::<f64>::zeros(n);
                let mut gbeta = Array1::<f64>::zeros(n);
                for i in 0..xv.nrows() {
                    let row = xv.row(i);
                    let mean = row.sum() / nf;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    // xhat_j = (x_j - mean) * inv
                    let mut sum_gy_gamma = 0.0;
                    let mut sum_gy_gamma_xhat = 0.0;
                    for j in 0..n {
                        let xhat = (row[j] - mean) * inv;
                        let gy = gv[[i, j]];
                        ggamma[j] += gy * xhat;
                        gbeta[j] += gy;
                        let gyg = gy * gav[j];
                        sum_gy_gamma += gyg;
                        sum_gy_gamma_xhat += gyg * xhat;
                    }
                    for j in 0..n {
                        let xhat = (row[j] - mean) * inv;
                        let gyg = gv[[i, j]] * gav[j];
                        gx[[i, j]] =
                            inv * (gyg - sum_gy_gamma / nf - xhat * sum_gy_gamma_xhat / nf);
                    }
                }
                acc(slots, *x, gx.into_dyn());
                acc(slots, *gamma, ggamma.into_dyn());
                acc(slots, *beta, gbeta.into_dyn());
            }
            Op::SoftmaxRowsMasked(a, mask) => {
                let gv = as2(g);
                let yv = as2(&self.nodes[id].value);
                let mut gx = Array2::<f64>::zeros(yv.raw_dim());
                for i in 0..yv.nrows() {
                    let mut dot = 0.0;
                    for (j, &m) in mask.iter().enumerate() {
                        if m {
                            dot += gv[[i, j]] * yv[[i, j]];
                        }
                    }
                    for (j, &m) in mask.iter().enumerate() {
                        if m {
                            gx[[i, j]] = yv[[i, j]] * (gv[[i, j]] - dot);
                        }
                    }
                }
                acc(slots, *a, gx.into_dyn());
            }
            Op::ToTokens(a) => {
                let gv = as2(g);
                let xv = as3(&self.nodes[*a].value);
                let (c, h, w) = xv.dim();
                let mut gx = Array3::<f64>::zeros((c, h, w));
                for ci in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            gx[[ci, y, x]] = gv[[y * w + x, ci]];
                        }
                    }
                }
                acc(slots, *a, gx.into_dyn());
            }
            Op::FromTokens(a, h, w) => {
                let gv = as3(g);
                let c = gv.dim().0;
                let mut gx = Array2::<f64>::zeros((h * w, c));
                for ci in 0..c {
                    for y in 0..*h {
                        for x in 0..*w {
                            gx[[y * w + x, ci]] = gv[[ci, y, x]];
                        }
                    }
                }
                acc(slots, *a, gx.into_dyn());
            }
            Op::AddChannelBias(a, b) => {
                let gv = as3(g);
                acc(slots, *a, g.clone());
                let sums: Vec<f64> = gv.outer_iter().map(|plane| plane.sum()).collect();
                let shape = self.nodes[*b].value.raw_dim();
                let gb = ArrayD::from_shape_vec(shape, sums).expect("channel bias grad shape");
                acc(slots, *b, gb);
            }
            Op::SumAll(a) => {
                let s = g[[0]];
                let shape = self.nodes[*a].value.raw_dim();
                acc(slots, *a, ArrayD::from_elem(shape, s));
            }
            Op::MeanAll(a) => {
                let n = self.nodes[*a].value.len() as f64;
                let s = g[[0]] / n;
                let shape = self.nodes[*a].value.raw_dim();
                acc(slots, *a, ArrayD::from_elem(shape, s));
            }
            Op::DotAll(a, b) => {
                let s = g[[0]];
                let av = self.nodes[*a].value.clone();
                let bv = self.nodes[*b].value.clone();
                acc(slots, *a, bv.mapv(|v| v * s));
                acc(slots, *b, av.mapv(|v| v * s));
            }
            Op::DivScalars(a, b) => {
                let s = g[[0]];
                let av = self.nodes[*a].value[[0]];
                let bv = self.nodes[*b].value[[0]];
                acc(slots, *a, scalar(s / bv));
                acc(slots, *b, scalar(-s * av / (bv * bv)));
            }
            Op::SubScalarNode(x, sn) => {
                acc(slots, *x, g.clone());
                acc(slots, *sn, scalar(-g.sum()));
            }
            Op::SqrtScalar(a) => {
                let y = self.nodes[id].value[[0]];
                let gy = if y > 0.0 { g[[0]] * 0.5 / y } else { 0.0 };
                acc(slots, *a, scalar(gy));
            }
            Op::Roll { x, axis, shift } => {
                let gv = as3(g);
                let dim = gv.dim();
                let len = [dim.0, dim.1, dim.2][*axis];
                let back = (len - shift % len) % len;
                acc(slots, *x, roll3(&gv, *axis, back).into_dyn());
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &self,
        x: Id,
        w: Id,
        b: Id,
        stride: usize,
        pad: usize,
        g: &ArrayD<f64>,
        slots: &mut [Option<ArrayD<f64>>],
        acc: &impl Fn(&mut [Option<ArrayD<f64>>], Id, ArrayD<f64>),
    ) {
        let xv = as3(&self.nodes[x].value);
        let wv = &self.nodes[w].value;
        let (o, c, kh, kw) = (
            wv.shape()[0],
            wv.shape()[1],
            wv.shape()[2],
            wv.shape()[3],
        );
        let gv = as3(g);
        let (oh, ow) = (gv.dim().1, gv.dim().2);
        let go2 = gv
            .to_owned()
            .into_shape_with_order((o, oh * ow))
            .expect("conv grad reshape");

        if self.nodes[b].needs_grad {
            let gb: Array1<f64> = go2
                .outer_iter()
                .map(|r| r.sum())
                .collect::<Vec<f64>>()
                .into();
            acc(slots, b, gb.into_dyn());
        }
        let need_w = self.nodes[w].needs_grad;
        let need_x = self.nodes[x].needs_grad;
        if need_w {
            let cols = im2col(&xv, kh, kw, stride, pad, oh, ow);
            let gw2 = go2.dot(&cols.t()); // [O, C*kh*kw]
            let gw = gw2
                .into_shape_with_order((o, c, kh, kw))
                .expect("conv weight grad reshape");
            acc(slots, w, gw.into_dyn());
        }
        if need_x {
            let w2 = wv
                .view()
                .into_shape_with_order((o, c * kh * kw))
                .expect("conv kernel layout");
            let gcols = w2.t().dot(&go2); // [C*kh*kw, OH*OW]
            let gx = col2im(&gcols, xv.dim(), kh, kw, stride, pad, oh, ow);
            acc(slots, x, gx.into_dyn());
        }
    }
}

const LN_EPS: f64 = 1e-6;

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

fn scalar(v: f64) -> ArrayD<f64> {
    ArrayD::from_elem(ndarray::IxDyn(&[1]), v)
}

fn as1(a: &ArrayD<f64>) -> ndarray::ArrayView1<'_, f64> {
    a.view().into_dimensionality::<Ix1>().expect("rank-1 value")
}

fn as2(a: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
    a.view().into_dimensionality::<Ix2>().expect("rank-2 value")
}

fn as3(a: &ArrayD<f64>) -> ndarray::ArrayView3<'_, f64> {
    a.view().into_dimensionality::<Ix3>().expect("rank-3 value")
}

fn im2col(
    x: &ndarray::ArrayView3<'_, f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::<f64>::zeros((c * kh * kw, oh * ow));
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[[row, oy * ow + ox]] = x[[ci, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    gcols: &Array2<f64>,
    xdim: (usize, usize, usize),
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array3<f64> {
    let (c, h, w) = xdim;
    let mut gx = Array3::<f64>::zeros((c, h, w));
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        gx[[ci, iy as usize, ix as usize]] += gcols[[row, oy * ow + ox]];
                    }
                }
            }
        }
    }
    gx
}

fn roll3(x: &ndarray::ArrayView3<'_, f64>, axis: usize, shift: usize) -> Array3<f64> {
    let dim = x.dim();
    let len = [dim.0, dim.1, dim.2][axis];
    let shift = shift % len;
    let mut out = Array3::<f64>::zeros(dim);
    for ci in 0..dim.0 {
        for y in 0..dim.1 {
            for xx in 0..dim.2 {
                let mut idx = [ci, y, xx];
                idx[axis] = (idx[axis] + shift) % len;
                out[idx] = x[[ci, y, xx]];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_arr(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central finite differences of `f` at `x0`, compared against the
    /// gradient the graph reports for the same leaf.
    fn check_grad(shape: &[usize], f: impl Fn(&mut Graph, Id) -> Id, seed: u64, tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = rand_arr(shape, &mut rng);

        let mut g = Graph::new();
        let x = g.leaf(x0.clone(), true);
        let y = f(&mut g, x);
        assert_eq!(g.value(y).len(), 1, "test function must be scalar");
        let grads = g.backward(y);
        let analytic = grads.get(x).expect("gradient for input").clone();

        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp.as_slice_mut().unwrap()[i] += h;
            xm.as_slice_mut().unwrap()[i] -= h;
            let fp = {
                let mut g = Graph::new();
                let x = g.leaf(xp, true);
                let y = f(&mut g, x);
                g.value(y)[[0]]
            };
            let fm = {
                let mut g = Graph::new();
                let x = g.leaf(xm, true);
                let y = f(&mut g, x);
                g.value(y)[[0]]
            };
            let fd = (fp - fm) / (2.0 * h);
            let an = analytic.as_slice().unwrap()[i];
            let denom = fd.abs().max(an.abs()).max(1e-4);
            max_rel = max_rel.max((fd - an).abs() / denom);
        }
        assert!(max_rel < tol, "max relative grad error {max_rel} > {tol}");
    }

    #[test]
    fn grad_elementwise_chain() {
        check_grad(
            &[3, 4],
            |g, x| {
                let a = g.scale(x, 1.7);
                let b = g.add_scalar(a, 0.3);
                let c = g.silu(b);
                let d = g.square(c);
                g.sum_all(d)
            },
            1,
            1e-5,
        );
    }

    #[test]
    fn grad_mul_sub_mean() {
        check_grad(
            &[5],
            |g, x| {
                let a = g.mul(x, x);
                let b = g.sub(a, x);
                g.mean_all(b)
            },
            2,
            1e-5,
        );
    }

    #[test]
    fn grad_matmul_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let other = rand_arr(&[4, 3], &mut rng);
        let other2 = other.clone();
        check_grad(
            &[3, 4],
            move |g, x| {
                let w = g.constant(other.clone());
                let y = g.matmul(x, w); // [3,3]
                let z = g.matmul_nt(y, y); // [3,3]
                g.sum_all(z)
            },
            4,
            1e-5,
        );
        // gradient w.r.t. the second operand
        let mut g = Graph::new();
        let a0 = rand_arr(&[2, 4], &mut ChaCha8Rng::seed_from_u64(5));
        let a = g.constant(a0);
        let w = g.leaf(other2, true);
        let y = g.matmul(a, w);
        let s = g.sum_all(y);
        let grads = g.backward(s);
        assert!(grads.get(w).is_some());
    }

    #[test]
    fn grad_conv2d_stride1_and_2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w1 = rand_arr(&[3, 2, 3, 3], &mut rng);
        let b1 = rand_arr(&[3], &mut rng);
        for &stride in &[1usize, 2] {
            let w1 = w1.clone();
            let b1 = b1.clone();
            check_grad(
                &[2, 6, 6],
                move |g, x| {
                    let w = g.constant(w1.clone());
                    let b = g.constant(b1.clone());
                    let y = g.conv2d(x, w, b, stride, 1);
                    let y2 = g.square(y);
                    g.sum_all(y2)
                },
                8,
                1e-5,
            );
        }
    }

    #[test]
    fn grad_conv2d_weights_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = rand_arr(&[2, 5, 5], &mut rng);
        let x1 = x0.clone();
        check_grad(
            &[3, 2, 3, 3],
            move |g, w| {
                let x = g.constant(x0.clone());
                let b = g.constant(ArrayD::zeros(IxDyn(&[3])));
                let y = g.conv2d(x, w, b, 1, 1);
                let y2 = g.square(y);
                g.sum_all(y2)
            },
            10,
            1e-5,
        );
        check_grad(
            &[3],
            move |g, b| {
                let x = g.constant(x1.clone());
                let w = g.constant(rand_arr(
                    &[3, 2, 1, 1],
                    &mut ChaCha8Rng::seed_from_u64(11),
                ));
                let y = g.conv2d(x, w, b, 1, 0);
                let y2 = g.square(y);
                g.sum_all(y2)
            },
            12,
            1e-5,
        );
    }

    #[test]
    fn grad_layer_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gamma = rand_arr(&[6], &mut rng);
        let beta = rand_arr(&[6], &mut rng);
        check_grad(
            &[4, 6],
            move |g, x| {
                let ga = g.leaf(gamma.clone(), true);
                let be = g.leaf(beta.clone(), true);
                let y = g.layer_norm_rows(x, ga, be);
                let y2 = g.square(y);
                g.sum_all(y2)
            },
            14,
            1e-4,
        );
    }

    #[test]
    fn grad_softmax_masked() {
        let mask = Arc::new(vec![true, true, false, true, true]);
        check_grad(
            &[3, 5],
            move |g, x| {
                let y = g.softmax_rows_masked(x, Arc::clone(&mask));
                let y2 = g.square(y);
                g.sum_all(y2)
            },
            15,
            1e-5,
        );
    }

    #[test]
    fn softmax_masked_rows_sum_to_one_and_masked_zero() {
        let mut g = Graph::new();
        let x = g.leaf(rand_arr(&[4, 6], &mut ChaCha8Rng::seed_from_u64(16)), false);
        let mask = Arc::new(vec![true, false, true, true, false, true]);
        let y = g.softmax_rows_masked(x, mask);
        let yv = as2(g.value(y));
        for row in yv.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert_eq!(row[1], 0.0);
            assert_eq!(row[4], 0.0);
        }
    }

    #[test]
    fn grad_tokens_upsample_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let bias = rand_arr(&[3], &mut rng);
        check_grad(
            &[3, 4, 4],
            move |g, x| {
                let b = g.leaf(bias.clone(), true);
                let xb = g.add_channel_bias(x, b);
                let up = g.upsample2x(xb);
                let tok = g.to_tokens(up);
                let back = g.from_tokens(tok, 8, 8);
                let s = g.square(back);
                g.sum_all(s)
            },
            18,
            1e-5,
        );
    }

    #[test]
    fn grad_concat_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let other = rand_arr(&[2, 4], &mut rng);
        check_grad(
            &[2, 4],
            move |g, x| {
                let o = g.constant(other.clone());
                let r = g.concat_rows(x, o);
                let c = g.concat_cols(r, r);
                let s = g.slice_cols(c, 2, 4);
                let s2 = g.square(s);
                g.sum_all(s2)
            },
            20,
            1e-5,
        );
    }

    #[test]
    fn grad_autocorr_style_ops() {
        check_grad(
            &[1, 4, 6],
            |g, x| {
                let m = g.mean_all(x);
                let centered = g.sub_scalar_node(x, m);
                let rolled = g.roll(centered, 2, 2);
                let num = g.dot_all(centered, rolled);
                let den = g.dot_all(centered, centered);
                let rho = g.div_scalars(num, den);
                let r2 = g.square(rho);
                let m2 = g.square(m);
                let t = g.add(r2, m2);
                g.sum_all(t)
            },
            21,
            1e-4,
        );
    }

    #[test]
    fn grad_sqrt_scalar_and_zero_guard() {
        check_grad(
            &[4],
            |g, x| {
                let s = g.square(x);
                let total = g.sum_all(s);
                g.sqrt_scalar(total)
            },
            22,
            1e-5,
        );
        // at exactly zero the gradient is defined as zero
        let mut g = Graph::new();
        let x = g.leaf(ArrayD::zeros(IxDyn(&[3])), true);
        let s = g.square(x);
        let total = g.sum_all(s);
        let r = g.sqrt_scalar(total);
        let grads = g.backward(r);
        assert!(grads.get(x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_matches_direct_computation() {
        // 1x1 input patch, known kernel: out = w*x + b
        let mut g = Graph::new();
        let x = g.constant(ArrayD::from_shape_vec(IxDyn(&[1, 1, 1]), vec![2.0]).unwrap());
        let w = g.constant(ArrayD::from_shape_vec(IxDyn(&[1, 1, 1, 1]), vec![3.0]).unwrap());
        let b = g.constant(ArrayD::from_shape_vec(IxDyn(&[1]), vec![0.5]).unwrap());
        let y = g.conv2d(x, w, b, 1, 0);
        assert!((g.value(y)[[0, 0, 0]] - 6.5).abs() < 1e-12);
    }

    #[test]
    fn roll_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x0 = rand_arr(&[2, 3, 5], &mut rng);
        let mut g = Graph::new();
        let x = g.constant(x0.clone());
        let r = g.roll(x, 2, 2);
        let rb = g.roll(r, 2, 3);
        assert_eq!(g.value(rb), &x0);
    }
}
