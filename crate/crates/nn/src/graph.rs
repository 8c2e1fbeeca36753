//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value plus whatever it needs
//! for the backward pass. [`Graph::backward`] walks the tape in reverse and
//! returns gradients for every leaf that requires them.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{col2im, col2im_rows, im2col, im2col_rows, ConvGeom};
use crate::error::{shape_err, NnError, Result};
use crate::gemm::{gemm, gemm_strided};
use crate::params::ParamStore;
use crate::tensor::{strides, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    BatchMatmul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Reshape(Var),
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    NormalizeRows {
        x: Var,
        eps: f64,
    },
    Fov {
        gaze: Var,
        dirs: Arc<Vec<f64>>,
        alpha: f64,
    },
    CosineLoss {
        pred: Var,
        target: Vec<f64>,
    },
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
    Mean(Var),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Batch statistics produced by a training-mode batch norm, used to update
/// running averages once the step is committed.
#[derive(Clone, Debug)]
pub struct BufferUpdate {
    pub name: String,
    pub value: Tensor,
}

pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
    rng: ChaCha8Rng,
    params: HashMap<String, Var>,
    buffer_updates: Vec<BufferUpdate>,
}

/// Gradients of a scalar with respect to the leaves of a graph.
pub struct Gradients {
    by_node: HashMap<Var, Tensor>,
    params: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(&v)
    }

    /// Gradients keyed by parameter name. Parameters that took part in the
    /// forward pass but received no gradient are reported as zeros.
    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.params
    }
}

impl Graph {
    /// `seed` drives dropout masks; evaluation mode never draws from it.
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: HashMap::new(),
            buffer_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn take_buffer_updates(&mut self) -> Vec<BufferUpdate> {
        std::mem::take(&mut self.buffer_updates)
    }

    pub(crate) fn push_buffer_update(&mut self, name: String, value: Tensor) {
        self.buffer_updates.push(BufferUpdate { name, value });
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input that collects a gradient.
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf for a named parameter. Repeated lookups share one node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.shared(name)?;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, c), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Inverted dropout. Identity in evaluation mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if self.mode == Mode::Eval || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = self.value(x).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let src = self.value(x);
        let mut out = src.clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        let rg = self.rg(x);
        self.push(out, Op::Dropout { x, mask }, rg)
    }

    /// `y = x W^T + b` over the last axis of `x`; `w` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.rank() != 2 || tx.rank() == 0 || *tx.shape().last().unwrap() != tw.dim(1) {
            return Err(shape_err("linear", format!("x {:?}, w {:?}", tx.shape(), tw.shape())));
        }
        let (out_dim, in_dim) = (tw.dim(0), tw.dim(1));
        let rows = tx.numel() / in_dim;
        let mut y = vec![0.0; rows * out_dim];
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.shape() != [out_dim] {
                return Err(shape_err("linear", format!("bias {:?}", tb.shape())));
            }
            for r in 0..rows {
                y[r * out_dim..(r + 1) * out_dim].copy_from_slice(tb.data());
            }
        }
        gemm(rows, in_dim, out_dim, 1.0, tx.data(), false, tw.data(), true, 1.0, &mut y);
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = out_dim;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(shape, y)?, Op::Linear { x, w, b }, rg))
    }

    /// 2D convolution, NCHW input, weight `[out, in, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.rank() != 4 || tw.rank() != 4 || tx.dim(1) != tw.dim(1) || tw.dim(2) != tw.dim(3) {
            return Err(shape_err("conv2d", format!("x {:?}, w {:?}", tx.shape(), tw.shape())));
        }
        let (n, c, h, wd) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
        let o = tw.dim(0);
        let geom = ConvGeom::new(c, h, wd, tw.dim(2), stride, pad)
            .ok_or_else(|| shape_err("conv2d", format!("kernel larger than input {h}x{wd}")))?;
        let (rows, l) = (geom.rows(), geom.cols());
        let mut y = vec![0.0; n * o * l];
        let cr = geom.chunk_rows();
        let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![0.0; rows * cr * geom.ow] };
        let xin = c * h * wd;
        for i in 0..n {
            let xs = &tx.data()[i * xin..(i + 1) * xin];
            let ys = &mut y[i * o * l..(i + 1) * o * l];
            if geom.is_pointwise() {
                gemm(o, rows, l, 1.0, tw.data(), false, xs, false, 0.0, ys);
                continue;
            }
            for oy0 in (0..geom.oh).step_by(cr) {
                let nc = cr.min(geom.oh - oy0) * geom.ow;
                let chunk = &mut cols[..rows * nc];
                im2col_rows(xs, &geom, oy0, nc / geom.ow, chunk);
                gemm_strided(o, rows, nc, 1.0, tw.data(), (rows, 1), chunk, (nc, 1), 0.0, &mut ys[oy0 * geom.ow..], l);
            }
        }
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.shape() != [o] {
                return Err(shape_err("conv2d", format!("bias {:?}", tb.shape())));
            }
            add_channel_bias(&mut y, tb.data(), n, o, l);
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let out = Tensor::new(vec![n, o, geom.oh, geom.ow], y)?;
        Ok(self.push(out, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Transposed convolution, weight `[in, out, k, k]`;
    /// output size `(h - 1) * stride - 2 * pad + k + output_padding`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.rank() != 4 || tw.rank() != 4 || tx.dim(1) != tw.dim(0) || tw.dim(2) != tw.dim(3) {
            return Err(shape_err("conv_transpose2d", format!("x {:?}, w {:?}", tx.shape(), tw.shape())));
        }
        if output_padding >= stride {
            return Err(shape_err("conv_transpose2d", "output_padding must be < stride"));
        }
        let (n, cin, h, wd) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
        let (cout, k) = (tw.dim(1), tw.dim(2));
        let oh = ((h - 1) * stride + k + output_padding)
            .checked_sub(2 * pad)
            .ok_or_else(|| shape_err("conv_transpose2d", "padding too large"))?;
        let ow = ((wd - 1) * stride + k + output_padding) - 2 * pad;
        let geom = ConvGeom::new(cout, oh, ow, k, stride, pad)
            .filter(|g| g.oh == h && g.ow == wd)
            .ok_or_else(|| shape_err("conv_transpose2d", "inconsistent geometry"))?;
        let (rows, l) = (geom.rows(), geom.cols());
        let mut y = vec![0.0; n * cout * oh * ow];
        let mut cols = vec![0.0; rows * l];
        for i in 0..n {
            let xs = &tx.data()[i * cin * l..(i + 1) * cin * l];
            gemm(rows, cin, l, 1.0, tw.data(), true, xs, false, 0.0, &mut cols);
            col2im(&cols, &geom, &mut y[i * cout * oh * ow..(i + 1) * cout * oh * ow]);
        }
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.shape() != [cout] {
                return Err(shape_err("conv_transpose2d", format!("bias {:?}", tb.shape())));
            }
            add_channel_bias(&mut y, tb.data(), n, cout, oh * ow);
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let out = Tensor::new(vec![n, cout, oh, ow], y)?;
        Ok(self.push(out, Op::ConvTranspose2d { x, w, b, geom }, rg))
    }

    /// Batch normalization over `N x H x W` per channel of an NCHW tensor (or
    /// over `N` for `[N, C]`). With `running = None` the batch statistics are
    /// used and returned as `(mean, unbiased variance)`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&Tensor, &Tensor)>,
        eps: f64,
    ) -> Result<(Var, Option<(Tensor, Tensor)>)> {
        let tx = self.value(x);
        if tx.rank() != 4 && tx.rank() != 2 {
            return Err(shape_err("batch_norm", format!("x {:?}", tx.shape())));
        }
        let (n, c) = (tx.dim(0), tx.dim(1));
        let l: usize = tx.shape()[2..].iter().product();
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.shape() != [c] || tb.shape() != [c] {
            return Err(shape_err("batch_norm", "affine parameters do not match channels"));
        }
        let m = (n * l) as f64;
        let xd = tx.data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        let mut stats = None;
        match running {
            Some((rm, rv)) => {
                if rm.shape() != [c] || rv.shape() != [c] {
                    return Err(shape_err("batch_norm", "running statistics do not match channels"));
                }
                mean.copy_from_slice(rm.data());
                var.copy_from_slice(rv.data());
            }
            None => {
                for i in 0..n {
                    for ch in 0..c {
                        let s = &xd[(i * c + ch) * l..(i * c + ch + 1) * l];
                        mean[ch] += s.iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|v| *v /= m);
                for i in 0..n {
                    for ch in 0..c {
                        let s = &xd[(i * c + ch) * l..(i * c + ch + 1) * l];
                        var[ch] += s.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= m);
                let unbiased = var.iter().map(|v| if m > 1.0 { v * m / (m - 1.0) } else { *v }).collect();
                stats = Some((Tensor::new(vec![c], mean.clone())?, Tensor::new(vec![c], unbiased)?));
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        let mut y = vec![0.0; xd.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * l;
                let (g, b) = (tg.data()[ch], tb.data()[ch]);
                for j in off..off + l {
                    let h = (xd[j] - mean[ch]) * inv_std[ch];
                    xhat[j] = h;
                    y[j] = g * h + b;
                }
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), y)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let batch_stats = running.is_none();
        let v = self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats }, rg);
        Ok((v, stats))
    }

    /// Max pooling with implicit `-inf` padding; ties resolve to the first
    /// maximum in scan order.
    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 4 {
            return Err(shape_err("max_pool2d", format!("x {:?}", tx.shape())));
        }
        let (n, c, h, w) = (tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3));
        let g = ConvGeom::new(1, h, w, k, stride, pad).ok_or_else(|| shape_err("max_pool2d", "window larger than input"))?;
        let (oh, ow) = (g.oh, g.ow);
        let mut y = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0usize; y.len()];
        let xd = tx.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut idx = usize::MAX;
                    for ky in 0..k {
                        let Some(iy) = (oy * stride + ky).checked_sub(pad).filter(|&v| v < h) else { continue };
                        for kx in 0..k {
                            let Some(ix) = (ox * stride + kx).checked_sub(pad).filter(|&v| v < w) else { continue };
                            let v = xd[base + iy * w + ix];
                            if v > best || idx == usize::MAX {
                                best = v;
                                idx = base + iy * w + ix;
                            }
                        }
                    }
                    let o = plane * oh * ow + oy * ow + ox;
                    y[o] = best;
                    argmax[o] = idx;
                }
            }
        }
        let rg = self.rg(x);
        let out = Tensor::new(vec![n, c, oh, ow], y)?;
        Ok(self.push(out, Op::MaxPool { x, argmax }, rg))
    }

    /// `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 4 {
            return Err(shape_err("global_avg_pool", format!("x {:?}", tx.shape())));
        }
        let (n, c) = (tx.dim(0), tx.dim(1));
        let l = tx.dim(2) * tx.dim(3);
        let y: Vec<f64> = tx.data().chunks(l).map(|s| s.iter().sum::<f64>() / l as f64).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![n, c], y)?, Op::GlobalAvgPool(x), rg))
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let d = *tx.shape().last().ok_or_else(|| shape_err("layer_norm", "scalar input"))?;
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(shape_err("layer_norm", "affine parameters do not match last axis"));
        }
        let rows = tx.numel() / d;
        let mut xhat = vec![0.0; tx.numel()];
        let mut y = vec![0.0; tx.numel()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let s = &tx.data()[r * d..(r + 1) * d];
            let mean = s.iter().sum::<f64>() / d as f64;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (s[j] - mean) * is;
                xhat[r * d + j] = h;
                y[r * d + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), y)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, rg))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let d = *tx.shape().last().unwrap_or(&1);
        let mut y = tx.data().to_vec();
        for row in y.chunks_mut(d) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let out = Tensor::new(tx.shape().to_vec(), y).expect("same shape");
        let rg = self.rg(x);
        self.push(out, Op::Softmax(x), rg)
    }

    /// `[B, M, K] x [B, K, N] -> [B, M, N]`; with `trans_b` the right operand
    /// is given as `[B, N, K]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 3 || tb.rank() != 3 || ta.dim(0) != tb.dim(0) {
            return Err(shape_err("batch_matmul", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let (bs, m, k) = (ta.dim(0), ta.dim(1), ta.dim(2));
        let (kb, n) = if trans_b { (tb.dim(2), tb.dim(1)) } else { (tb.dim(1), tb.dim(2)) };
        if kb != k {
            return Err(shape_err("batch_matmul", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let mut y = vec![0.0; bs * m * n];
        for i in 0..bs {
            gemm(
                m,
                k,
                n,
                1.0,
                &ta.data()[i * m * k..(i + 1) * m * k],
                false,
                &tb.data()[i * k * n..(i + 1) * k * n],
                trans_b,
                0.0,
                &mut y[i * m * n..(i + 1) * m * n],
            );
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![bs, m, n], y)?, Op::BatchMatmul { a, b, trans_b }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let out = permute(self.value(x), axes)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Permute { x, axes: axes.to_vec() }, rg))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let parts: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let out = concat(&parts, axis)?;
        let rg = xs.iter().any(|&v| self.rg(v));
        Ok(self.push(out, Op::Concat { xs: xs.to_vec(), axis }, rg))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = narrow(self.value(x), axis, start, len)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Narrow { x, axis, start }, rg))
    }

    /// Rows of a `[N, D]` tensor divided by `max(norm, eps)`.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(shape_err("normalize_rows", format!("x {:?}", tx.shape())));
        }
        let d = tx.dim(1);
        let mut y = tx.data().to_vec();
        for row in y.chunks_mut(d) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let out = Tensor::new(tx.shape().to_vec(), y)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::NormalizeRows { x, eps }, rg))
    }

    /// Field-of-view maps from gaze vectors `[N, 3]` and per-pixel unit
    /// eye-to-point directions `dirs` (`N * P * 3`, zero rows for invalid
    /// pixels). Output `[N, 2, height, width]` holds `V` and
    /// `max(V, 0)^alpha`.
    pub fn fov(&mut self, gaze: Var, dirs: Arc<Vec<f64>>, height: usize, width: usize, alpha: f64) -> Result<Var> {
        let tg = self.value(gaze);
        if tg.rank() != 2 || tg.dim(1) != 3 {
            return Err(shape_err("fov", format!("gaze {:?}", tg.shape())));
        }
        let n = tg.dim(0);
        let p = height * width;
        if dirs.len() != n * p * 3 {
            return Err(shape_err("fov", format!("{} direction values for {n}x{p} pixels", dirs.len())));
        }
        let mut y = vec![0.0; n * 2 * p];
        for i in 0..n {
            let g = &tg.data()[i * 3..i * 3 + 3];
            let d = &dirs[i * p * 3..(i + 1) * p * 3];
            let (vs, vh) = y[i * 2 * p..(i + 1) * 2 * p].split_at_mut(p);
            for j in 0..p {
                let v = d[j * 3] * g[0] + d[j * 3 + 1] * g[1] + d[j * 3 + 2] * g[2];
                vs[j] = v;
                vh[j] = v.max(0.0).powf(alpha);
            }
        }
        let rg = self.rg(gaze);
        let out = Tensor::new(vec![n, 2, height, width], y)?;
        Ok(self.push(out, Op::Fov { gaze, dirs, alpha }, rg))
    }

    /// Mean over the batch of `1 - <target, pred>` for `[N, D]` rows.
    pub fn cosine_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let tp = self.value(pred);
        if tp.shape() != target.shape() || tp.rank() != 2 {
            return Err(shape_err("cosine_loss", format!("{:?} vs {:?}", tp.shape(), target.shape())));
        }
        let (n, d) = (tp.dim(0), tp.dim(1));
        let mut s = 0.0;
        for i in 0..n {
            let dot: f64 = (0..d).map(|j| tp.data()[i * d + j] * target.data()[i * d + j]).sum();
            s += 1.0 - dot;
        }
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(s / n as f64), Op::CosineLoss { pred, target: target.data().to_vec() }, rg))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let tp = self.value(pred);
        if tp.shape() != target.shape() {
            return Err(shape_err("mse", format!("{:?} vs {:?}", tp.shape(), target.shape())));
        }
        let s: f64 = tp.data().iter().zip(target.data()).map(|(a, b)| (a - b).powi(2)).sum();
        let rg = self.rg(pred);
        let out = Tensor::scalar(s / tp.numel() as f64);
        Ok(self.push(out, Op::Mse { pred, target: target.data().to_vec() }, rg))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let m = tx.data().iter().sum::<f64>() / tx.numel() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Reverse-mode pass from `root`, seeded with ones.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.shape(root).to_vec(), 1.0));
        let mut by_node = HashMap::new();
        for i in (0..=root.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                if !gy.is_finite() {
                    return Err(NnError::NonFinite("gradient"));
                }
                by_node.insert(Var(i), gy);
                continue;
            }
            self.backprop(i, &gy, &mut grads)?;
        }
        let params = self
            .params
            .iter()
            .map(|(name, v)| {
                let g = by_node.get(v).cloned().unwrap_or_else(|| Tensor::zeros(self.shape(*v).to_vec()));
                (name.clone(), g)
            })
            .collect();
        Ok(Gradients { by_node, params })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop(&self, i: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, gy.clone());
                self.acc(grads, *b, gy.clone());
            }
            Op::Scale(x, c) => self.acc(grads, *x, gy.map(|v| v * c)),
            Op::Relu(x) => {
                let mut g = gy.clone();
                for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
                    if *yv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                self.acc(grads, *x, g);
            }
            Op::Sigmoid(x) => {
                let mut g = gy.clone();
                for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv *= yv * (1.0 - yv);
                }
                self.acc(grads, *x, g);
            }
            Op::Dropout { x, mask } => {
                let mut g = gy.clone();
                for (gv, m) in g.data_mut().iter_mut().zip(mask) {
                    *gv *= m;
                }
                self.acc(grads, *x, g);
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (out_dim, in_dim) = (tw.dim(0), tw.dim(1));
                let rows = tx.numel() / in_dim;
                if self.rg(*x) {
                    let mut gx = vec![0.0; rows * in_dim];
                    gemm(rows, out_dim, in_dim, 1.0, gy.data(), false, tw.data(), false, 0.0, &mut gx);
                    self.acc(grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                if self.rg(*w) {
                    let mut gw = vec![0.0; out_dim * in_dim];
                    gemm(out_dim, rows, in_dim, 1.0, gy.data(), true, tx.data(), false, 0.0, &mut gw);
                    self.acc(grads, *w, Tensor::new(tw.shape().to_vec(), gw)?);
                }
                if let Some(b) = b {
                    let mut gb = vec![0.0; out_dim];
                    for row in gy.data().chunks(out_dim) {
                        for (a, v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    self.acc(grads, *b, Tensor::new(vec![out_dim], gb)?);
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let n = tx.dim(0);
                let o = tw.dim(0);
                let (rows, l) = (geom.rows(), geom.cols());
                let xin = geom.c * geom.h * geom.w;
                let need_x = self.rg(*x);
                let need_w = self.rg(*w);
                let mut gw = vec![0.0; o * rows];
                let mut gx = if need_x { vec![0.0; tx.numel()] } else { Vec::new() };
                let cr = geom.chunk_rows();
                let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![0.0; rows * cr * geom.ow] };
                for s in 0..n {
                    let gys = &gy.data()[s * o * l..(s + 1) * o * l];
                    let xs = &tx.data()[s * xin..(s + 1) * xin];
                    if geom.is_pointwise() {
                        if need_w {
                            gemm(o, l, rows, 1.0, gys, false, xs, true, 1.0, &mut gw);
                        }
                        if need_x {
                            gemm(rows, o, l, 1.0, tw.data(), true, gys, false, 0.0, &mut gx[s * xin..(s + 1) * xin]);
                        }
                        continue;
                    }
                    for oy0 in (0..geom.oh).step_by(cr) {
                        let count = cr.min(geom.oh - oy0);
                        let nc = count * geom.ow;
                        let chunk = &mut cols[..rows * nc];
                        let gyc = &gys[oy0 * geom.ow..];
                        if need_w {
                            im2col_rows(xs, geom, oy0, count, chunk);
                            gemm_strided(o, nc, rows, 1.0, gyc, (l, 1), chunk, (1, nc), 1.0, &mut gw, rows);
                        }
                        if need_x {
                            gemm_strided(rows, o, nc, 1.0, tw.data(), (1, rows), gyc, (l, 1), 0.0, chunk, nc);
                            col2im_rows(chunk, geom, oy0, count, &mut gx[s * xin..(s + 1) * xin]);
                        }
                    }
                }
                if need_w {
                    self.acc(grads, *w, Tensor::new(tw.shape().to_vec(), gw)?);
                }
                if need_x {
                    self.acc(grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                if let Some(b) = b {
                    self.acc(grads, *b, channel_sums(gy.data(), n, o, l));
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (n, cin) = (tx.dim(0), tx.dim(1));
                let (rows, l) = (geom.rows(), geom.cols());
                let yin = geom.c * geom.h * geom.w;
                let need_x = self.rg(*x);
                let need_w = self.rg(*w);
                let mut gx = if need_x { vec![0.0; tx.numel()] } else { Vec::new() };
                let mut gw = vec![0.0; tw.numel()];
                let mut cols = vec![0.0; rows * l];
                for s in 0..n {
                    im2col(&gy.data()[s * yin..(s + 1) * yin], geom, &mut cols);
                    if need_x {
                        gemm(cin, rows, l, 1.0, tw.data(), false, &cols, false, 0.0, &mut gx[s * cin * l..(s + 1) * cin * l]);
                    }
                    if need_w {
                        let xs = &tx.data()[s * cin * l..(s + 1) * cin * l];
                        gemm(cin, l, rows, 1.0, xs, false, &cols, true, 1.0, &mut gw);
                    }
                }
                if need_w {
                    self.acc(grads, *w, Tensor::new(tw.shape().to_vec(), gw)?);
                }
                if need_x {
                    self.acc(grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                if let Some(b) = b {
                    self.acc(grads, *b, channel_sums(gy.data(), n, geom.c, geom.h * geom.w));
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let tx = self.value(*x);
                let (n, c) = (tx.dim(0), tx.dim(1));
                let l: usize = tx.shape()[2..].iter().product();
                let m = (n * l) as f64;
                let g = self.value(*gamma).data();
                let gyd = gy.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * l;
                        for j in off..off + l {
                            dbeta[ch] += gyd[j];
                            dgamma[ch] += gyd[j] * xhat[j];
                        }
                    }
                }
                if self.rg(*x) {
                    let mut gx = vec![0.0; tx.numel()];
                    for s in 0..n {
                        for ch in 0..c {
                            let off = (s * c + ch) * l;
                            if *batch_stats {
                                // dx = g*inv_std/m * (m*dy - sum(dy) - xhat*sum(dy*xhat))
                                let k = g[ch] * inv_std[ch] / m;
                                for j in off..off + l {
                                    gx[j] = k * (m * gyd[j] - dbeta[ch] - xhat[j] * dgamma[ch]);
                                }
                            } else {
                                let k = g[ch] * inv_std[ch];
                                for j in off..off + l {
                                    gx[j] = k * gyd[j];
                                }
                            }
                        }
                    }
                    self.acc(grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
                }
                self.acc(grads, *gamma, Tensor::new(vec![c], dgamma)?);
                self.acc(grads, *beta, Tensor::new(vec![c], dbeta)?);
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = Tensor::zeros(self.shape(*x).to_vec());
                let d = gx.data_mut();
                for (g, &idx) in gy.data().iter().zip(argmax) {
                    d[idx] += g;
                }
                self.acc(grads, *x, gx);
            }
            Op::GlobalAvgPool(x) => {
                let shape = self.shape(*x).to_vec();
                let l = shape[2] * shape[3];
                let mut gx = Vec::with_capacity(l * gy.numel());
                for &g in gy.data() {
                    gx.extend(std::iter::repeat_n(g / l as f64, l));
                }
                self.acc(grads, *x, Tensor::new(shape, gx)?);
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let shape = self.shape(*x).to_vec();
                let d = *shape.last().unwrap();
                let g = self.value(*gamma).data();
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut gx = vec![0.0; gy.numel()];
                for (r, &is) in inv_std.iter().enumerate() {
                    let gyr = &gy.data()[r * d..(r + 1) * d];
                    let xh = &xhat[r * d..(r + 1) * d];
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..d {
                        dgamma[j] += gyr[j] * xh[j];
                        dbeta[j] += gyr[j];
                        let dxh = gyr[j] * g[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    for j in 0..d {
                        let dxh = gyr[j] * g[j];
                        gx[r * d + j] = is / d as f64 * (d as f64 * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
                self.acc(grads, *x, Tensor::new(shape, gx)?);
                self.acc(grads, *gamma, Tensor::new(vec![d], dgamma)?);
                self.acc(grads, *beta, Tensor::new(vec![d], dbeta)?);
            }
            Op::Softmax(x) => {
                let d = *y.shape().last().unwrap_or(&1);
                let mut gx = gy.clone();
                for (gr, yr) in gx.data_mut().chunks_mut(d).zip(y.data().chunks(d)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (gv, yv) in gr.iter_mut().zip(yr) {
                        *gv = yv * (*gv - dot);
                    }
                }
                self.acc(grads, *x, gx);
            }
            Op::BatchMatmul { a, b, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (bs, m, k) = (ta.dim(0), ta.dim(1), ta.dim(2));
                let n = y.dim(2);
                let gyd = gy.data();
                if self.rg(*a) {
                    let mut ga = vec![0.0; ta.numel()];
                    for s in 0..bs {
                        let bb = &tb.data()[s * k * n..(s + 1) * k * n];
                        // dA = dY * op(B)^T
                        gemm(m, n, k, 1.0, &gyd[s * m * n..(s + 1) * m * n], false, bb, !trans_b, 0.0, &mut ga[s * m * k..(s + 1) * m * k]);
                    }
                    self.acc(grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; tb.numel()];
                    for s in 0..bs {
                        let aa = &ta.data()[s * m * k..(s + 1) * m * k];
                        let gys = &gyd[s * m * n..(s + 1) * m * n];
                        let out = &mut gb[s * k * n..(s + 1) * k * n];
                        if *trans_b {
                            gemm(n, m, k, 1.0, gys, true, aa, false, 0.0, out);
                        } else {
                            gemm(k, m, n, 1.0, aa, true, gys, false, 0.0, out);
                        }
                    }
                    self.acc(grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
                }
            }
            Op::Reshape(x) => {
                let g = gy.clone().reshape(self.shape(*x).to_vec())?;
                self.acc(grads, *x, g);
            }
            Op::Permute { x, axes } => {
                let mut inv = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inv[a] = i;
                }
                self.acc(grads, *x, permute(gy, &inv)?);
            }
            Op::Concat { xs, axis } => {
                let mut start = 0;
                for &v in xs {
                    let len = self.shape(v)[*axis];
                    if self.rg(v) {
                        self.acc(grads, v, narrow(gy, *axis, start, len)?);
                    }
                    start += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let shape = self.shape(*x).to_vec();
                let mut gx = Tensor::zeros(shape.clone());
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let len = gy.shape()[*axis];
                let full = shape[*axis];
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    let src = o * len * inner;
                    gx.data_mut()[dst..dst + len * inner].copy_from_slice(&gy.data()[src..src + len * inner]);
                }
                self.acc(grads, *x, gx);
            }
            Op::NormalizeRows { x, eps } => {
                let tx = self.value(*x);
                let d = tx.dim(1);
                let mut gx = vec![0.0; tx.numel()];
                for r in 0..tx.dim(0) {
                    let xr = &tx.data()[r * d..(r + 1) * d];
                    let yr = &y.data()[r * d..(r + 1) * d];
                    let gr = &gy.data()[r * d..(r + 1) * d];
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > *eps {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            gx[r * d + j] = (gr[j] - yr[j] * dot) / norm;
                        }
                    } else {
                        for j in 0..d {
                            gx[r * d + j] = gr[j] / eps;
                        }
                    }
                }
                self.acc(grads, *x, Tensor::new(tx.shape().to_vec(), gx)?);
            }
            Op::Fov { gaze, dirs, alpha } => {
                let n = self.shape(*gaze)[0];
                let p = y.numel() / (2 * n);
                let mut gg = vec![0.0; n * 3];
                for s in 0..n {
                    let v = &y.data()[s * 2 * p..s * 2 * p + p];
                    let gv = &gy.data()[s * 2 * p..s * 2 * p + p];
                    let gvh = &gy.data()[s * 2 * p + p..(s + 1) * 2 * p];
                    let d = &dirs[s * p * 3..(s + 1) * p * 3];
                    let mut acc = [0.0; 3];
                    for j in 0..p {
                        let mut gj = gv[j];
                        if v[j] > 0.0 {
                            gj += gvh[j] * alpha * v[j].powf(alpha - 1.0);
                        }
                        acc[0] += d[j * 3] * gj;
                        acc[1] += d[j * 3 + 1] * gj;
                        acc[2] += d[j * 3 + 2] * gj;
                    }
                    gg[s * 3..s * 3 + 3].copy_from_slice(&acc);
                }
                self.acc(grads, *gaze, Tensor::new(vec![n, 3], gg)?);
            }
            Op::CosineLoss { pred, target } => {
                let n = self.shape(*pred)[0] as f64;
                let k = gy.item() / n;
                let g: Vec<f64> = target.iter().map(|t| -t * k).collect();
                self.acc(grads, *pred, Tensor::new(self.shape(*pred).to_vec(), g)?);
            }
            Op::Mse { pred, target } => {
                let tp = self.value(*pred);
                let k = 2.0 * gy.item() / tp.numel() as f64;
                let g: Vec<f64> = tp.data().iter().zip(target).map(|(p, t)| k * (p - t)).collect();
                self.acc(grads, *pred, Tensor::new(tp.shape().to_vec(), g)?);
            }
            Op::Mean(x) => {
                let shape = self.shape(*x).to_vec();
                let n: usize = shape.iter().product();
                self.acc(grads, *x, Tensor::full(shape, gy.item() / n as f64));
            }
        }
        Ok(())
    }
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], n: usize, c: usize, l: usize) {
    for s in 0..n {
        for (ch, b) in bias.iter().enumerate().take(c) {
            let off = (s * c + ch) * l;
            y[off..off + l].iter_mut().for_each(|v| *v += b);
        }
    }
}

fn channel_sums(g: &[f64], n: usize, c: usize, l: usize) -> Tensor {
    let mut out = vec![0.0; c];
    for s in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            let off = (s * c + ch) * l;
            *o += g[off..off + l].iter().sum::<f64>();
        }
    }
    Tensor::new(vec![c], out).expect("channel count")
}

pub(crate) fn permute(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let rank = t.rank();
    let mut seen = vec![false; rank];
    if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
        return Err(shape_err("permute", format!("axes {axes:?} for rank {rank}")));
    }
    let in_strides = strides(t.shape());
    let out_shape: Vec<usize> = axes.iter().map(|&a| t.shape()[a]).collect();
    let step: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(t.numel());
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..t.numel() {
        out.push(t.data()[src]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += step[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= step[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Tensor::new(out_shape, out)
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(shape_err("concat", format!("axis {axis} for rank {rank}")));
    }
    for p in parts {
        let ok = p.rank() == rank
            && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(shape_err("concat", format!("{:?} vs {:?}", p.shape(), first.shape())));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Tensor::new(shape, out)
}

pub(crate) fn narrow(t: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= t.rank() || start + len > t.shape()[axis] {
        return Err(shape_err("narrow", format!("[{start}, {}) on axis {axis} of {:?}", start + len, t.shape())));
    }
    let outer: usize = t.shape()[..axis].iter().product();
    let inner: usize = t.shape()[axis + 1..].iter().product();
    let full = t.shape()[axis];
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let s = (o * full + start) * inner;
        out.extend_from_slice(&t.data()[s..s + len * inner]);
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = len;
    Tensor::new(shape, out)
}
