//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its output
//! value and whatever it needs for the backward pass. Nodes only reference
//! earlier nodes, so the append order is a topological order and
//! [`Graph::backward`] simply walks the tape in reverse.
//!
//! Only the operations needed by the untrained phase-retrieval networks are
//! provided. Activations are single images laid out `[C, H, W]`.
//!
//! ```
//! use phaseprior::tensor::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap());
//! let y = g.relu(x).unwrap();
//! let loss = g.sum(y).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).data(), &[1.0, 0.0, 1.0]);
//! ```

mod kernels;
mod optim;

use std::io::{BufRead, Write};

pub use optim::{Adam, AdamConfig, Optimizer, Sgd};

use crate::error::{Error, Result};
use kernels::Window;

/// Dense row-major array of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension(format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    fn chw(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Dimension(format!("{what} expects [C,H,W], got {:?}", self.shape))),
        }
    }

    /// Debug dump: a text line `tensor <d0> <d1> ...` followed by little-endian doubles.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        writeln!(w, "tensor {}", dims.join(" "))?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("tensor") {
            return Err(Error::Input("missing tensor header".into()));
        }
        let shape = parts
            .map(|p| p.parse::<usize>().map_err(|e| Error::Input(format!("bad extent {p:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        let data = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Tensor::new(shape, data)
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Vector-Jacobian product of a user-supplied single-input operation.
pub type VjpFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, win: Window, cols: Vec<f64> },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var>, win: Window },
    MaxPool { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Concat { a: Var, b: Var },
    Upsample { x: Var, factor: usize },
    Scale { x: Var, factor: f64 },
    Sum { x: Var },
    Mean { x: Var },
    Mse { a: Var, b: Var },
    Custom { x: Var, vjp: VjpFn },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv2d_transpose",
            Op::MaxPool { .. } => "maxpool2d",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Add { .. } => "add",
            Op::Concat { .. } => "concat_channels",
            Op::Upsample { .. } => "upsample_nearest",
            Op::Scale { .. } => "scale",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::Mse { .. } => "mse_loss",
            Op::Custom { .. } => "custom",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Tape of operations for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    /// Input that is held constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss with respect to `v`; zeros if `v`
    /// did not influence the loss.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor { shape: node.value.shape.clone(), data: g.clone() },
            None => Tensor::zeros(&node.value.shape),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if let Some(bad) = value.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} (value {bad})", op.name())));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    /// 2D cross-correlation. `x: [C_in,H,W]`, `w: [C_out,C_in,k,k]` with odd `k`, `b: [C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (c_in, h, wd) = self.value(x).chw("conv2d input")?;
        let (c_out, k) = match self.value(w).shape[..] {
            [co, ci, k1, k2] if ci == c_in && k1 == k2 => (co, k1),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d weight {:?} incompatible with input {:?}",
                    self.value(w).shape,
                    self.value(x).shape
                )))
            }
        };
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv2d kernel size {k} must be odd")));
        }
        self.check_bias(b, c_out)?;
        let win = Window::new(c_in, h, wd, k, stride, padding).ok_or_else(|| {
            Error::Config(format!("conv2d extent ({h}+2*{padding}-{k})/{stride}+1 is not an integer"))
        })?;
        let cols = kernels::im2col(&self.value(x).data, &win);
        let p = win.positions();
        let mut out = vec![0.0; c_out * p];
        kernels::gemm(c_out, win.rows(), p, &self.value(w).data, false, &cols, false, 0.0, &mut out);
        if let Some(b) = b {
            kernels::add_channel_bias(&mut out, &self.value(b).data, p);
        }
        let value = Tensor { shape: vec![c_out, win.out_h, win.out_w], data: out };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(value, Op::Conv2d { x, w, b, win, cols }, &inputs)
    }

    /// Transposed convolution, the adjoint of [`Graph::conv2d`] with the same
    /// weight. `x: [C_in,H,W]`, `w: [C_in,C_out,k,k]`; output extent
    /// `(H-1)*stride - 2*padding + k`.
    pub fn conv2d_transpose(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (c_in, h, wd) = self.value(x).chw("conv2d_transpose input")?;
        let (c_out, k) = match self.value(w).shape[..] {
            [ci, co, k1, k2] if ci == c_in && k1 == k2 => (co, k1),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d_transpose weight {:?} incompatible with input {:?}",
                    self.value(w).shape,
                    self.value(x).shape
                )))
            }
        };
        if stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        self.check_bias(b, c_out)?;
        let out_h = ((h - 1) * stride + k).checked_sub(2 * padding);
        let out_w = ((wd - 1) * stride + k).checked_sub(2 * padding);
        let (out_h, out_w) = match (out_h, out_w) {
            (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
            _ => return Err(Error::Config("conv2d_transpose output extent is not positive".into())),
        };
        let win = Window::new(c_out, out_h, out_w, k, stride, padding)
            .filter(|win| win.out_h == h && win.out_w == wd)
            .ok_or_else(|| Error::Config("conv2d_transpose geometry is not invertible".into()))?;
        let mut cols = vec![0.0; win.rows() * win.positions()];
        kernels::gemm(win.rows(), c_in, win.positions(), &self.value(w).data, true, &self.value(x).data, false, 0.0, &mut cols);
        let mut out = kernels::col2im(&cols, &win);
        if let Some(b) = b {
            kernels::add_channel_bias(&mut out, &self.value(b).data, out_h * out_w);
        }
        let value = Tensor { shape: vec![c_out, out_h, out_w], data: out };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(value, Op::ConvTranspose2d { x, w, b, win }, &inputs)
    }

    fn check_bias(&self, b: Option<Var>, c_out: usize) -> Result<()> {
        if let Some(b) = b {
            if self.value(b).shape != [c_out] {
                return Err(Error::Dimension(format!(
                    "bias shape {:?}, expected [{c_out}]",
                    self.value(b).shape
                )));
            }
        }
        Ok(())
    }

    /// Max pooling; gradient goes to the first maximal element of each window.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw("maxpool2d input")?;
        let win = Window::new(c, h, w, window, stride, 0)
            .ok_or_else(|| Error::Config(format!("maxpool2d: {h}x{w} not divisible into {window}/{stride} windows")))?;
        let src = &self.value(x).data;
        let (oh, ow) = (win.out_h, win.out_w);
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for ky in 0..window {
                        for kx in 0..window {
                            let i = base + (oy * stride + ky) * w + ox * stride + kx;
                            if src[i] > src[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor { shape: vec![c, oh, ow], data: out };
        self.push(value, Op::MaxPool { x, argmax }, &[x])
    }

    /// Per-channel normalisation over the spatial extent (instance statistics,
    /// since the batch holds a single image).
    pub fn batchnorm2d(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (c, h, w) = self.value(x).chw("batchnorm2d input")?;
        if self.value(gamma).shape != [c] || self.value(beta).shape != [c] {
            return Err(Error::Dimension(format!("batchnorm2d affine parameters must be [{c}]")));
        }
        let n = h * w;
        let src = &self.value(x).data;
        let (g, bt) = (&self.value(gamma).data, &self.value(beta).data);
        let mut xhat = vec![0.0; c * n];
        let mut out = vec![0.0; c * n];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let plane = &src[ch * n..(ch + 1) * n];
            let mean = plane.iter().sum::<f64>() / n as f64;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[ch] = is;
            for i in 0..n {
                let xh = (plane[i] - mean) * is;
                xhat[ch * n + i] = xh;
                out[ch * n + i] = g[ch] * xh + bt[ch];
            }
        }
        let value = Tensor { shape: vec![c, h, w], data: out };
        self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.map_value(x, |a| a.max(0.0));
        self.push(v, Op::Relu { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.map_value(x, |a| 1.0 / (1.0 + (-a).exp()));
        self.push(v, Op::Sigmoid { x }, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let v = self.map_value(x, |a| a * factor);
        self.push(v, Op::Scale { x, factor }, &[x])
    }

    fn map_value(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor { shape: t.shape.clone(), data: t.data.iter().map(|&a| f(a)).collect() }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(Error::Dimension(format!("add: {:?} vs {:?}", ta.shape, tb.shape)));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let v = Tensor { shape: ta.shape.clone(), data };
        self.push(v, Op::Add { a, b }, &[a, b])
    }

    /// Stack `a` then `b` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = self.value(a).chw("concat_channels")?;
        let (cb, hb, wb) = self.value(b).chw("concat_channels")?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::Dimension(format!("concat_channels: {ha}x{wa} vs {hb}x{wb}")));
        }
        let mut data = self.value(a).data.clone();
        data.extend_from_slice(&self.value(b).data);
        let v = Tensor { shape: vec![ca + cb, ha, wa], data };
        self.push(v, Op::Concat { a, b }, &[a, b])
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw("upsample_nearest")?;
        if factor == 0 {
            return Err(Error::Config("upsample factor must be at least 1".into()));
        }
        let (oh, ow) = (h * factor, w * factor);
        let src = &self.value(x).data;
        let mut data = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                let row = &src[ch * h * w + (y / factor) * w..ch * h * w + (y / factor + 1) * w];
                data.extend((0..ow).map(|xx| row[xx / factor]));
            }
        }
        let v = Tensor { shape: vec![c, oh, ow], data };
        self.push(v, Op::Upsample { x, factor }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.data.iter().sum::<f64>() / t.data.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean { x }, &[x])
    }

    /// Mean of squared differences.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape != tt.shape {
            return Err(Error::Dimension(format!("mse_loss: {:?} vs {:?}", tp.shape, tt.shape)));
        }
        let s: f64 = tp.data.iter().zip(&tt.data).map(|(p, t)| (p - t) * (p - t)).sum();
        let v = Tensor::scalar(s / tp.data.len() as f64);
        self.push(v, Op::Mse { a: pred, b: target }, &[pred, target])
    }

    /// Register an externally computed single-input operation. `vjp` maps the
    /// gradient of the output to the gradient of the input.
    pub fn custom(&mut self, x: Var, output: Tensor, vjp: VjpFn) -> Result<Var> {
        self.push(output, Op::Custom { x, vjp }, &[x])
    }

    /// Populate gradients of the scalar `loss` for every node that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {} (value {bad})", self.nodes[i].op.name())));
            }
            for (var, contrib) in self.vjp(i, &g) {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot => *slot = Some(contrib),
                }
            }
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    /// Input-gradient contributions of node `i` given its output gradient.
    fn vjp(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, win, cols } => {
                let (c_out, p) = (node.value.shape[0], win.positions());
                if needs(w) {
                    let mut gw = vec![0.0; c_out * win.rows()];
                    kernels::gemm(c_out, p, win.rows(), g, false, cols, true, 0.0, &mut gw);
                    out.push((*w, gw));
                }
                if needs(x) {
                    let mut gcols = vec![0.0; win.rows() * p];
                    kernels::gemm(win.rows(), c_out, p, &self.value(*w).data, true, g, false, 0.0, &mut gcols);
                    out.push((*x, kernels::col2im(&gcols, win)));
                }
                if let Some(b) = b.filter(needs) {
                    out.push((b, kernels::channel_sums(g, p)));
                }
            }
            Op::ConvTranspose2d { x, w, b, win } => {
                let c_in = self.value(*x).shape[0];
                let p = win.positions();
                let gcols = kernels::im2col(g, win);
                if needs(x) {
                    let mut gx = vec![0.0; c_in * p];
                    kernels::gemm(c_in, win.rows(), p, &self.value(*w).data, false, &gcols, false, 0.0, &mut gx);
                    out.push((*x, gx));
                }
                if needs(w) {
                    let mut gw = vec![0.0; c_in * win.rows()];
                    kernels::gemm(c_in, p, win.rows(), &self.value(*x).data, false, &gcols, true, 0.0, &mut gw);
                    out.push((*w, gw));
                }
                if let Some(b) = b.filter(needs) {
                    out.push((b, kernels::channel_sums(g, win.height * win.width)));
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![0.0; self.value(*x).numel()];
                for (gi, &src) in g.iter().zip(argmax) {
                    gx[src] += gi;
                }
                out.push((*x, gx));
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let c = inv_std.len();
                let n = xhat.len() / c;
                let gam = &self.value(*gamma).data;
                let mut gx = vec![0.0; c * n];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for ch in 0..c {
                    let gy = &g[ch * n..(ch + 1) * n];
                    let xh = &xhat[ch * n..(ch + 1) * n];
                    let sum_g: f64 = gy.iter().sum();
                    let sum_gx: f64 = gy.iter().zip(xh).map(|(a, b)| a * b).sum();
                    gg[ch] = sum_gx;
                    gb[ch] = sum_g;
                    let k = gam[ch] * inv_std[ch] / n as f64;
                    for j in 0..n {
                        gx[ch * n + j] = k * (n as f64 * gy[j] - sum_g - xh[j] * sum_gx);
                    }
                }
                out.push((*x, gx));
                out.push((*gamma, gg));
                out.push((*beta, gb));
            }
            Op::Relu { x } => {
                let xv = &self.value(*x).data;
                out.push((*x, g.iter().zip(xv).map(|(gi, &v)| if v > 0.0 { *gi } else { 0.0 }).collect()));
            }
            Op::Sigmoid { x } => {
                let s = &node.value.data;
                out.push((*x, g.iter().zip(s).map(|(gi, si)| gi * si * (1.0 - si)).collect()));
            }
            Op::Scale { x, factor } => out.push((*x, g.iter().map(|gi| gi * factor).collect())),
            Op::Add { a, b } => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Concat { a, b } => {
                let na = self.value(*a).numel();
                out.push((*a, g[..na].to_vec()));
                out.push((*b, g[na..].to_vec()));
            }
            Op::Upsample { x, factor } => {
                let (c, h, w) = (self.value(*x).shape[0], self.value(*x).shape[1], self.value(*x).shape[2]);
                let ow = w * factor;
                let mut gx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..h * factor {
                        for xx in 0..ow {
                            gx[ch * h * w + (y / factor) * w + xx / factor] += g[ch * h * factor * ow + y * ow + xx];
                        }
                    }
                }
                out.push((*x, gx));
            }
            Op::Sum { x } => out.push((*x, vec![g[0]; self.value(*x).numel()])),
            Op::Mean { x } => {
                let n = self.value(*x).numel();
                out.push((*x, vec![g[0] / n as f64; n]));
            }
            Op::Mse { a, b } => {
                let (ta, tb) = (&self.value(*a).data, &self.value(*b).data);
                let k = 2.0 * g[0] / ta.len() as f64;
                let d: Vec<f64> = ta.iter().zip(tb).map(|(p, t)| k * (p - t)).collect();
                out.push((*b, d.iter().map(|v| -v).collect()));
                out.push((*a, d));
            }
            Op::Custom { x, vjp } => out.push((*x, vjp(g))),
        }
        out
    }
}
