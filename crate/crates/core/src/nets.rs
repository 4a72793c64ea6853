//! Encoder/decoder phase networks: UNet, nested U2Net and Res-U2Net.
//!
//! Every network maps a `[1,H,W]` normalised intensity to a `[1,H,W]` phase
//! `phase_scale * sigmoid(head)`. Parameters live in a flat ordered list; the
//! layer structure stores indices into it and is replayed onto a fresh
//! [`Graph`] for every forward pass.

use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Image2D;
use crate::tensor::{Graph, Tensor, Var};

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    UNet,
    U2Net,
    ResU2Net,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 3] = [NetworkKind::UNet, NetworkKind::U2Net, NetworkKind::ResU2Net];

    pub fn name(&self) -> &'static str {
        match self {
            NetworkKind::UNet => "unet",
            NetworkKind::U2Net => "u2net",
            NetworkKind::ResU2Net => "resu2net",
        }
    }

    /// Display label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            NetworkKind::UNet => "UNet",
            NetworkKind::U2Net => "U2Net",
            NetworkKind::ResU2Net => "Res-U2Net",
        }
    }
}

impl FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "unet" => Ok(NetworkKind::UNet),
            "u2net" => Ok(NetworkKind::U2Net),
            "resu2net" => Ok(NetworkKind::ResU2Net),
            _ => Err(Error::Config(format!("unknown network kind '{s}' (expected unet, u2net or resu2net)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    /// Outer encoder levels (pooling steps before the bottleneck).
    pub depth: usize,
    pub base_channels: usize,
    /// Levels inside each nested block at the top outer level (U2Net, ResU2Net).
    pub inner_depth: usize,
    /// Parallel residual blocks per unit (ResU2Net).
    pub stages: usize,
    pub seed: u64,
    pub phase_scale: f64,
}

impl NetworkSpec {
    pub fn new(kind: NetworkKind) -> Self {
        Self { kind, depth: 3, base_channels: 16, inner_depth: 3, stages: 2, seed: 0, phase_scale: 2.0 * std::f64::consts::PI }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_base_channels(mut self, base: usize) -> Self {
        self.base_channels = base;
        self
    }

    pub fn with_inner_depth(mut self, inner: usize) -> Self {
        self.inner_depth = inner;
        self
    }

    pub fn with_stages(mut self, stages: usize) -> Self {
        self.stages = stages;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Config(format!("network depth must be at least 2, got {}", self.depth)));
        }
        if self.base_channels < 4 {
            return Err(Error::Config(format!("base_channels must be at least 4, got {}", self.base_channels)));
        }
        if self.inner_depth < 1 || self.stages < 1 {
            return Err(Error::Config("inner_depth and stages must be at least 1".into()));
        }
        if !(self.phase_scale > 0.0 && self.phase_scale.is_finite()) {
            return Err(Error::Config(format!("phase_scale must be positive, got {}", self.phase_scale)));
        }
        Ok(())
    }

    /// Nested-block depth at outer level `l`.
    fn inner_at(&self, level: usize) -> usize {
        self.inner_depth.saturating_sub(level).max(1)
    }

    /// Number of 2x poolings the deepest path applies; inputs must be divisible by `2^levels`.
    pub fn pooling_levels(&self) -> usize {
        match self.kind {
            NetworkKind::UNet => self.depth,
            _ => self.depth.max(self.inner_depth.saturating_sub(1)),
        }
    }

    pub fn check_input(&self, rows: usize, cols: usize) -> Result<()> {
        let m = 1usize << self.pooling_levels();
        if !rows.is_multiple_of(m) || !cols.is_multiple_of(m) {
            return Err(Error::Config(format!(
                "{} with depth {} needs H and W divisible by {m}, got {rows}x{cols}",
                self.kind.label(),
                self.depth
            )));
        }
        Ok(())
    }

    fn header(&self) -> String {
        format!(
            "phaseprior-net kind={} depth={} base={} inner={} stages={} seed={} phase_scale={:e}",
            self.kind.name(),
            self.depth,
            self.base_channels,
            self.inner_depth,
            self.stages,
            self.seed,
            self.phase_scale
        )
    }

    fn parse_header(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some("phaseprior-net") {
            return Err(Error::Input("not a network parameter file".into()));
        }
        let mut spec = NetworkSpec::new(NetworkKind::UNet);
        for kv in parts {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Input(format!("bad header field '{kv}'")))?;
            let bad = |_| Error::Input(format!("bad value for {k}: '{v}'"));
            match k {
                "kind" => spec.kind = v.parse()?,
                "depth" => spec.depth = v.parse().map_err(bad)?,
                "base" => spec.base_channels = v.parse().map_err(bad)?,
                "inner" => spec.inner_depth = v.parse().map_err(bad)?,
                "stages" => spec.stages = v.parse().map_err(bad)?,
                "seed" => spec.seed = v.parse().map_err(bad)?,
                "phase_scale" => spec.phase_scale = v.parse().map_err(|_| Error::Input(format!("bad phase_scale '{v}'")))?,
                _ => return Err(Error::Input(format!("unknown header field '{k}'"))),
            }
        }
        Ok(spec)
    }
}

/// conv3x3 (no bias) -> batchnorm -> relu
#[derive(Debug, Clone)]
struct Cbr {
    w: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
struct Conv {
    w: usize,
    b: usize,
}

/// Nested mini U-Net; with `residual` every decoder stage adds its encoder skip.
#[derive(Debug, Clone)]
struct Block {
    residual: bool,
    input: Cbr,
    enc: Vec<Cbr>,
    bottom: Cbr,
    /// Deepest first.
    dec: Vec<Cbr>,
}

#[derive(Debug, Clone)]
enum Unit {
    Double(Cbr, Cbr),
    Nested(Block),
    Parallel { blocks: Vec<Block>, fuse: Option<Conv> },
}

#[derive(Debug, Clone)]
struct Layout {
    enc: Vec<Unit>,
    bottleneck: Unit,
    /// Indexed by level; `ups[l]` maps level `l+1` channels to level `l`.
    ups: Vec<Conv>,
    dec: Vec<Unit>,
    head: Conv,
}

struct Init {
    rng: ChaCha8Rng,
    params: Vec<Tensor>,
}

impl Init {
    fn he_uniform(&mut self, shape: &[usize], fan_in: usize) -> usize {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.push(Tensor::new(shape.to_vec(), data).expect("valid shape"))
    }

    fn push(&mut self, t: Tensor) -> usize {
        self.params.push(t);
        self.params.len() - 1
    }

    fn cbr(&mut self, c_in: usize, c_out: usize) -> Cbr {
        let w = self.he_uniform(&[c_out, c_in, 3, 3], c_in * 9);
        let gamma = self.push(Tensor::full(&[c_out], 1.0));
        let beta = self.push(Tensor::zeros(&[c_out]));
        Cbr { w, gamma, beta }
    }

    fn conv1x1(&mut self, c_in: usize, c_out: usize) -> Conv {
        let w = self.he_uniform(&[c_out, c_in, 1, 1], c_in);
        let b = self.push(Tensor::zeros(&[c_out]));
        Conv { w, b }
    }

    /// 2x2 stride-2 transpose convolution: every output pixel sees exactly `c_in` inputs.
    fn up(&mut self, c_in: usize, c_out: usize) -> Conv {
        let w = self.he_uniform(&[c_in, c_out, 2, 2], c_in);
        let b = self.push(Tensor::zeros(&[c_out]));
        Conv { w, b }
    }

    fn block(&mut self, c_in: usize, ch: usize, levels: usize, residual: bool) -> Block {
        let input = self.cbr(c_in, ch);
        let enc = (1..levels).map(|_| self.cbr(ch, ch)).collect();
        let bottom = self.cbr(ch, ch);
        let dec = (0..levels).map(|_| self.cbr(2 * ch, ch)).collect();
        Block { residual, input, enc, bottom, dec }
    }

    fn unit(&mut self, spec: &NetworkSpec, c_in: usize, ch: usize, level: usize) -> Unit {
        let levels = spec.inner_at(level);
        match spec.kind {
            NetworkKind::UNet => Unit::Double(self.cbr(c_in, ch), self.cbr(ch, ch)),
            NetworkKind::U2Net => Unit::Nested(self.block(c_in, ch, levels, false)),
            NetworkKind::ResU2Net => {
                let blocks: Vec<Block> =
                    (0..spec.stages).map(|s| self.block(c_in, ch, levels.saturating_sub(s).max(1), true)).collect();
                let fuse = (spec.stages > 1).then(|| self.conv1x1(spec.stages * ch, ch));
                Unit::Parallel { blocks, fuse }
            }
        }
    }
}

/// A built network: its spec, ordered parameters and layer structure.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Tensor>,
    layout: Layout,
}

/// Construct a network with seeded He-uniform weights, zero biases, unit batchnorm scale.
pub fn build(spec: &NetworkSpec) -> Result<Network> {
    spec.validate()?;
    let mut init = Init { rng: ChaCha8Rng::seed_from_u64(spec.seed), params: Vec::new() };
    let ch = |l: usize| spec.base_channels << l;
    let d = spec.depth;
    let enc = (0..d).map(|l| init.unit(spec, if l == 0 { 1 } else { ch(l - 1) }, ch(l), l)).collect();
    let bottleneck = init.unit(spec, ch(d - 1), ch(d), d);
    let mut ups = Vec::with_capacity(d);
    let mut dec = Vec::with_capacity(d);
    for l in 0..d {
        ups.push(init.up(ch(l + 1), ch(l)));
        dec.push(init.unit(spec, 2 * ch(l), ch(l), l));
    }
    let head = init.conv1x1(ch(0), 1);
    Ok(Network { spec: spec.clone(), params: init.params, layout: Layout { enc, bottleneck, ups, dec, head } })
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Total scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Emit the forward pass onto `g`. Parameters are registered as trainable
    /// leaves in order; returns `(theta [1,H,W], parameter vars)`.
    pub fn forward_graph(&self, g: &mut Graph, i_norm: &Image2D) -> Result<(Var, Vec<Var>)> {
        let (h, w) = i_norm.shape();
        self.spec.check_input(h, w)?;
        let x = g.constant(Tensor::new(vec![1, h, w], i_norm.data().to_vec())?);
        let p: Vec<Var> = self.params.iter().map(|t| g.param(t.clone())).collect();
        let theta = self.emit(g, &p, x)?;
        Ok((theta, p))
    }

    /// Phase estimate `phase_scale * sigmoid(net(I_norm))`.
    pub fn forward_phase(&self, i_norm: &Image2D) -> Result<Image2D> {
        let mut g = Graph::new();
        let (theta, _) = self.forward_graph(&mut g, i_norm)?;
        Image2D::from_vec(i_norm.rows(), i_norm.cols(), g.value(theta).data().to_vec())
    }

    fn emit(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        let lay = &self.layout;
        let mut skips = Vec::with_capacity(lay.enc.len());
        let mut cur = x;
        for u in &lay.enc {
            let e = emit_unit(g, p, u, cur)?;
            skips.push(e);
            cur = g.maxpool2d(e, 2, 2)?;
        }
        cur = emit_unit(g, p, &lay.bottleneck, cur)?;
        for l in (0..lay.dec.len()).rev() {
            let up = g.conv2d_transpose(cur, p[lay.ups[l].w], Some(p[lay.ups[l].b]), 2, 0)?;
            let cat = g.concat_channels(up, skips[l])?;
            cur = emit_unit(g, p, &lay.dec[l], cat)?;
        }
        let logits = g.conv2d(cur, p[lay.head.w], Some(p[lay.head.b]), 1, 0)?;
        let s = g.sigmoid(logits)?;
        g.scale(s, self.spec.phase_scale)
    }

    /// Write a plain-text spec header followed by each parameter tensor.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} count={}", self.spec.header(), self.params.len())?;
        for t in &self.params {
            t.write_raw(&mut w)?;
        }
        Ok(())
    }

    /// Rebuild from [`Network::save`] output.
    pub fn load<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let (head, count) = line
            .trim_end()
            .rsplit_once(" count=")
            .ok_or_else(|| Error::Input("missing parameter count in network header".into()))?;
        let count: usize = count.parse().map_err(|_| Error::Input(format!("bad parameter count '{count}'")))?;
        let mut net = build(&NetworkSpec::parse_header(head)?)?;
        if count != net.params.len() {
            return Err(Error::Input(format!("expected {} tensors, header says {count}", net.params.len())));
        }
        for slot in &mut net.params {
            let t = Tensor::read_raw(&mut r)?;
            if t.shape() != slot.shape() {
                return Err(Error::Input(format!("tensor shape {:?} does not match {:?}", t.shape(), slot.shape())));
            }
            *slot = t;
        }
        Ok(net)
    }
}

fn emit_cbr(g: &mut Graph, p: &[Var], c: &Cbr, x: Var) -> Result<Var> {
    let y = g.conv2d(x, p[c.w], None, 1, 1)?;
    let y = g.batchnorm2d(y, p[c.gamma], p[c.beta], BN_EPS)?;
    g.relu(y)
}

fn emit_block(g: &mut Graph, p: &[Var], b: &Block, x: Var) -> Result<Var> {
    let x0 = emit_cbr(g, p, &b.input, x)?;
    let mut enc = vec![x0];
    for c in &b.enc {
        let pooled = g.maxpool2d(*enc.last().expect("non-empty"), 2, 2)?;
        enc.push(emit_cbr(g, p, c, pooled)?);
    }
    let deepest = enc.len() - 1;
    let mut cur = emit_cbr(g, p, &b.bottom, enc[deepest])?;
    for (i, c) in b.dec.iter().enumerate() {
        let level = deepest - i;
        let from = if i == 0 { cur } else { g.upsample_nearest(cur, 2)? };
        let cat = g.concat_channels(from, enc[level])?;
        let y = emit_cbr(g, p, c, cat)?;
        cur = if b.residual { g.add(enc[level], y)? } else { y };
    }
    Ok(cur)
}

fn emit_unit(g: &mut Graph, p: &[Var], u: &Unit, x: Var) -> Result<Var> {
    match u {
        Unit::Double(a, b) => {
            let y = emit_cbr(g, p, a, x)?;
            emit_cbr(g, p, b, y)
        }
        Unit::Nested(b) => emit_block(g, p, b, x),
        Unit::Parallel { blocks, fuse } => {
            let mut cat = emit_block(g, p, &blocks[0], x)?;
            for b in &blocks[1..] {
                let y = emit_block(g, p, b, x)?;
                cat = g.concat_channels(cat, y)?;
            }
            match fuse {
                Some(f) => g.conv2d(cat, p[f.w], Some(p[f.b]), 1, 0),
                None => Ok(cat),
            }
        }
    }
}
