//! Network construction for the three connectivity patterns.
//!
//! Parameters live in a flat `Vec<Tensor>` in declaration order (embedding,
//! blocks `1..=L`, heads). A forward pass binds them onto a [`Tape`] and
//! returns every block output `x_0..x_L`, so probing any depth costs one pass.

mod checkpoint;
mod config;

pub use checkpoint::canonical_json;

pub use config::{Activation, BlockKind, Connectivity, EmbedSpec, HeadSpec, NetworkConfig};

use crate::autodiff::{Tape, Tensor, Var};
use crate::rng::{self, Rng};
use crate::{Error, Result};
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    EmbedWeight,
    EmbedBias,
    Weight,
    Bias,
    NormGain,
    NormShift,
    HeadWeight,
    HeadBias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub role: ParamRole,
    /// 1-based block index, `None` for embedding and heads.
    pub block: Option<usize>,
    /// Head index for head parameters.
    pub head: Option<usize>,
}

impl ParamInfo {
    /// Block linear weights: the only tensors pruning touches.
    pub fn prunable(&self) -> bool {
        self.role == ParamRole::Weight
    }

    /// Weight decay skips biases and norm parameters.
    pub fn decays(&self) -> bool {
        matches!(self.role, ParamRole::Weight | ParamRole::EmbedWeight | ParamRole::HeadWeight)
    }
}

/// Options for a single forward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOpts<'a> {
    /// Run only blocks `1..=k`.
    pub depth: Option<usize>,
    /// Feed each block a detached copy of its input, so a block's
    /// parameters receive gradient only through that block's own output.
    pub detach_block_inputs: bool,
    /// Blocks with `skip[i - 1] == true` are dropped (residual only).
    pub skip: Option<&'a [bool]>,
}

#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    params: Vec<Tensor>,
    info: Vec<ParamInfo>,
    /// Parameter index ranges per block, `blocks[i - 1]`.
    blocks: Vec<std::ops::Range<usize>>,
    embed: std::ops::Range<usize>,
    heads: Vec<std::ops::Range<usize>>,
}

/// Truncated normal: resample outside two standard deviations.
fn trunc_normal(rng: &mut Rng, std: f64, n: usize) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, std).expect("std is finite and positive");
    (0..n)
        .map(|_| loop {
            let v: f64 = d.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect()
}

struct Builder<'r> {
    rng: &'r mut Rng,
    std: f64,
    params: Vec<Tensor>,
    info: Vec<ParamInfo>,
}

impl Builder<'_> {
    fn push(&mut self, name: String, role: ParamRole, block: Option<usize>, head: Option<usize>, shape: Vec<usize>) {
        let n: usize = shape.iter().product();
        let data = match role {
            ParamRole::EmbedWeight | ParamRole::Weight | ParamRole::HeadWeight => trunc_normal(self.rng, self.std, n),
            ParamRole::NormGain => vec![1.0; n],
            _ => vec![0.0; n],
        };
        self.params.push(Tensor::param(shape, data).expect("shape matches data"));
        self.info.push(ParamInfo { name, role, block, head });
    }

    fn linear(&mut self, prefix: &str, block: Option<usize>, inp: usize, out: usize, bias: bool) {
        self.push(format!("{prefix}.w"), ParamRole::Weight, block, None, vec![inp, out]);
        if bias {
            self.push(format!("{prefix}.b"), ParamRole::Bias, block, None, vec![out]);
        }
    }

    fn norm(&mut self, prefix: &str, block: Option<usize>, head: Option<usize>, d: usize) {
        self.push(format!("{prefix}.g"), ParamRole::NormGain, block, head, vec![d]);
        self.push(format!("{prefix}.b"), ParamRole::NormShift, block, head, vec![d]);
    }
}

/// `[B, C, H, W]` images to `[B, T, C*p*p]` patch vectors, row-major tiles,
/// each vector ordered `(channel, dy, dx)`.
pub fn patchify(images: &Tensor, patch: usize) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 || !s[2].is_multiple_of(patch) || !s[3].is_multiple_of(patch) {
        return Err(Error::Dimension(format!("cannot split {s:?} into {patch}x{patch} patches")));
    }
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (gh, gw) = (h / patch, w / patch);
    let t = gh * gw;
    let pd = c * patch * patch;
    let src = images.data();
    let mut out = vec![0.0; b * t * pd];
    for n in 0..b {
        for ty in 0..gh {
            for tx in 0..gw {
                let base = (n * t + ty * gw + tx) * pd;
                let mut k = 0;
                for ch in 0..c {
                    for dy in 0..patch {
                        let row = ((n * c + ch) * h + ty * patch + dy) * w + tx * patch;
                        out[base + k..base + k + patch].copy_from_slice(&src[row..row + patch]);
                        k += patch;
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, t, pd], out)
}

impl Network {
    /// Build and initialize; the same `(config, seed)` always gives the same
    /// parameters.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Network> {
        config.validate()?;
        let mut rng = rng::stream(seed, rng::tags::INIT);
        let mut b = Builder { rng: &mut rng, std: config.init_std, params: Vec::new(), info: Vec::new() };
        let width = config.block.width();
        let embed_in = match config.embed {
            EmbedSpec::Linear { in_dim } => Some(in_dim),
            EmbedSpec::Patchify { channels, patch, .. } => Some(channels * patch * patch),
            EmbedSpec::Identity => None,
        };
        if let Some(inp) = embed_in {
            b.push("embed.w".into(), ParamRole::EmbedWeight, None, None, vec![inp, width]);
            b.push("embed.b".into(), ParamRole::EmbedBias, None, None, vec![width]);
        }
        let embed = 0..b.params.len();
        let mut blocks = Vec::with_capacity(config.depth);
        for i in 1..=config.depth {
            let start = b.params.len();
            let p = format!("block{i}");
            let blk = Some(i);
            match &config.block {
                BlockKind::Dense { width, hidden, norm, bias, .. } => {
                    if *norm {
                        b.norm(&format!("{p}.norm"), blk, None, *width);
                    }
                    match hidden {
                        None => b.linear(&format!("{p}.fc"), blk, *width, *width, *bias),
                        Some(h) => {
                            b.linear(&format!("{p}.fc1"), blk, *width, *h, *bias);
                            b.linear(&format!("{p}.fc2"), blk, *h, *width, *bias);
                        }
                    }
                }
                BlockKind::Mixer { patches, channels, d_s, d_c } => {
                    b.norm(&format!("{p}.norm1"), blk, None, *channels);
                    b.linear(&format!("{p}.token1"), blk, *patches, *d_s, true);
                    b.linear(&format!("{p}.token2"), blk, *d_s, *patches, true);
                    b.norm(&format!("{p}.norm2"), blk, None, *channels);
                    b.linear(&format!("{p}.channel1"), blk, *channels, *d_c, true);
                    b.linear(&format!("{p}.channel2"), blk, *d_c, *channels, true);
                }
            }
            blocks.push(start..b.params.len());
        }
        let mut heads = Vec::with_capacity(config.head.heads);
        for h in 0..config.head.heads {
            let start = b.params.len();
            let hd = Some(h);
            if config.head.norm {
                b.norm(&format!("head{h}.norm"), None, hd, width);
            }
            b.push(format!("head{h}.w"), ParamRole::HeadWeight, None, hd, vec![width, config.head.classes]);
            b.push(format!("head{h}.b"), ParamRole::HeadBias, None, hd, vec![config.head.classes]);
            heads.push(start..b.params.len());
        }
        let Builder { params, info, .. } = b;
        Ok(Network { config: config.clone(), params, info, blocks, embed, heads })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn connectivity(&self) -> Connectivity {
        self.config.connectivity
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_info(&self) -> &[ParamInfo] {
        &self.info
    }

    /// Parameter indices of block `i` (1-based).
    pub fn block_params(&self, i: usize) -> std::ops::Range<usize> {
        self.blocks[i - 1].clone()
    }

    pub fn head_params(&self, h: usize) -> std::ops::Range<usize> {
        self.heads[h].clone()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    fn count(&self, r: &std::ops::Range<usize>) -> usize {
        self.params[r.clone()].iter().map(Tensor::len).sum()
    }

    /// Every parameter, all heads included.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Parameters used to predict from depth `k` with one head: embedding,
    /// blocks `1..=k` and the head.
    pub fn param_count_upto(&self, k: usize) -> usize {
        let blocks: usize = self.blocks[..k.min(self.depth())].iter().map(|r| self.count(r)).sum();
        self.count(&self.embed) + blocks + self.count(&self.heads[0])
    }

    /// Bind every parameter onto the tape.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params.iter().enumerate().map(|(i, p)| tape.param(i, p)).collect()
    }

    /// Bind parameters as constants (no gradient bookkeeping).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params.iter().map(|p| tape.leaf(p)).collect()
    }

    /// Shape-check a batch and record `x_0`.
    pub fn embed(&self, tape: &mut Tape, vars: &[Var], input: &Tensor) -> Result<Var> {
        let s = input.shape();
        match self.config.embed {
            EmbedSpec::Linear { in_dim } => {
                if s.len() != 2 || s[1] != in_dim {
                    return Err(Error::Dimension(format!("expected [batch, {in_dim}] input, got {s:?}")));
                }
                let x = tape.leaf(input)?;
                tape.linear(x, vars[self.embed.start], Some(vars[self.embed.start + 1]))
            }
            EmbedSpec::Patchify { channels, image_size, patch } => {
                if s.len() != 4 || s[1] != channels || s[2] != image_size || s[3] != image_size {
                    return Err(Error::Dimension(format!(
                        "expected [batch, {channels}, {image_size}, {image_size}] input, got {s:?}"
                    )));
                }
                let x = tape.leaf(&patchify(input, patch)?)?;
                tape.linear(x, vars[self.embed.start], Some(vars[self.embed.start + 1]))
            }
            EmbedSpec::Identity => {
                let w = self.config.block.width();
                if s.len() != 2 || s[1] != w {
                    return Err(Error::Dimension(format!("expected [batch, {w}] input, got {s:?}")));
                }
                tape.leaf(input)
            }
        }
    }

    fn lin(&self, tape: &mut Tape, vars: &[Var], x: Var, at: &mut usize, bias: bool, square: bool) -> Result<Var> {
        let w = vars[*at];
        *at += 1;
        let b = if bias {
            *at += 1;
            Some(vars[*at - 1])
        } else {
            None
        };
        let y = tape.linear(x, w, b)?;
        if self.config.dirac && square {
            tape.add(y, x)
        } else {
            Ok(y)
        }
    }

    /// `f_i(x)` for block `i` (1-based).
    pub fn block_forward(&self, tape: &mut Tape, vars: &[Var], i: usize, x: Var) -> Result<Var> {
        let mut at = self.blocks[i - 1].start;
        let eps = self.config.ln_eps;
        match &self.config.block {
            BlockKind::Dense { hidden, activation, norm, bias, .. } => {
                let act = |tape: &mut Tape, v: Var| match activation {
                    Activation::Gelu => tape.gelu(v),
                    Activation::Identity => Ok(v),
                };
                let mut h = x;
                if *norm {
                    h = tape.layer_norm(h, vars[at], vars[at + 1], eps)?;
                    at += 2;
                }
                match hidden {
                    None => {
                        let z = self.lin(tape, vars, h, &mut at, *bias, true)?;
                        act(tape, z)
                    }
                    Some(_) => {
                        let z = self.lin(tape, vars, h, &mut at, *bias, true)?;
                        let z = act(tape, z)?;
                        self.lin(tape, vars, z, &mut at, *bias, true)
                    }
                }
            }
            BlockKind::Mixer { .. } => {
                let u = tape.layer_norm(x, vars[at], vars[at + 1], eps)?;
                at += 2;
                let ut = tape.swap_last2(u)?;
                let t = self.lin(tape, vars, ut, &mut at, true, true)?;
                let t = tape.gelu(t)?;
                let t = self.lin(tape, vars, t, &mut at, true, true)?;
                let t = tape.swap_last2(t)?;
                let v = tape.layer_norm(t, vars[at], vars[at + 1], eps)?;
                at += 2;
                let c = self.lin(tape, vars, v, &mut at, true, true)?;
                let c = tape.gelu(c)?;
                self.lin(tape, vars, c, &mut at, true, true)
            }
        }
    }

    /// Block outputs `[x_0, x_1, ..., x_k]` for `k = opts.depth` (default `L`).
    pub fn forward_collect(&self, tape: &mut Tape, vars: &[Var], input: &Tensor, opts: ForwardOpts<'_>) -> Result<Vec<Var>> {
        let k = opts.depth.unwrap_or(self.depth());
        if k > self.depth() {
            return Err(Error::Input(format!("depth {k} exceeds network depth {}", self.depth())));
        }
        if let Some(skip) = opts.skip {
            if skip.len() != self.depth() {
                return Err(Error::Input(format!("skip mask has {} entries for {} blocks", skip.len(), self.depth())));
            }
            if self.connectivity() != Connectivity::Residual && skip.iter().any(|&s| s) {
                return Err(Error::Config("layer dropping needs residual connectivity".into()));
            }
        }
        let mut xs = Vec::with_capacity(k + 1);
        xs.push(self.embed(tape, vars, input)?);
        for i in 1..=k {
            let prev = xs[i - 1];
            if opts.skip.is_some_and(|s| s[i - 1]) {
                xs.push(prev);
                continue;
            }
            let inp = if opts.detach_block_inputs { tape.detach(prev)? } else { prev };
            let f = self.block_forward(tape, vars, i, inp)?;
            let x = match self.connectivity() {
                Connectivity::Residual => tape.add(prev, f)?,
                _ => f,
            };
            xs.push(x);
        }
        Ok(xs)
    }

    /// Representation fed to the head when predicting from depth `k`.
    pub fn aggregate(&self, tape: &mut Tape, xs: &[Var], k: usize) -> Result<Var> {
        if k >= xs.len() {
            return Err(Error::Input(format!("depth {k} not collected ({} outputs)", xs.len())));
        }
        match self.connectivity() {
            Connectivity::Acn => {
                let mut y = xs[0];
                for &x in &xs[1..=k] {
                    y = tape.add(y, x)?;
                }
                Ok(y)
            }
            _ => Ok(xs[k]),
        }
    }

    /// Logits from head `h` applied to `y`.
    pub fn predict(&self, tape: &mut Tape, vars: &[Var], y: Var, h: usize) -> Result<Var> {
        let r = self.heads.get(h).ok_or_else(|| Error::Input(format!("no head {h}")))?.clone();
        let mut at = r.start;
        let mut z = y;
        if self.config.head.norm {
            z = tape.layer_norm(z, vars[at], vars[at + 1], self.config.ln_eps)?;
            at += 2;
        }
        if tape.shape(z).len() == 3 {
            z = tape.mean_tokens(z)?;
        }
        tape.linear(z, vars[at], Some(vars[at + 1]))
    }

    /// Full forward to logits at depth `k` with gradients bound.
    pub fn logits(&self, tape: &mut Tape, input: &Tensor, k: usize, h: usize) -> Result<Var> {
        let vars = self.bind(tape)?;
        let xs = self.forward_collect(tape, &vars, input, ForwardOpts { depth: Some(k), ..Default::default() })?;
        let y = self.aggregate(tape, &xs, k)?;
        self.predict(tape, &vars, y, h)
    }

    /// Inference logits from every depth `0..=L` in one pass.
    pub fn logits_all_depths(&self, input: &Tensor, h: usize) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let vars = self.bind_frozen(&mut tape)?;
        let xs = self.forward_collect(&mut tape, &vars, input, ForwardOpts::default())?;
        let mut out = Vec::with_capacity(xs.len());
        let mut acc: Option<Var> = None;
        for k in 0..xs.len() {
            let y = match self.connectivity() {
                Connectivity::Acn => {
                    let y = match acc {
                        None => xs[0],
                        Some(a) => tape.add(a, xs[k])?,
                    };
                    acc = Some(y);
                    y
                }
                _ => xs[k],
            };
            let l = self.predict(&mut tape, &vars, y, h)?;
            out.push(tape.tensor(l));
        }
        Ok(out)
    }

    /// Inference logits at depth `k` (default full depth).
    pub fn infer(&self, input: &Tensor, k: Option<usize>, h: usize) -> Result<Tensor> {
        let k = k.unwrap_or(self.depth());
        let mut tape = Tape::new();
        let vars = self.bind_frozen(&mut tape)?;
        let xs = self.forward_collect(&mut tape, &vars, input, ForwardOpts { depth: Some(k), ..Default::default() })?;
        let y = self.aggregate(&mut tape, &xs, k)?;
        let l = self.predict(&mut tape, &vars, y, h)?;
        Ok(tape.tensor(l))
    }

    /// Standalone network made of blocks `1..=k` plus the embedding and
    /// heads. Only defined for ACN, where dropping trailing blocks leaves a
    /// valid model with identical depth-`k` predictions.
    pub fn truncate(&self, k: usize) -> Result<Network> {
        if self.connectivity() != Connectivity::Acn {
            return Err(Error::Config("truncation needs ACN connectivity".into()));
        }
        if k > self.depth() {
            return Err(Error::Input(format!("truncation depth {k} outside 0..={}", self.depth())));
        }
        let mut config = self.config.clone();
        config.depth = k;
        let keep_end = if k == 0 { self.embed.end } else { self.blocks[k - 1].end };
        let mut idx: Vec<usize> = (0..keep_end).collect();
        for r in &self.heads {
            idx.extend(r.clone());
        }
        let shift = self.heads[0].start - keep_end;
        let mut params = Vec::with_capacity(idx.len());
        let mut info = Vec::with_capacity(idx.len());
        for &i in &idx {
            let mut t = Tensor::param(self.params[i].shape().to_vec(), self.params[i].data().to_vec())?;
            t.set_requires_grad(self.params[i].requires_grad());
            params.push(t);
            info.push(self.info[i].clone());
        }
        let heads = self.heads.iter().map(|r| r.start - shift..r.end - shift).collect();
        Ok(Network {
            config,
            params,
            info,
            blocks: self.blocks[..k].to_vec(),
            embed: self.embed.clone(),
            heads,
        })
    }

    /// Fold the identity into every square block weight: afterwards the
    /// network computes the same function with `dirac = false`, so its
    /// weights are ordinary `W' = I + W`.
    pub fn dirac_fold(&self) -> Result<Network> {
        if !self.config.dirac {
            return Err(Error::Config("network is not dirac-parameterized".into()));
        }
        let mut out = self.clone();
        out.config.dirac = false;
        for (p, info) in out.params.iter_mut().zip(&out.info) {
            if info.role == ParamRole::Weight && p.shape()[0] == p.shape()[1] {
                let n = p.shape()[0];
                for d in 0..n {
                    p.data_mut()[d * n + d] += 1.0;
                }
            }
        }
        Ok(out)
    }

    /// Copy parameter values from `other` (same architecture).
    pub fn load_params_from(&mut self, other: &Network) -> Result<()> {
        if other.params.len() != self.params.len()
            || other.params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Dimension("parameter layouts differ".into()));
        }
        for (d, s) in self.params.iter_mut().zip(&other.params) {
            d.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }
}
