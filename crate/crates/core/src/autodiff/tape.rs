use super::{gelu_grad_scalar, gelu_scalar, gemm, Tensor};
use crate::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Linear { x: Var, w: Var, b: Option<Var>, rows: usize, inp: usize, out: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, d: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    SwapLast2 { x: Var, outer: usize, r: usize, c: usize },
    MeanTokens { x: Var, b: usize, t: usize, c: usize },
    Sum(Var),
    Mean(Var),
    SoftmaxCe { logits: Var, probs: Vec<f64>, labels: Vec<usize>, b: usize, c: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul { .. } => "matmul",
            Op::Linear { .. } => "linear",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Gelu(_) => "gelu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::SwapLast2 { .. } => "swap_last2",
            Op::MeanTokens { .. } => "mean_tokens",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of one forward pass. Topological order is append
/// order, so the backward sweep is a single reverse scan.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints produced by [`Tape::gradients`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Adjoint of `v`, `None` when no gradient reached it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn check_same(a: &[usize], b: &[usize], op: &str) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{op}: shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Copy the value of `v` out as a plain tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes are well formed")
    }

    /// Parents of `v` on the tape (empty for leaves and detached nodes).
    pub fn parents(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf | Op::Param(_) => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Linear { x, w, b, .. } => {
                let mut p = vec![*x, *w];
                p.extend(b.iter().copied());
                p
            }
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SwapLast2 { x: a, .. }
            | Op::MeanTokens { x: a, .. }
            | Op::SoftmaxCe { logits: a, .. } => vec![*a],
        }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input: no gradient flows into it.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var> {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    /// Leaf bound to parameter `index`; gradients land in that parameter
    /// during [`Tape::backward`] when it `requires_grad`.
    pub fn param(&mut self, index: usize, t: &Tensor) -> Result<Var> {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Param(index), t.requires_grad())
    }

    /// Value-identical copy with no parents on the tape.
    pub fn detach(&mut self, x: Var) -> Result<Var> {
        let n = &self.nodes[x.0];
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push(shape, value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!("matmul: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, 0.0, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }, ng)
    }

    /// `x . w + b` over the last axis of `x`; `w` is `[in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w);
        let inp = *sx.last().expect("shape is non-empty");
        if sw.len() != 2 || sw[0] != inp {
            return Err(Error::Dimension(format!("linear: input {sx:?} with weight {sw:?}")));
        }
        let out = sw[1];
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return Err(Error::Dimension(format!(
                    "linear: bias {:?} for {out} outputs",
                    self.shape(b)
                )));
            }
        }
        let rows = self.value(x).len() / inp;
        let mut y = vec![0.0; rows * out];
        if let Some(b) = b {
            let bv = self.value(b);
            for r in y.chunks_exact_mut(out) {
                r.copy_from_slice(bv);
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(rows, inp, out, self.value(x), false, self.value(w), false, beta, &mut y);
        let mut shape = sx;
        *shape.last_mut().unwrap() = out;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(shape, y, Op::Linear { x, w, b, rows, inp, out }, ng)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Vec<usize>, Vec<f64>, bool)> {
        check_same(self.shape(a), self.shape(b), name)?;
        let v: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok((self.shape(a).to_vec(), v, self.ng(a) || self.ng(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v, ng) = self.binary(a, b, "add", |x, y| x + y)?;
        self.push(s, v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v, ng) = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push(s, v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v, ng) = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push(s, v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).iter().map(|x| x * c).collect();
        let s = self.shape(a).to_vec();
        let ng = self.ng(a);
        self.push(s, v, Op::Scale(a, c), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| gelu_scalar(x)).collect();
        let s = self.shape(a).to_vec();
        let ng = self.ng(a);
        self.push(s, v, Op::Gelu(a), ng)
    }

    /// Normalize over the last axis, then apply `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Input(format!("layer_norm: eps must be positive, got {eps}")));
        }
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::Dimension(format!(
                "layer_norm: input {sx:?} with gamma {:?} beta {:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let rows = xv.len() / d;
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        let mut y = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                y[r * d + j] = h * g[j] + b[j];
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(sx, y, Op::LayerNorm { x, gamma, beta, d, xhat, rstd }, ng)
    }

    /// Swap the last two axes: `[.., r, c] -> [.., c, r]`.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 {
            return Err(Error::Dimension(format!("swap_last2 needs rank >= 2, got {sx:?}")));
        }
        let (r, c) = (sx[sx.len() - 2], sx[sx.len() - 1]);
        let outer = self.value(x).len() / (r * c);
        let xv = self.value(x);
        let mut y = vec![0.0; xv.len()];
        for o in 0..outer {
            let base = o * r * c;
            for i in 0..r {
                for j in 0..c {
                    y[base + j * r + i] = xv[base + i * c + j];
                }
            }
        }
        let mut shape = sx;
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        let ng = self.ng(x);
        self.push(shape, y, Op::SwapLast2 { x, outer, r, c }, ng)
    }

    /// Mean over the token axis: `[b, t, c] -> [b, c]`.
    pub fn mean_tokens(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(Error::Dimension(format!("mean_tokens needs [b, t, c], got {sx:?}")));
        }
        let (b, t, c) = (sx[0], sx[1], sx[2]);
        let xv = self.value(x);
        let mut y = vec![0.0; b * c];
        for bi in 0..b {
            for ti in 0..t {
                let row = &xv[(bi * t + ti) * c..(bi * t + ti + 1) * c];
                for (acc, v) in y[bi * c..(bi + 1) * c].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let inv = 1.0 / t as f64;
        y.iter_mut().for_each(|v| *v *= inv);
        let ng = self.ng(x);
        self.push(vec![b, c], y, Op::MeanTokens { x, b, t, c }, ng)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        let ng = self.ng(a);
        self.push(vec![1], vec![s], Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let ng = self.ng(a);
        self.push(vec![1], vec![s], Op::Mean(a), ng)
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let sl = self.shape(logits);
        if sl.len() != 2 || sl[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy: logits {sl:?} for {} labels",
                labels.len()
            )));
        }
        let (b, c) = (sl[0], sl[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Input(format!("label {bad} out of range for {c} classes")));
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for i in 0..b {
            let row = &lv[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + z.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            loss += lse - row[labels[i]];
        }
        loss /= b as f64;
        let ng = self.ng(logits);
        let op = Op::SoftmaxCe { logits, probs, labels: labels.to_vec(), b, c };
        self.push(vec![1], vec![loss], op, ng)
    }

    /// Reverse sweep from the scalar `loss`, returning every node's adjoint.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Input(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward pass accumulating into the bound parameters' gradient slots.
    pub fn backward(&self, loss: Var, params: &mut [Tensor]) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(p) = node.op {
                if !node.needs_grad {
                    continue;
                }
                if let Some(g) = &grads.grads[idx] {
                    let t = params.get_mut(p).ok_or_else(|| {
                        Error::State(format!("tape references parameter {p} not supplied"))
                    })?;
                    t.accumulate_grad(g)?;
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let want = |v: &Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, m, k, n } => {
                if want(a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(*m, *n, *k, g, false, self.value(*b), true, 0.0, &mut ga);
                    accumulate(&mut grads[a.0], ga);
                }
                if want(b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(*k, *m, *n, self.value(*a), true, g, false, 0.0, &mut gb);
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Linear { x, w, b, rows, inp, out } => {
                if want(x) {
                    let mut gx = vec![0.0; rows * inp];
                    gemm(*rows, *out, *inp, g, false, self.value(*w), true, 0.0, &mut gx);
                    accumulate(&mut grads[x.0], gx);
                }
                if want(w) {
                    let mut gw = vec![0.0; inp * out];
                    gemm(*inp, *rows, *out, self.value(*x), true, g, false, 0.0, &mut gw);
                    accumulate(&mut grads[w.0], gw);
                }
                if let Some(b) = b {
                    if want(b) {
                        let mut gb = vec![0.0; *out];
                        for r in g.chunks_exact(*out) {
                            gb.iter_mut().zip(r).for_each(|(a, v)| *a += v);
                        }
                        accumulate(&mut grads[b.0], gb);
                    }
                }
            }
            Op::Add(a, b) => {
                if want(a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if want(b) {
                    accumulate(&mut grads[b.0], g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if want(b) {
                    accumulate(&mut grads[b.0], g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    let gb = g.iter().zip(self.value(*b)).map(|(u, v)| u * v).collect();
                    accumulate(&mut grads[a.0], gb);
                }
                if want(b) {
                    let ga = g.iter().zip(self.value(*a)).map(|(u, v)| u * v).collect();
                    accumulate(&mut grads[b.0], ga);
                }
            }
            Op::Scale(a, c) => {
                if want(a) {
                    accumulate(&mut grads[a.0], g.iter().map(|v| v * c).collect());
                }
            }
            Op::Gelu(a) => {
                if want(a) {
                    let ga = g.iter().zip(self.value(*a)).map(|(u, &x)| u * gelu_grad_scalar(x)).collect();
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::LayerNorm { x, gamma, beta, d, xhat, rstd } => {
                let d = *d;
                let gv = self.value(*gamma);
                if want(x) {
                    let mut gx = vec![0.0; xhat.len()];
                    for (r, rs) in rstd.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            m1 += dh;
                            m2 += dh * hr[j];
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            gx[r * d + j] = rs * (dh - m1 - hr[j] * m2);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                if want(gamma) || want(beta) {
                    let mut gg = vec![0.0; d];
                    let mut gb = vec![0.0; d];
                    for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            gg[j] += gr[j] * hr[j];
                            gb[j] += gr[j];
                        }
                    }
                    if want(gamma) {
                        accumulate(&mut grads[gamma.0], gg);
                    }
                    if want(beta) {
                        accumulate(&mut grads[beta.0], gb);
                    }
                }
            }
            Op::SwapLast2 { x, outer, r, c } => {
                if want(x) {
                    let mut gx = vec![0.0; g.len()];
                    for o in 0..*outer {
                        let base = o * r * c;
                        for i in 0..*r {
                            for j in 0..*c {
                                gx[base + i * c + j] = g[base + j * r + i];
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
            }
            Op::MeanTokens { x, b, t, c } => {
                if want(x) {
                    let inv = 1.0 / *t as f64;
                    let mut gx = vec![0.0; b * t * c];
                    for bi in 0..*b {
                        let src = &g[bi * c..(bi + 1) * c];
                        for ti in 0..*t {
                            let dst = &mut gx[(bi * t + ti) * c..(bi * t + ti + 1) * c];
                            dst.iter_mut().zip(src).for_each(|(d, s)| *d = s * inv);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
            }
            Op::Sum(a) => {
                if want(a) {
                    let n = self.value(*a).len();
                    accumulate(&mut grads[a.0], vec![g[0]; n]);
                }
            }
            Op::Mean(a) => {
                if want(a) {
                    let n = self.value(*a).len();
                    accumulate(&mut grads[a.0], vec![g[0] / n as f64; n]);
                }
            }
            Op::SoftmaxCe { logits, probs, labels, b, c } => {
                if want(logits) {
                    let scale = g[0] / *b as f64;
                    let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (i, &l) in labels.iter().enumerate() {
                        gl[i * c + l] -= scale;
                    }
                    accumulate(&mut grads[logits.0], gl);
                }
            }
        }
    }
}
