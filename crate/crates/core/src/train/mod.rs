//! Training: AdamW with a warmup-cosine schedule, the loss modes used by
//! the baselines, and gradient instrumentation (per-layer norms and the
//! direct/total gradient split).

mod loss;
mod optim;

pub use loss::{aligned_weights, compute_loss, layer_skip_exit, layer_skip_rate, LossCtx, LossMode};
pub use optim::{cosine_lr, AdamHyper, OptimState, StepControls};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Dataset;
use crate::net::{ForwardOpts, Network};
use crate::probe::PruneMask;
use crate::rng::{self, tags};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Loss and accuracy of one evaluation pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eval {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and correct count for a batch of logits.
pub fn score_logits(logits: &Tensor, labels: &[usize]) -> (f64, usize) {
    let c = logits.shape()[1];
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &y) in logits.data().chunks_exact(c).zip(labels) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        // first maximal index wins ties
        let arg = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
        correct += usize::from(arg == y);
    }
    (loss, correct)
}

fn batches(n: usize, size: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n).step_by(size.max(1)).map(move |s| s..(s + size).min(n))
}

/// Full-depth evaluation with head `head`.
pub fn evaluate(net: &Network, ds: &Dataset, head: usize, batch: usize) -> Result<Eval> {
    Ok(evaluate_depths(net, ds, head, batch)?.pop().expect("at least depth 0"))
}

/// Evaluation of every depth `0..=L` through the shared head.
pub fn evaluate_depths(net: &Network, ds: &Dataset, head: usize, batch: usize) -> Result<Vec<Eval>> {
    if ds.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let mut loss = vec![0.0; net.depth() + 1];
    let mut correct = vec![0usize; net.depth() + 1];
    let idx: Vec<usize> = (0..ds.len()).collect();
    for r in batches(ds.len(), batch) {
        let (x, y) = ds.gather(&idx[r]);
        for (k, logits) in net.logits_all_depths(&x, head)?.iter().enumerate() {
            let (l, c) = score_logits(logits, &y);
            loss[k] += l;
            correct[k] += c;
        }
    }
    let n = ds.len() as f64;
    Ok(loss.iter().zip(&correct).map(|(l, &c)| Eval { loss: l / n, accuracy: c as f64 / n }).collect())
}

/// L2 norm of each block's concatenated parameter gradients.
pub fn layer_grad_norms(net: &Network) -> Result<Vec<f64>> {
    if net.params().iter().all(|p| p.grad().is_none()) {
        return Err(Error::State("no gradients accumulated; run backward first".into()));
    }
    Ok((1..=net.depth())
        .map(|i| {
            net.params()[net.block_params(i)]
                .iter()
                .filter_map(Tensor::grad)
                .flat_map(|g| g.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDecomp {
    pub dg_norm: f64,
    pub fg_norm: f64,
    /// `dg_norm / fg_norm`, `None` when `fg_norm == 0`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradDecomp {
    pub epoch: usize,
    pub step: u64,
    pub layers: Vec<LayerDecomp>,
}

/// Per-block gradient vectors of the full graph and of the graph with every
/// block input detached.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSplitVectors {
    pub fg: Vec<Vec<f64>>,
    pub dg: Vec<Vec<f64>>,
}

impl GradSplitVectors {
    /// Network-mediated part `fg - dg` per block.
    pub fn ng(&self) -> Vec<Vec<f64>> {
        self.fg.iter().zip(&self.dg).map(|(f, d)| f.iter().zip(d).map(|(a, b)| a - b).collect()).collect()
    }

    pub fn decomp(&self, epoch: usize, step: u64) -> Result<GradDecomp> {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let layers = self
            .fg
            .iter()
            .zip(&self.dg)
            .map(|(f, d)| {
                let (fg_norm, dg_norm) = (norm(f), norm(d));
                if !fg_norm.is_finite() || !dg_norm.is_finite() {
                    return Err(Error::NonFinite("gradient decomposition".into()));
                }
                let ratio = (fg_norm > 0.0).then(|| dg_norm / fg_norm);
                Ok(LayerDecomp { dg_norm, fg_norm, ratio })
            })
            .collect::<Result<_>>()?;
        Ok(GradDecomp { epoch, step, layers })
    }
}

/// Maps the full-depth representation `y` to a scalar objective.
pub type Objective<'a> = dyn Fn(&Network, &mut Tape, &[Var], Var) -> Result<Var> + 'a;

fn block_grads(net: &Network, input: &Tensor, detach: bool, objective: &Objective<'_>) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape)?;
    let opts = ForwardOpts { detach_block_inputs: detach, ..Default::default() };
    let xs = net.forward_collect(&mut tape, &vars, input, opts)?;
    let y = net.aggregate(&mut tape, &xs, net.depth())?;
    let loss = objective(net, &mut tape, &vars, y)?;
    let grads = tape.gradients(loss)?;
    Ok((1..=net.depth())
        .map(|i| {
            net.block_params(i)
                .flat_map(|p| match grads.get(vars[p]) {
                    Some(g) => g.to_vec(),
                    None => vec![0.0; net.params()[p].len()],
                })
                .collect()
        })
        .collect())
}

/// Two backward passes: the full graph gives the total gradient `fg`; the
/// graph with block-boundary inputs detached gives the direct gradient `dg`
/// (for ACN the long connection, for Residual the identity path).
pub fn grad_split_with(net: &Network, input: &Tensor, objective: &Objective<'_>) -> Result<GradSplitVectors> {
    let fg = block_grads(net, input, false, objective)?;
    let dg = block_grads(net, input, true, objective)?;
    Ok(GradSplitVectors { fg, dg })
}

/// Cross-entropy objective through head `head`.
pub fn ce_objective(labels: &[usize], head: usize) -> impl Fn(&Network, &mut Tape, &[Var], Var) -> Result<Var> + '_ {
    move |net, tape, vars, y| {
        let logits = net.predict(tape, vars, y, head)?;
        tape.softmax_cross_entropy(logits, labels)
    }
}

/// Direct/total gradient norms per block on one batch.
pub fn measure_dg_fg(net: &Network, input: &Tensor, labels: &[usize], head: usize) -> Result<GradDecomp> {
    grad_split_with(net, input, &ce_objective(labels, head))?.decomp(0, 0)
}

/// Callbacks into the training loop.
pub trait StepHook {
    /// After backward, before the optimizer; gradients are on the parameters.
    fn before_step(&mut self, _net: &mut Network) -> Result<()> {
        Ok(())
    }
    fn after_step(&mut self, _net: &Network) -> Result<()> {
        Ok(())
    }
    /// After the last step of 0-based `epoch`, before evaluation.
    fn end_epoch(&mut self, _epoch: usize, _net: &mut Network, _mask: &mut Option<PruneMask>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: AdamHyper,
    /// Fraction of total steps spent in linear warmup.
    pub warmup_frac: f64,
    pub loss: LossMode,
    pub seed: u64,
    pub head: usize,
    /// Evaluate on the whole training set after every epoch.
    pub eval_train: bool,
    /// Record per-block gradient norms (mean over each epoch's steps).
    pub layer_norms: bool,
    /// Measure the gradient split before training and after every epoch.
    pub grad_decomp: bool,
    /// Examples in the fixed measurement batch.
    pub decomp_batch: usize,
    pub divergence_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            optim: AdamHyper::default(),
            warmup_frac: 0.05,
            loss: LossMode::Standard,
            seed: 0,
            head: 0,
            eval_train: true,
            layer_norms: true,
            grad_decomp: false,
            decomp_batch: 128,
            divergence_loss: 1e4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        if self.batch_size == 0 || self.decomp_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config(format!("warmup_frac {} outside [0, 1)", self.warmup_frac)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean training objective over the epoch's steps.
    pub objective: f64,
    pub train: Option<Eval>,
    pub test: Option<Eval>,
    pub layer_norms: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub grad_decomp: Vec<GradDecomp>,
}

impl TrainLog {
    /// `(epoch, split, loss, accuracy)` rows, epoch-major.
    pub fn rows(&self) -> Vec<(usize, &'static str, f64, f64)> {
        let mut out = Vec::new();
        for e in &self.epochs {
            if let Some(t) = e.train {
                out.push((e.epoch, "train", t.loss, t.accuracy));
            }
            if let Some(t) = e.test {
                out.push((e.epoch, "test", t.loss, t.accuracy));
            }
        }
        out
    }
}

/// Mutable extras threaded through a training run.
#[derive(Default)]
pub struct Session<'a> {
    pub mask: Option<PruneMask>,
    pub lr_scale: Option<Vec<f64>>,
    pub hook: Option<&'a mut dyn StepHook>,
}

/// Train `net` in place. Deterministic given `cfg.seed`. On divergence the
/// parameters are restored to the end of the last completed epoch and
/// [`Error::Diverged`] is returned.
pub fn train(net: &mut Network, train_ds: &Dataset, test_ds: Option<&Dataset>, cfg: &TrainConfig, session: &mut Session<'_>) -> Result<TrainLog> {
    cfg.validate()?;
    cfg.loss.validate(net.connectivity())?;
    if train_ds.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if let Some(s) = &session.lr_scale {
        if s.len() != net.params().len() {
            return Err(Error::Dimension("lr_scale length differs from parameter count".into()));
        }
    }
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok(log);
    }
    if let Some(m) = &session.mask {
        m.apply(net)?;
    }
    let n = train_ds.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let warmup = (cfg.warmup_frac * total as f64).round() as usize;
    let decay: Vec<bool> = net.param_info().iter().map(|i| i.decays()).collect();
    let mut opt = OptimState::new(net.params(), cfg.optim);
    let mut shuffle = rng::stream(cfg.seed, tags::SHUFFLE);
    let mut drop_rng = rng::stream(cfg.seed, tags::LAYER_DROP);

    let decomp_batch = if cfg.grad_decomp {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(cfg.seed, tags::SUBSET));
        idx.truncate(cfg.decomp_batch.min(n));
        Some(train_ds.gather(&idx))
    } else {
        None
    };
    let measure = |net: &Network, epoch: usize, step: u64| -> Result<GradDecomp> {
        let (x, y) = decomp_batch.as_ref().expect("decomp batch present");
        grad_split_with(net, x, &ce_objective(y, cfg.head))?.decomp(epoch, step)
    };
    if cfg.grad_decomp {
        log.grad_decomp.push(measure(net, 0, 0)?);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let snapshot: Vec<Tensor> = net.params().to_vec();
        let restore = |net: &mut Network| {
            for (p, s) in net.params_mut().iter_mut().zip(&snapshot) {
                p.data_mut().copy_from_slice(s.data());
                p.zero_grad();
            }
        };
        order.shuffle(&mut shuffle);
        let mut obj_sum = 0.0;
        let mut norm_sum = vec![0.0; net.depth()];
        for r in batches(n, cfg.batch_size) {
            let (x, y) = train_ds.gather(&order[r]);
            net.zero_grad();
            let mut tape = Tape::new();
            let vars = net.bind(&mut tape)?;
            let ctx = LossCtx { epoch, epochs: cfg.epochs, head: cfg.head };
            let loss = match compute_loss(net, &mut tape, &vars, &x, &y, cfg.loss, ctx, &mut drop_rng) {
                Ok(l) => l,
                Err(Error::NonFinite(_)) => {
                    restore(net);
                    return Err(Error::Diverged { epoch: epoch + 1, loss: f64::NAN });
                }
                Err(e) => return Err(e),
            };
            let value = tape.value(loss)[0];
            if !value.is_finite() || value > cfg.divergence_loss {
                restore(net);
                return Err(Error::Diverged { epoch: epoch + 1, loss: value });
            }
            obj_sum += value;
            tape.backward(loss, net.params_mut())?;
            drop(tape);
            if cfg.layer_norms {
                for (acc, v) in norm_sum.iter_mut().zip(layer_grad_norms(net)?) {
                    *acc += v;
                }
            }
            if let Some(h) = session.hook.as_deref_mut() {
                h.before_step(net)?;
            }
            let lr = cosine_lr(step, warmup, total, cfg.optim.lr_max);
            let ctl = StepControls { decay: Some(&decay), lr_scale: session.lr_scale.as_deref(), mask: session.mask.as_ref() };
            if let Err(e) = opt.step(net.params_mut(), lr, ctl) {
                if matches!(e, Error::NonFinite(_)) {
                    restore(net);
                    return Err(Error::Diverged { epoch: epoch + 1, loss: value });
                }
                return Err(e);
            }
            if let Some(h) = session.hook.as_deref_mut() {
                h.after_step(net)?;
            }
            step += 1;
        }
        net.zero_grad();
        if let Some(h) = session.hook.as_deref_mut() {
            h.end_epoch(epoch, net, &mut session.mask)?;
        }
        let train_eval = if cfg.eval_train { Some(evaluate(net, train_ds, cfg.head, 256)?) } else { None };
        let test_eval = match test_ds {
            Some(t) => Some(evaluate(net, t, cfg.head, 256)?),
            None => None,
        };
        let layer_norms = if cfg.layer_norms {
            norm_sum.iter().map(|v| v / steps_per_epoch as f64).collect()
        } else {
            Vec::new()
        };
        log.epochs.push(EpochLog {
            epoch: epoch + 1,
            objective: obj_sum / steps_per_epoch as f64,
            train: train_eval,
            test: test_eval,
            layer_norms,
        });
        if cfg.grad_decomp {
            log.grad_decomp.push(measure(net, epoch + 1, step as u64)?);
        }
    }
    Ok(log)
}
