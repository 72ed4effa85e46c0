use crate::autodiff::{Tape, Tensor, Var};
use crate::net::{Connectivity, ForwardOpts, Network};
use crate::rng::Rng;
use crate::{Error, Result};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum LossMode {
    /// Cross-entropy of the head on the full-depth representation.
    Standard,
    /// ACN with every block input detached: each block learns only through
    /// its own long connection.
    DgOnly,
    /// `CE(y_L) + lambda * sum_{k=1}^{L-1} CE(y_k)`.
    DeepSup { lambda: f64 },
    /// `sum_k (k / sum_j j) * CE(y_k)` over `k = 1..=L`.
    Aligned,
    /// Depth- and time-scaled layer dropout plus a rotating early exit.
    LayerSkip { p_max: f64, e_scale: f64, c_rot: usize },
}

impl LossMode {
    pub fn validate(&self, conn: Connectivity) -> Result<()> {
        match *self {
            LossMode::DgOnly if conn != Connectivity::Acn => {
                Err(Error::Config("dg-only training needs ACN connectivity".into()))
            }
            LossMode::DeepSup { lambda } if !(lambda >= 0.0) => {
                Err(Error::Config(format!("deep supervision weight {lambda} must be >= 0")))
            }
            LossMode::LayerSkip { p_max, e_scale, c_rot } => {
                if !(0.0..=1.0).contains(&p_max) || !(e_scale >= 0.0) || c_rot == 0 {
                    return Err(Error::Config(format!(
                        "layer-skip needs 0 <= p_max <= 1, e_scale >= 0, c_rot >= 1 (got {p_max}, {e_scale}, {c_rot})"
                    )));
                }
                if conn != Connectivity::Residual {
                    return Err(Error::Config("layer-skip needs residual connectivity".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Where in training a loss is evaluated.
#[derive(Clone, Copy, Debug)]
pub struct LossCtx {
    /// 0-based epoch.
    pub epoch: usize,
    pub epochs: usize,
    pub head: usize,
}

/// Normalized aligned weights `k / sum_j j` for `k = 1..=depth`.
pub fn aligned_weights(depth: usize) -> Vec<f64> {
    let total = (depth * (depth + 1) / 2) as f64;
    (1..=depth).map(|k| k as f64 / total).collect()
}

/// Dropout rate of block `l` (1-based) under the layer-skip curriculum.
pub fn layer_skip_rate(p_max: f64, e_scale: f64, l: usize, depth: usize, epoch: usize, epochs: usize) -> f64 {
    let time = if epochs == 0 { 1.0 } else { (epoch as f64 * e_scale / epochs as f64).min(1.0) };
    p_max * l as f64 / depth as f64 * time
}

/// Early-exit layer trained alongside the last layer at `epoch`.
pub fn layer_skip_exit(c_rot: usize, depth: usize, epoch: usize) -> usize {
    (epoch / c_rot) % depth + 1
}

/// Record the objective for one batch. `rng` is only drawn from by layer-skip.
pub fn compute_loss(
    net: &Network,
    tape: &mut Tape,
    vars: &[Var],
    inputs: &Tensor,
    labels: &[usize],
    mode: LossMode,
    ctx: LossCtx,
    rng: &mut Rng,
) -> Result<Var> {
    mode.validate(net.connectivity())?;
    let depth = net.depth();
    let ce_at = |tape: &mut Tape, xs: &[Var], k: usize| -> Result<Var> {
        let y = net.aggregate(tape, xs, k)?;
        let logits = net.predict(tape, vars, y, ctx.head)?;
        tape.softmax_cross_entropy(logits, labels)
    };
    match mode {
        LossMode::Standard | LossMode::DgOnly => {
            let opts = ForwardOpts { detach_block_inputs: mode == LossMode::DgOnly, ..Default::default() };
            let xs = net.forward_collect(tape, vars, inputs, opts)?;
            ce_at(tape, &xs, depth)
        }
        LossMode::DeepSup { lambda } => {
            let xs = net.forward_collect(tape, vars, inputs, ForwardOpts::default())?;
            let mut loss = ce_at(tape, &xs, depth)?;
            if lambda > 0.0 {
                for k in 1..depth {
                    let ce = ce_at(tape, &xs, k)?;
                    let w = tape.scale(ce, lambda)?;
                    loss = tape.add(loss, w)?;
                }
            }
            Ok(loss)
        }
        LossMode::Aligned => {
            let xs = net.forward_collect(tape, vars, inputs, ForwardOpts::default())?;
            let mut loss: Option<Var> = None;
            for (k, w) in (1..=depth).zip(aligned_weights(depth)) {
                let ce = ce_at(tape, &xs, k)?;
                let term = tape.scale(ce, w)?;
                loss = Some(match loss {
                    None => term,
                    Some(l) => tape.add(l, term)?,
                });
            }
            Ok(loss.expect("depth >= 1"))
        }
        LossMode::LayerSkip { p_max, e_scale, c_rot } => {
            let skip: Vec<bool> = (1..=depth)
                .map(|l| rng.gen::<f64>() < layer_skip_rate(p_max, e_scale, l, depth, ctx.epoch, ctx.epochs))
                .collect();
            let opts = ForwardOpts { skip: Some(&skip), ..Default::default() };
            let xs = net.forward_collect(tape, vars, inputs, opts)?;
            let mut loss = ce_at(tape, &xs, depth)?;
            let exit = layer_skip_exit(c_rot, depth, ctx.epoch);
            if exit < depth {
                let ce = ce_at(tape, &xs, exit)?;
                loss = tape.add(loss, ce)?;
            }
            Ok(loss)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_weights_are_linear_and_normalized() {
        let w = aligned_weights(4);
        assert_eq!(w, vec![0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn layer_skip_curriculum() {
        assert_eq!(layer_skip_rate(0.1, 2.0, 4, 4, 0, 10), 0.0);
        assert!((layer_skip_rate(0.1, 2.0, 2, 4, 2, 10) - 0.1 * 0.5 * 0.4).abs() < 1e-15);
        assert_eq!(layer_skip_rate(0.1, 2.0, 4, 4, 9, 10), 0.1);
        let exits: Vec<usize> = (0..6).map(|e| layer_skip_exit(2, 3, e)).collect();
        assert_eq!(exits, vec![1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn mode_validation() {
        assert!(LossMode::DgOnly.validate(Connectivity::Residual).is_err());
        assert!(LossMode::DgOnly.validate(Connectivity::Acn).is_ok());
        assert!(LossMode::DeepSup { lambda: -0.1 }.validate(Connectivity::Acn).is_err());
        let ls = LossMode::LayerSkip { p_max: 1.5, e_scale: 1.0, c_rot: 1 };
        assert!(ls.validate(Connectivity::Residual).is_err());
    }
}
