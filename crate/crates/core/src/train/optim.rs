use crate::autodiff::Tensor;
use crate::probe::PruneMask;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub lr_max: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr_max: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.05 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_max >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// AdamW moments for a parameter list.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub hyper: AdamHyper,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    /// `beta1^step` and `beta2^step`, kept as running products so the bias
    /// correction does not depend on how `powi` is lowered.
    beta_pow: (f64, f64),
}

/// Per-step controls beyond the learning rate.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepControls<'a> {
    /// Which parameters receive decoupled weight decay (all when `None`).
    pub decay: Option<&'a [bool]>,
    /// Per-parameter learning-rate multiplier.
    pub lr_scale: Option<&'a [f64]>,
    /// Pruned entries get no update and stay exactly zero.
    pub mask: Option<&'a PruneMask>,
}

impl OptimState {
    pub fn new(params: &[Tensor], hyper: AdamHyper) -> Self {
        OptimState {
            hyper,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
            beta_pow: (1.0, 1.0),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }

    /// One AdamW update at learning rate `lr`, reading each parameter's
    /// accumulated gradient (missing gradients count as zero).
    pub fn step(&mut self, params: &mut [Tensor], lr: f64, ctl: StepControls<'_>) -> Result<()> {
        if params.len() != self.m.len() || params.iter().zip(&self.m).any(|(p, m)| p.len() != m.len()) {
            return Err(Error::Dimension("optimizer state does not match parameters".into()));
        }
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of parameter {i} at element {j}")));
                }
            }
        }
        self.step += 1;
        let h = self.hyper;
        self.beta_pow = (self.beta_pow.0 * h.beta1, self.beta_pow.1 * h.beta2);
        let bc1 = 1.0 - self.beta_pow.0;
        let bc2 = 1.0 - self.beta_pow.1;
        for (i, p) in params.iter_mut().enumerate() {
            if !p.requires_grad() {
                continue;
            }
            let lr_i = lr * ctl.lr_scale.map_or(1.0, |s| s[i]);
            let wd = if ctl.decay.is_none_or(|d| d[i]) { h.weight_decay } else { 0.0 };
            let keep = ctl.mask.and_then(|m| m.keep(i));
            let g = p.grad_or_zeros();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = p.data_mut();
            for j in 0..data.len() {
                if keep.is_some_and(|k| !k[j]) {
                    m[j] = 0.0;
                    v[j] = 0.0;
                    data[j] = 0.0;
                    continue;
                }
                m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
                v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] -= lr_i * wd * data[j];
                data[j] -= lr_i * mhat / (vhat.sqrt() + h.eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `lr_max`, then half-cosine down to 0.
pub fn cosine_lr(step: usize, warmup_steps: usize, total_steps: usize, lr_max: f64) -> f64 {
    let step = step.min(total_steps);
    if step < warmup_steps {
        return lr_max * step as f64 / warmup_steps as f64;
    }
    let span = total_steps.saturating_sub(warmup_steps);
    if span == 0 {
        return lr_max;
    }
    let progress = (step - warmup_steps) as f64 / span as f64;
    0.5 * lr_max * (1.0 + (std::f64::consts::PI * progress).cos())
}
