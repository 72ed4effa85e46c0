//! Depth probing and compression: per-depth accuracy through the shared
//! head, effective depth, truncation, and magnitude/movement pruning.

use crate::data::Dataset;
use crate::net::Network;
use crate::train::{self, evaluate, evaluate_depths, Session, StepHook, TrainConfig, TrainLog};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Accuracy of every depth-`k` subnetwork, `k = 0..=L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub dataset: String,
    pub epoch: Option<usize>,
    pub accuracy: Vec<f64>,
    /// Parameters used by each subnetwork (embedding, blocks `1..=k`, one head).
    pub n_params_used: Vec<usize>,
}

impl ProbeReport {
    pub fn depth(&self) -> usize {
        self.accuracy.len() - 1
    }

    pub fn effective_depth(&self, eps: f64) -> usize {
        effective_depth(&self.accuracy, eps)
    }
}

pub const DEFAULT_EPS: f64 = 0.005;

pub fn probe_all_depths(net: &Network, ds: &Dataset, head: usize, dataset: &str) -> Result<ProbeReport> {
    let evals = evaluate_depths(net, ds, head, 256)?;
    Ok(ProbeReport {
        dataset: dataset.to_string(),
        epoch: None,
        accuracy: evals.iter().map(|e| e.accuracy).collect(),
        n_params_used: (0..=net.depth()).map(|k| net.param_count_upto(k)).collect(),
    })
}

/// Smallest `k` whose accuracy is within `eps` of the best depth.
pub fn effective_depth(accuracy: &[f64], eps: f64) -> usize {
    let best = accuracy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    accuracy.iter().position(|&a| a >= best - eps).unwrap_or(0)
}

/// `accuracy[k] - accuracy[k - 1]` for `k = 1..=L`.
pub fn incremental_contribution(accuracy: &[f64]) -> Vec<f64> {
    accuracy.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Keep/zero flags per parameter; `None` entries are not subject to pruning.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneMask {
    keep: Vec<Option<Vec<bool>>>,
}

impl PruneMask {
    /// Everything kept; prunable slots are the block linear weights.
    pub fn dense(net: &Network) -> PruneMask {
        let keep = net
            .params()
            .iter()
            .zip(net.param_info())
            .map(|(p, info)| info.prunable().then(|| vec![true; p.len()]))
            .collect();
        PruneMask { keep }
    }

    pub fn keep(&self, i: usize) -> Option<&[bool]> {
        self.keep.get(i).and_then(|k| k.as_deref())
    }

    /// Prunable entries.
    pub fn total(&self) -> usize {
        self.keep.iter().flatten().map(Vec::len).sum()
    }

    pub fn zeroed(&self) -> usize {
        self.keep.iter().flatten().flat_map(|k| k.iter()).filter(|&&k| !k).count()
    }

    /// `zeroed / total` over prunable entries.
    pub fn sparsity(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.zeroed() as f64 / t as f64,
        }
    }

    /// Zero the pruned entries of `net`.
    pub fn apply(&self, net: &mut Network) -> Result<()> {
        if self.keep.len() != net.params().len()
            || self.keep.iter().zip(net.params()).any(|(k, p)| k.as_ref().is_some_and(|k| k.len() != p.len()))
        {
            return Err(Error::Dimension("mask does not match network".into()));
        }
        for (p, k) in net.params_mut().iter_mut().zip(&self.keep) {
            if let Some(k) = k {
                for (v, &keep) in p.data_mut().iter_mut().zip(k) {
                    if !keep {
                        *v = 0.0;
                    }
                }
            }
        }
        Ok(())
    }

    /// Kept entries as `(param, element)` pairs in declaration order.
    fn remaining(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, k) in self.keep.iter().enumerate() {
            if let Some(k) = k {
                out.extend(k.iter().enumerate().filter(|(_, &keep)| keep).map(|(j, _)| (i, j)));
            }
        }
        out
    }

    /// Zero the `count` kept entries with the lowest `score`, ties broken
    /// by declaration order.
    fn prune_lowest(&self, count: usize, score: impl Fn(usize, usize) -> f64) -> PruneMask {
        let mut cand: Vec<(f64, usize, usize)> = self.remaining().into_iter().map(|(i, j)| (score(i, j), i, j)).collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = self.clone();
        for &(_, i, j) in cand.iter().take(count) {
            out.keep[i].as_mut().expect("prunable")[j] = false;
        }
        out
    }
}

/// Global magnitude pruning: zero the `floor(s * n)` smallest-magnitude
/// block weights.
pub fn magnitude_prune(net: &Network, s: f64) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::Input(format!("sparsity {s} outside [0, 1)")));
    }
    let dense = PruneMask::dense(net);
    let count = (s * dense.total() as f64).floor() as usize;
    Ok(dense.prune_lowest(count, |i, j| net.params()[i].data()[j].abs()))
}

/// Running movement scores `S = -sum_t w_t * g_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MovementScores {
    scores: Vec<Option<Vec<f64>>>,
}

impl MovementScores {
    pub fn new(net: &Network) -> Self {
        let scores = net
            .params()
            .iter()
            .zip(net.param_info())
            .map(|(p, info)| info.prunable().then(|| vec![0.0; p.len()]))
            .collect();
        MovementScores { scores }
    }

    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.scores.get(i).and_then(|s| s.as_deref())
    }

    /// Add `-w * g` using the gradients currently on `net`.
    pub fn accumulate(&mut self, net: &Network) {
        for (s, p) in self.scores.iter_mut().zip(net.params()) {
            if let (Some(s), Some(g)) = (s, p.grad()) {
                for ((acc, w), g) in s.iter_mut().zip(p.data()).zip(g) {
                    *acc -= w * g;
                }
            }
        }
    }

    /// Zero `floor(frac * remaining)` of the still-kept weights, lowest score first.
    pub fn prune(&self, mask: &PruneMask, frac: f64) -> Result<PruneMask> {
        if !(0.0..1.0).contains(&frac) {
            return Err(Error::Config(format!("stage fraction {frac} outside [0, 1)")));
        }
        let remaining = mask.total() - mask.zeroed();
        let count = (frac * remaining as f64).floor() as usize;
        Ok(mask.prune_lowest(count, |i, j| self.scores[i].as_ref().expect("prunable")[j]))
    }
}

/// Sparsity after pruning each stage's fraction of the remaining weights.
pub fn cumulative_sparsity(stages: &[f64]) -> f64 {
    1.0 - stages.iter().map(|f| 1.0 - f).product::<f64>()
}

pub fn validate_schedule(stages: &[f64]) -> Result<()> {
    if let Some(f) = stages.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::Config(format!(
            "stage fraction {f} would prune 100% or more of the remaining weights"
        )));
    }
    Ok(())
}

struct MovementHook {
    scores: MovementScores,
    stages: Vec<f64>,
    trajectory: Vec<PruneMask>,
}

impl StepHook for MovementHook {
    fn before_step(&mut self, net: &mut Network) -> Result<()> {
        self.scores.accumulate(net);
        Ok(())
    }

    fn end_epoch(&mut self, epoch: usize, net: &mut Network, mask: &mut Option<PruneMask>) -> Result<()> {
        let current = mask.take().unwrap_or_else(|| PruneMask::dense(net));
        let next = self.scores.prune(&current, self.stages[epoch])?;
        next.apply(net)?;
        self.trajectory.push(next.clone());
        *mask = Some(next);
        Ok(())
    }
}

/// Fine-tune for one epoch per stage, accumulating movement scores
/// continuously and pruning each stage's fraction of the remaining weights
/// at the end of its epoch.
pub fn movement_prune(net: &mut Network, ds: &Dataset, stages: &[f64], cfg: &TrainConfig) -> Result<(Vec<PruneMask>, TrainLog)> {
    validate_schedule(stages)?;
    let mut hook = MovementHook { scores: MovementScores::new(net), stages: stages.to_vec(), trajectory: Vec::new() };
    let cfg = TrainConfig { epochs: stages.len(), ..cfg.clone() };
    let mut session = Session { hook: Some(&mut hook), ..Default::default() };
    let log = train::train(net, ds, None, &cfg, &mut session)?;
    Ok((hook.trajectory, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sparsity: f64,
    pub remaining_params: usize,
    pub accuracy: f64,
    pub variant: String,
    pub fine_tuned: bool,
}

/// Magnitude-prune a copy of `net` at every level of `grid` and record test
/// accuracy against surviving parameter count. With `fine_tune`, each
/// pruned copy is briefly retrained with its mask held fixed.
pub fn sparsity_accuracy_sweep(
    net: &Network,
    train_ds: &Dataset,
    test_ds: &Dataset,
    grid: &[f64],
    fine_tune: Option<&TrainConfig>,
    variant: &str,
) -> Result<Vec<SweepRecord>> {
    if let Some(s) = grid.iter().find(|s| !(0.0..1.0).contains(*s)) {
        return Err(Error::Input(format!("sparsity {s} outside [0, 1)")));
    }
    grid.par_iter()
        .map(|&s| {
            let mask = magnitude_prune(net, s)?;
            let mut pruned = net.clone();
            mask.apply(&mut pruned)?;
            if let Some(cfg) = fine_tune {
                let mut session = Session { mask: Some(mask.clone()), ..Default::default() };
                let cfg = TrainConfig { eval_train: false, ..cfg.clone() };
                train::train(&mut pruned, train_ds, None, &cfg, &mut session)?;
            }
            let accuracy = evaluate(&pruned, test_ds, 0, 256)?.accuracy;
            Ok(SweepRecord {
                sparsity: s,
                remaining_params: net.param_count() - mask.zeroed(),
                accuracy,
                variant: variant.to_string(),
                fine_tuned: fine_tune.is_some(),
            })
        })
        .collect()
}
