//! Three-layer scalar chains fitted to `y = 2x`.
//!
//! Both ResNet and ACN can express the target with a single active layer
//! (`w = [1, 0, 0]`); the experiment shows which solution gradient descent
//! actually reaches from a random start.

use super::{forward_1d, grad_closed_form, Arch, Chain1D};
use crate::rng::{stream, tags};
use crate::{Error, Result};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ToyInit {
    Uniform { lo: f64, hi: f64 },
    Normal { std: f64 },
}

impl ToyInit {
    pub fn name(&self) -> &'static str {
        match self {
            ToyInit::Uniform { .. } => "uniform",
            ToyInit::Normal { .. } => "normal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub runs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub samples: usize,
    /// Inputs are drawn uniformly from `[-x_range, x_range]`.
    pub x_range: f64,
    pub init: ToyInit,
    pub seed: u64,
    /// Final MSE below which a run counts as converged.
    pub converged_loss: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            runs: 1000,
            epochs: 300,
            lr: 0.003,
            samples: 1000,
            x_range: 10.0,
            init: ToyInit::Uniform { lo: -1.0, hi: 1.0 },
            seed: 7,
            converged_loss: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyRun {
    pub run_id: usize,
    pub arch: Arch,
    pub init_kind: &'static str,
    pub w: [f64; 3],
    pub final_loss: f64,
    pub diverged: bool,
}

const TARGET_SLOPE: f64 = 2.0;
const DIVERGENCE_BOUND: f64 = 1e6;

/// MSE of `a x` against `2x` given `mean(x^2)`.
fn mse(arch: Arch, w: &[f64; 3], mean_sq: f64) -> f64 {
    let chain = Chain1D::new(w.to_vec(), 1.0).expect("three layers");
    let a = forward_1d(arch, &chain);
    (a - TARGET_SLOPE) * (a - TARGET_SLOPE) * mean_sq
}

/// Full-batch gradient descent on the MSE. Because the model is `a(w) x`,
/// the batch gradient is `2 (a - 2) mean(x^2) da/dw`, with `da/dw` taken
/// from the closed-form chain gradients at `x_0 = 1`.
fn train_one(arch: Arch, init: [f64; 3], mean_sq: f64, cfg: &ToyConfig) -> ([f64; 3], f64, bool) {
    let mut w = init;
    for _ in 0..cfg.epochs {
        let chain = Chain1D::new(w.to_vec(), 1.0).expect("three layers");
        let residual = forward_1d(arch, &chain) - TARGET_SLOPE;
        let mut next = w;
        for (i, slot) in next.iter_mut().enumerate() {
            let da = grad_closed_form(arch, &chain, i + 1).expect("layer in range");
            *slot -= cfg.lr * 2.0 * residual * mean_sq * da;
        }
        w = next;
        if w.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return (w, f64::INFINITY, true);
        }
    }
    let loss = mse(arch, &w, mean_sq);
    (w, loss, !loss.is_finite())
}

/// Train ResNet and ACN chains from the same random start for every run.
/// Output is ordered by run id, ResNet before ACN.
pub fn run_toy_experiment(cfg: &ToyConfig) -> Result<Vec<ToyRun>> {
    if cfg.runs == 0 || cfg.samples == 0 {
        return Err(Error::Config("toy experiment needs runs >= 1 and samples >= 1".into()));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("toy lr must be positive, got {}", cfg.lr)));
    }
    let normal = match cfg.init {
        ToyInit::Normal { std } => Some(
            Normal::new(0.0, std).map_err(|e| Error::Config(format!("toy init: {e}")))?,
        ),
        ToyInit::Uniform { lo, hi } if !(lo < hi) => {
            return Err(Error::Config(format!("toy init range [{lo}, {hi}] is empty")))
        }
        ToyInit::Uniform { .. } => None,
    };
    let runs: Vec<Vec<ToyRun>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run_id| {
            let mut rng = stream(cfg.seed, tags::TOY.wrapping_shl(32) | run_id as u64);
            let mut init = [0.0; 3];
            for v in &mut init {
                *v = match (cfg.init, &normal) {
                    (ToyInit::Uniform { lo, hi }, _) => rng.gen_range(lo..hi),
                    (_, Some(n)) => n.sample(&mut rng),
                    _ => unreachable!(),
                };
            }
            let mean_sq = (0..cfg.samples)
                .map(|_| {
                    let x: f64 = rng.gen_range(-cfg.x_range..=cfg.x_range);
                    x * x
                })
                .sum::<f64>()
                / cfg.samples as f64;
            [Arch::ResNet, Arch::Acn]
                .into_iter()
                .map(|arch| {
                    let (w, final_loss, diverged) = train_one(arch, init, mean_sq, cfg);
                    ToyRun { run_id, arch, init_kind: cfg.init.name(), w, final_loss, diverged }
                })
                .collect()
        })
        .collect();
    Ok(runs.into_iter().flatten().collect())
}

/// Histogram statistics for one architecture.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArchSummary {
    pub arch: Arch,
    pub runs: usize,
    pub diverged: usize,
    pub converged: usize,
    /// Mean final `w_1` over non-diverged runs.
    pub mean_w1: f64,
    /// Fraction of converged runs with `|w_1|` in `[0.75, 1.1]`.
    pub mode_fraction: f64,
    /// Converged runs with `w_1` in `[0.75, 1.1]`.
    pub positive_mode_runs: usize,
    /// Coordinate-wise median of `(w_1, w_2, w_3)` over the positive mode.
    pub positive_mode_median: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToySummary {
    pub resnet: ArchSummary,
    pub acn: ArchSummary,
}

pub const MODE_LO: f64 = 0.75;
pub const MODE_HI: f64 = 1.1;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize_arch(arch: Arch, runs: &[ToyRun], converged_loss: f64) -> ArchSummary {
    let mine: Vec<&ToyRun> = runs.iter().filter(|r| r.arch == arch).collect();
    let ok: Vec<&ToyRun> = mine.iter().copied().filter(|r| !r.diverged).collect();
    let conv: Vec<&ToyRun> = ok.iter().copied().filter(|r| r.final_loss < converged_loss).collect();
    let in_mode = |w: f64| (MODE_LO..=MODE_HI).contains(&w.abs());
    let mode_count = conv.iter().filter(|r| in_mode(r.w[0])).count();
    let pos: Vec<&ToyRun> = conv
        .iter()
        .copied()
        .filter(|r| (MODE_LO..=MODE_HI).contains(&r.w[0]))
        .collect();
    let positive_mode_median = (!pos.is_empty())
        .then(|| [0, 1, 2].map(|k| median(pos.iter().map(|r| r.w[k]).collect())));
    ArchSummary {
        arch,
        runs: mine.len(),
        diverged: mine.len() - ok.len(),
        converged: conv.len(),
        mean_w1: ok.iter().map(|r| r.w[0]).sum::<f64>() / ok.len().max(1) as f64,
        mode_fraction: mode_count as f64 / conv.len().max(1) as f64,
        positive_mode_runs: pos.len(),
        positive_mode_median,
    }
}

/// Summary statistics; divergent runs are counted but excluded.
pub fn summarize_toy(runs: &[ToyRun], converged_loss: f64) -> ToySummary {
    ToySummary {
        resnet: summarize_arch(Arch::ResNet, runs, converged_loss),
        acn: summarize_arch(Arch::Acn, runs, converged_loss),
    }
}
