//! Task-incremental continual learning: disjoint class splits, naive
//! sequential fine-tuning and Synaptic Intelligence, with average accuracy
//! and forgetting.

use crate::data::Dataset;
use crate::net::{Network, ParamRole};
use crate::rng::{self, tags};
use crate::train::{self, evaluate, Session, StepHook, TrainConfig};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct Task {
    pub id: usize,
    /// Original class ids, in the order they map to local labels.
    pub classes: Vec<usize>,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Clone, Debug)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
}

/// Seeded disjoint partition of the classes into `n_tasks` tasks of
/// `classes_per_task`, each relabelled to `0..classes_per_task`.
pub fn split_tasks(train: &Dataset, test: &Dataset, n_tasks: usize, classes_per_task: usize, seed: u64) -> Result<TaskStream> {
    let need = n_tasks * classes_per_task;
    if n_tasks == 0 || classes_per_task == 0 || need > train.classes() || train.classes() != test.classes() {
        return Err(Error::Config(format!(
            "{n_tasks} tasks x {classes_per_task} classes needs {need} classes, dataset has {}",
            train.classes()
        )));
    }
    let mut order: Vec<usize> = (0..train.classes()).collect();
    order.shuffle(&mut rng::stream(seed, tags::SPLIT));
    let tasks = order
        .chunks(classes_per_task)
        .take(n_tasks)
        .enumerate()
        .map(|(id, cls)| {
            Ok(Task {
                id,
                classes: cls.to_vec(),
                train: train.restrict_classes(cls)?,
                test: test.restrict_classes(cls)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TaskStream { tasks })
}

/// Synaptic Intelligence bookkeeping, one slot per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct SIState {
    /// Path integral of the current task.
    pub omega: Vec<Vec<f64>>,
    /// Consolidated importance.
    pub importance: Vec<Vec<f64>>,
    pub anchor: Vec<Vec<f64>>,
    pub xi: f64,
    pub lambda: f64,
}

impl SIState {
    pub fn new(params: &[Vec<f64>], xi: f64, lambda: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        SIState { omega: zeros.clone(), importance: zeros, anchor: params.to_vec(), xi, lambda }
    }

    pub fn for_network(net: &Network, xi: f64, lambda: f64) -> Self {
        SIState::new(&snapshot(net), xi, lambda)
    }

    fn check(&self, other: &[Vec<f64>]) -> Result<()> {
        if other.len() != self.omega.len() || other.iter().zip(&self.omega).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::State("SI state does not match parameter shapes".into()));
        }
        Ok(())
    }
}

fn snapshot(net: &Network) -> Vec<Vec<f64>> {
    net.params().iter().map(|p| p.data().to_vec()).collect()
}

/// `omega += -g * delta` for one optimizer step.
pub fn si_accumulate(state: &mut SIState, delta: &[Vec<f64>], grads: &[Vec<f64>]) -> Result<()> {
    state.check(delta)?;
    state.check(grads)?;
    for ((w, d), g) in state.omega.iter_mut().zip(delta).zip(grads) {
        for ((w, d), g) in w.iter_mut().zip(d).zip(g) {
            *w -= g * d;
        }
    }
    Ok(())
}

/// Task boundary: fold the path integral into the importance and re-anchor.
/// A negative contribution (possible under momentum or weight decay) adds
/// nothing, keeping the importance non-negative.
pub fn si_consolidate(state: &mut SIState, theta_end: &[Vec<f64>]) -> Result<()> {
    state.check(theta_end)?;
    let xi = state.xi;
    for (((om, imp), anchor), th) in state.omega.iter_mut().zip(&mut state.importance).zip(&mut state.anchor).zip(theta_end) {
        for (((o, i), a), t) in om.iter_mut().zip(imp.iter_mut()).zip(anchor.iter_mut()).zip(th) {
            let d = t - *a;
            *i += (*o / (d * d + xi)).max(0.0);
            *a = *t;
            *o = 0.0;
        }
    }
    Ok(())
}

/// `lambda * sum importance * (theta - anchor)^2`.
pub fn si_penalty(state: &SIState, theta: &[Vec<f64>]) -> Result<f64> {
    state.check(theta)?;
    let mut s = 0.0;
    for ((imp, a), th) in state.importance.iter().zip(&state.anchor).zip(theta) {
        for ((i, a), t) in imp.iter().zip(a).zip(th) {
            s += i * (t - a) * (t - a);
        }
    }
    Ok(state.lambda * s)
}

/// Gradient of [`si_penalty`]: `2 * lambda * importance * (theta - anchor)`.
pub fn si_penalty_grad(state: &SIState, theta: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    state.check(theta)?;
    Ok(state
        .importance
        .iter()
        .zip(&state.anchor)
        .zip(theta)
        .map(|((imp, a), th)| imp.iter().zip(a).zip(th).map(|((i, a), t)| 2.0 * state.lambda * i * (t - a)).collect())
        .collect())
}

struct SiHook<'s> {
    state: &'s mut SIState,
    task_grads: Vec<Vec<f64>>,
    before: Vec<Vec<f64>>,
}

impl StepHook for SiHook<'_> {
    fn before_step(&mut self, net: &mut Network) -> Result<()> {
        self.task_grads = net.params().iter().map(|p| p.grad_or_zeros()).collect();
        self.before = snapshot(net);
        let pen = si_penalty_grad(self.state, &self.before)?;
        for (p, g) in net.params_mut().iter_mut().zip(&pen) {
            if p.requires_grad() {
                p.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    fn after_step(&mut self, net: &Network) -> Result<()> {
        let delta: Vec<Vec<f64>> = net
            .params()
            .iter()
            .zip(&self.before)
            .map(|(p, b)| p.data().iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        si_accumulate(self.state, &delta, &self.task_grads)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum Method {
    Naive,
    Si {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_xi")]
        xi: f64,
    },
}

fn default_lambda() -> f64 {
    1.0
}

fn default_xi() -> f64 {
    0.1
}

impl Method {
    pub fn si() -> Method {
        Method::Si { lambda: default_lambda(), xi: default_xi() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Si { .. } => "si",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinualReport {
    pub method: String,
    pub connectivity: String,
    /// `accuracy[t_eval][t_after]`, `None` before task `t_eval` is learned.
    pub accuracy: Vec<Vec<Option<f64>>>,
    /// Test accuracy after every epoch while each task was being learned.
    pub curves: Vec<Vec<f64>>,
    pub avg_accuracy: f64,
    pub avg_forgetting: f64,
}

/// `(avg_accuracy, avg_forgetting)` of a filled accuracy matrix. Best
/// performance is taken right after learning (`A[t][t]`).
pub fn metrics(acc: &[Vec<Option<f64>>]) -> Result<(f64, f64)> {
    let n = acc.len();
    if n == 0 {
        return Err(Error::Input("empty accuracy matrix".into()));
    }
    let last = n - 1;
    let get = |t: usize, s: usize| {
        acc[t].get(s).copied().flatten().ok_or_else(|| Error::Input(format!("accuracy matrix missing A[{t}][{s}]")))
    };
    let mut avg = 0.0;
    for t in 0..n {
        avg += get(t, last)?;
    }
    avg /= n as f64;
    let mut forget = 0.0;
    for t in 0..last {
        forget += get(t, t)? - get(t, last)?;
    }
    let forget = if last == 0 { 0.0 } else { forget / last as f64 };
    Ok((avg, forget))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinualOpts {
    pub method: Method,
    pub train: TrainConfig,
    /// Learning-rate multiplier for non-head parameters after the first task.
    #[serde(default)]
    pub trunk_lr_after_first: Option<f64>,
}

/// Train the tasks in order, head `t` for task `t`, and evaluate every seen
/// task after each one.
pub fn run_sequence(net: &mut Network, stream: &TaskStream, opts: &ContinualOpts) -> Result<ContinualReport> {
    let n = stream.tasks.len();
    if net.config().head.heads < n {
        return Err(Error::Config(format!("{n} tasks need {n} heads, network has {}", net.config().head.heads)));
    }
    let mut si = match opts.method {
        Method::Si { lambda, xi } => Some(SIState::for_network(net, xi, lambda)),
        Method::Naive => None,
    };
    let mut acc = vec![vec![None; n]; n];
    let mut curves = Vec::with_capacity(n);
    for task in &stream.tasks {
        let t = task.id;
        let lr_scale: Vec<f64> = net
            .param_info()
            .iter()
            .map(|info| match (info.role, info.head) {
                (ParamRole::HeadWeight | ParamRole::HeadBias | ParamRole::NormGain | ParamRole::NormShift, Some(h)) => {
                    if h == t {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ if t > 0 => opts.trunk_lr_after_first.unwrap_or(1.0),
                _ => 1.0,
            })
            .collect();
        let cfg = TrainConfig { head: t, seed: opts.train.seed.wrapping_add(t as u64), eval_train: false, ..opts.train.clone() };
        let log = match si.as_mut() {
            Some(state) => {
                let mut hook = SiHook { state, task_grads: Vec::new(), before: Vec::new() };
                let mut session = Session { lr_scale: Some(lr_scale), hook: Some(&mut hook), ..Default::default() };
                train::train(net, &task.train, Some(&task.test), &cfg, &mut session)?
            }
            None => {
                let mut session = Session { lr_scale: Some(lr_scale), ..Default::default() };
                train::train(net, &task.train, Some(&task.test), &cfg, &mut session)?
            }
        };
        curves.push(log.epochs.iter().filter_map(|e| e.test.map(|x| x.accuracy)).collect());
        if let Some(state) = si.as_mut() {
            si_consolidate(state, &snapshot(net))?;
        }
        for seen in &stream.tasks[..=t] {
            acc[seen.id][t] = Some(evaluate(net, &seen.test, seen.id, 256)?.accuracy);
        }
    }
    let (avg_accuracy, avg_forgetting) = metrics(&acc)?;
    Ok(ContinualReport {
        method: opts.method.name().to_string(),
        connectivity: net.connectivity().to_string(),
        accuracy: acc,
        curves,
        avg_accuracy,
        avg_forgetting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_examples() {
        let mut s = SIState::new(&[vec![1.0]], 0.1, 1.0);
        assert_eq!(si_penalty(&s, &[vec![1.0]]).unwrap(), 0.0);
        s.importance = vec![vec![2.0]];
        assert_eq!(si_penalty(&s, &[vec![1.5]]).unwrap(), 0.5);
        assert_eq!(si_penalty(&s, &[vec![1.0]]).unwrap(), 0.0);
        assert_eq!(si_penalty_grad(&s, &[vec![1.0]]).unwrap(), vec![vec![0.0]]);
    }

    #[test]
    fn accumulate_and_consolidate() {
        let mut s = SIState::new(&[vec![0.0, 0.0]], 0.1, 1.0);
        si_accumulate(&mut s, &[vec![0.0, 0.0]], &[vec![3.0, 1.0]]).unwrap();
        assert_eq!(s.omega, vec![vec![0.0, 0.0]]);
        // plain descent step, lr 0.5
        si_accumulate(&mut s, &[vec![-1.5, -0.5]], &[vec![3.0, 1.0]]).unwrap();
        assert_eq!(s.omega, vec![vec![4.5, 0.5]]);
        si_consolidate(&mut s, &[vec![0.0, -0.5]]).unwrap();
        assert_eq!(s.importance[0][0], 4.5 / 0.1);
        assert!((s.importance[0][1] - 0.5 / 0.35).abs() < 1e-15);
        assert_eq!(s.anchor, vec![vec![0.0, -0.5]]);
        assert_eq!(s.omega, vec![vec![0.0, 0.0]]);
        assert!(si_accumulate(&mut s, &[vec![1.0]], &[vec![1.0]]).is_err());
    }

    #[test]
    fn negative_path_integral_adds_no_importance() {
        let mut s = SIState::new(&[vec![0.0, 0.0]], 0.1, 1.0);
        // a step against the gradient, as momentum can produce
        si_accumulate(&mut s, &[vec![0.5, -0.5]], &[vec![1.0, 1.0]]).unwrap();
        si_consolidate(&mut s, &[vec![0.5, -0.5]]).unwrap();
        assert_eq!(s.importance[0][0], 0.0);
        assert!(s.importance[0][1] > 0.0);
    }

    #[test]
    fn metric_examples() {
        let m = vec![vec![Some(0.9), Some(0.6)], vec![None, Some(0.8)]];
        let (a, f) = metrics(&m).unwrap();
        assert!((a - 0.7).abs() < 1e-15);
        assert!((f - 0.3).abs() < 1e-15);
        let (a, f) = metrics(&[vec![Some(0.75)]]).unwrap();
        assert_eq!((a, f), (0.75, 0.0));
        let c = vec![vec![Some(0.5); 3]; 3];
        assert_eq!(metrics(&c).unwrap().1, 0.0);
    }
}
