//! One function per subcommand. Each returns the tables and JSON documents
//! it produced; writing them out is left to [`crate::output`].

use crate::config::{baseline_loss, DataSource, InputShape, RunConfig};
use crate::output::{fmt, median, Output, Table};
use crate::CliError;
use acn_core::chain::{self, Arch};
use acn_core::continual::{self, ContinualOpts, Method};
use acn_core::data::{self, Dataset, Split};
use acn_core::net::{Connectivity, Network};
use acn_core::probe::{self, PruneMask, ProbeReport};
use acn_core::train::{self, Session, StepHook, TrainConfig, TrainLog};
use rayon::prelude::*;
use serde_json::json;

/// A connectivity pattern trained under one loss mode, e.g. `acn-dgonly`.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub connectivity: Connectivity,
    pub loss: train::LossMode,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant, CliError> {
        let (conn, mode) = match s.split_once('-') {
            Some((c, m)) => (c, Some(m)),
            None => (s, None),
        };
        let connectivity: Connectivity = conn.parse().map_err(|e| CliError::Config(format!("arch {s:?}: {e}")))?;
        let loss = match mode {
            None => train::LossMode::Standard,
            Some("dgonly") => train::LossMode::DgOnly,
            Some(m) => baseline_loss(m).ok_or_else(|| CliError::Config(format!("arch {s:?}: unknown training mode {m:?}")))?,
        };
        loss.validate(connectivity).map_err(|e| CliError::Config(format!("arch {s:?}: {e}")))?;
        Ok(Variant { name: s.to_string(), connectivity, loss })
    }

    pub fn list(names: &[String]) -> Result<Vec<Variant>, CliError> {
        if names.is_empty() {
            return Err(CliError::Config("no architectures selected".into()));
        }
        names.iter().map(|n| Variant::parse(n)).collect()
    }
}

pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
    pub input: InputShape,
}

impl Data {
    pub fn classes(&self) -> usize {
        self.train.classes()
    }
}

fn shape_of(ds: &Dataset) -> InputShape {
    let s = ds.example_shape();
    if s.len() == 3 {
        InputShape::Image { channels: s[0], size: s[1] }
    } else {
        InputShape::Vector(s[0])
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<Data, CliError> {
    let d = &cfg.data;
    let (mut train, test) = match d.source {
        DataSource::Synthetic => {
            let train = data::synth_classification(&d.synth, d.seed, 0, Split::Train)?;
            let test_spec = acn_core::data::SynthSpec { per_class: d.test_per_class, ..d.synth.clone() };
            let test = data::synth_classification(&test_spec, d.seed, 1, Split::Test)?;
            (train, test)
        }
        DataSource::Cifar10 => data::load_cifar10(&d.cifar_dir)?,
    };
    if let Some(n) = d.train_per_class {
        train = data::subset_per_class(&train, n, d.seed)?;
    }
    let input = shape_of(&train);
    Ok(Data { train, test, input })
}

pub fn build_network(cfg: &RunConfig, v: &Variant, data: &Data, heads: usize, seed: u64) -> Result<Network, CliError> {
    let classes = if heads > 1 { cfg.continual.classes_per_task } else { data.classes() };
    let nc = cfg.network.network(v.connectivity, data.input, classes, heads)?;
    Ok(Network::build(&nc, seed)?)
}

pub fn train_config(cfg: &RunConfig, v: &Variant, seed: u64) -> TrainConfig {
    TrainConfig { loss: v.loss, seed, ..cfg.train.clone() }
}

/// Every `(variant, seed)` pair, in variant-major order.
fn grid<'a>(variants: &'a [Variant], seeds: &'a [u64]) -> Vec<(&'a Variant, u64)> {
    variants.iter().flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect()
}

fn par_grid<T: Send>(
    variants: &[Variant],
    seeds: &[u64],
    f: impl Fn(&Variant, u64) -> Result<T, CliError> + Sync + Send,
) -> Result<Vec<(Variant, u64, T)>, CliError> {
    grid(variants, seeds)
        .into_par_iter()
        .map(|(v, s)| f(v, s).map(|t| (v.clone(), s, t)))
        .collect()
}

pub fn train_one(cfg: &RunConfig, v: &Variant, data: &Data, seed: u64) -> Result<(Network, TrainLog), CliError> {
    let mut net = build_network(cfg, v, data, 1, seed)?;
    let log = train::train(&mut net, &data.train, Some(&data.test), &train_config(cfg, v, seed), &mut Session::default())?;
    Ok((net, log))
}

fn train_log_table(path: String, log: &TrainLog) -> Table {
    let mut t = Table::new(path, &["epoch", "split", "loss", "accuracy"]);
    for (epoch, split, loss, acc) in log.rows() {
        t.push(vec![epoch.to_string(), split.to_string(), fmt(loss), fmt(acc)]);
    }
    t
}

// ---------------------------------------------------------------- toy1d

pub fn toy1d(cfg: &RunConfig) -> Result<Output, CliError> {
    let runs = chain::run_toy_experiment(&cfg.toy)?;
    let summary = chain::summarize_toy(&runs, cfg.toy.converged_loss);
    let mut out = Output::default();
    let mut t = Table::new("toy1d_runs.csv", &["run", "arch", "init", "w1", "w2", "w3", "final_loss", "diverged"]);
    for r in &runs {
        t.push(vec![
            r.run_id.to_string(),
            r.arch.to_string(),
            r.init_kind.to_string(),
            fmt(r.w[0]),
            fmt(r.w[1]),
            fmt(r.w[2]),
            fmt(r.final_loss),
            r.diverged.to_string(),
        ]);
    }
    out.tables.push(t);
    let (lo, width, bins) = (-2.0, 0.05, 80);
    let mut h = Table::new("toy1d_hist.csv", &["arch", "bin_lo", "bin_hi", "count"]);
    for arch in [Arch::ResNet, Arch::Acn] {
        let mut counts = vec![0usize; bins];
        for r in runs.iter().filter(|r| r.arch == arch && !r.diverged) {
            let b = ((r.w[0] - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            }
        }
        for (b, c) in counts.iter().enumerate() {
            let l = lo + b as f64 * width;
            h.push(vec![arch.to_string(), fmt(round6(l)), fmt(round6(l + width)), c.to_string()]);
        }
    }
    out.tables.push(h);
    let mut s = Table::new(
        "toy1d_summary.csv",
        &["arch", "runs", "diverged", "converged", "mean_w1", "mode_fraction", "mode_runs", "median_w1", "median_w2", "median_w3"],
    );
    for a in [&summary.resnet, &summary.acn] {
        let m = a.positive_mode_median.map(|m| m.map(fmt)).unwrap_or_else(|| ["".into(), "".into(), "".into()]);
        s.push(vec![
            a.arch.to_string(),
            a.runs.to_string(),
            a.diverged.to_string(),
            a.converged.to_string(),
            fmt(a.mean_w1),
            fmt(a.mode_fraction),
            a.positive_mode_runs.to_string(),
            m[0].clone(),
            m[1].clone(),
            m[2].clone(),
        ]);
    }
    out.tables.push(s);
    out.json.push(("toy1d_summary.json".into(), serde_json::to_value(&summary).expect("summary serializes")));
    out.notes.push(format!(
        "resnet mean w1 {:.4}; acn mode fraction {:.3} ({} converged)",
        summary.resnet.mean_w1, summary.acn.mode_fraction, summary.acn.converged
    ));
    Ok(out)
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

// ---------------------------------------------------------------- paths

pub const PATHS_NOTE: &str = "the prose example for layer 2 of a 12-layer chain speaks of 127 competing \
residual paths; the 2^(L-i) count used here gives 1024 (1023 besides the direct path)";

pub fn paths(depth: usize, i: usize) -> Result<Output, CliError> {
    if i == 0 || i > depth {
        return Err(CliError::Config(format!("--i must be in 1..=L, got i={i}, L={depth}")));
    }
    let mut out = Output::default();
    let mut t = Table::new("paths.csv", &["arch", "L", "i", "enumerated", "formula"]);
    for arch in Arch::ALL {
        let formula = match arch {
            Arch::Ffn => 1u128,
            Arch::Acn => (depth - i + 1) as u128,
            Arch::ResNet => 1u128 << (depth - i),
        };
        let enumerated = match chain::enumerate_backward_paths(arch, depth, i) {
            Ok(p) => p.len().to_string(),
            Err(acn_core::Error::EnumerationSize(_)) => String::new(),
            Err(e) => return Err(e.into()),
        };
        t.push(vec![arch.to_string(), depth.to_string(), i.to_string(), enumerated, formula.to_string()]);
        out.notes.push(format!("{arch}: {formula} backward paths"));
    }
    out.tables.push(t);
    if depth - i <= chain::MAX_ENUMERATION {
        let inc = chain::path_set_inclusion(depth, i)?;
        let mut t = Table::new("inclusion.csv", &["L", "i", "ffn_in_acn", "acn_in_resnet", "ffn_acn_strict", "acn_resnet_strict"]);
        t.push(vec![
            depth.to_string(),
            i.to_string(),
            inc.ffn_in_acn.to_string(),
            inc.acn_in_resnet.to_string(),
            inc.ffn_acn_strict.to_string(),
            inc.acn_resnet_strict.to_string(),
        ]);
        out.tables.push(t);
    }
    out.notes.push(format!("note: {PATHS_NOTE}"));
    Ok(out)
}

// ---------------------------------------------------------------- train

pub fn train_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let data = load_data(cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let results = par_grid(&variants, &cfg.seeds, |v, s| train_one(cfg, v, &data, s))?;
    let mut out = Output::default();
    for (v, s, (_, log)) in &results {
        out.tables.push(train_log_table(format!("train_{}_s{s}.csv", v.name), log));
        out.json.push((format!("train_{}_s{s}.json", v.name), serde_json::to_value(log).expect("log serializes")));
    }
    Ok(out)
}

// ---------------------------------------------------------------- probe

fn probe_table(path: String, acc: &[f64], n_params: &[usize]) -> Table {
    let mut t = Table::new(path, &["k", "accuracy", "n_params_used"]);
    for (k, (a, n)) in acc.iter().zip(n_params).enumerate() {
        t.push(vec![k.to_string(), fmt(*a), n.to_string()]);
    }
    t
}

/// Probe reports per `(variant, seed)` after training.
pub fn probe_runs(cfg: &RunConfig, data: &Data, variants: &[Variant]) -> Result<Vec<(Variant, u64, ProbeReport)>, CliError> {
    par_grid(variants, &cfg.seeds, |v, s| {
        let (net, _) = train_one(cfg, v, data, s)?;
        let mut rep = probe::probe_all_depths(&net, &data.test, 0, "test")?;
        rep.epoch = Some(cfg.train.epochs);
        Ok(rep)
    })
}

pub fn probe_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let data = load_data(cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let reports = probe_runs(cfg, &data, &variants)?;
    let mut out = Output::default();
    let mut eff = Table::new("effective_depth.csv", &["variant", "seed", "effective_depth", "final_accuracy", "depth"]);
    for (v, s, rep) in &reports {
        out.tables.push(probe_table(format!("probe_{}_s{s}.csv", v.name), &rep.accuracy, &rep.n_params_used));
        eff.push(vec![
            v.name.clone(),
            s.to_string(),
            rep.effective_depth(cfg.probe.eps).to_string(),
            fmt(*rep.accuracy.last().unwrap()),
            rep.depth().to_string(),
        ]);
    }
    for v in &variants {
        let reps: Vec<&ProbeReport> = reports.iter().filter(|(w, _, _)| w == v).map(|(_, _, r)| r).collect();
        let acc: Vec<f64> = (0..reps[0].accuracy.len()).map(|k| median(reps.iter().map(|r| r.accuracy[k]))).collect();
        let k_star = median(reps.iter().map(|r| r.effective_depth(cfg.probe.eps) as f64));
        eff.push(vec![v.name.clone(), "median".into(), fmt(k_star), fmt(*acc.last().unwrap()), reps[0].depth().to_string()]);
        out.tables.push(probe_table(format!("probe_{}_median.csv", v.name), &acc, &reps[0].n_params_used));
        out.notes.push(format!("{}: median effective depth {k_star} of {}, final accuracy {:.4}", v.name, reps[0].depth(), acc.last().unwrap()));
    }
    out.tables.push(eff);
    Ok(out)
}

// ---------------------------------------------------------------- gradmap

/// Probes the test set at the end of every epoch.
struct EpochProbe<'a> {
    test: &'a Dataset,
    accuracy: Vec<Vec<f64>>,
}

impl StepHook for EpochProbe<'_> {
    fn end_epoch(&mut self, _epoch: usize, net: &mut Network, _mask: &mut Option<PruneMask>) -> acn_core::Result<()> {
        self.accuracy.push(probe::probe_all_depths(net, self.test, 0, "test")?.accuracy);
        Ok(())
    }
}

pub fn gradmap_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let data = load_data(cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let runs = par_grid(&variants, &cfg.seeds, |v, s| {
        let mut net = build_network(cfg, v, &data, 1, s)?;
        let mut hook = EpochProbe { test: &data.test, accuracy: Vec::new() };
        let tc = TrainConfig { layer_norms: true, eval_train: false, ..train_config(cfg, v, s) };
        let log = {
            let mut session = Session { hook: Some(&mut hook), ..Default::default() };
            train::train(&mut net, &data.train, None, &tc, &mut session)?
        };
        Ok((log, hook.accuracy))
    })?;
    let mut norms = Table::new("gradmap_norms.csv", &["variant", "seed", "epoch", "layer", "grad_norm"]);
    let mut contrib = Table::new("gradmap_contrib.csv", &["variant", "seed", "epoch", "layer", "delta_accuracy"]);
    for (v, s, (log, acc)) in &runs {
        for e in &log.epochs {
            for (l, g) in e.layer_norms.iter().enumerate() {
                norms.push(vec![v.name.clone(), s.to_string(), e.epoch.to_string(), (l + 1).to_string(), fmt(*g)]);
            }
        }
        for (e, a) in acc.iter().enumerate() {
            for (l, d) in probe::incremental_contribution(a).iter().enumerate() {
                contrib.push(vec![v.name.clone(), s.to_string(), (e + 1).to_string(), (l + 1).to_string(), fmt(*d)]);
            }
        }
    }
    let mut out = Output::default();
    out.tables.push(norms);
    out.tables.push(contrib);
    Ok(out)
}

// ---------------------------------------------------------------- dgratio

pub fn dgratio_runs(cfg: &RunConfig, data: &Data, variants: &[Variant]) -> Result<Vec<(Variant, u64, TrainLog)>, CliError> {
    par_grid(variants, &cfg.seeds, |v, s| {
        let mut net = build_network(cfg, v, data, 1, s)?;
        let tc = TrainConfig { grad_decomp: true, eval_train: false, ..train_config(cfg, v, s) };
        Ok(train::train(&mut net, &data.train, None, &tc, &mut Session::default())?)
    })
}

pub fn dgratio_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let data = load_data(cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let runs = dgratio_runs(cfg, &data, &variants)?;
    let mut t = Table::new("dgratio.csv", &["variant", "seed", "epoch", "layer", "dg_norm", "fg_norm", "ratio"]);
    for (v, s, log) in &runs {
        for d in &log.grad_decomp {
            for (l, x) in d.layers.iter().enumerate() {
                t.push(vec![
                    v.name.clone(),
                    s.to_string(),
                    d.epoch.to_string(),
                    (l + 1).to_string(),
                    fmt(x.dg_norm),
                    fmt(x.fg_norm),
                    x.ratio.map(fmt).unwrap_or_default(),
                ]);
            }
        }
    }
    for v in &variants {
        let logs: Vec<&TrainLog> = runs.iter().filter(|(w, _, _)| w == v).map(|(_, _, l)| l).collect();
        for (e, d) in logs[0].grad_decomp.iter().enumerate() {
            for l in 0..d.layers.len() {
                let r = median(logs.iter().filter_map(|g| g.grad_decomp[e].layers[l].ratio));
                t.push(vec![v.name.clone(), "median".into(), d.epoch.to_string(), (l + 1).to_string(), String::new(), String::new(), fmt(r)]);
            }
        }
    }
    let mut out = Output::default();
    out.tables.push(t);
    Ok(out)
}

// ---------------------------------------------------------------- noise

pub fn noise_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let data = load_data(cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let runs = par_grid(&variants, &cfg.seeds, |v, s| {
        let (net, _) = train_one(cfg, v, &data, s)?;
        let clean = train::evaluate(&net, &data.test, 0, 256)?.accuracy;
        let mut rows = Vec::new();
        for &sigma in &cfg.noise.sigmas {
            let noisy = data::add_gaussian_noise(&data.test, sigma, s)?;
            rows.push(("gaussian", sigma, train::evaluate(&net, &noisy, 0, 256)?.accuracy));
        }
        if data.test.is_image() {
            for &p in &cfg.noise.ps {
                let noisy = data::add_salt_pepper(&data.test, p, s)?;
                rows.push(("salt_pepper", p, train::evaluate(&net, &noisy, 0, 256)?.accuracy));
            }
        }
        Ok((clean, rows))
    })?;
    let mut t = Table::new("noise.csv", &["variant", "seed", "noise", "level", "accuracy", "clean_accuracy"]);
    for (v, s, (clean, rows)) in &runs {
        for (kind, level, acc) in rows {
            t.push(vec![v.name.clone(), s.to_string(), kind.to_string(), fmt(*level), fmt(*acc), fmt(*clean)]);
        }
    }
    let mut out = Output::default();
    out.tables.push(t);
    if !data.test.is_image() {
        out.notes.push("salt-and-pepper levels skipped: dataset is not image-shaped".into());
    }
    Ok(out)
}

// ---------------------------------------------------------------- lowdata

pub fn lowdata_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let mut cfg = cfg.clone();
    cfg.data.train_per_class = Some(cfg.lowdata.per_class);
    let data = load_data(&cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let runs = par_grid(&variants, &cfg.seeds, |v, s| Ok(train_one(&cfg, v, &data, s)?.1))?;
    let mut t = Table::new("lowdata.csv", &["variant", "seed", "epoch", "split", "loss", "accuracy"]);
    for (v, s, log) in &runs {
        for (epoch, split, loss, acc) in log.rows() {
            t.push(vec![v.name.clone(), s.to_string(), epoch.to_string(), split.to_string(), fmt(loss), fmt(acc)]);
        }
    }
    let mut out = Output::default();
    out.tables.push(t);
    out.notes.push(format!("{} training examples ({} per class)", data.train.len(), cfg.lowdata.per_class));
    Ok(out)
}

// ---------------------------------------------------------------- prune

pub fn prune_runs(cfg: &RunConfig, data: &Data, variants: &[Variant]) -> Result<Vec<(Variant, u64, Vec<probe::SweepRecord>)>, CliError> {
    par_grid(variants, &cfg.seeds, |v, s| {
        let (net, _) = train_one(cfg, v, data, s)?;
        let ft = TrainConfig { epochs: cfg.prune.fine_tune_epochs, ..train_config(cfg, v, s) };
        let mut recs = probe::sparsity_accuracy_sweep(&net, &data.train, &data.test, &cfg.prune.grid, None, &v.name)?;
        if cfg.prune.fine_tune {
            recs.extend(probe::sparsity_accuracy_sweep(&net, &data.train, &data.test, &cfg.prune.grid, Some(&ft), &v.name)?);
        }
        Ok(recs)
    })
}

pub fn prune_cmd(cfg: &RunConfig, movement: bool) -> Result<Output, CliError> {
    let data = load_data(cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let runs = prune_runs(cfg, &data, &variants)?;
    let header = ["sparsity", "remaining_params", "accuracy", "variant", "fine_tuned"];
    let mut out = Output::default();
    for &s in &cfg.seeds {
        let mut t = Table::new(format!("prune_s{s}.csv"), &header);
        for (_, _, recs) in runs.iter().filter(|(_, seed, _)| *seed == s) {
            for r in recs {
                t.push(vec![fmt(r.sparsity), r.remaining_params.to_string(), fmt(r.accuracy), r.variant.clone(), r.fine_tuned.to_string()]);
            }
        }
        out.tables.push(t);
    }
    let mut m = Table::new("prune_median.csv", &header);
    for v in &variants {
        let per_seed: Vec<&Vec<probe::SweepRecord>> = runs.iter().filter(|(w, _, _)| w == v).map(|(_, _, r)| r).collect();
        for (j, r) in per_seed[0].iter().enumerate() {
            let acc = median(per_seed.iter().map(|x| x[j].accuracy));
            m.push(vec![fmt(r.sparsity), r.remaining_params.to_string(), fmt(acc), r.variant.clone(), r.fine_tuned.to_string()]);
        }
    }
    out.tables.push(m);
    if movement {
        let mv = par_grid(&variants, &cfg.seeds, |v, s| {
            let (mut net, _) = train_one(cfg, v, &data, s)?;
            let tc = TrainConfig { eval_train: false, ..train_config(cfg, v, s) };
            let (masks, _) = probe::movement_prune(&mut net, &data.train, &cfg.prune.stages, &tc)?;
            let acc = train::evaluate(&net, &data.test, 0, 256)?.accuracy;
            Ok((masks.iter().map(PruneMask::sparsity).collect::<Vec<_>>(), acc, net.param_count() - masks.last().map_or(0, |m| m.zeroed())))
        })?;
        let mut t = Table::new("prune_movement.csv", &["variant", "seed", "stage", "sparsity", "final_accuracy", "final_remaining_params"]);
        for (v, s, (sp, acc, rem)) in &mv {
            for (i, x) in sp.iter().enumerate() {
                t.push(vec![v.name.clone(), s.to_string(), (i + 1).to_string(), fmt(*x), fmt(*acc), rem.to_string()]);
            }
        }
        out.tables.push(t);
    }
    Ok(out)
}

// ---------------------------------------------------------------- continual

pub fn continual_runs(cfg: &RunConfig, data: &Data, variants: &[Variant]) -> Result<Vec<(Variant, u64, continual::ContinualReport)>, CliError> {
    let methods: Vec<Method> = cfg
        .continual
        .methods
        .iter()
        .map(|m| if m == "si" { Method::Si { lambda: cfg.continual.lambda, xi: cfg.continual.xi } } else { Method::Naive })
        .collect();
    let jobs: Vec<(Variant, Method, u64)> = variants
        .iter()
        .flat_map(|v| methods.iter().flat_map(move |&m| cfg.seeds.iter().map(move |&s| (v.clone(), m, s))))
        .collect();
    jobs.into_par_iter()
        .map(|(v, m, s)| {
            let stream = continual::split_tasks(&data.train, &data.test, cfg.continual.tasks, cfg.continual.classes_per_task, cfg.data.seed)?;
            let mut net = build_network(cfg, &v, data, cfg.continual.tasks, s)?;
            let opts = ContinualOpts {
                method: m,
                train: TrainConfig { epochs: cfg.continual.epochs_per_task, ..train_config(cfg, &v, s) },
                trunk_lr_after_first: None,
            };
            Ok((v, s, continual::run_sequence(&mut net, &stream, &opts)?))
        })
        .collect()
}

pub fn continual_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let data = load_data(cfg)?;
    let variants = Variant::list(&cfg.arch)?;
    let runs = continual_runs(cfg, &data, &variants)?;
    let mut mat = Table::new("continual_matrix.csv", &["variant", "method", "seed", "t_eval", "t_after", "accuracy"]);
    let mut met = Table::new("continual_metrics.csv", &["variant", "method", "seed", "avg_accuracy", "avg_forgetting"]);
    for (v, s, r) in &runs {
        for (te, row) in r.accuracy.iter().enumerate() {
            for (ta, a) in row.iter().enumerate() {
                if let Some(a) = a {
                    mat.push(vec![v.name.clone(), r.method.clone(), s.to_string(), te.to_string(), ta.to_string(), fmt(*a)]);
                }
            }
        }
        met.push(vec![v.name.clone(), r.method.clone(), s.to_string(), fmt(r.avg_accuracy), fmt(r.avg_forgetting)]);
    }
    let mut out = Output::default();
    for v in &variants {
        for m in &cfg.continual.methods {
            let sel: Vec<&continual::ContinualReport> = runs.iter().filter(|(w, _, r)| w == v && &r.method == m).map(|(_, _, r)| r).collect();
            let acc = median(sel.iter().map(|r| r.avg_accuracy));
            let fgt = median(sel.iter().map(|r| r.avg_forgetting));
            met.push(vec![v.name.clone(), m.clone(), "median".into(), fmt(acc), fmt(fgt)]);
            out.notes.push(format!("{} {m}: median accuracy {acc:.4}, forgetting {fgt:.4}", v.name));
        }
    }
    out.tables.push(mat);
    out.tables.push(met);
    let reports: Vec<_> = runs.iter().map(|(v, s, r)| json!({"variant": v.name, "seed": s, "report": r})).collect();
    out.json.push(("continual.json".into(), json!(reports)));
    Ok(out)
}
