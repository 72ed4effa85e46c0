//! Argument parsing and dispatch.

use crate::config::{parse_config, parse_config_str, RunConfig};
use crate::experiments as ex;
use crate::output::{write_output, Output};
use crate::CliError;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "acnlab", version, about = "Auto-compressing network experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// JSON run config; missing keys take preset or built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single seed (overrides `seeds` in the config).
    #[arg(long, global = true, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory (default `out/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated variants, e.g. `acn,residual,ffn,acn-dgonly`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub arch: Option<Vec<String>>,
    /// Training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Peak learning rate.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Network depth L.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Three-weight scalar chain: final weight histograms.
    Toy1d {
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long = "toy-epochs")]
        toy_epochs: Option<usize>,
    },
    /// Backward path counts and inclusion for one layer of a chain.
    Paths {
        #[arg(long = "L")]
        l: usize,
        #[arg(long = "i")]
        i: usize,
    },
    /// Train and log loss/accuracy per epoch.
    Train,
    /// Linear-probe accuracy at every depth and effective depth.
    Probe {
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Per-epoch layer gradient norms and incremental contributions.
    Gradmap,
    /// Direct-gradient share of the full gradient per layer and epoch.
    Dgratio,
    /// Accuracy under Gaussian and salt-and-pepper test noise.
    Noise,
    /// Training on a per-class subset.
    Lowdata {
        #[arg(long = "per-class")]
        per_class: Option<usize>,
    },
    /// Magnitude sparsity sweep, optionally with movement pruning.
    Prune {
        #[arg(long)]
        movement: bool,
        #[arg(long = "fine-tune")]
        fine_tune: bool,
    },
    /// Split-task continual learning with and without SI.
    Continual {
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long = "epochs-per-task")]
        epochs_per_task: Option<usize>,
    },
    /// Collect the manifests and JSON summaries found under a directory.
    Report {
        #[arg(long)]
        from: PathBuf,
    },
    /// Print the fully expanded config.
    Config,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Toy1d { .. } => "toy1d",
            Command::Paths { .. } => "paths",
            Command::Train => "train",
            Command::Probe { .. } => "probe",
            Command::Gradmap => "gradmap",
            Command::Dgratio => "dgratio",
            Command::Noise => "noise",
            Command::Lowdata { .. } => "lowdata",
            Command::Prune { .. } => "prune",
            Command::Continual { .. } => "continual",
            Command::Report { .. } => "report",
            Command::Config => "config",
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(g: &Global, cmd: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => parse_config(p)?,
        None => parse_config_str("{}")?,
    };
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
        cfg.toy.seed = s;
    }
    if let Some(s) = &g.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(a) = &g.arch {
        cfg.arch = a.clone();
    }
    if let Some(e) = g.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = g.lr {
        cfg.train.optim.lr_max = lr;
    }
    if let Some(d) = g.depth {
        cfg.network.depth = d;
    }
    match cmd {
        Command::Toy1d { runs, toy_epochs } => {
            if let Some(r) = runs {
                cfg.toy.runs = *r;
            }
            if let Some(e) = toy_epochs.or(g.epochs) {
                cfg.toy.epochs = e;
            }
            if let Some(lr) = g.lr {
                cfg.toy.lr = lr;
            }
        }
        Command::Probe { eps: Some(e) } => cfg.probe.eps = *e,
        Command::Lowdata { per_class: Some(n) } => cfg.lowdata.per_class = *n,
        Command::Prune { fine_tune: true, .. } => cfg.prune.fine_tune = true,
        Command::Continual { tasks, epochs_per_task } => {
            if let Some(t) = tasks {
                cfg.continual.tasks = *t;
            }
            if let Some(e) = epochs_per_task {
                cfg.continual.epochs_per_task = *e;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one experiment without touching the filesystem.
pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Output, CliError> {
    match cmd {
        Command::Toy1d { .. } => ex::toy1d(cfg),
        Command::Paths { l, i } => ex::paths(*l, *i),
        Command::Train => ex::train_cmd(cfg),
        Command::Probe { .. } => ex::probe_cmd(cfg),
        Command::Gradmap => ex::gradmap_cmd(cfg),
        Command::Dgratio => ex::dgratio_cmd(cfg),
        Command::Noise => ex::noise_cmd(cfg),
        Command::Lowdata { .. } => ex::lowdata_cmd(cfg),
        Command::Prune { movement, .. } => ex::prune_cmd(cfg, *movement),
        Command::Continual { .. } => ex::continual_cmd(cfg),
        Command::Report { from } => report(from),
        Command::Config => Ok(Output { notes: vec![cfg.canonical()], ..Default::default() }),
    }
}

fn report(from: &Path) -> Result<Output, CliError> {
    let mut manifests = Vec::new();
    collect_manifests(from, &mut manifests)?;
    if manifests.is_empty() {
        return Err(CliError::Runtime(format!("no manifest.json under {}", from.display())));
    }
    manifests.sort();
    let mut runs = Vec::new();
    for m in &manifests {
        let text = std::fs::read_to_string(m).map_err(|e| CliError::Runtime(format!("{}: {e}", m.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", m.display())))?;
        let dir = m.parent().unwrap_or(Path::new("."));
        let mut docs = serde_json::Map::new();
        for f in v["files"].as_array().into_iter().flatten() {
            let name = f["path"].as_str().unwrap_or_default();
            if name.ends_with(".json") {
                let body = std::fs::read_to_string(dir.join(name)).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
                docs.insert(name.into(), serde_json::from_str(&body).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?);
            }
        }
        runs.push(json!({
            "dir": dir.strip_prefix(from).unwrap_or(dir).display().to_string(),
            "command": v["command"],
            "config_hash": v["config_hash"],
            "seeds": v["seeds"],
            "files": v["files"],
            "documents": docs,
        }));
    }
    let mut out = Output::default();
    out.notes.push(format!("{} runs collected", runs.len()));
    out.json.push(("report.json".into(), json!({ "runs": runs })));
    Ok(out)
}

fn collect_manifests(dir: &Path, acc: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    for e in entries {
        let p = e.map_err(|e| CliError::Runtime(e.to_string()))?.path();
        if p.is_dir() {
            collect_manifests(&p, acc)?;
        } else if p.file_name().is_some_and(|n| n == "manifest.json") {
            acc.push(p);
        }
    }
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ACNLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config(format!("ACNLAB_THREADS={v:?} is not a count")))?;
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}

fn run_parsed(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let start = Instant::now();
    let cfg = resolve_config(&cli.global, &cli.command)?;
    let out = execute(&cli.command, &cfg)?;
    for n in &out.notes {
        println!("{n}");
    }
    if matches!(cli.command, Command::Config) {
        return Ok(());
    }
    let dir = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    let manifest = write_output(&dir, cli.command.name(), &cfg, &out, start.elapsed().as_secs_f64())?;
    println!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
    Ok(())
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
