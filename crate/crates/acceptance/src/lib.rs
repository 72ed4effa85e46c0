//! Fixtures for the acceptance suite. Trained networks are expensive, so
//! each suite is trained once per process and shared between criteria.

use acn_core::net::Network;
use acn_core::probe::ProbeReport;
use acn_core::train::TrainLog;
use acnlab::config::{parse_config_str, RunConfig};
use acnlab::experiments::{self, Data, Variant};
use acnlab::CliError;
use std::io::Write;
use std::sync::OnceLock;

pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Writes one line straight to stderr, past the test harness's capture.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion:>2}: {status}  {detail}");
}

pub fn config(json: &str) -> RunConfig {
    parse_config_str(json).unwrap_or_else(|e| panic!("fixture config: {e}"))
}

/// Desk dense task with `classes` spiral classes; everything else default.
pub fn dense_config(classes: usize) -> RunConfig {
    config(&format!(r#"{{"preset": "desk-dense", "data": {{"synth": {{"classes": {classes}}}}}, "seeds": [0, 1, 2, 3, 4]}}"#))
}

pub struct Trained {
    pub variant: Variant,
    pub seed: u64,
    pub net: Network,
    pub log: TrainLog,
    pub probe: ProbeReport,
}

pub struct Suite {
    pub cfg: RunConfig,
    pub data: Data,
    pub runs: Vec<Trained>,
}

impl Suite {
    pub fn train(cfg: RunConfig, variants: &[&str]) -> Result<Suite, CliError> {
        let data = experiments::load_data(&cfg)?;
        let variants: Vec<Variant> = variants.iter().map(|v| Variant::parse(v)).collect::<Result<_, _>>()?;
        let mut runs = Vec::new();
        for v in &variants {
            for &seed in &cfg.seeds {
                let (net, log) = experiments::train_one(&cfg, v, &data, seed)?;
                let probe = acn_core::probe::probe_all_depths(&net, &data.test, 0, "test")?;
                runs.push(Trained { variant: v.clone(), seed, net, log, probe });
            }
        }
        Ok(Suite { cfg, data, runs })
    }

    pub fn of<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a Trained> + 'a {
        self.runs.iter().filter(move |r| r.variant.name == variant)
    }

    pub fn median_k_star(&self, variant: &str, eps: f64) -> f64 {
        median(self.of(variant).map(|r| r.probe.effective_depth(eps) as f64))
    }

    pub fn median_final_accuracy(&self, variant: &str) -> f64 {
        median(self.of(variant).map(|r| *r.probe.accuracy.last().expect("non-empty probe")))
    }
}

pub use acnlab::output::median;

/// Ten-class desk task with every variant the criteria compare.
pub fn desk10() -> &'static Suite {
    static S: OnceLock<Suite> = OnceLock::new();
    S.get_or_init(|| Suite::train(dense_config(10), &["ffn", "residual", "acn", "acn-dgonly"]).expect("desk suite trains"))
}

/// ACN alone on the 2- and 5-class tasks.
pub fn desk_acn(classes: usize) -> &'static Suite {
    static S2: OnceLock<Suite> = OnceLock::new();
    static S5: OnceLock<Suite> = OnceLock::new();
    let cell = match classes {
        2 => &S2,
        5 => &S5,
        10 => return desk10(),
        _ => panic!("no suite for {classes} classes"),
    };
    cell.get_or_init(|| Suite::train(dense_config(classes), &["acn"]).expect("desk suite trains"))
}
