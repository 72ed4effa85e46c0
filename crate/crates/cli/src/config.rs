//! Run configuration: one JSON object, every key optional. A `preset`
//! supplies a full baseline and the remaining keys are merged over it, so
//! `{}` is the desk-scale dense suite.

use acn_core::chain::ToyConfig;
use acn_core::data::{Render, SynthKind, SynthSpec};
use acn_core::net::{Activation, BlockKind, Connectivity, EmbedSpec, HeadSpec, NetworkConfig};
use acn_core::train::{AdamHyper, LossMode, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    DeskDense,
    DeskMixer,
    PaperMixer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Cifar10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub synth: SynthSpec,
    /// Synthetic test examples per class (drawn independently of train).
    pub test_per_class: usize,
    /// Seed of the synthetic class geometry and sample draws.
    pub seed: u64,
    pub cifar_dir: String,
    /// Keep only this many training examples per class.
    pub train_per_class: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            synth: SynthSpec {
                kind: SynthKind::Spirals,
                classes: 10,
                per_class: 200,
                dim: 16,
                separation: 1.0,
                noise: 0.05,
                turns: 1.0,
                render: None,
            },
            test_per_class: 200,
            seed: 0,
            cifar_dir: "data/cifar-10-batches-bin".into(),
            train_per_class: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockChoice {
    Dense,
    Mixer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub block: BlockChoice,
    pub depth: usize,
    pub width: usize,
    /// Dense blocks: hidden width of a two-layer MLP (single layer when absent).
    pub hidden: Option<usize>,
    pub activation: Activation,
    pub norm: bool,
    pub head_norm: bool,
    pub dirac: bool,
    pub init_std: f64,
    pub ln_eps: f64,
    pub patch: usize,
    pub d_s: usize,
    pub d_c: usize,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            block: BlockChoice::Dense,
            depth: 8,
            width: 64,
            hidden: None,
            activation: Activation::Gelu,
            norm: true,
            head_norm: true,
            dirac: false,
            init_std: 0.02,
            ln_eps: 1e-5,
            patch: 4,
            d_s: 32,
            d_c: 256,
        }
    }
}

/// Input layout a network has to accept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputShape {
    Vector(usize),
    Image { channels: usize, size: usize },
}

impl NetSection {
    pub fn network(&self, conn: Connectivity, input: InputShape, classes: usize, heads: usize) -> Result<NetworkConfig, CliError> {
        let (block, embed) = match (self.block, input) {
            (BlockChoice::Dense, InputShape::Vector(in_dim)) => (
                BlockKind::Dense { width: self.width, hidden: self.hidden, activation: self.activation, norm: self.norm, bias: true },
                EmbedSpec::Linear { in_dim },
            ),
            (BlockChoice::Mixer, InputShape::Image { channels, size }) => {
                let patches = if self.patch > 0 { (size / self.patch).pow(2) } else { 0 };
                (
                    BlockKind::Mixer { patches, channels: self.width, d_s: self.d_s, d_c: self.d_c },
                    EmbedSpec::Patchify { channels, image_size: size, patch: self.patch },
                )
            }
            (b, i) => return Err(CliError::Config(format!("network.block {b:?} cannot take {i:?} inputs"))),
        };
        let cfg = NetworkConfig {
            depth: self.depth,
            block,
            connectivity: conn,
            dirac: self.dirac,
            embed,
            head: HeadSpec { classes, heads, norm: self.head_norm },
            init_std: self.init_std,
            ln_eps: self.ln_eps,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("network: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub eps: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { eps: 0.005 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSection {
    pub grid: Vec<f64>,
    /// Re-train each pruned copy with its mask fixed.
    pub fine_tune: bool,
    pub fine_tune_epochs: usize,
    /// Movement pruning: fraction of remaining weights removed after each epoch.
    pub stages: Vec<f64>,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection {
            grid: vec![0.0, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95],
            fine_tune: false,
            fine_tune_epochs: 1,
            stages: vec![0.2; 5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinualSection {
    pub tasks: usize,
    pub classes_per_task: usize,
    pub epochs_per_task: usize,
    pub methods: Vec<String>,
    pub lambda: f64,
    pub xi: f64,
}

impl Default for ContinualSection {
    fn default() -> Self {
        ContinualSection {
            tasks: 5,
            classes_per_task: 2,
            epochs_per_task: 10,
            methods: vec!["naive".into(), "si".into()],
            lambda: 1.0,
            xi: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub sigmas: Vec<f64>,
    pub ps: Vec<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { sigmas: vec![0.0, 0.1, 0.2, 0.4], ps: vec![0.0, 0.01, 0.05, 0.1] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowDataSection {
    pub per_class: usize,
}

impl Default for LowDataSection {
    fn default() -> Self {
        LowDataSection { per_class: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub arch: Vec<String>,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub network: NetSection,
    pub train: TrainConfig,
    pub probe: ProbeSection,
    pub prune: PruneSection,
    pub continual: ContinualSection,
    pub noise: NoiseSection,
    pub lowdata: LowDataSection,
    pub toy: ToyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            arch: vec!["acn".into(), "residual".into()],
            seeds: vec![0],
            data: DataConfig::default(),
            network: NetSection::default(),
            train: TrainConfig { epochs: 60, batch_size: 64, ..Default::default() },
            probe: ProbeSection::default(),
            prune: PruneSection::default(),
            continual: ContinualSection::default(),
            noise: NoiseSection::default(),
            lowdata: LowDataSection::default(),
            toy: ToyConfig::default(),
        }
    }
}

impl Preset {
    pub fn expand(self) -> RunConfig {
        let base = RunConfig { preset: Some(self), ..Default::default() };
        match self {
            Preset::DeskDense => base,
            Preset::DeskMixer => RunConfig {
                data: DataConfig {
                    synth: SynthSpec {
                        kind: SynthKind::Blobs,
                        classes: 10,
                        per_class: 100,
                        dim: 1,
                        separation: 1.0,
                        noise: 1.0,
                        turns: 1.0,
                        render: Some(Render { size: 16, channels: 3 }),
                    },
                    test_per_class: 50,
                    ..Default::default()
                },
                network: NetSection { block: BlockChoice::Mixer, depth: 8, width: 64, d_s: 32, d_c: 256, patch: 4, ..Default::default() },
                train: TrainConfig { epochs: 10, batch_size: 64, ..Default::default() },
                ..base
            },
            Preset::PaperMixer => RunConfig {
                data: DataConfig { source: DataSource::Cifar10, ..Default::default() },
                network: NetSection { block: BlockChoice::Mixer, depth: 16, width: 128, d_s: 64, d_c: 512, patch: 4, ..Default::default() },
                train: TrainConfig {
                    epochs: 100,
                    batch_size: 64,
                    optim: AdamHyper { lr_max: 1e-3, ..Default::default() },
                    ..Default::default()
                },
                ..base
            },
        }
    }
}

/// Overlay `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Parse JSON text into a validated config. Errors name the offending key.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let user: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = &user else {
        return Err(CliError::Config("config must be a JSON object".into()));
    };
    let preset = match obj.get("preset") {
        None | Some(Value::Null) => None,
        Some(p) => Some(
            serde_json::from_value::<Preset>(p.clone())
                .map_err(|e| CliError::Config(format!("preset: {e}")))?,
        ),
    };
    let base = preset.map(Preset::expand).unwrap_or_default();
    let mut merged = serde_json::to_value(&base).expect("config serializes");
    merge(&mut merged, user);
    let cfg: RunConfig = serde_path_to_error::deserialize(merged)
        .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return cfg("seeds must not be empty".into());
        }
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        if self.train.optim.lr_max <= 0.0 {
            return cfg(format!("train.optim.lr_max must be positive, got {}", self.train.optim.lr_max));
        }
        for a in &self.arch {
            crate::experiments::Variant::parse(a)?;
        }
        if !(self.probe.eps >= 0.0) {
            return cfg("probe.eps must be >= 0".into());
        }
        if let Some(s) = self.prune.grid.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return cfg(format!("prune.grid value {s} outside [0, 1)"));
        }
        if self.prune.grid.windows(2).any(|w| w[1] <= w[0]) {
            return cfg("prune.grid must be strictly increasing".into());
        }
        acn_core::probe::validate_schedule(&self.prune.stages).map_err(|e| CliError::Config(format!("prune.stages: {e}")))?;
        if self.noise.sigmas.iter().any(|s| !(*s >= 0.0)) || self.noise.ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return cfg("noise levels need sigma >= 0 and 0 <= p <= 1".into());
        }
        for m in &self.continual.methods {
            if m != "naive" && m != "si" {
                return cfg(format!("continual.methods: unknown method {m:?}"));
            }
        }
        if self.continual.xi <= 0.0 || self.continual.lambda < 0.0 {
            return cfg("continual needs xi > 0 and lambda >= 0".into());
        }
        if self.data.test_per_class == 0 {
            return cfg("data.test_per_class must be positive".into());
        }
        Ok(())
    }

    /// Key-sorted JSON, the input to the config hash.
    pub fn canonical(&self) -> String {
        acn_core::net::canonical_json(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Loss modes of the residual baselines, with the constants they were
/// described with.
pub fn baseline_loss(name: &str) -> Option<LossMode> {
    match name {
        "deepsup" => Some(LossMode::DeepSup { lambda: 0.1 }),
        "aligned" => Some(LossMode::Aligned),
        "layerskip" => Some(LossMode::LayerSkip { p_max: 0.1, e_scale: 0.2, c_rot: 15 }),
        _ => None,
    }
}
