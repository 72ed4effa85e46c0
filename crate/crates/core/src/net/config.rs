use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// How block outputs are wired to the network output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// `x_i = f_i(x_{i-1})`, output `x_L`.
    Ffn,
    /// `x_i = x_{i-1} + f_i(x_{i-1})`, output `x_L`.
    Residual,
    /// `x_i = f_i(x_{i-1})`, output `x_0 + x_1 + ... + x_L`.
    Acn,
}

impl Connectivity {
    pub fn as_str(self) -> &'static str {
        match self {
            Connectivity::Ffn => "ffn",
            Connectivity::Residual => "residual",
            Connectivity::Acn => "acn",
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Connectivity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ffn" => Ok(Connectivity::Ffn),
            "residual" | "resnet" => Ok(Connectivity::Residual),
            "acn" => Ok(Connectivity::Acn),
            other => Err(Error::Config(format!("unknown connectivity {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BlockKind {
    /// Optional pre-norm, then one linear layer (`hidden = None`) or a
    /// two-layer MLP `width -> hidden -> width`.
    Dense {
        width: usize,
        #[serde(default)]
        hidden: Option<usize>,
        #[serde(default = "default_activation")]
        activation: Activation,
        #[serde(default = "yes")]
        norm: bool,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// Token-mixing MLP (`patches -> d_s -> patches`) followed by a
    /// channel-mixing MLP (`channels -> d_c -> channels`), each pre-normed.
    Mixer { patches: usize, channels: usize, d_s: usize, d_c: usize },
}

fn default_activation() -> Activation {
    Activation::Gelu
}

fn yes() -> bool {
    true
}

impl BlockKind {
    /// Feature width of the representation the block reads and writes.
    pub fn width(&self) -> usize {
        match self {
            BlockKind::Dense { width, .. } => *width,
            BlockKind::Mixer { channels, .. } => *channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedSpec {
    /// Linear map from `in_dim` input features.
    Linear { in_dim: usize },
    /// Split `channels x image_size x image_size` images into `patch x patch`
    /// tiles and project each tile.
    Patchify { channels: usize, image_size: usize, patch: usize },
    /// Inputs are used as `x_0` directly.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    pub classes: usize,
    /// Number of independent heads (one per task in task-incremental runs).
    #[serde(default = "one")]
    pub heads: usize,
    /// Layer norm before pooling.
    #[serde(default = "yes")]
    pub norm: bool,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub depth: usize,
    pub block: BlockKind,
    pub connectivity: Connectivity,
    /// Square block linears compute `(I + W) x`.
    #[serde(default)]
    pub dirac: bool,
    pub embed: EmbedSpec,
    pub head: HeadSpec,
    /// Standard deviation of the truncated-normal weight init.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

fn default_init_std() -> f64 {
    0.02
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl NetworkConfig {
    /// Desk-scale Mixer: 8 blocks, 64 channels, patch 4, `d_c = 256`, `d_s = 32`.
    pub fn desk_mixer(connectivity: Connectivity, channels_in: usize, image_size: usize, classes: usize) -> Self {
        let patch = 4;
        let patches = (image_size / patch).pow(2);
        NetworkConfig {
            depth: 8,
            block: BlockKind::Mixer { patches, channels: 64, d_s: 32, d_c: 256 },
            connectivity,
            dirac: false,
            embed: EmbedSpec::Patchify { channels: channels_in, image_size, patch },
            head: HeadSpec { classes, heads: 1, norm: true },
            init_std: default_init_std(),
            ln_eps: default_ln_eps(),
        }
    }

    /// CIFAR-10 Mixer with 16 blocks of width 128, patch 4, `d_c = 512`, `d_s = 64`.
    pub fn paper_mixer(connectivity: Connectivity) -> Self {
        NetworkConfig {
            depth: 16,
            block: BlockKind::Mixer { patches: 64, channels: 128, d_s: 64, d_c: 512 },
            connectivity,
            dirac: false,
            embed: EmbedSpec::Patchify { channels: 3, image_size: 32, patch: 4 },
            head: HeadSpec { classes: 10, heads: 1, norm: true },
            init_std: default_init_std(),
            ln_eps: default_ln_eps(),
        }
    }

    /// Number of tokens for image inputs, `None` for vector inputs.
    pub fn tokens(&self) -> Option<usize> {
        match self.embed {
            EmbedSpec::Patchify { image_size, patch, .. } => Some((image_size / patch).pow(2)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.depth == 0 {
            return cfg("depth must be at least 1".into());
        }
        if self.head.classes == 0 || self.head.heads == 0 {
            return cfg("head needs at least one class and one head".into());
        }
        if !(self.init_std >= 0.0) || !(self.ln_eps > 0.0) {
            return cfg("init_std must be >= 0 and ln_eps > 0".into());
        }
        let width = self.block.width();
        match &self.block {
            BlockKind::Dense { width, hidden, .. } => {
                if *width == 0 || *hidden == Some(0) {
                    return cfg("dense block extents must be positive".into());
                }
                if self.dirac && hidden.is_some_and(|h| h != *width) {
                    return cfg(format!("dirac needs square layers, dense block is {width}x{}", hidden.unwrap()));
                }
            }
            BlockKind::Mixer { patches, channels, d_s, d_c } => {
                if [*patches, *channels, *d_s, *d_c].contains(&0) {
                    return cfg("mixer block extents must be positive".into());
                }
                if self.tokens() != Some(*patches) {
                    return cfg(format!(
                        "mixer block expects {patches} patches but embedding yields {:?}",
                        self.tokens()
                    ));
                }
                if self.dirac && (d_s != patches || d_c != channels) {
                    return cfg(format!(
                        "dirac needs square layers, mixer has token {patches}x{d_s} and channel {channels}x{d_c}"
                    ));
                }
            }
        }
        match &self.embed {
            EmbedSpec::Linear { in_dim } if *in_dim == 0 => cfg("embedding input dim must be positive".into()),
            EmbedSpec::Patchify { channels, image_size, patch } => {
                if *channels == 0 || *image_size == 0 || *patch == 0 {
                    return cfg("patchify extents must be positive".into());
                }
                if image_size % patch != 0 {
                    return cfg(format!("patch {patch} does not divide image side {image_size}"));
                }
                if !matches!(self.block, BlockKind::Mixer { .. }) {
                    return cfg("patchify embedding needs mixer blocks".into());
                }
                Ok(())
            }
            _ => {
                if matches!(self.block, BlockKind::Mixer { .. }) {
                    return cfg("mixer blocks need a patchify embedding".into());
                }
                let _ = width;
                Ok(())
            }
        }
    }
}
