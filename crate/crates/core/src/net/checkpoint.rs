//! Single-file checkpoints: magic, length-prefixed canonical config JSON,
//! then each parameter as a length-prefixed run of little-endian `f64`s.

use super::{Network, NetworkConfig};
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ACNCKPT1";

/// JSON with object keys sorted, so equal configs hash equally.
pub fn canonical_json<T: serde::Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is a BTreeMap, so routing through Value sorts keys.
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

impl Network {
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        let cfg = canonical_json(&self.config)?;
        w.write_all(MAGIC)?;
        w.write_all(&(cfg.len() as u64).to_le_bytes())?;
        w.write_all(cfg.as_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&(p.len() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(p.len() * 8);
            for v in p.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Network> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a network checkpoint".into()));
        }
        let n = read_u64(r)? as usize;
        let mut cfg = vec![0u8; n];
        r.read_exact(&mut cfg).map_err(|e| Error::Format(format!("truncated config: {e}")))?;
        let config: NetworkConfig = serde_json::from_slice(&cfg)?;
        let mut net = Network::build(&config, 0)?;
        let count = read_u64(r)? as usize;
        if count != net.params.len() {
            return Err(Error::Format(format!("checkpoint has {count} tensors, config needs {}", net.params.len())));
        }
        for (i, p) in net.params.iter_mut().enumerate() {
            let len = read_u64(r)? as usize;
            if len != p.len() {
                return Err(Error::Format(format!("tensor {i} has {len} values, expected {}", p.len())));
            }
            let mut buf = vec![0u8; len * 8];
            r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated tensor {i}: {e}")))?;
            for (d, c) in p.data_mut().iter_mut().zip(buf.chunks_exact(8)) {
                *d = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Network> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Network::read_checkpoint(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, BlockKind, Connectivity, EmbedSpec, HeadSpec};

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            depth: 2,
            block: BlockKind::Dense { width: 3, hidden: None, activation: Activation::Gelu, norm: true, bias: true },
            connectivity: Connectivity::Acn,
            dirac: false,
            embed: EmbedSpec::Linear { in_dim: 2 },
            head: HeadSpec { classes: 2, heads: 2, norm: false },
            init_std: 0.5,
            ln_eps: 1e-5,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let net = Network::build(&cfg(), 9).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let back = Network::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.config(), net.config());
        for (a, b) in net.params().iter().zip(back.params()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn corrupt_input_is_format_error() {
        let net = Network::build(&cfg(), 9).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(Network::read_checkpoint(&mut buf.as_slice()), Err(Error::Format(_))));
        assert!(matches!(Network::read_checkpoint(&mut &b"garbage!"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let s = canonical_json(&cfg()).unwrap();
        let block = s.find("\"block\"").unwrap();
        let depth = s.find("\"depth\"").unwrap();
        let conn = s.find("\"connectivity\"").unwrap();
        assert!(block < conn && conn < depth);
    }
}
