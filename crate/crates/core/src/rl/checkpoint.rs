//! Versioned binary checkpoints of trained networks.

use std::path::Path;

use crate::error::{Error, Result};

use super::nn::Mlp;
use super::TrainConfig;

const MAGIC: &[u8; 8] = b"ASQPCKPT";
const VERSION: u32 = 1;

/// Trained networks with the configuration they were trained under and the
/// fingerprint of their action space.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub policy: Mlp,
    pub critic: Option<Mlp>,
    pub config: TrainConfig,
    pub fingerprint: u64,
}

fn put_net(out: &mut Vec<u8>, net: &Mlp) {
    for d in net.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for p in &net.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn net(&mut self) -> Result<Mlp> {
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = self.u64()? as usize;
        }
        let n = dims
            .windows(2)
            .try_fold(0usize, |acc, w| {
                acc.checked_add(w[0].checked_mul(w[1])?)?.checked_add(w[1])
            })
            .ok_or_else(|| Error::Format("checkpoint layer sizes overflow".into()))?;
        if n != Mlp::param_count(dims) || n.saturating_mul(8) > self.bytes.len() {
            return Err(Error::Format(
                "checkpoint layer sizes do not match the file".into(),
            ));
        }
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            params.push(f64::from_le_bytes(self.take(8)?.try_into().unwrap()));
        }
        Ok(Mlp { dims, params })
    }
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.push(self.critic.is_some() as u8);
        put_net(&mut out, &self.policy);
        if let Some(c) = &self.critic {
            put_net(&mut out, c);
        }
        let echo: String = self
            .config
            .to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        out.extend_from_slice(&(echo.len() as u64).to_le_bytes());
        out.extend_from_slice(echo.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let fingerprint = r.u64()?;
        let has_critic = r.take(1)?[0] == 1;
        let policy = r.net()?;
        let critic = if has_critic { Some(r.net()?) } else { None };
        let n = r.u64()? as usize;
        let echo = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?;
        let mut config = TrainConfig::default();
        for line in echo.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
            config.set(k, v)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        if policy.n_out() != config.env.head_width(policy.n_in()) {
            return Err(Error::Format(
                "policy head does not match the configured environment".into(),
            ));
        }
        Ok(Model {
            policy,
            critic,
            config,
            fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_corruption() {
        let cfg = TrainConfig {
            hidden: [4, 3],
            ..TrainConfig::default()
        };
        let m = Model {
            policy: Mlp::new([5, 4, 3, 5], 0.1, 1),
            critic: Some(Mlp::new([5, 4, 3, 1], 1.0, 2)),
            config: cfg,
            fingerprint: 42,
        };
        let bytes = m.to_bytes();
        assert_eq!(Model::from_bytes(&bytes).unwrap(), m);
        assert!(Model::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Model::from_bytes(&bad).is_err());
        let no_critic = Model { critic: None, ..m };
        assert_eq!(Model::from_bytes(&no_critic.to_bytes()).unwrap(), no_critic);
    }
}
