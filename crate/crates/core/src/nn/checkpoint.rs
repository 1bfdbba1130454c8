//! Binary parameter checkpoints.
//!
//! ```text
//! magic     8 bytes  "QPMXCKPT"
//! version   u16 LE
//! count     u32 LE   number of networks
//! per network:
//!   name_len  u16 LE, then UTF-8 name
//!   layers    u16 LE  (L)
//!   widths    (L + 1) × u32 LE
//!   acts      L × u8  (0 identity, 1 relu, 2 abs)
//!   n_params  u64 LE  (must equal the count implied by widths)
//!   params    n_params × f64 LE
//! ```

use super::{Activation, Layout, Mlp, ParamSet};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QPMXCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Named networks stored together.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, mlp: &Mlp) {
        self.entries.push((name.into(), mlp.clone()));
    }

    pub fn get(&self, name: &str) -> Option<&Mlp> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, mlp) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let widths = mlp.layout().widths();
            out.extend_from_slice(&((widths.len() - 1) as u16).to_le_bytes());
            for &w in widths {
                out.extend_from_slice(&(w as u32).to_le_bytes());
            }
            out.extend(mlp.activations().iter().map(|a| a.code()));
            let params = mlp.params().as_slice();
            out.extend_from_slice(&(params.len() as u64).to_le_bytes());
            for p in params {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?
                .to_string();
            let layers = r.u16()? as usize;
            if layers == 0 {
                return Err(Error::Checkpoint(format!("{name}: no layers")));
            }
            let mut widths = Vec::with_capacity(layers + 1);
            for _ in 0..=layers {
                widths.push(r.u32()? as usize);
            }
            let acts = r
                .take(layers)?
                .iter()
                .map(|&c| Activation::from_code(c).ok_or_else(|| Error::Checkpoint(format!("{name}: activation code {c}"))))
                .collect::<Result<Vec<_>>>()?;
            let n = r.u64()?;
            let expected = implied_len(&widths).ok_or_else(|| Error::Checkpoint(format!("{name}: layout too large")))?;
            if n != expected as u64 {
                return Err(Error::Checkpoint(format!("{name}: {n} parameters, layout needs {expected}")));
            }
            let raw = r.take(expected.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
            let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let layout = Layout::new(&widths).map_err(|_| Error::Checkpoint(format!("{name}: zero width")))?;
            let params = ParamSet::from_vec(layout, data)?;
            let mlp = Mlp::from_params(&acts, params).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            entries.push((name, mlp));
        }
        if r.at != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn implied_len(widths: &[usize]) -> Option<usize> {
    let mut total = 0usize;
    for w in widths.windows(2) {
        total = total.checked_add(w[1].checked_mul(w[0].checked_add(1)?)?)?;
    }
    Some(total)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
