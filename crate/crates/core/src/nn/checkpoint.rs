//! Versioned binary checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic          8 bytes  "MFLOWCKP"
//! version        u32      1
//! descriptor     u32 byte length + UTF-8 architecture text
//! metadata       u32 byte length + UTF-8 JSON (free-form run state)
//! params         u32 count, then `count` tensors in declaration order
//! ema flag       u8 (0 or 1)
//!   decay f64, start_step u64, `count` shadow tensors
//! optimizer flag u8 (0 or 1)
//!   lr, weight_decay, beta1, beta2, eps as f64
//!   warmup_steps, total_steps, step as u64
//!   `count` first-moment tensors, `count` second-moment tensors
//!
//! tensor         u32 ndim, ndim × u64 extents, product(extents) × f64
//! ```

use super::ema::Ema;
use super::optim::{AdamW, AdamWConfig};
use super::tensor::Tensor;
use crate::binio::{Reader, Writer};
use crate::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"MFLOWCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub descriptor: String,
    pub metadata: String,
    pub params: Vec<Tensor>,
    pub ema: Option<Ema>,
    pub optimizer: Option<AdamW>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.text(&self.descriptor);
        w.text(&self.metadata);
        w.u32(self.params.len() as u32);
        w.tensors(&self.params);
        match &self.ema {
            Some(ema) => {
                w.u8(1);
                w.f64(ema.decay);
                w.u64(ema.start_step);
                w.tensors(ema.shadow());
            }
            None => w.u8(0),
        }
        match &self.optimizer {
            Some(opt) => {
                w.u8(1);
                let c = &opt.config;
                for x in [c.lr, c.weight_decay, c.beta1, c.beta2, c.eps] {
                    w.f64(x);
                }
                w.u64(c.warmup_steps);
                w.u64(c.total_steps);
                w.u64(opt.step_count());
                let (m, v) = opt.moments();
                w.tensors(m);
                w.tensors(v);
            }
            None => w.u8(0),
        }
        w.0
    }

    fn parse(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let descriptor = r.text()?;
        let metadata = r.text()?;
        let count = r.u32()? as usize;
        let params = r.tensors(count)?;
        let ema = match r.u8()? {
            0 => None,
            1 => {
                let decay = r.f64()?;
                let start = r.u64()?;
                Some(Ema::from_shadow(decay, start, r.tensors(count)?))
            }
            f => return Err(format!("bad EMA flag {f}")),
        };
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let mut c = AdamWConfig::new(r.f64()?, r.f64()?, 0, 0);
                c.beta1 = r.f64()?;
                c.beta2 = r.f64()?;
                c.eps = r.f64()?;
                c.warmup_steps = r.u64()?;
                c.total_steps = r.u64()?;
                let step = r.u64()?;
                let m = r.tensors(count)?;
                let v = r.tensors(count)?;
                Some(AdamW::from_state(c, step, m, v).map_err(|e| e.to_string())?)
            }
            f => return Err(format!("bad optimizer flag {f}")),
        };
        if r.remaining() != 0 {
            return Err(format!("{} trailing bytes", r.remaining()));
        }
        Ok(Self {
            descriptor,
            metadata,
            params,
            ema,
            optimizer,
        })
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        Self::parse(bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Writes atomically through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }

    /// Loads and rejects a checkpoint built for a different architecture.
    pub fn load_for(path: &Path, descriptor: &str) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.descriptor != descriptor {
            return Err(Error::ArchitectureMismatch {
                expected: descriptor.to_string(),
                found: ckpt.descriptor,
            });
        }
        Ok(ckpt)
    }

    /// Copies stored tensors into `params`, checking count and shapes.
    pub fn restore_into(stored: &[Tensor], params: &mut [&mut Tensor]) -> Result<()> {
        if stored.len() != params.len() {
            return Err(Error::ShapeMismatch {
                op: "checkpoint restore",
                expected: vec![params.len()],
                got: vec![stored.len()],
            });
        }
        for (p, s) in params.iter_mut().zip(stored) {
            if p.shape() != s.shape() {
                return Err(Error::ShapeMismatch {
                    op: "checkpoint restore",
                    expected: p.shape().to_vec(),
                    got: s.shape().to_vec(),
                });
            }
            p.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }
}

/// Git-style blob hash: hex SHA-256 of `"blob <len>\0" ‖ bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&std::fs::read(path)?))
}
