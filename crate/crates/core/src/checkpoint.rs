//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      6 bytes   "DTCNN1"
//! json_len   u32       length of the config JSON
//! config     json_len  UTF-8 JSON of CnnConfig
//! tensors    24 ×      rank: u32, dims: rank × u32, payload: f64 × prod(dims)
//! ```
//!
//! The 24 tensors are the 12 parameters in [`Params::tensors`] order
//! (conv1 weight, conv1 bias, ..., conv5 bias, fc weight, fc bias) followed
//! by the 12 momentum buffers in the same order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CnnConfig, CnnModel, Params};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"DTCNN1";

pub fn to_bytes(model: &CnnModel) -> Vec<u8> {
    let config = serde_json::to_vec(model.config()).expect("config serializes");
    let mut out = Vec::with_capacity(64 + config.len() + 8 * (model.params().num_values() * 2));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    for t in model.params().tensors().into_iter().chain(model.velocity().tensors()) {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()?;
        if rank == 0 || rank > 4 {
            return Err(Error::Checkpoint(format!("tensor rank {rank} out of range")));
        }
        let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = count.ok_or_else(|| Error::Checkpoint(format!("tensor dims {dims:?} overflow")))?;
        let payload = self.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::from_vec(&dims, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<CnnModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("missing DTCNN1 magic".into()));
    }
    let len = r.u32()?;
    let config: CnnConfig = serde_json::from_slice(r.take(len)?)?;
    config.validate()?;

    let mut read_params = || -> Result<Params> {
        let mut conv = Vec::new();
        for _ in 0..config.channel_schedule.len() {
            conv.push(crate::model::ConvLayer { weight: r.tensor()?, bias: r.tensor()? });
        }
        Ok(Params { conv, fc_weight: r.tensor()?, fc_bias: r.tensor()? })
    };
    let params = read_params()?;
    let velocity = read_params()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    CnnModel::from_parts(config, params, velocity)
}

pub fn save(model: &CnnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<CnnModel> {
    let path = path.as_ref();
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
