//! Bit-exact binary checkpoints for parameter sets.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "FSQCKPT\0"
//! version      u32      1
//! fingerprint  u32 length + UTF-8 bytes (architecture fingerprint)
//! entries      u32
//! per entry    u32 layer index, u32 weight rank, rank x u64 dims,
//!              u32 bias rank, rank x u64 dims
//! payload      per entry: weight scalars then bias scalars, f64 row-major
//! ```
//!
//! A dual-copy bundle wraps two checkpoints and the schedule:
//!
//! ```text
//! magic        8 bytes  "FSQDUAL\0"
//! version      u32      1
//! fingerprint  u32 length + UTF-8 bytes
//! schedule     u32 count + count x u8 (1 = trainable)
//! structural   u64 length + checkpoint bytes
//! quantitative u64 length + checkpoint bytes
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::calibrate::Schedule;
use crate::data::ByteReader;
use crate::dualcopy::DualCopyModel;
use crate::error::{Error, Result};
use crate::nn::{LayerParams, ModelArch, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"FSQCKPT\0";
const DUAL_MAGIC: &[u8; 8] = b"FSQDUAL\0";
const VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_shape(out: &mut Vec<u8>, shape: &[usize]) {
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

fn read_str(r: &mut ByteReader<'_>, what: &str) -> Result<String> {
    let at = r.offset();
    let len = r.u32(what)? as usize;
    let bytes = r.take(len, what)?;
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::format(at, format!("{what} is not UTF-8")))
}

fn read_shape(r: &mut ByteReader<'_>, what: &str) -> Result<Vec<usize>> {
    let at = r.offset();
    let rank = r.u32(what)? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::format(at, format!("implausible {what} rank {rank}")));
    }
    (0..rank).map(|_| r.u64(what).map(|d| d as usize)).collect()
}

fn read_tensor(r: &mut ByteReader<'_>, shape: Vec<usize>) -> Result<Tensor> {
    let at = r.offset();
    let n = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format(at, "tensor size overflows"))?;
    if n.saturating_mul(8) > r.remaining() {
        return Err(Error::format(at, format!("truncated payload for tensor {shape:?}")));
    }
    let data = (0..n).map(|_| r.f64("payload")).collect::<Result<Vec<_>>>()?;
    Tensor::new(shape, data).map_err(|e| Error::format(at, e.to_string()))
}

/// Encodes a parameter set.
pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, params.fingerprint());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (l, p) in params.layers() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
        put_shape(&mut out, p.weight.shape());
        put_shape(&mut out, p.bias.shape());
    }
    for (_, p) in params.layers() {
        for v in p.weight.data().iter().chain(p.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = ByteReader::new(bytes);
    decode_from(&mut r).and_then(|p| {
        if r.remaining() != 0 {
            Err(Error::format(r.offset(), "trailing bytes after checkpoint"))
        } else {
            Ok(p)
        }
    })
}

fn decode_from(r: &mut ByteReader<'_>) -> Result<ModelParams> {
    if r.remaining() == 0 {
        return Err(Error::format(r.offset(), "empty checkpoint"));
    }
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, not a checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported checkpoint version {version}")));
    }
    let fingerprint = read_str(r, "fingerprint")?;
    let count = r.u32("entry count")? as usize;
    let mut headers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let layer = r.u32("layer index")? as usize;
        let w = read_shape(r, "weight shape")?;
        let b = read_shape(r, "bias shape")?;
        headers.push((layer, w, b));
    }
    let mut entries = BTreeMap::new();
    for (layer, w, b) in headers {
        let at = r.offset();
        let weight = read_tensor(r, w)?;
        let bias = read_tensor(r, b)?;
        if entries.insert(layer, LayerParams { weight, bias }).is_some() {
            return Err(Error::format(at, format!("duplicate layer {layer}")));
        }
    }
    Ok(ModelParams::from_entries(fingerprint, entries))
}

pub fn save(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads a checkpoint and checks it against `arch`.
pub fn load_for(arch: &ModelArch, path: impl AsRef<Path>) -> Result<ModelParams> {
    let p = load(path)?;
    p.validate(arch)?;
    Ok(p)
}

/// SHA-256 of the encoded checkpoint, hex.
pub fn digest(params: &ModelParams) -> String {
    hex::encode(Sha256::digest(encode(params)))
}

pub fn encode_dual(model: &DualCopyModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DUAL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, &model.arch().fingerprint());
    let bits = model.schedule().trainable();
    out.extend_from_slice(&(bits.len() as u32).to_le_bytes());
    out.extend(bits.iter().map(|&b| b as u8));
    for part in [encode(model.sk()), encode(model.qk())] {
        out.extend_from_slice(&(part.len() as u64).to_le_bytes());
        out.extend_from_slice(&part);
    }
    out
}

/// Rebuilds a dual-copy model; the architecture is supplied by the caller and checked.
pub fn decode_dual(arch: &ModelArch, bytes: &[u8]) -> Result<DualCopyModel> {
    let mut r = ByteReader::new(bytes);
    if bytes.is_empty() {
        return Err(Error::format(0, "empty dual-copy checkpoint"));
    }
    if r.take(8, "magic")? != DUAL_MAGIC {
        return Err(Error::format(0, "bad magic, not a dual-copy checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(8, format!("unsupported dual-copy version {version}")));
    }
    let at = r.offset();
    let fingerprint = read_str(&mut r, "fingerprint")?;
    if fingerprint != arch.fingerprint() {
        return Err(Error::format(at, "dual-copy checkpoint belongs to another architecture"));
    }
    let n = r.u32("schedule length")? as usize;
    let bits = r.take(n, "schedule")?.iter().map(|&b| b != 0).collect();
    let schedule = Schedule::new(bits)?;
    let mut parts = Vec::with_capacity(2);
    for what in ["structural copy", "quantitative copy"] {
        let at = r.offset();
        let len = r.u64(what)? as usize;
        let slice = r.take(len, what)?;
        parts.push(decode(slice).map_err(|e| Error::format(at, format!("{what}: {e}")))?);
    }
    let qk = parts.pop().unwrap();
    let sk = parts.pop().unwrap();
    DualCopyModel::from_parts(arch.clone(), sk, qk, schedule)
}
