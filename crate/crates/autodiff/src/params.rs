//! Named parameter collections and the binary parameter file.
//!
//! File layout (all integers little-endian `u32`):
//! `"SPTR"`, version, tensor count, then per tensor the name length, UTF-8
//! name, rank, dims and raw `f32` values; a CRC-32 of every preceding byte
//! closes the file.
//!
//! Parameter values are kept exactly representable in `f32` (initialisers and
//! optimiser steps round), so saving and loading is bit-exact.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SPTR";
const VERSION: u32 = 1;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Rounds to the nearest `f32`, the storage precision of parameters.
pub fn round_to_storage(v: f64) -> f64 {
    v as f32 as f64
}

#[derive(Debug)]
pub struct ParamSet {
    id: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Clone for ParamSet {
    /// Clones get a fresh identity, so graphs built on the clone never feed
    /// gradients into the original.
    fn clone(&self) -> Self {
        Self {
            id: fresh_id(),
            names: self.names.clone(),
            tensors: self.tensors.clone(),
        }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            id: fresh_id(),
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Registers a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let mut t = tensor.with_requires_grad(true);
        t.values_mut().iter_mut().for_each(|v| *v = round_to_storage(*v));
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Centred uniform init in `±1/sqrt(fan_in)`, seeded per parameter.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, seed: u64) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor::new(shape, values).expect("shape/value count agree"))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn ensure_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::ensure_grad);
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Order-sensitive FNV-1a digest of the parameter values.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.tensors {
            for v in t.values() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Overwrites this set's values with those in `path`. Names and shapes must
    /// match exactly; nothing is modified on error.
    pub fn load_matching(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let loaded = load_params(path)?;
        self.assign_from(loaded)
    }

    pub fn assign_from(&mut self, loaded: Vec<(String, Tensor)>) -> Result<()> {
        if loaded.len() != self.tensors.len() {
            return Err(AutodiffError::Format(format!(
                "expected {} tensors, file has {}",
                self.tensors.len(),
                loaded.len()
            )));
        }
        for ((name, t), (ln, lt)) in self.iter().zip(&loaded) {
            if name != ln || t.shape() != lt.shape() {
                return Err(AutodiffError::Format(format!(
                    "tensor mismatch: expected {name} {:?}, found {ln} {:?}",
                    t.shape(),
                    lt.shape()
                )));
            }
        }
        for (dst, (_, src)) in self.tensors.iter_mut().zip(loaded) {
            dst.values_mut().copy_from_slice(src.values());
            dst.clear_grad();
        }
        Ok(())
    }

    pub fn from_named(tensors: Vec<(String, Tensor)>) -> Self {
        let mut set = Self::new();
        for (n, t) in tensors {
            set.add(n, t);
        }
        set
    }
}

pub fn save_params(set: &ParamSet, path: impl AsRef<Path>) -> Result<()> {
    set.save(path)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path)?;
    parse_params(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| AutodiffError::Format("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn parse_params(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < 16 {
        return Err(AutodiffError::Format("truncated file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if &body[..4] != MAGIC {
        return Err(AutodiffError::Format("bad magic".into()));
    }
    let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(AutodiffError::Format(format!("unsupported version {version}")));
    }
    if crc32fast::hash(body) != stored {
        return Err(AutodiffError::Format("checksum mismatch".into()));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| AutodiffError::Format("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| AutodiffError::Format("tensor too large".into()))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| AutodiffError::Format("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let t = Tensor::new(&dims, values).map_err(|e| AutodiffError::Format(e.to_string()))?;
        out.push((name, t));
    }
    if r.pos != body.len() {
        return Err(AutodiffError::Format("trailing bytes before checksum".into()));
    }
    Ok(out)
}
