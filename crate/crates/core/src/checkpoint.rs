//! Binary model files.
//!
//! Layout, little-endian throughout:
//! magic `DFNW`, u32 version, u32 config length, config JSON, u32 tensor
//! count, then per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims,
//! f32 data in row-major order. Parameters come first in build order,
//! followed by `<layer>.running_mean` / `<layer>.running_var` for every
//! batchnorm layer.

use std::fs;
use std::path::Path;

use crate::dfnet::{Arch, ArchConfig, Model};
use crate::{Error, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"DFNW";
pub const VERSION: u32 = 1;

fn named_tensors(model: &Model<f32>) -> Vec<(String, Vec<usize>, &[f32])> {
    let store = model.store();
    let mut out: Vec<(String, Vec<usize>, &[f32])> = store
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.dims().to_vec(), p.value.data()))
        .collect();
    for bn in store.bn_states() {
        out.push((format!("{}.running_mean", bn.name), vec![bn.running_mean.len()], &bn.running_mean));
        out.push((format!("{}.running_var", bn.name), vec![bn.running_var.len()], &bn.running_var));
    }
    out
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("checkpoint field exceeds u32").to_le_bytes());
}

pub fn to_bytes(model: &Model<f32>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(model.config())?;
    put_u32(&mut buf, cfg.len());
    buf.extend_from_slice(&cfg);
    let tensors = named_tensors(model);
    put_u32(&mut buf, tensors.len());
    for (name, dims, data) in tensors {
        put_u32(&mut buf, name.len());
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, dims.len());
        for d in dims {
            put_u32(&mut buf, d);
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
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
            .ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let n = r.u32()?;
    let config: ArchConfig = serde_json::from_slice(r.take(n)?)
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let mut model = Model::<f32>::build(config)?;
    let expected: Vec<(String, Vec<usize>)> = named_tensors(&model)
        .into_iter()
        .map(|(n, d, _)| (n, d))
        .collect();
    let count = r.u32()?;
    if count != expected.len() {
        return Err(Error::Format(format!("checkpoint has {count} tensors, architecture needs {}", expected.len())));
    }
    let mut values = Vec::with_capacity(count);
    for (name, dims) in &expected {
        let len = r.u32()?;
        let got = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if got != name {
            return Err(Error::Format(format!("expected tensor {name}, found {got}")));
        }
        let rank = r.u32()?;
        let got_dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if &got_dims != dims {
            return Err(Error::Format(format!("tensor {name}: dims {got_dims:?}, expected {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("tensor {name} holds non-finite values")));
        }
        values.push(data);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }

    let mut it = values.into_iter();
    let store = model.store_mut();
    for p in store.params_mut() {
        let dims = p.value.dims().to_vec();
        p.value = Tensor::new(dims, it.next().expect("count checked"))?;
    }
    for bn in store.bn_states_mut() {
        bn.running_mean = it.next().expect("count checked");
        bn.running_var = it.next().expect("count checked");
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>> {
    from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and insists on a given variant.
pub fn load_checkpoint_as(path: impl AsRef<Path>, arch: Arch) -> Result<Model<f32>> {
    let m = load_checkpoint(path)?;
    if m.config().arch != arch {
        return Err(Error::Config(format!(
            "checkpoint holds a {:?} network, {:?} was requested",
            m.config().arch,
            arch
        )));
    }
    Ok(m)
}
