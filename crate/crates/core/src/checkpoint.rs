//! Binary checkpoints: `"CSEG"`, a little-endian `u16` version, a `u32` entry
//! count, then per entry a `u32` name length, the UTF-8 name, a `u8` dtype tag
//! (0 = f32, 1 = f64), four `u32` dims and the raw little-endian values.
//!
//! Entries: every parameter under its own name; `<bn>.running_mean` and
//! `<bn>.running_var` as `(1,C,1,1)`; per agent (`clf`, `seg`)
//! `opt.<agent>.v.<param>` velocities and the scalars `opt.<agent>.step`,
//! `opt.<agent>.base_lr`, `opt.<agent>.momentum`; and `meta.round`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_model, ArchConfig, ModelParams, PartitionId};
use crate::engine::{DType, Float, Tensor};
use crate::error::{Error, Result};
use crate::train::Agents;

pub const MAGIC: &[u8; 4] = b"CSEG";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
enum Values {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    dims: [usize; 4],
    values: Values,
}

fn f32_entry(dims: [usize; 4], v: &[f32]) -> Entry {
    Entry {
        dims,
        values: Values::F32(v.to_vec()),
    }
}

fn scalar(v: f64) -> Entry {
    Entry {
        dims: [1, 1, 1, 1],
        values: Values::F64(vec![v]),
    }
}

fn table(model: &ModelParams<f32>, agents: &Agents<f32>, round: u64) -> BTreeMap<String, Entry> {
    let mut t = BTreeMap::new();
    for id in PartitionId::ALL {
        let part = model.partition(id);
        for (name, p) in &part.params {
            t.insert(name.clone(), f32_entry(p.shape(), p.data()));
        }
        for (name, rs) in &part.running {
            let dims = [1, rs.mean.len(), 1, 1];
            t.insert(format!("{name}.running_mean"), f32_entry(dims, &rs.mean));
            t.insert(format!("{name}.running_var"), f32_entry(dims, &rs.var));
        }
    }
    for state in [&agents.clf, &agents.seg] {
        let tag = state.agent.tag();
        for (name, v) in &state.velocity {
            let dims = model.param(name).map(Tensor::shape).unwrap_or([v.len(), 1, 1, 1]);
            t.insert(format!("opt.{tag}.v.{name}"), f32_entry(dims, v));
        }
        t.insert(format!("opt.{tag}.step"), scalar(state.step as f64));
        t.insert(format!("opt.{tag}.base_lr"), scalar(state.base_lr));
        t.insert(format!("opt.{tag}.momentum"), scalar(state.momentum));
    }
    t.insert("meta.round".into(), scalar(round as f64));
    t
}

fn encode(t: &BTreeMap<String, Entry>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.len() as u32).to_le_bytes());
    for (name, e) in t {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let dtype = match e.values {
            Values::F32(_) => DType::F32,
            Values::F64(_) => DType::F64,
        };
        out.push(dtype as u8);
        for d in e.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &e.values {
            Values::F32(v) => v.iter().for_each(|x| x.write_le(&mut out)),
            Values::F64(v) => v.iter().for_each(|x| x.write_le(&mut out)),
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &ModelParams<f32>, agents: &Agents<f32>, round: u64) -> Result<()> {
    fs::write(path, encode(&table(model, agents, round))).map_err(|e| Error::io(path, e))
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
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

fn decode(bytes: &[u8]) -> Result<BTreeMap<String, Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("bad magic, not a CSEG checkpoint".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("format version {version}, this build reads {VERSION}")));
    }
    let count = r.u32()?;
    let mut t = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint(format!("entry name at byte {} is not UTF-8", r.pos - len)))?
            .to_string();
        let tag = r.take(1)?[0];
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: dims overflow")))?;
        let values = match tag {
            0 => Values::F32(
                r.take(n.checked_mul(4).unwrap_or(usize::MAX))?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            1 => Values::F64(
                r.take(n.checked_mul(8).unwrap_or(usize::MAX))?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            other => return Err(Error::Checkpoint(format!("{name}: unknown dtype tag {other}"))),
        };
        if t.insert(name.clone(), Entry { dims, values }).is_some() {
            return Err(Error::Checkpoint(format!("duplicate entry {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(t)
}

/// A restored training state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelParams<f32>,
    pub agents: Agents<f32>,
    pub round: u64,
}

/// Reads a checkpoint written for `arch`. Any missing, extra or reshaped
/// entry makes the file incompatible.
pub fn load_checkpoint(path: &Path, arch: &ArchConfig) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut found = decode(&bytes)?;
    // a template with the right names and shapes; values are overwritten
    let mut model = build_model::<f32, _>(arch, &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut agents = Agents::new(&model, 0.0, 0.0, 0.0);
    let expected = table(&model, &agents, 0);
    for (name, e) in &expected {
        let got = found
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry {name}")))?;
        let same_kind = matches!(
            (&got.values, &e.values),
            (Values::F32(_), Values::F32(_)) | (Values::F64(_), Values::F64(_))
        );
        if got.dims != e.dims || !same_kind {
            return Err(Error::Checkpoint(format!(
                "entry {name} is {:?}, expected {:?}",
                got.dims, e.dims
            )));
        }
    }
    if let Some(extra) = found.keys().find(|k| !expected.contains_key(*k)) {
        return Err(Error::Checkpoint(format!("unexpected entry {extra}")));
    }
    let mut f32s = |name: &str| match found.remove(name).map(|e| e.values) {
        Some(Values::F32(v)) => v,
        _ => unreachable!("validated above"),
    };
    for id in PartitionId::ALL {
        let part = model.partition_mut(id);
        for (name, p) in part.params.iter_mut() {
            *p = Tensor::from_vec(p.shape(), f32s(name))?;
        }
        for (name, rs) in part.running.iter_mut() {
            rs.mean = f32s(&format!("{name}.running_mean"));
            rs.var = f32s(&format!("{name}.running_var"));
        }
    }
    for state in [&mut agents.clf, &mut agents.seg] {
        let tag = state.agent.tag();
        for (name, v) in state.velocity.iter_mut() {
            *v = f32s(&format!("opt.{tag}.v.{name}"));
        }
    }
    let f64s = |name: &str| match found.get(name).map(|e| &e.values) {
        Some(Values::F64(v)) => v[0],
        _ => unreachable!("validated above"),
    };
    for state in [&mut agents.clf, &mut agents.seg] {
        let tag = state.agent.tag();
        state.step = f64s(&format!("opt.{tag}.step")) as u64;
        state.base_lr = f64s(&format!("opt.{tag}.base_lr"));
        state.momentum = f64s(&format!("opt.{tag}.momentum"));
    }
    Ok(Checkpoint {
        model,
        agents,
        round: f64s("meta.round") as u64,
    })
}

