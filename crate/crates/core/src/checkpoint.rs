//! Named-tensor checkpoint container.
//!
//! Layout (all integers little-endian): magic `SPCL`, format version `u32`,
//! tensor count `u32`, then per tensor: name length `u16` + UTF-8 name,
//! rank `u8`, dims as `u64` each, and the f32 data. Reading a written
//! container reproduces every value bitwise; trailing bytes are an error.
//!
//! Conventions layered on top: model parameters are stored under their own
//! names, Adam state under `opt/<name>.m` / `opt/<name>.v`, the trainer
//! step under `meta/global_step`, and the phoneme inventory as UTF-8 bytes
//! widened to f32 under `meta/inventory` so a checkpoint is synthesizable
//! on its own.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Parameter, Tensor};
use crate::text::PhonemeInventory;

const MAGIC: [u8; 4] = *b"SPCL";
const VERSION: u32 = 1;
const MAX_RANK: u8 = 8;

pub const META_GLOBAL_STEP: &str = "meta/global_step";
pub const META_INVENTORY: &str = "meta/inventory";

/// Ordered collection of uniquely named f32 tensors.
#[derive(Default)]
pub struct Container {
    entries: Vec<(String, Tensor<f32>)>,
    index: HashMap<String, usize>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::Format(format!("tensor name too long: {name}")));
        }
        if self.index.contains_key(&name) {
            return Err(Error::Format(format!("duplicate tensor name '{name}'")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.entries {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
            let shape = tensor.shape();
            w.write_all(&[shape.len() as u8])?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        fn read_exact_n<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated container".into()))?;
            Ok(buf)
        }
        let magic = read_exact_n(&mut r, 4)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:02x?}")));
        }
        let version = u32::from_le_bytes(read_exact_n(&mut r, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(read_exact_n(&mut r, 4)?.try_into().unwrap());
        let mut container = Container::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(read_exact_n(&mut r, 2)?.try_into().unwrap());
            let name = String::from_utf8(read_exact_n(&mut r, name_len as usize)?)
                .map_err(|e| Error::Format(format!("tensor name is not UTF-8: {e}")))?;
            let rank = read_exact_n(&mut r, 1)?[0];
            if rank == 0 || rank > MAX_RANK {
                return Err(Error::Format(format!("tensor '{name}' has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                let d = u64::from_le_bytes(read_exact_n(&mut r, 8)?.try_into().unwrap());
                if d == 0 || d > (1 << 32) {
                    return Err(Error::Format(format!("tensor '{name}' has dim {d}")));
                }
                shape.push(d as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = read_exact_n(&mut r, numel * 4)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            container.insert(name, Tensor::from_vec(data, &shape)?)?;
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Format("trailing bytes after last tensor".into()));
        }
        Ok(container)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Container::read_from(BufReader::new(file))
    }
}

/// Add every parameter value under its own name.
pub fn pack_parameters(container: &mut Container, params: &[Parameter<f32>]) -> Result<()> {
    for p in params {
        container.insert(p.name(), p.value().cast::<f32>())?;
    }
    Ok(())
}

/// Add Adam first/second moments under `opt/<name>.{m,v}`.
pub fn pack_adam_state(container: &mut Container, params: &[Parameter<f32>]) -> Result<()> {
    for p in params {
        let (m, v, _) = p.adam_state();
        let shape = p.shape();
        container.insert(format!("opt/{}.m", p.name()), Tensor::from_vec(m, &shape)?)?;
        container.insert(format!("opt/{}.v", p.name()), Tensor::from_vec(v, &shape)?)?;
    }
    Ok(())
}

pub fn pack_global_step(container: &mut Container, step: u64) -> Result<()> {
    container.insert(META_GLOBAL_STEP, Tensor::from_vec(vec![step as f32], &[1])?)
}

pub fn unpack_global_step(container: &Container) -> Option<u64> {
    container.get(META_GLOBAL_STEP).map(|t| t.data()[0] as u64)
}

/// Store the inventory as its byte sequence so checkpoints stay
/// self-contained for synthesis.
pub fn pack_inventory(container: &mut Container, inventory: &PhonemeInventory) -> Result<()> {
    let body = inventory.symbols().join("\n");
    let data: Vec<f32> = body.bytes().map(|b| b as f32).collect();
    container.insert(META_INVENTORY, Tensor::from_vec(data, &[body.len().max(1)])?)
}

pub fn unpack_inventory(container: &Container) -> Result<PhonemeInventory> {
    let t = container
        .get(META_INVENTORY)
        .ok_or_else(|| Error::CheckpointMismatch("missing meta/inventory".into()))?;
    let bytes: Vec<u8> = t.data().iter().map(|&v| v as u8).collect();
    let body = String::from_utf8(bytes)
        .map_err(|e| Error::Format(format!("inventory bytes are not UTF-8: {e}")))?;
    let mut lines = body.lines();
    if lines.next() != Some("PAD") || lines.next() != Some("UNK") {
        return Err(Error::Format("inventory tensor is malformed".into()));
    }
    PhonemeInventory::from_symbols(lines.map(str::to_string))
}

/// Load values into `params` from the container entries under `prefix`.
/// The two name sets must match exactly: a parameter with no tensor or a
/// prefixed tensor with no parameter is a [`Error::CheckpointMismatch`];
/// shape disagreement is a shape error. Values land bitwise.
pub fn load_parameters_strict<E: Element>(
    container: &Container,
    params: &[Parameter<E>],
    prefix: &str,
) -> Result<()> {
    let mut wanted: HashMap<String, &Parameter<E>> =
        params.iter().map(|p| (p.name(), p)).collect();
    for (name, tensor) in &container.entries {
        if !name.starts_with(prefix) {
            continue;
        }
        match wanted.remove(name) {
            Some(p) => {
                if p.shape() != tensor.shape() {
                    return Err(Error::Shape(format!(
                        "checkpoint tensor '{name}' has shape {:?}, parameter wants {:?}",
                        tensor.shape(),
                        p.shape()
                    )));
                }
                p.set_value(tensor.cast::<E>())?;
            }
            None => {
                return Err(Error::CheckpointMismatch(format!(
                    "unexpected tensor '{name}' under prefix '{prefix}'"
                )));
            }
        }
    }
    if let Some(name) = wanted.keys().next() {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint is missing parameter '{name}'"
        )));
    }
    Ok(())
}

/// Restore Adam state for parameters whose `opt/` tensors are present;
/// missing state is an error only when `required`.
pub fn load_adam_state(
    container: &Container,
    params: &[Parameter<f32>],
    step: u64,
    required: bool,
) -> Result<()> {
    for p in params {
        let m_name = format!("opt/{}.m", p.name());
        let v_name = format!("opt/{}.v", p.name());
        match (container.get(&m_name), container.get(&v_name)) {
            (Some(m), Some(v)) => {
                p.set_adam_state(m.data().to_vec(), v.data().to_vec(), step)?;
            }
            _ if required => {
                return Err(Error::CheckpointMismatch(format!(
                    "missing optimizer state for '{}'",
                    p.name()
                )));
            }
            _ => {}
        }
    }
    Ok(())
}
