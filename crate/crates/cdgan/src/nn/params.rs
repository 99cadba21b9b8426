//! Named tensor stores and the versioned checkpoint archive.
//!
//! Archive layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"CDGANAR\0"
//! version u32
//! m_len   u64      manifest length in bytes
//! ...              manifest (UTF-8 JSON)
//! count   u64      number of tensors
//! per tensor:
//!   name_len u64, name bytes (UTF-8)
//!   ndim u64, dims u64 x ndim
//!   values f64 x prod(dims), IEEE-754 little-endian
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"CDGANAR\0";
pub const ARCHIVE_VERSION: u32 = 1;

/// A shaped f64 tensor in plain row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named map from parameter path to tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    tensors: BTreeMap<String, TensorData>,
}

impl ParameterStore {
    pub fn insert(&mut self, name: &str, tensor: TensorData) {
        debug_assert_eq!(tensor.shape.iter().product::<usize>(), tensor.data.len());
        self.tensors.insert(name.to_string(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.tensors.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<TensorData> {
        self.tensors.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorData)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    /// Extends this store with every tensor of `other`, prefixing names.
    pub fn absorb(&mut self, prefix: &str, other: ParameterStore) {
        for (name, tensor) in other.tensors {
            self.tensors.insert(format!("{prefix}{name}"), tensor);
        }
    }

    /// Splits out the tensors under `prefix`, stripping it.
    pub fn extract(&self, prefix: &str) -> ParameterStore {
        let mut out = ParameterStore::default();
        for (name, tensor) in &self.tensors {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.insert(rest, tensor.clone());
            }
        }
        out
    }

    /// Order-independent fingerprint of names, shapes, and exact bit
    /// patterns; used to detect any parameter change.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64; // FNV-1a
        let mut byte = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        for (name, tensor) in &self.tensors {
            for b in name.bytes() {
                byte(b);
            }
            for &d in &tensor.shape {
                for b in (d as u64).to_le_bytes() {
                    byte(b);
                }
            }
            for &v in &tensor.data {
                for b in v.to_le_bytes() {
                    byte(b);
                }
            }
        }
        h
    }
}

/// A manifest plus a tensor store, serialized as one checkpoint file.
#[derive(Debug)]
pub struct Archive {
    pub manifest: serde_json::Value,
    pub tensors: ParameterStore,
}

impl Archive {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(ARCHIVE_MAGIC)?;
        w.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
        let manifest = serde_json::to_vec(&self.manifest)
            .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, tensor) in self.tensors.iter() {
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(tensor.shape.len() as u64).to_le_bytes())?;
            for &d in &tensor.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &tensor.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Archive> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != ARCHIVE_MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint archive",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != ARCHIVE_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported archive version {version}"
            )));
        }
        let m_len = read_u64(&mut r)? as usize;
        let mut manifest_bytes = vec![0u8; m_len];
        r.read_exact(&mut manifest_bytes)?;
        let manifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| Error::Checkpoint(format!("manifest decode: {e}")))?;
        let count = read_u64(&mut r)? as usize;
        let mut tensors = ParameterStore::default();
        for _ in 0..count {
            let name_len = read_u64(&mut r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Checkpoint(format!("tensor name: {e}")))?;
            let ndim = read_u64(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.insert(&name, TensorData { shape, data });
        }
        Ok(Archive { manifest, tensors })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
