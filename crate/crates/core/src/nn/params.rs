//! Named parameter collections and their binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PCGF"  u32 version
//! repeated until EOF:
//!     u32 name_len, name bytes (UTF-8), u32 rank, rank × u64 dims, f64 values
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

const MAGIC: &[u8; 4] = b"PCGF";
const VERSION: u32 = 1;

/// Parameters keyed by name; iteration is lexicographic by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Looks up a parameter that the model architecture guarantees exists.
    pub fn expect(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
    }

    pub fn expect_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.zeros_like()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Adds `scale · other` to every tensor with a matching name.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (name, t) in self.tensors.iter_mut() {
            if let Some(o) = other.tensors.get(name) {
                t.add_scaled(o, scale);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.values_mut().for_each(|t| t.scale(factor));
    }

    /// Merges another collection into this one (names must not collide).
    pub fn extend(&mut self, other: ModelParams) -> Result<()> {
        for (k, v) in other.tensors {
            self.insert(k, v)?;
        }
        Ok(())
    }

    /// Subset whose names start with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> ModelParams {
        Self {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Copies every tensor of `subset` over the entry of the same name.
    pub fn overlay(&mut self, subset: &ModelParams) {
        for (k, v) in &subset.tensors {
            self.tensors.insert(k.clone(), v.clone());
        }
    }

    /// Replaces values with those from `loaded`, requiring identical names and shapes.
    pub fn assign_from(&mut self, loaded: &ModelParams) -> Result<()> {
        if self.tensors.len() != loaded.tensors.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, checkpoint has {}",
                self.tensors.len(),
                loaded.tensors.len()
            )));
        }
        for (name, t) in self.tensors.iter_mut() {
            let src = loaded
                .tensors
                .get(name)
                .ok_or_else(|| Error::shape(format!("checkpoint lacks parameter {name:?}")))?;
            if src.shape() != t.shape() {
                return Err(Error::shape(format!(
                    "parameter {name:?}: expected {:?}, checkpoint has {:?}",
                    t.shape(),
                    src.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("checkpoint too short".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = read_u32(&mut r)?.ok_or_else(|| Error::Format("missing version".into()))?;
        if version != VERSION {
            return Err(Error::UnsupportedFormat(format!("checkpoint version {version}")));
        }
        let mut params = ModelParams::new();
        while let Some(name_len) = read_u32(&mut r)? {
            let mut name = vec![0u8; name_len as usize];
            r.read_exact(&mut name).map_err(truncated)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)?.ok_or_else(|| truncated_err())?;
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(truncated)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(truncated)?;
                data.push(f64::from_le_bytes(b));
            }
            params.insert(name, Tensor::from_vec(&shape, data)?)?;
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn truncated(_: std::io::Error) -> Error {
    truncated_err()
}

fn truncated_err() -> Error {
    Error::Format("truncated checkpoint".into())
}

/// Reads a u32, returning `None` on a clean EOF before the first byte.
fn read_u32(r: &mut impl Read) -> Result<Option<u32>> {
    let mut b = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut b[filled..])?;
        if n == 0 {
            return if filled == 0 { Ok(None) } else { Err(truncated_err()) };
        }
        filled += n;
    }
    Ok(Some(u32::from_le_bytes(b)))
}
