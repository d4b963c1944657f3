//! Parameter checkpoints.
//!
//! Single binary file: the magic string `CAPT1`, then one record per
//! parameter: name length (u64 LE), name bytes (UTF-8), rank (u64 LE),
//! extents (u64 LE each), elements (f32 LE, row-major). Records are written
//! sorted by name so identical parameter sets serialize byte-identically.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Tape, Tensor, ValueId};
use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"CAPT1";

/// Named, ordered collection of parameter tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = tensor,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, tensor));
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total element count across all parameters.
    pub fn element_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers every parameter as a tape leaf, in insertion order.
    /// Returns name -> id so model code can wire layers by name.
    pub fn leaves(&self, tape: &mut Tape) -> HashMap<String, ValueId> {
        let mut ids = HashMap::with_capacity(self.entries.len());
        for (name, tensor) in &self.entries {
            ids.insert(name.clone(), tape.leaf(tensor.clone()));
        }
        ids
    }
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    let mut sorted: Vec<&(String, Tensor)> = params.entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, tensor) in sorted {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u64).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.rank() as u64).to_le_bytes())?;
        for &e in tensor.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let mut params = ParamSet::new();
    loop {
        let mut len8 = [0u8; 8];
        match r.read_exact(&mut len8) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u64::from_le_bytes(len8) as usize;
        if name_len > 1 << 20 {
            return Err(Error::Checkpoint(format!("name length {name_len} absurd")));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Checkpoint(format!("non-UTF8 name: {e}")))?;
        r.read_exact(&mut len8)?;
        let rank = u64::from_le_bytes(len8) as usize;
        if rank > 64 {
            return Err(Error::Checkpoint(format!("rank {rank} absurd")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            r.read_exact(&mut len8)?;
            shape.push(u64::from_le_bytes(len8) as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        let mut f4 = [0u8; 4];
        for _ in 0..count {
            r.read_exact(&mut f4)?;
            data.push(f32::from_le_bytes(f4) as f64);
        }
        params.insert(
            name,
            Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
    }
    Ok(params)
}
