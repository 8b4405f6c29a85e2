//! Binary checkpoints: magic `GRTS`, little-endian version, entry count,
//! then per entry a length-prefixed UTF-8 name, a dtype tag, the rank and
//! dims, and a raw little-endian f64 payload. Parameters and optimizer
//! moment buffers round-trip bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::params::Params;
use crate::tensor::Tensor;
use crate::train::AdamW;
use crate::Error;

const MAGIC: &[u8; 4] = b"GRTS";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot {action} checkpoint {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint file: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("truncated or corrupt checkpoint ({0})")]
    Corrupt(&'static str),
    #[error("unsupported dtype tag {0}")]
    BadDtype(u8),
    #[error("checkpoint is missing entry {0}")]
    MissingEntry(String),
    #[error("entry {name} has shape {got:?}, registry expects {want:?}")]
    ShapeMismatch {
        name: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn write_entries(path: &Path, entries: &[Entry]) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        buf.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.name.as_bytes());
        buf.push(DTYPE_F64);
        buf.push(e.shape.len() as u8);
        for &d in &e.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &e.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|source| CheckpointError::Io {
        action: "create",
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(&buf).map_err(|source| CheckpointError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn byte(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

fn read_entries(path: &Path) -> Result<IndexMap<String, Entry>, CheckpointError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| CheckpointError::Io {
            action: "read",
            path: path.display().to_string(),
            source,
        })?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let count = cur.u32()? as usize;
    let mut entries = IndexMap::new();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("entry name is not UTF-8"))?;
        let dtype = cur.byte()?;
        if dtype != DTYPE_F64 {
            return Err(CheckpointError::BadDtype(dtype));
        }
        let rank = cur.byte()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_bits(cur.u64()?));
        }
        entries.insert(name.clone(), Entry { name, shape, data });
    }
    if cur.pos != buf.len() {
        return Err(CheckpointError::Corrupt("trailing bytes after last entry"));
    }
    Ok(entries)
}

/// Write every parameter and, when given, the optimizer moments, step
/// counter, and hyperparameters.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &Params,
    opt: Option<&AdamW>,
) -> Result<(), Error> {
    let mut entries = Vec::new();
    for name in params.names() {
        let t = params.get(name)?;
        entries.push(Entry {
            name: format!("param:{name}"),
            shape: t.shape.clone(),
            data: t.data.clone(),
        });
    }
    if let Some(opt) = opt {
        for (name, buf) in [("m", &opt.m), ("v", &opt.v)] {
            for (pname, data) in buf {
                entries.push(Entry {
                    name: format!("adamw.{name}:{pname}"),
                    shape: vec![data.len()],
                    data: data.clone(),
                });
            }
        }
        entries.push(Entry {
            name: "adamw.state".into(),
            shape: vec![6],
            data: vec![
                opt.t as f64,
                opt.lr,
                opt.beta1,
                opt.beta2,
                opt.eps,
                opt.weight_decay,
            ],
        });
    }
    Ok(write_entries(path.as_ref(), &entries)?)
}

/// Load a checkpoint into an existing registry (names and shapes must
/// match) and, when given, restore the optimizer state.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    params: &mut Params,
    opt: Option<&mut AdamW>,
) -> Result<(), Error> {
    let entries = read_entries(path.as_ref())?;
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in &names {
        let key = format!("param:{name}");
        let e = entries
            .get(&key)
            .ok_or_else(|| CheckpointError::MissingEntry(key.clone()))?;
        let want = params.get(name)?.shape.clone();
        if e.shape != want {
            return Err(CheckpointError::ShapeMismatch {
                name: key,
                got: e.shape.clone(),
                want,
            }
            .into());
        }
        *params.get_mut(name)? = Tensor::new(e.shape.clone(), e.data.clone())?;
    }
    if let Some(opt) = opt {
        let state = entries
            .get("adamw.state")
            .ok_or_else(|| CheckpointError::MissingEntry("adamw.state".into()))?;
        if state.data.len() != 6 {
            return Err(CheckpointError::Corrupt("adamw.state length").into());
        }
        opt.t = state.data[0] as u64;
        opt.lr = state.data[1];
        opt.beta1 = state.data[2];
        opt.beta2 = state.data[3];
        opt.eps = state.data[4];
        opt.weight_decay = state.data[5];
        opt.m.clear();
        opt.v.clear();
        for e in entries.values() {
            if let Some(pname) = e.name.strip_prefix("adamw.m:") {
                opt.m.insert(pname.to_string(), e.data.clone());
            } else if let Some(pname) = e.name.strip_prefix("adamw.v:") {
                opt.v.insert(pname.to_string(), e.data.clone());
            }
        }
    }
    Ok(())
}
