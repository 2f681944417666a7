//! Binary weight/checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"BIOM"
//! version u32
//! count   u32                      number of tensors
//! tensor  repeated `count` times:
//!   name_len u16, name UTF-8 bytes
//!   rank     u8
//!   dims     u32 x rank
//!   data     f32 x product(dims), little-endian
//! ```
//!
//! Save -> load -> save is byte-identical; tensor order is preserved.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"BIOM";
pub const FORMAT_VERSION: u32 = 1;

/// One named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorEntry {
    pub fn from_tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        TensorEntry {
            name: name.into(),
            dims: t.shape().to_vec(),
            data: t.to_f32_vec(),
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::from_f32_slice(&self.dims, &self.data)
    }
}

pub fn save_tensors(path: &Path, entries: &[TensorEntry]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::Checkpoint(format!("tensor name too long: {}", e.name)));
        }
        if e.dims.len() > u8::MAX as usize {
            return Err(Error::Checkpoint(format!("tensor rank too high: {}", e.name)));
        }
        let expect: usize = e.dims.iter().product();
        if expect != e.data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} has {} values for dims {:?}",
                e.name,
                e.data.len(),
                e.dims
            )));
        }
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(e.dims.len() as u8);
        for &d in &e.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &e.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn load_tensors(path: &Path) -> Result<Vec<TensorEntry>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        buf: &bytes,
        pos: 0,
    };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let count = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".to_string()))?;
        let rank = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let raw = cur.take(len * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(TensorEntry { name, dims, data });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - cur.pos
        )));
    }
    Ok(entries)
}

/// Trained model state plus selection metadata, stored in the tensor
/// container (metadata rides as small `meta/*` tensors).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: u32,
    pub val_loss: f32,
    pub config_hash: u64,
    pub out_size: u32,
    /// `head/*` and `extractor/*` tensors.
    pub tensors: Vec<TensorEntry>,
}

fn hash_to_chunks(hash: u64) -> Vec<f32> {
    (0..4)
        .map(|i| ((hash >> (16 * i)) & 0xffff) as f32)
        .collect()
}

fn chunks_to_hash(chunks: &[f32]) -> Result<u64> {
    if chunks.len() != 4 {
        return Err(Error::Checkpoint("config hash must have 4 chunks".to_string()));
    }
    let mut hash = 0u64;
    for (i, &c) in chunks.iter().enumerate() {
        if !(0.0..=65535.0).contains(&c) || c.fract() != 0.0 {
            return Err(Error::Checkpoint("corrupt config hash chunk".to_string()));
        }
        hash |= (c as u64) << (16 * i);
    }
    Ok(hash)
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = vec![
            TensorEntry {
                name: "meta/epoch".to_string(),
                dims: vec![1],
                data: vec![self.epoch as f32],
            },
            TensorEntry {
                name: "meta/val_loss".to_string(),
                dims: vec![1],
                data: vec![self.val_loss],
            },
            TensorEntry {
                name: "meta/config_hash".to_string(),
                dims: vec![4],
                data: hash_to_chunks(self.config_hash),
            },
            TensorEntry {
                name: "meta/out_size".to_string(),
                dims: vec![1],
                data: vec![self.out_size as f32],
            },
        ];
        entries.extend(self.tensors.iter().cloned());
        save_tensors(path, &entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries = load_tensors(path)?;
        let scalar = |name: &str| -> Result<f32> {
            entries
                .iter()
                .find(|e| e.name == name)
                .and_then(|e| e.data.first().copied())
                .ok_or_else(|| Error::Checkpoint(format!("missing {name}")))
        };
        let epoch = scalar("meta/epoch")? as u32;
        let val_loss = scalar("meta/val_loss")?;
        let out_size = scalar("meta/out_size")? as u32;
        let config_hash = chunks_to_hash(
            &entries
                .iter()
                .find(|e| e.name == "meta/config_hash")
                .ok_or_else(|| Error::Checkpoint("missing meta/config_hash".to_string()))?
                .data,
        )?;
        let tensors = entries
            .into_iter()
            .filter(|e| !e.name.starts_with("meta/"))
            .collect();
        Ok(Checkpoint {
            epoch,
            val_loss,
            config_hash,
            out_size,
            tensors,
        })
    }

    /// The tensors under a prefix, with the prefix stripped, as `T` tensors.
    pub fn tensors_under<T: Scalar>(&self, prefix: &str) -> Result<Vec<(String, Tensor<T>)>> {
        self.tensors
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(|e| Ok((e.name[prefix.len()..].to_string(), e.to_tensor()?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, dims: &[usize]) -> TensorEntry {
        let len: usize = dims.iter().product();
        TensorEntry {
            name: name.to_string(),
            dims: dims.to_vec(),
            data: (0..len).map(|i| i as f32 * 0.5 - 3.0).collect(),
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.biom");
        let p2 = dir.path().join("b.biom");
        let entries = vec![entry("w", &[2, 3]), entry("b", &[3]), entry("scalar", &[1])];
        save_tensors(&p1, &entries).unwrap();
        let loaded = load_tensors(&p1).unwrap();
        assert_eq!(loaded, entries);
        save_tensors(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.biom");
        std::fs::write(&p, b"NOPE").unwrap();
        assert!(load_tensors(&p).is_err());

        let good = dir.path().join("good.biom");
        save_tensors(&good, &[entry("w", &[4])]).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, &bytes).unwrap();
        assert!(load_tensors(&p).is_err());
    }

    #[test]
    fn checkpoint_meta_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.biom");
        let ck = Checkpoint {
            epoch: 37,
            val_loss: 0.125,
            config_hash: 0xdead_beef_cafe_f00d,
            out_size: 500,
            tensors: vec![entry("head/out/weight", &[2, 4])],
        };
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);

        let p2 = dir.path().join("c2.biom");
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }
}
