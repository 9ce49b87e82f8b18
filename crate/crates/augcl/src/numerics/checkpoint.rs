//! Binary checkpoint format for named tensor sets.
//!
//! Layout: magic `AUGT`, version (u32), tensor count (u32), then per tensor a
//! u16 name length + UTF-8 name, u8 rank, u32 per dimension, and the payload as
//! little-endian f64. Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{NumericsError, Result, Tensor};

const MAGIC: [u8; 4] = *b"AUGT";
const VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(NumericsError::Format(format!(
                "tensor name too long: {} bytes",
                name_bytes.len()
            )));
        }
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    if r.take(4)? != MAGIC {
        return Err(NumericsError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(NumericsError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let count = u32::from_le_bytes(r.take(4)?.try_into().unwrap());

    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| NumericsError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        let tensor = Tensor::new(shape, data)?;
        if out.insert(name.clone(), tensor).is_some() {
            return Err(NumericsError::Format(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(NumericsError::Format("trailing bytes".into()));
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NumericsError::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
