//! Binary checkpoint format.
//!
//! ```text
//! "FLVC" | u32 version | section(params) | section(optimizer state)
//! section = u32 count, then per entry:
//!   u32 name_len | name bytes (UTF-8) | u32 rank | u32 dims[rank] | f64 values
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParameterSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FLVC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterSet,
    /// Optimizer accumulators; may be empty.
    pub state: ParameterSet,
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_section(w: &mut impl Write, set: &ParameterSet) -> Result<()> {
    write_u32(w, set.len() as u32)?;
    for (name, t) in set.iter() {
        write_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        write_u32(w, t.rank() as u32)?;
        for &d in t.shape() {
            write_u32(w, d as u32)?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn corrupt(detail: impl Into<String>) -> Error {
    Error::parse("checkpoint", detail)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| corrupt(format!("truncated: {}", e)))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_section(r: &mut impl Read) -> Result<ParameterSet> {
    let count = read_u32(r)?;
    let mut set = ParameterSet::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        if len > 4096 {
            return Err(corrupt(format!("name length {} too large", len)));
        }
        let mut name = vec![0u8; len];
        read_exact(r, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| corrupt("parameter name is not UTF-8"))?;
        let rank = read_u32(r)? as usize;
        if rank > 8 {
            return Err(corrupt(format!("rank {} too large for {}", rank, name)));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let n: usize = shape.iter().product();
        if n > 1 << 28 {
            return Err(corrupt(format!("{} declares {} values", name, n)));
        }
        let mut bytes = vec![0u8; n * 8];
        read_exact(r, &mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if set.get(&name).is_some() {
            return Err(corrupt(format!("duplicate entry {}", name)));
        }
        set.insert(name, Tensor::new(shape, data)?);
    }
    Ok(set)
}

impl Checkpoint {
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        write_u32(w, CHECKPOINT_VERSION)?;
        write_section(w, &self.params)?;
        write_section(w, &self.state)
    }

    pub fn read(r: &mut impl Read) -> Result<Checkpoint> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {}", version)));
        }
        let params = read_section(r)?;
        let state = read_section(r)?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Checkpoint { params, state })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::read(&mut BufReader::new(File::open(path)?))
    }
}
