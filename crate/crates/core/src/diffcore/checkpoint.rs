//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "GDSRCKPT"
//! version u32      1
//! count   u32      number of records
//! record* name_len u32, name (UTF-8), rank u32, dims u64 × rank,
//!         values f64 × prod(dims) (IEEE-754 bits, little-endian)
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{DiffError, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"GDSRCKPT";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        let shape = p.value.shape();
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in p.value.data() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn corrupt(msg: impl Into<String>) -> DiffError {
    DiffError::Checkpoint(msg.into())
}

/// Reads every `(name, tensor)` record in file order.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>, DiffError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| corrupt("parameter name is not UTF-8"))?;
        let rank = read_u32(&mut input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut input)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        records.push((name, Tensor::new(shape, values)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after last record"));
    }
    Ok(records)
}

/// Overwrites `store` values from checkpoint records. Names, order and
/// shapes must match exactly.
pub fn load_into(store: &mut ParamStore, records: Vec<(String, Tensor)>) -> Result<(), DiffError> {
    if records.len() != store.len() {
        return Err(DiffError::LayoutMismatch(format!(
            "checkpoint has {} parameters, model has {}",
            records.len(),
            store.len()
        )));
    }
    for (p, (name, t)) in store.iter_mut().zip(records) {
        if p.name != name || p.value.shape() != t.shape() {
            return Err(DiffError::LayoutMismatch(format!(
                "expected {} {:?}, found {} {:?}",
                p.name,
                p.value.shape(),
                name,
                t.shape()
            )));
        }
        p.value = t;
    }
    Ok(())
}

pub fn save(store: &ParamStore, path: &Path) -> Result<(), DiffError> {
    let mut bytes = Vec::new();
    write_checkpoint(store, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load(store: &mut ParamStore, path: &Path) -> Result<(), DiffError> {
    let bytes = fs::read(path)?;
    load_into(store, read_checkpoint(bytes.as_slice())?)
}
