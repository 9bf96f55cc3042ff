use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// File signature of a parameter checkpoint.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CRNN";
const VERSION: u32 = 1;

/// Writes `tensors` as: magic, `u32` version, `u64` count, then per tensor a
/// `u32` name length, UTF-8 name, `u64` rows, `u64` cols and `rows * cols`
/// little-endian `f64` values.
pub fn write_tensors<T: Scalar, W: Write>(mut w: W, tensors: &[Tensor<T>]) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for t in tensors {
        let name = t.name().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.cols() as u64).to_le_bytes())?;
        for x in t.data() {
            w.write_all(&x.to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_tensors<T: Scalar, R: Read>(mut r: R) -> Result<Vec<Tensor<T>>> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated tensor name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let cols = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} is implausibly large")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let x = f64::from_le_bytes(read_array(&mut r)?);
            data.push(T::lit(x));
        }
        out.push(Tensor::from_vec(name, rows, cols, data)?);
    }
    Ok(out)
}

pub fn save_tensors<T: Scalar>(path: &Path, tensors: &[Tensor<T>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensors(BufWriter::new(file), tensors).map_err(|e| Error::io(path, e))
}

pub fn load_tensors<T: Scalar>(path: &Path) -> Result<Vec<Tensor<T>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensors(BufReader::new(file))
}
